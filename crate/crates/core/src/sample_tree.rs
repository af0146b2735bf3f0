//! Tree-of-trees store for l2 sampling and vector-state preparation.
//!
//! Each row `i` of the matrix owns a [`RowTree`]: a binary tree over the
//! padded column range whose leaf `j` holds `A_ij²` (plus the sign of
//! `A_ij`) and whose internal node at depth `t` with prefix `k` holds
//! `B_{i,k} = Σ_{j : j_{1:t} = k} A_ij²`. A second tree over the rows holds
//! `‖A_i‖²` at leaf `i`. Levels are kept as ordered maps, so only nodes on
//! root-to-leaf paths of stored entries exist.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::DenseMatrix;

/// `⌈log2 n⌉` with `ceil_log2(1) = 0`.
pub fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Binary tree of squared amplitudes over `len` leaves, padded to
/// `2^⌈log2 len⌉`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowTree {
    len: usize,
    depth: u32,
    /// `levels[t]` maps prefix `k ∈ {0,1}^t` to `B_k`. Absent means zero.
    levels: Vec<BTreeMap<u64, f64>>,
    /// Leaves whose stored value is negative.
    negative: BTreeSet<u64>,
}

impl RowTree {
    pub fn new(len: usize) -> Self {
        let depth = ceil_log2(len);
        Self {
            len,
            depth,
            levels: vec![BTreeMap::new(); depth as usize + 1],
            negative: BTreeSet::new(),
        }
    }

    /// Tree holding the given dense vector (zeros are not stored).
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let mut tree = Self::new(values.len().max(1));
        for (j, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return invalid(format!("non-finite value {v} at index {j}"));
            }
            if *v != 0.0 {
                tree.set(j, *v);
            }
        }
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.levels[self.depth as usize].is_empty()
    }

    /// `⌈log2 len⌉`.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Padded leaf count `2^depth`.
    pub fn capacity(&self) -> usize {
        1 << self.depth
    }

    /// Number of stored leaves.
    pub fn stored(&self) -> usize {
        self.levels[self.depth as usize].len()
    }

    /// Total number of materialised nodes across all levels.
    pub fn node_count(&self) -> usize {
        self.levels.iter().map(BTreeMap::len).sum()
    }

    /// Store `value` at leaf `j`, returning the number of nodes written
    /// (always `depth + 1`).
    pub fn set(&mut self, j: usize, value: f64) -> usize {
        self.set_weight(j, value * value, value < 0.0)
    }

    /// Store a raw weight and sign at leaf `j` and refresh the path to the
    /// root. Each ancestor is recomputed as the sum of its children, so the
    /// stored values depend only on the final leaves, not the arrival order.
    pub(crate) fn set_weight(&mut self, j: usize, weight: f64, negative: bool) -> usize {
        assert!(j < self.len, "leaf {j} out of range for {} leaves", self.len);
        let d = self.depth as usize;
        let leaf = j as u64;
        self.levels[d].insert(leaf, weight);
        if negative {
            self.negative.insert(leaf);
        } else {
            self.negative.remove(&leaf);
        }
        let mut touched = 1;
        for t in (0..d).rev() {
            let prefix = leaf >> (d - t);
            let children = &self.levels[t + 1];
            let total = children.get(&(2 * prefix)).copied().unwrap_or(0.0)
                + children.get(&(2 * prefix + 1)).copied().unwrap_or(0.0);
            self.levels[t].insert(prefix, total);
            touched += 1;
        }
        touched
    }

    fn node(&self, depth: usize, prefix: u64) -> f64 {
        self.levels
            .get(depth)
            .and_then(|l| l.get(&prefix))
            .copied()
            .unwrap_or(0.0)
    }

    /// `B_k` for the node at `depth` with the given prefix (zero if absent).
    pub fn weight(&self, depth: u32, prefix: u64) -> f64 {
        if depth > self.depth {
            return 0.0;
        }
        self.node(depth as usize, prefix)
    }

    /// `B_k` addressed by a bit string such as `"01"`. The empty string is the root.
    pub fn prefix_weight(&self, bits: &str) -> Result<f64> {
        if bits.len() > self.depth as usize {
            return invalid(format!(
                "prefix '{bits}' longer than tree depth {}",
                self.depth
            ));
        }
        let mut prefix = 0u64;
        for c in bits.chars() {
            prefix = match c {
                '0' => prefix << 1,
                '1' => (prefix << 1) | 1,
                _ => return invalid(format!("prefix '{bits}' is not a bit string")),
            };
        }
        Ok(self.weight(bits.len() as u32, prefix))
    }

    /// Root weight, i.e. the squared norm of the stored vector.
    pub fn root(&self) -> f64 {
        self.node(0, 0)
    }

    pub fn norm(&self) -> f64 {
        self.root().sqrt()
    }

    pub fn leaf_weight(&self, j: usize) -> f64 {
        self.node(self.depth as usize, j as u64)
    }

    pub fn is_present(&self, j: usize) -> bool {
        self.levels[self.depth as usize].contains_key(&(j as u64))
    }

    pub fn is_negative(&self, j: usize) -> bool {
        self.negative.contains(&(j as u64))
    }

    /// `sign · √weight` at leaf `j`.
    pub fn value(&self, j: usize) -> f64 {
        let w = self.leaf_weight(j).sqrt();
        if self.is_negative(j) {
            -w
        } else {
            w
        }
    }

    /// Dense vector of the stored values.
    pub fn values(&self) -> Vec<f64> {
        (0..self.len).map(|j| self.value(j)).collect()
    }

    /// Stored (leaf, weight, negative) entries in leaf order.
    pub fn leaves(&self) -> impl Iterator<Item = (usize, f64, bool)> + '_ {
        self.levels[self.depth as usize]
            .iter()
            .map(|(&j, &w)| (j as usize, w, self.negative.contains(&j)))
    }

    /// Draw a leaf with probability `weight / root` by descending the tree,
    /// taking child `c` of node `k` with probability `B_{kc} / B_k`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        if !(self.root() > 0.0) {
            return None;
        }
        let mut prefix = 0u64;
        for t in 0..self.depth as usize {
            let left = self.node(t + 1, 2 * prefix);
            let right = self.node(t + 1, 2 * prefix + 1);
            let u: f64 = rng.random::<f64>() * (left + right);
            prefix = if u < left || right == 0.0 {
                2 * prefix
            } else {
                2 * prefix + 1
            };
        }
        Some(prefix as usize)
    }

    /// Apply the state-preparation unitary (or its inverse) to a vector of
    /// length `capacity()`.
    ///
    /// The forward map sends `|0…0⟩` to `Σ_j value_j |j⟩ / norm` through one
    /// controlled rotation per level: conditioned on the first `t` qubits
    /// being `k`, qubit `t+1` is rotated by the 2×2 orthogonal matrix with
    /// first column `(√B_{k0}, √B_{k1}) / √B_k`; the last level carries the
    /// leaf signs. Nodes with zero weight act as the identity.
    pub(crate) fn apply_preparation<T>(&self, v: &mut [T], inverse: bool)
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T> + std::ops::Sub<Output = T>,
    {
        let d = self.depth as usize;
        assert_eq!(v.len(), 1 << d);
        let mut levels: Vec<usize> = (0..d).collect();
        if inverse {
            levels.reverse();
        }
        for t in levels {
            let shift = d - t - 1;
            for (&k, &bk) in &self.levels[t] {
                if !(bk > 0.0) {
                    continue;
                }
                let (l, r) = (2 * k, 2 * k + 1);
                let mut a = (self.node(t + 1, l) / bk).sqrt();
                let mut b = (self.node(t + 1, r) / bk).sqrt();
                if t + 1 == d {
                    if self.negative.contains(&l) {
                        a = -a;
                    }
                    if self.negative.contains(&r) {
                        b = -b;
                    }
                }
                // columns (a, b) and (-b, a); the inverse is the transpose.
                let b_eff = if inverse { -b } else { b };
                for s in 0..(1usize << shift) {
                    let i0 = ((l as usize) << shift) | s;
                    let i1 = ((r as usize) << shift) | s;
                    let (x0, x1) = (v[i0], v[i1]);
                    v[i0] = x0 * a - x1 * b_eff;
                    v[i1] = x0 * b_eff + x1 * a;
                }
            }
        }
    }

    fn check_invariants(&self) -> std::result::Result<(), String> {
        let d = self.depth as usize;
        for t in 0..d {
            for (&k, &w) in &self.levels[t] {
                let sum = self.node(t + 1, 2 * k) + self.node(t + 1, 2 * k + 1);
                if w.to_bits() != sum.to_bits() {
                    return Err(format!(
                        "node (depth {t}, prefix {k}) holds {w} but children sum to {sum}"
                    ));
                }
            }
        }
        for t in 1..=d {
            for &k in self.levels[t].keys() {
                if !self.levels[t - 1].contains_key(&(k >> 1)) {
                    return Err(format!("node (depth {t}, prefix {k}) has no parent"));
                }
            }
        }
        Ok(())
    }
}

/// The matrix store: one [`RowTree`] per row plus a tree over row norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixStore {
    rows: usize,
    cols: usize,
    row_trees: Vec<RowTree>,
    norm_tree: RowTree,
    entries: usize,
}

/// One `(i, j, value)` record of the triplet ingestion format.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl MatrixStore {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return invalid(format!("store shape {rows}x{cols} must be at least 1x1"));
        }
        Ok(Self {
            rows,
            cols,
            row_trees: (0..rows).map(|_| RowTree::new(cols)).collect(),
            norm_tree: RowTree::new(rows),
            entries: 0,
        })
    }

    /// Store holding every nonzero entry of `a`.
    pub fn from_dense(a: &DenseMatrix) -> Result<Self> {
        let mut store = Self::new(a.rows(), a.cols())?;
        for i in 0..a.rows() {
            for (j, &v) in a.row(i).iter().enumerate() {
                if v != 0.0 {
                    store.insert(i, j, v)?;
                }
            }
        }
        Ok(store)
    }

    /// Store built from triplets. Shape defaults to the smallest one
    /// covering all indices (at least 1x1).
    pub fn from_triplets(
        triplets: &[Triplet],
        rows: Option<usize>,
        cols: Option<usize>,
    ) -> Result<Self> {
        let m = rows.unwrap_or_else(|| triplets.iter().map(|t| t.row + 1).max().unwrap_or(1));
        let n = cols.unwrap_or_else(|| triplets.iter().map(|t| t.col + 1).max().unwrap_or(1));
        let mut store = Self::new(m.max(1), n.max(1))?;
        for t in triplets {
            store.insert(t.row, t.col, t.value)?;
        }
        Ok(store)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of distinct `(i, j)` entries stored (`w`).
    pub fn entry_count(&self) -> usize {
        self.entries
    }

    pub fn is_empty(&self) -> bool {
        !(self.norm_tree.root() > 0.0)
    }

    pub fn row_tree(&self, i: usize) -> &RowTree {
        &self.row_trees[i]
    }

    pub fn norm_tree(&self) -> &RowTree {
        &self.norm_tree
    }

    /// Total materialised nodes, `O(w log(mn))`.
    pub fn node_count(&self) -> usize {
        self.row_trees.iter().map(RowTree::node_count).sum::<usize>() + self.norm_tree.node_count()
    }

    fn check_index(&self, i: usize, j: usize) -> Result<()> {
        if i >= self.rows || j >= self.cols {
            return Err(Error::IndexOutOfRange {
                row: i,
                col: j,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(())
    }

    fn check_row(&self, i: usize) -> Result<()> {
        self.check_index(i, 0)
    }

    /// Store `A_ij = value`, overwriting any earlier value at `(i, j)`.
    ///
    /// Returns the number of tree nodes written: the `⌈log2 n⌉ + 1` nodes on
    /// the path in row tree `i` plus the `⌈log2 m⌉ + 1` path nodes of the
    /// norm tree.
    pub fn insert(&mut self, i: usize, j: usize, value: f64) -> Result<usize> {
        self.check_index(i, j)?;
        if !value.is_finite() {
            return invalid(format!("non-finite value {value} at ({i}, {j})"));
        }
        let tree = &mut self.row_trees[i];
        if !tree.is_present(j) {
            self.entries += 1;
        }
        let mut touched = tree.set(j, value);
        let row_weight = tree.root();
        touched += self.norm_tree.set_weight(i, row_weight, false);
        Ok(touched)
    }

    pub fn get(&self, i: usize, j: usize) -> Result<f64> {
        self.check_index(i, j)?;
        Ok(self.row_trees[i].value(j))
    }

    /// `‖A_i‖`.
    pub fn row_norm(&self, i: usize) -> Result<f64> {
        self.check_row(i)?;
        Ok(self.row_trees[i].norm())
    }

    /// `‖A‖_F`.
    pub fn frobenius_norm(&self) -> f64 {
        self.norm_tree.norm()
    }

    /// `B_{i,prefix}` addressed by a bit string.
    pub fn subtree_weight(&self, i: usize, prefix: &str) -> Result<f64> {
        self.check_row(i)?;
        self.row_trees[i].prefix_weight(prefix)
    }

    /// Column `j` drawn with probability `A_ij² / ‖A_i‖²`.
    pub fn l2_sample_in_row<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Result<usize> {
        self.check_row(i)?;
        self.row_trees[i].sample(rng).ok_or(Error::EmptyRow(i))
    }

    /// Row `i` drawn with probability `‖A_i‖² / ‖A‖_F²`.
    pub fn l2_sample_row_index<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        self.norm_tree.sample(rng).ok_or(Error::EmptyStore)
    }

    /// Entry `(i, j)` drawn with probability `A_ij² / ‖A‖_F²` (row by norm,
    /// then column within the row).
    pub fn l2_sample_entry<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, usize)> {
        let i = self.l2_sample_row_index(rng)?;
        let j = self.l2_sample_in_row(i, rng)?;
        Ok((i, j))
    }

    pub fn row_values(&self, i: usize) -> Result<Vec<f64>> {
        self.check_row(i)?;
        Ok(self.row_trees[i].values())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (i, tree) in self.row_trees.iter().enumerate() {
            for (j, w, neg) in tree.leaves() {
                let v = w.sqrt();
                out.set(i, j, if neg { -v } else { v });
            }
        }
        out
    }

    /// Internal consistency: parent-sum invariant in every tree and norm
    /// tree leaves equal to row roots.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for (i, tree) in self.row_trees.iter().enumerate() {
            tree.check_invariants().map_err(|e| format!("row {i}: {e}"))?;
            let leaf = self.norm_tree.leaf_weight(i);
            if leaf.to_bits() != tree.root().to_bits() {
                return Err(format!(
                    "norm tree leaf {i} = {leaf} differs from row root {}",
                    tree.root()
                ));
            }
        }
        self.norm_tree
            .check_invariants()
            .map_err(|e| format!("norm tree: {e}"))
    }
}

// ---------------------------------------------------------------------------
// Triplet ingestion
// ---------------------------------------------------------------------------

/// Parse `i,j,value` lines (0-based indices). Blank lines and lines starting
/// with `#` are skipped.
pub fn parse_triplets<R: BufRead>(reader: R) -> Result<Vec<Triplet>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("expected 3 comma-separated fields, found {}", fields.len()),
            });
        }
        let parse_index = |s: &str, what: &str| {
            s.parse::<usize>().map_err(|e| Error::Parse {
                line: line_no,
                reason: format!("bad {what} index '{s}': {e}"),
            })
        };
        let row = parse_index(fields[0], "row")?;
        let col = parse_index(fields[1], "column")?;
        let value = fields[2].parse::<f64>().map_err(|e| Error::Parse {
            line: line_no,
            reason: format!("bad value '{}': {e}", fields[2]),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("non-finite value '{}'", fields[2]),
            });
        }
        out.push(Triplet { row, col, value });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Binary format
//
// header:  magic "QRSTORE\0" | version u32 | rows u64 | cols u64 | entries u64
// trees:   rows row trees, then the norm tree, each as
//          leaves u64 | node_count u64 | (depth u32, prefix u64, weight f64)*
//          | negative_count u64 | leaf u64*
// All integers and floats little-endian.
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 8] = b"QRSTORE\0";
const FORMAT_VERSION: u32 = 1;

impl MatrixStore {
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 24 * self.node_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for v in [self.rows, self.cols, self.entries] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for tree in self.row_trees.iter().chain(std::iter::once(&self.norm_tree)) {
            write_tree(&mut out, tree);
        }
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(r.error_at(0, "bad magic"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(r.error_at(8, format!("unsupported version {version}")));
        }
        let rows = r.len_field("rows")?;
        let cols = r.len_field("cols")?;
        let entries = r.len_field("entries")?;
        if rows == 0 || cols == 0 {
            return Err(r.error_here(format!("invalid shape {rows}x{cols}")));
        }
        if rows > bytes.len() {
            return Err(r.error_here(format!("row count {rows} exceeds input size")));
        }
        let mut row_trees = Vec::with_capacity(rows);
        for _ in 0..rows {
            row_trees.push(read_tree(&mut r, cols)?);
        }
        let norm_tree = read_tree(&mut r, rows)?;
        if r.pos != bytes.len() {
            return Err(r.error_here(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let stored: usize = row_trees.iter().map(RowTree::stored).sum();
        if stored != entries {
            return Err(r.error_at(28, format!("header claims {entries} entries, trees hold {stored}")));
        }
        let store = Self {
            rows,
            cols,
            row_trees,
            norm_tree,
            entries,
        };
        store
            .check_invariants()
            .map_err(|reason| Error::Format { offset: bytes.len(), reason })?;
        Ok(store)
    }
}

fn write_tree(out: &mut Vec<u8>, tree: &RowTree) {
    out.extend_from_slice(&(tree.len as u64).to_le_bytes());
    out.extend_from_slice(&(tree.node_count() as u64).to_le_bytes());
    for (t, level) in tree.levels.iter().enumerate() {
        for (&k, &w) in level {
            out.extend_from_slice(&(t as u32).to_le_bytes());
            out.extend_from_slice(&k.to_le_bytes());
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    out.extend_from_slice(&(tree.negative.len() as u64).to_le_bytes());
    for &j in &tree.negative {
        out.extend_from_slice(&j.to_le_bytes());
    }
}

fn read_tree(r: &mut Reader<'_>, expected_len: usize) -> Result<RowTree> {
    let start = r.pos;
    let len = r.len_field("leaf count")?;
    if len != expected_len {
        return Err(r.error_at(start, format!("tree has {len} leaves, expected {expected_len}")));
    }
    let mut tree = RowTree::new(len);
    let nodes = r.len_field("node count")?;
    if nodes.saturating_mul(20) > r.remaining() {
        return Err(r.error_here(format!("node count {nodes} exceeds remaining input")));
    }
    for _ in 0..nodes {
        let at = r.pos;
        let depth = r.u32()?;
        let prefix = r.u64()?;
        let weight = f64::from_le_bytes(r.array()?);
        if depth > tree.depth {
            return Err(r.error_at(at, format!("node depth {depth} exceeds tree depth {}", tree.depth)));
        }
        if prefix >> depth != 0 {
            return Err(r.error_at(at, format!("prefix {prefix} too long for depth {depth}")));
        }
        if depth == tree.depth && prefix as usize >= len {
            return Err(r.error_at(at, format!("leaf {prefix} out of range")));
        }
        if !weight.is_finite() || weight < 0.0 {
            return Err(r.error_at(at, format!("invalid weight {weight}")));
        }
        if tree.levels[depth as usize].insert(prefix, weight).is_some() {
            return Err(r.error_at(at, "duplicate node"));
        }
    }
    let negatives = r.len_field("negative count")?;
    for _ in 0..negatives {
        let at = r.pos;
        let j = r.u64()?;
        if !tree.levels[tree.depth as usize].contains_key(&j) {
            return Err(r.error_at(at, format!("sign recorded for absent leaf {j}")));
        }
        tree.negative.insert(j);
    }
    tree.check_invariants()
        .map_err(|reason| Error::Format { offset: start, reason })?;
    Ok(tree)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.error_here(format!(
                "truncated input: needed {n} bytes, {} left",
                self.remaining()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn len_field(&mut self, what: &str) -> Result<usize> {
        let at = self.pos;
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.error_at(at, format!("{what} {v} does not fit in memory")))
    }

    fn error_here(&self, reason: impl Into<String>) -> Error {
        self.error_at(self.pos, reason)
    }

    fn error_at(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn four_entry_store() -> MatrixStore {
        let mut s = MatrixStore::new(1, 4).unwrap();
        for (j, v) in [0.4, 0.4, 0.8, 0.2].into_iter().enumerate() {
            s.insert(0, j, v).unwrap();
        }
        s
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(4), 2);
        assert_eq!(ceil_log2(1025), 11);
    }

    #[test]
    fn four_entry_internal_nodes() {
        let s = four_entry_store();
        assert!((s.subtree_weight(0, "0").unwrap() - 0.32).abs() < 1e-15);
        assert!((s.subtree_weight(0, "1").unwrap() - 0.68).abs() < 1e-15);
        assert!((s.subtree_weight(0, "").unwrap() - 1.0).abs() < 1e-15);
        assert!((s.row_norm(0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_entry_and_overwrite() {
        let mut s = MatrixStore::new(2, 3).unwrap();
        s.insert(1, 2, 0.5).unwrap();
        assert_eq!(s.row_tree(1).root(), 0.25);
        s.insert(1, 2, -0.3).unwrap();
        let leaves: f64 = s.row_tree(1).leaves().map(|(_, w, _)| w).sum();
        assert!((s.row_tree(1).root() - 0.09).abs() < 1e-15);
        assert_eq!(s.row_tree(1).root(), leaves);
        assert!(s.row_tree(1).is_negative(2));
        assert_eq!(s.entry_count(), 1);
        assert_eq!(s.row_norm(0).unwrap(), 0.0);
    }

    #[test]
    fn three_four_five() {
        let mut s = MatrixStore::new(1, 2).unwrap();
        s.insert(0, 0, 3.0).unwrap();
        s.insert(0, 1, 4.0).unwrap();
        assert_eq!(s.row_norm(0).unwrap(), 5.0);
    }

    #[test]
    fn out_of_range_and_non_finite() {
        let mut s = MatrixStore::new(2, 2).unwrap();
        assert!(matches!(s.insert(2, 0, 1.0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(s.insert(0, 2, 1.0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(s.insert(0, 0, f64::NAN), Err(Error::InvalidInput(_))));
        assert!(s.row_norm(5).is_err());
    }

    #[test]
    fn empty_row_sampling_errors() {
        let s = MatrixStore::new(2, 2).unwrap();
        let mut rng = seeded(0);
        assert!(matches!(s.l2_sample_in_row(0, &mut rng), Err(Error::EmptyRow(0))));
        assert!(matches!(s.l2_sample_row_index(&mut rng), Err(Error::EmptyStore)));
    }

    #[test]
    fn single_entry_row_always_sampled() {
        let mut s = MatrixStore::new(1, 7).unwrap();
        s.insert(0, 5, -2.0).unwrap();
        let mut rng = seeded(1);
        for _ in 0..100 {
            assert_eq!(s.l2_sample_in_row(0, &mut rng).unwrap(), 5);
        }
    }

    #[test]
    fn explicit_zero_is_stored() {
        let mut s = MatrixStore::new(1, 4).unwrap();
        s.insert(0, 1, 0.0).unwrap();
        assert!(s.row_tree(0).is_present(1));
        assert_eq!(s.entry_count(), 1);
        assert!(s.is_empty());
    }

    #[test]
    fn insert_touch_count() {
        let mut s = MatrixStore::new(5, 9).unwrap();
        let touched = s.insert(3, 8, 1.5).unwrap();
        assert_eq!(touched, ceil_log2(9) as usize + ceil_log2(5) as usize + 2);
    }

    #[test]
    fn preparation_is_orthogonal() {
        let tree = RowTree::from_values(&[0.3, -0.1, 0.0, 2.0, -0.7]).unwrap();
        let cap = tree.capacity();
        for col in 0..cap {
            let mut e = vec![0.0; cap];
            e[col] = 1.0;
            let mut f = e.clone();
            tree.apply_preparation(&mut f, false);
            let n: f64 = f.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
            tree.apply_preparation(&mut f, true);
            for (a, b) in e.iter().zip(&f) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn serialization_roundtrip_and_corruption() {
        let s = four_entry_store();
        let bytes = s.serialize();
        let back = MatrixStore::deserialize(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.serialize(), bytes);

        let err = MatrixStore::deserialize(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            MatrixStore::deserialize(&bad),
            Err(Error::Format { offset: 0, .. })
        ));
        // flip a weight: the parent-sum check catches it
        let mut flipped = bytes.clone();
        let n = flipped.len();
        flipped[n - 12] ^= 0x01;
        assert!(MatrixStore::deserialize(&flipped).is_err());
    }

    #[test]
    fn parse_triplets_reports_line() {
        let text = "0,1,0.5\n# comment\n\n1,0,abc\n";
        match parse_triplets(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let ok = parse_triplets("0,1,0.5\n2, 3, -1e-2\n".as_bytes()).unwrap();
        assert_eq!(ok.len(), 2);
        assert_eq!(ok[1], Triplet { row: 2, col: 3, value: -0.01 });
    }
}
