//! Dense matrices, the singular value decomposition, and the truncation and
//! threshold operators built on it.
//!
//! Every downstream contract is phrased in terms of projectors, so the
//! particular basis chosen inside a degenerate singular subspace does not
//! matter.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Row-major dense real matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            m.data[i * n + i] = *d;
        }
        m
    }

    /// Build from row-major data. Rejects empty shapes, mismatched lengths
    /// and non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return invalid(format!("matrix shape {rows}x{cols} must be at least 1x1"));
        }
        if data.len() != rows * cols {
            return invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return invalid(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return invalid("ragged rows");
        }
        Self::from_row_major(m, n, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.data[i * m.ncols() + j] = m[(i, j)];
            }
        }
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `(U, Σ, V, rank)` with singular values sorted descending and strictly
/// positive. Only the `rank` nonzero triplets are kept.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SvdFactorization {
    rows: usize,
    cols: usize,
    /// Left singular vectors, each of length `rows`.
    pub left: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    /// Right singular vectors, each of length `cols`.
    pub right: Vec<Vec<f64>>,
}

/// Exact SVD of `a`.
///
/// Singular values below `max(m, n) * eps * σ_max` are treated as zero, so the
/// zero matrix yields an empty factorization. Signs are canonicalised so the
/// largest-magnitude entry of every right vector is positive.
pub fn svd(a: &DenseMatrix) -> Result<SvdFactorization> {
    if let Some(v) = a.data.iter().find(|v| !v.is_finite()) {
        return invalid(format!("non-finite entry {v} in svd input"));
    }
    let (m, n) = (a.rows, a.cols);
    let decomposition = a.to_nalgebra().svd(true, true);
    let u = decomposition
        .u
        .ok_or_else(|| Error::InvalidInput("svd did not produce U".into()))?;
    let vt = decomposition
        .v_t
        .ok_or_else(|| Error::InvalidInput("svd did not produce V^T".into()))?;
    let sv = decomposition.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&x, &y| sv[y].total_cmp(&sv[x]).then(x.cmp(&y)));
    let sigma_max = order.first().map_or(0.0, |&i| sv[i]);
    let tol = (m.max(n) as f64) * f64::EPSILON * sigma_max;

    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut singular_values = Vec::new();
    for &k in &order {
        if sv[k] <= tol || sv[k] == 0.0 {
            break;
        }
        let mut uk: Vec<f64> = u.column(k).iter().copied().collect();
        let mut vk: Vec<f64> = vt.row(k).iter().copied().collect();
        let pivot = vk
            .iter()
            .copied()
            .fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            uk.iter_mut().for_each(|x| *x = -*x);
            vk.iter_mut().for_each(|x| *x = -*x);
        }
        left.push(uk);
        right.push(vk);
        singular_values.push(sv[k]);
    }
    Ok(SvdFactorization {
        rows: m,
        cols: n,
        left,
        singular_values,
        right,
    })
}

impl SvdFactorization {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `Σ_{i ∈ keep} σ_i u_i v_iᵗ`.
    pub fn reconstruct_from(&self, keep: &[usize]) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for &k in keep {
            let s = self.singular_values[k];
            let (u, v) = (&self.left[k], &self.right[k]);
            for i in 0..self.rows {
                let su = s * u[i];
                if su == 0.0 {
                    continue;
                }
                let row = &mut out.data[i * self.cols..(i + 1) * self.cols];
                for (x, vj) in row.iter_mut().zip(v) {
                    *x += su * vj;
                }
            }
        }
        out
    }

    /// Orthonormal basis of the whole row space `R^n`: the right singular
    /// vectors first (in singular value order), then a deterministic
    /// completion spanning the null space.
    pub fn complete_right_basis(&self) -> Vec<Vec<f64>> {
        let n = self.cols;
        let mut basis = self.right.clone();
        // coverage[j] = Σ_b b_j², so 1 - coverage[j] is the squared residual of e_j.
        let mut coverage = vec![0.0; n];
        for b in &basis {
            for (c, x) in coverage.iter_mut().zip(b) {
                *c += x * x;
            }
        }
        while basis.len() < n {
            let j = (0..n)
                .min_by(|&a, &b| coverage[a].total_cmp(&coverage[b]))
                .expect("n >= 1");
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(b, &e);
                    for (x, y) in e.iter_mut().zip(b) {
                        *x -= c * y;
                    }
                }
            }
            let len = norm(&e);
            e.iter_mut().for_each(|x| *x /= len);
            for (c, x) in coverage.iter_mut().zip(&e) {
                *c += x * x;
            }
            basis.push(e);
        }
        basis
    }

    /// Indices `i` with `σ_i ≥ sigma` (inclusive at ties).
    pub fn indices_at_least(&self, sigma: f64) -> Vec<usize> {
        (0..self.rank())
            .filter(|&i| self.singular_values[i] >= sigma)
            .collect()
    }

    /// Indices with `σ_i ∈ [(1-κ)σ, σ)`. The lower boundary is inclusive.
    pub fn band_indices(&self, sigma: f64, kappa: f64) -> Vec<usize> {
        let lo = (1.0 - kappa) * sigma;
        (0..self.rank())
            .filter(|&i| {
                let s = self.singular_values[i];
                s >= lo && s < sigma
            })
            .collect()
    }

    /// Kept index set of `A_{≥σ,κ}` for a given band selection.
    pub fn kept_indices(&self, sigma: f64, kappa: f64, band: &[usize]) -> Result<Vec<usize>> {
        if !(kappa > 0.0 && kappa < 1.0) {
            return invalid(format!("kappa {kappa} must lie in (0, 1)"));
        }
        if sigma.is_nan() || sigma < 0.0 {
            return invalid(format!("threshold {sigma} must be non-negative"));
        }
        let allowed = self.band_indices(sigma, kappa);
        let mut kept = self.indices_at_least(sigma);
        for &b in band {
            if !allowed.contains(&b) {
                return invalid(format!(
                    "band index {b} is outside [(1-κ)σ, σ) = [{}, {sigma})",
                    (1.0 - kappa) * sigma
                ));
            }
            if !kept.contains(&b) {
                kept.push(b);
            }
        }
        kept.sort_unstable();
        Ok(kept)
    }
}

/// `A_k`, the top-`k` truncation. `k ≥ rank` reconstructs the full matrix.
pub fn truncate_top_k(f: &SvdFactorization, k: usize) -> DenseMatrix {
    let keep: Vec<usize> = (0..k.min(f.rank())).collect();
    f.reconstruct_from(&keep)
}

/// `A_{≥σ}`: keeps exactly the triplets with `σ_i ≥ σ`.
pub fn project_threshold(f: &SvdFactorization, sigma: f64) -> DenseMatrix {
    f.reconstruct_from(&f.indices_at_least(sigma))
}

/// A member of the family `A_{≥σ,κ}`: everything with `σ_i ≥ σ` plus the
/// selected band indices from `[(1-κ)σ, σ)`.
pub fn project_threshold_family(
    f: &SvdFactorization,
    sigma: f64,
    kappa: f64,
    band: &[usize],
) -> Result<DenseMatrix> {
    Ok(f.reconstruct_from(&f.kept_indices(sigma, kappa, band)?))
}

/// `Σ_{i ∈ kept} ⟨v_i, x⟩ v_i`.
pub fn project_onto(f: &SvdFactorization, x: &[f64], kept: &[usize]) -> Vec<f64> {
    assert_eq!(x.len(), f.cols, "vector dimension must match column count");
    let mut out = vec![0.0; f.cols];
    for &k in kept {
        let v = &f.right[k];
        let c = dot(v, x);
        for (o, vj) in out.iter_mut().zip(v) {
            *o += c * vj;
        }
    }
    out
}

/// `A⁺_{≥σ,κ} A_{≥σ,κ} x`: the projection of `x` onto the right singular
/// vectors kept by the threshold family.
pub fn pseudo_project_row(
    f: &SvdFactorization,
    x: &[f64],
    sigma: f64,
    kappa: f64,
    band: &[usize],
) -> Result<Vec<f64>> {
    if x.len() != f.cols {
        return invalid(format!(
            "vector has dimension {}, matrix has {} columns",
            x.len(),
            f.cols
        ));
    }
    let kept = f.kept_indices(sigma, kappa, band)?;
    Ok(project_onto(f, x, &kept))
}
