use num_complex::Complex64;

use super::state::{prepare_from_tree, QuantumState};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm, DenseMatrix, SvdFactorization};
use crate::sample_tree::{MatrixStore, RowTree};

/// The isometries `P`, `Q` of a stored matrix and the reflections built from
/// them, as linear maps on the `m·n` dimensional space indexed `i·n + j`.
///
/// `P e_i = |i⟩|A_i⟩` and `Q e_j = |Ã⟩|j⟩` where `Ã` holds the row norms.
/// An empty row has no state of its own; inside the reflections it is given
/// `|A_i⟩ = |0⟩`, which is what the tree rotations of an all-zero tree
/// produce, so `PᵗP = I` and `PᵗQ = A/‖A‖_F` still hold.
#[derive(Clone, Debug)]
pub struct WalkOperator {
    rows: usize,
    cols: usize,
    frobenius: f64,
    row_states: Vec<Vec<f64>>,
    empty_rows: Vec<bool>,
    norm_state: Vec<f64>,
    row_trees: Vec<RowTree>,
    norm_tree: RowTree,
}

/// `W` restricted to `span(Qv, Pu)`.
#[derive(Clone, Copy, Debug)]
pub struct RestrictedRotation {
    /// Rotation angle in `[0, π]`.
    pub angle: f64,
    /// Largest norm of the part of `W e` leaving the plane, for `e` in the
    /// plane's orthonormal basis.
    pub invariance_residual: f64,
    /// Dimension of the plane (1 when `Pu = Qv`).
    pub dim: usize,
}

impl WalkOperator {
    pub fn new(store: &MatrixStore) -> Result<Self> {
        let frobenius = store.frobenius_norm();
        if store.is_empty() || !(frobenius > 0.0) {
            return Err(Error::EmptyStore);
        }
        let (m, n) = (store.rows(), store.cols());
        let mut row_states = Vec::with_capacity(m);
        let mut empty_rows = Vec::with_capacity(m);
        for i in 0..m {
            match prepare_from_tree(store.row_tree(i)) {
                Ok(s) => {
                    row_states.push(s.real_parts());
                    empty_rows.push(false);
                }
                Err(Error::ZeroVector) => {
                    let mut e0 = vec![0.0; n];
                    e0[0] = 1.0;
                    row_states.push(e0);
                    empty_rows.push(true);
                }
                Err(e) => return Err(e),
            }
        }
        let norm_state = prepare_from_tree(store.norm_tree())?.real_parts();
        Ok(Self {
            rows: m,
            cols: n,
            frobenius,
            row_states,
            empty_rows,
            norm_state,
            row_trees: (0..m).map(|i| store.row_tree(i).clone()).collect(),
            norm_tree: store.norm_tree().clone(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Dimension `m·n` of the walk space.
    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius
    }

    /// Amplitudes `‖A_i‖ / ‖A‖_F` of `|Ã⟩`.
    pub fn norm_state(&self) -> &[f64] {
        &self.norm_state
    }

    pub fn row_state(&self, i: usize) -> &[f64] {
        &self.row_states[i]
    }

    pub fn p_real(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let n = self.cols;
        let mut out = vec![0.0; self.dim()];
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for (o, a) in out[i * n..(i + 1) * n].iter_mut().zip(&self.row_states[i]) {
                *o = yi * a;
            }
        }
        out
    }

    pub fn q_real(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let n = self.cols;
        let mut out = vec![0.0; self.dim()];
        for (i, &r) in self.norm_state.iter().enumerate() {
            for (o, xj) in out[i * n..(i + 1) * n].iter_mut().zip(x) {
                *o = r * xj;
            }
        }
        out
    }

    pub fn p_adjoint_real(&self, s: &[f64]) -> Vec<f64> {
        assert_eq!(s.len(), self.dim());
        let n = self.cols;
        (0..self.rows)
            .map(|i| dot(&s[i * n..(i + 1) * n], &self.row_states[i]))
            .collect()
    }

    pub fn q_adjoint_real(&self, s: &[f64]) -> Vec<f64> {
        assert_eq!(s.len(), self.dim());
        let n = self.cols;
        let mut out = vec![0.0; n];
        for (i, &r) in self.norm_state.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(&s[i * n..(i + 1) * n]) {
                *o += r * x;
            }
        }
        out
    }

    /// `U s = 2PPᵗs - s`.
    pub fn u_real(&self, s: &[f64]) -> Vec<f64> {
        let back = self.p_real(&self.p_adjoint_real(s));
        back.iter().zip(s).map(|(b, x)| 2.0 * b - x).collect()
    }

    /// `V s = 2QQᵗs - s`.
    pub fn v_real(&self, s: &[f64]) -> Vec<f64> {
        let back = self.q_real(&self.q_adjoint_real(s));
        back.iter().zip(s).map(|(b, x)| 2.0 * b - x).collect()
    }

    /// `W s = U V s` by projector algebra.
    pub fn w_real(&self, s: &[f64]) -> Vec<f64> {
        self.u_real(&self.v_real(s))
    }

    /// `W s` computed as `Ũ R₁ Ũ⁻¹ · Ṽ R₀ Ṽ⁻¹` on the padded register pair,
    /// where `Ũ` and `Ṽ` are the tree preparation circuits and `R₀`, `R₁`
    /// reflect about `|0…0⟩` of the first and second register.
    pub fn w_reflections_real(&self, s: &[f64]) -> Vec<f64> {
        assert_eq!(s.len(), self.dim());
        let (m, n) = (self.rows, self.cols);
        let mp = self.norm_tree.capacity();
        let np = 1usize << crate::sample_tree::ceil_log2(n);
        let mut big = vec![0.0; mp * np];
        for i in 0..m {
            big[i * np..i * np + n].copy_from_slice(&s[i * n..(i + 1) * n]);
        }

        // V: act on the first register, column by column.
        let mut col = vec![0.0; mp];
        for j in 0..np {
            for i in 0..mp {
                col[i] = big[i * np + j];
            }
            self.norm_tree.apply_preparation(&mut col, true);
            col[1..].iter_mut().for_each(|x| *x = -*x);
            self.norm_tree.apply_preparation(&mut col, false);
            for i in 0..mp {
                big[i * np + j] = col[i];
            }
        }

        // U: controlled on the first register, act on the second.
        for i in 0..mp {
            let row = &mut big[i * np..(i + 1) * np];
            if let Some(tree) = self.row_trees.get(i) {
                tree.apply_preparation(row, true);
                row[1..].iter_mut().for_each(|x| *x = -*x);
                tree.apply_preparation(row, false);
            } else {
                row[1..].iter_mut().for_each(|x| *x = -*x);
            }
        }

        let mut out = vec![0.0; m * n];
        for i in 0..m {
            out[i * n..(i + 1) * n].copy_from_slice(&big[i * np..i * np + n]);
        }
        out
    }

    fn check_dim(&self, s: &QuantumState, expected: usize) -> Result<()> {
        if s.dim() != expected {
            return invalid(format!("state has dimension {}, expected {expected}", s.dim()));
        }
        Ok(())
    }

    fn lift(&self, s: &QuantumState, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Complex64> {
        let re = f(&s.real_parts());
        let im = f(&s.imag_parts());
        re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect()
    }

    /// `P y = Σ_i y_i |i⟩|A_i⟩`. Amplitude on an empty row is an error.
    pub fn apply_p(&self, y: &QuantumState) -> Result<QuantumState> {
        self.check_dim(y, self.rows)?;
        if let Some(i) = (0..self.rows).find(|&i| self.empty_rows[i] && y.amplitudes()[i].norm_sqr() > 0.0) {
            return Err(Error::EmptyRow(i));
        }
        Ok(QuantumState::from_raw(self.lift(y, |v| self.p_real(v))))
    }

    /// `Q x = Σ_j x_j |Ã⟩|j⟩`.
    pub fn apply_q(&self, x: &QuantumState) -> Result<QuantumState> {
        self.check_dim(x, self.cols)?;
        Ok(QuantumState::from_raw(self.lift(x, |v| self.q_real(v))))
    }

    /// `Qᵗ s`, unnormalised.
    pub fn apply_q_adjoint(&self, s: &QuantumState) -> Result<Vec<Complex64>> {
        self.check_dim(s, self.dim())?;
        Ok(self.lift(s, |v| self.q_adjoint_real(v)))
    }

    /// `Pᵗ s`, unnormalised.
    pub fn apply_p_adjoint(&self, s: &QuantumState) -> Result<Vec<Complex64>> {
        self.check_dim(s, self.dim())?;
        Ok(self.lift(s, |v| self.p_adjoint_real(v)))
    }

    pub fn apply_u(&self, s: &QuantumState) -> Result<QuantumState> {
        self.check_dim(s, self.dim())?;
        Ok(QuantumState::from_raw(self.lift(s, |v| self.u_real(v))))
    }

    pub fn apply_v(&self, s: &QuantumState) -> Result<QuantumState> {
        self.check_dim(s, self.dim())?;
        Ok(QuantumState::from_raw(self.lift(s, |v| self.v_real(v))))
    }

    /// `W = U·V`: `V` first, then `U`.
    pub fn apply_w(&self, s: &QuantumState) -> Result<QuantumState> {
        self.check_dim(s, self.dim())?;
        Ok(QuantumState::from_raw(self.lift(s, |v| self.w_real(v))))
    }

    /// `W` through the reflection circuits instead of projector algebra.
    pub fn apply_w_reflections(&self, s: &QuantumState) -> Result<QuantumState> {
        self.check_dim(s, self.dim())?;
        Ok(QuantumState::from_raw(self.lift(s, |v| self.w_reflections_real(v))))
    }

    /// `PᵗQ`, assembled column by column from the two maps.
    pub fn factorization_product(&self) -> DenseMatrix {
        let (m, n) = (self.rows, self.cols);
        let mut out = DenseMatrix::zeros(m, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let column = self.p_adjoint_real(&self.q_real(&e));
            for (i, v) in column.into_iter().enumerate() {
                out.set(i, j, v);
            }
            e[j] = 0.0;
        }
        out
    }

    /// Dense `mn × mn` matrix of `W`, for small instances.
    pub fn to_dense_w(&self) -> DenseMatrix {
        let d = self.dim();
        let mut out = DenseMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for c in 0..d {
            e[c] = 1.0;
            for (r, v) in self.w_real(&e).into_iter().enumerate() {
                out.set(r, c, v);
            }
            e[c] = 0.0;
        }
        out
    }
}

/// `(v_i, θ_i)` with `θ_i = 2 arccos(σ_i / ‖A‖_F)` for every vector of the
/// completed right basis; null-space vectors get `θ = π`.
pub fn eigenphase_oracle(wop: &WalkOperator, f: &SvdFactorization) -> Vec<(Vec<f64>, f64)> {
    let fro = wop.frobenius_norm();
    f.complete_right_basis()
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let s = f.singular_values.get(i).copied().unwrap_or(0.0);
            (v, 2.0 * (s / fro).min(1.0).acos())
        })
        .collect()
}

/// Restrict `W` to `span(Qv, Pu)` for a singular pair `(u, v)` and read off
/// the rotation angle.
pub fn restricted_rotation(wop: &WalkOperator, u: &[f64], v: &[f64]) -> Result<RestrictedRotation> {
    if u.len() != wop.rows() || v.len() != wop.cols() {
        return invalid("singular vector dimensions do not match the operator");
    }
    let e1 = wop.q_real(v);
    let pu = wop.p_real(u);
    let c = dot(&e1, &pu);
    let mut e2: Vec<f64> = pu.iter().zip(&e1).map(|(p, q)| p - c * q).collect();
    let len = norm(&e2);
    let w1 = wop.w_real(&e1);
    if len < 1e-9 {
        let residual = norm(&w1.iter().zip(&e1).map(|(a, b)| a - b).collect::<Vec<_>>());
        return Ok(RestrictedRotation {
            angle: 0.0,
            invariance_residual: residual,
            dim: 1,
        });
    }
    e2.iter_mut().for_each(|x| *x /= len);
    let w2 = wop.w_real(&e2);
    let (m00, m10) = (dot(&e1, &w1), dot(&e2, &w1));
    let (m01, m11) = (dot(&e1, &w2), dot(&e2, &w2));
    let leak = |w: &[f64], a: f64, b: f64| {
        let r: Vec<f64> = w
            .iter()
            .zip(e1.iter().zip(&e2))
            .map(|(x, (p, q))| x - a * p - b * q)
            .collect();
        norm(&r)
    };
    let residual = leak(&w1, m00, m10).max(leak(&w2, m01, m11));
    Ok(RestrictedRotation {
        angle: m10.atan2(m00).abs(),
        invariance_residual: residual,
        dim: 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(rows: &[Vec<f64>]) -> MatrixStore {
        MatrixStore::from_dense(&DenseMatrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn three_four_five_column() {
        let w = WalkOperator::new(&store(&[vec![3.0, 0.0], vec![0.0, 4.0]])).unwrap();
        let s = w.apply_q(&QuantumState::basis(2, 1)).unwrap().real_parts();
        assert!((s[1] - 0.6).abs() < 1e-15);
        assert!((s[3] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn empty_row_amplitude_is_rejected() {
        let w = WalkOperator::new(&store(&[vec![1.0, 2.0], vec![0.0, 0.0]])).unwrap();
        assert!(matches!(w.apply_p(&QuantumState::basis(2, 1)), Err(Error::EmptyRow(1))));
        assert!(w.apply_p(&QuantumState::basis(2, 0)).is_ok());
    }

    #[test]
    fn empty_store_is_rejected() {
        assert!(matches!(
            WalkOperator::new(&MatrixStore::new(2, 2).unwrap()),
            Err(Error::EmptyStore)
        ));
    }

    #[test]
    fn diag_three_four_rotations() {
        let a = DenseMatrix::from_diag(&[3.0, 4.0]);
        let w = WalkOperator::new(&MatrixStore::from_dense(&a).unwrap()).unwrap();
        let f = crate::linalg::svd(&a).unwrap();
        let mut cosines: Vec<f64> = (0..2)
            .map(|i| {
                let r = restricted_rotation(&w, &f.left[i], &f.right[i]).unwrap();
                assert!(r.invariance_residual < 1e-12);
                (r.angle / 2.0).cos()
            })
            .collect();
        cosines.sort_by(f64::total_cmp);
        assert!((cosines[0] - 0.6).abs() < 1e-12);
        assert!((cosines[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn reflection_path_matches_projectors_with_padding_and_empty_rows() {
        let a = DenseMatrix::from_rows(&[
            vec![1.0, -2.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![0.5, 0.0, 3.0],
        ])
        .unwrap();
        let w = WalkOperator::new(&MatrixStore::from_dense(&a).unwrap()).unwrap();
        let s: Vec<f64> = (0..9).map(|k| ((k * 7 % 5) as f64) - 2.0).collect();
        let x = w.w_real(&s);
        let y = w.w_reflections_real(&s);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
