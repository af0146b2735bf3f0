use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::sample_tree::{MatrixStore, RowTree};

/// Unit-norm complex amplitude vector.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    amplitudes: Vec<Complex64>,
}

impl QuantumState {
    /// Normalise `amplitudes` into a state. The zero vector is rejected.
    pub fn new(mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::ZeroVector);
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(Self { amplitudes })
    }

    /// The vector state `|x⟩ = x / ‖x‖`.
    pub fn from_real(x: &[f64]) -> Result<Self> {
        Self::new(x.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// `|index⟩` in a space of dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim);
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Self { amplitudes }
    }

    pub(crate) fn from_raw(amplitudes: Vec<Complex64>) -> Self {
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Real parts, for states known to be real.
    pub fn real_parts(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.re).collect()
    }

    pub fn imag_parts(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.im).collect()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        assert_eq!(self.dim(), other.dim());
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &Self) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Measure in the standard basis.
    pub fn measure<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        let mut u = rng.random::<f64>() * total;
        let mut last = 0;
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            if p == 0.0 {
                continue;
            }
            last = i;
            if u < p {
                return i;
            }
            u -= p;
        }
        last
    }
}

/// Prepare `|A_i⟩` by running the row tree's conditional rotations on
/// `|0…0⟩`. The result lives on the `len` unpadded indices.
pub fn prepare_vector_state(store: &MatrixStore, i: usize) -> Result<QuantumState> {
    store.row_norm(i)?;
    prepare_from_tree(store.row_tree(i)).map_err(|e| match e {
        Error::ZeroVector => Error::EmptyRow(i),
        other => other,
    })
}

/// Same as [`prepare_vector_state`] for a standalone tree.
pub fn prepare_from_tree(tree: &RowTree) -> Result<QuantumState> {
    if tree.is_empty() || !(tree.root() > 0.0) {
        return Err(Error::ZeroVector);
    }
    let zero = Complex64::new(0.0, 0.0);
    let mut v = vec![zero; tree.capacity()];
    v[0] = Complex64::new(1.0, 0.0);
    tree.apply_preparation(&mut v, false);
    if tree.depth() == 0 && tree.is_negative(0) {
        // no rotation level carries the sign of a one-leaf tree
        v[0] = -v[0];
    }
    v.truncate(tree.len());
    Ok(QuantumState::from_raw(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn four_entry_row_prepares_its_state() {
        let tree = RowTree::from_values(&[0.4, 0.4, 0.8, 0.2]).unwrap();
        let s = prepare_from_tree(&tree).unwrap();
        for (a, e) in s.real_parts().iter().zip([0.4, 0.4, 0.8, 0.2]) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_single_entry() {
        let tree = RowTree::from_values(&[0.0, 0.0, -3.0, 0.0, 0.0]).unwrap();
        let s = prepare_from_tree(&tree).unwrap();
        assert!((s.real_parts()[2] + 1.0).abs() < 1e-15);
        let one = RowTree::from_values(&[-2.0]).unwrap();
        assert!((prepare_from_tree(&one).unwrap().real_parts()[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_row_is_rejected() {
        let store = MatrixStore::new(2, 3).unwrap();
        assert!(matches!(prepare_vector_state(&store, 1), Err(Error::EmptyRow(1))));
        assert!(QuantumState::from_real(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn measurement_follows_born_rule_roughly() {
        let s = QuantumState::from_real(&[0.0, 1.0, 0.0]).unwrap();
        let mut rng = seeded(3);
        assert!((0..50).all(|_| s.measure(&mut rng) == 1));
    }
}
