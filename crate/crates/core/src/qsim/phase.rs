use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use super::state::QuantumState;
use super::walk::WalkOperator;
use crate::error::{invalid, Error, Result};

/// Largest joint register (system dimension × estimate bins) the circuit
/// path will materialise.
pub const REGISTER_CAP: usize = 1 << 22;

/// Estimate-register width for phase precision `δ`: `⌈log2(2π/δ)⌉ + 2`.
pub fn phase_bits(phase_precision: f64) -> Result<u32> {
    if !(phase_precision > 0.0) || !phase_precision.is_finite() {
        return invalid(format!("phase precision {phase_precision} must be positive"));
    }
    let raw = (2.0 * PI / phase_precision).log2().ceil().max(0.0);
    Ok(raw as u32 + 2)
}

/// Register width for singular value precision `ε` (relative to `‖A‖_F`).
///
/// `|cos(θ̄/2) - cos(θ/2)| ≤ |θ̄ - θ|/2`, so phase precision `2ε` suffices.
pub fn sve_bits(epsilon: f64) -> Result<u32> {
    phase_bits(2.0 * epsilon)
}

/// Nearest bin of phase `θ` on a grid of `bins` points over `[0, 2π)`.
pub fn bin_phase(theta: f64, bins: usize) -> usize {
    let raw = (theta * bins as f64 / (2.0 * PI)).round() as i64;
    raw.rem_euclid(bins as i64) as usize
}

/// Merge the bins of `θ` and `-θ`: `min(b, N - b)`.
pub fn fold_bin(bin: usize, bins: usize) -> usize {
    bin.min(bins - bin)
}

/// Joint state `Σ_a Ψ_a ⊗ |a⟩` of the system and the estimate register.
#[derive(Clone, Debug)]
pub struct PhaseRegister {
    bins: usize,
    system_dim: usize,
    /// Index `s·bins + a`.
    amplitudes: Vec<Complex64>,
}

impl PhaseRegister {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn bits(&self) -> u32 {
        self.bins.trailing_zeros()
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    /// Amplitude of `|s⟩|a⟩`.
    pub fn amplitude(&self, s: usize, a: usize) -> Complex64 {
        self.amplitudes[s * self.bins + a]
    }

    /// Unnormalised system state conditioned on register value `a`.
    pub fn conditional(&self, a: usize) -> Vec<Complex64> {
        (0..self.system_dim).map(|s| self.amplitude(s, a)).collect()
    }

    /// Probability of each register value.
    pub fn bin_distribution(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.bins];
        for chunk in self.amplitudes.chunks(self.bins) {
            for (pa, z) in p.iter_mut().zip(chunk) {
                *pa += z.norm_sqr();
            }
        }
        p
    }

    /// `Σ_b |⟨e_b, Ψ_a⟩|²` for every `a`, with `{e_b}` an orthonormal real
    /// basis of a subspace of the system.
    pub fn subspace_distribution(&self, basis: &[Vec<f64>]) -> Vec<f64> {
        let mut p = vec![0.0; self.bins];
        for e in basis {
            assert_eq!(e.len(), self.system_dim);
            let mut overlap = vec![Complex64::new(0.0, 0.0); self.bins];
            for (s, &w) in e.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let chunk = &self.amplitudes[s * self.bins..(s + 1) * self.bins];
                for (o, z) in overlap.iter_mut().zip(chunk) {
                    *o += z * w;
                }
            }
            for (pa, o) in p.iter_mut().zip(&overlap) {
                *pa += o.norm_sqr();
            }
        }
        p
    }

    /// Measure the estimate register.
    pub fn measure<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.bin_distribution(), rng)
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = i;
        if u < w {
            return i;
        }
        u -= w;
    }
    last
}

/// Phase estimation of a unitary given as a map on amplitude vectors, with
/// a `bits`-wide estimate register.
///
/// Builds `Σ_a |a⟩ U^a |ψ⟩ / √N` and applies the inverse Fourier transform
/// to the register, so an eigenvector with eigenvalue `e^{iθ}` concentrates
/// on bin `Nθ/2π`.
pub fn phase_estimation_with<F>(apply: F, state: &QuantumState, bits: u32) -> Result<PhaseRegister>
where
    F: Fn(&[Complex64]) -> Vec<Complex64>,
{
    let dim = state.dim();
    let bins = 1usize
        .checked_shl(bits)
        .filter(|&b| b <= REGISTER_CAP)
        .ok_or(Error::RegisterTooLarge {
            requested: usize::MAX,
            cap: REGISTER_CAP,
        })?;
    let requested = bins.saturating_mul(dim);
    if requested > REGISTER_CAP {
        return Err(Error::RegisterTooLarge {
            requested,
            cap: REGISTER_CAP,
        });
    }
    let scale = 1.0 / (bins as f64).sqrt();
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); requested];
    let mut current = state.amplitudes().to_vec();
    for a in 0..bins {
        for (s, z) in current.iter().enumerate() {
            amplitudes[s * bins + a] = z * scale;
        }
        if a + 1 < bins {
            current = apply(&current);
        }
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(bins);
    fft.process(&mut amplitudes);
    amplitudes.iter_mut().for_each(|z| *z *= scale);
    Ok(PhaseRegister {
        bins,
        system_dim: dim,
        amplitudes,
    })
}

/// Phase estimation of the walk operator on a state over `[m]×[n]` with
/// phase precision `δ`.
pub fn phase_estimation(wop: &WalkOperator, state: &QuantumState, phase_precision: f64) -> Result<PhaseRegister> {
    if state.dim() != wop.dim() {
        return invalid(format!(
            "state has dimension {}, walk space has {}",
            state.dim(),
            wop.dim()
        ));
    }
    phase_estimation_with(|v| walk_complex(wop, v), state, phase_bits(phase_precision)?)
}

pub(crate) fn walk_complex(wop: &WalkOperator, v: &[Complex64]) -> Vec<Complex64> {
    let re: Vec<f64> = v.iter().map(|z| z.re).collect();
    let im: Vec<f64> = v.iter().map(|z| z.im).collect();
    let (re, im) = (wop.w_real(&re), wop.w_real(&im));
    re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect()
}
