//! Goodness-of-fit helpers for the sampling checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Result of a chi-square test.
#[derive(Clone, Copy, Debug)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquare {
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value > significance
    }
}

fn p_value(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(statistic)
}

/// Pearson goodness of fit of `counts` against `probabilities`.
///
/// Cells with expected count below 5 are pooled into one cell so the
/// asymptotic distribution stays valid.
pub fn chi_square_gof(counts: &[u64], probabilities: &[f64]) -> ChiSquare {
    assert_eq!(counts.len(), probabilities.len());
    let total: u64 = counts.iter().sum();
    let total_p: f64 = probabilities.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probabilities) {
        let expected = total as f64 * p / total_p;
        if expected < 5.0 {
            pooled.0 += c as f64;
            pooled.1 += expected;
        } else {
            cells.push((c as f64, expected));
        }
    }
    if pooled.1 > 0.0 {
        cells.push(pooled);
    } else if pooled.0 > 0.0 {
        // observations where the model puts no mass
        return ChiSquare {
            statistic: f64::INFINITY,
            dof: cells.len(),
            p_value: 0.0,
        };
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = cells.len().saturating_sub(1);
    ChiSquare {
        statistic,
        dof,
        p_value: p_value(statistic, dof),
    }
}

/// Two-sample chi-square test of homogeneity between two count vectors over
/// the same categories. Categories empty in both samples are ignored; sparse
/// categories are pooled.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> ChiSquare {
    assert_eq!(a.len(), b.len());
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let n = na + nb;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        let col = x + y;
        if col == 0.0 {
            continue;
        }
        if col * na.min(nb) / n < 5.0 {
            pooled.0 += x;
            pooled.1 += y;
        } else {
            cells.push((x, y));
        }
    }
    if pooled.0 + pooled.1 > 0.0 {
        cells.push(pooled);
    }
    let statistic: f64 = cells
        .iter()
        .map(|&(x, y)| {
            let col = x + y;
            let (ex, ey) = (col * na / n, col * nb / n);
            (x - ex).powi(2) / ex + (y - ey).powi(2) / ey
        })
        .sum();
    let dof = cells.len().saturating_sub(1);
    ChiSquare {
        statistic,
        dof,
        p_value: p_value(statistic, dof),
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
