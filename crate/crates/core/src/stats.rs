//! Small statistics toolbox: two-sample Kolmogorov-Smirnov test and
//! mean / standard-error summaries used by the Monte Carlo checks.

use crate::error::{Error, Result};

/// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^{j-1}
/// exp(-2 j^2 lambda^2).
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64 * lambda).powi(2)).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sided two-sample KS statistic with the standard asymptotic
/// p-value (effective sample size with the small-sample correction).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Precondition("KS test needs nonempty samples".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n1, n2) = (xs.len(), ys.len());
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let x = xs[i];
        let y = ys[j];
        let v = x.min(y);
        while i < n1 && xs[i] <= v {
            i += 1;
        }
        while j < n2 && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let ne = (n1 as f64 * n2 as f64 / (n1 + n2) as f64).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    Ok((d, kolmogorov_q(lambda)))
}

#[derive(Debug, Clone, Copy)]
pub struct MeanSe {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

pub fn mean_se(values: &[f64]) -> MeanSe {
    let n = values.len();
    if n == 0 {
        return MeanSe {
            mean: f64::NAN,
            std_error: f64::NAN,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (n as f64 - 1.0).max(1.0);
    MeanSe {
        mean,
        std_error: (var / n as f64).sqrt(),
        n,
    }
}
