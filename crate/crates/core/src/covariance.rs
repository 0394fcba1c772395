//! Correlation functions and the isotropic covariance tensor.
//!
//! Two concrete families are provided, both built from the scalar Gaussian
//! covariance `phi(r) = exp(-r^2 / (2 l^2))` and unit-normalized so that
//! `B(0) = 1`:
//!
//! * solenoidal (stream-function) fields: `B_L(r) = E`, `B_N(r) = (1 - s) E`
//! * potential (gradient) fields: the roles of `B_L` and `B_N` swap
//!
//! with `s = r^2 / l^2` and `E = exp(-s/2)`. Mixtures combine the two
//! convexly. The tensor itself is
//! `b_ij(x) = (B_L - B_N) x_i x_j / |x|^2 + B_N delta_ij`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    SolenoidalGaussian,
    PotentialGaussian,
    Mixture,
}

/// Parametric pair of longitudinal / normal correlation functions.
///
/// The single source of truth for the tensor `b` everywhere else in the
/// crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationFamily<T> {
    pub kind: FamilyKind,
    pub length_scale: T,
    /// Weight of the potential component; 0 for solenoidal, 1 for potential.
    pub mix_weight: T,
    pub dimension: usize,
}

/// Value and first two derivatives of both correlation functions at one r.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationValues<T> {
    pub b_l: T,
    pub b_l_d1: T,
    pub b_l_d2: T,
    pub b_n: T,
    pub b_n_d1: T,
    pub b_n_d2: T,
}

/// Dense symmetric d x d tensor value, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorValue<T> {
    pub dimension: usize,
    entries: Vec<T>,
}

impl<T: Real> TensorValue<T> {
    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.dimension + j]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.dimension).map(|i| self.get(i, j)).collect()
    }
}

impl TensorValue<f64> {
    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dimension, self.dimension, |i, j| self.get(i, j))
    }
}

/// Analytic spectra of `b(z)` and of the two-point block matrix at `z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport<T> {
    pub point: Vec<T>,
    /// (eigenvalue, multiplicity) pairs of b(z).
    pub eigenvalues_b: Vec<(T, usize)>,
    /// (eigenvalue, multiplicity) pairs of the 2d x 2d two-point matrix.
    pub eigenvalues_bbar: Vec<(T, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovSpectrum<T> {
    pub mu: Vec<T>,
    pub beta_l: T,
    pub beta_n: T,
    /// Standing assumption for everything downstream of the radial process.
    pub mu1_positive: bool,
}

impl<T: Real> CorrelationFamily<T> {
    pub fn new(kind: FamilyKind, length_scale: T, mix_weight: T, dimension: usize) -> Result<Self> {
        if !(length_scale > T::zero()) || !length_scale.is_finite() {
            return Err(Error::Parameter(format!(
                "length_scale must be positive, got {length_scale:?}"
            )));
        }
        if dimension < 2 {
            return Err(Error::Parameter(format!(
                "dimension must be at least 2, got {dimension}"
            )));
        }
        let weight = match kind {
            FamilyKind::SolenoidalGaussian => T::zero(),
            FamilyKind::PotentialGaussian => T::one(),
            FamilyKind::Mixture => {
                if mix_weight < T::zero() || mix_weight > T::one() {
                    return Err(Error::Parameter(format!(
                        "mix_weight must lie in [0, 1], got {mix_weight:?}"
                    )));
                }
                mix_weight
            }
        };
        Ok(Self {
            kind,
            length_scale,
            mix_weight: weight,
            dimension,
        })
    }

    pub fn solenoidal(length_scale: T, dimension: usize) -> Result<Self> {
        Self::new(FamilyKind::SolenoidalGaussian, length_scale, T::zero(), dimension)
    }

    pub fn potential(length_scale: T, dimension: usize) -> Result<Self> {
        Self::new(FamilyKind::PotentialGaussian, length_scale, T::one(), dimension)
    }

    pub fn mixture(length_scale: T, mix_weight: T, dimension: usize) -> Result<Self> {
        Self::new(FamilyKind::Mixture, length_scale, mix_weight, dimension)
    }

    /// Correlation functions and their first two radial derivatives.
    ///
    /// At r = 0 this returns (1, 0, -beta_L, 1, 0, -beta_N).
    pub fn eval_correlations(&self, r: T) -> Result<CorrelationValues<T>> {
        if !(r >= T::zero()) {
            return Err(Error::Domain(format!("r must be nonnegative, got {r:?}")));
        }
        let l2 = self.length_scale * self.length_scale;
        let s = r * r / l2;
        let e = (-s / T::of(2.0)).exp();

        // Stream-function component: value, d1, d2 of exp(-r^2/2l^2).
        let g0 = e;
        let g1 = -(r / l2) * e;
        let g2 = (s - T::one()) / l2 * e;

        // Gradient component: value, d1, d2 of (1 - s) exp(-r^2/2l^2).
        let h0 = (T::one() - s) * e;
        let h1 = -(r / l2) * (T::of(3.0) - s) * e;
        let h2 = (-T::of(3.0) + T::of(6.0) * s - s * s) / l2 * e;

        // mix_weight is the weight of the potential component, which has
        // the longitudinal/normal roles swapped relative to the solenoidal.
        let a = self.mix_weight;
        let one_m_a = T::one() - a;
        Ok(CorrelationValues {
            b_l: one_m_a * g0 + a * h0,
            b_l_d1: one_m_a * g1 + a * h1,
            b_l_d2: one_m_a * g2 + a * h2,
            b_n: one_m_a * h0 + a * g0,
            b_n_d1: one_m_a * h1 + a * g1,
            b_n_d2: one_m_a * h2 + a * g2,
        })
    }

    /// -B_L''(0), analytic.
    pub fn beta_l(&self) -> T {
        let l2 = self.length_scale * self.length_scale;
        let a = self.mix_weight;
        ((T::one() - a) + a * T::of(3.0)) / l2
    }

    /// -B_N''(0), analytic.
    pub fn beta_n(&self) -> T {
        let l2 = self.length_scale * self.length_scale;
        let a = self.mix_weight;
        ((T::one() - a) * T::of(3.0) + a) / l2
    }

    /// The isotropic covariance tensor at a point.
    pub fn eval_tensor(&self, x: &[T]) -> TensorValue<T> {
        let d = self.dimension;
        assert_eq!(x.len(), d, "point dimension mismatch");
        let r2: T = x.iter().map(|&v| v * v).sum();
        let mut entries = vec![T::zero(); d * d];
        if r2 == T::zero() {
            for i in 0..d {
                entries[i * d + i] = T::one();
            }
            return TensorValue { dimension: d, entries };
        }
        let r = r2.sqrt();
        let c = self.eval_correlations(r).expect("r >= 0 by construction");
        let aniso = (c.b_l - c.b_n) / r2;
        for i in 0..d {
            for j in 0..d {
                let mut v = aniso * x[i] * x[j];
                if i == j {
                    v = v + c.b_n;
                }
                entries[i * d + j] = v;
            }
        }
        TensorValue { dimension: d, entries }
    }

    /// Analytic spectra of `b(z)` and of the two-point block matrix.
    ///
    /// At z = 0 both correlation values are 1, so the formula degenerates
    /// gracefully to the identity spectrum.
    pub fn spectrum_report(&self, z: &[T]) -> SpectrumReport<T> {
        let d = self.dimension;
        let r: T = z.iter().map(|&v| v * v).sum::<T>().sqrt();
        let c = self.eval_correlations(r).expect("r >= 0 by construction");
        SpectrumReport {
            point: z.to_vec(),
            eigenvalues_b: vec![(c.b_l, 1), (c.b_n, d - 1)],
            eigenvalues_bbar: vec![
                (T::one() + c.b_l, 1),
                (T::one() - c.b_l, 1),
                (T::one() + c.b_n, d - 1),
                (T::one() - c.b_n, d - 1),
            ],
        }
    }

    /// Lyapunov exponents mu_i = (1/2) [(d - i) beta_N - i beta_L].
    pub fn lyapunov_exponents(&self) -> LyapunovSpectrum<T> {
        let d = self.dimension;
        let beta_l = self.beta_l();
        let beta_n = self.beta_n();
        let mu: Vec<T> = (1..=d)
            .map(|i| {
                (T::of((d - i) as f64) * beta_n - T::of(i as f64) * beta_l) / T::of(2.0)
            })
            .collect();
        let mu1_positive = mu[0] > T::zero();
        LyapunovSpectrum {
            mu,
            beta_l,
            beta_n,
            mu1_positive,
        }
    }

    /// Normalized Taylor remainder of the correlation functions at r.
    ///
    /// `max(|1 - B_L - beta_L r^2 / 2|, |1 - B_N - beta_N r^2 / 2|) / r^3`,
    /// computed with `exp_m1` so the leading-order cancellation is exact.
    pub fn taylor_remainder(&self, r: T) -> T {
        let l2 = self.length_scale * self.length_scale;
        let s = r * r / l2;
        let u = s / T::of(2.0);
        let e = (-u).exp();
        // 1 - E and 1 - (1 - s) E without cancellation:
        let one_m_g = -(-u).exp_m1();
        let one_m_h = one_m_g + s * e;
        let a = self.mix_weight;
        let one_m_bl = (T::one() - a) * one_m_g + a * one_m_h;
        let one_m_bn = (T::one() - a) * one_m_h + a * one_m_g;
        let rem_l = (one_m_bl - self.beta_l() * r * r / T::of(2.0)).abs();
        let rem_n = (one_m_bn - self.beta_n() * r * r / T::of(2.0)).abs();
        rem_l.max(rem_n) / (r * r * r)
    }

    /// Largest grid radius below which the normalized Taylor remainder
    /// stays under `eps`, scanned over 10^4 points on (0, 5 l].
    pub fn taylor_radius(&self, eps: T) -> Result<T> {
        if !(eps > T::zero()) {
            return Err(Error::Parameter(format!("eps must be positive, got {eps:?}")));
        }
        const GRID: usize = 10_000;
        let upper = self.length_scale * T::of(5.0);
        let step = upper / T::of(GRID as f64);
        let mut last_ok = step;
        for k in 1..=GRID {
            let r = step * T::of(k as f64);
            if self.taylor_remainder(r) >= eps {
                return Ok(last_ok);
            }
            last_ok = r;
        }
        Ok(upper)
    }
}

/// The 2d x 2d two-point diffusion matrix with identity diagonal blocks
/// and `b(x - y)` off-diagonal blocks.
pub fn two_point_matrix(
    family: &CorrelationFamily<f64>,
    x: &[f64],
    y: &[f64],
) -> DMatrix<f64> {
    let d = family.dimension;
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let b = family.eval_tensor(&diff);
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        m[(i, i)] = 1.0;
        m[(d + i, d + i)] = 1.0;
        for j in 0..d {
            m[(i, d + j)] = b.get(i, j);
            m[(d + i, j)] = b.get(i, j);
        }
    }
    m
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub min_eigenvalues: Vec<f64>,
    pub passed: bool,
    /// Index of the first point set violating the PSD tolerance, if any.
    pub failing_set: Option<usize>,
}

/// Spot-check positive semidefiniteness of the full block covariance over
/// each point set (at most 64 points per set).
pub fn validate_family(
    family: &CorrelationFamily<f64>,
    sample_points: &[Vec<Vec<f64>>],
    tol: f64,
) -> Result<ValidationReport> {
    let d = family.dimension;
    let mut min_eigenvalues = Vec::with_capacity(sample_points.len());
    let mut failing_set = None;
    for (set_idx, points) in sample_points.iter().enumerate() {
        if points.len() > 64 {
            return Err(Error::Precondition(format!(
                "point set {set_idx} has {} points, limit is 64",
                points.len()
            )));
        }
        let n = points.len();
        let mut sigma = DMatrix::zeros(n * d, n * d);
        for l in 0..n {
            for m in 0..n {
                let diff: Vec<f64> = points[l].iter().zip(&points[m]).map(|(a, b)| a - b).collect();
                let b = family.eval_tensor(&diff);
                for i in 0..d {
                    for j in 0..d {
                        sigma[(l * d + i, m * d + j)] = b.get(i, j);
                    }
                }
            }
        }
        let min_eig = sigma
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -tol && failing_set.is_none() {
            failing_set = Some(set_idx);
        }
        min_eigenvalues.push(min_eig);
    }
    Ok(ValidationReport {
        passed: failing_set.is_none(),
        min_eigenvalues,
        failing_set,
    })
}
