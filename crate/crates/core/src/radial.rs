//! The scalar separation diffusion and the explicit piecewise Lyapunov
//! function built on top of it.
//!
//! The distance between two points carried by the flow is itself a
//! diffusion: d rho = (d-1)(1 - B_N(rho))/rho dt + sqrt(2(1 - B_L(rho))) dW.
//! When the top stability exponent is positive, a strictly increasing C^2
//! function f (log / sqrt-plus-bridge / linear) turns f(rho_t) into a
//! submartingale with a uniform drift floor. Construction and evaluation
//! are exact per branch; Monte Carlo only enters the submartingale check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::covariance::CorrelationFamily;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::seed::derive_labeled_seed;

/// State floor for the simulated separation. The true process never
/// reaches 0 from a positive start; the floor only guards against
/// discrete-step sign flips.
pub const RADIAL_FLOOR: f64 = 1e-12;

pub struct RadialCoefficients {
    pub drift: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub diffusion: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

pub fn radial_coefficients(family: &CorrelationFamily<f64>, d: usize) -> Result<RadialCoefficients> {
    if d < 2 {
        return Err(Error::Precondition("radial process needs d >= 2".into()));
    }
    let fam_drift = *family;
    let fam_diff = *family;
    let drift = move |r: f64| {
        if r <= 0.0 {
            return 0.0;
        }
        let c = fam_drift.eval_correlations(r).expect("r > 0");
        (d - 1) as f64 * (1.0 - c.b_n) / r
    };
    let diffusion = move |r: f64| {
        if r <= 0.0 {
            return 0.0;
        }
        let c = fam_diff.eval_correlations(r).expect("r > 0");
        (2.0 * (1.0 - c.b_l)).max(0.0).sqrt()
    };
    Ok(RadialCoefficients {
        drift: Box::new(drift),
        diffusion: Box::new(diffusion),
    })
}

/// Euler-Maruyama path of the separation, floored at RADIAL_FLOOR.
/// Returns the full path including the initial state.
pub fn simulate_radial(
    coeffs: &RadialCoefficients,
    r0: f64,
    horizon: f64,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if !(r0 > 0.0) {
        return Err(Error::Precondition("initial separation must be positive".into()));
    }
    let steps = (horizon / dt).round() as usize;
    let mut path = Vec::with_capacity(steps + 1);
    let mut r = r0;
    path.push(r);
    let sqrt_dt = dt.sqrt();
    for _ in 0..steps {
        let xi: f64 = StandardNormal.sample(rng);
        r += (coeffs.drift)(r) * dt + (coeffs.diffusion)(r) * sqrt_dt * xi;
        r = r.max(RADIAL_FLOOR);
        path.push(r);
    }
    Ok(path)
}

/// Decreasing C^2 bridge on [c8, c9] with prescribed endpoint second
/// derivatives, zero endpoint slopes, and |h'| capped by delta_cap.
///
/// The second derivative ramps linearly from c10 to 0 on [c8, c8e], stays
/// 0 on the middle plateau, and ramps from 0 to c11 on [c9e, c9]; h' and
/// h are its exact antiderivatives.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BridgeH<T> {
    pub c8: T,
    pub c9: T,
    pub c10: T,
    pub c11: T,
    pub delta_cap: T,
    pub eps_h: T,
    pub c8e: T,
    pub c9e: T,
    // exact ramp widths; recovering them as c8 - c8e / c9 - c9e loses
    // several digits to cancellation because the ramps are ~1e-7 wide
    // on knots of size ~1e-2
    w8: T,
    w9: T,
    h_at_c8e: T,
    h_at_c9e: T,
}

pub fn build_bridge_h<T: Real>(c8: T, c9: T, c10: T, c11: T, delta_cap: T) -> Result<BridgeH<T>> {
    let zero = T::zero();
    if !(zero < c8 && c8 < c9) {
        return Err(Error::Parameter("bridge needs 0 < c8 < c9".into()));
    }
    if !(c10 < zero && zero < c11) {
        return Err(Error::Parameter("bridge needs c10 < 0 < c11".into()));
    }
    if !(delta_cap > zero) {
        return Err(Error::Parameter("bridge needs delta_cap > 0".into()));
    }
    let span = c9 - c8;
    // The ramp construction works for eps below half the smaller endpoint
    // curvature; the cap on |h'| additionally needs eps <= delta_cap/span.
    let eps_h = (T::of(0.49) * c11.min(-c10)).min(delta_cap / span);
    let w8 = -T::of(2.0) * eps_h * span / c10;
    let w9 = T::of(2.0) * eps_h * span / c11;
    let c8e = c8 + w8;
    let c9e = c9 - w9;
    let mut bridge = BridgeH {
        c8,
        c9,
        c10,
        c11,
        delta_cap,
        eps_h,
        c8e,
        c9e,
        w8,
        w9,
        h_at_c8e: zero,
        h_at_c9e: zero,
    };
    bridge.h_at_c8e = bridge.h_left(c8e);
    bridge.h_at_c9e = bridge.h_at_c8e - eps_h * span * (c9e - c8e);
    Ok(bridge)
}

impl<T: Real> BridgeH<T> {
    pub fn h_dd(&self, r: T) -> T {
        let span = self.c9 - self.c8;
        let denom = T::of(2.0) * self.eps_h * span;
        if r <= self.c8e {
            ((r - self.c8) - self.w8) * self.c10 * self.c10 / denom
        } else if r < self.c9e {
            T::zero()
        } else {
            ((r - self.c9) + self.w9) * self.c11 * self.c11 / denom
        }
    }

    pub fn h_d(&self, r: T) -> T {
        let span = self.c9 - self.c8;
        let denom = T::of(4.0) * self.eps_h * span;
        if r <= self.c8e {
            let a = (r - self.c8) - self.w8;
            let b = self.w8;
            (a * a - b * b) * self.c10 * self.c10 / denom
        } else if r < self.c9e {
            -self.eps_h * span
        } else {
            let a = (r - self.c9) + self.w9;
            a * a * self.c11 * self.c11 / denom - self.eps_h * span
        }
    }

    fn h_left(&self, r: T) -> T {
        // integral of h_d over [c8, r] for r in the left ramp
        let span = self.c9 - self.c8;
        let denom = T::of(4.0) * self.eps_h * span;
        let b = -self.w8;
        let a = (r - self.c8) - self.w8;
        let three = T::of(3.0);
        ((a * a * a - b * b * b) / three - b * b * (r - self.c8)) * self.c10 * self.c10 / denom
    }

    pub fn h(&self, r: T) -> T {
        let span = self.c9 - self.c8;
        if r <= self.c8e {
            self.h_left(r)
        } else if r < self.c9e {
            self.h_at_c8e - self.eps_h * span * (r - self.c8e)
        } else {
            let denom = T::of(4.0) * self.eps_h * span;
            let a = (r - self.c9) + self.w9;
            self.h_at_c9e - self.eps_h * span * a
                + a * a * a / T::of(3.0) * self.c11 * self.c11 / denom
        }
    }
}

/// Strictly increasing C^2 function: log below c8, sqrt plus bridge on
/// [c8, c9], linear above c9, shifted so f(1) = 0.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PiecewiseLyapunov<T> {
    pub family: CorrelationFamily<T>,
    pub dimension: usize,
    pub eps: T,
    pub r_eps: T,
    pub delta: T,
    pub c1: T,
    pub c2: T,
    pub c3: T,
    pub c4: T,
    pub c5: T,
    pub c8: T,
    pub c9: T,
    pub c10: T,
    pub c11: T,
    pub bridge: BridgeH<T>,
    /// Guaranteed lower bound for the drift functional g.
    pub g_floor: T,
}

pub fn build_lyapunov_f<T: Real>(
    family: &CorrelationFamily<T>,
    d: usize,
) -> Result<PiecewiseLyapunov<T>> {
    if d < 2 {
        return Err(Error::Precondition("construction needs d >= 2".into()));
    }
    let beta_l = family.beta_l();
    let beta_n = family.beta_n();
    let dm1 = T::of((d - 1) as f64);
    let gap = beta_n * dm1 - beta_l;
    if !(gap > T::zero()) {
        return Err(Error::Precondition(
            "construction requires a positive top stability exponent (beta_n (d-1) > beta_l)"
                .into(),
        ));
    }
    let ratio = beta_n * dm1 / beta_l;
    let one = T::one();
    let third = one / T::of(3.0);
    let c24 = T::of(1.0 / 24.0);
    // The last two terms differ only in the exponent applied to the same
    // ratio; both are kept as stated and the min does the work.
    let eps = one
        .min(T::of(1.0 / 8.0) * gap / dm1)
        .min(c24 * gap * ratio.recip().powf(third))
        .min(c24 * gap * ratio.powf(-T::of(4.0) * third));
    let r_eps = family.taylor_radius(eps)?;
    let c9 = r_eps.min(one);
    let c8 = c9 * ratio.powf(-T::of(2.0) / T::of(3.0));
    // sup over the verification grid of (1 - B_N(r)) / c8
    let grid_hi = T::of(10.0) * c9.max(one);
    let mut sup_one_minus_bn = T::zero();
    let n_grid = 10_000;
    for k in 1..=n_grid {
        let r = grid_hi * T::of(k as f64 / n_grid as f64);
        let c = family.eval_correlations(r)?;
        sup_one_minus_bn = sup_one_minus_bn.max(one - c.b_n);
    }
    let delta = c24 * gap * (sup_one_minus_bn / c8).recip() / dm1;
    let two = T::of(2.0);
    let c10 = -(two * c8 * c8).recip();
    let c11 = (two * c9 * (c8 * c9).sqrt()).recip();
    let bridge = build_bridge_h(c8, c9, c10, c11, delta)?;
    let c3 = two / c8.sqrt();
    let c2 = two - c8.ln();
    let c4 = (c8 * c9).sqrt().recip();
    let c5 = (c9 / c8).sqrt() + bridge.h(c9);
    let c1 = -c4 - c5;
    Ok(PiecewiseLyapunov {
        family: *family,
        dimension: d,
        eps,
        r_eps,
        delta,
        c1,
        c2,
        c3,
        c4,
        c5,
        c8,
        c9,
        c10,
        c11,
        bridge,
        g_floor: T::of(1.0 / 8.0) * gap,
    })
}

impl<T: Real> PiecewiseLyapunov<T> {
    pub fn value(&self, r: T) -> T {
        let base = if r < self.c8 {
            r.ln() + self.c2
        } else if r <= self.c9 {
            self.c3 * r.sqrt() + self.bridge.h(r)
        } else {
            self.c4 * r + self.c5
        };
        base + self.c1
    }

    pub fn d1(&self, r: T) -> T {
        if r < self.c8 {
            r.recip()
        } else if r <= self.c9 {
            (self.c8 * r).sqrt().recip() + self.bridge.h_d(r)
        } else {
            self.c4
        }
    }

    pub fn d2(&self, r: T) -> T {
        if r < self.c8 {
            -(r * r).recip()
        } else if r <= self.c9 {
            -(T::of(2.0) * r * (self.c8 * r).sqrt()).recip() + self.bridge.h_dd(r)
        } else {
            T::zero()
        }
    }
}

/// Drift functional of the transformed separation:
/// g(r) = f'(r) (d-1)(1 - B_N(r))/r + f''(r)(1 - B_L(r)).
pub fn eval_g<T: Real>(f: &PiecewiseLyapunov<T>, r: T) -> Result<T> {
    if !(r > T::zero()) {
        return Err(Error::Precondition("g is defined for r > 0".into()));
    }
    let c = f.family.eval_correlations(r)?;
    let dm1 = T::of((f.dimension - 1) as f64);
    Ok(f.d1(r) * dm1 * (T::one() - c.b_n) / r + f.d2(r) * (T::one() - c.b_l))
}

/// Diffusion functional: g~(r) = f'(r) sqrt(2(1 - B_L(r))).
pub fn eval_gtilde<T: Real>(f: &PiecewiseLyapunov<T>, r: T) -> Result<T> {
    if !(r > T::zero()) {
        return Err(Error::Precondition("g~ is defined for r > 0".into()));
    }
    let c = f.family.eval_correlations(r)?;
    Ok(f.d1(r) * (T::of(2.0) * (T::one() - c.b_l)).max(T::zero()).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct SubmartingaleEntry {
    pub r0: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubmartingaleReport {
    pub horizon: f64,
    pub dt: f64,
    pub replicas: usize,
    pub entries: Vec<SubmartingaleEntry>,
    pub passed: bool,
}

/// Monte Carlo check that E[f(rho_horizon)] >= f(r0) for each start:
/// the estimate of the gap must clear -2 standard errors.
pub fn submartingale_check(
    f: &PiecewiseLyapunov<f64>,
    r0_grid: &[f64],
    horizon: f64,
    dt: f64,
    replicas: usize,
    master_seed: u64,
) -> Result<SubmartingaleReport> {
    let coeffs = radial_coefficients(&f.family, f.dimension)?;
    let mut entries = Vec::with_capacity(r0_grid.len());
    for (gi, &r0) in r0_grid.iter().enumerate() {
        if replicas == 0 {
            continue;
        }
        let f0 = f.value(r0);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for rep in 0..replicas {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_labeled_seed(
                master_seed,
                rep as u64,
                gi as u64,
            ));
            let path = simulate_radial(&coeffs, r0, horizon, dt, &mut rng)?;
            let gain = f.value(*path.last().expect("path nonempty")) - f0;
            sum += gain;
            sum_sq += gain * gain;
        }
        let n = replicas as f64;
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
        let se = (var / n).sqrt();
        entries.push(SubmartingaleEntry {
            r0,
            estimate: mean,
            std_error: se,
            passed: mean >= -2.0 * se,
        });
    }
    let passed = !entries.is_empty() && entries.iter().all(|e| e.passed);
    Ok(SubmartingaleReport {
        horizon,
        dt,
        replicas,
        entries,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sol() -> CorrelationFamily<f64> {
        CorrelationFamily::solenoidal(1.0, 2).unwrap()
    }

    #[test]
    fn coefficients_at_unit_separation() {
        let coeffs = radial_coefficients(&sol(), 2).unwrap();
        // B_N(1) = 0 and B_L(1) = e^{-1/2} for this family
        assert_abs_diff_eq!((coeffs.drift)(1.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!((coeffs.diffusion)(1.0), 0.887095, epsilon = 1e-6);
    }

    #[test]
    fn coefficients_limits() {
        let coeffs = radial_coefficients(&sol(), 2).unwrap();
        assert_eq!((coeffs.drift)(0.0), 0.0);
        assert_eq!((coeffs.diffusion)(0.0), 0.0);
        assert!((coeffs.drift)(1e-6) < 1e-5);
        assert_abs_diff_eq!((coeffs.drift)(20.0), 1.0 / 20.0, epsilon = 1e-6);
        assert_abs_diff_eq!((coeffs.diffusion)(20.0), 2.0f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn rejects_dimension_one() {
        assert!(radial_coefficients(&sol(), 1).is_err());
    }

    #[test]
    fn degenerate_coefficients_give_constant_path() {
        let coeffs = RadialCoefficients {
            drift: Box::new(|_| 0.0),
            diffusion: Box::new(|_| 0.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let path = simulate_radial(&coeffs, 0.7, 1.0, 0.01, &mut rng).unwrap();
        assert_eq!(path.len(), 101);
        assert!(path.iter().all(|&r| r == 0.7));
    }

    #[test]
    fn floor_prevents_negative_state() {
        let coeffs = RadialCoefficients {
            drift: Box::new(|_| -1e6),
            diffusion: Box::new(|_| 0.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let path = simulate_radial(&coeffs, 1.0, 1.0, 0.01, &mut rng).unwrap();
        assert_eq!(*path.last().unwrap(), RADIAL_FLOOR);
        assert!(path.iter().all(|&r| r > 0.0));
    }

    #[test]
    fn separation_grows_in_the_expansive_regime() {
        let coeffs = radial_coefficients(&sol(), 2).unwrap();
        let mut sum = 0.0;
        let replicas = 1000;
        for rep in 0..replicas {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_labeled_seed(77, rep, 0));
            let path = simulate_radial(&coeffs, 0.1, 5.0, 0.01, &mut rng).unwrap();
            sum += path.last().unwrap();
        }
        let mean = sum / replicas as f64;
        assert!(mean > 0.1, "mean terminal separation {mean} did not grow");
    }

    #[test]
    fn bridge_endpoint_conditions_exact() {
        let b = build_bridge_h(0.5, 2.0, -3.0, 1.5, 0.2).unwrap();
        assert_eq!(b.h(0.5), 0.0);
        assert_eq!(b.h_d(0.5), 0.0);
        assert_abs_diff_eq!(b.h_d(2.0), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b.h_dd(0.5), -3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.h_dd(2.0), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn bridge_monotonicity_and_slope_cap() {
        let b = build_bridge_h(0.5, 2.0, -3.0, 1.5, 0.2).unwrap();
        let n = 1000;
        let mut prev_h = f64::INFINITY;
        let mut prev_hdd = f64::NEG_INFINITY;
        for k in 0..=n {
            let r = 0.5 + 1.5 * k as f64 / n as f64;
            let h = b.h(r);
            assert!(h <= prev_h + 1e-12, "h not decreasing at r = {r}");
            prev_h = h;
            let hdd = b.h_dd(r);
            assert!(hdd >= prev_hdd - 1e-12, "h'' not increasing at r = {r}");
            prev_hdd = hdd;
            assert!(b.h_d(r).abs() <= 0.2 + 1e-12, "slope cap violated at r = {r}");
        }
    }

    #[test]
    fn bridge_derivatives_are_consistent() {
        let b = build_bridge_h(0.3, 1.1, -10.0, 4.0, 0.05).unwrap();
        let dr = 1e-6;
        for k in 1..200 {
            let r = 0.3 + 0.8 * k as f64 / 200.0;
            let num_d = (b.h(r + dr) - b.h(r - dr)) / (2.0 * dr);
            assert_abs_diff_eq!(num_d, b.h_d(r), epsilon = 1e-6);
            let num_dd = (b.h_d(r + dr) - b.h_d(r - dr)) / (2.0 * dr);
            assert_abs_diff_eq!(num_dd, b.h_dd(r), epsilon = 1e-4);
        }
    }

    #[test]
    fn bridge_rejects_bad_parameters() {
        assert!(build_bridge_h(2.0, 0.5, -1.0, 1.0, 0.1).is_err());
        assert!(build_bridge_h(0.5, 2.0, 1.0, 1.0, 0.1).is_err());
        assert!(build_bridge_h(0.5, 2.0, -1.0, -1.0, 0.1).is_err());
        assert!(build_bridge_h(0.5, 2.0, -1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn f_vanishes_at_one() {
        let f = build_lyapunov_f(&sol(), 2).unwrap();
        assert_abs_diff_eq!(f.value(1.0), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn f_is_c2_at_branch_points() {
        let f = build_lyapunov_f(&sol(), 2).unwrap();
        // evaluate the adjacent branch formulas exactly at the branch points
        let log_branch = |r: f64| (r.ln() + f.c2, 1.0 / r, -1.0 / (r * r));
        let mid_branch = |r: f64| {
            (
                f.c3 * r.sqrt() + f.bridge.h(r),
                1.0 / (f.c8 * r).sqrt() + f.bridge.h_d(r),
                -1.0 / (2.0 * r * (f.c8 * r).sqrt()) + f.bridge.h_dd(r),
            )
        };
        let lin_branch = |r: f64| (f.c4 * r + f.c5, f.c4, 0.0);
        for (c, left, right) in [
            (f.c8, log_branch(f.c8), mid_branch(f.c8)),
            (f.c9, mid_branch(f.c9), lin_branch(f.c9)),
        ] {
            assert_abs_diff_eq!(left.0, right.0, epsilon = 1e-8);
            assert_abs_diff_eq!(left.1, right.1, epsilon = 1e-8);
            let scale = left.2.abs().max(right.2.abs()).max(1.0);
            assert!(
                ((left.2 - right.2) / scale).abs() < 1e-8,
                "f'' mismatch at {c}: {} vs {}",
                left.2,
                right.2
            );
        }
        // the algebraic identities behind the matching
        assert_abs_diff_eq!(-1.0 / (f.c8 * f.c8), -1.0 / (2.0 * f.c8 * f.c8) + f.c10, epsilon = 1e-10);
        assert_abs_diff_eq!(
            -f.c3 / (4.0 * f.c9.powf(1.5)) + f.c11,
            0.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn f_is_strictly_increasing_and_spans() {
        let f = build_lyapunov_f(&sol(), 2).unwrap();
        let hi = 10.0 * f.c9.max(1.0);
        let n = 10_000;
        for k in 1..=n {
            let r = 1e-4 + (hi - 1e-4) * k as f64 / n as f64;
            assert!(f.d1(r) > 0.0, "f' not positive at r = {r}");
        }
        assert!(f.value(1e-9) < -10.0);
        assert!(f.value(1e6) > 10.0);
    }

    #[test]
    fn g_respects_the_drift_floor() {
        let f = build_lyapunov_f(&sol(), 2).unwrap();
        let floor = f.g_floor;
        assert_abs_diff_eq!(floor, 0.25, epsilon = 1e-12); // (3 - 1)/8 here
        let hi = 10.0 * f.c9.max(1.0);
        let n = 10_000;
        for k in 1..=n {
            let r = 1e-4 + (hi - 1e-4) * k as f64 / n as f64;
            let g = eval_g(&f, r).unwrap();
            assert!(
                g - floor >= -1e-12,
                "g = {g} below floor {floor} at r = {r}"
            );
        }
    }

    #[test]
    fn g_positive_beyond_c9() {
        let f = build_lyapunov_f(&sol(), 2).unwrap();
        for r in [f.c9 * 1.01, 1.0, 5.0, 50.0] {
            assert!(eval_g(&f, r).unwrap() > 0.0);
            assert_eq!(f.d2(r), 0.0);
        }
    }

    #[test]
    fn gtilde_is_bounded_by_the_stated_constant() {
        let f = build_lyapunov_f(&sol(), 2).unwrap();
        let beta_l = f.family.beta_l();
        let sup_sigma = 2.0f64.sqrt(); // sqrt(2(1 - B_L)) <= sqrt(2) for this family
        let bound = beta_l.sqrt() + 2.0f64.sqrt() + f.d1(f.c8).abs() * sup_sigma;
        let hi = 10.0 * f.c9.max(1.0);
        let n = 10_000;
        for k in 1..=n {
            let r = 1e-4 + (hi - 1e-4) * k as f64 / n as f64;
            let gt = eval_gtilde(&f, r).unwrap().abs();
            assert!(gt <= bound, "|g~| = {gt} exceeds {bound} at r = {r}");
        }
    }

    #[test]
    fn construction_rejects_contractive_families() {
        let pot = CorrelationFamily::potential(1.0, 2).unwrap();
        assert!(build_lyapunov_f(&pot, 2).is_err());
    }

    #[test]
    fn bridge_slope_cap_uses_delta() {
        let f = build_lyapunov_f(&sol(), 2).unwrap();
        let n = 1000;
        for k in 0..=n {
            let r = f.c8 + (f.c9 - f.c8) * k as f64 / n as f64;
            assert!(f.bridge.h_d(r).abs() <= f.delta + 1e-15);
        }
    }

    #[test]
    fn generic_construction_works_in_single_precision() {
        let fam = CorrelationFamily::<f32>::solenoidal(1.0f32, 2).unwrap();
        let f = build_lyapunov_f(&fam, 2).unwrap();
        assert!(f.value(1.0).abs() < 1e-4);
        assert!(f.c8 > 0.0 && f.c8 < f.c9);
    }

    #[test]
    fn submartingale_gap_is_nonnegative() {
        let f = build_lyapunov_f(&sol(), 2).unwrap();
        let report = submartingale_check(&f, &[0.5, 1.0], 1.0, 0.01, 200, 31).unwrap();
        assert!(report.passed, "report: {report:?}");
        // starting at separation 1 the gain should be clearly positive
        let at_one = &report.entries[1];
        assert!(at_one.estimate > 0.0);
    }

    #[test]
    fn submartingale_empty_replicas_gives_no_verdict() {
        let f = build_lyapunov_f(&sol(), 2).unwrap();
        let report = submartingale_check(&f, &[0.5], 1.0, 0.01, 0, 31).unwrap();
        assert!(report.entries.is_empty());
        assert!(!report.passed);
    }

    #[test]
    fn lyapunov_serializes() {
        let f = build_lyapunov_f(&sol(), 2).unwrap();
        let json = serde_json::to_string(&f).unwrap();
        assert!(json.contains("\"c8\""));
        assert!(json.contains("solenoidal-gaussian"));
    }
}
