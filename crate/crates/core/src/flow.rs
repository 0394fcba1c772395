//! Monte Carlo integrator for the n-point motion of the flow.
//!
//! Over one step the joint increment of the tracked points is exactly
//! Gaussian with covariance `dt * Sigma`, where `Sigma` has d x d blocks
//! `b(x_l - x_m)`. The engine reassembles and factorizes `Sigma` every
//! step, so the only discretization error is freezing positions within a
//! step. The plane is hard-coded here (d = 2); the analytic layer stays
//! generic.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covariance::CorrelationFamily;
use crate::error::{Error, Result};
use crate::seed::derive_labeled_seed;

pub type Point = [f64; 2];

pub fn dist(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub time: f64,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, time: f64) -> Self {
        assert!(!points.is_empty(), "point cloud must be nonempty");
        Self { points, time }
    }

    pub fn min_dist_to(&self, p: Point) -> f64 {
        self.points
            .iter()
            .map(|&q| dist(q, p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_dist_between(&self, other: &PointCloud) -> f64 {
        let mut best = f64::INFINITY;
        for &a in &self.points {
            for &b in &other.points {
                let d = dist(a, b);
                if d < best {
                    best = d;
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Factorization {
    CholeskyWithJitter,
    EigenvalueClip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepScheme {
    pub dt: f64,
    /// Diagonal regularization added before factorizing.
    pub jitter: f64,
    pub factorization: Factorization,
}

impl StepScheme {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            jitter: 1e-10,
            factorization: Factorization::CholeskyWithJitter,
        }
    }

    /// dt should stay below length_scale^2 / 10 for the frozen-position
    /// approximation to be sound.
    pub fn dt_too_coarse(&self, family: &CorrelationFamily<f64>) -> bool {
        self.dt > family.length_scale * family.length_scale / 10.0
    }
}

/// Adaptive polyline advected by the flow.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveState {
    pub cloud: PointCloud,
    pub closed: bool,
    /// Adjacent tracked points stay within 2 * refine_threshold after
    /// refinement (unless max_points is hit).
    pub refine_threshold: f64,
    pub max_points: usize,
    pub insertion_log: Vec<(f64, usize)>,
    pub capped: bool,
}

impl CurveState {
    pub fn from_polyline(
        points: Vec<Point>,
        closed: bool,
        refine_threshold: f64,
        max_points: usize,
    ) -> Self {
        assert!(refine_threshold > 0.0, "refine_threshold must be positive");
        let mut state = Self {
            cloud: PointCloud::new(points, 0.0),
            closed,
            refine_threshold,
            max_points,
            insertion_log: Vec::new(),
            capped: false,
        };
        state.refine();
        state
    }

    pub fn segment(a: Point, b: Point, refine_threshold: f64, max_points: usize) -> Self {
        Self::from_polyline(vec![a, b], false, refine_threshold, max_points)
    }

    pub fn circle(center: Point, radius: f64, refine_threshold: f64, max_points: usize) -> Self {
        // Start from an octagon; refinement fills in the rest.
        let points = (0..8)
            .map(|k| {
                let theta = std::f64::consts::TAU * k as f64 / 8.0;
                [
                    center[0] + radius * theta.cos(),
                    center[1] + radius * theta.sin(),
                ]
            })
            .collect();
        Self::from_polyline(points, true, refine_threshold, max_points)
    }

    fn edge_count(&self) -> usize {
        let n = self.cloud.points.len();
        if self.closed {
            n
        } else {
            n.saturating_sub(1)
        }
    }

    /// Split every edge longer than 2 * refine_threshold at its midpoint,
    /// repeatedly, until compliant or max_points is reached.
    pub fn refine(&mut self) {
        let limit = 2.0 * self.refine_threshold;
        loop {
            let n = self.cloud.points.len();
            if n >= self.max_points {
                self.capped = self.has_long_edge(limit);
                return;
            }
            let mut next = Vec::with_capacity(n * 2);
            let mut inserted = false;
            let mut hit_cap = false;
            for i in 0..self.edge_count() {
                let a = self.cloud.points[i];
                let b = self.cloud.points[(i + 1) % n];
                next.push(a);
                if dist(a, b) > limit {
                    if n + (next.len() - i) > self.max_points
                        && next.len() + 1 + (n - 1 - i) > self.max_points
                    {
                        hit_cap = true;
                        continue;
                    }
                    next.push([(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]);
                    self.insertion_log.push((self.cloud.time, i));
                    inserted = true;
                }
            }
            if !self.closed {
                next.push(self.cloud.points[n - 1]);
            }
            self.cloud.points = next;
            if hit_cap || self.cloud.points.len() >= self.max_points {
                self.capped = self.has_long_edge(limit);
                return;
            }
            if !inserted {
                self.capped = false;
                return;
            }
        }
    }

    fn has_long_edge(&self, limit: f64) -> bool {
        let n = self.cloud.points.len();
        (0..self.edge_count()).any(|i| {
            dist(self.cloud.points[i], self.cloud.points[(i + 1) % n]) > limit
        })
    }

    pub fn max_edge_length(&self) -> f64 {
        let n = self.cloud.points.len();
        (0..self.edge_count())
            .map(|i| dist(self.cloud.points[i], self.cloud.points[(i + 1) % n]))
            .fold(0.0, f64::max)
    }
}

/// 2x2 covariance block b(x - y), inlined for the per-step assembly.
pub(crate) fn tensor_block(family: &CorrelationFamily<f64>, dx: f64, dy: f64) -> [[f64; 2]; 2] {
    let r2 = dx * dx + dy * dy;
    if r2 == 0.0 {
        return [[1.0, 0.0], [0.0, 1.0]];
    }
    let c = family
        .eval_correlations(r2.sqrt())
        .expect("radius is nonnegative");
    let aniso = (c.b_l - c.b_n) / r2;
    [
        [aniso * dx * dx + c.b_n, aniso * dx * dy],
        [aniso * dx * dy, aniso * dy * dy + c.b_n],
    ]
}

/// Assemble the 2n x 2n joint covariance with blocks b(x_l - x_m).
pub fn joint_covariance(family: &CorrelationFamily<f64>, points: &[Point]) -> DMatrix<f64> {
    let n = points.len();
    let mut sigma = DMatrix::zeros(2 * n, 2 * n);
    for l in 0..n {
        sigma[(2 * l, 2 * l)] = 1.0;
        sigma[(2 * l + 1, 2 * l + 1)] = 1.0;
        for m in (l + 1)..n {
            let b = tensor_block(
                family,
                points[l][0] - points[m][0],
                points[l][1] - points[m][1],
            );
            for i in 0..2 {
                for j in 0..2 {
                    sigma[(2 * l + i, 2 * m + j)] = b[i][j];
                    sigma[(2 * m + j, 2 * l + i)] = b[i][j];
                }
            }
        }
    }
    sigma
}

fn factorize(sigma: &DMatrix<f64>, scheme: &StepScheme) -> Result<DMatrix<f64>> {
    match scheme.factorization {
        Factorization::CholeskyWithJitter => {
            let mut jitter = scheme.jitter;
            for _ in 0..4 {
                let mut m = sigma.clone();
                for i in 0..m.nrows() {
                    m[(i, i)] += jitter;
                }
                if let Some(chol) = m.cholesky() {
                    return Ok(chol.unpack());
                }
                jitter *= 10.0;
            }
            let min_eig = sigma
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            Err(Error::Numerical(format!(
                "covariance factorization failed after jitter escalation; minimum eigenvalue {min_eig:.3e}"
            )))
        }
        Factorization::EigenvalueClip => {
            let eig = sigma.clone().symmetric_eigen();
            let mut q = eig.eigenvectors;
            for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
                let s = lambda.max(0.0).sqrt();
                for i in 0..q.nrows() {
                    q[(i, j)] *= s;
                }
            }
            Ok(q)
        }
    }
}

/// One joint Gaussian increment for the cloud: mean zero, covariance
/// dt * Sigma, deterministic given the rng state.
pub fn sample_increment(
    family: &CorrelationFamily<f64>,
    cloud: &PointCloud,
    scheme: &StepScheme,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Point>> {
    assert_eq!(family.dimension, 2, "flow engine is planar");
    let n = cloud.points.len();
    let sigma = joint_covariance(family, &cloud.points);
    let factor = factorize(&sigma, scheme)?;
    let sqrt_dt = scheme.dt.sqrt();
    let xi: Vec<f64> = (0..2 * n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut out = vec![[0.0; 2]; n];
    for row in 0..2 * n {
        let mut acc = 0.0;
        for col in 0..2 * n {
            acc += factor[(row, col)] * xi[col];
        }
        out[row / 2][row % 2] = acc * sqrt_dt;
    }
    Ok(out)
}

/// Advance every point of the cloud by one Euler-Maruyama step.
pub fn step_points(
    family: &CorrelationFamily<f64>,
    cloud: &PointCloud,
    scheme: &StepScheme,
    rng: &mut ChaCha8Rng,
) -> Result<PointCloud> {
    let inc = sample_increment(family, cloud, scheme, rng)?;
    let points = cloud
        .points
        .iter()
        .zip(&inc)
        .map(|(p, d)| [p[0] + d[0], p[1] + d[1]])
        .collect();
    Ok(PointCloud {
        points,
        time: cloud.time + scheme.dt,
    })
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<PointCloud>,
    pub closed: bool,
    /// Set when refinement ran out of points at some step.
    pub capped: bool,
    pub insertion_log: Vec<(f64, usize)>,
}

/// Advect a curve to the horizon, refining after every step and taking a
/// snapshot every `snapshot_stride` steps (the initial and final states
/// are always included).
pub fn simulate_curve(
    family: &CorrelationFamily<f64>,
    curve: &CurveState,
    horizon: f64,
    scheme: &StepScheme,
    rng: &mut ChaCha8Rng,
    snapshot_stride: usize,
) -> Result<Trajectory> {
    assert!(horizon >= 0.0, "horizon must be nonnegative");
    let stride = snapshot_stride.max(1);
    let mut state = curve.clone();
    let mut snapshots = vec![state.cloud.clone()];
    let mut capped = state.capped;
    let steps = (horizon / scheme.dt).round() as usize;
    for step in 1..=steps {
        state.cloud = step_points(family, &state.cloud, scheme, rng)?;
        state.refine();
        capped |= state.capped;
        if step % stride == 0 || step == steps {
            snapshots.push(state.cloud.clone());
        }
    }
    Ok(Trajectory {
        snapshots,
        closed: state.closed,
        capped,
        insertion_log: state.insertion_log,
    })
}

/// Maximum pairwise distance, via convex hull and brute force on the hull.
pub fn diameter(cloud: &PointCloud) -> f64 {
    let hull = convex_hull(&cloud.points);
    let mut best = 0.0f64;
    for i in 0..hull.len() {
        for j in (i + 1)..hull.len() {
            best = best.max(dist(hull[i], hull[j]));
        }
    }
    best
}

/// Andrew monotone chain; returns the input for degenerate sizes.
fn convex_hull(points: &[Point]) -> Vec<Point> {
    if points.len() <= 3 {
        return points.to_vec();
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() <= 3 {
        return pts;
    }
    let cross = |o: Point, a: Point, b: Point| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let chain = |iter: &mut dyn Iterator<Item = Point>| {
        let mut h: Vec<Point> = Vec::new();
        for p in iter {
            while h.len() >= 2 && cross(h[h.len() - 2], h[h.len() - 1], p) <= 0.0 {
                h.pop();
            }
            h.push(p);
        }
        h
    };
    let mut lower = chain(&mut pts.iter().cloned());
    let mut upper = chain(&mut pts.iter().rev().cloned());
    lower.pop();
    upper.pop();
    lower.append(&mut upper);
    lower
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitEstimate {
    pub t1: f64,
    pub t2: f64,
    pub probability: f64,
    pub std_error: f64,
    pub hits: usize,
    pub replicas: usize,
}

/// Estimate, for each split (t1, t2) of the total time, the probability
/// that the image of `gamma` under one flow run for t1 comes within
/// `contact_radius` of the image of `gamma_bar` under an independent flow
/// run for t2. Common random numbers are shared across splits.
#[allow(clippy::too_many_arguments)]
pub fn split_meeting_probability(
    family: &CorrelationFamily<f64>,
    gamma: &CurveState,
    gamma_bar: &CurveState,
    t_total: f64,
    splits: &[(f64, f64)],
    contact_radius: f64,
    replicas: usize,
    scheme: &StepScheme,
    master_seed: u64,
) -> Result<Vec<SplitEstimate>> {
    if splits.is_empty() {
        return Err(Error::Precondition("splits must be nonempty".into()));
    }
    if !(contact_radius > 0.0) {
        return Err(Error::Precondition("contact radius must be positive".into()));
    }
    for &(t1, t2) in splits {
        if (t1 + t2 - t_total).abs() > 1e-9 || t1 < 0.0 || t2 < 0.0 {
            return Err(Error::Precondition(format!(
                "split ({t1}, {t2}) does not partition t_total = {t_total}"
            )));
        }
    }
    let mut out = Vec::with_capacity(splits.len());
    for &(t1, t2) in splits {
        let mut hits = 0usize;
        for rep in 0..replicas {
            let mut rng_a =
                ChaCha8Rng::seed_from_u64(derive_labeled_seed(master_seed, rep as u64, 0));
            let mut rng_b =
                ChaCha8Rng::seed_from_u64(derive_labeled_seed(master_seed, rep as u64, 1));
            let traj_a = simulate_curve(family, gamma, t1, scheme, &mut rng_a, usize::MAX)?;
            let traj_b = simulate_curve(family, gamma_bar, t2, scheme, &mut rng_b, usize::MAX)?;
            let end_a = traj_a.snapshots.last().expect("trajectory nonempty");
            let end_b = traj_b.snapshots.last().expect("trajectory nonempty");
            if end_a.min_dist_between(end_b) <= contact_radius {
                hits += 1;
            }
        }
        let p = hits as f64 / replicas as f64;
        let se = (p * (1.0 - p) / replicas as f64).sqrt();
        out.push(SplitEstimate {
            t1,
            t2,
            probability: p,
            std_error: se,
            hits,
            replicas,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::derive_seed;
    use approx::assert_abs_diff_eq;

    fn sol() -> CorrelationFamily<f64> {
        CorrelationFamily::solenoidal(1.0, 2).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(1234, seed))
    }

    #[test]
    fn single_point_increment_is_standard_gaussian() {
        let fam = sol();
        let scheme = StepScheme::new(1e-3);
        let cloud = PointCloud::new(vec![[0.0, 0.0]], 0.0);
        let mut r = rng(0);
        let mut sum_sq = [0.0f64; 2];
        let n = 10_000;
        for _ in 0..n {
            let inc = sample_increment(&fam, &cloud, &scheme, &mut r).unwrap();
            sum_sq[0] += inc[0][0] * inc[0][0];
            sum_sq[1] += inc[0][1] * inc[0][1];
        }
        for axis in 0..2 {
            let var = sum_sq[axis] / n as f64;
            assert!(
                (var / scheme.dt - 1.0).abs() < 0.05,
                "axis {axis} variance {var} vs dt {}",
                scheme.dt
            );
        }
    }

    #[test]
    fn coincident_points_get_identical_increments() {
        let fam = sol();
        let scheme = StepScheme::new(1e-2);
        let cloud = PointCloud::new(vec![[1.0, 2.0], [1.0, 2.0]], 0.0);
        let mut r = rng(1);
        for _ in 0..50 {
            let inc = sample_increment(&fam, &cloud, &scheme, &mut r).unwrap();
            // Jitter perturbs the factor at the 1e-5 * sqrt(dt) scale.
            assert_abs_diff_eq!(inc[0][0], inc[1][0], epsilon = 1e-4);
            assert_abs_diff_eq!(inc[0][1], inc[1][1], epsilon = 1e-4);
        }
    }

    #[test]
    fn far_points_get_uncorrelated_increments() {
        let fam = sol();
        let scheme = StepScheme::new(1e-2);
        let cloud = PointCloud::new(vec![[0.0, 0.0], [20.0, 0.0]], 0.0);
        let mut r = rng(2);
        let n = 10_000;
        let mut sum_xy = 0.0;
        let mut sum_xx = 0.0;
        let mut sum_yy = 0.0;
        for _ in 0..n {
            let inc = sample_increment(&fam, &cloud, &scheme, &mut r).unwrap();
            sum_xy += inc[0][0] * inc[1][0];
            sum_xx += inc[0][0] * inc[0][0];
            sum_yy += inc[1][0] * inc[1][0];
        }
        let corr = sum_xy / (sum_xx * sum_yy).sqrt();
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "correlation {corr}");
    }

    #[test]
    fn increment_covariance_matches_dt_sigma() {
        let fam = sol();
        let scheme = StepScheme::new(1e-2);
        let pts = vec![[0.0, 0.0], [0.7, 0.0], [0.0, 1.1], [-0.8, 0.4]];
        let cloud = PointCloud::new(pts.clone(), 0.0);
        let sigma = joint_covariance(&fam, &pts);
        let mut r = rng(3);
        let n = 10_000;
        let dim = 8;
        let mut acc = DMatrix::<f64>::zeros(dim, dim);
        for _ in 0..n {
            let inc = sample_increment(&fam, &cloud, &scheme, &mut r).unwrap();
            let flat: Vec<f64> = inc.iter().flat_map(|p| p.iter().cloned()).collect();
            for i in 0..dim {
                for j in 0..dim {
                    acc[(i, j)] += flat[i] * flat[j];
                }
            }
        }
        for i in 0..dim {
            for j in 0..dim {
                let emp = acc[(i, j)] / n as f64;
                let expect = scheme.dt * sigma[(i, j)];
                let tol = 0.05 * scheme.dt * sigma[(i, j)].abs().max(1.0);
                assert!(
                    (emp - expect).abs() <= tol,
                    "entry ({i},{j}): empirical {emp:.3e} expected {expect:.3e}"
                );
            }
        }
    }

    #[test]
    fn radial_separation_increment_variance() {
        // Two points at separation 1: the radial component of the
        // difference of increments has variance 2 (1 - B_L(1)) dt.
        let fam = sol();
        let scheme = StepScheme::new(1e-2);
        let cloud = PointCloud::new(vec![[0.0, 0.0], [1.0, 0.0]], 0.0);
        let mut r = rng(4);
        let n = 10_000;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let inc = sample_increment(&fam, &cloud, &scheme, &mut r).unwrap();
            let radial = inc[1][0] - inc[0][0];
            sum_sq += radial * radial;
        }
        let expect = 2.0 * (1.0 - (-0.5f64).exp());
        let got = sum_sq / (n as f64 * scheme.dt);
        assert!((got / expect - 1.0).abs() < 0.05, "got {got} expect {expect}");
    }

    #[test]
    fn permuting_points_permutes_covariance() {
        let fam = sol();
        let pts = vec![[0.0, 0.0], [0.7, 0.0], [0.0, 1.1]];
        let permuted = vec![pts[2], pts[0], pts[1]];
        let sigma = joint_covariance(&fam, &pts);
        let sigma_p = joint_covariance(&fam, &permuted);
        let perm = [2usize, 0, 1];
        for l in 0..3 {
            for m in 0..3 {
                for i in 0..2 {
                    for j in 0..2 {
                        assert_eq!(
                            sigma_p[(2 * l + i, 2 * m + j)],
                            sigma[(2 * perm[l] + i, 2 * perm[m] + j)]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn eigenvalue_clip_handles_coincident_points() {
        let fam = sol();
        let scheme = StepScheme {
            dt: 1e-2,
            jitter: 0.0,
            factorization: Factorization::EigenvalueClip,
        };
        let cloud = PointCloud::new(vec![[0.0, 0.0], [0.0, 0.0]], 0.0);
        let mut r = rng(5);
        let inc = sample_increment(&fam, &cloud, &scheme, &mut r).unwrap();
        assert_abs_diff_eq!(inc[0][0], inc[1][0], epsilon = 1e-12);
    }

    #[test]
    fn zero_dt_leaves_cloud_unchanged() {
        let fam = sol();
        let scheme = StepScheme::new(0.0);
        let cloud = PointCloud::new(vec![[0.3, -0.4]], 0.0);
        let mut r = rng(6);
        let next = step_points(&fam, &cloud, &scheme, &mut r).unwrap();
        assert_eq!(next.points, cloud.points);
        assert_eq!(next.time, 0.0);
    }

    #[test]
    fn determinism_bitwise() {
        let fam = sol();
        let scheme = StepScheme::new(1e-2);
        let curve = CurveState::segment([0.0, 0.0], [1.0, 0.0], 0.25, 64);
        let run = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            simulate_curve(&fam, &curve, 0.5, &scheme, &mut r, 10).unwrap()
        };
        let a = run(99);
        let b = run(99);
        assert_eq!(a.snapshots.len(), b.snapshots.len());
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(sa.points, sb.points);
        }
    }

    #[test]
    fn refinement_keeps_edges_short() {
        let curve = CurveState::segment([0.0, 0.0], [10.0, 0.0], 0.25, 1024);
        assert!(!curve.capped);
        assert!(curve.max_edge_length() <= 0.5 + 1e-12);
    }

    #[test]
    fn refinement_caps_and_warns() {
        let curve = CurveState::segment([0.0, 0.0], [10.0, 0.0], 0.01, 16);
        assert!(curve.capped);
        assert!(curve.cloud.points.len() <= 16);
    }

    #[test]
    fn closed_curve_refines_wrap_edge() {
        let curve = CurveState::from_polyline(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            true,
            0.1,
            256,
        );
        assert!(curve.max_edge_length() <= 0.2 + 1e-12);
    }

    #[test]
    fn diameter_cases() {
        assert_eq!(diameter(&PointCloud::new(vec![[1.0, 1.0]], 0.0)), 0.0);
        assert_abs_diff_eq!(
            diameter(&PointCloud::new(vec![[0.0, 0.0], [3.0, 4.0]], 0.0)),
            5.0,
            epsilon = 1e-15
        );
        let ngon: Vec<Point> = (0..100)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / 100.0;
                [t.cos(), t.sin()]
            })
            .collect();
        assert_abs_diff_eq!(diameter(&PointCloud::new(ngon, 0.0)), 2.0, epsilon = 1e-3);
    }

    #[test]
    fn diameter_matches_brute_force_on_random_clouds() {
        let mut r = rng(7);
        for _ in 0..20 {
            let pts: Vec<Point> = (0..40)
                .map(|_| [r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0)])
                .collect();
            let mut brute = 0.0f64;
            for i in 0..pts.len() {
                for j in (i + 1)..pts.len() {
                    brute = brute.max(dist(pts[i], pts[j]));
                }
            }
            let hull = diameter(&PointCloud::new(pts, 0.0));
            assert_abs_diff_eq!(hull, brute, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_horizon_returns_initial_curve() {
        let fam = sol();
        let curve = CurveState::segment([0.0, 0.0], [1.0, 0.0], 0.25, 64);
        let mut r = rng(8);
        let traj =
            simulate_curve(&fam, &curve, 0.0, &StepScheme::new(1e-2), &mut r, 10).unwrap();
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.snapshots[0].points, curve.cloud.points);
    }

    #[test]
    fn expansive_family_grows_mean_diameter() {
        let fam = sol();
        let scheme = StepScheme::new(1e-2);
        let mut mean_start = 0.0;
        let mut mean_end = 0.0;
        let reps = 12;
        for rep in 0..reps {
            let curve = CurveState::segment([0.0, 0.0], [1.0, 0.0], 0.25, 96);
            let mut r = rng(100 + rep);
            let traj = simulate_curve(&fam, &curve, 3.0, &scheme, &mut r, 100).unwrap();
            mean_start += diameter(&traj.snapshots[1]);
            mean_end += diameter(traj.snapshots.last().unwrap());
        }
        assert!(
            mean_end / reps as f64 > mean_start / reps as f64,
            "mean diameter should grow: start {mean_start} end {mean_end}"
        );
    }

    #[test]
    fn contractive_family_shrinks_some_replicas() {
        let fam = CorrelationFamily::potential(1.0, 2).unwrap();
        let scheme = StepScheme::new(1e-2);
        let mut contracted = 0;
        for rep in 0..16 {
            let curve = CurveState::segment([0.0, 0.0], [1.0, 0.0], 0.25, 96);
            let d0 = diameter(&curve.cloud);
            let mut r = rng(200 + rep);
            let traj = simulate_curve(&fam, &curve, 3.0, &scheme, &mut r, 1000).unwrap();
            if diameter(traj.snapshots.last().unwrap()) < d0 {
                contracted += 1;
            }
        }
        assert!(contracted > 0, "no replica contracted under the potential family");
    }

    #[test]
    fn split_zero_zero_with_equal_curves_meets_surely() {
        let fam = sol();
        let curve = CurveState::segment([0.0, 0.0], [1.0, 0.0], 0.25, 64);
        let est = split_meeting_probability(
            &fam,
            &curve,
            &curve,
            0.0,
            &[(0.0, 0.0)],
            0.1,
            8,
            &StepScheme::new(1e-2),
            5,
        )
        .unwrap();
        assert_eq!(est[0].probability, 1.0);
    }

    #[test]
    fn split_rejects_bad_partition() {
        let fam = sol();
        let curve = CurveState::segment([0.0, 0.0], [1.0, 0.0], 0.25, 64);
        assert!(split_meeting_probability(
            &fam,
            &curve,
            &curve,
            4.0,
            &[(1.0, 2.0)],
            0.1,
            4,
            &StepScheme::new(1e-2),
            5,
        )
        .is_err());
    }
}
