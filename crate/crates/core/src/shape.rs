//! Long-horizon shape statistics: swept-region rasters, hitting and sweep
//! times, stable-norm estimation, and limit-shape inclusion checks.
//!
//! The guiding picture: a large advected curve sweeps the plane, and the
//! region swept by time t, rescaled by 1/t, settles towards a fixed disc.
//! The disc radius is the reciprocal of the growth slope of hitting times
//! E[tau(t v)] in t, which this module estimates by Monte Carlo.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::CorrelationFamily;
use crate::error::{Error, Result};
use crate::flow::{
    diameter, dist, simulate_curve, CurveState, PointCloud, StepScheme, Trajectory,
};
use crate::seed::derive_seed;

pub type Vec2 = [f64; 2];

/// Raster of the region swept by a moving curve, with per-cell first
/// cover times. Cells are addressed by integer index; the grid grows
/// beyond its declared extent automatically (and records that it did).
#[derive(Debug, Clone)]
pub struct SweptGrid {
    pub origin: Vec2,
    pub cell_size: f64,
    /// Declared half-width in cells; informational once `grown` is set.
    pub extent: i32,
    pub grown: bool,
    cells: HashMap<(i32, i32), f64>,
}

impl SweptGrid {
    pub fn new(origin: Vec2, cell_size: f64, extent: i32) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        Self {
            origin,
            cell_size,
            extent,
            grown: false,
            cells: HashMap::new(),
        }
    }

    pub fn cell_of(&self, p: Vec2) -> (i32, i32) {
        (
            ((p[0] - self.origin[0]) / self.cell_size).floor() as i32,
            ((p[1] - self.origin[1]) / self.cell_size).floor() as i32,
        )
    }

    pub fn center(&self, cell: (i32, i32)) -> Vec2 {
        [
            self.origin[0] + (cell.0 as f64 + 0.5) * self.cell_size,
            self.origin[1] + (cell.1 as f64 + 0.5) * self.cell_size,
        ]
    }

    pub fn first_cover_time(&self, cell: (i32, i32)) -> Option<f64> {
        self.cells.get(&cell).copied()
    }

    pub fn is_covered(&self, cell: (i32, i32)) -> bool {
        self.cells.contains_key(&cell)
    }

    pub fn covered_count(&self) -> usize {
        self.cells.len()
    }

    pub fn covered_cells(&self) -> impl Iterator<Item = (&(i32, i32), &f64)> {
        self.cells.iter()
    }

    fn mark(&mut self, p: Vec2, time: f64) {
        let cell = self.cell_of(p);
        if cell.0.abs() > self.extent || cell.1.abs() > self.extent {
            self.grown = true;
        }
        self.cells
            .entry(cell)
            .and_modify(|t| *t = t.min(time))
            .or_insert(time);
    }

    /// Rasterize a polyline snapshot into the grid, recording the
    /// snapshot time as cover time for newly covered cells.
    pub fn accumulate(&mut self, cloud: &PointCloud, closed: bool) {
        let n = cloud.points.len();
        if n == 1 {
            self.mark(cloud.points[0], cloud.time);
            return;
        }
        let edges = if closed { n } else { n - 1 };
        let step = self.cell_size / 2.0;
        for e in 0..edges {
            let a = cloud.points[e];
            let b = cloud.points[(e + 1) % n];
            let len = dist(a, b);
            let pieces = (len / step).ceil().max(1.0) as usize;
            for k in 0..=pieces {
                let s = k as f64 / pieces as f64;
                self.mark([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])], cloud.time);
            }
        }
    }

    pub fn accumulate_trajectory(&mut self, traj: &Trajectory) {
        for snap in &traj.snapshots {
            self.accumulate(snap, traj.closed);
        }
    }
}

/// Spec-shaped wrapper around `SweptGrid::accumulate`.
pub fn accumulate_swept(grid: &mut SweptGrid, snapshot: &CurveState) {
    grid.accumulate(&snapshot.cloud, snapshot.closed);
}

#[derive(Debug, Clone, Serialize)]
pub struct HittingSample {
    pub target: Vec2,
    pub r: f64,
    /// First snapshot time with contact and diameter at least 1; None if
    /// censored at the horizon.
    pub tau: Option<f64>,
    pub censor_time: f64,
    pub replica: u64,
}

impl HittingSample {
    pub fn is_censored(&self) -> bool {
        self.tau.is_none()
    }

    /// Observed value: the hitting time, or the censoring bound (a lower
    /// bound for the true time).
    pub fn observed(&self) -> f64 {
        self.tau.unwrap_or(self.censor_time)
    }
}

/// Diameter of every snapshot; shared across targets when one trajectory
/// serves several hitting queries.
pub fn snapshot_diameters(traj: &Trajectory) -> Vec<f64> {
    traj.snapshots.iter().map(diameter).collect()
}

pub fn hitting_time_with_diameters(
    traj: &Trajectory,
    diams: &[f64],
    p: Vec2,
    r: f64,
) -> HittingSample {
    let censor_time = traj.snapshots.last().map(|s| s.time).unwrap_or(0.0);
    for (snap, &d) in traj.snapshots.iter().zip(diams) {
        if d >= 1.0 && snap.min_dist_to(p) <= r {
            return HittingSample {
                target: p,
                r,
                tau: Some(snap.time),
                censor_time,
                replica: 0,
            };
        }
    }
    HittingSample {
        target: p,
        r,
        tau: None,
        censor_time,
        replica: 0,
    }
}

/// First snapshot time at which the curve is both large (diameter >= 1)
/// and within distance R of the target.
pub fn hitting_time(traj: &Trajectory, p: Vec2, r: f64) -> HittingSample {
    let diams = snapshot_diameters(traj);
    hitting_time_with_diameters(traj, &diams, p, r)
}

/// First time every raster cell centered in the R-ball around P is
/// covered; None while any remains uncovered.
pub fn sweep_time(grid: &SweptGrid, p: Vec2, r: f64) -> Result<Option<f64>> {
    if r < 2.0 * grid.cell_size {
        return Err(Error::Precondition(format!(
            "sweep query needs R >= 2 cells (R = {r}, cell = {})",
            grid.cell_size
        )));
    }
    let lo = grid.cell_of([p[0] - r, p[1] - r]);
    let hi = grid.cell_of([p[0] + r, p[1] + r]);
    let mut worst: f64 = 0.0;
    for i in lo.0..=hi.0 {
        for j in lo.1..=hi.1 {
            let c = grid.center((i, j));
            if dist(c, p) <= r {
                match grid.first_cover_time((i, j)) {
                    Some(t) => worst = worst.max(t),
                    None => return Ok(None),
                }
            }
        }
    }
    Ok(Some(worst))
}

/// Simulation parameters for shape-statistics Monte Carlo runs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShapeRunParams {
    pub horizon: f64,
    pub dt: f64,
    pub refine_threshold: f64,
    pub max_points: usize,
    pub snapshot_stride: usize,
}

impl Default for ShapeRunParams {
    fn default() -> Self {
        Self {
            horizon: 14.0,
            dt: 0.01,
            refine_threshold: 0.25,
            max_points: 192,
            snapshot_stride: 5,
        }
    }
}

/// Simulate `replicas` independent trajectories of the given initial
/// curve and score each against every target; result is target-major.
pub fn collect_hitting_samples(
    family: &CorrelationFamily<f64>,
    curve: &CurveState,
    targets: &[(Vec2, f64)],
    params: &ShapeRunParams,
    replicas: usize,
    master_seed: u64,
) -> Result<Vec<Vec<HittingSample>>> {
    let scheme = StepScheme::new(params.dt);
    let per_replica: Vec<Vec<HittingSample>> = (0..replicas)
        .into_par_iter()
        .map(|rep| -> Result<Vec<HittingSample>> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master_seed, rep as u64));
            let traj = simulate_curve(
                family,
                curve,
                params.horizon,
                &scheme,
                &mut rng,
                params.snapshot_stride,
            )?;
            let diams = snapshot_diameters(&traj);
            Ok(targets
                .iter()
                .map(|&(p, r)| {
                    let mut s = hitting_time_with_diameters(&traj, &diams, p, r);
                    s.replica = rep as u64;
                    s
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut by_target = vec![Vec::with_capacity(replicas); targets.len()];
    for rep_samples in per_replica {
        for (ti, s) in rep_samples.into_iter().enumerate() {
            by_target[ti].push(s);
        }
    }
    Ok(by_target)
}

#[derive(Debug, Clone, Serialize)]
pub struct TimePointStat {
    pub t: f64,
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
    pub censored: usize,
    /// Set when censoring exceeded 20% and the point was excluded from
    /// the fit.
    pub dropped: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubadditivityCheck {
    pub t1: f64,
    pub t2: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StableNormEstimate {
    pub direction: Vec2,
    pub r: f64,
    pub per_t: Vec<TimePointStat>,
    pub slope: f64,
    pub slope_std_error: f64,
    pub intercept: f64,
    pub ball_radius: f64,
    pub subadditivity: Vec<SubadditivityCheck>,
    pub reliable: bool,
}

fn time_point_stat(t: f64, samples: &[HittingSample]) -> TimePointStat {
    let n = samples.len();
    let censored = samples.iter().filter(|s| s.is_censored()).count();
    let dropped = n == 0 || censored as f64 > 0.2 * n as f64;
    // censored samples contribute their bound as a lower bound
    let values: Vec<f64> = samples.iter().map(|s| s.observed()).collect();
    let mean = values.iter().sum::<f64>() / n.max(1) as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (n as f64 - 1.0).max(1.0);
    TimePointStat {
        t,
        mean,
        std_error: (var / n.max(1) as f64).sqrt(),
        samples: n,
        censored,
        dropped,
    }
}

/// Inverse-variance weighted least squares of y against x with intercept.
/// Returns (slope, slope standard error, intercept).
fn weighted_line_fit(points: &[(f64, f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(
            "line fit needs at least two points".into(),
        ));
    }
    let mut sw = 0.0;
    let mut swx = 0.0;
    let mut swy = 0.0;
    let mut swxx = 0.0;
    let mut swxy = 0.0;
    for &(x, y, se) in points {
        // floor keeps the normal equations well conditioned when one
        // point has (near-)zero variance
        let w = 1.0 / se.max(1e-3).powi(2);
        sw += w;
        swx += w * x;
        swy += w * y;
        swxx += w * x * x;
        swxy += w * x * y;
    }
    let det = sw * swxx - swx * swx;
    if det.abs() < 1e-300 {
        return Err(Error::Numerical("degenerate design in line fit".into()));
    }
    let slope = (sw * swxy - swx * swy) / det;
    let intercept = (swxx * swy - swx * swxy) / det;
    let slope_se = (sw / det).sqrt();
    Ok((slope, slope_se, intercept))
}

/// Leave-one-replica-out standard error of the fitted slope. Returns
/// None when the samples carry fewer than 8 distinct replica ids or a
/// reduced fit degenerates.
fn jackknife_slope_se(t_grid: &[f64], samples_per_t: &[Vec<HittingSample>]) -> Option<f64> {
    let mut ids: Vec<u64> = samples_per_t
        .iter()
        .flatten()
        .map(|s| s.replica)
        .collect();
    ids.sort_unstable();
    ids.dedup();
    let n = ids.len();
    if n < 8 {
        return None;
    }
    let mut slopes = Vec::with_capacity(n);
    for &id in &ids {
        let reduced: Vec<TimePointStat> = t_grid
            .iter()
            .zip(samples_per_t)
            .map(|(&t, s)| {
                let kept: Vec<HittingSample> =
                    s.iter().filter(|x| x.replica != id).cloned().collect();
                time_point_stat(t, &kept)
            })
            .collect();
        let pts: Vec<(f64, f64, f64)> = reduced
            .iter()
            .filter(|s| !s.dropped)
            .map(|s| (s.t, s.mean, s.std_error))
            .collect();
        let (slope, _, _) = weighted_line_fit(&pts).ok()?;
        slopes.push(slope);
    }
    let mean = slopes.iter().sum::<f64>() / n as f64;
    let ss = slopes.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>();
    Some((ss * (n as f64 - 1.0) / n as f64).sqrt())
}

/// Build the stable-norm estimate from precomputed hitting samples, one
/// sample vector per entry of `t_grid`.
pub fn estimate_stable_norm_from_samples(
    direction: Vec2,
    r: f64,
    t_grid: &[f64],
    samples_per_t: &[Vec<HittingSample>],
) -> Result<StableNormEstimate> {
    if t_grid.len() != samples_per_t.len() {
        return Err(Error::Precondition("one sample set per t is required".into()));
    }
    let per_t: Vec<TimePointStat> = t_grid
        .iter()
        .zip(samples_per_t)
        .map(|(&t, s)| time_point_stat(t, s))
        .collect();
    let fit_points: Vec<(f64, f64, f64)> = per_t
        .iter()
        .filter(|s| !s.dropped)
        .map(|s| (s.t, s.mean, s.std_error))
        .collect();
    let (slope, mut slope_se, intercept) = weighted_line_fit(&fit_points)?;
    // The fit's standard error treats the per-t means as independent, but
    // each replica contributes one sample at every t, so a fast front
    // shifts the whole profile and the slope varies more than the fit
    // admits. Jackknifing over replicas captures that correlation.
    if let Some(se) = jackknife_slope_se(t_grid, samples_per_t) {
        slope_se = se;
    }
    let mut subadditivity = Vec::new();
    for i in 0..per_t.len() {
        for j in i..per_t.len() {
            let tsum = per_t[i].t + per_t[j].t;
            if let Some(k) = per_t.iter().position(|s| (s.t - tsum).abs() < 1e-9) {
                let (a, b, c) = (&per_t[i], &per_t[j], &per_t[k]);
                if a.dropped || b.dropped || c.dropped {
                    continue;
                }
                let slack = 2.0
                    * (a.std_error.powi(2) + b.std_error.powi(2) + c.std_error.powi(2)).sqrt();
                subadditivity.push(SubadditivityCheck {
                    t1: a.t,
                    t2: b.t,
                    lhs: c.mean,
                    rhs: a.mean + b.mean,
                    slack,
                    ok: c.mean <= a.mean + b.mean + slack,
                });
            }
        }
    }
    let reliable = per_t.iter().all(|s| !s.dropped) && slope > 0.0;
    Ok(StableNormEstimate {
        direction,
        r,
        per_t,
        slope,
        slope_std_error: slope_se,
        intercept,
        ball_radius: if slope > 0.0 { 1.0 / slope } else { f64::INFINITY },
        subadditivity,
        reliable,
    })
}

/// Estimate the directional growth norm by simulating the canonical
/// initial curve (circle of radius R about the origin) and timing its
/// first large contact with targets t * v along the ray.
pub fn estimate_stable_norm(
    family: &CorrelationFamily<f64>,
    r: f64,
    direction: Vec2,
    t_grid: &[f64],
    replicas: usize,
    master_seed: u64,
    params: &ShapeRunParams,
) -> Result<StableNormEstimate> {
    if t_grid.len() < 3 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition(
            "t grid must be increasing with at least 3 entries".into(),
        ));
    }
    if replicas < 32 {
        return Err(Error::Precondition("need at least 32 replicas".into()));
    }
    let norm = (direction[0] * direction[0] + direction[1] * direction[1]).sqrt();
    if !(norm > 0.0) {
        return Err(Error::Precondition("direction must be nonzero".into()));
    }
    let v = [direction[0] / norm, direction[1] / norm];
    let curve = CurveState::circle([0.0, 0.0], r, params.refine_threshold, params.max_points);
    let targets: Vec<(Vec2, f64)> = t_grid.iter().map(|&t| ([t * v[0], t * v[1]], r)).collect();
    let samples = collect_hitting_samples(family, &curve, &targets, params, replicas, master_seed)?;
    estimate_stable_norm_from_samples(v, r, t_grid, &samples)
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitShapeCheck {
    pub inner_ok: bool,
    pub outer_ok: bool,
    /// Worst shortfall of an uncovered cell inside the inner disc.
    pub inner_margin: f64,
    /// Worst overshoot of a covered cell beyond the outer disc.
    pub outer_margin: f64,
}

/// Check the two-sided inclusion (1-eps) t B <= swept <= (1+eps) t B,
/// with B the ball of the fitted radius centered at the origin.
pub fn limit_shape_check(
    swept: &SweptGrid,
    t: f64,
    ball_radius: f64,
    eps: f64,
) -> Result<LimitShapeCheck> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Precondition("eps must lie in (0, 1)".into()));
    }
    let r_in = (1.0 - eps) * t * ball_radius;
    let r_out = (1.0 + eps) * t * ball_radius;
    let mut inner_ok = true;
    let mut inner_margin = 0.0f64;
    if r_in > 0.0 {
        let lo = swept.cell_of([-r_in, -r_in]);
        let hi = swept.cell_of([r_in, r_in]);
        for i in lo.0..=hi.0 {
            for j in lo.1..=hi.1 {
                let c = swept.center((i, j));
                let d = (c[0] * c[0] + c[1] * c[1]).sqrt();
                if d <= r_in && !swept.is_covered((i, j)) {
                    inner_ok = false;
                    inner_margin = inner_margin.max(r_in - d);
                }
            }
        }
    }
    let mut outer_ok = true;
    let mut outer_margin = 0.0f64;
    for (&cell, _) in swept.covered_cells() {
        let c = swept.center(cell);
        let d = (c[0] * c[0] + c[1] * c[1]).sqrt();
        if d > r_out {
            outer_ok = false;
            outer_margin = outer_margin.max(d - r_out);
        }
    }
    Ok(LimitShapeCheck {
        inner_ok,
        outer_ok,
        inner_margin,
        outer_margin,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub samples: usize,
    pub median: f64,
    pub survival_at_1_5_median: f64,
    pub survival_at_3_median: f64,
    /// Fitted decay exponent of the survival function in log-log scale
    /// (negative slope magnitude); NaN when too few distinct levels.
    pub decay_exponent: f64,
    pub passed: bool,
}

/// Fast-decay proxy for the hitting-time tail: survival at 3x the median
/// must be at most a quarter of survival at 1.5x the median.
pub fn tail_exponent(samples: &[HittingSample], t_ref: f64) -> Result<TailReport> {
    if !(t_ref > 0.0) {
        return Err(Error::Precondition("t_ref must be positive".into()));
    }
    let mut taus: Vec<f64> = samples
        .iter()
        .filter_map(|s| s.tau)
        .map(|t| t / t_ref)
        .collect();
    if taus.len() < 200 {
        return Err(Error::InsufficientData(format!(
            "tail fit needs at least 200 uncensored samples, got {}",
            taus.len()
        )));
    }
    taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = taus.len();
    let median = if n % 2 == 0 {
        0.5 * (taus[n / 2 - 1] + taus[n / 2])
    } else {
        taus[n / 2]
    };
    let survival = |x: f64| taus.iter().filter(|&&t| t > x).count() as f64 / n as f64;
    let s15 = survival(1.5 * median);
    let s3 = survival(3.0 * median);
    let passed = 4.0 * s3 <= s15;
    // log-log slope of survival over thresholds between the median and
    // the largest level with positive survival
    let mut pts = Vec::new();
    for k in 0..20 {
        let x = median * (1.0 + k as f64 * 0.15);
        let s = survival(x);
        if s > 0.0 {
            pts.push((x.ln(), s.ln(), 1.0));
        }
    }
    let decay_exponent = if pts.len() >= 3 {
        weighted_line_fit(&pts).map(|(slope, _, _)| -slope).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    Ok(TailReport {
        samples: n,
        median,
        survival_at_1_5_median: s15,
        survival_at_3_median: s3,
        decay_exponent,
        passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DisplacementReport {
    pub horizon: f64,
    /// Per replica: sup over snapshots up to the horizon of the farthest
    /// point from the origin, divided by the horizon.
    pub per_replica_rate: Vec<f64>,
    pub per_replica_rate_half: Vec<f64>,
    pub p95_rate: f64,
    pub p95_rate_half: f64,
    pub initial_sup: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[idx]
}

/// Linear-growth ceiling diagnostic: the farthest excursion up to time T,
/// normalized by T, should be stable between T/2 and T.
pub fn displacement_bound(trajectories: &[Trajectory], horizon: f64) -> DisplacementReport {
    let sup_norm = |cloud: &PointCloud| {
        cloud
            .points
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt())
            .fold(0.0, f64::max)
    };
    let initial_sup = trajectories
        .iter()
        .filter_map(|t| t.snapshots.first())
        .map(sup_norm)
        .fold(0.0, f64::max);
    let mut rates = Vec::new();
    let mut rates_half = Vec::new();
    if horizon > 0.0 {
        for traj in trajectories {
            let mut sup_full = 0.0f64;
            let mut sup_half = 0.0f64;
            for snap in &traj.snapshots {
                if snap.time > horizon + 1e-12 {
                    break;
                }
                let s = sup_norm(snap);
                sup_full = sup_full.max(s);
                if snap.time <= horizon / 2.0 + 1e-12 {
                    sup_half = sup_half.max(s);
                }
            }
            rates.push(sup_full / horizon);
            rates_half.push(sup_half / (horizon / 2.0));
        }
    }
    let mut sorted = rates.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut sorted_half = rates_half.clone();
    sorted_half.sort_by(|a, b| a.partial_cmp(b).unwrap());
    DisplacementReport {
        horizon,
        p95_rate: percentile(&sorted, 0.95),
        p95_rate_half: percentile(&sorted_half, 0.95),
        per_replica_rate: rates,
        per_replica_rate_half: rates_half,
        initial_sup,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationPoint {
    pub t: f64,
    pub dispersion: f64,
    pub std_error: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationReport {
    pub slope: f64,
    pub threshold: f64,
    pub per_t: Vec<ConcentrationPoint>,
    pub passed: bool,
}

/// Empirical P[|tau/t - slope| > 0.25 slope] per t; censored samples
/// count as exceeding. Passes when the dispersion decreases along the
/// grid, allowing one inversion within combined standard errors.
pub fn concentration_from_samples(
    t_grid: &[f64],
    samples_per_t: &[Vec<HittingSample>],
    slope: f64,
) -> Result<ConcentrationReport> {
    if !(slope > 0.0) {
        return Err(Error::Precondition(
            "concentration check needs a positive fitted slope".into(),
        ));
    }
    if t_grid.len() != samples_per_t.len() || t_grid.len() < 2 {
        return Err(Error::Precondition(
            "need matching t grid and sample sets (>= 2 points)".into(),
        ));
    }
    let threshold = 0.25 * slope;
    let per_t: Vec<ConcentrationPoint> = t_grid
        .iter()
        .zip(samples_per_t)
        .map(|(&t, samples)| {
            let n = samples.len();
            let exceed = samples
                .iter()
                .filter(|s| match s.tau {
                    Some(tau) => (tau / t - slope).abs() > threshold,
                    None => true,
                })
                .count();
            let p = exceed as f64 / n.max(1) as f64;
            ConcentrationPoint {
                t,
                dispersion: p,
                std_error: (p * (1.0 - p) / n.max(1) as f64).sqrt(),
                samples: n,
            }
        })
        .collect();
    let mut inversions_beyond_se = 0;
    for w in per_t.windows(2) {
        if w[1].dispersion > w[0].dispersion {
            let se = (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
            if w[1].dispersion - w[0].dispersion > se {
                inversions_beyond_se += 1;
            }
        }
    }
    let passed = inversions_beyond_se == 0
        && per_t.last().unwrap().dispersion <= per_t.first().unwrap().dispersion;
    Ok(ConcentrationReport {
        slope,
        threshold,
        per_t,
        passed,
    })
}
