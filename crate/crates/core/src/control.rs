//! Deterministic control fields and the sweeping construction.
//!
//! The columns of the covariance tensor, based at a point Q, are
//! admissible control directions for the flow. Near Q they agree with the
//! standard basis up to a quadratic error, so on a small square around Q
//! the controlled flow moves with unit speed in a chosen coordinate
//! direction, up to an explicit tolerance. Three such moves (down, right,
//! up in chart coordinates) sweep a curve across a fixed central box;
//! both facts are certified numerically here.

use serde::Serialize;

use crate::covariance::CorrelationFamily;
use crate::error::{Error, Result};
use crate::flow::tensor_block;

pub type Vec2 = [f64; 2];

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ControlField {
    pub family: CorrelationFamily<f64>,
    pub base_point: Vec2,
    /// 1 or 2: which column of the tensor drives the motion.
    pub component: usize,
    pub sign: f64,
}

impl ControlField {
    pub fn new(family: CorrelationFamily<f64>, base_point: Vec2, component: usize, sign: f64) -> Self {
        assert!(component == 1 || component == 2, "component must be 1 or 2");
        assert!(sign == 1.0 || sign == -1.0, "sign must be +1 or -1");
        Self {
            family,
            base_point,
            component,
            sign,
        }
    }

    /// Unit target direction w_k = sign * e_k.
    pub fn target(&self) -> Vec2 {
        let mut w = [0.0, 0.0];
        w[self.component - 1] = self.sign;
        w
    }
}

/// V_k(x) = sign * (column k of b(x - Q)); equals sign * e_k exactly at Q.
pub fn eval_control(field: &ControlField, x: Vec2) -> Vec2 {
    let dx = x[0] - field.base_point[0];
    let dy = x[1] - field.base_point[1];
    let b = tensor_block(&field.family, dx, dy);
    let k = field.component - 1;
    [field.sign * b[0][k], field.sign * b[1][k]]
}

/// Square neighbourhood of Q on which both control fields stay within eps
/// of their unit targets, together with the affine chart Z = (x - Q)/eps.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SquareChart {
    pub family: CorrelationFamily<f64>,
    pub q: Vec2,
    pub n: usize,
    pub eps: f64,
    /// Quadratic Taylor constant: ||V(x) - w|| <= c13 ||x - Q||^2 on the
    /// estimation disc.
    pub c13: f64,
    /// Radius of the disc on which c13 was estimated.
    pub delta: f64,
    /// Guaranteed time during which the controlled motion stays in the
    /// square and tracks its target direction.
    pub t_u: f64,
}

impl SquareChart {
    pub fn to_z(&self, x: Vec2) -> Vec2 {
        [(x[0] - self.q[0]) / self.eps, (x[1] - self.q[1]) / self.eps]
    }

    pub fn from_z(&self, z: Vec2) -> Vec2 {
        [self.q[0] + self.eps * z[0], self.q[1] + self.eps * z[1]]
    }

    pub fn field(&self, component: usize, sign: f64) -> ControlField {
        ControlField::new(self.family, self.q, component, sign)
    }
}

/// Estimate the quadratic constant c13 by maximizing
/// ||V(x) - w|| / ||x - Q||^2 over a disc grid, for both components.
fn estimate_c13(family: &CorrelationFamily<f64>, q: Vec2, radius: f64) -> f64 {
    let mut best = 0.0f64;
    let rings = 100;
    let spokes = 100;
    for i in 1..=rings {
        let r = radius * i as f64 / rings as f64;
        for j in 0..spokes {
            let theta = std::f64::consts::TAU * j as f64 / spokes as f64;
            let x = [q[0] + r * theta.cos(), q[1] + r * theta.sin()];
            let b = tensor_block(family, x[0] - q[0], x[1] - q[1]);
            for k in 0..2 {
                let mut dev = [b[0][k], b[1][k]];
                dev[k] -= 1.0;
                let norm = (dev[0] * dev[0] + dev[1] * dev[1]).sqrt();
                best = best.max(norm / (r * r));
            }
        }
    }
    // safety margin over the grid maximum
    best * 1.1
}

fn sup_field_norm(family: &CorrelationFamily<f64>, q: Vec2, half_side: f64) -> f64 {
    let m = 50;
    let mut best = 0.0f64;
    for i in 0..=m {
        for j in 0..=m {
            let x = [
                q[0] - half_side + 2.0 * half_side * i as f64 / m as f64,
                q[1] - half_side + 2.0 * half_side * j as f64 / m as f64,
            ];
            let b = tensor_block(family, x[0] - q[0], x[1] - q[1]);
            for k in 0..2 {
                let norm = (b[0][k] * b[0][k] + b[1][k] * b[1][k]).sqrt();
                best = best.max(norm);
            }
        }
    }
    best
}

pub fn build_square(family: &CorrelationFamily<f64>, q: Vec2, n: usize) -> Result<SquareChart> {
    if n < 1 {
        return Err(Error::Precondition("square chart needs n >= 1".into()));
    }
    let delta = family.length_scale / 2.0;
    let c13 = estimate_c13(family, q, delta);
    let nf = n as f64;
    let mut eps = (delta / (2.0f64.sqrt() * nf))
        .min(1.0 / (2.0 * c13 * nf * nf))
        .min(1.0 / 102.0);
    // shrink eps until the unit-speed window covers a third of the square
    // crossing time (always possible since the field norms tend to 1)
    let t_u = loop {
        if eps <= 1e-12 {
            return Err(Error::Parameter(
                "square chart degenerated: eps fell below 1e-12".into(),
            ));
        }
        let sup = sup_field_norm(family, q, nf * eps);
        let t_u = nf * eps / 2.0 / sup;
        if t_u >= nf * eps / 3.0 {
            break t_u;
        }
        eps *= 0.5;
    };
    Ok(SquareChart {
        family: *family,
        q,
        n,
        eps,
        c13,
        delta,
        t_u,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleSegment {
    pub duration: f64,
    pub field: ControlField,
}

#[derive(Debug, Clone, Serialize)]
pub struct ControlSchedule {
    pub segments: Vec<ScheduleSegment>,
    pub total: f64,
    pub eps: f64,
}

/// The sweeping schedule: down for 10 eps, right for 4 eps, up for 20 eps.
pub fn sweeping_schedule(chart: &SquareChart) -> ControlSchedule {
    let eps = chart.eps;
    let segments = vec![
        ScheduleSegment {
            duration: 10.0 * eps,
            field: chart.field(2, -1.0),
        },
        ScheduleSegment {
            duration: 4.0 * eps,
            field: chart.field(1, 1.0),
        },
        ScheduleSegment {
            duration: 20.0 * eps,
            field: chart.field(2, 1.0),
        },
    ];
    ControlSchedule {
        segments,
        total: 34.0 * eps,
        eps,
    }
}

fn rk4_step(field: &ControlField, x: Vec2, dt: f64) -> Vec2 {
    let k1 = eval_control(field, x);
    let k2 = eval_control(field, [x[0] + 0.5 * dt * k1[0], x[1] + 0.5 * dt * k1[1]]);
    let k3 = eval_control(field, [x[0] + 0.5 * dt * k2[0], x[1] + 0.5 * dt * k2[1]]);
    let k4 = eval_control(field, [x[0] + dt * k3[0], x[1] + dt * k3[1]]);
    [
        x[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Error budget of the fixed-step fourth-order integrator, per unit time.
pub fn integrator_tolerance(dt: f64) -> f64 {
    10.0 * dt.powi(4)
}

fn integrate_segment(
    field: &ControlField,
    x0: Vec2,
    duration: f64,
    dt: f64,
    path: &mut Vec<Vec2>,
) -> Result<Vec2> {
    if duration <= 0.0 {
        return Ok(x0);
    }
    let steps = (duration / dt).ceil().max(1.0) as usize;
    let h = duration / steps as f64; // boundaries hit exactly
    let mut x = x0;
    for _ in 0..steps {
        x = rk4_step(field, x, h);
        if !x[0].is_finite() || !x[1].is_finite() {
            return Err(Error::Numerical("control integration left the finite range".into()));
        }
        path.push(x);
    }
    Ok(x)
}

/// Fixed-step fourth-order integration through the schedule; returns the
/// path including the initial state.
pub fn integrate_control(schedule: &ControlSchedule, x0: Vec2, dt: f64) -> Result<Vec<Vec2>> {
    if !(dt > 0.0 && dt <= schedule.eps / 100.0) {
        return Err(Error::Precondition(format!(
            "integration step {dt} must be positive and at most eps/100 = {}",
            schedule.eps / 100.0
        )));
    }
    let mut path = vec![x0];
    let mut x = x0;
    for seg in &schedule.segments {
        x = integrate_segment(&seg.field, x, seg.duration, dt, &mut path)?;
    }
    Ok(path)
}

#[derive(Debug, Clone, Serialize)]
pub struct NoSpeedReport {
    pub n: usize,
    pub eps: f64,
    pub t_u: f64,
    pub grid_size: usize,
    pub checks: usize,
    pub violations: usize,
    pub max_deviation: f64,
    /// Largest deviation minus its allowed bound (negative when passing).
    pub max_margin: f64,
    pub passed: bool,
}

/// Deviation of the controlled motion from straight-line unit-speed
/// transport: ||psi_t(z) - z - t w||.
pub fn nospeed_deviation(
    chart: &SquareChart,
    z: Vec2,
    component: usize,
    sign: f64,
    t: f64,
    dt: f64,
) -> Result<f64> {
    let field = chart.field(component, sign);
    let schedule = ControlSchedule {
        segments: vec![ScheduleSegment {
            duration: t,
            field,
        }],
        total: t,
        eps: chart.eps,
    };
    let path = integrate_control(&schedule, z, dt)?;
    let end = path.last().expect("path nonempty");
    let w = field.target();
    let dev = [end[0] - z[0] - t * w[0], end[1] - z[1] - t * w[1]];
    Ok((dev[0] * dev[0] + dev[1] * dev[1]).sqrt())
}

/// Certify, over a grid of starting points in the inner half-square and
/// both control fields, that the motion tracks its target direction:
/// deviation at t in {t_u/4, t_u/2, t_u} stays within eps * t plus the
/// integrator budget.
pub fn nospeed_certificate(chart: &SquareChart, dt: f64, grid_size: usize) -> Result<NoSpeedReport> {
    let half = chart.n as f64 * chart.eps / 2.0;
    let t_u = chart.t_u;
    // one pass to t_u per (z, field), with checkpoints at the quarter marks
    let steps_total = ((t_u / dt).ceil() as usize).max(4).div_ceil(4) * 4;
    let h = t_u / steps_total as f64;
    let budget = integrator_tolerance(h);
    let mut checks = 0usize;
    let mut violations = 0usize;
    let mut max_deviation = 0.0f64;
    let mut max_margin = f64::NEG_INFINITY;
    for gi in 0..grid_size {
        for gj in 0..grid_size {
            let frac = |g: usize| {
                if grid_size == 1 {
                    0.0
                } else {
                    2.0 * g as f64 / (grid_size - 1) as f64 - 1.0
                }
            };
            let z = [
                chart.q[0] + half * frac(gi),
                chart.q[1] + half * frac(gj),
            ];
            for component in [1usize, 2] {
                let field = chart.field(component, 1.0);
                let w = field.target();
                let quarter = steps_total / 4;
                let mut x = z;
                for step in 1..=steps_total {
                    x = rk4_step(&field, x, h);
                    // checkpoints at t_u/4, t_u/2 and t_u
                    if step == quarter || step == 2 * quarter || step == steps_total {
                        let t = h * step as f64;
                        let dev = [x[0] - z[0] - t * w[0], x[1] - z[1] - t * w[1]];
                        let dev = (dev[0] * dev[0] + dev[1] * dev[1]).sqrt();
                        let bound = chart.eps * t + budget;
                        checks += 1;
                        max_deviation = max_deviation.max(dev);
                        max_margin = max_margin.max(dev - bound);
                        if dev > bound {
                            violations += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(NoSpeedReport {
        n: chart.n,
        eps: chart.eps,
        t_u,
        grid_size,
        checks,
        violations,
        max_deviation,
        max_margin,
        passed: violations == 0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CoordinateCheck {
    pub time_label: String,
    pub z1_range: (f64, f64),
    pub z2_range: Option<(f64, f64)>,
    pub observed_z1: (f64, f64),
    pub observed_z2: (f64, f64),
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub eps: f64,
    pub table_checks: Vec<CoordinateCheck>,
    pub endpoint_checks: Vec<CoordinateCheck>,
    pub raster_cells: usize,
    pub covered_cells: usize,
    pub uncovered: Vec<(i32, i32)>,
    pub passed: bool,
}

/// Track every point of a test curve through the sweeping schedule and
/// certify (a) the chart-coordinate bounds at the segment boundaries and
/// (b) raster coverage of the central box [-2,2]^2 in chart coordinates.
///
/// The curve is given in world coordinates, must stay inside the chart
/// image of [-7,7]^2, start on the line Z1 = -7 and end on Z1 = -1.
pub fn sweep_certificate(
    chart: &SquareChart,
    test_curve: &[Vec2],
    dt: f64,
) -> Result<SweepReport> {
    if test_curve.len() < 2 {
        return Err(Error::Precondition("test curve needs at least two points".into()));
    }
    let tol_pre = 1e-9;
    for &p in test_curve {
        let z = chart.to_z(p);
        if z[0].abs() > 7.0 + tol_pre || z[1].abs() > 7.0 + tol_pre {
            return Err(Error::Precondition(format!(
                "test curve leaves the chart box at Z = ({}, {})",
                z[0], z[1]
            )));
        }
    }
    let z_first = chart.to_z(test_curve[0]);
    let z_last = chart.to_z(*test_curve.last().expect("nonempty"));
    if (z_first[0] + 7.0).abs() > tol_pre {
        return Err(Error::Precondition(
            "test curve must start on the line Z1 = -7".into(),
        ));
    }
    if (z_last[0] + 1.0).abs() > tol_pre {
        return Err(Error::Precondition(
            "test curve must end on the line Z1 = -1".into(),
        ));
    }

    // refine the curve to chart spacing <= 1/8 so the raster sees it
    let mut curve: Vec<Vec2> = vec![test_curve[0]];
    for w in test_curve.windows(2) {
        let (a, b) = (w[0], w[1]);
        let za = chart.to_z(a);
        let zb = chart.to_z(b);
        let span = ((zb[0] - za[0]).powi(2) + (zb[1] - za[1]).powi(2)).sqrt();
        let pieces = (span / 0.125).ceil().max(1.0) as usize;
        for k in 1..=pieces {
            let s = k as f64 / pieces as f64;
            curve.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
        }
    }

    let schedule = sweeping_schedule(chart);
    let eps = chart.eps;
    // tolerance for table bounds, in chart units
    let tol_z = (integrator_tolerance(dt) * schedule.total.max(1.0)) / eps + 1e-9;

    // coordinate tables: allowed ranges per boundary time, in chart units
    let bulk_table: [(&str, f64, (f64, f64), Option<(f64, f64)>); 4] = [
        ("t=0", 0.0, (-7.0, -1.0), Some((-7.0, 7.0))),
        (
            "t=10eps",
            10.0 * eps,
            (-7.0 - 1.0 / 3.0, -1.0 + 1.0 / 3.0),
            Some((-17.0 - 1.0 / 3.0, -3.0 + 1.0 / 3.0)),
        ),
        (
            "t=14eps",
            14.0 * eps,
            (-3.0 - 2.0 / 3.0, 3.0 + 2.0 / 3.0),
            Some((-17.0 - 2.0 / 3.0, -3.0 + 2.0 / 3.0)),
        ),
        (
            "t=34eps",
            34.0 * eps,
            (-3.0 - 1.0, 3.0 + 1.0),
            Some((3.0 - 1.0, 17.0 + 1.0)),
        ),
    ];
    // endpoint table: Z1 bounds for the start (Z1 = -7) and end (Z1 = -1)
    let start_table: [(&str, f64, (f64, f64)); 3] = [
        ("start t=10eps", 10.0 * eps, (-7.0 - 1.0 / 3.0, -7.0 + 1.0 / 3.0)),
        ("start t=14eps", 14.0 * eps, (-3.0 - 2.0 / 3.0, -3.0 + 2.0 / 3.0)),
        ("start t=34eps", 34.0 * eps, (-3.0 - 1.0, -3.0 + 1.0)),
    ];
    let end_table: [(&str, f64, (f64, f64)); 3] = [
        ("end t=10eps", 10.0 * eps, (-1.0 - 1.0 / 3.0, -1.0 + 1.0 / 3.0)),
        ("end t=14eps", 14.0 * eps, (3.0 - 2.0 / 3.0, 3.0 + 2.0 / 3.0)),
        ("end t=34eps", 34.0 * eps, (3.0 - 1.0, 3.0 + 1.0)),
    ];

    // raster over [-2,2]^2 in chart coordinates, cell side 1/4
    let cells_per_side = 16i32;
    let cell = 4.0 / cells_per_side as f64;
    let mut covered = vec![false; (cells_per_side * cells_per_side) as usize];
    let mut mark = |z: Vec2| {
        let ci = ((z[0] + 2.0) / cell).floor() as i32;
        let cj = ((z[1] + 2.0) / cell).floor() as i32;
        if (0..cells_per_side).contains(&ci) && (0..cells_per_side).contains(&cj) {
            covered[(ci * cells_per_side + cj) as usize] = true;
        }
    };

    // per-boundary-time observed coordinate ranges over the whole curve
    let boundaries = [0.0, 10.0 * eps, 14.0 * eps, 34.0 * eps];
    let mut observed: Vec<([f64; 2], [f64; 2])> =
        vec![([f64::INFINITY, f64::NEG_INFINITY], [f64::INFINITY, f64::NEG_INFINITY]); 4];
    let mut start_z1 = [0.0f64; 4];
    let mut end_z1 = [0.0f64; 4];

    for (pi, &p) in curve.iter().enumerate() {
        let mut x = p;
        let mut elapsed = 0.0;
        let mut record = |bi: usize, x: Vec2| {
            let z = chart.to_z(x);
            observed[bi].0[0] = observed[bi].0[0].min(z[0]);
            observed[bi].0[1] = observed[bi].0[1].max(z[0]);
            observed[bi].1[0] = observed[bi].1[0].min(z[1]);
            observed[bi].1[1] = observed[bi].1[1].max(z[1]);
            if pi == 0 {
                start_z1[bi] = z[0];
            }
            if pi == curve.len() - 1 {
                end_z1[bi] = z[0];
            }
        };
        record(0, x);
        mark(chart.to_z(x));
        for seg in &schedule.segments {
            let steps = (seg.duration / dt).ceil().max(1.0) as usize;
            let h = seg.duration / steps as f64;
            for _ in 0..steps {
                x = rk4_step(&seg.field, x, h);
                if !x[0].is_finite() || !x[1].is_finite() {
                    return Err(Error::Numerical(
                        "sweep integration left the finite range".into(),
                    ));
                }
                mark(chart.to_z(x));
            }
            elapsed += seg.duration;
            let bi = boundaries
                .iter()
                .position(|&b| (b - elapsed).abs() < 1e-12)
                .expect("segment boundary is a table time");
            record(bi, x);
        }
    }

    let mut table_checks = Vec::new();
    for (bi, (label, _t, z1r, z2r)) in bulk_table.iter().enumerate() {
        let (o1, o2) = observed[bi];
        let ok1 = o1[0] >= z1r.0 - tol_z && o1[1] <= z1r.1 + tol_z;
        let ok2 = z2r
            .map(|r| o2[0] >= r.0 - tol_z && o2[1] <= r.1 + tol_z)
            .unwrap_or(true);
        table_checks.push(CoordinateCheck {
            time_label: label.to_string(),
            z1_range: *z1r,
            z2_range: *z2r,
            observed_z1: (o1[0], o1[1]),
            observed_z2: (o2[0], o2[1]),
            passed: ok1 && ok2,
        });
    }
    let mut endpoint_checks = Vec::new();
    for (tables, z1_obs) in [(start_table, start_z1), (end_table, end_z1)] {
        for (label, t, z1r) in tables {
            let bi = boundaries
                .iter()
                .position(|&b| (b - t).abs() < 1e-12)
                .expect("table time is a boundary");
            let z1 = z1_obs[bi];
            endpoint_checks.push(CoordinateCheck {
                time_label: label.to_string(),
                z1_range: z1r,
                z2_range: None,
                observed_z1: (z1, z1),
                observed_z2: (f64::NAN, f64::NAN),
                passed: z1 >= z1r.0 - tol_z && z1 <= z1r.1 + tol_z,
            });
        }
    }

    let mut uncovered = Vec::new();
    for ci in 0..cells_per_side {
        for cj in 0..cells_per_side {
            if !covered[(ci * cells_per_side + cj) as usize] {
                uncovered.push((ci, cj));
            }
        }
    }
    let covered_cells = (cells_per_side * cells_per_side) as usize - uncovered.len();
    let passed = table_checks.iter().all(|c| c.passed)
        && endpoint_checks.iter().all(|c| c.passed)
        && uncovered.is_empty();
    Ok(SweepReport {
        eps,
        table_checks,
        endpoint_checks,
        raster_cells: (cells_per_side * cells_per_side) as usize,
        covered_cells,
        uncovered,
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

    fn chart() -> SquareChart {
        build_square(&sol(), [0.0, 0.0], 102).unwrap()
    }

    #[test]
    fn control_at_base_point_is_unit_vector() {
        let fam = sol();
        let v1 = ControlField::new(fam, [3.0, -1.0], 1, 1.0);
        let v2 = ControlField::new(fam, [3.0, -1.0], 2, 1.0);
        assert_eq!(eval_control(&v1, [3.0, -1.0]), [1.0, 0.0]);
        assert_eq!(eval_control(&v2, [3.0, -1.0]), [0.0, 1.0]);
        let neg = ControlField::new(fam, [3.0, -1.0], 2, -1.0);
        assert_eq!(eval_control(&neg, [3.0, -1.0]), [0.0, -1.0]);
    }

    #[test]
    fn control_vanishes_far_away() {
        let v1 = ControlField::new(sol(), [0.0, 0.0], 1, 1.0);
        let v = eval_control(&v1, [20.0, 0.0]);
        assert!(v[0].abs() < 1e-12 && v[1].abs() < 1e-12);
    }

    #[test]
    fn quadratic_bound_holds_on_random_sample() {
        use rand::{Rng, SeedableRng};
        let fam = sol();
        let q = [0.5, -0.2];
        let chart = build_square(&fam, q, 102).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let r = chart.delta * rng.gen::<f64>();
            let theta = std::f64::consts::TAU * rng.gen::<f64>();
            let x = [q[0] + r * theta.cos(), q[1] + r * theta.sin()];
            for component in [1usize, 2] {
                let field = chart.field(component, 1.0);
                let v = eval_control(&field, x);
                let w = field.target();
                let dev = ((v[0] - w[0]).powi(2) + (v[1] - w[1]).powi(2)).sqrt();
                assert!(
                    dev <= chart.c13 * r * r + 1e-15,
                    "bound violated at r = {r}: {dev} > {}",
                    chart.c13 * r * r
                );
            }
        }
    }

    #[test]
    fn chart_invariants() {
        let c = chart();
        assert!(c.eps <= 1.0 / 102.0 + 1e-15);
        assert!(c.t_u >= c.n as f64 * c.eps / 3.0);
        assert_eq!(c.to_z(c.q), [0.0, 0.0]);
        let z = [1.5, -2.0];
        let back = c.to_z(c.from_z(z));
        assert_abs_diff_eq!(back[0], z[0], epsilon = 1e-12);
        assert_abs_diff_eq!(back[1], z[1], epsilon = 1e-12);
        // fields stay within eps of their targets on the whole square
        let half = c.n as f64 * c.eps;
        for i in 0..20 {
            for j in 0..20 {
                let x = [
                    c.q[0] - half + 2.0 * half * i as f64 / 19.0,
                    c.q[1] - half + 2.0 * half * j as f64 / 19.0,
                ];
                for component in [1usize, 2] {
                    let field = c.field(component, 1.0);
                    let v = eval_control(&field, x);
                    let w = field.target();
                    let dev = ((v[0] - w[0]).powi(2) + (v[1] - w[1]).powi(2)).sqrt();
                    assert!(dev <= c.eps + 1e-15);
                }
            }
        }
    }

    #[test]
    fn schedule_structure() {
        let c = chart();
        let s = sweeping_schedule(&c);
        assert_eq!(s.segments.len(), 3);
        assert_abs_diff_eq!(s.total, 34.0 * c.eps, epsilon = 1e-15);
        assert_abs_diff_eq!(s.segments[0].duration, 10.0 * c.eps, epsilon = 1e-15);
        assert_abs_diff_eq!(s.segments[1].duration, 4.0 * c.eps, epsilon = 1e-15);
        assert_abs_diff_eq!(s.segments[2].duration, 20.0 * c.eps, epsilon = 1e-15);
        assert_eq!(s.segments[0].field.component, 2);
        assert_eq!(s.segments[0].field.sign, -1.0);
        assert_eq!(s.segments[1].field.component, 1);
        assert_eq!(s.segments[1].field.sign, 1.0);
        assert_eq!(s.segments[2].field.component, 2);
        assert_eq!(s.segments[2].field.sign, 1.0);
        assert!(s.total <= c.t_u, "34 eps must fit in the unit-speed window");
    }

    #[test]
    fn integration_tracks_target_at_base_point() {
        let c = chart();
        let t = c.t_u;
        let dt = c.eps / 200.0;
        let dev = nospeed_deviation(&c, c.q, 1, 1.0, t, dt).unwrap();
        assert!(dev <= c.eps * t + integrator_tolerance(dt));
    }

    #[test]
    fn integration_reverses() {
        let c = chart();
        let dt = c.eps / 200.0;
        let t = 10.0 * c.eps;
        let x0 = [c.q[0] + 3.0 * c.eps, c.q[1] - 2.0 * c.eps];
        let fwd = ControlSchedule {
            segments: vec![ScheduleSegment { duration: t, field: c.field(1, 1.0) }],
            total: t,
            eps: c.eps,
        };
        let bwd = ControlSchedule {
            segments: vec![ScheduleSegment { duration: t, field: c.field(1, -1.0) }],
            total: t,
            eps: c.eps,
        };
        let mid = *integrate_control(&fwd, x0, dt).unwrap().last().unwrap();
        let back = *integrate_control(&bwd, mid, dt).unwrap().last().unwrap();
        let err = ((back[0] - x0[0]).powi(2) + (back[1] - x0[1]).powi(2)).sqrt();
        // reversing +V1 with -V1 is not an exact ODE inverse (the fields
        // differ away from Q), but near Q it is accurate to O(eps^2 t)
        assert!(err <= 2.0 * c.eps * c.eps * t + 10.0 * integrator_tolerance(dt) * t.max(1.0));
    }

    #[test]
    fn integration_rejects_coarse_step() {
        let c = chart();
        let s = sweeping_schedule(&c);
        assert!(integrate_control(&s, c.q, c.eps).is_err());
    }

    #[test]
    fn zero_field_constant_path() {
        // a field based far away is numerically zero near the origin
        let far = ControlField::new(sol(), [100.0, 0.0], 1, 1.0);
        let sched = ControlSchedule {
            segments: vec![ScheduleSegment { duration: 0.001, field: far }],
            total: 0.001,
            eps: 1.0,
        };
        let path = integrate_control(&sched, [0.0, 0.0], 1e-5).unwrap();
        let end = path.last().unwrap();
        assert!(end[0].abs() < 1e-12 && end[1].abs() < 1e-12);
    }

    #[test]
    fn nospeed_small_grid_passes() {
        let c = chart();
        let report = nospeed_certificate(&c, c.eps / 200.0, 5).unwrap();
        assert!(report.passed, "report: {report:?}");
        assert_eq!(report.violations, 0);
    }

    #[test]
    fn nospeed_deviation_grows_with_radius() {
        let c = chart();
        let dt = c.eps / 200.0;
        let t = c.t_u / 2.0;
        let near = nospeed_deviation(&c, [c.q[0] + 2.0 * c.eps, c.q[1]], 1, 1.0, t, dt).unwrap();
        let far = nospeed_deviation(
            &c,
            [c.q[0] + c.n as f64 * c.eps / 2.0, c.q[1]],
            1,
            1.0,
            t,
            dt,
        )
        .unwrap();
        assert!(far > near, "far {far} vs near {near}");
    }

    #[test]
    fn sweep_straight_segment_passes() {
        let c = chart();
        let curve = vec![c.from_z([-7.0, 0.0]), c.from_z([-1.0, 0.0])];
        let report = sweep_certificate(&c, &curve, c.eps / 200.0).unwrap();
        assert!(report.uncovered.is_empty(), "uncovered: {:?}", report.uncovered);
        assert!(report.passed, "checks: {:#?}", report.table_checks);
    }

    #[test]
    fn sweep_rejects_bad_curve() {
        let c = chart();
        // never reaches Z1 = -1
        let curve = vec![c.from_z([-7.0, 0.0]), c.from_z([-5.0, 0.0])];
        assert!(sweep_certificate(&c, &curve, c.eps / 200.0).is_err());
        // leaves the chart box
        let curve = vec![c.from_z([-7.0, 0.0]), c.from_z([-1.0, 8.0])];
        assert!(sweep_certificate(&c, &curve, c.eps / 200.0).is_err());
    }
}
