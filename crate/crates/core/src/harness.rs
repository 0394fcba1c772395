//! Suite orchestration: dispatches a validated configuration to the
//! analysis, simulation, and verification entry points, collects named
//! outcomes, and persists JSON reports, JSON-lines samples, and CSV plot
//! data.
//!
//! Sample streams and CSV files are deterministic down to the byte for a
//! fixed (config, seed); run records and reports carry wall-clock timings
//! and are excluded from that contract.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::battery::{main_replica_seeds, run_battery, BatteryParams};
use crate::config::ExperimentConfig;
use crate::control::{build_square, nospeed_certificate, sweep_certificate};
use crate::covariance::two_point_matrix;
use crate::error::{Error, Result};
use crate::flow::{simulate_curve, CurveState, Trajectory};
use crate::radial::{
    build_lyapunov_f, eval_g, eval_gtilde, radial_coefficients, simulate_radial,
    submartingale_check,
};
use crate::seed::{derive_labeled_seed, derive_seed};
use crate::shape::{
    collect_hitting_samples, concentration_from_samples, displacement_bound,
    estimate_stable_norm_from_samples, tail_exponent, ShapeRunParams,
};
use crate::stats::ks_two_sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Analyze,
    Radial,
    LyapunovFn,
    Sweep,
    Simulate,
    Shape,
    Verify,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Analyze,
        Suite::Radial,
        Suite::LyapunovFn,
        Suite::Sweep,
        Suite::Simulate,
        Suite::Shape,
        Suite::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Analyze => "analyze",
            Suite::Radial => "radial",
            Suite::LyapunovFn => "lyapunov-fn",
            Suite::Sweep => "sweep",
            Suite::Simulate => "simulate",
            Suite::Shape => "shape",
            Suite::Verify => "verify",
        }
    }

    pub fn parse(text: &str) -> Result<Suite> {
        Suite::ALL
            .into_iter()
            .find(|s| s.name() == text)
            .ok_or_else(|| {
                let names: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
                Error::Config(format!(
                    "unknown suite '{text}'; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub suite: String,
    pub config_digest: String,
    pub code_version: String,
    pub master_seed: u64,
    pub replica_seeds: Vec<u64>,
    pub wall_seconds: f64,
    pub outcomes: Vec<Outcome>,
    pub passed: bool,
}

/// Nine significant digits, the documented precision of plot-facing CSV.
fn fmt9(x: f64) -> String {
    if x == 0.0 {
        "0.0".into()
    } else {
        format!("{x:.8e}")
    }
}

struct Sink {
    out_dir: Option<PathBuf>,
}

impl Sink {
    fn new(out_dir: Option<&str>) -> Result<Self> {
        let out_dir = match out_dir {
            Some(dir) => {
                let p = PathBuf::from(dir);
                fs::create_dir_all(&p)?;
                Some(p)
            }
            None => None,
        };
        Ok(Self { out_dir })
    }

    fn path(&self, name: &str) -> Option<PathBuf> {
        self.out_dir.as_ref().map(|d| d.join(name))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        if let Some(p) = self.path(name) {
            let mut text = serde_json::to_string_pretty(value)?;
            text.push('\n');
            fs::write(p, text)?;
        }
        Ok(())
    }

    /// JSON-lines stream, one record per line, in the given order.
    fn write_jsonl<T: Serialize>(&self, name: &str, records: &[T]) -> Result<()> {
        if let Some(p) = self.path(name) {
            let mut file = fs::File::create(p)?;
            for r in records {
                serde_json::to_writer(&mut file, r)?;
                file.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    fn write_csv(&self, name: &str, header: &str, rows: &[Vec<f64>]) -> Result<()> {
        if let Some(p) = self.path(name) {
            let mut text = String::from(header);
            text.push('\n');
            for row in rows {
                let cells: Vec<String> = row.iter().map(|&x| fmt9(x)).collect();
                text.push_str(&cells.join(","));
                text.push('\n');
            }
            fs::write(p, text)?;
        }
        Ok(())
    }
}

/// Survival curve of a sample set: (level, fraction strictly above), with
/// the survival column monotone nonincreasing by construction.
fn survival_rows(values: &[f64]) -> Vec<Vec<f64>> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let mut rows = Vec::with_capacity(n);
    for (i, &v) in sorted.iter().enumerate() {
        if i + 1 < n && sorted[i + 1] == v {
            continue; // keep the last index of a tie block
        }
        rows.push(vec![v, (n - i - 1) as f64 / n as f64]);
    }
    rows
}

pub fn run_suite(config: &ExperimentConfig, suite: Suite) -> Result<RunRecord> {
    let start = Instant::now();
    let sink = Sink::new(config.output.out_dir.as_deref())?;
    let (outcomes, replica_seeds) = match suite {
        Suite::Analyze => run_analyze(config, &sink)?,
        Suite::Radial => run_radial(config, &sink)?,
        Suite::LyapunovFn => run_lyapunov_fn(config, &sink)?,
        Suite::Sweep => run_sweep(config, &sink)?,
        Suite::Simulate => run_simulate(config, &sink)?,
        Suite::Shape => run_shape(config, &sink)?,
        Suite::Verify => run_verify(config, &sink)?,
    };
    let record = RunRecord {
        suite: suite.name().into(),
        config_digest: config.digest(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        master_seed: config.master_seed,
        replica_seeds,
        wall_seconds: start.elapsed().as_secs_f64(),
        passed: outcomes.iter().all(|o| o.passed),
        outcomes,
    };
    sink.write_json("run_record.json", &record)?;
    Ok(record)
}

type SuiteOut = (Vec<Outcome>, Vec<u64>);

fn run_analyze(config: &ExperimentConfig, sink: &Sink) -> Result<SuiteOut> {
    let family = config.family.build()?;
    let exponents = family.lyapunov_exponents();
    let probe_radii = [0.25, 0.5, 1.0, 2.0, 4.0];
    let spectra: Vec<_> = probe_radii
        .iter()
        .map(|&r| family.spectrum_report(&[r, 0.0]))
        .collect();
    // worst residual between analytic spectra and a numeric eigensolve
    let mut worst = 0.0f64;
    for (&r, report) in probe_radii.iter().zip(&spectra) {
        let numeric = two_point_matrix(&family, &[r, 0.0], &[0.0, 0.0])
            .symmetric_eigen()
            .eigenvalues;
        let mut numeric: Vec<f64> = numeric.iter().copied().collect();
        numeric.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut analytic: Vec<f64> = report
            .eigenvalues_bbar
            .iter()
            .flat_map(|&(v, m)| std::iter::repeat(v).take(m))
            .collect();
        analytic.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in analytic.iter().zip(&numeric) {
            worst = worst.max((a - b).abs());
        }
    }
    let report = json!({
        "family": config.family,
        "beta_l": family.beta_l(),
        "beta_n": family.beta_n(),
        "exponents": exponents,
        "spectra": spectra,
        "taylor_radius_at_0_05": family.taylor_radius(0.05)?,
        "max_spectrum_residual": worst,
    });
    sink.write_json("analyze_report.json", &report)?;
    let rows: Vec<Vec<f64>> = (1..=500)
        .map(|k| {
            let r = 5.0 * k as f64 / 500.0;
            let c = family.eval_correlations(r).expect("r > 0");
            vec![r, c.b_l, c.b_n, c.b_l_d1, c.b_n_d1]
        })
        .collect();
    sink.write_csv("analyze_correlations.csv", "r,b_l,b_n,b_l_d1,b_n_d1", &rows)?;
    let outcomes = vec![Outcome {
        name: "spectrum-consistency".into(),
        passed: worst <= 1e-10,
        detail: format!("max |analytic - numeric| eigenvalue residual = {worst:.3e}"),
    }];
    Ok((outcomes, Vec::new()))
}

#[derive(Serialize)]
struct RadialSampleRecord {
    trial: u64,
    arm: &'static str,
    index: usize,
    value: f64,
}

fn run_radial(config: &ExperimentConfig, sink: &Sink) -> Result<SuiteOut> {
    let family = config.family.build()?;
    let coeffs = radial_coefficients(&family, family.dimension)?;
    let n = config.replicas.0;
    let r0 = 0.5 * config.family.length_scale;
    let horizon = config.horizon.0;
    let dt = config.scheme.dt;
    let mut p_values = Vec::new();
    let mut records = Vec::new();
    let mut seeds = Vec::new();
    for trial in 0..5u64 {
        let mut radial_arm = Vec::with_capacity(n);
        for k in 0..n {
            let seed = derive_labeled_seed(config.master_seed, trial * n as u64 + k as u64, 14);
            seeds.push(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let path = simulate_radial(&coeffs, r0, horizon, dt, &mut rng)?;
            radial_arm.push(*path.last().expect("nonempty path"));
        }
        let joint_arm: Vec<f64> = (0..n)
            .map(|k| {
                let seed =
                    derive_labeled_seed(config.master_seed, trial * n as u64 + k as u64, 15);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                crate::battery::joint_separation(
                    &family,
                    [0.0, 0.0],
                    [r0, 0.0],
                    horizon,
                    dt,
                    &mut rng,
                )
            })
            .collect::<Result<_>>()?;
        let (_, p) = ks_two_sample(&radial_arm, &joint_arm)?;
        p_values.push(p);
        for (index, &value) in radial_arm.iter().enumerate() {
            records.push(RadialSampleRecord { trial, arm: "separation-sde", index, value });
        }
        for (index, &value) in joint_arm.iter().enumerate() {
            records.push(RadialSampleRecord { trial, arm: "two-point-flow", index, value });
        }
    }
    sink.write_jsonl("radial_samples.jsonl", &records)?;
    let pooled_sde: Vec<f64> = records
        .iter()
        .filter(|r| r.arm == "separation-sde")
        .map(|r| r.value)
        .collect();
    let pooled_joint: Vec<f64> = records
        .iter()
        .filter(|r| r.arm == "two-point-flow")
        .map(|r| r.value)
        .collect();
    sink.write_csv(
        "radial_survival_sde.csv",
        "separation,survival",
        &survival_rows(&pooled_sde),
    )?;
    sink.write_csv(
        "radial_survival_flow.csv",
        "separation,survival",
        &survival_rows(&pooled_joint),
    )?;
    let mut sorted_p = p_values.clone();
    sorted_p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_p = sorted_p[sorted_p.len() / 2];
    sink.write_json(
        "radial_report.json",
        &json!({ "p_values": p_values, "median_p": median_p, "samples_per_arm": n }),
    )?;
    let outcomes = vec![Outcome {
        name: "separation-oracle-equivalence".into(),
        passed: median_p > 0.01,
        detail: format!("median KS p = {median_p:.4} over 5 trials"),
    }];
    Ok((outcomes, seeds))
}

fn run_lyapunov_fn(config: &ExperimentConfig, sink: &Sink) -> Result<SuiteOut> {
    let family = config.family.build()?;
    let f = build_lyapunov_f(&family, family.dimension)?;
    let gap_eighth = f.g_floor;
    let mut min_g = f64::INFINITY;
    let mut monotone = true;
    let mut rows = Vec::with_capacity(2000);
    for k in 1..=2000 {
        let r = 1e-4 + (10.0 - 1e-4) * k as f64 / 2000.0;
        let g = eval_g(&f, r)?;
        let gt = eval_gtilde(&f, r)?;
        if f.d1(r) <= 0.0 {
            monotone = false;
        }
        min_g = min_g.min(g);
        rows.push(vec![r, f.value(r), f.d1(r), f.d2(r), g, gt]);
    }
    sink.write_csv("lyapunov_fn.csv", "r,f,f_d1,f_d2,g,g_tilde", &rows)?;
    let replicas = config.replicas.0;
    let seed = derive_labeled_seed(config.master_seed, 0, 16);
    let sub = submartingale_check(
        &f,
        &[0.05, 0.2, 0.5, 1.0, 2.0, 5.0],
        1.0,
        config.scheme.dt.min(1e-3),
        replicas,
        seed,
    )?;
    sink.write_json(
        "lyapunov_fn_report.json",
        &json!({ "function": f, "min_g": min_g, "monotone": monotone, "submartingale": sub }),
    )?;
    let outcomes = vec![
        Outcome {
            name: "drift-floor".into(),
            passed: monotone && min_g >= gap_eighth - 1e-12,
            detail: format!("min g = {min_g:.6} (floor {gap_eighth:.6}), f' > 0: {monotone}"),
        },
        Outcome {
            name: "submartingale-drift".into(),
            passed: sub.passed,
            detail: format!("{} start separations checked", sub.entries.len()),
        },
    ];
    Ok((outcomes, vec![seed]))
}

fn run_sweep(config: &ExperimentConfig, sink: &Sink) -> Result<SuiteOut> {
    let family = config.family.build()?;
    let chart = build_square(&family, [0.0, 0.0], 102)?;
    let nospeed = nospeed_certificate(&chart, chart.eps / 200.0, 21)?;
    let a = chart.from_z([-7.0, 0.0]);
    let b = chart.from_z([-1.0, 0.0]);
    let sweep = sweep_certificate(&chart, &[a, b], chart.eps / 200.0)?;
    sink.write_json(
        "sweep_report.json",
        &json!({ "chart": chart, "nospeed": nospeed, "sweep": sweep }),
    )?;
    let outcomes = vec![
        Outcome {
            name: "no-speed".into(),
            passed: nospeed.passed,
            detail: format!("{} checks, {} violations", nospeed.checks, nospeed.violations),
        },
        Outcome {
            name: "raster-sweep".into(),
            passed: sweep.passed,
            detail: format!("{}/{} raster cells covered", sweep.covered_cells, sweep.raster_cells),
        },
    ];
    Ok((outcomes, Vec::new()))
}

#[derive(Serialize)]
struct FinalCloudRecord {
    replica: usize,
    time: f64,
    points: Vec<[f64; 2]>,
}

fn run_simulate(config: &ExperimentConfig, sink: &Sink) -> Result<SuiteOut> {
    let family = config.family.build()?;
    let curve = config.curve.build();
    let scheme = config.scheme.build();
    let replicas = config.replicas.0;
    let horizon = config.horizon.0;
    let seeds: Vec<u64> = (0..replicas)
        .map(|k| derive_seed(config.master_seed, k as u64))
        .collect();
    let trajectories: Vec<Trajectory> = seeds
        .iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            simulate_curve(&family, &curve, horizon, &scheme, &mut rng, 5)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (rep, traj) in trajectories.iter().enumerate() {
        for snap in &traj.snapshots {
            rows.push(vec![rep as f64, snap.time, crate::flow::diameter(snap)]);
        }
    }
    sink.write_csv("simulate_diameter.csv", "replica,time,diameter", &rows)?;
    let finals: Vec<FinalCloudRecord> = trajectories
        .iter()
        .enumerate()
        .map(|(rep, t)| {
            let last = t.snapshots.last().expect("nonempty");
            FinalCloudRecord {
                replica: rep,
                time: last.time,
                points: last.points.clone(),
            }
        })
        .collect();
    sink.write_jsonl("simulate_samples.jsonl", &finals)?;
    let displacement = displacement_bound(&trajectories, horizon);
    sink.write_json("simulate_report.json", &json!({ "displacement": displacement }))?;
    let stable = if horizon > 0.0 && replicas >= 2 {
        let (a, b) = (displacement.p95_rate, displacement.p95_rate_half);
        (a - b).abs() <= 0.5 * a.max(b)
    } else {
        true
    };
    let outcomes = vec![Outcome {
        name: "linear-growth-ceiling".into(),
        passed: stable,
        detail: format!(
            "p95 excursion rate {:.3} at T vs {:.3} at T/2",
            displacement.p95_rate, displacement.p95_rate_half
        ),
    }];
    Ok((outcomes, seeds))
}

fn run_shape(config: &ExperimentConfig, sink: &Sink) -> Result<SuiteOut> {
    let family = config.family.build()?;
    let r = config.targets.r;
    let t_grid = config.targets.t_grid.clone();
    let d = config.targets.directions[0];
    let norm = (d[0] * d[0] + d[1] * d[1]).sqrt();
    let v = [d[0] / norm, d[1] / norm];
    let params = ShapeRunParams {
        horizon: config.horizon.0,
        dt: config.scheme.dt,
        refine_threshold: config.curve.refine_threshold,
        max_points: config.curve.max_points,
        snapshot_stride: 1,
    };
    let curve = CurveState::circle([0.0, 0.0], r, params.refine_threshold, params.max_points);
    let targets: Vec<([f64; 2], f64)> =
        t_grid.iter().map(|&t| ([t * v[0], t * v[1]], r)).collect();
    let replicas = config.replicas.0;
    let samples =
        collect_hitting_samples(&family, &curve, &targets, &params, replicas, config.master_seed)?;
    let est = estimate_stable_norm_from_samples(v, r, &t_grid, &samples)?;
    let concentration = if est.slope > 0.0 {
        Some(concentration_from_samples(&t_grid, &samples, est.slope)?)
    } else {
        None
    };
    let t_ref = t_grid.last().copied().unwrap_or(1.0);
    let tail = tail_exponent(&samples.concat(), t_ref).ok();
    let flat: Vec<_> = samples.iter().flatten().collect();
    sink.write_jsonl("shape_samples.jsonl", &flat)?;
    let fit_rows: Vec<Vec<f64>> = est
        .per_t
        .iter()
        .map(|s| {
            vec![
                s.t,
                s.mean,
                s.std_error,
                est.intercept + est.slope * s.t,
                s.censored as f64,
            ]
        })
        .collect();
    sink.write_csv(
        "shape_fit.csv",
        "t,mean_tau,std_error,fitted,censored",
        &fit_rows,
    )?;
    let scaled: Vec<f64> = samples
        .concat()
        .iter()
        .filter_map(|s| s.tau)
        .map(|tau| tau / t_ref)
        .collect();
    sink.write_csv(
        "shape_survival.csv",
        "tau_over_t,survival",
        &survival_rows(&scaled),
    )?;
    sink.write_json(
        "shape_report.json",
        &json!({ "estimate": est, "concentration": concentration, "tail": tail }),
    )?;
    let seeds: Vec<u64> = (0..replicas)
        .map(|k| derive_seed(config.master_seed, k as u64))
        .collect();
    let outcomes = vec![Outcome {
        name: "stable-norm-estimate".into(),
        passed: est.reliable,
        detail: format!(
            "slope {:.3} +- {:.3}, ball radius {:.3}, reliable: {}",
            est.slope, est.slope_std_error, est.ball_radius, est.reliable
        ),
    }];
    Ok((outcomes, seeds))
}

fn run_verify(config: &ExperimentConfig, sink: &Sink) -> Result<SuiteOut> {
    let params = BatteryParams::default();
    let (report, artifacts) = run_battery(config.master_seed, &params)?;
    sink.write_json("verify_report.json", &report)?;
    sink.write_json("verify_artifacts.json", &artifacts)?;
    let per_t_rows = |est: &crate::shape::StableNormEstimate| -> Vec<Vec<f64>> {
        est.per_t
            .iter()
            .map(|s| vec![s.t, s.mean, s.std_error, est.intercept + est.slope * s.t])
            .collect()
    };
    sink.write_csv(
        "verify_fit_r2.csv",
        "t,mean_tau,std_error,fitted",
        &per_t_rows(&artifacts.stable_norm_r2),
    )?;
    sink.write_csv(
        "verify_fit_r4.csv",
        "t,mean_tau,std_error,fitted",
        &per_t_rows(&artifacts.stable_norm_r4),
    )?;
    let dir_rows: Vec<Vec<f64>> = artifacts
        .direction_means
        .iter()
        .map(|d| vec![d.angle_degrees, d.mean, d.std_error])
        .collect();
    sink.write_csv("verify_directions.csv", "angle_degrees,mean_tau,std_error", &dir_rows)?;
    let outcomes: Vec<Outcome> = report
        .outcomes
        .iter()
        .map(|o| Outcome {
            name: format!("{:02}-{}", o.id, o.name),
            passed: o.passed,
            detail: o.detail.clone(),
        })
        .collect();
    let seeds = main_replica_seeds(config.master_seed, params.replicas_main);
    Ok((outcomes, seeds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()).unwrap(), s);
        }
        assert!(Suite::parse("nope").is_err());
    }

    #[test]
    fn survival_rows_are_monotone() {
        let rows = survival_rows(&[3.0, 1.0, 2.0, 2.0, 5.0]);
        for w in rows.windows(2) {
            assert!(w[1][1] <= w[0][1]);
            assert!(w[1][0] > w[0][0]);
        }
        assert_eq!(rows.last().unwrap()[1], 0.0);
    }

    #[test]
    fn analyze_suite_runs_without_output_dir() {
        let config = parse_config("{}").unwrap();
        let record = run_suite(&config, Suite::Analyze).unwrap();
        assert!(record.passed);
        assert_eq!(record.suite, "analyze");
        assert_eq!(record.config_digest, config.digest());
    }

    #[test]
    fn radial_suite_is_deterministic_in_its_samples() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let base = r#"{"replicas": 24, "horizon": 0.5, "scheme": {"dt": 0.005}, "output": {"out_dir": "DIR"}}"#;
        let mut bytes = Vec::new();
        for dir in [&dir1, &dir2] {
            let text = base.replace("DIR", dir.path().to_str().unwrap());
            let config = parse_config(&text).unwrap();
            run_suite(&config, Suite::Radial).unwrap();
            bytes.push(std::fs::read(dir.path().join("radial_samples.jsonl")).unwrap());
        }
        assert_eq!(bytes[0], bytes[1]);
        assert!(!bytes[0].is_empty());
    }

    #[test]
    fn simulate_suite_emits_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            r#"{{"replicas": 3, "horizon": 0.4, "scheme": {{"dt": 0.02}},
                "curve": {{"kind": "circle", "radius": 1.0, "max_points": 24}},
                "output": {{"out_dir": "{}"}}}}"#,
            dir.path().to_str().unwrap()
        );
        let config = parse_config(&text).unwrap();
        let record = run_suite(&config, Suite::Simulate).unwrap();
        assert_eq!(record.replica_seeds.len(), 3);
        for name in [
            "run_record.json",
            "simulate_diameter.csv",
            "simulate_samples.jsonl",
            "simulate_report.json",
        ] {
            assert!(dir.path().join(name).exists(), "{name} missing");
        }
        let csv = std::fs::read_to_string(dir.path().join("simulate_diameter.csv")).unwrap();
        assert!(csv.starts_with("replica,time,diameter\n"));
    }
}
