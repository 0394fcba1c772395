//! Experiment configuration: JSON in, validated struct out.
//!
//! Unknown keys are rejected and semantic violations are collected and
//! reported together, not one at a time.

use serde::{Deserialize, Serialize};

use crate::covariance::{CorrelationFamily, FamilyKind};
use crate::error::{Error, Result};
use crate::flow::{CurveState, Factorization, StepScheme};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyConfig {
    pub kind: FamilyKind,
    pub length_scale: f64,
    pub mix_weight: f64,
    pub dimension: usize,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            kind: FamilyKind::SolenoidalGaussian,
            length_scale: 1.0,
            mix_weight: 0.0,
            dimension: 2,
        }
    }
}

impl FamilyConfig {
    pub fn build(&self) -> Result<CorrelationFamily<f64>> {
        CorrelationFamily::new(self.kind, self.length_scale, self.mix_weight, self.dimension)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub dt: f64,
    pub jitter: f64,
    pub factorization: Factorization,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            jitter: 1e-10,
            factorization: Factorization::CholeskyWithJitter,
        }
    }
}

impl SchemeConfig {
    pub fn build(&self) -> StepScheme {
        StepScheme {
            dt: self.dt,
            jitter: self.jitter,
            factorization: self.factorization,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    Segment,
    Circle,
    Polyline,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CurveConfig {
    pub kind: CurveKind,
    /// Segment endpoints (kind = segment).
    pub a: [f64; 2],
    pub b: [f64; 2],
    /// Circle geometry (kind = circle).
    pub center: [f64; 2],
    pub radius: f64,
    /// Polyline geometry (kind = polyline).
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
    pub refine_threshold: f64,
    pub max_points: usize,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            kind: CurveKind::Segment,
            a: [0.0, 0.0],
            b: [1.0, 0.0],
            center: [0.0, 0.0],
            radius: 2.0,
            points: Vec::new(),
            closed: false,
            refine_threshold: 0.25,
            max_points: 192,
        }
    }
}

impl CurveConfig {
    pub fn build(&self) -> CurveState {
        match self.kind {
            CurveKind::Segment => {
                CurveState::segment(self.a, self.b, self.refine_threshold, self.max_points)
            }
            CurveKind::Circle => CurveState::circle(
                self.center,
                self.radius,
                self.refine_threshold,
                self.max_points,
            ),
            CurveKind::Polyline => CurveState::from_polyline(
                self.points.clone(),
                self.closed,
                self.refine_threshold,
                self.max_points,
            ),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub cell_size: f64,
    pub extent: i32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            cell_size: 0.25,
            extent: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TargetConfig {
    pub directions: Vec<[f64; 2]>,
    pub t_grid: Vec<f64>,
    pub r: f64,
    pub eps: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            directions: vec![[1.0, 0.0]],
            t_grid: vec![4.0, 6.0, 8.0, 10.0],
            r: 2.0,
            eps: 0.3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub family: FamilyConfig,
    pub scheme: SchemeConfig,
    pub curve: CurveConfig,
    pub horizon: Horizon,
    pub replicas: Replicas,
    pub master_seed: u64,
    pub grid: GridConfig,
    pub targets: TargetConfig,
    pub output: OutputConfig,
}

// newtypes so defaults serialize round-trip cleanly
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(transparent)]
pub struct Horizon(pub f64);

impl Default for Horizon {
    fn default() -> Self {
        Horizon(10.0)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(transparent)]
pub struct Replicas(pub usize);

impl Default for Replicas {
    fn default() -> Self {
        Replicas(64)
    }
}

impl ExperimentConfig {
    /// Collect every semantic violation; empty means valid.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Err(e) = self.family.build() {
            v.push(format!("family: {e}"));
        }
        if !(self.scheme.dt > 0.0) {
            v.push("scheme.dt must be > 0".into());
        }
        if self.scheme.jitter < 0.0 {
            v.push("scheme.jitter must be >= 0".into());
        }
        if !(self.curve.refine_threshold > 0.0) {
            v.push("curve.refine_threshold must be > 0".into());
        }
        if self.curve.max_points < 2 {
            v.push("curve.max_points must be >= 2".into());
        }
        match self.curve.kind {
            CurveKind::Circle if !(self.curve.radius > 0.0) => {
                v.push("curve.radius must be > 0".into());
            }
            CurveKind::Polyline if self.curve.points.len() < 2 => {
                v.push("curve.points needs at least 2 entries".into());
            }
            _ => {}
        }
        if self.horizon.0 < 0.0 {
            v.push("horizon must be >= 0".into());
        }
        if self.replicas.0 < 1 {
            v.push("replicas must be >= 1".into());
        }
        if !(self.grid.cell_size > 0.0) {
            v.push("grid.cell_size must be > 0".into());
        }
        if self.grid.extent < 1 {
            v.push("grid.extent must be >= 1".into());
        }
        if self.targets.directions.is_empty() {
            v.push("targets.directions must be nonempty".into());
        }
        for (i, d) in self.targets.directions.iter().enumerate() {
            if d[0] == 0.0 && d[1] == 0.0 {
                v.push(format!("targets.directions[{i}] must be nonzero"));
            }
        }
        if self.targets.t_grid.is_empty() {
            v.push("targets.t_grid must be nonempty".into());
        }
        if self.targets.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            v.push("targets.t_grid must be strictly increasing".into());
        }
        if !(self.targets.r > 0.0) {
            v.push("targets.r must be > 0".into());
        }
        if !(self.targets.eps > 0.0 && self.targets.eps < 1.0) {
            v.push("targets.eps must lie in (0, 1)".into());
        }
        v
    }

    /// Stable content hash (FNV-1a over the canonical JSON form).
    pub fn digest(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in canon.bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        format!("{h:016x}")
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
        Error::Config(format!(
            "syntax or schema error at line {}, column {}: {e}",
            e.line(),
            e.column()
        ))
    })?;
    let violations = config.violations();
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(Error::Config(violations.join("; ")))
    }
}
