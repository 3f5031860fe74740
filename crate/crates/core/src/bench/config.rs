//! Scenario and verification configs, parsed from TOML.

use serde::{Deserialize, Serialize};

use crate::error::{NcmapError, Result};
use crate::fields::pair_by_id;
use crate::objective::{make_constant, make_scaled_quadratic, make_two_well, Objective};
use crate::optimizer::Recording;
use crate::stepper::StepMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Quadratic,
    Constant,
    TwoWell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    /// Minimizer of a quadratic. Sets the dimension.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    /// Dimension for `constant` and `two_well`.
    #[serde(default)]
    pub dim: Option<usize>,
    /// Additive offset; the level of a `constant` problem.
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "one")]
    pub curvature: f64,
}

fn one() -> f64 {
    1.0
}

impl ProblemConfig {
    pub fn dim(&self) -> Result<usize> {
        match self.kind {
            ProblemKind::Quadratic => self
                .center
                .as_ref()
                .map(Vec::len)
                .ok_or_else(|| NcmapError::Config("problem.center is required for quadratic".into())),
            ProblemKind::Constant | ProblemKind::TwoWell => self
                .dim
                .ok_or_else(|| NcmapError::Config("problem.dim is required".into())),
        }
    }

    pub fn build(&self) -> Result<Objective> {
        match self.kind {
            ProblemKind::Quadratic => {
                let center = self
                    .center
                    .as_ref()
                    .ok_or_else(|| NcmapError::Config("problem.center is required for quadratic".into()))?;
                make_scaled_quadratic(center, self.curvature, self.offset)
            }
            ProblemKind::Constant => make_constant(self.dim()?, self.offset),
            ProblemKind::TwoWell => make_two_well(self.dim()?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub pair: String,
    #[serde(default)]
    pub methods: Vec<StepMethod>,
    pub h: Vec<f64>,
    pub x0: Vec<f64>,
    /// Micro-steps per run. Ignored when `time_horizon` is set.
    #[serde(default)]
    pub max_iter: Option<usize>,
    /// Run each `h` for `time_horizon / h` micro-steps, rounded up to whole
    /// coordinate sweeps.
    #[serde(default)]
    pub time_horizon: Option<f64>,
    #[serde(default)]
    pub stop_tol: f64,
    #[serde(default = "every_step")]
    pub recording: Recording,
}

fn every_step() -> Recording {
    Recording::EveryStep
}

impl AlgorithmConfig {
    pub fn steps_for(&self, h: f64, dim: usize) -> usize {
        match self.time_horizon {
            Some(t) => {
                let period = 4 * dim;
                let steps = (t / h).ceil() as usize;
                steps.div_ceil(period).max(1) * period
            }
            None => self.max_iter.unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma: 0.0,
            seeds: default_seeds(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    ExactGd,
    FdGd,
}

impl Baseline {
    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::ExactGd => "exact_gd",
            Baseline::FdGd => "fd_gd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Iterates in the limit-band window.
    #[serde(default = "default_band_window")]
    pub band_window: usize,
    /// Iterates in the tail-deviation window.
    #[serde(default = "default_tail_window")]
    pub tail_window: usize,
    /// Write every `csv_stride`-th row (the final row is always written).
    #[serde(default = "default_stride")]
    pub csv_stride: usize,
}

fn default_band_window() -> usize {
    100
}

fn default_tail_window() -> usize {
    200
}

fn default_stride() -> usize {
    1
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            band_window: default_band_window(),
            tail_window: default_tail_window(),
            csv_stride: default_stride(),
        }
    }
}

/// Optional pass/fail checks evaluated after the runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    /// Bound on `|y_K - x*|` for every main-algorithm run.
    #[serde(default)]
    pub max_filtered_error: Option<f64>,
    /// Bound on `band / sqrt(h)` for every main-algorithm run.
    #[serde(default)]
    pub max_band_over_sqrt_h: Option<f64>,
    /// Limit bands nonincreasing as h decreases, per method and seed.
    #[serde(default)]
    pub monotone_bands: bool,
    /// Lower bound on `band(largest h) / band(smallest h)`.
    #[serde(default)]
    pub min_band_ratio: Option<f64>,
    /// Fraction of seeds where a method's tail deviation is below the
    /// forward-difference baseline's.
    #[serde(default)]
    pub min_noise_win_fraction: Option<f64>,
    /// Run the Lyapunov probe on main-algorithm runs with `h` up to this.
    #[serde(default)]
    pub lyapunov_max_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub problem: ProblemConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub baselines: Vec<Baseline>,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub output: Option<String>,
}

fn config_err(msg: impl Into<String>) -> NcmapError {
    NcmapError::Config(msg.into())
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.problem.dim()?;
        if dim == 0 {
            return Err(config_err("problem dimension must be at least 1"));
        }
        self.problem.build().map_err(|e| config_err(format!("problem: {e}")))?;
        let a = &self.algorithm;
        pair_by_id(&a.pair).map_err(|e| config_err(format!("algorithm.pair: {e}")))?;
        if a.x0.len() != dim {
            return Err(config_err(format!(
                "algorithm.x0 has {} entries, problem dimension is {dim}",
                a.x0.len()
            )));
        }
        if a.methods.is_empty() && self.baselines.is_empty() {
            return Err(config_err("nothing to run: algorithm.methods and baselines are both empty"));
        }
        if a.h.is_empty() || a.h.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(config_err("algorithm.h must be a non-empty list of positive values"));
        }
        match (a.max_iter, a.time_horizon) {
            (_, Some(t)) if !(t > 0.0 && t.is_finite()) => {
                return Err(config_err("algorithm.time_horizon must be positive"))
            }
            (None, None) | (Some(0), None) => {
                return Err(config_err("algorithm.max_iter (>= 1) or algorithm.time_horizon is required"))
            }
            _ => {}
        }
        if a.stop_tol.is_nan() || a.stop_tol < 0.0 {
            return Err(config_err("algorithm.stop_tol must be >= 0"));
        }
        if !(self.noise.sigma >= 0.0 && self.noise.sigma.is_finite()) {
            return Err(config_err("noise.sigma must be >= 0"));
        }
        if self.noise.seeds.is_empty() {
            return Err(config_err("noise.seeds must not be empty"));
        }
        if self.report.csv_stride == 0 {
            return Err(config_err("report.csv_stride must be >= 1"));
        }
        if self.checks.min_noise_win_fraction.is_some() && !self.baselines.contains(&Baseline::FdGd) {
            return Err(config_err("checks.min_noise_win_fraction needs the fd_gd baseline"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftSpec {
    /// `-grad J` from the analytic gradient.
    NegGradient,
    /// `-grad J (1 + J)` from the analytic gradient.
    NegGradientOnePlusJ,
    /// Euler drift of the pair, by central differences.
    EulerCondition,
    /// Heun drift (the bracket), by central differences.
    HeunCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyCase {
    pub method: StepMethod,
    pub pair: String,
    pub drift: DriftSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub name: String,
    pub dims: Vec<usize>,
    /// Step grid `2^-a ..= 2^-b` given as `[a, b]`.
    pub h_exponents: [i32; 2],
    pub base_points: usize,
    /// Base points are drawn uniformly from the box `center +- radius`.
    pub radius: f64,
    pub center: f64,
    pub curvature: f64,
    pub offset: f64,
    pub seed: u64,
    pub min_slope: f64,
    pub min_r2: f64,
    pub bracket_points: usize,
    pub bracket_tol: f64,
    #[serde(rename = "case")]
    pub cases: Vec<VerifyCase>,
    #[serde(default)]
    pub output: Option<String>,
}

impl VerifyConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: VerifyConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(config_err("dims must be a non-empty list of positive dimensions"));
        }
        let [a, b] = self.h_exponents;
        if b - a < 4 || a < 0 {
            return Err(config_err("h_exponents must span at least 5 values, e.g. [2, 9]"));
        }
        if self.base_points == 0 || self.bracket_points == 0 {
            return Err(config_err("base_points and bracket_points must be positive"));
        }
        if !(self.radius > 0.0 && self.curvature > 0.0) {
            return Err(config_err("radius and curvature must be positive"));
        }
        if self.cases.is_empty() {
            return Err(config_err("at least one [[case]] is required"));
        }
        for c in &self.cases {
            pair_by_id(&c.pair).map_err(|e| config_err(format!("case pair: {e}")))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
[problem]
kind = "quadratic"
center = [2.0]
offset = 6.0
[algorithm]
pair = "sincos"
methods = ["euler"]
h = [0.5]
x0 = [0.5]
max_iter = 40
"#;

    #[test]
    fn parses_minimal() {
        let c = ScenarioConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.noise.seeds, vec![0]);
        assert_eq!(c.report.band_window, 100);
        assert_eq!(c.algorithm.steps_for(0.5, 1), 40);
    }

    #[test]
    fn reports_line_on_syntax_error() {
        let broken = MINIMAL.replace("h = [0.5]", "h = [0.5");
        let err = ScenarioConfig::parse(&broken).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn rejects_bad_values() {
        for (from, to) in [
            ("x0 = [0.5]", "x0 = [0.5, 1.0]"),
            ("pair = \"sincos\"", "pair = \"nope\""),
            ("h = [0.5]", "h = [-0.5]"),
            ("max_iter = 40", "max_iter = 0"),
            ("methods = [\"euler\"]", "methods = [\"rk4\"]"),
            ("offset = 6.0", "offset = 6.0\nbogus = 1"),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(matches!(ScenarioConfig::parse(&text), Err(NcmapError::Config(_))), "{to}");
        }
    }

    #[test]
    fn horizon_rounds_to_sweeps() {
        let text = MINIMAL.replace("max_iter = 40", "time_horizon = 1.0");
        let c = ScenarioConfig::parse(&text).unwrap();
        assert_eq!(c.algorithm.steps_for(0.3, 1), 4);
        assert_eq!(c.algorithm.steps_for(0.001, 2), 1000);
    }
}
