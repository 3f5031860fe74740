//! The iteration loop, the moving-average filter and trajectory recording.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, NcmapError, Result};
use crate::fields::{switched_field, GeneratingPair, StepLabel};
use crate::objective::Cost;
use crate::stepper::{micro_step, StepMethod};

/// Iterates farther than `DIVERGENCE_FACTOR * (1 + |x0|)` from the origin
/// abort the run.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Consecutive settled macro-steps required by the filter stop rule.
pub const SETTLE_STREAK: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recording {
    /// Record every micro-step.
    EveryStep,
    /// Record only macro boundaries (multiples of `4n`) and the final iterate.
    MacroBoundaries,
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub method: StepMethod,
    pub pair: GeneratingPair,
    pub h: f64,
    pub x0: Vec<f64>,
    pub max_iter: usize,
    /// Filter-displacement stop threshold. `0.0` disables the rule.
    pub stop_tol: f64,
    pub recording: Recording,
}

impl OptimizerConfig {
    pub fn new(method: StepMethod, pair: GeneratingPair, h: f64, x0: Vec<f64>, max_iter: usize) -> Self {
        Self {
            method,
            pair,
            h,
            x0,
            max_iter,
            stop_tol: 0.0,
            recording: Recording::EveryStep,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(NcmapError::param(format!("h must be positive, got {}", self.h)));
        }
        if self.max_iter == 0 {
            return Err(NcmapError::param("max_iter must be at least 1"));
        }
        if self.x0.is_empty() {
            return Err(NcmapError::InvalidDimension { expected: 1, got: 0 });
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(NcmapError::param("x0 must be finite"));
        }
        if self.stop_tol.is_nan() || self.stop_tol < 0.0 {
            return Err(NcmapError::param("stop_tol must be >= 0"));
        }
        Ok(())
    }
}

/// Windowed filter: `y` moves by the mean of the last `4n` increments of the
/// iterate. Increments before the first step count as zero.
#[derive(Debug, Clone)]
pub struct FilterState {
    y: Vec<f64>,
    window: Vec<Vec<f64>>,
    head: usize,
}

impl FilterState {
    pub fn new(x0: &[f64]) -> Self {
        let n = x0.len();
        Self {
            y: x0.to_vec(),
            window: vec![vec![0.0; n]; 4 * n],
            head: 0,
        }
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    /// Push `x_{k+1} - x_k` and advance `y`.
    pub fn update(&mut self, increment: &[f64]) -> &[f64] {
        debug_assert_eq!(increment.len(), self.y.len());
        self.window[self.head].copy_from_slice(increment);
        self.head = (self.head + 1) % self.window.len();
        let len = self.window.len() as f64;
        for (i, yi) in self.y.iter_mut().enumerate() {
            let sum: f64 = self.window.iter().map(|inc| inc[i]).sum();
            *yi += sum / len;
        }
        &self.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIter,
    FilterSettled,
}

/// Recorded run. All series have the same length; row `i` describes iterate
/// `x_{k[i]}`, and `labels[i]` is the switched-field label of the step
/// leaving it (absent for baselines).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub k: Vec<usize>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub labels: Vec<Option<StepLabel>>,
    /// Noise-free `J(x_k)`.
    pub values: Vec<f64>,
    /// Counted evaluations spent by this run when `x_k` was reached.
    pub evals: Vec<u64>,
    pub stop: StopReason,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn last_x(&self) -> &[f64] {
        self.x.last().expect("trajectory holds at least x0")
    }

    pub fn last_y(&self) -> &[f64] {
        self.y.last().expect("trajectory holds at least y0")
    }

    pub fn total_evals(&self) -> u64 {
        self.evals.last().copied().unwrap_or(0)
    }

    /// Largest distance to `x_star` over the last `window` iterates.
    pub fn limit_band(&self, window: usize, x_star: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x_star.len())?;
        if window == 0 || window >= self.len() {
            return Err(NcmapError::param(format!(
                "band window {window} must be in 1..{}",
                self.len()
            )));
        }
        Ok(self.x[self.len() - window..]
            .iter()
            .map(|x| dist(x, x_star))
            .fold(0.0, f64::max))
    }

    /// First recorded step index after which every iterate stays within
    /// `radius` of `x_star`.
    pub fn iterations_to_band(&self, radius: f64, x_star: &[f64]) -> Option<usize> {
        let mut first = None;
        for (i, x) in self.x.iter().enumerate().rev() {
            if dist(x, x_star) > radius {
                break;
            }
            first = Some(i);
        }
        first.map(|i| self.k[i])
    }

    /// Root of the summed per-coordinate population variance over the last
    /// `window` iterates.
    pub fn tail_std(&self, window: usize) -> Result<f64> {
        if window < 2 || window > self.len() {
            return Err(NcmapError::param(format!(
                "tail window {window} must be in 2..={}",
                self.len()
            )));
        }
        let tail = &self.x[self.len() - window..];
        let n = window as f64;
        let var: f64 = (0..self.dim())
            .map(|i| {
                let mean = tail.iter().map(|x| x[i]).sum::<f64>() / n;
                tail.iter().map(|x| (x[i] - mean).powi(2)).sum::<f64>() / n
            })
            .sum();
        Ok(var.sqrt())
    }
}

/// Shared recording logic for the main algorithms and the baselines.
pub(crate) struct Recorder {
    traj: Trajectory,
    filter: FilterState,
    guard: f64,
    every_step: bool,
    period: usize,
    eval_base: u64,
}

impl Recorder {
    pub(crate) fn new(obj: &dyn Cost, x0: &[f64], label0: Option<StepLabel>, recording: Recording) -> Self {
        let filter = FilterState::new(x0);
        let traj = Trajectory {
            k: vec![0],
            x: vec![x0.to_vec()],
            y: vec![x0.to_vec()],
            labels: vec![label0],
            values: vec![obj.peek(x0)],
            evals: vec![0],
            stop: StopReason::MaxIter,
        };
        Self {
            traj,
            filter,
            guard: DIVERGENCE_FACTOR * (1.0 + norm(x0)),
            every_step: recording == Recording::EveryStep,
            period: 4 * x0.len(),
            eval_base: obj.eval_count(),
        }
    }

    pub(crate) fn y(&self) -> &[f64] {
        self.filter.y()
    }

    /// Accept `x_{k}` (reached from `prev`). `last` forces recording.
    pub(crate) fn push(
        &mut self,
        obj: &dyn Cost,
        k: usize,
        prev: &[f64],
        x: &[f64],
        label: Option<StepLabel>,
        last: bool,
    ) -> Result<()> {
        let value = obj.peek(x);
        let reason = if x.iter().any(|v| !v.is_finite()) {
            Some("non-finite iterate".to_string())
        } else if !value.is_finite() {
            Some("non-finite objective value".to_string())
        } else if norm(x) > self.guard {
            Some(format!("iterate norm exceeded {:.3e}", self.guard))
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(NcmapError::Diverged {
                step: k,
                reason,
                partial: Box::new(self.traj.clone()),
            });
        }
        let inc: Vec<f64> = x.iter().zip(prev).map(|(a, b)| a - b).collect();
        self.filter.update(&inc);
        if self.every_step || k.is_multiple_of(self.period) || last {
            self.traj.k.push(k);
            self.traj.x.push(x.to_vec());
            self.traj.y.push(self.filter.y().to_vec());
            self.traj.labels.push(label);
            self.traj.values.push(value);
            self.traj.evals.push(obj.eval_count() - self.eval_base);
        }
        Ok(())
    }

    pub(crate) fn finish(mut self, stop: StopReason) -> Trajectory {
        self.traj.stop = stop;
        self.traj
    }
}

/// Run the derivative-free iteration `x_{k+1} = M_{g_k}(x_k)` from `x0` until
/// `max_iter` micro-steps or the filter stop rule fires.
pub fn run(obj: &mut dyn Cost, config: &OptimizerConfig) -> Result<Trajectory> {
    config.validate()?;
    let n = config.x0.len();
    check_dim(obj.dim(), n)?;
    let sf = switched_field(config.pair.clone(), n)?;
    let period = sf.period();

    let mut rec = Recorder::new(obj, &config.x0, Some(sf.label(0)), config.recording);
    let mut x = config.x0.clone();
    let mut y_boundary = config.x0.clone();
    let mut streak = 0;
    let mut stop = StopReason::MaxIter;

    for k in 0..config.max_iter {
        let next = micro_step(&sf, config.method, obj, k, config.h, &x)?;
        let step = k + 1;
        let at_boundary = step % period == 0;
        let mut done = step == config.max_iter;
        rec.push(obj, step, &x, &next, Some(sf.label(step)), done)?;
        x = next;

        if at_boundary && config.stop_tol > 0.0 {
            let moved = dist(rec.y(), &y_boundary);
            streak = if moved <= config.stop_tol { streak + 1 } else { 0 };
            y_boundary = rec.y().to_vec();
            if streak >= SETTLE_STREAK && !done {
                stop = StopReason::FilterSettled;
                done = true;
                rec.force_last(obj, step, &x, Some(sf.label(step)));
            }
        }
        if done {
            break;
        }
    }
    Ok(rec.finish(stop))
}

impl Recorder {
    /// Make sure the iterate at step `k` is the final recorded row.
    fn force_last(&mut self, obj: &dyn Cost, k: usize, x: &[f64], label: Option<StepLabel>) {
        if self.traj.k.last() != Some(&k) {
            self.traj.k.push(k);
            self.traj.x.push(x.to_vec());
            self.traj.y.push(self.filter.y().to_vec());
            self.traj.labels.push(label);
            self.traj.values.push(obj.peek(x));
            self.traj.evals.push(obj.eval_count() - self.eval_base);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{pair_simple, pair_sincos, Phase};
    use crate::objective::{make_constant, make_quadratic, Objective};

    fn setup_p() -> Objective {
        make_quadratic(&[2.0], 6.0).unwrap()
    }

    #[test]
    fn filter_zero_increments() {
        let mut f = FilterState::new(&[1.0, 2.0]);
        assert_eq!(f.window_len(), 8);
        f.update(&[0.0, 0.0]);
        assert_eq!(f.y(), &[1.0, 2.0]);
    }

    #[test]
    fn filter_first_step() {
        let mut f = FilterState::new(&[0.5]);
        f.update(&[0.8]);
        assert_eq!(f.y(), &[0.5 + 0.8 / 4.0]);
    }

    #[test]
    fn filter_periodic_increments_hold_still() {
        let mut f = FilterState::new(&[0.0]);
        let cycle = [0.3, 0.1, -0.3, -0.1];
        // fill the window first
        for inc in cycle {
            f.update(&[inc]);
        }
        let y = f.y()[0];
        for _ in 0..25 {
            for inc in cycle {
                f.update(&[inc]);
                assert!((f.y()[0] - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn run_series_are_consistent() {
        let mut j = setup_p();
        let cfg = OptimizerConfig::new(StepMethod::Heun, pair_sincos(), 0.5, vec![0.5], 40);
        let t = run(&mut j, &cfg).unwrap();
        assert_eq!(t.len(), 41);
        for s in [t.y.len(), t.labels.len(), t.values.len(), t.evals.len(), t.k.len()] {
            assert_eq!(s, 41);
        }
        assert_eq!(t.k, (0..=40).collect::<Vec<_>>());
        assert_eq!(t.total_evals(), 80);
        assert_eq!(t.labels[0].unwrap().phase, Phase::PlusF1);
        assert_eq!(t.labels[3].unwrap().phase, Phase::MinusF2);
        assert_eq!(t.values[0], 8.25);
        assert_eq!(t.stop, StopReason::MaxIter);
    }

    #[test]
    fn run_rejects_bad_config() {
        let mut j = setup_p();
        let mut cfg = OptimizerConfig::new(StepMethod::Euler, pair_sincos(), 0.0, vec![0.5], 10);
        assert!(run(&mut j, &cfg).is_err());
        cfg.h = 0.1;
        cfg.max_iter = 0;
        assert!(run(&mut j, &cfg).is_err());
        cfg.max_iter = 10;
        cfg.x0 = vec![0.5, 0.5];
        assert!(matches!(run(&mut j, &cfg), Err(NcmapError::InvalidDimension { .. })));
    }

    #[test]
    fn constant_objective_returns_each_sweep() {
        let mut j = make_constant(2, 5.0).unwrap();
        let mut cfg = OptimizerConfig::new(StepMethod::Euler, pair_simple(), 0.2, vec![0.5, -0.5], 800);
        cfg.recording = Recording::MacroBoundaries;
        let t = run(&mut j, &cfg).unwrap();
        assert_eq!(t.len(), 101);
        for x in &t.x {
            assert!(dist(x, &[0.5, -0.5]) < 1e-10);
        }
    }

    #[test]
    fn filter_stop_rule_fires() {
        let mut j = make_constant(1, 5.0).unwrap();
        let mut cfg = OptimizerConfig::new(StepMethod::Euler, pair_sincos(), 0.1, vec![0.5], 1000);
        cfg.stop_tol = 1e-9;
        let t = run(&mut j, &cfg).unwrap();
        assert_eq!(t.stop, StopReason::FilterSettled);
        assert_eq!(*t.k.last().unwrap(), 16);
    }

    #[test]
    fn divergence_carries_partial_trajectory() {
        // simple pair with Euler on a large negative offset pushes away fast.
        let mut j = make_quadratic(&[0.0], -1e3).unwrap();
        let cfg = OptimizerConfig::new(StepMethod::Euler, pair_simple(), 0.5, vec![3.0], 10_000);
        match run(&mut j, &cfg) {
            Err(NcmapError::Diverged { step, partial, .. }) => {
                assert!(step > 0);
                assert!(!partial.is_empty());
                assert!(partial.len() <= step);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn band_and_tail_stats() {
        let t = Trajectory {
            k: vec![0, 1, 2, 3],
            x: vec![vec![5.0], vec![2.3], vec![1.8], vec![2.1]],
            y: vec![vec![0.0]; 4],
            labels: vec![None; 4],
            values: vec![0.0; 4],
            evals: vec![0; 4],
            stop: StopReason::MaxIter,
        };
        assert!((t.limit_band(3, &[2.0]).unwrap() - 0.3).abs() < 1e-12);
        assert!(t.limit_band(4, &[2.0]).is_err());
        assert!(t.limit_band(0, &[2.0]).is_err());
        assert_eq!(t.iterations_to_band(0.3 + 1e-12, &[2.0]), Some(1));
        assert_eq!(t.iterations_to_band(0.01, &[2.0]), None);
        let s = t.tail_std(2).unwrap();
        assert!((s - 0.15).abs() < 1e-12);
    }

    #[test]
    fn converged_tail_has_zero_band() {
        let t = Trajectory {
            k: vec![0, 1, 2],
            x: vec![vec![0.0], vec![2.0], vec![2.0]],
            y: vec![vec![0.0]; 3],
            labels: vec![None; 3],
            values: vec![0.0; 3],
            evals: vec![0; 3],
            stop: StopReason::MaxIter,
        };
        assert_eq!(t.limit_band(2, &[2.0]).unwrap(), 0.0);
    }
}
