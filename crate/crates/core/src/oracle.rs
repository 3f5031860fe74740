//! Verification machinery that is independent of the stepping code:
//! central-difference gradients, bracket and descent-expression evaluation,
//! log-log residual-order fits, a Lyapunov decrease probe, and the gradient
//! descent baselines used for comparison.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::{check_dim, NcmapError, Result};
use crate::fields::{switched_field, GeneratingPair, PairValidity};
use crate::objective::{make_quadratic, Cost};
use crate::optimizer::{Recorder, Recording, StopReason, Trajectory};
use crate::stepper::{macro_step, StepMethod};

/// Central-difference step shared by all oracle derivatives.
pub const FD_STEP: f64 = 1e-6;

/// Residuals below this are treated as exact cancellation and left out of
/// the slope fit.
pub const EXACT_CANCELLATION: f64 = 1e-13;

/// Minimum log-log slope accepted as `O(h^{3/2})`. Below 1.5 to absorb the
/// curvature of the fit at finite h.
pub const ORDER_SLOPE_MIN: f64 = 1.4;

/// Minimum coefficient of determination for a slope fit to count.
pub const ORDER_R2_MIN: f64 = 0.98;

/// Tolerance of the empirical pair-validity check.
pub const VALIDITY_TOL: f64 = 1e-3;

/// Central differences, one coordinate at a time.
pub fn fd_gradient<F>(mut f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(NcmapError::param(format!("difference step must be positive, got {step}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let fp = f(&probe);
        probe[i] = x[i] - step;
        let fm = f(&probe);
        probe[i] = x[i];
        if !(fp.is_finite() && fm.is_finite()) {
            return Err(NcmapError::OracleFailure(format!(
                "non-finite evaluation near coordinate {i} of {x:?}"
            )));
        }
        grad.push((fp - fm) / (2.0 * step));
    }
    Ok(grad)
}

/// `[f1, f2](x) = grad f2(x) f1(x) - grad f1(x) f2(x)`.
pub fn bracket(pair: &GeneratingPair, obj: &dyn Cost, x: &[f64], step: f64) -> Result<Vec<f64>> {
    check_dim(obj.dim(), x.len())?;
    let g1 = fd_gradient(|p| pair.f1(obj, p), x, step)?;
    let g2 = fd_gradient(|p| pair.f2(obj, p), x, step)?;
    let (f1, f2) = (pair.f1(obj, x), pair.f2(obj, x));
    Ok(g2.iter().zip(&g1).map(|(a, b)| a * f1 - b * f2).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentExpression {
    /// `[f1,f2] - grad f1 f1 - grad f2 f2`, the Euler macro-step drift.
    EulerCondition,
    /// `[f1,f2]`, the Heun macro-step drift.
    HeunCondition,
    /// `-grad J`.
    NegGradient,
}

impl DescentExpression {
    /// Drift of the macro-step for the given method.
    pub fn for_method(method: StepMethod) -> Self {
        match method {
            StepMethod::Euler => DescentExpression::EulerCondition,
            StepMethod::Heun => DescentExpression::HeunCondition,
        }
    }
}

pub fn descent_expr(
    pair: &GeneratingPair,
    which: DescentExpression,
    obj: &dyn Cost,
    x: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    check_dim(obj.dim(), x.len())?;
    match which {
        DescentExpression::HeunCondition => bracket(pair, obj, x, step),
        DescentExpression::EulerCondition => {
            let b = bracket(pair, obj, x, step)?;
            let g1 = fd_gradient(|p| pair.f1(obj, p), x, step)?;
            let g2 = fd_gradient(|p| pair.f2(obj, p), x, step)?;
            let (f1, f2) = (pair.f1(obj, x), pair.f2(obj, x));
            Ok((0..x.len()).map(|i| b[i] - g1[i] * f1 - g2[i] * f2).collect())
        }
        DescentExpression::NegGradient => {
            Ok(fd_gradient(|p| obj.peek(p), x, step)?.into_iter().map(|g| -g).collect())
        }
    }
}

/// Measure which descent conditions a pair satisfies: a flag is set when the
/// corresponding drift matches `-grad J` to [`VALIDITY_TOL`] at 100 seeded
/// sample points of a 2-D quadratic probe.
pub fn classify_pair(pair: &GeneratingPair) -> Result<PairValidity> {
    let probe = make_quadratic(&[1.0, -0.5], 0.5)?;
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
    let points: Vec<Vec<f64>> = (0..100)
        .map(|_| vec![rng.random_range(-1.0..3.0), rng.random_range(-2.5..1.5)])
        .collect();
    Ok(PairValidity {
        valid_for_euler: max_condition_error(pair, DescentExpression::EulerCondition, &probe, &points)?
            <= VALIDITY_TOL,
        valid_for_heun: max_condition_error(pair, DescentExpression::HeunCondition, &probe, &points)?
            <= VALIDITY_TOL,
    })
}

/// `max_x |descent_expr(x) + grad J(x)|` over the given points, with the
/// gradient also taken by central differences.
pub fn max_condition_error(
    pair: &GeneratingPair,
    which: DescentExpression,
    obj: &dyn Cost,
    points: &[Vec<f64>],
) -> Result<f64> {
    let mut worst = 0.0f64;
    for x in points {
        let d = descent_expr(pair, which, obj, x, FD_STEP)?;
        let g = fd_gradient(|p| obj.peek(p), x, FD_STEP)?;
        let err = d.iter().zip(&g).map(|(a, b)| (a + b).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(err);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualPoint {
    pub h: f64,
    pub residual: f64,
    pub exact_cancellation: bool,
}

/// Least-squares fit of `log r = slope * log h + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualFit {
    pub points: Vec<ResidualPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Every residual fell below [`EXACT_CANCELLATION`].
    pub exact_cancellation: bool,
}

impl ResidualFit {
    pub fn from_points(hs: &[f64], residuals: &[f64]) -> Result<Self> {
        if hs.len() != residuals.len() {
            return Err(NcmapError::param("h-grid and residuals differ in length"));
        }
        if residuals.iter().any(|r| !r.is_finite()) {
            return Err(NcmapError::OracleFailure("non-finite residual".into()));
        }
        let points: Vec<ResidualPoint> = hs
            .iter()
            .zip(residuals)
            .map(|(&h, &r)| ResidualPoint {
                h,
                residual: r,
                exact_cancellation: r < EXACT_CANCELLATION,
            })
            .collect();
        let logs: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| !p.exact_cancellation)
            .map(|p| (p.h.ln(), p.residual.ln()))
            .collect();
        if logs.is_empty() {
            return Ok(Self {
                points,
                slope: f64::NAN,
                intercept: f64::NAN,
                r_squared: f64::NAN,
                exact_cancellation: true,
            });
        }
        let m = logs.len() as f64;
        let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
        let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let ss_res: f64 = logs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
        Ok(Self {
            points,
            slope,
            intercept,
            r_squared,
            exact_cancellation: false,
        })
    }

    /// Order test verdict. Exact cancellation passes trivially.
    pub fn passes(&self, min_slope: f64, min_r2: f64) -> bool {
        self.exact_cancellation || (self.slope >= min_slope && self.r_squared >= min_r2)
    }
}

/// `2^-from, ..., 2^-to`.
pub fn dyadic_grid(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|e| 2f64.powi(-e)).collect()
}

fn check_grid(hs: &[f64]) -> Result<()> {
    if hs.len() < 5 {
        return Err(NcmapError::param("residual fit needs at least 5 step sizes"));
    }
    if hs.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(NcmapError::param("step sizes must be positive"));
    }
    if hs.windows(2).any(|w| w[1] >= w[0]) {
        return Err(NcmapError::param("h-grid must be strictly decreasing"));
    }
    if hs[0] / hs[hs.len() - 1] < 100.0 {
        return Err(NcmapError::param("h-grid must span at least two decades"));
    }
    Ok(())
}

/// Residual `|x_{k+4n} - x_k - h D(x_k)|` of one aligned macro-step, for each
/// `h`, against a supplied drift `D(x_k)`.
pub fn residual_order_with_drift(
    pair: &GeneratingPair,
    method: StepMethod,
    obj: &mut dyn Cost,
    x: &[f64],
    hs: &[f64],
    drift: &[f64],
) -> Result<ResidualFit> {
    check_grid(hs)?;
    check_dim(obj.dim(), x.len())?;
    check_dim(x.len(), drift.len())?;
    let sf = switched_field(pair.clone(), x.len())?;
    let mut residuals = Vec::with_capacity(hs.len());
    for &h in hs {
        let rec = macro_step(&sf, method, obj, h, 0, x, false)?;
        let r = rec
            .end
            .iter()
            .zip(x)
            .zip(drift)
            .map(|((e, s), d)| (e - s - h * d).powi(2))
            .sum::<f64>()
            .sqrt();
        residuals.push(r);
    }
    ResidualFit::from_points(hs, &residuals)
}

/// Residual-order fit against the drift the method is expected to produce
/// for this pair, evaluated by central differences.
pub fn residual_order(
    pair: &GeneratingPair,
    method: StepMethod,
    obj: &mut dyn Cost,
    x: &[f64],
    hs: &[f64],
) -> Result<ResidualFit> {
    let drift = descent_expr(pair, DescentExpression::for_method(method), &*obj, x, FD_STEP)?;
    residual_order_with_drift(pair, method, obj, x, hs, &drift)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport {
    /// Macro-boundary transitions that started outside the band.
    pub checked: usize,
    pub violations: usize,
    /// Largest `V(x_{k+4n}) - V(x_k)` among the checked transitions.
    pub max_change: f64,
}

/// Check `V(x) = J(x) - J(x*)` across consecutive macro boundaries
/// (`k` multiple of `4n`) of a trajectory. A transition is checked when it
/// starts farther than `band` from `x_star`; it violates when `V` does not
/// strictly decrease.
pub fn lyapunov_probe(traj: &Trajectory, obj: &dyn Cost, x_star: &[f64], band: f64) -> Result<LyapunovReport> {
    check_dim(traj.dim(), x_star.len())?;
    let period = 4 * traj.dim();
    let v_star = obj.peek(x_star);
    let boundary: Vec<&Vec<f64>> = traj
        .k
        .iter()
        .zip(&traj.x)
        .filter(|(k, _)| *k % period == 0)
        .map(|(_, x)| x)
        .collect();
    let mut report = LyapunovReport {
        checked: 0,
        violations: 0,
        max_change: f64::NEG_INFINITY,
    };
    for w in boundary.windows(2) {
        let d = w[0].iter().zip(x_star).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if d <= band {
            continue;
        }
        let change = (obj.peek(w[1]) - v_star) - (obj.peek(w[0]) - v_star);
        report.checked += 1;
        report.max_change = report.max_change.max(change);
        if change.is_nan() || change >= 0.0 {
            report.violations += 1;
        }
    }
    Ok(report)
}

fn check_baseline(obj: &dyn Cost, x0: &[f64], h: f64, steps: usize) -> Result<()> {
    check_dim(obj.dim(), x0.len())?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(NcmapError::param(format!("h must be positive, got {h}")));
    }
    if steps == 0 {
        return Err(NcmapError::param("baseline needs at least one step"));
    }
    Ok(())
}

/// Gradient descent with the analytic gradient, `x_{k+1} = x_k - h grad J(x_k)`.
pub fn baseline_exact_gd(obj: &mut dyn Cost, x0: &[f64], h: f64, steps: usize) -> Result<Trajectory> {
    check_baseline(&*obj, x0, h, steps)?;
    if obj.gradient(x0).is_none() {
        return Err(NcmapError::Unsupported("exact gradient descent needs an analytic gradient".into()));
    }
    let mut rec = Recorder::new(&*obj, x0, None, Recording::EveryStep);
    let mut x = x0.to_vec();
    for k in 1..=steps {
        let g = obj.gradient(&x).expect("gradient presence checked");
        let next: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - h * gi).collect();
        rec.push(&*obj, k, &x, &next, None, k == steps)?;
        x = next;
    }
    Ok(rec.finish(StopReason::MaxIter))
}

/// Gradient descent on forward differences with the step size doubling as the
/// difference increment: `x_{k+1} = x_k - h (J(x_k + h e_i) - J(x_k)) / h`.
/// Uses `n + 1` counted evaluations per step.
pub fn baseline_fd_gd(obj: &mut dyn Cost, x0: &[f64], h: f64, steps: usize) -> Result<Trajectory> {
    check_baseline(&*obj, x0, h, steps)?;
    let mut rec = Recorder::new(&*obj, x0, None, Recording::EveryStep);
    let mut x = x0.to_vec();
    let mut probe = x.clone();
    for k in 1..=steps {
        let j0 = obj.eval(&x);
        let mut next = x.clone();
        for i in 0..x.len() {
            probe.copy_from_slice(&x);
            probe[i] += h;
            let d = (obj.eval(&probe) - j0) / h;
            next[i] -= h * d;
        }
        rec.push(&*obj, k, &x, &next, None, k == steps)?;
        x = next;
    }
    Ok(rec.finish(StopReason::MaxIter))
}
