//! Euler and Heun micro-steps with step length `sqrt(h)`, and the macro-step
//! composing one full `4n`-step coordinate sweep.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, NcmapError, Result};
use crate::fields::SwitchedField;
use crate::objective::Cost;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMethod {
    Euler,
    Heun,
}

impl StepMethod {
    /// Objective evaluations per micro-step.
    pub fn evals_per_step(self) -> u64 {
        match self {
            StepMethod::Euler => 1,
            StepMethod::Heun => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StepMethod::Euler => "euler",
            StepMethod::Heun => "heun",
        }
    }
}

impl fmt::Display for StepMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StepMethod {
    type Err = NcmapError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(StepMethod::Euler),
            "heun" => Ok(StepMethod::Heun),
            other => Err(NcmapError::param(format!("unknown method '{other}'"))),
        }
    }
}

fn check_h(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(NcmapError::param(format!("step size h must be positive, got {h}")));
    }
    Ok(())
}

/// `x + sqrt(h) * g_k(x)`.
pub fn euler_step(
    sf: &SwitchedField,
    obj: &mut dyn Cost,
    k: usize,
    h: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    check_h(h)?;
    let (c, g) = sf.component(obj, k, x)?;
    let mut next = x.to_vec();
    next[c] += h.sqrt() * g;
    Ok(next)
}

/// `x + sqrt(h)/2 * (c1 + c2)` with `c1 = g_k(x)`, `c2 = g_k(x + sqrt(h) c1)`.
pub fn heun_step(
    sf: &SwitchedField,
    obj: &mut dyn Cost,
    k: usize,
    h: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    check_h(h)?;
    let s = h.sqrt();
    let (c, g1) = sf.component(obj, k, x)?;
    let mut probe = x.to_vec();
    probe[c] += s * g1;
    let (_, g2) = sf.component(obj, k, &probe)?;
    let mut next = x.to_vec();
    next[c] += 0.5 * s * (g1 + g2);
    Ok(next)
}

pub fn micro_step(
    sf: &SwitchedField,
    method: StepMethod,
    obj: &mut dyn Cost,
    k: usize,
    h: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    match method {
        StepMethod::Euler => euler_step(sf, obj, k, h, x),
        StepMethod::Heun => heun_step(sf, obj, k, h, x),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroStepRecord {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    /// All `4n + 1` points from start to end, when recording was requested.
    pub points: Option<Vec<Vec<f64>>>,
    pub evals: u64,
}

/// Compose the `4n` micro-steps `k0, ..., k0 + 4n - 1`. `k0` must be aligned
/// to the start of a coordinate sweep (a multiple of `4n`).
pub fn macro_step(
    sf: &SwitchedField,
    method: StepMethod,
    obj: &mut dyn Cost,
    h: f64,
    k0: usize,
    x: &[f64],
    record: bool,
) -> Result<MacroStepRecord> {
    check_h(h)?;
    check_dim(sf.dim(), x.len())?;
    let period = sf.period();
    if !k0.is_multiple_of(period) {
        return Err(NcmapError::param(format!(
            "macro-step start k0={k0} is not a multiple of 4n={period}"
        )));
    }
    let before = obj.eval_count();
    let mut points = record.then(|| {
        let mut v = Vec::with_capacity(period + 1);
        v.push(x.to_vec());
        v
    });
    let mut cur = x.to_vec();
    for k in k0..k0 + period {
        cur = micro_step(sf, method, obj, k, h, &cur)?;
        if let Some(p) = points.as_mut() {
            p.push(cur.clone());
        }
    }
    Ok(MacroStepRecord {
        start: x.to_vec(),
        end: cur,
        points,
        evals: obj.eval_count() - before,
    })
}
