//! Experiment harness behind the `ncmap` command line: scenario runs,
//! step-size sweeps and the residual-order verification suite.

pub mod config;
pub mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{NcmapError, Result};
use crate::fields::pair_by_id;
use crate::objective::{make_constant, make_quadratic, make_scaled_quadratic, make_two_well, with_noise, Cost, Objective, RNG_ALGORITHM};
use crate::optimizer::{run, OptimizerConfig, Trajectory};
use crate::oracle::{
    classify_pair, descent_expr, dyadic_grid, fd_gradient, lyapunov_probe, residual_order_with_drift,
    DescentExpression, FD_STEP,
};
use crate::stepper::StepMethod;

pub use config::{Baseline, DriftSpec, ScenarioConfig, VerifyCase, VerifyConfig};
pub use report::{CheckResult, OrderRow, Outcome, RunReport, RunStatus, RunSummary, SweepRow, VerifySummary};

use report::{order_csv, sweep_csv, trajectory_csv, write_atomic};

const PRESETS: [(&str, &str); 5] = [
    ("fig2", include_str!("../../presets/fig2.toml")),
    ("fig3", include_str!("../../presets/fig3.toml")),
    ("fig4", include_str!("../../presets/fig4.toml")),
    ("fig5", include_str!("../../presets/fig5.toml")),
    ("verify", include_str!("../../presets/verify.toml")),
];

/// Text of a shipped preset.
pub fn preset(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            NcmapError::Config(format!("unknown preset '{name}' (known: {})", known.join(", ")))
        })
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RunKind {
    Method(StepMethod),
    Baseline(Baseline),
}

impl RunKind {
    fn name(self) -> &'static str {
        match self {
            RunKind::Method(m) => m.as_str(),
            RunKind::Baseline(b) => b.as_str(),
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

fn new_report(command: &str, config: serde_json::Value, out: &Path) -> RunReport {
    RunReport {
        tool: "ncmap",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        rng_algorithm: RNG_ALGORITHM,
        config,
        output_dir: out.display().to_string(),
        runs: Vec::new(),
        checks: Vec::new(),
        sweep: None,
        verify: None,
        outcome: Outcome::Pass,
    }
}

struct Executed {
    summary: RunSummary,
    traj: Trajectory,
}

fn execute_one(
    cfg: &ScenarioConfig,
    kind: RunKind,
    h_index: usize,
    h: f64,
    seed: u64,
    out: &Path,
) -> Result<Executed> {
    let base = cfg.problem.build()?;
    let x_star = base.minimizer().map(<[f64]>::to_vec);
    let mut obj = with_noise(base, cfg.noise.sigma, seed)?;
    let dim = obj.dim();
    let steps = cfg.algorithm.steps_for(h, dim);
    let a = &cfg.algorithm;

    let result = match kind {
        RunKind::Method(method) => {
            let mut oc = OptimizerConfig::new(method, pair_by_id(&a.pair)?, h, a.x0.clone(), steps);
            oc.stop_tol = a.stop_tol;
            oc.recording = a.recording;
            run(&mut obj, &oc)
        }
        RunKind::Baseline(Baseline::ExactGd) => crate::oracle::baseline_exact_gd(&mut obj, &a.x0, h, steps),
        RunKind::Baseline(Baseline::FdGd) => crate::oracle::baseline_fd_gd(&mut obj, &a.x0, h, steps),
    };

    let (traj, status, diverged_at, reason) = match result {
        Ok(t) => (t, RunStatus::Ok, None, None),
        Err(NcmapError::Diverged { step, reason, partial }) => (*partial, RunStatus::Diverged, Some(step), Some(reason)),
        Err(e) => return Err(e),
    };

    let id = format!("{}_h{h_index}_s{seed}", kind.name());
    let csv = format!("{id}.csv");
    write_atomic(&out.join(&csv), trajectory_csv(&traj, cfg.report.csv_stride).as_bytes())?;

    let r = &cfg.report;
    let ok = status == RunStatus::Ok;
    let limit_band = match (&x_star, ok) {
        (Some(xs), true) => traj.limit_band(r.band_window, xs).ok(),
        _ => None,
    };
    let iterations_to_band = match (&x_star, limit_band) {
        (Some(xs), Some(b)) => traj.iterations_to_band(b, xs),
        _ => None,
    };
    let lyapunov = match (&x_star, limit_band, kind, cfg.checks.lyapunov_max_h) {
        (Some(xs), Some(b), RunKind::Method(_), Some(max_h)) if h <= max_h => {
            Some(lyapunov_probe(&traj, &obj, xs, b)?)
        }
        _ => None,
    };
    let summary = RunSummary {
        id,
        method: kind.name().to_string(),
        baseline: matches!(kind, RunKind::Baseline(_)),
        h,
        seed,
        steps,
        status,
        stop: ok.then_some(traj.stop),
        diverged_at,
        divergence_reason: reason,
        csv,
        evals: traj.total_evals(),
        final_x: traj.last_x().to_vec(),
        final_y: traj.last_y().to_vec(),
        final_filtered_error: x_star.as_ref().map(|xs| dist(traj.last_y(), xs)),
        limit_band,
        iterations_to_band,
        tail_std: if ok { traj.tail_std(r.tail_window).ok() } else { None },
        lyapunov,
    };
    Ok(Executed { summary, traj })
}

fn run_kinds(cfg: &ScenarioConfig) -> Vec<RunKind> {
    cfg.algorithm
        .methods
        .iter()
        .map(|m| RunKind::Method(*m))
        .chain(cfg.baselines.iter().map(|b| RunKind::Baseline(*b)))
        .collect()
}

fn execute_all(cfg: &ScenarioConfig, out: &Path) -> Result<Vec<RunSummary>> {
    fs::create_dir_all(out)?;
    let mut summaries = Vec::new();
    for &seed in &cfg.noise.seeds {
        for (hi, &h) in cfg.algorithm.h.iter().enumerate() {
            for kind in run_kinds(cfg) {
                let Executed { summary, traj } = execute_one(cfg, kind, hi, h, seed, out)?;
                drop(traj);
                summaries.push(summary);
            }
        }
    }
    Ok(summaries)
}

fn evaluate_checks(cfg: &ScenarioConfig, runs: &[RunSummary]) -> Vec<CheckResult> {
    let c = &cfg.checks;
    let mut checks = Vec::new();
    let main: Vec<&RunSummary> = runs.iter().filter(|r| !r.baseline).collect();

    if let Some(bound) = c.max_filtered_error {
        for r in &main {
            let err = r.final_filtered_error;
            checks.push(CheckResult {
                name: format!("filtered_error:{}", r.id),
                passed: r.status == RunStatus::Ok && err.is_some_and(|e| e <= bound),
                detail: format!("|y_K - x*| = {err:?}, bound {bound}"),
            });
        }
    }
    if let Some(factor) = c.max_band_over_sqrt_h {
        for r in &main {
            let bound = factor * r.h.sqrt();
            checks.push(CheckResult {
                name: format!("band:{}", r.id),
                passed: r.limit_band.is_some_and(|b| b <= bound) && r.iterations_to_band.is_some(),
                detail: format!(
                    "band = {:?}, bound {bound}, entered at k = {:?}",
                    r.limit_band, r.iterations_to_band
                ),
            });
        }
    }
    if c.monotone_bands || c.min_band_ratio.is_some() {
        let mut groups: BTreeMap<(String, u64), Vec<&RunSummary>> = BTreeMap::new();
        for r in &main {
            groups.entry((r.method.clone(), r.seed)).or_default().push(r);
        }
        for ((method, seed), mut group) in groups {
            group.sort_by(|a, b| b.h.total_cmp(&a.h));
            let bands: Vec<Option<f64>> = group.iter().map(|r| r.limit_band).collect();
            let complete: Option<Vec<f64>> = bands.iter().copied().collect();
            if c.monotone_bands {
                let passed = complete
                    .as_ref()
                    .is_some_and(|b| b.len() >= 2 && b.windows(2).all(|w| w[1] <= w[0]));
                checks.push(CheckResult {
                    name: format!("monotone_bands:{method}_s{seed}"),
                    passed,
                    detail: format!("bands by decreasing h: {bands:?}"),
                });
            }
            if let Some(min_ratio) = c.min_band_ratio {
                let ratio = complete.as_ref().and_then(|b| match (b.first(), b.last()) {
                    (Some(hi), Some(lo)) if b.len() >= 2 => Some(hi / lo),
                    _ => None,
                });
                checks.push(CheckResult {
                    name: format!("band_ratio:{method}_s{seed}"),
                    passed: ratio.is_some_and(|r| r >= min_ratio),
                    detail: format!("band(h_max)/band(h_min) = {ratio:?}, need >= {min_ratio}"),
                });
            }
        }
    }
    if let Some(min_frac) = c.min_noise_win_fraction {
        let fd: BTreeMap<(u64, u64), Option<f64>> = runs
            .iter()
            .filter(|r| r.method == Baseline::FdGd.as_str())
            .map(|r| ((r.seed, r.h.to_bits()), r.tail_std))
            .collect();
        let mut per_method: BTreeMap<(String, u64), (usize, usize)> = BTreeMap::new();
        for r in &main {
            let entry = per_method.entry((r.method.clone(), r.h.to_bits())).or_default();
            entry.1 += 1;
            if let (Some(ours), Some(Some(theirs))) = (r.tail_std, fd.get(&(r.seed, r.h.to_bits()))) {
                if ours < *theirs {
                    entry.0 += 1;
                }
            }
        }
        for ((method, hbits), (wins, total)) in per_method {
            let frac = wins as f64 / total as f64;
            checks.push(CheckResult {
                name: format!("noise_robustness:{method}_h{}", f64::from_bits(hbits)),
                passed: frac >= min_frac,
                detail: format!("tail std below fd_gd in {wins}/{total} seeds, need fraction >= {min_frac}"),
            });
        }
    }
    if let Some(max_h) = c.lyapunov_max_h {
        for r in main.iter().filter(|r| r.h <= max_h) {
            checks.push(CheckResult {
                name: format!("lyapunov:{}", r.id),
                passed: r.lyapunov.as_ref().is_some_and(|l| l.violations == 0),
                detail: format!("{:?}", r.lyapunov),
            });
        }
    }
    checks
}

/// Execute every (seed, h, method/baseline) combination of a scenario, write
/// one CSV per run plus `manifest.json` into `out`.
pub fn run_scenario(cfg: &ScenarioConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let mut report = new_report("run", serde_json::to_value(cfg).expect("config serializes"), out);
    report.runs = execute_all(cfg, out)?;
    report.checks = evaluate_checks(cfg, &report.runs);
    report.settle_outcome();
    report.write_manifest(out)?;
    Ok(report)
}

/// Like [`run_scenario`], plus a `sweep.csv` table of band statistics per h.
/// Requires at least two step sizes.
pub fn run_sweep(cfg: &ScenarioConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    if cfg.algorithm.h.len() < 2 {
        return Err(NcmapError::param("a sweep needs at least two step sizes"));
    }
    let mut report = new_report("sweep", serde_json::to_value(cfg).expect("config serializes"), out);
    report.runs = execute_all(cfg, out)?;
    let rows: Vec<SweepRow> = report
        .runs
        .iter()
        .map(|r| SweepRow {
            method: r.method.clone(),
            seed: r.seed,
            h: r.h,
            limit_band: r.limit_band,
            iterations_to_band: r.iterations_to_band,
            evals: r.evals,
        })
        .collect();
    write_atomic(&out.join("sweep.csv"), sweep_csv(&rows).as_bytes())?;
    report.sweep = Some(rows);
    report.checks = evaluate_checks(cfg, &report.runs);
    report.settle_outcome();
    report.write_manifest(out)?;
    Ok(report)
}

fn analytic_drift(spec: DriftSpec, obj: &Objective, pair_id: &str, x: &[f64]) -> Result<Vec<f64>> {
    let grad = || {
        obj.gradient(x)
            .ok_or_else(|| NcmapError::Unsupported("analytic drift needs a gradient".into()))
    };
    match spec {
        DriftSpec::NegGradient => Ok(grad()?.into_iter().map(|g| -g).collect()),
        DriftSpec::NegGradientOnePlusJ => {
            let j = obj.peek(x);
            Ok(grad()?.into_iter().map(|g| -g * (1.0 + j)).collect())
        }
        DriftSpec::EulerCondition => {
            descent_expr(&pair_by_id(pair_id)?, DescentExpression::EulerCondition, obj, x, FD_STEP)
        }
        DriftSpec::HeunCondition => {
            descent_expr(&pair_by_id(pair_id)?, DescentExpression::HeunCondition, obj, x, FD_STEP)
        }
    }
}

fn case_name(c: &VerifyCase) -> String {
    let drift = serde_json::to_value(c.drift).expect("drift serializes");
    format!("{}/{}/{}", c.method, c.pair, drift.as_str().unwrap_or("?"))
}

/// Seeded base points drawn uniformly from the box `center +- radius`.
fn base_points(rng: &mut ChaCha20Rng, count: usize, dim: usize, center: f64, radius: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..dim).map(|_| rng.random_range(center - radius..center + radius)).collect())
        .collect()
}

/// Residual-order fits for every case, dimension and base point, plus the
/// bracket identity and pair-classification checks.
pub fn run_verify(cfg: &VerifyConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let mut report = new_report("verify", serde_json::to_value(cfg).expect("config serializes"), out);
    let hs = dyadic_grid(cfg.h_exponents[0], cfg.h_exponents[1]);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();

    for case in &cfg.cases {
        let pair = pair_by_id(&case.pair)?;
        let name = case_name(case);
        for &dim in &cfg.dims {
            let center = vec![cfg.center; dim];
            let obj = make_scaled_quadratic(&center, cfg.curvature, cfg.offset)?;
            for (i, x) in base_points(&mut rng, cfg.base_points, dim, cfg.center, cfg.radius)
                .into_iter()
                .enumerate()
            {
                let drift = analytic_drift(case.drift, &obj, &case.pair, &x)?;
                let mut j = obj.clone();
                let fit = residual_order_with_drift(&pair, case.method, &mut j, &x, &hs, &drift)?;
                let passed = fit.passes(cfg.min_slope, cfg.min_r2);
                rows.push(OrderRow {
                    case: name.clone(),
                    dim,
                    point: Some(i),
                    fit,
                    passed,
                });
            }
            // constant objective: every residual must cancel
            let mut flat = make_constant(dim, cfg.offset)?;
            let x = vec![cfg.center; dim];
            let fit = residual_order_with_drift(&pair, case.method, &mut flat, &x, &hs, &vec![0.0; dim])?;
            let passed = fit.exact_cancellation;
            rows.push(OrderRow {
                case: name.clone(),
                dim,
                point: None,
                fit,
                passed,
            });
        }
    }

    let mut groups: BTreeMap<(String, usize), (bool, f64, f64)> = BTreeMap::new();
    for r in &rows {
        let e = groups.entry((r.case.clone(), r.dim)).or_insert((true, f64::INFINITY, f64::INFINITY));
        e.0 &= r.passed;
        if !r.fit.exact_cancellation {
            e.1 = e.1.min(r.fit.slope);
            e.2 = e.2.min(r.fit.r_squared);
        }
    }
    for ((case, dim), (passed, slope, r2)) in groups {
        report.checks.push(CheckResult {
            name: format!("order:{case}:n{dim}"),
            passed,
            detail: format!("min slope {slope:.4}, min R^2 {r2:.5}"),
        });
    }

    report.checks.extend(bracket_checks(cfg, &mut rng)?);
    for id in ["simple", "sincos"] {
        let pair = pair_by_id(id)?;
        let measured = classify_pair(&pair)?;
        report.checks.push(CheckResult {
            name: format!("pair_flags:{id}"),
            passed: measured == pair.validity(),
            detail: format!("declared {:?}, measured {measured:?}", pair.validity()),
        });
    }

    write_atomic(&out.join("verify.csv"), order_csv(&rows).as_bytes())?;
    report.verify = Some(VerifySummary { order: rows });
    report.settle_outcome();
    report.write_manifest(out)?;
    Ok(report)
}

/// `|[f1,f2](x) + grad J(x)| <= tol (1 + |grad J(x)|)` for the sin/cos pair,
/// with the bracket by central differences and the gradient analytic.
fn bracket_checks(cfg: &VerifyConfig, rng: &mut ChaCha20Rng) -> Result<Vec<CheckResult>> {
    let pair = pair_by_id("sincos")?;
    let problems: Vec<(Objective, f64, f64)> = vec![
        (make_quadratic(&[2.0], 6.0)?, 2.0, 2.5),
        (make_scaled_quadratic(&[2.0, 2.0], cfg.curvature, cfg.offset)?, 2.0, 2.5),
        (make_two_well(3)?, 0.0, 2.0),
    ];
    let mut checks = Vec::new();
    for (obj, center, radius) in problems {
        let mut worst = 0.0f64;
        for x in base_points(rng, cfg.bracket_points, obj.dim(), center, radius) {
            let b = crate::oracle::bracket(&pair, &obj, &x, FD_STEP)?;
            let g = obj.gradient(&x).expect("built-in problems have gradients");
            let err = b.iter().zip(&g).map(|(p, q)| (p + q).powi(2)).sum::<f64>().sqrt();
            let scale = 1.0 + g.iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max(err / scale);
        }
        checks.push(CheckResult {
            name: format!("bracket_identity:{}_n{}", obj.label(), obj.dim()),
            passed: worst <= cfg.bracket_tol,
            detail: format!("max scaled error {worst:.3e} over {} points", cfg.bracket_points),
        });
    }
    Ok(checks)
}

/// Sanity check that a gradient oracle agrees with an analytic gradient on a
/// grid of points; relative error per point.
pub fn gradient_check(obj: &Objective, points: &[Vec<f64>]) -> Result<f64> {
    let mut worst = 0.0f64;
    for x in points {
        let g = obj
            .gradient(x)
            .ok_or_else(|| NcmapError::Unsupported("objective has no analytic gradient".into()))?;
        let fd = fd_gradient(|p| obj.peek(p), x, FD_STEP)?;
        let num = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
        worst = worst.max(num / den);
    }
    Ok(worst)
}

/// Output directory precedence: explicit value (flag or `NCMAP_OUT`), then
/// the config's `output`, then `ncmap-out/<name>`.
pub fn resolve_output(explicit: Option<&Path>, configured: Option<&str>, name: &str) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| configured.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("ncmap-out").join(name))
}
