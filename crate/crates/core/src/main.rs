use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ncmap::bench::{self, RunReport, ScenarioConfig, VerifyConfig};
use ncmap::NcmapError;

#[derive(Parser)]
#[command(name = "ncmap", version, about = "Derivative-free optimization by switched vector fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file (TOML).
    config: Option<PathBuf>,
    /// Use a shipped preset instead of a config file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, env = "NCMAP_OUT")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (seed, h, method) combination of a scenario.
    Run {
        #[command(flatten)]
        common: Common,
        /// Replace the configured noise seeds with this one.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario over several step sizes and tabulate the limit bands.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Residual-order, bracket and pair-classification checks.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Replace the base-point seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print a shipped preset, or list them.
    ShowPreset { name: Option<String> },
}

fn load(common: &Common, default_preset: Option<&str>) -> Result<String, NcmapError> {
    match (&common.config, &common.preset, default_preset) {
        (Some(path), _, _) => std::fs::read_to_string(path)
            .map_err(|e| NcmapError::Config(format!("{}: {e}", path.display()))),
        (None, Some(name), _) => bench::preset(name).map(str::to_string),
        (None, None, Some(name)) => bench::preset(name).map(str::to_string),
        (None, None, None) => Err(NcmapError::Config("give a config file or --preset <name>".into())),
    }
}

fn print_report(report: &RunReport, out: &Path) {
    for r in &report.runs {
        let band = r.limit_band.map_or("-".to_string(), |b| format!("{b:.4e}"));
        let err = r.final_filtered_error.map_or("-".to_string(), |e| format!("{e:.4e}"));
        println!(
            "{:<24} h={:<8} steps={:<7} evals={:<8} |y-x*|={err:<11} band={band}",
            r.id, r.h, r.steps, r.evals
        );
    }
    if let Some(v) = &report.verify {
        let failed = v.order.iter().filter(|r| !r.passed).count();
        println!("order fits: {} rows, {failed} failed", v.order.len());
    }
    for c in &report.checks {
        println!("[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    println!("outcome: {:?}, output in {}", report.outcome, out.display());
}

fn scenario(common: &Common, seed: Option<u64>, sweep: bool) -> Result<RunReport, NcmapError> {
    let mut cfg = ScenarioConfig::parse(&load(common, None)?)?;
    if let Some(s) = seed {
        cfg.noise.seeds = vec![s];
    }
    let out = bench::resolve_output(common.out.as_deref(), cfg.output.as_deref(), &cfg.name);
    let report = if sweep { bench::run_sweep(&cfg, &out)? } else { bench::run_scenario(&cfg, &out)? };
    print_report(&report, &out);
    Ok(report)
}

fn dispatch(cli: Cli) -> Result<Option<RunReport>, NcmapError> {
    match cli.command {
        Command::Run { common, seed } => scenario(&common, seed, false).map(Some),
        Command::Sweep { common, seed } => scenario(&common, seed, true).map(Some),
        Command::Verify { common, seed } => {
            let mut cfg = VerifyConfig::parse(&load(&common, Some("verify"))?)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = bench::resolve_output(common.out.as_deref(), cfg.output.as_deref(), &cfg.name);
            let report = bench::run_verify(&cfg, &out)?;
            print_report(&report, &out);
            Ok(Some(report))
        }
        Command::ShowPreset { name: Some(name) } => {
            print!("{}", bench::preset(&name)?);
            Ok(None)
        }
        Command::ShowPreset { name: None } => {
            for n in bench::preset_names() {
                println!("{n}");
            }
            Ok(None)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(Some(report)) => ExitCode::from(report.outcome.exit_code() as u8),
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                NcmapError::Config(_) | NcmapError::InvalidParameter(_) | NcmapError::InvalidDimension { .. } => 2,
                NcmapError::Diverged { .. } => 3,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
