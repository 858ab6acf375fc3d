//! Command-line harness: materialize scenarios, fit estimators, run rate
//! sweeps, and drive the verification suite from a JSON config.
//!
//! Exit codes: 0 when everything passed, 1 when a check failed, 2 on
//! configuration or I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use minimax_iv::estimators::evaluate;
use minimax_iv::harness::seed::{rep_seed, sub_seed};
use minimax_iv::harness::{
    build_families, emit_reports, family_seed, fit_estimator, fit_estimator_population,
    run_rate_sweep, verify_suite, RunConfig,
};
use minimax_iv::scenario::sample;

/// Environment variable that overrides the configured output directory.
const OUT_ENV: &str = "MINIMAX_IV_OUT";

#[derive(Parser)]
#[command(name = "minimax-iv", version, about = "Penalized minimax IV harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Materialize the configured scenario; print a summary and save it
    Scenario(Common),
    /// Fit every configured estimator on one sampled dataset
    Fit(FitArgs),
    /// Run the Monte Carlo rate sweep and emit CSV/JSON reports
    Rates(Common),
    /// Run the registered theory checks and report pass/fail counts
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Path to the JSON run configuration
    #[arg(long)]
    config: String,
    /// Override the configured master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Artifact directory; beats MINIMAX_IV_OUT and the config's out_dir
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// Sample size; defaults to the largest entry of the config's n grid
    #[arg(long)]
    n: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Scenario(args) => cmd_scenario(&args),
        Command::Fit(args) => cmd_fit(&args),
        Command::Rates(args) => cmd_rates(&args),
        Command::Verify(args) => cmd_verify(&args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)
            .with_context(|| format!("loading config {:?}", self.config))?;
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        Ok(config)
    }

    /// Output directory, by precedence: --out, MINIMAX_IV_OUT, config.
    fn out_dir(&self, config: &RunConfig) -> Option<PathBuf> {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
    }
}

fn cmd_scenario(args: &Common) -> Result<bool> {
    let config = args.load()?;
    let scenario = config.scenario.materialize()?;
    let truth = scenario.truth();
    let svd = scenario.op().svd()?;
    let summary = serde_json::json!({
        "x_card": scenario.x_space().len(),
        "z_card": scenario.z_space().len(),
        "noise": scenario.noise(),
        "nullspace_dim": truth.nullspace_dim,
        "source_norm": truth.source_norm,
        "singular_values": svd.singular_values(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(dir) = args.out_dir(&config) {
        std::fs::create_dir_all(&dir)?;
        let path = dir.join("scenario.json");
        std::fs::write(&path, serde_json::to_string_pretty(&scenario)?)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(true)
}

fn cmd_fit(args: &FitArgs) -> Result<bool> {
    let config = args.common.load()?;
    let scenario = config.scenario.materialize()?;
    let n = match args.n {
        Some(n) if n > 0 => n,
        Some(_) => bail!("--n must be positive"),
        None => *config.n_grid.last().expect("validated grid is nonempty"),
    };

    let mut results = Vec::new();
    for est in &config.estimators {
        // Mirror the sweep engine's seeding for replication 0 so a one-shot
        // fit reproduces the first sweep cell exactly.
        let rseed = rep_seed(config.master_seed, &est.name, n, 0);
        let (h_fam, g_fam) =
            build_families(&scenario, &config.families, family_seed(&config, rseed))?;
        let fit = if config.mode.population {
            fit_estimator_population(est, &scenario, &h_fam, &g_fam)?
        } else {
            let data = sample(&scenario, n, sub_seed(rseed, "data"));
            let table = minimax_iv::estimators::EmpiricalTable::from_dataset(&data)?;
            fit_estimator(est, &table, &h_fam, &g_fam, n)?
        };
        let metrics = evaluate(scenario.op(), scenario.truth(), &fit.h_hat)?;
        results.push(serde_json::json!({ "fit": fit, "metrics": metrics, "n": n }));
    }
    let doc = serde_json::Value::Array(results);
    println!("{}", serde_json::to_string_pretty(&doc)?);
    if let Some(dir) = args.common.out_dir(&config) {
        std::fs::create_dir_all(&dir)?;
        let path = dir.join("fits.json");
        std::fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(true)
}

fn cmd_rates(args: &Common) -> Result<bool> {
    let config = args.load()?;
    let dir = args
        .out_dir(&config)
        .context("rates needs an output directory (--out, MINIMAX_IV_OUT, or out_dir)")?;
    let report = run_rate_sweep(&config)?;
    let paths = emit_reports(&report, &dir)?;
    for p in &paths {
        eprintln!("wrote {}", p.display());
    }
    for slope in &report.slopes {
        println!(
            "{} {}: slope {:.4} (stderr {:.4})",
            slope.estimator, slope.metric, slope.slope, slope.stderr
        );
    }
    let violations = report.total_violations();
    println!("bound violations: {violations}");
    Ok(violations == 0)
}

fn cmd_verify(args: &Common) -> Result<bool> {
    let config = args.load()?;
    let summary = verify_suite(&config)?;
    for check in &summary.checks {
        let verdict = if check.failed > 0 { "FAIL" } else { "PASS" };
        println!(
            "{verdict} {}: {} passed, {} failed, {} skipped",
            check.name, check.passed, check.failed, check.skipped
        );
    }
    if let Some(dir) = args.out_dir(&config) {
        std::fs::create_dir_all(&dir)?;
        let path = dir.join("verify.json");
        std::fs::write(&path, serde_json::to_string_pretty(&summary)?)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(summary.all_passed)
}
