use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use mdl_core::harness::diagnostics::{map_check, taylor_check};
use mdl_core::harness::{emit_results, run_matrix, ExperimentConfig, Metric};

#[derive(Parser)]
#[command(
    name = "mdl-meta",
    version,
    about = "Meta-learned loss weighting for two-domain segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the setup matrix described by a TOML config and write results to a directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the number of seeded repeats per setup.
        #[arg(long)]
        repeats: Option<usize>,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the first-order residual table for a sweep of step sizes.
    TaylorCheck {
        /// Comma-separated step sizes, largest first.
        #[arg(long, value_delimiter = ',', required = true)]
        eta_sweep: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare the closed-form MAP weight against a grid search.
    MapCheck {
        #[arg(long, default_value_t = 500)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        grid_step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn run(config: PathBuf, out: PathBuf, repeats: Option<usize>, seed: Option<u64>) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(r) = repeats {
        cfg.repeats = r;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let started = Instant::now();
    let outcome = run_matrix(&cfg)?;
    let files = emit_results(&out, &outcome.table, &outcome.records, &cfg)?;

    println!(
        "{:<12} {:>4} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "setup", "runs", "dsc_A", "dsc_B", "auc_A", "auc_B", "gain_mu"
    );
    for row in &outcome.table.rows {
        let dsc = row.metric(Metric::Dsc);
        let auc = row.metric(Metric::Auc);
        let gain = row.gain.map_or(String::from("-"), |g| format!("{:.4}", g.mu));
        println!(
            "{:<12} {:>4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9}",
            row.setup.name(),
            row.n_runs,
            dsc[0].mean,
            dsc[1].mean,
            auc[0].mean,
            auc[1].mean,
            gain
        );
    }
    for f in &outcome.table.failures {
        eprintln!("diverged: {} seed {} step {:?}: {}", f.setup, f.seed, f.step, f.message);
    }
    println!(
        "wrote {} files to {} in {:.1}s",
        files.len(),
        out.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn taylor(etas: Vec<f64>, instances: usize, seed: u64) -> anyhow::Result<()> {
    if etas.len() < 2 || etas.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        bail!("--eta-sweep needs at least two positive step sizes");
    }
    let report = taylor_check(&etas, instances, seed)?;
    print!("{:>8}", "instance");
    for eta in &etas {
        print!(" {:>12}", format!("r({eta:e})"));
    }
    for i in 1..etas.len() {
        print!(" {:>8}", format!("ratio{i}"));
    }
    println!(" {:>5}", "sign");
    for row in &report.rows {
        print!("{:>8}", row.instance);
        for r in &row.residuals {
            print!(" {r:>12.4e}");
        }
        for q in &row.ratios {
            print!(" {q:>8.3}");
        }
        println!(" {:>5}", if row.sign_agrees() { "ok" } else { "flip" });
    }
    let ratios: Vec<f64> = report.rows.iter().flat_map(|r| r.ratios.iter().copied()).collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "ratio range [{lo:.3}, {hi:.3}], sign agreement {}/{}",
        report.sign_agreements(),
        report.rows.len()
    );
    Ok(())
}

fn map(cases: usize, seed: u64, grid_step: f64, tolerance: f64) -> anyhow::Result<()> {
    let started = Instant::now();
    let report = map_check(cases, seed, grid_step, tolerance)?;
    println!(
        "{} cases, max |closed form - grid| = {:.3e} (tolerance {:.0e}), {:.2}s",
        report.cases.len(),
        report.max_error,
        report.tolerance,
        started.elapsed().as_secs_f64()
    );
    if !report.passed() {
        let worst = report
            .cases
            .iter()
            .max_by(|a, b| a.error().total_cmp(&b.error()))
            .map(|c| format!("alpha={} beta={} T={} N={}", c.alpha, c.beta, c.window, c.successes));
        bail!(CheckFailed(format!(
            "map-check exceeded tolerance at {}",
            worst.unwrap_or_default()
        )));
    }
    Ok(())
}

#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn error_kind(err: &anyhow::Error) -> &'static str {
    if let Some(e) = err.chain().find_map(|e| e.downcast_ref::<mdl_core::Error>()) {
        e.kind()
    } else if err.downcast_ref::<CheckFailed>().is_some() {
        "check_failed"
    } else {
        "usage"
    }
}

fn error_exit(kind: &str, message: String) -> ExitCode {
    let line = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{line}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return error_exit("usage", e.kind().to_string()),
    };
    let result = match cli.command {
        Command::Run {
            config,
            out,
            repeats,
            seed,
        } => run(config, out, repeats, seed),
        Command::TaylorCheck {
            eta_sweep,
            instances,
            seed,
        } => taylor(eta_sweep, instances, seed),
        Command::MapCheck {
            cases,
            seed,
            grid_step,
            tolerance,
        } => map(cases, seed, grid_step, tolerance),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => error_exit(error_kind(&err), format!("{err:#}")),
    }
}
