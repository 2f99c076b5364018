use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{domain_label, ExperimentConfig, Metric, ResultTable, RunFailure, RunRecord, DOMAINS};
use crate::autodiff::checkpoint::save_params;
use crate::Result;

pub const RESULTS_HEADER: [&str; 8] = [
    "setup",
    "domain",
    "metric",
    "mean",
    "sd",
    "gain_mu",
    "gain_sigma",
    "n_runs",
];

/// One row per (setup, domain, metric). GAIN is reported on DSC rows only.
pub fn write_results_csv<W: Write>(w: W, table: &ResultTable) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RESULTS_HEADER)?;
    for row in &table.rows {
        for metric in [Metric::Dsc, Metric::Auc] {
            for (d, ms) in row.metric(metric).iter().enumerate() {
                let (gain_mu, gain_sigma) = match (metric, row.gain) {
                    (Metric::Dsc, Some(g)) => (g.mu.to_string(), g.sigma.to_string()),
                    _ => (String::new(), String::new()),
                };
                out.write_record([
                    row.setup.name().to_string(),
                    domain_label(d).to_string(),
                    metric.name().to_string(),
                    ms.mean.to_string(),
                    ms.sd.to_string(),
                    gain_mu,
                    gain_sigma,
                    row.n_runs.to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Per-run metrics: `setup,seed,domain,metric,value`.
pub fn write_runs_csv<W: Write>(w: W, records: &[RunRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["setup", "seed", "domain", "metric", "value"])?;
    for r in records {
        for metric in [Metric::Dsc, Metric::Auc] {
            for d in 0..DOMAINS {
                out.write_record([
                    r.setup.name().to_string(),
                    r.seed.to_string(),
                    domain_label(d).to_string(),
                    metric.name().to_string(),
                    r.metric(metric)[d].to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    package: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    seeds: Vec<u64>,
    runs: usize,
    failures: &'a [RunFailure],
    files: Vec<String>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `results.csv`, `runs.csv`, one `lambda_traj_<setup>_<seed>.csv`
/// per run, optional `params_<setup>_<seed>.bin` checkpoints and
/// `manifest.json` into `dir`. Output depends only on the inputs (wall
/// times are not written), so identical runs give identical bytes.
pub fn emit_results(
    dir: impl AsRef<Path>,
    table: &ResultTable,
    records: &[RunRecord],
    config: &ExperimentConfig,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();

    let path = dir.join("results.csv");
    write_results_csv(create(&path)?, table)?;
    files.push(path);

    let path = dir.join("runs.csv");
    write_runs_csv(create(&path)?, records)?;
    files.push(path);

    for r in records {
        let path = dir.join(format!("lambda_traj_{}_{}.csv", r.setup.name(), r.seed));
        r.trajectory.write_csv(create(&path)?)?;
        files.push(path);
        if config.save_checkpoints {
            let path = dir.join(format!("params_{}_{}.bin", r.setup.name(), r.seed));
            save_params(&path, &r.params)?;
            files.push(path);
        }
    }

    let names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config,
        seeds: (0..config.repeats as u64)
            .map(|i| config.seed.wrapping_add(i))
            .collect(),
        runs: records.len(),
        failures: &table.failures,
        files: names,
    };
    let path = dir.join("manifest.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    files.push(path);
    Ok(files)
}
