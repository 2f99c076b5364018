//! Experiment matrix over synthetic paired domains.
//!
//! Every `(setup, repeat)` pair is one self-seeded run with seed
//! `config.seed + repeat`. Data, initial parameters and mini-batch streams
//! depend on the seed only, so all setups of a repeat see the same data.
//! Runs are independent and execute in parallel with the `parallel`
//! feature; aggregation is sequential in setup order, then seed order.

mod config;
pub mod diagnostics;
mod emit;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, ModelSection, Rendering, Setup, TrainingSection};
pub use emit::{emit_results, write_results_csv, write_runs_csv, RESULTS_HEADER};

use crate::autodiff::{forward, init_params, MlpObjective, ParamVector};
use crate::losses::{auc_metric, binarize, dsc_metric};
use crate::parallel;
use crate::rng::{derive_seed, stream};
use crate::synthetic::{downsample, gen_domain, Dataset, DomainSpec};
use crate::trainer::{train, TrainRecord};
use crate::{Error, Result};

/// Prediction threshold for DSC.
pub const THRESHOLD: f64 = 0.5;

pub const DOMAINS: usize = 2;

pub fn domain_label(domain: usize) -> &'static str {
    ["A", "B", "C", "D", "E", "F"].get(domain).copied().unwrap_or("?")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Dsc,
    Auc,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Dsc => "dsc",
            Metric::Auc => "auc",
        }
    }
}

/// One finished run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub setup: Setup,
    pub seed: u64,
    pub trajectory: TrainRecord,
    /// Per-domain DSC on the test set, pixels pooled.
    pub dsc: Vec<f64>,
    /// Per-domain AUC on the test set, pixels pooled.
    pub auc: Vec<f64>,
    pub params: ParamVector,
    pub wall_time_s: f64,
}

impl RunRecord {
    pub fn metric(&self, metric: Metric) -> &[f64] {
        match metric {
            Metric::Dsc => &self.dsc,
            Metric::Auc => &self.auc,
        }
    }
}

/// Train and test sets of both domains for one seed.
#[derive(Debug, Clone)]
pub struct RunData {
    pub train: Vec<Dataset>,
    pub test: Vec<Dataset>,
}

impl RunData {
    pub fn generate(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        let renderings = [&config.domain_a, &config.domain_b];
        let make = |count: usize, mask_seed: u64, render_stream: u64| -> Result<Vec<Dataset>> {
            renderings
                .iter()
                .enumerate()
                .map(|(d, r)| {
                    gen_domain(&DomainSpec {
                        domain: d,
                        grid: config.grid,
                        contrast: r.contrast,
                        noise_sigma: r.noise_sigma,
                        count,
                        mask_seed,
                        render_seed: derive_seed(seed, render_stream, d as u64),
                    })
                })
                .collect()
        };
        let mut train = make(config.train_count, derive_seed(seed, stream::MASK, 0), stream::RENDER)?;
        let test = make(config.test_count, derive_seed(seed, stream::MASK, 1), stream::TEST_SET)?;
        if config.downsample_a < 1.0 {
            train[0] = downsample(&train[0], config.downsample_a, derive_seed(seed, stream::DOWNSAMPLE, 0))?;
        }
        Ok(Self { train, test })
    }
}

/// Pooled-pixel DSC and AUC of `params` on each test set.
pub fn evaluate(objective: &MlpObjective, params: &ParamVector, test: &[Dataset]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut dsc = Vec::with_capacity(test.len());
    let mut auc = Vec::with_capacity(test.len());
    for data in test {
        let scores = forward(objective.spec(), params, &data.inputs)?;
        let y = data.labels.as_slice();
        dsc.push(dsc_metric(&binarize(scores.as_slice(), THRESHOLD), y)?);
        auc.push(auc_metric(scores.as_slice(), y)?);
    }
    Ok((dsc, auc))
}

/// Trains and evaluates one `(setup, seed)` run.
pub fn run_one(config: &ExperimentConfig, setup: Setup, seed: u64) -> Result<RunRecord> {
    let start = Instant::now();
    let data = RunData::generate(config, seed)?;
    let objective = MlpObjective::new(config.model_spec(), config.loss_fn())?;
    let objectives = [objective.clone(), objective.clone()];
    let init = init_params(objective.spec(), derive_seed(seed, stream::INIT, 0))?;
    let outcome = train(&config.train_config(setup, seed), &objectives, &data.train, init)?;
    let (dsc, auc) = evaluate(&objective, &outcome.params, &data.test)?;
    Ok(RunRecord {
        setup,
        seed,
        trajectory: outcome.record,
        dsc,
        auc,
        params: outcome.params,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Mean and sample standard deviation (`n - 1`); the s.d. of a single
    /// value is 0.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                sd: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gain {
    /// Summed increase in mean DSC over the baseline.
    pub mu: f64,
    /// Summed decrease in DSC s.d. relative to the baseline.
    pub sigma: f64,
}

/// GAIN of a row against the baseline, from per-domain DSC mean/s.d.
pub fn compute_gain(row: &[MeanSd], baseline: &[MeanSd]) -> Result<Gain> {
    if baseline.is_empty() {
        return Err(Error::config("GAIN needs a baseline row"));
    }
    if row.len() != baseline.len() {
        return Err(Error::config(format!(
            "row has {} domains, baseline {}",
            row.len(),
            baseline.len()
        )));
    }
    let mut gain = Gain { mu: 0.0, sigma: 0.0 };
    for (r, b) in row.iter().zip(baseline) {
        gain.mu += r.mean - b.mean;
        gain.sigma += b.sd - r.sd;
    }
    Ok(gain)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupSummary {
    pub setup: Setup,
    pub n_runs: usize,
    pub failed: usize,
    /// Indexed by domain.
    pub dsc: Vec<MeanSd>,
    pub auc: Vec<MeanSd>,
    pub gain: Option<Gain>,
}

impl SetupSummary {
    pub fn from_runs(setup: Setup, runs: &[&RunRecord], failed: usize) -> Self {
        let collect = |metric: Metric| -> Vec<MeanSd> {
            (0..DOMAINS)
                .map(|d| MeanSd::of(&runs.iter().map(|r| r.metric(metric)[d]).collect::<Vec<_>>()))
                .collect()
        };
        Self {
            setup,
            n_runs: runs.len(),
            failed,
            dsc: collect(Metric::Dsc),
            auc: collect(Metric::Auc),
            gain: None,
        }
    }

    pub fn metric(&self, metric: Metric) -> &[MeanSd] {
        match metric {
            Metric::Dsc => &self.dsc,
            Metric::Auc => &self.auc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub setup: Setup,
    pub seed: u64,
    pub step: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<SetupSummary>,
    pub failures: Vec<RunFailure>,
}

impl ResultTable {
    /// Aggregates finished runs in `setups` order. GAIN columns are filled
    /// against the first F50-T50 row when `with_gain` is set.
    pub fn aggregate(
        setups: &[Setup],
        records: &[RunRecord],
        failures: Vec<RunFailure>,
        with_gain: bool,
    ) -> Result<Self> {
        let rows = setups
            .iter()
            .map(|&s| {
                let mut runs: Vec<&RunRecord> = records.iter().filter(|r| r.setup == s).collect();
                runs.sort_by_key(|r| r.seed);
                let failed = failures.iter().filter(|f| f.setup == s).count();
                SetupSummary::from_runs(s, &runs, failed)
            })
            .collect();
        Self::with_rows(rows, failures, with_gain)
    }

    fn with_rows(mut rows: Vec<SetupSummary>, failures: Vec<RunFailure>, with_gain: bool) -> Result<Self> {
        if with_gain && !rows.is_empty() {
            let baseline = rows
                .iter()
                .find(|r| r.setup == Setup::BASELINE)
                .map(|r| r.dsc.clone())
                .ok_or_else(|| Error::config("GAIN columns need the F50-T50 baseline"))?;
            for row in &mut rows {
                row.gain = Some(compute_gain(&row.dsc, &baseline)?);
            }
        }
        Ok(Self { rows, failures })
    }
}

/// The result table plus every successful run, sorted by setup order and
/// then seed.
#[derive(Debug, Clone)]
pub struct MatrixOutcome {
    pub table: ResultTable,
    pub records: Vec<RunRecord>,
}

/// Runs every `(setup, repeat)` pair of the matrix. Diverged runs are
/// excluded from the aggregates and listed in `table.failures`; any other
/// error aborts.
pub fn run_matrix(config: &ExperimentConfig) -> Result<MatrixOutcome> {
    config.validate()?;
    let repeats = config.repeats;
    let jobs: Vec<(Setup, u64)> = config
        .setups
        .iter()
        .flat_map(|&s| (0..repeats as u64).map(move |i| (s, config.seed.wrapping_add(i))))
        .collect();
    let results = parallel::map_indexed(jobs.len(), |j| run_one(config, jobs[j].0, jobs[j].1));

    let mut records = Vec::with_capacity(jobs.len());
    let mut failures = Vec::new();
    let mut rows = Vec::with_capacity(config.setups.len());
    let mut results = results.into_iter();
    for &setup in &config.setups {
        let mut slot = Vec::with_capacity(repeats);
        let mut failed = 0;
        for i in 0..repeats as u64 {
            let seed = config.seed.wrapping_add(i);
            match results.next().expect("one result per job") {
                Ok(r) => slot.push(r),
                Err(Error::Diverged { step, reason, .. }) => {
                    failed += 1;
                    failures.push(RunFailure {
                        setup,
                        seed,
                        step: Some(step),
                        message: reason,
                    });
                }
                Err(e) => return Err(e),
            }
        }
        rows.push(SetupSummary::from_runs(setup, &slot.iter().collect::<Vec<_>>(), failed));
        records.extend(slot);
    }
    let table = ResultTable::with_rows(rows, failures, config.gain)?;
    Ok(MatrixOutcome { table, records })
}
