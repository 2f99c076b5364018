use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, ModelSpec, OutputActivation};
use crate::lambda::UpdateRule;
use crate::losses::{LossFn, LossKind};
use crate::trainer::TrainConfig;
use crate::{Error, Result};

/// A named training setup of the experiment matrix. Domain A plays the
/// role of the informative modality; fixed setups name A's weight first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setup {
    #[serde(rename = "F50-T50")]
    F50T50,
    #[serde(rename = "F10-T90")]
    F10T90,
    #[serde(rename = "F90-T10")]
    F90T10,
    #[serde(rename = "Simple-G")]
    SimpleG,
    #[serde(rename = "Simple-C")]
    SimpleC,
    #[serde(rename = "Ours-G-25")]
    OursG25,
    #[serde(rename = "Ours-G-100")]
    OursG100,
    #[serde(rename = "Ours-C-25")]
    OursC25,
    #[serde(rename = "Ours-C-100")]
    OursC100,
}

impl Setup {
    pub const ALL: [Setup; 9] = [
        Setup::F50T50,
        Setup::F10T90,
        Setup::F90T10,
        Setup::SimpleG,
        Setup::SimpleC,
        Setup::OursG25,
        Setup::OursG100,
        Setup::OursC25,
        Setup::OursC100,
    ];

    /// The reference row for GAIN columns.
    pub const BASELINE: Setup = Setup::F50T50;

    pub fn name(self) -> &'static str {
        match self {
            Setup::F50T50 => "F50-T50",
            Setup::F10T90 => "F10-T90",
            Setup::F90T10 => "F90-T10",
            Setup::SimpleG => "Simple-G",
            Setup::SimpleC => "Simple-C",
            Setup::OursG25 => "Ours-G-25",
            Setup::OursG100 => "Ours-G-100",
            Setup::OursC25 => "Ours-C-25",
            Setup::OursC100 => "Ours-C-100",
        }
    }

    pub fn rule(self) -> UpdateRule {
        match self {
            Setup::F50T50 => UpdateRule::Fixed { lambda: 0.5 },
            Setup::F10T90 => UpdateRule::Fixed { lambda: 0.1 },
            Setup::F90T10 => UpdateRule::Fixed { lambda: 0.9 },
            Setup::SimpleG => UpdateRule::simple_greedy(),
            Setup::SimpleC => UpdateRule::simple_conservative(),
            Setup::OursG25 | Setup::OursG100 => UpdateRule::Greedy,
            Setup::OursC25 | Setup::OursC100 => UpdateRule::Conservative,
        }
    }

    /// MAP window length; only meaningful for the `Ours-*` setups.
    pub fn window(self) -> usize {
        match self {
            Setup::OursG100 | Setup::OursC100 => 100,
            _ => 25,
        }
    }

    pub fn is_fixed(self) -> bool {
        matches!(self.rule(), UpdateRule::Fixed { .. })
    }

    pub fn is_map(self) -> bool {
        self.rule().choice().is_some()
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Setup::ALL
            .into_iter()
            .find(|setup| setup.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown setup {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rendering {
    pub contrast: f64,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub eta: f64,
    #[serde(default)]
    pub inner_eta: Option<f64>,
    pub batch_size: usize,
    pub steps: usize,
    pub split_ratio: f64,
    pub prior_alpha: f64,
    pub prior_beta: f64,
    pub loss: LossKind,
}

/// Everything a `run` needs; read from TOML and echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub setups: Vec<Setup>,
    pub repeats: usize,
    pub seed: u64,
    /// Emit GAIN columns; requires the F50-T50 baseline.
    #[serde(default = "default_true")]
    pub gain: bool,
    #[serde(default = "default_true")]
    pub save_checkpoints: bool,
    pub grid: usize,
    pub train_count: usize,
    pub test_count: usize,
    /// Fraction of domain-A training samples kept.
    #[serde(default = "default_fraction")]
    pub downsample_a: f64,
    pub domain_a: Rendering,
    pub domain_b: Rendering,
    pub model: ModelSection,
    pub training: TrainingSection,
}

fn default_true() -> bool {
    true
}

fn default_fraction() -> f64 {
    1.0
}

impl ExperimentConfig {
    /// The desk-scale matrix: all nine setups, 16×16 images, a
    /// high-contrast domain A and a low-contrast domain B.
    pub fn desk() -> Self {
        Self {
            setups: Setup::ALL.to_vec(),
            repeats: 5,
            seed: 0,
            gain: true,
            save_checkpoints: true,
            grid: 16,
            train_count: 256,
            test_count: 32,
            downsample_a: 1.0,
            domain_a: Rendering {
                contrast: 3.0,
                noise_sigma: 0.5,
            },
            domain_b: Rendering {
                contrast: 1.0,
                noise_sigma: 1.0,
            },
            model: ModelSection {
                hidden: vec![32],
                activation: Activation::Tanh,
            },
            training: TrainingSection {
                eta: 1.0,
                inner_eta: None,
                batch_size: 8,
                steps: 1500,
                split_ratio: 0.5,
                prior_alpha: 5.0,
                prior_beta: 5.0,
                loss: LossKind::BcePlusDice,
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::config("repeats must be positive"));
        }
        if self.gain && !self.setups.is_empty() && !self.setups.contains(&Setup::BASELINE) {
            return Err(Error::config("GAIN columns need the F50-T50 baseline in the matrix"));
        }
        if self.train_count < self.training.batch_size || self.test_count == 0 {
            return Err(Error::config(
                "train set must hold a batch and test set must be non-empty",
            ));
        }
        if !(self.downsample_a > 0.0 && self.downsample_a <= 1.0) {
            return Err(Error::config("downsample_a must be in (0, 1]"));
        }
        self.model_spec().validate()?;
        self.train_config(Setup::F50T50, 0).validate()
    }

    pub fn model_spec(&self) -> ModelSpec {
        let pixels = self.grid * self.grid;
        ModelSpec {
            input_dim: pixels,
            hidden: self.model.hidden.clone(),
            output_dim: pixels,
            activation: self.model.activation,
            output: OutputActivation::Sigmoid,
        }
    }

    pub fn loss_fn(&self) -> LossFn {
        LossFn::new(self.training.loss)
    }

    pub fn train_config(&self, setup: Setup, seed: u64) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            eta: t.eta,
            inner_eta: t.inner_eta,
            batch_size: t.batch_size,
            steps: t.steps,
            rule: setup.rule(),
            prior: vec![t.prior_alpha, t.prior_beta],
            window: setup.window(),
            seed,
            split_ratio: t.split_ratio,
        }
    }
}
