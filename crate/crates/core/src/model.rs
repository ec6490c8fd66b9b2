//! Model hyperparameters, training/prediction schedules and the fitted
//! model container with its JSON file format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelKind, Vocabulary};
use crate::error::{Error, Result};

/// How binary labels enter the Gaussian response machinery.
///
/// `Linear` treats y in {0,1} directly as a real response (linear
/// probability model, classification threshold 0.5). `Logit` trains on
/// logit(0.01)/logit(0.99) in place of 0/1 and maps predictions back
/// through the logistic function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BinaryLink {
    #[default]
    Linear,
    Logit,
}

/// Priors and dimensions of the supervised topic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Symmetric Dirichlet concentration on per-document topic weights.
    pub alpha: f64,
    /// Symmetric Dirichlet concentration on per-topic word distributions.
    pub beta: f64,
    /// Topic count (at least 2).
    pub num_topics: usize,
    /// Prior mean of each regression coefficient.
    pub mu: f64,
    /// Prior variance of each regression coefficient.
    pub sigma: f64,
    /// Response variance.
    pub rho: f64,
    pub label_kind: LabelKind,
    #[serde(default)]
    pub binary_link: BinaryLink,
}

impl Hyperparams {
    /// Standard defaults with the topic count supplied by the caller.
    pub fn new(num_topics: usize) -> Self {
        Hyperparams {
            alpha: 1.0,
            beta: 0.01,
            num_topics,
            mu: 0.0,
            sigma: 1.0,
            rho: 1.0,
            label_kind: LabelKind::Continuous,
            binary_link: BinaryLink::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_topics < 2 {
            return Err(Error::InvalidArgument(format!(
                "num_topics must be at least 2, got {}",
                self.num_topics
            )));
        }
        self.validate_values()
    }

    /// Positivity and finiteness checks alone, without the topic-count
    /// floor; degenerate single-topic instances are legal in the synthetic
    /// generator.
    pub(crate) fn validate_values(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("sigma", self.sigma),
            ("rho", self.rho),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !self.mu.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "mu must be finite, got {}",
                self.mu
            )));
        }
        Ok(())
    }
}

/// Sweep counts for training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub sweeps: usize,
    pub burn_in: usize,
    pub eta_update_every: usize,
    /// Average the topic-word estimate over post-burn-in sweeps instead of
    /// reading it off the final state.
    #[serde(default)]
    pub average_phi: bool,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            sweeps: 200,
            burn_in: 100,
            eta_update_every: 1,
            average_phi: false,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.sweeps {
            return Err(Error::InvalidArgument(format!(
                "burn_in ({}) must be smaller than sweeps ({})",
                self.burn_in, self.sweeps
            )));
        }
        if self.eta_update_every < 1 {
            return Err(Error::InvalidArgument(
                "eta_update_every must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Sweep counts for test-time inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictSchedule {
    pub sweeps: usize,
    pub burn_in: usize,
    /// Average per-document topic proportions over post-burn-in sweeps.
    pub average_tail: bool,
}

impl Default for PredictSchedule {
    fn default() -> Self {
        PredictSchedule {
            sweeps: 50,
            burn_in: 25,
            average_tail: true,
        }
    }
}

impl PredictSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.sweeps {
            return Err(Error::InvalidArgument(format!(
                "burn_in ({}) must be smaller than sweeps ({})",
                self.burn_in, self.sweeps
            )));
        }
        Ok(())
    }
}

/// Everything prediction needs: smoothed topic-word distributions, the
/// regression coefficients, the hyperparameters and the vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    /// Row-stochastic topic-word matrix, one row per topic.
    pub phi: Vec<Vec<f64>>,
    /// Regression coefficient per topic.
    pub eta: Vec<f64>,
    pub hyper: Hyperparams,
    pub vocabulary: Vocabulary,
}

impl FittedModel {
    pub fn num_topics(&self) -> usize {
        self.phi.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.hyper.num_topics;
        let w = self.vocabulary.len();
        if self.phi.len() != t || self.eta.len() != t {
            return Err(Error::ModelFormat(format!(
                "expected {t} topics, found phi rows {} and eta entries {}",
                self.phi.len(),
                self.eta.len()
            )));
        }
        for (i, row) in self.phi.iter().enumerate() {
            if row.len() != w {
                return Err(Error::ModelFormat(format!(
                    "phi row {i} has {} entries, vocabulary has {w}",
                    row.len()
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::ModelFormat(format!(
                    "phi row {i} sums to {sum}, expected 1"
                )));
            }
            if row.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
                return Err(Error::ModelFormat(format!(
                    "phi row {i} has entries outside (0,1)"
                )));
            }
        }
        if self.eta.iter().any(|e| !e.is_finite()) {
            return Err(Error::ModelFormat("eta has non-finite entries".into()));
        }
        Ok(())
    }
}

/// On-disk model format: the fitted model plus the schedule and seed that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub hyper: Hyperparams,
    pub eta: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub vocabulary: Vec<String>,
    pub schedule: TrainSchedule,
    pub seed: u64,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

impl ModelFile {
    pub fn new(model: &FittedModel, schedule: &TrainSchedule, seed: u64) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            hyper: model.hyper.clone(),
            eta: model.eta.clone(),
            phi: model.phi.clone(),
            vocabulary: model.vocabulary.words().to_vec(),
            schedule: schedule.clone(),
            seed,
        }
    }

    pub fn into_model(self) -> Result<FittedModel> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        let model = FittedModel {
            phi: self.phi,
            eta: self.eta,
            hyper: self.hyper,
            vocabulary: Vocabulary::from_words(self.vocabulary)?,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| Error::ModelFormat(format!("serialize: {e}")))?;
        fs::write(&path, json).map_err(|source| Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        })
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = fs::read_to_string(&path).map_err(|source| Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::ModelFormat(format!("parse: {e}")))
    }
}
