//! Metrics and the four-way benchmark harness comparing the non-parallel
//! fit with Naive Combination, Simple Average and Weighted Average.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabelKind};
use crate::error::{Error, Result};
use crate::model::{Hyperparams, PredictSchedule, TrainSchedule};
use crate::parallel::{run_pipeline, CombinerKind, PipelineConfig, TimingRecord};
use crate::predict::{predict_corpus, PredictionSet, PredictionSource};
use crate::rng::{derive_seed, STREAM_PREDICT};
use crate::sampler::fit;

/// Mean square error.
pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.is_empty() || y.len() != y_hat.len() {
        return Err(Error::LengthMismatch(format!(
            "mse over {} labels and {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    Ok(y.iter()
        .zip(y_hat)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / y.len() as f64)
}

/// Fraction of matching 0/1 labels.
pub fn accuracy(y: &[f64], class_hat: &[u8]) -> Result<f64> {
    if y.is_empty() || y.len() != class_hat.len() {
        return Err(Error::LengthMismatch(format!(
            "accuracy over {} labels and {} predictions",
            y.len(),
            class_hat.len()
        )));
    }
    let mut hits = 0usize;
    for (&label, &class) in y.iter().zip(class_hat) {
        if label != 0.0 && label != 1.0 {
            return Err(Error::NonBinaryLabel(label));
        }
        if class > 1 {
            return Err(Error::NonBinaryLabel(f64::from(class)));
        }
        if (label == 1.0) == (class == 1) {
            hits += 1;
        }
    }
    Ok(hits as f64 / y.len() as f64)
}

/// Score a prediction set against the test labels with the metric the label
/// kind calls for.
pub fn score(test: &Corpus, preds: &PredictionSet) -> Result<f64> {
    let labels = test.labels()?;
    match test.label_kind {
        LabelKind::Continuous => mse(&labels, &preds.y_hat),
        LabelKind::Binary => {
            let classes = preds.class_hat.as_ref().ok_or_else(|| {
                Error::InvalidArgument("binary corpus scored without class predictions".into())
            })?;
            accuracy(&labels, classes)
        }
    }
}

/// Fit on the full training corpus and predict the test corpus, with the
/// same seed discipline as a single-shard pipeline: the fit uses `seed`, the
/// prediction uses the shard-0 prediction stream. A one-shard Simple Average
/// run therefore reproduces this output exactly.
pub fn run_nonparallel(
    train: &Corpus,
    test: &Corpus,
    hyper: &Hyperparams,
    train_schedule: &TrainSchedule,
    predict_schedule: &PredictSchedule,
    seed: u64,
) -> Result<(PredictionSet, TimingRecord)> {
    let total_start = Instant::now();
    let start = Instant::now();
    let outcome = fit(train, hyper, train_schedule, seed)?;
    let fit_wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let start = Instant::now();
    let (preds, _) = predict_corpus(
        &outcome.model,
        test,
        predict_schedule,
        derive_seed(seed, STREAM_PREDICT),
        PredictionSource::NonParallel,
    )?;
    let predict_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((
        preds,
        TimingRecord {
            partition_ms: 0.0,
            fit_ms: vec![fit_wall_ms],
            fit_wall_ms,
            predict_ms,
            combine_ms: 0.0,
            total_ms: total_start.elapsed().as_secs_f64() * 1e3,
        },
    ))
}

/// Which metric a benchmark reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Mse,
    Accuracy,
}

/// Benchmark parameters.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub shards: usize,
    pub repeats: usize,
    pub hyper: Hyperparams,
    pub train_schedule: TrainSchedule,
    pub predict_schedule: PredictSchedule,
    pub seed: u64,
    /// Permutation-stress the Naive Combination runs.
    pub stress_naive: bool,
}

/// One timed run of one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub seed: u64,
    pub timing: TimingRecord,
    pub test_metric: f64,
    pub train_metric: Option<f64>,
}

/// Mean phase times and metrics over the repeats of one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchMean {
    pub total_ms: f64,
    pub fit_wall_ms: f64,
    pub predict_ms: f64,
    pub combine_ms: f64,
    pub test_metric: f64,
}

/// All runs of one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmReport {
    pub name: String,
    pub shards: usize,
    pub runs: Vec<BenchRun>,
    pub mean: BenchMean,
}

/// Full benchmark output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub metric_kind: MetricKind,
    pub repeats: usize,
    pub base_seed: u64,
    pub algorithms: Vec<AlgorithmReport>,
}

fn mean_of(runs: &[BenchRun]) -> BenchMean {
    let n = runs.len() as f64;
    BenchMean {
        total_ms: runs.iter().map(|r| r.timing.total_ms).sum::<f64>() / n,
        fit_wall_ms: runs.iter().map(|r| r.timing.fit_wall_ms).sum::<f64>() / n,
        predict_ms: runs.iter().map(|r| r.timing.predict_ms).sum::<f64>() / n,
        combine_ms: runs.iter().map(|r| r.timing.combine_ms).sum::<f64>() / n,
        test_metric: runs.iter().map(|r| r.test_metric).sum::<f64>() / n,
    }
}

impl BenchReport {
    pub fn algorithm(&self, name: &str) -> Option<&AlgorithmReport> {
        self.algorithms.iter().find(|a| a.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidArgument(format!("report serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("report parse: {e}")))
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        fs::write(&path, self.to_json()?).map_err(|source| Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        })
    }

    /// Per-run CSV rows for external plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "algorithm,seed,total_ms,fit_wall_ms,predict_ms,combine_ms,test_metric\n",
        );
        for algo in &self.algorithms {
            for run in &algo.runs {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    algo.name,
                    run.seed,
                    run.timing.total_ms,
                    run.timing.fit_wall_ms,
                    run.timing.predict_ms,
                    run.timing.combine_ms,
                    run.test_metric
                ));
            }
        }
        out
    }
}

/// Run every algorithm `repeats` times on identical splits (repeat `r` uses
/// seed `base_seed + r`) and average. Repeats run sequentially to keep the
/// wall-clock phases honest; parallelism lives inside each pipeline.
pub fn run_benchmark(train: &Corpus, test: &Corpus, cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.repeats < 1 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let metric_kind = match train.label_kind {
        LabelKind::Continuous => MetricKind::Mse,
        LabelKind::Binary => MetricKind::Accuracy,
    };

    let mut nonparallel = Vec::with_capacity(cfg.repeats);
    let mut by_combiner: Vec<(CombinerKind, Vec<BenchRun>)> = vec![
        (CombinerKind::Naive, Vec::new()),
        (CombinerKind::Simple, Vec::new()),
        (CombinerKind::Weighted, Vec::new()),
    ];

    for r in 0..cfg.repeats {
        let seed = cfg.seed + r as u64;
        let (preds, timing) = run_nonparallel(
            train,
            test,
            &cfg.hyper,
            &cfg.train_schedule,
            &cfg.predict_schedule,
            seed,
        )?;
        nonparallel.push(BenchRun {
            seed,
            timing,
            test_metric: score(test, &preds)?,
            train_metric: None,
        });

        for (combiner, runs) in &mut by_combiner {
            let pipeline_cfg = PipelineConfig {
                shards: cfg.shards,
                combiner: *combiner,
                hyper: cfg.hyper.clone(),
                train_schedule: cfg.train_schedule.clone(),
                predict_schedule: cfg.predict_schedule.clone(),
                seed,
                stress_permutations: cfg.stress_naive && *combiner == CombinerKind::Naive,
            };
            let outcome = run_pipeline(train, test, &pipeline_cfg)?;
            runs.push(BenchRun {
                seed,
                timing: outcome.timing,
                test_metric: score(test, &outcome.predictions)?,
                train_metric: None,
            });
        }
    }

    let mut algorithms = vec![AlgorithmReport {
        name: "nonparallel".into(),
        shards: 1,
        mean: mean_of(&nonparallel),
        runs: nonparallel,
    }];
    for (combiner, runs) in by_combiner {
        algorithms.push(AlgorithmReport {
            name: combiner.to_string(),
            shards: cfg.shards,
            mean: mean_of(&runs),
            runs,
        });
    }

    Ok(BenchReport {
        metric_kind,
        repeats: cfg.repeats,
        base_seed: cfg.seed,
        algorithms,
    })
}
