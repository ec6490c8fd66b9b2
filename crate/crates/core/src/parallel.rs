//! Shard orchestration and the three combination strategies: Naive
//! Combination (the posterior-pooling baseline), Simple Average and
//! Weighted Average over per-shard predictions.
//!
//! Shards are fitted with shared-nothing state and seeds `base_seed +
//! shard_id`, so results are reproducible regardless of how workers are
//! scheduled. Nothing crosses shards until every fit has completed.

use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{partition, Corpus, LabelKind};
use crate::error::{Error, Result};
use crate::eval::{accuracy, mse};
use crate::model::{FittedModel, Hyperparams, PredictSchedule, TrainSchedule};
use crate::predict::{predict_corpus, PredictionSet, PredictionSource};
use crate::rng::{derive_seed, rng_from_seed, STREAM_PREDICT, STREAM_STRESS, STREAM_TRAIN_METRIC};
use crate::sampler::{fit, ols_eta, optimize_eta, training_responses, CountState};
use crate::synth::{permute_model, random_permutation};

/// One shard's training outcome.
#[derive(Debug, Clone)]
pub struct ShardFit {
    pub shard_id: usize,
    pub model: FittedModel,
    /// Per-document topic proportions of the shard's training documents.
    pub zbar_train: Vec<Vec<f64>>,
    /// Final sampler state; Naive Combination pools its counts.
    pub state: CountState,
    /// Full-training-set metric, filled in by the Weighted Average path.
    pub train_metric: Option<f64>,
}

/// Combination strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombinerKind {
    Naive,
    Simple,
    Weighted,
}

impl FromStr for CombinerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(CombinerKind::Naive),
            "simple" => Ok(CombinerKind::Simple),
            "weighted" => Ok(CombinerKind::Weighted),
            other => Err(Error::InvalidArgument(format!(
                "unknown combiner {other:?}; expected naive, simple or weighted"
            ))),
        }
    }
}

impl std::fmt::Display for CombinerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CombinerKind::Naive => write!(f, "naive"),
            CombinerKind::Simple => write!(f, "simple"),
            CombinerKind::Weighted => write!(f, "weighted"),
        }
    }
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Fit every shard independently with seed `base_seed + shard_id`,
/// returning per-shard wall times alongside the fits.
pub fn fit_shards_timed(
    shards: &[Corpus],
    hyper: &Hyperparams,
    schedule: &TrainSchedule,
    base_seed: u64,
) -> Result<(Vec<ShardFit>, Vec<f64>)> {
    if shards.is_empty() {
        return Err(Error::InvalidArgument("no shards to fit".into()));
    }
    let results: Vec<(ShardFit, f64)> = shards
        .par_iter()
        .enumerate()
        .map(|(m, shard)| {
            let start = Instant::now();
            let outcome = fit(shard, hyper, schedule, base_seed + m as u64)
                .map_err(|e| Error::Shard {
                    shard: m,
                    source: Box::new(e),
                })?;
            Ok((
                ShardFit {
                    shard_id: m,
                    model: outcome.model,
                    zbar_train: outcome.zbar,
                    state: outcome.state,
                    train_metric: None,
                },
                ms_since(start),
            ))
        })
        .collect::<Result<_>>()?;
    Ok(results.into_iter().unzip())
}

/// Fit every shard independently; see [`fit_shards_timed`].
pub fn fit_shards(
    shards: &[Corpus],
    hyper: &Hyperparams,
    schedule: &TrainSchedule,
    base_seed: u64,
) -> Result<Vec<ShardFit>> {
    fit_shards_timed(shards, hyper, schedule, base_seed).map(|(fits, _)| fits)
}

/// Predict the test corpus under every shard model concurrently.
pub fn predict_shards(
    shard_fits: &[ShardFit],
    test: &Corpus,
    schedule: &PredictSchedule,
    base_seed: u64,
) -> Result<Vec<PredictionSet>> {
    shard_fits
        .par_iter()
        .map(|sf| {
            predict_corpus(
                &sf.model,
                test,
                schedule,
                derive_seed(base_seed, STREAM_PREDICT + sf.shard_id as u64),
                PredictionSource::Shard(sf.shard_id),
            )
            .map(|(preds, _)| preds)
            .map_err(|e| Error::Shard {
                shard: sf.shard_id,
                source: Box::new(e),
            })
        })
        .collect()
}

fn check_aligned(preds: &[PredictionSet]) -> Result<()> {
    let first = preds
        .first()
        .ok_or_else(|| Error::InvalidArgument("no prediction sets to combine".into()))?;
    for p in &preds[1..] {
        if p.doc_ids != first.doc_ids {
            return Err(Error::DocIdMismatch(format!(
                "{} vs {}",
                p.source, first.source
            )));
        }
    }
    Ok(())
}

/// Combine local predictions with the given simplex weights. Equal weights
/// take the plain arithmetic-mean path, so a uniformly weighted combination
/// is bit-identical to [`simple_combine`].
fn combine_with_weights(
    preds: &[PredictionSet],
    weights: &[f64],
    source: PredictionSource,
) -> Result<PredictionSet> {
    check_aligned(preds)?;
    let n = preds[0].len();
    let m = preds.len();
    let uniform = weights.iter().all(|&w| w == weights[0]);
    let y_hat: Vec<f64> = (0..n)
        .map(|i| {
            if uniform {
                // Centered mean: exact when all locals agree, and shard
                // predictions cluster tightly so the centering also trims
                // rounding in the common case.
                let first = preds[0].y_hat[i];
                let offsets: f64 = preds.iter().map(|p| p.y_hat[i] - first).sum();
                first + offsets / m as f64
            } else {
                preds
                    .iter()
                    .zip(weights)
                    .map(|(p, &w)| w * p.y_hat[i])
                    .sum()
            }
        })
        .collect();
    let class_hat = if preds.iter().all(|p| p.class_hat.is_some()) {
        Some(y_hat.iter().map(|&y| u8::from(y >= 0.5)).collect())
    } else {
        None
    };
    Ok(PredictionSet {
        doc_ids: preds[0].doc_ids.clone(),
        y_hat,
        class_hat,
        source,
    })
}

/// Arithmetic average of the local predictions.
pub fn simple_combine(preds: &[PredictionSet]) -> Result<PredictionSet> {
    let weights = vec![1.0 / preds.len().max(1) as f64; preds.len()];
    combine_with_weights(preds, &weights, PredictionSource::Simple)
}

/// Normalized inverse mean-square-error weights. Each MSE is clamped below
/// at 1e-12 so a zero training error cannot divide by zero.
pub fn inverse_mse_weights(mse_values: &[f64]) -> Vec<f64> {
    let inverses: Vec<f64> = mse_values.iter().map(|&e| 1.0 / e.max(1e-12)).collect();
    let total: f64 = inverses.iter().sum();
    inverses.into_iter().map(|w| w / total).collect()
}

/// Accuracy-proportional weights; all-zero accuracies fall back to uniform.
pub fn accuracy_weights(acc: &[f64]) -> Vec<f64> {
    let total: f64 = acc.iter().sum();
    if total == 0.0 {
        return vec![1.0 / acc.len() as f64; acc.len()];
    }
    acc.iter().map(|&a| a / total).collect()
}

/// Metric of each shard model on the entire training corpus: MSE for
/// continuous labels, accuracy for binary ones. This full-corpus pass is
/// the documented extra cost of Weighted Average.
pub fn shard_train_metrics(
    shard_fits: &[ShardFit],
    full_train: &Corpus,
    schedule: &PredictSchedule,
    base_seed: u64,
) -> Result<Vec<f64>> {
    let labels = full_train.labels()?;
    shard_fits
        .par_iter()
        .map(|sf| {
            let (preds, _) = predict_corpus(
                &sf.model,
                full_train,
                schedule,
                derive_seed(base_seed, STREAM_TRAIN_METRIC + sf.shard_id as u64),
                PredictionSource::Shard(sf.shard_id),
            )
            .map_err(|e| Error::Shard {
                shard: sf.shard_id,
                source: Box::new(e),
            })?;
            match full_train.label_kind {
                LabelKind::Continuous => mse(&labels, &preds.y_hat),
                LabelKind::Binary => {
                    let classes = preds.class_hat.as_ref().ok_or_else(|| {
                        Error::InvalidArgument(
                            "binary training corpus produced no class predictions".into(),
                        )
                    })?;
                    accuracy(&labels, classes)
                }
            }
        })
        .collect()
}

/// Weighted average of local predictions, weighted by inverse training MSE
/// (continuous) or training accuracy (binary) of each shard model over the
/// full training corpus. Returns the combined predictions and the metrics
/// the weights came from.
pub fn weighted_combine(
    preds: &[PredictionSet],
    shard_fits: &[ShardFit],
    full_train: &Corpus,
    schedule: &PredictSchedule,
    base_seed: u64,
) -> Result<(PredictionSet, Vec<f64>)> {
    if preds.len() != shard_fits.len() {
        return Err(Error::LengthMismatch(format!(
            "{} prediction sets for {} shard fits",
            preds.len(),
            shard_fits.len()
        )));
    }
    let metrics = shard_train_metrics(shard_fits, full_train, schedule, base_seed)?;
    let weights = match full_train.label_kind {
        LabelKind::Continuous => inverse_mse_weights(&metrics),
        LabelKind::Binary => accuracy_weights(&metrics),
    };
    let combined = combine_with_weights(preds, &weights, PredictionSource::Weighted)?;
    Ok((combined, metrics))
}

/// Naive Combination's pooled model.
#[derive(Debug, Clone)]
pub struct NaiveFit {
    pub model: FittedModel,
    /// True when the ordinary-least-squares system was singular and the
    /// ridge prior had to be reinstated.
    pub eta_ridge_fallback: bool,
}

/// Pool all shards' topic-word counts as if they came from one chain,
/// estimate the word distributions from the pooled counts, and fit the
/// coefficients by ordinary linear regression on the stacked per-document
/// topic proportions (ridge with the prior variance as fallback when the
/// least-squares system is singular).
pub fn naive_combine_fit(
    shard_fits: &[ShardFit],
    shard_corpora: &[Corpus],
    hyper: &Hyperparams,
) -> Result<NaiveFit> {
    if shard_fits.is_empty() || shard_fits.len() != shard_corpora.len() {
        return Err(Error::LengthMismatch(format!(
            "{} shard fits for {} shard corpora",
            shard_fits.len(),
            shard_corpora.len()
        )));
    }
    let t_count = hyper.num_topics;
    let w_count = shard_corpora[0].vocabulary.len();
    for sf in shard_fits {
        if sf.state.num_topics() != t_count || sf.state.vocab_size() != w_count {
            return Err(Error::Shard {
                shard: sf.shard_id,
                source: Box::new(Error::InvalidArgument(
                    "shard state dimensions disagree with hyperparameters".into(),
                )),
            });
        }
    }

    let mut topic_word = vec![0usize; t_count * w_count];
    let mut topic_total = vec![0usize; t_count];
    for sf in shard_fits {
        for t in 0..t_count {
            topic_total[t] += sf.state.topic_total(t);
            for w in 0..w_count {
                topic_word[t * w_count + w] += sf.state.topic_word(t, w);
            }
        }
    }
    let smooth = w_count as f64 * hyper.beta;
    let phi: Vec<Vec<f64>> = (0..t_count)
        .map(|t| {
            let denom = topic_total[t] as f64 + smooth;
            (0..w_count)
                .map(|w| (topic_word[t * w_count + w] as f64 + hyper.beta) / denom)
                .collect()
        })
        .collect();

    let mut zbar = Vec::new();
    let mut responses = Vec::new();
    for (sf, corpus) in shard_fits.iter().zip(shard_corpora) {
        zbar.extend(sf.zbar_train.iter().cloned());
        responses.extend(training_responses(corpus, hyper)?);
    }
    let (eta, eta_ridge_fallback) = match ols_eta(&zbar, &responses) {
        Some(eta) => (eta, false),
        None => (optimize_eta(&zbar, &responses, hyper)?, true),
    };

    Ok(NaiveFit {
        model: FittedModel {
            phi,
            eta,
            hyper: hyper.clone(),
            vocabulary: shard_corpora[0].vocabulary.clone(),
        },
        eta_ridge_fallback,
    })
}

/// Apply an independent random topic permutation to each shard fit,
/// relabeling the model, the sampler state and the topic proportions
/// consistently. Returns the permutations used.
///
/// This simulates the worst case of label switching across shards, which is
/// what independent samplers drift into on their own.
pub fn apply_stress_permutations(
    shard_fits: &mut [ShardFit],
    base_seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let mut perms = Vec::with_capacity(shard_fits.len());
    for sf in shard_fits.iter_mut() {
        let mut rng = rng_from_seed(derive_seed(
            base_seed,
            STREAM_STRESS + sf.shard_id as u64,
        ));
        let pi = random_permutation(sf.model.num_topics(), &mut rng);
        permute_shard_fit(sf, &pi)?;
        perms.push(pi);
    }
    Ok(perms)
}

/// Relabel one shard fit's topics by `pi`.
pub fn permute_shard_fit(sf: &mut ShardFit, pi: &[usize]) -> Result<()> {
    sf.model = permute_model(&sf.model, pi)?;
    sf.state.permute_topics(pi);
    for row in &mut sf.zbar_train {
        let mut permuted = vec![0.0; row.len()];
        for (t, &value) in row.iter().enumerate() {
            permuted[pi[t]] = value;
        }
        *row = permuted;
    }
    Ok(())
}

/// Wall-clock phase breakdown of a pipeline run, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub partition_ms: f64,
    /// Per-shard fit times, in shard order.
    pub fit_ms: Vec<f64>,
    /// Wall time of the whole fit phase (critical path across workers).
    pub fit_wall_ms: f64,
    pub predict_ms: f64,
    pub combine_ms: f64,
    pub total_ms: f64,
}

/// Parameters of one sharded train-predict-combine run.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub shards: usize,
    pub combiner: CombinerKind,
    pub hyper: Hyperparams,
    pub train_schedule: TrainSchedule,
    pub predict_schedule: PredictSchedule,
    pub seed: u64,
    /// Apply independent random topic permutations to the shard fits before
    /// combining (label-switching stress).
    pub stress_permutations: bool,
}

/// Output of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub predictions: PredictionSet,
    /// Per-shard local predictions (empty for Naive Combination, which
    /// predicts once from the pooled model).
    pub shard_predictions: Vec<PredictionSet>,
    pub timing: TimingRecord,
    pub naive_ridge_fallback: bool,
}

/// Partition, fit shards in parallel, predict and combine.
pub fn run_pipeline(
    train: &Corpus,
    test: &Corpus,
    cfg: &PipelineConfig,
) -> Result<PipelineOutcome> {
    let total_start = Instant::now();

    let start = Instant::now();
    let shards = partition(train, cfg.shards, cfg.seed)?;
    let partition_ms = ms_since(start);

    let start = Instant::now();
    let (mut shard_fits, fit_ms) =
        fit_shards_timed(&shards, &cfg.hyper, &cfg.train_schedule, cfg.seed)?;
    let fit_wall_ms = ms_since(start);

    if cfg.stress_permutations {
        apply_stress_permutations(&mut shard_fits, cfg.seed)?;
    }

    let (predictions, shard_predictions, predict_ms, combine_ms, naive_ridge_fallback) =
        match cfg.combiner {
            CombinerKind::Naive => {
                let start = Instant::now();
                let naive = naive_combine_fit(&shard_fits, &shards, &cfg.hyper)?;
                let combine_ms = ms_since(start);
                let start = Instant::now();
                let (preds, _) = predict_corpus(
                    &naive.model,
                    test,
                    &cfg.predict_schedule,
                    derive_seed(cfg.seed, STREAM_PREDICT),
                    PredictionSource::Naive,
                )?;
                let predict_ms = ms_since(start);
                (preds, Vec::new(), predict_ms, combine_ms, naive.eta_ridge_fallback)
            }
            CombinerKind::Simple => {
                let start = Instant::now();
                let locals = predict_shards(&shard_fits, test, &cfg.predict_schedule, cfg.seed)?;
                let predict_ms = ms_since(start);
                let start = Instant::now();
                let combined = simple_combine(&locals)?;
                let combine_ms = ms_since(start);
                (combined, locals, predict_ms, combine_ms, false)
            }
            CombinerKind::Weighted => {
                let start = Instant::now();
                let locals = predict_shards(&shard_fits, test, &cfg.predict_schedule, cfg.seed)?;
                let predict_ms = ms_since(start);
                let start = Instant::now();
                let (combined, metrics) = weighted_combine(
                    &locals,
                    &shard_fits,
                    train,
                    &cfg.predict_schedule,
                    cfg.seed,
                )?;
                for (sf, metric) in shard_fits.iter_mut().zip(&metrics) {
                    sf.train_metric = Some(*metric);
                }
                let combine_ms = ms_since(start);
                (combined, locals, predict_ms, combine_ms, false)
            }
        };

    Ok(PipelineOutcome {
        predictions,
        shard_predictions,
        timing: TimingRecord {
            partition_ms,
            fit_ms,
            fit_wall_ms,
            predict_ms,
            combine_ms,
            total_ms: ms_since(total_start),
        },
        naive_ridge_fallback,
    })
}
