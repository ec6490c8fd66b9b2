//! Communication-free parallel supervised LDA.
//!
//! Trains supervised topic models by collapsed Gibbs sampling with a
//! closed-form regression update (stochastic EM), either on one machine or
//! on disjoint corpus shards fitted independently. Shard outputs are merged
//! at the prediction level — Simple Average or Weighted Average of local
//! predictions — or at the posterior level (Naive Combination), which pools
//! shard topic counts as if they came from one chain and serves as the
//! label-switching-sensitive baseline.
//!
//! Everything is deterministic given its seed, regardless of how many
//! worker threads run the shards.

pub mod align;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod parallel;
pub mod predict;
pub mod rng;
pub mod sampler;
pub mod synth;

pub use align::{hungarian_min_cost, match_topics, tv_distance, TopicMatch};
pub use corpus::{
    load_corpus, partition, prune_vocabulary, train_test_split, Corpus, CorpusFormat, Document,
    LabelKind, PruneOutcome, Vocabulary,
};
pub use error::{Error, Result};
pub use eval::{
    accuracy, mse, run_benchmark, run_nonparallel, score, BenchConfig, BenchReport, MetricKind,
};
pub use model::{
    BinaryLink, FittedModel, Hyperparams, ModelFile, PredictSchedule, TrainSchedule,
    MODEL_FORMAT_VERSION,
};
pub use parallel::{
    accuracy_weights, apply_stress_permutations, fit_shards, fit_shards_timed,
    inverse_mse_weights, naive_combine_fit, permute_shard_fit, predict_shards, run_pipeline,
    simple_combine, weighted_combine, CombinerKind, NaiveFit, PipelineConfig, PipelineOutcome,
    ShardFit, TimingRecord,
};
pub use predict::{
    gibbs_sweep_test, predict_corpus, OovReport, PredictionSet, PredictionSource,
};
pub use sampler::{
    conditional_topic_weights, corpus_tokens, doc_topic_means, estimate_phi, fit, gibbs_sweep_train,
    init_assignments, optimize_eta, training_responses, CountState, FitResult, TopicConditional,
};
pub use synth::{
    default_instance, generate_corpus, permute_model, random_permutation, GroundTruth, SynthDims,
};
