//! End-to-end behavior of the sharded pipelines.

mod common;

use common::*;
use pslda_core::*;

fn small_schedule() -> TrainSchedule {
    TrainSchedule {
        sweeps: 40,
        burn_in: 20,
        eta_update_every: 1,
        average_phi: false,
    }
}

#[test]
fn one_shard_simple_pipeline_reproduces_nonparallel_run() {
    let fx = default_fixture();
    let tsched = small_schedule();
    let psched = PredictSchedule::default();

    let cfg = PipelineConfig {
        shards: 1,
        combiner: CombinerKind::Simple,
        hyper: fx.hyper.clone(),
        train_schedule: tsched.clone(),
        predict_schedule: psched.clone(),
        seed: 42,
        stress_permutations: false,
    };
    let pipeline = run_pipeline(&fx.train, &fx.test, &cfg).unwrap();
    let (nonparallel, _) =
        run_nonparallel(&fx.train, &fx.test, &fx.hyper, &tsched, &psched, 42).unwrap();

    assert_eq!(pipeline.predictions.y_hat, nonparallel.y_hat);
    assert_eq!(pipeline.predictions.doc_ids, nonparallel.doc_ids);
}

#[test]
fn benchmark_with_one_shard_matches_nonparallel_metrics_exactly() {
    let fx = default_fixture();
    let cfg = BenchConfig {
        shards: 1,
        repeats: 1,
        hyper: fx.hyper.clone(),
        train_schedule: small_schedule(),
        predict_schedule: PredictSchedule::default(),
        seed: 9,
        stress_naive: false,
    };
    let report = run_benchmark(&fx.train, &fx.test, &cfg).unwrap();
    let nonparallel = report.algorithm("nonparallel").unwrap();
    let simple = report.algorithm("simple").unwrap();
    assert_eq!(
        nonparallel.runs[0].test_metric,
        simple.runs[0].test_metric
    );
}

#[test]
fn pooling_permuted_copies_mixes_topic_rows() {
    // Two truth-mode shards, one of them relabeled: the pooled topic-word
    // rows become mixtures and drift far from the generating topics, while
    // pooling the aligned pair stays close.
    let fx = default_fixture();
    let shards = partition(&fx.train, 2, PARTITION_SEED).unwrap();
    let fits = truth_shard_fits(&shards, &fx.corpus, &fx.truth, &fx.hyper);

    let aligned = naive_combine_fit(&fits, &shards, &fx.hyper).unwrap();
    let aligned_tv = match_topics(&aligned.model.phi, &fx.truth.phi_true)
        .unwrap()
        .mean_tv;

    let mut stressed = fits.clone();
    permute_shard_fit(&mut stressed[1], &[1, 2, 0]).unwrap();
    let mixed = naive_combine_fit(&stressed, &shards, &fx.hyper).unwrap();
    let mixed_tv = match_topics(&mixed.model.phi, &fx.truth.phi_true)
        .unwrap()
        .mean_tv;

    assert!(aligned_tv < 0.05, "aligned pooling should track truth, tv={aligned_tv}");
    assert!(mixed_tv >= 0.2, "permuted pooling should mix rows, tv={mixed_tv}");
}

#[test]
fn predictions_are_invariant_to_model_permutation_within_mc_error() {
    // Relabeling (phi rows, eta) and predicting again draws from exactly the
    // same response distribution; with long tail-averaged chains the two
    // estimates agree to Monte-Carlo precision.
    let fx = default_fixture();
    let tsched = small_schedule();
    let outcome = fit(&fx.train, &fx.hyper, &tsched, 31).unwrap();
    let sched = PredictSchedule {
        sweeps: 2000,
        burn_in: 1000,
        average_tail: true,
    };
    let test_docs = Corpus {
        vocabulary: fx.test.vocabulary.clone(),
        docs: fx.test.docs[..20].to_vec(),
        label_kind: fx.test.label_kind,
    };

    let (base, _) = predict_corpus(
        &outcome.model,
        &test_docs,
        &sched,
        500,
        PredictionSource::NonParallel,
    )
    .unwrap();
    let permuted_model = permute_model(&outcome.model, &[2, 0, 1]).unwrap();
    let (permuted, _) = predict_corpus(
        &permuted_model,
        &test_docs,
        &sched,
        501,
        PredictionSource::NonParallel,
    )
    .unwrap();

    // Replicate the base run to estimate per-document MC standard errors.
    let replicates: Vec<PredictionSet> = (0..12)
        .map(|r| {
            predict_corpus(
                &outcome.model,
                &test_docs,
                &sched,
                510 + r,
                PredictionSource::NonParallel,
            )
            .unwrap()
            .0
        })
        .collect();
    for d in 0..test_docs.len() {
        let draws: Vec<f64> = replicates.iter().map(|p| p.y_hat[d]).collect();
        let se = sample_std(&draws).max(1e-6);
        let diff = (permuted.y_hat[d] - base.y_hat[d]).abs();
        assert!(
            diff <= 3.0 * std::f64::consts::SQRT_2 * se,
            "doc {d}: diff {diff} exceeds 3 MC standard errors ({se})"
        );
    }
}

#[test]
fn signed_topic_model_separates_held_out_documents() {
    // Documents of word A carry response ~+1, of word B ~-1. A model
    // fitted on half must predict the held-out half with the right sign
    // almost everywhere.
    let mut text = String::new();
    for i in 0..120 {
        let y = if i % 2 == 0 { 1.0 } else { -1.0 } + (i % 7) as f64 * 0.01;
        let word = if i % 2 == 0 { "aa" } else { "bb" };
        let tokens = vec![word; 8].join(" ");
        text.push_str(&format!("{y}\t{tokens}\n"));
    }
    let corpus = pslda_core::corpus::parse_corpus(&text, CorpusFormat::TsvTokens, "t").unwrap();
    let (train, test) = train_test_split(&corpus, 80, 3).unwrap();
    let mut hyper = Hyperparams::new(2);
    hyper.rho = 0.25;
    let outcome = fit(&train, &hyper, &small_schedule(), 8).unwrap();
    let (preds, _) = predict_corpus(
        &outcome.model,
        &test,
        &PredictSchedule::default(),
        4,
        PredictionSource::NonParallel,
    )
    .unwrap();
    let labels = test.labels().unwrap();
    let correct = labels
        .iter()
        .zip(&preds.y_hat)
        .filter(|(y, yh)| (**y > 0.0) == (**yh > 0.0))
        .count();
    assert!(
        correct as f64 >= 0.95 * labels.len() as f64,
        "only {correct}/{} held-out signs correct",
        labels.len()
    );
}

#[test]
fn pipelines_run_for_every_combiner() {
    let fx = default_fixture();
    for combiner in [CombinerKind::Naive, CombinerKind::Simple, CombinerKind::Weighted] {
        let cfg = PipelineConfig {
            shards: 4,
            combiner,
            hyper: fx.hyper.clone(),
            train_schedule: TrainSchedule {
                sweeps: 12,
                burn_in: 6,
                eta_update_every: 1,
                average_phi: false,
            },
            predict_schedule: PredictSchedule {
                sweeps: 10,
                burn_in: 5,
                average_tail: true,
            },
            seed: 77,
            stress_permutations: false,
        };
        let outcome = run_pipeline(&fx.train, &fx.test, &cfg).unwrap();
        assert_eq!(outcome.predictions.len(), fx.test.len());
        assert_eq!(outcome.timing.fit_ms.len(), 4);
        assert!(outcome.timing.total_ms > 0.0);
        match combiner {
            CombinerKind::Naive => {
                assert!(outcome.shard_predictions.is_empty());
                assert_eq!(outcome.predictions.source, PredictionSource::Naive);
            }
            CombinerKind::Simple => {
                assert_eq!(outcome.shard_predictions.len(), 4);
                assert_eq!(outcome.predictions.source, PredictionSource::Simple);
            }
            CombinerKind::Weighted => {
                assert_eq!(outcome.predictions.source, PredictionSource::Weighted);
            }
        }
    }
}

#[test]
fn stress_flag_changes_naive_output() {
    let fx = default_fixture();
    let base_cfg = PipelineConfig {
        shards: 4,
        combiner: CombinerKind::Naive,
        hyper: fx.hyper.clone(),
        train_schedule: TrainSchedule {
            sweeps: 12,
            burn_in: 6,
            eta_update_every: 1,
            average_phi: false,
        },
        predict_schedule: PredictSchedule {
            sweeps: 10,
            burn_in: 5,
            average_tail: true,
        },
        seed: 13,
        stress_permutations: false,
    };
    let plain = run_pipeline(&fx.train, &fx.test, &base_cfg).unwrap();
    let stressed_cfg = PipelineConfig {
        stress_permutations: true,
        ..base_cfg
    };
    let stressed = run_pipeline(&fx.train, &fx.test, &stressed_cfg).unwrap();
    assert_ne!(plain.predictions.y_hat, stressed.predictions.y_hat);
}

#[test]
fn unlabeled_documents_are_legal_prediction_inputs_only() {
    let text = "?\taa bb\n?\tbb\n";
    let unlabeled =
        pslda_core::corpus::parse_corpus(text, CorpusFormat::TsvTokens, "t").unwrap();
    let labeled = pslda_core::corpus::parse_corpus(
        "1\taa bb aa\n-1\tbb bb\n0.5\taa\n1\tbb aa\n",
        CorpusFormat::TsvTokens,
        "t",
    )
    .unwrap();
    let hyper = Hyperparams::new(2);
    let outcome = fit(&labeled, &hyper, &small_schedule(), 2).unwrap();
    // Training on unlabeled docs fails; predicting them succeeds.
    assert!(fit(&unlabeled, &hyper, &small_schedule(), 2).is_err());
    let (preds, _) = predict_corpus(
        &outcome.model,
        &unlabeled,
        &PredictSchedule::default(),
        1,
        PredictionSource::NonParallel,
    )
    .unwrap();
    assert_eq!(preds.len(), 2);
}
