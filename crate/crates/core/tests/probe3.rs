// Scratch probe: criterion-5b configurations. Deleted before ship.

use pslda_core::corpus_tokens;
use pslda_core::*;

fn naive_mse(
    fits: &[ShardFit],
    shards: &[Corpus],
    test: &Corpus,
    hyper: &Hyperparams,
    sched: &PredictSchedule,
    seed: u64,
) -> f64 {
    let naive = naive_combine_fit(fits, shards, hyper).unwrap();
    let (preds, _) =
        predict_corpus(&naive.model, test, sched, seed, PredictionSource::Naive).unwrap();
    score(test, &preds).unwrap()
}

/// Shard fits built directly from the generator's true assignments: every
/// shard sits in the same (truth) mode.
fn truth_fits(
    shards: &[Corpus],
    corpus: &Corpus,
    truth: &GroundTruth,
    hyper: &Hyperparams,
) -> Vec<ShardFit> {
    use std::collections::HashMap;
    let index: HashMap<&str, usize> = corpus
        .docs
        .iter()
        .enumerate()
        .map(|(i, d)| (d.doc_id.as_str(), i))
        .collect();
    shards
        .iter()
        .enumerate()
        .map(|(m, shard)| {
            let z: Vec<Vec<usize>> = shard
                .docs
                .iter()
                .map(|d| truth.z_true[index[d.doc_id.as_str()]].clone())
                .collect();
            let state = CountState::from_assignments(
                corpus_tokens(shard),
                hyper.num_topics,
                shard.vocabulary.len(),
                z,
            );
            let zbar = doc_topic_means(&state);
            let phi = estimate_phi(&state, hyper);
            let eta = truth.eta_true.clone();
            ShardFit {
                shard_id: m,
                model: FittedModel {
                    phi,
                    eta,
                    hyper: hyper.clone(),
                    vocabulary: shard.vocabulary.clone(),
                },
                zbar_train: zbar,
                state,
                train_metric: None,
            }
        })
        .collect()
}

#[test]
#[ignore]
fn probe_5b_configs() {
    let sched = PredictSchedule {
        sweeps: 2000,
        burn_in: 1000,
        average_tail: true,
    };
    let distinct: Vec<Vec<usize>> = vec![
        vec![1, 2, 0],
        vec![2, 0, 1],
        vec![1, 0, 2],
        vec![0, 2, 1],
    ];
    for instance_seed in [2024u64, 1, 2, 3, 4, 5, 6, 7] {
        let (hyper, dims) = default_instance();
        let (corpus, truth) = generate_corpus(&hyper, &dims, instance_seed).unwrap();
        let (train, test) = train_test_split(&corpus, 400, 7).unwrap();
        let shards = partition(&train, 4, 11).unwrap();

        // Fitted-and-aligned baseline.
        let schedule = TrainSchedule {
            sweeps: 200,
            burn_in: 100,
            eta_update_every: 1,
            average_phi: false,
        };
        let fits = fit_shards(&shards, &hyper, &schedule, 100 + instance_seed).unwrap();
        let mut aligned = fits.clone();
        for sf in &mut aligned {
            let m = match_topics(&sf.model.phi, &truth.phi_true).unwrap();
            permute_shard_fit(sf, &m.permutation).unwrap();
        }
        let base_fit = naive_mse(&aligned, &shards, &test, &hyper, &sched, 5);
        let mut stressed = aligned.clone();
        for (sf, pi) in stressed.iter_mut().zip(&distinct) {
            permute_shard_fit(sf, pi).unwrap();
        }
        let stress_fit = naive_mse(&stressed, &shards, &test, &hyper, &sched, 5);

        // Truth-state baseline.
        let tf = truth_fits(&shards, &corpus, &truth, &hyper);
        let base_truth = naive_mse(&tf, &shards, &test, &hyper, &sched, 5);
        let mut tf_stressed = tf.clone();
        for (sf, pi) in tf_stressed.iter_mut().zip(&distinct) {
            permute_shard_fit(sf, pi).unwrap();
        }
        let stress_truth = naive_mse(&tf_stressed, &shards, &test, &hyper, &sched, 5);

        let var_eta: f64 = {
            let m: f64 = truth.eta_true.iter().sum::<f64>() / 3.0;
            truth.eta_true.iter().map(|e| (e - m).powi(2)).sum::<f64>() / 3.0
        };
        println!(
            "seed {instance_seed}: fit {base_fit:.4}->{stress_fit:.4} (x{:.2})  \
             truth {base_truth:.4}->{stress_truth:.4} (x{:.2})  eta_spread {var_eta:.3}",
            stress_fit / base_fit,
            stress_truth / base_truth
        );
    }
}
