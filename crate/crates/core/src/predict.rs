//! Test-time inference: sample topic assignments for unlabeled documents
//! under a fitted model and emit predicted responses.
//!
//! The test conditional keeps the document-topic ratio of the training
//! sampler but reads the word factor from the frozen topic-word estimate and
//! carries no response factor:
//!
//! ```text
//! p(z = t | ...) ∝ (N_dt + alpha) / (N_d. + T*alpha) * phi[t][w]
//! ```

use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::corpus::{Corpus, LabelKind};
use crate::error::{Error, Result};
use crate::model::{BinaryLink, FittedModel, PredictSchedule};
use crate::rng::rng_from_seed;
use crate::sampler::{logistic, sample_categorical, CountState};

/// Which pipeline produced a prediction set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionSource {
    NonParallel,
    Shard(usize),
    Simple,
    Weighted,
    Naive,
}

impl fmt::Display for PredictionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictionSource::NonParallel => write!(f, "nonparallel"),
            PredictionSource::Shard(m) => write!(f, "shard {m}"),
            PredictionSource::Simple => write!(f, "simple"),
            PredictionSource::Weighted => write!(f, "weighted"),
            PredictionSource::Naive => write!(f, "naive"),
        }
    }
}

/// Per-document predictions with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub doc_ids: Vec<String>,
    pub y_hat: Vec<f64>,
    /// 0/1 class decisions, present for binary-label models.
    pub class_hat: Option<Vec<u8>>,
    pub source: PredictionSource,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    /// TSV rows `doc_id \t y_hat [\t class_hat]`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, id) in self.doc_ids.iter().enumerate() {
            out.push_str(id);
            out.push('\t');
            out.push_str(&self.y_hat[i].to_string());
            if let Some(classes) = &self.class_hat {
                out.push('\t');
                out.push_str(&classes[i].to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn save_tsv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        fs::write(&path, self.to_tsv()).map_err(|source| Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        })
    }
}

/// Out-of-vocabulary accounting for a prediction run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OovReport {
    /// Test tokens dropped because the model vocabulary lacks their word.
    pub dropped_tokens: usize,
    /// Documents whose every token was out of vocabulary; they receive the
    /// mean coefficient as their prediction.
    pub fully_oov_docs: Vec<String>,
}

/// Unnormalized test-conditional weights for token `n` of document `d`
/// carrying model-vocabulary word id `word`. Counts in `state` still include
/// the token.
pub fn test_topic_weights(
    state: &CountState,
    d: usize,
    n: usize,
    word: usize,
    model: &FittedModel,
) -> Vec<f64> {
    let t_count = state.num_topics();
    let cur = state.z[d][n];
    let nd_ex = (state.doc_len(d) - 1) as f64;
    let doc_denom = nd_ex + t_count as f64 * model.hyper.alpha;
    (0..t_count)
        .map(|t| {
            let ndt_ex = (state.doc_topic(d, t) - usize::from(t == cur)) as f64;
            (ndt_ex + model.hyper.alpha) / doc_denom * model.phi[t][word]
        })
        .collect()
}

/// One prediction sweep over `docs` (token ids in the model vocabulary),
/// with the same visit discipline as training.
pub fn gibbs_sweep_test<R: Rng>(
    state: &mut CountState,
    docs: &[Vec<usize>],
    model: &FittedModel,
    rng: &mut R,
) {
    for (d, tokens) in docs.iter().enumerate() {
        for (n, &w) in tokens.iter().enumerate() {
            let weights = test_topic_weights(state, d, n, w, model);
            let old = state.z[d][n];
            state.unassign(d, old, w);
            let new = sample_categorical(rng, &weights);
            state.z[d][n] = new;
            state.assign(d, new, w);
        }
    }
}

/// Map a test document's tokens into the model vocabulary, dropping
/// out-of-vocabulary words.
fn map_tokens(doc_tokens: &[usize], test: &Corpus, model: &FittedModel) -> (Vec<usize>, usize) {
    let mut mapped = Vec::with_capacity(doc_tokens.len());
    let mut dropped = 0;
    for &t in doc_tokens {
        match model.vocabulary.id(test.vocabulary.word(t)) {
            Some(id) => mapped.push(id),
            None => dropped += 1,
        }
    }
    (mapped, dropped)
}

/// Predict responses for every document of `test` under `model`.
///
/// Token ids are matched by word string, so the test corpus may carry its
/// own vocabulary. Documents whose every token is out of vocabulary get the
/// uniform topic mixture, i.e. the mean coefficient, and are reported.
pub fn predict_corpus(
    model: &FittedModel,
    test: &Corpus,
    schedule: &PredictSchedule,
    seed: u64,
    source: PredictionSource,
) -> Result<(PredictionSet, OovReport)> {
    schedule.validate()?;
    if test.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let t_count = model.num_topics();

    let mut report = OovReport::default();
    // Sampled docs keep their position in the output via `slot`.
    let mut sampled_tokens: Vec<Vec<usize>> = Vec::new();
    let mut slot: Vec<Option<usize>> = Vec::with_capacity(test.len());
    for doc in &test.docs {
        let (mapped, dropped) = map_tokens(&doc.tokens, test, model);
        report.dropped_tokens += dropped;
        if mapped.is_empty() {
            report.fully_oov_docs.push(doc.doc_id.clone());
            slot.push(None);
        } else {
            slot.push(Some(sampled_tokens.len()));
            sampled_tokens.push(mapped);
        }
    }

    let mut zbar: Vec<Vec<f64>> = vec![vec![0.0; t_count]; sampled_tokens.len()];
    if !sampled_tokens.is_empty() {
        let mut rng = rng_from_seed(seed);
        let mut state = CountState::init_uniform(
            sampled_tokens.iter().map(Vec::as_slice),
            t_count,
            model.vocab_size(),
            &mut rng,
        );
        let tail = schedule.sweeps - schedule.burn_in;
        for sweep in 0..schedule.sweeps {
            gibbs_sweep_test(&mut state, &sampled_tokens, model, &mut rng);
            if schedule.average_tail && sweep >= schedule.burn_in {
                for (d, acc) in zbar.iter_mut().enumerate() {
                    let len = state.doc_len(d) as f64;
                    for (t, a) in acc.iter_mut().enumerate() {
                        *a += state.doc_topic(d, t) as f64 / len;
                    }
                }
            }
        }
        if schedule.average_tail {
            for acc in &mut zbar {
                for a in acc.iter_mut() {
                    *a /= tail as f64;
                }
            }
        } else {
            for (d, acc) in zbar.iter_mut().enumerate() {
                let len = state.doc_len(d) as f64;
                for (t, a) in acc.iter_mut().enumerate() {
                    *a = state.doc_topic(d, t) as f64 / len;
                }
            }
        }
    }

    let uniform_response: f64 = model.eta.iter().sum::<f64>() / t_count as f64;
    let raw: Vec<f64> = slot
        .iter()
        .map(|s| match s {
            Some(i) => zbar[*i]
                .iter()
                .zip(&model.eta)
                .map(|(z, e)| z * e)
                .sum::<f64>(),
            None => uniform_response,
        })
        .collect();

    let (y_hat, class_hat) = finalize_predictions(raw, &model.hyper.label_kind, model.hyper.binary_link);

    Ok((
        PredictionSet {
            doc_ids: test.docs.iter().map(|d| d.doc_id.clone()).collect(),
            y_hat,
            class_hat,
            source,
        },
        report,
    ))
}

/// Map raw regression outputs to final predictions: identity for continuous
/// labels; for binary labels, optionally back through the logistic function,
/// then thresholded at 0.5.
pub(crate) fn finalize_predictions(
    raw: Vec<f64>,
    label_kind: &LabelKind,
    link: BinaryLink,
) -> (Vec<f64>, Option<Vec<u8>>) {
    match label_kind {
        LabelKind::Continuous => (raw, None),
        LabelKind::Binary => {
            let y_hat: Vec<f64> = match link {
                BinaryLink::Linear => raw,
                BinaryLink::Logit => raw.into_iter().map(logistic).collect(),
            };
            let classes = y_hat.iter().map(|&y| u8::from(y >= 0.5)).collect();
            (y_hat, Some(classes))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, CorpusFormat, Vocabulary};
    use crate::model::Hyperparams;
    use crate::sampler::CountState;

    fn model(phi: Vec<Vec<f64>>, eta: Vec<f64>, words: &[&str]) -> FittedModel {
        let mut hyper = Hyperparams::new(phi.len().max(2));
        hyper.num_topics = phi.len();
        FittedModel {
            phi,
            eta,
            hyper,
            vocabulary: Vocabulary::from_words(words.iter().map(|w| w.to_string()).collect())
                .unwrap(),
        }
    }

    fn corpus(text: &str) -> Corpus {
        parse_corpus(text, CorpusFormat::TsvTokens, "test").unwrap()
    }

    #[test]
    fn uniform_model_gives_uniform_conditional() {
        let m = model(
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![0.0, 0.0],
            &["a", "b"],
        );
        // Single-token doc: after exclusion the doc-topic counts are zero.
        let state = CountState::from_assignments([&[0usize][..]].into_iter(), 2, 2, vec![vec![0]]);
        let w = test_topic_weights(&state, 0, 0, 0, &m);
        assert!((w[0] - w[1]).abs() < 1e-15);
    }

    #[test]
    fn single_topic_sweep_is_a_no_op() {
        let m = model(vec![vec![0.4, 0.6]], vec![1.0], &["a", "b"]);
        let docs = vec![vec![0, 1, 0]];
        let mut state =
            CountState::from_assignments(docs.iter().map(Vec::as_slice), 1, 2, vec![vec![0; 3]]);
        let before = state.clone();
        gibbs_sweep_test(&mut state, &docs, &m, &mut rng_from_seed(1));
        assert_eq!(state, before);
    }

    #[test]
    fn tiny_alpha_conditional_follows_phi() {
        // Single-token document with alpha -> 0: the conditional reduces to
        // the normalized phi column.
        let mut m = model(
            vec![vec![0.7, 0.3], vec![0.2, 0.8]],
            vec![0.0, 0.0],
            &["a", "b"],
        );
        m.hyper.alpha = 1e-9;
        let state = CountState::from_assignments([&[0usize][..]].into_iter(), 2, 2, vec![vec![0]]);
        let w = test_topic_weights(&state, 0, 0, 0, &m);
        let total: f64 = w.iter().sum();
        let col_total = 0.7 + 0.2;
        assert!((w[0] / total - 0.7 / col_total).abs() < 1e-6);
        assert!((w[1] / total - 0.2 / col_total).abs() < 1e-6);
    }

    #[test]
    fn fully_oov_doc_predicts_mean_coefficient() {
        let m = model(
            vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            vec![2.0, -1.0],
            &["a", "b"],
        );
        let test = corpus("?\tzz qq\n?\ta b a\n");
        let (preds, report) =
            predict_corpus(&m, &test, &PredictSchedule::default(), 5, PredictionSource::NonParallel)
                .unwrap();
        // Doc 0 is fully out of vocabulary: uniform mixture, so the mean of eta.
        assert_eq!(preds.y_hat[0], 0.5);
        assert_eq!(report.fully_oov_docs, vec!["d0".to_string()]);
        assert_eq!(report.dropped_tokens, 2);
        assert_eq!(preds.doc_ids, vec!["d0", "d1"]);
    }

    #[test]
    fn constant_coefficients_predict_the_constant() {
        let m = model(
            vec![vec![0.6, 0.4], vec![0.3, 0.7]],
            vec![1.25, 1.25],
            &["a", "b"],
        );
        let test = corpus("?\ta b b\n?\tb\n?\ta a\n");
        let (preds, _) =
            predict_corpus(&m, &test, &PredictSchedule::default(), 9, PredictionSource::NonParallel)
                .unwrap();
        for &y in &preds.y_hat {
            assert!((y - 1.25).abs() < 1e-12);
        }
    }

    #[test]
    fn predictions_stay_inside_coefficient_range() {
        let m = model(
            vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.8, 0.1], vec![0.4, 0.1, 0.5]],
            vec![-2.0, 0.5, 3.0],
            &["a", "b", "c"],
        );
        let test = corpus("?\ta b c a\n?\tc c\n?\tb a\n");
        for seed in 0..10 {
            let (preds, _) = predict_corpus(
                &m,
                &test,
                &PredictSchedule::default(),
                seed,
                PredictionSource::NonParallel,
            )
            .unwrap();
            for &y in &preds.y_hat {
                assert!((-2.0..=3.0).contains(&y));
            }
        }
    }

    #[test]
    fn prediction_is_deterministic_given_seed() {
        let m = model(
            vec![vec![0.6, 0.2, 0.2], vec![0.2, 0.6, 0.2]],
            vec![1.0, -1.0],
            &["a", "b", "c"],
        );
        let test = corpus("?\ta b c\n?\tc b\n");
        let run = |seed| {
            predict_corpus(&m, &test, &PredictSchedule::default(), seed, PredictionSource::Simple)
                .unwrap()
                .0
        };
        assert_eq!(run(3), run(3));
    }

    #[test]
    fn empty_test_corpus_is_an_error() {
        let m = model(vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![0.0, 0.0], &["a", "b"]);
        let empty = Corpus {
            vocabulary: m.vocabulary.clone(),
            docs: Vec::new(),
            label_kind: LabelKind::Continuous,
        };
        assert!(matches!(
            predict_corpus(&m, &empty, &PredictSchedule::default(), 0, PredictionSource::Simple),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn binary_model_emits_classes() {
        let mut m = model(
            vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            vec![1.0, 0.0],
            &["a", "b"],
        );
        m.hyper.label_kind = LabelKind::Binary;
        let test = corpus("?\ta a a\n?\tb b b\n");
        let (preds, _) = predict_corpus(
            &m,
            &test,
            &PredictSchedule::default(),
            2,
            PredictionSource::NonParallel,
        )
        .unwrap();
        let classes = preds.class_hat.as_ref().unwrap();
        assert_eq!(classes.len(), 2);
        for (y, c) in preds.y_hat.iter().zip(classes) {
            assert_eq!(*c, u8::from(*y >= 0.5));
        }
    }

    #[test]
    fn logit_link_maps_back_through_logistic() {
        let (y, classes) = finalize_predictions(
            vec![-3.0, 0.0, 3.0],
            &LabelKind::Binary,
            BinaryLink::Logit,
        );
        let classes = classes.unwrap();
        assert!(y[0] < 0.5 && classes[0] == 0);
        assert!((y[1] - 0.5).abs() < 1e-12 && classes[1] == 1);
        assert!(y[2] > 0.5 && classes[2] == 1);
        assert!(y.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn test_conditional_is_permutation_equivariant_exactly() {
        // Two topics so every cross-topic reduction is a single commutative
        // addition; the permuted weights must match bitwise.
        let m = model(
            vec![vec![0.7, 0.2, 0.1], vec![0.15, 0.35, 0.5]],
            vec![0.4, -0.9],
            &["a", "b", "c"],
        );
        let docs = vec![vec![0usize, 2, 1, 1]];
        let state = CountState::from_assignments(
            docs.iter().map(Vec::as_slice),
            2,
            3,
            vec![vec![0, 1, 1, 0]],
        );
        let w = test_topic_weights(&state, 0, 1, 2, &m);

        let pi = [1usize, 0];
        let m_p = crate::synth::permute_model(&m, &pi).unwrap();
        let mut state_p = state.clone();
        state_p.permute_topics(&pi);
        let w_p = test_topic_weights(&state_p, 0, 1, 2, &m_p);
        for t in 0..2 {
            assert_eq!(w[t].to_bits(), w_p[pi[t]].to_bits());
        }

        // Exact per-sweep expectation on a one-token document: the response
        // under the permuted model is bit-identical.
        let one = CountState::from_assignments([&[2usize][..]].into_iter(), 2, 3, vec![vec![0]]);
        let mut one_p = one.clone();
        one_p.permute_topics(&pi);
        let wt = test_topic_weights(&one, 0, 0, 2, &m);
        let wt_p = test_topic_weights(&one_p, 0, 0, 2, &m_p);
        let expect = |w: &[f64], eta: &[f64]| {
            let total = w[0] + w[1];
            (w[0] / total) * eta[0] + (w[1] / total) * eta[1]
        };
        assert_eq!(
            expect(&wt, &m.eta).to_bits(),
            expect(&wt_p, &m_p.eta).to_bits()
        );
    }

    #[test]
    fn prediction_tsv_has_expected_shape() {
        let preds = PredictionSet {
            doc_ids: vec!["d0".into(), "d1".into()],
            y_hat: vec![0.25, -1.5],
            class_hat: None,
            source: PredictionSource::Simple,
        };
        assert_eq!(preds.to_tsv(), "d0\t0.25\nd1\t-1.5\n");

        let with_classes = PredictionSet {
            class_hat: Some(vec![1, 0]),
            ..preds
        };
        assert_eq!(with_classes.to_tsv(), "d0\t0.25\t1\nd1\t-1.5\t0\n");
    }
}
