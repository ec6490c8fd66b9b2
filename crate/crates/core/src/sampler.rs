//! Single-machine supervised-LDA training: collapsed Gibbs sweeps over topic
//! assignments interleaved with a closed-form update of the regression
//! coefficients (stochastic EM), plus the smoothed topic-word estimator.
//!
//! The per-token conditional for training document `d`, token `n` carrying
//! word `w` is
//!
//! ```text
//! p(z = t | ...) ∝ N(y_d; mu_t, rho)
//!                  * (N_dt + alpha) / (N_d. + T*alpha)
//!                  * (N_tw + beta)  / (N_t. + W*beta)
//! ```
//!
//! with all counts excluding the token being resampled, and
//! `mu_t = (sum_t' eta_t' * N_dt' + eta_t) / N_d` where `N_d` is the full
//! document length. The Gaussian factor is evaluated in log space and
//! exponentiated after subtracting the per-token maximum, so extreme
//! response residuals cannot overflow.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;

use crate::corpus::{Corpus, LabelKind};
use crate::error::{Error, Result};
use crate::model::{BinaryLink, FittedModel, Hyperparams, TrainSchedule};
use crate::rng::rng_from_seed;

/// Topic assignments plus the count aggregates the Gibbs conditional reads.
#[derive(Debug, Clone, PartialEq)]
pub struct CountState {
    num_topics: usize,
    vocab_size: usize,
    /// Per-document topic assignment, aligned with the document's tokens.
    pub z: Vec<Vec<usize>>,
    doc_topic: Vec<usize>,   // D x T, flattened row-major
    topic_word: Vec<usize>,  // T x W, flattened row-major
    topic_total: Vec<usize>, // T
    doc_len: Vec<usize>,     // D
}

impl CountState {
    /// Build a state from explicit assignments, deriving all counts.
    pub fn from_assignments<'a, I>(
        docs: I,
        num_topics: usize,
        vocab_size: usize,
        z: Vec<Vec<usize>>,
    ) -> Self
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        let mut state = CountState {
            num_topics,
            vocab_size,
            z,
            doc_topic: Vec::new(),
            topic_word: vec![0; num_topics * vocab_size],
            topic_total: vec![0; num_topics],
            doc_len: Vec::new(),
        };
        for (d, tokens) in docs.into_iter().enumerate() {
            assert_eq!(
                tokens.len(),
                state.z[d].len(),
                "assignments must align with tokens"
            );
            state.doc_len.push(tokens.len());
            state
                .doc_topic
                .extend(std::iter::repeat(0).take(num_topics));
            for (n, &w) in tokens.iter().enumerate() {
                let t = state.z[d][n];
                state.doc_topic[d * num_topics + t] += 1;
                state.topic_word[t * vocab_size + w] += 1;
                state.topic_total[t] += 1;
            }
        }
        state
    }

    /// Uniform-random initial assignments.
    pub fn init_uniform<'a, I, R: Rng>(
        docs: I,
        num_topics: usize,
        vocab_size: usize,
        rng: &mut R,
    ) -> Self
    where
        I: IntoIterator<Item = &'a [usize]> + Clone,
    {
        let z: Vec<Vec<usize>> = docs
            .clone()
            .into_iter()
            .map(|tokens| {
                (0..tokens.len())
                    .map(|_| rng.gen_range(0..num_topics))
                    .collect()
            })
            .collect();
        CountState::from_assignments(docs, num_topics, vocab_size, z)
    }

    pub fn num_docs(&self) -> usize {
        self.doc_len.len()
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    #[inline]
    pub fn doc_topic(&self, d: usize, t: usize) -> usize {
        self.doc_topic[d * self.num_topics + t]
    }

    #[inline]
    pub fn topic_word(&self, t: usize, w: usize) -> usize {
        self.topic_word[t * self.vocab_size + w]
    }

    #[inline]
    pub fn topic_total(&self, t: usize) -> usize {
        self.topic_total[t]
    }

    #[inline]
    pub fn doc_len(&self, d: usize) -> usize {
        self.doc_len[d]
    }

    #[inline]
    pub(crate) fn unassign(&mut self, d: usize, t: usize, w: usize) {
        self.doc_topic[d * self.num_topics + t] -= 1;
        self.topic_word[t * self.vocab_size + w] -= 1;
        self.topic_total[t] -= 1;
    }

    #[inline]
    pub(crate) fn assign(&mut self, d: usize, t: usize, w: usize) {
        self.doc_topic[d * self.num_topics + t] += 1;
        self.topic_word[t * self.vocab_size + w] += 1;
        self.topic_total[t] += 1;
    }

    /// Exact consistency check: rebuilding every count from `z` must
    /// reproduce the stored aggregates.
    pub fn consistent_with<'a, I>(&self, docs: I) -> bool
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        let docs: Vec<&[usize]> = docs.into_iter().collect();
        if docs.len() != self.num_docs() {
            return false;
        }
        let rebuilt = CountState::from_assignments(
            docs.iter().copied(),
            self.num_topics,
            self.vocab_size,
            self.z.clone(),
        );
        rebuilt == *self
    }

    /// Relabel every topic `t` as `pi[t]`, permuting all aggregates to match.
    pub fn permute_topics(&mut self, pi: &[usize]) {
        let t_count = self.num_topics;
        assert!(is_permutation(pi, t_count), "invalid topic permutation");
        for doc in &mut self.z {
            for t in doc.iter_mut() {
                *t = pi[*t];
            }
        }
        let mut doc_topic = vec![0; self.doc_topic.len()];
        for d in 0..self.num_docs() {
            for t in 0..t_count {
                doc_topic[d * t_count + pi[t]] = self.doc_topic[d * t_count + t];
            }
        }
        self.doc_topic = doc_topic;
        let mut topic_word = vec![0; self.topic_word.len()];
        let mut topic_total = vec![0; t_count];
        for t in 0..t_count {
            let src = t * self.vocab_size;
            let dst = pi[t] * self.vocab_size;
            topic_word[dst..dst + self.vocab_size]
                .copy_from_slice(&self.topic_word[src..src + self.vocab_size]);
            topic_total[pi[t]] = self.topic_total[t];
        }
        self.topic_word = topic_word;
        self.topic_total = topic_total;
    }
}

pub(crate) fn is_permutation(pi: &[usize], n: usize) -> bool {
    if pi.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &p in pi {
        if p >= n || seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

/// Token slices of a corpus in document order, as the state constructors
/// expect them.
pub fn corpus_tokens(corpus: &Corpus) -> impl Iterator<Item = &[usize]> + Clone {
    corpus.docs.iter().map(|d| d.tokens.as_slice())
}

/// Unnormalized per-topic weights of the training conditional, plus the
/// response mean each candidate topic would imply.
#[derive(Debug, Clone)]
pub struct TopicConditional {
    pub weights: Vec<f64>,
    pub response_means: Vec<f64>,
}

impl TopicConditional {
    /// Weights normalized to sum to one.
    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }
}

/// Evaluate the training conditional for token `n` of document `d` carrying
/// word id `word`. Counts in `state` still include the token; the exclusion
/// happens internally.
pub fn conditional_topic_weights(
    state: &CountState,
    d: usize,
    n: usize,
    word: usize,
    eta: &[f64],
    y_d: f64,
    hyper: &Hyperparams,
) -> TopicConditional {
    let t_count = state.num_topics;
    let cur = state.z[d][n];
    let nd_full = state.doc_len(d) as f64;
    let nd_ex = (state.doc_len(d) - 1) as f64;

    let mut base = 0.0;
    for t in 0..t_count {
        let ndt_ex = state.doc_topic(d, t) - usize::from(t == cur);
        base += eta[t] * ndt_ex as f64;
    }

    let doc_denom = nd_ex + t_count as f64 * hyper.alpha;
    let word_smooth = state.vocab_size as f64 * hyper.beta;

    let mut response_means = Vec::with_capacity(t_count);
    let mut log_gauss = Vec::with_capacity(t_count);
    let mut count_ratio = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let excl = usize::from(t == cur);
        let ndt_ex = (state.doc_topic(d, t) - excl) as f64;
        let ntw_ex = (state.topic_word(t, word) - excl) as f64;
        let nt_ex = (state.topic_total(t) - excl) as f64;

        let mu_t = (base + eta[t]) / nd_full;
        response_means.push(mu_t);
        let r = y_d - mu_t;
        log_gauss.push(-r * r / (2.0 * hyper.rho));
        count_ratio.push(
            (ndt_ex + hyper.alpha) / doc_denom * ((ntw_ex + hyper.beta) / (nt_ex + word_smooth)),
        );
    }
    let max_lg = log_gauss.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_gauss
        .iter()
        .zip(&count_ratio)
        .map(|(lg, ratio)| (lg - max_lg).exp() * ratio)
        .collect();
    TopicConditional {
        weights,
        response_means,
    }
}

/// Draw an index proportional to `weights`.
pub(crate) fn sample_categorical<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    assert!(
        total.is_finite() && total > 0.0,
        "conditional weights must be finite and positive, got total {total}"
    );
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        last = i;
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    last
}

/// One training sweep: visit every token in document order, token order;
/// resample its topic from the full conditional and keep counts in step.
///
/// `responses` are the (possibly link-transformed) training labels, one per
/// document, as produced by [`training_responses`].
pub fn gibbs_sweep_train<R: Rng>(
    state: &mut CountState,
    corpus: &Corpus,
    responses: &[f64],
    eta: &[f64],
    hyper: &Hyperparams,
    rng: &mut R,
) {
    for d in 0..corpus.len() {
        let y_d = responses[d];
        for n in 0..corpus.docs[d].tokens.len() {
            let w = corpus.docs[d].tokens[n];
            let cond = conditional_topic_weights(state, d, n, w, eta, y_d, hyper);
            let old = state.z[d][n];
            state.unassign(d, old, w);
            let new = sample_categorical(rng, &cond.weights);
            state.z[d][n] = new;
            state.assign(d, new, w);
        }
    }
    debug_assert!(state.consistent_with(corpus_tokens(corpus)));
}

/// Uniform-random topic initialization over a corpus.
pub fn init_assignments(corpus: &Corpus, hyper: &Hyperparams, seed: u64) -> Result<CountState> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut rng = rng_from_seed(seed);
    Ok(CountState::init_uniform(
        corpus_tokens(corpus),
        hyper.num_topics,
        corpus.vocabulary.len(),
        &mut rng,
    ))
}

/// Per-document empirical topic proportions (`N_dt / N_d`).
pub fn doc_topic_means(state: &CountState) -> Vec<Vec<f64>> {
    (0..state.num_docs())
        .map(|d| {
            let len = state.doc_len(d) as f64;
            (0..state.num_topics)
                .map(|t| state.doc_topic(d, t) as f64 / len)
                .collect()
        })
        .collect()
}

/// Smoothed topic-word estimate `(N_tw + beta) / (N_t. + W*beta)`.
pub fn estimate_phi(state: &CountState, hyper: &Hyperparams) -> Vec<Vec<f64>> {
    let w_count = state.vocab_size;
    (0..state.num_topics)
        .map(|t| {
            let denom = state.topic_total(t) as f64 + w_count as f64 * hyper.beta;
            (0..w_count)
                .map(|w| (state.topic_word(t, w) as f64 + hyper.beta) / denom)
                .collect()
        })
        .collect()
}

fn normal_equations(zbar: &[Vec<f64>], y: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let t = zbar.first().map_or(0, Vec::len);
    let mut ata = DMatrix::zeros(t, t);
    let mut aty = DVector::zeros(t);
    for (row, &yd) in zbar.iter().zip(y) {
        for i in 0..t {
            aty[i] += row[i] * yd;
            for j in 0..t {
                ata[(i, j)] += row[i] * row[j];
            }
        }
    }
    (ata, aty)
}

/// Maximize the penalized response likelihood over the regression
/// coefficients. The objective is strictly concave, so the unique maximizer
/// solves the SPD system `(Z'Z/rho + I/sigma) eta = Z'y/rho + (mu/sigma) 1`.
pub fn optimize_eta(zbar: &[Vec<f64>], y: &[f64], hyper: &Hyperparams) -> Result<Vec<f64>> {
    if zbar.is_empty() || zbar.len() != y.len() {
        return Err(Error::LengthMismatch(format!(
            "zbar has {} rows, y has {} entries",
            zbar.len(),
            y.len()
        )));
    }
    debug_assert!(zbar
        .iter()
        .all(|row| (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9));
    let t = zbar[0].len();
    let (mut a, mut b) = normal_equations(zbar, y);
    a /= hyper.rho;
    b /= hyper.rho;
    for i in 0..t {
        a[(i, i)] += 1.0 / hyper.sigma;
        b[i] += hyper.mu / hyper.sigma;
    }
    let chol = Cholesky::new(a.clone())
        .ok_or_else(|| Error::LinearSolve("ridge system not positive definite".into()))?;
    let eta = chol.solve(&b);
    debug_assert!({
        let residual = (&a * &eta - &b).norm();
        residual <= 1e-8 * (1.0 + b.norm())
    });
    Ok(eta.iter().copied().collect())
}

/// Ordinary least squares on the same design; `None` when the normal
/// equations are singular.
pub(crate) fn ols_eta(zbar: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let (a, b) = normal_equations(zbar, y);
    Cholesky::new(a).map(|chol| chol.solve(&b).iter().copied().collect())
}

const LOGIT_EPS: f64 = 0.01;

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Training responses as the likelihood sees them: labels pass through
/// unchanged except for binary corpora under the logit link, where 0 and 1
/// map to logit(0.01) and logit(0.99).
pub fn training_responses(corpus: &Corpus, hyper: &Hyperparams) -> Result<Vec<f64>> {
    let labels = corpus.labels()?;
    match (hyper.label_kind, hyper.binary_link) {
        (LabelKind::Binary, link) => labels
            .into_iter()
            .map(|y| {
                if y != 0.0 && y != 1.0 {
                    return Err(Error::NonBinaryLabel(y));
                }
                Ok(match link {
                    BinaryLink::Linear => y,
                    BinaryLink::Logit => {
                        if y == 1.0 {
                            logit(1.0 - LOGIT_EPS)
                        } else {
                            logit(LOGIT_EPS)
                        }
                    }
                })
            })
            .collect(),
        (LabelKind::Continuous, _) => Ok(labels),
    }
}

/// A fitted model together with the final state and per-document topic
/// proportions, which the parallel combiners need downstream.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: FittedModel,
    pub zbar: Vec<Vec<f64>>,
    pub state: CountState,
}

/// Train by stochastic EM: alternate Gibbs sweeps over assignments with the
/// closed-form coefficient update, then read the final estimates off the
/// last state.
pub fn fit(
    corpus: &Corpus,
    hyper: &Hyperparams,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<FitResult> {
    hyper.validate()?;
    schedule.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    corpus.validate()?;
    let responses = training_responses(corpus, hyper)?;

    let t_count = hyper.num_topics;
    let mut rng = rng_from_seed(seed);
    let mut state = CountState::init_uniform(
        corpus_tokens(corpus),
        t_count,
        corpus.vocabulary.len(),
        &mut rng,
    );
    let mut eta = vec![hyper.mu; t_count];
    let mut phi_acc: Option<Vec<Vec<f64>>> = None;
    let mut phi_samples = 0usize;

    for sweep in 0..schedule.sweeps {
        gibbs_sweep_train(&mut state, corpus, &responses, &eta, hyper, &mut rng);
        if (sweep + 1) % schedule.eta_update_every == 0 {
            let zbar = doc_topic_means(&state);
            eta = optimize_eta(&zbar, &responses, hyper)?;
        }
        if schedule.average_phi && sweep >= schedule.burn_in {
            let phi = estimate_phi(&state, hyper);
            match &mut phi_acc {
                None => phi_acc = Some(phi),
                Some(acc) => {
                    for (acc_row, row) in acc.iter_mut().zip(&phi) {
                        for (a, p) in acc_row.iter_mut().zip(row) {
                            *a += p;
                        }
                    }
                }
            }
            phi_samples += 1;
        }
    }

    let zbar = doc_topic_means(&state);
    let eta = optimize_eta(&zbar, &responses, hyper)?;
    let phi = match phi_acc {
        Some(mut acc) => {
            let n = phi_samples as f64;
            for row in &mut acc {
                for p in row.iter_mut() {
                    *p /= n;
                }
            }
            acc
        }
        None => estimate_phi(&state, hyper),
    };

    let model = FittedModel {
        phi,
        eta,
        hyper: hyper.clone(),
        vocabulary: corpus.vocabulary.clone(),
    };
    Ok(FitResult { model, zbar, state })
}
