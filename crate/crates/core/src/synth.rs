//! Corpus generation from the exact supervised-LDA generative process with
//! known ground truth, plus the topic-permutation helper used by the
//! label-switching stress tests.

use rand::Rng;
use rand_distr::{Dirichlet, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, LabelKind, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{FittedModel, Hyperparams};
use crate::rng::rng_from_seed;
use crate::sampler::is_permutation;

/// The latent variables a generated corpus was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// True topic-word distributions, row-stochastic.
    pub phi_true: Vec<Vec<f64>>,
    /// True regression coefficients.
    pub eta_true: Vec<f64>,
    /// True per-document topic distributions, row-stochastic.
    pub theta_true: Vec<Vec<f64>>,
    /// True topic assignments, aligned with document tokens.
    pub z_true: Vec<Vec<usize>>,
    pub hyper: Hyperparams,
}

/// Desk-scale default instance: small enough for CI, separable enough for
/// recovery checks.
pub fn default_instance() -> (Hyperparams, SynthDims) {
    let mut hyper = Hyperparams::new(3);
    hyper.alpha = 0.5;
    hyper.beta = 0.1;
    hyper.mu = 0.0;
    hyper.sigma = 1.0;
    hyper.rho = 0.25;
    (
        hyper,
        SynthDims {
            num_docs: 500,
            tokens_per_doc: 60,
            vocab_size: 30,
        },
    )
}

/// Corpus dimensions for [`generate_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthDims {
    pub num_docs: usize,
    pub tokens_per_doc: usize,
    pub vocab_size: usize,
}

fn sample_simplex<R: Rng>(concentration: f64, dim: usize, rng: &mut R) -> Vec<f64> {
    if dim == 1 {
        return vec![1.0];
    }
    let dir = Dirichlet::new_with_size(concentration, dim).expect("valid Dirichlet parameters");
    dir.sample(rng)
}

/// Draw a corpus from the generative process: per-topic word distributions
/// and coefficients, then per-document topic mixtures, assignments, words
/// and a Gaussian response on the empirical topic proportions. Binary mode
/// thresholds the responses at their median, yielding balanced classes.
pub fn generate_corpus(
    hyper: &Hyperparams,
    dims: &SynthDims,
    seed: u64,
) -> Result<(Corpus, GroundTruth)> {
    hyper.validate_values()?;
    if hyper.num_topics == 0 {
        return Err(Error::InvalidArgument("num_topics must be positive".into()));
    }
    if dims.num_docs == 0 || dims.tokens_per_doc == 0 || dims.vocab_size == 0 {
        return Err(Error::InvalidArgument(format!(
            "generator dimensions must be positive, got {dims:?}"
        )));
    }
    let t_count = hyper.num_topics;
    let w_count = dims.vocab_size;
    let mut rng = rng_from_seed(seed);

    let phi_true: Vec<Vec<f64>> = (0..t_count)
        .map(|_| sample_simplex(hyper.beta, w_count, &mut rng))
        .collect();
    let coeff_prior = Normal::new(hyper.mu, hyper.sigma.sqrt()).expect("valid normal");
    let eta_true: Vec<f64> = (0..t_count).map(|_| coeff_prior.sample(&mut rng)).collect();

    let noise = Normal::new(0.0, hyper.rho.sqrt()).expect("valid normal");
    let mut theta_true = Vec::with_capacity(dims.num_docs);
    let mut z_true = Vec::with_capacity(dims.num_docs);
    let mut docs = Vec::with_capacity(dims.num_docs);
    for d in 0..dims.num_docs {
        let theta = sample_simplex(hyper.alpha, t_count, &mut rng);
        let mut z = Vec::with_capacity(dims.tokens_per_doc);
        let mut tokens = Vec::with_capacity(dims.tokens_per_doc);
        let mut topic_counts = vec![0usize; t_count];
        for _ in 0..dims.tokens_per_doc {
            let t = sample_categorical_probs(&theta, &mut rng);
            topic_counts[t] += 1;
            z.push(t);
            tokens.push(sample_categorical_probs(&phi_true[t], &mut rng));
        }
        let zbar_dot_eta: f64 = topic_counts
            .iter()
            .zip(&eta_true)
            .map(|(&c, e)| c as f64 / dims.tokens_per_doc as f64 * e)
            .sum();
        let y = zbar_dot_eta + noise.sample(&mut rng);
        theta_true.push(theta);
        z_true.push(z);
        docs.push(Document {
            doc_id: format!("d{d}"),
            tokens,
            label: Some(y),
        });
    }

    if hyper.label_kind == LabelKind::Binary {
        let mut sorted: Vec<f64> = docs.iter().map(|d| d.label.unwrap()).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[dims.num_docs / 2 - usize::from(dims.num_docs % 2 == 0)];
        for doc in &mut docs {
            doc.label = Some(f64::from(doc.label.unwrap() > median));
        }
    }

    let digits = (w_count.max(2) - 1).to_string().len();
    let words: Vec<String> = (0..w_count).map(|w| format!("w{w:0digits$}")).collect();
    let corpus = Corpus {
        vocabulary: Vocabulary::from_words(words)?,
        docs,
        label_kind: hyper.label_kind,
    };
    let truth = GroundTruth {
        phi_true,
        eta_true,
        theta_true,
        z_true,
        hyper: hyper.clone(),
    };
    Ok((corpus, truth))
}

fn sample_categorical_probs<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let mut u = rng.gen::<f64>();
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        last = i;
        u -= p;
        if u <= 0.0 {
            return i;
        }
    }
    last
}

/// Relabel every topic `t` of a fitted model as `pi[t]`: row `t` of the
/// topic-word matrix and coefficient `t` move to index `pi[t]`.
pub fn permute_model(model: &FittedModel, pi: &[usize]) -> Result<FittedModel> {
    let t_count = model.num_topics();
    if !is_permutation(pi, t_count) {
        return Err(Error::InvalidArgument(format!(
            "{pi:?} is not a permutation of 0..{t_count}"
        )));
    }
    let mut phi = vec![Vec::new(); t_count];
    let mut eta = vec![0.0; t_count];
    for t in 0..t_count {
        phi[pi[t]] = model.phi[t].clone();
        eta[pi[t]] = model.eta[t];
    }
    Ok(FittedModel {
        phi,
        eta,
        hyper: model.hyper.clone(),
        vocabulary: model.vocabulary.clone(),
    })
}

/// Draw a uniformly random permutation of `0..n`.
pub fn random_permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut pi: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        pi.swap(i, j);
    }
    pi
}
