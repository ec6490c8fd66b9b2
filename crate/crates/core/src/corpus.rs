//! Labeled document collections: loading, tokenization, vocabulary pruning,
//! train/test splitting and sharding.
//!
//! The on-disk corpus format is line-oriented TSV: one document per line,
//! `LABEL \t TOKENS` with tokens space-separated and `LABEL` either a decimal
//! number or `?` for unlabeled documents.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Ordered set of unique words; word ids are positions in insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Vocabulary {
            words: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Build from a word list, validating uniqueness and non-emptiness.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let mut vocab = Vocabulary::new();
        for w in words {
            if w.is_empty() {
                return Err(Error::InvalidArgument("empty word in vocabulary".into()));
            }
            if vocab.index.contains_key(&w) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate word {w:?} in vocabulary"
                )));
            }
            vocab.index.insert(w.clone(), vocab.words.len());
            vocab.words.push(w);
        }
        Ok(vocab)
    }

    /// Number of distinct words (the `W` of the model).
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Id of `word`, inserting it at the end if unseen.
    fn intern(&mut self, word: &str) -> usize {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = self.words.len();
        self.index.insert(word.to_owned(), id);
        self.words.push(word.to_owned());
        id
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::new()
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;
    fn try_from(words: Vec<String>) -> Result<Self> {
        Vocabulary::from_words(words)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Vec<String> {
        v.words
    }
}

/// Whether document labels are real-valued or 0/1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Continuous,
    Binary,
}

/// One document: a token-id sequence plus an optional response label.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<usize>,
    pub label: Option<f64>,
}

/// A labeled token-sequence collection sharing one vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocabulary: Vocabulary,
    pub docs: Vec<Document>,
    pub label_kind: LabelKind,
}

/// Input format accepted by [`load_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// `label<TAB>tok tok tok...` with tokens taken verbatim.
    TsvTokens,
    /// `label<TAB>free text`, run through [`tokenize`].
    RawText,
}

/// Lowercase, split on non-alphanumeric characters, drop tokens shorter
/// than two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_owned)
        .collect()
}

fn parse_label(field: &str, path: &str, line: usize) -> Result<Option<f64>> {
    if field == "?" {
        return Ok(None);
    }
    let value: f64 = field.parse().map_err(|_| Error::MalformedLine {
        path: path.to_owned(),
        line,
        msg: format!("label {field:?} is not a decimal number or '?'"),
    })?;
    if !value.is_finite() {
        return Err(Error::MalformedLine {
            path: path.to_owned(),
            line,
            msg: format!("label {field:?} is not finite"),
        });
    }
    Ok(Some(value))
}

fn infer_label_kind(docs: &[Document]) -> LabelKind {
    let binary = docs
        .iter()
        .filter_map(|d| d.label)
        .all(|y| y == 0.0 || y == 1.0);
    if binary {
        LabelKind::Binary
    } else {
        LabelKind::Continuous
    }
}

/// Load a corpus from `path`.
///
/// The vocabulary is built in first-occurrence order; `label_kind` is
/// inferred as binary iff every present label is 0 or 1. Document ids are
/// assigned positionally (`d0`, `d1`, ...).
pub fn load_corpus<P: AsRef<Path>>(path: P, format: CorpusFormat) -> Result<Corpus> {
    let path_str = path.as_ref().display().to_string();
    let text = fs::read_to_string(&path).map_err(|source| Error::Io {
        path: path_str.clone(),
        source,
    })?;
    parse_corpus(&text, format, &path_str)
}

/// Parse corpus text; `path` is used only in error messages.
pub fn parse_corpus(text: &str, format: CorpusFormat, path: &str) -> Result<Corpus> {
    let mut vocabulary = Vocabulary::new();
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let (label_field, body) = line.split_once('\t').ok_or_else(|| Error::MalformedLine {
            path: path.to_owned(),
            line: line_no,
            msg: "expected LABEL<TAB>TOKENS".into(),
        })?;
        let label = parse_label(label_field, path, line_no)?;
        let words: Vec<String> = match format {
            CorpusFormat::TsvTokens => body.split_whitespace().map(str::to_owned).collect(),
            CorpusFormat::RawText => tokenize(body),
        };
        if words.is_empty() {
            return Err(Error::EmptyDocument { index: i });
        }
        let tokens = words.iter().map(|w| vocabulary.intern(w)).collect();
        docs.push(Document {
            doc_id: format!("d{i}"),
            tokens,
            label,
        });
    }
    let label_kind = infer_label_kind(&docs);
    Ok(Corpus {
        vocabulary,
        docs,
        label_kind,
    })
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Labels of all documents; errors on the first unlabeled one.
    pub fn labels(&self) -> Result<Vec<f64>> {
        self.docs
            .iter()
            .map(|d| {
                d.label.ok_or_else(|| Error::MissingLabel {
                    doc_id: d.doc_id.clone(),
                })
            })
            .collect()
    }

    /// Check the structural invariants: token ids in range, non-empty
    /// documents, unique doc ids, binary labels actually 0/1.
    pub fn validate(&self) -> Result<()> {
        let w = self.vocabulary.len();
        let mut seen = HashSet::new();
        for doc in &self.docs {
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate doc_id {:?}",
                    doc.doc_id
                )));
            }
            if doc.tokens.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "document {:?} has no tokens",
                    doc.doc_id
                )));
            }
            if let Some(&bad) = doc.tokens.iter().find(|&&t| t >= w) {
                return Err(Error::InvalidArgument(format!(
                    "document {:?} token id {bad} out of range (W={w})",
                    doc.doc_id
                )));
            }
            if self.label_kind == LabelKind::Binary {
                if let Some(y) = doc.label {
                    if y != 0.0 && y != 1.0 {
                        return Err(Error::NonBinaryLabel(y));
                    }
                }
            }
        }
        Ok(())
    }

    /// Serialize to the TSV wire format.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for doc in &self.docs {
            match doc.label {
                Some(y) => {
                    let _ = write!(out, "{y}");
                }
                None => out.push('?'),
            }
            out.push('\t');
            for (i, &t) in doc.tokens.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(self.vocabulary.word(t));
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

/// Result of [`prune_vocabulary`]: the pruned corpus plus what was dropped.
#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub corpus: Corpus,
    pub removed_words: usize,
    pub dropped_docs: Vec<String>,
}

/// Remove words appearing in fewer than `ceil(min_doc_fraction * D)` distinct
/// documents, remapping ids densely and dropping documents left empty.
pub fn prune_vocabulary(corpus: &Corpus, min_doc_fraction: f64) -> Result<PruneOutcome> {
    if !(0.0..=1.0).contains(&min_doc_fraction) {
        return Err(Error::InvalidArgument(format!(
            "min_doc_fraction must be in [0,1], got {min_doc_fraction}"
        )));
    }
    let w = corpus.vocabulary.len();
    let threshold = (min_doc_fraction * corpus.len() as f64).ceil() as usize;

    let mut doc_freq = vec![0usize; w];
    for doc in &corpus.docs {
        let distinct: HashSet<usize> = doc.tokens.iter().copied().collect();
        for t in distinct {
            doc_freq[t] += 1;
        }
    }

    // Dense remap preserving the original id order.
    let mut remap = vec![usize::MAX; w];
    let mut kept_words = Vec::new();
    for id in 0..w {
        if doc_freq[id] >= threshold {
            remap[id] = kept_words.len();
            kept_words.push(corpus.vocabulary.word(id).to_owned());
        }
    }
    if kept_words.is_empty() && w > 0 {
        return Err(Error::EmptyVocabulary {
            fraction: min_doc_fraction,
        });
    }
    let removed_words = w - kept_words.len();

    let mut docs = Vec::with_capacity(corpus.len());
    let mut dropped_docs = Vec::new();
    for doc in &corpus.docs {
        let tokens: Vec<usize> = doc
            .tokens
            .iter()
            .filter_map(|&t| (remap[t] != usize::MAX).then(|| remap[t]))
            .collect();
        if tokens.is_empty() {
            dropped_docs.push(doc.doc_id.clone());
        } else {
            docs.push(Document {
                doc_id: doc.doc_id.clone(),
                tokens,
                label: doc.label,
            });
        }
    }

    Ok(PruneOutcome {
        corpus: Corpus {
            vocabulary: Vocabulary::from_words(kept_words)?,
            docs,
            label_kind: corpus.label_kind,
        },
        removed_words,
        dropped_docs,
    })
}

fn subset(corpus: &Corpus, indices: &[usize]) -> Corpus {
    Corpus {
        vocabulary: corpus.vocabulary.clone(),
        docs: indices.iter().map(|&i| corpus.docs[i].clone()).collect(),
        label_kind: corpus.label_kind,
    }
}

/// Deterministic random split into `n_train` training documents and the
/// rest. Both halves share the vocabulary; within each half documents keep
/// their original order.
pub fn train_test_split(corpus: &Corpus, n_train: usize, seed: u64) -> Result<(Corpus, Corpus)> {
    let d = corpus.len();
    if n_train < 1 || n_train >= d {
        return Err(Error::InvalidArgument(format!(
            "n_train must satisfy 1 <= n_train < D={d}, got {n_train}"
        )));
    }
    let mut indices: Vec<usize> = (0..d).collect();
    indices.shuffle(&mut rng_from_seed(seed));
    let (mut train_idx, mut test_idx): (Vec<usize>, Vec<usize>) = (
        indices[..n_train].to_vec(),
        indices[n_train..].to_vec(),
    );
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((subset(corpus, &train_idx), subset(corpus, &test_idx)))
}

/// Shard a corpus into `m` disjoint parts by shuffled round-robin. Shard
/// sizes differ by at most one; all shards share the vocabulary; within a
/// shard documents keep their original order.
pub fn partition(corpus: &Corpus, m: usize, seed: u64) -> Result<Vec<Corpus>> {
    let d = corpus.len();
    if m < 1 {
        return Err(Error::InvalidArgument("M must be at least 1".into()));
    }
    if m > d {
        return Err(Error::InvalidArgument(format!(
            "M={m} exceeds document count D={d}"
        )));
    }
    let mut indices: Vec<usize> = (0..d).collect();
    indices.shuffle(&mut rng_from_seed(seed));
    let mut shards: Vec<Vec<usize>> = vec![Vec::with_capacity(d / m + 1); m];
    for (i, idx) in indices.into_iter().enumerate() {
        shards[i % m].push(idx);
    }
    Ok(shards
        .into_iter()
        .map(|mut idx| {
            idx.sort_unstable();
            subset(corpus, &idx)
        })
        .collect())
}
