//! The embedding families the selection strategies cluster.
//!
//! * surprisal embeddings: sampled per-token NLLs, zero elsewhere, l2-normalized;
//! * gradient embeddings: last-layer cross-entropy gradient at the predicted label;
//! * feature vectors: hashed bag of unigrams and bigrams, or ingested sentence vectors;
//! * hidden embeddings: the classifier's hidden activation.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierModel;
use crate::corpus::{Corpus, TokenSeq};
use crate::error::{Error, Result};
use crate::linalg;
use crate::seed;
use crate::surprisal_lm::{NllTable, NllVector};

pub const DEFAULT_TOKEN_FRACTION: f64 = 0.15;
pub const DEFAULT_FEATURE_DIM: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct SurprisalEmbedding {
    pub id: String,
    /// Unit-norm values, or all zeros.
    pub values: Vec<f64>,
    pub sampled_mask: Vec<bool>,
    /// l2 norm of the raw (unnormalized) sampled vector.
    pub raw_norm: f64,
}

impl SurprisalEmbedding {
    /// The unnormalized sampled surprisals.
    pub fn raw_values(&self, nll: &NllVector) -> Vec<f64> {
        nll.nll
            .iter()
            .zip(&self.sampled_mask)
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect()
    }

    pub fn sampled_count(&self) -> usize {
        self.sampled_mask.iter().filter(|&&m| m).count()
    }
}

/// Number of positions evaluated for a sentence of `real_len` tokens.
pub fn sampled_token_count(real_len: usize, p: f64) -> usize {
    if real_len == 0 {
        return 0;
    }
    ((p * real_len as f64).round() as usize).clamp(1, real_len)
}

fn check_fraction(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "token sampling fraction must lie in (0, 1], got {p}"
        )))
    }
}

/// Sample `max(1, round(p * real_len))` distinct non-padding positions,
/// keep their NLLs, zero the rest, and l2-normalize.
pub fn surprisal_embedding(nll: &NllVector, p: f64, seed: u64) -> Result<SurprisalEmbedding> {
    check_fraction(p)?;
    let l = nll.max_len();
    let mut mask = vec![false; l];
    let count = sampled_token_count(nll.real_len.min(l), p);
    if count > 0 {
        let mut rng = seed::rng(seed);
        for pos in index::sample(&mut rng, nll.real_len.min(l), count) {
            mask[pos] = true;
        }
    } else {
        log::debug!("sentence `{}` has no tokens; zero surprisal embedding", nll.id);
    }
    let mut values: Vec<f64> = nll
        .nll
        .iter()
        .zip(&mask)
        .map(|(&v, &m)| if m { v } else { 0.0 })
        .collect();
    let raw_norm = linalg::normalize(&mut values);
    Ok(SurprisalEmbedding {
        id: nll.id.clone(),
        values,
        sampled_mask: mask,
        raw_norm,
    })
}

/// Surprisal embeddings for every corpus sentence, with per-sentence seeds
/// derived from `(run_seed, id)`.
#[derive(Debug, Clone)]
pub struct SurprisalTable {
    embeddings: Vec<SurprisalEmbedding>,
}

impl SurprisalTable {
    pub fn build(nll: &NllTable, p: f64, run_seed: u64) -> Result<Self> {
        Self::build_subset(nll, 0..nll.len(), p, run_seed)
    }

    /// Only the listed corpus indices get computed; the rest stay empty.
    pub fn build_subset(
        nll: &NllTable,
        indices: impl IntoIterator<Item = usize>,
        p: f64,
        run_seed: u64,
    ) -> Result<Self> {
        check_fraction(p)?;
        let mut embeddings: Vec<SurprisalEmbedding> = vec![
            SurprisalEmbedding {
                id: String::new(),
                values: Vec::new(),
                sampled_mask: Vec::new(),
                raw_norm: 0.0,
            };
            nll.len()
        ];
        let idx: Vec<usize> = indices.into_iter().collect();
        let computed: Vec<(usize, SurprisalEmbedding)> = idx
            .par_iter()
            .map(|&i| {
                let v = nll.get(i);
                let e = surprisal_embedding(v, p, seed::derive_seed_str(run_seed, &v.id))?;
                Ok((i, e))
            })
            .collect::<Result<_>>()?;
        for (i, e) in computed {
            embeddings[i] = e;
        }
        Ok(SurprisalTable { embeddings })
    }

    pub fn get(&self, idx: usize) -> &SurprisalEmbedding {
        &self.embeddings[idx]
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEmbedding {
    /// Predicted label, argmax of the confidences (lowest index on ties).
    pub predicted: usize,
    /// `C` blocks of the hidden dimension.
    pub values: Vec<f64>,
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn check_simplex(p: &[f64], tol: f64) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidArgument("empty probability vector".into()));
    }
    if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::InvalidArgument(
            "probabilities must be finite and nonnegative".into(),
        ));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > tol {
        return Err(Error::InvalidArgument(format!(
            "probabilities sum to {s}, not 1"
        )));
    }
    Ok(())
}

/// Block `i` is `(confidence_i - [predicted == i]) * hidden`.
pub fn gradient_embedding(confidences: &[f64], hidden: &[f64]) -> Result<GradientEmbedding> {
    check_simplex(confidences, 1e-6)?;
    let predicted = argmax(confidences);
    let d = hidden.len();
    let mut values = Vec::with_capacity(confidences.len() * d);
    for (i, &c) in confidences.iter().enumerate() {
        let scale = c - if i == predicted { 1.0 } else { 0.0 };
        values.extend(hidden.iter().map(|&h| scale * h));
    }
    Ok(GradientEmbedding { predicted, values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub id: String,
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl FeatureVector {
    /// Copy scaled to unit norm (zero vectors stay zero).
    pub fn unit(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        if !self.normalized {
            linalg::normalize(&mut v);
        }
        v
    }
}

/// Hashed bag of unigrams and bigrams with `ln(1 + count)` weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Featurizer {
    pub dim: usize,
}

impl Default for Featurizer {
    fn default() -> Self {
        Featurizer {
            dim: DEFAULT_FEATURE_DIM,
        }
    }
}

const UNIGRAM_TAG: u64 = 1;
const BIGRAM_TAG: u64 = 2;

impl Featurizer {
    pub fn unigram_bucket(&self, tok: u32) -> usize {
        (seed::hash_words(&[UNIGRAM_TAG, tok as u64]) % self.dim as u64) as usize
    }

    pub fn bigram_bucket(&self, a: u32, b: u32) -> usize {
        (seed::hash_words(&[BIGRAM_TAG, a as u64, b as u64]) % self.dim as u64) as usize
    }

    pub fn embed(&self, seq: &TokenSeq) -> FeatureVector {
        let mut counts = vec![0u32; self.dim];
        let toks = seq.real_tokens();
        for &t in toks {
            counts[self.unigram_bucket(t)] += 1;
        }
        for w in toks.windows(2) {
            counts[self.bigram_bucket(w[0], w[1])] += 1;
        }
        let mut values: Vec<f64> = counts.iter().map(|&c| (c as f64).ln_1p()).collect();
        let norm = linalg::normalize(&mut values);
        FeatureVector {
            id: seq.id.clone(),
            values,
            normalized: norm > 0.0,
        }
    }
}

pub fn feature_embedding(seq: &TokenSeq, featurizer: &Featurizer) -> FeatureVector {
    featurizer.embed(seq)
}

/// Feature vectors aligned with corpus indices.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    vectors: Vec<FeatureVector>,
    dim: usize,
}

impl FeatureTable {
    pub fn hashed(corpus: &Corpus, featurizer: &Featurizer) -> Result<Self> {
        if featurizer.dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be >= 1".into()));
        }
        let vectors = corpus.seqs.par_iter().map(|s| featurizer.embed(s)).collect();
        Ok(FeatureTable {
            vectors,
            dim: featurizer.dim,
        })
    }

    /// Ingested vectors, passed through unchanged.
    pub fn from_map(mut map: HashMap<String, Vec<f64>>, corpus: &Corpus) -> Result<Self> {
        let mut dim = None;
        let vectors = corpus
            .seqs
            .iter()
            .map(|s| {
                let values = map.remove(&s.id).ok_or_else(|| Error::InvalidRecord {
                    id: s.id.clone(),
                    message: "no sentence embedding for this sentence".into(),
                })?;
                let d = *dim.get_or_insert(values.len());
                if values.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        actual: values.len(),
                    });
                }
                let n = linalg::l2_norm(&values);
                Ok(FeatureVector {
                    id: s.id.clone(),
                    normalized: (n - 1.0).abs() <= 1e-6,
                    values,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureTable {
            vectors,
            dim: dim.unwrap_or(0),
        })
    }

    pub fn get(&self, idx: usize) -> &FeatureVector {
        &self.vectors[idx]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// The classifier's hidden activation for `features`, unnormalized.
pub fn hidden_embedding(model: &ClassifierModel, features: &FeatureVector) -> Result<Vec<f64>> {
    model.hidden(&features.values)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingRecord {
    id: String,
    vec: Vec<f64>,
}

/// Read a sentence-embedding file: `{"id": ..., "vec": [...]}` per line,
/// uniform dimension.
pub fn load_sentence_embeddings(path: &Path) -> Result<HashMap<String, Vec<f64>>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    let mut dim = None;
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let rec: EmbeddingRecord =
            serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let d = *dim.get_or_insert(rec.vec.len());
        if rec.vec.len() != d {
            return Err(parse_err(format!(
                "vector has dimension {}, file uses {d}",
                rec.vec.len()
            )));
        }
        if rec.vec.iter().any(|v| !v.is_finite()) {
            return Err(parse_err("non-finite vector entry".into()));
        }
        if out.insert(rec.id.clone(), rec.vec).is_some() {
            return Err(Error::DuplicateId(rec.id));
        }
    }
    Ok(out)
}

pub fn write_sentence_embeddings<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = (&'a str, &'a [f64])>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (id, vec) in rows {
        serde_json::to_writer(
            &mut out,
            &EmbeddingRecord {
                id: id.to_string(),
                vec: vec.to_vec(),
            },
        )?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
