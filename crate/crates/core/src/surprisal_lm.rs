//! Per-token negative log-likelihoods.
//!
//! The built-in provider is a bidirectional additive-smoothed n-gram model
//! trained on the unlabeled pool; an external file in the NLL interchange
//! format can be used instead (e.g. scores from a pretrained masked LM).

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TokenSeq, BOUNDARY_ID};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmConfig {
    /// n-gram order in each direction.
    pub order: usize,
    /// Additive smoothing constant.
    pub alpha: f64,
    /// Weight of the forward model in the blend.
    pub lambda: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            order: 3,
            alpha: 0.1,
            lambda: 0.5,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidArgument("lm order must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lm alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidArgument(format!(
                "lm lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct ContextCounts {
    total: u64,
    next: HashMap<u32, u64>,
}

#[derive(Debug, Clone, Default)]
struct CountTable {
    contexts: HashMap<Vec<u32>, ContextCounts>,
}

impl CountTable {
    fn add(&mut self, context: Vec<u32>, token: u32) {
        let entry = self.contexts.entry(context).or_default();
        entry.total += 1;
        *entry.next.entry(token).or_default() += 1;
    }

    fn prob(&self, context: &[u32], token: u32, alpha: f64, vocab_size: usize) -> f64 {
        let (count, total) = self
            .contexts
            .get(context)
            .map(|c| (c.next.get(&token).copied().unwrap_or(0), c.total))
            .unwrap_or((0, 0));
        (count as f64 + alpha) / (total as f64 + alpha * vocab_size as f64)
    }
}

/// Interpolated forward/backward n-gram model with additive smoothing.
#[derive(Debug, Clone)]
pub struct NgramLm {
    config: LmConfig,
    vocab_size: usize,
    forward: CountTable,
    backward: CountTable,
}

fn left_context(tokens: &[u32], pos: usize, width: usize) -> Vec<u32> {
    (0..width)
        .map(|j| {
            let back = width - j;
            if pos >= back {
                tokens[pos - back]
            } else {
                BOUNDARY_ID
            }
        })
        .collect()
}

fn right_context(tokens: &[u32], pos: usize, width: usize) -> Vec<u32> {
    (1..=width)
        .map(|j| tokens.get(pos + j).copied().unwrap_or(BOUNDARY_ID))
        .collect()
}

impl NgramLm {
    /// Train on the non-padding tokens of `seqs`.
    pub fn train<'a>(
        seqs: impl IntoIterator<Item = &'a TokenSeq>,
        vocab_size: usize,
        config: LmConfig,
    ) -> Result<Self> {
        config.validate()?;
        let width = config.order - 1;
        let mut forward = CountTable::default();
        let mut backward = CountTable::default();
        let mut n_tokens = 0usize;
        for seq in seqs {
            let toks = seq.real_tokens();
            for (i, &tok) in toks.iter().enumerate() {
                if tok as usize >= vocab_size {
                    return Err(Error::InvalidRecord {
                        id: seq.id.clone(),
                        message: format!("token id {tok} outside vocabulary of {vocab_size}"),
                    });
                }
                forward.add(left_context(toks, i, width), tok);
                backward.add(right_context(toks, i, width), tok);
                n_tokens += 1;
            }
        }
        if n_tokens == 0 {
            return Err(Error::EmptyCorpus);
        }
        Ok(NgramLm {
            config,
            vocab_size,
            forward,
            backward,
        })
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// p(token | preceding order-1 tokens).
    pub fn forward_prob(&self, left: &[u32], token: u32) -> f64 {
        self.forward
            .prob(left, token, self.config.alpha, self.vocab_size)
    }

    /// p(token | following order-1 tokens).
    pub fn backward_prob(&self, right: &[u32], token: u32) -> f64 {
        self.backward
            .prob(right, token, self.config.alpha, self.vocab_size)
    }

    /// Blended probability of the token at `pos` given its sentence.
    pub fn blended_prob(&self, tokens: &[u32], pos: usize) -> f64 {
        let width = self.config.order - 1;
        let tok = tokens[pos];
        let lambda = self.config.lambda;
        let fwd = if lambda > 0.0 {
            self.forward_prob(&left_context(tokens, pos, width), tok)
        } else {
            0.0
        };
        let bwd = if lambda < 1.0 {
            self.backward_prob(&right_context(tokens, pos, width), tok)
        } else {
            0.0
        };
        lambda * fwd + (1.0 - lambda) * bwd
    }

    pub fn token_nll(&self, seq: &TokenSeq) -> NllVector {
        let toks = seq.real_tokens();
        let mut nll = vec![0.0; seq.max_len()];
        for (i, v) in nll.iter_mut().take(toks.len()).enumerate() {
            let x = -self.blended_prob(toks, i).ln();
            // -ln(1) is -0.0
            *v = if x > 0.0 { x } else { 0.0 };
        }
        NllVector {
            id: seq.id.clone(),
            nll,
            real_len: seq.real_len,
        }
    }
}

/// Per-position surprisal of one sentence; zeros on padding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NllVector {
    pub id: String,
    pub nll: Vec<f64>,
    pub real_len: usize,
}

impl NllVector {
    pub fn max_len(&self) -> usize {
        self.nll.len()
    }

    pub fn validate(&self, expected_len: usize) -> Result<()> {
        let bad = |message: String| Error::InvalidRecord {
            id: self.id.clone(),
            message,
        };
        if self.nll.len() != expected_len {
            return Err(bad(format!(
                "nll has length {}, expected {expected_len}",
                self.nll.len()
            )));
        }
        if self.real_len > expected_len {
            return Err(bad(format!(
                "real_len {} exceeds length {expected_len}",
                self.real_len
            )));
        }
        for (i, &v) in self.nll.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(bad(format!("entry {i} is {v}; must be finite and >= 0")));
            }
            if i >= self.real_len && v != 0.0 {
                return Err(bad(format!("padding entry {i} is {v}; must be 0")));
            }
        }
        Ok(())
    }
}

/// NLL vectors aligned with corpus indices.
#[derive(Debug, Clone)]
pub struct NllTable {
    vectors: Vec<NllVector>,
}

impl NllTable {
    pub fn from_lm(lm: &NgramLm, corpus: &Corpus) -> Self {
        let vectors = corpus.seqs.par_iter().map(|s| lm.token_nll(s)).collect();
        NllTable { vectors }
    }

    /// Align an externally loaded map with the corpus. Every corpus
    /// sentence must be covered.
    pub fn from_map(mut map: HashMap<String, NllVector>, corpus: &Corpus) -> Result<Self> {
        let vectors = corpus
            .seqs
            .iter()
            .map(|s| {
                map.remove(&s.id).ok_or_else(|| Error::InvalidRecord {
                    id: s.id.clone(),
                    message: "no NLL record for this sentence".into(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NllTable { vectors })
    }

    pub fn get(&self, idx: usize) -> &NllVector {
        &self.vectors[idx]
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[NllVector] {
        &self.vectors
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NllRecord {
    id: String,
    l: usize,
    real_len: usize,
    nll: Vec<f64>,
}

pub fn write_nll_jsonl<'a>(
    path: &Path,
    vectors: impl IntoIterator<Item = &'a NllVector>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for v in vectors {
        let rec = NllRecord {
            id: v.id.clone(),
            l: v.nll.len(),
            real_len: v.real_len,
            nll: v.nll.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Load and validate an NLL interchange file against `corpus`.
pub fn load_external_nll(path: &Path, corpus: &Corpus) -> Result<HashMap<String, NllVector>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let l = corpus.max_len();
    let mut out = HashMap::new();
    let mut seen = HashSet::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: NllRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let idx = corpus
            .index_of(&rec.id)
            .ok_or_else(|| Error::UnknownId(rec.id.clone()))?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        if rec.l != l {
            return Err(Error::InvalidRecord {
                id: rec.id,
                message: format!("declared l = {}, corpus uses {l}", rec.l),
            });
        }
        let v = NllVector {
            id: rec.id,
            nll: rec.nll,
            real_len: rec.real_len,
        };
        v.validate(l)?;
        let expected = corpus.seqs[idx].real_len;
        if v.real_len != expected {
            return Err(Error::InvalidRecord {
                id: v.id,
                message: format!(
                    "real_len {} does not match the tokenizer's {expected}",
                    v.real_len
                ),
            });
        }
        out.insert(v.id.clone(), v);
    }
    Ok(out)
}
