//! Batch acquisition strategies.
//!
//! Every strategy maps the current unlabeled pool (corpus indices) to `k`
//! distinct indices from it. Cold-start strategies (`alps`, `random`,
//! `emb-km`) never receive a classifier.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{predictive_entropy, ClassifierModel};
use crate::clustering::{self, count_distinct, kmeans, nearest_to_centers, Init};
use crate::corpus::Corpus;
use crate::embeddings::{gradient_embedding, FeatureTable, SurprisalTable};
use crate::error::{Error, Result};
use crate::linalg;
use crate::seed;
use crate::surprisal_lm::NllTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    Alps,
    Badge,
    Entropy,
    Random,
    EmbKm,
    FtEmbKm,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Alps,
        Strategy::Badge,
        Strategy::Entropy,
        Strategy::Random,
        Strategy::EmbKm,
        Strategy::FtEmbKm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Alps => "alps",
            Strategy::Badge => "badge",
            Strategy::Entropy => "entropy",
            Strategy::Random => "random",
            Strategy::EmbKm => "emb-km",
            Strategy::FtEmbKm => "ft-emb-km",
        }
    }

    /// Needs no task-trained model.
    pub fn is_cold_start(self) -> bool {
        matches!(self, Strategy::Alps | Strategy::Random | Strategy::EmbKm)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.as_str().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterOptions {
    pub init: Init,
    pub max_iter: usize,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            init: Init::KMeansPlusPlus,
            max_iter: clustering::DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryBatch {
    pub strategy: Strategy,
    pub iteration: usize,
    /// Corpus indices in selection order.
    pub indices: Vec<usize>,
    pub ids: Vec<String>,
    pub selection_time: Duration,
}

fn sorted_pool(unlabeled: &[usize]) -> Vec<usize> {
    let mut pool = unlabeled.to_vec();
    pool.sort_unstable();
    pool.dedup();
    pool
}

/// Returns `Some(whole pool)` when the pool cannot fill a batch of `k`.
fn forced(pool: &[usize], k: usize) -> Option<Vec<usize>> {
    if k >= pool.len() {
        if k > pool.len() {
            log::warn!(
                "requested {k} queries but only {} unlabeled; returning all",
                pool.len()
            );
        }
        Some(pool.to_vec())
    } else {
        None
    }
}

/// k-means over `points`, then the nearest point to each center. When the
/// points have fewer than `k` distinct values the remainder is filled
/// uniformly at random.
fn cluster_and_pick(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    opts: ClusterOptions,
) -> Result<Vec<usize>> {
    let distinct = count_distinct(points);
    let k_eff = k.min(distinct);
    let clustering = kmeans(
        points,
        k_eff,
        opts.init,
        opts.max_iter,
        seed::derive_seed_str(seed, "kmeans"),
    )?;
    let mut picks = nearest_to_centers(points, &clustering.centers)?;
    if picks.len() < k {
        log::warn!("only {distinct} distinct embeddings for k = {k}; filling at random");
        let mut taken = vec![false; points.len()];
        picks.iter().for_each(|&i| taken[i] = true);
        let rest: Vec<usize> = (0..points.len()).filter(|&i| !taken[i]).collect();
        let mut rng = seed::rng(seed::derive_seed_str(seed, "fill"));
        picks.extend(
            index::sample(&mut rng, rest.len(), k - picks.len())
                .into_iter()
                .map(|j| rest[j]),
        );
    }
    Ok(picks)
}

/// Surprisal embeddings of the pool, k-means, nearest sentence per center.
pub fn sample_alps(
    unlabeled: &[usize],
    surprisal: &SurprisalTable,
    k: usize,
    seed: u64,
    opts: ClusterOptions,
) -> Result<Vec<usize>> {
    let pool = sorted_pool(unlabeled);
    if let Some(all) = forced(&pool, k) {
        return Ok(all);
    }
    let points: Vec<Vec<f64>> = pool.iter().map(|&i| surprisal.get(i).values.clone()).collect();
    let picks = cluster_and_pick(&points, k, seed, opts)?;
    Ok(picks.into_iter().map(|j| pool[j]).collect())
}

/// [`sample_alps`] computing the surprisal embeddings from per-token NLLs
/// with token fraction `p`.
pub fn sample_alps_from_nll(
    unlabeled: &[usize],
    nll: &NllTable,
    k: usize,
    p: f64,
    seed: u64,
    opts: ClusterOptions,
) -> Result<Vec<usize>> {
    let table = SurprisalTable::build_subset(
        nll,
        unlabeled.iter().copied(),
        p,
        seed::derive_seed_str(seed, "surprisal"),
    )?;
    sample_alps(unlabeled, &table, k, seed, opts)
}

pub fn sample_random(unlabeled: &[usize], k: usize, seed: u64) -> Vec<usize> {
    let pool = sorted_pool(unlabeled);
    let k = k.min(pool.len());
    let mut rng = seed::rng(seed);
    index::sample(&mut rng, pool.len(), k)
        .into_iter()
        .map(|j| pool[j])
        .collect()
}

/// Cluster l2-normalized sentence features, nearest sentence per center.
pub fn sample_emb_km(
    unlabeled: &[usize],
    features: &FeatureTable,
    k: usize,
    seed: u64,
    opts: ClusterOptions,
) -> Result<Vec<usize>> {
    let pool = sorted_pool(unlabeled);
    if let Some(all) = forced(&pool, k) {
        return Ok(all);
    }
    let points: Vec<Vec<f64>> = pool.iter().map(|&i| features.get(i).unit()).collect();
    let picks = cluster_and_pick(&points, k, seed, opts)?;
    Ok(picks.into_iter().map(|j| pool[j]).collect())
}

/// Cluster the previous model's l2-normalized hidden activations.
pub fn sample_ft_emb_km(
    unlabeled: &[usize],
    model_prev: &ClassifierModel,
    features: &FeatureTable,
    k: usize,
    seed: u64,
    opts: ClusterOptions,
) -> Result<Vec<usize>> {
    let pool = sorted_pool(unlabeled);
    if let Some(all) = forced(&pool, k) {
        return Ok(all);
    }
    let points: Vec<Vec<f64>> = pool
        .par_iter()
        .map(|&i| {
            let mut h = model_prev.hidden(&features.get(i).values)?;
            linalg::normalize(&mut h);
            Ok(h)
        })
        .collect::<Result<_>>()?;
    let picks = cluster_and_pick(&points, k, seed, opts)?;
    Ok(picks.into_iter().map(|j| pool[j]).collect())
}

/// Gradient embeddings at the predicted label, then k-means++ seeding; the
/// seeded points are the queries.
pub fn sample_badge(
    unlabeled: &[usize],
    model: &ClassifierModel,
    features: &FeatureTable,
    k: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let pool = sorted_pool(unlabeled);
    if let Some(all) = forced(&pool, k) {
        return Ok(all);
    }
    let points: Vec<Vec<f64>> = pool
        .par_iter()
        .map(|&i| {
            let (p, h) = model.forward(&features.get(i).values)?;
            Ok(gradient_embedding(&p, &h)?.values)
        })
        .collect::<Result<_>>()?;
    let picks = clustering::d2_sample(&points, k, &mut seed::rng(seed));
    Ok(picks.into_iter().map(|j| pool[j]).collect())
}

/// Top-k predictive entropy; ties go to the lowest corpus index.
pub fn sample_entropy(
    unlabeled: &[usize],
    model: &ClassifierModel,
    features: &FeatureTable,
    k: usize,
) -> Result<Vec<usize>> {
    let pool = sorted_pool(unlabeled);
    if let Some(all) = forced(&pool, k) {
        return Ok(all);
    }
    let mut scored: Vec<(usize, f64)> = pool
        .par_iter()
        .map(|&i| {
            let p = model.predict_proba(&features.get(i).values)?;
            Ok((i, predictive_entropy(&p)))
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(k).map(|(i, _)| i).collect())
}

/// Everything a strategy may consult at one iteration.
#[derive(Clone, Copy)]
pub struct SelectionInputs<'a> {
    pub unlabeled: &'a [usize],
    pub surprisal: Option<&'a SurprisalTable>,
    pub features: &'a FeatureTable,
    /// Model trained at the previous iteration; `None` before any training.
    pub model: Option<&'a ClassifierModel>,
    pub alps_clustering: ClusterOptions,
    pub emb_clustering: ClusterOptions,
}

/// Dispatch with the first-iteration fallbacks: `entropy` and `badge` draw
/// at random, `ft-emb-km` clusters pre-trained features.
pub fn select(
    strategy: Strategy,
    inputs: &SelectionInputs<'_>,
    k: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let u = inputs.unlabeled;
    match (strategy, inputs.model) {
        (Strategy::Alps, _) => {
            let table = inputs.surprisal.ok_or_else(|| {
                Error::InvalidArgument("alps needs surprisal embeddings".into())
            })?;
            sample_alps(u, table, k, seed, inputs.alps_clustering)
        }
        (Strategy::Random, _) | (Strategy::Entropy, None) | (Strategy::Badge, None) => {
            Ok(sample_random(u, k, seed))
        }
        (Strategy::EmbKm, _) | (Strategy::FtEmbKm, None) => {
            sample_emb_km(u, inputs.features, k, seed, inputs.emb_clustering)
        }
        (Strategy::Entropy, Some(m)) => sample_entropy(u, m, inputs.features, k),
        (Strategy::Badge, Some(m)) => sample_badge(u, m, inputs.features, k, seed),
        (Strategy::FtEmbKm, Some(m)) => {
            sample_ft_emb_km(u, m, inputs.features, k, seed, inputs.emb_clustering)
        }
    }
}

/// [`select`] plus timing and id lookup.
pub fn select_batch(
    strategy: Strategy,
    iteration: usize,
    inputs: &SelectionInputs<'_>,
    k: usize,
    seed: u64,
    corpus: &Corpus,
) -> Result<QueryBatch> {
    let start = Instant::now();
    let indices = select(strategy, inputs, k, seed)?;
    let selection_time = start.elapsed();
    let ids = indices.iter().map(|&i| corpus.id(i).to_string()).collect();
    Ok(QueryBatch {
        strategy,
        iteration,
        indices,
        ids,
        selection_time,
    })
}
