//! Batch diagnostics and multi-seed aggregation.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::classifier::{predictive_entropy, ClassifierModel};
use crate::clustering::{kmeans, silhouette};
use crate::corpus::{Corpus, Vocab};
use crate::embeddings::FeatureTable;
use crate::error::{Error, Result};
use crate::simulation::AlRunResult;
use crate::strategies::ClusterOptions;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchDiagnostics {
    pub iteration: usize,
    pub batch_size: usize,
    /// `None` when the rest of the pool is empty.
    pub g_d: Option<f64>,
    pub g_u: Option<f64>,
}

/// Token types of the given sentences, specials excluded.
pub fn token_types(corpus: &Corpus, indices: &[usize]) -> HashSet<u32> {
    indices
        .iter()
        .flat_map(|&i| corpus.seqs[i].real_tokens().iter().copied())
        .filter(|&t| !Vocab::is_special(t))
        .collect()
}

/// Jaccard similarity of two token-type sets; two empty sets score 0.
pub fn jaccard(a: &HashSet<u32>, b: &HashSet<u32>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Token-type Jaccard similarity between `sampled` and `rest` of the pool.
pub fn diversity_jaccard(corpus: &Corpus, sampled: &[usize], rest: &[usize]) -> Result<f64> {
    if rest.is_empty() {
        return Err(Error::InvalidArgument(
            "diversity is undefined when the whole pool is sampled".into(),
        ));
    }
    if sampled.is_empty() {
        return Err(Error::InvalidArgument("empty sampled set".into()));
    }
    Ok(jaccard(&token_types(corpus, sampled), &token_types(corpus, rest)))
}

/// Mean predictive entropy of `batch` under `model_star`.
pub fn uncertainty_avg_entropy(
    model_star: &ClassifierModel,
    features: &FeatureTable,
    batch: &[usize],
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut total = 0.0;
    for &i in batch {
        total += predictive_entropy(&model_star.predict_proba(&features.get(i).values)?);
    }
    Ok(total / batch.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub k: usize,
    pub seed: u64,
    pub surprisal_silhouette: f64,
    pub feature_silhouette: f64,
    pub surprisal_assignment: Vec<usize>,
    pub feature_assignment: Vec<usize>,
}

/// k-means with identical `(k, seed)` on both embedding families.
pub fn cluster_report(
    surprisal: &[Vec<f64>],
    features: &[Vec<f64>],
    k: usize,
    seed: u64,
    opts: ClusterOptions,
) -> Result<ClusterReport> {
    if surprisal.len() != features.len() {
        return Err(Error::DimensionMismatch {
            expected: surprisal.len(),
            actual: features.len(),
        });
    }
    let s = kmeans(surprisal, k, opts.init, opts.max_iter, seed)?;
    let f = kmeans(features, k, opts.init, opts.max_iter, seed)?;
    Ok(ClusterReport {
        k,
        seed,
        surprisal_silhouette: silhouette(surprisal, &s.assignment)?,
        feature_silhouette: silhouette(features, &f.assignment)?,
        surprisal_assignment: s.assignment,
        feature_assignment: f.assignment,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Summary {
            mean,
            std,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub strategy: String,
    pub iteration: usize,
    pub n_labeled: Summary,
    pub accuracy: Summary,
    pub micro_f1: Summary,
    pub g_d: Option<Summary>,
    pub g_u: Option<Summary>,
}

/// Per `(strategy, iteration)` statistics over runs, sorted by strategy name
/// then iteration.
pub fn aggregate(results: &[AlRunResult]) -> Vec<AggregateRow> {
    #[derive(Default)]
    struct Acc {
        n: Vec<f64>,
        acc: Vec<f64>,
        f1: Vec<f64>,
        gd: Vec<f64>,
        gu: Vec<f64>,
    }
    let mut groups: BTreeMap<(String, usize), Acc> = BTreeMap::new();
    for r in results {
        for rec in &r.records {
            let a = groups.entry((r.label(), rec.iteration)).or_default();
            a.n.push(rec.n_labeled as f64);
            a.acc.push(rec.accuracy);
            a.f1.push(rec.micro_f1);
            a.gd.extend(rec.g_d);
            a.gu.extend(rec.g_u);
        }
    }
    groups
        .into_iter()
        .map(|((strategy, iteration), a)| AggregateRow {
            strategy,
            iteration,
            // each group holds at least one record, so these are Some
            n_labeled: Summary::of(&a.n).expect("nonempty group"),
            accuracy: Summary::of(&a.acc).expect("nonempty group"),
            micro_f1: Summary::of(&a.f1).expect("nonempty group"),
            g_d: Summary::of(&a.gd),
            g_u: Summary::of(&a.gu),
        })
        .collect()
}

/// Nine significant digits in positional notation; empty for `None`.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).clamp(0, 40) as usize;
    let s = format!("{x:.decimals$}");
    // -0.000 style artefacts of rounding tiny negatives
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

pub const AGGREGATE_HEADER: &str = "strategy,iteration,n_runs,n_labeled_mean,accuracy_mean,accuracy_std,accuracy_min,accuracy_max,micro_f1_mean,micro_f1_std,micro_f1_min,micro_f1_max,g_d_mean,g_d_std,g_u_mean,g_u_std";

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for r in rows {
        let cols = [
            r.strategy.clone(),
            r.iteration.to_string(),
            r.accuracy.count.to_string(),
            fmt_sig(r.n_labeled.mean),
            fmt_sig(r.accuracy.mean),
            fmt_sig(r.accuracy.std),
            fmt_sig(r.accuracy.min),
            fmt_sig(r.accuracy.max),
            fmt_sig(r.micro_f1.mean),
            fmt_sig(r.micro_f1.std),
            fmt_sig(r.micro_f1.min),
            fmt_sig(r.micro_f1.max),
            fmt_opt(r.g_d.map(|s| s.mean)),
            fmt_opt(r.g_d.map(|s| s.std)),
            fmt_opt(r.g_u.map(|s| s.mean)),
            fmt_opt(r.g_u.map(|s| s.std)),
        ];
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

pub const DIAGNOSTICS_HEADER: &str = "strategy,iteration,g_d,g_u";

/// One row per run record, in input order.
pub fn diagnostics_csv(results: &[AlRunResult]) -> String {
    let mut out = String::from(DIAGNOSTICS_HEADER);
    out.push('\n');
    for r in results {
        for rec in &r.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.label(),
                rec.iteration,
                fmt_opt(rec.g_d),
                fmt_opt(rec.g_u)
            ));
        }
    }
    out
}

/// Plain-text table of mean ± std accuracy per strategy and iteration.
pub fn summary_table(rows: &[AggregateRow]) -> String {
    let mut strategies: Vec<&str> = rows.iter().map(|r| r.strategy.as_str()).collect();
    strategies.dedup();
    let max_iter = rows.iter().map(|r| r.iteration).max().unwrap_or(0);
    let width = strategies.iter().map(|s| s.len()).max().unwrap_or(8).max(8);
    let mut out = format!("{:<width$}", "strategy");
    for t in 1..=max_iter {
        out.push_str(&format!(" | {:>15}", format!("iter {t}")));
    }
    out.push('\n');
    for s in strategies {
        out.push_str(&format!("{s:<width$}"));
        for t in 1..=max_iter {
            let cell = rows
                .iter()
                .find(|r| r.strategy == s && r.iteration == t)
                .map(|r| format!("{:.4}±{:.4}", r.accuracy.mean, r.accuracy.std))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(" | {cell:>15}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::init_model;
    use crate::corpus::{Dataset, RawRecord};
    use crate::embeddings::Featurizer;
    use crate::simulation::{AlRunResult, IterationRecord};
    use crate::strategies::Strategy;
    use proptest::prelude::*;

    fn corpus(texts: &[&str]) -> Corpus {
        let ds = Dataset {
            records: texts
                .iter()
                .enumerate()
                .map(|(i, t)| RawRecord {
                    id: format!("s{i}"),
                    text: t.to_string(),
                    label: Some(i % 2),
                })
                .collect(),
            label_names: vec!["x".into(), "y".into()],
        };
        Corpus::build(&ds, 16, 1).unwrap()
    }

    #[test]
    fn jaccard_hand_examples() {
        let c = corpus(&["a b c", "b c d", "e f"]);
        assert!((diversity_jaccard(&c, &[0], &[1]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(diversity_jaccard(&c, &[0], &[2]).unwrap(), 0.0);
        let c2 = corpus(&["a b", "b a", "a"]);
        assert_eq!(diversity_jaccard(&c2, &[0], &[1]).unwrap(), 1.0);
        assert!(diversity_jaccard(&c, &[0, 1, 2], &[]).is_err());
    }

    #[test]
    fn three_sentence_oracle() {
        // D = {s0}, D' = {s1, s2}: {a,b,c} vs {b,c,d,e,f} -> 2/6
        let c = corpus(&["a b c", "b c d", "e f"]);
        assert_eq!(diversity_jaccard(&c, &[0], &[1, 2]).unwrap(), 2.0 / 6.0);
    }

    fn uniform_model(d_in: usize, classes: usize) -> ClassifierModel {
        let mut m = init_model(d_in, 3, classes, 0).unwrap();
        let n = m.params().len();
        m.set_params(vec![0.0; n]).unwrap();
        m
    }

    #[test]
    fn uncertainty_of_uniform_model_is_ln_c() {
        let c = corpus(&["a b c", "b c d", "e f"]);
        let f = FeatureTable::hashed(&c, &Featurizer { dim: 8 }).unwrap();
        let m = uniform_model(8, 4);
        let g = uncertainty_avg_entropy(&m, &f, &[0, 1, 2]).unwrap();
        assert!((g - 4f64.ln()).abs() < 1e-12);
        assert!(uncertainty_avg_entropy(&m, &f, &[]).is_err());
    }

    #[test]
    fn summary_stats() {
        let s = Summary::of(&[0.5, 0.7]).unwrap();
        assert!((s.mean - 0.6).abs() < 1e-15);
        assert!((s.std - (0.02f64).sqrt()).abs() < 1e-15);
        assert_eq!(Summary::of(&[0.3]).unwrap().std, 0.0);
        assert!(Summary::of(&[]).is_none());
    }

    fn fake_run(strategy: Strategy, seed: u64, accs: &[f64]) -> AlRunResult {
        AlRunResult {
            strategy,
            seed,
            k: 10,
            single_shot: false,
            exhausted: false,
            records: accs
                .iter()
                .enumerate()
                .map(|(t, &a)| IterationRecord {
                    iteration: t + 1,
                    n_labeled: 10 * (t + 1),
                    queried_ids: vec![],
                    accuracy: a,
                    micro_f1: a,
                    g_d: Some(0.1),
                    g_u: None,
                    select_ms: 0.0,
                    train_ms: 0.0,
                })
                .collect(),
            ceiling: None,
        }
    }

    #[test]
    fn aggregate_counts_and_means() {
        let runs: Vec<AlRunResult> = (0..5)
            .flat_map(|s| {
                [
                    fake_run(Strategy::Alps, s, &[0.5, 0.6, 0.7]),
                    fake_run(Strategy::Random, s, &[0.4 + 0.01 * s as f64, 0.5, 0.6]),
                ]
            })
            .collect();
        let rows = aggregate(&runs);
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.accuracy.count == 5));
        let r1 = rows.iter().find(|r| r.strategy == "random" && r.iteration == 1).unwrap();
        assert!((r1.accuracy.mean - 0.42).abs() < 1e-12);
        let a1 = rows.iter().find(|r| r.strategy == "alps" && r.iteration == 1).unwrap();
        assert_eq!(a1.accuracy.std, 0.0);
        assert!(a1.g_u.is_none());
        let csv = aggregate_csv(&rows);
        assert_eq!(csv.lines().count(), 7);
        let table = summary_table(&rows);
        assert!(table.contains("0.4200±0.0158"));
    }

    #[test]
    fn fixed_precision_formatting() {
        assert_eq!(fmt_sig(0.6), "0.600000000");
        assert_eq!(fmt_sig(0.610864302), "0.610864302");
        assert_eq!(fmt_sig(123.456), "123.456000");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(-1.5e-3), "-0.00150000000");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn cluster_report_separated_vs_noise() {
        use crate::seed::rng;
        use rand::Rng;
        let mut r = rng(5);
        let mut surprisal = Vec::new();
        let mut features = Vec::new();
        for i in 0..60 {
            let c = (i % 3) as f64;
            surprisal.push(vec![c * 10.0 + r.gen::<f64>() * 0.1, r.gen::<f64>() * 0.1]);
            features.push(vec![r.gen::<f64>(), r.gen::<f64>()]);
        }
        let rep = cluster_report(&surprisal, &features, 3, 1, ClusterOptions::default()).unwrap();
        assert!(rep.surprisal_silhouette > rep.feature_silhouette);
        for s in [rep.surprisal_silhouette, rep.feature_silhouette] {
            assert!((-1.0..=1.0).contains(&s));
        }
        let same = cluster_report(&features, &features, 3, 1, ClusterOptions::default()).unwrap();
        assert_eq!(same.surprisal_silhouette, same.feature_silhouette);
    }

    proptest! {
        #[test]
        fn jaccard_symmetric_and_bounded(
            a in proptest::collection::hash_set(0u32..30, 0..12),
            b in proptest::collection::hash_set(0u32..30, 0..12),
        ) {
            let j = jaccard(&a, &b);
            prop_assert_eq!(j, jaccard(&b, &a));
            prop_assert!((0.0..=1.0).contains(&j));
        }
    }
}
