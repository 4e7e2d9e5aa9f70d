//! Simulated active learning with a gold-label oracle.
//!
//! Every iteration retrains from the same initial parameters on the whole
//! labeled set, so the model at iteration `t` depends only on the initial
//! parameters, the labeled set and the training configuration.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{diversity_jaccard, uncertainty_avg_entropy};
use crate::classifier::{init_model, ClassifierModel, Metrics, TrainConfig};
use crate::corpus::{Corpus, Pool};
use crate::embeddings::{FeatureTable, SurprisalTable, DEFAULT_TOKEN_FRACTION};
use crate::error::{Error, Result};
use crate::seed::{derive_seed_str, derive_seed_u64};
use crate::strategies::{select_batch, ClusterOptions, SelectionInputs, Strategy};
use crate::surprisal_lm::NllTable;

pub const DEFAULT_K: usize = 100;
pub const DEFAULT_ITERATIONS: usize = 10;
pub const DEFAULT_HIDDEN_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlRunConfig {
    pub strategy: Strategy,
    pub k: usize,
    pub iterations: usize,
    pub train: TrainConfig,
    /// Token fraction for surprisal embeddings.
    pub token_fraction: f64,
    pub alps_clustering: ClusterOptions,
    pub emb_clustering: ClusterOptions,
    pub hidden_dim: usize,
    /// Compute G_d and G_u per iteration (G_u needs a ceiling model).
    pub diagnostics: bool,
}

impl Default for AlRunConfig {
    fn default() -> Self {
        AlRunConfig {
            strategy: Strategy::Alps,
            k: DEFAULT_K,
            iterations: DEFAULT_ITERATIONS,
            train: TrainConfig::default(),
            token_fraction: DEFAULT_TOKEN_FRACTION,
            alps_clustering: ClusterOptions::default(),
            emb_clustering: ClusterOptions::default(),
            hidden_dim: DEFAULT_HIDDEN_DIM,
            diagnostics: true,
        }
    }
}

impl AlRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.iterations == 0 {
            return Err(Error::Config("k and iterations must be at least 1".into()));
        }
        if !(self.token_fraction > 0.0 && self.token_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "token_fraction must lie in (0, 1], got {}",
                self.token_fraction
            )));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be at least 1".into()));
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub n_labeled: usize,
    pub queried_ids: Vec<String>,
    pub accuracy: f64,
    pub micro_f1: f64,
    pub g_d: Option<f64>,
    pub g_u: Option<f64>,
    pub select_ms: f64,
    pub train_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlRunResult {
    pub strategy: Strategy,
    pub seed: u64,
    pub k: usize,
    pub single_shot: bool,
    /// The pool ran out before all iterations completed.
    pub exhausted: bool,
    pub records: Vec<IterationRecord>,
    pub ceiling: Option<Metrics>,
}

impl AlRunResult {
    /// Strategy name, suffixed for single-shot runs.
    pub fn label(&self) -> String {
        if self.single_shot {
            format!("{}-single", self.strategy)
        } else {
            self.strategy.to_string()
        }
    }

    pub fn final_metrics(&self) -> Option<Metrics> {
        self.records.last().map(|r| Metrics {
            accuracy: r.accuracy,
            micro_f1: r.micro_f1,
        })
    }
}

/// Corpus, split and per-sentence representations shared by every run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub corpus: Corpus,
    pub pool: Pool,
    pub nll: NllTable,
    pub features: FeatureTable,
}

impl Experiment {
    pub fn new(corpus: Corpus, pool: Pool, nll: NllTable, features: FeatureTable) -> Result<Self> {
        if nll.len() != corpus.len() || features.len() != corpus.len() {
            return Err(Error::DimensionMismatch {
                expected: corpus.len(),
                actual: nll.len().min(features.len()),
            });
        }
        if pool.train_size() == 0 || pool.test().is_empty() {
            return Err(Error::InvalidArgument(
                "simulation needs nonempty training and test sets".into(),
            ));
        }
        if corpus.num_classes() < 2 {
            return Err(Error::DegenerateLabels(
                "simulation needs at least two classes".into(),
            ));
        }
        for i in pool.train_indices().into_iter().chain(pool.test().iter().copied()) {
            if corpus.seqs[i].label.is_none() {
                return Err(Error::MissingLabel(corpus.id(i).to_string()));
            }
        }
        Ok(Experiment {
            corpus,
            pool,
            nll,
            features,
        })
    }

    fn gold(&self, i: usize) -> usize {
        // checked in `new`
        self.corpus.seqs[i].label.expect("labels checked")
    }

    fn examples(&self, idx: impl Iterator<Item = usize>) -> Vec<(&[f64], usize)> {
        idx.map(|i| (self.features.get(i).values.as_slice(), self.gold(i)))
            .collect()
    }

    fn test_examples(&self) -> Vec<(&[f64], usize)> {
        self.examples(self.pool.test().iter().copied())
    }

    /// The initial model for a run seed.
    pub fn base_model(&self, cfg: &AlRunConfig, seed: u64) -> Result<ClassifierModel> {
        init_model(
            self.features.dim(),
            cfg.hidden_dim,
            self.corpus.num_classes(),
            derive_seed_str(seed, "init"),
        )
    }

    fn train_config(&self, cfg: &AlRunConfig, seed: u64) -> TrainConfig {
        TrainConfig {
            seed: derive_seed_str(seed, "train"),
            ..cfg.train
        }
    }

    /// Train from the base model on `labeled` (corpus index, label) pairs.
    pub fn train_on(
        &self,
        cfg: &AlRunConfig,
        seed: u64,
        labeled: &[(usize, usize)],
    ) -> Result<ClassifierModel> {
        let base = self.base_model(cfg, seed)?;
        let examples: Vec<(&[f64], usize)> = labeled
            .iter()
            .map(|&(i, y)| (self.features.get(i).values.as_slice(), y))
            .collect();
        base.train(&examples, &self.train_config(cfg, seed))
    }

    pub fn evaluate(&self, model: &ClassifierModel) -> Result<Metrics> {
        model.evaluate(&self.test_examples())
    }

    fn surprisal_for(&self, cfg: &AlRunConfig, seed: u64) -> Result<Option<SurprisalTable>> {
        if cfg.strategy != Strategy::Alps {
            return Ok(None);
        }
        SurprisalTable::build_subset(
            &self.nll,
            self.pool.train_indices(),
            cfg.token_fraction,
            derive_seed_str(seed, "surprisal"),
        )
        .map(Some)
    }
}

#[derive(Debug, Clone)]
pub struct Ceiling {
    pub metrics: Metrics,
    pub model: ClassifierModel,
}

/// Train from the base model on the entire training pool.
pub fn train_full_ceiling(exp: &Experiment, cfg: &AlRunConfig, seed: u64) -> Result<Ceiling> {
    cfg.validate()?;
    let labeled: Vec<(usize, usize)> = exp
        .pool
        .train_indices()
        .into_iter()
        .map(|i| (i, exp.gold(i)))
        .collect();
    let model = exp.train_on(cfg, seed, &labeled)?;
    let metrics = exp.evaluate(&model)?;
    Ok(Ceiling { metrics, model })
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

struct Step<'a> {
    exp: &'a Experiment,
    cfg: &'a AlRunConfig,
    seed: u64,
    ceiling: Option<&'a Ceiling>,
}

impl Step<'_> {
    /// Label `batch`, retrain and evaluate.
    fn record(
        &self,
        pool: &mut Pool,
        iteration: usize,
        batch: &[usize],
        ids: Vec<String>,
        select_ms: f64,
    ) -> Result<(IterationRecord, ClassifierModel)> {
        let exp = self.exp;
        pool.label_batch(batch, |i| exp.corpus.seqs[i].label)?;
        let start = Instant::now();
        let model = exp.train_on(self.cfg, self.seed, pool.labeled())?;
        let train_ms = ms(start);
        let metrics = exp.evaluate(&model)?;
        let (g_d, g_u) = if self.cfg.diagnostics {
            let labeled: Vec<usize> = pool.labeled().iter().map(|&(i, _)| i).collect();
            let g_d = if pool.unlabeled().is_empty() {
                None
            } else {
                Some(diversity_jaccard(&exp.corpus, &labeled, pool.unlabeled())?)
            };
            let g_u = match self.ceiling {
                Some(c) if !batch.is_empty() => {
                    Some(uncertainty_avg_entropy(&c.model, &exp.features, batch)?)
                }
                _ => None,
            };
            (g_d, g_u)
        } else {
            (None, None)
        };
        Ok((
            IterationRecord {
                iteration,
                n_labeled: pool.labeled().len(),
                queried_ids: ids,
                accuracy: metrics.accuracy,
                micro_f1: metrics.micro_f1,
                g_d,
                g_u,
                select_ms,
                train_ms,
            },
            model,
        ))
    }
}

/// One seeded run of iterative active learning.
pub fn run_al(
    exp: &Experiment,
    cfg: &AlRunConfig,
    seed: u64,
    ceiling: Option<&Ceiling>,
) -> Result<AlRunResult> {
    run_al_traced(exp, cfg, seed, ceiling).map(|(r, _)| r)
}

/// [`run_al`] also returning the model trained at each iteration.
pub fn run_al_traced(
    exp: &Experiment,
    cfg: &AlRunConfig,
    seed: u64,
    ceiling: Option<&Ceiling>,
) -> Result<(AlRunResult, Vec<ClassifierModel>)> {
    cfg.validate()?;
    let surprisal = exp.surprisal_for(cfg, seed)?;
    let step = Step {
        exp,
        cfg,
        seed,
        ceiling,
    };
    let select_seed = derive_seed_str(seed, "select");
    let mut pool = exp.pool.clone();
    let mut models: Vec<ClassifierModel> = Vec::with_capacity(cfg.iterations);
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut exhausted = false;
    for t in 1..=cfg.iterations {
        if pool.unlabeled().is_empty() {
            exhausted = true;
            log::warn!("pool exhausted before iteration {t}");
            break;
        }
        if pool.unlabeled().len() < cfg.k {
            exhausted = true;
        }
        // cold-start strategies always consult the initial model only
        let acquisition = if cfg.strategy.is_cold_start() {
            None
        } else {
            models.last()
        };
        let inputs = SelectionInputs {
            unlabeled: pool.unlabeled(),
            surprisal: surprisal.as_ref(),
            features: &exp.features,
            model: acquisition,
            alps_clustering: cfg.alps_clustering,
            emb_clustering: cfg.emb_clustering,
        };
        let batch = select_batch(
            cfg.strategy,
            t,
            &inputs,
            cfg.k,
            derive_seed_u64(select_seed, t as u64),
            &exp.corpus,
        )?;
        let select_ms = batch.selection_time.as_secs_f64() * 1e3;
        let (rec, m) = step.record(&mut pool, t, &batch.indices, batch.ids, select_ms)?;
        log::debug!(
            "{} seed {seed} iteration {t}: n={} acc={:.4}",
            cfg.strategy,
            rec.n_labeled,
            rec.accuracy
        );
        records.push(rec);
        models.push(m);
    }
    let result = AlRunResult {
        strategy: cfg.strategy,
        seed,
        k: cfg.k,
        single_shot: false,
        exhausted,
        records,
        ceiling: ceiling.map(|c| c.metrics),
    };
    Ok((result, models))
}

/// One cold-start selection of `k_total` sentences, one training run.
pub fn run_single_shot(
    exp: &Experiment,
    cfg: &AlRunConfig,
    k_total: usize,
    seed: u64,
    ceiling: Option<&Ceiling>,
) -> Result<AlRunResult> {
    if !cfg.strategy.is_cold_start() {
        return Err(Error::WarmStartStrategy(cfg.strategy.to_string()));
    }
    let single = AlRunConfig {
        k: k_total,
        iterations: 1,
        ..cfg.clone()
    };
    let mut result = run_al(exp, &single, seed, ceiling)?;
    result.single_shot = true;
    Ok(result)
}

/// A `(strategy, seed)` job of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Job {
    pub strategy: Strategy,
    pub seed: u64,
}

/// Every strategy crossed with every seed, in that order.
pub fn jobs(strategies: &[Strategy], seeds: &[u64]) -> Vec<Job> {
    strategies
        .iter()
        .flat_map(|&strategy| seeds.iter().map(move |&seed| Job { strategy, seed }))
        .collect()
}

/// Run every job in parallel on the current rayon pool. Ceilings are trained
/// once per seed when `with_ceiling` is set. Results follow job order.
pub fn run_grid(
    exp: &Experiment,
    base: &AlRunConfig,
    jobs: &[Job],
    with_ceiling: bool,
) -> Result<Vec<AlRunResult>> {
    base.validate()?;
    let mut seeds: Vec<u64> = jobs.iter().map(|j| j.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let ceilings: Vec<(u64, Ceiling)> = if with_ceiling {
        seeds
            .par_iter()
            .map(|&s| train_full_ceiling(exp, base, s).map(|c| (s, c)))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    jobs.par_iter()
        .map(|job| {
            let cfg = AlRunConfig {
                strategy: job.strategy,
                ..base.clone()
            };
            let ceiling = ceilings
                .iter()
                .find(|(s, _)| *s == job.seed)
                .map(|(_, c)| c);
            run_al(exp, &cfg, job.seed, ceiling)
        })
        .collect()
}

pub const RESULTS_HEADER: &str =
    "strategy,seed,iteration,n_labeled,accuracy,micro_f1,g_d,g_u,select_ms,train_ms";

/// One row per record; timing columns are left empty when `timings` is off.
pub fn results_csv(results: &[AlRunResult], timings: bool) -> String {
    use crate::analysis::{fmt_opt, fmt_sig};
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in results {
        for rec in &r.records {
            let (s, t) = if timings {
                (fmt_sig(rec.select_ms), fmt_sig(rec.train_ms))
            } else {
                (String::new(), String::new())
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.label(),
                r.seed,
                rec.iteration,
                rec.n_labeled,
                fmt_sig(rec.accuracy),
                fmt_sig(rec.micro_f1),
                fmt_opt(rec.g_d),
                fmt_opt(rec.g_u),
                s,
                t
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;
    use crate::embeddings::Featurizer;
    use crate::surprisal_lm::{LmConfig, NgramLm};
    use crate::synthetic::{generate_topic_corpus, TopicCorpusConfig};

    pub(crate) fn small_experiment(n: usize) -> Experiment {
        let tc = generate_topic_corpus(&TopicCorpusConfig {
            train_size: n,
            test_size: n / 4,
            vocab_size: 200,
            ..Default::default()
        })
        .unwrap();
        let (ds, _) = tc.combined();
        let corpus = Corpus::build(&ds, 64, 1).unwrap();
        let mut test: Vec<usize> = (n..n + n / 4).collect();
        test.sort_unstable();
        let pool = Pool::new((0..n).collect(), test).unwrap();
        let lm = NgramLm::train(
            pool.train_indices().iter().map(|&i| &corpus.seqs[i]),
            corpus.vocab.len(),
            LmConfig::default(),
        )
        .unwrap();
        let nll = NllTable::from_lm(&lm, &corpus);
        let features = FeatureTable::hashed(&corpus, &Featurizer { dim: 64 }).unwrap();
        Experiment::new(corpus, pool, nll, features).unwrap()
    }

    fn cfg(strategy: Strategy, k: usize, t: usize) -> AlRunConfig {
        AlRunConfig {
            strategy,
            k,
            iterations: t,
            hidden_dim: 8,
            ..Default::default()
        }
    }

    #[test]
    fn labeled_sizes_grow_by_k() {
        let exp = small_experiment(120);
        for s in Strategy::ALL {
            let r = run_al(&exp, &cfg(s, 10, 4), 3, None).unwrap();
            let sizes: Vec<usize> = r.records.iter().map(|x| x.n_labeled).collect();
            assert_eq!(sizes, vec![10, 20, 30, 40], "{s}");
            assert!(!r.exhausted);
            let mut all: Vec<&String> = r.records.iter().flat_map(|x| &x.queried_ids).collect();
            all.sort();
            all.dedup();
            assert_eq!(all.len(), 40);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let exp = small_experiment(80);
        let c = cfg(Strategy::Alps, 8, 2);
        let mut a = run_al(&exp, &c, 11, None).unwrap();
        let mut b = run_al(&exp, &c, 11, None).unwrap();
        for r in a.records.iter_mut().chain(b.records.iter_mut()) {
            r.select_ms = 0.0;
            r.train_ms = 0.0;
        }
        assert_eq!(a, b);
    }

    #[test]
    fn exhaustion_stops_early() {
        let exp = small_experiment(40);
        let r = run_al(&exp, &cfg(Strategy::Random, 15, 5), 0, None).unwrap();
        assert!(r.exhausted);
        assert_eq!(r.records.len(), 3);
        assert_eq!(r.records.last().unwrap().n_labeled, 40);
        assert_eq!(r.records.last().unwrap().g_d, None);
    }

    #[test]
    fn whole_pool_equals_ceiling() {
        let exp = small_experiment(40);
        let c = cfg(Strategy::Random, 40, 1);
        let ceiling = train_full_ceiling(&exp, &c, 2).unwrap();
        let r = run_al(&exp, &c, 2, Some(&ceiling)).unwrap();
        assert_eq!(r.records[0].n_labeled, 40);
        assert_eq!(r.records[0].accuracy, ceiling.metrics.accuracy);
        assert_eq!(r.records[0].micro_f1, ceiling.metrics.micro_f1);
    }

    #[test]
    fn single_shot_rejects_warm_start() {
        let exp = small_experiment(40);
        for s in [Strategy::Entropy, Strategy::Badge, Strategy::FtEmbKm] {
            assert!(matches!(
                run_single_shot(&exp, &cfg(s, 5, 1), 10, 0, None),
                Err(Error::WarmStartStrategy(_))
            ));
        }
        let r = run_single_shot(&exp, &cfg(Strategy::Alps, 5, 3), 12, 0, None).unwrap();
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.records[0].n_labeled, 12);
        assert_eq!(r.label(), "alps-single");
    }

    #[test]
    fn retrain_reproduces_iteration_model() {
        let exp = small_experiment(60);
        let c = cfg(Strategy::Entropy, 6, 3);
        let r = run_al(&exp, &c, 4, None).unwrap();
        // rebuild the final labeled set from queried ids and retrain
        let labeled: Vec<(usize, usize)> = r
            .records
            .iter()
            .flat_map(|x| &x.queried_ids)
            .map(|id| {
                let i = exp.corpus.index_of(id).unwrap();
                (i, exp.gold(i))
            })
            .collect();
        let m1 = exp.train_on(&c, 4, &labeled).unwrap();
        let m2 = exp.train_on(&c, 4, &labeled).unwrap();
        assert_eq!(m1.params(), m2.params());
        assert_eq!(exp.evaluate(&m1).unwrap().accuracy, r.records[2].accuracy);
    }

    #[test]
    fn grid_order_and_csv() {
        let exp = small_experiment(60);
        let js = jobs(&[Strategy::Random, Strategy::Alps], &[0, 1]);
        let rs = run_grid(&exp, &cfg(Strategy::Random, 5, 2), &js, true).unwrap();
        assert_eq!(rs.len(), 4);
        assert_eq!((rs[0].strategy, rs[0].seed), (Strategy::Random, 0));
        assert_eq!((rs[3].strategy, rs[3].seed), (Strategy::Alps, 1));
        assert!(rs.iter().all(|r| r.records.iter().all(|x| x.g_u.is_some())));
        let csv = results_csv(&rs, false);
        assert_eq!(csv.lines().count(), 1 + 8);
        assert!(csv.lines().nth(1).unwrap().ends_with(",,"));
    }

    #[test]
    fn invalid_config() {
        let exp = small_experiment(20);
        assert!(run_al(&exp, &cfg(Strategy::Random, 0, 1), 0, None).is_err());
        assert!(run_al(&exp, &cfg(Strategy::Random, 1, 0), 0, None).is_err());
    }
}
