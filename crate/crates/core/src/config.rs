//! TOML run configuration and experiment assembly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::TrainConfig;
use crate::clustering::{Init, DEFAULT_MAX_ITER};
use crate::corpus::{load_dataset, merge_datasets, split_pool, Corpus, DatasetFormat, Pool};
use crate::embeddings::{
    load_sentence_embeddings, FeatureTable, Featurizer, DEFAULT_FEATURE_DIM,
    DEFAULT_TOKEN_FRACTION,
};
use crate::error::{Error, Result};
use crate::simulation::{
    AlRunConfig, Experiment, DEFAULT_HIDDEN_DIM, DEFAULT_ITERATIONS, DEFAULT_K,
};
use crate::strategies::{ClusterOptions, Strategy};
use crate::surprisal_lm::{load_external_nll, LmConfig, NgramLm, NllTable};

pub const SEED_ENV: &str = "COLDSTART_AL_SEED";
pub const DEFAULT_MAX_LEN: usize = 128;
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub format: Option<DatasetFormat>,
    /// Held-out test file; without it a stratified split is drawn.
    #[serde(default)]
    pub test_path: Option<PathBuf>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
}

fn default_test_fraction() -> f64 {
    0.2
}
fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}
fn default_min_count() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// Built-in bidirectional n-gram model trained on the training pool.
    #[default]
    Ngram,
    /// Per-token NLLs read from an interchange file.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub nll_path: Option<PathBuf>,
    /// Sentence embeddings used as classifier features; hashed n-grams otherwise.
    pub embeddings_path: Option<PathBuf>,
    pub feature_dim: usize,
    pub order: usize,
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        let lm = LmConfig::default();
        ProviderConfig {
            kind: ProviderKind::Ngram,
            nll_path: None,
            embeddings_path: None,
            feature_dim: DEFAULT_FEATURE_DIM,
            order: lm.order,
            alpha: lm.alpha,
            lambda: lm.lambda,
        }
    }
}

impl ProviderConfig {
    pub fn lm_config(&self) -> LmConfig {
        LmConfig {
            order: self.order,
            alpha: self.alpha,
            lambda: self.lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub strategies: Vec<String>,
    pub k: usize,
    pub iterations: usize,
    /// Falls back to the seed environment variable, then to five seeds.
    pub seeds: Option<Vec<u64>>,
    pub token_fraction: f64,
    pub alps_init: Init,
    pub emb_init: Init,
    pub max_iter: usize,
    pub diagnostics: bool,
    /// Also run single-shot selection of `k * iterations` for each
    /// cold-start strategy.
    pub single_shot: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            strategies: Strategy::ALL.iter().map(|s| s.to_string()).collect(),
            k: DEFAULT_K,
            iterations: DEFAULT_ITERATIONS,
            seeds: None,
            token_fraction: DEFAULT_TOKEN_FRACTION,
            alps_init: Init::KMeansPlusPlus,
            emb_init: Init::KMeansPlusPlus,
            max_iter: DEFAULT_MAX_ITER,
            diagnostics: true,
            single_shot: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dim: DEFAULT_HIDDEN_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Record wall-clock timings; disable for byte-identical reruns.
    pub timings: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("results"),
            timings: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub data: DataConfig,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub model: ModelConfig,
    /// `seed` is replaced by a per-run derived seed.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string() + &span_hint(&e)))
    }

    /// Parse a file; relative paths are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Config::parse(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.data.path);
        for p in [
            cfg.data.test_path.as_mut(),
            cfg.provider.nll_path.as_mut(),
            cfg.provider.embeddings_path.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
        resolve(base, &mut cfg.output.dir);
        Ok(cfg)
    }

    pub fn strategies(&self) -> Result<Vec<Strategy>> {
        if self.run.strategies.is_empty() {
            return Err(Error::Config("run.strategies must not be empty".into()));
        }
        self.run.strategies.iter().map(|s| s.parse()).collect()
    }

    /// Configured seeds, else the environment seed, else the default five.
    pub fn seeds(&self) -> Result<Vec<u64>> {
        if let Some(s) = &self.run.seeds {
            if s.is_empty() {
                return Err(Error::Config("run.seeds must not be empty".into()));
            }
            return Ok(s.clone());
        }
        Ok(env_seed()?.map(|s| vec![s]).unwrap_or_else(|| DEFAULT_SEEDS.to_vec()))
    }

    pub fn run_config(&self, strategy: Strategy) -> AlRunConfig {
        AlRunConfig {
            strategy,
            k: self.run.k,
            iterations: self.run.iterations,
            train: self.train,
            token_fraction: self.run.token_fraction,
            alps_clustering: ClusterOptions {
                init: self.run.alps_init,
                max_iter: self.run.max_iter,
            },
            emb_clustering: ClusterOptions {
                init: self.run.emb_init,
                max_iter: self.run.max_iter,
            },
            hidden_dim: self.model.hidden_dim,
            diagnostics: self.run.diagnostics,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.strategies()?;
        self.seeds()?;
        if self.data.max_len == 0 {
            return Err(Error::Config("data.max_len must be at least 1".into()));
        }
        if self.provider.kind == ProviderKind::External && self.provider.nll_path.is_none() {
            return Err(Error::Config(
                "provider.nll_path is required when provider.kind = \"external\"".into(),
            ));
        }
        if self.provider.feature_dim == 0 {
            return Err(Error::Config("provider.feature_dim must be at least 1".into()));
        }
        self.provider
            .lm_config()
            .validate()
            .map_err(|e| Error::Config(format!("provider: {e}")))?;
        self.run_config(Strategy::Random)
            .validate()
            .map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("run: {m}")),
                Error::InvalidArgument(m) => Error::Config(format!("train: {m}")),
                other => other,
            })
    }
}

fn span_hint(e: &toml::de::Error) -> String {
    e.span()
        .map(|s| format!(" (at byte {})", s.start))
        .unwrap_or_default()
}

/// The seed environment variable, if set.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

pub fn dataset_format(path: &Path, explicit: Option<DatasetFormat>) -> DatasetFormat {
    explicit.unwrap_or_else(|| DatasetFormat::from_path(path))
}

/// Load the corpus and the train/test split described by `data`.
pub fn load_corpus(data: &DataConfig) -> Result<(Corpus, Pool)> {
    let fmt = dataset_format(&data.path, data.format);
    let train = load_dataset(&data.path, fmt)?;
    match &data.test_path {
        Some(tp) => {
            let tfmt = dataset_format(tp, data.format);
            let test = load_dataset(tp, tfmt)?;
            // TSV ids are line numbers and would collide across files
            let prefix = if tfmt == DatasetFormat::Tsv { "test:" } else { "" };
            let (merged, n_train) = merge_datasets(train, test, prefix)?;
            let corpus = Corpus::build(&merged, data.max_len, data.min_count)?;
            let pool = Pool::new((0..n_train).collect(), (n_train..corpus.len()).collect())?;
            Ok((corpus, pool))
        }
        None => {
            let corpus = Corpus::build(&train, data.max_len, data.min_count)?;
            let pool = split_pool(&corpus.labels(), data.test_fraction, data.split_seed)?;
            Ok((corpus, pool))
        }
    }
}

/// NLLs for every corpus sentence from the configured provider. The n-gram
/// model sees only the sentences listed in `lm_train`.
pub fn provide_nll(provider: &ProviderConfig, corpus: &Corpus, lm_train: &[usize]) -> Result<NllTable> {
    match provider.kind {
        ProviderKind::Ngram => {
            let lm = NgramLm::train(
                lm_train.iter().map(|&i| &corpus.seqs[i]),
                corpus.vocab.len(),
                provider.lm_config(),
            )?;
            Ok(NllTable::from_lm(&lm, corpus))
        }
        ProviderKind::External => {
            let path = provider.nll_path.as_ref().ok_or_else(|| {
                Error::Config("provider.nll_path is required for external NLLs".into())
            })?;
            NllTable::from_map(load_external_nll(path, corpus)?, corpus)
        }
    }
}

pub fn provide_features(provider: &ProviderConfig, corpus: &Corpus) -> Result<FeatureTable> {
    match &provider.embeddings_path {
        Some(p) => FeatureTable::from_map(load_sentence_embeddings(p)?, corpus),
        None => FeatureTable::hashed(
            corpus,
            &Featurizer {
                dim: provider.feature_dim,
            },
        ),
    }
}

pub fn build_experiment(cfg: &Config) -> Result<Experiment> {
    let (corpus, pool) = load_corpus(&cfg.data)?;
    let nll = provide_nll(&cfg.provider, &corpus, &pool.train_indices())?;
    let features = provide_features(&cfg.provider, &corpus)?;
    Experiment::new(corpus, pool, nll, features)
}
