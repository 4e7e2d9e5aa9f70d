//! Command-line entry points. Exit codes: 0 success, 1 usage error, 2 data error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{aggregate, aggregate_csv, cluster_report, diagnostics_csv, summary_table};
use crate::clustering::Init;
use crate::config::{self, Config, ProviderConfig, ProviderKind};
use crate::corpus::{load_dataset, Corpus, DatasetFormat};
use crate::embeddings::{
    write_sentence_embeddings, SurprisalTable, DEFAULT_FEATURE_DIM, DEFAULT_TOKEN_FRACTION,
};
use crate::error::{Error, Result};
use crate::seed::derive_seed_str;
use crate::simulation::{jobs, results_csv, run_grid, run_single_shot, train_full_ceiling, AlRunResult};
use crate::strategies::{select, ClusterOptions, SelectionInputs, Strategy};
use crate::surprisal_lm::{write_nll_jsonl, LmConfig};
use crate::synthetic::{generate_topic_corpus, TopicCorpusConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "coldstart-al", version, about = "Cold-start active learning with surprisal embeddings")]
pub struct Cli {
    /// Increase log verbosity (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run simulated active learning for every (strategy, seed) pair.
    Simulate(SimulateArgs),
    /// Select k sentences with a cold-start strategy, without training.
    Sample(SampleArgs),
    /// Aggregate the per-run results in a results directory.
    Analyze(AnalyzeArgs),
    /// Write surprisal or feature embeddings for external visualization.
    DumpEmbeddings(DumpArgs),
    /// Train the n-gram model and write per-token NLLs.
    TrainLm(TrainLmArgs),
    /// Write a synthetic topic-classification corpus.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML configuration file.
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    pub config: Option<PathBuf>,
    /// Re-run the configuration recorded in a previous manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated strategy ids.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Parallel jobs; defaults to the number of cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Leave timing columns empty so reruns are byte-identical.
    #[arg(long)]
    pub no_timings: bool,
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// jsonl or tsv; guessed from the extension otherwise.
    #[arg(long)]
    pub format: Option<DatasetFormat>,
    #[arg(long, default_value_t = config::DEFAULT_MAX_LEN)]
    pub max_len: usize,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
}

impl DataArgs {
    fn corpus(&self) -> Result<Corpus> {
        let fmt = config::dataset_format(&self.data, self.format);
        Corpus::build(&load_dataset(&self.data, fmt)?, self.max_len, self.min_count)
    }
}

#[derive(Debug, Args, Clone)]
pub struct ProviderArgs {
    /// Per-token NLL interchange file; the built-in n-gram model otherwise.
    #[arg(long)]
    pub nll: Option<PathBuf>,
    /// Sentence-embedding interchange file; hashed n-gram features otherwise.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FEATURE_DIM)]
    pub feature_dim: usize,
}

impl ProviderArgs {
    fn provider(&self) -> ProviderConfig {
        ProviderConfig {
            kind: if self.nll.is_some() {
                ProviderKind::External
            } else {
                ProviderKind::Ngram
            },
            nll_path: self.nll.clone(),
            embeddings_path: self.embeddings.clone(),
            feature_dim: self.feature_dim,
            ..ProviderConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long, default_value = "alps")]
    pub strategy: String,
    #[arg(long)]
    pub k: usize,
    /// Falls back to COLDSTART_AL_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOKEN_FRACTION)]
    pub token_fraction: f64,
    /// k-means initialization: kmeans++ or random.
    #[arg(long, default_value = "kmeans++")]
    pub init: Init,
    #[arg(long, default_value_t = crate::clustering::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Directory written by `simulate`.
    #[arg(long)]
    pub results: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EmbeddingKind {
    Surprisal,
    Feature,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long, value_enum, default_value = "surprisal")]
    pub kind: EmbeddingKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_TOKEN_FRACTION)]
    pub token_fraction: f64,
    /// Also cluster both embedding families with this k and report silhouettes.
    #[arg(long)]
    pub cluster_k: Option<usize>,
    /// Where to write the cluster report; stdout otherwise.
    #[arg(long, requires = "cluster_k")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainLmArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub train_size: usize,
    #[arg(long, default_value_t = 500)]
    pub test_size: usize,
}

/// Dataset fingerprint recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: Config,
    pub datasets: Vec<DatasetHash>,
    pub seeds: Vec<u64>,
    pub outputs: Vec<PathBuf>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUNS_DIR: &str = "runs";

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn dataset_hashes(cfg: &Config) -> Result<Vec<DatasetHash>> {
    let mut paths = vec![cfg.data.path.clone()];
    paths.extend(cfg.data.test_path.clone());
    paths.extend(cfg.provider.nll_path.clone());
    paths.extend(cfg.provider.embeddings_path.clone());
    paths
        .into_iter()
        .map(|p| {
            Ok(DatasetHash {
                sha256: sha256_file(&p)?,
                path: p,
            })
        })
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn seed_or_env(seed: Option<u64>) -> Result<u64> {
    match seed {
        Some(s) => Ok(s),
        None => Ok(config::env_seed()?.unwrap_or(0)),
    }
}

fn run_file_name(r: &AlRunResult) -> String {
    format!("{}-seed{}.json", r.label(), r.seed)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let (mut cfg, recorded) = match (&args.config, &args.manifest) {
        (Some(c), _) => (Config::load(c)?, None),
        (None, Some(m)) => {
            let text = fs::read_to_string(m).map_err(|e| Error::io(m, e))?;
            let manifest: RunManifest = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", m.display())))?;
            let mut cfg = manifest.config;
            cfg.run.seeds = Some(manifest.seeds);
            (cfg, Some(manifest.datasets))
        }
        (None, None) => return Err(Error::Config("either --config or --manifest is required".into())),
    };
    if let Some(o) = &args.out {
        cfg.output.dir = o.clone();
    }
    if let Some(s) = &args.strategies {
        cfg.run.strategies = s.clone();
    }
    if let Some(s) = &args.seeds {
        cfg.run.seeds = Some(s.clone());
    }
    if let Some(k) = args.k {
        cfg.run.k = k;
    }
    if let Some(t) = args.iterations {
        cfg.run.iterations = t;
    }
    if args.no_timings {
        cfg.output.timings = false;
    }
    cfg.validate()?;
    let strategies = cfg.strategies()?;
    let seeds = cfg.seeds()?;
    cfg.run.seeds = Some(seeds.clone());

    let datasets = dataset_hashes(&cfg)?;
    if let Some(rec) = recorded {
        for (now, then) in datasets.iter().zip(&rec) {
            if now != then {
                return Err(Error::InvalidRecord {
                    id: now.path.display().to_string(),
                    message: "file changed since the manifest was written".into(),
                });
            }
        }
    }

    let out = cfg.output.dir.clone();
    let mut outputs: Vec<PathBuf> = vec![
        "results.csv".into(),
        "aggregate.csv".into(),
        "aggregate.json".into(),
        "diagnostics.csv".into(),
        "summary.txt".into(),
    ];
    let grid = jobs(&strategies, &seeds);
    let single: Vec<Strategy> = if cfg.run.single_shot {
        strategies.iter().copied().filter(|s| s.is_cold_start()).collect()
    } else {
        Vec::new()
    };
    for j in &grid {
        outputs.push(Path::new(RUNS_DIR).join(format!("{}-seed{}.json", j.strategy, j.seed)));
    }
    for s in &single {
        for seed in &seeds {
            outputs.push(Path::new(RUNS_DIR).join(format!("{s}-single-seed{seed}.json")));
        }
    }
    let manifest = RunManifest {
        tool: "coldstart-al".into(),
        version: VERSION.into(),
        config: cfg.clone(),
        datasets,
        seeds: seeds.clone(),
        outputs,
    };
    write_file(&out.join(MANIFEST_FILE), &to_json(&manifest)?)?;

    let exp = config::build_experiment(&cfg)?;
    log::info!(
        "{} sentences, {} training, {} test, {} classes",
        exp.corpus.len(),
        exp.pool.train_size(),
        exp.pool.test().len(),
        exp.corpus.num_classes()
    );
    let base = cfg.run_config(strategies[0]);
    let mut results = run_grid(&exp, &base, &grid, cfg.run.diagnostics)?;
    if !single.is_empty() {
        use rayon::prelude::*;
        let k_total = cfg.run.k * cfg.run.iterations;
        let extra: Vec<AlRunResult> = single
            .iter()
            .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&(s, seed)| {
                let rc = cfg.run_config(s);
                let ceiling = if cfg.run.diagnostics {
                    Some(train_full_ceiling(&exp, &rc, seed)?)
                } else {
                    None
                };
                run_single_shot(&exp, &rc, k_total, seed, ceiling.as_ref())
            })
            .collect::<Result<_>>()?;
        results.extend(extra);
    }
    if !cfg.output.timings {
        for r in &mut results {
            for rec in &mut r.records {
                rec.select_ms = 0.0;
                rec.train_ms = 0.0;
            }
        }
    }
    for r in &results {
        if r.exhausted {
            log::warn!("{} seed {}: pool exhausted after {} iterations", r.label(), r.seed, r.records.len());
        }
        write_file(&out.join(RUNS_DIR).join(run_file_name(r)), &to_json(r)?)?;
    }
    write_file(&out.join("results.csv"), &results_csv(&results, cfg.output.timings))?;
    let summary = write_analysis(&out, &results)?;
    print!("{summary}");
    Ok(())
}

/// Aggregate CSV/JSON, diagnostics CSV and the summary table. Returns the table.
fn write_analysis(dir: &Path, results: &[AlRunResult]) -> Result<String> {
    let rows = aggregate(results);
    write_file(&dir.join("aggregate.csv"), &aggregate_csv(&rows))?;
    write_file(&dir.join("aggregate.json"), &to_json(&rows)?)?;
    write_file(&dir.join("diagnostics.csv"), &diagnostics_csv(results))?;
    let table = summary_table(&rows);
    write_file(&dir.join("summary.txt"), &table)?;
    Ok(table)
}

/// Per-run JSON documents of a results directory, ordered by strategy label
/// then seed.
pub fn load_results(dir: &Path) -> Result<Vec<AlRunResult>> {
    let runs = dir.join(RUNS_DIR);
    let mut results = Vec::new();
    if runs.is_dir() {
        for entry in fs::read_dir(&runs).map_err(|e| Error::io(&runs, e))? {
            let path = entry.map_err(|e| Error::io(&runs, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let r: AlRunResult = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
            results.push(r);
        }
    }
    if results.is_empty() {
        return Err(Error::NoResults(runs));
    }
    results.sort_by(|a, b| a.label().cmp(&b.label()).then(a.seed.cmp(&b.seed)));
    Ok(results)
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let results = load_results(&args.results)?;
    let table = write_analysis(&args.results, &results)?;
    print!("{table}");
    Ok(())
}

pub fn cmd_sample(args: &SampleArgs) -> Result<()> {
    let strategy: Strategy = args.strategy.parse()?;
    if !strategy.is_cold_start() {
        return Err(Error::WarmStartStrategy(strategy.to_string()));
    }
    let seed = seed_or_env(args.seed)?;
    let corpus = args.data.corpus()?;
    let all: Vec<usize> = (0..corpus.len()).collect();
    let provider = args.provider.provider();
    let opts = ClusterOptions {
        init: args.init,
        max_iter: args.max_iter,
    };
    let surprisal = if strategy == Strategy::Alps {
        let nll = config::provide_nll(&provider, &corpus, &all)?;
        Some(SurprisalTable::build(
            &nll,
            args.token_fraction,
            derive_seed_str(seed, "surprisal"),
        )?)
    } else {
        None
    };
    let features = config::provide_features(&provider, &corpus)?;
    let inputs = SelectionInputs {
        unlabeled: &all,
        surprisal: surprisal.as_ref(),
        features: &features,
        model: None,
        alps_clustering: opts,
        emb_clustering: opts,
    };
    let picks = select(strategy, &inputs, args.k, seed)?;
    let mut out = String::new();
    for i in picks {
        out.push_str(corpus.id(i));
        out.push('\n');
    }
    write_file(&args.out, &out)
}

pub fn cmd_dump_embeddings(args: &DumpArgs) -> Result<()> {
    let seed = seed_or_env(args.seed)?;
    let corpus = args.data.corpus()?;
    let all: Vec<usize> = (0..corpus.len()).collect();
    let provider = args.provider.provider();
    let surprisal: Vec<Vec<f64>> = {
        let nll = config::provide_nll(&provider, &corpus, &all)?;
        let table = SurprisalTable::build(&nll, args.token_fraction, derive_seed_str(seed, "surprisal"))?;
        all.iter().map(|&i| table.get(i).values.clone()).collect()
    };
    let features: Vec<Vec<f64>> = {
        let t = config::provide_features(&provider, &corpus)?;
        all.iter().map(|&i| t.get(i).values.clone()).collect()
    };
    let chosen = match args.kind {
        EmbeddingKind::Surprisal => &surprisal,
        EmbeddingKind::Feature => &features,
    };
    write_sentence_embeddings(
        &args.out,
        all.iter().map(|&i| (corpus.id(i), chosen[i].as_slice())),
    )?;
    if let Some(k) = args.cluster_k {
        let report = cluster_report(&surprisal, &features, k, seed, ClusterOptions::default())?;
        let json = to_json(&report)?;
        match &args.report {
            Some(p) => write_file(p, &json)?,
            None => {
                println!(
                    "silhouette surprisal {:.6} feature {:.6}",
                    report.surprisal_silhouette, report.feature_silhouette
                );
            }
        }
    }
    Ok(())
}

pub fn cmd_train_lm(args: &TrainLmArgs) -> Result<()> {
    let corpus = args.data.corpus()?;
    let provider = ProviderConfig {
        order: args.order,
        alpha: args.alpha,
        lambda: args.lambda,
        ..ProviderConfig::default()
    };
    LmConfig {
        order: args.order,
        alpha: args.alpha,
        lambda: args.lambda,
    }
    .validate()?;
    let all: Vec<usize> = (0..corpus.len()).collect();
    let nll = config::provide_nll(&provider, &corpus, &all)?;
    write_nll_jsonl(&args.out, nll.vectors())
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let tc = generate_topic_corpus(&TopicCorpusConfig {
        seed: args.seed,
        train_size: args.train_size,
        test_size: args.test_size,
        ..Default::default()
    })?;
    for (name, ds) in [("train.jsonl", &tc.train), ("test.jsonl", &tc.test)] {
        let mut out = String::new();
        for r in &ds.records {
            let label = r.label.map(|y| ds.label_names[y].as_str());
            let line = serde_json::json!({ "id": r.id, "text": r.text, "label": label });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        write_file(&args.out_dir.join(name), &out)?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => {
            let threads = a.jobs.unwrap_or(0);
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
            pool.install(|| cmd_simulate(a))
        }
        Command::Sample(a) => cmd_sample(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::DumpEmbeddings(a) => cmd_dump_embeddings(a),
        Command::TrainLm(a) => cmd_train_lm(a),
        Command::Generate(a) => cmd_generate(a),
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                1
            } else {
                2
            }
        }
    }
}
