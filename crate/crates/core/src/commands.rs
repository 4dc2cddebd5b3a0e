//! The `kbc` command-line surface.
//!
//! Each artifact-producing command writes a run manifest next to its
//! output: the resolved flags, SHA-256 digests of inputs and outputs, the
//! seed, the tool version and the wall-clock duration. `kbc replay` re-runs
//! a manifest and checks that every output digest is reproduced.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::dataset::{read_test_set, read_type_list, write_test_set, DatasetConfig};
use crate::embedding::{train_embedding, EmbeddingConfig};
use crate::error::{KbcError, Result};
use crate::eval::{evaluate, parse_metrics, rank_predictions, GakNorm, Metric, Prediction};
use crate::features::{build_entity_features, parse_blocks, parse_num, read_text_corpus, BlockKind, FeatureMatrix, FeatureSources, FeaturizerConfig};
use crate::io_util::{create, file_digest, fmt_g9, open};
use crate::kb::{read_facts, write_facts, EntityId, Kb, TypeId, Vocab, VocabMode};
use crate::linear::{train_linear_adagrad, train_linear_dcd};
use crate::model::{Algorithm, AnyModel, ModelHeader, TrainConfig};
use crate::pipeline::prepare_dataset;
use crate::sampler::{NegativeConfig, NegativeSampler};
use crate::synth::{generate, write_corpus, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "kbc", version, about = "Entity type completion: datasets, features, training and ranking metrics")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic snapshot pair with description and wikipedia texts.
    Synth(SynthArgs),
    /// Select the top types and build training positives and the labeled test set.
    BuildDataset(BuildDatasetArgs),
    /// Build entity feature vectors from known types and texts.
    Featurize(FeaturizeArgs),
    /// Train a linear or embedding model.
    Train(TrainArgs),
    /// Score candidate pairs with a trained model.
    Predict(PredictArgs),
    /// Compute MAP, GAP and G@k for a predictions file.
    Evaluate(EvaluateArgs),
    /// Re-run a command from its manifest and verify the output digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10_000)]
    pub entities: usize,
    #[arg(long, default_value_t = 50)]
    pub types: usize,
    #[arg(long, default_value_t = 100)]
    pub clusters: usize,
    #[arg(long, default_value_t = 0.2)]
    pub missing_rate: f64,
    #[arg(long, default_value_t = 0.7)]
    pub keep_rate: f64,
    #[arg(long, env = "KBC_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct BuildDatasetArgs {
    #[arg(long)]
    pub train_snapshot: PathBuf,
    #[arg(long)]
    pub test_snapshot: PathBuf,
    #[arg(long, default_value_t = 70)]
    pub num_types: usize,
    /// Sampling rate of rule-(b) negatives.
    #[arg(long, default_value_t = 0.1)]
    pub extra_negative_fraction: f64,
    #[arg(long, env = "KBC_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FeaturizeArgs {
    /// Output directory of `build-dataset`.
    #[arg(long)]
    pub dataset_dir: PathBuf,
    #[arg(long)]
    pub description: Option<PathBuf>,
    #[arg(long)]
    pub wikipedia: Option<PathBuf>,
    /// Blocks to build, e.g. `T+D+W` or `D,W`.
    #[arg(long, default_value = "T+D+W")]
    pub blocks: String,
    #[arg(long, default_value_t = 2)]
    pub min_df: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset_dir: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// linear.adagrad, linear.dcd or embedding.
    #[arg(long, default_value = "linear.adagrad")]
    pub algo: String,
    /// Negative entities per positive.
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    /// Negative types per positive.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, env = "KBC_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Loss weight (linear.dcd only).
    #[arg(long = "C")]
    #[serde(rename = "C")]
    pub c: Option<f64>,
    /// Embedding dimension (embedding only).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Keep the type projection at its initial value (embedding only).
    #[arg(long)]
    pub freeze_type_projection: bool,
    /// Draw negatives once instead of every epoch (Adagrad trainers).
    #[arg(long)]
    pub fixed_negatives: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Candidate pairs, `entity<TAB>type[<TAB>label]`; defaults to the test set of `--dataset-dir`.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub dataset_dir: Option<PathBuf>,
    /// Keep only the top k of the pooled ranking.
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub test_set: PathBuf,
    /// Type list fixing the type tie-break order; defaults to types.txt beside the test set.
    #[arg(long)]
    pub types: Option<PathBuf>,
    #[arg(long, default_value = "map,gap,g@1000,g@10000")]
    pub metrics: String,
    /// window (positives inside the top k) or global (min(k, all positives)).
    #[arg(long, default_value = "window")]
    pub gak_norm: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Record of one artifact-producing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub flags: Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub version: String,
    pub duration_ms: u64,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(open(path)?)?)
    }
}

/// Inputs and outputs a command touched, before timing is attached.
struct Artifacts {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    manifest_path: PathBuf,
}

fn digests(paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    paths.iter().map(|p| Ok((p.display().to_string(), file_digest(p)?))).collect()
}

fn sibling_manifest(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let raw: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let expanded = match expand_config(raw) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("kbc: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(expanded) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("kbc: {e}");
            e.exit_code()
        }
    }
}

/// Replaces `--config FILE` by the flags of the flat JSON object in FILE.
/// Flags given on the command line win over the file.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut out = Vec::with_capacity(args.len());
    let mut config = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            let path = it.next().ok_or_else(|| KbcError::Usage("--config needs a file".into()))?;
            config = Some(PathBuf::from(path));
        } else if let Some(path) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(path));
        } else {
            out.push(a);
        }
    }
    let Some(path) = config else {
        return Ok(out);
    };
    let value: Value = serde_json::from_reader(open(&path)?)?;
    let Value::Object(map) = value else {
        return Err(KbcError::Usage(format!("{}: config must be a flat JSON object", path.display())));
    };
    let present: Vec<String> = out
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    out.extend(flags_to_args(&map, &present)?.into_iter().map(OsString::from));
    Ok(out)
}

/// Turns `{"flag": value}` into `--flag value` pairs, skipping `skip`.
fn flags_to_args(map: &Map<String, Value>, skip: &[String]) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (key, value) in map {
        let flag = key.trim_start_matches("--").replace('_', "-");
        if skip.contains(&flag) {
            continue;
        }
        match value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => out.push(format!("--{flag}")),
            Value::Number(n) => out.extend([format!("--{flag}"), n.to_string()]),
            Value::String(s) => out.extend([format!("--{flag}"), s.clone()]),
            _ => return Err(KbcError::Usage(format!("flag `{key}` must be a scalar"))),
        }
    }
    Ok(out)
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(KbcError::Usage("--threads must be at least 1".into()));
        }
        // fails only if a pool already exists, as in repeated in-process runs
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Command::Replay(args) = &cli.command {
        return replay(&args.manifest);
    }
    let start = Instant::now();
    let (name, flags, seed) = describe(&cli.command)?;
    let artifacts = execute(&cli.command)?;
    let manifest = RunManifest {
        command: name.to_string(),
        flags,
        inputs: digests(&artifacts.inputs)?,
        outputs: digests(&artifacts.outputs)?,
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        duration_ms: start.elapsed().as_millis() as u64,
    };
    let path = &artifacts.manifest_path;
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| KbcError::io(path, e))
}

fn describe(cmd: &Command) -> Result<(&'static str, Value, Option<u64>)> {
    Ok(match cmd {
        Command::Synth(a) => ("synth", serde_json::to_value(a)?, Some(a.seed)),
        Command::BuildDataset(a) => ("build-dataset", serde_json::to_value(a)?, Some(a.seed)),
        Command::Featurize(a) => ("featurize", serde_json::to_value(a)?, None),
        Command::Train(a) => ("train", serde_json::to_value(a)?, Some(a.seed)),
        Command::Predict(a) => ("predict", serde_json::to_value(a)?, None),
        Command::Evaluate(a) => ("evaluate", serde_json::to_value(a)?, None),
        Command::Replay(a) => ("replay", serde_json::to_value(a)?, None),
    })
}

fn execute(cmd: &Command) -> Result<Artifacts> {
    match cmd {
        Command::Synth(a) => cmd_synth(a),
        Command::BuildDataset(a) => cmd_build_dataset(a),
        Command::Featurize(a) => cmd_featurize(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Replay(_) => Err(KbcError::Usage("a manifest cannot replay another replay".into())),
    }
}

/// Re-runs the command recorded in `path` and compares output digests.
pub fn replay(path: &Path) -> Result<()> {
    let manifest = RunManifest::read(path)?;
    let Value::Object(flags) = &manifest.flags else {
        return Err(KbcError::Input(format!("{}: flags must be an object", path.display())));
    };
    let mut argv = vec!["kbc".to_string(), manifest.command.clone()];
    argv.extend(flags_to_args(flags, &[])?);
    let cli = Cli::try_parse_from(&argv).map_err(|e| KbcError::Input(format!("manifest flags do not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(KbcError::Input("a manifest cannot replay another replay".into()));
    }
    let artifacts = execute(&cli.command)?;
    let outputs = digests(&artifacts.outputs)?;
    let differing: Vec<&String> = manifest
        .outputs
        .iter()
        .filter(|(p, d)| outputs.get(*p) != Some(*d))
        .map(|(p, _)| p)
        .collect();
    if !differing.is_empty() {
        return Err(KbcError::Input(format!("replay produced different outputs: {differing:?}")));
    }
    println!("replayed {}: {} outputs match", manifest.command, outputs.len());
    Ok(())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> KbcError + '_ {
    move |e| KbcError::io(path, e)
}

fn finish(mut w: impl Write, path: &Path) -> Result<()> {
    w.flush().map_err(io_err(path))
}

/// Rounds every float in a JSON value to 9 significant digits.
fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                let r: f64 = fmt_g9(x).parse().expect("g9 output parses");
                *v = json!(r);
            }
        }
        Value::Array(xs) => xs.iter_mut().for_each(round_json),
        Value::Object(m) => m.values_mut().for_each(round_json),
        _ => {}
    }
}

fn write_json(path: &Path, mut v: Value) -> Result<()> {
    round_json(&mut v);
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &v)?;
    writeln!(w).map_err(io_err(path))?;
    finish(w, path)
}

fn cmd_synth(a: &SynthArgs) -> Result<Artifacts> {
    let cfg = SynthConfig {
        entities: a.entities,
        types: a.types,
        clusters: a.clusters,
        missing_rate: a.missing_rate,
        keep_rate: a.keep_rate,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let corpus = generate(&cfg)?;
    let files = write_corpus(&corpus, &a.out_dir)?;
    Ok(Artifacts {
        inputs: vec![],
        outputs: files.all().iter().map(|p| p.to_path_buf()).collect(),
        manifest_path: a.out_dir.join("synth.manifest.json"),
    })
}

/// File names inside a dataset directory.
pub struct DatasetFiles {
    pub train_positives: PathBuf,
    pub test_set: PathBuf,
    pub stats: PathBuf,
    pub types: PathBuf,
}

impl DatasetFiles {
    pub fn in_dir(dir: &Path) -> Self {
        DatasetFiles {
            train_positives: dir.join("train_positives.tsv"),
            test_set: dir.join("test_set.tsv"),
            stats: dir.join("stats.json"),
            types: dir.join("types.txt"),
        }
    }
}

fn cmd_build_dataset(a: &BuildDatasetArgs) -> Result<Artifacts> {
    let cfg = DatasetConfig {
        num_types: a.num_types,
        extra_negative_fraction: a.extra_negative_fraction,
        seed: a.seed,
    };
    cfg.validate()?;
    let read = |p: &Path| read_facts(open(p)?, &p.display().to_string());
    let data = prepare_dataset(&read(&a.train_snapshot)?, &read(&a.test_snapshot)?, &cfg)?;
    let (kb, symbols) = (&data.kb, data.type_symbols());

    let files = DatasetFiles::in_dir(&a.out_dir);
    let mut w = create(&files.types)?;
    for s in &symbols {
        writeln!(w, "{s}").map_err(io_err(&files.types))?;
    }
    finish(w, &files.types)?;
    let mut w = create(&files.train_positives)?;
    write_facts(&mut w, kb, &data.train_positives).map_err(io_err(&files.train_positives))?;
    finish(w, &files.train_positives)?;
    let mut w = create(&files.test_set)?;
    write_test_set(&mut w, kb, &data.test_set).map_err(io_err(&files.test_set))?;
    finish(w, &files.test_set)?;
    write_json(&files.stats, serde_json::to_value(&data.stats)?)?;

    Ok(Artifacts {
        inputs: vec![a.train_snapshot.clone(), a.test_snapshot.clone()],
        outputs: vec![files.types, files.train_positives, files.test_set, files.stats],
        manifest_path: a.out_dir.join("build-dataset.manifest.json"),
    })
}

fn pair_refs(pairs: &[(String, String)]) -> impl Iterator<Item = (&str, &str)> {
    pairs.iter().map(|(e, t)| (e.as_str(), t.as_str()))
}

fn read_types(path: &Path) -> Result<Vocab<TypeId>> {
    let symbols = read_type_list(open(path)?, &path.display().to_string())?;
    let vocab: Vocab<TypeId> = Vocab::from_symbols(&symbols);
    if vocab.len() != symbols.len() {
        return Err(KbcError::Input(format!("{}: repeated type symbol", path.display())));
    }
    Ok(vocab)
}

fn read_docs(path: &Option<PathBuf>, needed: bool, block: BlockKind) -> Result<Vec<(String, String)>> {
    match path {
        Some(p) => read_text_corpus(open(p)?, &p.display().to_string()),
        None if needed => Err(KbcError::Usage(format!("block {block} needs its text file"))),
        None => Ok(Vec::new()),
    }
}

fn cmd_featurize(a: &FeaturizeArgs) -> Result<Artifacts> {
    let blocks = parse_blocks(&a.blocks)?;
    let cfg = FeaturizerConfig { blocks, min_df: a.min_df };
    let files = DatasetFiles::in_dir(&a.dataset_dir);
    let types = read_types(&files.types)?;
    let k = types.len();
    let positives = read_facts(open(&files.train_positives)?, &files.train_positives.display().to_string())?;
    let test_set = read_test_set(open(&files.test_set)?, &files.test_set.display().to_string())?;
    let description = read_docs(&a.description, cfg.blocks.contains(&BlockKind::Description), BlockKind::Description)?;
    let wikipedia = read_docs(&a.wikipedia, cfg.blocks.contains(&BlockKind::Wikipedia), BlockKind::Wikipedia)?;

    let mut kb = Kb::with_vocabs(Vocab::new(), types);
    let train = kb.load_snapshot("train", pair_refs(&positives), VocabMode::Extend)?;
    if kb.types.len() != k {
        return Err(KbcError::Input("training positives use a type missing from types.txt".into()));
    }
    for (e, _, _) in &test_set {
        kb.entities.intern(e);
    }
    let mut intern = |docs: &[(String, String)]| -> Vec<(EntityId, String)> {
        docs.iter().map(|(e, text)| (kb.entities.intern(e), text.clone())).collect()
    };
    let description = intern(&description);
    let wikipedia = intern(&wikipedia);
    let type_ids: Vec<TypeId> = kb.types.ids().collect();
    let sources = FeatureSources {
        train: &train,
        types: &type_ids,
        description: &description,
        wikipedia: &wikipedia,
    };
    let features = build_entity_features(kb.entities.len(), &sources, &cfg)?;
    let mut w = create(&a.out)?;
    features.write(&mut w, &kb.entities).map_err(io_err(&a.out))?;
    finish(w, &a.out)?;

    let mut inputs = vec![files.types, files.train_positives, files.test_set];
    inputs.extend(a.description.iter().cloned());
    inputs.extend(a.wikipedia.iter().cloned());
    Ok(Artifacts {
        inputs,
        outputs: vec![a.out.clone()],
        manifest_path: sibling_manifest(&a.out),
    })
}

fn read_features(path: &Path) -> Result<(FeatureMatrix, Vocab<EntityId>)> {
    let mut entities = Vocab::new();
    let m = FeatureMatrix::read(open(path)?, &path.display().to_string(), &mut entities, VocabMode::Extend)?;
    Ok((m, entities))
}

/// Resolves the training configuration and rejects flags the algorithm does not use.
pub fn train_config(a: &TrainArgs) -> Result<(Algorithm, TrainConfig, EmbeddingConfig)> {
    let algo: Algorithm = a.algo.parse()?;
    let neg = NegativeConfig::new(a.m, a.n, a.seed)?;
    let reject = |flag: &str, given: bool| -> Result<()> {
        if given {
            Err(KbcError::Usage(format!("--{flag} does not apply to {algo}")))
        } else {
            Ok(())
        }
    };
    let mut cfg = match algo {
        Algorithm::LinearDcd => {
            reject("epochs", a.epochs.is_some())?;
            reject("lr", a.lr.is_some())?;
            reject("fixed-negatives", a.fixed_negatives)?;
            TrainConfig::dcd(neg, a.c.unwrap_or(1.0))
        }
        _ => {
            reject("C", a.c.is_some())?;
            let mut cfg = TrainConfig::adagrad(neg);
            cfg.resample_negatives = !a.fixed_negatives;
            cfg
        }
    };
    if algo != Algorithm::Embedding {
        reject("dim", a.dim.is_some())?;
        reject("freeze-type-projection", a.freeze_type_projection)?;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = a.lr {
        cfg.learning_rate = lr;
    }
    cfg.validate_for(algo)?;
    let emb = EmbeddingConfig {
        dim: a.dim.unwrap_or(EmbeddingConfig::default().dim),
        freeze_type_projection: a.freeze_type_projection,
    };
    Ok((algo, cfg, emb))
}

fn cmd_train(a: &TrainArgs) -> Result<Artifacts> {
    let (algo, cfg, emb) = train_config(a)?;
    let files = DatasetFiles::in_dir(&a.dataset_dir);
    let types = read_types(&files.types)?;
    let type_symbols = types.symbols().to_vec();
    let (features, entities) = read_features(&a.features)?;
    let positives = read_facts(open(&files.train_positives)?, &files.train_positives.display().to_string())?;
    let kb = {
        let mut kb = Kb::with_vocabs(entities, types);
        let train = kb.load_snapshot("train", pair_refs(&positives), VocabMode::Reject)?;
        (kb, train)
    };
    let (kb, train) = kb;
    let k = kb.types.len();
    let sampler = NegativeSampler::new(&train, features.num_rows(), kb.types.ids().collect(), cfg.negatives)?;
    let model = match algo {
        Algorithm::LinearAdagrad => AnyModel::Linear(train_linear_adagrad(train.facts(), &features, &sampler, k, &cfg)?),
        Algorithm::LinearDcd => AnyModel::Linear(train_linear_dcd(train.facts(), &features, &sampler, k, &cfg)?.0),
        Algorithm::Embedding => AnyModel::Embedding(train_embedding(train.facts(), &features, &sampler, k, &cfg, &emb)?),
    };
    let header = ModelHeader {
        algorithm: algo,
        space: features.space().clone(),
        types: type_symbols,
        config: cfg,
        embedding_dim: (algo == Algorithm::Embedding).then_some(emb.dim),
    };
    let mut w = create(&a.out)?;
    model.write(&mut w, &header).map_err(io_err(&a.out))?;
    finish(w, &a.out)?;
    Ok(Artifacts {
        inputs: vec![files.types, files.train_positives, a.features.clone()],
        outputs: vec![a.out.clone()],
        manifest_path: sibling_manifest(&a.out),
    })
}

/// Reads `entity<TAB>type` rows with an optional third column.
fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let name = path.display().to_string();
    let text = crate::io_util::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&f.len()) {
            return Err(KbcError::parse(&name, n + 1, "expected `entity<TAB>type[<TAB>label]`"));
        }
        out.push((f[0].to_string(), f[1].to_string()));
    }
    Ok(out)
}

fn cmd_predict(a: &PredictArgs) -> Result<Artifacts> {
    let pairs_path = match (&a.pairs, &a.dataset_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => DatasetFiles::in_dir(d).test_set,
        (None, None) => return Err(KbcError::Usage("predict needs --pairs or --dataset-dir".into())),
    };
    if a.top_k == Some(0) {
        return Err(KbcError::Usage("--top-k must be at least 1".into()));
    }
    let (model, header) = AnyModel::read(open(&a.model)?, &a.model.display().to_string())?;
    let (features, entities) = read_features(&a.features)?;
    let types: Vocab<TypeId> = Vocab::from_symbols(&header.types);
    let pairs = read_pairs(&pairs_path)?;
    let score = model.scorer(&features)?;
    let mut preds = Vec::with_capacity(pairs.len());
    for (e, t) in &pairs {
        let (entity, type_id) = (entities.require(e)?, types.require(t)?);
        let s = score(entity, type_id);
        if !s.is_finite() {
            return Err(KbcError::Numerical {
                step: 0,
                detail: format!("non-finite score for ({e}, {t})"),
            });
        }
        preds.push(Prediction {
            entity,
            type_id,
            score: s,
            label: false,
        });
    }
    let mut ranked = rank_predictions(&preds)?;
    if let Some(k) = a.top_k {
        ranked.truncate(k);
    }
    let mut w = create(&a.out)?;
    for p in &ranked {
        writeln!(w, "{}\t{}\t{}", entities.symbol(p.entity), types.symbol(p.type_id), fmt_g9(p.score)).map_err(io_err(&a.out))?;
    }
    finish(w, &a.out)?;
    Ok(Artifacts {
        inputs: vec![a.model.clone(), a.features.clone(), pairs_path],
        outputs: vec![a.out.clone()],
        manifest_path: sibling_manifest(&a.out),
    })
}

/// Reads `entity<TAB>type<TAB>score` rows.
pub fn read_predictions(path: &Path) -> Result<Vec<(String, String, f64)>> {
    let name = path.display().to_string();
    let text = crate::io_util::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split('\t').collect::<Vec<_>>().as_slice() {
            [e, t, s] => out.push((e.to_string(), t.to_string(), parse_num::<f64>(s, &name, n + 1)?)),
            _ => return Err(KbcError::parse(&name, n + 1, "expected `entity<TAB>type<TAB>score`")),
        }
    }
    Ok(out)
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<Artifacts> {
    let metrics = parse_metrics(&a.metrics)?;
    let norm: GakNorm = a.gak_norm.parse()?;
    let gold = read_test_set(open(&a.test_set)?, &a.test_set.display().to_string())?;
    let mut entities: Vocab<EntityId> = Vocab::new();
    // ties break by id, so ids follow the dataset's own order: entities as
    // listed in the test set, types as listed in the type file
    let type_file = a
        .types
        .clone()
        .or_else(|| a.test_set.parent().map(|d| d.join("types.txt")).filter(|p| p.is_file()));
    let mut types: Vocab<TypeId> = match &type_file {
        Some(path) => Vocab::from_symbols(&read_type_list(open(path)?, &path.display().to_string())?),
        None => Vocab::new(),
    };
    let mut labels = std::collections::HashMap::with_capacity(gold.len());
    for (e, t, label) in &gold {
        labels.insert((entities.intern(e), types.intern(t)), *label);
    }
    let mut preds = Vec::new();
    let mut offenders = Vec::new();
    for (e, t, score) in read_predictions(&a.predictions)? {
        let key = entities.get(&e).zip(types.get(&t));
        match key.and_then(|k| labels.get(&k).map(|&l| (k, l))) {
            Some(((entity, type_id), label)) => preds.push(Prediction {
                entity,
                type_id,
                score,
                label,
            }),
            None => offenders.push(format!("({e}, {t})")),
        }
    }
    if !offenders.is_empty() {
        let shown: Vec<&str> = offenders.iter().take(10).map(String::as_str).collect();
        return Err(KbcError::Input(format!(
            "{} predictions for pairs not in the test set: {}{}",
            offenders.len(),
            shown.join(", "),
            if offenders.len() > shown.len() { ", ..." } else { "" }
        )));
    }
    let report = evaluate(&preds, &metrics, norm)?;
    let g_at_k: Map<String, Value> = report.g_at_k.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let per_type: Map<String, Value> = report.per_type_ap.iter().map(|(t, v)| (types.symbol(*t).to_string(), json!(v))).collect();
    let requested = |m: Metric| metrics.contains(&m);
    let value = json!({
        "map": report.map.filter(|_| requested(Metric::Map)),
        "gap": report.gap.filter(|_| requested(Metric::Gap)),
        "g_at_k": g_at_k,
        "gak_norm": a.gak_norm,
        "per_type_ap": per_type,
        "counts": serde_json::to_value(&report.counts)?,
    });
    write_json(&a.out, value)?;
    Ok(Artifacts {
        inputs: [a.predictions.clone(), a.test_set.clone()].into_iter().chain(type_file).collect(),
        outputs: vec![a.out.clone()],
        manifest_path: sibling_manifest(&a.out),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(args: &[&str]) -> Vec<OsString> {
        args.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_fills_missing_flags_only() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"m": 3, "n": 0, "algo": "linear.dcd", "fixed_negatives": false, "C": 0.5}"#).unwrap();
        let args = expand_config(os(&["kbc", "train", "--m", "2", "--config", cfg.to_str().unwrap()])).unwrap();
        let args: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(args, vec!["kbc", "train", "--m", "2", "--C", "0.5", "--algo", "linear.dcd", "--n", "0"]);
    }

    #[test]
    fn config_must_be_flat_object() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, "[1, 2]").unwrap();
        assert!(expand_config(os(&["kbc", "--config", cfg.to_str().unwrap()])).is_err());
        std::fs::write(&cfg, r#"{"m": [1]}"#).unwrap();
        assert!(expand_config(os(&["kbc", "--config", cfg.to_str().unwrap()])).is_err());
    }

    fn train_args(extra: &[&str]) -> TrainArgs {
        let mut argv = vec!["kbc", "train", "--dataset-dir", "d", "--features", "f", "--out", "o"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Train(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn flag_combinations() {
        let (algo, cfg, _) = train_config(&train_args(&["--m", "2", "--n", "0"])).unwrap();
        assert_eq!(algo, Algorithm::LinearAdagrad);
        assert_eq!((cfg.negatives.m, cfg.negatives.n, cfg.loss_power), (2, 0, 1));
        assert!(matches!(train_config(&train_args(&["--C", "2"])), Err(KbcError::Usage(_))));
        assert!(matches!(train_config(&train_args(&["--algo", "linear.dcd", "--epochs", "3"])), Err(KbcError::Usage(_))));
        assert!(matches!(train_config(&train_args(&["--dim", "3"])), Err(KbcError::Usage(_))));
        assert!(matches!(train_config(&train_args(&["--m", "0", "--n", "0"])), Err(KbcError::Usage(_))));
        let (_, cfg, _) = train_config(&train_args(&["--algo", "linear.dcd", "--C", "0.25"])).unwrap();
        assert_eq!((cfg.c, cfg.loss_power), (0.25, 2));
        let (_, cfg, emb) = train_config(&train_args(&["--algo", "embedding", "--dim", "8", "--epochs", "0"])).unwrap();
        assert_eq!((emb.dim, cfg.epochs), (8, 0));
    }

    #[test]
    fn flags_round_trip_through_manifest_form() {
        let a = train_args(&["--algo", "linear.dcd", "--C", "0.5", "--m", "2"]);
        let Value::Object(map) = serde_json::to_value(&a).unwrap() else { unreachable!() };
        let mut argv = vec!["kbc".to_string(), "train".to_string()];
        argv.extend(flags_to_args(&map, &[]).unwrap());
        let Command::Train(b) = Cli::try_parse_from(argv).unwrap().command else { unreachable!() };
        assert_eq!(serde_json::to_value(&b).unwrap(), serde_json::to_value(&a).unwrap());
    }

    #[test]
    fn rounding_json_floats() {
        let mut v = json!({"x": 1.0 / 3.0, "n": 3, "xs": [2.0f64.sqrt()]});
        round_json(&mut v);
        assert_eq!(v.to_string(), r#"{"n":3,"x":0.333333333,"xs":[1.41421356]}"#);
    }
}
