//! The `hde` command line: subcommands, config resolution and run manifests.
//!
//! Every run writes `manifest-<command>.json` into its `--out` directory.
//! Failures print a single JSON line `{"error":KIND,"message":TEXT}` on
//! stderr and exit nonzero.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{parse_dataset, read_cache, write_cache, FollowType, PreparedSample};
use crate::error::{Error, Result};
use crate::graph::build_graph;
use crate::scoring::write_predictions;
use crate::synth::{check_sample, frequency_baseline, generate, to_records, SynthConfig, SynthLabel};
use crate::training::{evaluate_checkpoint, train, write_atomic, Ablation, Checkpoint, ModelConfig};

pub const MANIFEST_VERSION: u32 = 1;
/// Prefix of the environment variables that stand in for flags.
pub const ENV_PREFIX: &str = "HDE_";

#[derive(Debug, Parser)]
#[command(name = "hde", version, about = "Multi-hop reading comprehension over heterogeneous document-entity graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tokenize a WikiHop-format dataset and extract mentions into a cache.
    Preprocess(PreprocessArgs),
    /// Train on a cache, keeping the best-dev checkpoint.
    Train(TrainArgs),
    /// Metrics of a checkpoint on a cache.
    Eval(EvalArgs),
    /// JSON-lines predictions of a checkpoint on a cache.
    Predict(EvalArgs),
    /// Train the full model and every single-flag ablation, then tabulate.
    Ablate(TrainArgs),
    /// Generate a synthetic dataset with its follow-type labels.
    GenSynth(GenSynthArgs),
    /// Write one sample's graph as JSON or DOT.
    GraphExport(GraphExportArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory.
    #[arg(long, env = "HDE_OUT")]
    out: PathBuf,
    /// Model config JSON (or a run manifest, whose config is reused).
    #[arg(long, env = "HDE_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "HDE_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long, env = "HDE_EPOCHS")]
    epochs: Option<usize>,
    #[arg(long, env = "HDE_WORKERS")]
    workers: Option<usize>,
    #[arg(long, alias = "no_graph", env = "HDE_NO_GRAPH")]
    no_graph: bool,
    #[arg(long, alias = "tie_edge_types", env = "HDE_TIE_EDGE_TYPES")]
    tie_edge_types: bool,
    #[arg(long, alias = "drop_candidate_scores", env = "HDE_DROP_CANDIDATE_SCORES")]
    drop_candidate_scores: bool,
    #[arg(long, alias = "drop_entity_scores", env = "HDE_DROP_ENTITY_SCORES")]
    drop_entity_scores: bool,
    #[arg(long, alias = "drop_candidate_nodes", env = "HDE_DROP_CANDIDATE_NODES")]
    drop_candidate_nodes: bool,
    #[arg(long, alias = "drop_document_nodes", env = "HDE_DROP_DOCUMENT_NODES")]
    drop_document_nodes: bool,
    #[arg(long, alias = "drop_entity_nodes", env = "HDE_DROP_ENTITY_NODES")]
    drop_entity_nodes: bool,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[command(flatten)]
    common: Common,
    /// WikiHop-format JSON array.
    #[arg(long)]
    input: PathBuf,
    /// Optional JSON array of `{id, follow_type}` labels.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, env = "HDE_WORKERS")]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct GenSynthArgs {
    #[command(flatten)]
    common: Common,
    /// Synthetic-data config JSON; flags below override it.
    #[arg(long)]
    synth_config: Option<PathBuf>,
    #[arg(long)]
    hops: Option<usize>,
    #[arg(long)]
    num_samples: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GraphFormat {
    Json,
    Dot,
}

#[derive(Debug, Args)]
struct GraphExportArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: PathBuf,
    /// Sample id; the first sample when omitted.
    #[arg(long)]
    sample: Option<String>,
    #[arg(long, value_enum, default_value = "json")]
    format: GraphFormat,
}

/// What was run, with what, and how long it took.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub command: String,
    pub argv: Vec<String>,
    /// Fully resolved config, every default written out.
    pub config: Value,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub seed: u64,
    pub build: String,
    pub timings: BTreeMap<String, f64>,
}

/// Identifies the binary: package version, profile and parallel feature.
pub fn build_id() -> String {
    format!(
        "{} {} ({}, {})",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        if cfg!(debug_assertions) { "debug" } else { "release" },
        if cfg!(feature = "parallel") { "parallel" } else { "sequential" }
    )
}

struct Run {
    command: &'static str,
    argv: Vec<String>,
    started: Instant,
    inputs: BTreeMap<String, PathBuf>,
    outputs: BTreeMap<String, PathBuf>,
    timings: BTreeMap<String, f64>,
}

impl Run {
    fn input(&mut self, key: &str, path: &Path) {
        self.inputs.insert(key.into(), path.to_path_buf());
    }

    fn output(&mut self, key: &str, path: &Path) {
        self.outputs.insert(key.into(), path.to_path_buf());
    }

    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let r = f()?;
        self.timings.insert(phase.into(), t.elapsed().as_secs_f64());
        Ok(r)
    }

    fn finish(mut self, out: &Path, config: Value, seed: u64) -> Result<()> {
        let path = out.join(format!("manifest-{}.json", self.command));
        self.timings.insert("total".into(), self.started.elapsed().as_secs_f64());
        let manifest = RunManifest {
            manifest_version: MANIFEST_VERSION,
            command: self.command.into(),
            argv: self.argv,
            config,
            inputs: self.inputs,
            outputs: self.outputs,
            seed,
            build: build_id(),
            timings: self.timings,
        };
        write_atomic(&path, &serde_json::to_vec_pretty(&manifest)?)
    }
}

fn with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| with_path(path, e))
}

fn load_cache(path: &Path) -> Result<Vec<PreparedSample>> {
    let f = fs::File::open(path).map_err(|e| with_path(path, e))?;
    read_cache(BufReader::new(f), &path.display().to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Reads a config file, unwrapping the `config` field of a run manifest.
fn load_json_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let v: Value = serde_json::from_slice(&read_file(path)?)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let v = match v {
        Value::Object(ref m) if m.contains_key("manifest_version") => m.get("config").cloned().unwrap_or(Value::Null),
        v => v,
    };
    serde_json::from_value(v).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn model_config(common: &Common, o: Option<&Overrides>) -> Result<ModelConfig> {
    let mut c = match &common.config {
        Some(p) => load_json_config(p)?,
        None => ModelConfig::default(),
    };
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(o) = o {
        if let Some(e) = o.epochs {
            c.epochs = e;
        }
        if let Some(w) = o.workers {
            c.workers = w;
        }
        // Flags only switch ablations on; the config file can too.
        c.no_graph |= o.no_graph;
        c.tie_edge_types |= o.tie_edge_types;
        c.drop_candidate_scores |= o.drop_candidate_scores;
        c.drop_entity_scores |= o.drop_entity_scores;
        c.drop_candidate_nodes |= o.drop_candidate_nodes;
        c.drop_document_nodes |= o.drop_document_nodes;
        c.drop_entity_nodes |= o.drop_entity_nodes;
    }
    c.validate()?;
    Ok(c)
}

#[derive(Deserialize)]
struct FollowLabel {
    id: String,
    follow_type: FollowType,
}

fn preprocess(a: PreprocessArgs, mut run: Run) -> Result<()> {
    let config = model_config(&a.common, None)?;
    run.input("dataset", &a.input);
    let raw = read_file(&a.input)?;
    let samples = run.time("parse", || parse_dataset(&raw))?;
    let mut labels = BTreeMap::new();
    if let Some(p) = &a.labels {
        run.input("labels", p);
        let list: Vec<FollowLabel> = serde_json::from_slice(&read_file(p)?)
            .map_err(|e| Error::Invalid(format!("{}: {e}", p.display())))?;
        labels.extend(list.into_iter().map(|l| (l.id, l.follow_type)));
    }
    let prepared: Vec<PreparedSample> = run.time("mentions", || {
        Ok(samples
            .into_iter()
            .map(|s| {
                let follow = labels.get(&s.id).copied();
                PreparedSample::new(s, config.max_doc_len, follow)
            })
            .collect())
    })?;
    let path = a.common.out.join("cache.jsonl");
    let mut buf = Vec::new();
    write_cache(&mut buf, &prepared)?;
    write_atomic(&path, &buf)?;
    run.output("cache", &path);
    log::info!("{} samples -> {}", prepared.len(), path.display());
    run.finish(&a.common.out, serde_json::to_value(&config)?, config.seed)
}

fn train_cmd(a: TrainArgs, mut run: Run) -> Result<()> {
    let config = model_config(&a.common, Some(&a.overrides))?;
    run.input("train", &a.train);
    run.input("dev", &a.dev);
    let train_set = load_cache(&a.train)?;
    let dev_set = load_cache(&a.dev)?;
    let outcome = run.time("train", || train(&config, &train_set, &dev_set))?;
    let eval = run.time("eval", || evaluate_checkpoint(&outcome.checkpoint, &dev_set))?;
    let out = &a.common.out;
    let ckpt = out.join("checkpoint.bin");
    outcome.checkpoint.save(&ckpt)?;
    run.output("checkpoint", &ckpt);
    let metrics = out.join("metrics.json");
    write_json(&metrics, &eval.metrics)?;
    run.output("metrics", &metrics);
    let history = out.join("history.json");
    write_json(&history, &outcome.history)?;
    run.output("history", &history);
    println!(
        "best epoch {} dev accuracy {:.4}",
        outcome.checkpoint.epoch, outcome.checkpoint.dev_accuracy
    );
    run.finish(out, serde_json::to_value(&config)?, config.seed)
}

fn load_checkpoint(a: &EvalArgs, run: &mut Run) -> Result<(Checkpoint, Vec<PreparedSample>)> {
    run.input("checkpoint", &a.checkpoint);
    run.input("data", &a.data);
    let mut ckpt = Checkpoint::load(&a.checkpoint)?;
    if let Some(w) = a.workers {
        ckpt.config.workers = w;
    }
    Ok((ckpt, load_cache(&a.data)?))
}

fn eval_cmd(a: EvalArgs, mut run: Run, predict: bool) -> Result<()> {
    let (ckpt, data) = load_checkpoint(&a, &mut run)?;
    let eval = run.time("eval", || evaluate_checkpoint(&ckpt, &data))?;
    let out = &a.common.out;
    if predict {
        let path = out.join("predictions.jsonl");
        let mut buf = Vec::new();
        write_predictions(&mut buf, &eval.predictions)?;
        write_atomic(&path, &buf)?;
        run.output("predictions", &path);
    } else {
        let path = out.join("metrics.json");
        write_json(&path, &eval.metrics)?;
        run.output("metrics", &path);
        println!("accuracy {:.4} over {} samples", eval.metrics.accuracy(), eval.metrics.overall.count);
    }
    let seed = ckpt.config.seed;
    run.finish(out, serde_json::to_value(&ckpt.config)?, seed)
}

/// One row of the ablation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub dev_accuracy: f64,
    /// Accuracy minus the full model's.
    pub delta: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub seconds: f64,
}

fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = String::from("| variant | dev accuracy | delta | best epoch | epochs | seconds |\n|---|---|---|---|---|---|\n");
    for r in rows {
        s += &format!(
            "| {} | {:.4} | {:+.4} | {} | {} | {:.1} |\n",
            r.variant, r.dev_accuracy, r.delta, r.best_epoch, r.epochs_run, r.seconds
        );
    }
    s
}

fn ablate(a: TrainArgs, mut run: Run) -> Result<()> {
    let base = model_config(&a.common, Some(&a.overrides))?;
    if base.ablation() != Ablation::default() {
        return Err(Error::Config("ablate runs every flag itself; start from a config without ablations".into()));
    }
    run.input("train", &a.train);
    run.input("dev", &a.dev);
    let train_set = load_cache(&a.train)?;
    let dev_set = load_cache(&a.dev)?;
    let mut rows: Vec<AblationRow> = Vec::new();
    for (label, flags) in Ablation::suite() {
        let config = base.clone().with_ablation(flags);
        let t = Instant::now();
        log::info!("ablation variant {label}");
        let outcome = train(&config, &train_set, &dev_set)?;
        let seconds = t.elapsed().as_secs_f64();
        run.timings.insert(format!("variant.{label}"), seconds);
        let acc = outcome.checkpoint.dev_accuracy;
        let full = rows.first().map_or(acc, |r| r.dev_accuracy);
        rows.push(AblationRow {
            variant: label.into(),
            dev_accuracy: acc,
            delta: acc - full,
            best_epoch: outcome.checkpoint.epoch,
            epochs_run: outcome.history.len(),
            seconds,
        });
    }
    let out = &a.common.out;
    let json = out.join("ablation.json");
    write_json(&json, &rows)?;
    run.output("ablation", &json);
    let table = ablation_table(&rows);
    let md = out.join("ablation.md");
    write_atomic(&md, table.as_bytes())?;
    run.output("table", &md);
    print!("{table}");
    run.finish(out, serde_json::to_value(&base)?, base.seed)
}

fn gen_synth(a: GenSynthArgs, mut run: Run) -> Result<()> {
    let mut cfg: SynthConfig = match &a.synth_config {
        Some(p) => {
            run.input("synth_config", p);
            load_json_config(p)?
        }
        None => SynthConfig::default(),
    };
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if let Some(h) = a.hops {
        cfg.hops = h;
    }
    if let Some(n) = a.num_samples {
        cfg.num_samples = n;
    }
    let samples = run.time("generate", || generate(&cfg))?;
    for s in &samples {
        check_sample(s)?;
    }
    let out = &a.common.out;
    let dataset = out.join("dataset.json");
    write_json(&dataset, &to_records(&samples))?;
    run.output("dataset", &dataset);
    let labels = out.join("labels.json");
    let list: Vec<SynthLabel> = samples.iter().map(|s| s.label()).collect();
    write_json(&labels, &list)?;
    run.output("labels", &labels);
    println!(
        "{} samples, frequency baseline {:.4}",
        samples.len(),
        frequency_baseline(&samples.iter().map(|s| s.sample.clone()).collect::<Vec<_>>())
    );
    run.finish(out, serde_json::to_value(&cfg)?, cfg.seed)
}

fn graph_export(a: GraphExportArgs, mut run: Run) -> Result<()> {
    run.input("data", &a.data);
    let data = load_cache(&a.data)?;
    let p = match &a.sample {
        Some(id) => data
            .iter()
            .find(|p| &p.sample.id == id)
            .ok_or_else(|| Error::Invalid(format!("no sample with id {id:?}")))?,
        None => data.first().ok_or_else(|| Error::Invalid("cache holds no samples".into()))?,
    };
    let g = build_graph(&p.sample, &p.mentions)?;
    let (name, text) = match a.format {
        GraphFormat::Json => ("graph.json", g.to_json()?),
        GraphFormat::Dot => ("graph.dot", g.to_dot()),
    };
    let path = a.common.out.join(name);
    write_atomic(&path, text.as_bytes())?;
    run.output("graph", &path);
    let config = serde_json::json!({ "sample": p.sample.id, "format": name });
    run.finish(&a.common.out, config, a.common.seed.unwrap_or(0))
}

fn dispatch(cli: Cli, argv: Vec<String>) -> Result<()> {
    let run = |command| Run {
        command,
        argv: argv.clone(),
        started: Instant::now(),
        inputs: BTreeMap::new(),
        outputs: BTreeMap::new(),
        timings: BTreeMap::new(),
    };
    match cli.command {
        Command::Preprocess(a) => preprocess(a, run("preprocess")),
        Command::Train(a) => train_cmd(a, run("train")),
        Command::Eval(a) => eval_cmd(a, run("eval"), false),
        Command::Predict(a) => eval_cmd(a, run("predict"), true),
        Command::Ablate(a) => ablate(a, run("ablate")),
        Command::GenSynth(a) => gen_synth(a, run("gen-synth")),
        Command::GraphExport(a) => graph_export(a, run("graph-export")),
    }
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return 2;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("HDE_LOG", "info")).try_init();
    let argv = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli, argv) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            0
        }
        Err(e) => {
            let mut err = BufWriter::new(std::io::stderr());
            let _ = writeln!(err, "{}", error_line(e.kind(), &e.to_string()));
            1
        }
    }
}
