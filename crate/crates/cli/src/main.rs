//! `emoretrofit`: retrofit, evaluate and select emotion-aware embeddings.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure, 4 no configuration survived selection.

mod job;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use emoretrofit::checkpoint::Checkpoint;
use emoretrofit::corpus::{load_corpus, Corpus, Split};
use emoretrofit::encoder::HeadKind;
use emoretrofit::eval::{
    evaluate_checkpoint, few_shot_knn, few_shot_subsample, knn_classify, neighbour_table, EmbeddingSet,
};
use emoretrofit::sampler::SamplerKind;
use emoretrofit::selection::{select_best, sweep, Manifest, SweepOptions, MANIFEST_FILE};
use emoretrofit::synthetic::generate;
use emoretrofit::trainer::train;
use emoretrofit::ENGINE_VERSION;
use serde::Serialize;

use job::JobConfig;

/// A bad invocation or configuration file (exit code 1).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Parser)]
#[command(name = "emoretrofit", version, about = "Emotion-aware retrofitting of frozen sentence embeddings")]
struct Cli {
    /// Job configuration file (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a retrofitting encoder; writes checkpoint.json and history.jsonl.
    Retrofit(RetrofitArgs),
    /// Clustering, retrieval and drift metrics for a checkpoint or the raw base.
    Eval(EvalArgs),
    /// KNN micro-F1 with the train split as reference set.
    Knn(KnnArgs),
    /// KNN micro-F1 from label-preserving few-shot subsamples.
    Fewshot(FewshotArgs),
    /// Train and evaluate every grid combination, resuming where possible.
    Sweep(SweepArgs),
    /// Pick the winning configuration from a sweep manifest.
    Select(SelectArgs),
    /// Write a Gaussian-mixture corpus.
    GenSynthetic(SyntheticArgs),
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Cross-batch memory size.
    #[arg(long)]
    memory: Option<usize>,
    /// identity, linear or mlp.
    #[arg(long)]
    head: Option<String>,
    /// m_per_class or stratified.
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
}

#[derive(Args)]
struct RetrofitArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct EvalFlags {
    #[arg(long)]
    corpus: PathBuf,
    /// Checkpoint path, or `none` for the raw base embeddings.
    #[arg(long)]
    checkpoint: String,
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: EvalFlags,
    /// Report file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write each query's ten nearest neighbours to this file.
    #[arg(long)]
    emit_neighbors: Option<PathBuf>,
    #[arg(long)]
    kmeans_seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Args)]
struct KnnArgs {
    #[command(flatten)]
    common: EvalFlags,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FewshotArgs {
    #[command(flatten)]
    common: EvalFlags,
    /// Comma-separated subsample sizes.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the subsampled corpora and the report.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct SelectArgs {
    /// Sweep output directory (or the manifest file itself).
    #[arg(long)]
    sweep: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    /// Spread of class centres.
    #[arg(long)]
    between: Option<f64>,
    /// Spread of points around their centre.
    #[arg(long)]
    within: Option<f64>,
    #[arg(long)]
    signal_dims: Option<usize>,
    #[arg(long)]
    nuisance: Option<f64>,
    #[arg(long)]
    offset: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse<T: std::str::FromStr<Err = emoretrofit::Error>>(s: &str) -> Result<T> {
    s.parse::<T>().map_err(|e| UsageError(e.to_string()).into())
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(UsageError(format!("unknown split {other:?}")).into()),
    }
}

impl TrainFlags {
    fn apply(&self, job: &mut JobConfig) -> Result<()> {
        let t = &mut job.train;
        if let Some(s) = self.seed {
            *t = t.clone().with_seed(s);
        }
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.lr {
            t.lr = v;
        }
        if let Some(v) = self.lambda {
            t.loss.lambda = v;
        }
        if let Some(v) = self.temperature {
            t.loss.temperature = v;
        }
        if let Some(v) = self.memory {
            t.loss.memory = v;
        }
        if let Some(v) = &self.head {
            t.model.head = parse::<HeadKind>(v)?;
        }
        if let Some(v) = &self.sampler {
            t.sampler.kind = parse::<SamplerKind>(v)?;
        }
        if let Some(v) = self.batch_size {
            t.sampler.batch_size = v;
        }
        if self.max_steps.is_some() {
            t.max_steps = self.max_steps;
        }
        t.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(())
    }
}

/// Every artifact is wrapped with the engine version and resolved job.
#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    engine_version: &'a str,
    job: &'a serde_json::Value,
    #[serde(flatten)]
    body: T,
}

fn write_artifact<T: Serialize>(path: Option<&Path>, job: &serde_json::Value, body: T) -> Result<()> {
    let doc = Artifact {
        engine_version: ENGINE_VERSION,
        job,
        body,
    };
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load_checkpoint(arg: &str) -> Result<Option<Checkpoint>> {
    if arg.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    Ok(Some(Checkpoint::load(Path::new(arg))?))
}

fn load_for_eval(flags: &EvalFlags) -> Result<(Corpus, Option<Checkpoint>, Split)> {
    let split = parse_split(&flags.split)?;
    let ckpt = load_checkpoint(&flags.checkpoint)?;
    let corpus = load_corpus(&flags.corpus, ckpt.as_ref().map(|c| c.d_base))?;
    Ok((corpus, ckpt, split))
}

fn cmd_retrofit(mut job: JobConfig, args: &RetrofitArgs) -> Result<()> {
    args.train.apply(&mut job)?;
    let value = job.to_value("retrofit")?;
    let corpus = load_corpus(&args.corpus, None)?;
    let (mut ckpt, history) = train(&corpus, &job.train)?;
    ckpt.job = Some(value.clone());
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    ckpt.save(&args.out.join("checkpoint.json"))?;
    history.save(&args.out.join("history.jsonl"), Some(&value))?;
    let s = history.summary();
    log::info!(
        "trained {} steps over {} epochs, best epoch {:?}",
        s.steps,
        s.epochs,
        s.best_epoch
    );
    Ok(())
}

fn cmd_eval(mut job: JobConfig, args: &EvalArgs) -> Result<()> {
    if let Some(s) = args.kmeans_seed {
        job.eval.kmeans.seed = s;
    }
    if let Some(r) = args.restarts {
        job.eval.kmeans.restarts = r;
    }
    let value = job.to_value("eval")?;
    let (corpus, ckpt, split) = load_for_eval(&args.common)?;
    let report = evaluate_checkpoint(ckpt.as_ref(), &corpus, split, &job.eval)?;
    write_artifact(args.out.as_deref(), &value, serde_json::json!({ "report": report }))?;
    if let Some(path) = &args.emit_neighbors {
        let model = ckpt.as_ref().map(Checkpoint::model).transpose()?;
        let set = EmbeddingSet::encoded(&corpus, &corpus.indices_in(split), model.as_ref())?;
        let rows = neighbour_table(&set, &corpus, 10);
        write_artifact(Some(path), &value, serde_json::json!({ "neighbours": rows }))?;
    }
    Ok(())
}

fn cmd_knn(mut job: JobConfig, args: &KnnArgs) -> Result<()> {
    if let Some(k) = args.k {
        job.eval.knn_k = k;
    }
    let value = job.to_value("knn")?;
    let (corpus, ckpt, split) = load_for_eval(&args.common)?;
    let model = ckpt.as_ref().map(Checkpoint::model).transpose()?;
    let train = EmbeddingSet::encoded(&corpus, &corpus.indices_in(Split::Train), model.as_ref())?;
    let test = EmbeddingSet::encoded(&corpus, &corpus.indices_in(split), model.as_ref())?;
    let out = knn_classify(&train.vectors, &train.labels, &test.vectors, &test.labels, job.eval.knn_k)?;
    let body = serde_json::json!({
        "checkpoint": args.common.checkpoint,
        "split": split,
        "k": job.eval.knn_k,
        "n": test.len(),
        "knn_micro_f1": out.micro_f1,
    });
    write_artifact(args.out.as_deref(), &value, body)
}

fn cmd_fewshot(mut job: JobConfig, args: &FewshotArgs) -> Result<()> {
    if let Some(s) = &args.sizes {
        job.fewshot.sizes = s.clone();
    }
    if let Some(k) = args.k {
        job.fewshot.k = k;
    }
    if let Some(s) = args.seed {
        job.fewshot.seed = s;
    }
    if job.fewshot.sizes.is_empty() {
        return Err(UsageError("no few-shot sizes given".into()).into());
    }
    let value = job.to_value("fewshot")?;
    let (corpus, ckpt, split) = load_for_eval(&args.common)?;
    let model = ckpt.as_ref().map(Checkpoint::model).transpose()?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let f = &job.fewshot;
    for &size in &f.sizes {
        let shot = few_shot_subsample(&corpus, size, f.seed)?.with_meta(value.clone());
        shot.save(&args.out.join(format!("fewshot_{size}.jsonl")))?;
    }
    let rows = few_shot_knn(model.as_ref(), &corpus, &f.sizes, f.k, split, f.seed)?;
    for r in &rows {
        log::info!("size {:>5}: knn micro-F1 {:.4}", r.size, r.knn_micro_f1);
    }
    let body = serde_json::json!({
        "checkpoint": args.common.checkpoint,
        "split": split,
        "rows": rows,
    });
    write_artifact(Some(&args.out.join("fewshot_report.json")), &value, body)
}

fn cmd_sweep(mut job: JobConfig, args: &SweepArgs) -> Result<()> {
    args.train.apply(&mut job)?;
    job.grid.validate().map_err(|e| UsageError(e.to_string()))?;
    let value = job.to_value("sweep")?;
    let corpus = load_corpus(&args.corpus, None)?;
    let opts = SweepOptions {
        eval: job.eval.clone(),
        split: Split::Val,
        out_dir: args.out.clone(),
        job: Some(value),
    };
    let outcome = sweep(&corpus, &job.grid, &job.train, &opts)?;
    log::info!(
        "{} runs complete, {} trained now, {} failed",
        outcome.results.len(),
        outcome.trained,
        outcome.failed
    );
    Ok(())
}

fn cmd_select(mut job: JobConfig, args: &SelectArgs) -> Result<()> {
    if let Some(t) = args.threshold {
        job.delta_threshold = t;
    }
    let value = job.to_value("select")?;
    let path = if args.sweep.is_dir() {
        args.sweep.join(MANIFEST_FILE)
    } else {
        args.sweep.clone()
    };
    let manifest = Manifest::load(&path)?;
    let results = manifest.completed();
    let winner = select_best(&results, job.delta_threshold)?;
    let best = results
        .iter()
        .find(|r| r.config_id == winner)
        .expect("winner comes from the result list");
    let body = serde_json::json!({
        "winner": winner,
        "delta_threshold": job.delta_threshold,
        "checkpoint": best.checkpoint,
        "report": best.report,
    });
    write_artifact(args.out.as_deref(), &value, body)
}

fn cmd_gen_synthetic(mut job: JobConfig, args: &SyntheticArgs) -> Result<()> {
    let s = &mut job.synthetic;
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { s.$f = v; } )* };
    }
    set!(classes, dim, per_class, between, within, nuisance, offset, seed);
    if args.signal_dims.is_some() {
        s.signal_dims = args.signal_dims;
    }
    let value = job.to_value("gen-synthetic")?;
    let corpus = generate(&job.synthetic)
        .map_err(|e| UsageError(e.to_string()))?
        .with_meta(serde_json::json!({ "engine_version": ENGINE_VERSION, "job": value }));
    corpus.save(&args.out)?;
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("EMORETROFIT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| UsageError(format!("EMORETROFIT_THREADS must be a positive integer, got {raw:?}")))?;
    if n == 0 {
        return Err(UsageError("EMORETROFIT_THREADS must be at least 1".into()).into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring thread pool")?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let job = JobConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Retrofit(a) => cmd_retrofit(job, a),
        Command::Eval(a) => cmd_eval(job, a),
        Command::Knn(a) => cmd_knn(job, a),
        Command::Fewshot(a) => cmd_fewshot(job, a),
        Command::Sweep(a) => cmd_sweep(job, a),
        Command::Select(a) => cmd_select(job, a),
        Command::GenSynthetic(a) => cmd_gen_synthetic(job, a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<emoretrofit::Error>() {
        Some(e) => e.exit_code() as u8,
        None => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
