//! The `oca` command-line front end.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error.
//! Every successful run prints a JSON run manifest on stdout.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::eval::{mixture_eval, run_tasks, ConfigEcho, TaskFile, Truth, TruthRecord};
use crate::labelset::LabelSet;
use crate::mixture::{score_image, BoxScoreSet};
use crate::oceb::{load_store, save_store};
use crate::scoring::{score_record, Method, ScoreConfig, ScoredRecord};
use crate::synth::{generate, generate_boxes, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

/// Environment variable that overrides `--threads`.
pub const THREADS_ENV: &str = "OCA_THREADS";

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (OCEB format v1)");

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn data(e: impl ToString) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "oca", version = VERSION, about = "Zero-shot one-class OOD scoring and evaluation")]
pub struct Cli {
    /// Worker threads (default: available parallelism; OCA_THREADS overrides).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score image embeddings against a label set.
    Score(ScoreArgs),
    /// Compute AUROC for split-vs-split tasks over a scores file.
    Eval(EvalArgs),
    /// Per-box scoring and mixture scores for detector outputs.
    Mixture(MixtureArgs),
    /// Generate a synthetic embedding and/or box corpus.
    Synth(SynthArgs),
    /// Check a label-config file.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub texts: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Comma-separated methods, or `all`.
    #[arg(long)]
    pub methods: String,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a method-by-task AUROC grid next to the report (`.md`).
    #[arg(long)]
    pub markdown: bool,
    /// Label set used for scoring, echoed into the report.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Temperature used for scoring, echoed into the report.
    #[arg(long)]
    pub temperature: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MixtureArgs {
    #[arg(long)]
    pub boxes: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Scoring method (comma-separated list accepted).
    #[arg(long)]
    pub method: String,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth NDJSON; enables the pure-vs-mixed report.
    #[arg(long, requires = "report")]
    pub truth: Option<PathBuf>,
    #[arg(long, requires = "truth")]
    pub report: Option<PathBuf>,
    #[arg(long, requires = "report")]
    pub markdown: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub labels: PathBuf,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(manifest) => {
            println!("{manifest}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<usize, CliError> {
    let from_env = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| usage(format!("{THREADS_ENV}={v:?} is not a thread count")))?,
        ),
        Err(_) => None,
    };
    let n = from_env.or(flag).unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    if n == 0 {
        return Err(usage("thread count must be >= 1"));
    }
    Ok(n)
}

pub fn execute(cli: &Cli) -> Result<Value, CliError> {
    let threads = thread_count(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(usage)?;
    let started = Instant::now();
    let (name, config, paths) = pool.install(|| match &cli.command {
        Command::Score(a) => cmd_score(a).map(|(c, p)| ("score", c, p)),
        Command::Eval(a) => cmd_eval(a).map(|(c, p)| ("eval", c, p)),
        Command::Mixture(a) => cmd_mixture(a).map(|(c, p)| ("mixture", c, p)),
        Command::Synth(a) => cmd_synth(a).map(|(c, p)| ("synth", c, p)),
        Command::Validate(a) => cmd_validate(a).map(|(c, p)| ("validate", c, p)),
    })?;
    Ok(json!({
        "subcommand": name,
        "config": config,
        "paths": paths,
        "threads": threads,
        "version": VERSION,
        "wall_time_s": started.elapsed().as_secs_f64(),
    }))
}

type Outcome = Result<(Value, Value), CliError>;

fn read_ndjson<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<(), CliError> {
    let mut buf = String::new();
    for l in lines {
        buf.push_str(&l);
        buf.push('\n');
    }
    write_file(path, &buf)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut f = fs::File::create(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| data(format!("{}: {e}", path.display())))
}

fn load_labels(path: &Path) -> Result<LabelSet, CliError> {
    LabelSet::load(path).map_err(usage)
}

fn score_configs(methods: &str, temperature: f64) -> Result<Vec<ScoreConfig>, CliError> {
    let methods = Method::parse_list(methods).map_err(usage)?;
    if methods.is_empty() {
        return Err(usage("--methods must name at least one method"));
    }
    methods
        .into_iter()
        .map(|m| ScoreConfig::new(m, temperature).map_err(usage))
        .collect()
}

fn method_names(cfgs: &[ScoreConfig]) -> Vec<String> {
    cfgs.iter().map(|c| c.method.to_string()).collect()
}

fn cmd_score(a: &ScoreArgs) -> Outcome {
    let cfgs = score_configs(&a.methods, a.temperature)?;
    let labels = load_labels(&a.labels)?;
    labels
        .check(cfgs.iter().any(|c| c.method.needs_out()))
        .map_err(usage)?;
    let texts = load_store(&a.texts).map_err(data)?;
    let images = load_store(&a.images).map_err(data)?;
    let label_vecs = labels.embed(&texts).map_err(data)?;
    let tags = labels.split_spec().tags();

    let records: Vec<ScoredRecord> = (0..images.len())
        .into_par_iter()
        .map(|i| {
            let meta = &images.records()[i];
            let split = meta
                .split
                .clone()
                .or_else(|| tags.get(&meta.class).map(|t| t.to_string()))
                .unwrap_or_default();
            score_record(&meta.id, &split, &images.vector(i), &label_vecs, &cfgs)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(data)?;
    write_lines(&a.out, records.iter().map(ScoredRecord::to_ndjson_line))?;

    Ok((
        json!({
            "methods": method_names(&cfgs),
            "temperature": a.temperature,
            "labelset": labels.name,
            "images_renormalized": images.renormalized(),
            "texts_renormalized": texts.renormalized(),
            "records": records.len(),
        }),
        json!({"images": a.images, "texts": a.texts, "labels": a.labels, "out": a.out}),
    ))
}

fn cmd_eval(a: &EvalArgs) -> Outcome {
    let tasks_text =
        fs::read_to_string(&a.tasks).map_err(|e| usage(format!("{}: {e}", a.tasks.display())))?;
    let tasks: TaskFile = serde_json::from_str(&tasks_text)
        .map_err(|e| usage(format!("{}: {e}", a.tasks.display())))?;
    if tasks.tasks.is_empty() {
        return Err(usage("task file has no tasks"));
    }
    let labelset = match &a.labels {
        Some(p) => Some(load_labels(p)?.name),
        None => None,
    };
    let records: Vec<ScoredRecord> = read_ndjson(&a.scores)?;
    let echo = ConfigEcho {
        methods: Vec::new(),
        temperature: a.temperature,
        labelset,
    };
    let report = run_tasks(&records, &tasks.tasks, echo).map_err(data)?;
    write_file(&a.out, &report.to_json())?;
    let mut paths = json!({"scores": a.scores, "tasks": a.tasks, "out": a.out});
    if a.markdown {
        let md = a.out.with_extension("md");
        write_file(&md, &report.to_markdown())?;
        paths["markdown"] = json!(md);
    }
    Ok((serde_json::to_value(&report.config).expect("echo"), paths))
}

fn cmd_mixture(a: &MixtureArgs) -> Outcome {
    let cfgs = score_configs(&a.method, a.temperature)?;
    let labels = load_labels(&a.labels)?;
    labels
        .check(cfgs.iter().any(|c| c.method.needs_out()))
        .map_err(usage)?;
    let sets: Vec<BoxScoreSet> = read_ndjson(&a.boxes)?;
    let jobs: Vec<(usize, usize)> = (0..sets.len())
        .flat_map(|i| (0..cfgs.len()).map(move |j| (i, j)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, j)| score_image(&sets[i], &labels, &cfgs[j]))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(data)?;
    write_lines(&a.out, results.iter().map(|r| r.to_ndjson_line()))?;

    let echo = ConfigEcho {
        methods: method_names(&cfgs),
        temperature: Some(a.temperature),
        labelset: Some(labels.name.clone()),
    };
    let mut paths = json!({"boxes": a.boxes, "labels": a.labels, "out": a.out});
    if let (Some(truth_path), Some(report_path)) = (&a.truth, &a.report) {
        let truth: HashMap<String, Truth> = read_ndjson::<TruthRecord>(truth_path)?
            .into_iter()
            .map(|t| (t.image_id, t.truth))
            .collect();
        let report = mixture_eval(&results, &truth, echo.clone()).map_err(data)?;
        write_file(report_path, &report.to_json())?;
        paths["truth"] = json!(truth_path);
        paths["report"] = json!(report_path);
        if a.markdown {
            let md = report_path.with_extension("md");
            write_file(&md, &report.to_markdown())?;
            paths["markdown"] = json!(md);
        }
    }
    Ok((serde_json::to_value(&echo).expect("echo"), paths))
}

fn cmd_synth(a: &SynthArgs) -> Outcome {
    let text =
        fs::read_to_string(&a.config).map_err(|e| usage(format!("{}: {e}", a.config.display())))?;
    let cfg = SynthConfig::from_json(&text).map_err(usage)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| data(format!("{}: {e}", a.out_dir.display())))?;
    let mut written = Vec::new();
    let pretty = |v: &LabelSet| {
        let mut s = serde_json::to_string_pretty(v).expect("labels");
        s.push('\n');
        s
    };
    if !cfg.classes.is_empty() {
        let out = generate(&cfg).map_err(usage)?;
        for (name, store) in [("images.oceb", &out.images), ("texts.oceb", &out.texts)] {
            let p = a.out_dir.join(name);
            save_store(store, &p).map_err(data)?;
            written.push(p);
        }
        let p = a.out_dir.join("labels.json");
        write_file(&p, &pretty(&out.labels))?;
        written.push(p);
    }
    if let Some(b) = &cfg.boxes {
        let (sets, truth) = generate_boxes(&cfg).map_err(usage)?;
        let p = a.out_dir.join("boxes.ndjson");
        write_lines(&p, sets.iter().map(BoxScoreSet::to_ndjson_line))?;
        written.push(p);
        let p = a.out_dir.join("truth.ndjson");
        write_lines(
            &p,
            truth
                .iter()
                .map(|t| serde_json::to_string(t).expect("truth")),
        )?;
        written.push(p);
        let p = a.out_dir.join("box_labels.json");
        write_file(&p, &pretty(&b.labelset(&format!("{}-boxes", cfg.name))))?;
        written.push(p);
    }
    Ok((
        json!({"seed": cfg.seed, "dim": cfg.dim, "classes": cfg.classes.len(), "boxes": cfg.boxes.is_some()}),
        json!({"config": a.config, "written": written}),
    ))
}

fn cmd_validate(a: &ValidateArgs) -> Outcome {
    let labels = load_labels(&a.labels)?;
    let violations = labels.validate();
    if !violations.is_empty() {
        let msg = violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        return Err(usage(format!("{}: {msg}", a.labels.display())));
    }
    let s = labels.split_spec();
    Ok((
        json!({
            "labelset": labels.name,
            "seen_in": s.seen_in.len(),
            "unseen_in": s.unseen_in.len(),
            "seen_out": s.seen_out.len(),
            "unseen_out": s.unseen_out.len(),
            "near_out": s.near_out.len(),
        }),
        json!({"labels": a.labels}),
    ))
}
