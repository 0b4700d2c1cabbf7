//! The `strforge` command line.
//!
//! Every subcommand writes its outputs and a `manifest.json` run summary
//! under `--out`. Exit codes: 0 success, 2 usage error, 3 data error,
//! 4 numeric failure.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::evalkit::{self, Manifest};
use crate::pipeline::{self, ClipMode, Model, PipelineConfig, Sample, TrainRecipe};
use crate::tps::{generate_grid, TpsSolver};
use crate::tradeoff::{self, Axis, ResultsFixture};

#[derive(Parser, Debug, Serialize)]
#[command(name = "strforge", version, about = "Four-stage scene text recognition toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
pub enum Command {
    /// Train a pipeline on manifests or on generated strings.
    Train(TrainArgs),
    /// Score a checkpoint or a prediction file against manifests.
    Eval(EvalArgs),
    /// Report shapes, parameters and FLOPs of a pipeline.
    Describe(DescribeArgs),
    /// Filter benchmark subsets and scan for train/eval duplicates.
    Audit(AuditArgs),
    /// Pareto frontiers and module means over a results table.
    Frontier(FrontierArgs),
    /// Render a synthetic labeled dataset.
    Synthgen(SynthArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct ModelArgs {
    /// Trans-Feat-Seq-Pred string or preset name (CRNN, RARE, GRCNN, R2AM, Rosetta, STAR-Net, FAN).
    #[arg(long, default_value = "None-VGG-None-CTC")]
    pub pipeline: String,
    /// Channel scale in (0, 1].
    #[arg(long, default_value_t = 0.125)]
    pub scale: f64,
    /// TPS fiducial count.
    #[arg(long, default_value_t = 20)]
    pub fiducials: usize,
    /// Attention decoding limit.
    #[arg(long, default_value_t = 25)]
    pub max_len: usize,
}

impl ModelArgs {
    fn config(&self, seed: u64) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::parse(&self.pipeline)?.with_scale(self.scale).with_seed(seed);
        cfg.fiducials = self.fiducials;
        cfg.max_len = self.max_len;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
pub enum ClipArg {
    Global,
    PerParam,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Training manifest (JSON lines); generated strings when absent.
    #[arg(long)]
    pub train_manifest: Option<PathBuf>,
    /// Validation manifest; generated strings when absent.
    #[arg(long)]
    pub val_manifest: Option<PathBuf>,
    /// Generated training samples.
    #[arg(long, default_value_t = 2000)]
    pub synth_train: usize,
    /// Generated validation samples.
    #[arg(long, default_value_t = 200)]
    pub synth_val: usize,
    /// Longest generated label.
    #[arg(long, default_value_t = 5)]
    pub synth_max_len: usize,
    #[arg(long, default_value_t = 0.95)]
    pub rho: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lr: f64,
    /// Gradient clipping magnitude.
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    #[arg(long, value_enum, default_value_t = ClipArg::Global)]
    pub clip_mode: ClipArg,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 3000)]
    pub iters: usize,
    #[arg(long, default_value_t = 200)]
    pub val_every: usize,
    /// Fraction of the training set in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub fraction: f64,
    /// Train one model per listed fraction and write sweep.csv.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Vec<f64>,
    /// Start from this checkpoint.
    #[arg(long)]
    pub init_from: Option<PathBuf>,
    /// With --init-from: passes over the training set instead of --iters.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Stop once validation accuracy reaches this percentage.
    #[arg(long)]
    pub stop_at: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long, required_unless_present = "predictions")]
    pub checkpoint: Option<PathBuf>,
    /// JSON lines of {"image", "prediction"} instead of running a model.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Evaluation manifests.
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    /// Subset variants, e.g. ic03=867, ic13=857, ic15=1811.
    #[arg(long, value_delimiter = ',')]
    pub subset: Vec<String>,
    /// Exclusion lists per dataset, e.g. ic15=excluded.jsonl.
    #[arg(long, value_delimiter = ',')]
    pub exclusion: Vec<String>,
    /// Timed repetitions over the first batch (0 disables timing).
    #[arg(long, default_value_t = 0)]
    pub timing_reps: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct DescribeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Also write the identity warp grid for the base fiducials.
    #[arg(long)]
    pub tps: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct AuditArgs {
    /// Training manifest scanned for duplicates.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Evaluation manifest.
    #[arg(long)]
    pub eval: PathBuf,
    /// Dataset to filter, e.g. IC03.
    #[arg(long, requires = "variant")]
    pub dataset: Option<String>,
    /// Subset variant, e.g. 867.
    #[arg(long)]
    pub variant: Option<usize>,
    /// Exclusion list for the 860 and 1811 variants.
    #[arg(long)]
    pub exclusion: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct FrontierArgs {
    /// Results table CSV; the bundled table when absent.
    #[arg(long)]
    pub results: Option<PathBuf>,
    /// Cost axes: time, params, flops.
    #[arg(long, value_delimiter = ',', default_value = "time,params")]
    pub axis: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Worker count from `STRFORGE_THREADS`, else the available cores.
pub fn worker_threads() -> usize {
    std::env::var("STRFORGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Numeric(_) | Error::Degenerate(_) => 4,
        _ => 3,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n").map_err(|e| Error::io(path, e))
}

fn load_set(path: &Path) -> Result<Vec<Sample>> {
    let m = Manifest::read(path)?;
    pipeline::load_samples(&m, path.parent().unwrap_or(Path::new(".")))
}

fn key_values(items: &[String]) -> Result<HashMap<String, String>> {
    items
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.to_ascii_uppercase(), v.to_string()))
                .ok_or_else(|| Error::Config(format!("expected dataset=value, got '{s}'")))
        })
        .collect()
}

fn cmd_train(a: &TrainArgs) -> Result<serde_json::Value> {
    let recipe = TrainRecipe {
        rho: a.rho,
        eps: a.eps,
        lr: a.lr,
        clip: a.clip,
        clip_mode: match a.clip_mode {
            ClipArg::Global => ClipMode::GlobalNorm,
            ClipArg::PerParam => ClipMode::PerParameter,
        },
        batch_size: a.batch,
        iterations: a.iters,
        val_every: a.val_every,
        fraction: a.fraction,
        stop_at: a.stop_at,
        seed: a.seed,
    };
    recipe.validate()?;
    let train_set = match &a.train_manifest {
        Some(p) => load_set(p)?,
        None => pipeline::synth_toydata(a.synth_train, a.synth_max_len, a.seed.wrapping_mul(2).wrapping_add(1))?,
    };
    let val_set = match &a.val_manifest {
        Some(p) => load_set(p)?,
        None => pipeline::synth_toydata(a.synth_val, a.synth_max_len, a.seed.wrapping_mul(2).wrapping_add(2))?,
    };
    if !a.sweep.is_empty() {
        let cfg = a.model.config(a.seed)?;
        let rows = pipeline::fraction_sweep(&cfg, &recipe, &train_set, &val_set, &a.sweep)?;
        pipeline::write_sweep(&a.out.join("sweep.csv"), &rows)?;
        return Ok(json!({ "sweep": rows }));
    }
    let mut model = match &a.init_from {
        Some(p) => Model::<f32>::load(p)?.0,
        None => Model::<f32>::new(&a.model.config(a.seed)?)?,
    };
    let out = match (&a.init_from, a.epochs) {
        (Some(_), Some(epochs)) => pipeline::fine_tune(&mut model, &recipe, &train_set, &val_set, epochs)?,
        _ => pipeline::train(&mut model, &recipe, &train_set, &val_set)?,
    };
    let meta = json!({ "recipe": recipe, "best_step": out.best_step, "best_accuracy": out.best_accuracy });
    model.save(&a.out.join("last.ckpt"), meta.clone())?;
    model.store = out.best;
    model.save(&a.out.join("best.ckpt"), meta)?;
    pipeline::write_log(&a.out.join("train_log.csv"), &out.log)?;
    Ok(json!({
        "pipeline": model.cfg.combo.to_string(),
        "params": model.num_params(),
        "steps_run": out.steps_run,
        "best_step": out.best_step,
        "best_accuracy": out.best_accuracy,
    }))
}

fn cmd_eval(a: &EvalArgs) -> Result<serde_json::Value> {
    let subsets = key_values(&a.subset)?;
    let exclusions = key_values(&a.exclusion)?;
    let mut entries = Vec::new();
    let mut samples = Vec::new();
    let mut filters = Vec::new();
    for path in &a.manifest {
        let m = Manifest::read(path)?;
        let datasets: Vec<String> = {
            let mut d: Vec<String> = m.entries.iter().map(|e| e.dataset.clone()).collect();
            d.sort();
            d.dedup();
            d
        };
        for d in datasets {
            let variant = subsets
                .get(&d.to_ascii_uppercase())
                .map(|v| v.parse::<usize>().map_err(|_| Error::Config(format!("bad variant '{v}' for {d}"))))
                .transpose()?
                .or_else(|| evalkit::UNIFIED.iter().find(|u| u.0 == d && ["IC03", "IC13", "IC15"].contains(&u.0)).map(|u| u.1));
            let excl = exclusions.get(&d.to_ascii_uppercase()).map(|p| Manifest::read(Path::new(p))).transpose()?;
            let (kept, report) = evalkit::filter_benchmark(&m, &d, variant, excl.as_ref())?;
            filters.push(report);
            if a.checkpoint.is_some() && a.predictions.is_none() {
                samples.extend(pipeline::load_samples(&kept, path.parent().unwrap_or(Path::new(".")))?);
            }
            entries.extend(kept.entries);
        }
    }
    let manifest = Manifest::new(entries)?;
    let (name, preds, model) = match (&a.predictions, &a.checkpoint) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let mut preds = HashMap::new();
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let v: serde_json::Value = serde_json::from_str(line)?;
                let (Some(img), Some(pred)) = (v["image"].as_str(), v["prediction"].as_str()) else {
                    return Err(Error::Data(format!("{} line {}: needs image and prediction", p.display(), i + 1)));
                };
                preds.insert(img.to_string(), pred.to_string());
            }
            ("predictions".to_string(), preds, None)
        }
        (None, Some(ck)) => {
            let (model, _) = Model::<f32>::load(ck)?;
            let out = pipeline::predict_parallel(&model, &samples, a.batch, worker_threads())?;
            let preds = manifest.entries.iter().map(|e| e.image.clone()).zip(out).collect();
            (model.cfg.combo.to_string(), preds, Some(model))
        }
        (None, None) => return Err(Error::Config("either --checkpoint or --predictions is required".into())),
    };
    let mut record = evalkit::unified_eval(&name, &manifest, &preds)?;
    if let Some(model) = &model {
        record.params_m = Some(model.num_params() as f64 / 1e6);
        record.flops_g = Some(pipeline::StageGraphs::new(&model.cfg)?.flops()? as f64 / 1e9);
        if a.timing_reps > 0 && !samples.is_empty() {
            let batch = &samples[..samples.len().min(a.batch)];
            let t = evalkit::timing_probe(batch.len(), a.timing_reps, || pipeline::predict_all(model, batch, a.batch).map(|_| ()))?;
            record.time_ms = Some(t.ms_per_image);
        }
    }
    let mut lines = String::new();
    for e in &manifest.entries {
        lines += &(serde_json::to_string(&json!({ "image": e.image, "prediction": preds[&e.image], "label": e.label }))? + "\n");
    }
    std::fs::write(a.out.join("predictions.jsonl"), lines).map_err(|e| Error::io(a.out.join("predictions.jsonl"), e))?;
    evalkit::EvalRecord::write_csv(std::slice::from_ref(&record), &a.out.join("eval.csv"))?;
    let summary = json!({ "record": record, "filters": filters });
    write_json(&a.out.join("eval.json"), &summary)?;
    Ok(summary)
}

fn cmd_describe(a: &DescribeArgs) -> Result<serde_json::Value> {
    let cfg = a.model.config(0)?;
    let report = pipeline::describe(&cfg)?;
    write_json(&a.out.join("describe.json"), &report)?;
    println!(
        "{}  params {:.2}M  flops {:.2}G",
        cfg.combo,
        report["params_m"].as_f64().unwrap_or(0.0),
        report["flops"].as_f64().unwrap_or(0.0) / 1e9
    );
    if a.tps {
        let solver = TpsSolver::new(cfg.fiducials)?;
        let t = solver.solve_t(solver.base())?;
        let grid = generate_grid(&t, pipeline::INPUT_SHAPE[1], pipeline::INPUT_SHAPE[2]);
        write_json(&a.out.join("tps_grid.json"), &grid.to_json())?;
    }
    Ok(json!({ "pipeline": cfg.combo.to_string(), "params": report["params"], "flops": report["flops"] }))
}

fn cmd_audit(a: &AuditArgs) -> Result<serde_json::Value> {
    let eval = Manifest::read(&a.eval)?;
    let mut summary = serde_json::Map::new();
    if let Some(d) = &a.dataset {
        let excl = a.exclusion.as_deref().map(Manifest::read).transpose()?;
        let (kept, report) = evalkit::filter_benchmark(&eval, d, a.variant, excl.as_ref())?;
        kept.write(&a.out.join("filtered.jsonl"))?;
        println!("{d}/{}: {} -> {}", a.variant.unwrap_or_default(), report.before, report.after);
        summary.insert("filter".into(), serde_json::to_value(report)?);
    }
    if let Some(t) = &a.train {
        let train = Manifest::read(t)?;
        let (report, cleaned) = evalkit::dedupe_scan(&train, &eval);
        cleaned.write(&a.out.join("train_deduped.jsonl"))?;
        println!("duplicates: {} scenes, {} word boxes", report.scenes, report.word_boxes);
        summary.insert("duplicates".into(), serde_json::to_value(report)?);
    }
    let summary = serde_json::Value::Object(summary);
    write_json(&a.out.join("audit.json"), &summary)?;
    Ok(summary)
}

fn cmd_frontier(a: &FrontierArgs) -> Result<serde_json::Value> {
    let fixture = match &a.results {
        Some(p) => ResultsFixture::read(p)?,
        None => ResultsFixture::bundled(),
    };
    let axes: Vec<Axis> = a.axis.iter().map(|s| Axis::parse(s)).collect::<Result<_>>()?;
    let files = tradeoff::emit_report(&fixture, &axes, &a.out)?;
    for &axis in &axes {
        let chain: Vec<String> = tradeoff::frontier_chain(&fixture.points(axis)).iter().map(|p| format!("#{}", p.id)).collect();
        println!("{}: {}", axis.label(), chain.join(" -> "));
    }
    Ok(json!({ "files": files }))
}

fn cmd_synthgen(a: &SynthArgs) -> Result<serde_json::Value> {
    let samples = pipeline::synth_toydata(a.n, a.max_len, a.seed)?;
    let m = pipeline::write_samples(&samples, &a.out.join("images"), "synth")?;
    let relocated = Manifest::new(
        m.entries
            .into_iter()
            .map(|mut e| {
                e.image = format!("images/{}", e.image);
                e
            })
            .collect(),
    )?;
    relocated.write(&a.out.join("manifest.jsonl"))?;
    Ok(json!({ "samples": a.n }))
}

impl Command {
    fn out(&self) -> &Path {
        match self {
            Command::Train(a) => &a.out,
            Command::Eval(a) => &a.out,
            Command::Describe(a) => &a.out,
            Command::Audit(a) => &a.out,
            Command::Frontier(a) => &a.out,
            Command::Synthgen(a) => &a.out,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Describe(_) => "describe",
            Command::Audit(_) => "audit",
            Command::Frontier(_) => "frontier",
            Command::Synthgen(_) => "synthgen",
        }
    }
}

/// Runs a parsed command, writing `manifest.json` on success.
pub fn run(cli: &Cli) -> Result<serde_json::Value> {
    let start = Instant::now();
    let out = cli.command.out();
    create_dir(out)?;
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Describe(a) => cmd_describe(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Frontier(a) => cmd_frontier(a),
        Command::Synthgen(a) => cmd_synthgen(a),
    }?;
    let manifest = json!({
        "command": cli.command.name(),
        "flags": cli.command,
        "versions": { "strforge": env!("CARGO_PKG_VERSION") },
        "environment": evalkit::environment(),
        "result": result,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("usage error"));
            return 2;
        }
    };
    match run(&cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            exit_code(&e)
        }
    }
}
