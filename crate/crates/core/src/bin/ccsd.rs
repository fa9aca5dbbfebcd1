use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info, warn};
use serde::Serialize;

use ccsd::complex::DimConstraints;
use ccsd::config::RunConfig;
use ccsd::data_io::{build_dataset, read_dataset, write_dataset_string, Checkpoint, DatasetSpec};
use ccsd::lifting::LiftSpec;
use ccsd::metrics::{evaluate, MetricConfig, MetricReport, ReportKey};
use ccsd::nn::gradcheck;
use ccsd::pipeline::EmpiricalNodeDist;
use ccsd::run::{sample_run, summarize, to_complexes, train_run, OutDir};
use ccsd::training::loss_csv;
use ccsd::{CcsdError, Result};

#[derive(Parser)]
#[command(name = "ccsd", version, about = "Score-based diffusion for combinatorial complexes")]
struct Cli {
    /// Directory receiving the artifacts and manifest.json.
    #[arg(long, global = true, env = "CCSD_OUT_DIR", default_value = "ccsd-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as JSON lines, optionally lifted.
    Dataset(DatasetArgs),
    /// Lift the graphs of a JSON-lines dataset.
    Lift(LiftArgs),
    /// Train the three score networks.
    Train(TrainArgs),
    /// Sample complexes from a checkpoint.
    Sample(SampleArgs),
    /// Compare generated and reference complexes.
    Eval(EvalArgs),
    /// Finite-difference gradient checks for every layer and network.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum NameArg {
    #[value(name = "community_small")]
    CommunitySmall,
    #[value(name = "grid_small")]
    GridSmall,
}

#[derive(Clone, Copy, PartialEq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum LiftArg {
    None,
    Path,
    Ring,
}

#[derive(Args, Serialize)]
struct LiftOpts {
    /// Path length for the path lift.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    d_min: usize,
    #[arg(long, default_value_t = 3)]
    d_max: usize,
}

#[derive(Args, Serialize)]
struct DatasetArgs {
    /// Take the dataset section from a run config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    name: Option<NameArg>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, value_enum)]
    lift: Option<LiftArg>,
    #[command(flatten)]
    lift_opts: LiftOpts,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Serialize)]
struct LiftArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    lift: LiftArg,
    #[command(flatten)]
    lift_opts: LiftOpts,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Serialize)]
struct SampleArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Node-count distribution written by `train`; defaults to nodes.json next to the checkpoint.
    #[arg(long)]
    nodes: Option<PathBuf>,
    /// Number of samples; defaults to generation.num_samples.
    #[arg(long)]
    num: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    generated: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    /// Read kernels from the [metrics] section of a run config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset label in the CSV report; defaults to the reference file stem.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, default_value = "ccsd")]
    model: String,
    /// Seed label in the CSV report.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct GradcheckArgs {
    /// Random scalars per check on top of one per parameter tensor.
    #[arg(long, default_value_t = 25)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Exit with status 4 when a check exceeds the tolerance.
    #[arg(long)]
    strict: bool,
}

fn options(args: &impl Serialize) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(args)?)
}

fn lift_spec(lift: LiftArg, opts: &LiftOpts) -> Result<Option<LiftSpec>> {
    let c = DimConstraints::new(opts.d_min, opts.d_max).map_err(|e| CcsdError::Config(e.to_string()))?;
    Ok(match lift {
        LiftArg::None => None,
        LiftArg::Ring => Some(LiftSpec::ring(c)),
        LiftArg::Path => Some(LiftSpec::path(opts.k, None, c)?),
    })
}

fn dataset(out: &Path, args: DatasetArgs) -> Result<()> {
    let (mut spec, mut constraints, cfg) = match &args.config {
        Some(path) => {
            let cfg = RunConfig::load(path, args.seed)?;
            (cfg.dataset.clone(), cfg.complex, Some(cfg))
        }
        None => {
            let seed = args.seed.unwrap_or(0);
            let spec = match args.name {
                Some(NameArg::CommunitySmall) => DatasetSpec::community_small(seed),
                Some(NameArg::GridSmall) => DatasetSpec::grid_small(seed),
                None => return Err(CcsdError::Config("dataset needs --name or --config".into())),
            };
            (spec, DimConstraints::new(3, 3)?, None)
        }
    };
    if cfg.is_some() {
        if let Some(name) = args.name {
            let seed = spec.seed;
            let lift = spec.lift.take();
            spec = match name {
                NameArg::CommunitySmall => DatasetSpec::community_small(seed),
                NameArg::GridSmall => DatasetSpec::grid_small(seed),
            };
            spec.lift = lift;
        }
    }
    if let Some(count) = args.count {
        spec.count = count;
    }
    if let Some(lift) = args.lift {
        spec.lift = lift_spec(lift, &args.lift_opts)?;
        if let Some(l) = &spec.lift {
            constraints = l.constraints;
        }
    }
    spec.validate()?;
    let ccs = build_dataset(&spec, constraints)?;
    let mut dir = OutDir::create(out)?;
    dir.write("dataset.jsonl", write_dataset_string(&ccs)?.as_bytes())?;
    info!("wrote {} complexes", ccs.len());
    dir.finish("dataset", options(&args)?, Some(spec.seed), cfg.as_ref())?;
    Ok(())
}

fn lift(out: &Path, args: LiftArgs) -> Result<()> {
    let spec = lift_spec(args.lift, &args.lift_opts)?
        .ok_or_else(|| CcsdError::Config("lift needs --lift path or --lift ring".into()))?;
    let ccs = read_dataset(&args.input)?;
    let lifted = ccs.iter().map(|cc| spec.relift(cc)).collect::<Result<Vec<_>>>()?;
    let mut dir = OutDir::create(out)?;
    dir.write("lifted.jsonl", write_dataset_string(&lifted)?.as_bytes())?;
    info!("lifted {} complexes", lifted.len());
    dir.finish("lift", options(&args)?, None, None)?;
    Ok(())
}

fn train(out: &Path, args: TrainArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config, args.seed)?;
    let trained = train_run(&cfg, |r| {
        if r.step % 100 == 0 {
            info!("step {} epoch {}: {:.4} {:.4} {:.4}", r.step, r.epoch, r.loss_x, r.loss_a, r.loss_f);
        }
    })?;
    let mut dir = OutDir::create(out)?;
    dir.write("model.ckpt", &trained.checkpoint.to_bytes()?)?;
    dir.write("loss.csv", loss_csv(&trained.outcome.curve).as_bytes())?;
    dir.write("nodes.json", serde_json::to_string_pretty(&trained.nodes)?.as_bytes())?;
    dir.write("test.jsonl", write_dataset_string(&trained.test_set())?.as_bytes())?;
    info!("best test loss at epoch {}", trained.outcome.best_epoch);
    dir.finish("train", options(&args)?, Some(cfg.seed), Some(&cfg))?;
    Ok(())
}

fn sample(out: &Path, args: SampleArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config, args.seed)?;
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let nodes_path = args
        .nodes
        .clone()
        .unwrap_or_else(|| args.checkpoint.parent().unwrap_or(Path::new(".")).join("nodes.json"));
    let text = std::fs::read_to_string(&nodes_path).map_err(|e| CcsdError::io(&nodes_path, e))?;
    let nodes: EmpiricalNodeDist = serde_json::from_str(&text)?;
    let num = args.num.unwrap_or(cfg.generation.num_samples);
    let samples = to_complexes(&sample_run(&cfg, &ckpt, &nodes, num)?)?;
    let summary = summarize(&samples);
    if summary.valid < summary.num_samples {
        warn!("{} of {} samples failed validation", summary.num_samples - summary.valid, summary.num_samples);
    }
    let mut dir = OutDir::create(out)?;
    dir.write("samples.jsonl", write_dataset_string(&samples)?.as_bytes())?;
    dir.write("summary.json", serde_json::to_string_pretty(&summary)?.as_bytes())?;
    dir.finish("sample", options(&args)?, Some(cfg.seed), Some(&cfg))?;
    Ok(())
}

fn eval(out: &Path, args: EvalArgs) -> Result<()> {
    let (metrics, cfg) = match &args.config {
        Some(p) => {
            let cfg = RunConfig::load(p, None)?;
            (cfg.metrics.clone(), Some(cfg))
        }
        None => (MetricConfig::default(), None),
    };
    let tensors = |p: &Path| -> Result<Vec<_>> { read_dataset(p)?.iter().map(|cc| cc.to_tensor()).collect() };
    let generated = tensors(&args.generated)?;
    let reference = tensors(&args.reference)?;
    let report = evaluate(&generated, &reference, &metrics)?;
    let key = ReportKey {
        dataset: args.dataset.clone().unwrap_or_else(|| {
            args.reference.file_stem().map_or("reference".into(), |s| s.to_string_lossy().into_owned())
        }),
        model: args.model.clone(),
        seed: args.seed,
    };
    let mut dir = OutDir::create(out)?;
    dir.write("report.json", report.to_json()?.as_bytes())?;
    dir.write("report.csv", MetricReport::to_csv(&[(key, report.clone())])?.as_bytes())?;
    info!("degree MMD {:.6}, cluster MMD {:.6}, orbit MMD {:.6}", report.degree_mmd, report.cluster_mmd, report.orbit_mmd);
    dir.finish("eval", options(&args)?, None, cfg.as_ref())?;
    Ok(())
}

fn gradcheck_cmd(out: &Path, args: GradcheckArgs) -> Result<bool> {
    let reports = gradcheck::suite(args.samples, args.seed)?;
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["name", "checked", "worst_rel", "worst_param", "pass"])
        .map_err(|e| CcsdError::Config(e.to_string()))?;
    let mut all = true;
    for r in &reports {
        let pass = r.worst_rel <= args.tolerance;
        all &= pass;
        if !pass {
            error!("{}: relative error {:e} at {}", r.name, r.worst_rel, r.worst_param);
        }
        csv.write_record([
            r.name.clone(),
            r.checked.to_string(),
            format!("{:e}", r.worst_rel),
            r.worst_param.clone(),
            pass.to_string(),
        ])
        .map_err(|e| CcsdError::Config(e.to_string()))?;
    }
    let csv = csv.into_inner().map_err(|e| CcsdError::Config(e.to_string()))?;
    let mut dir = OutDir::create(out)?;
    dir.write("gradcheck.json", serde_json::to_string_pretty(&reports)?.as_bytes())?;
    dir.write("gradcheck.csv", &csv)?;
    dir.finish("gradcheck", options(&args)?, Some(args.seed), None)?;
    Ok(all)
}

fn exit_code(e: &CcsdError) -> u8 {
    match e {
        CcsdError::Config(_) | CcsdError::MissingKeys(_) => 2,
        CcsdError::Checkpoint(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let out = cli.out_dir.as_path();
    let result = match cli.command {
        Command::Dataset(a) => dataset(out, a),
        Command::Lift(a) => lift(out, a),
        Command::Train(a) => train(out, a),
        Command::Sample(a) => sample(out, a),
        Command::Eval(a) => eval(out, a),
        Command::Gradcheck(a) => {
            let strict = a.strict;
            match gradcheck_cmd(out, a) {
                Ok(false) if strict => return ExitCode::from(4),
                r => r.map(|_| ()),
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
