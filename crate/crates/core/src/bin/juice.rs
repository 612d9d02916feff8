//! Command-line front end: plan inspection, feature export, the built-in
//! nearest-neighbor predictor, the reparameterization verifier, and the
//! simulation lab. Exit codes: 0 success, 1 user error (including failed
//! verification trials), 2 internal invariant failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use juice_core::config::RunConfig;
use juice_core::icl::{assemble, export_bundle, run_predict, TaskSpec};
use juice_core::mpgnn::verify_reparam;
use juice_core::plan::{compile, enumerate_features, CutoffMode, ExecPlan};
use juice_core::rdb::{load_instance, render_report, validate, Instance, Schema};
use juice_core::relgraph::enumerate_metapaths;
use juice_core::synthlab::{
    run_ablation, run_rate_experiment, AblationMode, AblationParams, RateParams,
};
use juice_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "juice",
    version,
    about = "Feature synthesis over relational databases, plus its verification and simulation tools"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Enumerate meta-paths for a schema and print the compiled plan.
    Plan(PlanArgs),
    /// Compute features and write the train/test bundle to a directory.
    Encode(EncodeArgs),
    /// Run the built-in k-NN predictor end-to-end and print its score.
    Predict(PredictArgs),
    /// Check weighted vs parameter-free encodings on random databases.
    Verify(VerifyArgs),
    /// Run a simulation-lab experiment and write its curve and summary.
    Simulate(SimulateArgs),
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// JSON run-configuration file; explicit flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Maximum meta-path length.
    #[arg(long)]
    hops: Option<usize>,
    /// Cap on train rows kept after downsampling.
    #[arg(long)]
    n_max: Option<usize>,
    /// Master seed for all randomness in the run.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = automatic).
    #[arg(long)]
    threads: Option<usize>,
    /// Aggregators per column kind, e.g. "num=sum,mean;cat=count;ts=tdelta_min".
    #[arg(long)]
    aggs: Option<String>,
    /// "none", "per_row", or "global:<timestamp>". Without an active cutoff,
    /// time-delta aggregators are dropped from enumeration.
    #[arg(long)]
    cutoff_mode: Option<String>,
}

#[derive(Args)]
struct PlanArgs {
    /// Schema JSON file.
    #[arg(long)]
    schema: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    schema: PathBuf,
    /// Directory of per-table CSV files.
    #[arg(long)]
    data_dir: PathBuf,
    /// Task JSON file (label, kind, split).
    #[arg(long)]
    task: PathBuf,
    /// Output directory for the bundle.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    task: PathBuf,
    /// Also write the bundle here before predicting.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Number of randomized trials.
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// "uninformative", "informative", or "rates".
    #[arg(long, default_value = "uninformative")]
    mode: String,
    /// Output directory for curve.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
    /// Trial count (defaults: 100 for column ablations, 20 for rates).
    #[arg(long)]
    trials: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

fn parse_cutoff_mode(s: &str) -> Result<CutoffMode> {
    match s {
        "none" => Ok(CutoffMode::None),
        "per_row" | "per-row" => Ok(CutoffMode::PerRow),
        other => {
            if let Some(ts) = other.strip_prefix("global:") {
                let ts: i64 = ts.parse().map_err(|_| {
                    Error::Parse(format!("bad global cutoff timestamp {ts:?}"))
                })?;
                Ok(CutoffMode::Global(ts))
            } else {
                Err(Error::Parse(format!(
                    "bad cutoff mode {other:?} (expected none, per_row, or global:<ts>)"
                )))
            }
        }
    }
}

fn resolve_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(h) = common.hops {
        cfg.hops = h;
    }
    if let Some(n) = common.n_max {
        cfg.n_max = n;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    if let Some(a) = &common.aggs {
        cfg.aggs = Some(a.clone());
    }
    if let Some(c) = &common.cutoff_mode {
        cfg.cutoff_mode = parse_cutoff_mode(c)?;
    }
    if cfg.n_max == 0 {
        return Err(Error::Config("n_max must be at least 1".into()));
    }
    Ok(cfg)
}

fn apply_threads(threads: usize) -> Result<()> {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn load_schema(path: &Path) -> Result<Schema> {
    let text = std::fs::read_to_string(path)?;
    Schema::from_json(&text)
}

fn build_plan(schema: &Schema, cfg: &RunConfig, exclude_label: Option<&str>) -> Result<ExecPlan> {
    let mut fc = cfg.feature_config()?;
    if !cfg.cutoff_mode.is_active() {
        fc = fc.without_cutoff_aggs();
    }
    let mut specs = enumerate_features(schema, cfg.hops, &fc)?;
    // The task's label lives on the target table; it is predicted, never read.
    if let Some(col) = exclude_label.and_then(|l| schema.column_index(schema.target, l)) {
        specs.retain(|s| !(s.source_table == schema.target && s.source_col == col));
    }
    compile(schema, specs, cfg.cutoff_mode, true)
}

fn load_inputs(
    schema_path: &Path,
    data_dir: &Path,
    task_path: &Path,
    cfg: &RunConfig,
) -> Result<(Instance, ExecPlan, TaskSpec)> {
    let schema = load_schema(schema_path)?;
    let inst = load_instance(&schema, data_dir)?;
    let task = TaskSpec::from_json(&std::fs::read_to_string(task_path)?)?;
    let plan = build_plan(&inst.schema, cfg, Some(&task.label))?;
    Ok((inst, plan, task))
}

fn cmd_plan(args: &PlanArgs) -> Result<()> {
    let cfg = resolve_config(&args.common)?;
    apply_threads(cfg.threads)?;
    let schema = load_schema(&args.schema)?;
    let paths = enumerate_metapaths(&schema, cfg.hops);
    println!("meta-paths (hops <= {}):", cfg.hops);
    for p in &paths {
        println!("  {}", p.render(&schema));
    }
    let plan = build_plan(&schema, &cfg, None)?;
    println!("features: {}", plan.specs.len());
    println!("plan:");
    print!("{}", plan.explain(&schema));
    Ok(())
}

fn cmd_encode(args: &EncodeArgs) -> Result<()> {
    let cfg = resolve_config(&args.common)?;
    apply_threads(cfg.threads)?;
    let (inst, plan, task) = load_inputs(&args.schema, &args.data_dir, &args.task, &cfg)?;
    eprint!("{}", render_report(&validate(&inst)));
    let ds = assemble(&inst, &plan, &task, cfg.n_max, cfg.seed)?;
    export_bundle(&ds, &args.out, cfg.seed)?;
    println!(
        "train rows: {}, test rows: {}, feature columns: {}",
        ds.train.n_rows,
        ds.test.n_rows,
        ds.train.columns.len()
    );
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let cfg = resolve_config(&args.common)?;
    apply_threads(cfg.threads)?;
    let (inst, plan, task) = load_inputs(&args.schema, &args.data_dir, &args.task, &cfg)?;
    if let Some(out) = &args.out {
        let ds = assemble(&inst, &plan, &task, cfg.n_max, cfg.seed)?;
        export_bundle(&ds, out, cfg.seed)?;
    }
    let report = run_predict(&inst, &plan, &task, cfg.n_max, cfg.seed, cfg.k)?;
    println!("{}", to_json(&report)?);
    Ok(())
}

#[derive(Serialize)]
struct VerifySummary {
    trials: usize,
    passes: usize,
    max_rel_err: f64,
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool> {
    let cfg = resolve_config(&args.common)?;
    apply_threads(cfg.threads)?;
    let report = verify_reparam(args.trials, cfg.seed)?;
    let summary = VerifySummary {
        trials: report.trials,
        passes: report.passes,
        max_rel_err: report.max_rel_err,
    };
    println!("{}", to_json(&summary)?);
    Ok(report.all_passed())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = resolve_config(&args.common)?;
    apply_threads(cfg.threads)?;
    let (curve_csv, summary_json) = match args.mode.as_str() {
        "uninformative" | "informative" => {
            let mode = if args.mode == "informative" {
                AblationMode::Informative
            } else {
                AblationMode::Uninformative
            };
            let params = AblationParams {
                mode,
                trials: args.trials.unwrap_or(100),
                seed: cfg.seed,
                ..AblationParams::default()
            };
            let curve = run_ablation(&params)?;
            (curve.to_csv(), to_json(&curve.summary())?)
        }
        "rates" => {
            let params = RateParams {
                trials: args.trials.unwrap_or(20),
                seed: cfg.seed,
                ..RateParams::default()
            };
            let report = run_rate_experiment(&params)?;
            (report.to_csv(), to_json(&report.summary())?)
        }
        other => {
            return Err(Error::Parse(format!(
                "bad mode {other:?} (expected uninformative, informative, or rates)"
            )))
        }
    };
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("curve.csv"), &curve_csv)?;
    std::fs::write(args.out.join("summary.json"), summary_json.clone() + "\n")?;
    println!("{summary_json}");
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Internal(e.to_string()))
}

fn error_exit(e: &Error) -> ExitCode {
    match e {
        Error::Internal(_) | Error::PlanMismatch(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match &cli.cmd {
        Cmd::Plan(a) => cmd_plan(a).map(|()| true),
        Cmd::Encode(a) => cmd_encode(a).map(|()| true),
        Cmd::Predict(a) => cmd_predict(a).map(|()| true),
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::Simulate(a) => cmd_simulate(a).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            error_exit(&e)
        }
    }
}
