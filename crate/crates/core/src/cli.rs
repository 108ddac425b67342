//! Command-line interface: argument types and the command implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::Error;
use crate::graph::{bin_snapshots, load_edge_list, split_observations, Aggregator, Delimiter, NodeIds, PreparedDataset, SplitName};
use crate::manifest::{sha256_file, RunManifest, TOOL_VERSION};
use crate::metrics::{evaluate_embedding, EvalReport};
use crate::model::{encode_with, init_params, Checkpoint, EncoderConfig, ModelParams, Propagation, Variant};
use crate::synthetic::{random_instance, smooth_instance, InstanceSpec};
use crate::tensor::{MVariant, TransformMatrix};
use crate::training::{
    backward, grad_check_against, grid_search, train_params, training_propagation, write_history, TrainConfig,
    TrainOutcome, L2_GRID, LR_GRID,
};

pub const DATA_DIR_ENV: &str = "TLGCN_DATA_DIR";
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
const EPOCH_SEMANTICS: &str = "one full-batch Adam step per epoch";

#[derive(Debug, Parser)]
#[command(name = "tlgcn", version, about = "Edge-weight estimation on dynamic graphs")]
pub struct Cli {
    /// Worker threads for the data-parallel kernels (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bin a temporal edge list into snapshots and split the observations.
    Prepare(PrepareArgs),
    /// Train one variant and write checkpoint, history, reports and manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a prepared dataset.
    Eval(EvalArgs),
    /// Compare analytic gradients with central differences.
    Gradcheck(GradcheckArgs),
    /// Train all four variants with shared settings.
    Ablate(AblateArgs),
    /// Train over grids of layers, feature sizes and bandwidths.
    Sweep(SweepArgs),
    /// Print a transform matrix.
    DumpM(DumpMArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Edge list (relative paths are looked up under $TLGCN_DATA_DIR).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub t_slots: usize,
    /// last, mean or sum (default: sum when every weight is 1, else last).
    #[arg(long)]
    pub aggregator: Option<Aggregator>,
    #[arg(long, default_value = "auto")]
    pub delimiter: Delimiter,
    /// auto, dense (order of appearance) or numeric (integer labels, gaps
    /// kept as isolated nodes).
    #[arg(long, default_value = "auto")]
    pub node_ids: NodeIds,
    /// Split seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; a `.manifest.json` sibling is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EncoderArgs {
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 16)]
    pub fdim: usize,
    #[arg(long, default_value_t = 5)]
    pub band: usize,
    #[arg(long, default_value = "M1")]
    pub m: MVariant,
}

#[derive(Debug, Clone, Args)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 300)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    /// Initialisation seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Prepared dataset (relative paths are looked up under $TLGCN_DATA_DIR).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "tlgcn")]
    pub variant: Variant,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Sweep the learning-rate and regularization grids, keep the best by
    /// validation MAE.
    #[arg(long, conflicts_with_all = ["lr", "l2"])]
    pub grid: bool,
    /// Independent runs with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: SplitName,
    /// Expected feature size; a mismatch with the checkpoint is an error.
    #[arg(long)]
    pub fdim: Option<usize>,
    /// Report file; a `.json` summary is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub fdim: usize,
    #[arg(long, default_value_t = 5)]
    pub t_slots: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 3)]
    pub band: usize,
    #[arg(long, default_value = "M1")]
    pub m: MVariant,
    #[arg(long, default_value_t = 12)]
    pub observations: usize,
    #[arg(long, default_value_t = 0.01)]
    pub l2: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value = "tlgcn")]
    pub variant: Variant,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Double the largest gradient coordinate before checking.
    #[arg(long)]
    pub corrupt: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "tlgcn")]
    pub variant: Variant,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    pub layers_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
    pub fdim_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "5")]
    pub band_grid: Vec<usize>,
    #[arg(long, default_value = "M1")]
    pub m: MVariant,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Args)]
pub struct DumpMArgs {
    #[arg(long)]
    pub t_slots: usize,
    #[arg(long)]
    pub band: usize,
    #[arg(long, default_value = "M1")]
    pub m: MVariant,
}

/// A failed command and the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn check(msg: impl Into<String>) -> Self {
        Self { code: 1, message: msg.into() }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Self { code: 2, message: msg.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::DimensionMismatch(_) => 2,
            Error::SingularMatrix(_) | Error::InvalidState(_) => 1,
            Error::Parse { .. }
            | Error::EmptyInput(_)
            | Error::ConfigMismatch { .. }
            | Error::Io(_)
            | Error::Serialization(_) => 3,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult {
    if let Some(t) = cli.threads {
        configure_threads(t)?;
    }
    match cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::DumpM(a) => cmd_dump_m(a),
    }
}

fn configure_threads(t: usize) -> CliResult {
    if t == 0 {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(t)
        .build_global()
        .map_err(|e| CliError::usage(e.to_string()))?;
    Ok(())
}

/// Relative paths resolve under `$TLGCN_DATA_DIR` when it is set.
pub fn resolve_data_path(p: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if p.is_relative() && !p.exists() => Path::new(&dir).join(p),
        _ => p.to_path_buf(),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_stem().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn base_manifest(command: &str) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        dataset_sha256: String::new(),
        variant: String::new(),
        m_variant: String::new(),
        layers: 0,
        fdim: 0,
        t_slots: 0,
        bandwidth: 0,
        lr: 0.0,
        l2: 0.0,
        beta: 0.0,
        max_epochs: 0,
        patience: 0,
        init_seed: 0,
        split_seed: 0,
        aggregator: String::new(),
        split_policy: String::new(),
        epoch_semantics: EPOCH_SEMANTICS.to_string(),
        extra: Vec::new(),
        threads: crate::par::thread_count(),
        wall_time_secs: 0.0,
    }
}

fn training_manifest(
    command: &str,
    ds: &PreparedDataset,
    dataset_sha: &str,
    variant: Variant,
    cfg: &EncoderConfig,
    tc: &TrainConfig,
) -> RunManifest {
    RunManifest {
        dataset_sha256: dataset_sha.to_string(),
        variant: variant.key().to_string(),
        m_variant: cfg.m.variant().to_string(),
        layers: cfg.layers,
        fdim: cfg.fdim,
        t_slots: cfg.t_slots(),
        bandwidth: cfg.bandwidth(),
        lr: tc.lr,
        l2: tc.l2,
        beta: tc.beta,
        max_epochs: tc.max_epochs,
        patience: tc.patience,
        init_seed: tc.seed,
        split_seed: ds.split.seed,
        aggregator: ds.aggregator.to_string(),
        split_policy: ds.split_policy.clone(),
        ..base_manifest(command)
    }
}

fn train_config(o: &OptimArgs) -> CliResult<TrainConfig> {
    let tc = TrainConfig {
        lr: o.lr,
        l2: o.l2,
        beta: o.beta,
        max_epochs: o.max_epochs,
        patience: o.patience,
        seed: o.seed,
        ..TrainConfig::default()
    };
    tc.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(tc)
}

fn encoder_config(e: &EncoderArgs, t_slots: usize) -> CliResult<EncoderConfig> {
    let m = TransformMatrix::build(e.m, t_slots, e.band).map_err(|e| CliError::usage(e.to_string()))?;
    EncoderConfig::new(e.layers, e.fdim, m).map_err(|e| CliError::usage(e.to_string()))
}

/// Any failure while reading an input file is a data error.
fn data_error(e: Error) -> CliError {
    CliError {
        code: 3,
        message: e.to_string(),
    }
}

fn load_dataset(path: &Path) -> CliResult<(PreparedDataset, String)> {
    let path = resolve_data_path(path);
    let ds = PreparedDataset::load(&path).map_err(data_error)?;
    let sha = sha256_file(&path).map_err(data_error)?;
    Ok((ds, sha))
}

fn cmd_prepare(a: PrepareArgs) -> CliResult {
    if a.t_slots == 0 {
        return Err(CliError::usage("--t-slots must be at least 1"));
    }
    let start = Instant::now();
    let input = resolve_data_path(&a.input);
    let edges = load_edge_list(&input, a.delimiter)
        .and_then(|e| e.renumber(a.node_ids))
        .map_err(data_error)?;
    let aggregator = a.aggregator.unwrap_or_else(|| edges.default_aggregator());
    let g = bin_snapshots(&edges, a.t_slots, aggregator).map_err(data_error)?;
    let split = split_observations(&g, a.seed).map_err(data_error)?;
    let sha = sha256_file(&input)?;
    let name = input.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ds = PreparedDataset::from_graph(&g, split, edges.labels.clone(), aggregator, edges.edges.len(), name, &sha);
    ds.save(&a.out)?;

    let manifest = RunManifest {
        extra: vec![
            ("prepared_sha256".into(), sha256_file(&a.out)?),
            ("node_ids".into(), format!("{:?}", a.node_ids).to_lowercase()),
            ("delimiter".into(), format!("{:?}", a.delimiter).to_lowercase()),
        ],
        dataset_sha256: sha,
        t_slots: a.t_slots,
        split_seed: a.seed,
        aggregator: aggregator.to_string(),
        split_policy: ds.split_policy.clone(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        ..base_manifest("prepare")
    };
    manifest.save(sibling(&a.out, ".manifest.json"))?;

    println!("nodes: {}", ds.n);
    println!("edges: {}", ds.raw_edge_count);
    println!("t_slots: {}", ds.t_slots);
    println!("density: {:.6e}", ds.density());
    println!("observations: {}", ds.observations.len());
    println!("aggregator: {aggregator}");
    println!(
        "split: train={} validation={} test={}",
        ds.split.train.len(),
        ds.split.validation.len(),
        ds.split.test.len()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct RunSummary {
    variant: String,
    parameter_count: usize,
    best_epoch: usize,
    epochs_run: usize,
    initial_val_mae: f64,
    validation: EvalReport,
    test: EvalReport,
}

fn split_reports(
    params: &ModelParams,
    prop: &Propagation,
    cfg: &EncoderConfig,
    ds: &PreparedDataset,
) -> CliResult<(EvalReport, EvalReport)> {
    let h = encode_with(params, prop, cfg)?;
    let report = |s| evaluate_embedding(&h, params, &ds.observations, ds.split.indices(s), s);
    Ok((report(SplitName::Validation)?, report(SplitName::Test)?))
}

/// Writes every artifact of one finished run into `dir`.
#[allow(clippy::too_many_arguments)]
fn write_run(
    dir: &Path,
    ds: &PreparedDataset,
    prop: &Propagation,
    cfg: &EncoderConfig,
    outcome: &TrainOutcome,
    manifest: &RunManifest,
) -> CliResult<RunSummary> {
    fs::create_dir_all(dir)?;
    write_history(dir, &outcome.history)?;
    // The embedded copy drops wall time so equal runs give equal checkpoint bytes.
    let embedded = RunManifest {
        wall_time_secs: 0.0,
        ..manifest.clone()
    };
    let ck = Checkpoint::new(cfg, outcome.params.clone(), manifest.init_seed, ds.split.seed, embedded)?;
    ck.save(dir.join("checkpoint.bin"))?;
    manifest.save(dir.join("manifest.json"))?;
    let (val, test) = split_reports(&outcome.params, prop, cfg, ds)?;
    for r in [&val, &test] {
        fs::write(
            dir.join(format!("report.{}.txt", r.split)),
            format!("manifest: manifest.json\n{}", r.to_record()),
        )?;
    }
    let summary = RunSummary {
        variant: outcome.params.variant.key().to_string(),
        parameter_count: outcome.params.parameter_count(),
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.history.len(),
        initial_val_mae: outcome.initial_val_mae,
        validation: val,
        test,
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary).map_err(Error::from)? + "\n")?;
    Ok(summary)
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64;
    (mean, var.sqrt())
}

fn cmd_train(a: TrainArgs) -> CliResult {
    if a.repeats == 0 {
        return Err(CliError::usage("--repeats must be at least 1"));
    }
    if a.grid && a.repeats > 1 {
        return Err(CliError::usage("--grid and --repeats cannot be combined"));
    }
    let base_tc = train_config(&a.optim)?;
    let (ds, sha) = load_dataset(&a.data)?;
    let cfg = encoder_config(&a.encoder, ds.t_slots)?;
    let g = ds.graph()?;
    let prop = training_propagation(&g, &ds.split, &cfg)?;
    fs::create_dir_all(&a.out)?;

    if a.grid {
        let start = Instant::now();
        let res = grid_search(&prop, &cfg, a.variant, &ds.observations, &ds.split, &base_tc, &LR_GRID, &L2_GRID)?;
        let mut grid = String::from("lr\tl2\tbest_epoch\tepochs_run\tbest_val_mae\n");
        for p in &res.points {
            let _ = writeln!(grid, "{:?}\t{:?}\t{}\t{}\t{:?}", p.lr, p.l2, p.best_epoch, p.epochs_run, p.best_val_mae);
        }
        fs::write(a.out.join("grid.tsv"), grid)?;
        let tc = TrainConfig {
            lr: res.best.lr,
            l2: res.best.l2,
            ..base_tc
        };
        let mut manifest = training_manifest("train", &ds, &sha, a.variant, &cfg, &tc);
        manifest.extra.push(("grid".into(), "lr x l2".into()));
        manifest.wall_time_secs = start.elapsed().as_secs_f64();
        let s = write_run(&a.out, &ds, &prop, &cfg, &res.outcome, &manifest)?;
        println!("grid best: lr={:?} l2={:?}", res.best.lr, res.best.l2);
        print_run(&s);
        return Ok(());
    }

    let mut rows = Vec::new();
    for r in 0..a.repeats {
        let start = Instant::now();
        let tc = TrainConfig {
            seed: base_tc.seed + r as u64,
            ..base_tc.clone()
        };
        let params = init_params(ds.n, &cfg, a.variant, tc.seed)?;
        let outcome = train_params(params, &prop, &cfg, &ds.observations, &ds.split, &tc)?;
        let mut manifest = training_manifest("train", &ds, &sha, a.variant, &cfg, &tc);
        if a.repeats > 1 {
            manifest.extra.push(("repeat".into(), format!("{r} of {}", a.repeats)));
        }
        manifest.wall_time_secs = start.elapsed().as_secs_f64();
        let dir = if a.repeats == 1 { a.out.clone() } else { a.out.join(format!("repeat-{r}")) };
        let s = write_run(&dir, &ds, &prop, &cfg, &outcome, &manifest)?;
        print_run(&s);
        rows.push((tc.seed, s));
    }
    if a.repeats > 1 {
        let mut t = String::from("repeat\tseed\tbest_epoch\tval_mae\tval_rmse\ttest_mae\ttest_rmse\n");
        for (r, (seed, s)) in rows.iter().enumerate() {
            let _ = writeln!(
                t,
                "{r}\t{seed}\t{}\t{:?}\t{:?}\t{:?}\t{:?}",
                s.best_epoch, s.validation.mae, s.validation.rmse, s.test.mae, s.test.rmse
            );
        }
        let col = |f: fn(&RunSummary) -> f64| mean_sd(&rows.iter().map(|(_, s)| f(s)).collect::<Vec<_>>());
        let stats = [
            ("val_mae", col(|s| s.validation.mae)),
            ("val_rmse", col(|s| s.validation.rmse)),
            ("test_mae", col(|s| s.test.mae)),
            ("test_rmse", col(|s| s.test.rmse)),
        ];
        for (name, (m, sd)) in stats {
            let _ = writeln!(t, "# {name}: {m:?} +- {sd:?}");
            println!("{name}: {m:.4} +- {sd:.4}");
        }
        fs::write(a.out.join("repeats.tsv"), t)?;
    }
    Ok(())
}

fn print_run(s: &RunSummary) {
    println!(
        "{}: best epoch {} of {}; validation MAE {:.4} RMSE {:.4}; test MAE {:.4} RMSE {:.4}",
        s.variant, s.best_epoch, s.epochs_run, s.validation.mae, s.validation.rmse, s.test.mae, s.test.rmse
    );
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let ck = Checkpoint::load(&a.checkpoint).map_err(data_error)?;
    let (ds, sha) = load_dataset(&a.data)?;
    ck.check_compatible(ds.n, ds.t_slots, a.fdim)?;
    let cfg = ck.encoder_config()?;
    let prop = training_propagation(&ds.graph()?, &ds.split, &cfg)?;
    let h = encode_with(&ck.params, &prop, &cfg)?;
    let report = evaluate_embedding(&h, &ck.params, &ds.observations, ds.split.indices(a.split), a.split)?;

    println!(
        "dataset: {}  variant: {}  M: {}  L={} F={} b={} T={}",
        ds.source_name, ck.params.variant, ck.m_variant, ck.layers, ck.fdim, ck.bandwidth, ck.t_slots
    );
    println!("{:<12}{:>12}{:>12}{:>10}", "split", "MAE", "RMSE", "count");
    println!("{:<12}{:>12.4}{:>12.4}{:>10}", report.split.to_string(), report.mae, report.rmse, report.count);

    if let Some(out) = &a.out {
        let mut record = String::new();
        let _ = writeln!(record, "checkpoint_sha256: {}", sha256_file(&a.checkpoint)?);
        let _ = writeln!(record, "dataset_sha256: {sha}");
        let _ = writeln!(record, "variant: {}", ck.params.variant.key());
        record.push_str(&report.to_record());
        fs::write(out, record)?;
        fs::write(
            sibling(out, ".json"),
            serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n",
        )?;
    }
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> CliResult {
    let spec = InstanceSpec {
        n: a.n,
        fdim: a.fdim,
        t_slots: a.t_slots,
        layers: a.layers,
        bandwidth: a.band,
        m: a.m,
        observations: a.observations,
        ..InstanceSpec::default()
    };
    let tc = TrainConfig {
        l2: a.l2,
        ..TrainConfig::default()
    };
    tc.validate().map_err(|e| CliError::usage(e.to_string()))?;
    if !(a.step > 0.0) {
        return Err(CliError::usage("--step must be positive"));
    }
    let inst = if a.variant.has_feature_transform() {
        smooth_instance(&spec, a.variant, a.seed, 1e-3)?
    } else {
        random_instance(&spec, a.variant, a.seed)?
    };
    let mut grads = backward(&inst.params, &inst.prop, &inst.cfg, &inst.observations, &tc)?;
    if a.corrupt {
        let mut fams = grads.families_mut();
        let mut at = (0, 0, -1.0);
        for (f, fam) in fams.iter().enumerate() {
            for (k, v) in fam.iter().enumerate() {
                if v.abs() > at.2 {
                    at = (f, k, v.abs());
                }
            }
        }
        let (f, k, _) = at;
        fams[f][k] *= 2.0;
    }
    let r = grad_check_against(&inst.params, &grads, &inst.prop, &inst.cfg, &inst.observations, &tc, a.step)?;
    println!("variant: {}", a.variant);
    println!("instance_seed: {}", inst.seed);
    for (name, err, count) in &r.per_family {
        println!("{name}: max_rel_error={err:e} coordinates={count}");
    }
    println!("max_rel_error: {:e}", r.max_rel_error);
    if r.max_rel_error < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::check(format!(
            "gradient check failed: {:e} >= {GRADCHECK_TOLERANCE:e}",
            r.max_rel_error
        )))
    }
}

fn cmd_ablate(a: AblateArgs) -> CliResult {
    let tc = train_config(&a.optim)?;
    let (ds, sha) = load_dataset(&a.data)?;
    let cfg = encoder_config(&a.encoder, ds.t_slots)?;
    let prop = training_propagation(&ds.graph()?, &ds.split, &cfg)?;
    fs::create_dir_all(&a.out)?;
    let start = Instant::now();

    let mut table = String::from("variant\tparameters\tbest_epoch\tval_mae\tval_rmse\ttest_mae\ttest_rmse\tpeak_heap_mb\n");
    let mut counts = Vec::new();
    for v in Variant::ALL {
        let (outcome, peak) = crate::mem::measure_peak(|| {
            let params = init_params(ds.n, &cfg, v, tc.seed)?;
            train_params(params, &prop, &cfg, &ds.observations, &ds.split, &tc)
        });
        let outcome = outcome?;
        let (val, test) = split_reports(&outcome.params, &prop, &cfg, &ds)?;
        let count = outcome.params.parameter_count();
        let mb = if crate::mem::is_tracking() {
            format!("{:.3}", peak as f64 / (1024.0 * 1024.0))
        } else {
            "NA".to_string()
        };
        let _ = writeln!(
            table,
            "{v}\t{count}\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t{mb}",
            outcome.best_epoch, val.mae, val.rmse, test.mae, test.rmse
        );
        counts.push((v, count));
    }
    fs::write(a.out.join("ablation.tsv"), &table)?;
    let mut manifest = training_manifest("ablate", &ds, &sha, Variant::Tlgcn, &cfg, &tc);
    manifest.variant = "all".into();
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    manifest.save(a.out.join("manifest.json"))?;
    print!("{table}");

    let count = |v| counts.iter().find(|(w, _)| *w == v).map_or(0, |c| c.1);
    let (light, heavy) = (count(Variant::Tlgcn), count(Variant::WithoutLight));
    let expected = cfg.layers * cfg.fdim * cfg.fdim * cfg.t_slots();
    if light >= heavy || heavy - light != expected {
        return Err(CliError::check(format!(
            "parameter counts TLGCN={light} w/o L={heavy}; expected a difference of {expected}"
        )));
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CliResult {
    let tc = train_config(&a.optim)?;
    if a.layers_grid.is_empty() || a.fdim_grid.is_empty() || a.band_grid.is_empty() {
        return Err(CliError::usage("sweep grids must not be empty"));
    }
    let (ds, sha) = load_dataset(&a.data)?;
    let g = ds.graph()?;
    let mut configs = Vec::new();
    for &band in &a.band_grid {
        for &layers in &a.layers_grid {
            for &fdim in &a.fdim_grid {
                let e = EncoderArgs { layers, fdim, band, m: a.m };
                configs.push((e.clone(), encoder_config(&e, ds.t_slots)?));
            }
        }
    }
    fs::create_dir_all(&a.out)?;
    let start = Instant::now();
    let mut table = String::from("layers\tfdim\tband\tparameters\tbest_epoch\tval_mae\tval_rmse\ttest_mae\ttest_rmse\n");
    for (e, cfg) in &configs {
        let prop = training_propagation(&g, &ds.split, cfg)?;
        let params = init_params(ds.n, cfg, a.variant, tc.seed)?;
        let outcome = train_params(params, &prop, cfg, &ds.observations, &ds.split, &tc)?;
        let (val, test) = split_reports(&outcome.params, &prop, cfg, &ds)?;
        let row = format!(
            "{}\t{}\t{}\t{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}",
            e.layers,
            e.fdim,
            e.band,
            outcome.params.parameter_count(),
            outcome.best_epoch,
            val.mae,
            val.rmse,
            test.mae,
            test.rmse
        );
        println!("{row}");
        table.push_str(&row);
        table.push('\n');
    }
    fs::write(a.out.join("sweep.tsv"), table)?;
    let mut manifest = training_manifest("sweep", &ds, &sha, a.variant, &configs[0].1, &tc);
    manifest.extra = vec![
        ("layers_grid".into(), format!("{:?}", a.layers_grid)),
        ("fdim_grid".into(), format!("{:?}", a.fdim_grid)),
        ("band_grid".into(), format!("{:?}", a.band_grid)),
    ];
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    manifest.save(a.out.join("manifest.json"))?;
    Ok(())
}

/// Full-precision rows; M1 rows end with their sum.
pub fn format_m(m: &TransformMatrix) -> String {
    let mut s = format!("# {} T={} b={}\n", m.variant(), m.t_slots(), m.bandwidth());
    for t in 0..m.t_slots() {
        let row: Vec<String> = m.row(t).iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&row.join("\t"));
        if m.variant() == MVariant::M1 {
            let _ = write!(s, "\t# sum={:?}", m.row_sum(t));
        }
        s.push('\n');
    }
    s
}

fn cmd_dump_m(a: DumpMArgs) -> CliResult {
    let m = TransformMatrix::build(a.m, a.t_slots, a.band).map_err(|e| CliError::usage(e.to_string()))?;
    print!("{}", format_m(&m));
    Ok(())
}
