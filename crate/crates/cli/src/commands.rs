//! Subcommand definitions and handlers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hwnas_core::arch::ArchitectureSpec;
use hwnas_core::compress::{local_search, write_log_csv, CompressionResult, LocalTrainConfig};
use hwnas_core::config::{load_config, ExperimentConfig};
use hwnas_core::cost::{
    board_by_name, spearman, spec_bops, BoardRef, HlsConfig, IoType, Strategy, SurrogateModel, SURROGATE_TARGETS,
};
use hwnas_core::data::{export_csv, gen_iq_readout, gen_jet_like, DatasetSchema, DatasetTable, WindowSpec};
use hwnas_core::derive_seed;
use hwnas_core::fixed::FixedPointFormat;
use hwnas_core::nn::training_splits;
use hwnas_core::search::{evolve, select_checkpoint, EvolveConfig, SelectionRule};
use hwnas_core::store::{write_records_csv, StudyHandle, StudyMeta, TrialLog, TrialRecord, TrialState};

use crate::checkpoint::{Checkpoint, CHECKPOINT_FILE};
use crate::firmware::{ExportContext, FirmwareDescriptor};
use crate::pipeline::{cost_model, fit_surrogate, surrogate_path, surrogate_training_set, CostModel, TrialContext};
use crate::plot;
use crate::CliError;

pub const ARCHIVE_FILE: &str = "archive.csv";

#[derive(Debug, Parser)]
#[command(name = "hwnas", version, about = "Hardware-aware architecture search for small MLPs")]
pub struct Cli {
    /// Experiment YAML.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Study store directory (overrides `study.store`).
    #[arg(long, global = true, env = "HWNAS_STORE")]
    pub store: Option<PathBuf>,
    /// Overrides `study.seed` (or seeds `gen-data`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "w0")]
    pub worker_id: String,
    /// COMPLETE trials this worker should contribute.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    OptimalAccuracy,
    OptimalResource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotFormat {
    Csv,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    Jet,
    Qubit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Latency,
    Resource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IoArg {
    Parallel,
    Stream,
}

/// HLS settings; each flag overrides the config's `hls` section.
#[derive(Debug, Clone, Args, Default)]
pub struct HlsArgs {
    #[arg(long)]
    pub board: Option<String>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    #[arg(long, value_enum)]
    pub io_type: Option<IoArg>,
    #[arg(long)]
    pub reuse_factor: Option<u32>,
    /// `T,I` for ap_fixed<T,I>.
    #[arg(long)]
    pub precision: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run (or join) the NSGA-II search.
    GlobalSearch,
    /// Quantize, prune and retrain a selected trial at each precision.
    LocalSearch {
        /// Defaults to the checkpoint written into the store.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Defaults to `<store>/local_search`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pick a trial from the Pareto archive and write a checkpoint.
    Select {
        #[arg(long, value_enum, default_value = "optimal-accuracy")]
        rule: RuleArg,
        /// Accuracy threshold (strict) or floor (inclusive).
        #[arg(long, allow_hyphen_values = true)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scatter of all COMPLETE trials with their nondomination rank.
    ExportFront {
        #[arg(long, value_enum, default_value = "csv")]
        format: PlotFormat,
        /// `x,y` metric names.
        #[arg(long, default_value = "mean_utilization,latency_cycles")]
        axes: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Resource and BOPs estimate of an architecture YAML.
    Estimate {
        #[arg(long)]
        arch: PathBuf,
        /// Required unless the spec has a readout window.
        #[arg(long)]
        input_dim: Option<usize>,
        /// Required unless the spec fixes `output_dim`.
        #[arg(long)]
        output_dim: Option<usize>,
        #[command(flatten)]
        hls: HlsArgs,
        /// Use this surrogate model instead of the analytic estimate.
        #[arg(long)]
        surrogate: Option<PathBuf>,
    },
    /// Integer-coded JSON descriptor of a compression result.
    ExportFirmware {
        #[arg(long)]
        result: PathBuf,
        #[command(flatten)]
        hls: HlsArgs,
        /// Checkpoint whose trial the result came from (provenance only).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic dataset as CSV plus a schema sidecar.
    GenData {
        #[arg(value_enum)]
        kind: DataKind,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        dims: usize,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 2.0)]
        separation: f64,
        #[arg(long, default_value_t = 800)]
        series_length: usize,
        #[arg(long, default_value_t = 200)]
        informative_start: usize,
        #[arg(long, default_value_t = 200)]
        informative_size: usize,
        #[arg(long, default_value_t = 0.5)]
        snr: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a config and its store.
    Doctor,
    /// Train the surrogate cost model and report held-out rank correlation.
    TrainSurrogate {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        holdout: usize,
    },
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

struct Loaded {
    cfg: ExperimentConfig,
    dir: PathBuf,
}

fn load(cli: &Cli) -> Result<Loaded, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Validation("--config is required".into()))?;
    let mut cfg = load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.study.seed = seed;
    }
    if let Some(store) = &cli.store {
        cfg.study.store = store.to_string_lossy().into_owned();
    }
    Ok(Loaded { cfg, dir: config_dir(path) })
}

fn store_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> Result<PathBuf, CliError> {
    match (&cli.store, cfg) {
        (Some(s), _) => Ok(s.clone()),
        (None, Some(c)) => Ok(PathBuf::from(&c.study.store)),
        (None, None) => Err(CliError::Validation("--store or --config is required".into())),
    }
}

fn load_data(l: &Loaded) -> Result<DatasetTable, CliError> {
    l.cfg.dataset.load(&l.dir, l.cfg.study.seed).map_err(|e| CliError::Validation(format!("dataset: {e}")))
}

fn open_store(cli: &Cli) -> Result<(StudyHandle, Option<Loaded>), CliError> {
    let loaded = match &cli.config {
        Some(_) => Some(load(cli)?),
        None => None,
    };
    let dir = store_dir(cli, loaded.as_ref().map(|l| &l.cfg))?;
    let mut h = StudyHandle::open_existing(&dir)?;
    if let Some(l) = &loaded {
        let meta = StudyMeta::new(&l.cfg.study.name, l.cfg.objectives.clone(), l.cfg.space.digest());
        h.meta().check_compatible(&meta)?;
        h.stale_after = l.cfg.runtime.stale_after_secs.map(Duration::from_secs);
    }
    Ok((h, loaded))
}

fn quality_metric(meta: &StudyMeta) -> Result<String, CliError> {
    meta.objectives
        .iter()
        .find(|o| o.direction == hwnas_core::search::Direction::Maximize)
        .map(|o| o.name.clone())
        .ok_or_else(|| CliError::Validation("study has no maximized objective".into()))
}

fn runtime<E: std::fmt::Display>(what: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{what}: {e}"))
}

/// Parse argv and run; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::GlobalSearch => cmd_global_search(cli),
        Command::LocalSearch { checkpoint, out } => cmd_local_search(cli, checkpoint.as_deref(), out.as_deref()),
        Command::Select { rule, threshold, out } => cmd_select(cli, *rule, *threshold, out.as_deref()),
        Command::ExportFront { format, axes, out } => cmd_export_front(cli, *format, axes, out),
        Command::Estimate { arch, input_dim, output_dim, hls, surrogate } => {
            cmd_estimate(cli, arch, *input_dim, *output_dim, hls, surrogate.as_deref())
        }
        Command::ExportFirmware { result, hls, checkpoint, out } => {
            cmd_export_firmware(cli, result, hls, checkpoint.as_deref(), out)
        }
        Command::GenData { kind, n, dims, classes, separation, series_length, informative_start, informative_size, snr, out } => {
            let seed = cli.seed.unwrap_or(0);
            let table = match kind {
                DataKind::Jet => gen_jet_like(*n, *dims, *classes, *separation, seed),
                DataKind::Qubit => gen_iq_readout(
                    *n,
                    *series_length,
                    WindowSpec { start: *informative_start, size: *informative_size },
                    *snr,
                    seed,
                ),
            }
            .map_err(|e| CliError::Validation(e.to_string()))?;
            cmd_gen_data(&table, out)
        }
        Command::Doctor => cmd_doctor(cli),
        Command::TrainSurrogate { out, holdout } => cmd_train_surrogate(cli, out.as_deref(), *holdout),
    }
}

pub fn cmd_global_search(cli: &Cli) -> Result<(), CliError> {
    let l = load(cli)?;
    let data = load_data(&l)?;
    let cfg = &l.cfg;
    let dir = PathBuf::from(&cfg.study.store);
    let meta = StudyMeta::new(&cfg.study.name, cfg.objectives.clone(), cfg.space.digest());
    let mut store = StudyHandle::open_or_create(&dir, &meta)?;
    store.stale_after = cfg.runtime.stale_after_secs.map(Duration::from_secs);
    let cost = cost_model(cfg, &data, &dir, &l.dir)?;
    let ctx = TrialContext::new(cfg.clone(), data, cost)?;
    let ecfg = EvolveConfig {
        population_size: cfg.runtime.population_size,
        trial_budget: cfg.runtime.trial_budget,
        p_mut: cfg.runtime.mutation_prob,
        seed: cfg.study.seed,
        worker_id: cli.worker_id.clone(),
        max_trials: cli.trials,
        max_consecutive_failures: cfg.runtime.max_consecutive_failures,
    };
    let mut evaluator = |id: u64, params: &hwnas_core::space::ParamAssignment| {
        let r = ctx.evaluate(id, params);
        match &r {
            Ok(ev) => log::info!("trial {id}: {:?}", ev.objectives),
            Err(e) => log::warn!("trial {id}: {e}"),
        }
        r
    };
    let archive = evolve(&mut store, &cfg.space, &ecfg, &mut evaluator)?;
    write_records_csv(&archive, &cfg.objectives, dir.join(ARCHIVE_FILE))?;
    let all = store.list(&Default::default())?;
    let metric = cfg.quality_metric();
    match select_checkpoint(&all, &cfg.objectives, metric, SelectionRule::OptimalAccuracy { threshold: f64::NEG_INFINITY }) {
        Ok(best) => {
            let rule = Some(SelectionRule::OptimalAccuracy { threshold: f64::NEG_INFINITY });
            Checkpoint::from_trial(&cfg.study.name, &meta.space_digest, &best, &cfg.objectives, Some(&cfg.space), rule)
                .save(&dir.join(CHECKPOINT_FILE))?;
        }
        Err(e) => log::warn!("no checkpoint written: {e}"),
    }
    let complete = store.state()?.count(TrialState::Complete);
    println!("{complete} complete trials; archive of {} written to {}", archive.len(), dir.join(ARCHIVE_FILE).display());
    Ok(())
}

fn result_file_name(fmt: FixedPointFormat) -> String {
    format!("result_{}_{}.json", fmt.total_bits(), fmt.integer_bits())
}

pub fn cmd_local_search(cli: &Cli, checkpoint: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let l = load(cli)?;
    let cfg = &l.cfg;
    let store = PathBuf::from(&cfg.study.store);
    let ck_path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| store.join(CHECKPOINT_FILE));
    let ck = Checkpoint::load(&ck_path)?;
    if ck.space_digest != cfg.space.digest() {
        return Err(CliError::Validation(format!(
            "{} was selected from a different search space than the config",
            ck_path.display()
        )));
    }
    cfg.space
        .check_assignment(&ck.params)
        .map_err(|e| CliError::Validation(format!("checkpoint parameters: {e}")))?;
    let data = load_data(&l)?;
    let ctx = TrialContext::new(cfg.clone(), data, CostModel::Oracle)?;
    let trained = ctx.train(ck.trial_id, &ck.params).map_err(CliError::Runtime)?;
    let seed = ctx.trial_seed(ck.trial_id);
    let splits = training_splits(&trained.data.labels, ctx.folds.as_ref(), seed);
    let ltc = LocalTrainConfig {
        batch_size: cfg.runtime.batch_size,
        learning_rate: trained.spec.learning_rate,
        seed,
        default_precision: cfg.hls.default_precision,
    };
    let outcome = local_search(&trained.report.fold_models, &cfg.local_search, &trained.data, &splits, &ltc);
    let out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| store.join("local_search"));
    std::fs::create_dir_all(&out_dir).map_err(runtime(&out_dir.display().to_string()))?;
    for r in &outcome.results {
        r.save(out_dir.join(result_file_name(r.precision))).map_err(runtime("result"))?;
    }
    write_log_csv(&outcome.results, out_dir.join("iterations.csv")).map_err(runtime("iteration log"))?;
    let summary = serde_json::json!({
        "trial_id": ck.trial_id,
        "seed_metric": trained.report.metric,
        "results": outcome.results.iter().map(|r| serde_json::json!({
            "precision": r.precision.to_string(),
            "best_iteration": r.best_iteration,
            "best_metric": r.best_metric,
            "file": result_file_name(r.precision),
        })).collect::<Vec<_>>(),
    });
    crate::write_atomic(&out_dir.join("summary.json"), serde_json::to_string_pretty(&summary).unwrap().as_bytes())?;
    println!("float seed metric {:.4}", trained.report.metric);
    for r in &outcome.results {
        println!("{}: best metric {:.4} at iteration {}", r.precision, r.best_metric, r.best_iteration);
    }
    match outcome.error {
        Some(e) => Err(CliError::Runtime(format!("local search stopped early: {e}"))),
        None => Ok(()),
    }
}

pub fn cmd_select(cli: &Cli, rule: RuleArg, threshold: Option<f64>, out: Option<&Path>) -> Result<(), CliError> {
    let (mut store, loaded) = open_store(cli)?;
    let meta = store.meta().clone();
    let metric = quality_metric(&meta)?;
    let rule = match rule {
        RuleArg::OptimalAccuracy => SelectionRule::OptimalAccuracy { threshold: threshold.unwrap_or(f64::NEG_INFINITY) },
        RuleArg::OptimalResource => SelectionRule::OptimalResource { floor: threshold.unwrap_or(f64::NEG_INFINITY) },
    };
    let all = store.list(&Default::default())?;
    let chosen = select_checkpoint(&all, &meta.objectives, &metric, rule).map_err(|e| match e {
        hwnas_core::search::SearchError::EmptySelection => {
            CliError::EmptySelection(format!("no Pareto-archive trial satisfies {rule:?} on `{metric}`"))
        }
        other => other.into(),
    })?;
    let space = loaded.as_ref().map(|l| &l.cfg.space);
    let ck = Checkpoint::from_trial(&meta.study_name, &meta.space_digest, &chosen, &meta.objectives, space, Some(rule));
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => store.path().join(CHECKPOINT_FILE),
    };
    ck.save(&path)?;
    println!("selected trial {} -> {}", chosen.trial_id, path.display());
    Ok(())
}

/// Rank-annotated scatter rows of a store snapshot.
pub fn front_of(records: &[TrialRecord], meta: &StudyMeta, x: &str, y: &str) -> Vec<plot::FrontPoint> {
    plot::front_points(records, &meta.objectives, x, y)
}

pub fn cmd_export_front(cli: &Cli, format: PlotFormat, axes: &str, out: &Path) -> Result<(), CliError> {
    let (mut store, _) = open_store(cli)?;
    let (x, y) = axes
        .split_once(',')
        .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
        .ok_or_else(|| CliError::Validation(format!("--axes expects `x,y`, got `{axes}`")))?;
    let meta = store.meta().clone();
    let records = store.list(&Default::default())?;
    let points = front_of(&records, &meta, &x, &y);
    let body = match format {
        PlotFormat::Csv => plot::to_csv(&points, &x, &y),
        PlotFormat::Svg => plot::to_svg(&points, &x, &y),
    };
    crate::write_atomic(out, body.as_bytes())?;
    println!("{} points ({} on the front) -> {}", points.len(), points.iter().filter(|p| p.rank == 0).count(), out.display());
    Ok(())
}

fn parse_precision(s: &str) -> Result<FixedPointFormat, CliError> {
    let bad = || CliError::Validation(format!("--precision expects `T,I`, got `{s}`"));
    let (t, i) = s.split_once(',').ok_or_else(bad)?;
    let t: u32 = t.trim().parse().map_err(|_| bad())?;
    let i: u32 = i.trim().parse().map_err(|_| bad())?;
    FixedPointFormat::new(t, i).map_err(|e| CliError::Validation(e.to_string()))
}

/// Config `hls` section (or VU13P defaults) with flag overrides applied.
pub fn resolve_hls(cli: &Cli, args: &HlsArgs) -> Result<HlsConfig, CliError> {
    let mut hls = match &cli.config {
        Some(_) => load(cli)?.cfg.hls.hls_config(),
        None => HlsConfig::new("VU13P"),
    };
    if let Some(b) = &args.board {
        board_by_name(b).map_err(|e| CliError::Validation(e.to_string()))?;
        hls.board = BoardRef::Named(b.clone());
    }
    if let Some(s) = args.strategy {
        hls.strategy = match s {
            StrategyArg::Latency => Strategy::Latency,
            StrategyArg::Resource => Strategy::Resource,
        };
    }
    if let Some(io) = args.io_type {
        hls.io_type = match io {
            IoArg::Parallel => IoType::Parallel,
            IoArg::Stream => IoType::Stream,
        };
    }
    if let Some(r) = args.reuse_factor {
        if r == 0 {
            return Err(CliError::Validation("--reuse-factor must be >= 1".into()));
        }
        hls.reuse_factor = r;
    }
    if let Some(p) = &args.precision {
        hls.default_precision = parse_precision(p)?;
    }
    Ok(hls)
}

pub fn cmd_estimate(
    cli: &Cli,
    arch: &Path,
    input_dim: Option<usize>,
    output_dim: Option<usize>,
    hls_args: &HlsArgs,
    surrogate: Option<&Path>,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(arch).map_err(|e| CliError::Validation(format!("{}: {e}", arch.display())))?;
    let spec: ArchitectureSpec =
        serde_yaml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", arch.display())))?;
    spec.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let input = match (spec.window, input_dim) {
        (Some(w), _) => 2 * w.size,
        (None, Some(n)) => n,
        (None, None) => return Err(CliError::Validation("--input-dim is required for specs without a window".into())),
    };
    let output = spec
        .output_dim
        .or(output_dim)
        .ok_or_else(|| CliError::Validation("--output-dim is required when the spec has no output_dim".into()))?;
    let hls = resolve_hls(cli, hls_args)?;
    let board = hls.board.resolve().map_err(|e| CliError::Validation(e.to_string()))?;
    let model = match surrogate {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            CostModel::Surrogate(Box::new(
                SurrogateModel::from_json(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?,
            ))
        }
        None => CostModel::Oracle,
    };
    let est = model.estimate(&spec, input, output, &hls, &board).map_err(CliError::Runtime)?;
    let bops = spec_bops(&spec, input, output, hls.default_precision.total_bits());
    println!("source: {}", if surrogate.is_some() { "surrogate" } else { "analytic" });
    println!("board: {}  precision: {}  reuse factor: {}", board.name, hls.default_precision, hls.reuse_factor);
    println!("{est}");
    println!("mean utilization: {:.4}%", hwnas_core::cost::mean_utilization(&est));
    println!("bops: {bops}");
    Ok(())
}

pub fn cmd_export_firmware(
    cli: &Cli,
    result: &Path,
    hls_args: &HlsArgs,
    checkpoint: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let r = CompressionResult::load(result).map_err(|e| CliError::Validation(format!("{}: {e}", result.display())))?;
    let net = r.network().map_err(|e| CliError::Validation(format!("{}: {e}", result.display())))?;
    let hls = resolve_hls(cli, hls_args)?;
    let board = hls.board.resolve().map_err(|e| CliError::Validation(e.to_string()))?;
    let mut ctx = ExportContext::default();
    if let Some(p) = checkpoint {
        let ck = Checkpoint::load(p)?;
        ctx.study = Some(ck.study);
        ctx.trial_id = Some(ck.trial_id);
        ctx.architecture = ck.architecture;
        ctx.metrics = ck.objectives.into_iter().collect::<BTreeMap<_, _>>();
    }
    ctx.metrics.insert("compressed_val_metric".into(), r.best_metric);
    ctx.metrics.insert("best_iteration".into(), r.best_iteration as f64);
    let d = FirmwareDescriptor::from_network(&net, r.precision, &hls, &board, ctx);
    crate::write_atomic(out, d.to_json().as_bytes())?;
    println!("{} layers at {} -> {}", d.layers.len(), d.precision, out.display());
    Ok(())
}

pub fn cmd_gen_data(table: &DatasetTable, out: &Path) -> Result<(), CliError> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(runtime(&dir.display().to_string()))?;
    }
    export_csv(table, out).map_err(runtime(&out.display().to_string()))?;
    DatasetSchema::of(table).write(out).map_err(runtime("schema"))?;
    println!("{} rows x {} features -> {}", table.len(), table.n_features(), out.display());
    Ok(())
}

pub fn cmd_doctor(cli: &Cli) -> Result<(), CliError> {
    let mut problems = Vec::new();
    let loaded = match &cli.config {
        Some(p) => match load(cli) {
            Ok(l) => {
                println!("config {}: ok ({} parameters, {} objectives)", p.display(), l.cfg.space.len(), l.cfg.objectives.len());
                match load_data(&l) {
                    Ok(d) => println!("dataset: {} rows, {} features, {} classes", d.len(), d.n_features(), d.class_count),
                    Err(e) => problems.push(e.to_string()),
                }
                Some(l)
            }
            Err(e) => return Err(e),
        },
        None => None,
    };
    let dir = store_dir(cli, loaded.as_ref().map(|l| &l.cfg))?;
    if !dir.join("meta.json").exists() {
        println!("store {}: not created yet", dir.display());
    } else {
        match StudyHandle::open_existing(&dir) {
            Ok(mut h) => {
                if let Some(l) = &loaded {
                    let meta = StudyMeta::new(&l.cfg.study.name, l.cfg.objectives.clone(), l.cfg.space.digest());
                    if let Err(e) = h.meta().check_compatible(&meta) {
                        problems.push(e.to_string());
                    }
                }
                let state = h.state()?;
                let now = hwnas_core::store::now_secs();
                println!(
                    "store {}: {} complete, {} failed, {} running",
                    dir.display(),
                    state.count(TrialState::Complete),
                    state.count(TrialState::Failed),
                    state.count(TrialState::Running)
                );
                let window = loaded.as_ref().and_then(|l| l.cfg.runtime.stale_after_secs).unwrap_or(3600);
                let stale = state.stale(now, Duration::from_secs(window));
                if !stale.is_empty() {
                    println!("{} RUNNING claims older than {window} s", stale.len());
                }
            }
            Err(e) => problems.push(e.to_string()),
        }
    }
    if problems.is_empty() {
        println!("ok");
        Ok(())
    } else {
        Err(CliError::Validation(problems.join("; ")))
    }
}

pub fn cmd_train_surrogate(cli: &Cli, out: Option<&Path>, holdout: usize) -> Result<(), CliError> {
    let l = load(cli)?;
    let data = load_data(&l)?;
    let cfg = &l.cfg;
    let model = fit_surrogate(cfg, &data)?;
    if holdout > 0 {
        let test = surrogate_training_set(cfg, &data, holdout, derive_seed(cfg.study.seed, 0x7E57))?;
        let feats: Vec<_> = test.iter().map(|s| &s.0).collect();
        let pred = model.predict_counts(&feats).map_err(runtime("surrogate"))?;
        for (t, name) in SURROGATE_TARGETS.iter().enumerate() {
            let truth: Vec<f64> = test.iter().map(|s| [s.1.lut, s.1.ff, s.1.dsp, s.1.bram, s.1.latency_cycles][t]).collect();
            let p: Vec<f64> = pred.iter().map(|r| r[t]).collect();
            println!("{name}: held-out spearman {:.4}", spearman(&truth, &p));
        }
    }
    let store = PathBuf::from(&cfg.study.store);
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| surrogate_path(cfg, &store, &l.dir));
    crate::write_atomic(&path, model.to_json().as_bytes())?;
    println!("surrogate -> {}", path.display());
    Ok(())
}
