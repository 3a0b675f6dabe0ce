//! Subcommand front end: simulate, fit, select, export-graph, report.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure. Every error line names the stage that failed.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use netinf::config::{InitChoice, RunConfig};
use netinf::em::{em_fit, FitResult, InitSpec};
use netinf::graph::{assemble_graph, export_graph, neighborhood, ExportFormat};
use netinf::io::{
    dataset_to_csv, load_dataset, load_model, model_to_json, selection_from_csv, FitRecord,
};
use netinf::model::{default_gene_names, random_sparse_params, simulate, Dims};
use netinf::report::{loglik_trace_csv, render_report, ReportInput};
use netinf::selection::{select_model, SelectionTable};
use netinf::{ErrorKind, NetinfError, Dataset64};

#[derive(Debug, Parser)]
#[command(name = "netinf", version, about = "Sparse network inference from replicated time series")]
struct Cli {
    /// Flat `key = value` settings file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Any config key, as KEY=VALUE. Repeatable; applied after the other flags.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a random sparse model and a dataset from it.
    Simulate(SimulateArgs),
    /// Fit one penalty tuple.
    Fit(FitArgs),
    /// Search the penalty grid and keep the minimum-AICc fit.
    Select(SelectArgs),
    /// Write the interaction graph of a model file.
    ExportGraph(ExportArgs),
    /// Re-render the report of a finished fit or select run.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    times: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset CSV: replicate,time,<genes...>
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    /// Subtract each gene's grand mean (default true).
    #[arg(long)]
    center: Option<bool>,
    /// fraction or absolute
    #[arg(long)]
    budget_mode: Option<String>,
    /// data or random
    #[arg(long)]
    init: Option<String>,
    /// Start from this model file (also supplies Q0).
    #[arg(long)]
    init_model: Option<PathBuf>,
    #[arg(long)]
    init_seed: Option<u64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    common: DataArgs,
    #[arg(long)]
    s_z: Option<f64>,
    #[arg(long)]
    s_b: Option<f64>,
    #[arg(long)]
    s_f: Option<f64>,
    #[arg(long)]
    s_a: Option<f64>,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[command(flatten)]
    common: DataArgs,
    /// Comma-separated budgets used on every axis.
    #[arg(long)]
    grid: Option<String>,
    /// coordinate or full
    #[arg(long)]
    search: Option<String>,
    /// Comma-separated hidden dimensions to try.
    #[arg(long)]
    k_values: Option<String>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    /// dot, edge-csv or json
    #[arg(long, default_value = "dot")]
    format: String,
    #[arg(long)]
    threshold: Option<f64>,
    /// Keep only edges touching this node.
    #[arg(long)]
    around: Option<String>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory holding fit.json (and selection.csv after select).
    /// Defaults to the output directory.
    #[arg(long)]
    run: Option<PathBuf>,
}

#[derive(Debug)]
struct StageError {
    stage: &'static str,
    err: NetinfError,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.err)
    }
}

type CliResult<T> = std::result::Result<T, StageError>;

trait Stage<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T, E: Into<NetinfError>> Stage<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|e| StageError { stage, err: e.into() })
    }
}

fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Validation => 2,
        ErrorKind::Numerical => 3,
    }
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let pool = match worker_pool() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("netinf: {e}");
            return exit_code(e.err.kind());
        }
    };
    let result = match &pool {
        Some(pool) => pool.install(|| dispatch(&cli)),
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("netinf: {e}");
            if let NetinfError::NoConvergedRows { table_csv, .. } = &e.err {
                eprintln!("{table_csv}");
            }
            exit_code(e.err.kind())
        }
    }
}

/// A dedicated pool when NETINF_THREADS is set. Results do not depend on
/// the worker count.
fn worker_pool() -> CliResult<Option<rayon::ThreadPool>> {
    let Ok(raw) = std::env::var("NETINF_THREADS") else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| NetinfError::InvalidArgument(format!("NETINF_THREADS: expected a positive integer, got '{raw}'")))
        .stage("environment")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| NetinfError::InvalidArgument(e.to_string()))
        .stage("environment")?;
    Ok(Some(pool))
}

fn push<V: ToString>(over: &mut Vec<(&'static str, String)>, key: &'static str, v: &Option<V>) {
    if let Some(v) = v {
        over.push((key, v.to_string()));
    }
}

fn data_overrides(a: &DataArgs, over: &mut Vec<(&'static str, String)>) {
    push(over, "k", &a.k);
    push(over, "center", &a.center);
    push(over, "budget_mode", &a.budget_mode);
    push(over, "init", &a.init);
    push(over, "init_model", &a.init_model.as_ref().map(|p| p.display().to_string()));
    push(over, "init_seed", &a.init_seed);
    push(over, "rel_tol", &a.rel_tol);
    push(over, "max_iter", &a.max_iter);
    push(over, "threshold", &a.threshold);
}

/// Defaults, then the config file, then flags, then `--set` pairs.
fn build_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .map_err(|e| NetinfError::InvalidArgument(format!("cannot read {}: {e}", path.display())))
            .stage("config")?;
        cfg.apply_text(&text).stage("config")?;
    }
    let mut over: Vec<(&'static str, String)> = Vec::new();
    push(&mut over, "out", &cli.out.as_ref().map(|p| p.display().to_string()));
    push(&mut over, "seed", &cli.seed);
    match &cli.command {
        Command::Simulate(a) => {
            push(&mut over, "sim_p", &a.p);
            push(&mut over, "k", &a.k);
            push(&mut over, "sim_times", &a.times);
            push(&mut over, "sim_reps", &a.reps);
            push(&mut over, "sim_density", &a.density);
            push(&mut over, "sim_scale", &a.scale);
        }
        Command::Fit(a) => {
            data_overrides(&a.common, &mut over);
            push(&mut over, "s_z", &a.s_z);
            push(&mut over, "s_b", &a.s_b);
            push(&mut over, "s_f", &a.s_f);
            push(&mut over, "s_a", &a.s_a);
        }
        Command::Select(a) => {
            data_overrides(&a.common, &mut over);
            push(&mut over, "grid", &a.grid);
            push(&mut over, "search", &a.search);
            push(&mut over, "k_values", &a.k_values);
        }
        Command::ExportGraph(a) => push(&mut over, "threshold", &a.threshold),
        Command::Report(_) => {}
    }
    for (key, value) in over {
        cfg.set(key, &value).stage("arguments")?;
    }
    for pair in &cli.set {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| NetinfError::InvalidArgument(format!("--set expects KEY=VALUE, got '{pair}'")))
            .stage("arguments")?;
        cfg.set(key.trim(), value).stage("arguments")?;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let cfg = build_config(cli)?;
    match &cli.command {
        Command::Simulate(_) => cmd_simulate(&cfg),
        Command::Fit(a) => cmd_fit(&cfg, &a.common.data),
        Command::Select(a) => cmd_select(&cfg, &a.common.data),
        Command::ExportGraph(a) => cmd_export(&cfg, a),
        Command::Report(a) => cmd_report(&cfg, a.run.as_deref().unwrap_or(&cfg.out)),
    }
}

fn write_out(cfg: &RunConfig, name: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(&cfg.out).stage("writing output")?;
    let path = cfg.out.join(name);
    fs::write(&path, contents).stage("writing output")?;
    Ok(path)
}

fn cmd_simulate(cfg: &RunConfig) -> CliResult<()> {
    let dims = Dims::new(cfg.sim_p, cfg.k, cfg.sim_times, cfg.sim_reps).stage("simulate")?;
    let truth = random_sparse_params::<f64>(&dims, cfg.sim_density, cfg.sim_scale, cfg.seed)
        .stage("simulate")?;
    // The data stream is seeded apart from the parameter draw.
    let (data, _) = simulate(&truth, &dims, cfg.seed.wrapping_add(1)).stage("simulate")?;
    let names = default_gene_names(dims.p);
    let data = Dataset64::new(data.replicates().to_vec(), names.clone(), dims.k).stage("simulate")?;
    write_out(cfg, "data.csv", &dataset_to_csv(&data).stage("simulate")?)?;
    write_out(cfg, "truth.json", &model_to_json(&truth, Some(&names)).stage("simulate")?)?;
    println!(
        "simulated {} replicates x {} times x {} genes (k={}) into {}",
        dims.n_reps,
        dims.n_times,
        dims.p,
        dims.k,
        cfg.out.display()
    );
    Ok(())
}

/// Puts the file name into I/O errors, which otherwise only carry the OS message.
fn with_path(path: &Path) -> impl Fn(NetinfError) -> NetinfError + '_ {
    move |e| match e {
        NetinfError::Io(io) => NetinfError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    }
}

fn load_data(cfg: &RunConfig, path: &Path) -> CliResult<Dataset64> {
    load_dataset(path, cfg.center, cfg.k).map_err(with_path(path)).stage("loading data")
}

fn init_spec(cfg: &RunConfig) -> CliResult<InitSpec<f64>> {
    Ok(match &cfg.init {
        InitChoice::DataDriven => InitSpec::DataDriven,
        InitChoice::Random => InitSpec::Random { seed: cfg.init_seed },
        InitChoice::Model(path) => {
            InitSpec::Explicit(load_model(path).map_err(with_path(path)).stage("loading init model")?.0)
        }
    })
}

/// Writes fit.json, loglik_trace.csv and report.txt for a finished fit.
fn write_fit_outputs(
    cfg: &RunConfig,
    fit: &FitResult<f64>,
    dims: &Dims,
    names: &[String],
    table: Option<&SelectionTable<f64>>,
) -> CliResult<String> {
    let record = FitRecord::new(fit, dims, Some(names));
    write_out(cfg, "fit.json", &record.to_json().stage("writing output")?)?;
    write_out(cfg, "loglik_trace.csv", &loglik_trace_csv(fit))?;
    let graph = assemble_graph(&fit.params, names, cfg.threshold).stage("report")?;
    let report = render_report(&ReportInput {
        dims: *dims,
        fit,
        selection: table,
        graph: &graph,
        threshold: cfg.threshold,
    });
    write_out(cfg, "report.txt", &report)?;
    Ok(report)
}

fn cmd_fit(cfg: &RunConfig, data_path: &Path) -> CliResult<()> {
    let data = load_data(cfg, data_path)?;
    let dims = data.dims();
    let pen = cfg.fit_penalties().stage("fit")?;
    let init = init_spec(cfg)?;
    let fit = em_fit(&data, &dims, &pen, &init, &cfg.opts).stage("fit")?;
    let names = data.gene_names();
    write_out(cfg, "model.json", &model_to_json(&fit.params, Some(names)).stage("writing output")?)?;
    write_fit_outputs(cfg, &fit, &dims, names, None)?;
    println!(
        "fit: {} iterations, converged {}, loglik {}, {} nonzeros",
        fit.n_iter,
        fit.converged,
        fit.final_loglik(),
        fit.nonzero_counts.total()
    );
    Ok(())
}

fn cmd_select(cfg: &RunConfig, data_path: &Path) -> CliResult<()> {
    let data = load_data(cfg, data_path)?;
    let dims = data.dims();
    let grid = cfg.grid_spec().stage("select")?;
    let init = init_spec(cfg)?;
    let (table, best) = select_model(&data, &dims, &grid, &init, &cfg.opts).stage("select")?;
    let best_dims = dims.with_k(best.params.k()).stage("select")?;
    let names = data.gene_names();
    write_out(cfg, "selection.csv", &table.to_csv())?;
    write_out(cfg, "best_model.json", &model_to_json(&best.params, Some(names)).stage("writing output")?)?;
    write_fit_outputs(cfg, &best, &best_dims, names, Some(&table))?;
    let row = table.best();
    println!(
        "select: {} grid points, best (s_Z, s_B, s_F, s_A) = {:?}, k={}, AICc {}, P_eff {}",
        table.rows.len(),
        row.penalties,
        row.k,
        row.aicc,
        row.p_eff
    );
    Ok(())
}

fn cmd_export(cfg: &RunConfig, a: &ExportArgs) -> CliResult<()> {
    let format: ExportFormat = a.format.parse().stage("export-graph")?;
    let (params, names) = load_model(&a.model).map_err(with_path(&a.model)).stage("loading model")?;
    let names = names.unwrap_or_else(|| default_gene_names(params.p()));
    let mut graph = assemble_graph(&params, &names, cfg.threshold).stage("export-graph")?;
    if let Some(center) = &a.around {
        graph = neighborhood(&graph, center).stage("export-graph")?;
    }
    let text = export_graph(&graph, format).stage("export-graph")?;
    let ext = match format {
        ExportFormat::Dot => "dot",
        ExportFormat::EdgeCsv => "csv",
        ExportFormat::Json => "json",
    };
    let path = write_out(cfg, &format!("graph.{ext}"), &text)?;
    println!("wrote {} ({} edges)", path.display(), graph.edges.len());
    Ok(())
}

fn cmd_report(cfg: &RunConfig, run_dir: &Path) -> CliResult<()> {
    let record_path = run_dir.join("fit.json");
    let text = fs::read_to_string(&record_path)
        .map_err(|e| with_path(&record_path)(e.into()))
        .stage("loading fit record")?;
    let (fit, dims, names) = FitRecord::from_json(&text)
        .and_then(FitRecord::into_parts)
        .stage("loading fit record")?;
    let names = names.unwrap_or_else(|| default_gene_names(dims.p));
    let sel_path = run_dir.join("selection.csv");
    let table = if sel_path.exists() {
        let text = fs::read_to_string(&sel_path).stage("loading selection table")?;
        Some(selection_from_csv(&text, cfg.budget_mode).stage("loading selection table")?)
    } else {
        None
    };
    let report = write_fit_outputs(cfg, &fit, &dims, &names, table.as_ref())?;
    print!("{report}");
    Ok(())
}
