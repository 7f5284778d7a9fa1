//! `gig`: data generation, training, calibration, composition and
//! attribution from the command line.

mod audit;
mod compose;
mod error;
mod explain;
mod plot;
mod table;

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gig_core::calibration::{fit_ecdf, DEFAULT_KNOTS};
use gig_core::continuous::QuadratureConfig;
use gig_core::corner::{shapley, LiftSpec};
use gig_core::datasets::{gen_moons, gen_ovals, Dataset, GenSpec};
use gig_core::engine::EngineConfig;
use gig_core::gbm::{train_gbm, TrainParams};
use gig_core::model::CompositionGraph;
use gig_core::{Exact, Table};
use log::info;
use serde::Serialize;

use crate::error::{CliError, CliResult};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  tolerance violation: an efficiency residual above --tolerance, a failed
     audit check, or a row that could not be explained
  2  input error: missing or unreadable file, malformed JSON/CSV, schema or
     arity mismatch, invalid argument
  3  capacity error: a corner radix above --max-radix

Set GIG_LOG (error, warn, info, debug, trace) to control logging on stderr.";

#[derive(Parser)]
#[command(name = "gig", version, about = "Generalized integrated gradients for tree/continuous model compositions")]
#[command(after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-class dataset as CSV.
    GenData(GenDataArgs),
    /// Train a gradient-boosted tree model on a labelled CSV.
    Train(TrainArgs),
    /// Fit a piecewise-linear ECDF curve to a score column or model scores.
    FitEcdf(FitEcdfArgs),
    /// Merge submodels, ECDF curves and a combiner into one model file.
    Compose(ComposeArgs),
    /// Attribute model differences between a baseline and dataset rows.
    #[command(after_help = EXIT_CODES)]
    Explain(explain::ExplainArgs),
    /// Check the attribution axioms on random pairs of dataset rows.
    #[command(after_help = EXIT_CODES)]
    Audit(audit::AuditArgs),
    /// Print Shapley values of the empty-set, N and half-weight lifts.
    LiftDemo(LiftDemoArgs),
    /// Dump a model's split thresholds per feature as JSON.
    Boundaries(BoundariesArgs),
    /// Draw credit scatter plots and histograms from an explain CSV.
    Plot(plot::PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    Moons,
    Ovals,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    kind: DataKind,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Append a `nuisance` column: mix * label + (1 - mix) * N(0, 1).
    #[arg(long)]
    nuisance_mix: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Labelled CSV (label column last).
    #[arg(long)]
    data: PathBuf,
    /// Model JSON to write.
    #[arg(long)]
    out: PathBuf,
    /// Training report JSON; defaults to `<out>.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 25)]
    trees: usize,
    #[arg(long, default_value_t = 6)]
    depth: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 2)]
    min_leaf: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FitEcdfArgs {
    /// CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Score column to fit.
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    column: Option<String>,
    /// Fit to this model's outputs on the CSV's feature rows instead.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_KNOTS)]
    knots: usize,
    /// Curve JSON to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ComposeArgs {
    /// Composition spec JSON; relative paths inside resolve against its directory.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LiftDemoArgs {
    /// f(x), as an integer, decimal or fraction such as 7/3.
    #[arg(long, allow_hyphen_values = true)]
    f: String,
    /// Number of players.
    #[arg(long)]
    n: usize,
}

#[derive(Args)]
struct BoundariesArgs {
    #[arg(long)]
    model: PathBuf,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Quadrature and tolerance settings shared by `explain` and `audit`.
#[derive(Args, Clone)]
pub struct EngineArgs {
    /// Gauss-Legendre nodes per panel.
    #[arg(long, default_value_t = 16)]
    quad_nodes: usize,
    /// Panels per path segment.
    #[arg(long, default_value_t = 8)]
    quad_panels: usize,
    /// Adaptive panel bisection; `auto` turns it on for curves and ReLUs.
    #[arg(long, value_enum, default_value_t = Refine::Auto)]
    quad_refine: Refine,
    /// Largest accepted change of a panel's credit under one bisection.
    #[arg(long, default_value_t = 1e-8)]
    quad_tol: f64,
    /// Largest tolerated |sum of credits - (f(e) - f(s))|.
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    /// Largest corner radix to evaluate (2^radix model evaluations).
    #[arg(long, default_value_t = 20)]
    max_radix: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Refine {
    Auto,
    On,
    Off,
}

impl EngineArgs {
    pub fn config(&self) -> CliResult<EngineConfig> {
        let cfg = EngineConfig {
            quadrature: QuadratureConfig {
                nodes_per_panel: self.quad_nodes,
                panels: self.quad_panels,
                refine: match self.quad_refine {
                    Refine::Auto => None,
                    Refine::On => Some(true),
                    Refine::Off => Some(false),
                },
                refine_tol: self.quad_tol,
                ..Default::default()
            },
            efficiency_tol: self.tolerance,
            max_radix: self.max_radix,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GIG_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(&a),
        Command::Train(a) => train(&a),
        Command::FitEcdf(a) => fit_ecdf_cmd(&a),
        Command::Compose(a) => compose::run(&a.spec, &a.out),
        Command::Explain(a) => explain::run(&a),
        Command::Audit(a) => audit::run(&a),
        Command::LiftDemo(a) => lift_demo(&a),
        Command::Boundaries(a) => boundaries(&a),
        Command::Plot(a) => plot::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("gig: {err}");
            ExitCode::from(err.code())
        }
    }
}

pub fn load_model(path: &Path) -> CliResult<CompositionGraph<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    CompositionGraph::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Writes to stdout; a reader that went away (`gig ... | head`) is not an error.
fn print_stdout(text: &str) -> CliResult<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(CliError::Input(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn gen_data(a: &GenDataArgs) -> CliResult<()> {
    let spec = GenSpec {
        nuisance_mix: a.nuisance_mix,
        ..GenSpec::new(a.n, a.noise, a.seed)
    };
    let data = match a.kind {
        DataKind::Moons => gen_moons(&spec)?,
        DataKind::Ovals => gen_ovals(&spec)?,
    };
    let file = fs::File::create(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    data.write_csv_to(file)?;
    info!("wrote {} rows to {}", data.n_rows(), a.out.display());
    Ok(())
}

fn train(a: &TrainArgs) -> CliResult<()> {
    let data = Dataset::read_csv(&a.data).map_err(|e| CliError::from_core_at(&a.data, e))?;
    let params = TrainParams {
        n_trees: a.trees,
        max_depth: a.depth,
        learning_rate: a.learning_rate,
        min_leaf: a.min_leaf,
        lambda: a.lambda,
        seed: a.seed,
    };
    let (model, report) = train_gbm(&data, &params)?;
    let graph = model.to_graph()?;
    let text = graph.to_json()?;
    fs::write(&a.out, text + "\n").map_err(|e| CliError::io(&a.out, e))?;
    let report_path = a.report.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".report.json");
        PathBuf::from(p)
    });
    write_json(&report_path, &report)?;
    if let Some(last) = report.rounds.last() {
        info!("trained {} trees: loss {:.4}, accuracy {:.4}", a.trees, last.loss, last.accuracy);
    }
    Ok(())
}

#[derive(Serialize)]
struct CurveFile<'a> {
    version: u32,
    kind: &'static str,
    samples_seen: usize,
    knots: &'a [[f64; 2]],
}

fn fit_ecdf_cmd(a: &FitEcdfArgs) -> CliResult<()> {
    let t = table::read(&a.data)?;
    let scores = match (&a.column, &a.model) {
        (Some(col), _) => t.column_by_name(col)?,
        (None, Some(model)) => {
            let g = load_model(model)?;
            table::check_arity(&t, g.n_features(), &a.data)?;
            t.rows.iter().map(|r| g.eval(r)).collect::<Result<Vec<_>, _>>()?
        }
        (None, None) => unreachable!("clap requires --column or --model"),
    };
    let fit = fit_ecdf(&scores, a.knots)?;
    write_json(
        &a.out,
        &CurveFile {
            version: gig_core::model::FORMAT_VERSION,
            kind: "pwl_curve",
            samples_seen: fit.samples_seen,
            knots: &fit.curve.knots,
        },
    )
}

fn lift_demo(a: &LiftDemoArgs) -> CliResult<()> {
    let f = parse_exact(&a.f)?;
    if a.n < 2 {
        return Err(CliError::Input("--n must be at least 2 for the half-weight lift".into()));
    }
    let empty = shapley(&LiftSpec::empty_set_lift(f.clone(), a.n)?)?;
    let full = shapley(&LiftSpec::n_lift(f.clone(), a.n)?)?;
    let half = shapley(&LiftSpec::half_weight_lift(f.clone(), a.n)?)?;
    let n = Exact::from_integer(a.n.into());
    let mut text = format!("f(x) = {f}, N = {}\n", a.n);
    let _ = writeln!(
        text,
        "{:>6}  {:>14}  {:>14}  {:>16}  {:>16}",
        "player", "empty-set lift", "N lift", "half-weight lift", "(f(x) - i) / N"
    );
    for i in 0..a.n {
        let claimed = (f.clone() - Exact::from_integer((i + 1).into())) / n.clone();
        let _ = writeln!(
            text,
            "{:>6}  {:>14}  {:>14}  {:>16}  {:>16}",
            i + 1,
            empty[i].to_string(),
            full[i].to_string(),
            half[i].to_string(),
            claimed.to_string()
        );
    }
    let sum: Exact = half.iter().sum();
    let _ = writeln!(text, "sum of half-weight lift values: {sum}");
    print_stdout(&text)
}

/// Integer, fraction `p/q`, or finite decimal (converted exactly).
fn parse_exact(s: &str) -> CliResult<Exact> {
    let s = s.trim();
    if let Ok(v) = s.parse::<Exact>() {
        return Ok(v);
    }
    s.parse::<f64>()
        .ok()
        .and_then(Exact::from_float)
        .ok_or_else(|| CliError::Input(format!("cannot parse {s:?} as a number")))
}

#[derive(Serialize)]
struct BoundaryDump<'a> {
    version: u32,
    n_features: usize,
    thresholds: &'a [Vec<f64>],
}

fn boundaries(a: &BoundariesArgs) -> CliResult<()> {
    let g = load_model(&a.model)?;
    let table = Table::extract(&g);
    let dump = BoundaryDump {
        version: gig_core::model::FORMAT_VERSION,
        n_features: g.n_features(),
        thresholds: &table.thresholds,
    };
    match &a.out {
        Some(path) => write_json(path, &dump),
        None => {
            let text = serde_json::to_string_pretty(&dump).map_err(|e| CliError::Input(e.to_string()))?;
            print_stdout(&(text + "\n"))
        }
    }
}
