use std::fs::File;
use std::path::{Path, PathBuf};

use clap::Args;
use gig_core::boundary::PathQuery;
use gig_core::engine::{Attribution, Explainer};
use gig_core::GigError;
use log::{info, warn};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::{load_model, table, write_json, EngineArgs};

#[derive(Args)]
pub struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV of rows to explain; a trailing `label` column is ignored.
    #[arg(long)]
    data: PathBuf,
    /// Use this row of --data as the baseline instead of the feature-wise median.
    #[arg(long)]
    baseline_row: Option<usize>,
    /// Comma-separated row indices to explain; all rows by default.
    #[arg(long, value_delimiter = ',')]
    rows: Option<Vec<usize>>,
    /// Credits CSV: one line per explained row.
    #[arg(long)]
    out: PathBuf,
    /// JSON with the full decomposition of every row.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Serialize)]
struct Report<'a> {
    version: u32,
    feature_names: &'a [String],
    baseline: &'a [f64],
    tolerance: f64,
    rows: Vec<RowReport<'a>>,
}

#[derive(Serialize)]
struct RowReport<'a> {
    row: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    attribution: Option<&'a Attribution<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn pool(jobs: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Input("--jobs must be at least 1".into()));
        }
        b = b.num_threads(j);
    }
    b.build().map_err(|e| CliError::Input(e.to_string()))
}

pub fn run(a: &ExplainArgs) -> CliResult<()> {
    let config = a.engine.config()?;
    let graph = load_model(&a.model)?;
    let data = table::read(&a.data)?;
    table::check_arity(&data, graph.n_features(), &a.data)?;
    let n_rows = data.rows.len();
    let check_row = |r: usize| {
        if r >= n_rows {
            Err(CliError::Input(format!("row {r} is out of range: {} has {n_rows} rows", a.data.display())))
        } else {
            Ok(r)
        }
    };
    let baseline = match a.baseline_row {
        Some(r) => data.rows[check_row(r)?].clone(),
        None => data.median()?,
    };
    let rows: Vec<usize> = match &a.rows {
        Some(list) => list.iter().map(|&r| check_row(r)).collect::<CliResult<_>>()?,
        None => (0..n_rows).collect(),
    };
    let queries = rows
        .iter()
        .map(|&r| PathQuery::new(baseline.clone(), data.rows[r].clone()))
        .collect::<Result<Vec<_>, _>>()?;

    let explainer = Explainer::new(&graph, config.clone())?;
    let results = pool(a.jobs)?.install(|| explainer.explain_batch(&queries));

    write_csv(&a.out, &data.names, &rows, &results)?;
    if let Some(path) = &a.json {
        let report = Report {
            version: gig_core::model::FORMAT_VERSION,
            feature_names: &data.names,
            baseline: &baseline,
            tolerance: config.efficiency_tol,
            rows: rows
                .iter()
                .zip(&results)
                .map(|(&row, res)| RowReport {
                    row,
                    attribution: res.as_ref().ok(),
                    error: res.as_ref().err().map(ToString::to_string),
                })
                .collect(),
        };
        write_json(path, &report)?;
    }
    info!("explained {} rows", rows.len());
    outcome(&rows, &results, config.efficiency_tol)
}

fn write_csv(
    path: &Path,
    names: &[String],
    rows: &[usize],
    results: &[Result<Attribution<f64>, GigError>],
) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let fail = |e: csv::Error| CliError::Input(format!("{}: {e}", path.display()));
    let mut header = vec!["row".to_string()];
    header.extend(names.iter().map(|n| format!("credit_{n}")));
    header.extend(["residual", "f_start", "f_end", "error"].map(String::from));
    w.write_record(&header).map_err(fail)?;
    for (&row, res) in rows.iter().zip(results) {
        let mut rec = vec![row.to_string()];
        match res {
            Ok(att) => {
                rec.extend(att.total.iter().map(|v| v.to_string()));
                rec.push(att.efficiency_residual.to_string());
                rec.push(att.f_start.to_string());
                rec.push(att.f_end.to_string());
                rec.push(String::new());
            }
            Err(err) => {
                rec.extend(std::iter::repeat_n(String::new(), names.len() + 3));
                rec.push(err.to_string());
            }
        }
        w.write_record(&rec).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Exit status after all outputs are written: capacity errors win over
/// tolerance problems.
fn outcome(rows: &[usize], results: &[Result<Attribution<f64>, GigError>], tol: f64) -> CliResult<()> {
    let mut capacity = 0;
    let mut failed = 0;
    let mut over = 0;
    for (&row, res) in rows.iter().zip(results) {
        match res {
            Err(err @ GigError::RadixOverflow { .. }) => {
                warn!("row {row}: {err}");
                capacity += 1;
            }
            Err(err) => {
                warn!("row {row}: {err}");
                failed += 1;
            }
            Ok(att) if !att.within_tolerance(tol) => {
                warn!("row {row}: efficiency residual {:e} exceeds {tol:e}", att.efficiency_residual);
                over += 1;
            }
            Ok(_) => {}
        }
    }
    if capacity > 0 {
        return Err(CliError::Capacity(format!("{capacity} rows hit a corner above the radix limit")));
    }
    if failed + over > 0 {
        return Err(CliError::Tolerance(format!(
            "{over} rows exceed the efficiency tolerance, {failed} rows failed"
        )));
    }
    Ok(())
}
