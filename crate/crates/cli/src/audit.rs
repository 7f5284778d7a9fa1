use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use gig_core::boundary::PathQuery;
use gig_core::engine::{axiom_audit, AuditOptions, AuditReport, Explainer};
use gig_core::GigError;
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::explain::pool;
use crate::{load_model, table, write_json, EngineArgs};

#[derive(Args)]
pub struct AuditArgs {
    #[arg(long)]
    model: PathBuf,
    /// Rows to draw path endpoints from; a trailing `label` column is ignored.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100)]
    n_paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report JSON to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Serialize, Default)]
struct Maxima {
    efficiency: f64,
    reflexivity: f64,
    constant_variable: f64,
    null_variable: f64,
    symmetry: f64,
    corner_oracle: f64,
}

#[derive(Serialize)]
struct PathFailure {
    path: usize,
    start_row: usize,
    end_row: usize,
    #[serde(flatten)]
    report: AuditReport,
}

#[derive(Serialize)]
struct Summary {
    version: u32,
    n_paths: usize,
    seed: u64,
    tolerance: f64,
    passed: bool,
    max_deviation: Maxima,
    corners_checked: usize,
    /// Largest |credit| seen per feature over all paths.
    max_abs_credit: BTreeMap<String, f64>,
    failures: Vec<PathFailure>,
}

struct PathResult {
    report: AuditReport,
    credits: Result<Vec<f64>, GigError>,
}

pub fn run(a: &AuditArgs) -> CliResult<()> {
    let config = a.engine.config()?;
    let graph = load_model(&a.model)?;
    let data = table::read(&a.data)?;
    table::check_arity(&data, graph.n_features(), &a.data)?;
    if data.rows.len() < 2 {
        return Err(CliError::Input(format!("{}: need at least 2 rows", a.data.display())));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let n = graph.n_features();
    let plans: Vec<(usize, usize, Vec<usize>)> = (0..a.n_paths)
        .map(|_| {
            let s = rng.random_range(0..data.rows.len());
            let mut e = rng.random_range(0..data.rows.len() - 1);
            if e >= s {
                e += 1;
            }
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            (s, e, perm)
        })
        .collect();

    let explainer = Explainer::new(&graph, config.clone())?;
    let results: Vec<PathResult> = pool(a.jobs)?.install(|| {
        plans
            .par_iter()
            .map(|(s, e, perm)| {
                let q = PathQuery::new(data.rows[*s].clone(), data.rows[*e].clone()).expect("arity checked");
                let opts = AuditOptions {
                    linear_with: None,
                    permutation: Some(perm.clone()),
                };
                PathResult {
                    report: axiom_audit(&graph, &q, &config, &opts),
                    credits: explainer.explain(&q).map(|att| att.total),
                }
            })
            .collect()
    });

    let mut max = Maxima::default();
    let mut max_abs_credit: BTreeMap<String, f64> = data.names.iter().map(|n| (n.clone(), 0.0)).collect();
    let mut corners_checked = 0;
    let mut failures = Vec::new();
    let mut capacity = false;
    for (k, (res, (s, e, _))) in results.into_iter().zip(&plans).enumerate() {
        let r = &res.report;
        if r.error.is_none() {
            max.efficiency = max.efficiency.max(r.efficiency);
            max.reflexivity = max.reflexivity.max(r.reflexivity);
            max.constant_variable = max.constant_variable.max(r.constant_variable);
            max.null_variable = max.null_variable.max(r.null_variable);
            max.symmetry = max.symmetry.max(r.symmetry.unwrap_or(0.0));
            max.corner_oracle = max.corner_oracle.max(r.corner_oracle);
        }
        corners_checked += r.corners_checked;
        match &res.credits {
            Ok(credits) => {
                for (name, c) in data.names.iter().zip(credits) {
                    let slot = max_abs_credit.get_mut(name).expect("every name has a slot");
                    *slot = slot.max(c.abs());
                }
            }
            Err(GigError::RadixOverflow { .. }) => capacity = true,
            Err(_) => {}
        }
        if !r.passed {
            warn!("path {k} (rows {s} -> {e}) failed: {}", r.error.as_deref().unwrap_or("deviation above tolerance"));
            failures.push(PathFailure {
                path: k,
                start_row: *s,
                end_row: *e,
                report: res.report,
            });
        }
    }

    let summary = Summary {
        version: gig_core::model::FORMAT_VERSION,
        n_paths: a.n_paths,
        seed: a.seed,
        tolerance: config.efficiency_tol,
        passed: failures.is_empty(),
        max_deviation: max,
        corners_checked,
        max_abs_credit,
        failures,
    };
    write_json(&a.out, &summary)?;
    info!("audited {} paths, {} corners", a.n_paths, corners_checked);
    if capacity {
        return Err(CliError::Capacity("a path hit a corner above the radix limit".into()));
    }
    if !summary.passed {
        return Err(CliError::Tolerance(format!("{} of {} paths failed the audit", summary.failures.len(), a.n_paths)));
    }
    Ok(())
}
