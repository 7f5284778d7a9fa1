//! Assembles a full attribution: corner credit at every interior crossing,
//! endpoint credit where the path starts or ends on a split hyperplane, and
//! integrated gradients over the open segments in between.

use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{BoundaryTable, PathQuery};
use crate::continuous::{QuadratureConfig, Segment, SegmentIntegrator};
use crate::corner::{self, CornerContext, Endpoint, K_MAX};
use crate::error::{GigError, Result};
use crate::model::CompositionGraph;
use crate::scalar::{Exact, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub quadrature: QuadratureConfig,
    /// Fixed perturbation step instead of the computed safe one.
    pub delta_override: Option<f64>,
    pub efficiency_tol: f64,
    pub max_radix: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            quadrature: QuadratureConfig::default(),
            delta_override: None,
            efficiency_tol: 1e-5,
            max_radix: K_MAX,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.quadrature.validate()?;
        if let Some(d) = self.delta_override {
            if !(d > 0.0 && d.is_finite()) {
                return Err(GigError::InvalidArgument("delta_override must be positive".into()));
            }
        }
        if !(self.efficiency_tol > 0.0) {
            return Err(GigError::InvalidArgument("efficiency_tol must be positive".into()));
        }
        if self.max_radix == 0 || self.max_radix > K_MAX {
            return Err(GigError::InvalidArgument(format!("max_radix must be in 1..={K_MAX}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CrossingUsed<T> {
    pub alpha: T,
    pub radix: usize,
    pub features: Vec<usize>,
}

/// Per-feature credit for one path and its decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Attribution<T> {
    pub total: Vec<T>,
    pub zeta_sum: Vec<T>,
    pub iota_start: Vec<T>,
    pub iota_end: Vec<T>,
    pub integral: Vec<T>,
    pub crossings_used: Vec<CrossingUsed<T>>,
    pub delta: T,
    pub f_start: T,
    pub f_end: T,
    /// `sum(total) - (f_end - f_start)`, from the unrounded components.
    pub efficiency_residual: f64,
}

impl<T: Real> Attribution<T> {
    fn zero(n: usize, f: T) -> Self {
        let z = vec![T::zero(); n];
        Self {
            total: z.clone(),
            zeta_sum: z.clone(),
            iota_start: z.clone(),
            iota_end: z.clone(),
            integral: z,
            crossings_used: Vec::new(),
            delta: T::zero(),
            f_start: f,
            f_end: f,
            efficiency_residual: 0.0,
        }
    }

    pub fn within_tolerance(&self, tol: f64) -> bool {
        self.efficiency_residual.abs() <= tol
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ExplainRequest<T> {
    pub query: PathQuery<T>,
    pub config: EngineConfig,
}

/// A graph together with its boundary table and settings.
#[derive(Clone, Debug)]
pub struct Explainer<'g, T> {
    graph: &'g CompositionGraph<T>,
    table: BoundaryTable<T>,
    config: EngineConfig,
}

fn validate_query<T: Real>(graph: &CompositionGraph<T>, q: &PathQuery<T>) -> Result<()> {
    graph.check_arity(&q.s)?;
    graph.check_arity(&q.e)?;
    if q.s.iter().chain(&q.e).any(|v| !v.is_finite()) {
        return Err(GigError::NonFinite("path endpoint".into()));
    }
    Ok(())
}

fn add_exact(acc: &mut [Exact], v: Vec<Exact>) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

fn round_all<T: Real>(v: &[Exact]) -> Vec<T> {
    v.iter().map(T::from_exact).collect()
}

impl<'g, T: Real> Explainer<'g, T> {
    pub fn new(graph: &'g CompositionGraph<T>, config: EngineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            graph,
            table: BoundaryTable::extract(graph),
            config,
        })
    }

    pub fn graph(&self) -> &'g CompositionGraph<T> {
        self.graph
    }

    pub fn table(&self) -> &BoundaryTable<T> {
        &self.table
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    fn delta(&self, q: &PathQuery<T>, crossings: &[crate::boundary::Crossing<T>]) -> T {
        match self.config.delta_override {
            Some(d) => T::lit(d),
            None => self.table.safe_step(crossings, &q.s, &q.e),
        }
    }

    /// Interior corner contexts along the path, with the step used.
    pub fn corners(&self, q: &PathQuery<T>) -> Result<(T, Vec<CornerContext<'g, T>>)> {
        validate_query(self.graph, q)?;
        let crossings = self.table.enumerate_crossings(&q.s, &q.e);
        self.check_radix(crossings.iter().map(|c| c.radix()))?;
        let delta = self.delta(q, &crossings);
        let ctxs = crossings
            .iter()
            .map(|c| CornerContext::interior(self.graph, &self.table, c, &q.s, &q.e, delta))
            .collect();
        Ok((delta, ctxs))
    }

    fn check_radix(&self, radices: impl IntoIterator<Item = usize>) -> Result<()> {
        for r in radices {
            if r > self.config.max_radix {
                return Err(GigError::RadixOverflow {
                    radix: r,
                    max: self.config.max_radix,
                });
            }
        }
        Ok(())
    }

    pub fn explain(&self, q: &PathQuery<T>) -> Result<Attribution<T>> {
        validate_query(self.graph, q)?;
        let n = q.s.len();
        let f_start = self.graph.eval(&q.s)?;
        if q.is_empty() {
            return Ok(Attribution::zero(n, f_start));
        }
        let f_end = self.graph.eval(&q.e)?;

        let crossings = self.table.enumerate_crossings(&q.s, &q.e);
        self.check_radix(crossings.iter().map(|c| c.radix()))?;
        let delta = self.delta(q, &crossings);
        let start = CornerContext::endpoint(self.graph, &self.table, Endpoint::Start, &q.s, &q.e, delta);
        let end = CornerContext::endpoint(self.graph, &self.table, Endpoint::End, &q.s, &q.e, delta);
        self.check_radix(start.iter().chain(&end).map(|c| c.radix()))?;

        let mut zeta = vec![Exact::zero(); n];
        for c in &crossings {
            let ctx = CornerContext::interior(self.graph, &self.table, c, &q.s, &q.e, delta);
            add_exact(&mut zeta, corner::zeta(&ctx)?);
        }
        let iota_start = match &start {
            Some(ctx) => corner::iota(ctx, Endpoint::Start)?,
            None => vec![Exact::zero(); n],
        };
        let iota_end = match &end {
            Some(ctx) => corner::iota(ctx, Endpoint::End)?,
            None => vec![Exact::zero(); n],
        };

        let integral = if self.graph.is_piecewise_constant() {
            vec![T::zero(); n]
        } else {
            let mut integrator = SegmentIntegrator::new(self.graph, q, &self.config.quadrature)?;
            let mut bounds = vec![T::zero()];
            bounds.extend(crossings.iter().map(|c| c.alpha));
            bounds.push(T::one());
            let mut parts = Vec::with_capacity(bounds.len() - 1);
            for w in bounds.windows(2) {
                if w[0] < w[1] {
                    let seg = Segment::new(self.graph, &self.table, q, w[0], w[1], delta)?;
                    parts.push(integrator.integrate(&seg)?);
                }
            }
            // segments are summed left to right
            let mut acc = vec![T::zero(); n];
            for p in parts {
                for (a, v) in acc.iter_mut().zip(p) {
                    *a = *a + v;
                }
            }
            acc
        };

        let mut total = zeta.clone();
        add_exact(&mut total, iota_start.clone());
        add_exact(&mut total, iota_end.clone());
        add_exact(&mut total, integral.iter().map(|v| v.to_exact()).collect());
        let sum: Exact = total.iter().sum();
        let residual = sum - (f_end.to_exact() - f_start.to_exact());

        Ok(Attribution {
            total: round_all(&total),
            zeta_sum: round_all(&zeta),
            iota_start: round_all(&iota_start),
            iota_end: round_all(&iota_end),
            integral,
            crossings_used: crossings
                .iter()
                .map(|c| CrossingUsed {
                    alpha: c.alpha,
                    radix: c.radix(),
                    features: c.features.clone(),
                })
                .collect(),
            delta,
            f_start,
            f_end,
            efficiency_residual: residual.to_f64().unwrap_or(f64::INFINITY),
        })
    }

    /// Explains every query independently; order is preserved and one
    /// failure does not stop the rest.
    pub fn explain_batch(&self, queries: &[PathQuery<T>]) -> Vec<Result<Attribution<T>>> {
        queries.par_iter().map(|q| self.explain(q)).collect()
    }
}

pub fn explain<T: Real>(graph: &CompositionGraph<T>, req: &ExplainRequest<T>) -> Result<Attribution<T>> {
    Explainer::new(graph, req.config.clone())?.explain(&req.query)
}

pub fn explain_batch<T: Real>(
    graph: &CompositionGraph<T>,
    queries: &[PathQuery<T>],
    config: &EngineConfig,
) -> Result<Vec<Result<Attribution<T>>>> {
    Ok(Explainer::new(graph, config.clone())?.explain_batch(queries))
}

/// Extra checks [`axiom_audit`] can run.
#[derive(Clone, Debug, Default)]
pub struct AuditOptions<'a, T> {
    /// Second graph and coefficients for the linearity check.
    pub linear_with: Option<(&'a CompositionGraph<T>, T, T)>,
    /// Feature relabeling for the symmetry check: feature `i` becomes `perm[i]`.
    pub permutation: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub efficiency: f64,
    pub reflexivity: f64,
    pub constant_variable: f64,
    pub null_variable: f64,
    pub linearity: Option<f64>,
    pub symmetry: Option<f64>,
    pub corner_oracle: f64,
    pub corners_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
    pub error: Option<String>,
}

impl AuditReport {
    fn failed(tol: f64, err: &GigError) -> Self {
        Self {
            efficiency: f64::NAN,
            reflexivity: f64::NAN,
            constant_variable: f64::NAN,
            null_variable: f64::NAN,
            linearity: None,
            symmetry: None,
            corner_oracle: f64::NAN,
            corners_checked: 0,
            tolerance: tol,
            passed: false,
            error: Some(err.to_string()),
        }
    }
}

fn max_abs_diff<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x - *y).abs().to_f64().unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max)
}

/// Empirical axiom checks for one path. Never fails; problems are recorded
/// in the report.
pub fn axiom_audit<T: Real>(
    graph: &CompositionGraph<T>,
    q: &PathQuery<T>,
    config: &EngineConfig,
    opts: &AuditOptions<'_, T>,
) -> AuditReport {
    let tol = config.efficiency_tol;
    match audit_inner(graph, q, config, opts) {
        Ok(r) => r,
        Err(err) => AuditReport::failed(tol, &err),
    }
}

fn audit_inner<T: Real>(
    graph: &CompositionGraph<T>,
    q: &PathQuery<T>,
    config: &EngineConfig,
    opts: &AuditOptions<'_, T>,
) -> Result<AuditReport> {
    let tol = config.efficiency_tol;
    let ex = Explainer::new(graph, config.clone())?;
    let fwd = ex.explain(q)?;
    let rev = ex.explain(&q.reversed())?;

    let reflexivity = fwd
        .total
        .iter()
        .zip(&rev.total)
        .map(|(a, b)| (*a + *b).abs().to_f64().unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let constant_variable = (0..q.s.len())
        .filter(|&i| q.s[i] == q.e[i])
        .map(|i| fwd.total[i].abs().to_f64().unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let used = graph.used_features();
    let null_variable = (0..q.s.len())
        .filter(|i| !used.contains(i))
        .map(|i| fwd.total[i].abs().to_f64().unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);

    let linearity = match opts.linear_with {
        Some((other, a, b)) => {
            let combo = CompositionGraph::linear_combination(&[(a, graph), (b, other)], T::zero())?;
            let lhs = Explainer::new(&combo, config.clone())?.explain(q)?;
            let rhs_other = Explainer::new(other, config.clone())?.explain(q)?;
            let rhs: Vec<T> = fwd
                .total
                .iter()
                .zip(&rhs_other.total)
                .map(|(x, y)| a * *x + b * *y)
                .collect();
            Some(max_abs_diff(&lhs.total, &rhs))
        }
        None => None,
    };

    let symmetry = match &opts.permutation {
        Some(perm) => {
            let pg = graph.permute_features(perm)?;
            let mut ps = q.s.clone();
            let mut pe = q.e.clone();
            for (i, &p) in perm.iter().enumerate() {
                ps[p] = q.s[i];
                pe[p] = q.e[i];
            }
            let pa = Explainer::new(&pg, config.clone())?.explain(&PathQuery::new(ps, pe)?)?;
            let mapped: Vec<T> = perm.iter().map(|&p| pa.total[p]).collect();
            Some(max_abs_diff(&mapped, &fwd.total))
        }
        None => None,
    };

    let (_, corners) = ex.corners(q)?;
    let mut corner_oracle = Exact::zero();
    for ctx in &corners {
        let z = corner::zeta(ctx)?;
        let o = corner::shapley_lift_oracle(ctx)?;
        for (a, b) in z.iter().zip(&o) {
            let d = (a - b).abs();
            if d > corner_oracle {
                corner_oracle = d;
            }
        }
    }
    let corner_oracle = corner_oracle.to_f64().unwrap_or(f64::INFINITY);

    let efficiency = fwd.efficiency_residual.abs();
    let passed = efficiency <= tol
        && reflexivity <= 2.0 * tol
        && constant_variable == 0.0
        && null_variable == 0.0
        && linearity.is_none_or(|d| d <= tol)
        && symmetry.is_none_or(|d| d == 0.0)
        && corner_oracle == 0.0;
    Ok(AuditReport {
        efficiency,
        reflexivity,
        constant_variable,
        null_variable,
        linearity,
        symmetry,
        corner_oracle,
        corners_checked: corners.len(),
        tolerance: tol,
        passed,
        error: None,
    })
}
