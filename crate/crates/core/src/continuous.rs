//! Integrated-gradients credit over the open path segments between
//! crossings, where every tree output is frozen.

use serde::{Deserialize, Serialize};

use crate::boundary::{BoundaryTable, PathQuery};
use crate::error::{GigError, Result};
use crate::model::{CellAssignment, CompositionGraph, Workspace};
use crate::quadrature::GaussLegendre;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    pub nodes_per_panel: usize,
    pub panels: usize,
    /// Adaptive panel bisection. `None` turns it on when the graph has
    /// curve knots or ReLU units.
    pub refine: Option<bool>,
    /// Largest accepted change of a panel's credit under one bisection.
    pub refine_tol: f64,
    pub max_depth: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            nodes_per_panel: 16,
            panels: 8,
            refine: None,
            refine_tol: 1e-8,
            max_depth: 30,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_panel < 2 {
            return Err(GigError::InvalidArgument("quadrature needs at least 2 nodes per panel".into()));
        }
        if self.panels < 1 {
            return Err(GigError::InvalidArgument("quadrature needs at least 1 panel".into()));
        }
        if !(self.refine_tol > 0.0) {
            return Err(GigError::InvalidArgument("refine_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn refines<T: Real>(&self, graph: &CompositionGraph<T>) -> bool {
        self.refine.unwrap_or_else(|| graph.has_kinks())
    }
}

/// An open piece `(alpha_lo, alpha_hi)` of the path with its tree outputs.
#[derive(Clone, Debug)]
pub struct Segment<T> {
    pub alpha_lo: T,
    pub alpha_hi: T,
    pub cells: CellAssignment<T>,
}

impl<T: Real> Segment<T> {
    /// Probes the cell at the midpoint. Coordinates pinned on a threshold
    /// (the path does not move along them) are pushed `delta` to their
    /// routing side.
    pub fn new(
        graph: &CompositionGraph<T>,
        table: &BoundaryTable<T>,
        q: &PathQuery<T>,
        alpha_lo: T,
        alpha_hi: T,
        delta: T,
    ) -> Result<Self> {
        if !(alpha_lo < alpha_hi) {
            return Err(GigError::InvalidArgument("empty segment".into()));
        }
        let mid = q.point((alpha_lo + alpha_hi) / T::lit(2.0));
        let probe = table.off_grid(&mid, delta, &[]);
        Ok(Self {
            alpha_lo,
            alpha_hi,
            cells: CellAssignment::new(graph, probe)?,
        })
    }
}

/// Reusable quadrature state for one path.
pub struct SegmentIntegrator<'g, T> {
    graph: &'g CompositionGraph<T>,
    s: Vec<T>,
    e: Vec<T>,
    dir: Vec<T>,
    rule: GaussLegendre<T>,
    cfg: QuadratureConfig,
    refine: bool,
    tol: T,
    ws: Workspace<T>,
    grad: Vec<T>,
    x: Vec<T>,
    sig: Vec<u32>,
    sig0: Vec<u32>,
}

impl<'g, T: Real> SegmentIntegrator<'g, T> {
    pub fn new(graph: &'g CompositionGraph<T>, q: &PathQuery<T>, cfg: &QuadratureConfig) -> Result<Self> {
        cfg.validate()?;
        graph.check_arity(&q.s)?;
        graph.check_arity(&q.e)?;
        let n = q.s.len();
        Ok(Self {
            graph,
            s: q.s.clone(),
            e: q.e.clone(),
            dir: q.s.iter().zip(&q.e).map(|(a, b)| *b - *a).collect(),
            rule: GaussLegendre::new(cfg.nodes_per_panel),
            refine: cfg.refines(graph),
            tol: T::lit(cfg.refine_tol),
            cfg: cfg.clone(),
            ws: Workspace::default(),
            grad: vec![T::zero(); n],
            x: vec![T::zero(); n],
            sig: Vec::new(),
            sig0: Vec::new(),
        })
    }

    /// `(e - s) * int_lo^hi grad eval_split(path(alpha), cells) d alpha`.
    pub fn integrate(&mut self, seg: &Segment<T>) -> Result<Vec<T>> {
        let n = self.s.len();
        if self.graph.is_piecewise_constant() {
            return Ok(vec![T::zero(); n]);
        }
        let p = self.cfg.panels;
        let h = (seg.alpha_hi - seg.alpha_lo) / T::from_usize_lossy(p);
        let mut pieces = Vec::with_capacity(p);
        for k in 0..p {
            let a = seg.alpha_lo + h * T::from_usize_lossy(k);
            let b = if k + 1 == p {
                seg.alpha_hi
            } else {
                seg.alpha_lo + h * T::from_usize_lossy(k + 1)
            };
            let (est, _) = self.panel(a, b, &seg.cells)?;
            let piece = if self.refine {
                self.adapt(a, b, est, 0, &seg.cells)?
            } else {
                est
            };
            pieces.push(piece);
        }
        let mut out = pairwise(&pieces);
        for (v, d) in out.iter_mut().zip(&self.dir) {
            if *d == T::zero() {
                *v = T::zero();
            }
        }
        Ok(out)
    }

    /// One Gauss–Legendre panel, already scaled by `(e - s)`. The rule is
    /// applied to the deviation from the first node's gradient, so a
    /// constant integrand is reproduced exactly. With refinement on, also
    /// reports whether the endpoints and all nodes share one kink signature.
    fn panel(&mut self, a: T, b: T, cells: &CellAssignment<T>) -> Result<(Vec<T>, bool)> {
        let h = b - a;
        let mut acc = vec![T::zero(); self.s.len()];
        let mut anchor = vec![T::zero(); self.s.len()];
        let mut smooth = true;
        if self.refine {
            self.set_x(a);
            self.graph.eval_split_with(&self.x, cells, &mut self.ws)?;
            self.graph.kink_signature(&self.ws, &mut self.sig0);
            self.set_x(b);
            self.graph.eval_split_with(&self.x, cells, &mut self.ws)?;
            self.graph.kink_signature(&self.ws, &mut self.sig);
            smooth = self.sig == self.sig0;
        }
        for q in 0..self.rule.len() {
            let alpha = a + h * self.rule.nodes[q];
            self.set_x(alpha);
            self.graph
                .gradient_into(&self.x, cells, &mut self.ws, &mut self.grad)
                .map_err(|err| match err {
                    GigError::NonFinite(_) => GigError::NonFinite(format!("gradient at alpha = {alpha}")),
                    other => other,
                })?;
            if q == 0 {
                anchor.copy_from_slice(&self.grad);
            }
            if self.refine && smooth {
                self.graph.kink_signature(&self.ws, &mut self.sig);
                smooth = self.sig == self.sig0;
            }
            let w = self.rule.weights[q];
            for ((acc, g), g0) in acc.iter_mut().zip(&self.grad).zip(&anchor) {
                *acc = *acc + w * (*g - *g0);
            }
        }
        for ((v, d), g0) in acc.iter_mut().zip(&self.dir).zip(&anchor) {
            *v = ((*v + *g0) * h) * *d;
        }
        Ok((acc, smooth))
    }

    fn set_x(&mut self, alpha: T) {
        for i in 0..self.x.len() {
            self.x[i] = if self.s[i] == self.e[i] {
                self.s[i]
            } else {
                (T::one() - alpha) * self.s[i] + alpha * self.e[i]
            };
        }
    }

    /// Bisects until halving changes the credit by at most `refine_tol`
    /// and neither half contains a kink, or `max_depth` is reached.
    fn adapt(
        &mut self,
        a: T,
        b: T,
        est: Vec<T>,
        depth: usize,
        cells: &CellAssignment<T>,
    ) -> Result<Vec<T>> {
        let m = (a + b) / T::lit(2.0);
        if depth >= self.cfg.max_depth || !(a < m && m < b) {
            return Ok(est);
        }
        let (left, left_smooth) = self.panel(a, m, cells)?;
        let (right, right_smooth) = self.panel(m, b, cells)?;
        let change = left
            .iter()
            .zip(&right)
            .zip(&est)
            .map(|((l, r), e)| (*l + *r - *e).abs())
            .fold(T::zero(), T::max);
        if change <= self.tol && left_smooth && right_smooth {
            return Ok(left.iter().zip(&right).map(|(l, r)| *l + *r).collect());
        }
        let l = self.adapt(a, m, left, depth + 1, cells)?;
        let r = self.adapt(m, b, right, depth + 1, cells)?;
        Ok(l.iter().zip(&r).map(|(l, r)| *l + *r).collect())
    }
}

/// Componentwise sum in a fixed pairwise order.
fn pairwise<T: Real>(pieces: &[Vec<T>]) -> Vec<T> {
    match pieces.len() {
        0 => Vec::new(),
        1 => pieces[0].clone(),
        n => {
            let (a, b) = pieces.split_at(n / 2);
            pairwise(a).iter().zip(pairwise(b)).map(|(x, y)| *x + y).collect()
        }
    }
}

pub fn segment_ig<T: Real>(
    graph: &CompositionGraph<T>,
    q: &PathQuery<T>,
    seg: &Segment<T>,
    cfg: &QuadratureConfig,
) -> Result<Vec<T>> {
    SegmentIntegrator::new(graph, q, cfg)?.integrate(seg)
}

/// Plain integrated gradients along the whole path. Fails if the path
/// meets a split hyperplane it moves across.
pub fn ig_full_path<T: Real>(graph: &CompositionGraph<T>, q: &PathQuery<T>, cfg: &QuadratureConfig) -> Result<Vec<T>> {
    graph.check_arity(&q.s)?;
    graph.check_arity(&q.e)?;
    if q.is_empty() {
        return Ok(vec![T::zero(); q.s.len()]);
    }
    let table = BoundaryTable::extract(graph);
    let crossings = table.enumerate_crossings(&q.s, &q.e);
    let moving_hit = |x: &[T]| {
        table
            .endpoint_radix(x)
            .into_iter()
            .any(|f| q.s[f] != q.e[f])
    };
    if !crossings.is_empty() || moving_hit(&q.s) || moving_hit(&q.e) {
        return Err(GigError::InvalidArgument(
            "path crosses a split boundary; use the GIG engine".into(),
        ));
    }
    let delta = table.safe_step(&crossings, &q.s, &q.e);
    let seg = Segment::new(graph, &table, q, T::zero(), T::one(), delta)?;
    segment_ig(graph, q, &seg, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        Activation, DenseLayer, DenseNetwork, GraphBuilder, NodeKind, PiecewiseLinearCurve, TreeEnsemble, TreeNode,
    };

    fn q(s: &[f64], e: &[f64]) -> PathQuery<f64> {
        PathQuery::new(s.to_vec(), e.to_vec()).unwrap()
    }

    fn sin_sum() -> CompositionGraph<f64> {
        let mut b = GraphBuilder::new(2);
        b.input("x", vec![0, 1]);
        b.node(
            "sin",
            NodeKind::Dense(DenseNetwork {
                layers: vec![DenseLayer {
                    weights: vec![vec![1.0, 1.0]],
                    bias: vec![0.0],
                    activation: Activation::Sin,
                }],
            }),
            &["x"],
        );
        b.build("sin").unwrap()
    }

    fn product() -> CompositionGraph<f64> {
        let mut b = GraphBuilder::new(2);
        b.input("x", vec![0]);
        b.input("y", vec![1]);
        b.node("p", NodeKind::Product, &["x", "y"]);
        b.build("p").unwrap()
    }

    #[test]
    fn linear_is_exact() {
        let g = CompositionGraph::linear(vec![2.0, -3.0, 0.5], 1.0).unwrap();
        let got = ig_full_path(&g, &q(&[0.0, 1.0, 2.0], &[1.0, -1.0, 2.0]), &QuadratureConfig::default()).unwrap();
        assert_eq!(got, vec![2.0, 6.0, 0.0]);
    }

    #[test]
    fn identity_1d() {
        let g = CompositionGraph::linear(vec![1.0], 0.0).unwrap();
        let got = ig_full_path(&g, &q(&[0.0], &[1.0]), &QuadratureConfig::default()).unwrap();
        assert_eq!(got, vec![1.0]);
    }

    #[test]
    fn product_splits_evenly() {
        let got = ig_full_path(&product(), &q(&[0.0, 0.0], &[1.0, 1.0]), &QuadratureConfig::default()).unwrap();
        assert!((got[0] - 0.5).abs() < 1e-15 && (got[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sine_efficiency_and_proportions() {
        let got = ig_full_path(&sin_sum(), &q(&[0.5, 1.0], &[7.0, 3.0]), &QuadratureConfig::default()).unwrap();
        let want = 10f64.sin() - 1.5f64.sin();
        assert!((got[0] + got[1] - want).abs() < 1e-6);
        assert!((got[0] / got[1] - 6.5 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn empty_path_is_zero() {
        let got = ig_full_path(&sin_sum(), &q(&[0.3, 0.3], &[0.3, 0.3]), &QuadratureConfig::default()).unwrap();
        assert_eq!(got, vec![0.0, 0.0]);
    }

    #[test]
    fn constant_coordinate_gets_exact_zero() {
        let got = ig_full_path(&sin_sum(), &q(&[0.5, 1.0], &[7.0, 1.0]), &QuadratureConfig::default()).unwrap();
        assert_eq!(got[1].to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn trees_give_zero_and_crossing_is_rejected() {
        let ens = TreeEnsemble {
            base_score: 0.0,
            trees: vec![TreeNode::split(0, 0.0, TreeNode::leaf(0.0), TreeNode::leaf(1.0))],
        };
        let g = CompositionGraph::from_ensemble(1, ens).unwrap();
        let cfg = QuadratureConfig::default();
        assert_eq!(ig_full_path(&g, &q(&[0.5], &[2.0]), &cfg).unwrap(), vec![0.0]);
        assert!(ig_full_path(&g, &q(&[-1.0], &[1.0]), &cfg).is_err());
        assert!(ig_full_path(&g, &q(&[0.0], &[1.0]), &cfg).is_err());
    }

    #[test]
    fn splitting_a_segment_is_additive() {
        let g = sin_sum();
        let path = q(&[0.5, 1.0], &[7.0, 3.0]);
        let table = BoundaryTable::empty(2);
        let cfg = QuadratureConfig::default();
        let mut it = SegmentIntegrator::new(&g, &path, &cfg).unwrap();
        let whole = it.integrate(&Segment::new(&g, &table, &path, 0.0, 1.0, 1.0).unwrap()).unwrap();
        let a = it.integrate(&Segment::new(&g, &table, &path, 0.0, 0.37, 1.0).unwrap()).unwrap();
        let b = it.integrate(&Segment::new(&g, &table, &path, 0.37, 1.0, 1.0).unwrap()).unwrap();
        for i in 0..2 {
            assert!((whole[i] - a[i] - b[i]).abs() < 2e-8);
        }
    }

    #[test]
    fn doubling_panels_converges() {
        let g = sin_sum();
        let path = q(&[0.5, 1.0], &[7.0, 3.0]);
        let base = ig_full_path(&g, &path, &QuadratureConfig::default()).unwrap();
        let cfg = QuadratureConfig {
            panels: 16,
            ..Default::default()
        };
        let fine = ig_full_path(&g, &path, &cfg).unwrap();
        for i in 0..2 {
            assert!((base[i] - fine[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn refinement_handles_relu_kinks() {
        let mut b = GraphBuilder::new(1);
        b.input("x", vec![0]);
        b.node(
            "r",
            NodeKind::Dense(DenseNetwork {
                layers: vec![DenseLayer {
                    weights: vec![vec![1.0]],
                    bias: vec![-0.3141592653589793],
                    activation: Activation::Relu,
                }],
            }),
            &["x"],
        );
        let g = b.build("r").unwrap();
        let path = q(&[0.0], &[1.0]);
        let got = ig_full_path(&g, &path, &QuadratureConfig::default()).unwrap();
        let unrefined = QuadratureConfig {
            refine: Some(false),
            ..Default::default()
        };
        let rough = ig_full_path(&g, &path, &unrefined).unwrap();
        assert!((rough[0] - (1.0 - 0.3141592653589793)).abs() > 1e-6);
        assert!((got[0] - (1.0 - 0.3141592653589793)).abs() < 1e-8, "{got:?}");
    }

    #[test]
    fn coarse_rule_still_resolves_a_curve_knot() {
        let mut b = GraphBuilder::new(1);
        b.input("x", vec![0]);
        b.curve("c", PiecewiseLinearCurve::new(vec![[0.0, 0.0], [0.3, 0.0], [1.0, 1.0]]), "x");
        let g = b.build("c").unwrap();
        let cfg = QuadratureConfig {
            nodes_per_panel: 4,
            panels: 1,
            refine: Some(true),
            ..Default::default()
        };
        let got = ig_full_path(&g, &q(&[0.0], &[1.0]), &cfg).unwrap();
        assert!((got[0] - 1.0).abs() < 1e-8, "{got:?}");
    }

    #[test]
    fn config_validation() {
        let bad = QuadratureConfig {
            nodes_per_panel: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = QuadratureConfig {
            panels: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
