use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::format::{ModelDoc, NodeDoc, NodeKind, FORMAT_VERSION};
use super::tree::Routed;
use super::{DenseNetwork, PiecewiseLinearCurve, TreeEnsemble};
use crate::error::{GigError, Result};
use crate::scalar::Real;

/// A problem found while validating a model document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub node: Option<String>,
    pub message: String,
}

impl Diagnostic {
    fn at(node: &str, message: impl Into<String>) -> Self {
        Self {
            node: Some(node.to_string()),
            message: message.into(),
        }
    }

    fn global(message: impl Into<String>) -> Self {
        Self {
            node: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Some(n) => write!(f, "node '{n}': {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Checks a model document against every structural invariant. An empty
/// list means [`CompositionGraph::from_doc`] will succeed.
pub fn validate<T: Real>(doc: &ModelDoc<T>) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if doc.version != FORMAT_VERSION {
        diags.push(Diagnostic::global(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            doc.version
        )));
    }
    if doc.n_features == 0 {
        diags.push(Diagnostic::global("n_features must be positive"));
    }

    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, node) in doc.nodes.iter().enumerate() {
        if index.insert(node.id.as_str(), i).is_some() {
            diags.push(Diagnostic::at(&node.id, "duplicate node id"));
        }
    }
    let mut edges: Vec<Vec<usize>> = vec![Vec::new(); doc.nodes.len()];
    for (i, node) in doc.nodes.iter().enumerate() {
        for input in &node.inputs {
            match index.get(input.as_str()) {
                Some(&j) => edges[i].push(j),
                None => diags.push(Diagnostic::at(&node.id, format!("unknown input '{input}'"))),
            }
        }
    }
    let Some(&output) = index.get(doc.output_id.as_str()) else {
        diags.push(Diagnostic::global(format!(
            "unknown output id '{}'",
            doc.output_id
        )));
        return diags;
    };

    let order = match topo_order(&edges, output) {
        Ok(order) => order,
        Err(at) => {
            diags.push(Diagnostic::at(&doc.nodes[at].id, "cycle detected"));
            return diags;
        }
    };

    let mut dims: Vec<Option<usize>> = vec![None; doc.nodes.len()];
    for &i in &order {
        let node = &doc.nodes[i];
        let in_dims: Option<Vec<usize>> = edges[i].iter().map(|&j| dims[j]).collect();
        let Some(in_dims) = in_dims else {
            continue;
        };
        let in_dim: usize = in_dims.iter().sum();
        dims[i] = check_node(node, in_dim, &edges[i], doc, &mut diags);
    }
    if let Some(d) = dims[output] {
        if d != 1 {
            diags.push(Diagnostic::at(
                &doc.output_id,
                format!("output node must be scalar, has dimension {d}"),
            ));
        }
    }
    diags
}

fn check_node<T: Real>(
    node: &NodeDoc<T>,
    in_dim: usize,
    inputs: &[usize],
    doc: &ModelDoc<T>,
    diags: &mut Vec<Diagnostic>,
) -> Option<usize> {
    let id = node.id.as_str();
    let before = diags.len();
    if !matches!(node.kind, NodeKind::Input { .. }) && inputs.is_empty() {
        diags.push(Diagnostic::at(id, "node has no inputs"));
        return None;
    }
    let out = match &node.kind {
        NodeKind::Input { features } => {
            if !inputs.is_empty() {
                diags.push(Diagnostic::at(id, "input nodes take no inputs"));
            }
            if features.is_empty() {
                diags.push(Diagnostic::at(id, "input node selects no features"));
            }
            if let Some(&f) = features.iter().find(|&&f| f >= doc.n_features) {
                diags.push(Diagnostic::at(
                    id,
                    format!("feature {f} out of range (n_features = {})", doc.n_features),
                ));
            }
            features.len()
        }
        NodeKind::TreeEnsemble(ens) => {
            if inputs
                .iter()
                .any(|&j| !matches!(doc.nodes[j].kind, NodeKind::Input { .. }))
            {
                diags.push(Diagnostic::at(id, "tree must read raw inputs"));
            }
            if let Some(f) = ens.max_feature() {
                if f >= in_dim {
                    diags.push(Diagnostic::at(
                        id,
                        format!("tree splits on feature {f} but its input has dimension {in_dim}"),
                    ));
                }
            }
            let mut finite = ens.base_score.is_finite();
            for t in &ens.trees {
                t.for_each_split(&mut |s| finite &= s.threshold.is_finite());
                t.for_each_leaf(&mut |v| finite &= v.is_finite());
            }
            if !finite {
                diags.push(Diagnostic::at(id, "tree ensemble has non-finite parameters"));
            }
            1
        }
        NodeKind::Dense(net) => {
            check_dense(id, net, in_dim, diags);
            net.out_dim()
        }
        NodeKind::PwlCurve(curve) => {
            for m in curve.check() {
                diags.push(Diagnostic::at(id, m));
            }
            in_dim
        }
        NodeKind::Linear { weights, bias } => {
            if weights.len() != in_dim {
                diags.push(Diagnostic::at(
                    id,
                    format!(
                        "linear node has {} weights for an input of dimension {in_dim}",
                        weights.len()
                    ),
                ));
            }
            if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
                diags.push(Diagnostic::at(id, "linear node has non-finite parameters"));
            }
            1
        }
        NodeKind::Product => 1,
    };
    (diags.len() == before).then_some(out)
}

fn check_dense<T: Real>(id: &str, net: &DenseNetwork<T>, in_dim: usize, diags: &mut Vec<Diagnostic>) {
    if net.layers.is_empty() {
        diags.push(Diagnostic::at(id, "dense network has no layers"));
        return;
    }
    let mut expect = in_dim;
    for (l, layer) in net.layers.iter().enumerate() {
        if layer.weights.is_empty() {
            diags.push(Diagnostic::at(id, format!("layer {l} has no outputs")));
            return;
        }
        if layer.weights.iter().any(|row| row.len() != expect) {
            diags.push(Diagnostic::at(
                id,
                format!("layer {l} weight rows must have length {expect}"),
            ));
        }
        if layer.bias.len() != layer.weights.len() {
            diags.push(Diagnostic::at(
                id,
                format!("layer {l} bias length does not match its output width"),
            ));
        }
        let finite = layer.bias.iter().all(|b| b.is_finite())
            && layer.weights.iter().flatten().all(|w| w.is_finite());
        if !finite {
            diags.push(Diagnostic::at(id, format!("layer {l} has non-finite parameters")));
        }
        expect = layer.weights.len();
    }
}

/// Post-order over nodes reachable from `output`; `Err(node)` on a cycle.
fn topo_order(edges: &[Vec<usize>], output: usize) -> std::result::Result<Vec<usize>, usize> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let mut mark = vec![Mark::New; edges.len()];
    let mut order = Vec::new();
    let mut stack = vec![(output, 0usize)];
    mark[output] = Mark::Open;
    while let Some(&mut (node, ref mut next)) = stack.last_mut() {
        if *next < edges[node].len() {
            let child = edges[node][*next];
            *next += 1;
            match mark[child] {
                Mark::Open => return Err(child),
                Mark::Done => {}
                Mark::New => {
                    mark[child] = Mark::Open;
                    stack.push((child, 0));
                }
            }
        } else {
            mark[node] = Mark::Done;
            order.push(node);
            stack.pop();
        }
    }
    Ok(order)
}

#[derive(Clone, Debug)]
struct Node<T> {
    id: String,
    inputs: Vec<usize>,
    kind: NodeKind<T>,
    offset: usize,
    dim: usize,
    in_dim: usize,
    /// Offset into the dense pre-activation tape.
    tape: usize,
    /// For tree nodes: local feature index -> raw feature index.
    tree_map: Vec<usize>,
}

/// A validated, immutable model `f(x) = g(x, D(x))`, where `D` collects
/// the tree-ensemble outputs and `g` is continuous in `x` for fixed `D`.
#[derive(Clone, Debug)]
pub struct CompositionGraph<T> {
    n_features: usize,
    nodes: Vec<Node<T>>,
    order: Vec<usize>,
    output: usize,
    value_len: usize,
    tape_len: usize,
}

/// Frozen tree-ensemble outputs `D(probe)` for one cell of the boundary grid.
#[derive(Clone, Debug)]
pub struct CellAssignment<T> {
    probe: Vec<T>,
    tree_values: Vec<T>,
}

impl<T: Real> CellAssignment<T> {
    /// Resolves `D(probe)`. Fails if the probe lies exactly on a threshold
    /// that one of the trees tests.
    pub fn new(graph: &CompositionGraph<T>, probe: Vec<T>) -> Result<Self> {
        graph.check_arity(&probe)?;
        let mut tree_values = vec![T::zero(); graph.nodes.len()];
        for &i in &graph.order {
            let node = &graph.nodes[i];
            if let NodeKind::TreeEnsemble(ens) = &node.kind {
                let map = &node.tree_map;
                match ens.eval_strict(|f| probe[map[f]]) {
                    Routed::Leaf(v) => tree_values[i] = v,
                    Routed::OnThreshold { feature, threshold } => {
                        return Err(GigError::OnThreshold {
                            feature: map[feature],
                            value: threshold.to_f64().unwrap_or(f64::NAN),
                        })
                    }
                }
            }
        }
        Ok(Self { probe, tree_values })
    }

    pub fn probe(&self) -> &[T] {
        &self.probe
    }
}

/// Scratch buffers for one evaluation; reusable across calls.
#[derive(Clone, Debug, Default)]
pub struct Workspace<T> {
    vals: Vec<T>,
    pre: Vec<T>,
    act: Vec<T>,
    adj: Vec<T>,
    gather: Vec<T>,
    local: Vec<T>,
    scratch: Vec<T>,
}

enum Discrete<'a, T> {
    AtX,
    Frozen(&'a CellAssignment<T>),
}

impl<T: Real> CompositionGraph<T> {
    pub fn from_doc(doc: &ModelDoc<T>) -> Result<Self> {
        let diags = validate(doc);
        if !diags.is_empty() {
            return Err(GigError::InvalidGraph(diags));
        }
        let index: HashMap<&str, usize> = doc
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect();
        let edges: Vec<Vec<usize>> = doc
            .nodes
            .iter()
            .map(|n| n.inputs.iter().map(|id| index[id.as_str()]).collect())
            .collect();
        let output = index[doc.output_id.as_str()];
        let order = topo_order(&edges, output).expect("validated graph is acyclic");

        let mut nodes: Vec<Node<T>> = doc
            .nodes
            .iter()
            .zip(&edges)
            .map(|(n, e)| Node {
                id: n.id.clone(),
                inputs: e.clone(),
                kind: n.kind.clone(),
                offset: 0,
                dim: 0,
                in_dim: 0,
                tape: 0,
                tree_map: Vec::new(),
            })
            .collect();
        let mut value_len = 0;
        let mut tape_len = 0;
        for &i in &order {
            let in_dim: usize = nodes[i].inputs.iter().map(|&j| nodes[j].dim).sum();
            let dim = match &nodes[i].kind {
                NodeKind::Input { features } => features.len(),
                NodeKind::Dense(net) => net.out_dim(),
                NodeKind::PwlCurve(_) => in_dim,
                _ => 1,
            };
            if let NodeKind::Dense(net) = &nodes[i].kind {
                let len = net.tape_len();
                nodes[i].tape = tape_len;
                tape_len += len;
            }
            if let NodeKind::TreeEnsemble(_) = &nodes[i].kind {
                let map: Vec<usize> = nodes[i]
                    .inputs
                    .iter()
                    .flat_map(|&j| match &nodes[j].kind {
                        NodeKind::Input { features } => features.clone(),
                        _ => unreachable!("validated: trees read inputs only"),
                    })
                    .collect();
                nodes[i].tree_map = map;
            }
            let node = &mut nodes[i];
            node.in_dim = in_dim;
            node.dim = dim;
            node.offset = value_len;
            value_len += dim;
        }
        Ok(Self {
            n_features: doc.n_features,
            nodes,
            order,
            output,
            value_len,
            tape_len,
        })
    }

    pub fn to_doc(&self) -> ModelDoc<T> {
        ModelDoc {
            version: FORMAT_VERSION,
            n_features: self.n_features,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDoc {
                    id: n.id.clone(),
                    inputs: n.inputs.iter().map(|&j| self.nodes[j].id.clone()).collect(),
                    kind: n.kind.clone(),
                })
                .collect(),
            output_id: self.nodes[self.output].id.clone(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_doc(&ModelDoc::from_json(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        self.to_doc().to_json()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Single-node helpers for common cases.
    pub fn from_ensemble(n_features: usize, ensemble: TreeEnsemble<T>) -> Result<Self> {
        let mut b = GraphBuilder::new(n_features);
        let x = b.input("x", (0..n_features).collect());
        let t = b.node("ensemble", NodeKind::TreeEnsemble(ensemble), &[&x]);
        b.build(&t)
    }

    pub fn linear(weights: Vec<T>, bias: T) -> Result<Self> {
        let n = weights.len();
        let mut b = GraphBuilder::new(n);
        let x = b.input("x", (0..n).collect());
        let out = b.node("linear", NodeKind::Linear { weights, bias }, &[&x]);
        b.build(&out)
    }

    pub(crate) fn check_arity(&self, x: &[T]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(GigError::Arity {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Every `(raw feature, threshold)` pair tested by any tree node.
    pub fn tree_splits(&self) -> Vec<(usize, T)> {
        let mut out = Vec::new();
        for &i in &self.order {
            let node = &self.nodes[i];
            if let NodeKind::TreeEnsemble(ens) = &node.kind {
                for t in &ens.trees {
                    t.for_each_split(&mut |s| out.push((node.tree_map[s.feature], s.threshold)));
                }
            }
        }
        out
    }

    pub fn has_trees(&self) -> bool {
        self.order
            .iter()
            .any(|&i| matches!(self.nodes[i].kind, NodeKind::TreeEnsemble(_)))
    }

    /// True when the integrand of the continuous part may have kinks
    /// (curve knots or ReLU units).
    pub fn has_kinks(&self) -> bool {
        self.order.iter().any(|&i| match &self.nodes[i].kind {
            NodeKind::PwlCurve(_) => true,
            NodeKind::Dense(net) => net.layers.iter().any(|l| !l.activation.is_smooth()),
            _ => false,
        })
    }

    /// True when `x` reaches the output only through tree ensembles, so the
    /// model is piecewise constant.
    pub fn is_piecewise_constant(&self) -> bool {
        self.order.iter().all(|&i| {
            let node = &self.nodes[i];
            matches!(node.kind, NodeKind::TreeEnsemble(_))
                || node.inputs.iter().all(|&j| !matches!(self.nodes[j].kind, NodeKind::Input { .. }))
        })
    }

    /// Raw features read by at least one node that feeds the output.
    pub fn used_features(&self) -> Vec<usize> {
        let mut used = HashSet::new();
        for &i in &self.order {
            if let NodeKind::Input { features } = &self.nodes[i].kind {
                used.extend(features.iter().copied());
            }
        }
        let mut v: Vec<usize> = used.into_iter().collect();
        v.sort_unstable();
        v
    }

    pub fn eval(&self, x: &[T]) -> Result<T> {
        self.eval_with(x, &mut Workspace::default())
    }

    pub fn eval_with(&self, x: &[T], ws: &mut Workspace<T>) -> Result<T> {
        self.check_arity(x)?;
        self.forward(x, Discrete::AtX, ws);
        self.output_value(ws)
    }

    /// `g(x, D(probe))`: trees see the probe, continuous nodes see `x`.
    pub fn eval_split(&self, x: &[T], cells: &CellAssignment<T>) -> Result<T> {
        self.eval_split_with(x, cells, &mut Workspace::default())
    }

    pub fn eval_split_with(
        &self,
        x: &[T],
        cells: &CellAssignment<T>,
        ws: &mut Workspace<T>,
    ) -> Result<T> {
        self.check_arity(x)?;
        self.forward(x, Discrete::Frozen(cells), ws);
        self.output_value(ws)
    }

    /// Exact gradient of `eval_split` with respect to `x`, holding `D` fixed.
    pub fn gradient(&self, x: &[T], cells: &CellAssignment<T>) -> Result<Vec<T>> {
        let mut grad = vec![T::zero(); self.n_features];
        self.gradient_into(x, cells, &mut Workspace::default(), &mut grad)?;
        Ok(grad)
    }

    /// Overwrites `grad` with the gradient; returns the function value.
    pub fn gradient_into(
        &self,
        x: &[T],
        cells: &CellAssignment<T>,
        ws: &mut Workspace<T>,
        grad: &mut [T],
    ) -> Result<T> {
        self.check_arity(x)?;
        self.forward(x, Discrete::Frozen(cells), ws);
        let value = self.output_value(ws)?;
        self.backward(ws, grad);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(GigError::NonFinite("gradient".into()));
        }
        Ok(value)
    }

    /// Which smooth piece of the continuous part the last forward pass in
    /// `ws` landed in: the knot interval of every curve input and the sign
    /// of every ReLU pre-activation. Equal signatures at all points of an
    /// interval mean no kink was seen there.
    pub(crate) fn kink_signature(&self, ws: &Workspace<T>, out: &mut Vec<u32>) {
        out.clear();
        for &i in &self.order {
            let node = &self.nodes[i];
            match &node.kind {
                NodeKind::PwlCurve(curve) => {
                    for &j in &node.inputs {
                        let src = &self.nodes[j];
                        for v in &ws.vals[src.offset..src.offset + src.dim] {
                            out.push(curve.knots.partition_point(|k| k[0] <= *v) as u32);
                        }
                    }
                }
                NodeKind::Dense(net) => {
                    let mut at = node.tape;
                    for layer in &net.layers {
                        let width = layer.out_dim();
                        if !layer.activation.is_smooth() {
                            out.extend(ws.pre[at..at + width].iter().map(|z| u32::from(*z >= T::zero())));
                        }
                        at += width;
                    }
                }
                _ => {}
            }
        }
    }

    fn output_value(&self, ws: &Workspace<T>) -> Result<T> {
        if let Some(i) = self
            .order
            .iter()
            .copied()
            .find(|&i| {
                let n = &self.nodes[i];
                ws.vals[n.offset..n.offset + n.dim].iter().any(|v| !v.is_finite())
            })
        {
            return Err(GigError::NonFinite(format!("node '{}'", self.nodes[i].id)));
        }
        Ok(ws.vals[self.nodes[self.output].offset])
    }

    fn gather(&self, node: &Node<T>, vals: &[T], buf: &mut Vec<T>) {
        buf.clear();
        for &j in &node.inputs {
            let src = &self.nodes[j];
            buf.extend_from_slice(&vals[src.offset..src.offset + src.dim]);
        }
    }

    fn forward(&self, x: &[T], discrete: Discrete<'_, T>, ws: &mut Workspace<T>) {
        ws.vals.clear();
        ws.vals.resize(self.value_len, T::zero());
        ws.pre.resize(self.tape_len, T::zero());
        ws.act.resize(self.tape_len, T::zero());
        for &i in &self.order {
            let node = &self.nodes[i];
            let out = node.offset..node.offset + node.dim;
            match &node.kind {
                NodeKind::Input { features } => {
                    for (k, &f) in features.iter().enumerate() {
                        ws.vals[out.start + k] = x[f];
                    }
                }
                NodeKind::TreeEnsemble(ens) => {
                    ws.vals[out.start] = match &discrete {
                        Discrete::Frozen(cells) => cells.tree_values[i],
                        Discrete::AtX => {
                            let map = &node.tree_map;
                            ens.trees
                                .iter()
                                .fold(ens.base_score, |acc, t| acc + t.eval(|f| x[map[f]]))
                        }
                    };
                }
                NodeKind::Dense(net) => {
                    self.gather(node, &ws.vals, &mut ws.gather);
                    let tape = node.tape..node.tape + net.tape_len();
                    net.forward(&ws.gather, &mut ws.pre[tape.clone()], &mut ws.act[tape.clone()]);
                    let last = tape.end - node.dim;
                    let (vals, act) = (&mut ws.vals, &ws.act);
                    vals[out].copy_from_slice(&act[last..tape.end]);
                }
                NodeKind::PwlCurve(curve) => {
                    self.gather(node, &ws.vals, &mut ws.gather);
                    for (k, v) in ws.gather.iter().enumerate() {
                        ws.vals[out.start + k] = curve.eval(*v);
                    }
                }
                NodeKind::Linear { weights, bias } => {
                    self.gather(node, &ws.vals, &mut ws.gather);
                    ws.vals[out.start] = weights
                        .iter()
                        .zip(&ws.gather)
                        .fold(*bias, |acc, (w, v)| acc + *w * *v);
                }
                NodeKind::Product => {
                    self.gather(node, &ws.vals, &mut ws.gather);
                    ws.vals[out.start] = ws.gather.iter().fold(T::one(), |acc, v| acc * *v);
                }
            }
        }
    }

    /// Adds `local[p]` to the adjoint of whichever input slot `p` maps to.
    fn scatter(&self, node: &Node<T>, local: &[T], adj: &mut [T]) {
        let mut p = 0;
        for &j in &node.inputs {
            let src = &self.nodes[j];
            for k in 0..src.dim {
                adj[src.offset + k] = adj[src.offset + k] + local[p];
                p += 1;
            }
        }
    }

    fn backward(&self, ws: &mut Workspace<T>, grad: &mut [T]) {
        for g in grad.iter_mut() {
            *g = T::zero();
        }
        ws.adj.clear();
        ws.adj.resize(self.value_len, T::zero());
        ws.adj[self.nodes[self.output].offset] = T::one();
        for &i in self.order.iter().rev() {
            let node = &self.nodes[i];
            let out = node.offset..node.offset + node.dim;
            if ws.adj[out.clone()].iter().all(|a| a.is_zero()) {
                continue;
            }
            match &node.kind {
                NodeKind::Input { features } => {
                    for (k, &f) in features.iter().enumerate() {
                        grad[f] = grad[f] + ws.adj[out.start + k];
                    }
                }
                NodeKind::TreeEnsemble(_) => {}
                NodeKind::Linear { weights, .. } => {
                    let a = ws.adj[out.start];
                    ws.local.clear();
                    ws.local.extend(weights.iter().map(|w| *w * a));
                    let local = std::mem::take(&mut ws.local);
                    self.scatter(node, &local, &mut ws.adj);
                    ws.local = local;
                }
                NodeKind::Product => {
                    let a = ws.adj[out.start];
                    self.gather(node, &ws.vals, &mut ws.gather);
                    let n = ws.gather.len();
                    // prefix/suffix products avoid dividing by zero entries
                    ws.local.clear();
                    ws.local.resize(n, T::zero());
                    let mut prefix = T::one();
                    for k in 0..n {
                        ws.local[k] = prefix;
                        prefix = prefix * ws.gather[k];
                    }
                    let mut suffix = T::one();
                    for k in (0..n).rev() {
                        ws.local[k] = ws.local[k] * suffix * a;
                        suffix = suffix * ws.gather[k];
                    }
                    let local = std::mem::take(&mut ws.local);
                    self.scatter(node, &local, &mut ws.adj);
                    ws.local = local;
                }
                NodeKind::PwlCurve(curve) => {
                    self.gather(node, &ws.vals, &mut ws.gather);
                    ws.local.clear();
                    for k in 0..node.dim {
                        let d = curve.derivative(ws.gather[k]);
                        ws.local.push(d * ws.adj[out.start + k]);
                    }
                    let local = std::mem::take(&mut ws.local);
                    self.scatter(node, &local, &mut ws.adj);
                    ws.local = local;
                }
                NodeKind::Dense(net) => {
                    let tape = node.tape..node.tape + net.tape_len();
                    let adj_out: Vec<T> = ws.adj[out].to_vec();
                    ws.local.clear();
                    ws.local.resize(node.in_dim, T::zero());
                    net.backward(
                        &ws.pre[tape.clone()],
                        &ws.act[tape],
                        &adj_out,
                        &mut ws.local,
                        &mut ws.scratch,
                    );
                    let local = std::mem::take(&mut ws.local);
                    self.scatter(node, &local, &mut ws.adj);
                    ws.local = local;
                }
            }
        }
    }

    /// Relabels features: raw feature `i` of this graph becomes feature
    /// `perm[i]` of the returned graph.
    pub fn permute_features(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_features {
            return Err(GigError::Arity {
                expected: self.n_features,
                got: perm.len(),
            });
        }
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(GigError::InvalidArgument("not a permutation".into()));
            }
        }
        let mut doc = self.to_doc();
        for node in &mut doc.nodes {
            if let NodeKind::Input { features } = &mut node.kind {
                for f in features.iter_mut() {
                    *f = perm[*f];
                }
            }
        }
        Self::from_doc(&doc)
    }

    /// `bias + sum_k coef_k * graph_k(x)` as one graph.
    pub fn linear_combination(parts: &[(T, &CompositionGraph<T>)], bias: T) -> Result<Self> {
        let n = parts
            .first()
            .map(|(_, g)| g.n_features)
            .ok_or_else(|| GigError::InvalidArgument("empty combination".into()))?;
        let mut nodes = Vec::new();
        let mut outputs = Vec::new();
        let mut weights = Vec::new();
        for (k, (coef, g)) in parts.iter().enumerate() {
            if g.n_features != n {
                return Err(GigError::Arity {
                    expected: n,
                    got: g.n_features,
                });
            }
            let doc = g.to_doc();
            let prefix = format!("part{k}/");
            for mut node in doc.nodes {
                node.id = format!("{prefix}{}", node.id);
                for input in &mut node.inputs {
                    *input = format!("{prefix}{input}");
                }
                nodes.push(node);
            }
            outputs.push(format!("{prefix}{}", doc.output_id));
            weights.push(*coef);
        }
        nodes.push(NodeDoc {
            id: "combination".into(),
            inputs: outputs,
            kind: NodeKind::Linear { weights, bias },
        });
        Self::from_doc(&ModelDoc {
            version: FORMAT_VERSION,
            n_features: n,
            nodes,
            output_id: "combination".into(),
        })
    }
}

/// Incremental construction of a [`CompositionGraph`].
#[derive(Debug)]
pub struct GraphBuilder<T> {
    n_features: usize,
    nodes: Vec<NodeDoc<T>>,
}

impl<T: Real> GraphBuilder<T> {
    pub fn new(n_features: usize) -> Self {
        Self {
            n_features,
            nodes: Vec::new(),
        }
    }

    pub fn input(&mut self, id: &str, features: Vec<usize>) -> String {
        self.node(id, NodeKind::Input { features }, &[])
    }

    pub fn node(&mut self, id: &str, kind: NodeKind<T>, inputs: &[&str]) -> String {
        self.nodes.push(NodeDoc {
            id: id.to_string(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            kind,
        });
        id.to_string()
    }

    pub fn curve(&mut self, id: &str, curve: PiecewiseLinearCurve<T>, input: &str) -> String {
        self.node(id, NodeKind::PwlCurve(curve), &[input])
    }

    pub fn doc(&self, output: &str) -> ModelDoc<T> {
        ModelDoc {
            version: FORMAT_VERSION,
            n_features: self.n_features,
            nodes: self.nodes.clone(),
            output_id: output.to_string(),
        }
    }

    pub fn build(&self, output: &str) -> Result<CompositionGraph<T>> {
        CompositionGraph::from_doc(&self.doc(output))
    }
}
