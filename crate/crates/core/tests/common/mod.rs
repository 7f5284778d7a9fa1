#![allow(dead_code)]

use gig_core::boundary::PathQuery;
use gig_core::model::{
    Activation, CompositionGraph, DenseLayer, DenseNetwork, GraphBuilder, NodeKind, PiecewiseLinearCurve, TreeEnsemble,
    TreeNode,
};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random tree over `features`, thresholds drawn from `thresholds`.
/// `threshold` maps a uniform draw on `[0, 1)` to a split value.
pub fn random_tree(
    rng: &mut impl Rng,
    features: &[usize],
    threshold: fn(f64) -> f64,
    depth: usize,
    leaf: &mut dyn FnMut() -> f64,
) -> TreeNode<f64> {
    if depth == 0 {
        return TreeNode::leaf(leaf());
    }
    let f = features[rng.random_range(0..features.len())];
    let t = threshold(rng.random());
    TreeNode::split(
        f,
        t,
        random_tree(rng, features, threshold, depth - 1, leaf),
        random_tree(rng, features, threshold, depth - 1, leaf),
    )
}

/// The grid `k / 4`, `k in -4..=4`: corners of any radix sit on dyadic points.
pub fn grid_threshold(u: f64) -> f64 {
    ((u * 9.0).floor() - 4.0) / 4.0
}

pub fn uniform_threshold(u: f64) -> f64 {
    u * 2.0 - 1.0
}

/// Ensemble of small trees with integer leaves on the dyadic grid.
pub fn grid_ensemble(rng: &mut ChaCha8Rng, n_features: usize, n_trees: usize, depth: usize) -> TreeEnsemble<f64> {
    let features: Vec<usize> = (0..n_features).collect();
    let mut leaf_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let mut leaf = || f64::from(leaf_rng.random_range(-5i32..=5));
    let trees = (0..n_trees)
        .map(|_| random_tree(rng, &features, grid_threshold, depth, &mut leaf))
        .collect();
    TreeEnsemble::new(f64::from(rng.random_range(-2i32..=2)), trees)
}

pub fn random_dense(rng: &mut impl Rng, sizes: &[usize], hidden: Activation) -> DenseNetwork<f64> {
    let layers = sizes
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            let scale = 1.0 / (w[0] as f64).sqrt();
            DenseLayer {
                weights: (0..w[1])
                    .map(|_| (0..w[0]).map(|_| rng.random_range(-1.5..1.5) * scale).collect())
                    .collect(),
                bias: (0..w[1]).map(|_| rng.random_range(-0.5..0.5)).collect(),
                activation: if l + 2 == sizes.len() { Activation::Identity } else { hidden },
            }
        })
        .collect();
    DenseNetwork { layers }
}

/// Monotone curve with `knots` knots spanning `[lo, hi]`, outputs in `[0, 1]`.
pub fn random_curve(rng: &mut impl Rng, knots: usize, lo: f64, hi: f64) -> PiecewiseLinearCurve<f64> {
    let mut xs: Vec<f64> = (0..knots - 2).map(|_| rng.random_range(lo..hi)).collect();
    xs.push(lo);
    xs.push(hi);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut ys: Vec<f64> = (0..xs.len()).map(|_| rng.random::<f64>()).collect();
    ys.sort_by(f64::total_cmp);
    ys[0] = 0.0;
    *ys.last_mut().unwrap() = 1.0;
    PiecewiseLinearCurve::new(xs.into_iter().zip(ys).map(|(x, y)| [x, y]).collect())
}

/// Trees + tanh network + curves, combined linearly and by a product.
/// The last feature is never read.
pub fn random_composed(seed: u64, n_features: usize) -> CompositionGraph<f64> {
    let mut rng = rng(seed);
    let used: Vec<usize> = (0..n_features - 1).collect();
    let mut b = GraphBuilder::new(n_features);
    b.input("x", used.clone());
    let mut leaf_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let mut leaf = || leaf_rng.random_range(-1.0..1.0);
    let n_trees = rng.random_range(2..=4);
    let trees = (0..n_trees)
        .map(|_| random_tree(&mut rng, &used, uniform_threshold, rng_depth(seed), &mut leaf))
        .collect();
    b.node("trees", NodeKind::TreeEnsemble(TreeEnsemble::new(0.1, trees)), &["x"]);
    let net = random_dense(&mut rng, &[used.len(), 4, 1], Activation::Tanh);
    b.node("net", NodeKind::Dense(net), &["x"]);
    let knots = rng.random_range(8..=16);
    let c1 = random_curve(&mut rng, knots, -2.0, 2.0);
    b.curve("net_rank", c1, "net");
    let c2 = random_curve(&mut rng, knots, -2.0, 2.0);
    b.curve("tree_rank", c2, "trees");
    b.node("mix", NodeKind::Product, &["net", "tree_rank"]);
    let w: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    b.node(
        "out",
        NodeKind::Linear { weights: w, bias: 0.0 },
        &["trees", "net", "net_rank", "mix"],
    );
    b.build("out").unwrap()
}

fn rng_depth(seed: u64) -> usize {
    2 + (seed % 2) as usize
}

/// Tree-free smooth graph: a tanh network plus its product with a sine.
pub fn random_smooth(seed: u64, n_features: usize) -> CompositionGraph<f64> {
    let mut rng = rng(seed);
    let all: Vec<usize> = (0..n_features).collect();
    let mut b = GraphBuilder::new(n_features);
    b.input("x", all);
    let net = random_dense(&mut rng, &[n_features, 5, 3, 1], Activation::Tanh);
    b.node("net", NodeKind::Dense(net), &["x"]);
    let mut sine = random_dense(&mut rng, &[n_features, 1], Activation::Identity);
    sine.layers[0].activation = Activation::Sin;
    b.node("sine", NodeKind::Dense(sine), &["x"]);
    b.node("prod", NodeKind::Product, &["net", "sine"]);
    b.node("out", NodeKind::Linear { weights: vec![1.0, 0.5], bias: 0.2 }, &["net", "prod"]);
    b.build("out").unwrap()
}

pub fn random_point(rng: &mut impl Rng, n: usize, span: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-span..span)).collect()
}

/// Random path; sometimes one coordinate is held constant, sometimes on a
/// threshold value.
pub fn random_path(rng: &mut impl Rng, n: usize, thresholds: &[Vec<f64>]) -> PathQuery<f64> {
    let mut s = random_point(rng, n, 1.5);
    let mut e = random_point(rng, n, 1.5);
    match rng.random_range(0..4) {
        0 => {
            let i = rng.random_range(0..n);
            e[i] = s[i];
        }
        1 => {
            let i = rng.random_range(0..n);
            if let Some(&t) = thresholds[i].choose(rng) {
                s[i] = t;
                e[i] = t;
            }
        }
        2 => {
            let i = rng.random_range(0..n);
            if let Some(&t) = thresholds[i].choose(rng) {
                s[i] = t;
            }
        }
        _ => {}
    }
    PathQuery::new(s, e).unwrap()
}

pub fn random_permutation(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Path through a corner of radix `k`: `k` features sit on one of their
/// grid thresholds at the midpoint, the rest stay strictly inside a grid
/// cell. All coordinates are dyadic, so the corner is hit exactly.
pub fn corner_path(rng: &mut impl Rng, thresholds: &[Vec<f64>], k: usize) -> Option<PathQuery<f64>> {
    let n = thresholds.len();
    let mut feats: Vec<usize> = (0..n).filter(|&i| !thresholds[i].is_empty()).collect();
    if feats.len() < k {
        return None;
    }
    feats.shuffle(rng);
    let on = &feats[..k];
    let mut s = vec![0.0; n];
    let mut e = vec![0.0; n];
    for i in 0..n {
        let (c, max) = if on.contains(&i) {
            (*thresholds[i].choose(rng).unwrap(), 8)
        } else {
            (f64::from(rng.random_range(-7i32..=6)) / 4.0 + 0.125, 4)
        };
        let mag = f64::from(rng.random_range(1..=max)) / 64.0;
        let v = if rng.random::<bool>() { mag } else { -mag };
        s[i] = c - v;
        e[i] = c + v;
    }
    Some(PathQuery::new(s, e).unwrap())
}
