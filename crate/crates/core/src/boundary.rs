//! Split-hyperplane geometry: the per-feature threshold table, the places
//! where a straight path crosses it, and a perturbation step small enough to
//! stay inside the cells around every crossing.

use serde::{Deserialize, Serialize};

use crate::error::{GigError, Result};
use crate::model::CompositionGraph;
use crate::scalar::Real;

/// Two crossings whose `alpha` differ by at most this much are one corner.
pub const ALPHA_GROUPING_TOL: f64 = 1e-12;

/// Per-feature sorted, deduplicated split thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BoundaryTable<T> {
    pub thresholds: Vec<Vec<T>>,
}

/// One interior point of the path lying on one or more split hyperplanes.
#[derive(Clone, Debug, PartialEq)]
pub struct Crossing<T> {
    pub alpha: T,
    /// Features whose hyperplane is hit here, ascending.
    pub features: Vec<usize>,
    /// The threshold hit on each entry of `features`.
    pub thresholds: Vec<T>,
    /// Path point at `alpha`, snapped onto the hit thresholds.
    pub point: Vec<T>,
}

impl<T: Real> Crossing<T> {
    pub fn radix(&self) -> usize {
        self.features.len()
    }
}

/// A straight path from `s` to `e`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PathQuery<T> {
    pub s: Vec<T>,
    pub e: Vec<T>,
}

impl<T: Real> PathQuery<T> {
    pub fn new(s: Vec<T>, e: Vec<T>) -> Result<Self> {
        if s.len() != e.len() {
            return Err(GigError::Arity {
                expected: s.len(),
                got: e.len(),
            });
        }
        if s.iter().chain(&e).any(|v| !v.is_finite()) {
            return Err(GigError::NonFinite("path endpoint".into()));
        }
        Ok(Self { s, e })
    }

    pub fn reversed(&self) -> Self {
        Self {
            s: self.e.clone(),
            e: self.s.clone(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.s == self.e
    }

    pub fn point(&self, alpha: T) -> Vec<T> {
        path_point(&self.s, &self.e, alpha)
    }
}

/// Whether `x` is within the on-boundary tolerance of threshold `b`.
pub fn on_threshold<T: Real>(x: T, b: T) -> bool {
    (x - b).abs() <= T::lit(ALPHA_GROUPING_TOL) * T::one().max(b.abs())
}

impl<T: Real> BoundaryTable<T> {
    pub fn empty(n_features: usize) -> Self {
        Self {
            thresholds: vec![Vec::new(); n_features],
        }
    }

    /// Every `(feature, threshold)` tested by any tree in the graph.
    pub fn extract(graph: &CompositionGraph<T>) -> Self {
        let mut table = Self::empty(graph.n_features());
        for (f, t) in graph.tree_splits() {
            table.thresholds[f].push(t);
        }
        for ts in &mut table.thresholds {
            ts.sort_by(|a, b| a.partial_cmp(b).expect("finite thresholds"));
            ts.dedup_by(|a, b| a == b);
        }
        table
    }

    pub fn n_features(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.iter().all(Vec::is_empty)
    }

    /// Threshold of feature `f` that `x` lies on, if any.
    pub fn hit(&self, f: usize, x: T) -> Option<T> {
        let ts = &self.thresholds[f];
        let k = ts.partition_point(|b| *b < x);
        [k.checked_sub(1), Some(k)]
            .into_iter()
            .flatten()
            .filter_map(|i| ts.get(i).copied())
            .find(|&b| on_threshold(x, b))
    }

    /// Features on which `x` lies exactly (within tolerance) on a threshold.
    pub fn endpoint_radix(&self, x: &[T]) -> Vec<usize> {
        (0..self.n_features())
            .filter(|&f| self.hit(f, x[f]).is_some())
            .collect()
    }

    /// Interior crossings of the path `s -> e`, sorted by `alpha`, with
    /// simultaneous hits merged into one higher-radix corner.
    pub fn enumerate_crossings(&self, s: &[T], e: &[T]) -> Vec<Crossing<T>> {
        let mut hits: Vec<(T, usize, T)> = Vec::new();
        for (f, ts) in self.thresholds.iter().enumerate() {
            let (a, b) = (s[f], e[f]);
            if a == b {
                continue;
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            for &t in ts {
                if t <= lo || t >= hi || on_threshold(a, t) || on_threshold(b, t) {
                    continue;
                }
                let alpha = (t - a) / (b - a);
                if alpha > T::zero() && alpha < T::one() {
                    hits.push((alpha, f, t));
                }
            }
        }
        hits.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));

        let tol = T::lit(ALPHA_GROUPING_TOL);
        let mut out: Vec<Crossing<T>> = Vec::new();
        for (alpha, f, t) in hits {
            if let Some(last) = out.last_mut() {
                if alpha - last.alpha <= tol && !last.features.contains(&f) {
                    last.features.push(f);
                    last.thresholds.push(t);
                    continue;
                }
            }
            out.push(Crossing {
                alpha,
                features: vec![f],
                thresholds: vec![t],
                point: Vec::new(),
            });
        }
        for c in &mut out {
            let mut pairs: Vec<(usize, T)> =
                c.features.iter().copied().zip(c.thresholds.iter().copied()).collect();
            pairs.sort_by_key(|p| p.0);
            c.features = pairs.iter().map(|p| p.0).collect();
            c.thresholds = pairs.iter().map(|p| p.1).collect();
            c.point = path_point(s, e, c.alpha);
            for (&f, &t) in c.features.iter().zip(&c.thresholds) {
                c.point[f] = t;
            }
        }
        out
    }

    /// Scalar perturbation step: a quarter of the smallest relevant distance
    /// between a threshold and anything a probe could be displaced from.
    pub fn safe_step(&self, crossings: &[Crossing<T>], s: &[T], e: &[T]) -> T {
        if self.is_empty() {
            return T::one();
        }
        let mut min = T::infinity();
        let mut consider = |d: T| {
            if d > T::zero() && d < min {
                min = d;
            }
        };
        for ts in &self.thresholds {
            for w in ts.windows(2) {
                consider(w[1] - w[0]);
            }
        }
        let points = crossings
            .iter()
            .map(|c| c.point.as_slice())
            .chain([s, e]);
        for p in points {
            for (f, ts) in self.thresholds.iter().enumerate() {
                let on = self.hit(f, p[f]);
                // only the thresholds adjacent to p[f] can be nearest
                let k = ts.partition_point(|b| *b < p[f]);
                for &b in &ts[k.saturating_sub(2)..(k + 2).min(ts.len())] {
                    if Some(b) != on {
                        consider((p[f] - b).abs());
                    }
                }
            }
        }
        // Spacing between consecutive corners, in coordinate units.
        let scale = s
            .iter()
            .zip(e)
            .map(|(a, b)| (*b - *a).abs())
            .fold(T::zero(), T::max);
        if scale > T::zero() {
            let mut prev = T::zero();
            for a in crossings.iter().map(|c| c.alpha).chain([T::one()]) {
                consider((a - prev) * scale);
                prev = a;
            }
        }
        // Half of the half-distance: two probes pushed toward each other
        // from neighbouring thresholds never meet.
        if min.is_finite() {
            min / T::lit(4.0)
        } else {
            T::one()
        }
    }

    /// `point` with every coordinate that sits on a threshold (outside
    /// `skip`) moved `delta` to the side the split routing sends it, so the
    /// result selects the same tree leaves but is unambiguous.
    pub fn off_grid(&self, point: &[T], delta: T, skip: &[usize]) -> Vec<T> {
        let mut probe = point.to_vec();
        for f in 0..self.n_features() {
            if skip.contains(&f) {
                continue;
            }
            if let Some(b) = self.hit(f, point[f]) {
                probe[f] = if point[f] >= b { b + delta } else { b - delta };
            }
        }
        probe
    }
}

pub fn path_point<T: Real>(s: &[T], e: &[T], alpha: T) -> Vec<T> {
    s.iter()
        .zip(e)
        .map(|(a, b)| if a == b { *a } else { (T::one() - alpha) * *a + alpha * *b })
        .collect()
}
