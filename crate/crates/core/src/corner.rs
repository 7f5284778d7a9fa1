//! Discrete credit at split-hyperplane intersections.
//!
//! Around a corner of radix `k` the model takes (up to) `2^k` constant
//! values, one per orthant. Orthants are indexed by a bitmask relative to
//! the direction of travel: bit `r` set means "on the side of `e`" along the
//! `r`-th crossing feature, clear means "on the side of `s`". The corner
//! credit is a signed, exactly weighted sum of those orthant values; the
//! weights `eta(k, j) = j! (k-j-1)! / k!` coincide with Shapley ordering
//! coefficients, which is what [`shapley_lift_oracle`] checks independently.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use once_cell::sync::Lazy;

use crate::boundary::{BoundaryTable, Crossing};
use crate::error::{GigError, Result};
use crate::model::{CellAssignment, CompositionGraph, Workspace};
use crate::scalar::{Exact, Real, ShapleyScalar};

/// Largest supported corner radix and Shapley player count.
pub const K_MAX: usize = 20;

/// `eta(k, j)` for `1 <= k <= max_k`, `0 <= j < k`, as exact rationals.
#[derive(Clone, Debug)]
pub struct EtaTable {
    max_k: usize,
    rows: Vec<Vec<Exact>>,
}

fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

impl EtaTable {
    pub fn new(max_k: usize) -> Self {
        let rows = (1..=max_k)
            .map(|k| {
                (0..k)
                    .map(|j| Exact::new(factorial(j) * factorial(k - j - 1), factorial(k)))
                    .collect()
            })
            .collect();
        Self { max_k, rows }
    }

    pub fn max_k(&self) -> usize {
        self.max_k
    }

    pub fn get(&self, k: usize, j: usize) -> Result<&Exact> {
        if k == 0 || j >= k || k > self.max_k {
            return Err(GigError::EtaDomain { k, j, max: self.max_k });
        }
        Ok(&self.rows[k - 1][j])
    }
}

static ETA: Lazy<EtaTable> = Lazy::new(|| EtaTable::new(K_MAX));

pub fn eta_table() -> &'static EtaTable {
    &ETA
}

pub fn eta(k: usize, j: usize) -> Result<Exact> {
    ETA.get(k, j).cloned()
}

/// `eta(k, j)` from the orthant-elimination recursion
/// `eta(k, j) = eta(k - j, 0) - sum_{p<j} C(j, p) eta(k, p)` with
/// `eta(m, 0) = 1/m`.
pub fn eta_recursive(k: usize, j: usize) -> Result<Exact> {
    if k == 0 || j >= k || k > K_MAX {
        return Err(GigError::EtaDomain { k, j, max: K_MAX });
    }
    let mut row: Vec<Exact> = Vec::with_capacity(j + 1);
    for jj in 0..=j {
        let mut v = Exact::new(BigInt::one(), BigInt::from(k - jj));
        let mut binom = BigInt::one();
        for (p, prev) in row.iter().enumerate() {
            v -= Exact::from_integer(binom.clone()) * prev;
            binom = binom * BigInt::from(jj - p) / BigInt::from(p + 1);
        }
        row.push(v);
    }
    Ok(row.pop().expect("non-empty"))
}

/// Weight vector applied to the orthant whose mismatch set is `mismatch`
/// (bit `r` set: that orthant lies on the `s` side along axis `r`).
/// Matched axes get `+eta(k, j)`, mismatched axes `-eta(k, j-1)`, with
/// `j = |mismatch|`.
pub fn orthant_weight_vector(k: usize, mismatch: u32) -> Result<Vec<Exact>> {
    if k == 0 || k > K_MAX {
        return Err(GigError::EtaDomain { k, j: 0, max: K_MAX });
    }
    let j = mismatch.count_ones() as usize;
    (0..k)
        .map(|r| {
            if mismatch & (1 << r) == 0 {
                eta(k, j)
            } else {
                eta(k, j - 1).map(|v| -v)
            }
        })
        .collect()
}

/// A set function over `n_players`, stored by bitmask, with `v(empty) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftSpec<S> {
    n_players: usize,
    values: Vec<S>,
}

impl<S: ShapleyScalar> LiftSpec<S> {
    pub fn new(n_players: usize, values: Vec<S>) -> Result<Self> {
        if n_players > K_MAX {
            return Err(GigError::TooManyPlayers {
                n: n_players,
                max: K_MAX,
            });
        }
        if values.len() != 1 << n_players {
            return Err(GigError::InvalidArgument(format!(
                "a game on {n_players} players needs {} values, got {}",
                1usize << n_players,
                values.len()
            )));
        }
        if !values[0].is_zero() {
            return Err(GigError::InvalidArgument(
                "a lift must vanish on the empty coalition".into(),
            ));
        }
        Ok(Self { n_players, values })
    }

    pub fn from_fn(n_players: usize, mut f: impl FnMut(u32) -> S) -> Result<Self> {
        if n_players > K_MAX {
            return Err(GigError::TooManyPlayers {
                n: n_players,
                max: K_MAX,
            });
        }
        Self::new(n_players, (0..1u32 << n_players).map(&mut f).collect())
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn value(&self, coalition: u32) -> &S {
        &self.values[coalition as usize]
    }

    /// `f(x)` on the grand coalition, zero elsewhere.
    pub fn n_lift(fx: S, n: usize) -> Result<Self> {
        let full = (1u32 << n) - 1;
        Self::from_fn(n, |m| if m == full { fx.clone() } else { S::zero() })
    }

    /// Zero on the empty coalition, `f(x)` elsewhere.
    pub fn empty_set_lift(fx: S, n: usize) -> Result<Self> {
        Self::from_fn(n, |m| if m == 0 { S::zero() } else { fx.clone() })
    }

    /// `f(x)` on the grand coalition, `f(x) - i` on the grand coalition
    /// minus player `i` (players numbered from 1), zero elsewhere.
    pub fn half_weight_lift(fx: S, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(GigError::InvalidArgument(
                "the half-weight lift needs at least two players".into(),
            ));
        }
        let full = (1u32 << n) - 1;
        Self::from_fn(n, |m| {
            if m == full {
                return fx.clone();
            }
            let missing = full & !m;
            if missing.count_ones() == 1 {
                let i = missing.trailing_zeros() as u64 + 1;
                fx.clone() - S::from_ratio(i, 1)
            } else {
                S::zero()
            }
        })
    }

    /// `v(S) = sum of weights[i] over i in S`.
    pub fn additive(weights: &[S]) -> Result<Self> {
        Self::from_fn(weights.len(), |m| {
            (0..weights.len())
                .filter(|i| m & (1 << i) != 0)
                .fold(S::zero(), |acc, i| acc + weights[i].clone())
        })
    }
}

fn factorial_u64(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// Exact Shapley values by enumeration of all `2^n` coalitions.
pub fn shapley<S: ShapleyScalar>(lift: &LiftSpec<S>) -> Result<Vec<S>> {
    let n = lift.n_players;
    if n > K_MAX {
        return Err(GigError::TooManyPlayers { n, max: K_MAX });
    }
    let n_fact = factorial_u64(n);
    let weights: Vec<S> = (0..n)
        .map(|s| S::from_ratio(factorial_u64(s) * factorial_u64(n - s - 1), n_fact))
        .collect();
    let mut phi = Vec::with_capacity(n);
    for i in 0..n {
        let bit = 1u32 << i;
        // marginal contributions grouped by coalition size
        let mut by_size = vec![S::zero(); n];
        for m in 0..(1u32 << n) {
            if m & bit != 0 {
                continue;
            }
            let c = m.count_ones() as usize;
            let d = lift.values[(m | bit) as usize].clone() - lift.values[m as usize].clone();
            by_size[c] = by_size[c].clone() + d;
        }
        let v = weights
            .iter()
            .zip(by_size)
            .fold(S::zero(), |acc, (w, d)| acc + w.mul_ref(&d));
        phi.push(v);
    }
    Ok(phi)
}

/// Which end of the path an endpoint corner sits at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Start,
    End,
}

/// The local picture around one corner: where the continuous part is
/// evaluated, which axes are perturbed, and in which direction the path
/// travels along each of them.
#[derive(Clone, Debug)]
pub struct CornerContext<'a, T> {
    graph: &'a CompositionGraph<T>,
    at: Vec<T>,
    base_probe: Vec<T>,
    features: Vec<usize>,
    anchors: Vec<T>,
    forward: Vec<bool>,
    delta: T,
}

impl<'a, T: Real> CornerContext<'a, T> {
    pub fn interior(
        graph: &'a CompositionGraph<T>,
        table: &BoundaryTable<T>,
        crossing: &Crossing<T>,
        s: &[T],
        e: &[T],
        delta: T,
    ) -> Self {
        let forward = crossing.features.iter().map(|&f| e[f] > s[f]).collect();
        Self {
            graph,
            at: crossing.point.clone(),
            base_probe: table.off_grid(&crossing.point, delta, &crossing.features),
            features: crossing.features.clone(),
            anchors: crossing.thresholds.clone(),
            forward,
            delta,
        }
    }

    /// Corner at an endpoint, over the axes where the endpoint lies on a
    /// threshold and the path actually moves. `None` when there are none.
    pub fn endpoint(
        graph: &'a CompositionGraph<T>,
        table: &BoundaryTable<T>,
        which: Endpoint,
        s: &[T],
        e: &[T],
        delta: T,
    ) -> Option<Self> {
        let at = match which {
            Endpoint::Start => s,
            Endpoint::End => e,
        };
        let mut features = Vec::new();
        let mut anchors = Vec::new();
        for f in table.endpoint_radix(at) {
            if s[f] != e[f] {
                features.push(f);
                anchors.push(table.hit(f, at[f]).expect("endpoint_radix hit"));
            }
        }
        if features.is_empty() {
            return None;
        }
        let forward = features.iter().map(|&f| e[f] > s[f]).collect();
        Some(Self {
            graph,
            at: at.to_vec(),
            base_probe: table.off_grid(at, delta, &features),
            features,
            anchors,
            forward,
            delta,
        })
    }

    /// Builds a context directly; `forward[r]` is true when the path moves
    /// up along `features[r]`.
    pub fn new(
        graph: &'a CompositionGraph<T>,
        at: Vec<T>,
        features: Vec<usize>,
        anchors: Vec<T>,
        forward: Vec<bool>,
        delta: T,
    ) -> Self {
        Self {
            base_probe: at.clone(),
            graph,
            at,
            features,
            anchors,
            forward,
            delta,
        }
    }

    pub fn radix(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn point(&self) -> &[T] {
        &self.at
    }

    pub fn graph(&self) -> &CompositionGraph<T> {
        self.graph
    }

    /// Probe inside the orthant `toward_end` (bit `r` set: `e` side).
    pub fn probe(&self, toward_end: u32) -> Vec<T> {
        let mut p = self.base_probe.clone();
        for (r, (&f, &b)) in self.features.iter().zip(&self.anchors).enumerate() {
            let to_e = toward_end & (1 << r) != 0;
            p[f] = if to_e == self.forward[r] {
                b + self.delta
            } else {
                b - self.delta
            };
        }
        p
    }

    /// `g(at, D(probe))` for every orthant, indexed by the `toward_end` mask.
    pub fn orthant_values(&self) -> Result<Vec<T>> {
        let k = self.radix();
        if k > K_MAX {
            return Err(GigError::RadixOverflow { radix: k, max: K_MAX });
        }
        let mut ws = Workspace::default();
        (0..1u32 << k)
            .map(|m| {
                let cells = CellAssignment::new(self.graph, self.probe(m))?;
                self.graph.eval_split_with(&self.at, &cells, &mut ws)
            })
            .collect()
    }

    fn embed(&self, local: Vec<Exact>) -> Vec<Exact> {
        let mut out = vec![Exact::zero(); self.graph.n_features()];
        for (&f, v) in self.features.iter().zip(local) {
            out[f] = v;
        }
        out
    }
}

/// Per-axis weighted orthant sum, grouped so each `eta` multiplies once.
/// `include(mask)` selects orthants; `scale(mask)` multiplies their weight.
fn weighted_orthant_sum(
    k: usize,
    values: &[Exact],
    include: impl Fn(u32) -> bool,
) -> Result<Vec<Exact>> {
    let full = (1u32 << k) - 1;
    let mut out = Vec::with_capacity(k);
    for r in 0..k {
        let bit = 1u32 << r;
        let mut matched = vec![Exact::zero(); k + 1];
        let mut mismatched = vec![Exact::zero(); k + 1];
        for m in 0..=full {
            if !include(m) {
                continue;
            }
            let j = (full & !m).count_ones() as usize;
            if m & bit != 0 {
                matched[j] += &values[m as usize];
            } else {
                mismatched[j] += &values[m as usize];
            }
        }
        let mut acc = Exact::zero();
        for j in 0..k {
            if !matched[j].is_zero() {
                acc += eta(k, j)? * &matched[j];
            }
        }
        for j in 1..=k {
            if !mismatched[j].is_zero() {
                acc -= eta(k, j - 1)? * &mismatched[j];
            }
        }
        out.push(acc);
    }
    Ok(out)
}

fn to_exact<T: Real>(values: &[T]) -> Vec<Exact> {
    values.iter().map(|v| v.to_exact()).collect()
}

/// Credit for an interior corner: the full weighted orthant sum. Its
/// components sum to (value after) - (value before), exactly.
pub fn zeta<T: Real>(ctx: &CornerContext<'_, T>) -> Result<Vec<Exact>> {
    let k = ctx.radix();
    if k == 0 {
        return Ok(vec![Exact::zero(); ctx.graph.n_features()]);
    }
    let values = to_exact(&ctx.orthant_values()?);
    Ok(ctx.embed(weighted_orthant_sum(k, &values, |_| true)?))
}

/// Credit for an endpoint lying on split hyperplanes.
///
/// The orthant the path leaves into (start) or arrives from (end) carries
/// full weight, the mixed orthants half weight, and the difference between
/// that orthant's limit and the value at the endpoint itself is shared
/// equally by the incident axes. `iota(Start)` for `s -> e` is exactly the
/// negation of `iota(End)` for `e -> s`.
pub fn iota<T: Real>(ctx: &CornerContext<'_, T>, which: Endpoint) -> Result<Vec<Exact>> {
    let k = ctx.radix();
    if k == 0 {
        return Ok(vec![Exact::zero(); ctx.graph.n_features()]);
    }
    let full = (1u32 << k) - 1;
    let values = to_exact(&ctx.orthant_values()?);
    let at_point = ctx.graph.eval(&ctx.at)?.to_exact();
    let mixed = weighted_orthant_sum(k, &values, |m| m != 0 && m != full)?;
    let half = Exact::new(BigInt::one(), BigInt::from(2));
    let share = match which {
        Endpoint::Start => &values[full as usize] - &at_point,
        Endpoint::End => at_point - &values[0],
    } / Exact::from_integer(BigInt::from(k));
    Ok(ctx.embed(mixed.into_iter().map(|v| v * &half + &share).collect()))
}

/// Shapley values of the lift `v(S) = g(at, D(probe_S)) - g(at, D(probe_empty))`
/// where `probe_S` is displaced toward `e` on the axes in `S` and toward `s`
/// on the rest. Computed by coalition enumeration, independently of the
/// orthant weights; it must agree with [`zeta`] exactly.
pub fn shapley_lift_oracle<T: Real>(ctx: &CornerContext<'_, T>) -> Result<Vec<Exact>> {
    let k = ctx.radix();
    let values = to_exact(&ctx.orthant_values()?);
    let lift = LiftSpec::from_fn(k, |m| &values[m as usize] - &values[0])?;
    Ok(ctx.embed(shapley(&lift)?))
}

/// The same oracle evaluated in floating point.
pub fn shapley_lift_oracle_float<T: Real + ShapleyScalar>(
    ctx: &CornerContext<'_, T>,
) -> Result<Vec<T>> {
    let k = ctx.radix();
    let values = ctx.orthant_values()?;
    let lift = LiftSpec::from_fn(k, |m| values[m as usize] - values[0])?;
    let local = shapley(&lift)?;
    let mut out = vec![T::zero(); ctx.graph.n_features()];
    for (&f, v) in ctx.features.iter().zip(local) {
        out[f] = v;
    }
    Ok(out)
}

pub fn round_vec<T: Real>(v: &[Exact]) -> Vec<T> {
    v.iter().map(T::from_exact).collect()
}
