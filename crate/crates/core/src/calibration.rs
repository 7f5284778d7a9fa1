//! Smoothed ECDF: a monotone piecewise-linear map from raw scores to
//! approximate ranks in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{GigError, Result};
use crate::model::{NodeKind, PiecewiseLinearCurve};
use crate::scalar::Real;

pub const DEFAULT_KNOTS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EcdfFit<T> {
    pub samples_seen: usize,
    pub knot_count: usize,
    pub curve: PiecewiseLinearCurve<T>,
}

/// Linear-interpolation quantile of sorted data (the "type 7" rule).
fn quantile<T: Real>(sorted: &[T], p: f64) -> T {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let frac = T::lit(h - lo as f64);
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Knots at `knot_count` evenly spaced quantile levels `0, 1/(K-1), ..., 1`.
/// Knots with equal inputs collapse to the last one.
pub fn fit_ecdf<T: Real>(scores: &[T], knot_count: usize) -> Result<EcdfFit<T>> {
    if knot_count < 2 {
        return Err(GigError::InvalidArgument("an ECDF needs at least 2 knots".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(GigError::NonFinite("score".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    if sorted.is_empty() || sorted[0] == sorted[sorted.len() - 1] {
        return Err(GigError::Degenerate(
            "fitting an ECDF needs at least 2 distinct scores".into(),
        ));
    }
    let last = (knot_count - 1) as f64;
    let mut knots: Vec<[T; 2]> = Vec::with_capacity(knot_count);
    for k in 0..knot_count {
        let p = k as f64 / last;
        let x = quantile(&sorted, p);
        let y = T::lit(p);
        match knots.last_mut() {
            Some(prev) if prev[0] == x => prev[1] = y,
            _ => knots.push([x, y]),
        }
    }
    Ok(EcdfFit {
        samples_seen: scores.len(),
        knot_count,
        curve: PiecewiseLinearCurve::new(knots),
    })
}

impl<T: Real> EcdfFit<T> {
    pub fn transform(&self, score: T) -> T {
        self.curve.eval(score)
    }

    pub fn derivative(&self, score: T) -> T {
        self.curve.derivative(score)
    }

    pub fn node(&self) -> NodeKind<T> {
        NodeKind::PwlCurve(self.curve.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn uniform_grid_is_nearly_linear() {
        let scores: Vec<f64> = (1..=100).map(f64::from).collect();
        let fit = fit_ecdf(&scores, 4).unwrap();
        assert_eq!(fit.curve.knots.first().unwrap(), &[1.0, 0.0]);
        assert_eq!(fit.curve.knots.last().unwrap(), &[100.0, 1.0]);
        assert!((fit.transform(50.5) - 0.5).abs() <= 0.02);
    }

    #[test]
    fn constant_scores_are_rejected() {
        assert!(matches!(fit_ecdf(&[3.0; 10], 8), Err(GigError::Degenerate(_))));
        assert!(fit_ecdf::<f64>(&[], 8).is_err());
        assert!(fit_ecdf(&[1.0, 2.0], 1).is_err());
        assert!(fit_ecdf(&[1.0, f64::NAN], 4).is_err());
    }

    #[test]
    fn clamping_and_knot_values() {
        let fit = fit_ecdf(&normal_sample(1000, 3), 16).unwrap();
        assert_eq!(fit.transform(-100.0), 0.0);
        assert_eq!(fit.transform(100.0), 1.0);
        for k in &fit.curve.knots {
            assert_eq!(fit.transform(k[0]), k[1]);
        }
        assert_eq!(fit.derivative(-100.0), 0.0);
        assert!(fit.curve.check().is_empty());
    }

    #[test]
    fn ties_collapse_to_last_level() {
        let scores = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0];
        let fit = fit_ecdf(&scores, 5).unwrap();
        assert!(fit.curve.knots.windows(2).all(|w| w[0][0] < w[1][0]));
        assert_eq!(fit.curve.knots[0][0], 0.0);
        assert!(fit.curve.knots[0][1] >= 0.5);
    }

    #[test]
    fn knots_track_the_raw_ecdf() {
        let mut scores = normal_sample(5000, 9);
        let fit = fit_ecdf(&scores, 64).unwrap();
        scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for k in &fit.curve.knots {
            let raw = scores.partition_point(|s| *s <= k[0]) as f64 / scores.len() as f64;
            assert!((raw - k[1]).abs() <= 1.0 / 64.0, "{k:?} raw {raw}");
        }
    }

    #[test]
    fn standard_normal_median_and_mean() {
        let scores = normal_sample(10_000, 1);
        let fit = fit_ecdf(&scores, 64).unwrap();
        let mid = fit.transform(0.0);
        assert!((0.47..=0.53).contains(&mid));
        let mean = scores.iter().map(|s| fit.transform(*s)).sum::<f64>() / scores.len() as f64;
        assert!((mean - 0.5).abs() <= 0.02);
    }

    #[test]
    fn transform_is_monotone_and_preserves_rank() {
        let fit = fit_ecdf(&normal_sample(500, 4), 32).unwrap();
        let xs: Vec<f64> = (0..2000).map(|i| -4.0 + i as f64 * 0.004).collect();
        let ys: Vec<f64> = xs.iter().map(|x| fit.transform(*x)).collect();
        assert!(ys.windows(2).all(|w| w[0] <= w[1]));
        let lo = fit.curve.knots[0][0];
        let hi = fit.curve.knots.last().unwrap()[0];
        for w in xs.windows(2).zip(ys.windows(2)) {
            if w.0[0] > lo && w.0[1] < hi {
                assert!(w.1[0] < w.1[1]);
            }
        }
    }

    #[test]
    fn f32_fit() {
        let scores: Vec<f32> = (0..200).map(|i| (i as f32 * 0.37).sin()).collect();
        let fit = fit_ecdf(&scores, 16).unwrap();
        assert!(fit.curve.check().is_empty());
    }
}
