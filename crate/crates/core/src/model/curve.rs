use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Monotone piecewise-linear curve, clamped to its end outputs outside the
/// knot range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PiecewiseLinearCurve<T> {
    pub knots: Vec<[T; 2]>,
}

impl<T: Real> PiecewiseLinearCurve<T> {
    pub fn new(knots: Vec<[T; 2]>) -> Self {
        Self { knots }
    }

    /// Problems with the knot sequence, empty if the curve is usable.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.knots.is_empty() {
            out.push("curve has no knots".to_string());
            return out;
        }
        if self.knots.iter().any(|k| !k[0].is_finite() || !k[1].is_finite()) {
            out.push("curve has non-finite knots".to_string());
        }
        if self.knots.windows(2).any(|w| !(w[0][0] < w[1][0])) {
            out.push("non-monotone curve: knot inputs must be strictly increasing".to_string());
        }
        if self.knots.windows(2).any(|w| w[1][1] < w[0][1]) {
            out.push("non-monotone curve: knot outputs decrease".to_string());
        }
        out
    }

    /// Index `i` of the segment `[knot i, knot i+1)` containing `x`, or
    /// `None` outside the knot range (the last knot counts as outside).
    fn segment(&self, x: T) -> Option<usize> {
        let n = self.knots.len();
        if n < 2 || x < self.knots[0][0] || x >= self.knots[n - 1][0] {
            return None;
        }
        // First knot with input > x, minus one.
        let hi = self.knots.partition_point(|k| k[0] <= x);
        Some(hi - 1)
    }

    pub fn eval(&self, x: T) -> T {
        let n = self.knots.len();
        if x <= self.knots[0][0] {
            return self.knots[0][1];
        }
        if x >= self.knots[n - 1][0] {
            return self.knots[n - 1][1];
        }
        let i = self.segment(x).expect("inside knot range");
        let [x0, y0] = self.knots[i];
        let [x1, y1] = self.knots[i + 1];
        let t = (x - x0) / (x1 - x0);
        y0 + t * (y1 - y0)
    }

    /// Slope of the active segment, right derivative at knots, zero outside
    /// the knot range.
    pub fn derivative(&self, x: T) -> T {
        match self.segment(x) {
            None => T::zero(),
            Some(i) => {
                let [x0, y0] = self.knots[i];
                let [x1, y1] = self.knots[i + 1];
                (y1 - y0) / (x1 - x0)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> PiecewiseLinearCurve<f64> {
        PiecewiseLinearCurve::new(vec![[0.0, 0.0], [1.0, 1.0]])
    }

    #[test]
    fn identity_ramp() {
        assert_eq!(ramp().eval(0.25), 0.25);
        assert_eq!(ramp().eval(-4.0), 0.0);
        assert_eq!(ramp().eval(9.0), 1.0);
    }

    #[test]
    fn knot_derivative_is_right_sided() {
        let c = PiecewiseLinearCurve::new(vec![[0.0, 0.0], [1.0, 1.0], [2.0, 3.0]]);
        assert_eq!(c.derivative(1.0), 2.0);
        assert_eq!(c.derivative(0.0), 1.0);
        assert_eq!(c.derivative(2.0), 0.0);
        assert_eq!(c.derivative(-0.1), 0.0);
        assert_eq!(c.eval(1.0), 1.0);
    }

    #[test]
    fn check_flags_decreasing() {
        let c = PiecewiseLinearCurve::new(vec![[0.0, 1.0], [1.0, 0.0]]);
        assert!(c.check().iter().any(|m| m.contains("non-monotone")));
        assert!(ramp().check().is_empty());
    }
}
