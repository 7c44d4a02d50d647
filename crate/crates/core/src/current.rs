//! Time-dependent input current `kappa(t)`.

use std::sync::Arc;

/// `kappa` as a function of time: constant or piecewise linear.
#[derive(Debug, Clone, PartialEq)]
pub enum Kappa {
    Constant(f64),
    PiecewiseLinear(Arc<KappaPath>),
}

/// Knots of a piecewise-linear current; constant extension outside.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaPath {
    times: Vec<f64>,
    values: Vec<f64>,
    max: f64,
}

impl KappaPath {
    /// Panics unless `times` is nonempty, increasing and matches `values`.
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Self {
        assert!(!times.is_empty() && times.len() == values.len());
        assert!(times.windows(2).all(|p| p[1] > p[0]), "knots must increase");
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self { times, values, max }
    }

    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let k = self.times.partition_point(|x| *x <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let s = (t - t0) / (t1 - t0);
        self.values[k] + s * (self.values[k + 1] - self.values[k])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Kappa {
    pub fn zero() -> Self {
        Kappa::Constant(0.0)
    }

    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Kappa::Constant(k) => *k,
            Kappa::PiecewiseLinear(p) => p.at(t),
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            Kappa::Constant(k) => *k,
            Kappa::PiecewiseLinear(p) => p.max,
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            Kappa::Constant(k) => *k,
            Kappa::PiecewiseLinear(p) => p.values.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            Kappa::Constant(k) => Some(*k),
            Kappa::PiecewiseLinear(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_clamps() {
        let p = KappaPath::new(vec![0.0, 1.0, 3.0], vec![1.0, 3.0, 2.0]);
        assert_eq!(p.at(-1.0), 1.0);
        assert_eq!(p.at(0.5), 2.0);
        assert_eq!(p.at(2.0), 2.5);
        assert_eq!(p.at(9.0), 2.0);
        let k = Kappa::PiecewiseLinear(Arc::new(p));
        assert_eq!(k.max(), 3.0);
        assert_eq!(k.min(), 1.0);
    }
}
