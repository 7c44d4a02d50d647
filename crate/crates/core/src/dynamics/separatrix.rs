//! Separatrix: backward orbit into the wedge point `(w*, w*)` plus the
//! horizontal half-line `w = w*` to its right.

use crate::error::{Error, Result};
use crate::model::{ModelSpec, State};
use crate::ode::{Stepper, Tolerance};

/// Piecewise-linear separatrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Separatrix {
    /// Ordinate (and abscissa) of the wedge point on the w-nullcline.
    pub w_star: f64,
    /// Slope of the wedge line used beyond the leftmost node.
    pub alpha_minus: f64,
    /// `F'(v*)` at the wedge point.
    pub slope_at_wedge: f64,
    v: Vec<f64>,
    w: Vec<f64>,
}

impl Separatrix {
    /// Separatrix ordinate above abscissa `v`.
    pub fn w_at(&self, v: f64) -> f64 {
        let n = self.v.len();
        if v >= self.v[n - 1] {
            return self.w_star;
        }
        if v <= self.v[0] {
            return self.w[0] + self.alpha_minus * (v - self.v[0]);
        }
        let k = self.v.partition_point(|x| *x <= v) - 1;
        let s = (v - self.v[k]) / (self.v[k + 1] - self.v[k]);
        self.w[k] + s * (self.w[k + 1] - self.w[k])
    }

    /// On or above the curve, up to `tol`.
    pub fn is_above(&self, s: State, tol: f64) -> bool {
        s.w >= self.w_at(s.v) - tol
    }

    /// Nodes in increasing `v`, ending at `(w*, w*)`.
    pub fn nodes(&self) -> Vec<State> {
        self.v.iter().zip(&self.w).map(|(v, w)| State::new(*v, *w)).collect()
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

/// Wedge point `v*`: `F'(v*) < -3.1`, `(v*, v*)` below the v-nullcline and
/// `v* < min F + I - 0.5`, scanning left from `argmin F`.
fn wedge_point(model: &ModelSpec) -> Result<f64> {
    let m = model.argmin_f();
    let cap = model.min_f() + model.i - 0.5;
    let mut v = m.min(cap);
    let mut step = 0.05;
    for _ in 0..100_000 {
        let ok = model.df(v) < -3.1 && model.f(v) + model.i - v > 0.0 && v < cap;
        if ok {
            return Ok(v);
        }
        v -= step;
        step = (step * 1.05).min(10.0);
        if v < -1e6 {
            break;
        }
    }
    Err(Error::NoSeparatrix)
}

/// Smallest-magnitude negative root of `a^2 - a(1 + F'(v*)) + 1 = 0`.
fn alpha_minus(fp: f64) -> f64 {
    let b = 1.0 + fp;
    let disc = (b * b - 4.0).max(0.0).sqrt();
    0.5 * (b + disc)
}

/// Build a separatrix for the model's current `I`, reaching up to `w_top`.
pub fn build_separatrix(model: &ModelSpec, w_top: f64) -> Result<Separatrix> {
    let vs = wedge_point(model)?;
    let fp = model.df(vs);
    let alpha = alpha_minus(fp);
    let i = model.i;
    // backward orbit parametrized by x = -v: dW/dx = -(v - W)/(F(v) - W + I)
    let mut rhs = |x: f64, y: &[f64; 1]| {
        let v = -x;
        let den = model.f(v) - y[0] + i;
        [-(v - y[0]) / den]
    };
    let w_top = w_top.max(vs + 1.0);
    let tol = Tolerance::new(1e-11, 1e-10);
    let mut st = Stepper::new(&mut rhs, -vs, [vs], 1e-3, tol);
    let mut segs = Vec::new();
    let x_max = -vs + 1e7;
    while st.y[0] < w_top {
        st.step(&mut rhs, x_max)?;
        let v = -st.t;
        if model.f(v) - st.y[0] + i <= 0.0 {
            // the wedge guarantees this never happens; treat as no separatrix
            return Err(Error::NoSeparatrix);
        }
        segs.push(*st.dense());
        if st.t >= x_max {
            break;
        }
    }
    let span = st.t + vs;
    let h_target = span / 1000.0;
    let mut pts: Vec<(f64, f64)> = vec![(vs, vs)];
    for d in &segs {
        let m = ((d.h / h_target).ceil() as usize).max(2);
        for k in 1..=m {
            let x = d.t0 + d.h * k as f64 / m as f64;
            pts.push((-x, d.component(x, 0)));
        }
    }
    pts.reverse();
    let (v, w): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Ok(Separatrix { w_star: vs, alpha_minus: alpha, slope_at_wedge: fp, v, w })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Nonlinearity;

    #[test]
    fn adex_a5_builds_below_min_f() {
        let m = ModelSpec::fig2();
        let s = build_separatrix(&m, 60.0).unwrap();
        assert!(s.w_star < m.min_f() + m.i);
        assert!(s.slope_at_wedge < -3.0);
        assert!(s.len() >= 1000);
        // ordinates increase to the left
        let n = s.nodes();
        assert!(n.windows(2).all(|p| p[0].w >= p[1].w - 1e-12));
        assert!(s.w_at(-1e4) > 1e3);
        assert_eq!(s.w_at(100.0), s.w_star);
    }

    #[test]
    fn adex_a2_has_none() {
        let m = ModelSpec { nonlinearity: Nonlinearity::AdEx { a: 2.0, shift: -2.0 }, ..ModelSpec::fig2() };
        assert_eq!(build_separatrix(&m, 60.0), Err(Error::NoSeparatrix));
    }

    #[test]
    fn quartic_builds() {
        for a in [-2.0, 0.0, 1.0, 3.0] {
            let m = ModelSpec::quartic(a, 2.0);
            let s = build_separatrix(&m, 40.0).unwrap();
            assert!(s.w_star < m.min_f());
        }
    }

    #[test]
    fn alpha_root() {
        let a = alpha_minus(-5.0);
        assert!((a * a - a * (1.0 - 5.0) + 1.0).abs() < 1e-12);
        assert!(a < 0.0 && a > -1.0);
    }
}
