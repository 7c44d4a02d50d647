//! The partition P1..P4 of the region above the separatrix.

use serde::{Deserialize, Serialize};

use super::separatrix::{build_separatrix, Separatrix};
use super::{equilibria, nullclines};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, State};
use crate::ode::{Stepper, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionId {
    P1,
    P2,
    P3,
    P4,
    BelowSeparatrix,
}

impl RegionId {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionId::P1 => "P1",
            RegionId::P2 => "P2",
            RegionId::P3 => "P3",
            RegionId::P4 => "P4",
            RegionId::BelowSeparatrix => "below",
        }
    }
}

/// Partition shared by every current in `i_range`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub w_star: f64,
    pub w23: f64,
    pub v34: f64,
    /// Ordinate on the reset line above which the orbit is guaranteed to reach
    /// the v-nullcline through the left branch (backward orbit of the left
    /// nullcline point at `w23`).
    pub w_reach: f64,
    pub separatrix: Separatrix,
    pub i_range: (f64, f64),
    pub margin: f64,
    pub sep_tol: f64,
    argmin_f: f64,
}

/// Build the partition family for currents in `i_range`.
pub fn build_partition(model: &ModelSpec, i_range: (f64, f64), margin: f64) -> Result<Partition> {
    if !(margin > 0.0) || !margin.is_finite() {
        return Err(Error::InvalidMargin(margin));
    }
    let (lo, hi) = i_range;
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!("bad current range [{lo}, {hi}]")));
    }
    let fmin = model.min_f();
    let n = if hi > lo { 64 } else { 0 };
    let mut crit = f64::NEG_INFINITY;
    for k in 0..=n {
        let i = if n == 0 { lo } else { lo + (hi - lo) * k as f64 / n as f64 };
        let c = match equilibria(model, i).last() {
            Some(v) => *v,
            None => fmin + i,
        };
        crit = crit.max(c);
    }
    let mut w23 = crit + margin;
    // reset line must cross {w = w23} strictly above the v-nullcline, and
    // below w = v so that it never starts in P4
    let floor = (model.f(model.v_r) + hi).max(model.v_r);
    if w23 <= floor {
        w23 = floor + margin;
    }
    let low = model.with_current(lo);
    let separatrix = build_separatrix(&low, 2.0 * w23.abs() + 10.0 * model.w_b + 100.0)?;
    let mut w_reach = f64::NEG_INFINITY;
    for i in [lo, hi] {
        w_reach = w_reach.max(backward_reach(model, w23, i));
    }
    Ok(Partition {
        w_star: separatrix.w_star,
        w23,
        v34: w23,
        w_reach,
        separatrix,
        i_range,
        margin,
        sep_tol: 1e-6,
        argmin_f: model.argmin_f(),
    })
}

/// Ordinate where the backward orbit of `(V_null^-(w23), w23)` meets `v = v_r`.
fn backward_reach(model: &ModelSpec, w23: f64, i: f64) -> f64 {
    let m = model.with_current(i);
    let Ok(nc) = nullclines(&m, w23, 0.0) else { return f64::INFINITY };
    let Some(v0) = nc.v_minus else { return f64::INFINITY };
    if v0 >= model.v_r {
        return w23;
    }
    let mut rhs = |_t: f64, y: &[f64; 2]| [-(m.f(y[0]) - y[1] + i), -(y[0] - y[1])];
    let mut st = Stepper::new(&mut rhs, 0.0, [v0, w23], 0.0, Tolerance::new(1e-10, 1e-9));
    while st.t < 1e3 {
        if st.step(&mut rhs, 1e3).is_err() {
            return f64::INFINITY;
        }
        if st.y[0] >= model.v_r {
            let d = *st.dense();
            let t = d.locate(|_, y| y[0] - model.v_r);
            return d.component(t, 1);
        }
    }
    f64::INFINITY
}

impl Partition {
    /// Region of `s` for effective current `current` (`I + kappa`).
    pub fn classify(&self, model: &ModelSpec, s: State, current: f64) -> RegionId {
        if !self.separatrix.is_above(s, self.sep_tol) {
            return RegionId::BelowSeparatrix;
        }
        if s.v >= self.v34 && s.w <= s.v {
            return RegionId::P4;
        }
        if s.w <= self.w23 && s.v < self.v34 {
            return RegionId::P3;
        }
        if s.v >= self.argmin_f && s.w <= model.f(s.v) + current {
            return RegionId::P1;
        }
        RegionId::P2
    }

    /// Whether `s` lies in the working domain above the separatrix.
    pub fn contains(&self, s: State) -> bool {
        self.separatrix.is_above(s, self.sep_tol)
    }

    /// `C` of the w-increment bound: `w23 + int_{v34}^inf (u - w*)/(F(u) - u + I_low) du`.
    pub fn increment_bound(&self, model: &ModelSpec) -> f64 {
        let ilow = self.i_range.0;
        let g = |u: f64| (u - self.w_star) / (model.f(u) - u + ilow);
        // map u = v34 + s/(1-s), s in [0,1)
        let n = 4000;
        let mut acc = 0.0;
        for k in 0..n {
            // midpoint rule on the mapped variable
            let s = (k as f64 + 0.5) / n as f64;
            let u = self.v34 + s / (1.0 - s);
            let du = 1.0 / ((1.0 - s) * (1.0 - s));
            let val = g(u) * du;
            if val.is_finite() {
                acc += val / n as f64;
            }
        }
        self.w23 + acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig2_partition() {
        let m = ModelSpec::fig2();
        let p = build_partition(&m, (0.0, 0.0), 1.0).unwrap();
        let eq = equilibria(&m, 0.0);
        assert!((p.w23 - (eq[1] + 1.0)).abs() < 1e-12);
        assert_eq!(p.w23, p.v34);
        assert!(p.w_star < m.min_f());
        assert!(p.w23 > m.f(m.v_r) + m.i);
        assert!(p.w_reach >= p.w23 && p.w_reach.is_finite());
    }

    #[test]
    fn margins_agree_on_reset_line() {
        let m = ModelSpec::fig2();
        let p1 = build_partition(&m, (0.0, 0.0), 1.0).unwrap();
        let p2 = build_partition(&m, (0.0, 0.0), 2.0).unwrap();
        for k in 0..200 {
            let w = p1.w_star + 0.25 * k as f64;
            let s = State::new(m.v_r, w);
            for p in [&p1, &p2] {
                let r = p.classify(&m, s, m.i);
                assert!(matches!(r, RegionId::P2 | RegionId::P3), "{w} {r:?}");
            }
        }
    }

    #[test]
    fn shared_w_star_over_range() {
        let m = ModelSpec::fig2();
        let p = build_partition(&m, (0.0, 0.5), 1.0).unwrap();
        let q = build_partition(&m, (0.0, 0.0), 1.0).unwrap();
        assert_eq!(p.w_star, q.w_star);
    }

    #[test]
    fn rejects_bad_margin() {
        let m = ModelSpec::fig2();
        assert_eq!(build_partition(&m, (0.0, 0.0), 0.0), Err(Error::InvalidMargin(0.0)));
    }

    #[test]
    fn boundary_conventions() {
        let m = ModelSpec::fig2();
        let p = build_partition(&m, (0.0, 0.0), 1.0).unwrap();
        // w = w23 left of v34 belongs to P3
        assert_eq!(p.classify(&m, State::new(0.0, p.w23), 0.0), RegionId::P3);
        // v = v34 below w = v belongs to P4
        assert_eq!(p.classify(&m, State::new(p.v34, 0.0), 0.0), RegionId::P4);
        // the right v-nullcline branch above w23 belongs to P1
        let v = nullclines(&m, p.w23 + 3.0, 0.0).unwrap().v_plus.unwrap();
        assert_eq!(p.classify(&m, State::new(v, m.f(v)), 0.0), RegionId::P1);
        assert_eq!(p.classify(&m, State::new(0.0, -100.0), 0.0), RegionId::BelowSeparatrix);
    }
}
