//! Deterministic layer: field, reset, nullclines, separatrix, partition and flow.

mod assumptions;
mod flow;
mod partition;
mod separatrix;

pub use assumptions::{check_assumptions, AssumptionReport, Check, Verdict};
pub use flow::{hitting_times, integrate, tail_time, HittingTimes, Trajectory};
pub(crate) use flow::thresholds as flow_thresholds;
pub use partition::{build_partition, Partition, RegionId};
pub use separatrix::{build_separatrix, Separatrix};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, State};

/// `(dv/dt, dw/dt)` at `s` with extra current `kappa`.
pub fn eval_field(model: &ModelSpec, s: State, kappa: f64) -> (f64, f64) {
    (model.f(s.v) - s.w + model.i + kappa, s.v - s.w)
}

/// The jump map `(v, w) -> (v_r, w + w_b)`.
pub fn reset(model: &ModelSpec, s: State) -> State {
    State::new(model.v_r, s.w + model.w_b)
}

/// Left and right roots of `F(v) - w + I + kappa = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nullcline {
    pub v_minus: Option<f64>,
    pub v_plus: Option<f64>,
}

/// Abscissae of the v-nullcline at ordinate `w`.
pub fn nullclines(model: &ModelSpec, w: f64, kappa: f64) -> Result<Nullcline> {
    let target = w - model.i - kappa;
    let m = model.argmin_f();
    let fmin = model.f(m);
    if target < fmin {
        return Ok(Nullcline { v_minus: None, v_plus: None });
    }
    if target == fmin {
        return Ok(Nullcline { v_minus: Some(m), v_plus: Some(m) });
    }
    let g = |v: f64| model.f(v) - target;
    let v_minus = bracket_root(&g, m, -1.0)?;
    let v_plus = bracket_root(&g, m, 1.0)?;
    Ok(Nullcline { v_minus: Some(v_minus), v_plus: Some(v_plus) })
}

/// Root of a convex `g` with `g(m) < 0`, searched in direction `dir` from `m`.
fn bracket_root(g: &impl Fn(f64) -> f64, m: f64, dir: f64) -> Result<f64> {
    let window = 1e9;
    let mut step = 1.0;
    let mut far = m + dir * step;
    while g(far) < 0.0 || g(far).is_nan() {
        step *= 2.0;
        far = m + dir * step;
        if step > window {
            return Err(Error::RootBracketFailure { lo: m.min(far), hi: m.max(far) });
        }
    }
    let (mut inside, mut outside) = (m, far);
    if g(outside) == 0.0 {
        return Ok(outside);
    }
    for _ in 0..300 {
        let mid = 0.5 * (inside + outside);
        if mid == inside || mid == outside {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm < 0.0 {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Ok(if g(inside).abs() < g(outside).abs() { inside } else { outside })
}

/// Equilibrium count and reset-point degeneracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentRegime {
    pub n_equilibria: usize,
    pub reset_is_equilibrium: bool,
}

/// Equilibria `(v, v)` with `F(v) + current = v`, in increasing order.
pub fn equilibria(model: &ModelSpec, current: f64) -> Vec<f64> {
    // G(v) = F(v) + current - v is strictly convex with minimum where F' = 1
    let mut lo = model.argmin_f();
    let mut hi = lo;
    let mut step = 1.0;
    while model.df(hi) < 1.0 {
        hi = lo + step;
        step *= 2.0;
        if step > 1e9 {
            return vec![];
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if model.df(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let vm = 0.5 * (lo + hi);
    let g = |v: f64| model.f(v) + current - v;
    let gm = g(vm);
    if gm > 0.0 {
        return vec![];
    }
    if gm == 0.0 {
        return vec![vm];
    }
    let left = bracket_root(&g, vm, -1.0);
    let right = bracket_root(&g, vm, 1.0);
    [left, right].into_iter().filter_map(|r| r.ok()).collect()
}

pub fn classify_current_regime(model: &ModelSpec) -> CurrentRegime {
    let eq = equilibria(model, model.i);
    let g = model.f(model.v_r) + model.i - model.v_r;
    let scale = 1.0 + model.v_r.abs();
    CurrentRegime { n_equilibria: eq.len(), reset_is_equilibrium: g.abs() <= 1e-12 * scale }
}
