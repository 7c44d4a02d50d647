use serde::{Deserialize, Serialize};

use crate::ode::Tolerance;

/// Numerical knobs shared by all modules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Control {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Explosion threshold on `v`; capped by where the field overflows.
    pub v_explode: f64,
    /// Above this `v` (in P4) the flow is reparametrized by `v`.
    pub v_switch: f64,
    pub sep_tol: f64,
    pub graze_tol: f64,
    pub fp_tol: f64,
    pub max_iters: usize,
    pub root_tol: f64,
    /// Horizon for flows that never explode (hitting times, trapped orbits).
    pub t_horizon: f64,
    pub thinning_horizon: f64,
    pub max_steps: usize,
}

impl Default for Control {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            v_explode: 1e6,
            v_switch: 1e3,
            sep_tol: 1e-6,
            graze_tol: 1e-8,
            fp_tol: 1e-8,
            max_iters: 10_000,
            root_tol: 1e-9,
            t_horizon: 1e3,
            thinning_horizon: 1e3,
            max_steps: 2_000_000,
        }
    }
}

impl Control {
    pub fn tolerance(&self) -> Tolerance {
        Tolerance::new(self.abs_tol, self.rel_tol)
    }
}
