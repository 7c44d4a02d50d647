//! The linear process driven by a given current `kappa(t)`, its embedded
//! chain of post-jump adaptation values, and the jump-rate integral equation.

mod volterra;

pub use volterra::{solve_rate_volterra, RateGridSolution, VolterraGrid};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::Control;
use crate::current::Kappa;
use crate::dynamics::Partition;
use crate::error::{Error, Result};
use crate::hazard::{Advance, HazardFlow, TimeChangeSampler};
use crate::model::{ModelSpec, State};
use crate::rng::Stream;

/// Most jumps a single path may make before it is declared irregular.
pub const JUMP_CAP: usize = 1_000_000;

/// Initial law of a neuron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    Point { v: f64, w: f64 },
    /// Uniform on `[v0, v1] x [w0, w1]`.
    Uniform { v: (f64, f64), w: (f64, f64) },
    /// Uniform choice among given states.
    Samples { states: Arc<Vec<State>> },
}

impl InitialLaw {
    pub fn point(s: State) -> Self {
        InitialLaw::Point { v: s.v, w: s.w }
    }

    pub fn draw(&self, rng: &mut Stream) -> State {
        match self {
            InitialLaw::Point { v, w } => State::new(*v, *w),
            InitialLaw::Uniform { v, w } => {
                State::new(v.0 + (v.1 - v.0) * rng.uniform(), w.0 + (w.1 - w.0) * rng.uniform())
            }
            InitialLaw::Samples { states } => {
                let k = ((rng.uniform() * states.len() as f64) as usize).min(states.len() - 1);
                states[k]
            }
        }
    }

    /// Check that the support lies on or above the separatrix.
    pub fn validate(&self, part: &Partition) -> Result<()> {
        let corners: Vec<State> = match self {
            InitialLaw::Point { v, w } => vec![State::new(*v, *w)],
            InitialLaw::Uniform { v, w } => {
                if !(v.0 <= v.1 && w.0 <= w.1) {
                    return Err(Error::InvalidArgument("empty initial rectangle".into()));
                }
                // the separatrix is monotone, so the lowest corners decide
                let n = 64;
                (0..=n).map(|k| State::new(v.0 + (v.1 - v.0) * k as f64 / n as f64, w.0)).collect()
            }
            InitialLaw::Samples { states } => {
                if states.is_empty() {
                    return Err(Error::InvalidArgument("empty initial sample".into()));
                }
                states.to_vec()
            }
        };
        match corners.iter().find(|s| !part.contains(**s) || !s.v.is_finite() || !s.w.is_finite()) {
            Some(s) => Err(Error::LeftDomain { v: s.v, w: s.w }),
            None => Ok(()),
        }
    }
}

/// Jump times `T_n`, durations `S_n` and post-jump adaptation `w_n`.
///
/// Index 0 holds the start: `T_0 = s`, `w_0` the initial `w`, and `S_0 = 0`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub start: State,
    pub times: Vec<f64>,
    pub durations: Vec<f64>,
    pub w: Vec<f64>,
}

impl JumpRecord {
    pub fn new(start: State, t0: f64) -> Self {
        Self { start, times: vec![t0], durations: vec![0.0], w: vec![start.w] }
    }

    fn push(&mut self, t: f64, w: f64) {
        let last = *self.times.last().unwrap();
        self.durations.push(t - last);
        self.times.push(t);
        self.w.push(w);
    }

    /// Number of jumps.
    pub fn jumps(&self) -> usize {
        self.times.len() - 1
    }

    /// CSV `n,T_n,S_n,w_n`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["n", "T_n", "S_n", "w_n"])?;
        for n in 0..self.times.len() {
            wtr.serialize((n, self.times[n], self.durations[n], self.w[n]))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// State of the path at time `t`, by re-running the flow from the last
    /// jump before `t`.
    pub fn state_at(&self, model: &ModelSpec, part: &Partition, kappa: &Kappa, t: f64, ctrl: &Control) -> Result<State> {
        let k = self.times.partition_point(|x| *x <= t).saturating_sub(1);
        let (t0, s0) = if k == 0 { (self.times[0], self.start) } else { (self.times[k], State::new(model.v_r, self.w[k])) };
        let mut flow = HazardFlow::new(model, part, s0, t0, kappa, ctrl);
        Ok(flow.advance_to(t)?.state)
    }
}

/// A run of the linear process.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRun {
    pub record: JumpRecord,
    /// State at each requested observation time.
    pub observed: Vec<State>,
    /// State at the horizon.
    pub end: State,
}

/// Simulate the process with current `kappa` from time `t0` to `horizon`,
/// recording the state at the sorted times `obs`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_linear(
    model: &ModelSpec,
    init: &InitialLaw,
    kappa: &Kappa,
    t0: f64,
    horizon: f64,
    obs: &[f64],
    rng: &mut Stream,
    ctrl: &Control,
) -> Result<LinearRun> {
    let sampler = TimeChangeSampler::new(model, kappa, ctrl);
    let x0 = init.draw(rng);
    let mut record = JumpRecord::new(x0, t0);
    let mut observed = vec![State::new(f64::NAN, f64::NAN); obs.len()];
    let mut x = x0;
    let mut t = t0;
    let mut h = 0.0;
    loop {
        let e = rng.exp1();
        match sampler.advance(x, t, e, horizon, &mut h, obs, |k, s| observed[k] = s)? {
            Advance::Jump(j) => {
                record.push(j.t1, j.post_state.w);
                if record.jumps() >= JUMP_CAP {
                    return Err(Error::JumpCap(JUMP_CAP));
                }
                x = j.post_state;
                t = j.t1;
            }
            Advance::Survived { state, .. } => {
                return Ok(LinearRun { record, observed, end: state });
            }
        }
    }
}

/// Post-jump chain `w_n` from `(v_r, w0)` under the constant current folded
/// into `model.i`.
pub fn simulate_embedded_chain(model: &ModelSpec, part: &Partition, w0: f64, n_steps: usize, rng: &mut Stream, ctrl: &Control) -> Result<JumpRecord> {
    if w0 < part.w_star {
        return Err(Error::InvalidArgument(format!("w0 = {w0} below w* = {}", part.w_star)));
    }
    let kappa = Kappa::zero();
    let sampler = TimeChangeSampler::new(model, &kappa, ctrl);
    let start = State::new(model.v_r, w0);
    let mut record = JumpRecord::new(start, 0.0);
    record.times.reserve(n_steps);
    record.durations.reserve(n_steps);
    record.w.reserve(n_steps);
    let mut x = start;
    for _ in 0..n_steps {
        let j = sampler.sample(x, 0.0, rng)?;
        let t = record.times.last().unwrap() + j.t1;
        record.push(t, j.post_state.w);
        x = j.post_state;
    }
    Ok(record)
}

/// Iterate the chain without storing it, calling `visit(n, w_n, S_n)` at every step.
pub fn run_embedded_chain(
    model: &ModelSpec,
    w0: f64,
    n_steps: usize,
    rng: &mut Stream,
    ctrl: &Control,
    mut visit: impl FnMut(usize, f64, f64),
) -> Result<f64> {
    let kappa = Kappa::zero();
    let sampler = TimeChangeSampler::new(model, &kappa, ctrl);
    let mut x = State::new(model.v_r, w0);
    for n in 1..=n_steps {
        let j = sampler.sample(x, 0.0, rng)?;
        x = j.post_state;
        visit(n, x.w, j.t1);
    }
    Ok(x.w)
}
