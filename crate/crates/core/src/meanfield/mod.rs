//! The nonlinear layer: the delayed McKean-Vlasov equation simulated block
//! by block, and the stationary current `kappa* = J / E_{mu_kappa*}(T1)`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::Control;
use crate::current::{Kappa, KappaPath};
use crate::dynamics::{build_partition, Partition};
use crate::error::{Error, Result};
use crate::hazard::{Advance, TimeChangeSampler};
use crate::model::{ModelSpec, State};
use crate::pdmp::InitialLaw;
use crate::rng::{tag, Stream};
use crate::stationary::{build_kernel, choose_w_max, expected_jump_time, invariant_density, WGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MkvConfig {
    /// Number of copies `M`.
    pub copies: usize,
    pub horizon: f64,
    pub seed: u64,
    /// Grid points per delay block.
    pub nodes_per_block: usize,
}

impl Default for MkvConfig {
    fn default() -> Self {
        Self { copies: 10_000, horizon: 10.0, seed: 0, nodes_per_block: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldPath {
    pub times: Vec<f64>,
    pub kappa: Vec<f64>,
    /// Monte Carlo standard error of each `kappa` value.
    pub stderr: Vec<f64>,
    pub copies: usize,
    /// Nodes whose standard error exceeds 5% of the value.
    pub insufficient_copies: usize,
}

impl MeanFieldPath {
    /// CSV `t,kappa,stderr`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "kappa", "stderr"])?;
        for k in 0..self.times.len() {
            wtr.serialize((self.times[k], self.kappa[k], self.stderr[k]))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Mean of `kappa` over `[t0, horizon]`.
    pub fn average_after(&self, t0: f64) -> f64 {
        let v: Vec<f64> = self.times.iter().zip(&self.kappa).filter(|(t, _)| **t >= t0).map(|x| *x.1).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Copies of the linear process at the start of a block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockState {
    pub block: usize,
    pub states: Vec<State>,
    /// `J E lambda(V_t)` at the block's nodes and its standard error.
    pub kappa_next: Vec<f64>,
    pub stderr_next: Vec<f64>,
}

/// Simulate the delayed McKean-Vlasov equation: on each block `[kD, (k+1)D]`
/// the current is `J` times the copy average of `lambda` one delay earlier.
pub fn simulate_mkv(model: &ModelSpec, part: &Partition, cfg: &MkvConfig, mu0: &InitialLaw, ctrl: &Control) -> Result<MeanFieldPath> {
    simulate_mkv_blocks(model, part, cfg, mu0, ctrl, |_| {})
}

/// As [`simulate_mkv`], handing every block's starting data to `on_block`.
pub fn simulate_mkv_blocks(
    model: &ModelSpec,
    part: &Partition,
    cfg: &MkvConfig,
    mu0: &InitialLaw,
    ctrl: &Control,
    mut on_block: impl FnMut(&BlockState),
) -> Result<MeanFieldPath> {
    let d = model.d;
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("mean-field simulation needs D > 0, got {d}")));
    }
    if cfg.copies < 2 || cfg.nodes_per_block == 0 || !(cfg.horizon > 0.0) {
        return Err(Error::InvalidArgument("need at least two copies, one node per block and a positive horizon".into()));
    }
    mu0.validate(part)?;
    let states: Vec<State> =
        (0..cfg.copies).map(|i| mu0.draw(&mut Stream::new(cfg.seed, tag::INIT, i as u64))).collect();
    let (k0, s0) = lambda_average(model, &states);
    if !k0.is_finite() {
        return Err(Error::InvalidArgument("initial law has infinite mean rate".into()));
    }
    let n = cfg.nodes_per_block;
    let blocks = (cfg.horizon / d).ceil() as usize;
    let mut block = BlockState {
        block: 0,
        states,
        kappa_next: vec![model.j * k0; n + 1],
        stderr_next: vec![model.j.abs() * s0; n + 1],
    };
    let mut path = MeanFieldPath { times: Vec::new(), kappa: Vec::new(), stderr: Vec::new(), copies: cfg.copies, insufficient_copies: 0 };
    for b in 0..blocks {
        on_block(&block);
        let t0 = b as f64 * d;
        let times: Vec<f64> = (0..=n).map(|k| t0 + d * k as f64 / n as f64).collect();
        let last = if b + 1 == blocks { n + 1 } else { n };
        for k in 0..last {
            if times[k] > cfg.horizon + 1e-12 * d {
                break;
            }
            path.times.push(times[k]);
            path.kappa.push(block.kappa_next[k]);
            path.stderr.push(block.stderr_next[k]);
        }
        block = run_block(model, cfg, &block, &times, ctrl)?;
    }
    path.insufficient_copies =
        path.kappa.iter().zip(&path.stderr).filter(|(k, s)| **s > 0.05 * k.abs() && **s > 0.0).count();
    Ok(path)
}

/// One delay block: evolve every copy under the block's current and
/// return the next block's current from `lambda` at the nodes.
pub fn run_block(model: &ModelSpec, cfg: &MkvConfig, block: &BlockState, times: &[f64], ctrl: &Control) -> Result<BlockState> {
    let kappa = if block.kappa_next.iter().all(|k| *k == block.kappa_next[0]) {
        Kappa::Constant(block.kappa_next[0])
    } else {
        Kappa::PiecewiseLinear(Arc::new(KappaPath::new(times.to_vec(), block.kappa_next.clone())))
    };
    let sampler = TimeChangeSampler::new(model, &kappa, ctrl);
    let t_end = *times.last().unwrap();
    let obs = &times[..];
    let out: Vec<(State, Vec<f64>)> = block
        .states
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            // fresh exponential clock per block: memorylessness makes this
            // equal in law to carrying the unused budget over
            let mut rng = Stream::new(cfg.seed, tag::MKV, ((block.block as u64) << 32) | i as u64);
            let mut rates = vec![0.0; obs.len()];
            let (mut x, mut t, mut h) = (*x0, times[0], 0.0);
            loop {
                let e = rng.exp1();
                let adv = sampler.advance(x, t, e, t_end, &mut h, obs, |k, s| rates[k] = model.rate(s.v))?;
                match adv {
                    Advance::Jump(j) => {
                        x = j.post_state;
                        t = j.t1;
                    }
                    Advance::Survived { state, .. } => {
                        rates[obs.len() - 1] = model.rate(state.v);
                        return Ok((state, rates));
                    }
                }
            }
        })
        .collect::<Result<_>>()?;
    let m = out.len() as f64;
    let mut kappa_next = Vec::with_capacity(obs.len());
    let mut stderr_next = Vec::with_capacity(obs.len());
    for k in 0..obs.len() {
        let mean = out.iter().map(|o| o.1[k]).sum::<f64>() / m;
        let var = out.iter().map(|o| (o.1[k] - mean).powi(2)).sum::<f64>() / (m - 1.0);
        kappa_next.push(model.j * mean);
        stderr_next.push(model.j.abs() * (var / m).sqrt());
    }
    Ok(BlockState { block: block.block + 1, states: out.into_iter().map(|o| o.0).collect(), kappa_next, stderr_next })
}

fn lambda_average(model: &ModelSpec, states: &[State]) -> (f64, f64) {
    let m = states.len() as f64;
    let mean = states.iter().map(|s| model.rate(s.v)).sum::<f64>() / m;
    let var = states.iter().map(|s| (model.rate(s.v) - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Discretization of the stationary residual, shared by every `kappa` of a
/// solve so that finite differences see one smooth function.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSetup {
    pub part: Partition,
    pub grid: WGrid,
    pub kappa_max: f64,
}

impl ResidualSetup {
    /// Partition over currents `[I, I + kappa_max]` and a grid of `n_w` cells
    /// wide enough for the stationary law at both ends of the range.
    pub fn new(model: &ModelSpec, kappa_max: f64, n_w: usize, ctrl: &Control) -> Result<Self> {
        if !(kappa_max >= 0.0) {
            return Err(Error::InvalidArgument(format!("kappa_max = {kappa_max} must be nonnegative")));
        }
        let part = build_partition(model, (model.i, model.i + kappa_max), 1.0)?;
        let mut w_max: f64 = 0.0;
        for k in [0.0, kappa_max] {
            let m = shifted(model, k);
            w_max = w_max.max(choose_w_max(&m, &part, ctrl, 1e-8)?);
        }
        let grid = WGrid::aligned(part.w_star, w_max, n_w, model.w_b);
        Ok(Self { part, grid, kappa_max })
    }
}

/// The model at effective current `I + kappa`, stepped off the isolated
/// currents where the reset point is an equilibrium.
fn shifted(model: &ModelSpec, kappa: f64) -> ModelSpec {
    let m = model.with_current(model.i + kappa);
    if crate::dynamics::classify_current_regime(&m).reset_is_equilibrium {
        model.with_current(model.i + kappa + 1e-6)
    } else {
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub kappa: f64,
    /// `kappa E T1 - J`.
    pub g: f64,
    pub e_t1: f64,
}

/// `g(kappa) = kappa E_{mu_kappa}(T1) - J` from the deterministic kernel
/// pipeline at current `I + kappa`.
pub fn stationary_residual(model: &ModelSpec, setup: &ResidualSetup, kappa: f64, j: f64, ctrl: &Control) -> Result<Residual> {
    if !(kappa >= 0.0) {
        return Err(Error::InvalidArgument(format!("kappa = {kappa} must be nonnegative")));
    }
    let e_t1 = mean_time_at(model, setup, kappa, ctrl)?;
    Ok(Residual { kappa, g: kappa * e_t1 - j, e_t1 })
}

/// `E_{mu_kappa}(T1)`.
pub fn mean_time_at(model: &ModelSpec, setup: &ResidualSetup, kappa: f64, ctrl: &Control) -> Result<f64> {
    let m = shifted(model, kappa);
    let k = build_kernel(&m, &setup.part, &setup.grid, ctrl)?;
    let mu = invariant_density(&k, ctrl)?;
    Ok(expected_jump_time(&k, &mu))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub j: f64,
    pub kappa: f64,
    pub e_t1: f64,
    pub residual: f64,
    pub converged: bool,
    /// `(kappa, g)` at every iterate.
    pub trace: Vec<(f64, f64)>,
    /// Corrector failed while the slope estimate was not positive.
    pub fold: bool,
}

const FD_STEP: f64 = 1e-5;

/// Newton on `g(kappa) = 0` from `kappa0`, with a finite-difference slope
/// and bisection once a sign change is bracketed.
pub fn solve_fixed_point(model: &ModelSpec, setup: &ResidualSetup, j: f64, kappa0: f64, ctrl: &Control) -> Result<FixedPointResult> {
    let r = newton(model, setup, j, kappa0, ctrl)?;
    if r.converged {
        Ok(r)
    } else {
        Err(Error::NoRoot { j })
    }
}

fn newton(model: &ModelSpec, setup: &ResidualSetup, j: f64, kappa0: f64, ctrl: &Control) -> Result<FixedPointResult> {
    if !(j >= 0.0) {
        return Err(Error::InvalidArgument(format!("J = {j} must be nonnegative")));
    }
    if j == 0.0 {
        let r = stationary_residual(model, setup, 0.0, 0.0, ctrl)?;
        return Ok(FixedPointResult { j, kappa: 0.0, e_t1: r.e_t1, residual: 0.0, converged: true, trace: vec![(0.0, 0.0)], fold: false });
    }
    let tol = ctrl.root_tol * (1.0 + j);
    let mut lo: Option<f64> = None; // g < 0
    let mut hi: Option<f64> = None; // g > 0
    let mut kappa = kappa0.max(0.0);
    let mut trace = Vec::new();
    let mut slope = f64::NAN;
    for _ in 0..50 {
        let r = stationary_residual(model, setup, kappa, j, ctrl)?;
        trace.push((kappa, r.g));
        if r.g.abs() < tol {
            return Ok(FixedPointResult { j, kappa, e_t1: r.e_t1, residual: r.g, converged: true, trace, fold: false });
        }
        if r.g < 0.0 {
            lo = Some(lo.map_or(kappa, |l: f64| l.max(kappa)));
        } else {
            hi = Some(hi.map_or(kappa, |h: f64| h.min(kappa)));
        }
        let up = stationary_residual(model, setup, kappa + FD_STEP, j, ctrl)?;
        slope = (up.g - r.g) / FD_STEP;
        let mut next = kappa - r.g / slope;
        let inside = |x: f64| lo.is_none_or(|l| x > l) && hi.is_none_or(|h| x < h);
        if !(slope > 0.0) || !next.is_finite() || !inside(next) || next < 0.0 {
            next = match (lo, hi) {
                (Some(l), Some(h)) => 0.5 * (l + h),
                (Some(l), None) => 2.0 * l.max(FD_STEP) + 1.0,
                (None, Some(h)) => 0.5 * h,
                (None, None) => unreachable!(),
            };
        }
        if next > setup.kappa_max * (1.0 + 1e-9) {
            break;
        }
        kappa = next;
    }
    let last = *trace.last().unwrap();
    Ok(FixedPointResult { j, kappa: last.0, e_t1: f64::NAN, residual: last.1, converged: false, trace, fold: !(slope > 0.0) })
}

/// Natural-parameter continuation of `kappa*(J)` with a secant predictor.
pub fn continuation_in_j(model: &ModelSpec, setup: &ResidualSetup, j_grid: &[f64], ctrl: &Control) -> Result<Vec<FixedPointResult>> {
    if j_grid.windows(2).any(|p| p[1] <= p[0]) || j_grid.first().is_some_and(|j| *j < 0.0) {
        return Err(Error::InvalidArgument("J grid must increase from a nonnegative value".into()));
    }
    let mut out: Vec<FixedPointResult> = Vec::new();
    for &j in j_grid {
        let ok: Vec<&FixedPointResult> = out.iter().filter(|r| r.converged).collect();
        let guess = match ok.as_slice() {
            [] => j / mean_time_at(model, setup, 0.0, ctrl)?,
            [a] => a.kappa + (j - a.j) / a.e_t1.max(1e-12),
            [.., a, b] => b.kappa + (b.kappa - a.kappa) / (b.j - a.j) * (j - b.j),
        };
        let r = newton(model, setup, j, guess, ctrl)?;
        let stop = r.fold;
        out.push(r);
        if stop {
            break;
        }
    }
    Ok(out)
}

/// CSV `J,kappa,E_T1,residual,converged`.
pub fn write_curve_csv<W: std::io::Write>(curve: &[FixedPointResult], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["J", "kappa", "E_T1", "residual", "converged"])?;
    for r in curve {
        wtr.serialize((r.j, r.kappa, r.e_t1, r.residual, r.converged))?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
