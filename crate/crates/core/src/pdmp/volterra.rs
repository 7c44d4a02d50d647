//! Jump rate `r(s, x, t)` from its renewal-type integral equation
//!
//! `r(s,x,t) = p(s,x,t) + int_s^t p(s,x,u) r(u, reset(Phi_s^u x), t) du`.
//!
//! Every reset lands on the line `v = v_r`, so the equation closes on a
//! lattice of that line. The product rule uses the exact survival mass
//! `S(u_j) - S(u_{j+1})` of each time cell and the trapezoid for `r`, which
//! stays accurate when `p` is a narrow pulse near a blow-up.
//!
//! The solution is marched in time. At a fixed `t` the only unknowns on the
//! right are at the same `s` through the cell starting at `u = s`; that
//! coupling goes upward in `w` (by `w_b`) and is resolved by sweeping the
//! lattice from the top, iterated until the change is below `fp_tol`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::Control;
use crate::current::Kappa;
use crate::dynamics::Partition;
use crate::error::{Error, Result};
use crate::hazard::HazardFlow;
use crate::model::{ModelSpec, State};

/// Discretization of the `(s, t)` simplex and of the reset line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolterraGrid {
    pub horizon: f64,
    /// Output nodes `t_k = k horizon / n_out`, `k = 0..=n_out`.
    pub n_out: usize,
    /// Internal cells per output interval.
    pub substeps: usize,
    /// Lattice nodes on `[w*, w* + w_span]` of the reset line.
    pub n_w: usize,
    pub w_span: f64,
}

impl Default for VolterraGrid {
    fn default() -> Self {
        Self { horizon: 2.0, n_out: 100, substeps: 10, n_w: 401, w_span: 100.0 }
    }
}

impl VolterraGrid {
    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || self.n_out == 0 || self.substeps == 0 || self.n_w < 2 || !(self.w_span > 0.0) {
            return Err(Error::InvalidArgument(format!("bad Volterra grid {self:?}")));
        }
        Ok(())
    }

    fn n_cells(&self) -> usize {
        self.n_out * self.substeps
    }

    fn dt(&self) -> f64 {
        self.horizon / self.n_cells() as f64
    }
}

/// `r` and `p` for one designated start `x` on the output nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateGridSolution {
    pub x: State,
    pub times: Vec<f64>,
    /// `p[k][n - k]` and `r[k][n - k]` are the values at `(s_k, t_n)`.
    pub p: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    /// Largest number of sweeps any time level needed.
    pub sweeps: usize,
}

impl RateGridSolution {
    /// `r(0, x, t_n)` for every output node.
    pub fn r0(&self) -> &[f64] {
        &self.r[0]
    }

    pub fn p0(&self) -> &[f64] {
        &self.p[0]
    }

    /// CSV `s,t,p,r` over the simplex `s <= t`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["s", "t", "p", "r"])?;
        for k in 0..self.times.len() {
            for (d, (p, r)) in self.p[k].iter().zip(&self.r[k]).enumerate() {
                wtr.serialize((self.times[k], self.times[k + d], p, r))?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Flow of one start sampled on the internal nodes `t_j`, `j >= j0`.
struct Table {
    /// Survival at the nodes.
    surv: Vec<f64>,
    /// Density at the nodes.
    p: Vec<f64>,
    /// Lattice position of the post-jump `w` at the nodes.
    post: Vec<(usize, f64)>,
}

struct Lattice {
    w0: f64,
    dw: f64,
    n: usize,
}

impl Lattice {
    fn locate(&self, w: f64) -> (usize, f64) {
        let pos = ((w - self.w0) / self.dw).max(0.0);
        if pos >= (self.n - 1) as f64 {
            return (self.n - 2, 1.0);
        }
        let lo = pos as usize;
        (lo, pos - lo as f64)
    }
}

#[allow(clippy::too_many_arguments)]
fn table(
    model: &ModelSpec,
    part: &Partition,
    x: State,
    kappa: &Kappa,
    times: &[f64],
    j0: usize,
    lat: &Lattice,
    ctrl: &Control,
) -> Result<Table> {
    let n = times.len() - j0;
    let mut surv = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    let mut post = Vec::with_capacity(n);
    let mut flow = HazardFlow::new(model, part, x, times[j0], kappa, ctrl);
    let horizon = *times.last().unwrap();
    let mut push = |s: f64, v: f64, w: f64| {
        surv.push(s);
        p.push(if s > 0.0 { model.rate(v) * s } else { 0.0 });
        post.push(lat.locate(w + model.w_b));
    };
    push(1.0, x.v, x.w);
    let mut j = j0 + 1;
    while j < times.len() {
        if !flow.step(horizon)? {
            break;
        }
        let Some(seg) = flow.last_segment() else { continue };
        let end = seg.end().t;
        while j < times.len() && times[j] <= end {
            let q = seg.at_time(times[j]);
            push((-q.hazard).exp(), q.state.v, q.state.w);
            j += 1;
        }
    }
    let last = flow.point();
    while j < times.len() {
        push(0.0, last.state.v, last.state.w);
        j += 1;
    }
    Ok(Table { surv, p, post })
}

#[inline]
fn interp(r: &[f64], at: (usize, f64)) -> f64 {
    r[at.0] + at.1 * (r[at.0 + 1] - r[at.0])
}

/// Solve for `r(s, x, t)` on `grid`.
pub fn solve_rate_volterra(
    model: &ModelSpec,
    part: &Partition,
    x: State,
    kappa: &Kappa,
    grid: &VolterraGrid,
    ctrl: &Control,
) -> Result<RateGridSolution> {
    grid.validate()?;
    if !part.contains(x) {
        return Err(Error::LeftDomain { v: x.v, w: x.w });
    }
    let lat = Lattice { w0: part.w_star, dw: grid.w_span / (grid.n_w - 1) as f64, n: grid.n_w };
    let ws: Vec<f64> = (0..grid.n_w).map(|i| lat.w0 + lat.dw * i as f64).collect();
    if kappa.constant().is_some() {
        autonomous(model, part, x, kappa, grid, &lat, &ws, ctrl)
    } else {
        general(model, part, x, kappa, grid, &lat, &ws, ctrl)
    }
}

/// One time level of the lattice equation: `level[i] = explicit[i] + half_m0[i] * r(w_i + w_b)`.
fn sweep_level(explicit: &[f64], half_m0: &[f64], post0: &[(usize, f64)], ctrl: &Control) -> Result<(Vec<f64>, usize)> {
    let n = explicit.len();
    let mut level = explicit.to_vec();
    for it in 1..=ctrl.max_iters {
        let mut change: f64 = 0.0;
        for i in (0..n).rev() {
            let new = explicit[i] + half_m0[i] * interp(&level, post0[i]);
            change = change.max((new - level[i]).abs() / (1.0 + new.abs()));
            level[i] = new;
        }
        if change < ctrl.fp_tol {
            return Ok((level, it));
        }
    }
    Err(Error::NonConvergence { iters: ctrl.max_iters, residual: f64::NAN })
}

#[allow(clippy::too_many_arguments)]
fn autonomous(
    model: &ModelSpec,
    part: &Partition,
    x: State,
    kappa: &Kappa,
    grid: &VolterraGrid,
    lat: &Lattice,
    ws: &[f64],
    ctrl: &Control,
) -> Result<RateGridSolution> {
    let nc = grid.n_cells();
    let dt = grid.dt();
    let times: Vec<f64> = (0..=nc).map(|j| dt * j as f64).collect();
    let tables: Vec<Table> = ws
        .par_iter()
        .map(|w| table(model, part, State::new(model.v_r, *w), kappa, &times, 0, lat, ctrl))
        .collect::<Result<_>>()?;
    let mass: Vec<Vec<f64>> = tables.iter().map(|t| t.surv.windows(2).map(|s| s[0] - s[1]).collect()).collect();
    // r[n][i]: rate at elapsed time t_n after a start at (v_r, w_i)
    let mut r: Vec<Vec<f64>> = vec![vec![model.rate(model.v_r); grid.n_w]];
    let half_m0: Vec<f64> = mass.iter().map(|m| 0.5 * m[0]).collect();
    let post0: Vec<(usize, f64)> = tables.iter().map(|t| t.post[0]).collect();
    let mut sweeps = 0;
    for n in 1..=nc {
        let explicit: Vec<f64> = (0..grid.n_w)
            .into_par_iter()
            .map(|i| {
                let tb = &tables[i];
                let m = &mass[i];
                let mut acc = tb.p[n] + 0.5 * m[0] * interp(&r[n - 1], tb.post[1]);
                for j in 1..n {
                    acc += 0.5 * m[j] * (interp(&r[n - j], tb.post[j]) + interp(&r[n - j - 1], tb.post[j + 1]));
                }
                acc
            })
            .collect();
        let (level, it) = sweep_level(&explicit, &half_m0, &post0, ctrl)?;
        sweeps = sweeps.max(it);
        r.push(level);
    }
    // one application of the equation at x itself
    let tx = table(model, part, x, kappa, &times, 0, lat, ctrl)?;
    let mx: Vec<f64> = tx.surv.windows(2).map(|s| s[0] - s[1]).collect();
    let mut rx = vec![model.rate(x.v)];
    for n in 1..=nc {
        let mut acc = tx.p[n];
        for j in 0..n {
            acc += 0.5 * mx[j] * (interp(&r[n - j], tx.post[j]) + interp(&r[n - j - 1], tx.post[j + 1]));
        }
        rx.push(acc);
    }
    let out: Vec<usize> = (0..=grid.n_out).map(|k| k * grid.substeps).collect();
    let times_out: Vec<f64> = out.iter().map(|j| times[*j]).collect();
    let mut p_rows = Vec::new();
    let mut r_rows = Vec::new();
    for k in 0..out.len() {
        p_rows.push(out[..out.len() - k].iter().map(|j| tx.p[*j]).collect());
        r_rows.push(out[..out.len() - k].iter().map(|j| rx[*j]).collect());
    }
    Ok(RateGridSolution { x, times: times_out, p: p_rows, r: r_rows, sweeps })
}

/// Time-dependent current: one table per start node and lattice point, no
/// internal substeps beyond those of the grid.
#[allow(clippy::too_many_arguments)]
fn general(
    model: &ModelSpec,
    part: &Partition,
    x: State,
    kappa: &Kappa,
    grid: &VolterraGrid,
    lat: &Lattice,
    ws: &[f64],
    ctrl: &Control,
) -> Result<RateGridSolution> {
    let nc = grid.n_cells();
    let dt = grid.dt();
    let times: Vec<f64> = (0..=nc).map(|j| dt * j as f64).collect();
    let nw = grid.n_w;
    // tables[k][i] from (v_r, w_i) started at t_k
    let tables: Vec<Vec<Table>> = (0..=nc)
        .into_par_iter()
        .map(|k| ws.iter().map(|w| table(model, part, State::new(model.v_r, *w), kappa, &times, k, lat, ctrl)).collect())
        .collect::<Result<Vec<Vec<Table>>>>()?;
    // rr[n][k][i] = r(t_k, w_i, t_n), k <= n
    let mut rr: Vec<Vec<Vec<f64>>> = Vec::with_capacity(nc + 1);
    let mut sweeps = 0;
    let lam_r = model.rate(model.v_r);
    for n in 0..=nc {
        let mut levels: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
        levels[n] = vec![lam_r; nw];
        for k in (0..n).rev() {
            let explicit: Vec<f64> = (0..nw)
                .map(|i| {
                    let tb = &tables[k][i];
                    let d = n - k;
                    let m = |j: usize| tb.surv[j] - tb.surv[j + 1];
                    let mut acc = tb.p[d] + 0.5 * m(0) * interp(&levels[k + 1], tb.post[1]);
                    for j in 1..d {
                        acc += 0.5 * m(j) * (interp(&levels[k + j], tb.post[j]) + interp(&levels[k + j + 1], tb.post[j + 1]));
                    }
                    acc
                })
                .collect();
            let half_m0: Vec<f64> = (0..nw).map(|i| 0.5 * (tables[k][i].surv[0] - tables[k][i].surv[1])).collect();
            let post0: Vec<(usize, f64)> = (0..nw).map(|i| tables[k][i].post[0]).collect();
            let (level, it) = sweep_level(&explicit, &half_m0, &post0, ctrl)?;
            sweeps = sweeps.max(it);
            levels[k] = level;
        }
        rr.push(levels);
    }
    let out: Vec<usize> = (0..=grid.n_out).map(|k| k * grid.substeps).collect();
    let times_out: Vec<f64> = out.iter().map(|j| times[*j]).collect();
    let mut p_rows = Vec::new();
    let mut r_rows = Vec::new();
    for (ko, &k) in out.iter().enumerate() {
        let tx = table(model, part, x, kappa, &times, k, lat, ctrl)?;
        let mut prow = Vec::new();
        let mut rrow = Vec::new();
        for &n in &out[ko..] {
            let d = n - k;
            let mut acc = tx.p[d];
            for j in 0..d {
                let m = tx.surv[j] - tx.surv[j + 1];
                acc += 0.5 * m * (interp(&rr[n][k + j], tx.post[j]) + interp(&rr[n][k + j + 1], tx.post[j + 1]));
            }
            prow.push(tx.p[d]);
            rrow.push(if d == 0 { model.rate(x.v) } else { acc });
        }
        p_rows.push(prow);
        r_rows.push(rrow);
    }
    Ok(RateGridSolution { x, times: times_out, p: p_rows, r: r_rows, sweeps })
}
