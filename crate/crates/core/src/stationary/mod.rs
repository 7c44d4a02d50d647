//! Stationary regime of the post-jump chain `w_n` at constant current:
//! transition kernel on a `w`-grid, its invariant density, mean jump time,
//! the lift to the `(v, w)` plane and numerical certificates.

mod certify;
mod lift;

pub use certify::{
    estimate_doeblin, fit_tail, histogram_tv, log_sweep, transition_power_row, tv_decay, verify_lyapunov, Certificate,
    DoeblinCertificate, LyapunovCertificate, TailFit, TvDecayCertificate,
};
pub use lift::{lift_to_plane, PlaneDensity, PlaneGrid};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::Control;
use crate::current::Kappa;
use crate::dynamics::{classify_current_regime, Partition, RegionId};
use crate::error::{Error, Result};
use crate::hazard::{HazardFlow, Segment};
use crate::model::{ModelSpec, State};
use crate::ode::Stepper;

/// Hazard beyond which the remaining survival (< 3e-20) is lumped at the
/// current point.
pub(crate) const HAZARD_CUTOFF: f64 = 45.0;

/// Uniform cells `[w0 + i dw, w0 + (i+1) dw)`, `i < n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WGrid {
    pub w0: f64,
    pub dw: f64,
    pub n: usize,
}

impl WGrid {
    pub fn new(w0: f64, w_max: f64, n: usize) -> Self {
        Self { w0, dw: w_max / n as f64, n }
    }

    /// Like [`WGrid::new`] but with `w_b` a whole number of cells, so the
    /// reset shift moves mass between cells without splitting it. The cell
    /// count is adjusted so the span covers `w_max` by less than one cell.
    pub fn aligned(w0: f64, w_max: f64, n: usize, w_b: f64) -> Self {
        let k = (w_b * n as f64 / w_max).round().max(1.0);
        let dw = w_b / k;
        Self { w0, dw, n: (w_max / dw - 1e-9).ceil() as usize }
    }

    pub fn span(&self) -> f64 {
        self.dw * self.n as f64
    }

    pub fn top(&self) -> f64 {
        self.w0 + self.span()
    }

    pub fn center(&self, i: usize) -> f64 {
        self.w0 + (i as f64 + 0.5) * self.dw
    }

    pub fn edge(&self, i: usize) -> f64 {
        self.w0 + i as f64 * self.dw
    }

    /// Cell containing `w`, clamped to the grid.
    pub fn cell(&self, w: f64) -> usize {
        (((w - self.w0) / self.dw).floor().max(0.0) as usize).min(self.n - 1)
    }

    fn deposit(&self, row: &mut [f64], a: f64, b: f64, mass: f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (ca, cb) = (self.cell(lo), self.cell(hi));
        if ca == cb || hi - lo <= 1e-14 * (1.0 + hi.abs()) {
            row[self.cell(0.5 * (lo + hi))] += mass;
            return;
        }
        let dens = mass / (hi - lo);
        let lo_c = lo.max(self.w0);
        let hi_c = hi.min(self.top());
        // parts off the grid go to the end cells
        if lo < self.w0 {
            row[0] += dens * (self.w0 - lo).min(hi - lo);
        }
        if hi > self.top() {
            row[self.n - 1] += dens * (hi - self.top()).min(hi - lo);
        }
        if hi_c <= lo_c {
            return;
        }
        for c in self.cell(lo_c)..=self.cell(hi_c) {
            let l = self.edge(c).max(lo_c);
            let r = self.edge(c + 1).min(hi_c);
            if r > l {
                row[c] += dens * (r - l);
            }
        }
    }
}

/// One row of the kernel: masses of the pre-jump `w` per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub w0: f64,
    /// Index of the first stored cell.
    pub first: usize,
    pub mass: Vec<f64>,
    /// Mean time to the jump, `int_0^inf S(t) dt`, from the same flow.
    pub mean_time: f64,
    /// Times at which the orbit crosses the w-nullcline.
    pub nullcline_crossings: Vec<f64>,
    /// Crossings where `d(v - w)/dt` is below `graze_tol`.
    pub grazes: usize,
    /// Probability of no jump before the orbit enters P3 (1 if it never does).
    pub survival_to_p3: f64,
}

impl KernelRow {
    pub fn sum(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Mass in cell `j`.
    pub fn get(&self, j: usize) -> f64 {
        if j < self.first || j >= self.first + self.mass.len() {
            0.0
        } else {
            self.mass[j - self.first]
        }
    }

    pub fn last(&self) -> usize {
        self.first + self.mass.len() - 1
    }
}

/// Kernel of the pre-jump `w` from `(v_r, w0)` on `grid`.
pub fn kernel_row(model: &ModelSpec, part: &Partition, w0: f64, grid: &WGrid, ctrl: &Control) -> Result<KernelRow> {
    if classify_current_regime(model).reset_is_equilibrium {
        return Err(Error::ResetIsEquilibrium(model.i));
    }
    if w0 < part.w_star {
        return Err(Error::InvalidArgument(format!("w0 = {w0} below w* = {}", part.w_star)));
    }
    let kappa = Kappa::zero();
    let mut flow = HazardFlow::new(model, part, State::new(model.v_r, w0), 0.0, &kappa, ctrl);
    let mut row = vec![0.0; grid.n];
    let mut crossings = Vec::new();
    let mut grazes = 0;
    let mut survival_to_p3 = None;
    let mut prev = flow.point();
    let w_half = 0.5 * grid.dw;
    loop {
        if prev.hazard > HAZARD_CUTOFF || prev.t > ctrl.t_horizon {
            break;
        }
        if !flow.step(ctrl.t_horizon)? {
            break;
        }
        let Some(seg) = flow.last_segment().copied() else { continue };
        let end = seg.end();
        let ds = (-prev.hazard).exp() - (-end.hazard).exp();
        let m = ((end.state.w - prev.state.w).abs() / w_half).max(ds / 0.01).min(1e5).ceil() as usize + 1;
        let mut a = prev;
        for b in seg.samples(m + 1).skip(1) {
            let sa = (-a.hazard).exp();
            let sb = (-b.hazard).exp();
            grid.deposit(&mut row, a.state.w, b.state.w, sa - sb);
            let ga = a.state.v - a.state.w;
            let gb = b.state.v - b.state.w;
            if ga != 0.0 && (ga > 0.0) != (gb > 0.0) {
                let tc = a.t + (b.t - a.t) * ga / (ga - gb);
                crossings.push(tc);
                let slope = (gb - ga) / (b.t - a.t);
                if slope.abs() < ctrl.graze_tol {
                    grazes += 1;
                }
            }
            if survival_to_p3.is_none() && matches!(seg, Segment::Time(_)) && b.state.w <= part.w23 && b.state.v < part.v34 {
                survival_to_p3 = Some(sb);
            }
            a = b;
        }
        prev = end;
    }
    let last = flow.point();
    let rest = (-last.hazard).exp();
    grid.deposit(&mut row, last.state.w, last.state.w, rest);
    let first = row.iter().position(|x| *x != 0.0).unwrap_or(0);
    let end = row.iter().rposition(|x| *x != 0.0).unwrap_or(0);
    // direct tail: once the hazard is past the cutoff, the rest of
    // int S dt is below S_end / lambda
    let mean_time = last.survival_integral + rest / model.rate(last.state.v).max(1e-300);
    Ok(KernelRow {
        w0,
        first,
        mass: row[first..=end].to_vec(),
        mean_time,
        nullcline_crossings: crossings,
        grazes,
        survival_to_p3: survival_to_p3.unwrap_or(1.0),
    })
}

/// Row-stochastic approximation of the pre-jump kernel, rows at cell centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    pub grid: WGrid,
    pub w_b: f64,
    pub rows: Vec<KernelRow>,
    /// Mean jump time from each cell center.
    pub mean_time: Vec<f64>,
}

pub fn build_kernel(model: &ModelSpec, part: &Partition, grid: &WGrid, ctrl: &Control) -> Result<KernelMatrix> {
    if classify_current_regime(model).reset_is_equilibrium {
        return Err(Error::ResetIsEquilibrium(model.i));
    }
    let rows: Vec<KernelRow> =
        (0..grid.n).into_par_iter().map(|i| kernel_row(model, part, grid.center(i), grid, ctrl)).collect::<Result<_>>()?;
    let mean_time = (0..grid.n)
        .into_par_iter()
        .map(|i| mean_jump_time(model, part, grid.center(i), ctrl))
        .collect::<Result<_>>()?;
    Ok(KernelMatrix { grid: *grid, w_b: model.w_b, rows, mean_time })
}

impl KernelMatrix {
    pub fn n(&self) -> usize {
        self.grid.n
    }

    /// Largest deviation of a row sum from 1.
    pub fn stochasticity_error(&self) -> f64 {
        self.rows.iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `mu -> shift(K^T mu)`: one step of the post-jump chain on cell masses.
    /// Returns the new masses and the mass pushed past the top.
    pub fn step(&self, mu: &[f64]) -> (Vec<f64>, f64) {
        let n = self.n();
        let mut pre = vec![0.0; n];
        for (i, row) in self.rows.iter().enumerate() {
            let m = mu[i];
            if m == 0.0 {
                continue;
            }
            for (k, x) in row.mass.iter().enumerate() {
                pre[row.first + k] += m * x;
            }
        }
        self.shift(&pre)
    }

    /// Move masses up by `w_b`, splitting between two cells when `w_b` is not
    /// a whole number of cells.
    pub fn shift(&self, pre: &[f64]) -> (Vec<f64>, f64) {
        let n = self.n();
        let s = self.w_b / self.grid.dw;
        let k = s.floor() as usize;
        let frac = s - k as f64;
        let frac = if frac < 1e-9 { 0.0 } else { frac };
        let mut out = vec![0.0; n];
        let mut leak = 0.0;
        for (j, m) in pre.iter().enumerate() {
            let parts = [(j + k, m * (1.0 - frac)), (j + k + 1, m * frac)];
            for (c, x) in parts {
                if c < n {
                    out[c] += x;
                } else {
                    leak += x;
                }
            }
        }
        (out, leak)
    }

    /// Dense post-jump transition matrix `P[i][j]` (rows may lose the
    /// mass shifted past the top).
    pub fn dense_transition(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| {
                let mut pre = vec![0.0; self.n()];
                let row = &self.rows[i];
                pre[row.first..=row.last()].copy_from_slice(&row.mass);
                self.shift(&pre).0
            })
            .collect()
    }
}

/// Density of the post-jump `w` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    pub grid: WGrid,
    /// Cell masses (sum 1).
    pub mass: Vec<f64>,
    /// Mass lost past the top per step at the fixed point.
    pub leak: f64,
    pub iterations: usize,
    /// Ratio of the last two successive changes of the power iteration.
    pub contraction: f64,
    /// `|mu - step(mu)|_1` at the returned `mu`.
    pub residual: f64,
}

impl GridMeasure {
    pub fn density(&self) -> Vec<f64> {
        self.mass.iter().map(|m| m / self.grid.dw).collect()
    }

    /// `sum_i mu_i f(w_i)` at cell centers.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.mass.iter().enumerate().map(|(i, m)| m * f(self.grid.center(i))).sum()
    }

    /// Mass above `w`.
    pub fn tail(&self, w: f64) -> f64 {
        let mut acc = 0.0;
        for i in (0..self.grid.n).rev() {
            let (a, b) = (self.grid.edge(i), self.grid.edge(i + 1));
            if a >= w {
                acc += self.mass[i];
            } else if b > w {
                acc += self.mass[i] * (b - w) / (b - a);
            }
        }
        acc
    }

    /// CSV `w,p` with the density at cell centers.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["w", "p"])?;
        for (i, p) in self.density().iter().enumerate() {
            wtr.serialize((self.grid.center(i), p))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Power iteration for the invariant law of the post-jump chain.
pub fn invariant_density(kernel: &KernelMatrix, ctrl: &Control) -> Result<GridMeasure> {
    let n = kernel.n();
    let mut mu = vec![1.0 / n as f64; n];
    let mut last_change = f64::NAN;
    let mut contraction = f64::NAN;
    for it in 1..=ctrl.max_iters {
        let (mut next, _) = kernel.step(&mu);
        let total: f64 = next.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NonConvergence { iters: it, residual: f64::NAN });
        }
        next.iter_mut().for_each(|x| *x /= total);
        let change: f64 = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
        if last_change.is_finite() && last_change > 0.0 {
            contraction = change / last_change;
        }
        last_change = change;
        mu = next;
        if change < ctrl.fp_tol {
            let (img, leak) = kernel.step(&mu);
            let total: f64 = img.iter().sum();
            let residual = img.iter().zip(&mu).map(|(a, b)| (a / total - b).abs()).sum();
            return Ok(GridMeasure { grid: kernel.grid, mass: mu, leak, iterations: it, contraction, residual });
        }
    }
    Err(Error::NonConvergence { iters: ctrl.max_iters, residual: last_change })
}

/// `E T1` from `(v_r, w0)`: `int_0^inf exp(-tau) / lambda(v(tau)) dtau` along
/// the flow in the hazard clock, stopped once the integrand is below 1e-14.
pub fn mean_jump_time(model: &ModelSpec, part: &Partition, w0: f64, ctrl: &Control) -> Result<f64> {
    if w0 < part.w_star {
        return Err(Error::InvalidArgument(format!("w0 = {w0} below w* = {}", part.w_star)));
    }
    mean_time_from(model, State::new(model.v_r, w0), ctrl)
}

/// As [`mean_jump_time`] from an arbitrary state.
pub fn mean_time_from(model: &ModelSpec, x: State, ctrl: &Control) -> Result<f64> {
    let field = model.field(0.0);
    let mut rhs = |tau: f64, y: &[f64; 3]| {
        let (f, l) = field.f_rate(y[0]);
        let il = 1.0 / l;
        [(f - y[1] + field.current) * il, (y[0] - y[1]) * il, (-tau).exp() * il]
    };
    let mut st = Stepper::new(&mut rhs, 0.0, [x.v, x.w, 0.0], 0.0, ctrl.tolerance());
    let tau_max = 800.0;
    while st.t < tau_max {
        st.step(&mut rhs, tau_max)?;
        if (-st.t).exp() / model.rate(st.y[0]) < 1e-14 {
            break;
        }
    }
    Ok(st.y[2])
}

/// `E_mu T1` by quadrature of the per-cell mean jump times.
pub fn expected_jump_time(kernel: &KernelMatrix, mu: &GridMeasure) -> f64 {
    mu.mass.iter().zip(&kernel.mean_time).map(|(m, t)| m * t).sum()
}

/// Pilot choice of the grid span: fit the tail of a coarse invariant
/// density and extend the grid until the fitted tail mass is below `budget`.
pub fn choose_w_max(model: &ModelSpec, part: &Partition, ctrl: &Control, budget: f64) -> Result<f64> {
    let mut w_max = 20.0 * model.w_b + (part.w23 - part.w_star);
    for _ in 0..6 {
        let grid = WGrid::aligned(part.w_star, w_max, 200, model.w_b);
        let k = build_kernel(model, part, &grid, ctrl)?;
        let mu = invariant_density(&k, ctrl)?;
        let fit = fit_tail(&mu);
        if !(fit.slope < 0.0) {
            w_max *= 2.0;
            continue;
        }
        // mass above w decays like exp(slope (w - w_ref))
        let need = fit.w_ref + (budget / fit.tail_at_ref).ln() / fit.slope;
        let need = need - part.w_star + 2.0 * model.w_b;
        if need <= w_max {
            return Ok(need.max(10.0 * model.w_b));
        }
        w_max = need * 1.2;
    }
    Ok(w_max)
}

/// Region of the reset point `(v_r, w)`.
pub fn reset_region(model: &ModelSpec, part: &Partition, w: f64) -> RegionId {
    part.classify(model, State::new(model.v_r, w), model.i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_partition;

    fn setup() -> (ModelSpec, Partition) {
        let m = ModelSpec::fig2();
        let p = build_partition(&m, (0.0, 0.0), 1.0).unwrap();
        (m, p)
    }

    #[test]
    fn grid_alignment() {
        let g = WGrid::aligned(-6.0, 60.0, 2000, 2.5);
        let s = 2.5 / g.dw;
        assert!((s - s.round()).abs() < 1e-9);
        assert!(g.span() >= 60.0 && g.span() < 60.0 + g.dw);
        assert_eq!(g.cell(-100.0), 0);
        assert_eq!(g.cell(1e9), g.n - 1);
    }

    #[test]
    fn deposit_conserves_mass() {
        let g = WGrid::new(0.0, 10.0, 10);
        let mut row = vec![0.0; 10];
        g.deposit(&mut row, 2.5, 4.5, 1.0);
        assert!((row[2] - 0.25).abs() < 1e-15 && (row[3] - 0.5).abs() < 1e-15 && (row[4] - 0.25).abs() < 1e-15);
        g.deposit(&mut row, -1.0, 1.0, 1.0);
        g.deposit(&mut row, 9.5, 12.0, 1.0);
        assert!((row.iter().sum::<f64>() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn rows_are_stochastic() {
        let (m, p) = setup();
        let g = WGrid::aligned(p.w_star, 60.0, 400, m.w_b);
        for w0 in [p.w_star + 0.1, 1.0, 5.0, 12.0, 40.0] {
            let r = kernel_row(&m, &p, w0, &g, &Control::default()).unwrap();
            assert!((r.sum() - 1.0).abs() < 1e-12, "{w0}: {}", r.sum());
            assert!(r.mass.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn reset_equilibrium_rejected() {
        let (m, p) = setup();
        let d = m.with_current(1.0 - m.f(1.0));
        let g = WGrid::new(p.w_star, 60.0, 100);
        assert!(matches!(kernel_row(&d, &p, 5.0, &g, &Control::default()), Err(Error::ResetIsEquilibrium(_))));
    }

    #[test]
    fn mean_time_matches_row_integral() {
        let (m, p) = setup();
        let g = WGrid::new(p.w_star, 60.0, 200);
        for w0 in [2.0, 10.0, 30.0] {
            let r = kernel_row(&m, &p, w0, &g, &Control::default()).unwrap();
            let t = mean_jump_time(&m, &p, w0, &Control::default()).unwrap();
            assert!((r.mean_time - t).abs() < 1e-6 * t, "{w0}: {} {}", r.mean_time, t);
        }
    }
}
