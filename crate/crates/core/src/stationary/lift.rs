use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GridMeasure, HAZARD_CUTOFF};
use crate::control::Control;
use crate::current::Kappa;
use crate::dynamics::Partition;
use crate::error::Result;
use crate::hazard::{HazardFlow, HazardPoint};
use crate::model::{ModelSpec, State};

/// Node grid on `[v.0, v.1] x [w.0, w.1]`, `nv x nw` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneGrid {
    pub v: (f64, f64),
    pub w: (f64, f64),
    pub nv: usize,
    pub nw: usize,
}

impl PlaneGrid {
    pub fn dv(&self) -> f64 {
        (self.v.1 - self.v.0) / (self.nv - 1) as f64
    }

    pub fn dw(&self) -> f64 {
        (self.w.1 - self.w.0) / (self.nw - 1) as f64
    }

    pub fn node(&self, iv: usize, iw: usize) -> State {
        State::new(self.v.0 + iv as f64 * self.dv(), self.w.0 + iw as f64 * self.dw())
    }

    /// Bilinear weights of `s`, or `None` outside the grid.
    fn splat(&self, s: State) -> Option<[(usize, f64); 4]> {
        let x = (s.v - self.v.0) / self.dv();
        let y = (s.w - self.w.0) / self.dw();
        if !(x >= 0.0 && y >= 0.0 && x <= (self.nv - 1) as f64 && y <= (self.nw - 1) as f64) {
            return None;
        }
        let i = (x.floor() as usize).min(self.nv - 2);
        let j = (y.floor() as usize).min(self.nw - 2);
        let (fx, fy) = (x - i as f64, y - j as f64);
        let k = |a: usize, b: usize| a * self.nw + b;
        Some([
            (k(i, j), (1.0 - fx) * (1.0 - fy)),
            (k(i + 1, j), fx * (1.0 - fy)),
            (k(i, j + 1), (1.0 - fx) * fy),
            (k(i + 1, j + 1), fx * fy),
        ])
    }
}

/// Invariant law of the continuous-time process on a `(v, w)` node grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneDensity {
    pub grid: PlaneGrid,
    /// Node masses, row-major in `v` (index `iv * nw + iw`), summing to one
    /// minus `outside`.
    pub mass: Vec<f64>,
    pub outside: f64,
    /// `E T1` under the post-jump law.
    pub mean_time: f64,
    /// `int lambda dmu` over the whole occupation measure, grid or not.
    pub firing_rate: f64,
}

impl PlaneDensity {
    pub fn total(&self) -> f64 {
        self.mass.iter().sum::<f64>() + self.outside
    }

    pub fn density(&self, iv: usize, iw: usize) -> f64 {
        self.mass[iv * self.grid.nw + iw] / (self.grid.dv() * self.grid.dw())
    }

    /// CSV `v,w,density`, `w` varying fastest.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["v", "w", "density"])?;
        for iv in 0..self.grid.nv {
            for iw in 0..self.grid.nw {
                let s = self.grid.node(iv, iw);
                wtr.serialize((s.v, s.w, self.density(iv, iw)))?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

struct Occupation {
    mass: Vec<f64>,
    outside: f64,
    rate: f64,
    time: f64,
}

const CHUNK: usize = 128;

/// Survival-weighted occupation measure of the flow from each reset point,
/// averaged over `mu` and normalized by `E_mu T1`.
pub fn lift_to_plane(
    model: &ModelSpec,
    part: &Partition,
    mu: &GridMeasure,
    grid: &PlaneGrid,
    ctrl: &Control,
) -> Result<PlaneDensity> {
    let n = mu.grid.n;
    let chunks: Vec<Occupation> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = Occupation { mass: vec![0.0; grid.nv * grid.nw], outside: 0.0, rate: 0.0, time: 0.0 };
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let m = mu.mass[i];
                if m > 0.0 {
                    occupy(model, part, mu.grid.center(i), m, grid, ctrl, &mut acc)?;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut mass = vec![0.0; grid.nv * grid.nw];
    let (mut outside, mut rate, mut time) = (0.0, 0.0, 0.0);
    for c in &chunks {
        mass.iter_mut().zip(&c.mass).for_each(|(a, b)| *a += b);
        outside += c.outside;
        rate += c.rate;
        time += c.time;
    }
    mass.iter_mut().for_each(|x| *x /= time);
    Ok(PlaneDensity { grid: *grid, mass, outside: outside / time, mean_time: time, firing_rate: rate / time })
}

fn occupy(
    model: &ModelSpec,
    part: &Partition,
    w0: f64,
    weight: f64,
    grid: &PlaneGrid,
    ctrl: &Control,
    acc: &mut Occupation,
) -> Result<()> {
    let kappa = Kappa::zero();
    let mut flow = HazardFlow::new(model, part, State::new(model.v_r, w0), 0.0, &kappa, ctrl);
    let mut prev = flow.point();
    let (dv, dw) = (grid.dv(), grid.dw());
    let put = |a: &HazardPoint, b: &HazardPoint, acc: &mut Occupation| {
        let q = (b.survival_integral - a.survival_integral) * weight;
        let mid = State::new(0.5 * (a.state.v + b.state.v), 0.5 * (a.state.w + b.state.w));
        acc.time += q;
        acc.rate += q * model.rate(mid.v);
        match grid.splat(mid) {
            Some(parts) => parts.iter().for_each(|(k, f)| acc.mass[*k] += q * f),
            None => acc.outside += q,
        }
    };
    while prev.hazard <= HAZARD_CUTOFF && prev.t <= ctrl.t_horizon {
        if !flow.step(ctrl.t_horizon)? {
            break;
        }
        let Some(seg) = flow.last_segment().copied() else { continue };
        let end = seg.end();
        let moved = ((end.state.v - prev.state.v).abs() / dv).max((end.state.w - prev.state.w).abs() / dw);
        let m = (2.0 * moved).ceil().clamp(1.0, 4000.0) as usize;
        let mut a = prev;
        for b in seg.samples(m + 1).skip(1) {
            put(&a, &b, acc);
            a = b;
        }
        prev = end;
    }
    // what is left past the cutoff sits at the last point
    let rest = (-prev.hazard).exp() / model.rate(prev.state.v).max(1e-300);
    let mut tail = prev;
    tail.survival_integral += rest;
    put(&prev, &tail, acc);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_partition;
    use crate::stationary::{build_kernel, expected_jump_time, invariant_density, WGrid};

    #[test]
    fn splat_weights_sum_to_one() {
        let g = PlaneGrid { v: (-1.0, 1.0), w: (0.0, 2.0), nv: 5, nw: 9 };
        let p = g.splat(State::new(0.3, 1.7)).unwrap();
        assert!((p.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(g.splat(State::new(1.5, 1.0)).is_none());
        assert!(g.splat(State::new(1.0, 2.0)).is_some());
    }

    #[test]
    fn lift_is_normalized_and_fires_at_the_right_rate() {
        let m = ModelSpec::fig2();
        let p = build_partition(&m, (0.0, 0.0), 1.0).unwrap();
        let ctrl = Control::default();
        let g = WGrid::aligned(p.w_star, 60.0, 240, m.w_b);
        let k = build_kernel(&m, &p, &g, &ctrl).unwrap();
        let mu = invariant_density(&k, &ctrl).unwrap();
        let pg = PlaneGrid { v: (-15.0, 10.0), w: (p.w_star - 1.0, 65.0), nv: 120, nw: 120 };
        let d = lift_to_plane(&m, &p, &mu, &pg, &ctrl).unwrap();
        assert!((d.total() - 1.0).abs() < 1e-10);
        let et = expected_jump_time(&k, &mu);
        assert!((d.mean_time - et).abs() < 1e-4 * et, "{} {}", d.mean_time, et);
        assert!((d.firing_rate * et - 1.0).abs() < 0.02, "{}", d.firing_rate * et);
    }
}
