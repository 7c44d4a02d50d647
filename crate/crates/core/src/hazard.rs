//! Hazard along the flow, the density of the first jump time and two
//! samplers for it.
//!
//! The production sampler integrates the flow in the hazard clock
//! `tau = Lambda(t)`. In that clock the field is `(F - w + I + kappa) / lambda`,
//! which stays bounded through the blow-up, so the first jump is found by
//! integrating to `tau = E` with `E ~ Exp(1)` and is always before `t_inf`.

use serde::{Deserialize, Serialize};

use crate::control::Control;
use crate::current::Kappa;
use crate::dynamics::{reset, tail_time, Partition};
use crate::error::{Error, Result};
use crate::model::{Field, ModelSpec, State};
use crate::ode::{Dense, Stepper, Tolerance};
use crate::rng::Stream;

/// Point of the flow with its accumulated hazard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardPoint {
    pub t: f64,
    /// `Lambda(t) = int_0^t lambda(v(u)) du`.
    pub hazard: f64,
    /// `int_0^t exp(-Lambda(u)) du`.
    pub survival_integral: f64,
    pub state: State,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Survival {
    pub hazard: f64,
    pub s: f64,
}

/// One sampled first jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstJump {
    /// Absolute time of the jump.
    pub t1: f64,
    pub pre_state: State,
    pub post_state: State,
    /// The unit exponential consumed. For the thinning sampler this is the
    /// hazard accumulated up to the jump, which has the same law.
    pub exp_draw: f64,
}

/// Interpolant of one accepted step of a [`HazardFlow`].
#[derive(Debug, Clone, Copy)]
pub enum Segment {
    /// `t -> [v, w, Lambda, Q]`.
    Time(Dense<4>),
    /// `v -> [t, w, Lambda, Q]`, used close to the blow-up.
    Volt(Dense<4>),
}

impl Segment {
    fn unpack(&self, x: f64) -> HazardPoint {
        match self {
            Segment::Time(d) => {
                let y = d.eval(x);
                HazardPoint { t: x, hazard: y[2], survival_integral: y[3], state: State::new(y[0], y[1]) }
            }
            Segment::Volt(d) => {
                let y = d.eval(x);
                HazardPoint { t: y[0], hazard: y[2], survival_integral: y[3], state: State::new(x, y[1]) }
            }
        }
    }

    pub fn start(&self) -> HazardPoint {
        match self {
            Segment::Time(d) | Segment::Volt(d) => self.unpack(d.t0),
        }
    }

    pub fn end(&self) -> HazardPoint {
        match self {
            Segment::Time(d) | Segment::Volt(d) => self.unpack(d.t1()),
        }
    }

    /// Point at time `t` inside the segment.
    pub fn at_time(&self, t: f64) -> HazardPoint {
        match self {
            Segment::Time(_) => self.unpack(t),
            Segment::Volt(d) => {
                let v = d.locate(|_, y| y[0] - t);
                let mut p = self.unpack(v);
                p.t = t;
                p
            }
        }
    }

    /// Point where the accumulated hazard equals `h`.
    pub fn at_hazard(&self, h: f64) -> HazardPoint {
        match self {
            Segment::Time(d) | Segment::Volt(d) => self.unpack(d.locate(|_, y| y[2] - h)),
        }
    }

    /// Point at `n` equally spaced values of the independent variable, ends included.
    pub fn samples(&self, n: usize) -> impl Iterator<Item = HazardPoint> + '_ {
        let d = match self {
            Segment::Time(d) | Segment::Volt(d) => d,
        };
        (0..n).map(move |k| self.unpack(d.t0 + d.h * k as f64 / (n - 1) as f64))
    }
}

enum Phase {
    Time(Stepper<4>),
    Volt(Stepper<4>),
    Exploded { end: HazardPoint, t_inf: f64 },
}

/// Flow from a state together with `Lambda` and `int exp(-Lambda)`, switching to
/// `v` as the independent variable when the orbit heads into the blow-up.
pub struct HazardFlow<'a> {
    model: &'a ModelSpec,
    field: Field<'a>,
    kappa: &'a Kappa,
    v_switch: f64,
    v_explode: f64,
    tol: Tolerance,
    phase: Phase,
    last: Option<Segment>,
}

fn rhs_t(field: &Field, kappa: &Kappa, t: f64, y: &[f64; 4]) -> [f64; 4] {
    let (f, l) = field.f_rate(y[0]);
    [f - y[1] + field.current + kappa.at(t), y[0] - y[1], l, (-y[2]).exp()]
}

fn rhs_v(field: &Field, kappa: &Kappa, v: f64, y: &[f64; 4]) -> [f64; 4] {
    let (f, l) = field.f_rate(v);
    let inv = 1.0 / (f - y[1] + field.current + kappa.at(y[0]));
    [inv, (v - y[1]) * inv, l * inv, (-y[2]).exp() * inv]
}

impl<'a> HazardFlow<'a> {
    /// Start at `x` at absolute time `t0` with zero hazard.
    pub fn new(model: &'a ModelSpec, part: &Partition, x: State, t0: f64, kappa: &'a Kappa, ctrl: &Control) -> Self {
        let (v_switch, v_explode) = crate::dynamics::flow_thresholds(model, part, ctrl);
        let field = model.field(0.0);
        let tol = ctrl.tolerance();
        let mut rhs = |t: f64, y: &[f64; 4]| rhs_t(&field, kappa, t, y);
        let st = Stepper::new(&mut rhs, t0, [x.v, x.w, 0.0, 0.0], 0.0, tol);
        let mut flow = Self { model, field, kappa, v_switch, v_explode, tol, phase: Phase::Time(st), last: None };
        flow.maybe_switch();
        flow
    }

    pub fn point(&self) -> HazardPoint {
        match &self.phase {
            Phase::Time(st) => HazardPoint {
                t: st.t,
                hazard: st.y[2],
                survival_integral: st.y[3],
                state: State::new(st.y[0], st.y[1]),
            },
            Phase::Volt(st) => HazardPoint {
                t: st.y[0],
                hazard: st.y[2],
                survival_integral: st.y[3],
                state: State::new(st.t, st.y[1]),
            },
            Phase::Exploded { end, .. } => *end,
        }
    }

    pub fn t(&self) -> f64 {
        self.point().t
    }

    /// Explosion time once the orbit has passed the explosion threshold.
    pub fn t_inf(&self) -> Option<f64> {
        match self.phase {
            Phase::Exploded { t_inf, .. } => Some(t_inf),
            _ => None,
        }
    }

    pub fn exploded(&self) -> bool {
        matches!(self.phase, Phase::Exploded { .. })
    }

    /// Whether the orbit is on its final run to the blow-up.
    pub fn in_blow_up(&self) -> bool {
        !matches!(self.phase, Phase::Time(_))
    }

    pub fn last_segment(&self) -> Option<&Segment> {
        self.last.as_ref()
    }

    fn maybe_switch(&mut self) {
        if let Phase::Time(st) = &self.phase {
            let (v, w) = (st.y[0], st.y[1]);
            if v > self.v_switch && w <= v {
                let (field, kappa) = (self.field, self.kappa);
                let mut rhs = |v: f64, y: &[f64; 4]| rhs_v(&field, kappa, v, y);
                let sv = Stepper::new(&mut rhs, v, [st.t, w, st.y[2], st.y[3]], 0.0, self.tol);
                self.phase = Phase::Volt(sv);
            }
        }
    }

    /// One accepted step, never past `t_end` while time is the independent
    /// variable (the last segments before the blow-up may overshoot it).
    /// Returns `false` once the orbit has exploded.
    pub fn step(&mut self, t_end: f64) -> Result<bool> {
        let (field, kappa) = (self.field, self.kappa);
        match &mut self.phase {
            Phase::Exploded { .. } => return Ok(false),
            Phase::Time(st) => {
                if st.t >= t_end {
                    return Ok(true);
                }
                let mut rhs = |t: f64, y: &[f64; 4]| rhs_t(&field, kappa, t, y);
                st.step(&mut rhs, t_end)?;
                self.last = Some(Segment::Time(*st.dense()));
            }
            Phase::Volt(st) => {
                let mut rhs = |v: f64, y: &[f64; 4]| rhs_v(&field, kappa, v, y);
                st.step(&mut rhs, self.v_explode)?;
                self.last = Some(Segment::Volt(*st.dense()));
                if st.t >= self.v_explode {
                    let end = HazardPoint {
                        t: st.y[0],
                        hazard: st.y[2],
                        survival_integral: st.y[3],
                        state: State::new(st.t, st.y[1]),
                    };
                    let c = self.model.i + kappa.max();
                    let t_inf = end.t + tail_time(self.model, st.t, st.y[1], c);
                    self.phase = Phase::Exploded { end, t_inf };
                }
                return Ok(true);
            }
        }
        self.maybe_switch();
        Ok(true)
    }

    /// Shift `v` by `dv` (an incoming kick) and continue from there.
    pub fn kick(&mut self, dv: f64) {
        let (field, kappa) = (self.field, self.kappa);
        match &mut self.phase {
            Phase::Time(st) => {
                let mut rhs = |t: f64, y: &[f64; 4]| rhs_t(&field, kappa, t, y);
                let mut y = st.y;
                y[0] += dv;
                st.restart(&mut rhs, st.t, y);
            }
            Phase::Volt(st) => {
                let mut rhs = |v: f64, y: &[f64; 4]| rhs_v(&field, kappa, v, y);
                st.restart(&mut rhs, st.t + dv, st.y);
            }
            Phase::Exploded { .. } => {}
        }
        self.last = None;
        self.maybe_switch();
    }

    /// Advance to time `t` (or the blow-up) and return the point there.
    pub fn advance_to(&mut self, t: f64) -> Result<HazardPoint> {
        loop {
            let p = self.point();
            if p.t >= t {
                return Ok(match &self.last {
                    Some(seg) if seg.start().t <= t => seg.at_time(t),
                    _ => p,
                });
            }
            if !self.step(t)? {
                return Ok(self.point());
            }
        }
    }
}

/// `Lambda` and `S = exp(-Lambda)` at time `t` from `x` at time 0.
pub fn survival(model: &ModelSpec, part: &Partition, x: State, kappa: &Kappa, t: f64, ctrl: &Control) -> Result<Survival> {
    if t <= 0.0 {
        return Ok(Survival { hazard: 0.0, s: 1.0 });
    }
    let mut flow = HazardFlow::new(model, part, x, 0.0, kappa, ctrl);
    let p = flow.advance_to(t)?;
    if let Some(t_inf) = flow.t_inf() {
        if t >= t_inf {
            return Ok(Survival { hazard: f64::INFINITY, s: 0.0 });
        }
    }
    Ok(Survival { hazard: p.hazard, s: (-p.hazard).exp() })
}

/// Density `lambda(v(t)) exp(-Lambda(t))` of the first jump time.
pub fn jump_density(model: &ModelSpec, part: &Partition, x: State, kappa: &Kappa, t: f64, ctrl: &Control) -> Result<f64> {
    if t <= 0.0 {
        return Ok(if t == 0.0 { model.rate(x.v) } else { 0.0 });
    }
    let mut flow = HazardFlow::new(model, part, x, 0.0, kappa, ctrl);
    let p = flow.advance_to(t)?;
    if let Some(t_inf) = flow.t_inf() {
        if t >= t_inf || p.t < t {
            return Ok(0.0);
        }
    }
    Ok(model.rate(p.state.v) * (-p.hazard).exp())
}

/// `max(lambda(v34), C(v34, alpha, w*))`: bound on the jump density from
/// the reset line for currents up to `I + alpha`.
pub fn density_bound(model: &ModelSpec, part: &Partition, alpha: f64) -> f64 {
    let x1 = part.v34;
    let c = model.i + alpha - part.w_star;
    let top = model.finite_ceiling().min(x1 + 1e4);
    let n = 200_000;
    let h = (top - x1) / n as f64;
    let g = |u: f64| model.rate(u) / (model.f(u) + c);
    let mut acc = 0.0;
    let mut best = model.rate(x1);
    let mut prev = g(x1);
    for k in 1..=n {
        let u = x1 + h * k as f64;
        let cur = g(u);
        acc += 0.5 * h * (prev + cur);
        prev = cur;
        let val = (model.rate(u).ln() - acc).exp();
        if val.is_finite() {
            best = best.max(val);
        }
    }
    best.max(model.rate(x1))
}

/// First-jump sampler in the hazard clock.
#[derive(Debug, Clone, Copy)]
pub struct TimeChangeSampler<'a> {
    model: &'a ModelSpec,
    field: Field<'a>,
    kappa: &'a Kappa,
    tol: Tolerance,
    freeze_drift: bool,
    rate_scale: f64,
}

impl<'a> TimeChangeSampler<'a> {
    pub fn new(model: &'a ModelSpec, kappa: &'a Kappa, ctrl: &Control) -> Self {
        Self { model, field: model.field(0.0), kappa, tol: ctrl.tolerance(), freeze_drift: false, rate_scale: 1.0 }
    }

    /// Test hook: hold the state fixed so the hazard is constant.
    pub fn freeze_drift(mut self) -> Self {
        self.freeze_drift = true;
        self
    }

    /// Test hook: use `c * lambda` as the rate.
    pub fn rate_scale(mut self, c: f64) -> Self {
        self.rate_scale = c;
        self
    }

    pub fn model(&self) -> &'a ModelSpec {
        self.model
    }

    /// Draw `E` from `rng` and sample the jump from `x` at time `t0`.
    pub fn sample(&self, x: State, t0: f64, rng: &mut Stream) -> Result<FirstJump> {
        let e = rng.exp1();
        self.run(x, t0, e, &[], |_, _| {})
    }

    /// Jump for a given hazard budget `e`, reporting the state at every time
    /// of `obs` that falls in `[t0, T1)`.
    pub fn run(&self, x: State, t0: f64, e: f64, obs: &[f64], on_obs: impl FnMut(usize, State)) -> Result<FirstJump> {
        match self.advance(x, t0, e, f64::INFINITY, &mut 0.0, obs, on_obs)? {
            Advance::Jump(j) => Ok(j),
            Advance::Survived { .. } => unreachable!("no stop time"),
        }
    }

    /// Follow the flow from `x` at `t0` with hazard budget `e` until the jump
    /// or until `t_stop`, whichever comes first. `h` carries the step size
    /// between calls (non-positive picks one).
    #[allow(clippy::too_many_arguments)]
    pub fn advance(
        &self,
        x: State,
        t0: f64,
        e: f64,
        t_stop: f64,
        h: &mut f64,
        obs: &[f64],
        mut on_obs: impl FnMut(usize, State),
    ) -> Result<Advance> {
        if t0 >= t_stop {
            return Ok(Advance::Survived { state: x, hazard: 0.0 });
        }
        let (field, kappa, scale, frozen) = (self.field, self.kappa, self.rate_scale, self.freeze_drift);
        let mut rhs = |_tau: f64, y: &[f64; 3]| {
            let (f, l) = field.f_rate(y[0]);
            let il = 1.0 / (l * scale);
            if frozen {
                [0.0, 0.0, il]
            } else {
                [(f - y[1] + field.current + kappa.at(y[2])) * il, (y[0] - y[1]) * il, il]
            }
        };
        let mut k = obs.partition_point(|t| *t < t0);
        let mut st = Stepper::new(&mut rhs, 0.0, [x.v, x.w, t0], *h, self.tol);
        while st.t < e {
            st.step(&mut rhs, e)?;
            let t_end = st.y[2].min(t_stop);
            while k < obs.len() && obs[k] < t_end {
                let d = st.dense();
                let tau = d.locate(|_, y| y[2] - obs[k]);
                let y = d.eval(tau);
                on_obs(k, State::new(y[0], y[1]));
                k += 1;
            }
            if st.y[2] >= t_stop {
                let d = st.dense();
                let tau = d.locate(|_, y| y[2] - t_stop);
                let y = d.eval(tau);
                *h = st.step_size();
                return Ok(Advance::Survived { state: State::new(y[0], y[1]), hazard: tau });
            }
        }
        *h = st.step_size();
        let pre = State::new(st.y[0], st.y[1]);
        Ok(Advance::Jump(FirstJump { t1: st.y[2], pre_state: pre, post_state: reset(self.model, pre), exp_draw: e }))
    }
}

/// Outcome of [`TimeChangeSampler::advance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Advance {
    Jump(FirstJump),
    /// No jump before the stop time; `hazard` of the budget was used.
    Survived { state: State, hazard: f64 },
}

/// First jump from `x` at time 0 by the hazard-clock method.
pub fn sample_first_jump(model: &ModelSpec, x: State, kappa: &Kappa, rng: &mut Stream, ctrl: &Control) -> Result<FirstJump> {
    TimeChangeSampler::new(model, kappa, ctrl).sample(x, 0.0, rng)
}

/// Counters of one thinning run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ThinningStats {
    pub proposals: u64,
    pub accepted: u64,
    /// Proposals where the rate exceeded the step majorant.
    pub majorant_violations: u64,
    /// The run handed over to the hazard-clock sampler near the blow-up.
    pub failover: bool,
}

impl ThinningStats {
    pub fn acceptance_fraction(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// Thinning with a per-step majorant `lambda(max v over the step)`.
pub fn sample_first_jump_thinning(
    model: &ModelSpec,
    part: &Partition,
    x: State,
    kappa: &Kappa,
    rng: &mut Stream,
    horizon: f64,
    ctrl: &Control,
) -> Result<(FirstJump, ThinningStats)> {
    let mut flow = HazardFlow::new(model, part, x, 0.0, kappa, ctrl);
    let mut stats = ThinningStats::default();
    let field = model.field(0.0);
    loop {
        if flow.in_blow_up() {
            // memoryless handover: the rest of the law is a fresh first jump
            let p = flow.point();
            stats.failover = true;
            let mut j = TimeChangeSampler::new(model, kappa, ctrl).sample(p.state, p.t, rng)?;
            j.exp_draw += p.hazard;
            return Ok((j, stats));
        }
        if flow.t() >= horizon {
            return Err(Error::HorizonExceeded(horizon));
        }
        flow.step(horizon)?;
        let Some(Segment::Time(d)) = flow.last_segment().copied() else { continue };
        let vmax = (0..9).map(|k| d.component(d.t0 + d.h * k as f64 / 8.0, 0)).fold(f64::NEG_INFINITY, f64::max);
        let m = field.rate(vmax + 1e-6 * (1.0 + vmax.abs()));
        let mut t = d.t0;
        loop {
            t += rng.exp1() / m;
            if t >= d.t1() {
                break;
            }
            stats.proposals += 1;
            let y = d.eval(t);
            let l = field.rate(y[0]);
            if l > m {
                stats.majorant_violations += 1;
            }
            if rng.uniform() * m <= l {
                stats.accepted += 1;
                let pre = State::new(y[0], y[1]);
                let j = FirstJump { t1: t, pre_state: pre, post_state: reset(model, pre), exp_draw: y[2] };
                return Ok((j, stats));
            }
        }
    }
}

/// Sampler diagnostics CSV `sample_id,T1,v_pre,w_pre,exp_draw`.
pub fn write_samples_csv<W: std::io::Write>(samples: &[FirstJump], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["sample_id", "T1", "v_pre", "w_pre", "exp_draw"])?;
    for (k, s) in samples.iter().enumerate() {
        wtr.serialize((k, s.t1, s.pre_state.v, s.pre_state.w, s.exp_draw))?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_partition;
    use crate::rng::tag;

    fn setup() -> (ModelSpec, Partition) {
        let m = ModelSpec::fig2();
        let p = build_partition(&m, (0.0, 0.0), 1.0).unwrap();
        (m, p)
    }

    #[test]
    fn survival_at_zero() {
        let (m, p) = setup();
        let s = survival(&m, &p, State::new(1.0, 10.0), &Kappa::zero(), 0.0, &Control::default()).unwrap();
        assert_eq!((s.hazard, s.s), (0.0, 1.0));
        let d = jump_density(&m, &p, State::new(1.0, 10.0), &Kappa::zero(), 0.0, &Control::default()).unwrap();
        assert_eq!(d, m.rate(1.0));
    }

    #[test]
    fn survival_vanishes_after_blow_up() {
        let (m, p) = setup();
        let x = State::new(p.v34 + 1.0, p.v34 - 1.0);
        let ctrl = Control::default();
        let k = Kappa::zero();
        let mut flow = HazardFlow::new(&m, &p, x, 0.0, &k, &ctrl);
        while flow.step(10.0).unwrap() {}
        let t_inf = flow.t_inf().unwrap();
        let s = survival(&m, &p, x, &Kappa::zero(), t_inf * 1.01, &ctrl).unwrap();
        assert_eq!(s.s, 0.0);
        assert_eq!(jump_density(&m, &p, x, &Kappa::zero(), t_inf * 1.01, &ctrl).unwrap(), 0.0);
    }

    #[test]
    fn frozen_drift_gives_exponential() {
        let m = ModelSpec::fig2();
        let k = Kappa::zero();
        let s = TimeChangeSampler::new(&m, &k, &Control::default()).freeze_drift().rate_scale(3.0);
        let x = State::new(0.5, 4.0);
        let j = s.run(x, 0.0, 1.7, &[], |_, _| {}).unwrap();
        let want = 1.7 / (3.0 * m.rate(0.5));
        assert!((j.t1 - want).abs() < 1e-9 * want);
        assert_eq!(j.pre_state, x);
        assert_eq!(j.post_state, State::new(1.0, 6.5));
    }

    #[test]
    fn observations_follow_the_flow() {
        let (m, p) = setup();
        let k = Kappa::zero();
        let ctrl = Control::default();
        let s = TimeChangeSampler::new(&m, &k, &ctrl);
        let x = State::new(1.0, 10.0);
        let obs = [0.05, 0.1, 0.2];
        let mut seen = Vec::new();
        let j = s.run(x, 0.0, 5.0, &obs, |i, st| seen.push((i, st))).unwrap();
        for (i, st) in &seen {
            assert!(obs[*i] < j.t1);
            let mut flow = HazardFlow::new(&m, &p, x, 0.0, &k, &ctrl);
            let q = flow.advance_to(obs[*i]).unwrap();
            assert!((q.state.v - st.v).abs() < 1e-6 && (q.state.w - st.w).abs() < 1e-6);
        }
        // E = Lambda(T1)
        let mut flow = HazardFlow::new(&m, &p, x, 0.0, &k, &ctrl);
        let q = flow.advance_to(j.t1).unwrap();
        assert!((q.hazard - 5.0).abs() < 1e-5, "{}", q.hazard);
    }

    #[test]
    fn advance_splits_the_budget() {
        let m = ModelSpec::fig2();
        let k = Kappa::zero();
        let s = TimeChangeSampler::new(&m, &k, &Control::default());
        let x = State::new(1.0, 10.0);
        let whole = s.run(x, 0.0, 2.0, &[], |_, _| {}).unwrap();
        let mut h = 0.0;
        let Advance::Survived { state, hazard } = s.advance(x, 0.0, 2.0, 0.5 * whole.t1, &mut h, &[], |_, _| {}).unwrap() else {
            panic!("jumped early")
        };
        let rest = s.run(state, 0.5 * whole.t1, 2.0 - hazard, &[], |_, _| {}).unwrap();
        assert!((rest.t1 - whole.t1).abs() < 1e-7, "{} {}", rest.t1, whole.t1);
        assert!((rest.pre_state.w - whole.pre_state.w).abs() < 1e-7);
    }

    #[test]
    fn thinning_acceptance_fraction_at_most_one() {
        let (m, p) = setup();
        let k = Kappa::zero();
        let mut rng = Stream::new(3, tag::THINNING, 0);
        for _ in 0..200 {
            let (j, st) = sample_first_jump_thinning(&m, &p, State::new(1.0, 8.0), &k, &mut rng, 1e3, &Control::default()).unwrap();
            assert!(j.t1 > 0.0);
            assert!(st.acceptance_fraction() <= 1.0);
            assert_eq!(st.majorant_violations, 0);
        }
    }

    #[test]
    fn density_bound_is_finite() {
        let (m, p) = setup();
        let b = density_bound(&m, &p, 0.0);
        assert!(b.is_finite() && b >= m.rate(p.v34));
    }
}
