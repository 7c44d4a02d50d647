//! Flow integration with finite-time blow-up.

use super::partition::{Partition, RegionId};
use crate::control::Control;
use crate::current::Kappa;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, State};
use crate::ode::{Dense, Stepper};

/// Sampled orbit.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Estimated explosion time.
    pub blow_up: Option<f64>,
    /// Region transitions `(time, region entered)`; the first entry is the start region at `t0`.
    pub exit_events: Vec<(f64, RegionId)>,
    /// Explosion threshold actually used (`v_explode` capped by overflow).
    pub v_explode: f64,
    /// Interpolants of the time-parametrized part of the orbit.
    pub segments: Vec<Dense<2>>,
}

impl Trajectory {
    pub fn last(&self) -> State {
        *self.states.last().unwrap()
    }

    /// CSV rows `t,v,w,region`.
    pub fn write_csv<W: std::io::Write>(&self, model: &ModelSpec, part: &Partition, kappa: &Kappa, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "v", "w", "region"])?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let r = part.classify(model, *s, model.i + kappa.at(*t));
            wtr.serialize((t, s.v, s.w, r.as_str()))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Smallest `v >= from` with `F(v) >= 1e8`: beyond it the time step of the
/// time-parametrized flow becomes too small to be useful.
pub(crate) fn fast_threshold(model: &ModelSpec, from: f64) -> f64 {
    let target = 1e8;
    let mut hi = from.max(model.argmin_f()) + 1.0;
    while model.f(hi) < target {
        hi = hi * 2.0 + 1.0;
        if hi > 1e12 {
            return hi;
        }
    }
    let mut lo = from.max(model.argmin_f());
    for _ in 0..100 {
        let m = 0.5 * (lo + hi);
        if model.f(m) < target {
            lo = m;
        } else {
            hi = m;
        }
    }
    hi
}

/// Switch and explosion thresholds `(v_switch, v_explode)` in effect.
pub(crate) fn thresholds(model: &ModelSpec, part: &Partition, ctrl: &Control) -> (f64, f64) {
    let ceiling = model.finite_ceiling();
    let v_explode = ctrl.v_explode.min(ceiling);
    let v_switch = ctrl.v_switch.min(fast_threshold(model, part.v34)).min(0.5 * v_explode).max(part.v34);
    (v_switch, v_explode)
}

/// Time left before explosion from `(v_stop, w_stop)`, with `w` frozen and the
/// largest current: `int_{v_stop}^inf dv / (F(v) - w_stop + c)`.
pub fn tail_time(model: &ModelSpec, v_stop: f64, w_stop: f64, c: f64) -> f64 {
    // v = v_stop / s, s in (0, 1], composite Simpson
    let n = 2000;
    let g = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        let v = v_stop / s;
        let den = model.f(v) - w_stop + c;
        let val = v_stop / (s * s * den);
        if val.is_finite() && den > 0.0 {
            val
        } else {
            0.0
        }
    };
    let h = 1.0 / n as f64;
    let mut acc = g(0.0) + g(1.0);
    for k in 1..n {
        let s = k as f64 * h;
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * g(s);
    }
    acc * h / 3.0
}

/// Integrate the flow from `s0` over `t_span`, stopping at explosion.
pub fn integrate(
    model: &ModelSpec,
    part: &Partition,
    s0: State,
    kappa: &Kappa,
    t_span: (f64, f64),
    ctrl: &Control,
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    let (v_switch, v_explode) = thresholds(model, part, ctrl);
    let field = model.field(0.0);
    let mut rhs = |t: f64, y: &[f64; 2]| {
        let (dv, dw) = field.drift(y[0], y[1], kappa.at(t));
        [dv, dw]
    };
    let region = |t: f64, s: State| part.classify(model, s, model.i + kappa.at(t));
    let mut tr = Trajectory {
        times: vec![t0],
        states: vec![s0],
        blow_up: None,
        exit_events: vec![(t0, region(t0, s0))],
        v_explode,
        segments: Vec::new(),
    };
    if !part.contains(s0) {
        return Err(Error::LeftDomain { v: s0.v, w: s0.w });
    }
    let mut st = Stepper::new(&mut rhs, t0, [s0.v, s0.w], 0.0, ctrl.tolerance());
    let mut cur = tr.exit_events[0].1;
    while st.t < t1 {
        if st.accepted > ctrl.max_steps {
            return Err(Error::StepUnderflow { t: st.t, h: st.step_size() });
        }
        st.step(&mut rhs, t1)?;
        let s = State::new(st.y[0], st.y[1]);
        let d = *st.dense();
        tr.segments.push(d);
        if !part.separatrix.is_above(s, ctrl.sep_tol) {
            return Err(Error::LeftDomain { v: s.v, w: s.w });
        }
        let r = region(st.t, s);
        if r != cur {
            // bisect the first change inside the step
            let (mut a, mut b) = (d.t0, st.t);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                let y = d.eval(m);
                if region(m, State::new(y[0], y[1])) == cur {
                    a = m;
                } else {
                    b = m;
                }
            }
            let y = d.eval(b);
            let entered = region(b, State::new(y[0], y[1]));
            tr.exit_events.push((b, entered));
            if entered != r {
                tr.exit_events.push((st.t, r));
            }
            cur = r;
        }
        tr.times.push(st.t);
        tr.states.push(s);
        if s.v > v_switch && cur == RegionId::P4 {
            return finish_in_v(model, kappa, &mut tr, st.t, s, t1, v_explode, ctrl).map(|_| tr);
        }
    }
    Ok(tr)
}

/// Continue in P4 with `v` as the independent variable until `v_explode`.
#[allow(clippy::too_many_arguments)]
fn finish_in_v(
    model: &ModelSpec,
    kappa: &Kappa,
    tr: &mut Trajectory,
    t: f64,
    s: State,
    t1: f64,
    v_explode: f64,
    ctrl: &Control,
) -> Result<()> {
    let i = model.i;
    let mut rhs = |v: f64, y: &[f64; 2]| {
        let den = model.f(v) - y[1] + i + kappa.at(y[0]);
        [1.0 / den, (v - y[1]) / den]
    };
    let mut st = Stepper::new(&mut rhs, s.v, [t, s.w], 0.0, ctrl.tolerance());
    while st.t < v_explode {
        st.step(&mut rhs, v_explode)?;
        if st.y[0] >= t1 {
            let d = *st.dense();
            let v = d.locate(|_, y| y[0] - t1);
            let y = d.eval(v);
            tr.times.push(t1);
            tr.states.push(State::new(v, y[1]));
            return Ok(());
        }
        tr.times.push(st.y[0]);
        tr.states.push(State::new(st.t, st.y[1]));
    }
    let (t_stop, w_stop) = (st.y[0], st.y[1]);
    tr.blow_up = Some(t_stop + tail_time(model, v_explode, w_stop, i + kappa.max()));
    Ok(())
}

/// First hitting times along the `kappa = 0` flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HittingTimes {
    pub tau_v: Option<f64>,
    pub tau_3: Option<f64>,
    pub tau_4: Option<f64>,
}

pub fn hitting_times(model: &ModelSpec, part: &Partition, s0: State, ctrl: &Control) -> Result<HittingTimes> {
    let tr = integrate(model, part, s0, &Kappa::zero(), (0.0, ctrl.t_horizon), ctrl)?;
    let g = |y: &[f64; 2]| model.f(y[0]) - y[1] + model.i;
    let g0 = g(&[s0.v, s0.w]);
    let mut tau_v = if g0.abs() <= 1e-12 * (1.0 + s0.w.abs()) { Some(0.0) } else { None };
    if tau_v.is_none() {
        for d in &tr.segments {
            let a = g(&d.start());
            let b = g(&d.eval(d.t1()));
            if a.signum() != b.signum() || b == 0.0 {
                tau_v = Some(d.locate(|_, y| g(y)));
                break;
            }
        }
    }
    let first = |r: RegionId| tr.exit_events.iter().find(|e| e.1 == r).map(|e| e.0);
    Ok(HittingTimes { tau_v, tau_3: first(RegionId::P3), tau_4: first(RegionId::P4) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{build_partition, equilibria, nullclines};

    fn setup() -> (ModelSpec, Partition) {
        let m = ModelSpec::fig2();
        let p = build_partition(&m, (0.0, 0.0), 1.0).unwrap();
        (m, p)
    }

    #[test]
    fn p4_start_explodes_with_bounded_w() {
        let (m, p) = setup();
        let s0 = State::new(p.v34 + 0.5, p.v34 - 1.0);
        let tr = integrate(&m, &p, s0, &Kappa::zero(), (0.0, 100.0), &Control::default()).unwrap();
        let t_inf = tr.blow_up.expect("explodes");
        assert!(t_inf > 0.0 && t_inf < 1.0);
        assert!(tr.last().v >= tr.v_explode);
        let c = p.increment_bound(&m) - p.w23;
        assert!(tr.last().w <= s0.w + c);
    }

    #[test]
    fn p2_start_never_enters_p4_first() {
        let (m, p) = setup();
        for w0 in [p.w23 + 0.5, p.w23 + 5.0, p.w23 + 30.0] {
            let tr = integrate(&m, &p, State::new(m.v_r, w0), &Kappa::zero(), (0.0, 50.0), &Control::default()).unwrap();
            assert_eq!(tr.exit_events[0].1, RegionId::P2);
            assert!(matches!(tr.exit_events[1].1, RegionId::P3 | RegionId::P1), "{:?}", tr.exit_events);
        }
    }

    #[test]
    fn equilibrium_is_fixed() {
        let (m, p) = setup();
        let v = equilibria(&m, 0.0)[0];
        let tr = integrate(&m, &p, State::new(v, v), &Kappa::zero(), (0.0, 20.0), &Control::default()).unwrap();
        let s = tr.last();
        assert!((s.v - v).abs() < 1e-8 && (s.w - v).abs() < 1e-8);
    }

    #[test]
    fn hitting_times_behave() {
        let (m, p) = setup();
        let ctrl = Control { t_horizon: 50.0, ..Control::default() };
        let mut worst: f64 = 0.0;
        for k in 0..20 {
            let w0 = p.w23 + 1.0 + 5.0 * k as f64;
            let h = hitting_times(&m, &p, State::new(m.v_r, w0), &ctrl).unwrap();
            worst = worst.max(h.tau_v.unwrap());
        }
        assert!(worst < 10.0);
        // a trapped P3 start: the stable node itself
        let v = equilibria(&m, 0.0)[0];
        let h = hitting_times(&m, &p, State::new(v + 0.01, v), &ctrl).unwrap();
        assert_eq!(h.tau_4, None);
        // on the v-nullcline
        let w = 2.0;
        let vm = nullclines(&m, w, 0.0).unwrap().v_minus.unwrap();
        let h = hitting_times(&m, &p, State::new(vm, w), &ctrl).unwrap();
        assert_eq!(h.tau_v, Some(0.0));
    }

    #[test]
    fn explosion_time_stable_under_threshold_change() {
        let m = ModelSpec::quartic(1.0, 2.0);
        let p = build_partition(&m, (0.0, 0.0), 1.0).unwrap();
        let s0 = State::new(p.v34 + 0.5, 0.0);
        let c1 = Control::default();
        let c2 = Control { v_explode: 5e5, ..c1 };
        let t1 = integrate(&m, &p, s0, &Kappa::zero(), (0.0, 10.0), &c1).unwrap().blow_up.unwrap();
        let t2 = integrate(&m, &p, s0, &Kappa::zero(), (0.0, 10.0), &c2).unwrap().blow_up.unwrap();
        assert!((t1 - t2).abs() < 10.0 * c1.abs_tol, "{t1} {t2}");
    }
}
