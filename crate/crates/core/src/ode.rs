//! Dormand-Prince 5(4) stepper with continuous output.
//!
//! The stepper works on fixed-size states `[f64; N]` and takes the right-hand
//! side as a closure, so the hot loops of the samplers inline completely.
//! After every accepted step the interpolant of the last step is available
//! through [`Stepper::dense`], which is what event location uses.

use crate::error::{Error, Result};

/// Absolute and relative tolerance of the error controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-10, rel: 1e-8 }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Quartic interpolant over one accepted step.
#[derive(Debug, Clone, Copy)]
pub struct Dense<const N: usize> {
    pub t0: f64,
    pub h: f64,
    r: [[f64; N]; 5],
}

impl<const N: usize> Dense<N> {
    fn empty(t0: f64, y0: [f64; N]) -> Self {
        Self { t0, h: 0.0, r: [y0, [0.0; N], [0.0; N], [0.0; N], [0.0; N]] }
    }

    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn start(&self) -> [f64; N] {
        self.r[0]
    }

    #[inline]
    pub fn eval(&self, t: f64) -> [f64; N] {
        if self.h == 0.0 {
            return self.r[0];
        }
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let mut y = [0.0; N];
        for i in 0..N {
            y[i] = self.r[0][i]
                + th * (self.r[1][i] + th1 * (self.r[2][i] + th * (self.r[3][i] + th1 * self.r[4][i])));
        }
        y
    }

    #[inline]
    pub fn component(&self, t: f64, i: usize) -> f64 {
        if self.h == 0.0 {
            return self.r[0][i];
        }
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        self.r[0][i] + th * (self.r[1][i] + th1 * (self.r[2][i] + th * (self.r[3][i] + th1 * self.r[4][i])))
    }

    /// First root of `g` inside the step, given the signs at both ends differ.
    ///
    /// Illinois regula falsi on the interpolant.
    pub fn locate<G: Fn(f64, &[f64; N]) -> f64>(&self, g: G) -> f64 {
        let (mut a, mut b) = (self.t0, self.t1());
        let mut ga = g(a, &self.eval(a));
        let mut gb = g(b, &self.eval(b));
        if ga == 0.0 {
            return a;
        }
        if gb == 0.0 || ga.signum() == gb.signum() {
            return b;
        }
        let mut side = 0i32;
        for _ in 0..200 {
            let m = if gb != ga { (a * gb - b * ga) / (gb - ga) } else { 0.5 * (a + b) };
            let m = if m <= a || m >= b { 0.5 * (a + b) } else { m };
            let gm = g(m, &self.eval(m));
            if gm == 0.0 {
                return m;
            }
            if gm.signum() == ga.signum() {
                a = m;
                ga = gm;
                if side == -1 {
                    gb *= 0.5;
                }
                side = -1;
            } else {
                b = m;
                gb = gm;
                if side == 1 {
                    ga *= 0.5;
                }
                side = 1;
            }
            if (b - a).abs() <= 4.0 * f64::EPSILON * (a.abs().max(b.abs()).max(1e-300)) {
                break;
            }
        }
        b
    }
}

/// Adaptive stepper state.
#[derive(Debug, Clone)]
pub struct Stepper<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    f: [f64; N],
    h: f64,
    tol: Tolerance,
    dense: Dense<N>,
    pub accepted: usize,
    pub rejected: usize,
}

fn err_norm<const N: usize>(e: &[f64; N], y0: &[f64; N], y1: &[f64; N], tol: Tolerance) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        let sc = tol.abs + tol.rel * y0[i].abs().max(y1[i].abs());
        let q = e[i] / sc;
        s += q * q;
    }
    (s / N as f64).sqrt()
}

fn finite<const N: usize>(y: &[f64; N]) -> bool {
    y.iter().all(|x| x.is_finite())
}

impl<const N: usize> Stepper<N> {
    /// Start at `(t0, y0)`; a non-positive `h0` picks the initial step automatically.
    pub fn new<F>(rhs: &mut F, t0: f64, y0: [f64; N], h0: f64, tol: Tolerance) -> Self
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        let f = rhs(t0, &y0);
        let mut s = Self { t: t0, y: y0, f, h: h0, tol, dense: Dense::empty(t0, y0), accepted: 0, rejected: 0 };
        if !(h0 > 0.0) {
            s.h = s.initial_step(rhs);
        }
        s
    }

    fn initial_step<F>(&self, rhs: &mut F) -> f64
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..N {
            let sc = self.tol.abs + self.tol.rel * self.y[i].abs();
            d0 += (self.y[i] / sc).powi(2);
            d1 += (self.f[i] / sc).powi(2);
        }
        d0 = (d0 / N as f64).sqrt();
        d1 = (d1 / N as f64).sqrt();
        if !d1.is_finite() {
            return 1e-12;
        }
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let mut y1 = [0.0; N];
        for i in 0..N {
            y1[i] = self.y[i] + h0 * self.f[i];
        }
        let f1 = rhs(self.t + h0, &y1);
        let mut d2 = 0.0;
        for i in 0..N {
            let sc = self.tol.abs + self.tol.rel * self.y[i].abs();
            d2 += ((f1[i] - self.f[i]) / sc).powi(2);
        }
        d2 = (d2 / N as f64).sqrt() / h0;
        if !d2.is_finite() {
            return h0 * 1e-3;
        }
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        (100.0 * h0).min(h1)
    }

    pub fn tolerance(&self) -> Tolerance {
        self.tol
    }

    /// Suggested size of the next step.
    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn set_step_size(&mut self, h: f64) {
        self.h = h;
    }

    /// Derivative at the current point.
    pub fn derivative(&self) -> [f64; N] {
        self.f
    }

    /// Interpolant of the last accepted step.
    pub fn dense(&self) -> &Dense<N> {
        &self.dense
    }

    /// Restart from a new state, e.g. after an impulsive kick.
    pub fn restart<F>(&mut self, rhs: &mut F, t: f64, y: [f64; N])
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        self.t = t;
        self.y = y;
        self.f = rhs(t, &y);
        self.dense = Dense::empty(t, y);
    }

    /// Take one accepted step without passing `t_end` (which must exceed `t`).
    pub fn step<F>(&mut self, rhs: &mut F, t_end: f64) -> Result<()>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        let mut h = self.h.min(t_end - self.t);
        let mut last_rejected = false;
        loop {
            let hmin = 1e-15 * self.t.abs().max(1e-3);
            if !(h > hmin) {
                if t_end - self.t <= hmin {
                    h = t_end - self.t;
                } else {
                    return Err(Error::StepUnderflow { t: self.t, h });
                }
            }
            let clamped = self.t + h >= t_end;
            let (t, y, k1) = (self.t, self.y, self.f);
            let mut yt = [0.0; N];
            for i in 0..N {
                yt[i] = y[i] + h * A21 * k1[i];
            }
            let k2 = rhs(t + C2 * h, &yt);
            for i in 0..N {
                yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            let k3 = rhs(t + C3 * h, &yt);
            for i in 0..N {
                yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            let k4 = rhs(t + C4 * h, &yt);
            for i in 0..N {
                yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            let k5 = rhs(t + C5 * h, &yt);
            for i in 0..N {
                yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let k6 = rhs(t + h, &yt);
            let mut y1 = [0.0; N];
            for i in 0..N {
                y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            let t1 = if clamped { t_end } else { t + h };
            let k7 = rhs(t1, &y1);
            let mut e = [0.0; N];
            for i in 0..N {
                e[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            }
            let err = if finite(&y1) && finite(&k7) { err_norm(&e, &y, &y1, self.tol) } else { f64::INFINITY };
            if err <= 1.0 {
                let mut r = [[0.0; N]; 5];
                for i in 0..N {
                    let ydiff = y1[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    r[0][i] = y[i];
                    r[1][i] = ydiff;
                    r[2][i] = bspl;
                    r[3][i] = ydiff - h * k7[i] - bspl;
                    r[4][i] = h
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                self.dense = Dense { t0: t, h: t1 - t, r };
                self.t = t1;
                self.y = y1;
                self.f = k7;
                self.accepted += 1;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                let fac = if last_rejected { fac.min(1.0) } else { fac };
                // a step shortened to land on t_end says nothing about the natural size
                if !clamped || h * fac > self.h {
                    self.h = h * fac;
                }
                return Ok(());
            }
            self.rejected += 1;
            last_rejected = true;
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            h *= fac;
            self.h = h;
        }
    }
}

/// Integrate to `t_end` and return the final state.
pub fn solve_to<F, const N: usize>(rhs: &mut F, t0: f64, y0: [f64; N], t_end: f64, tol: Tolerance) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    if t_end <= t0 {
        return Ok(y0);
    }
    let mut st = Stepper::new(rhs, t0, y0, 0.0, tol);
    while st.t < t_end {
        st.step(rhs, t_end)?;
    }
    Ok(st.y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let mut rhs = |_t: f64, y: &[f64; 1]| [-y[0]];
        let y = solve_to(&mut rhs, 0.0, [1.0], 3.0, Tolerance::new(1e-12, 1e-10)).unwrap();
        assert!((y[0] - (-3.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn harmonic_dense_output() {
        let mut rhs = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let mut st = Stepper::new(&mut rhs, 0.0, [0.0, 1.0], 0.0, Tolerance::new(1e-12, 1e-10));
        let mut worst = 0.0f64;
        while st.t < 10.0 {
            st.step(&mut rhs, 10.0).unwrap();
            let d = st.dense();
            for k in 0..7 {
                let t = d.t0 + d.h * k as f64 / 6.0;
                worst = worst.max((d.component(t, 0) - t.sin()).abs());
            }
        }
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn locates_zero_crossing() {
        let mut rhs = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let mut st = Stepper::new(&mut rhs, 0.0, [0.0, 1.0], 0.0, Tolerance::new(1e-12, 1e-10));
        loop {
            st.step(&mut rhs, 10.0).unwrap();
            if st.y[0] < 0.0 {
                break;
            }
        }
        let t = st.dense().locate(|_, y| y[0]);
        assert!((t - std::f64::consts::PI).abs() < 1e-8);
    }

    #[test]
    fn blow_up_underflows() {
        let mut rhs = |_t: f64, y: &[f64; 1]| [y[0] * y[0]];
        let r = solve_to(&mut rhs, 0.0, [1.0], 2.0, Tolerance::default());
        assert!(matches!(r, Err(Error::StepUnderflow { .. })));
    }
}
