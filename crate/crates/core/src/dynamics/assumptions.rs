//! Executable versions of the standing assumptions on `F` and `lambda`.
//!
//! Every limit at infinity is judged from the trend over the last tenth of
//! the sampling window; a non-monotone trend gives `Inconclusive`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub verdict: Verdict,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<Check>,
    /// Largest current the kappa-dependent checks were run with.
    pub kappa_max: f64,
    pub v_window: (f64, f64),
    /// Growth exponent margin of `F` over `v^2`; `None` on the exponential branch.
    pub epsilon_f: Option<f64>,
    /// `(alpha, sup_v lambda'(F + alpha) - lambda^2)` pairs.
    pub c_lambda: Vec<(f64, f64)>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.verdict == Verdict::Pass)
    }

    pub fn verdict(&self, name: &str) -> Option<Verdict> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.verdict)
    }

    /// `C_lambda` for the largest `alpha` checked.
    pub fn c_lambda_max(&self) -> f64 {
        self.c_lambda.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Trend of a sequence sampled over the tail of the window.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Trend {
    Increasing,
    Decreasing,
    Flat,
    Mixed,
}

fn trend(xs: &[f64]) -> Trend {
    let (first, last) = (xs[0], xs[xs.len() - 1]);
    let scale = xs.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
    if xs.iter().all(|x| (x - first).abs() <= 1e-7 * scale) {
        return Trend::Flat;
    }
    let slack = 1e-12 * scale;
    if xs.windows(2).all(|p| p[1] >= p[0] - slack) && last > first {
        Trend::Increasing
    } else if xs.windows(2).all(|p| p[1] <= p[0] + slack) && last < first {
        Trend::Decreasing
    } else {
        Trend::Mixed
    }
}

/// Run all checks on `grid_n` points of `v_window`.
pub fn check_assumptions(model: &ModelSpec, kappa_max: f64, v_window: (f64, f64), grid_n: usize) -> Result<AssumptionReport> {
    let (lo, hi) = v_window;
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidWindow(lo, hi));
    }
    if grid_n < 100 {
        return Err(Error::InvalidArgument(format!("grid_n must be >= 100, got {grid_n}")));
    }
    let grid: Vec<f64> = (0..grid_n).map(|k| lo + (hi - lo) * k as f64 / (grid_n - 1) as f64).collect();
    let tail = (grid_n / 10).max(5);
    let right = &grid[grid_n - tail..];
    let left = &grid[..tail];
    let mut checks = Vec::new();

    // A1(i): strict convexity on the grid and lim F' < -3 at -infinity
    let h = grid[1] - grid[0];
    // second differences drown in roundoff where F is nearly linear, so the
    // analytic second derivative is checked instead
    // (isolated zeros such as v^4 at the origin are allowed)
    let d2: Vec<f64> = grid.iter().map(|v| model.d2f(*v)).collect();
    let convex = d2.iter().all(|x| *x >= 0.0) && d2.windows(2).all(|p| p[0] > 0.0 || p[1] > 0.0);
    let dl: Vec<f64> = left.iter().rev().map(|v| model.df(*v)).collect();
    let fp_lo = model.df(lo);
    let lim = if fp_lo < -3.0 {
        // F' increases, so its limit lies below F'(lo)
        Verdict::Pass
    } else {
        match trend(&dl) {
            Trend::Flat | Trend::Increasing => Verdict::Fail,
            _ => Verdict::Inconclusive,
        }
    };
    let v1 = if convex { Verdict::Pass } else { Verdict::Fail };
    checks.push(Check {
        name: "A1(i)".into(),
        verdict: v1.and(lim),
        evidence: format!("F'' > 0 on the grid: {convex}; F'({lo}) = {fp_lo:.6} (step {h:.3e})"),
    });

    // A1(ii): growth faster than v^(2+eps), from the log-derivative e(v) = v F'/F
    let mut epsilon_f = None;
    let a1ii = if hi <= 0.0 || model.f(hi) <= 0.0 {
        Check { name: "A1(ii)".into(), verdict: Verdict::Inconclusive, evidence: "window does not reach F > 0".into() }
    } else {
        let e: Vec<f64> = right.iter().map(|v| v * model.df(*v) / model.f(*v)).collect();
        let (v_a, v_b) = (right[0], right[right.len() - 1]);
        let (e_a, e_b) = (e[0], e[e.len() - 1]);
        // e(v) ~ p + c/v for polynomial growth
        let p = (e_b * v_b - e_a * v_a) / (v_b - v_a);
        let tr = trend(&e);
        let (verdict, ev) = if tr == Trend::Increasing && e_b > 3.0 && (e_b - e_a) > 0.05 * e_a {
            (Verdict::Pass, format!("exponential branch: v F'/F grows from {e_a:.3} to {e_b:.3}"))
        } else if tr == Trend::Mixed {
            (Verdict::Inconclusive, "log-derivative not monotone over the last decade".to_string())
        } else if p > 2.0 + 1e-2 {
            epsilon_f = Some(p - 2.0);
            (Verdict::Pass, format!("polynomial growth exponent ~ {p:.4}"))
        } else {
            (Verdict::Fail, format!("growth exponent ~ {p:.4} <= 2"))
        };
        Check { name: "A1(ii)".into(), verdict, evidence: ev }
    };
    checks.push(a1ii);

    // v1: beyond the largest zero of F
    let m = model.argmin_f();
    let fz = if model.f(m) >= 0.0 {
        m
    } else {
        let (mut a, mut b) = (m, m + 1.0);
        while model.f(b) <= 0.0 && b < 1e9 {
            b = m + 2.0 * (b - m);
        }
        for _ in 0..200 {
            let c = 0.5 * (a + b);
            if model.f(c) <= 0.0 {
                a = c;
            } else {
                b = c;
            }
        }
        b
    };
    let v1_start = fz.max(lo) + 1e-3 * (hi - lo);
    if v1_start >= hi {
        for name in ["A2", "A3", "A4", "A5"] {
            checks.push(Check { name: name.into(), verdict: Verdict::Inconclusive, evidence: "window ends before F > 0".into() });
        }
    } else {
        let n = grid_n.max(2000);
        let vs: Vec<f64> = (0..n).map(|k| v1_start + (hi - v1_start) * k as f64 / (n - 1) as f64).collect();
        let tail_n = (n / 10).max(5);

        // A2: positive, nondecreasing rate with divergent int lambda/F
        let rates: Vec<f64> = grid.iter().map(|v| model.rate(*v)).collect();
        let monotone = rates.iter().all(|r| *r > 0.0) && rates.windows(2).all(|p| p[1] >= p[0]);
        let g: Vec<f64> = vs.iter().map(|v| model.rate(*v) / model.f(*v)).collect();
        let partial = trapz(&vs, &g);
        let q: Vec<f64> = vs[n - tail_n..].iter().zip(&g[n - tail_n..]).map(|(v, g)| v * g).collect();
        let slope = local_log_slope(&vs[n - tail_n..], &g[n - tail_n..]);
        let threshold = 10.0;
        let a2 = if !monotone {
            Verdict::Fail
        } else {
            match trend(&q) {
                Trend::Increasing | Trend::Flat if partial >= threshold => Verdict::Pass,
                Trend::Decreasing if slope < -1.05 => Verdict::Fail,
                _ => Verdict::Inconclusive,
            }
        };
        checks.push(Check {
            name: "A2".into(),
            verdict: a2,
            evidence: format!(
                "rate positive and nondecreasing: {monotone}; int_{{{v1_start:.3}}}^{{{hi}}} lambda/F = {partial:.4e} (threshold {threshold}); tail log-slope {slope:.3}"
            ),
        });

        // A3/A4/A5 for kappa in {0, kappa_max}
        let mut v3 = Verdict::Pass;
        let mut v4 = Verdict::Pass;
        let mut v5 = Verdict::Pass;
        let mut ev3 = Vec::new();
        let mut ev5 = Vec::new();
        for kappa in [0.0, kappa_max] {
            let integrand: Vec<f64> = vs.iter().map(|v| model.rate(*v) / (model.f(*v) + kappa)).collect();
            let cum = cumtrapz(&vs, &integrand);
            let lg1: Vec<f64> = vs.iter().zip(&cum).map(|(v, c)| model.rate(*v).ln() - c).collect();
            let lg2: Vec<f64> = vs.iter().zip(&cum).map(|(v, c)| 2.0 * model.rate(*v).ln() - c).collect();
            let t1 = &lg1[n - tail_n..];
            let t2 = &lg2[n - tail_n..];
            let sup1 = lg1.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let b3 = bounded(t1);
            v3 = v3.and(b3);
            let b4 = match trend(t1) {
                Trend::Decreasing if t1[t1.len() - 1] < sup1 - 3.0_f64.ln() * 3.0 => Verdict::Pass,
                Trend::Flat => Verdict::Fail,
                Trend::Increasing => Verdict::Fail,
                _ => Verdict::Inconclusive,
            };
            v4 = v4.and(b4);
            v5 = v5.and(bounded(t2));
            ev3.push(format!("kappa={kappa}: log(lambda e^-int) from {:.3} to {:.3}", t1[0], t1[t1.len() - 1]));
            ev5.push(format!("kappa={kappa}: log(lambda^2 e^-int) from {:.3} to {:.3}", t2[0], t2[t2.len() - 1]));
        }
        checks.push(Check { name: "A3".into(), verdict: v3, evidence: ev3.join("; ") });
        checks.push(Check { name: "A4".into(), verdict: v4, evidence: ev3.join("; ") });
        checks.push(Check { name: "A5".into(), verdict: v5, evidence: ev5.join("; ") });
    }

    // A6: sup of lambda'(F + alpha) - lambda^2
    let mut c_lambda = Vec::new();
    let mut v6 = Verdict::Pass;
    let mut ev6 = Vec::new();
    for alpha in [0.0, kappa_max] {
        let vals: Vec<f64> = grid.iter().map(|v| model.drate(*v) * (model.f(*v) + alpha) - model.rate(*v).powi(2)).collect();
        let sup = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let r = &vals[grid_n - tail..];
        let l: Vec<f64> = vals[..tail].iter().rev().cloned().collect();
        let outward_ok = |xs: &[f64]| matches!(trend(xs), Trend::Decreasing | Trend::Flat);
        let verdict = if !sup.is_finite() {
            Verdict::Fail
        } else if outward_ok(r) && outward_ok(&l) {
            Verdict::Pass
        } else if trend(r) == Trend::Increasing && r[r.len() - 1] > 0.0 {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        };
        v6 = v6.and(verdict);
        c_lambda.push((alpha, sup.max(0.0)));
        ev6.push(format!("alpha={alpha}: sup = {sup:.4e}"));
    }
    checks.push(Check { name: "A6".into(), verdict: v6, evidence: ev6.join("; ") });

    Ok(AssumptionReport { checks, kappa_max, v_window, epsilon_f, c_lambda })
}

fn bounded(log_tail: &[f64]) -> Verdict {
    match trend(log_tail) {
        Trend::Decreasing | Trend::Flat => Verdict::Pass,
        Trend::Increasing => Verdict::Fail,
        Trend::Mixed => Verdict::Inconclusive,
    }
}

fn local_log_slope(v: &[f64], g: &[f64]) -> f64 {
    let (a, b) = (0, v.len() - 1);
    if g[a] <= 0.0 || g[b] <= 0.0 || v[a] <= 0.0 {
        return f64::NAN;
    }
    (g[b].ln() - g[a].ln()) / (v[b].ln() - v[a].ln())
}

fn trapz(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
}

fn cumtrapz(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..x.len() {
        acc += 0.5 * (x[k] - x[k - 1]) * (y[k] + y[k - 1]);
        out.push(acc);
    }
    out
}
