//! Model parameters and the vector field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The convex nonlinearity `F`.
#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    /// `F(v) = e^v - a v + shift`.
    AdEx { a: f64, shift: f64 },
    /// `F(v) = v^4 + 2 a v`.
    Quartic { a: f64 },
    /// `F(v) = sum_k poly[k] v^k + sum_j c_j e^{b_j v}`; convexity is the user's claim.
    Custom { poly: Vec<f64>, exp_terms: Vec<(f64, f64)> },
}

/// The jump rate `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub enum RateFunction {
    /// `lambda(v) = e^{v + K}`.
    Exp { k: f64 },
    /// Monotone table, interpolated linearly in `log lambda` and extrapolated
    /// with the end slopes.
    Tabulated { v: Vec<f64>, rate: Vec<f64> },
}

/// Neuron model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDoc", into = "ModelDoc")]
pub struct ModelSpec {
    pub nonlinearity: Nonlinearity,
    pub i: f64,
    pub v_r: f64,
    pub w_b: f64,
    pub j: f64,
    pub d: f64,
    pub rate: RateFunction,
}

/// A phase-space point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub v: f64,
    pub w: f64,
}

impl State {
    pub const fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }
}

impl ModelSpec {
    /// Canonical two-equilibrium parameter set:
    /// `F(v) = e^v - 5v - 2`, `I = 0`, `v_r = 1`, `w_b = 2.5`, `lambda(v) = e^{v+2}`.
    pub fn fig2() -> Self {
        Self {
            nonlinearity: Nonlinearity::AdEx { a: 5.0, shift: -2.0 },
            i: 0.0,
            v_r: 1.0,
            w_b: 2.5,
            j: 0.0,
            d: 1.0,
            rate: RateFunction::Exp { k: 2.0 },
        }
    }

    /// Quartic model with exponential rate.
    pub fn quartic(a: f64, k: f64) -> Self {
        Self {
            nonlinearity: Nonlinearity::Quartic { a },
            i: 0.0,
            v_r: 1.0,
            w_b: 2.5,
            j: 0.0,
            d: 1.0,
            rate: RateFunction::Exp { k },
        }
    }

    pub fn with_current(&self, i: f64) -> Self {
        Self { i, ..self.clone() }
    }

    pub fn with_coupling(&self, j: f64) -> Self {
        Self { j, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.i, self.v_r, self.w_b, self.j, self.d].iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidModel("parameters must be finite".into()));
        }
        if !(self.w_b > 0.0) {
            return Err(Error::InvalidModel(format!("w_b must be > 0, got {}", self.w_b)));
        }
        if !(self.j >= 0.0) {
            return Err(Error::InvalidModel(format!("J must be >= 0, got {}", self.j)));
        }
        if !(self.d >= 0.0) {
            return Err(Error::InvalidModel(format!("D must be >= 0, got {}", self.d)));
        }
        match &self.nonlinearity {
            Nonlinearity::AdEx { a, shift } if !(a.is_finite() && shift.is_finite()) => {
                return Err(Error::InvalidModel("AdEx a and shift must be finite".into()))
            }
            Nonlinearity::Quartic { a } if !a.is_finite() => {
                return Err(Error::InvalidModel("quartic a must be finite".into()))
            }
            Nonlinearity::Custom { poly, exp_terms } => {
                if poly.iter().chain(exp_terms.iter().flat_map(|(c, b)| [c, b])).any(|x| !x.is_finite()) {
                    return Err(Error::InvalidModel("custom coefficients must be finite".into()));
                }
                if exp_terms.iter().any(|(c, _)| *c < 0.0) {
                    return Err(Error::InvalidModel("custom exponential terms need c >= 0".into()));
                }
            }
            _ => {}
        }
        match &self.rate {
            RateFunction::Exp { k } if !k.is_finite() => return Err(Error::InvalidModel("K must be finite".into())),
            RateFunction::Tabulated { v, rate } => {
                if v.len() < 2 || v.len() != rate.len() {
                    return Err(Error::InvalidModel("rate table needs at least two (v, rate) pairs".into()));
                }
                if v.windows(2).any(|p| !(p[1] > p[0])) {
                    return Err(Error::InvalidModel("rate table abscissae must increase".into()));
                }
                if rate.iter().any(|r| !(*r > 0.0 && r.is_finite())) || rate.windows(2).any(|p| p[1] < p[0]) {
                    return Err(Error::InvalidModel("rate table must be positive and nondecreasing".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Whether the AdEx slope exceeds 3 (`None` for other nonlinearities).
    pub fn adex_slope_above_3(&self) -> Option<bool> {
        match self.nonlinearity {
            Nonlinearity::AdEx { a, .. } => Some(a > 3.0),
            _ => None,
        }
    }

    #[inline]
    pub fn f(&self, v: f64) -> f64 {
        match &self.nonlinearity {
            Nonlinearity::AdEx { a, shift } => v.exp() - a * v + shift,
            Nonlinearity::Quartic { a } => v.powi(4) + 2.0 * a * v,
            Nonlinearity::Custom { poly, exp_terms } => {
                let p = poly.iter().rev().fold(0.0, |acc, c| acc * v + c);
                p + exp_terms.iter().map(|(c, b)| c * (b * v).exp()).sum::<f64>()
            }
        }
    }

    pub fn df(&self, v: f64) -> f64 {
        match &self.nonlinearity {
            Nonlinearity::AdEx { a, .. } => v.exp() - a,
            Nonlinearity::Quartic { a } => 4.0 * v.powi(3) + 2.0 * a,
            Nonlinearity::Custom { poly, exp_terms } => {
                let p = poly.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, c)| acc * v + k as f64 * c);
                p + exp_terms.iter().map(|(c, b)| c * b * (b * v).exp()).sum::<f64>()
            }
        }
    }

    pub fn d2f(&self, v: f64) -> f64 {
        match &self.nonlinearity {
            Nonlinearity::AdEx { .. } => v.exp(),
            Nonlinearity::Quartic { .. } => 12.0 * v * v,
            Nonlinearity::Custom { poly, exp_terms } => {
                let p = poly
                    .iter()
                    .enumerate()
                    .skip(2)
                    .rev()
                    .fold(0.0, |acc, (k, c)| acc * v + (k * (k - 1)) as f64 * c);
                p + exp_terms.iter().map(|(c, b)| c * b * b * (b * v).exp()).sum::<f64>()
            }
        }
    }

    #[inline]
    pub fn rate(&self, v: f64) -> f64 {
        match &self.rate {
            RateFunction::Exp { k } => (v + k).exp(),
            RateFunction::Tabulated { v: xs, rate } => table_rate(xs, rate, v).0,
        }
    }

    pub fn drate(&self, v: f64) -> f64 {
        match &self.rate {
            RateFunction::Exp { k } => (v + k).exp(),
            RateFunction::Tabulated { v: xs, rate } => {
                let (r, slope) = table_rate(xs, rate, v);
                r * slope
            }
        }
    }

    /// Abscissa of the minimum of `F`.
    pub fn argmin_f(&self) -> f64 {
        match &self.nonlinearity {
            Nonlinearity::AdEx { a, .. } if *a > 0.0 => a.ln(),
            Nonlinearity::Quartic { a } => (-0.5 * a).cbrt(),
            _ => {
                // F' is increasing: bisection on a growing bracket
                let (mut lo, mut hi) = (-1.0, 1.0);
                let mut k = 0;
                while self.df(lo) > 0.0 && k < 200 {
                    lo *= 2.0;
                    k += 1;
                }
                while self.df(hi) < 0.0 && k < 400 {
                    hi *= 2.0;
                    k += 1;
                }
                for _ in 0..200 {
                    let m = 0.5 * (lo + hi);
                    if self.df(m) < 0.0 {
                        lo = m;
                    } else {
                        hi = m;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    pub fn min_f(&self) -> f64 {
        self.f(self.argmin_f())
    }

    /// Largest `v` at which `F` and `lambda` stay below 1e200.
    ///
    /// Beyond it the field overflows, so it caps every explosion threshold.
    pub fn finite_ceiling(&self) -> f64 {
        let ok = |v: f64| {
            let f = self.f(v);
            let r = self.rate(v);
            f.is_finite() && f.abs() < 1e200 && r.is_finite() && r < 1e200
        };
        let hi_cap = 1e12;
        if ok(hi_cap) {
            return hi_cap;
        }
        let (mut lo, mut hi) = (0.0, hi_cap);
        if !ok(lo) {
            return lo;
        }
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if ok(m) {
                lo = m;
            } else {
                hi = m;
            }
            if hi - lo < 1e-9 * hi {
                break;
            }
        }
        lo
    }

    /// Field evaluator at effective current `I + kappa`.
    pub fn field(&self, kappa: f64) -> Field<'_> {
        let kind = match (&self.nonlinearity, &self.rate) {
            (Nonlinearity::AdEx { a, shift }, RateFunction::Exp { k }) => Kind::AdExExp { a: *a, shift: *shift, ek: k.exp() },
            (Nonlinearity::Quartic { a }, RateFunction::Exp { k }) => Kind::QuarticExp { a: *a, ek: k.exp() },
            _ => Kind::Generic,
        };
        Field { model: self, kind, current: self.i + kappa }
    }
}

fn table_rate(xs: &[f64], rate: &[f64], v: f64) -> (f64, f64) {
    let n = xs.len();
    let seg = if v <= xs[0] {
        0
    } else if v >= xs[n - 1] {
        n - 2
    } else {
        xs.partition_point(|x| *x <= v).saturating_sub(1).min(n - 2)
    };
    let (x0, x1) = (xs[seg], xs[seg + 1]);
    let (l0, l1) = (rate[seg].ln(), rate[seg + 1].ln());
    let slope = (l1 - l0) / (x1 - x0);
    ((l0 + slope * (v - x0)).exp(), slope)
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    AdExExp { a: f64, shift: f64, ek: f64 },
    QuarticExp { a: f64, ek: f64 },
    Generic,
}

/// Fast evaluator of `(F(v), lambda(v))` with the current folded in.
#[derive(Debug, Clone, Copy)]
pub struct Field<'a> {
    model: &'a ModelSpec,
    kind: Kind,
    /// `I + kappa` for constant kappa; time-dependent parts are added by callers.
    pub current: f64,
}

impl<'a> Field<'a> {
    pub fn model(&self) -> &'a ModelSpec {
        self.model
    }

    /// `(F(v), lambda(v))` sharing one exponential where possible.
    #[inline(always)]
    pub fn f_rate(&self, v: f64) -> (f64, f64) {
        match self.kind {
            Kind::AdExExp { a, shift, ek } => {
                let e = v.exp();
                (e - a * v + shift, e * ek)
            }
            Kind::QuarticExp { a, ek } => {
                let v2 = v * v;
                (v2 * v2 + 2.0 * a * v, v.exp() * ek)
            }
            Kind::Generic => (self.model.f(v), self.model.rate(v)),
        }
    }

    #[inline(always)]
    pub fn rate(&self, v: f64) -> f64 {
        match self.kind {
            Kind::AdExExp { ek, .. } | Kind::QuarticExp { ek, .. } => v.exp() * ek,
            Kind::Generic => self.model.rate(v),
        }
    }

    /// `(dv/dt, dw/dt)` with an additional time-dependent current `extra`.
    #[inline(always)]
    pub fn drift(&self, v: f64, w: f64, extra: f64) -> (f64, f64) {
        let (f, _) = self.f_rate(v);
        (f - w + self.current + extra, v - w)
    }
}

/// JSON shape of [`ModelSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    nonlinearity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shift: Option<f64>,
    #[serde(rename = "I", default)]
    i: f64,
    v_r: f64,
    w_b: f64,
    #[serde(rename = "J", default)]
    j: f64,
    #[serde(rename = "D", default)]
    d: f64,
    rate: String,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    poly: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exp_terms: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    assert_convex: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rate_table: Option<Vec<[f64; 2]>>,
}

impl TryFrom<ModelDoc> for ModelSpec {
    type Error = String;

    fn try_from(d: ModelDoc) -> std::result::Result<Self, String> {
        let nonlinearity = match d.nonlinearity.as_str() {
            "adex" => Nonlinearity::AdEx {
                a: d.a.ok_or("adex needs `a`")?,
                shift: d.shift.unwrap_or(0.0),
            },
            "quartic" => {
                if d.shift.is_some_and(|s| s != 0.0) {
                    return Err("quartic has no `shift`".into());
                }
                Nonlinearity::Quartic { a: d.a.ok_or("quartic needs `a`")? }
            }
            "custom" => {
                if d.assert_convex != Some(true) {
                    return Err("custom nonlinearity requires \"assert_convex\": true".into());
                }
                Nonlinearity::Custom {
                    poly: d.poly.unwrap_or_default(),
                    exp_terms: d.exp_terms.unwrap_or_default().into_iter().map(|[c, b]| (c, b)).collect(),
                }
            }
            other => return Err(format!("unknown nonlinearity `{other}` (adex, quartic, custom)")),
        };
        let rate = match d.rate.as_str() {
            "exp" => RateFunction::Exp { k: d.k.ok_or("exp rate needs `K`")? },
            "tabulated" => {
                let t = d.rate_table.ok_or("tabulated rate needs `rate_table`")?;
                RateFunction::Tabulated { v: t.iter().map(|p| p[0]).collect(), rate: t.iter().map(|p| p[1]).collect() }
            }
            other => return Err(format!("unknown rate `{other}` (exp, tabulated)")),
        };
        let m = ModelSpec { nonlinearity, i: d.i, v_r: d.v_r, w_b: d.w_b, j: d.j, d: d.d, rate };
        m.validate().map_err(|e| e.to_string())?;
        Ok(m)
    }
}

impl From<ModelSpec> for ModelDoc {
    fn from(m: ModelSpec) -> Self {
        let mut d = ModelDoc {
            nonlinearity: String::new(),
            a: None,
            shift: None,
            i: m.i,
            v_r: m.v_r,
            w_b: m.w_b,
            j: m.j,
            d: m.d,
            rate: String::new(),
            k: None,
            poly: None,
            exp_terms: None,
            assert_convex: None,
            rate_table: None,
        };
        match m.nonlinearity {
            Nonlinearity::AdEx { a, shift } => {
                d.nonlinearity = "adex".into();
                d.a = Some(a);
                d.shift = Some(shift);
            }
            Nonlinearity::Quartic { a } => {
                d.nonlinearity = "quartic".into();
                d.a = Some(a);
            }
            Nonlinearity::Custom { poly, exp_terms } => {
                d.nonlinearity = "custom".into();
                d.poly = Some(poly);
                d.exp_terms = Some(exp_terms.into_iter().map(|(c, b)| [c, b]).collect());
                d.assert_convex = Some(true);
            }
        }
        match m.rate {
            RateFunction::Exp { k } => {
                d.rate = "exp".into();
                d.k = Some(k);
            }
            RateFunction::Tabulated { v, rate } => {
                d.rate = "tabulated".into();
                d.rate_table = Some(v.into_iter().zip(rate).map(|(a, b)| [a, b]).collect());
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_uses_model_names() {
        let m = ModelSpec::fig2();
        let s = serde_json::to_string(&m).unwrap();
        for key in ["\"nonlinearity\"", "\"a\"", "\"shift\"", "\"I\"", "\"v_r\"", "\"w_b\"", "\"J\"", "\"D\"", "\"rate\"", "\"K\""] {
            assert!(s.contains(key), "{key} missing in {s}");
        }
        let back: ModelSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_bad_documents() {
        let bad_wb = r#"{"nonlinearity":"adex","a":5,"shift":-2,"I":0,"v_r":1,"w_b":0,"rate":"exp","K":2}"#;
        assert!(serde_json::from_str::<ModelSpec>(bad_wb).is_err());
        let extra = r#"{"nonlinearity":"adex","a":5,"I":0,"v_r":1,"w_b":1,"rate":"exp","K":2,"zzz":1}"#;
        assert!(serde_json::from_str::<ModelSpec>(extra).is_err());
        let custom = r#"{"nonlinearity":"custom","poly":[0,-1,1],"I":0,"v_r":1,"w_b":1,"rate":"exp","K":2}"#;
        assert!(serde_json::from_str::<ModelSpec>(custom).is_err());
    }

    #[test]
    fn field_matches_plain_evaluation() {
        for m in [ModelSpec::fig2(), ModelSpec::quartic(1.0, 2.0)] {
            let fld = m.field(0.3);
            for v in [-3.0, 0.0, 1.5, 4.0] {
                let (f, r) = fld.f_rate(v);
                assert!((f - m.f(v)).abs() <= 1e-12 * (1.0 + f.abs()));
                assert!((r - m.rate(v)).abs() <= 1e-12 * r);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let custom = ModelSpec {
            nonlinearity: Nonlinearity::Custom { poly: vec![1.0, -2.0, 0.5, 0.1], exp_terms: vec![(0.5, 1.2)] },
            ..ModelSpec::fig2()
        };
        for m in [ModelSpec::fig2(), ModelSpec::quartic(1.0, 2.0), custom] {
            for v in [-2.0, 0.5, 2.0] {
                let h = 1e-5;
                let fd = (m.f(v + h) - m.f(v - h)) / (2.0 * h);
                assert!((fd - m.df(v)).abs() < 1e-5 * (1.0 + fd.abs()));
                let fd2 = (m.df(v + h) - m.df(v - h)) / (2.0 * h);
                assert!((fd2 - m.d2f(v)).abs() < 1e-5 * (1.0 + fd2.abs()));
            }
        }
    }

    #[test]
    fn tabulated_rate_is_log_linear() {
        let m = ModelSpec { rate: RateFunction::Tabulated { v: vec![0.0, 1.0], rate: vec![1.0, std::f64::consts::E] }, ..ModelSpec::fig2() };
        assert!((m.rate(0.5) - 0.5f64.exp()).abs() < 1e-12);
        assert!((m.rate(3.0) - 3.0f64.exp()).abs() < 1e-9);
        assert!((m.drate(2.0) - 2.0f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn ceiling_bounds_overflow() {
        let c = ModelSpec::fig2().finite_ceiling();
        assert!(c > 400.0 && c < 470.0, "{c}");
    }
}
