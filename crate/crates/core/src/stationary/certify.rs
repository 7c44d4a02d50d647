use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GridMeasure, KernelMatrix};
use crate::control::Control;
use crate::dynamics::Partition;
use crate::error::Result;
use crate::model::ModelSpec;
use crate::pdmp::run_embedded_chain;
use crate::rng::{tag, Stream};

/// Overlaps below this count as zero.
const BETA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Certificate {
    Lyapunov(LyapunovCertificate),
    Doeblin(DoeblinCertificate),
    TailExponent(TailFit),
    TvDecay(TvDecayCertificate),
}

impl Certificate {
    pub fn pass(&self) -> bool {
        match self {
            Certificate::Lyapunov(c) => c.pass,
            Certificate::Doeblin(c) => c.pass,
            Certificate::TailExponent(c) => c.pass,
            Certificate::TvDecay(c) => c.pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    /// Exponent of `V(w) = exp(r w)`; the largest passing one from the sweep.
    pub r: f64,
    pub gamma: f64,
    pub k: f64,
    pub pass: bool,
    /// `(r, gamma)` for every candidate.
    pub sweep: Vec<(f64, f64)>,
    /// Nodes where the drift factor is `>= 1` for the reported `r`.
    pub violating: Vec<f64>,
    pub evidence: String,
}

/// Drift inequality `U V <= gamma V + K` with `V = exp(r w)`.
///
/// Above `w23` the orbit either jumps before reaching P3, in which case the
/// pre-jump `w` is below `w0`, or it reaches P3 and the pre-jump `w` is
/// bounded. So `gamma = exp(r w_b) sup_{w0 > w23} P(T1 < tau3(w0))`, and `K`
/// is the smallest constant that makes the inequality hold at every node.
pub fn verify_lyapunov(kernel: &KernelMatrix, part: &Partition, r_candidates: &[f64]) -> LyapunovCertificate {
    let g = &kernel.grid;
    let jump_first: Vec<(f64, f64)> = kernel
        .rows
        .iter()
        .filter(|row| row.w0 > part.w23)
        .map(|row| (row.w0, 1.0 - row.survival_to_p3))
        .collect();
    let sup = jump_first.iter().map(|x| x.1).fold(0.0, f64::max);
    let mut sweep = Vec::new();
    let mut best: Option<LyapunovCertificate> = None;
    let mut worst: Option<LyapunovCertificate> = None;
    for &r in r_candidates.iter().filter(|r| **r > 0.0) {
        let scale = (r * kernel.w_b).exp();
        let gamma = scale * sup;
        sweep.push((r, gamma));
        // measure V relative to exp(r w*) to keep it finite on long grids
        let v = |w: f64| (r * (w - g.w0)).exp();
        let k = kernel
            .rows
            .iter()
            .map(|row| {
                let uv: f64 = row.mass.iter().enumerate().map(|(k, m)| m * v(g.center(row.first + k) + kernel.w_b)).sum();
                (uv - gamma * v(row.w0)).max(0.0)
            })
            .fold(0.0, f64::max)
            * (r * g.w0).exp();
        let violating: Vec<f64> = jump_first.iter().filter(|x| scale * x.1 >= 1.0).map(|x| x.0).collect();
        let pass = gamma < 1.0 && k.is_finite();
        let cert = LyapunovCertificate {
            r,
            gamma,
            k,
            pass,
            sweep: Vec::new(),
            violating,
            evidence: format!("sup P(T1 < tau3) = {sup:.6} over {} nodes above w23", jump_first.len()),
        };
        if pass {
            best = Some(cert);
        } else if worst.is_none() {
            worst = Some(cert);
        }
    }
    let mut cert = best.or(worst).unwrap_or(LyapunovCertificate {
        r: 0.0,
        gamma: f64::NAN,
        k: f64::NAN,
        pass: false,
        sweep: Vec::new(),
        violating: Vec::new(),
        evidence: "no positive candidate".into(),
    });
    cert.sweep = sweep;
    cert
}

/// `n` exponents spread logarithmically over `[lo, hi]`.
pub fn log_sweep(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1).max(1) as f64)).collect()
}

/// Regression of `log mu(w, inf)` against `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub slope: f64,
    pub slope_se: f64,
    pub r2: f64,
    /// First `w` used in the fit and the fitted tail mass there.
    pub w_ref: f64,
    pub tail_at_ref: f64,
    pub points: usize,
    pub pass: bool,
    pub evidence: String,
}

impl TailFit {
    /// Whether the fitted decay is at least as fast as `exp(-r w)` up to
    /// two standard errors.
    pub fn consistent_with(&self, r: f64) -> bool {
        self.slope <= -r + 2.0 * self.slope_se
    }
}

/// Fit over the cell edges where the tail mass is between `1e-12` and `1e-2`.
pub fn fit_tail(mu: &GridMeasure) -> TailFit {
    let g = &mu.grid;
    let mut tail = vec![0.0; g.n + 1];
    for i in (0..g.n).rev() {
        tail[i] = tail[i + 1] + mu.mass[i];
    }
    let pts: Vec<(f64, f64)> =
        (0..g.n).filter(|i| tail[*i] <= 1e-2 && tail[*i] >= 1e-12).map(|i| (g.edge(i), tail[i].ln())).collect();
    let fit = linear_fit(&pts);
    let pass = fit.slope < 0.0 && fit.r2 > 0.95;
    TailFit {
        slope: fit.slope,
        slope_se: fit.se,
        r2: fit.r2,
        w_ref: pts.first().map_or(f64::NAN, |p| p.0),
        tail_at_ref: pts.first().map_or(f64::NAN, |p| (fit.intercept + fit.slope * p.0).exp()),
        points: pts.len(),
        pass,
        evidence: format!("{} edges with tail mass in [1e-12, 1e-2]", pts.len()),
    }
}

pub(crate) struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub se: f64,
    pub r2: f64,
}

/// Least squares `y = a + b x` with the standard error of `b`.
pub(crate) fn linear_fit(pts: &[(f64, f64)]) -> LinearFit {
    let n = pts.len() as f64;
    if pts.len() < 3 {
        return LinearFit { slope: f64::NAN, intercept: f64::NAN, se: f64::NAN, r2: f64::NAN };
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let se = (sse / (n - 2.0) / sxx).sqrt();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LinearFit { slope, intercept, se, r2 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoeblinCertificate {
    /// Smallest `k` with a positive overlap over all rows.
    pub k: Option<usize>,
    pub beta: f64,
    /// `(k, beta over rows with w0 <= 2 w23, beta over all rows)`.
    pub profile: Vec<(usize, f64, f64)>,
    /// Cell centers and masses of the minorizing measure (unnormalized
    /// column minima of `P^k`).
    pub reference: Vec<(f64, f64)>,
    pub pass: bool,
    pub evidence: String,
}

/// Overlaps `sum_j min_i P^k[i][j]` of the matrix powers of the post-jump
/// chain for `k = 1..=k_max`.
pub fn estimate_doeblin(kernel: &KernelMatrix, part: &Partition, k_max: usize) -> DoeblinCertificate {
    let p = kernel.dense_transition();
    let n = p.len();
    let local: Vec<usize> = (0..n).filter(|i| kernel.rows[*i].w0 <= 2.0 * part.w23).collect();
    let mut pk = p.clone();
    let mut profile = Vec::new();
    let mut found: Option<(usize, f64, Vec<f64>)> = None;
    for k in 1..=k_max {
        if k > 1 {
            pk = matmul(&pk, &p);
        }
        let col_min = |rows: &[usize]| -> Vec<f64> {
            (0..n).map(|j| rows.iter().map(|i| pk[*i][j]).fold(f64::INFINITY, f64::min)).collect()
        };
        let all: Vec<usize> = (0..n).collect();
        let mins = col_min(&all);
        let beta_local: f64 = col_min(&local).iter().sum();
        let beta: f64 = mins.iter().sum();
        profile.push((k, beta_local, beta));
        if found.is_none() && beta > BETA_FLOOR {
            found = Some((k, beta, mins));
        }
    }
    match found {
        Some((k, beta, mins)) => DoeblinCertificate {
            k: Some(k),
            beta,
            reference: mins.iter().enumerate().map(|(j, m)| (kernel.grid.center(j), *m)).collect(),
            pass: mins.iter().all(|m| *m >= 0.0),
            evidence: format!("{n} rows, {} with w0 <= 2 w23", local.len()),
            profile,
        },
        None => DoeblinCertificate {
            k: None,
            beta: 0.0,
            reference: Vec::new(),
            pass: false,
            evidence: format!("no overlap above {BETA_FLOOR} up to k = {k_max}"),
            profile,
        },
    }
}

/// Row `i` of `P^k`.
pub fn transition_power_row(kernel: &KernelMatrix, i: usize, k: usize) -> Vec<f64> {
    let mut mu = vec![0.0; kernel.n()];
    mu[i] = 1.0;
    for _ in 0..k {
        mu = kernel.step(&mu).0;
    }
    mu
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = b[0].len();
    a.par_iter()
        .map(|row| {
            let mut out = vec![0.0; n];
            for (k, x) in row.iter().enumerate() {
                if *x != 0.0 {
                    out.iter_mut().zip(&b[k]).for_each(|(o, y)| *o += x * y);
                }
            }
            out
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvDecayCertificate {
    pub w_pair: (f64, f64),
    pub n_paths: usize,
    /// Histogram total-variation distance after each step.
    pub distance: Vec<f64>,
    /// Distance expected between two samples of one law at this size.
    pub noise_floor: Vec<f64>,
    pub ratio: f64,
    /// 95% band of the fitted ratio.
    pub band: (f64, f64),
    pub fit_points: usize,
    pub pass: bool,
    pub evidence: String,
}

impl TvDecayCertificate {
    /// `ratio^(2k) <= 1 - beta (1 - eps)` for a Doeblin pair `(k, beta)`.
    pub fn consistent_with(&self, k: usize, beta: f64, eps: f64) -> bool {
        self.ratio.powi(2 * k as i32) <= 1.0 - beta * (1.0 - eps)
    }
}

/// Two empirical laws of the post-jump chain started from `w_pair`,
/// compared step by step on common quantile bins.
pub fn tv_decay(
    model: &ModelSpec,
    w_pair: (f64, f64),
    n_steps: usize,
    n_paths: usize,
    n_bins: usize,
    seed: u64,
    ctrl: &Control,
) -> Result<TvDecayCertificate> {
    let run = |start: usize, w0: f64| -> Result<Vec<Vec<f64>>> {
        let paths: Vec<Vec<f64>> = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let mut rng = Stream::new(seed, tag::TV, (start * n_paths + p) as u64);
                let mut ws = Vec::with_capacity(n_steps);
                run_embedded_chain(model, w0, n_steps, &mut rng, ctrl, |_, w, _| ws.push(w))?;
                Ok(ws)
            })
            .collect::<Result<_>>()?;
        Ok((0..n_steps).map(|s| paths.iter().map(|p| p[s]).collect()).collect())
    };
    let a = run(0, w_pair.0)?;
    let b = run(1, w_pair.1)?;
    let mut distance = Vec::with_capacity(n_steps);
    let mut noise_floor = Vec::with_capacity(n_steps);
    for s in 0..n_steps {
        let (d, floor) = histogram_tv(&a[s], &b[s], n_bins);
        distance.push(d);
        noise_floor.push(floor);
    }
    let pts: Vec<(f64, f64)> = distance
        .iter()
        .zip(&noise_floor)
        .enumerate()
        .filter(|(_, (d, f))| **d > 3.0 * **f)
        .map(|(s, (d, _))| ((s + 1) as f64, d.ln()))
        .collect();
    let fit = linear_fit(&pts);
    let ratio = fit.slope.exp();
    let band = ((fit.slope - 1.96 * fit.se).exp(), (fit.slope + 1.96 * fit.se).exp());
    Ok(TvDecayCertificate {
        w_pair,
        n_paths,
        ratio,
        band,
        fit_points: pts.len(),
        pass: band.1 < 1.0,
        evidence: format!("{} of {n_steps} steps above three times the noise floor", pts.len()),
        distance,
        noise_floor,
    })
}

/// Total variation between the histograms of `a` and `b` on bins at the
/// quantiles of their union, and the distance expected from sampling noise.
pub fn histogram_tv(a: &[f64], b: &[f64], n_bins: usize) -> (f64, f64) {
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..n_bins).map(|k| all[k * all.len() / n_bins]).collect();
    edges.dedup();
    let count = |xs: &[f64]| {
        let mut c = vec![0usize; edges.len() + 1];
        for x in xs {
            c[edges.partition_point(|e| e <= x)] += 1;
        }
        c
    };
    let (ca, cb) = (count(a), count(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut tv = 0.0;
    let mut floor = 0.0;
    for (x, y) in ca.iter().zip(&cb) {
        let (p, q) = (*x as f64 / na, *y as f64 / nb);
        tv += 0.5 * (p - q).abs();
        let m = 0.5 * (p + q);
        // E|p - q| for two samples of one law, normal approximation
        floor += 0.5 * (2.0 / std::f64::consts::PI * m * (1.0 - m) * (1.0 / na + 1.0 / nb)).sqrt();
    }
    (tv, floor)
}
