use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::control::Control;
use crate::current::{Kappa, KappaPath};
use crate::dynamics::Partition;
use crate::error::{Error, Result};
use crate::meanfield::MkvConfig;
use crate::model::ModelSpec;
use crate::network::NetworkConfig;
use crate::pdmp::InitialLaw;
use crate::stationary::PlaneGrid;

/// The whole run configuration; every block has defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub seed: Option<u64>,
    pub threads: Threads,
    pub output_dir: PathBuf,
    pub control: Control,
    pub check: CheckConfig,
    pub simulate: SimulateConfig,
    pub network: NetworkDoc,
    pub mkv: MkvDoc,
    pub stationary: StationaryConfig,
    pub certify: CertifyConfig,
    pub continuation: ContinuationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::fig2(),
            seed: None,
            threads: Threads::Auto,
            output_dir: PathBuf::from("out"),
            control: Control::default(),
            check: CheckConfig::default(),
            simulate: SimulateConfig::default(),
            network: NetworkDoc::default(),
            mkv: MkvDoc::default(),
            stationary: StationaryConfig::default(),
            certify: CertifyConfig::default(),
            continuation: ContinuationConfig::default(),
        }
    }
}

/// A thread count or `"auto"` (the `MKV_NEURO_THREADS` variable, else all cores).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Value", into = "Value")]
pub enum Threads {
    Auto,
    Count(usize),
}

impl Threads {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Threads::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Threads::Count(n)),
            _ => Err(Error::Config(format!("threads must be a positive count or \"auto\", got {s:?}"))),
        }
    }

    pub fn resolve(&self) -> Result<usize> {
        match self {
            Threads::Count(n) => Ok(*n),
            Threads::Auto => match std::env::var("MKV_NEURO_THREADS") {
                Ok(s) => match Threads::parse(s.trim())? {
                    Threads::Count(n) => Ok(n),
                    Threads::Auto => Ok(0),
                },
                // 0 lets rayon pick
                Err(_) => Ok(0),
            },
        }
    }
}

impl TryFrom<Value> for Threads {
    type Error = String;

    fn try_from(v: Value) -> std::result::Result<Self, String> {
        match &v {
            Value::String(s) => Threads::parse(s).map_err(|e| e.to_string()),
            Value::Number(n) => match n.as_u64() {
                Some(k) if k > 0 => Ok(Threads::Count(k as usize)),
                _ => Err(format!("threads must be a positive integer, got {n}")),
            },
            _ => Err("threads must be a positive count or \"auto\"".into()),
        }
    }
}

impl From<Threads> for Value {
    fn from(t: Threads) -> Value {
        match t {
            Threads::Auto => Value::String("auto".into()),
            Threads::Count(n) => Value::from(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub kappa_max: f64,
    pub v_window: (f64, f64),
    pub grid_n: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { kappa_max: 10.0, v_window: (-30.0, 30.0), grid_n: 4000 }
    }
}

/// A constant current or the knots of a piecewise-linear one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KappaDoc {
    Constant(f64),
    Path { times: Vec<f64>, values: Vec<f64> },
}

impl KappaDoc {
    pub fn to_kappa(&self) -> Result<Kappa> {
        match self {
            KappaDoc::Constant(k) if *k >= 0.0 && k.is_finite() => Ok(Kappa::Constant(*k)),
            KappaDoc::Constant(k) => Err(Error::Config(format!("kappa must be finite and >= 0, got {k}"))),
            KappaDoc::Path { times, values } => {
                let ok = !times.is_empty()
                    && times.len() == values.len()
                    && times.windows(2).all(|p| p[1] > p[0])
                    && values.iter().all(|v| *v >= 0.0 && v.is_finite());
                if !ok {
                    return Err(Error::Config("kappa path needs increasing times and matching nonnegative values".into()));
                }
                Ok(Kappa::PiecewiseLinear(std::sync::Arc::new(KappaPath::new(times.clone(), values.clone()))))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub init: InitialLaw,
    pub kappa: KappaDoc,
    pub horizon: f64,
    /// Independent first-jump draws written to `first_jumps.csv` (0 skips it).
    pub first_jumps: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { init: InitialLaw::Point { v: 1.0, w: 6.0 }, kappa: KappaDoc::Constant(0.0), horizon: 10.0, first_jumps: 0 }
    }
}

fn reset_line_law() -> InitialLaw {
    InitialLaw::Uniform { v: (1.0, 1.0), w: (2.0, 12.0) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkDoc {
    #[serde(rename = "N")]
    pub n: usize,
    pub horizon: f64,
    /// Overrides the top-level seed.
    pub seed: Option<u64>,
    pub bin: f64,
    pub mu0: InitialLaw,
    pub kick_batch: f64,
    pub allow_zero_delay: bool,
    pub watchdog: f64,
}

impl Default for NetworkDoc {
    fn default() -> Self {
        let c = NetworkConfig::default();
        Self {
            n: c.n,
            horizon: c.horizon,
            seed: None,
            bin: 0.1,
            mu0: reset_line_law(),
            kick_batch: c.kick_batch,
            allow_zero_delay: c.allow_zero_delay,
            watchdog: c.watchdog,
        }
    }
}

impl NetworkDoc {
    pub fn to_config(&self, seed: u64) -> NetworkConfig {
        NetworkConfig {
            n: self.n,
            horizon: self.horizon,
            seed: self.seed.unwrap_or(seed),
            kick_batch: self.kick_batch,
            allow_zero_delay: self.allow_zero_delay,
            watchdog: self.watchdog,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MkvDoc {
    #[serde(rename = "M")]
    pub copies: usize,
    pub horizon: f64,
    pub nodes_per_block: usize,
    pub mu0: InitialLaw,
}

impl Default for MkvDoc {
    fn default() -> Self {
        let c = MkvConfig::default();
        Self { copies: c.copies, horizon: c.horizon, nodes_per_block: c.nodes_per_block, mu0: reset_line_law() }
    }
}

impl MkvDoc {
    pub fn to_config(&self, seed: u64) -> MkvConfig {
        MkvConfig { copies: self.copies, horizon: self.horizon, seed, nodes_per_block: self.nodes_per_block }
    }
}

/// Node grid of the plane lift; `w` defaults to `[w* - 1, w* + 70]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlaneDoc {
    pub v: (f64, f64),
    pub w: Option<(f64, f64)>,
    pub nodes: usize,
}

impl Default for PlaneDoc {
    fn default() -> Self {
        Self { v: (-15.0, 10.0), w: None, nodes: 400 }
    }
}

impl PlaneDoc {
    pub fn grid(&self, part: &Partition) -> PlaneGrid {
        let w = self.w.unwrap_or((part.w_star - 1.0, part.w_star + 70.0));
        PlaneGrid { v: self.v, w, nv: self.nodes, nw: self.nodes }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StationaryConfig {
    pub n_w: usize,
    /// Grid span above `w*`; picked from a pilot tail fit when absent.
    pub w_max: Option<f64>,
    /// Tail mass the automatic span may leave beyond the grid.
    pub tail_budget: f64,
    pub plane: PlaneDoc,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self { n_w: 2000, w_max: None, tail_budget: 1e-8, plane: PlaneDoc::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    pub n_w: usize,
    pub w_max: Option<f64>,
    pub r_range: (f64, f64),
    pub r_count: usize,
    pub doeblin_n_w: usize,
    pub k_max: usize,
    /// Starting points of the TV experiment; `(w* + 0.1, 2 w23 + 10)` when absent.
    pub w_pair: Option<(f64, f64)>,
    pub tv_steps: usize,
    pub tv_paths: usize,
    pub tv_bins: usize,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            n_w: 2000,
            w_max: None,
            r_range: (1e-3, 1.0),
            r_count: 31,
            doeblin_n_w: 400,
            k_max: 20,
            w_pair: None,
            tv_steps: 50,
            tv_paths: 100_000,
            tv_bins: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationConfig {
    /// Explicit J values; otherwise `j_count` evenly spaced points on `[0, j_max]`.
    pub j_values: Option<Vec<f64>>,
    pub j_max: f64,
    pub j_count: usize,
    /// Largest current the residual grid and partition are built for.
    pub kappa_max: f64,
    pub n_w: usize,
    /// Nodes per axis of the J = 0 inset on `[-7, 8] x [-10, 30]`.
    pub inset_nodes: usize,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self { j_values: None, j_max: 2.0, j_count: 21, kappa_max: 20.0, n_w: 1000, inset_nodes: 400 }
    }
}

impl ContinuationConfig {
    pub fn j_grid(&self) -> Vec<f64> {
        match &self.j_values {
            Some(v) => v.clone(),
            None => {
                let n = self.j_count.max(2) - 1;
                (0..=n).map(|k| self.j_max * k as f64 / n as f64).collect()
            }
        }
    }
}

/// A typed config and the JSON pointers of every field filled by default.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub config: RunConfig,
    pub defaulted: Vec<String>,
}

/// Parse and check a config document. Errors name the offending field as a
/// JSON pointer.
pub fn validate_config(doc: &Value) -> Result<Validated> {
    // a partial model block is completed from the canonical model
    let mut merged = doc.clone();
    if let Some(Value::Object(given)) = merged.get_mut("model") {
        if let Value::Object(base) = serde_json::to_value(ModelSpec::fig2())? {
            for (k, v) in base {
                given.entry(k).or_insert(v);
            }
        }
    }
    let config: RunConfig = serde_path_to_error::deserialize(&merged).map_err(|e| {
        let mut ptr: String = e
            .path()
            .iter()
            .filter_map(|s| match s {
                serde_path_to_error::Segment::Seq { index } => Some(format!("/{index}")),
                serde_path_to_error::Segment::Map { key } => Some(format!("/{key}")),
                serde_path_to_error::Segment::Enum { variant } => Some(format!("/{variant}")),
                serde_path_to_error::Segment::Unknown => None,
            })
            .collect();
        let msg = e.inner().to_string();
        if let Some(key) = msg.strip_prefix("unknown field `").and_then(|r| r.split('`').next()) {
            if !ptr.ends_with(&format!("/{key}")) {
                ptr.push('/');
                ptr.push_str(key);
            }
        }
        let ptr = if ptr.is_empty() { "/".to_string() } else { ptr };
        Error::Config(format!("{ptr}: {msg}"))
    })?;
    check_ranges(&config)?;
    let full = serde_json::to_value(&config)?;
    let mut defaulted = Vec::new();
    missing(&full, doc, String::new(), &mut defaulted);
    Ok(Validated { config, defaulted })
}

fn check_ranges(c: &RunConfig) -> Result<()> {
    let bad = |ptr: &str, what: &str| Err(Error::Config(format!("{ptr}: {what}")));
    let t = &c.control;
    if !(t.abs_tol > 0.0 && t.rel_tol > 0.0) {
        return bad("/control", "tolerances must be positive");
    }
    if !(t.fp_tol > 0.0 && t.root_tol > 0.0) || t.max_iters == 0 {
        return bad("/control", "fp_tol, root_tol and max_iters must be positive");
    }
    if c.stationary.n_w < 10 || c.certify.n_w < 10 || c.certify.doeblin_n_w < 10 || c.continuation.n_w < 10 {
        return bad("/n_w", "grids need at least 10 cells");
    }
    if c.stationary.plane.nodes < 2 || c.continuation.inset_nodes < 2 {
        return bad("/stationary/plane/nodes", "need at least 2 nodes per axis");
    }
    if !(c.simulate.horizon > 0.0) {
        return bad("/simulate/horizon", "must be positive");
    }
    if !(c.network.bin > 0.0) {
        return bad("/network/bin", "must be positive");
    }
    let (lo, hi) = c.certify.r_range;
    if !(lo > 0.0 && hi >= lo) || c.certify.r_count == 0 {
        return bad("/certify/r_range", "needs 0 < r_min <= r_max and r_count > 0");
    }
    if c.certify.tv_paths < 10 || c.certify.tv_bins < 2 || c.certify.tv_steps == 0 {
        return bad("/certify", "TV experiment needs tv_paths >= 10, tv_bins >= 2, tv_steps >= 1");
    }
    if !(c.continuation.kappa_max > 0.0) {
        return bad("/continuation/kappa_max", "must be positive");
    }
    c.simulate.kappa.to_kappa()?;
    Ok(())
}

/// Pointers of fields present in `full` but absent from `given`.
fn missing(full: &Value, given: &Value, at: String, out: &mut Vec<String>) {
    let Value::Object(f) = full else { return };
    let g = given.as_object();
    for (k, v) in f {
        let ptr = format!("{at}/{k}");
        match g.and_then(|g| g.get(k)) {
            None => out.push(ptr),
            Some(sub) => missing(v, sub, ptr, out),
        }
    }
}
