//! Command-line front end: one JSON config, eight subcommands, CSV/JSON
//! outputs and a manifest per run.

mod config;

pub use config::{
    validate_config, CertifyConfig, CheckConfig, ContinuationConfig, KappaDoc, MkvDoc, NetworkDoc, PlaneDoc, RunConfig,
    SimulateConfig, StationaryConfig, Threads, Validated,
};

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::dynamics::{build_partition, check_assumptions, Partition};
use crate::error::{Error, Result};
use crate::hazard::{write_samples_csv, TimeChangeSampler};
use crate::meanfield::{continuation_in_j, simulate_mkv, write_curve_csv, ResidualSetup};
use crate::model::ModelSpec;
use crate::network::{population_rate, simulate_network};
use crate::pdmp::simulate_linear;
use crate::rng::{tag, Stream};
use crate::stationary::{
    build_kernel, choose_w_max, estimate_doeblin, expected_jump_time, fit_tail, invariant_density, lift_to_plane,
    log_sweep, tv_decay, verify_lyapunov, Certificate, PlaneGrid, WGrid,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mkv-neuro", version, about = "Explosive PDMP neuron: simulation, stationary laws and mean-field fixed points")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the standing assumptions on F and lambda.
    CheckAssumptions(Common),
    /// Simulate one neuron under a given current.
    SimulateLinear(Common),
    /// Simulate the delayed N-neuron network.
    SimulateNetwork(Common),
    /// Simulate the McKean-Vlasov equation with M copies.
    SimulateMkv(Common),
    /// Invariant law of the post-jump chain and its lift to the plane.
    Stationary(Common),
    /// Lyapunov, tail, Doeblin and TV-decay certificates.
    Certify(Common),
    /// Continuation of the stationary current in J.
    Continuation(Common),
    /// The kappa(J) curve and the J = 0 invariant density of the canonical model.
    ReproduceFig2(Common),
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// JSON config; every field has a default except the seed of stochastic commands.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Thread count, or `auto`.
    #[arg(long)]
    threads: Option<String>,
    #[arg(long = "out")]
    output_dir: Option<PathBuf>,
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::CheckAssumptions(c) => ("check-assumptions", c),
            Command::SimulateLinear(c) => ("simulate-linear", c),
            Command::SimulateNetwork(c) => ("simulate-network", c),
            Command::SimulateMkv(c) => ("simulate-mkv", c),
            Command::Stationary(c) => ("stationary", c),
            Command::Certify(c) => ("certify", c),
            Command::Continuation(c) => ("continuation", c),
            Command::ReproduceFig2(c) => ("reproduce-fig2", c),
        }
    }
}

/// Whether the command draws random numbers (and so needs a seed).
pub fn is_stochastic(command: &str) -> bool {
    matches!(command, "simulate-linear" | "simulate-network" | "simulate-mkv" | "certify")
}

/// Run with `argv` (program name first) and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (name, common) = cli.command.parts();
    match execute(name, common) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("mkv-neuro {name}: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_NUMERICAL
            }
        }
    }
}

fn execute(name: &str, common: &Common) -> Result<()> {
    let doc = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => serde_json::Value::Object(Default::default()),
    };
    let mut v = validate_config(&doc)?;
    if let Some(s) = common.seed {
        v.config.seed = Some(s);
        v.defaulted.retain(|p| p != "/seed");
    }
    if let Some(t) = &common.threads {
        v.config.threads = Threads::parse(t)?;
        v.defaulted.retain(|p| p != "/threads");
    }
    if let Some(o) = &common.output_dir {
        v.config.output_dir = o.clone();
        v.defaulted.retain(|p| p != "/output_dir");
    }
    if is_stochastic(name) && v.config.seed.is_none() {
        return Err(Error::Config(format!("{name} needs a seed (config `seed` or --seed)")));
    }
    let threads = v.config.threads.resolve()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    std::fs::create_dir_all(&v.config.output_dir)?;
    let start = Instant::now();
    let outputs = pool.install(|| dispatch(name, &v.config))?;
    let manifest = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": v.config.seed,
        "threads": threads,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "config": v.config,
        "defaulted": v.defaulted,
        "outputs": outputs,
    });
    let f = File::create(v.config.output_dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &manifest)?;
    Ok(())
}

struct Out<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Out<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let f = self.create(name)?;
        serde_json::to_writer_pretty(f, value)?;
        Ok(())
    }
}

fn dispatch(name: &str, cfg: &RunConfig) -> Result<Vec<String>> {
    let mut out = Out { dir: &cfg.output_dir, files: Vec::new() };
    let model = &cfg.model;
    let ctrl = &cfg.control;
    let seed = cfg.seed.unwrap_or(0);
    match name {
        "check-assumptions" => {
            let c = &cfg.check;
            let report = check_assumptions(model, c.kappa_max, c.v_window, c.grid_n)?;
            out.json("assumptions.json", &report)?;
        }
        "simulate-linear" => {
            let s = &cfg.simulate;
            let kappa = s.kappa.to_kappa()?;
            let part = partition(model, kappa.max().max(0.0))?;
            s.init.validate(&part)?;
            let obs: Vec<f64> = Vec::new();
            let mut rng = Stream::new(seed, tag::LINEAR, 0);
            let run = simulate_linear(model, &s.init, &kappa, 0.0, s.horizon, &obs, &mut rng, ctrl)?;
            run.record.write_csv(out.create("jumps.csv")?)?;
            if s.first_jumps > 0 {
                let sampler = TimeChangeSampler::new(model, &kappa, ctrl);
                let samples = (0..s.first_jumps)
                    .map(|k| {
                        let mut rng = Stream::new(seed, tag::SAMPLER, k as u64);
                        let x = s.init.draw(&mut rng);
                        sampler.sample(x, 0.0, &mut rng)
                    })
                    .collect::<Result<Vec<_>>>()?;
                write_samples_csv(&samples, out.create("first_jumps.csv")?)?;
            }
        }
        "simulate-network" => {
            let n = &cfg.network;
            let part = partition(model, 0.0)?;
            let net = n.to_config(seed);
            let run = simulate_network(model, &part, &net, &n.mu0, ctrl)?;
            run.raster.write_csv(out.create("raster.csv")?)?;
            let mut w = csv::Writer::from_writer(out.create("rate.csv")?);
            w.write_record(["t", "rate"])?;
            for (t, r) in population_rate(&run.raster, n.bin)? {
                w.serialize((t, r))?;
            }
            w.flush()?;
        }
        "simulate-mkv" => {
            let m = &cfg.mkv;
            let mc = m.to_config(seed);
            let part = partition(model, 0.0)?;
            let path = simulate_mkv(model, &part, &mc, &m.mu0, ctrl)?;
            path.write_csv(out.create("kappa.csv")?)?;
        }
        "stationary" => {
            let s = &cfg.stationary;
            let part = partition(model, 0.0)?;
            let w_max = match s.w_max {
                Some(w) => w,
                None => choose_w_max(model, &part, ctrl, s.tail_budget)?,
            };
            let grid = WGrid::aligned(part.w_star, w_max, s.n_w, model.w_b);
            let kernel = build_kernel(model, &part, &grid, ctrl)?;
            let mu = invariant_density(&kernel, ctrl)?;
            mu.write_csv(out.create("density.csv")?)?;
            let e_t1 = expected_jump_time(&kernel, &mu);
            let plane = s.plane.grid(&part);
            let lift = lift_to_plane(model, &part, &mu, &plane, ctrl)?;
            lift.write_csv(out.create("lift.csv")?)?;
            let summary = json!({
                "w_star": part.w_star,
                "w23": part.w23,
                "grid": grid,
                "iterations": mu.iterations,
                "residual": mu.residual,
                "contraction": mu.contraction,
                "leak": mu.leak,
                "E_T1": e_t1,
                "firing_rate": lift.firing_rate,
                "rate_identity": lift.firing_rate * e_t1,
                "outside_mass": lift.outside,
                "kernel_row_error": kernel.stochasticity_error(),
            });
            out.json("summary.json", &summary)?;
        }
        "certify" => {
            let c = &cfg.certify;
            let part = partition(model, 0.0)?;
            let w_max = match c.w_max {
                Some(w) => w,
                None => choose_w_max(model, &part, ctrl, 1e-8)?,
            };
            let grid = WGrid::aligned(part.w_star, w_max, c.n_w, model.w_b);
            let kernel = build_kernel(model, &part, &grid, ctrl)?;
            let mu = invariant_density(&kernel, ctrl)?;
            let lyap = verify_lyapunov(&kernel, &part, &log_sweep(c.r_range.0, c.r_range.1, c.r_count));
            let tail = fit_tail(&mu);
            let coarse = WGrid::aligned(part.w_star, w_max, c.doeblin_n_w, model.w_b);
            let doeblin = estimate_doeblin(&build_kernel(model, &part, &coarse, ctrl)?, &part, c.k_max);
            let pair = c.w_pair.unwrap_or((part.w_star + 0.1, 2.0 * part.w23 + 10.0));
            let tv = tv_decay(model, pair, c.tv_steps, c.tv_paths, c.tv_bins, seed, ctrl)?;
            let certs =
                vec![Certificate::Lyapunov(lyap), Certificate::TailExponent(tail), Certificate::Doeblin(doeblin), Certificate::TvDecay(tv)];
            out.json("certificates.json", &certs)?;
        }
        "continuation" | "reproduce-fig2" => {
            let c = &cfg.continuation;
            let setup = ResidualSetup::new(model, c.kappa_max, c.n_w, ctrl)?;
            let curve = continuation_in_j(model, &setup, &c.j_grid(), ctrl)?;
            write_curve_csv(&curve, out.create("curve.csv")?)?;
            if name == "reproduce-fig2" {
                let m0 = model.with_coupling(0.0);
                let part = partition(&m0, 0.0)?;
                let s = &cfg.stationary;
                let w_max = match s.w_max {
                    Some(w) => w,
                    None => choose_w_max(&m0, &part, ctrl, s.tail_budget)?,
                };
                let grid = WGrid::aligned(part.w_star, w_max, s.n_w, m0.w_b);
                let kernel = build_kernel(&m0, &part, &grid, ctrl)?;
                let mu = invariant_density(&kernel, ctrl)?;
                let inset = PlaneGrid { v: (-7.0, 8.0), w: (-10.0, 30.0), nv: c.inset_nodes, nw: c.inset_nodes };
                lift_to_plane(&m0, &part, &mu, &inset, ctrl)?.write_csv(out.create("inset.csv")?)?;
            }
        }
        other => return Err(Error::InvalidArgument(format!("unknown command {other}"))),
    }
    Ok(out.files)
}

fn partition(model: &ModelSpec, kappa_max: f64) -> Result<Partition> {
    build_partition(model, (model.i, model.i + kappa_max), 1.0)
}

#[cfg(test)]
mod tests;
