//! Event-driven simulation of `N` neurons coupled through delayed kicks:
//! each spike raises the potential of every other neuron by `J/N` after `D`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::Control;
use crate::current::Kappa;
use crate::dynamics::Partition;
use crate::error::{Error, Result};
use crate::hazard::{Advance, TimeChangeSampler};
use crate::model::{ModelSpec, State};
use crate::pdmp::InitialLaw;
use crate::rng::{tag, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub horizon: f64,
    pub seed: u64,
    /// Deliveries are rounded up to multiples of this window; 0 delivers
    /// every kick at its exact time.
    pub kick_batch: f64,
    pub allow_zero_delay: bool,
    /// Spikes per neuron per time unit that trigger the blow-up watchdog.
    pub watchdog: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { n: 100, horizon: 10.0, seed: 0, kick_batch: 0.0, allow_zero_delay: false, watchdog: 1e3 }
    }
}

/// A kick of `amplitude` to every neuron but `emitter`, due at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kick {
    pub t: f64,
    pub emitter: usize,
    pub amplitude: f64,
}

impl Eq for Kick {}

impl Ord for Kick {
    // reversed so the heap pops the earliest delivery, then the lowest emitter
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then(other.emitter.cmp(&self.emitter))
    }
}

impl PartialOrd for Kick {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub neurons: Vec<State>,
    /// Kicks due after the horizon, in delivery order.
    pub pending: Vec<Kick>,
    pub clock: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpikeRaster {
    pub n: usize,
    pub horizon: f64,
    /// `(t, i)` in time order, ties by index.
    pub spikes: Vec<(f64, usize)>,
}

impl SpikeRaster {
    /// CSV `t,i`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "i"])?;
        for (t, i) in &self.spikes {
            wtr.serialize((t, i))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Spikes per neuron per time unit over the whole horizon.
    pub fn mean_rate(&self) -> f64 {
        self.spikes.len() as f64 / (self.n as f64 * self.horizon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkRun {
    pub raster: SpikeRaster,
    pub state: NetworkState,
    pub kicks_delivered: usize,
}

struct Neuron {
    x: State,
    t: f64,
    budget: f64,
    h: f64,
    rng: Stream,
}

impl Neuron {
    /// Advance to `t_stop`, returning the spike times on the way.
    fn advance(&mut self, sampler: &TimeChangeSampler, t_stop: f64, spikes: &mut Vec<f64>) -> Result<()> {
        loop {
            match sampler.advance(self.x, self.t, self.budget, t_stop, &mut self.h, &[], |_, _| {})? {
                Advance::Jump(j) => {
                    spikes.push(j.t1);
                    self.x = j.post_state;
                    self.t = j.t1;
                    self.budget = self.rng.exp1();
                }
                Advance::Survived { state, hazard } => {
                    self.x = state;
                    self.t = t_stop;
                    self.budget = (self.budget - hazard).max(0.0);
                    return Ok(());
                }
            }
        }
    }
}

/// Simulate the network with initial law `mu0`; `J` and `D` come from the model.
pub fn simulate_network(
    model: &ModelSpec,
    part: &Partition,
    cfg: &NetworkConfig,
    mu0: &InitialLaw,
    ctrl: &Control,
) -> Result<NetworkRun> {
    if cfg.n == 0 {
        return Err(Error::InvalidArgument("network needs at least one neuron".into()));
    }
    if !(cfg.horizon > 0.0) || !(cfg.kick_batch >= 0.0) || !(cfg.watchdog > 0.0) {
        return Err(Error::InvalidArgument("horizon and watchdog must be positive, kick_batch nonnegative".into()));
    }
    if model.d < 0.0 || (model.d == 0.0 && !cfg.allow_zero_delay) {
        return Err(Error::InvalidArgument(format!("delay D = {} needs D > 0 or allow_zero_delay", model.d)));
    }
    mu0.validate(part)?;
    let kappa = Kappa::zero();
    let sampler = TimeChangeSampler::new(model, &kappa, ctrl);
    let mut neurons: Vec<Neuron> = (0..cfg.n)
        .map(|i| {
            let mut init = Stream::new(cfg.seed, tag::INIT, i as u64);
            let mut rng = Stream::new(cfg.seed, tag::NETWORK, i as u64);
            let budget = rng.exp1();
            Neuron { x: mu0.draw(&mut init), t: 0.0, budget, h: 0.0, rng }
        })
        .collect();
    let mut sim = Sim {
        model,
        cfg,
        amplitude: model.j / cfg.n as f64,
        heap: BinaryHeap::new(),
        raster: SpikeRaster { n: cfg.n, horizon: cfg.horizon, spikes: Vec::new() },
        delivered: 0,
        window: (0, 0),
        instantaneous: model.d == 0.0 && cfg.kick_batch == 0.0,
    };
    let clock = if sim.instantaneous {
        sim.run_instantaneous(&sampler, &mut neurons)?
    } else {
        sim.run_delayed(&sampler, &mut neurons)?
    };
    let mut pending = sim.heap.into_sorted_vec();
    pending.reverse();
    Ok(NetworkRun {
        raster: sim.raster,
        state: NetworkState { neurons: neurons.iter().map(|n| n.x).collect(), pending, clock },
        kicks_delivered: sim.delivered,
    })
}

struct Sim<'a> {
    model: &'a ModelSpec,
    cfg: &'a NetworkConfig,
    amplitude: f64,
    heap: BinaryHeap<Kick>,
    raster: SpikeRaster,
    delivered: usize,
    /// Watchdog: current unit time window and its spike count.
    window: (i64, usize),
    instantaneous: bool,
}

impl Sim<'_> {
    fn delivery_time(&self, t_spike: f64) -> f64 {
        let t = t_spike + self.model.d;
        let b = self.cfg.kick_batch;
        if b > 0.0 {
            (t / b).ceil() * b
        } else {
            t
        }
    }

    /// Latest time up to which no spike emitted after `clock` can be delivered.
    fn safe_until(&self, clock: f64) -> f64 {
        let b = self.cfg.kick_batch;
        if b > 0.0 {
            (((clock + self.model.d) / b).floor() + 1.0) * b
        } else {
            clock + self.model.d
        }
    }

    fn record(&mut self, t: f64, i: usize) -> Result<()> {
        let w = t.floor() as i64;
        if w != self.window.0 {
            self.window = (w, 0);
        }
        self.window.1 += 1;
        if self.window.1 as f64 > self.cfg.watchdog * self.cfg.n as f64 {
            return Err(Error::BlowUpCascade { t, count: self.window.1 });
        }
        self.raster.spikes.push((t, i));
        if self.cfg.n > 1 && !self.instantaneous {
            self.heap.push(Kick { t: self.delivery_time(t), emitter: i, amplitude: self.amplitude });
        }
        Ok(())
    }

    /// Apply every kick due at exactly `t`; emitters skip their own.
    fn deliver(&mut self, t: f64, neurons: &mut [Neuron]) {
        let mut total = 0.0;
        let mut own = Vec::new();
        while let Some(k) = self.heap.peek() {
            if k.t != t {
                break;
            }
            total += k.amplitude;
            own.push((k.emitter, k.amplitude));
            self.heap.pop();
        }
        if own.is_empty() {
            return;
        }
        self.delivered += own.len() * (neurons.len() - 1);
        neurons.iter_mut().for_each(|n| n.x.v += total);
        for (i, a) in own {
            neurons[i].x.v -= a;
        }
    }

    fn run_delayed(&mut self, sampler: &TimeChangeSampler, neurons: &mut [Neuron]) -> Result<f64> {
        let horizon = self.cfg.horizon;
        let mut clock = 0.0;
        let mut spikes: Vec<Vec<f64>> = vec![Vec::new(); neurons.len()];
        while clock < horizon {
            let next = self.heap.peek().map_or(f64::INFINITY, |k| k.t);
            let t_next = next.min(self.safe_until(clock)).min(horizon);
            neurons.par_iter_mut().zip(spikes.par_iter_mut()).try_for_each(|(n, s)| n.advance(sampler, t_next, s))?;
            let mut new: Vec<(f64, usize)> =
                spikes.iter_mut().enumerate().flat_map(|(i, s)| s.drain(..).map(move |t| (t, i))).collect();
            new.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (t, i) in new {
                self.record(t, i)?;
            }
            clock = t_next;
            if next == clock {
                self.deliver(clock, neurons);
            }
        }
        Ok(clock)
    }

    /// `D = 0`: every spike kicks the others at once, so advance to the
    /// earliest tentative spike and resolve it before going on.
    fn run_instantaneous(&mut self, sampler: &TimeChangeSampler, neurons: &mut [Neuron]) -> Result<f64> {
        let horizon = self.cfg.horizon;
        loop {
            let first = neurons
                .par_iter()
                .map(|n| {
                    let mut h = n.h;
                    Ok(match sampler.advance(n.x, n.t, n.budget, horizon, &mut h, &[], |_, _| {})? {
                        Advance::Jump(j) => j.t1,
                        Advance::Survived { .. } => f64::INFINITY,
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let (i, t) = first
                .iter()
                .enumerate()
                .fold((usize::MAX, f64::INFINITY), |acc, (i, t)| if *t < acc.1 { (i, *t) } else { acc });
            if i == usize::MAX {
                let mut sink = Vec::new();
                for n in neurons.iter_mut() {
                    n.advance(sampler, horizon, &mut sink)?;
                }
                return Ok(horizon);
            }
            let mut fired = Vec::new();
            for (k, n) in neurons.iter_mut().enumerate() {
                let mut s = Vec::new();
                // the restarted integration of the spiking neuron reproduces
                // its jump at `t` exactly, so a tiny allowance suffices
                let stop = if k == i { t + 1e-12 * (1.0 + t.abs()) } else { t };
                n.advance(sampler, stop, &mut s)?;
                fired.extend(s.into_iter().map(|x| (x, k)));
            }
            fired.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (s, k) in &fired {
                self.record(*s, *k)?;
                self.delivered += neurons.len() - 1;
            }
            for (_, k) in &fired {
                for (m, n) in neurons.iter_mut().enumerate() {
                    if m != *k {
                        n.x.v += self.amplitude;
                    }
                }
            }
        }
    }
}

/// Spikes per neuron per time unit in consecutive bins of width `bin`
/// covering the horizon; `(bin start, rate)`.
pub fn population_rate(raster: &SpikeRaster, bin: f64) -> Result<Vec<(f64, f64)>> {
    if !(bin > 0.0) {
        return Err(Error::InvalidArgument(format!("bin = {bin} must be positive")));
    }
    let nb = (raster.horizon / bin).ceil().max(1.0) as usize;
    let mut counts = vec![0usize; nb];
    for (t, _) in &raster.spikes {
        counts[((t / bin) as usize).min(nb - 1)] += 1;
    }
    let norm = raster.n.max(1) as f64 * bin;
    Ok(counts.iter().enumerate().map(|(k, c)| (k as f64 * bin, *c as f64 / norm)).collect())
}

#[cfg(test)]
mod tests;
