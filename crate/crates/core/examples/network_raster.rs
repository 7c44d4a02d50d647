//! Delayed network of 500 neurons: raster size, population rate per unit
//! time and the kicks still in flight at the horizon.

use mkv_neuro::dynamics::build_partition;
use mkv_neuro::network::{population_rate, simulate_network, NetworkConfig};
use mkv_neuro::pdmp::InitialLaw;
use mkv_neuro::{Control, ModelSpec};

fn main() -> mkv_neuro::Result<()> {
    let model = ModelSpec::fig2().with_coupling(0.5);
    let ctrl = Control::default();
    let part = build_partition(&model, (0.0, 7.0), 1.0)?;
    let cfg = NetworkConfig { n: 500, horizon: 20.0, seed: 7, kick_batch: 0.01, ..Default::default() };
    let init = InitialLaw::Uniform { v: (model.v_r, model.v_r), w: (2.0, 12.0) };
    let run = simulate_network(&model, &part, &cfg, &init, &ctrl)?;

    println!("{} spikes, {} kicks delivered, {} pending", run.raster.spikes.len(), run.kicks_delivered, run.state.pending.len());
    for (t, rate) in population_rate(&run.raster, 2.0)? {
        println!("t = {t:>5.1}  rate per neuron {rate:.3}");
    }
    Ok(())
}
