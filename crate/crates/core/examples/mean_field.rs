//! Stationary current of the mean-field equation as a function of J, then a
//! particle simulation at J = 0.5 that should relax to the same value.

use mkv_neuro::dynamics::build_partition;
use mkv_neuro::meanfield::{continuation_in_j, simulate_mkv, MkvConfig, ResidualSetup};
use mkv_neuro::pdmp::InitialLaw;
use mkv_neuro::{Control, ModelSpec};

fn main() -> mkv_neuro::Result<()> {
    let model = ModelSpec::fig2();
    let ctrl = Control::default();
    let setup = ResidualSetup::new(&model, 20.0, 600, &ctrl)?;
    let js: Vec<f64> = (0..=8).map(|k| 0.25 * k as f64).collect();
    let curve = continuation_in_j(&model, &setup, &js, &ctrl)?;
    for p in &curve {
        println!("J = {:.2}  kappa = {:.5}  E T1 = {:.5}  converged {}", p.j, p.kappa, p.e_t1, p.converged);
    }

    let coupled = model.with_coupling(0.5);
    let part = build_partition(&coupled, (0.0, 6.0), 1.0)?;
    let cfg = MkvConfig { copies: 4000, horizon: 15.0, seed: 9, nodes_per_block: 20 };
    let init = InitialLaw::Uniform { v: (model.v_r, model.v_r), w: (2.0, 12.0) };
    let path = simulate_mkv(&coupled, &part, &cfg, &init, &ctrl)?;
    println!("particle kappa averaged after t = 5: {:.4}", path.average_after(5.0));
    Ok(())
}
