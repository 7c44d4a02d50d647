//! Regions of the canonical model and two orbits from the reset line: one
//! settles on the stable equilibrium, one explodes once the current is large.

use mkv_neuro::dynamics::{build_partition, equilibria, integrate};
use mkv_neuro::{Control, Kappa, ModelSpec, State};

fn main() -> mkv_neuro::Result<()> {
    let model = ModelSpec::fig2();
    let ctrl = Control::default();
    let part = build_partition(&model, (0.0, 8.0), 1.0)?;
    println!("w* = {:.3}  w23 = {:.3}  v34 = {:.3}  w_reach = {:.3}", part.w_star, part.w23, part.v34, part.w_reach);
    println!("equilibria at I = 0: {:?}", equilibria(&model, 0.0));

    let start = State::new(model.v_r, 6.0);
    for kappa in [0.0, 8.0] {
        let orbit = integrate(&model, &part, start, &Kappa::Constant(kappa), (0.0, 50.0), &ctrl)?;
        let regions: Vec<&str> = orbit.exit_events.iter().map(|e| e.1.as_str()).collect();
        match orbit.blow_up {
            Some(t) => println!("kappa = {kappa}: explodes at t = {t:.4} via {regions:?}"),
            None => println!("kappa = {kappa}: ends at {:?} via {regions:?}", orbit.last()),
        }
    }
    Ok(())
}
