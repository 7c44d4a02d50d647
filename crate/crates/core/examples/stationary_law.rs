//! Invariant law of the post-jump chain at J = 0, the firing rate it implies
//! and its lift to the plane. Writes `density.csv` and `lift.csv` to the
//! directory given as first argument (default `out`).

use std::fs::File;
use std::path::PathBuf;

use mkv_neuro::dynamics::build_partition;
use mkv_neuro::stationary::{
    build_kernel, choose_w_max, expected_jump_time, invariant_density, lift_to_plane, PlaneGrid, WGrid,
};
use mkv_neuro::{Control, ModelSpec};

fn main() -> mkv_neuro::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out".into()));
    std::fs::create_dir_all(&dir)?;
    let model = ModelSpec::fig2();
    let ctrl = Control::default();
    let part = build_partition(&model, (0.0, 0.0), 1.0)?;

    let w_max = choose_w_max(&model, &part, &ctrl, 1e-8)?;
    let grid = WGrid::aligned(part.w_star, w_max, 2000, model.w_b);
    let kernel = build_kernel(&model, &part, &grid, &ctrl)?;
    println!("kernel rows sum to 1 within {:.1e}", kernel.stochasticity_error());

    let mu = invariant_density(&kernel, &ctrl)?;
    let e_t1 = expected_jump_time(&kernel, &mu);
    println!("{} iterations, residual {:.1e}, leak {:.1e}", mu.iterations, mu.residual, mu.leak);
    println!("E T1 = {e_t1:.6}, firing rate = {:.4}", 1.0 / e_t1);
    mu.write_csv(File::create(dir.join("density.csv"))?)?;

    let plane = PlaneGrid { v: (-7.0, 8.0), w: (-10.0, 30.0), nv: 150, nw: 150 };
    let lift = lift_to_plane(&model, &part, &mu, &plane, &ctrl)?;
    println!("mass {:.4} in the window, {:.1e} outside", lift.total() - lift.outside, lift.outside);
    lift.write_csv(File::create(dir.join("lift.csv"))?)?;
    Ok(())
}
