//! Jump rate of the linear process under a ramped current, from the Volterra
//! solver and from Monte Carlo jump counts.

use std::sync::Arc;

use mkv_neuro::dynamics::build_partition;
use mkv_neuro::pdmp::{simulate_linear, solve_rate_volterra, InitialLaw, VolterraGrid};
use mkv_neuro::rng::{tag, Stream};
use mkv_neuro::{Control, Kappa, KappaPath, ModelSpec, State};

fn main() -> mkv_neuro::Result<()> {
    let model = ModelSpec::fig2();
    let ctrl = Control::default();
    let kappa = Kappa::PiecewiseLinear(Arc::new(KappaPath::new(vec![0.0, 2.0], vec![0.0, 3.0])));
    let part = build_partition(&model, (0.0, 3.0), 1.0)?;
    let x = State::new(model.v_r, 6.0);
    let grid = VolterraGrid { horizon: 2.0, n_out: 100, substeps: 5, n_w: 301, w_span: 80.0 };
    let sol = solve_rate_volterra(&model, &part, x, &kappa, &grid, &ctrl)?;

    // Monte Carlo counts in 10 bins, each covering 10 output nodes
    let (bins, per) = (10, grid.n_out / 10);
    let dt = grid.horizon / bins as f64;
    let paths = 20_000;
    let mut counts = vec![0usize; bins];
    for p in 0..paths {
        let run = simulate_linear(&model, &InitialLaw::point(x), &kappa, 0.0, grid.horizon, &[], &mut Stream::new(3, tag::LINEAR, p), &ctrl)?;
        for t in run.record.times.iter().skip(1) {
            counts[((t / dt) as usize).min(bins - 1)] += 1;
        }
    }
    println!("{:>6} {:>10} {:>10}", "t", "volterra", "mc");
    let r = sol.r0();
    for b in 0..bins {
        let nodes = &r[b * per..=(b + 1) * per];
        let avg = (nodes.windows(2).map(|w| w[0] + w[1]).sum::<f64>()) / (2 * per) as f64;
        let mc = counts[b] as f64 / (paths as f64 * dt);
        let se = (counts[b] as f64).sqrt() / (paths as f64 * dt);
        println!("{:>6.2} {:>10.4} {:>10.4} +- {:.4}", sol.times[(b + 1) * per], avg, mc, se);
    }
    Ok(())
}
