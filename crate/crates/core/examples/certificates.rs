//! Numerical certificates for the invariant law: a Lyapunov drift, the
//! exponential tail, a Doeblin minorization and the total-variation decay of
//! two chains started far apart.

use mkv_neuro::dynamics::build_partition;
use mkv_neuro::stationary::{
    build_kernel, choose_w_max, estimate_doeblin, fit_tail, invariant_density, log_sweep, tv_decay, verify_lyapunov, WGrid,
};
use mkv_neuro::{Control, ModelSpec};

fn main() -> mkv_neuro::Result<()> {
    let model = ModelSpec::fig2();
    let ctrl = Control::default();
    let part = build_partition(&model, (0.0, 0.0), 1.0)?;
    let w_max = choose_w_max(&model, &part, &ctrl, 1e-8)?;
    let kernel = build_kernel(&model, &part, &WGrid::aligned(part.w_star, w_max, 1000, model.w_b), &ctrl)?;
    let mu = invariant_density(&kernel, &ctrl)?;

    let lyap = verify_lyapunov(&kernel, &part, &log_sweep(1e-3, 1.0, 31));
    println!("lyapunov: pass {} at r = {:.4}, gamma = {:.4}, K = {:.3}; {}", lyap.pass, lyap.r, lyap.gamma, lyap.k, lyap.evidence);
    let tail = fit_tail(&mu);
    println!("tail:     pass {}, log-slope {:.4} +- {:.4}; {}", tail.pass, tail.slope, tail.slope_se, tail.evidence);

    let coarse = build_kernel(&model, &part, &WGrid::aligned(part.w_star, w_max, 400, model.w_b), &ctrl)?;
    let doeblin = estimate_doeblin(&coarse, &part, 20);
    println!("doeblin:  pass {}, k = {:?}, beta = {:.3e}; {}", doeblin.pass, doeblin.k, doeblin.beta, doeblin.evidence);

    let tv = tv_decay(&model, (part.w_star, part.w23 + 30.0), 30, 20_000, 40, 5, &ctrl)?;
    println!("tv decay: pass {}, ratio {:.4} in band {:.4?}; {}", tv.pass, tv.ratio, tv.band, tv.evidence);
    Ok(())
}
