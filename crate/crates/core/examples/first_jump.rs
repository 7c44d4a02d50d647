//! First jump from the reset line by time change and by thinning; the two
//! samplers draw the same law.

use mkv_neuro::dynamics::build_partition;
use mkv_neuro::hazard::{sample_first_jump, sample_first_jump_thinning};
use mkv_neuro::rng::{tag, Stream};
use mkv_neuro::{Control, Kappa, ModelSpec, State};

fn main() -> mkv_neuro::Result<()> {
    let model = ModelSpec::fig2();
    let ctrl = Control::default();
    let part = build_partition(&model, (0.0, 0.0), 1.0)?;
    let kappa = Kappa::Constant(0.0);
    let x = State::new(model.v_r, 6.0);
    let n = 20_000;

    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut accepted = 0.0;
    for i in 0..n as u64 {
        a.push(sample_first_jump(&model, x, &kappa, &mut Stream::new(1, tag::SAMPLER, i), &ctrl)?.t1);
        let (j, stats) = sample_first_jump_thinning(&model, &part, x, &kappa, &mut Stream::new(1, tag::THINNING, i), 1e3, &ctrl)?;
        b.push(j.t1);
        accepted += stats.acceptance_fraction();
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("E T1: time change {:.5}, thinning {:.5}", mean(&a), mean(&b));
    println!("mean thinning acceptance {:.3}", accepted / n as f64);
    Ok(())
}
