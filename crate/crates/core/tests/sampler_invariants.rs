use proptest::prelude::*;
use rayon::prelude::*;

use mkv_neuro::dynamics::build_partition;
use mkv_neuro::hazard::{density_bound, jump_density, sample_first_jump_thinning, survival, TimeChangeSampler};
use mkv_neuro::pdmp::{simulate_linear, InitialLaw};
use mkv_neuro::rng::{tag, Stream};
use mkv_neuro::stationary::{build_kernel, expected_jump_time, invariant_density, WGrid};
use mkv_neuro::{Control, Kappa, ModelSpec, State};

fn ks(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// Both orbits stay in P4 over `t`, where `v` is increasing in the current.
    #[test]
    fn hazard_grows_with_the_current(dv in 0.05f64..2.0, w in -4.0f64..3.0, k1 in 0.0f64..3.0, dk in 0.01f64..3.0, frac in 0.05f64..0.9) {
        let m = ModelSpec::fig2();
        let p = build_partition(&m, (0.0, 6.0), 1.0).unwrap();
        let ctrl = Control::default();
        let x = State::new(p.v34 + dv, w);
        let (a, b) = (Kappa::Constant(k1), Kappa::Constant(k1 + dk));
        let t_inf = mkv_neuro::dynamics::integrate(&m, &p, x, &b, (0.0, 10.0), &ctrl).unwrap().blow_up.unwrap();
        let t = frac * t_inf;
        let la = survival(&m, &p, x, &a, t, &ctrl).unwrap().hazard;
        let lb = survival(&m, &p, x, &b, t, &ctrl).unwrap().hazard;
        prop_assert!(lb >= la * (1.0 - 1e-9), "{la} {lb}");
    }

    #[test]
    fn jump_density_from_the_reset_line_is_bounded(dw in 0.0f64..60.0, t in 0.0f64..3.0, k in 0.0f64..2.0) {
        let m = ModelSpec::fig2();
        let p = build_partition(&m, (0.0, 2.0), 1.0).unwrap();
        let ctrl = Control::default();
        let bound = density_bound(&m, &p, 2.0);
        let d = jump_density(&m, &p, State::new(m.v_r, p.w_star + dw), &Kappa::Constant(k), t, &ctrl).unwrap();
        prop_assert!(d <= bound, "{d} > {bound}");
    }

    #[test]
    fn same_seed_same_record(seed in any::<u64>(), w0 in 0.0f64..20.0) {
        let m = ModelSpec::fig2();
        let ctrl = Control::default();
        let kappa = Kappa::Constant(1.0);
        let init = InitialLaw::point(State::new(m.v_r, w0));
        let go = || simulate_linear(&m, &init, &kappa, 0.0, 3.0, &[0.5, 1.5], &mut Stream::new(seed, tag::LINEAR, 0), &ctrl).unwrap();
        prop_assert_eq!(go(), go());
    }
}

/// Time-change and thinning samplers on two models and two currents.
#[test]
fn samplers_agree_on_the_test_matrix() {
    let n = 20_000;
    // two-sample KS critical value at the 0.1% level
    let crit = 1.95 * (2.0 / n as f64).sqrt();
    let ctrl = Control::default();
    for (c, m) in [ModelSpec::fig2(), ModelSpec::quartic(1.0, 2.0)].iter().enumerate() {
        let p = build_partition(m, (0.0, 2.0), 1.0).unwrap();
        for (k, x) in [(0.0, State::new(m.v_r, p.w23 + 3.0)), (2.0, State::new(m.v_r, p.w23 + 0.5))] {
            let kappa = Kappa::Constant(k);
            let s = TimeChangeSampler::new(m, &kappa, &ctrl);
            let base = (c * 2 + (k > 0.0) as usize) * n;
            let mut a: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| s.sample(x, 0.0, &mut Stream::new(11, tag::SAMPLER, (base + i) as u64)).unwrap().t1)
                .collect();
            let mut b: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut rng = Stream::new(11, tag::THINNING, (base + i) as u64);
                    sample_first_jump_thinning(m, &p, x, &kappa, &mut rng, ctrl.thinning_horizon, &ctrl).unwrap().0.t1
                })
                .collect();
            let d = ks(&mut a, &mut b);
            assert!(d < crit, "model {c} kappa {k}: KS {d} >= {crit}");
        }
    }
}

/// Mean jump count on [0, T] grows like T / E T1 under the invariant law.
#[test]
fn jump_counts_grow_linearly() {
    let m = ModelSpec::fig2();
    let p = build_partition(&m, (0.0, 0.0), 1.0).unwrap();
    let ctrl = Control::default();
    let grid = WGrid::aligned(p.w_star, 60.0, 600, m.w_b);
    let k = build_kernel(&m, &p, &grid, &ctrl).unwrap();
    let mu = invariant_density(&k, &ctrl).unwrap();
    let et = expected_jump_time(&k, &mu);
    let init = InitialLaw::Uniform { v: (m.v_r, m.v_r), w: (p.w23, p.w23 + 10.0) };
    let paths = 400;
    let count = |t: f64, base: u64| -> f64 {
        (0..paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = Stream::new(3, tag::LINEAR, base + i as u64);
                simulate_linear(&m, &init, &Kappa::zero(), 0.0, t, &[], &mut rng, &ctrl).unwrap().record.jumps() as f64
            })
            .sum::<f64>()
            / paths as f64
    };
    let (c1, c2) = (count(20.0, 0), count(40.0, 10_000));
    let slope = (c2 - c1) / 20.0;
    assert!(c1.is_finite() && c2 > c1);
    assert!((slope * et - 1.0).abs() < 0.05, "slope {slope}, 1/E T1 = {}", 1.0 / et);
}
