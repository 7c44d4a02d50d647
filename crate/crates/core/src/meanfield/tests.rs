use super::*;

fn setup(kappa_max: f64) -> (ModelSpec, ResidualSetup) {
    let m = ModelSpec::fig2();
    let s = ResidualSetup::new(&m, kappa_max, 400, &Control::default()).unwrap();
    (m, s)
}

#[test]
fn residual_at_zero_current() {
    let (m, s) = setup(4.0);
    let r = stationary_residual(&m, &s, 0.0, 1.3, &Control::default()).unwrap();
    assert_eq!(r.g, -1.3);
    assert!(r.e_t1 > 0.0);
    let again = stationary_residual(&m, &s, 0.0, 1.3, &Control::default()).unwrap();
    assert_eq!(r, again);
}

#[test]
fn residual_is_continuous() {
    let (m, s) = setup(8.0);
    let ctrl = Control::default();
    for k in [0.3, 1.7, 4.0, 5.28, 7.5] {
        let a = stationary_residual(&m, &s, k, 0.5, &ctrl).unwrap().g;
        let b = stationary_residual(&m, &s, k + 1e-4, 0.5, &ctrl).unwrap().g;
        assert!((a - b).abs() < 1e-2 * (1.0 + a.abs()), "{k}: {a} {b}");
    }
}

#[test]
fn fixed_point_brackets_and_slope_at_origin() {
    let (m, s) = setup(4.0);
    let ctrl = Control::default();
    let zero = solve_fixed_point(&m, &s, 0.0, 1.0, &ctrl).unwrap();
    assert_eq!(zero.kappa, 0.0);
    let r = solve_fixed_point(&m, &s, 0.5, 0.0, &ctrl).unwrap();
    assert!(r.residual.abs() < ctrl.root_tol * 1.5);
    let d = 10.0 * ctrl.root_tol;
    assert!(stationary_residual(&m, &s, r.kappa - d, 0.5, &ctrl).unwrap().g < 0.0);
    assert!(stationary_residual(&m, &s, r.kappa + d, 0.5, &ctrl).unwrap().g > 0.0);
    let small = solve_fixed_point(&m, &s, 1e-3, 0.0, &ctrl).unwrap();
    let slope = small.kappa / 1e-3;
    assert!((slope * zero.e_t1 - 1.0).abs() < 1e-2, "{slope} {}", zero.e_t1);
}

#[test]
fn continuation_is_increasing_through_the_origin() {
    let (m, s) = setup(6.0);
    let js: Vec<f64> = (0..=5).map(|k| 0.2 * k as f64).collect();
    let curve = continuation_in_j(&m, &s, &js, &Control::default()).unwrap();
    assert_eq!(curve.len(), js.len());
    assert_eq!((curve[0].j, curve[0].kappa), (0.0, 0.0));
    assert!(curve.iter().all(|r| r.converged));
    assert!(curve.windows(2).all(|p| p[1].kappa > p[0].kappa));
    let mut buf = Vec::new();
    write_curve_csv(&curve, &mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("J,kappa,E_T1,residual,converged\n0.0,0.0,"));
    assert!(continuation_in_j(&m, &s, &[0.0, 0.5, 0.4], &Control::default()).is_err());
}

fn mkv_model(j: f64) -> (ModelSpec, Partition) {
    let m = ModelSpec { d: 0.5, ..ModelSpec::fig2().with_coupling(j) };
    let p = build_partition(&m, (0.0, 0.0), 1.0).unwrap();
    (m, p)
}

#[test]
fn uncoupled_mkv_has_zero_current() {
    let (m, p) = mkv_model(0.0);
    let cfg = MkvConfig { copies: 200, horizon: 1.2, seed: 1, nodes_per_block: 10 };
    let init = InitialLaw::Uniform { v: (0.0, 1.0), w: (2.0, 6.0) };
    let path = simulate_mkv(&m, &p, &cfg, &init, &Control::default()).unwrap();
    assert!(path.kappa.iter().all(|k| *k == 0.0));
    assert!((path.times.last().unwrap() - 1.2).abs() < 1e-12);
    assert!(path.times.windows(2).all(|t| t[1] > t[0]));
}

#[test]
fn first_block_is_the_initial_rate_average() {
    let (m, p) = mkv_model(0.8);
    let cfg = MkvConfig { copies: 300, horizon: 1.0, seed: 5, nodes_per_block: 10 };
    let init = InitialLaw::Uniform { v: (-1.0, 1.0), w: (2.0, 6.0) };
    let path = simulate_mkv(&m, &p, &cfg, &init, &Control::default()).unwrap();
    let mean: f64 = (0..300).map(|i| m.rate(init.draw(&mut Stream::new(5, tag::INIT, i)).v)).sum::<f64>() / 300.0;
    for (t, k) in path.times.iter().zip(&path.kappa) {
        if *t < m.d {
            assert_eq!(*k, 0.8 * mean);
        }
    }
    assert!(path.times.iter().zip(&path.kappa).any(|(t, k)| *t >= m.d && *k != 0.8 * mean));
}

#[test]
fn blocks_replay_from_archived_states() {
    let (m, p) = mkv_model(1.0);
    let cfg = MkvConfig { copies: 100, horizon: 2.0, seed: 3, nodes_per_block: 8 };
    let init = InitialLaw::Point { v: 1.0, w: 4.0 };
    let mut archive = Vec::new();
    simulate_mkv_blocks(&m, &p, &cfg, &init, &Control::default(), |b| archive.push(b.clone())).unwrap();
    assert_eq!(archive.len(), 4);
    for k in 1..archive.len() {
        let prev = &archive[k - 1];
        let t0 = prev.block as f64 * m.d;
        let times: Vec<f64> = (0..=8).map(|i| t0 + m.d * i as f64 / 8.0).collect();
        let again = run_block(&m, &cfg, prev, &times, &Control::default()).unwrap();
        assert_eq!(again, archive[k]);
    }
}

#[test]
fn mkv_rejects_zero_delay() {
    let m = ModelSpec { d: 0.0, ..ModelSpec::fig2() };
    let p = build_partition(&m, (0.0, 0.0), 1.0).unwrap();
    let init = InitialLaw::Point { v: 1.0, w: 4.0 };
    assert!(simulate_mkv(&m, &p, &MkvConfig::default(), &init, &Control::default()).is_err());
}
