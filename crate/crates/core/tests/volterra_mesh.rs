use mkv_neuro::dynamics::build_partition;
use mkv_neuro::pdmp::{solve_rate_volterra, RateGridSolution, VolterraGrid};
use mkv_neuro::{Control, KappaPath, Kappa, ModelSpec, State};

fn solve(substeps: usize, kappa: &Kappa) -> RateGridSolution {
    let m = ModelSpec::fig2();
    let p = build_partition(&m, (0.0, 2.0), 1.0).unwrap();
    let grid = VolterraGrid { horizon: 1.0, n_out: 50, substeps, ..Default::default() };
    solve_rate_volterra(&m, &p, State::new(m.v_r, 5.0), kappa, &grid, &Control::default()).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn halving_the_mesh_shrinks_the_change() {
    for kappa in [Kappa::zero(), Kappa::PiecewiseLinear(KappaPath::new(vec![0.0, 1.0], vec![0.0, 2.0]).into())] {
        let r: Vec<Vec<f64>> = [2, 4, 8].iter().map(|s| solve(*s, &kappa).r0().to_vec()).collect();
        let d1 = max_diff(&r[0], &r[1]);
        let d2 = max_diff(&r[1], &r[2]);
        assert!(d2 < 4.0 * d1 && d2 < d1, "{d1} {d2}");
    }
}

/// Adjacent-node jumps of `r(0, x, .)` shrink with the mesh, as they must
/// for a continuous limit.
#[test]
fn rate_is_continuous_in_t() {
    let jumps = |s: &RateGridSolution| s.r0().windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let m = ModelSpec::fig2();
    let p = build_partition(&m, (0.0, 0.0), 1.0).unwrap();
    let ctrl = Control::default();
    let x = State::new(m.v_r, 5.0);
    let coarse = VolterraGrid { horizon: 1.0, n_out: 25, substeps: 8, ..Default::default() };
    let fine = VolterraGrid { n_out: 50, substeps: 4, ..coarse };
    let a = solve_rate_volterra(&m, &p, x, &Kappa::zero(), &coarse, &ctrl).unwrap();
    let b = solve_rate_volterra(&m, &p, x, &Kappa::zero(), &fine, &ctrl).unwrap();
    let (ja, jb) = (jumps(&a), jumps(&b));
    assert!(jb < 0.75 * ja, "{ja} {jb}");
    // and are bounded by the mesh times the local variation of p
    let h = 1.0 / 50.0;
    let p0 = b.p0();
    let dp = p0.windows(2).map(|w| (w[1] - w[0]).abs() / h).fold(0.0, f64::max);
    let r_max = b.r0().iter().copied().fold(0.0, f64::max);
    assert!(jb <= 10.0 * h * (dp + r_max), "{jb} vs {}", 10.0 * h * (dp + r_max));
}
