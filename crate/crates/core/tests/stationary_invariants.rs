use std::sync::OnceLock;

use mkv_neuro::dynamics::{build_partition, Partition};
use mkv_neuro::stationary::{build_kernel, choose_w_max, expected_jump_time, invariant_density, GridMeasure, KernelMatrix, WGrid};
use mkv_neuro::{Control, ModelSpec};

struct Solved {
    kernel: KernelMatrix,
    mu: GridMeasure,
}

fn solve(model: &ModelSpec, part: &Partition, w_max: f64, n_w: usize) -> Solved {
    let ctrl = Control::default();
    let grid = WGrid::aligned(part.w_star, w_max, n_w, model.w_b);
    let kernel = build_kernel(model, part, &grid, &ctrl).unwrap();
    let mu = invariant_density(&kernel, &ctrl).unwrap();
    Solved { kernel, mu }
}

/// Coarse and fine solutions on the same window.
fn pair() -> &'static (Solved, Solved) {
    static CELL: OnceLock<(Solved, Solved)> = OnceLock::new();
    CELL.get_or_init(|| {
        let model = ModelSpec::fig2();
        let part = build_partition(&model, (0.0, 0.0), 1.0).unwrap();
        let w_max = choose_w_max(&model, &part, &Control::default(), 1e-8).unwrap();
        (solve(&model, &part, w_max, 1000), solve(&model, &part, w_max, 2000))
    })
}

#[test]
fn power_iteration_reaches_a_fixed_point() {
    let (coarse, fine) = pair();
    for s in [coarse, fine] {
        let (next, _) = s.kernel.step(&s.mu.mass);
        let total: f64 = next.iter().sum();
        let l1: f64 = next.iter().zip(&s.mu.mass).map(|(a, b)| (a / total - b).abs()).sum();
        assert!(l1 < Control::default().fp_tol * 10.0, "residual {l1}");
        assert!((s.mu.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.mu.mass.iter().all(|m| *m >= 0.0));
    }
}

/// Halving the cell barely moves the law: compare CDFs on the coarse edges.
#[test]
fn refinement_changes_the_law_little() {
    let (coarse, fine) = pair();
    let g = &coarse.mu.grid;
    let mut gap = 0.0f64;
    for i in 0..=g.n {
        let w = g.edge(i);
        gap = gap.max((coarse.mu.tail(w) - fine.mu.tail(w)).abs());
    }
    assert!(gap < 0.01, "sup CDF gap {gap}");
}

#[test]
fn mean_jump_time_is_stable_under_refinement() {
    let (coarse, fine) = pair();
    let a = expected_jump_time(&coarse.kernel, &coarse.mu);
    let b = expected_jump_time(&fine.kernel, &fine.mu);
    assert!((a - b).abs() / b < 0.01, "{a} vs {b}");
}

/// `u p(u)` vanishes at the top of the support.
#[test]
fn density_decays_faster_than_one_over_u() {
    let mu = &pair().1.mu;
    let p = mu.density();
    let g = &mu.grid;
    let weighted: Vec<f64> = (0..g.n).map(|i| p[i] * g.center(i).abs()).collect();
    let peak = weighted.iter().cloned().fold(0.0, f64::max);
    let top = weighted[g.n * 9 / 10..].iter().cloned().fold(0.0, f64::max);
    assert!(top < 1e-4 * peak, "top {top} peak {peak}");
    // and keeps shrinking along the last fifth
    let fifth = g.n / 5;
    let block = |k: usize| weighted[g.n - (k + 1) * fifth / 4..g.n - k * fifth / 4].iter().sum::<f64>();
    assert!(block(0) <= block(1) && block(1) <= block(2) && block(2) <= block(3));
}

/// Soft: a small change of the current moves the law by a comparable amount.
#[test]
fn law_is_continuous_in_the_current() {
    let delta = 1e-3;
    let ctrl = Control::default();
    let base = ModelSpec::fig2();
    let part = build_partition(&base, (0.0, delta), 1.0).unwrap();
    let w_max = choose_w_max(&base, &part, &ctrl, 1e-8).unwrap();
    let a = solve(&base, &part, w_max, 1000);
    let b = solve(&base.with_current(delta), &part, w_max, 1000);
    let g = &a.mu.grid;
    let gap = (0..=g.n).map(|i| (a.mu.tail(g.edge(i)) - b.mu.tail(g.edge(i))).abs()).fold(0.0, f64::max);
    let ta = expected_jump_time(&a.kernel, &a.mu);
    let tb = expected_jump_time(&b.kernel, &b.mu);
    eprintln!("current shift {delta}: sup CDF gap {gap:.3e}, E T1 {ta:.6} -> {tb:.6}");
    assert!(gap < 0.05 && (ta - tb).abs() / ta < 0.05);
}
