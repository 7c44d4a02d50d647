use mkv_neuro::meanfield::{stationary_residual, ResidualSetup};
use mkv_neuro::{Control, ModelSpec};

#[test]
fn residual_is_reproducible() {
    let model = ModelSpec::fig2();
    let ctrl = Control::default();
    let setup = ResidualSetup::new(&model, 5.0, 400, &ctrl).unwrap();
    for kappa in [0.5, 2.0, 4.5] {
        let a = stationary_residual(&model, &setup, kappa, 0.5, &ctrl).unwrap();
        let b = stationary_residual(&model, &setup, kappa, 0.5, &ctrl).unwrap();
        assert!((a.g - b.g).abs() <= 1e-12, "{a:?} {b:?}");
        assert!(a.e_t1 > 0.0);
    }
}

/// Empirical on this range: `kappa E T1` grows with `kappa`, so each J has one root.
#[test]
fn residual_increases_in_kappa() {
    let model = ModelSpec::fig2();
    let ctrl = Control::default();
    let setup = ResidualSetup::new(&model, 5.0, 400, &ctrl).unwrap();
    let g: Vec<f64> = (0..=10).map(|k| stationary_residual(&model, &setup, 0.5 * k as f64, 1.0, &ctrl).unwrap().g).collect();
    assert!(g.windows(2).all(|w| w[1] > w[0]), "{g:?}");
}
