use mimo_testbed::capacity::{capacity_curve, CapacityCurve};
use mimo_testbed::channel::Ensemble;
use mimo_testbed::fit::{fit_alpha, fit_grid, mme, FitGrid, TESTBED_D_GRID};
use mimo_testbed::rng::RandomSeed;

const WAVELENGTH: f64 = 299_792_458.0 / 926.0e6;

fn target(
    d_halflambda: f64,
    alpha_deg: f64,
    sizes: &[usize],
    trials: usize,
    seed: u64,
) -> CapacityCurve {
    let ens = Ensemble::Vandermonde {
        spacing: d_halflambda * WAVELENGTH / 2.0,
        wavelength: WAVELENGTH,
        alpha: alpha_deg.to_radians(),
    };
    capacity_curve(&ens, sizes, 10.0, trials, RandomSeed(seed)).unwrap()
}

fn grid(d: &[f64], alphas: &[f64], sizes: &[usize], trials: usize) -> FitGrid {
    FitGrid {
        spacings_halflambda: d.to_vec(),
        alphas_deg: alphas.to_vec(),
        wavelength: WAVELENGTH,
        snr: 10.0,
        trials,
        sizes: sizes.to_vec(),
    }
}

#[test]
fn hand_computed_mme() {
    let sizes = vec![2, 4, 8];
    let a = CapacityCurve {
        sizes: sizes.clone(),
        mean_capacity: vec![1.0, 2.0, 4.0],
        std_err: vec![0.0; 3],
        trials: 1,
        snr: 10.0,
    };
    let b = CapacityCurve {
        mean_capacity: vec![1.5, 1.0, 4.0],
        ..a.clone()
    };
    // (0.25 + 1 + 0) / 3
    assert!((mme(&a, &b).unwrap() - 1.25 / 3.0).abs() < 1e-15);
    let shifted = CapacityCurve {
        mean_capacity: vec![1.3, 2.3, 4.3],
        ..a.clone()
    };
    assert!((mme(&a, &shifted).unwrap() - 0.09).abs() < 1e-12);
    assert_eq!(mme(&a, &a).unwrap(), 0.0);
}

#[test]
fn alpha_recovered_at_fixed_spacing() {
    let sizes: Vec<usize> = (2..=16).collect();
    let t = target(1.0, 30.0, &sizes, 2000, 77);
    let g = grid(&[1.0], &[20.0], &sizes, 1000);
    let best = fit_alpha(&t, 1.0, &[20.0, 25.0, 30.0, 35.0], &g, RandomSeed(78)).unwrap();
    assert_eq!(best.alpha_deg, 30.0);
    assert!((best.alpha - 30f64.to_radians()).abs() < 1e-15);
}

#[test]
fn grid_recovers_the_generating_pair() {
    let sizes: Vec<usize> = (2..=16).collect();
    let t = target(1.1, 32.0, &sizes, 2000, 91);
    let g = grid(&TESTBED_D_GRID, &[20.0, 26.0, 32.0, 40.0], &sizes, 1000);
    let fit = fit_grid(&t, &g, RandomSeed(92)).unwrap();
    assert_eq!(fit.table.len(), 16);
    assert_eq!(
        (fit.best.spacing_halflambda, fit.best.alpha_deg),
        (1.1, 32.0)
    );
    assert!((fit.best.spacing - 1.1 * WAVELENGTH / 2.0).abs() < 1e-15);
    let min = fit
        .table
        .iter()
        .map(|r| r.mme)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(fit.best.score, min);
}

#[test]
fn fit_is_reproducible() {
    let sizes = [2, 4, 6];
    let t = target(1.2, 28.0, &sizes, 100, 5);
    let g = grid(&[1.0, 1.2], &[26.0, 28.0], &sizes, 50);
    let a = fit_grid(&t, &g, RandomSeed(6)).unwrap();
    let b = fit_grid(&t, &g, RandomSeed(6)).unwrap();
    assert_eq!(a, b);
}
