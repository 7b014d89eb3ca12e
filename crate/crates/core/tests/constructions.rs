use tailstorm_core::estimate::empirical_spectral_tail;
use tailstorm_core::general::GeneralSimulator;
use tailstorm_core::m3::{fdd_cdf, max_stability_from_paths, M3Simulator, StopPolicy};
use tailstorm_core::path::{column, simulate_paths, PathSource, PathWindow};
use tailstorm_core::rng::derive_stream;
use tailstorm_core::stats::{ecdf_at, energy_test, PermutationOptions};
use tailstorm_core::*;

fn a1() -> Alpha {
    Alpha::new(1.0).unwrap()
}

fn features(paths: &[PathWindow], lags: &[i64]) -> Vec<Vec<f64>> {
    paths
        .iter()
        .map(|p| lags.iter().map(|&t| p.value(t).unwrap().ln_1p()).collect())
        .collect()
}

fn general(model: &SpectralModel, bounds: (i64, i64), seed: u64) -> GeneralSimulator {
    let mut rng = derive_stream(seed, &["general-setup"]);
    GeneralSimulator::new(model, a1(), bounds, 16, StopPolicy::default(), 0.0, &mut rng).unwrap()
}

#[test]
fn m3_and_general_agree_for_mma() {
    let mma = model_mma(0.5, a1()).unwrap();
    let m3 = M3Simulator::new(&mma, a1(), &NormSpec::Sup, (0, 3), StopPolicy::default()).unwrap();
    let gen = general(&mma, (0, 3), 1);
    let mut rng = derive_stream(1, &["equivalence"]);
    let a = simulate_paths(&m3, 3000, &mut rng).unwrap();
    let b = simulate_paths(&gen, 3000, &mut rng).unwrap();
    let lags = [0, 1, 2, 3];
    let r = energy_test(&features(&a, &lags), &features(&b, &lags), PermutationOptions::default(), &mut rng)
        .unwrap();
    assert!(r.p_value.unwrap() > 0.001, "{r:?}");
}

fn stationarity(source: &dyn PathSource, seed: u64) {
    // law of (Z_0, Z_1) against law of (Z_2, Z_3)
    let mut rng = derive_stream(seed, &["stationarity"]);
    let paths = simulate_paths(source, 3000, &mut rng).unwrap();
    let (left, right) = paths.split_at(1500);
    let r = energy_test(&features(left, &[0, 1]), &features(right, &[2, 3]), PermutationOptions::default(), &mut rng)
        .unwrap();
    assert!(r.p_value.unwrap() > 0.001, "{r:?}");
}

#[test]
fn both_constructions_are_stationary() {
    let mma = model_mma(0.5, a1()).unwrap();
    // a pattern and its shift, weighted as the time-change formula requires
    let table = model_finite_table(
        vec![
            (2.0 / 3.0, SpectralWindow::scalar(0, &[1.0, 0.5], Outside::Zero).unwrap()),
            (1.0 / 3.0, SpectralWindow::scalar(-1, &[2.0, 1.0], Outside::Zero).unwrap()),
        ],
        &NormSpec::Sup,
    )
    .unwrap();
    for (k, m) in [mma, table].iter().enumerate() {
        let m3 = M3Simulator::new(m, a1(), &NormSpec::Sup, (0, 3), StopPolicy::default()).unwrap();
        stationarity(&m3, 10 + k as u64);
        stationarity(&general(m, (0, 3), 20 + k as u64), 30 + k as u64);
    }
}

#[test]
fn general_paths_are_max_stable() {
    let grid = [0.5, 1.0, 2.0];
    let lags = [0, 1];
    for (k, m) in [model_mma(0.5, a1()).unwrap(), model_periodic(), model_delta(1).unwrap()]
        .iter()
        .enumerate()
    {
        let mut rng = derive_stream(k as u64, &["maxstab-general"]);
        let paths = simulate_paths(&general(m, (0, 1), k as u64), 5000, &mut rng).unwrap();
        for power in [2, 3] {
            let r = max_stability_from_paths(&paths, a1(), power, &grid, &lags, 3.5).unwrap();
            assert!(r.passed(), "{} k={power}: {r:?}", m.name());
        }
    }
}

#[test]
fn fdd_formula_matches_general_paths() {
    let mma = model_mma(0.5, a1()).unwrap();
    let mut rng = derive_stream(7, &["fdd"]);
    let paths = simulate_paths(&general(&mma, (0, 1), 7), 5000, &mut rng).unwrap();
    let (z0, z1) = (column(&paths, 0, 0), column(&paths, 1, 0));
    for (x0, x1) in [(1.0, 1.0), (0.5, 2.0), (2.0, 0.5)] {
        let joint: Vec<f64> = z0.iter().zip(&z1).map(|(a, b)| a.max(b * x0 / x1)).collect();
        let (p, se) = ecdf_at(&joint, x0);
        let f = fdd_cdf(&mma, a1(), &NormSpec::Sup, 0, &[vec![x0], vec![x1]], 2000, &mut rng).unwrap();
        // exponent (1 - q) / x1 + max(1 / x0, phi / x1) with q = phi = 0.5
        let exact = (-(0.5 / x1 + f64::max(1.0 / x0, 0.5 / x1))).exp();
        assert!((f.probability - exact).abs() < 1e-9, "{f:?} vs {exact}");
        assert!((p - exact).abs() <= 3.5 * se.max(1e-3), "({x0}, {x1}): {p} vs {exact}");
    }
}

#[test]
fn periodic_spectral_tail_from_general_paths() {
    let mut rng = derive_stream(8, &["periodic-tail"]);
    let paths = simulate_paths(&general(&model_periodic(), (0, 5), 8), 40_000, &mut rng).unwrap();
    let est = empirical_spectral_tail(&paths, 0.99, 0, 5, &NormSpec::Sup).unwrap();
    for lag in [2, 4] {
        assert!(est.column(lag, 0).iter().all(|&x| x == 1.0));
    }
    // odd lags carry the independent lattice, which vanishes in the limit
    let odd = est.column(1, 0);
    let small = odd.iter().filter(|&&x| x < 0.5).count() as f64 / odd.len() as f64;
    assert!(small > 0.9, "{small}");
}
