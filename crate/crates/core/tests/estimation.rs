use tailstorm_core::estimate::{
    anchor_pattern, attractor_check, cluster_conditional_sample, decluster, empirical_spectral_tail,
    raw_source_for, tail_factorization_check, window_features, IidFrechetSource,
};
use tailstorm_core::m3::{M3Simulator, StopPolicy};
use tailstorm_core::path::simulate_paths;
use tailstorm_core::rng::derive_stream;
use tailstorm_core::stats::{energy_test, PermutationOptions};
use tailstorm_core::tcf::CheckOptions;
use tailstorm_core::*;

fn a1() -> Alpha {
    Alpha::new(1.0).unwrap()
}

#[test]
fn anchoring_then_resampling_keeps_the_law() {
    let mma = model_mma(0.5, a1()).unwrap();
    let mut rng = derive_stream(1, &["roundtrip"]);
    let n = 3000;
    let direct = mma.sample_n(&mut rng, -40, 40, n);
    let resampled: Vec<SpectralWindow> = mma
        .sample_n(&mut rng, -40, 40, n)
        .iter()
        .map(|w| {
            let p = anchor_pattern(w, &NormSpec::Sup).unwrap();
            cluster_conditional_sample(&p, a1(), &NormSpec::Sup, &mut rng).unwrap()
        })
        .collect();
    let r = energy_test(
        &window_features(&direct, -2, 2),
        &window_features(&resampled, -2, 2),
        PermutationOptions::default(),
        &mut rng,
    )
    .unwrap();
    assert!(r.p_value.unwrap() > 0.001, "{r:?}");
}

#[test]
fn factorization_holds_for_delta_and_mma() {
    let opts = CheckOptions::default();
    for (k, m) in [model_delta(1).unwrap(), model_mma(0.5, a1()).unwrap()].iter().enumerate() {
        let mut rng = derive_stream(k as u64, &["factorization"]);
        let sim = M3Simulator::new(m, a1(), &NormSpec::Sup, (0, 1), StopPolicy::default()).unwrap();
        let paths = simulate_paths(&sim, 60_000, &mut rng).unwrap();
        // lag 0 only: the independence part is degenerate for scalar series
        let r = tail_factorization_check(&paths, 0.99, 0, 0, a1(), &NormSpec::Sup, opts, &mut rng).unwrap();
        assert!(r.passed(), "{}: {r:?}", m.name());
        if m.name() == "mma" {
            let r = tail_factorization_check(&paths, 0.99, 0, 1, a1(), &NormSpec::Sup, opts, &mut rng).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }
}

#[test]
fn iid_frechet_maxima_are_exactly_frechet() {
    let delta = model_delta(1).unwrap();
    let mut rng = derive_stream(2, &["attractor"]);
    let src = IidFrechetSource { alpha: a1(), dim: 1, bounds: (0, 1) };
    let sim = M3Simulator::new(&delta, a1(), &NormSpec::Sup, (0, 1), StopPolicy::default()).unwrap();
    let reference = simulate_paths(&sim, 1000, &mut rng).unwrap();
    let r = attractor_check(&src, a1(), 100, 100.0, &[0, 1], 1000, &reference, CheckOptions::default(), &mut rng)
        .unwrap();
    assert!(r.passed(), "{r:?}");
    // a wrong normalizer is detected
    let r = attractor_check(&src, a1(), 100, 50.0, &[0, 1], 1000, &reference, CheckOptions::default(), &mut rng)
        .unwrap();
    assert!(!r.passed());
}

#[test]
fn raw_sources_exist_for_delta_and_mma_only() {
    assert!(raw_source_for(&model_delta(1).unwrap(), a1(), (0, 1)).is_ok());
    assert!(raw_source_for(&model_mma(0.5, a1()).unwrap(), a1(), (0, 1)).is_ok());
    assert!(raw_source_for(&model_periodic(), a1(), (0, 1)).is_err());
}

#[test]
fn declustered_mma_patterns_are_geometric() {
    let mma = model_mma(0.5, a1()).unwrap();
    let mut rng = derive_stream(3, &["decluster"]);
    let sim = M3Simulator::new(&mma, a1(), &NormSpec::Sup, (-3, 3), StopPolicy::default()).unwrap();
    let paths = simulate_paths(&sim, 60_000, &mut rng).unwrap();
    let est = empirical_spectral_tail(&paths, 0.995, -3, 3, &NormSpec::Sup).unwrap();
    let d = decluster(&est, &NormSpec::Sup).unwrap();
    assert_eq!(d.patterns.len() + d.skipped_at_edge, est.samples.len());
    // most anchored patterns decay as phi^t after the anchor
    let geometric = d
        .patterns
        .iter()
        .filter(|p| (1..=2).all(|t| p.window.component(t, 0).is_some_and(|x| (x - 0.5f64.powi(t as i32)).abs() < 1e-9)))
        .count();
    assert!(geometric as f64 > 0.8 * d.patterns.len() as f64, "{geometric} of {}", d.patterns.len());
}
