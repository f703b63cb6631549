use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vqt_core::circuit::{build_ansatz, AnsatzSpec, RotationScheme};
use vqt_core::mps::{partial_trace_to_mpo, run_circuit_mps, DEFAULT_SVD_TOL};
use vqt_core::spinchain::{energy_expectation, ground_state_lanczos, XxzParams};
use vqt_core::statevector::{overlap, reduced_density, run_circuit, swap_test, swap_test_p1, ShotPlan};
use vqt_core::tomography::{reconstruct, reconstruction_fidelity, train, EstimatorConfig, Init, Target, TargetKind, TrainConfig};

fn random_theta(spec: &AnsatzSpec, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..spec.parameter_count()).map(|_| rng.random_range(-PI..PI)).collect()
}

#[test]
fn ground_state_training_and_reconstruction_agree() {
    let gs = ground_state_lanczos(&XxzParams::new(6, 1.0, 1.0, 1.0).unwrap(), 1e-10, 100, 0).unwrap();
    let energy = energy_expectation(&gs.vector, &gs.params).unwrap();
    assert!((energy - gs.energy).abs() < 1e-9);
    let target = Target::Pure(gs.vector);
    let spec = AnsatzSpec::new(6, 4, RotationScheme::RyOnly);
    let cfg = TrainConfig { max_iterations: 200, ..TrainConfig::default() };
    let rec = train(&target, &spec, &EstimatorConfig::exact(), &cfg).unwrap();
    let trained = rec.final_exact_fidelity();
    assert!(trained > 0.9, "{trained}");
    let mps = reconstruct(&rec.final_theta, &spec, TargetKind::Pure, None, DEFAULT_SVD_TOL).unwrap();
    assert!(mps.bond_dimension() <= 4);
    let f = reconstruction_fidelity(&mps, &target).unwrap();
    assert!((f - trained).abs() < 1e-9);
}

#[test]
fn planted_state_is_recovered_from_its_own_parameters() {
    let spec = AnsatzSpec::new(5, 3, RotationScheme::AlternatingXy);
    let theta = random_theta(&spec, 4);
    let target = Target::Pure(run_circuit(&build_ansatz(&spec, &theta).unwrap()).unwrap());
    let cfg = TrainConfig { init: Init::Explicit(theta.clone()), max_iterations: 5, ..TrainConfig::default() };
    let rec = train(&target, &spec, &EstimatorConfig::exact(), &cfg).unwrap();
    assert!(rec.rows[0].exact_loss < 1e-12);
    let rebuilt = reconstruct(&theta, &spec, TargetKind::Pure, None, DEFAULT_SVD_TOL).unwrap();
    assert!((reconstruction_fidelity(&rebuilt, &target).unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn mixed_reconstruction_matches_dense_reduction() {
    let spec = AnsatzSpec::new(6, 4, RotationScheme::AlternatingXy);
    let theta = random_theta(&spec, 9);
    let psi = run_circuit(&build_ansatz(&spec, &theta).unwrap()).unwrap();
    let rho = reduced_density(&psi, 3).unwrap();
    let mpo = partial_trace_to_mpo(&run_circuit_mps(&build_ansatz(&spec, &theta).unwrap(), None, DEFAULT_SVD_TOL).unwrap(), 3).unwrap();
    let dense = mpo.to_dense().unwrap();
    for (a, b) in dense.entries().iter().zip(rho.entries()) {
        assert!((a - b).norm() < 1e-10);
    }
    // tr(rho^2) is the mixed-mode fidelity of the target with itself.
    let purity: f64 = (0..8).flat_map(|i| (0..8).map(move |j| (i, j))).map(|(i, j)| (rho.get(i, j) * rho.get(j, i)).re).sum();
    let f = reconstruction_fidelity(&reconstruct(&theta, &spec, TargetKind::Mixed, None, DEFAULT_SVD_TOL).unwrap(), &Target::Mixed(rho))
        .unwrap();
    assert!((f - purity).abs() < 1e-10);
}

#[test]
fn sampled_swap_test_concentrates_on_exact_overlap() {
    let spec = AnsatzSpec::new(4, 2, RotationScheme::AlternatingXy);
    let a = run_circuit(&build_ansatz(&spec, &random_theta(&spec, 1)).unwrap()).unwrap();
    let b = run_circuit(&build_ansatz(&spec, &random_theta(&spec, 2)).unwrap()).unwrap();
    let exact = overlap(&a, &b).unwrap().norm_sqr();
    assert!((1.0 - 2.0 * swap_test_p1(&a, &b).unwrap() - exact).abs() < 1e-12);
    let shots = 200_000;
    let est = swap_test(&a, &b, &ShotPlan::sampled(shots, 5).unwrap()).unwrap();
    // Estimate is sqrt(1 - 2 p1); compare squared values within ~5 standard deviations.
    let p1 = (1.0 - exact) / 2.0;
    let sd = 2.0 * (p1 * (1.0 - p1) / shots as f64).sqrt();
    assert!((est * est - exact).abs() < 5.0 * sd, "{est} vs {exact}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn mps_and_dense_simulators_agree(n in 1usize..8, d in 0usize..7, seed in any::<u64>(), xy in any::<bool>()) {
        let scheme = if xy { RotationScheme::AlternatingXy } else { RotationScheme::RyOnly };
        let spec = AnsatzSpec::new(n, d, scheme);
        let circ = build_ansatz(&spec, &random_theta(&spec, seed)).unwrap();
        let dense = run_circuit(&circ).unwrap();
        let mps = run_circuit_mps(&circ, None, DEFAULT_SVD_TOL).unwrap();
        prop_assert!(mps.to_statevector().unwrap().max_abs_diff(&dense) < 1e-10);
        prop_assert!(mps.bond_dimension() <= 1 << d.div_ceil(2));
        prop_assert!(mps.is_right_canonical(1e-10));
    }
}
