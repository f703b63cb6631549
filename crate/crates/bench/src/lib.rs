//! Shared fixtures for the benchmarks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vqt_core::circuit::{build_ansatz, AnsatzSpec, Circuit, RotationScheme};
use vqt_core::spinchain::{ground_state_lanczos, XxzParams};
use vqt_core::tomography::Target;

pub fn random_theta(spec: &AnsatzSpec, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..spec.parameter_count()).map(|_| rng.random_range(-PI..PI)).collect()
}

pub fn random_ansatz(n: usize, depth: usize, seed: u64) -> Circuit {
    let spec = AnsatzSpec::new(n, depth, RotationScheme::RyOnly);
    build_ansatz(&spec, &random_theta(&spec, seed)).expect("parameter count matches the ansatz")
}

pub fn xxz_target(l: usize, delta: f64) -> Target {
    let params = XxzParams::new(l, 1.0, delta, 1.0).expect("valid chain");
    Target::Pure(ground_state_lanczos(&params, 1e-10, 100, 0).expect("Lanczos converges").vector)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_deterministic() {
        assert_eq!(random_ansatz(4, 2, 1).parameters(), random_ansatz(4, 2, 1).parameters());
        assert_eq!(xxz_target(4, 1.0).n_qubits(), 4);
    }
}
