mod common;

use common::fixture;
use lem_core::admm::{AdmmSettings, Engine, Thresholds};
use lem_core::formulation::Variant;
use lem_core::mpc::Mpc;
use lem_core::secure::{
    market_theta, secure_convergence_test, secure_coordination_step, AuditLog, SecureSettings, CLEARING_FIXED_POINT,
    CONVERGED_ITEM,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Random ADMM states near and far from consensus: the secure step must open
/// the plaintext average and reach the plaintext stopping verdict.
#[test]
fn secure_step_agrees_with_plaintext_on_random_states() {
    for file in ["three_node.toml", "five_node.toml"] {
        let sc = fixture(file);
        let settings = AdmmSettings {
            thresholds: Thresholds { surplus: f64::INFINITY, ..Thresholds::default() },
            ..AdmmSettings::default()
        };
        let mut engine = Engine::new(&sc, Variant::ChanceConstrained, settings);
        engine.local_steps().unwrap();
        // Start from a consensus point so small perturbations can converge.
        let avg0 = engine.plain_average().unwrap();
        let base: Vec<f64> = engine.layout.copies.iter().map(|c| avg0[c.group]).collect();
        let n = sc.node_count();
        let mut mpc = Mpc::with_params(n, market_theta(n), 1, CLEARING_FIXED_POINT).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let bits = SecureSettings::default().compare_bits;
        let mut verdicts = [0usize; 2];
        for trial in 0..100 {
            let (spread, drift) = [(1e-6, 1e-6), (1e-2, 1e-6), (1e-6, 1e-2), (1e-2, 1e-2)][trial % 4];
            engine.state.x = base.iter().map(|v| v + rng.random_range(-spread..spread)).collect();
            let avg = engine.plain_average().unwrap();
            let z_prev: Vec<f64> = avg.iter().map(|v| v + rng.random_range(-drift..drift)).collect();
            engine.state.z = z_prev.clone();

            let mut audit = AuditLog::default();
            let step = secure_coordination_step(&mut mpc, &engine, trial, &mut audit).unwrap();
            let gap = step.z_open.iter().zip(&avg).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(gap <= 32.0 / 65536.0, "{file} trial {trial}: gap {gap}");

            let metrics = engine.apply(step.z_open.clone());
            let plain = engine.converged(&metrics);
            let shared_prev = mpc.constant_fixed(&z_prev).unwrap();
            let secure = secure_convergence_test(&mut mpc, &engine, &step, &shared_prev, bits, trial, &mut audit).unwrap();
            assert_eq!(secure, plain, "{file} trial {trial}: {metrics:?}");
            verdicts[plain as usize] += 1;
            assert_eq!(audit.records.iter().filter(|r| r.item == CONVERGED_ITEM).count(), 1);
        }
        assert!(verdicts[0] > 0 && verdicts[1] > 0, "{file}: {verdicts:?}");
    }
}
