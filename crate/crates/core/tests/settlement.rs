mod common;

use std::collections::HashSet;

use common::fixture;
use lem_core::formulation::Variant;
use lem_core::market::solve_central;
use lem_core::mpc::field::Zp;
use lem_core::mpc::{Mpc, SharedVec};
use lem_core::settlement::commit::{
    commit, commit_with, verify_opening, Commitment, EqualityProof, PrimeGroup, Ristretto, ToyGroup, TOY_ORDER,
};
use lem_core::settlement::dvs::{dvs_commit, dvs_phase1, dvs_phase2_prove, dvs_phase2_verify, Phase2Claim};
use lem_core::settlement::{compute_payoffs, imbalance_settlement, plain_payoffs, RegulationPrices, SettlementError};
use lem_core::solver::SolverSettings;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const SMALL: [&str; 3] = ["two_node.toml", "three_node.toml", "five_node.toml"];

#[test]
fn flexibility_payments_net_to_zero() {
    for file in SMALL {
        let sc = fixture(file);
        let sol = solve_central(&sc, Variant::ChanceConstrained, &SolverSettings::default()).unwrap();
        let pay = plain_payoffs(&sc, &sol, &sol.duals).unwrap();
        for t in 0..sc.steps() {
            let net: f64 = pay.iter().map(|p| p.flexibility[t]).sum();
            assert!(net.abs() < 1e-6, "{file} t={t}: {net}");
        }
    }
}

#[test]
fn secure_payoffs_match_plaintext() {
    for file in SMALL {
        let sc = fixture(file);
        let sol = solve_central(&sc, Variant::ChanceConstrained, &SolverSettings::default()).unwrap();
        let plain = plain_payoffs(&sc, &sol, &sol.duals).unwrap();
        let n = sc.node_count();
        let mut mpc = Mpc::new(n, Mpc::default_theta(n), 9).unwrap();
        let secure = compute_payoffs(&sc, &sol, &sol.duals, true, &mut mpc).unwrap();
        let tol = mpc.fx.ulp() * sc.steps() as f64 * 4.0;
        for (p, s) in plain.iter().zip(&secure.opened) {
            assert!((p.total - s).abs() <= tol, "{file} node {}: {} vs {s}", p.node, p.total);
        }
        assert_eq!(compute_payoffs(&sc, &sol, &sol.duals, false, &mut mpc).unwrap_err(), SettlementError::Unconverged);
    }
}

fn ordered_prices() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    prop::collection::vec((0.0f64..2.0, 0.0f64..1.0, 0.0f64..1.0), 1..6).prop_map(|v| {
        let lam: Vec<f64> = v.iter().map(|x| x.0).collect();
        let up = v.iter().map(|x| x.0 + x.1).collect();
        let down = v.iter().map(|x| x.0 - x.2).collect();
        (lam, up, down)
    })
}

proptest! {
    #[test]
    fn two_price_settlement_never_runs_a_deficit(
        (lam, up, down) in ordered_prices(),
        nodes in 1usize..8,
        seed in any::<u64>(),
    ) {
        let steps = lam.len();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let sched: Vec<Vec<f64>> = (0..nodes).map(|_| (0..steps).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let actual: Vec<Vec<f64>> = sched.iter().map(|r| r.iter().map(|s| s + rng.random_range(-0.5..0.5)).collect()).collect();
        let out = imbalance_settlement(&sched, &actual, &RegulationPrices { day_ahead: lam, up, down }).unwrap();
        for s in out.operator_surplus() {
            prop_assert!(s >= -1e-12, "deficit {s}");
        }
    }
}

#[test]
fn misordered_prices_are_rejected() {
    let p = RegulationPrices { day_ahead: vec![1.0, 1.0], up: vec![1.2, 0.9], down: vec![0.8, 0.8] };
    let rows = vec![vec![0.0, 0.0]];
    assert_eq!(imbalance_settlement(&rows, &rows, &p).unwrap_err(), SettlementError::PriceOrder(1));
    let short = vec![vec![0.0]];
    assert!(matches!(imbalance_settlement(&rows, &short, &p), Err(SettlementError::Shape(_))));
}

/// Shares `balances` with node n as the owner of entry n.
fn stored(mpc: &mut Mpc, balances: &[f64]) -> SharedVec {
    let inputs: Vec<Vec<_>> = balances.iter().map(|&b| vec![mpc.fx.encode(b).unwrap()]).collect();
    let parts = mpc.input_many(&inputs).unwrap();
    SharedVec::concat(&parts.iter().collect::<Vec<_>>())
}

#[test]
fn phase1_detects_every_tampering() {
    for trial in 0..100u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(trial);
        let n = rng.random_range(3..=7);
        let balances: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let mut mpc = Mpc::new(n, Mpc::default_theta(n), trial).unwrap();
        let shares = stored(&mut mpc, &balances);
        assert!(dvs_phase1(&mut mpc, &shares, &balances).unwrap().iter().all(|&ok| ok));
        let cheat = rng.random_range(0..n);
        let delta = rng.random_range(0.1..10.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let mut reinput = balances.clone();
        reinput[cheat] += delta;
        let verdict = dvs_phase1(&mut mpc, &shares, &reinput).unwrap();
        for (node, ok) in verdict.into_iter().enumerate() {
            assert_eq!(ok, node != cheat, "trial {trial}: node {node}, cheat {cheat}, δ={delta}");
        }
    }
}

fn phase2_roundtrip<G: PrimeGroup>(seed: u64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let balances: Vec<i128> = (0..4).map(|_| rng.random_range(-1_000_000..1_000_000)).collect();
    let published = dvs_commit::<G, _>(&balances, &mut rng);
    for (n, &b) in balances.iter().enumerate() {
        let (c, o) = (&published.commitments[n], &published.openings[n]);
        assert!(verify_opening(c, o));
        let honest = dvs_phase2_prove(c, o, b, &mut rng);
        assert!(dvs_phase2_verify(c, &honest));
        // Any verifier holding only the public records reaches the same verdict.
        let rec = honest.record(n, c);
        let replay = Phase2Claim::<G> {
            fresh: Commitment::from_hex(&rec.fresh).unwrap(),
            proof: EqualityProof::from_hex(&rec.proof).unwrap(),
        };
        assert!(dvs_phase2_verify(&Commitment::<G>::from_hex(&rec.clearing).unwrap(), &replay));

        let lie = dvs_phase2_prove(c, o, b + 1, &mut rng);
        assert!(!dvs_phase2_verify(c, &lie));
        // A proof that held for another node's commitment does not transfer.
        let other = &published.commitments[(n + 1) % balances.len()];
        assert!(!dvs_phase2_verify(other, &honest));
        // Nor does a random transcript.
        let forged = Phase2Claim {
            fresh: honest.fresh,
            proof: EqualityProof::new(
                G::exp(G::generator(), G::random_scalar(&mut rng)),
                G::exp(G::generator(), G::random_scalar(&mut rng)),
                G::random_scalar(&mut rng),
            ),
        };
        assert!(!dvs_phase2_verify(c, &forged));
    }
}

#[test]
fn phase2_is_complete_and_sound_on_ristretto() {
    for seed in 0..5 {
        phase2_roundtrip::<Ristretto>(seed);
    }
}

#[test]
fn toy_group_commitments_bind() {
    // (m, ρ) ↦ (g^ρ, g^m h^ρ) is injective on Z_101², so no second opening exists.
    let q = TOY_ORDER;
    let mut seen = HashSet::new();
    for m in 0..q {
        for rho in 0..q {
            let c = commit_with::<ToyGroup>(Zp::new(m), Zp::new(rho));
            assert!(seen.insert((c.a, c.b)), "collision at m={m} ρ={rho}");
        }
    }
    assert_eq!(seen.len() as u64, q * q);
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let (c, o) = commit::<ToyGroup, _>(Zp::new(17), &mut rng);
    let openings = (0..q).flat_map(|m| (0..q).map(move |r| (m, r)));
    let matches: Vec<_> =
        openings.filter(|&(m, r)| commit_with::<ToyGroup>(Zp::new(m), Zp::new(r)) == c).collect();
    assert_eq!(matches, vec![(17, o.rho.value())]);
}

#[test]
fn toy_group_proofs_only_accept_equal_messages() {
    // The challenge space has 101 elements, so a false proof slips through
    // with probability 1/101 per attempt.
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut false_accepts = 0;
    for m in 0..TOY_ORDER {
        let (c1, o1) = commit::<ToyGroup, _>(Zp::new(m), &mut rng);
        let (c2, o2) = commit::<ToyGroup, _>(Zp::new(m), &mut rng);
        assert!(EqualityProof::prove(&c1, &o1, &c2, &o2, &mut rng).verify(&c1, &c2));
        let (c3, o3) = commit::<ToyGroup, _>(Zp::new((m + 1) % TOY_ORDER), &mut rng);
        false_accepts += EqualityProof::prove(&c1, &o1, &c3, &o3, &mut rng).verify(&c1, &c3) as u32;
    }
    assert!(false_accepts <= 5, "{false_accepts} false accepts in {TOY_ORDER}");
}
