mod common;

use common::*;
use lem_core::mpc::fabric::MsgKind;
use lem_core::mpc::field::{Field, Fp};
use lem_core::mpc::shamir::{reconstruct, share};
use lem_core::mpc::{Mpc, MpcError};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn programs_stay_within_fixed_point_bounds(program in any::<u64>(), seed in any::<u64>()) {
        let p = Program::random(program);
        let excess = program_excess(&p, seed).unwrap();
        prop_assert!(excess <= 0.0, "{p:?} exceeds its bound by {excess}");
    }

    #[test]
    fn sharing_is_additively_homomorphic(a in -1e6f64..1e6, b in -1e6f64..1e6, c in -100f64..100.0, seed in any::<u64>()) {
        let mut m = Mpc::new(5, 2, seed).unwrap();
        let (ea, eb) = (m.fx.encode(a).unwrap(), m.fx.encode(b).unwrap());
        let sa = m.input(1, &[ea]).unwrap();
        let sb = m.input(3, &[eb]).unwrap();
        let sum = m.add(&sa, &sb);
        let diff = m.sub(&sa, &sb);
        let ec = Fp::from_i128(c.round() as i128);
        let scaled = m.mul_scalar(&sa, ec);
        let out = m.open(&lem_core::mpc::SharedVec::concat(&[&sum, &diff, &scaled])).unwrap();
        prop_assert_eq!(out[0], ea + eb);
        prop_assert_eq!(out[1], ea - eb);
        prop_assert_eq!(out[2], ea * ec);
    }

    #[test]
    fn comparison_matches_plaintext(a in -1e5f64..1e5, b in -1e5f64..1e5, seed in any::<u64>()) {
        let mut m = Mpc::new(3, 1, seed).unwrap();
        let sa = m.input_fixed(0, &[a, b, a]).unwrap();
        let sb = m.input_fixed(2, &[b, a, a]).unwrap();
        let lt = m.less_than(&sa, &sb).unwrap();
        let out = m.open(&lt).unwrap();
        let (qa, qb) = (m.fx.encode(a).unwrap().to_i128(), m.fx.encode(b).unwrap().to_i128());
        prop_assert_eq!(out, vec![Fp::from_u64((qa < qb) as u64), Fp::from_u64((qb < qa) as u64), Fp::ZERO]);
    }
}

#[test]
fn threshold_is_exact_for_small_party_counts() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for n in 1..=7usize {
        for theta in 0..n {
            let secret = Fp::random(&mut rng);
            let shares = share(secret, theta, n, 1, &mut rng).unwrap();
            for k in theta + 1..=n {
                for set in subsets(n, k) {
                    let picked: Vec<_> = set.iter().map(|&i| shares[i]).collect();
                    assert_eq!(reconstruct(&picked, theta).unwrap(), secret, "n={n} Θ={theta} {set:?}");
                }
            }
            for set in subsets(n, theta) {
                let picked: Vec<_> = set.iter().map(|&i| shares[i]).collect();
                assert_eq!(
                    reconstruct(&picked, theta),
                    Err(MpcError::InsufficientShares { have: theta, need: theta + 1 })
                );
            }
        }
    }
}

#[test]
fn tampered_share_is_caught_by_redundancy() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut shares = share(Fp::from_u64(42), 2, 5, 0, &mut rng).unwrap();
    shares[4].value += Fp::ONE;
    assert_eq!(reconstruct(&shares, 2), Err(MpcError::InconsistentShares));
    assert_eq!(reconstruct(&shares[..3], 2).unwrap(), Fp::from_u64(42));
}

#[test]
fn multiplication_needs_an_honest_majority() {
    let mut m = Mpc::new(4, 2, 0).unwrap();
    let a = m.input_fixed(0, &[1.0]).unwrap();
    assert_eq!(m.mul(&a, &a), Err(MpcError::MulThreshold { theta: 2, parties: 4 }));
    assert!(matches!(Mpc::new(3, 3, 0), Err(MpcError::Threshold { .. })));
}

#[test]
fn coalition_view_looks_uniform_and_ignores_input_swaps() {
    let inputs = [1.25, -3.5, 2.0];
    let swapped = [1.25, 2.0, -3.5];
    let coalition = [0];
    let mut shares = [0u64; BUCKETS];
    let (mut a, mut b) = ([0u64; BUCKETS], [0u64; BUCKETS]);
    for run in 0..40 {
        let m = symmetric_run(&inputs, run);
        view_histogram(&m, &coalition, &[MsgKind::Share], &mut shares);
        view_histogram(&m, &coalition, &[MsgKind::Share, MsgKind::Open], &mut a);
        let m = symmetric_run(&swapped, 1000 + run);
        view_histogram(&m, &coalition, &[MsgKind::Share, MsgKind::Open], &mut b);
    }
    assert!(uniformity_p(&shares) > 0.01, "{shares:?}");
    assert!(homogeneity_p(&a, &b) > 0.01, "{a:?} vs {b:?}");
}

#[test]
fn statistics_reject_obvious_bias() {
    let mut skewed = [100u64; BUCKETS];
    skewed[0] = 400;
    assert!(uniformity_p(&skewed) < 1e-6);
    let mut other = [100u64; BUCKETS];
    other[3] = 400;
    assert!(homogeneity_p(&skewed, &other) < 1e-6);
}
