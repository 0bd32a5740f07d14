//! Double verification of re-input balances.
//!
//! Phase 1 compares a node's re-input balance on shares with the shares every
//! party stored at clearing time and opens only the verdict bit. Phase 2 lets
//! a challenged node prove, against the commitment it published at clearing
//! time, that its re-input value is the committed one without revealing it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::commit::{commit, Commitment, CommitmentRecord, EqualityProof, Opening, PrimeGroup};
use super::SettlementError;
use crate::mpc::field::{Field, Fp};
use crate::mpc::{Mpc, SharedVec};

/// Commitments published at clearing time, with the private openings kept by
/// each node.
#[derive(Debug, Clone)]
pub struct DvsClearing<G: PrimeGroup> {
    pub commitments: Vec<Commitment<G>>,
    pub openings: Vec<Opening<G>>,
}

impl<G: PrimeGroup> DvsClearing<G> {
    pub fn records(&self) -> Vec<CommitmentRecord> {
        self.commitments.iter().enumerate().map(|(node, c)| CommitmentRecord { node, commitment: c.to_hex() }).collect()
    }
}

/// Every node commits to its fixed-point balance `m_n`.
pub fn dvs_commit<G: PrimeGroup, R: Rng + ?Sized>(balances: &[i128], rng: &mut R) -> DvsClearing<G> {
    let (commitments, openings) = balances.iter().map(|&m| commit::<G, R>(G::scalar_from_i128(m), rng)).unzip();
    DvsClearing { commitments, openings }
}

/// Fixed-point integers of the balances as the owners learned them.
pub fn fixed_balances(mpc: &Mpc, opened: &[f64]) -> Result<Vec<i128>, SettlementError> {
    Ok(opened.iter().map(|&b| mpc.fx.encode(b).map(Fp::to_i128)).collect::<Result<_, _>>()?)
}

/// Tolerance of the Phase 1 comparison: two quantization steps.
pub fn phase1_tolerance(mpc: &Mpc) -> f64 {
    2.0 * mpc.fx.ulp()
}

/// Each node `n` re-inputs `reinput[n]`; returns the public verdict per node.
pub fn dvs_phase1(mpc: &mut Mpc, stored: &SharedVec, reinput: &[f64]) -> Result<Vec<bool>, SettlementError> {
    let nodes = stored.len();
    if reinput.len() != nodes || mpc.parties() != nodes {
        return Err(SettlementError::Shape(format!("{} re-inputs for {} stored balances", reinput.len(), nodes)));
    }
    let inputs: Vec<Vec<Fp>> = reinput.iter().map(|&v| mpc.fx.encode(v).map(|x| vec![x])).collect::<Result<_, _>>()?;
    let shared = mpc.input_many(&inputs)?;
    let fresh = SharedVec::concat(&shared.iter().collect::<Vec<_>>());
    let diff = mpc.sub(&fresh, stored);
    let tol = phase1_tolerance(mpc);
    let ok = mpc.is_zero(&diff, tol)?;
    Ok(mpc.open(&ok)?.into_iter().map(|b| b == Fp::ONE).collect())
}

/// A fresh commitment to the re-input value and a proof tying it to the
/// clearing-time commitment.
#[derive(Debug, Clone)]
pub struct Phase2Claim<G: PrimeGroup> {
    pub fresh: Commitment<G>,
    pub proof: EqualityProof<G>,
}

/// Hex form of a Phase 2 claim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub node: usize,
    /// Commitment published at clearing time.
    pub clearing: String,
    pub fresh: String,
    pub proof: String,
}

impl<G: PrimeGroup> Phase2Claim<G> {
    pub fn record(&self, node: usize, clearing: &Commitment<G>) -> ClaimRecord {
        ClaimRecord { node, clearing: clearing.to_hex(), fresh: self.fresh.to_hex(), proof: self.proof.to_hex() }
    }
}

/// Run by the challenged node with its clearing-time opening.
pub fn dvs_phase2_prove<G: PrimeGroup, R: Rng + ?Sized>(
    clearing: &Commitment<G>,
    opening: &Opening<G>,
    reinput: i128,
    rng: &mut R,
) -> Phase2Claim<G> {
    let (fresh, fresh_opening) = commit::<G, R>(G::scalar_from_i128(reinput), rng);
    let proof = EqualityProof::prove(clearing, opening, &fresh, &fresh_opening, rng);
    Phase2Claim { fresh, proof }
}

/// Public check; anyone holding the published commitment can run it.
pub fn dvs_phase2_verify<G: PrimeGroup>(clearing: &Commitment<G>, claim: &Phase2Claim<G>) -> bool {
    claim.proof.verify(clearing, &claim.fresh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::settlement::commit::{Ristretto, ToyGroup};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn phase1_flags_exactly_the_tampered_node() {
        let mut mpc = Mpc::new(5, 2, 11).unwrap();
        let balances = [1.5, -0.25, 3.0, 0.0, -7.125];
        let enc: Vec<Vec<Fp>> = balances.iter().map(|&b| vec![mpc.fx.encode(b).unwrap()]).collect();
        let stored = SharedVec::concat(&mpc.input_many(&enc).unwrap().iter().collect::<Vec<_>>());
        assert_eq!(dvs_phase1(&mut mpc, &stored, &balances).unwrap(), vec![true; 5]);

        let mut tampered = balances;
        tampered[2] += 1.0;
        assert_eq!(dvs_phase1(&mut mpc, &stored, &tampered).unwrap(), vec![true, true, false, true, true]);

        let mut nudged = balances;
        nudged[4] += mpc.fx.ulp();
        assert_eq!(dvs_phase1(&mut mpc, &stored, &nudged).unwrap(), vec![true; 5]);
    }

    #[test]
    fn phase2_accepts_honest_and_rejects_forged() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let clearing = dvs_commit::<Ristretto, _>(&[100, -42], &mut rng);
        let honest = dvs_phase2_prove(&clearing.commitments[1], &clearing.openings[1], -42, &mut rng);
        assert!(dvs_phase2_verify(&clearing.commitments[1], &honest));
        let forged = dvs_phase2_prove(&clearing.commitments[1], &clearing.openings[1], -41, &mut rng);
        assert!(!dvs_phase2_verify(&clearing.commitments[1], &forged));
        assert!(!dvs_phase2_verify(&clearing.commitments[0], &honest));
        assert_eq!(clearing.records()[1].commitment, clearing.commitments[1].to_hex());

        let toy = dvs_commit::<ToyGroup, _>(&[3], &mut rng);
        let claim = dvs_phase2_prove(&toy.commitments[0], &toy.openings[0], 3, &mut rng);
        assert!(dvs_phase2_verify(&toy.commitments[0], &claim));
    }
}
