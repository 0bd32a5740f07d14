//! Day-ahead local electricity market cleared centrally, by consensus ADMM,
//! and by ADMM whose coordination runs under Shamir secret sharing.

pub mod admm;
pub mod fixtures;
pub mod formulation;
pub mod grid;
pub mod harness;
pub mod market;
pub mod mpc;
pub mod recovery;
pub mod secure;
pub mod settlement;
pub mod simulate;
pub mod solver;
pub mod union_find;
