#![allow(dead_code)]

use std::path::PathBuf;

use lem_core::grid::{load_scenario, ScenarioDay};
use lem_core::mpc::fabric::MsgKind;
use lem_core::mpc::{Mpc, MpcError, SharedVec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn fixture_path(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(file)
}

pub fn fixture(file: &str) -> ScenarioDay {
    load_scenario(fixture_path(file)).expect("bundled fixture parses")
}

// ---- random straight-line programs ----

#[derive(Debug, Clone, Copy)]
pub enum Op {
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddConst(usize, f64),
}

#[derive(Debug, Clone)]
pub struct Program {
    pub parties: usize,
    pub theta: usize,
    /// (owner, value) per input register.
    pub inputs: Vec<(usize, f64)>,
    pub ops: Vec<Op>,
}

/// Plaintext value and worst-case fixed-point error of every register.
pub struct Reference {
    pub values: Vec<f64>,
    pub bounds: Vec<f64>,
}

const MAGNITUDE: f64 = 100.0;

fn step(op: Op, v: &[f64], e: &[f64], ulp: f64) -> (f64, f64) {
    match op {
        Op::Add(a, b) => (v[a] + v[b], e[a] + e[b]),
        Op::Sub(a, b) => (v[a] - v[b], e[a] + e[b]),
        Op::Mul(a, b) => (v[a] * v[b], v[a].abs() * e[b] + v[b].abs() * e[a] + e[a] * e[b] + ulp),
        Op::Scale(a, c) => (v[a] * c, v[a].abs() * ulp / 2.0 + (c.abs() + ulp / 2.0) * e[a] + ulp),
        Op::AddConst(a, c) => (v[a] + c, e[a] + ulp / 2.0),
    }
}

impl Program {
    pub fn random(seed: u64) -> Program {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let parties = rng.random_range(3..=7);
        let theta = (parties - 1) / 2;
        let inputs: Vec<(usize, f64)> =
            (0..rng.random_range(2..=5)).map(|_| (rng.random_range(0..parties), rng.random_range(-8.0..8.0))).collect();
        let mut p = Program { parties, theta, inputs, ops: Vec::new() };
        let ulp = 2f64.powi(-16);
        let (mut v, mut e): (Vec<f64>, Vec<f64>) = p.inputs.iter().map(|&(_, x)| (x, ulp / 2.0)).unzip();
        let len = rng.random_range(4..=12);
        while p.ops.len() < len {
            let n = v.len();
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            let op = match rng.random_range(0..5) {
                0 => Op::Add(a, b),
                1 => Op::Sub(a, b),
                2 => Op::Mul(a, b),
                3 => Op::Scale(a, rng.random_range(-2.0..2.0)),
                _ => Op::AddConst(a, rng.random_range(-4.0..4.0)),
            };
            let (x, err) = step(op, &v, &e, ulp);
            if x.abs() > MAGNITUDE {
                continue;
            }
            v.push(x);
            e.push(err);
            p.ops.push(op);
        }
        p
    }

    pub fn reference(&self, ulp: f64) -> Reference {
        let (mut values, mut bounds): (Vec<f64>, Vec<f64>) = self.inputs.iter().map(|&(_, x)| (x, ulp / 2.0)).unzip();
        for &op in &self.ops {
            let (x, err) = step(op, &values, &bounds, ulp);
            values.push(x);
            bounds.push(err);
        }
        Reference { values, bounds }
    }

    /// Evaluates the program under sharing and opens every register.
    pub fn evaluate(&self, seed: u64) -> Result<Vec<f64>, MpcError> {
        let mut mpc = Mpc::new(self.parties, self.theta, seed)?;
        let mut regs: Vec<SharedVec> = Vec::new();
        for &(owner, x) in &self.inputs {
            regs.push(mpc.input_fixed(owner, &[x])?);
        }
        for &op in &self.ops {
            let r = match op {
                Op::Add(a, b) => mpc.add(&regs[a], &regs[b]),
                Op::Sub(a, b) => mpc.sub(&regs[a], &regs[b]),
                Op::Mul(a, b) => mpc.fx_mul(&regs[a], &regs[b])?,
                Op::Scale(a, c) => mpc.scale_public(&regs[a], &[c])?,
                Op::AddConst(a, c) => {
                    let k = mpc.fx.encode(c)?;
                    mpc.add_const(&regs[a], &[k])
                }
            };
            regs.push(r);
        }
        let all: Vec<&SharedVec> = regs.iter().collect();
        mpc.open_fixed(&SharedVec::concat(&all))
    }
}

/// Largest excess of the secure result over its error bound; ≤ 0 means within bounds.
pub fn program_excess(p: &Program, seed: u64) -> Result<f64, MpcError> {
    let got = p.evaluate(seed)?;
    let r = p.reference(2f64.powi(-16));
    Ok(got.iter().zip(r.values.iter().zip(&r.bounds)).map(|(g, (v, b))| (g - v).abs() - b - 1e-9).fold(f64::MIN, f64::max))
}

// ---- transcript statistics ----

pub const BUCKETS: usize = 16;

/// Symmetric test computation: every party inputs one value; the parties
/// compute the sum, the sum of squares and whether the first is smaller.
pub fn symmetric_run(inputs: &[f64], seed: u64) -> Mpc {
    let n = inputs.len();
    let mut mpc = Mpc::new(n, Mpc::default_theta(n), seed).unwrap();
    mpc.set_recording(true);
    let enc: Vec<Vec<_>> = inputs.iter().map(|&x| vec![mpc.fx.encode(x).unwrap()]).collect();
    let xs = mpc.input_many(&enc).unwrap();
    let all = SharedVec::concat(&xs.iter().collect::<Vec<_>>());
    let s = mpc.sum(&all);
    let sq = mpc.fx_mul(&all, &all).unwrap();
    let q = mpc.sum(&sq);
    let lt = mpc.less_than(&s, &q).unwrap();
    mpc.open(&SharedVec::concat(&[&s, &q, &lt])).unwrap();
    mpc
}

/// Low-bit histogram of everything `coalition` receives from outside it.
pub fn view_histogram(mpc: &Mpc, coalition: &[usize], kinds: &[MsgKind], hist: &mut [u64; BUCKETS]) {
    for m in mpc.fabric().view_of(coalition) {
        if coalition.contains(&m.from) || !kinds.contains(&m.kind) {
            continue;
        }
        for x in &m.payload {
            hist[(x.value() as usize) % BUCKETS] += 1;
        }
    }
}

/// p-value of a χ² goodness-of-fit test against the uniform distribution.
pub fn uniformity_p(hist: &[u64; BUCKETS]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let total: u64 = hist.iter().sum();
    let e = total as f64 / BUCKETS as f64;
    let stat: f64 = hist.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((BUCKETS - 1) as f64).unwrap().cdf(stat)
}

/// p-value of a χ² test that two histograms come from one distribution.
pub fn homogeneity_p(a: &[u64; BUCKETS], b: &[u64; BUCKETS]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let n = na + nb;
    let mut stat = 0.0;
    let mut cells = 0;
    for k in 0..BUCKETS {
        let col = (a[k] + b[k]) as f64;
        if col == 0.0 {
            continue;
        }
        cells += 1;
        for (obs, rows) in [(a[k] as f64, na), (b[k] as f64, nb)] {
            let e = rows * col / n;
            stat += (obs - e).powi(2) / e;
        }
    }
    1.0 - ChiSquared::new((cells - 1).max(1) as f64).unwrap().cdf(stat)
}

/// All `k`-subsets of `0..n`.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}
