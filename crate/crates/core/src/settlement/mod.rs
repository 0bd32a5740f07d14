//! Market payoffs, two-price imbalance settlement and final balances.

pub mod commit;
pub mod dvs;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::VarKey;
use crate::grid::{NodeId, ScenarioDay};
use crate::market::{MarketSolution, Prices};
use crate::mpc::field::{Field, Fp};
use crate::mpc::{Mpc, MpcError, SharedVec};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SettlementError {
    #[error("refusing to settle an unconverged clearing")]
    Unconverged,
    #[error("regulation prices out of order at t={0}: need up ≥ day-ahead ≥ down")]
    PriceOrder(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Mpc(#[from] MpcError),
}

/// Payoff of one node, itemized per timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffStatement {
    pub node: NodeId,
    /// λ·(g + h^f − d); for the substation λ0·(l − s).
    pub energy: Vec<f64>,
    /// π·(α − σ/Σσ).
    pub flexibility: Vec<f64>,
    /// Substation trade with the upstream grid, −(l·Φ⁺ − s·Φ⁻); zero elsewhere.
    pub tariff: Vec<f64>,
    pub total: f64,
}

impl PayoffStatement {
    fn new(node: NodeId, energy: Vec<f64>, flexibility: Vec<f64>, tariff: Vec<f64>) -> Self {
        let total = energy.iter().chain(&flexibility).chain(&tariff).sum();
        PayoffStatement { node, energy, flexibility, tariff, total }
    }
}

/// Scheduled net injection `g + h^f − d` of every node; row 0 is the
/// substation's net import `l − s`.
pub fn scheduled_injection(sc: &ScenarioDay, sol: &MarketSolution) -> Vec<Vec<f64>> {
    (0..sc.node_count())
        .map(|n| {
            (0..sc.steps())
                .map(|t| match sc.profile(n) {
                    None => sol.substation_net(t),
                    Some(p) => {
                        let g = if p.is_flexible() { sol.generation(n, t) } else { 0.0 };
                        g + p.forecast(t) - p.demand_p[t]
                    }
                })
                .collect()
        })
        .collect()
}

/// Σ_r σ_{r,t} over prosumers.
pub fn sigma_totals(sc: &ScenarioDay) -> Vec<f64> {
    (0..sc.steps()).map(|t| sc.participants().map(|p| p.sigma(t)).sum()).collect()
}

/// Share of flexibility each node owes per timestep, `α − σ/Σσ`.
fn flexibility_weights(sc: &ScenarioDay, sol: &MarketSolution, sigma_total: &[f64]) -> Vec<Vec<f64>> {
    (0..sc.node_count())
        .map(|n| {
            (0..sc.steps())
                .map(|t| {
                    let Some(p) = sc.profile(n) else { return 0.0 };
                    let alpha = if p.is_flexible() { sol.alpha(n, t) } else { 0.0 };
                    let share = if sigma_total[t] > 0.0 { p.sigma(t) / sigma_total[t] } else { 0.0 };
                    alpha - share
                })
                .collect()
        })
        .collect()
}

fn tariff_terms(sc: &ScenarioDay, sol: &MarketSolution) -> Vec<f64> {
    (0..sc.steps())
        .map(|t| {
            let (l, s) = (sol.value(VarKey::Lp(t)), sol.value(VarKey::Sp(t)));
            -(l * sc.market.tariff_import[t] - s * sc.market.tariff_export[t])
        })
        .collect()
}

fn check_prices(sc: &ScenarioDay, prices: &Prices) -> Result<(), SettlementError> {
    if prices.energy.len() != sc.node_count() || prices.flexibility.len() != sc.steps() {
        return Err(SettlementError::Shape(format!(
            "prices for {} nodes × {} steps",
            prices.energy.len(),
            prices.flexibility.len()
        )));
    }
    Ok(())
}

/// Plaintext payoffs of every node, the substation included.
pub fn plain_payoffs(sc: &ScenarioDay, sol: &MarketSolution, prices: &Prices) -> Result<Vec<PayoffStatement>, SettlementError> {
    check_prices(sc, prices)?;
    let q = scheduled_injection(sc, sol);
    let w = flexibility_weights(sc, sol, &sigma_totals(sc));
    let steps = sc.steps();
    Ok((0..sc.node_count())
        .map(|n| {
            let energy = (0..steps).map(|t| prices.energy[n][t] * q[n][t]).collect();
            let flex = (0..steps).map(|t| prices.flexibility[t] * w[n][t]).collect();
            let tariff = if n == 0 { tariff_terms(sc, sol) } else { vec![0.0; steps] };
            PayoffStatement::new(n, energy, flex, tariff)
        })
        .collect())
}

/// Fraction bits of the shared σ values.
pub const SIGMA_FRAC_BITS: u32 = 48;

/// Payoffs computed under sharing.
#[derive(Debug, Clone)]
pub struct SecurePayoffs {
    /// Shares of every B_n, kept by all parties for later verification.
    pub shared: SharedVec,
    /// B_n as opened to node n only.
    pub opened: Vec<f64>,
    /// Opened Σσ per timestep.
    pub sigma_total: Vec<f64>,
}

/// Computes every B_n on shares. Node n inputs its prices and quantities, the
/// substation inputs π, and each prosumer shares σ so only Σσ is opened.
pub fn compute_payoffs(
    sc: &ScenarioDay,
    sol: &MarketSolution,
    prices: &Prices,
    converged: bool,
    mpc: &mut Mpc,
) -> Result<SecurePayoffs, SettlementError> {
    if !converged {
        return Err(SettlementError::Unconverged);
    }
    check_prices(sc, prices)?;
    let (nodes, steps) = (sc.node_count(), sc.steps());
    if mpc.parties() != nodes {
        return Err(SettlementError::Shape(format!("{} parties for {} nodes", mpc.parties(), nodes)));
    }
    let fx = mpc.fx;

    // σ is only summed, so it can carry more fraction bits than the
    // multiplicative encoding; the opened Σσ is then exact for practical purposes.
    let sigma_scale = 2f64.powi(SIGMA_FRAC_BITS as i32);
    let sigma_in: Vec<Vec<Fp>> = (0..nodes)
        .map(|n| match sc.profile(n) {
            Some(p) if p.is_prosumer() => {
                (0..steps).map(|t| fx.encode(p.sigma(t)).map(|_| Fp::from_i128((p.sigma(t) * sigma_scale).round() as i128))).collect()
            }
            _ => Ok(Vec::new()),
        })
        .collect::<Result<_, _>>()?;
    let sigma_shared = mpc.input_many(&sigma_in)?;
    let mut total = mpc.constant(&vec![Fp::ZERO; steps]);
    for s in sigma_shared.iter().filter(|s| !s.is_empty()) {
        total = mpc.add(&total, s);
    }
    let sigma_total: Vec<f64> = mpc.open(&total)?.into_iter().map(|x| x.to_i128() as f64 / sigma_scale).collect();

    let q = scheduled_injection(sc, sol);
    let w = flexibility_weights(sc, sol, &sigma_total);
    let tariff = tariff_terms(sc, sol);
    // Layout of party n's input: λ_n (T), q_n (T), w_n (T); the substation
    // appends π (T) and its tariff total.
    let inputs: Vec<Vec<Fp>> = (0..nodes)
        .map(|n| {
            let mut v: Vec<f64> = prices.energy[n].clone();
            v.extend(&q[n]);
            v.extend(&w[n]);
            if n == 0 {
                v.extend(&prices.flexibility);
                v.push(tariff.iter().sum());
            }
            v.into_iter().map(|x| fx.encode(x)).collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let shared = mpc.input_many(&inputs)?;

    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for s in &shared {
        lhs.push(s.slice(0..steps));
        rhs.push(s.slice(steps..2 * steps));
        lhs.push(shared[0].slice(3 * steps..4 * steps));
        rhs.push(s.slice(2 * steps..3 * steps));
    }
    let a = SharedVec::concat(&lhs.iter().collect::<Vec<_>>());
    let b = SharedVec::concat(&rhs.iter().collect::<Vec<_>>());
    let prod = mpc.mul(&a, &b)?;
    let per_node = 2 * steps;
    let mut sums: Vec<SharedVec> = (0..nodes).map(|n| mpc.sum(&prod.slice(n * per_node..(n + 1) * per_node))).collect();
    let tariff_share = shared[0].slice(4 * steps..4 * steps + 1);
    sums[0] = mpc.add(&sums[0], &mpc.mul_scalar(&tariff_share, Fp::pow2(fx.frac_bits)));
    let raw = SharedVec::concat(&sums.iter().collect::<Vec<_>>());
    let totals = mpc.trunc(&raw, 2 * fx.int_bits, fx.frac_bits)?;

    let mut opened = vec![0.0; nodes];
    for (n, slot) in opened.iter_mut().enumerate() {
        let out = mpc.open_to(&totals.slice(n..n + 1), &[n])?;
        *slot = fx.decode(out[n].as_ref().expect("owner is a recipient")[0]);
    }
    Ok(SecurePayoffs { shared: totals, opened, sigma_total })
}

/// Day-ahead and regulation prices per timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegulationPrices {
    pub day_ahead: Vec<f64>,
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

impl RegulationPrices {
    pub fn of(sc: &ScenarioDay) -> Self {
        RegulationPrices {
            day_ahead: sc.market.day_ahead_price.clone(),
            up: sc.market.regulation_up.clone(),
            down: sc.market.regulation_down.clone(),
        }
    }
}

/// Per-timestep imbalance charges; entry `[n][t]` is positive when node n is paid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceSettlement {
    pub charges: Vec<Vec<f64>>,
    /// Σ_n deviation per timestep.
    pub system: Vec<f64>,
    /// Price at which the operator trades the system imbalance upstream.
    pub regulation: Vec<f64>,
}

impl ImbalanceSettlement {
    pub fn totals(&self) -> Vec<f64> {
        self.charges.iter().map(|c| c.iter().sum()).collect()
    }

    /// What the mechanism collects minus what it pays, per timestep, with
    /// the system imbalance sold (long) or bought (short) at the regulation price.
    pub fn operator_surplus(&self) -> Vec<f64> {
        let steps = self.system.len();
        (0..steps)
            .map(|t| self.system[t] * self.regulation[t] - self.charges.iter().map(|c| c[t]).sum::<f64>())
            .collect()
    }
}

/// Two-price settlement: deviations that aggravate the system imbalance pay
/// or earn the regulation price, helping ones the day-ahead price.
pub fn imbalance_settlement(
    scheduled: &[Vec<f64>],
    actual: &[Vec<f64>],
    prices: &RegulationPrices,
) -> Result<ImbalanceSettlement, SettlementError> {
    if scheduled.len() != actual.len() {
        return Err(SettlementError::Shape(format!("{} scheduled vs {} actual rows", scheduled.len(), actual.len())));
    }
    let steps = prices.day_ahead.len();
    if prices.up.len() != steps || prices.down.len() != steps {
        return Err(SettlementError::Shape("regulation price lengths differ".into()));
    }
    for (s, a) in scheduled.iter().zip(actual) {
        if s.len() != steps || a.len() != steps {
            return Err(SettlementError::Shape(format!("row of {} / {} steps, expected {steps}", s.len(), a.len())));
        }
    }
    for t in 0..steps {
        if !(prices.up[t] >= prices.day_ahead[t] && prices.day_ahead[t] >= prices.down[t]) {
            return Err(SettlementError::PriceOrder(t));
        }
    }
    let dev: Vec<Vec<f64>> = scheduled.iter().zip(actual).map(|(s, a)| a.iter().zip(s).map(|(a, s)| a - s).collect()).collect();
    let system: Vec<f64> = (0..steps).map(|t| dev.iter().map(|d| d[t]).sum()).collect();
    let charges = dev
        .iter()
        .map(|d| {
            (0..steps)
                .map(|t| {
                    let (x, lam0) = (d[t], prices.day_ahead[t]);
                    let price = if system[t] < 0.0 && x < 0.0 {
                        prices.up[t]
                    } else if system[t] > 0.0 && x > 0.0 {
                        prices.down[t]
                    } else {
                        lam0
                    };
                    x * price
                })
                .collect()
        })
        .collect();
    let regulation = (0..steps)
        .map(|t| match system[t] {
            d if d < 0.0 => prices.up[t],
            d if d > 0.0 => prices.down[t],
            _ => prices.day_ahead[t],
        })
        .collect();
    Ok(ImbalanceSettlement { charges, system, regulation })
}

pub fn final_balance(payoff: f64, imbalance: f64) -> f64 {
    payoff + imbalance
}
