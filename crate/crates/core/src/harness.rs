//! Daily protocol: clearing, simulated operation, measurement recovery,
//! settlement and balance verification, with CSV reports.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admm::{self, AdmmError, AdmmSettings, Thresholds, TraceRow};
use crate::formulation::{VarKey, Variant};
use crate::grid::{load_scenario, GridError, NodeId, ScenarioDay};
use crate::market::{solve_central, CentralError, MarketSolution, PriceMode, Prices};
use crate::mpc::Mpc;
use crate::recovery::{recover, RecoveryError};
use crate::secure::{market_theta, run_secure, AuditLog, SecureError, SecureSettings, SecureVariant};
use crate::settlement::commit::Ristretto;
use crate::settlement::dvs::{dvs_commit, dvs_phase1, dvs_phase2_prove, dvs_phase2_verify, fixed_balances, ClaimRecord};
use crate::settlement::{
    compute_payoffs, final_balance, imbalance_settlement, plain_payoffs, scheduled_injection, RegulationPrices,
    SettlementError,
};
use crate::simulate::{operate, Realization};
use crate::solver::SolverSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// Centralized conic solve.
    C1,
    /// Plaintext consensus ADMM with all chance constraints.
    N3,
    /// Secure ADMM, deterministic network limits.
    S2,
    /// Secure ADMM with all chance constraints.
    S3,
}

impl SolverKind {
    pub fn is_secure(self) -> bool {
        matches!(self, SolverKind::S2 | SolverKind::S3)
    }

    pub fn label(self) -> &'static str {
        match self {
            SolverKind::C1 => "C-1",
            SolverKind::N3 => "N-3",
            SolverKind::S2 => "S-2",
            SolverKind::S3 => "S-3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub solver: SolverKind,
    pub scenario: PathBuf,
    pub rho: f64,
    pub thresholds: Thresholds,
    pub max_iter: usize,
    /// Sharing threshold; `None` selects the market default.
    pub theta: Option<usize>,
    pub seed: u64,
    pub price_mode: PriceMode,
    /// Nodes whose measurements are withheld.
    pub silent_nodes: Vec<NodeId>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(solver: SolverKind, scenario: impl Into<PathBuf>) -> Self {
        let admm = AdmmSettings::default();
        RunConfig {
            solver,
            scenario: scenario.into(),
            rho: admm.rho,
            thresholds: admm.thresholds,
            max_iter: admm.max_iter,
            theta: None,
            seed: 0,
            price_mode: PriceMode::Duals,
            silent_nodes: Vec::new(),
            out: None,
        }
    }

    fn admm(&self) -> AdmmSettings {
        AdmmSettings { rho: self.rho, thresholds: self.thresholds, max_iter: self.max_iter, ..AdmmSettings::default() }
    }

    fn validate(&self, sc: &ScenarioDay) -> Result<(), HarnessError> {
        let n = sc.node_count();
        if self.rho <= 0.0 || !self.rho.is_finite() {
            return Err(HarnessError::Config(format!("ρ must be positive, got {}", self.rho)));
        }
        if let Some(theta) = self.theta {
            if 2 * theta >= n {
                return Err(HarnessError::Config(format!("Θ={theta} needs 2Θ < {n}")));
            }
        }
        if self.solver == SolverKind::C1 && self.price_mode == PriceMode::Consensus {
            return Err(HarnessError::Config("the central solver has no consensus prices".into()));
        }
        if let Some(&bad) = self.silent_nodes.iter().find(|&&s| s == 0 || s >= n) {
            return Err(HarnessError::Config(format!("node {bad} cannot be silent")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Config,
    Clearing,
    Recovery,
    Settlement,
    Output,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("scenario: {0}")]
    Scenario(#[from] GridError),
    #[error("clearing: {0}")]
    Central(#[from] CentralError),
    #[error("clearing: {0}")]
    Admm(#[from] AdmmError),
    #[error("clearing: {0}")]
    Secure(#[from] SecureError),
    #[error("clearing did not converge within {0} iterations")]
    Unconverged(usize),
    #[error("recovery: {0}")]
    Recovery(#[from] RecoveryError),
    #[error("settlement: {0}")]
    Settlement(#[from] SettlementError),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("output: {0}")]
    Csv(#[from] csv::Error),
    #[error("comparison needs one scenario, got {0} and {1}")]
    MismatchedScenarios(String, String),
}

impl HarnessError {
    pub fn stage(&self) -> Stage {
        match self {
            HarnessError::Config(_) | HarnessError::Scenario(_) | HarnessError::MismatchedScenarios(..) => Stage::Config,
            HarnessError::Central(_) | HarnessError::Admm(_) | HarnessError::Secure(_) | HarnessError::Unconverged(_) => {
                Stage::Clearing
            }
            HarnessError::Recovery(_) => Stage::Recovery,
            HarnessError::Settlement(_) => Stage::Settlement,
            HarnessError::Io(_) | HarnessError::Csv(_) => Stage::Output,
        }
    }
}

/// Result of the clearing stage.
#[derive(Debug, Clone)]
pub struct Clearing {
    pub solver: SolverKind,
    pub solution: MarketSolution,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
    /// Relative power surplus at the last iteration.
    pub surplus: f64,
    pub audit: AuditLog,
    pub z_gap: Vec<f64>,
    pub theta: Option<usize>,
    pub rounds: u64,
    pub seconds: f64,
}

impl Clearing {
    pub fn prices(&self, mode: PriceMode) -> Result<&Prices, HarnessError> {
        self.solution
            .prices(mode)
            .ok_or_else(|| HarnessError::Config(format!("{} has no {mode:?} prices", self.solver.label())))
    }
}

/// Derives an independent seed per stage.
fn stage_seed(seed: u64, stage: u64) -> u64 {
    let mut z = seed ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn clear(sc: &ScenarioDay, cfg: &RunConfig) -> Result<Clearing, HarnessError> {
    cfg.validate(sc)?;
    let start = Instant::now();
    let admm_settings = cfg.admm();
    let mut clearing = match cfg.solver {
        SolverKind::C1 => {
            let solution = solve_central(sc, Variant::ChanceConstrained, &SolverSettings::default())?;
            Clearing {
                solver: cfg.solver,
                solution,
                iterations: 1,
                converged: true,
                trace: Vec::new(),
                surplus: 0.0,
                audit: AuditLog::default(),
                z_gap: Vec::new(),
                theta: None,
                rounds: 0,
                seconds: 0.0,
            }
        }
        SolverKind::N3 => {
            let out = admm::run(sc, Variant::ChanceConstrained, admm_settings)?;
            Clearing {
                solver: cfg.solver,
                solution: out.solution,
                iterations: out.iterations,
                converged: out.converged,
                trace: out.trace,
                surplus: out.final_metrics.surplus,
                audit: AuditLog::default(),
                z_gap: Vec::new(),
                theta: None,
                rounds: 0,
                seconds: 0.0,
            }
        }
        SolverKind::S2 | SolverKind::S3 => {
            let variant = if cfg.solver == SolverKind::S2 { SecureVariant::S2 } else { SecureVariant::S3 };
            let settings = SecureSettings { admm: admm_settings, theta: cfg.theta, seed: cfg.seed, ..SecureSettings::default() };
            let out = run_secure(sc, variant, settings)?;
            Clearing {
                solver: cfg.solver,
                solution: out.outcome.solution,
                iterations: out.outcome.iterations,
                converged: out.outcome.converged,
                trace: out.outcome.trace,
                surplus: out.outcome.final_metrics.surplus,
                audit: out.audit,
                z_gap: out.z_gap,
                theta: Some(out.theta),
                rounds: out.rounds,
                seconds: 0.0,
            }
        }
    };
    clearing.seconds = start.elapsed().as_secs_f64();
    if !clearing.converged {
        return Err(HarnessError::Unconverged(clearing.iterations));
    }
    Ok(clearing)
}

/// One node's row of the settlement report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub node: NodeId,
    pub payoff: f64,
    pub imbalance: f64,
    #[serde(rename = "final")]
    pub final_balance: f64,
    pub recovered: bool,
    pub dvs_phase1: Option<bool>,
    pub dvs_phase2: Option<bool>,
}

/// Per-timestep energy balance of the schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub t: usize,
    pub demand: f64,
    pub substation: f64,
    pub der: f64,
    pub discharge: f64,
    pub charge: f64,
    pub generation: f64,
}

pub fn energy_balance(sc: &ScenarioDay, sol: &MarketSolution) -> Vec<EnergyRow> {
    (0..sc.steps())
        .map(|t| {
            let mut row = EnergyRow {
                t,
                demand: sc.participants().map(|p| p.demand_p[t]).sum(),
                substation: sol.substation_net(t),
                der: sc.participants().map(|p| p.forecast(t)).sum(),
                discharge: 0.0,
                charge: 0.0,
                generation: 0.0,
            };
            for v in sc.flexible_nodes() {
                let g = sol.generation(v, t);
                if sc.profile(v).is_some_and(|p| p.has_battery()) {
                    if g >= 0.0 {
                        row.discharge += g;
                    } else {
                        row.charge -= g;
                    }
                } else {
                    row.generation += g;
                }
            }
            row
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub solver: SolverKind,
    pub price_mode: PriceMode,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub central_objective: f64,
    pub relative_accuracy_pct: f64,
    pub surplus_pct: f64,
    pub theta: Option<usize>,
    pub rounds: u64,
    pub max_z_gap: f64,
    pub silent_nodes: String,
    pub dvs_passed: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: RunSummary,
    /// Clearing through verification, excluding scenario parsing.
    pub wall_seconds: f64,
    pub clearing: Clearing,
    pub balances: Vec<BalanceRow>,
    pub energy: Vec<EnergyRow>,
    pub commitments: Vec<ClaimRecord>,
}

/// Settles one day on top of a finished clearing.
pub fn settle_day(sc: &ScenarioDay, cfg: &RunConfig, clearing: &Clearing) -> Result<RunReport, HarnessError> {
    cfg.validate(sc)?;
    let start = Instant::now();
    let sol = &clearing.solution;
    let prices = clearing.prices(cfg.price_mode)?;
    let nodes = sc.node_count();
    let theta = cfg.theta.unwrap_or_else(|| market_theta(nodes));

    // Operation and metering.
    let mut rng = ChaCha20Rng::seed_from_u64(stage_seed(cfg.seed, 1));
    let real = Realization::draw(sc, &mut rng);
    let op = operate(sc, sol, &real);
    let mut ms = op.measurements();
    ms.withhold(&cfg.silent_nodes);

    let mut mpc = Mpc::new(nodes, theta, stage_seed(cfg.seed, 2)).map_err(RecoveryError::from)?;
    let recovery = recover(&sc.network, &ms, &mut mpc)?;
    let mut actual = op.actual_injection();
    for r in &recovery.recovered {
        actual[r.node] = r.net_p.clone();
    }

    // The substation balances the system and is not settled for imbalance.
    let scheduled = scheduled_injection(sc, sol);
    let imbalance = imbalance_settlement(&scheduled[1..], &actual[1..], &RegulationPrices::of(sc))?;
    let mut imb = vec![0.0];
    imb.extend(imbalance.totals());

    let mut dvs1 = vec![None; nodes];
    let mut dvs2 = vec![None; nodes];
    let mut commitments = Vec::new();
    let payoffs: Vec<f64> = if cfg.solver.is_secure() {
        let mut mpc = Mpc::new(nodes, theta, stage_seed(cfg.seed, 3)).map_err(SettlementError::from)?;
        let secure = compute_payoffs(sc, sol, prices, clearing.converged, &mut mpc)?;
        let fixed = fixed_balances(&mpc, &secure.opened)?;
        let mut rng = ChaCha20Rng::seed_from_u64(stage_seed(cfg.seed, 4));
        let published = dvs_commit::<Ristretto, _>(&fixed, &mut rng);
        let verdicts = dvs_phase1(&mut mpc, &secure.shared, &secure.opened)?;
        for n in 0..nodes {
            dvs1[n] = Some(verdicts[n]);
            let claim = dvs_phase2_prove(&published.commitments[n], &published.openings[n], fixed[n], &mut rng);
            dvs2[n] = Some(dvs_phase2_verify(&published.commitments[n], &claim));
            commitments.push(claim.record(n, &published.commitments[n]));
        }
        secure.opened
    } else {
        plain_payoffs(sc, sol, prices)?.into_iter().map(|p| p.total).collect()
    };

    let recovered: Vec<NodeId> = recovery.recovered.iter().map(|r| r.node).collect();
    let balances: Vec<BalanceRow> = (0..nodes)
        .map(|n| BalanceRow {
            node: n,
            payoff: payoffs[n],
            imbalance: imb[n],
            final_balance: final_balance(payoffs[n], imb[n]),
            recovered: recovered.contains(&n),
            dvs_phase1: dvs1[n],
            dvs_phase2: dvs2[n],
        })
        .collect();

    let central = if cfg.solver == SolverKind::C1 {
        sol.objective
    } else {
        solve_central(sc, Variant::ChanceConstrained, &SolverSettings::default())?.objective
    };
    let dvs_passed = cfg.solver.is_secure().then(|| balances.iter().all(|b| b.dvs_phase1 == Some(true) && b.dvs_phase2 == Some(true)));
    let summary = RunSummary {
        scenario: sc.name.clone(),
        solver: cfg.solver,
        price_mode: cfg.price_mode,
        seed: cfg.seed,
        iterations: clearing.iterations,
        converged: clearing.converged,
        objective: sol.objective,
        central_objective: central,
        relative_accuracy_pct: relative_accuracy(sol.objective, central),
        surplus_pct: 100.0 * clearing.surplus,
        theta: clearing.theta,
        rounds: clearing.rounds,
        max_z_gap: clearing.z_gap.iter().copied().fold(0.0, f64::max),
        silent_nodes: cfg.silent_nodes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" "),
        dvs_passed,
    };
    Ok(RunReport {
        summary,
        wall_seconds: clearing.seconds + start.elapsed().as_secs_f64(),
        clearing: clearing.clone(),
        balances,
        energy: energy_balance(sc, sol),
        commitments,
    })
}

/// Signed deviation of an objective from the central one, in percent.
pub fn relative_accuracy(objective: f64, central: f64) -> f64 {
    if central == 0.0 {
        if objective == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        100.0 * (objective - central) / central.abs()
    }
}

/// Runs the whole day on an in-memory scenario and writes outputs when `cfg.out` is set.
pub fn run_scenario(sc: &ScenarioDay, cfg: &RunConfig) -> Result<RunReport, HarnessError> {
    let clearing = clear(sc, cfg)?;
    let report = settle_day(sc, cfg, &clearing)?;
    if let Some(dir) = &cfg.out {
        write_outputs(&report, dir)?;
    }
    Ok(report)
}

pub fn run_day(cfg: &RunConfig) -> Result<RunReport, HarnessError> {
    let sc = load_scenario(&cfg.scenario)?;
    run_scenario(&sc, cfg)
}

/// Writes `report.csv`, `trace.csv`, `balances.csv`, `audit.log`,
/// `energy.csv`, `commitments.csv` and `timing.csv` into `dir`. All but the
/// last are deterministic given the configuration.
pub fn write_outputs(report: &RunReport, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("report.csv"))?;
    w.serialize(&report.summary)?;
    w.flush()?;
    admm::write_trace_csv(&report.clearing.trace, fs::File::create(dir.join("trace.csv"))?)?;
    write_rows(&report.balances, &dir.join("balances.csv"))?;
    write_rows(&report.energy, &dir.join("energy.csv"))?;
    write_rows(&report.commitments, &dir.join("commitments.csv"))?;
    report.clearing.audit.write_jsonl(fs::File::create(dir.join("audit.log"))?)?;
    let mut timing = fs::File::create(dir.join("timing.csv"))?;
    writeln!(timing, "solver,wall_seconds,clearing_seconds")?;
    writeln!(timing, "{},{:.3},{:.3}", report.summary.solver.label(), report.wall_seconds, report.clearing.seconds)?;
    Ok(())
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Timing and accuracy per solver, and balances per node × (solver, price mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub solvers: Vec<SolverRow>,
    /// Column labels `solver/mode`.
    pub columns: Vec<String>,
    /// `balances[node][column]`, final balances.
    pub balances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRow {
    pub solver: String,
    pub price_mode: PriceMode,
    pub seconds: f64,
    pub iterations: usize,
    pub relative_accuracy_pct: f64,
}

/// Runs every configuration on one scenario. Configurations that differ only
/// in price mode share a single clearing.
pub fn compare_solvers(sc: &ScenarioDay, configs: &[RunConfig]) -> Result<Comparison, HarnessError> {
    if let Some(other) = configs.iter().find(|c| c.scenario != configs[0].scenario) {
        return Err(HarnessError::MismatchedScenarios(
            configs[0].scenario.display().to_string(),
            other.scenario.display().to_string(),
        ));
    }
    let mut cleared: Vec<(RunConfig, Clearing)> = Vec::new();
    let mut comparison = Comparison { solvers: Vec::new(), columns: Vec::new(), balances: vec![Vec::new(); sc.node_count()] };
    for cfg in configs {
        let key = RunConfig { price_mode: PriceMode::Duals, out: None, ..cfg.clone() };
        let clearing = match cleared.iter().find(|(k, _)| *k == key) {
            Some((_, c)) => c.clone(),
            None => {
                let c = clear(sc, cfg)?;
                cleared.push((key, c.clone()));
                c
            }
        };
        let report = settle_day(sc, cfg, &clearing)?;
        comparison.solvers.push(SolverRow {
            solver: cfg.solver.label().to_string(),
            price_mode: cfg.price_mode,
            seconds: report.wall_seconds,
            iterations: report.summary.iterations,
            relative_accuracy_pct: report.summary.relative_accuracy_pct,
        });
        comparison.columns.push(format!("{}/{:?}", cfg.solver.label(), cfg.price_mode));
        for (row, b) in comparison.balances.iter_mut().zip(&report.balances) {
            row.push(b.final_balance);
        }
    }
    Ok(comparison)
}

impl Comparison {
    pub fn write_balances_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["node".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (n, row) in self.balances.iter().enumerate() {
            let mut rec = vec![n.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:.6}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_solvers_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.solvers {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Participation factor of every flexible node, `[node][t]`.
pub fn alpha_allocation(sc: &ScenarioDay, sol: &MarketSolution) -> Vec<(NodeId, Vec<f64>)> {
    sc.flexible_nodes().into_iter().map(|v| (v, (0..sc.steps()).map(|t| sol.value(VarKey::Alpha(v, t))).collect())).collect()
}
