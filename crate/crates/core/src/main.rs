use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lem_core::admm::Thresholds;
use lem_core::fixtures;
use lem_core::grid::{load_scenario, save_scenario, NodeId};
use lem_core::harness::{compare_solvers, run_day, HarnessError, RunConfig, SolverKind};
use lem_core::market::PriceMode;

#[derive(Parser)]
#[command(name = "lem", version, about = "Local electricity market clearing and settlement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clear, operate, recover and settle one day.
    Run(RunArgs),
    /// Run several solvers on one scenario and tabulate time, accuracy and balances.
    Compare(CompareArgs),
    /// Write the bundled fixture scenarios.
    Fixtures {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Duals,
    Consensus,
}

impl From<Mode> for PriceMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Duals => PriceMode::Duals,
            Mode::Consensus => PriceMode::Consensus,
        }
    }
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 1e-4)]
    primal_tol: f64,
    #[arg(long, default_value_t = 1e-4)]
    dual_tol: f64,
    #[arg(long, default_value_t = 0.02)]
    surplus_tol: f64,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
    /// Sharing threshold; defaults to ⌊(N−1)/2⌋.
    #[arg(long)]
    theta: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Nodes whose measurements are withheld, comma separated.
    #[arg(long, value_delimiter = ',')]
    silent_nodes: Vec<NodeId>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "n3")]
    solver: SolverKind,
    #[arg(long, value_enum, default_value = "duals")]
    price_mode: Mode,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_value = "c1,n3,s2,s3")]
    solvers: Vec<SolverKind>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "duals,consensus")]
    price_modes: Vec<Mode>,
    #[command(flatten)]
    common: Common,
}

fn config(solver: SolverKind, mode: Mode, c: &Common) -> RunConfig {
    RunConfig {
        solver,
        scenario: c.scenario.clone(),
        rho: c.rho,
        thresholds: Thresholds { primal: c.primal_tol, dual: c.dual_tol, surplus: c.surplus_tol },
        max_iter: c.max_iter,
        theta: c.theta,
        seed: c.seed,
        price_mode: mode.into(),
        silent_nodes: c.silent_nodes.clone(),
        out: c.out.clone(),
    }
}

fn run(args: RunArgs) -> Result<(), HarnessError> {
    let cfg = config(args.solver, args.price_mode, &args.common);
    let report = run_day(&cfg)?;
    let s = &report.summary;
    println!(
        "{} on {}: {} iterations, {:.2} s, objective {:.6} (central {:.6}, {:+.3}%), surplus {:+.3}%",
        cfg.solver.label(),
        s.scenario,
        s.iterations,
        report.wall_seconds,
        s.objective,
        s.central_objective,
        s.relative_accuracy_pct,
        s.surplus_pct
    );
    println!("node,payoff,imbalance,final,recovered");
    for b in &report.balances {
        println!("{},{:.4},{:.4},{:.4},{}", b.node, b.payoff, b.imbalance, b.final_balance, b.recovered);
    }
    if let Some(ok) = s.dvs_passed {
        println!("balance verification: {}", if ok { "passed" } else { "FAILED" });
    }
    Ok(())
}

fn compare(args: CompareArgs) -> Result<(), HarnessError> {
    let sc = load_scenario(&args.common.scenario)?;
    let mut configs = Vec::new();
    for &solver in &args.solvers {
        for &mode in &args.price_modes {
            if solver == SolverKind::C1 && matches!(mode, Mode::Consensus) {
                continue;
            }
            configs.push(RunConfig { out: None, ..config(solver, mode, &args.common) });
        }
    }
    let table = compare_solvers(&sc, &configs)?;
    let mut stdout = std::io::stdout();
    table.write_solvers_csv(&mut stdout)?;
    println!();
    table.write_balances_csv(&mut stdout)?;
    if let Some(dir) = &args.common.out {
        fs::create_dir_all(dir)?;
        table.write_solvers_csv(fs::File::create(dir.join("solvers.csv"))?)?;
        table.write_balances_csv(fs::File::create(dir.join("balances.csv"))?)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Compare(args) => compare(args),
        Command::Fixtures { out } => fs::create_dir_all(&out).map_err(HarnessError::from).and_then(|_| {
            for (file, sc) in fixtures::bundled() {
                save_scenario(&sc, out.join(file))?;
            }
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{:?}]: {e}", e.stage());
            ExitCode::FAILURE
        }
    }
}
