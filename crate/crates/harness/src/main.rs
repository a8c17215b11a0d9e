use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bbob_core::equilibrium::{compute_a_th, solve, threshold_fees, Equilibrium, Role};
use bbob_core::mechanism::{optimal_block_size_distributional, solve_eta};
use bbob_core::random::{derive_seed, rng_from};
use bbob_core::welfare::performance_ratio;
use bbob_harness::config::{Config, Setting};
use bbob_harness::dataset::{ingest_csv, ColumnMap};
use bbob_harness::experiment::{run_scenario, Mechanism, Scenario};
use bbob_harness::report::{emit, to_csv, Format, Report, ResultRow};
use clap::{Parser, Subcommand};
use serde::Serialize;

/// Simulator and experiment runner for block-size mechanisms in
/// blockchain order books.
#[derive(Parser)]
#[command(name = "bbob", version)]
struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// CSV header overrides, e.g. `bid_price=Bid,ask_price=Ask`.
    #[arg(long, global = true, default_value = "")]
    columns: ColumnMap,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load an order CSV and print normalized utilities and costs.
    Ingest { path: PathBuf },
    /// Draw one population and solve its fee equilibrium.
    Equilibrium {
        #[arg(long)]
        block_size: Option<usize>,
    },
    /// Draw one population and simulate equilibrium play.
    Simulate {
        #[arg(long)]
        block_size: Option<usize>,
        #[arg(long, value_enum, default_value_t = Mechanism::AbsDistributional)]
        mechanism: Mechanism,
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Distributional block size across the N grid.
    Mechanism,
    /// Witness instances with an arbitrarily bad equilibrium.
    Poa {
        #[arg(long, default_value_t = 100.0)]
        target: f64,
    },
    /// Run one experiment design.
    Experiment {
        #[arg(value_enum)]
        scenario: Scenario,
        /// Block-size cap for the block-size-limit design.
        #[arg(long)]
        a_max: Option<usize>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long, default_value_t = 100.0)]
        target: f64,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("cannot start worker pool")?;
    let text = run(&cli)?;
    emit(&text, cli.out.as_deref())?;
    Ok(())
}

fn load_setting(cli: &Cli) -> Result<Setting> {
    let (config, base) = match &cli.config {
        Some(p) => (Config::load(p)?, p.parent().unwrap_or(Path::new(".")).to_owned()),
        None => (Config::default(), PathBuf::from(".")),
    };
    Ok(config.resolve(&base, &cli.columns)?)
}

#[derive(Serialize)]
struct IngestRow {
    row: usize,
    bid_price: f64,
    ask_price: f64,
    bid_qty: f64,
    ask_qty: f64,
    utility: f64,
    cost: f64,
}

#[derive(Serialize)]
struct MechanismRow {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    eta: f64,
    #[serde(rename = "A")]
    a: usize,
}

#[derive(Serialize)]
struct FeeRow {
    role: &'static str,
    id: usize,
    value: f64,
    mixing: bool,
    fee_lo: f64,
    fee_hi: f64,
}

#[derive(Serialize)]
struct EquilibriumOutput {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "A")]
    a: usize,
    a_th: usize,
    thresholds: bbob_core::equilibrium::ThresholdFees,
    equilibrium: Equilibrium,
}

fn render<R: Serialize>(cli: &Cli, config: &impl Serialize, rows: Vec<R>) -> Result<String> {
    let report = Report::new(config, cli.seed, rows)?;
    Ok(match cli.format {
        Format::Json => report.to_json()?,
        Format::Csv => to_csv(&report.results)?,
    })
}

fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Ingest { path } => {
            let ds = ingest_csv(path, &cli.columns, None)?;
            let (u, c) = (ds.utilities(), ds.costs());
            let rows: Vec<IngestRow> = ds
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| IngestRow {
                    row: i + 1,
                    bid_price: r.bid_price,
                    ask_price: r.ask_price,
                    bid_qty: r.bid_qty,
                    ask_qty: r.ask_qty,
                    utility: u[i],
                    cost: c[i],
                })
                .collect();
            render(cli, &ds.summary(), rows)
        }
        Command::Equilibrium { block_size } => {
            let setting = load_setting(cli)?;
            let mut inst = setting.base.draw_instance(1, &mut rng_from(derive_seed(cli.seed, &[0])))?;
            let a = match block_size {
                Some(a) => *a,
                None => Mechanism::AbsDistributional.block_size(&inst, &setting.base)?,
            };
            inst = inst.with_block_size(a);
            let a_th = compute_a_th(&inst);
            let eq = solve(&inst);
            match cli.format {
                Format::Json => {
                    let out = EquilibriumOutput {
                        k: inst.num_buyers(),
                        n: inst.num_sellers(),
                        a,
                        a_th,
                        thresholds: threshold_fees(&inst, a_th, a),
                        equilibrium: eq,
                    };
                    Ok(Report::new(&setting, cli.seed, vec![out])?.to_json()?)
                }
                Format::Csv => Ok(to_csv(&fee_rows(&inst, &eq))?),
            }
        }
        Command::Simulate { block_size, mechanism, replications } => {
            let setting = load_setting(cli)?;
            let inst = setting.base.draw_instance(1, &mut rng_from(derive_seed(cli.seed, &[0])))?;
            let (a, label) = match block_size {
                Some(a) => (*a, "fixed_block_size"),
                None => (mechanism.block_size(&inst, &setting.base)?, mechanism.label()),
            };
            let reps = replications.unwrap_or(setting.replications);
            let rep = performance_ratio(&inst, a, reps, derive_seed(cli.seed, &[1]));
            let row = ResultRow {
                scenario: format!("simulate:{label}"),
                n: inst.num_sellers(),
                k: inst.num_buyers(),
                a,
                sw_mean: rep.sw,
                sw_stderr: rep.sw_stderr,
                sw_opt: rep.sw_opt,
                ratio: rep.performance,
            };
            render(cli, &setting, vec![row])
        }
        Command::Mechanism => {
            let setting = load_setting(cli)?;
            let rows = setting
                .grid
                .iter()
                .map(|&n| {
                    let cfg = setting.at(n);
                    Ok(MechanismRow {
                        n,
                        k: cfg.buyers,
                        eta: solve_eta(&cfg)?,
                        a: optimal_block_size_distributional(&cfg)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            render(cli, &setting, rows)
        }
        Command::Poa { target } => {
            let setting = load_setting(cli)?;
            let rows = run_scenario(&setting, Scenario::PoaWitness, cli.seed, *target)?;
            render(cli, &setting, rows)
        }
        Command::Experiment { scenario, a_max, replications, target } => {
            let mut setting = load_setting(cli)?;
            if let Some(r) = replications {
                setting.replications = (*r).max(1);
            }
            if a_max.is_some() {
                setting.a_max = *a_max;
            }
            let rows = run_scenario(&setting, *scenario, cli.seed, *target)?;
            render(cli, &setting, rows)
        }
    }
}

fn fee_rows(inst: &bbob_core::MarketInstance, eq: &Equilibrium) -> Vec<FeeRow> {
    let mut rows = Vec::new();
    for (role, label) in [(Role::Buy, "buy"), (Role::Sell, "sell")] {
        let count = match role {
            Role::Buy => inst.num_buyers(),
            Role::Sell => inst.num_sellers(),
        };
        for id in 0..count {
            let value = match role {
                Role::Buy => inst.buyers[id].utility,
                Role::Sell => inst.sellers[id].cost,
            };
            let (mixing, fee_lo, fee_hi) = match eq {
                Equilibrium::Pure { profile, .. } => {
                    let f = if role == Role::Buy { profile.buy[id] } else { profile.sell[id] };
                    (false, f, f)
                }
                Equilibrium::Mixed(m) => {
                    let s = m.strategy(role);
                    if s.mixers.contains(&id) {
                        (true, s.lower, s.upper)
                    } else {
                        (false, s.non_mixer_fee, s.non_mixer_fee)
                    }
                }
            };
            rows.push(FeeRow { role: label, id, value, mixing, fee_lo, fee_hi });
        }
    }
    rows
}
