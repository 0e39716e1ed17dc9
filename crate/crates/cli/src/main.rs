use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use flexreq_core::cases::{self, Liquidity, RandomNetworkParams};
use flexreq_core::evaluate::{gap_bounds, GapInstance};
use flexreq_core::experiment::{
    self, notices, write_artifact, ExperimentConfig, ExperimentError, Mechanism, Zoning,
};
use flexreq_core::flexreq::BalanceMode;
use flexreq_core::grid::{read_network_json, write_network_json};
use flexreq_core::market::write_bids_csv;
use flexreq_core::uncertainty::{read_model_json, sample_scenarios, write_model_json, write_scenarios_csv, EpsilonConfig};

#[derive(Parser)]
#[command(name = "flexreq", version, about = "Flexibility requests and local flexibility markets for radial grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate datasets.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Create chance-constrained flexibility requests.
    CreateRequest(RunArgs),
    /// Clear the requests against the offer book by zonal merit order.
    ClearDet(RunArgs),
    /// Clear the stochastic benchmark market.
    ClearStoch(RunArgs),
    /// Run the full pipeline: requests, clearings, dispatch, welfare, violations, gap.
    Evaluate(RunArgs),
    /// Sub-optimality gap bounds, for an instance file or the configured run.
    Gap {
        /// Gap instance JSON; uses the configured pipeline when absent.
        #[arg(long)]
        instance: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Subcommand)]
enum GenCommand {
    /// Random radial network, or the bundled 15-bus feeder.
    Network {
        #[arg(long, default_value_t = 15)]
        buses: usize,
        #[arg(long, default_value_t = 1)]
        periods: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, conflicts_with_all = ["buses", "periods", "seed"])]
        bundled: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// The bundled forecast-error model.
    Model {
        #[arg(long)]
        out: PathBuf,
    },
    /// Forecast-error scenarios (MW) as CSV.
    Scenarios {
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 2025)]
        seed: u64,
        /// Model JSON; the bundled model when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        base_mva: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Offer book as CSV.
    Bids {
        /// Network JSON; the bundled feeder when absent.
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = LiquidityArg::High)]
        liquidity: LiquidityArg,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 25.0)]
        price_min: f64,
        #[arg(long, default_value_t = 35.0)]
        price_max: f64,
        #[arg(long, default_value_t = 0.5)]
        quantity_mw: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LiquidityArg {
    High,
    Medium,
    Low,
    None,
}

impl From<LiquidityArg> for Liquidity {
    fn from(l: LiquidityArg) -> Self {
        match l {
            LiquidityArg::High => Liquidity::High,
            LiquidityArg::Medium => Liquidity::Medium,
            LiquidityArg::Low => Liquidity::Low,
            LiquidityArg::None => Liquidity::None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ZoningArg {
    Nodal,
    Single,
    Congestion,
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismArg {
    Deterministic,
    Stochastic,
    NoMarket,
}

#[derive(Clone, Copy, ValueEnum)]
enum BalanceArg {
    DsoResponsible,
    NotResponsible,
}

/// Every flag overrides the matching field of `--config` (or the defaults).
#[derive(Args, Clone)]
struct RunArgs {
    /// Full experiment configuration as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root directory for run directories.
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    bids: Option<PathBuf>,
    #[arg(long)]
    zones: Option<PathBuf>,
    #[arg(long, value_enum)]
    zoning: Option<ZoningArg>,
    #[arg(long, value_enum)]
    liquidity: Option<LiquidityArg>,
    #[arg(long)]
    sweep_liquidity: bool,
    #[arg(long, value_enum, value_delimiter = ',')]
    mechanisms: Option<Vec<MechanismArg>>,
    #[arg(long, value_enum)]
    balance_mode: Option<BalanceArg>,
    #[arg(long)]
    seed_covariance: Option<u64>,
    #[arg(long)]
    seed_out_of_sample: Option<u64>,
    #[arg(long)]
    seed_offers: Option<u64>,
    #[arg(long)]
    covariance_scenarios: Option<usize>,
    #[arg(long)]
    out_of_sample_scenarios: Option<usize>,
    /// Sets every violation probability at once.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    price_up: Option<f64>,
    #[arg(long)]
    price_down: Option<f64>,
    #[arg(long)]
    price_shedding: Option<f64>,
    #[arg(long)]
    price_curtailment: Option<f64>,
    #[arg(long)]
    price_activation: Option<f64>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, ExperimentError> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::read(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        set!(c.network, self.network.clone().map(Some));
        set!(c.model, self.model.clone().map(Some));
        set!(c.bids, self.bids.clone().map(Some));
        set!(c.zones, self.zones.clone().map(Some));
        set!(
            c.zoning,
            self.zoning.map(|z| match z {
                ZoningArg::Nodal => Zoning::Nodal,
                ZoningArg::Single => Zoning::Single,
                ZoningArg::Congestion => Zoning::Congestion,
            })
        );
        set!(c.liquidity, self.liquidity.map(Liquidity::from));
        c.sweep_liquidity |= self.sweep_liquidity;
        set!(
            c.mechanisms,
            self.mechanisms.as_ref().map(|ms| {
                ms.iter()
                    .map(|m| match m {
                        MechanismArg::Deterministic => Mechanism::Deterministic,
                        MechanismArg::Stochastic => Mechanism::Stochastic,
                        MechanismArg::NoMarket => Mechanism::NoMarket,
                    })
                    .collect()
            })
        );
        set!(
            c.balance_mode,
            self.balance_mode.map(|b| match b {
                BalanceArg::DsoResponsible => BalanceMode::DsoResponsible,
                BalanceArg::NotResponsible => BalanceMode::NotResponsible,
            })
        );
        set!(c.seeds.covariance, self.seed_covariance);
        set!(c.seeds.out_of_sample, self.seed_out_of_sample);
        set!(c.seeds.offers, self.seed_offers);
        set!(c.counts.covariance, self.covariance_scenarios);
        set!(c.counts.out_of_sample, self.out_of_sample_scenarios);
        if let Some(eps) = self.epsilon {
            c.epsilons = EpsilonConfig { beta: c.epsilons.beta, ..EpsilonConfig::uniform(eps) };
        }
        set!(c.epsilons.beta, self.beta);
        set!(c.prices.request_up, self.price_up);
        set!(c.prices.request_down, self.price_down);
        set!(c.prices.shedding, self.price_shedding);
        set!(c.prices.curtailment, self.price_curtailment);
        set!(c.prices.activation, self.price_activation);
        c.validate()?;
        Ok(c)
    }
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let code = if e.is_input_error() { 2 } else { 1 };
        Failure { code, error: e.into() }
    }
}

fn input(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn prepare(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf, experiment::Inputs), Failure> {
    let config = args.config()?;
    let inputs = experiment::load_inputs(&config)?;
    let dir = config.run_dir(&args.out_dir);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display())).map_err(input)?;
    write_artifact(&config, &dir.join("config.json"))?;
    Ok((config, dir, inputs))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Gen(gen) => run_gen(gen),
        Command::CreateRequest(args) => {
            let (config, dir, inputs) = prepare(&args)?;
            let set = experiment::create_requests(&config, &inputs)?;
            write_artifact(&set, &dir.join("requests.json"))?;
            write_artifact(&set.entries(), &dir.join("request_book.json"))?;
            println!("{}", dir.display());
            if set.is_empty() {
                println!("no flexibility needed");
            }
            for r in set.requests.iter().filter(|r| r.up_mw > 0.0 || r.down_mw > 0.0) {
                println!(
                    "bus {:>4} period {:>3}: up {:.4} MW, down {:.4} MW, alpha {:.4}",
                    r.bus, r.period, r.up_mw, r.down_mw, r.alpha
                );
            }
            Ok(())
        }
        Command::ClearDet(args) => {
            let (config, dir, inputs) = prepare(&args)?;
            let set = experiment::create_requests(&config, &inputs)?;
            let offers = experiment::offers_for(&config, &inputs, config.liquidity)?;
            let (requests, result) = experiment::clear_det(&set, &offers, &inputs.zones)?;
            write_artifact(&inputs.zones, &dir.join("zones.json"))?;
            write_artifact(&requests, &dir.join("request_bids.json"))?;
            write_artifact(&result, &dir.join("clearing_det.json"))?;
            println!("{}", dir.display());
            println!(
                "accepted {} bids, payment {:.3} EUR, offer cost {:.3} EUR, welfare {:.3} EUR",
                result.accepted.len(),
                result.request_payment,
                result.offer_cost,
                result.welfare
            );
            Ok(())
        }
        Command::ClearStoch(args) => {
            let (config, dir, inputs) = prepare(&args)?;
            let offers = experiment::offers_for(&config, &inputs, config.liquidity)?;
            let result = experiment::clear_stoch(&config, &inputs, &offers)?;
            write_artifact(&result, &dir.join("clearing_stoch.json"))?;
            println!("{}", dir.display());
            let c = &result.costs;
            println!(
                "accepted {} offers, expected cost {:.3} EUR (procurement {:.3}, shedding {:.3}, curtailment {:.3})",
                result.accepted.len(),
                c.total,
                c.procurement,
                c.shedding,
                c.curtailment
            );
            Ok(())
        }
        Command::Evaluate(args) => {
            let config = args.config()?;
            let (dir, report) = experiment::run_experiment(&config, &args.out_dir)?;
            println!("{}", dir.display());
            print!("{}", experiment::summary(&report));
            Ok(())
        }
        Command::Gap { instance: Some(path), .. } => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display())).map_err(input)?;
            let inst: GapInstance =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())).map_err(input)?;
            let report = gap_bounds(&inst).map_err(|e| Failure::from(ExperimentError::from(e)))?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            Ok(())
        }
        Command::Gap { instance: None, run } => {
            let (config, dir, inputs) = prepare(&run)?;
            let set = experiment::create_requests(&config, &inputs)?;
            let offers = experiment::offers_for(&config, &inputs, config.liquidity)?;
            let mut entries = Vec::new();
            for (period, direction, inst) in experiment::gap_instances(&config, &set, &offers) {
                let report = gap_bounds(&inst).map_err(|e| Failure::from(ExperimentError::from(e)))?;
                println!(
                    "period {period} {direction:?}: level {} ({}), xi_sc {:?}, xi_fr {:?}, xi_fs {:?}",
                    report.level.number(),
                    report.description,
                    report.xi_sc,
                    report.xi_fr,
                    report.xi_fs
                );
                entries.push(experiment::GapEntry { period, direction, report });
            }
            write_artifact(&entries, &dir.join("gap.json"))?;
            for n in notices() {
                println!("note: {n}");
            }
            Ok(())
        }
    }
}

fn run_gen(gen: GenCommand) -> Result<(), Failure> {
    match gen {
        GenCommand::Network { buses, periods, seed, bundled, out } => {
            let network = if bundled {
                cases::bundled_network()
            } else {
                cases::random_network(&RandomNetworkParams { buses, periods, base_mva: 1.0 }, seed)
            };
            write_network_json(&network, &out).map_err(input)?;
        }
        GenCommand::Model { out } => {
            write_model_json(&cases::bundled_model(), &EpsilonConfig::default(), &out).map_err(input)?;
        }
        GenCommand::Scenarios { count, seed, model, base_mva, out } => {
            let model = match model {
                Some(path) => read_model_json(&path).map_err(input)?.0,
                None => cases::bundled_model(),
            };
            let set = sample_scenarios(&model, count, seed).map_err(input)?;
            write_scenarios_csv(&set, base_mva, &out).map_err(input)?;
        }
        GenCommand::Bids { network, liquidity, seed, price_min, price_max, quantity_mw, out } => {
            let network = match network {
                Some(path) => read_network_json(&path).map_err(input)?,
                None => cases::bundled_network(),
            };
            if !(price_min <= price_max) || !(quantity_mw > 0.0) {
                return Err(input(anyhow::anyhow!("invalid offer price range or quantity")));
            }
            let params = cases::OfferParams { price_min, price_max, quantity_mw };
            let offers = cases::generate_offers(&network, liquidity.into(), &params, seed);
            write_bids_csv(&offers, &out).map_err(input)?;
        }
    }
    Ok(())
}
