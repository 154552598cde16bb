use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vtl_scuc::solver::BackendKind;
use vtl_scuc::{LmpConvention, ModelVariant, SolverOptions};
use vtl_scuc_cli::{
    cmd_compare, cmd_gen_scenarios, cmd_report, cmd_solve, cmd_validate, CompareConfig, GenConfig, ReportConfig,
    RunConfig, ScenarioSource, Settings,
};

#[derive(Parser)]
#[command(name = "vtl-scuc", version, about = "Stochastic unit commitment with storage-based virtual transmission lines")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// MILP backend.
    #[arg(long, global = true, default_value = "highs")]
    solver: String,
    /// Relative MIP gap.
    #[arg(long, global = true, default_value_t = 1e-6)]
    mip_gap: f64,
    /// Wall-clock limit per solve, seconds.
    #[arg(long, global = true, default_value_t = 600.0)]
    time_limit: f64,
    /// Fixed seeds inside the solver so repeated runs agree.
    #[arg(long, global = true, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    deterministic: bool,
    #[arg(long, global = true)]
    threads: Option<u32>,
    /// Relative tolerance for calling a line congested; defaults to the case setting.
    #[arg(long, global = true)]
    congestion_eps: Option<f64>,
    /// expected | unweighted
    #[arg(long, global = true, default_value = "expected")]
    lmp_convention: String,
}

impl Global {
    fn settings(&self) -> anyhow::Result<Settings> {
        let backend: BackendKind = self.solver.parse()?;
        let lmp_convention: LmpConvention = self.lmp_convention.parse().map_err(anyhow::Error::msg)?;
        Ok(Settings {
            solver: SolverOptions {
                backend,
                relative_mip_gap: self.mip_gap,
                time_limit_seconds: self.time_limit,
                threads: self.threads,
                deterministic: self.deterministic,
            },
            congestion_eps: self.congestion_eps,
            lmp_convention,
        })
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario file.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Generate this many scenarios from the case forecast.
    #[arg(long)]
    generate: Option<usize>,
    /// Use the case forecast as a single scenario.
    #[arg(long)]
    forecast: bool,
}

#[derive(Args)]
struct Generation {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated scenario probabilities; uniform when omitted.
    #[arg(long, value_delimiter = ',')]
    probs: Option<Vec<f64>>,
}

fn source(src: &Source, gen: &Generation) -> ScenarioSource {
    if let Some(path) = &src.scenarios {
        ScenarioSource::File(path.clone())
    } else if let Some(count) = src.generate {
        ScenarioSource::Generate {
            count,
            seed: gen.seed,
            probabilities: gen.probs.clone(),
        }
    } else {
        ScenarioSource::Forecast
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one variant and write solution, metrics and manifest.
    Solve {
        #[arg(long)]
        case: PathBuf,
        #[arg(long, default_value = "base")]
        variant: ModelVariant,
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        gen: Generation,
        #[arg(long)]
        out: PathBuf,
        /// Also write a readable listing of the model.
        #[arg(long)]
        dump_model: bool,
    },
    /// Solve several variants on the same scenarios and tabulate them against a baseline.
    Compare {
        #[arg(long)]
        case: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "base,pt,bess,vtl")]
        variants: Vec<ModelVariant>,
        #[arg(long, default_value = "base")]
        baseline: String,
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        gen: Generation,
        #[arg(long)]
        out: PathBuf,
        /// Compute WS, RP, EEV, VSS and EVPI for the baseline variant.
        #[arg(long)]
        diagnostics: bool,
    },
    /// Draw renewable scenarios around the case forecast.
    GenScenarios {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        count: usize,
        #[command(flatten)]
        gen: Generation,
        /// Constant solar standard deviation instead of the hourly default.
        #[arg(long)]
        solar_sigma: Option<f64>,
        #[arg(long)]
        wind_sigma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild comparison tables from earlier solve directories.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "base")]
        baseline: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a case file, and optionally a scenario file against it.
    Validate {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        scenarios: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let settings = match cli.global.settings() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let code = match cli.command {
        Command::Solve {
            case,
            variant,
            source: src,
            gen,
            out,
            dump_model,
        } => cmd_solve(&RunConfig {
            case,
            variant,
            scenarios: source(&src, &gen),
            out,
            settings,
            dump_model,
        }),
        Command::Compare {
            case,
            variants,
            baseline,
            source: src,
            gen,
            out,
            diagnostics,
        } => cmd_compare(&CompareConfig {
            case,
            scenarios: source(&src, &gen),
            variants,
            baseline,
            out,
            settings,
            diagnostics,
        }),
        Command::GenScenarios {
            case,
            count,
            gen,
            solar_sigma,
            wind_sigma,
            out,
        } => cmd_gen_scenarios(&GenConfig {
            case,
            count,
            seed: gen.seed,
            probabilities: gen.probs,
            solar_sigma,
            wind_sigma,
            out,
        }),
        Command::Report { runs, baseline, out } => cmd_report(&ReportConfig {
            runs,
            baseline,
            out,
            settings,
        }),
        Command::Validate { case, scenarios } => cmd_validate(&case, scenarios.as_deref()),
    };
    ExitCode::from(code as u8)
}
