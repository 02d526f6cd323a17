use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ehd_core::experiment::{
    cmd_oracle_check, cmd_simulate, cmd_sweep, cmd_tables, cmd_trace, render_records, ChannelSpec,
    ExperimentConfig, LawKind, SweepSpec, SweepVar,
};
use ehd_core::{Error, PolicySpec, Result};

#[derive(Parser)]
#[command(name = "ehd", version, about = "Harvest-then-transmit controller experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump the Q(t) and gamma(t) tables as JSON.
    Tables(CommonArgs),
    /// Monte Carlo throughput for each policy.
    Simulate(CommonArgs),
    /// Monte Carlo throughput over a swept parameter.
    Sweep(CommonArgs),
    /// Compare the closed forms against the brute-force DP oracle.
    OracleCheck {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long = "ke")]
        k_e: Option<usize>,
        #[arg(long = "kalpha")]
        k_alpha: Option<usize>,
    },
    /// Per-slot CSV trace of one episode of the first policy.
    Trace {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 0)]
        episode: u64,
    },
}

#[derive(Args)]
#[allow(non_snake_case)]
struct CommonArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "T")]
    T: Option<usize>,
    #[arg(long = "N")]
    N: Option<usize>,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long = "P")]
    P: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Fading law, `exponential:<mean>` or `deterministic:<gain>`.
    #[arg(long)]
    law: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Battery level at slot 1.
    #[arg(long)]
    initial_energy: Option<f64>,
    /// `optimal`, `beta:<x>` or `forced:<T0>`; repeatable.
    #[arg(long = "policy")]
    policies: Vec<String>,
    /// One of T, N, m, eta, forced_T0.
    #[arg(long)]
    sweep: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Worker threads (default: all cores). Does not affect results.
    #[arg(long)]
    threads: Option<usize>,
}

impl CommonArgs {
    fn to_config(&self) -> Result<ExperimentConfig> {
        let file = match &self.config {
            Some(path) => ExperimentConfig::from_json(&fs::read_to_string(path)?)?,
            None => ExperimentConfig::default(),
        };

        let (law, mean) = match &self.law {
            None => (None, None),
            Some(spec) => {
                let (kind, arg) = spec.split_once(':').unwrap_or((spec.as_str(), "1"));
                let kind = match kind {
                    "exponential" | "rayleigh" => LawKind::Exponential,
                    "deterministic" => LawKind::Deterministic,
                    _ => return Err(Error::InvalidConfig(format!("unknown fading law `{spec}`"))),
                };
                let mean: f64 = arg
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad fading law parameter in `{spec}`")))?;
                (Some(kind), Some(mean))
            }
        };
        let policies = if self.policies.is_empty() {
            None
        } else {
            Some(self.policies.iter().map(|p| p.parse()).collect::<Result<Vec<PolicySpec>>>()?)
        };
        let sweep = match &self.sweep {
            Some(var) => Some(SweepSpec { var: var.parse::<SweepVar>()?, values: self.values.clone() }),
            None if !self.values.is_empty() => {
                return Err(Error::InvalidConfig("--values given without --sweep".into()));
            }
            None => None,
        };
        let mut flags = ExperimentConfig {
            horizon: self.T,
            power: self.P,
            eta: self.eta,
            lambda: self.lambda,
            m: self.m,
            channel: ChannelSpec { law, mean, levels_count: self.N, levels: None, probs: None },
            policies,
            episodes: self.episodes,
            seed: self.seed,
            initial_energy: self.initial_energy,
            sweep,
            out: self.out.clone(),
            format: self.format.as_deref().map(str::parse).transpose()?,
        };
        if let (Some(from_file), Some(from_flags)) = (&file.sweep, &mut flags.sweep) {
            // --sweep alone keeps the file's values when the variable matches.
            if from_flags.values.is_empty() && from_file.var == from_flags.var {
                from_flags.values = from_file.values.clone();
            }
        }
        let mut config = file.merge(flags);
        if config.seed.is_none() {
            let seed: u64 = rand::random();
            eprintln!("seed: {seed}");
            config.seed = Some(seed);
        }
        Ok(config)
    }
}

fn emit(config: &ExperimentConfig, text: &str) -> Result<()> {
    match &config.out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let common = match &cli.command {
        Command::Tables(c) | Command::Simulate(c) | Command::Sweep(c) => c,
        Command::OracleCheck { common, .. } | Command::Trace { common, .. } => common,
    };
    let config = common.to_config()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;

    pool.install(|| match &cli.command {
        Command::Tables(_) => emit(&config, &cmd_tables(&config)?),
        Command::Simulate(_) => {
            eprintln!("config: {}", serde_json::to_string(&config)?);
            let records = cmd_simulate(&config)?;
            emit(&config, &render_records(&records, config.format())?)
        }
        Command::Sweep(_) => {
            let records = cmd_sweep(&config)?;
            emit(&config, &render_records(&records, config.format())?)
        }
        Command::OracleCheck { k_e, k_alpha, .. } => {
            let report = cmd_oracle_check(&config, *k_e, *k_alpha)?;
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            emit(&config, &text)?;
            if !report.passes() {
                eprintln!("closed form and oracle disagree beyond grid tolerance");
                std::process::exit(3);
            }
            Ok(())
        }
        Command::Trace { episode, .. } => {
            let trace = cmd_trace(&config, *episode)?;
            let mut buf = Vec::new();
            trace.write_csv(&mut buf)?;
            emit(&config, &String::from_utf8_lossy(&buf))
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
