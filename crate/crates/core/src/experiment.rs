//! Experiment configuration, commands and result files.
//!
//! A config is a JSON object whose fields may all be omitted; command-line
//! flags are merged on top of it with [`ExperimentConfig::merge`]. Result
//! records share one fixed schema for `simulate` and `sweep`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{ContinuousFadingLaw, DiscreteChannel};
use crate::error::{Error, Result};
use crate::oracle::{compare_with_closed_form, GridSpec, OracleReport, DEFAULT_GRID_POINTS};
use crate::policy::{PolicyTables, SystemParams};
use crate::sim::{episode_rng, EpisodeTrace, MonteCarloSummary, PolicySpec, Simulator};

pub const CSV_COLUMNS: [&str; 9] = [
    "sweep_var",
    "sweep_value",
    "policy",
    "episodes",
    "mean_bits",
    "ci95",
    "mean_harvest_J",
    "mean_T0",
    "seed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::InvalidConfig(format!("unknown output format `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVar {
    T,
    N,
    #[serde(rename = "m")]
    M,
    #[serde(rename = "eta")]
    Eta,
    #[serde(rename = "forced_T0")]
    ForcedT0,
}

impl SweepVar {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVar::T => "T",
            SweepVar::N => "N",
            SweepVar::M => "m",
            SweepVar::Eta => "eta",
            SweepVar::ForcedT0 => "forced_T0",
        }
    }

    fn is_integer(&self) -> bool {
        matches!(self, SweepVar::T | SweepVar::N | SweepVar::ForcedT0)
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVar {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T" => Ok(SweepVar::T),
            "N" => Ok(SweepVar::N),
            "m" => Ok(SweepVar::M),
            "eta" => Ok(SweepVar::Eta),
            "forced_T0" | "T0" => Ok(SweepVar::ForcedT0),
            _ => Err(Error::InvalidConfig(format!("unknown sweep variable `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawKind {
    Exponential,
    Deterministic,
}

/// Channel section of a config: either a fading law with a level count, or
/// explicit levels and probabilities.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub law: Option<LawKind>,
    /// Mean of the exponential law, or the value of the deterministic one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub levels_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
}

impl ChannelSpec {
    pub fn is_explicit(&self) -> bool {
        self.levels.is_some() || self.probs.is_some()
    }

    pub fn build(&self) -> Result<DiscreteChannel> {
        if self.is_explicit() {
            if self.law.is_some() || self.mean.is_some() {
                return Err(Error::InvalidConfig("channel gives both a law and explicit levels".into()));
            }
            let (Some(levels), Some(probs)) = (&self.levels, &self.probs) else {
                return Err(Error::InvalidConfig("explicit channel needs both levels and probs".into()));
            };
            if let Some(n) = self.levels_count {
                if n != levels.len() {
                    return Err(Error::InvalidConfig(format!("N = {n} but {} levels given", levels.len())));
                }
            }
            return DiscreteChannel::new(levels.clone(), probs.clone());
        }
        let param = self.mean.unwrap_or(1.0);
        let law = match self.law.unwrap_or(LawKind::Exponential) {
            LawKind::Exponential => ContinuousFadingLaw::Exponential { mean: param },
            LawKind::Deterministic => ContinuousFadingLaw::Deterministic { value: param },
        };
        DiscreteChannel::discretize(law, self.levels_count.unwrap_or(20))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub var: SweepVar,
    #[serde(default)]
    pub values: Vec<f64>,
}

/// Experiment settings as read from a file or flags. Unset fields fall back
/// to the reference instance (`T=50, P=10, eta=1, lambda=0.1, m=3`,
/// Rayleigh fading with mean 1 in 20 levels).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(rename = "P", skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policies: Option<Vec<PolicySpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Overlays every field set in `other` onto `self`.
    pub fn merge(mut self, other: ExperimentConfig) -> Self {
        macro_rules! take {
            ($($f:ident).+) => {
                if other.$($f).+.is_some() {
                    self.$($f).+ = other.$($f).+;
                }
            };
        }
        take!(horizon);
        take!(power);
        take!(eta);
        take!(lambda);
        take!(m);
        if other.channel.is_explicit() {
            self.channel = other.channel;
        } else {
            if other.channel.law.is_some() || other.channel.mean.is_some() {
                self.channel.levels = None;
                self.channel.probs = None;
            }
            take!(channel.law);
            take!(channel.mean);
            take!(channel.levels_count);
        }
        take!(policies);
        take!(episodes);
        take!(seed);
        take!(initial_energy);
        take!(sweep);
        take!(out);
        take!(format);
        self
    }

    pub fn params(&self) -> Result<SystemParams> {
        let params = SystemParams {
            horizon: self.horizon.unwrap_or(50),
            power: self.power.unwrap_or(10.0),
            eta: self.eta.unwrap_or(1.0),
            lambda: self.lambda.unwrap_or(0.1),
            m: self.m.unwrap_or(3.0),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn policies(&self) -> Vec<PolicySpec> {
        self.policies.clone().unwrap_or_else(|| {
            vec![
                PolicySpec::Optimal,
                PolicySpec::Beta(1.0 / 3.0),
                PolicySpec::Beta(0.5),
                PolicySpec::Beta(2.0 / 3.0),
            ]
        })
    }

    pub fn episodes(&self) -> usize {
        self.episodes.unwrap_or(10_000)
    }

    pub fn format(&self) -> OutputFormat {
        self.format.unwrap_or(OutputFormat::Csv)
    }

    /// Seed to use; `None` in the config must be resolved by the caller.
    fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::InvalidConfig("no seed set; pick one before running".into()))
    }
}

/// One output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub sweep_var: String,
    pub sweep_value: Option<f64>,
    pub policy: String,
    pub episodes: usize,
    pub mean_bits: f64,
    pub ci95: f64,
    #[serde(rename = "mean_harvest_J")]
    pub mean_harvest: f64,
    #[serde(rename = "mean_T0")]
    pub mean_first_it_slot: f64,
    pub seed: u64,
}

impl ResultRecord {
    fn new(sweep_var: &str, sweep_value: Option<f64>, policy: PolicySpec, s: &MonteCarloSummary) -> Self {
        Self {
            sweep_var: sweep_var.to_string(),
            sweep_value,
            policy: policy.to_string(),
            episodes: s.episodes,
            mean_bits: s.mean_bits,
            ci95: s.ci95,
            mean_harvest: s.mean_harvest,
            mean_first_it_slot: s.mean_first_it_slot,
            seed: s.seed,
        }
    }

    fn csv_row(&self) -> String {
        let value = self.sweep_value.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.sweep_var,
            value,
            self.policy,
            self.episodes,
            self.mean_bits,
            self.ci95,
            self.mean_harvest,
            self.mean_first_it_slot,
            self.seed
        )
    }
}

pub fn render_records(records: &[ResultRecord], format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => {
            let mut out = CSV_COLUMNS.join(",");
            out.push('\n');
            for r in records {
                out.push_str(&r.csv_row());
                out.push('\n');
            }
            Ok(out)
        }
        OutputFormat::Json => {
            let mut out = serde_json::to_string_pretty(records)?;
            out.push('\n');
            Ok(out)
        }
    }
}

/// Parses output of [`render_records`] back into records.
pub fn parse_records(text: &str, format: OutputFormat) -> Result<Vec<ResultRecord>> {
    match format {
        OutputFormat::Json => Ok(serde_json::from_str(text)?),
        OutputFormat::Csv => {
            let mut lines = text.lines();
            let header = lines.next().unwrap_or_default();
            if header != CSV_COLUMNS.join(",") {
                return Err(Error::InvalidConfig(format!("unexpected CSV header `{header}`")));
            }
            lines
                .map(|line| {
                    let f: Vec<&str> = line.split(',').collect();
                    let bad = || Error::InvalidConfig(format!("malformed CSV row `{line}`"));
                    if f.len() != CSV_COLUMNS.len() {
                        return Err(bad());
                    }
                    let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
                    Ok(ResultRecord {
                        sweep_var: f[0].to_string(),
                        sweep_value: if f[1].is_empty() { None } else { Some(num(f[1])?) },
                        policy: f[2].to_string(),
                        episodes: f[3].parse().map_err(|_| bad())?,
                        mean_bits: num(f[4])?,
                        ci95: num(f[5])?,
                        mean_harvest: num(f[6])?,
                        mean_first_it_slot: num(f[7])?,
                        seed: f[8].parse().map_err(|_| bad())?,
                    })
                })
                .collect()
        }
    }
}

fn sort_records(records: &mut [ResultRecord]) {
    records.sort_by(|a, b| {
        let av = a.sweep_value.unwrap_or(f64::NEG_INFINITY);
        let bv = b.sweep_value.unwrap_or(f64::NEG_INFINITY);
        av.total_cmp(&bv).then_with(|| a.policy.cmp(&b.policy))
    });
}

pub fn cmd_tables(config: &ExperimentConfig) -> Result<String> {
    let params = config.params()?;
    let channel = config.channel.build()?;
    let tables = PolicyTables::build(&params, &channel)?;
    let mut out = serde_json::to_string(&tables)?;
    out.push('\n');
    Ok(out)
}

fn simulate_policies(
    params: &SystemParams,
    channel: &DiscreteChannel,
    policies: &[PolicySpec],
    config: &ExperimentConfig,
    sweep_var: &str,
    sweep_value: Option<f64>,
) -> Result<Vec<ResultRecord>> {
    let seed = config.seed()?;
    let tables = PolicyTables::build(params, channel)?;
    let sim = Simulator::new(params, channel, &tables)?.with_initial_energy(config.initial_energy.unwrap_or(0.0))?;
    policies
        .iter()
        .map(|&p| {
            let summary = sim.run_monte_carlo(p, config.episodes(), seed)?;
            Ok(ResultRecord::new(sweep_var, sweep_value, p, &summary))
        })
        .collect()
}

pub fn cmd_simulate(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let params = config.params()?;
    let channel = config.channel.build()?;
    let policies = config.policies();
    if policies.is_empty() {
        return Err(Error::InvalidConfig("at least one policy is required".into()));
    }
    let mut records = simulate_policies(&params, &channel, &policies, config, "none", None)?;
    sort_records(&mut records);
    Ok(records)
}

pub fn cmd_sweep(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("sweep needs a variable (--sweep)".into()))?;
    let base = config.params()?;
    let mut values = sweep.values.clone();
    if values.is_empty() {
        if sweep.var != SweepVar::ForcedT0 {
            return Err(Error::InvalidConfig(format!("no values given for sweep over {}", sweep.var)));
        }
        values = (1..base.horizon).map(|v| v as f64).collect();
    }
    let policies = config.policies();
    if policies.is_empty() {
        return Err(Error::InvalidConfig("at least one policy is required".into()));
    }

    let mut records = Vec::new();
    for &v in &values {
        if sweep.var.is_integer() && !(v >= 1.0 && v.fract() == 0.0) {
            return Err(Error::InvalidConfig(format!("{} must be a positive integer, got {v}", sweep.var)));
        }
        let mut params = base;
        let mut channel_spec = config.channel.clone();
        let mut point_policies = policies.clone();
        match sweep.var {
            SweepVar::T => params.horizon = v as usize,
            SweepVar::M => params.m = v,
            SweepVar::Eta => params.eta = v,
            SweepVar::N => {
                if channel_spec.is_explicit() {
                    return Err(Error::InvalidConfig("cannot sweep N over an explicit channel".into()));
                }
                channel_spec.levels_count = Some(v as usize);
            }
            SweepVar::ForcedT0 => point_policies = vec![PolicySpec::ForcedStop(v as usize)],
        }
        params.validate()?;
        let channel = channel_spec.build()?;
        records.extend(simulate_policies(&params, &channel, &point_policies, config, sweep.var.name(), Some(v))?);
    }
    sort_records(&mut records);
    Ok(records)
}

pub fn cmd_oracle_check(config: &ExperimentConfig, k_e: Option<usize>, k_alpha: Option<usize>) -> Result<OracleReport> {
    let params = config.params()?;
    let channel = config.channel.build()?;
    let grid = GridSpec::for_instance(
        &params,
        &channel,
        k_e.unwrap_or(DEFAULT_GRID_POINTS),
        k_alpha.unwrap_or(DEFAULT_GRID_POINTS),
    );
    compare_with_closed_form(&params, &channel, &grid)
}

/// One episode of the first configured policy, episode index `episode`.
pub fn cmd_trace(config: &ExperimentConfig, episode: u64) -> Result<EpisodeTrace> {
    let params = config.params()?;
    let channel = config.channel.build()?;
    let policy = config
        .policies()
        .first()
        .copied()
        .ok_or_else(|| Error::InvalidConfig("at least one policy is required".into()))?;
    let tables = PolicyTables::build(&params, &channel)?;
    let sim = Simulator::new(&params, &channel, &tables)?.with_initial_energy(config.initial_energy.unwrap_or(0.0))?;
    sim.run_episode(policy, &mut episode_rng(config.seed()?, episode))
}
