//! Monte Carlo episode engine.
//!
//! A frame runs slots `1..=T`. While harvesting, the device decides whether
//! to stop using only its battery level (it has not yet seen the slot's
//! gain); once it stops, every remaining slot draws a gain and spends a
//! fraction of the battery on transmission.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::DiscreteChannel;
use crate::error::{Error, Result};
use crate::policy::{PolicyTables, SystemParams};

/// Absorbs representation error in `beta * T` (e.g. `2/3 * 30`).
const FLOOR_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicySpec {
    /// Threshold stopping followed by closed-form optimal spending.
    Optimal,
    /// Harvest `floor(beta * T)` slots, then spend equal energy per slot.
    Beta(f64),
    /// Harvest exactly `T_0 - 1` slots, then spend optimally.
    ForcedStop(usize),
}

impl PolicySpec {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        match *self {
            PolicySpec::Optimal => Ok(()),
            PolicySpec::Beta(beta) => {
                if !(beta > 0.0 && beta < 1.0) {
                    return Err(Error::InvalidPolicy(format!("beta must lie in (0, 1), got {beta}")));
                }
                if beta_harvest_slots(beta, horizon) >= horizon {
                    return Err(Error::InvalidPolicy(format!(
                        "beta {beta} leaves no transmission slot in a horizon of {horizon}"
                    )));
                }
                Ok(())
            }
            PolicySpec::ForcedStop(t0) => {
                if t0 == 0 || t0 > horizon {
                    return Err(Error::InvalidPolicy(format!("forced T0 must lie in 1..={horizon}, got {t0}")));
                }
                Ok(())
            }
        }
    }
}

fn beta_harvest_slots(beta: f64, horizon: usize) -> usize {
    (beta * horizon as f64 + FLOOR_SLACK).floor() as usize
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Optimal => write!(f, "optimal"),
            PolicySpec::Beta(b) => write!(f, "beta:{b}"),
            PolicySpec::ForcedStop(t0) => write!(f, "forced:{t0}"),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    /// Parses `optimal`, `beta:<x>` (also `beta:1/3`) or `forced:<T0>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidPolicy(format!("cannot parse policy `{s}`"));
        let s = s.trim();
        if s.eq_ignore_ascii_case("optimal") {
            return Ok(PolicySpec::Optimal);
        }
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        match kind.trim().to_ascii_lowercase().as_str() {
            "beta" => {
                let arg = arg.trim();
                let beta = match arg.split_once('/') {
                    Some((num, den)) => {
                        let num: f64 = num.trim().parse().map_err(|_| bad())?;
                        let den: f64 = den.trim().parse().map_err(|_| bad())?;
                        num / den
                    }
                    None => arg.parse().map_err(|_| bad())?,
                };
                Ok(PolicySpec::Beta(beta))
            }
            "forced" => Ok(PolicySpec::ForcedStop(arg.trim().parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for PolicySpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PolicySpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    #[serde(rename = "EH")]
    Harvest,
    #[serde(rename = "IT")]
    Transmit,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Harvest => "EH",
            Phase::Transmit => "IT",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRecord {
    pub t: usize,
    pub phase: Phase,
    /// 0-based index of the drawn channel level.
    pub level: usize,
    /// Battery at the start of the slot.
    pub energy: f64,
    pub alpha: Option<f64>,
    pub bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub slots: Vec<SlotRecord>,
    /// First transmission slot `T_0`.
    pub first_it_slot: usize,
    pub initial_energy: f64,
    pub harvested: f64,
    pub spent: f64,
    /// Battery after slot `T`.
    pub final_energy: f64,
    pub total_bits: f64,
}

impl EpisodeTrace {
    pub const CSV_HEADER: &'static str = "t,phase,level,E,alpha,bits";

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for s in &self.slots {
            let alpha = s.alpha.map(|a| a.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{},{}", s.t, s.phase, s.level, s.energy, alpha, s.bits)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub episodes: usize,
    pub mean_bits: f64,
    pub std_dev: f64,
    pub ci95: f64,
    pub mean_harvest: f64,
    pub mean_first_it_slot: f64,
    pub seed: u64,
}

/// Random stream for one episode; a pure function of the master seed and
/// the episode index.
pub fn episode_rng(master_seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(episode);
    rng
}

/// Runs frames for one system, channel and precomputed tables.
#[derive(Debug, Clone, Copy)]
pub struct Simulator<'a> {
    params: &'a SystemParams,
    channel: &'a DiscreteChannel,
    tables: &'a PolicyTables,
    initial_energy: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(params: &'a SystemParams, channel: &'a DiscreteChannel, tables: &'a PolicyTables) -> Result<Self> {
        params.validate()?;
        if tables.params() != params {
            return Err(Error::InvalidParams("policy tables were built for different parameters".into()));
        }
        Ok(Self { params, channel, tables, initial_energy: 0.0 })
    }

    /// Battery level at slot 1 (default 0).
    pub fn with_initial_energy(mut self, energy: f64) -> Result<Self> {
        if !(energy.is_finite() && energy >= 0.0) {
            return Err(Error::InvalidParams(format!("initial energy must be non-negative, got {energy}")));
        }
        self.initial_energy = energy;
        Ok(self)
    }

    pub fn run_episode<R: rand::Rng + ?Sized>(&self, policy: PolicySpec, rng: &mut R) -> Result<EpisodeTrace> {
        let horizon = self.params.horizon;
        policy.validate(horizon)?;
        let fixed_stop = match policy {
            PolicySpec::Optimal => None,
            PolicySpec::Beta(beta) => Some(beta_harvest_slots(beta, horizon) + 1),
            PolicySpec::ForcedStop(t0) => Some(t0),
        };

        let mut energy = self.initial_energy;
        let mut harvested = 0.0;
        let mut spent = 0.0;
        let mut total_bits = 0.0;
        let mut first_it_slot = None;
        let mut slots = Vec::with_capacity(horizon);

        for t in 1..=horizon {
            if first_it_slot.is_none() {
                let stop = match fixed_stop {
                    Some(t0) => t >= t0,
                    None => self.tables.should_stop(t, energy),
                };
                if stop {
                    first_it_slot = Some(t);
                }
            }
            let level = self.channel.sample(rng);
            let g = self.channel.levels()[level];

            if first_it_slot.is_none() {
                let gain = self.params.harvest(g);
                slots.push(SlotRecord { t, phase: Phase::Harvest, level, energy, alpha: None, bits: 0.0 });
                harvested += gain;
                energy += gain;
            } else {
                let alpha = match policy {
                    PolicySpec::Beta(_) => 1.0 / (horizon - t + 1) as f64,
                    _ => self.tables.alpha_star(t, g)?,
                };
                let used = alpha * energy;
                let bits = self.params.bits(used, g);
                slots.push(SlotRecord { t, phase: Phase::Transmit, level, energy, alpha: Some(alpha), bits });
                spent += used;
                total_bits += bits;
                energy *= 1.0 - alpha;
            }
        }

        Ok(EpisodeTrace {
            slots,
            first_it_slot: first_it_slot.expect("the last slot always transmits"),
            initial_energy: self.initial_energy,
            harvested,
            spent,
            final_energy: energy,
            total_bits,
        })
    }

    /// Averages `episodes` independent frames. Episode `i` uses
    /// [`episode_rng`]`(master_seed, i)`, so the result does not depend on
    /// how rayon schedules the work.
    pub fn run_monte_carlo(&self, policy: PolicySpec, episodes: usize, master_seed: u64) -> Result<MonteCarloSummary> {
        if episodes == 0 {
            return Err(Error::InvalidConfig("episodes must be at least 1".into()));
        }
        policy.validate(self.params.horizon)?;
        let outcomes: Vec<(f64, f64, usize)> = (0..episodes as u64)
            .into_par_iter()
            .map(|i| {
                let trace = self.run_episode(policy, &mut episode_rng(master_seed, i))?;
                Ok((trace.total_bits, trace.harvested, trace.first_it_slot))
            })
            .collect::<Result<_>>()?;

        let n = episodes as f64;
        let mean_bits = outcomes.iter().map(|o| o.0).sum::<f64>() / n;
        let mean_harvest = outcomes.iter().map(|o| o.1).sum::<f64>() / n;
        let mean_first_it_slot = outcomes.iter().map(|o| o.2 as f64).sum::<f64>() / n;
        let std_dev = if episodes > 1 {
            (outcomes.iter().map(|o| (o.0 - mean_bits).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(MonteCarloSummary {
            episodes,
            mean_bits,
            std_dev,
            ci95: 1.96 * std_dev / n.sqrt(),
            mean_harvest,
            mean_first_it_slot,
            seed: master_seed,
        })
    }
}
