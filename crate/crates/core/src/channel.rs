//! Discrete iid fading channel.
//!
//! The channel power gain takes one of `N` levels `g_1 < ... < g_N` with
//! probabilities `q_n`, independently in every slot. Channels are either
//! given explicitly or obtained by binning a continuous fading law.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper quantile of the fading law that bounds the discretization range.
pub const TRUNCATION_QUANTILE: f64 = 0.999;

/// Probabilities whose sum is further than this from 1 are rejected rather
/// than silently renormalized.
const PROB_SUM_SLACK: f64 = 1e-6;

/// Continuous law of the channel power gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum ContinuousFadingLaw {
    /// Exponentially distributed power gain (Rayleigh fading).
    Exponential { mean: f64 },
    /// Point mass, mostly useful for tests.
    Deterministic { value: f64 },
}

impl ContinuousFadingLaw {
    pub fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            ContinuousFadingLaw::Exponential { mean } => ("mean", mean),
            ContinuousFadingLaw::Deterministic { value } => ("value", value),
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidChannel(format!(
                "fading law {name} must be positive and finite, got {v}"
            )));
        }
        Ok(())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            ContinuousFadingLaw::Exponential { mean } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-x / mean).exp_m1()
                }
            }
            ContinuousFadingLaw::Deterministic { value } => {
                if x >= value {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            ContinuousFadingLaw::Exponential { mean } => -mean * (-p).ln_1p(),
            ContinuousFadingLaw::Deterministic { value } => value,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ContinuousFadingLaw::Exponential { mean } => mean,
            ContinuousFadingLaw::Deterministic { value } => value,
        }
    }
}

/// An iid channel with `N` strictly increasing positive gain levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteChannel {
    levels: Vec<f64>,
    probs: Vec<f64>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl DiscreteChannel {
    /// Builds a channel from explicit levels and probabilities. The
    /// probabilities are renormalized to sum to one.
    pub fn new(levels: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidChannel("channel needs at least one level".into()));
        }
        if levels.len() != probs.len() {
            return Err(Error::InvalidChannel(format!(
                "{} levels but {} probabilities",
                levels.len(),
                probs.len()
            )));
        }
        if let Some(g) = levels.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::InvalidChannel(format!("gain levels must be positive, got {g}")));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidChannel("gain levels must be strictly increasing".into()));
        }
        if let Some(q) = probs.iter().find(|q| !(q.is_finite() && **q >= 0.0)) {
            return Err(Error::InvalidChannel(format!("probabilities must be non-negative, got {q}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_SLACK {
            return Err(Error::InvalidChannel(format!("probabilities sum to {total}, expected 1")));
        }
        let probs: Vec<f64> = probs.iter().map(|q| q / total).collect();

        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = probs
            .iter()
            .map(|q| {
                acc += q;
                acc
            })
            .collect();
        // Pin the top of the support so every u in [0,1) lands on a bin with
        // positive mass, whatever the rounding in the running sum.
        let top = probs.iter().rposition(|&q| q > 0.0).unwrap_or(probs.len() - 1);
        for c in &mut cumulative[top..] {
            *c = f64::INFINITY;
        }
        Ok(Self { levels, probs, cumulative })
    }

    /// A single-level channel with gain `g`.
    pub fn constant(g: f64) -> Result<Self> {
        Self::new(vec![g], vec![1.0])
    }

    /// Bins `law` into `n` equal-width bins over `[0, G_max]`, `G_max` being
    /// the law's 0.999 quantile. Each level sits at its bin midpoint, except
    /// that a bin holding a point mass is represented by the atom itself.
    /// Probability beyond `G_max` is folded into the top bin.
    pub fn discretize(law: ContinuousFadingLaw, n: usize) -> Result<Self> {
        law.validate()?;
        if n == 0 {
            return Err(Error::InvalidChannel("number of levels must be at least 1".into()));
        }
        let g_max = law.quantile(TRUNCATION_QUANTILE);
        let width = g_max / n as f64;

        let mut levels = Vec::with_capacity(n);
        let mut probs = Vec::with_capacity(n);
        for k in 0..n {
            let lo = k as f64 * width;
            let hi = if k + 1 == n { g_max } else { (k + 1) as f64 * width };
            let mut mass = law.cdf(hi) - law.cdf(lo);
            if k + 1 == n {
                mass += 1.0 - law.cdf(g_max);
            }
            let level = match law {
                ContinuousFadingLaw::Deterministic { value } if value > lo && value <= hi => value,
                _ => (k as f64 + 0.5) * width,
            };
            levels.push(level);
            probs.push(mass);
        }
        Self::new(levels, probs)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn max_level(&self) -> f64 {
        *self.levels.last().expect("channel has at least one level")
    }

    /// `sum_n q_n * g_n`.
    pub fn mean_gain(&self) -> f64 {
        self.expectation(|g| g)
    }

    /// `sum_n q_n * f(g_n)`.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.levels.iter().zip(&self.probs).map(|(&g, &q)| q * f(g)).sum()
    }

    /// Draws a level index (0-based) with probability `q_n`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.levels.len() == 1 {
            return 0;
        }
        let u: f64 = rng.gen();
        self.cumulative.partition_point(|&c| c <= u)
    }
}

#[derive(Deserialize)]
struct RawChannel {
    levels: Vec<f64>,
    probs: Vec<f64>,
}

impl<'de> Deserialize<'de> for DiscreteChannel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawChannel::deserialize(d)?;
        DiscreteChannel::new(raw.levels, raw.probs).map_err(serde::de::Error::custom)
    }
}
