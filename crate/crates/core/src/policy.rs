//! Closed-form optimal controller.
//!
//! Slots are numbered `1..=T`. During information transmission the device
//! spends a fraction `alpha(t)` of its battery; the optimal fraction, the
//! value function and the harvesting thresholds are all driven by one
//! backward-recursive scalar per slot, `Q(t)`, with the convention
//! `Q(T) = 0`.

use serde::{Deserialize, Serialize};

use crate::channel::DiscreteChannel;
use crate::error::{Error, Result};

/// Smallest accepted distance of the monomial order from 1.
pub const MIN_ORDER_GAP: f64 = 1e-6;

const BISECTION_REL_WIDTH: f64 = 1e-12;
const BISECTION_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Horizon length in slots.
    #[serde(rename = "T")]
    pub horizon: usize,
    /// AP beacon power (W).
    #[serde(rename = "P")]
    pub power: f64,
    /// Harvesting efficiency in (0, 1].
    pub eta: f64,
    /// Energy coefficient of the monomial transmit-energy model.
    pub lambda: f64,
    /// Monomial order, > 1.
    pub m: f64,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.horizon < 2 {
            return bad(format!("horizon T must be at least 2, got {}", self.horizon));
        }
        if !(self.power.is_finite() && self.power > 0.0) {
            return bad(format!("power P must be positive, got {}", self.power));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("efficiency eta must lie in (0, 1], got {}", self.eta));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad(format!("energy coefficient lambda must be positive, got {}", self.lambda));
        }
        if !(self.m.is_finite() && self.m > 1.0 + MIN_ORDER_GAP) {
            return bad(format!("monomial order m must exceed 1, got {}", self.m));
        }
        Ok(())
    }

    /// Energy harvested in one slot at gain `g`: `eta * g * P`.
    pub fn harvest(&self, g: f64) -> f64 {
        self.eta * g * self.power
    }

    /// Bits delivered by spending `energy` at gain `g`, the inverse of the
    /// transmit-energy model `lambda * l^m / g`.
    pub fn bits(&self, energy: f64, g: f64) -> f64 {
        (energy * g / self.lambda).powf(1.0 / self.m)
    }
}

/// `x^(m/(m-1))`, the way `Q` enters the next recursion step.
fn lift(q: f64, m: f64) -> f64 {
    q.powf(m / (m - 1.0))
}

/// `(g^(1/(m-1)) + Q^(m/(m-1)))^((m-1)/m)`.
fn combine(g: f64, q: f64, m: f64) -> f64 {
    (g.powf(1.0 / (m - 1.0)) + lift(q, m)).powf((m - 1.0) / m)
}

/// `Q(0..T-1)` by backward recursion from `Q(T-1) = sum_n q_n g_n^(1/m)`.
pub fn compute_q_table(params: &SystemParams, channel: &DiscreteChannel) -> Result<Vec<f64>> {
    params.validate()?;
    let horizon = params.horizon;
    let m = params.m;
    let mut q = vec![0.0; horizon];
    q[horizon - 1] = channel.expectation(|g| g.powf(1.0 / m));
    for t in (0..horizon - 1).rev() {
        let next = q[t + 1];
        q[t] = channel.expectation(|g| combine(g, next, m));
    }
    Ok(q)
}

/// Left side of the threshold equation, `sum_n q_n (1 + e_n/gamma)^(1/m)`.
fn threshold_lhs(gamma: f64, params: &SystemParams, channel: &DiscreteChannel) -> f64 {
    let inv_m = 1.0 / params.m;
    channel.expectation(|g| (1.0 + params.harvest(g) / gamma).powf(inv_m))
}

/// Solves `sum_n q_n (1 + e_n/gamma)^(1/m) = Q(t-1)/Q(t)` for `gamma` by
/// bisection. `q_table` holds `Q(0..T-1)`; `Q(T)` is taken as 0 and is never
/// needed since `t <= T-1`.
pub fn solve_gamma(
    t: usize,
    q_table: &[f64],
    channel: &DiscreteChannel,
    params: &SystemParams,
) -> Result<f64> {
    let horizon = params.horizon;
    if t == 0 || t >= horizon {
        return Err(Error::SlotOutOfRange { t, horizon: horizon - 1 });
    }
    let ratio = q_table[t - 1] / q_table[t];
    if ratio.is_nan() || ratio <= 1.0 {
        return Err(Error::CorruptTables { t, ratio });
    }
    let f = |gamma: f64| threshold_lhs(gamma, params, channel) - ratio;

    let e_max = params.harvest(channel.max_level());
    let mut lo = 1e-12 * e_max;
    while f(lo) <= 0.0 {
        lo *= 0.5;
        if lo < f64::MIN_POSITIVE {
            return Err(Error::CorruptTables { t, ratio });
        }
    }
    let mut hi = e_max;
    while f(hi) >= 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::CorruptTables { t, ratio });
        }
    }
    Ok(bisect_decreasing(f, lo, hi))
}

/// Root of a strictly decreasing `f` with `f(lo) > 0 > f(hi)`.
fn bisect_decreasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < BISECTION_REL_WIDTH * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Precomputed `Q(t)` and stopping thresholds `gamma(t)` for one system and
/// channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTables {
    params: SystemParams,
    /// `Q(0..=T)`, with `Q(T) = 0`.
    q: Vec<f64>,
    /// `gamma(1..=T)` at index `t - 1`, with `gamma(T) = 0`.
    gamma: Vec<f64>,
}

impl PolicyTables {
    pub fn build(params: &SystemParams, channel: &DiscreteChannel) -> Result<Self> {
        let mut q = compute_q_table(params, channel)?;
        let gamma = (1..params.horizon)
            .map(|t| solve_gamma(t, &q, channel, params))
            .chain(std::iter::once(Ok(0.0)))
            .collect::<Result<Vec<_>>>()?;
        q.push(0.0);
        Ok(Self { params: *params, q, gamma })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn horizon(&self) -> usize {
        self.params.horizon
    }

    /// `Q(t)` for `0 <= t <= T`.
    pub fn q(&self, t: usize) -> f64 {
        self.q[t]
    }

    /// `Q(0..T-1)`.
    pub fn q_values(&self) -> &[f64] {
        &self.q[..self.horizon()]
    }

    /// `gamma(t)` for `1 <= t <= T`.
    pub fn gamma(&self, t: usize) -> f64 {
        self.gamma[t - 1]
    }

    /// `gamma(1..T-1)`.
    pub fn gamma_values(&self) -> &[f64] {
        &self.gamma[..self.horizon() - 1]
    }

    /// Optimal fraction of the battery to spend at slot `t` after observing
    /// gain `g`. Exactly 1 in the last slot.
    pub fn alpha_star(&self, t: usize, g: f64) -> Result<f64> {
        if g.is_nan() || g <= 0.0 {
            return Err(Error::InvalidChannel(format!("observed gain must be positive, got {g}")));
        }
        if t >= self.horizon() {
            return Ok(1.0);
        }
        let m = self.params.m;
        let own = g.powf(1.0 / (m - 1.0));
        Ok(own / (own + lift(self.q[t], m)))
    }

    /// Expected bits from slot `t` to `T` with battery `energy` and current
    /// gain `g`, under optimal spending.
    pub fn value(&self, t: usize, energy: f64, g: f64) -> f64 {
        let m = self.params.m;
        (energy / self.params.lambda).powf(1.0 / m) * combine(g, self.q[t], m)
    }

    /// Expected bits when harvesting stops at slot `t` with battery `energy`,
    /// before the slot's gain is seen: `(E/lambda)^(1/m) * Q(t-1)`.
    pub fn expected_stop_value(&self, t: usize, energy: f64) -> f64 {
        (energy / self.params.lambda).powf(1.0 / self.params.m) * self.q[t - 1]
    }

    /// Whether harvesting should stop at slot `t`; always true at `t = T`.
    pub fn should_stop(&self, t: usize, energy: f64) -> bool {
        t >= self.horizon() || energy >= self.gamma(t)
    }

    /// Signed residual of the threshold equation at `gamma(t)`.
    pub fn threshold_residual(&self, t: usize, channel: &DiscreteChannel) -> f64 {
        threshold_lhs(self.gamma(t), &self.params, channel) - self.q[t - 1] / self.q[t]
    }
}

#[derive(Serialize)]
struct TablesDump<'a> {
    #[serde(rename = "Q")]
    q: &'a [f64],
    gamma: &'a [f64],
}

impl Serialize for PolicyTables {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TablesDump { q: self.q_values(), gamma: self.gamma_values() }.serialize(s)
    }
}
