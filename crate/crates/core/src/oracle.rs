//! Brute-force dynamic-programming reference.
//!
//! Two grid solvers that know nothing about the closed forms beyond the
//! terminal stop value:
//!
//! * [`dp_it_value`] runs backward induction over `(t, E, g)` for the
//!   transmission phase, maximizing over an exhaustive grid of spending
//!   fractions.
//! * [`dp_stopping`] runs the optimal-stopping recursion
//!   `J_t(E) = max(stop value, E[J_{t+1}(E + e_n)])` on an energy grid.
//!
//! Both are slow on purpose and meant for small instances only.
//!
//! Values between energy grid points are interpolated linearly in the
//! coordinate `u = E^(1/m)`, in which the per-slot bit reward is linear.
//! Above the top of the grid they are extrapolated with the `E^(1/m)`
//! scaling law.

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::DiscreteChannel;
use crate::error::{Error, Result};
use crate::policy::{compute_q_table, PolicyTables, SystemParams};

pub const DEFAULT_GRID_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub e_max: f64,
    pub k_e: usize,
    pub k_alpha: usize,
}

impl GridSpec {
    /// Grid topping out at the largest energy a frame can harvest,
    /// `(T-1) * eta * g_N * P`.
    pub fn for_instance(params: &SystemParams, channel: &DiscreteChannel, k_e: usize, k_alpha: usize) -> Self {
        let e_max = (params.horizon - 1) as f64 * params.harvest(channel.max_level());
        Self { e_max, k_e, k_alpha }
    }

    pub fn default_for(params: &SystemParams, channel: &DiscreteChannel) -> Self {
        Self::for_instance(params, channel, DEFAULT_GRID_POINTS, DEFAULT_GRID_POINTS)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_max.is_finite() && self.e_max > 0.0) {
            return Err(Error::InvalidGrid(format!("E_max must be positive, got {}", self.e_max)));
        }
        if self.k_e < 2 || self.k_alpha < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points per axis, got K_E={} K_alpha={}",
                self.k_e, self.k_alpha
            )));
        }
        Ok(())
    }

    pub fn energy_spacing(&self) -> f64 {
        self.e_max / (self.k_e - 1) as f64
    }

    pub fn alpha_step(&self) -> f64 {
        1.0 / (self.k_alpha - 1) as f64
    }

    pub fn energy(&self, k: usize) -> f64 {
        if k + 1 == self.k_e {
            self.e_max
        } else {
            k as f64 * self.energy_spacing()
        }
    }

    pub fn alpha(&self, j: usize) -> f64 {
        if j + 1 == self.k_alpha {
            1.0
        } else {
            j as f64 * self.alpha_step()
        }
    }
}

/// Uniform energy grid with interpolation in `E^(1/m)`.
struct EnergyAxis {
    spec: GridSpec,
    inv_m: f64,
    /// `E_k^(1/m)`.
    roots: Vec<f64>,
}

impl EnergyAxis {
    fn new(spec: GridSpec, m: f64) -> Self {
        let inv_m = 1.0 / m;
        let roots = (0..spec.k_e).map(|k| spec.energy(k).powf(inv_m)).collect();
        Self { spec, inv_m, roots }
    }

    fn interpolate(&self, values: &[f64], e: f64) -> f64 {
        let last = self.spec.k_e - 1;
        if e >= self.spec.e_max {
            return values[last] * (e / self.spec.e_max).powf(self.inv_m);
        }
        if e <= 0.0 {
            return values[0];
        }
        let k = ((e / self.spec.energy_spacing()) as usize).min(last - 1);
        let (u0, u1) = (self.roots[k], self.roots[k + 1]);
        let w = (e.powf(self.inv_m) - u0) / (u1 - u0);
        values[k] + w * (values[k + 1] - values[k])
    }
}

/// Transmission-phase values `V(t, E_k, g_n)` and the maximizing fractions.
#[derive(Debug, Clone)]
pub struct ItValueTable {
    pub grid: GridSpec,
    levels: usize,
    /// `[t - 1][k * N + n]`.
    values: Vec<Vec<f64>>,
    alphas: Vec<Vec<f64>>,
}

impl ItValueTable {
    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn value(&self, t: usize, k: usize, n: usize) -> f64 {
        self.values[t - 1][k * self.levels + n]
    }

    pub fn alpha(&self, t: usize, k: usize, n: usize) -> f64 {
        self.alphas[t - 1][k * self.levels + n]
    }
}

/// Backward induction for the transmission phase with `alpha(T) = 1`.
pub fn dp_it_value(params: &SystemParams, channel: &DiscreteChannel, grid: &GridSpec) -> Result<ItValueTable> {
    params.validate()?;
    grid.validate()?;
    let horizon = params.horizon;
    let levels = channel.len();
    let inv_m = 1.0 / params.m;
    let axis = EnergyAxis::new(*grid, params.m);
    // (g_n / lambda)^(1/m)
    let gain_roots: Vec<f64> = channel.levels().iter().map(|g| (g / params.lambda).powf(inv_m)).collect();
    let alpha_roots: Vec<f64> = (0..grid.k_alpha).map(|j| grid.alpha(j).powf(inv_m)).collect();

    let mut values = vec![Vec::new(); horizon];
    let mut alphas = vec![Vec::new(); horizon];

    values[horizon - 1] = axis
        .roots
        .iter()
        .flat_map(|er| gain_roots.iter().map(move |gr| gr * er))
        .collect();
    alphas[horizon - 1] = vec![1.0; grid.k_e * levels];

    for t in (1..horizon).rev() {
        let next = &values[t];
        // Expected next-slot value over the unseen gain, on the grid.
        let expected_next: Vec<f64> = (0..grid.k_e)
            .map(|k| {
                channel
                    .probs()
                    .iter()
                    .enumerate()
                    .map(|(n, q)| q * next[k * levels + n])
                    .sum()
            })
            .collect();

        let layer: Vec<(f64, f64)> = (0..grid.k_e)
            .into_par_iter()
            .flat_map_iter(|k| {
                let e = grid.energy(k);
                let continuation: Vec<f64> = (0..grid.k_alpha)
                    .map(|j| axis.interpolate(&expected_next, (1.0 - grid.alpha(j)) * e))
                    .collect();
                let e_root = axis.roots[k];
                gain_roots
                    .iter()
                    .map(|gr| {
                        let mut best = (f64::NEG_INFINITY, 0.0);
                        for (j, cont) in continuation.iter().enumerate() {
                            let v = gr * alpha_roots[j] * e_root + cont;
                            if v > best.0 {
                                best = (v, grid.alpha(j));
                            }
                        }
                        best
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        values[t - 1] = layer.iter().map(|p| p.0).collect();
        alphas[t - 1] = layer.iter().map(|p| p.1).collect();
    }

    Ok(ItValueTable { grid: *grid, levels, values, alphas })
}

/// Optimal-stopping values `J_t(E_k)` and the region where stopping wins.
#[derive(Debug, Clone)]
pub struct StoppingTable {
    pub grid: GridSpec,
    /// `[t - 1][k]`.
    j: Vec<Vec<f64>>,
    stop: Vec<Vec<bool>>,
}

impl StoppingTable {
    pub fn horizon(&self) -> usize {
        self.j.len()
    }

    pub fn value(&self, t: usize, k: usize) -> f64 {
        self.j[t - 1][k]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.j[t - 1]
    }

    pub fn stops(&self, t: usize, k: usize) -> bool {
        self.stop[t - 1][k]
    }

    pub fn stop_row(&self, t: usize) -> &[bool] {
        &self.stop[t - 1]
    }
}

pub fn dp_stopping(params: &SystemParams, channel: &DiscreteChannel, grid: &GridSpec) -> Result<StoppingTable> {
    params.validate()?;
    grid.validate()?;
    let horizon = params.horizon;
    let q = compute_q_table(params, channel)?;
    let inv_m = 1.0 / params.m;
    let axis = EnergyAxis::new(*grid, params.m);
    let harvests: Vec<f64> = channel.levels().iter().map(|&g| params.harvest(g)).collect();
    let scale: Vec<f64> = (0..grid.k_e)
        .map(|k| (grid.energy(k) / params.lambda).powf(inv_m))
        .collect();

    let mut j = vec![Vec::new(); horizon];
    let mut stop = vec![Vec::new(); horizon];
    j[horizon - 1] = scale.iter().map(|s| s * q[horizon - 1]).collect();
    stop[horizon - 1] = vec![true; grid.k_e];

    for t in (1..horizon).rev() {
        let next = &j[t];
        let layer: Vec<(f64, bool)> = (0..grid.k_e)
            .into_par_iter()
            .map(|k| {
                let e = grid.energy(k);
                let stop_value = scale[k] * q[t - 1];
                let continue_value: f64 = channel
                    .probs()
                    .iter()
                    .zip(&harvests)
                    .map(|(p, h)| p * axis.interpolate(next, e + h))
                    .sum();
                if stop_value >= continue_value {
                    (stop_value, true)
                } else {
                    (continue_value, false)
                }
            })
            .collect();
        j[t - 1] = layer.iter().map(|p| p.0).collect();
        stop[t - 1] = layer.iter().map(|p| p.1).collect();
    }

    Ok(StoppingTable { grid: *grid, j, stop })
}

/// Smallest grid energy at which stopping is optimal in slot `t`, or
/// infinity when no grid point stops. Fails when the stopping region is not
/// an upper set of the grid.
pub fn extract_threshold(table: &StoppingTable, t: usize) -> Result<f64> {
    let horizon = table.horizon();
    if t == 0 || t > horizon {
        return Err(Error::SlotOutOfRange { t, horizon });
    }
    if t == horizon {
        return Ok(0.0);
    }
    let row = table.stop_row(t);
    match row.iter().position(|&s| s) {
        None => Ok(f64::INFINITY),
        Some(first) => {
            if row[first..].iter().all(|&s| s) {
                Ok(table.grid.energy(first))
            } else {
                Err(Error::NotSingleCrossing { t })
            }
        }
    }
}

/// Discrepancies between the closed-form controller and both oracles.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub levels: usize,
    #[serde(rename = "K_E")]
    pub k_e: usize,
    #[serde(rename = "K_alpha")]
    pub k_alpha: usize,
    pub e_max: f64,
    /// Max over grid states with `E > 0` of `|V_oracle - V| / V`.
    pub value_max_rel_error: f64,
    /// Max over `t < T`, `E > 0` of `|alpha_oracle - alpha*|`.
    pub alpha_max_abs_error: f64,
    pub alpha_step: f64,
    /// Max over `t < T` of `|grid threshold - gamma(t)|`.
    pub threshold_max_abs_error: f64,
    pub energy_spacing: f64,
    pub single_crossing: bool,
}

impl OracleReport {
    pub fn passes(&self) -> bool {
        self.single_crossing
            && self.value_max_rel_error <= 1e-2
            && self.alpha_max_abs_error <= self.alpha_step
            && self.threshold_max_abs_error <= self.energy_spacing
    }
}

pub fn compare_with_closed_form(
    params: &SystemParams,
    channel: &DiscreteChannel,
    grid: &GridSpec,
) -> Result<OracleReport> {
    let tables = PolicyTables::build(params, channel)?;
    let it = dp_it_value(params, channel, grid)?;
    let stopping = dp_stopping(params, channel, grid)?;
    let horizon = params.horizon;

    let mut value_err: f64 = 0.0;
    let mut alpha_err: f64 = 0.0;
    for t in 1..=horizon {
        for k in 1..grid.k_e {
            let e = grid.energy(k);
            for (n, &g) in channel.levels().iter().enumerate() {
                let exact = tables.value(t, e, g);
                value_err = value_err.max((it.value(t, k, n) - exact).abs() / exact);
                if t < horizon {
                    alpha_err = alpha_err.max((it.alpha(t, k, n) - tables.alpha_star(t, g)?).abs());
                }
            }
        }
    }

    let mut threshold_err: f64 = 0.0;
    let mut single_crossing = true;
    for t in 1..horizon {
        match extract_threshold(&stopping, t) {
            Ok(th) => threshold_err = threshold_err.max((th - tables.gamma(t)).abs()),
            Err(Error::NotSingleCrossing { .. }) => single_crossing = false,
            Err(e) => return Err(e),
        }
    }

    Ok(OracleReport {
        horizon,
        levels: channel.len(),
        k_e: grid.k_e,
        k_alpha: grid.k_alpha,
        e_max: grid.e_max,
        value_max_rel_error: value_err,
        alpha_max_abs_error: alpha_err,
        alpha_step: grid.alpha_step(),
        threshold_max_abs_error: threshold_err,
        energy_spacing: grid.energy_spacing(),
        single_crossing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_params(horizon: usize, m: f64) -> SystemParams {
        SystemParams { horizon, power: 1.0, eta: 1.0, lambda: 1.0, m }
    }

    #[test]
    fn grid_validation() {
        let g = GridSpec { e_max: 1.0, k_e: 2, k_alpha: 2 };
        assert!(g.validate().is_ok());
        assert!(GridSpec { k_e: 1, ..g }.validate().is_err());
        assert!(GridSpec { k_alpha: 1, ..g }.validate().is_err());
        assert!(GridSpec { e_max: 0.0, ..g }.validate().is_err());
        assert_eq!(g.energy(1), 1.0);
        assert_eq!(g.alpha(1), 1.0);
    }

    #[test]
    fn terminal_row_is_full_spend() {
        let ch = DiscreteChannel::new(vec![0.4, 1.1, 2.0], vec![0.2, 0.5, 0.3]).unwrap();
        let params = SystemParams { lambda: 0.3, m: 3.0, ..unit_params(4, 3.0) };
        let grid = GridSpec::for_instance(&params, &ch, 64, 32);
        let it = dp_it_value(&params, &ch, &grid).unwrap();
        for k in 0..grid.k_e {
            for (n, &g) in ch.levels().iter().enumerate() {
                let exact = params.bits(grid.energy(k), g);
                assert!((it.value(4, k, n) - exact).abs() <= 1e-12 * exact.max(1.0));
                assert_eq!(it.alpha(4, k, n), 1.0);
            }
        }
    }

    #[test]
    fn uniform_spreading_hand_value() {
        // N=1, g=1, m=2, lambda=1, T=4, E=1: spend 1/4 per slot -> 4 * sqrt(1/4) = 2.
        let ch = DiscreteChannel::constant(1.0).unwrap();
        let params = unit_params(4, 2.0);
        let grid = GridSpec { e_max: 1.0, k_e: 2, k_alpha: 401 };
        let it = dp_it_value(&params, &ch, &grid).unwrap();
        assert!((it.value(1, 1, 0) - 2.0).abs() < 1e-4, "{}", it.value(1, 1, 0));
        assert!((it.alpha(1, 1, 0) - 0.25).abs() <= grid.alpha_step());
        let tables = PolicyTables::build(&params, &ch).unwrap();
        assert!((tables.value(1, 1.0, 1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn small_random_instance_matches_closed_form() {
        let ch = DiscreteChannel::new(vec![0.3, 0.9, 2.2], vec![0.3, 0.45, 0.25]).unwrap();
        let params = SystemParams { horizon: 6, power: 2.0, eta: 0.7, lambda: 0.2, m: 2.5 };
        let grid = GridSpec::for_instance(&params, &ch, 400, 400);
        let report = compare_with_closed_form(&params, &ch, &grid).unwrap();
        assert!(report.value_max_rel_error < 1e-2, "{report:?}");
        assert!(report.alpha_max_abs_error <= grid.alpha_step(), "{report:?}");
        assert!(report.passes(), "{report:?}");
    }

    #[test]
    fn it_error_shrinks_with_resolution() {
        let ch = DiscreteChannel::new(vec![0.5, 1.5], vec![0.6, 0.4]).unwrap();
        let params = unit_params(5, 3.0);
        let coarse = compare_with_closed_form(&params, &ch, &GridSpec::for_instance(&params, &ch, 32, 16)).unwrap();
        let fine = compare_with_closed_form(&params, &ch, &GridSpec::for_instance(&params, &ch, 128, 256)).unwrap();
        assert!(fine.value_max_rel_error < coarse.value_max_rel_error);
        assert!(fine.alpha_max_abs_error <= coarse.alpha_max_abs_error);
    }

    #[test]
    fn stopping_terminal_row() {
        let ch = DiscreteChannel::new(vec![0.5, 1.5], vec![0.5, 0.5]).unwrap();
        let params = unit_params(5, 2.0);
        let grid = GridSpec::default_for(&params, &ch);
        let table = dp_stopping(&params, &ch, &grid).unwrap();
        let q = compute_q_table(&params, &ch).unwrap();
        for k in 0..grid.k_e {
            let expected = (grid.energy(k) / params.lambda).sqrt() * q[4];
            assert!((table.value(5, k) - expected).abs() < 1e-12);
            assert!(table.stops(5, k));
        }
    }

    #[test]
    fn deterministic_stop_regions_start_at_gamma() {
        let ch = DiscreteChannel::constant(1.0).unwrap();
        let params = unit_params(10, 2.0);
        let grid = GridSpec::default_for(&params, &ch);
        assert_eq!(grid.e_max, 9.0);
        let table = dp_stopping(&params, &ch, &grid).unwrap();
        for t in 1..10 {
            let th = extract_threshold(&table, t).unwrap();
            assert!((th - (10 - t) as f64).abs() <= grid.energy_spacing(), "t={t}: {th}");
        }
        let th6 = extract_threshold(&table, 6).unwrap();
        assert!((th6 - 4.0).abs() <= grid.energy_spacing());
        assert_eq!(extract_threshold(&table, 10).unwrap(), 0.0);
        assert!(extract_threshold(&table, 0).is_err());
    }

    #[test]
    fn non_single_crossing_is_reported() {
        let ch = DiscreteChannel::constant(1.0).unwrap();
        let params = unit_params(4, 2.0);
        let grid = GridSpec { e_max: 3.0, k_e: 8, k_alpha: 2 };
        let mut table = dp_stopping(&params, &ch, &grid).unwrap();
        table.stop[0] = vec![false, true, false, true, true, true, true, true];
        assert!(matches!(extract_threshold(&table, 1), Err(Error::NotSingleCrossing { t: 1 })));
    }

    #[test]
    fn rayleigh_thresholds_match_closed_form() {
        use crate::channel::ContinuousFadingLaw;
        let ch = DiscreteChannel::discretize(ContinuousFadingLaw::Exponential { mean: 1.0 }, 5).unwrap();
        let params = SystemParams { horizon: 8, power: 10.0, eta: 1.0, lambda: 0.1, m: 3.0 };
        let grid = GridSpec::default_for(&params, &ch);
        let table = dp_stopping(&params, &ch, &grid).unwrap();
        let tables = PolicyTables::build(&params, &ch).unwrap();
        for t in 1..8 {
            let th = extract_threshold(&table, t).unwrap();
            assert!((th - tables.gamma(t)).abs() <= grid.energy_spacing(), "t={t}: {th} vs {}", tables.gamma(t));
        }
    }
}
