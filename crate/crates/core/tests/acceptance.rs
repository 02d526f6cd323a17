//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line; run with
//! `cargo test -p ehd-core --test acceptance -- --nocapture` to see them.

use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ehd_core::oracle::{compare_with_closed_form, dp_stopping, GridSpec};
use ehd_core::sim::episode_rng;
use ehd_core::{ContinuousFadingLaw, DiscreteChannel, PolicySpec, PolicyTables, Simulator, SystemParams};

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] AC{id} {name}: {detail}");
    assert!(pass, "AC{id} {name} failed: {detail}");
}

fn random_channel(rng: &mut ChaCha8Rng, max_levels: usize) -> DiscreteChannel {
    let n = rng.gen_range(1..=max_levels);
    let mut levels: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..3.0)).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let weights: Vec<f64> = levels.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    DiscreteChannel::new(levels, weights.iter().map(|w| w / total).collect()).unwrap()
}

/// The 20 small instances shared by criteria 1 and 2.
fn small_instances() -> Vec<(SystemParams, DiscreteChannel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    (0..20)
        .map(|i| {
            let params = SystemParams {
                horizon: rng.gen_range(2..=8),
                power: rng.gen_range(0.5..10.0),
                eta: rng.gen_range(0.2..=1.0),
                lambda: rng.gen_range(0.05..1.0),
                m: if i % 2 == 0 { 2.0 } else { 3.0 },
            };
            (params, random_channel(&mut rng, 4))
        })
        .collect()
}

fn paper_instance(horizon: usize) -> (SystemParams, DiscreteChannel) {
    let params = SystemParams { horizon, power: 10.0, eta: 1.0, lambda: 0.1, m: 3.0 };
    let channel = DiscreteChannel::discretize(ContinuousFadingLaw::Exponential { mean: 1.0 }, 20).unwrap();
    (params, channel)
}

#[test]
fn ac1_closed_form_matches_it_oracle() {
    let start = Instant::now();
    let mut worst_value: f64 = 0.0;
    let mut worst_alpha_steps: f64 = 0.0;
    for (params, channel) in small_instances() {
        let grid = GridSpec::for_instance(&params, &channel, 512, 512);
        let r = compare_with_closed_form(&params, &channel, &grid).unwrap();
        worst_value = worst_value.max(r.value_max_rel_error);
        worst_alpha_steps = worst_alpha_steps.max(r.alpha_max_abs_error / r.alpha_step);
    }
    let elapsed = start.elapsed();
    let pass = worst_value <= 1e-2 && worst_alpha_steps <= 1.0 && elapsed < Duration::from_secs(60);
    report(
        1,
        "closed-form value and alpha vs IT oracle",
        pass,
        format!("max rel err {worst_value:.3e} (<= 1e-2), max alpha err {worst_alpha_steps:.3} steps (<= 1), {elapsed:.2?} (< 60 s)"),
    );
}

#[test]
fn ac2_threshold_structure() {
    let mut worst_spacings: f64 = 0.0;
    let mut all_single = true;
    for (params, channel) in small_instances() {
        let grid = GridSpec::for_instance(&params, &channel, 512, 512);
        let r = compare_with_closed_form(&params, &channel, &grid).unwrap();
        all_single &= r.single_crossing;
        worst_spacings = worst_spacings.max(r.threshold_max_abs_error / r.energy_spacing);
    }
    report(
        2,
        "single-crossing stop regions and thresholds vs oracle",
        all_single && worst_spacings <= 1.0,
        format!("single crossing: {all_single}, max threshold err {worst_spacings:.3} grid spacings (<= 1)"),
    );
}

#[test]
fn ac3_q_strictly_decreasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    let mut checked = 0;
    for m in [1.5, 2.0, 3.0, 5.0] {
        for _ in 0..10 {
            let channel = random_channel(&mut rng, 8);
            let params = SystemParams { horizon: 1000, power: 1.0, eta: 1.0, lambda: 1.0, m };
            let tables = PolicyTables::build(&params, &channel).unwrap();
            for t in 0..1000 {
                checked += 1;
                if tables.q(t) <= tables.q(t + 1) || tables.q(t).is_nan() {
                    violations += 1;
                }
            }
        }
    }
    report(3, "Q(t) strictly decreasing", violations == 0, format!("{violations} violations in {checked} steps"));
}

#[test]
fn ac4_deterministic_closed_forms() {
    let params = SystemParams { horizon: 10, power: 1.0, eta: 1.0, lambda: 1.0, m: 2.0 };
    let channel = DiscreteChannel::constant(1.0).unwrap();
    let tables = PolicyTables::build(&params, &channel).unwrap();
    let mut worst: f64 = 0.0;
    for t in 0..10 {
        worst = worst.max((tables.q(t) - ((10 - t) as f64).sqrt()).abs());
    }
    for t in 1..10 {
        worst = worst.max((tables.gamma(t) - (10 - t) as f64).abs());
    }
    for t in 1..=10 {
        worst = worst.max((tables.alpha_star(t, 1.0).unwrap() - 1.0 / (11 - t) as f64).abs());
    }
    let sim = Simulator::new(&params, &channel, &tables).unwrap();
    let trace = sim.run_episode(PolicySpec::Optimal, &mut episode_rng(4, 0)).unwrap();
    worst = worst.max((trace.total_bits - 5.0).abs());
    report(
        4,
        "deterministic-channel closed forms",
        worst <= 1e-10,
        format!("max abs err {worst:.3e} over Q, gamma, alpha, episode bits (<= 1e-10)"),
    );
}

#[test]
fn ac5_expected_stop_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let channel = random_channel(&mut rng, 10);
        let params = SystemParams {
            horizon: rng.gen_range(2..60),
            power: rng.gen_range(0.5..20.0),
            eta: rng.gen_range(0.1..=1.0),
            lambda: rng.gen_range(0.01..2.0),
            m: rng.gen_range(1.2..6.0),
        };
        let tables = PolicyTables::build(&params, &channel).unwrap();
        for _ in 0..100 {
            let t = rng.gen_range(1..=params.horizon);
            let e = rng.gen_range(1e-3..100.0);
            let direct = tables.expected_stop_value(t, e);
            let averaged = channel.expectation(|g| tables.value(t, e, g));
            worst = worst.max((direct - averaged).abs() / direct);
        }
    }
    report(5, "expected stop value identity", worst <= 1e-12, format!("max rel err {worst:.3e} over 1000 probes (<= 1e-12)"));
}

#[test]
fn ac6_reference_orderings() {
    let start = Instant::now();
    let episodes = 100_000;
    let seed = 6;
    let (params, channel) = paper_instance(50);
    let tables = PolicyTables::build(&params, &channel).unwrap();
    let sim = Simulator::new(&params, &channel, &tables).unwrap();
    let optimal = sim.run_monte_carlo(PolicySpec::Optimal, episodes, seed).unwrap();
    let mut beats_all = true;
    let mut detail = format!("optimal {:.4}±{:.4}", optimal.mean_bits, optimal.ci95);
    for beta in [1.0 / 3.0, 0.5, 2.0 / 3.0] {
        let b = sim.run_monte_carlo(PolicySpec::Beta(beta), episodes, seed).unwrap();
        beats_all &= optimal.mean_bits - b.mean_bits > optimal.ci95 + b.ci95;
        detail.push_str(&format!(", beta {beta:.3}: {:.4}±{:.4}", b.mean_bits, b.ci95));
    }

    let mut means = Vec::new();
    for horizon in [10, 20, 30, 40, 50] {
        let (params, channel) = paper_instance(horizon);
        let tables = PolicyTables::build(&params, &channel).unwrap();
        let sim = Simulator::new(&params, &channel, &tables).unwrap();
        means.push(sim.run_monte_carlo(PolicySpec::Optimal, episodes, seed).unwrap().mean_bits);
    }
    let increasing = means.windows(2).all(|w| w[1] > w[0]);
    let elapsed = start.elapsed();
    detail.push_str(&format!(
        "; optimal over T=10..50: {:?}; {elapsed:.2?} (< 300 s)",
        means.iter().map(|m| (m * 1e3).round() / 1e3).collect::<Vec<_>>()
    ));
    report(6, "optimal beats beta baselines, throughput grows with T", beats_all && increasing && elapsed < Duration::from_secs(300), detail);
}

#[test]
fn ac7_simulation_matches_stopping_oracle() {
    let params = SystemParams { horizon: 8, power: 10.0, eta: 1.0, lambda: 0.1, m: 3.0 };
    let channel = DiscreteChannel::discretize(ContinuousFadingLaw::Exponential { mean: 1.0 }, 3).unwrap();
    let grid = GridSpec::default_for(&params, &channel);
    let table = dp_stopping(&params, &channel, &grid).unwrap();
    let oracle_value = table.value(1, 0);

    // Largest change of J across one grid cell among energies reachable
    // after at least one harvest.
    let min_harvest = params.harvest(channel.levels()[0]);
    let mut cell_effect: f64 = 0.0;
    for t in 2..=params.horizon {
        let row = table.row(t);
        for k in 0..grid.k_e - 1 {
            if grid.energy(k + 1) >= min_harvest {
                cell_effect = cell_effect.max((row[k + 1] - row[k]).abs());
            }
        }
    }

    let tables = PolicyTables::build(&params, &channel).unwrap();
    let sim = Simulator::new(&params, &channel, &tables).unwrap();
    let mc = sim.run_monte_carlo(PolicySpec::Optimal, 1_000_000, 7).unwrap();
    let gap = (mc.mean_bits - oracle_value).abs();
    let tolerance = mc.ci95 + cell_effect;
    report(
        7,
        "Monte Carlo optimal mean vs J_1(0)",
        gap <= tolerance,
        format!("MC {:.5}, J_1(0) {oracle_value:.5}, gap {gap:.2e} <= CI {:.2e} + cell {cell_effect:.2e}", mc.mean_bits, mc.ci95),
    );
}

fn run_cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_ehd")).args(args).output().unwrap();
    assert!(out.status.success(), "ehd {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

#[test]
fn ac8_reproducible_outputs() {
    let mut identical = true;
    let mut compared = 0;
    for format in ["csv", "json"] {
        for cmd in [
            vec!["simulate", "--T", "20", "--N", "8", "--episodes", "2000", "--seed", "8"],
            vec!["sweep", "--T", "20", "--N", "8", "--episodes", "500", "--seed", "8", "--sweep", "m", "--values", "2,3,4"],
        ] {
            let mut outputs = Vec::new();
            for threads in ["1", "1", "4"] {
                let mut args = cmd.clone();
                args.extend(["--format", format, "--threads", threads]);
                outputs.push(run_cli(&args));
            }
            compared += 1;
            identical &= !outputs[0].is_empty() && outputs.iter().all(|o| *o == outputs[0]);
        }
    }
    report(8, "byte-identical outputs across runs and worker counts", identical, format!("{compared} command/format pairs, 3 runs each (1, 1, 4 threads)"));
}

#[test]
fn ac9_energy_conservation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    let mut negative = 0;
    let mut episodes = 0;
    for instance in 0..20 {
        let channel = random_channel(&mut rng, 10);
        let params = SystemParams {
            horizon: rng.gen_range(2..60),
            power: rng.gen_range(0.5..20.0),
            eta: rng.gen_range(0.1..=1.0),
            lambda: rng.gen_range(0.01..2.0),
            m: rng.gen_range(1.2..6.0),
        };
        let tables = PolicyTables::build(&params, &channel).unwrap();
        let sim = Simulator::new(&params, &channel, &tables).unwrap();
        let policies = [
            PolicySpec::Optimal,
            PolicySpec::Beta(rng.gen_range(0.05..0.95)),
            PolicySpec::ForcedStop(rng.gen_range(1..=params.horizon)),
        ];
        for i in 0..500u64 {
            let policy = policies[(i % 3) as usize];
            let trace = sim.run_episode(policy, &mut episode_rng(instance, i)).unwrap();
            episodes += 1;
            negative += trace.slots.iter().filter(|s| s.energy < 0.0).count();
            if trace.final_energy < 0.0 {
                negative += 1;
            }
            if trace.harvested > 0.0 {
                worst = worst.max((trace.harvested - trace.spent).abs() / trace.harvested);
            } else {
                worst = worst.max(trace.spent.abs());
            }
        }
    }
    report(
        9,
        "energy conservation",
        worst <= 1e-12 && negative == 0,
        format!("{episodes} episodes, max rel imbalance {worst:.3e} (<= 1e-12), {negative} negative battery readings"),
    );
}
