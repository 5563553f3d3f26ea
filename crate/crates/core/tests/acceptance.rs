//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to stderr.
//!
//! Run with `cargo test --release -p atmarl --test acceptance -- --nocapture --test-threads 1`
//! to see the lines in order.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use atmarl::config::ScenarioConfig;
use atmarl::emulator::{allocate_capacity, init_scenario, DistributionKind, DistributionSpec, MBR_LADDER};
use atmarl::harness::{
    evaluate, evaluate_plan, run_pipeline, train_stage, Approach, EpisodeTrace, ExperimentPlan, PipelineResult, Role,
    SeedArtifacts, Shift,
};
use atmarl::metrics::{iae, Direction, KpiSeries, DEFAULT_TOLERANCE};
use atmarl::nn::Activation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {id:>2} [{verdict}] {name}: {detail}");
}

fn approach_mean<F: Fn(&EpisodeTrace) -> f64>(traces: &[EpisodeTrace], approach: Approach, f: F) -> f64 {
    let runs: Vec<f64> = traces.iter().filter(|t| t.approach == approach).map(f).collect();
    runs.iter().sum::<f64>() / runs.len() as f64
}

/// Mean IAE over seeds for KPI `k`; infinite when any seed never reaches the band.
fn mean_iae(traces: &[EpisodeTrace], approach: Approach, k: usize) -> f64 {
    approach_mean(traces, approach, |t| iae(&t.series(k).unwrap()).unwrap_or(f64::INFINITY))
}

fn mean_oscillation(traces: &[EpisodeTrace], approach: Approach, k: usize, from: usize) -> f64 {
    approach_mean(traces, approach, |t| t.metrics(from).unwrap()[k].oscillation)
}

fn services(traces: &[EpisodeTrace]) -> Vec<String> {
    traces[0].services.clone()
}

struct Uniform {
    plan: ExperimentPlan,
    result: PipelineResult,
    elapsed: Duration,
}

fn uniform() -> &'static Uniform {
    static CELL: OnceLock<Uniform> = OnceLock::new();
    CELL.get_or_init(|| {
        let plan = ExperimentPlan::new(
            ScenarioConfig::three_intent(),
            vec![Approach::AtMarl, Approach::GoalHalving, Approach::RuleBased, Approach::NaiveParallel],
        );
        let start = Instant::now();
        let result = run_pipeline(&plan).expect("uniform pipeline");
        Uniform {
            plan,
            result,
            elapsed: start.elapsed(),
        }
    })
}

#[test]
fn criterion_01_iae_ordering() {
    let u = uniform();
    let traces = &u.result.traces;
    let mut strict = 0;
    let mut inverted = Vec::new();
    let mut detail = Vec::new();
    for (k, name) in services(traces).iter().enumerate() {
        let at = mean_iae(traces, Approach::AtMarl, k);
        let gh = mean_iae(traces, Approach::GoalHalving, k);
        let rb = mean_iae(traces, Approach::RuleBased, k);
        if at < gh && gh < rb {
            strict += 1;
        }
        if at > rb {
            inverted.push(name.clone());
        }
        detail.push(format!("{name} AT {at:.3} GH {gh:.3} RB {rb:.3}"));
    }
    let fast = u.elapsed < Duration::from_secs(15 * 60);
    let pass = strict >= 2 && inverted.is_empty() && fast;
    report(
        1,
        "IAE ordering",
        pass,
        &format!(
            "{}; strict on {strict}/3, inverted {:?}, pipeline {:.0}s",
            detail.join(", "),
            inverted,
            u.elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

/// Mean convergence step over seeds and KPIs; a KPI that never settles counts as the episode length.
fn mean_convergence(traces: &[EpisodeTrace], approach: Approach, len: usize, from: usize) -> f64 {
    approach_mean(traces, approach, |t| {
        let m = t.metrics(from).unwrap();
        m.iter().map(|x| x.convergence.unwrap_or(len) as f64).sum::<f64>() / m.len() as f64
    })
}

#[test]
fn criterion_02_convergence_speedup() {
    let u = uniform();
    let (len, from) = (u.plan.episode_len, u.plan.oscillation_from);
    let at = mean_convergence(&u.result.traces, Approach::AtMarl, len, from);
    let rb = mean_convergence(&u.result.traces, Approach::RuleBased, len, from);
    let pass = at <= 0.85 * rb;
    report(2, "convergence speedup", pass, &format!("AT {at:.2} steps, RB {rb:.2} steps, limit {:.2}", 0.85 * rb));
    assert!(pass);
}

#[test]
fn criterion_03_naive_parallel_oscillates() {
    let u = uniform();
    let traces = &u.result.traces;
    let from = u.plan.oscillation_from;
    let names = services(traces);
    let np: Vec<f64> = (0..names.len()).map(|k| mean_oscillation(traces, Approach::NaiveParallel, k, from)).collect();
    let at: Vec<f64> = (0..names.len()).map(|k| mean_oscillation(traces, Approach::AtMarl, k, from)).collect();
    let np_unreached = (0..names.len()).any(|k| mean_iae(traces, Approach::NaiveParallel, k).is_infinite());
    let np_fails = np.iter().any(|&o| o > 0.15) || np_unreached;
    let at_steady = at.iter().all(|&o| o < 0.10);
    let pass = np_fails && at_steady;
    report(
        3,
        "naive-parallel failure",
        pass,
        &format!("oscillation NP {np:.3?} (unreached {np_unreached}), AT {at:.3?} over {names:?}"),
    );
    assert!(pass);
}

struct Gaussian {
    traces: Vec<EpisodeTrace>,
}

fn gaussian() -> &'static Gaussian {
    static CELL: OnceLock<Gaussian> = OnceLock::new();
    CELL.get_or_init(|| {
        let u = uniform();
        let mut plan = u.plan.clone();
        plan.eval_distribution = Some(DistributionSpec::of_kind(DistributionKind::Gaussian));
        plan.approaches = vec![Approach::AtMarl, Approach::RuleBased, Approach::Oracle];
        let eval = plan.eval_scenario();
        let artifacts: Vec<SeedArtifacts> = u
            .result
            .artifacts
            .iter()
            .map(|a| {
                let mut a = a.clone();
                train_stage(&mut a, Role::Oracle, &eval, &plan.train, plan.goal_levels).expect("oracle training");
                a
            })
            .collect();
        let (traces, _) = evaluate_plan(&plan, &artifacts).expect("gaussian evaluation");
        Gaussian { traces }
    })
}

#[test]
fn criterion_04_generalization() {
    let g = gaussian();
    let traces = &g.traces;
    let mut pass = true;
    let mut detail = Vec::new();
    for (k, name) in services(traces).iter().enumerate() {
        let at = mean_iae(traces, Approach::AtMarl, k);
        let rb = mean_iae(traces, Approach::RuleBased, k);
        let oracle = mean_iae(traces, Approach::Oracle, k);
        pass &= at < rb && at <= 1.5 * oracle;
        detail.push(format!("{name} AT {at:.3} RB {rb:.3} oracle {oracle:.3}"));
    }
    report(4, "generalization to gaussian", pass, &detail.join(", "));
    assert!(pass);
}

#[test]
fn criterion_05_five_intents() {
    let plan = ExperimentPlan::new(ScenarioConfig::five_intent(), vec![Approach::AtMarl]);
    let result = run_pipeline(&plan).expect("five-intent pipeline");
    let goal_counts: Vec<usize> = result.traces.iter().flat_map(|t| t.rows.iter().map(|r| r.goals.len())).collect();
    let ten_goals = goal_counts.iter().all(|&n| n == 10);
    let mut unreached = Vec::new();
    for t in &result.traces {
        for (k, name) in t.services.iter().enumerate() {
            if iae(&t.series(k).unwrap()).is_none() {
                unreached.push(format!("{name}@seed{}", t.seed));
            }
        }
    }
    let pass = ten_goals && unreached.is_empty() && result.traces.len() == plan.seeds.len();
    report(
        5,
        "five-intent scalability",
        pass,
        &format!("10 goals on every step: {ten_goals}; never in band: {unreached:?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_shift_recovery() {
    let u = uniform();
    let mut plan = u.plan.clone();
    plan.approaches = vec![Approach::AtMarl];
    plan.shifts = vec![
        Shift {
            at: 20,
            distribution: DistributionSpec::of_kind(DistributionKind::Gaussian),
        },
        Shift {
            at: 30,
            distribution: DistributionSpec::of_kind(DistributionKind::Gamma),
        },
    ];
    plan.validate().unwrap();
    let mut late = Vec::new();
    for a in &u.result.artifacts {
        let trace = evaluate(Approach::AtMarl, a, &plan.scenario, &plan).expect("shift evaluation");
        for (k, name) in trace.services.iter().enumerate() {
            let series = trace.series(k).unwrap();
            for shift in &plan.shifts {
                let window = KpiSeries::new(
                    series.values()[shift.at..].to_vec(),
                    series.target(),
                    series.direction(),
                )
                .unwrap();
                match window.onset() {
                    Some(d) if d <= 8 => {}
                    other => late.push(format!("seed{} {name} after {}: {:?}", a.seed, shift.at, other)),
                }
            }
        }
    }
    let pass = late.is_empty();
    report(6, "shift recovery", pass, &format!("late re-entries {late:?}"));
    assert!(pass);
}

#[test]
fn criterion_07_finite_differences() {
    let mut dense: f64 = 0.0;
    for seed in 0..10 {
        for act in [Activation::Tanh, Activation::Identity] {
            dense = dense.max(common::dense_error(seed, act));
        }
    }
    dense = dense.max(common::dense_error(77, Activation::Relu));
    let gru1 = (0..10).map(|s| common::gru_error(100 + s, 1)).fold(0.0, f64::max);
    let gru5 = (0..10).map(|s| common::gru_error(200 + s, 5)).fold(0.0, f64::max);
    let (mut e2e_total, mut e2e_tensor): (f64, f64) = (0.0, 0.0);
    for seed in 0..4 {
        let (total, worst) = common::end_to_end_error(seed);
        e2e_total = e2e_total.max(total);
        e2e_tensor = e2e_tensor.max(worst);
    }
    let pass = dense < 1e-4 && gru1 < 1e-4 && gru5 < 1e-4 && e2e_total < 1e-3 && e2e_tensor < 1e-3;
    report(
        7,
        "finite-difference gradients",
        pass,
        &format!(
            "dense {dense:.1e}, gru step {gru1:.1e}, bptt-5 {gru5:.1e}, end-to-end {e2e_total:.1e} (worst tensor {e2e_tensor:.1e})"
        ),
    );
    assert!(pass);
}

/// Packet-level proportional-share scheduler.
///
/// The airlink is cut into `packets` equal slots. Each service queues as many
/// packets as its MBR-clipped demand fills. Slots are granted one at a time by
/// stride scheduling with random start passes: every backlogged service holds
/// tickets `priority × clipped demand` and the one with the smallest pass wins.
fn packet_oracle(offered: &[f64], priority: &[u8], mbr: &[f64], bandwidth: f64, packets: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let size = bandwidth / packets as f64;
    let demand: Vec<f64> = offered.iter().zip(mbr).map(|(o, m)| o.min(*m)).collect();
    let mut queue: Vec<usize> = demand.iter().map(|d| (d / size).round() as usize).collect();
    let stride: Vec<f64> = demand.iter().zip(priority).map(|(d, &p)| 1.0 / (f64::from(p) * d)).collect();
    let mut pass: Vec<f64> = stride.iter().map(|s| rng.gen::<f64>() * s).collect();
    let mut sent = vec![0usize; offered.len()];
    for _ in 0..packets {
        let next = (0..offered.len())
            .filter(|&i| queue[i] > 0)
            .min_by(|&a, &b| pass[a].total_cmp(&pass[b]));
        let Some(i) = next else { break };
        queue[i] -= 1;
        sent[i] += 1;
        pass[i] += stride[i];
    }
    sent.iter().map(|&n| n as f64 * size).collect()
}

#[test]
fn criterion_08_emulator_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let instances = 25;
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.gen_range(2..=5);
        let bandwidth = 10.0;
        let (offered, priority, mbr) = loop {
            let offered: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..8.0)).collect();
            let priority: Vec<u8> = (0..n).map(|_| rng.gen_range(1..=5)).collect();
            let mbr: Vec<f64> = (0..n).map(|_| MBR_LADDER[rng.gen_range(0..MBR_LADDER.len())]).collect();
            let clipped: f64 = offered.iter().zip(&mbr).map(|(o, m)| o.min(*m)).sum();
            if clipped > bandwidth * 1.1 {
                break (offered, priority, mbr);
            }
        };
        let fluid = allocate_capacity(&offered, &priority, &mbr, bandwidth);
        let packets = packet_oracle(&offered, &priority, &mbr, bandwidth, 10_000, &mut rng);
        for (f, p) in fluid.iter().zip(&packets) {
            worst = worst.max((f - p).abs() / p.max(f64::MIN_POSITIVE));
        }
    }

    // Conservation on every step of a long run across all distributions and random knobs.
    let mut conserved = true;
    for scenario in [ScenarioConfig::three_intent(), ScenarioConfig::five_intent()] {
        let mut state = init_scenario(&scenario).unwrap();
        for step in 0..3000 {
            if step % 50 == 0 {
                let kind = [DistributionKind::Uniform, DistributionKind::Gaussian, DistributionKind::Gamma][step / 50 % 3];
                state.set_distribution(DistributionSpec::of_kind(kind)).unwrap();
            }
            for i in 0..state.service_count() {
                state.controls.priority[i] = rng.gen_range(1..=5);
                state.controls.mbr_level[i] = rng.gen_range(0..MBR_LADDER.len());
            }
            let report = state.step(&mut rng);
            conserved &= state.check_conservation(&report).is_ok();
        }
    }
    // The pipeline runs check every step internally and abort on a violation.
    let runs_ok = !uniform().result.traces.is_empty();

    let pass = worst < 0.02 && conserved && runs_ok;
    report(
        8,
        "allocation oracle and conservation",
        pass,
        &format!("{instances} instances, worst relative served-rate error {:.3}%, conservation held {conserved}", worst * 100.0),
    );
    assert!(pass);
}

#[test]
fn criterion_09_metric_oracle() {
    let example = KpiSeries::new(vec![3.6, 4.2, 4.0], 4.0, Direction::Maximize).unwrap();
    let value = iae(&example);
    // |3.6-4|/4 = 0.1, |4.2-4|/4 = 0.05, |4.0-4|/4 = 0 averaged over three samples.
    let expected = (0.1 + 0.05 + 0.0) / 3.0;
    let exact = value.is_some_and(|v| (v - expected).abs() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mirrored = 0;
    for _ in 0..100 {
        let target = rng.gen_range(1.0..5.0);
        let len = rng.gen_range(1..60);
        let values: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..2.0 * target)).collect();
        let flipped: Vec<f64> = values.iter().map(|v| 2.0 * target - v).collect();
        let up = KpiSeries::new(values, target, Direction::Maximize).unwrap();
        let down = KpiSeries::new(flipped, target, Direction::Minimize).unwrap();
        let same = match (iae(&up), iae(&down)) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-12 * (1.0 + a),
            (None, None) => true,
            _ => false,
        };
        mirrored += usize::from(same && up.onset() == down.onset());
    }
    let pass = exact && mirrored == 100;
    report(
        9,
        "IAE oracle",
        pass,
        &format!("example {value:?} (expected {expected}), mirror holds on {mirrored}/100 series (band {DEFAULT_TOLERANCE})"),
    );
    assert!(pass);
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn criterion_10_determinism() {
    let root = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = root.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_atmarl"))
            .args(["full", "--seed", "1", "--seed", "2", "--episodes", "30", "--out"])
            .arg(&out)
            .output()
            .expect("spawn cli");
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        csv_files(&out)
    };
    let first = run("a");
    let second = run("b");
    let has_traces = first.keys().filter(|k| k.starts_with("trace_")).count() == 8 && first.contains_key("summary.csv");
    let identical = first == second;
    let pass = has_traces && identical;
    report(
        10,
        "determinism",
        pass,
        &format!("{} CSV files, byte-identical across runs: {identical}", first.len()),
    );
    assert!(pass);
}
