use std::sync::OnceLock;

use atmarl::config::ScenarioConfig;
use atmarl::emulator::{DistributionKind, DistributionSpec};
use atmarl::harness::{
    emit_report, evaluate, evaluate_plan, run_pipeline, summarize, Approach, BlockSet, EpisodeTrace, ExperimentPlan,
    PipelineResult, SeedArtifacts, Shift, NOT_REACHED, SUMMARY_HEADER,
};
use atmarl::Error;

fn small_plan() -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(
        ScenarioConfig::three_intent(),
        vec![Approach::AtMarl, Approach::GoalHalving, Approach::RuleBased, Approach::NaiveParallel],
    );
    plan.seeds = vec![1, 2];
    plan.pretrain.episodes = 300;
    plan.pretrain.min_mean_reward = f64::NEG_INFINITY;
    plan.train.episodes = 4;
    plan.train.episode_len = 20;
    plan.episode_len = 40;
    plan.oscillation_from = 20;
    plan
}

fn pipeline() -> &'static (ExperimentPlan, PipelineResult) {
    static CELL: OnceLock<(ExperimentPlan, PipelineResult)> = OnceLock::new();
    CELL.get_or_init(|| {
        let plan = small_plan();
        let result = run_pipeline(&plan).expect("pipeline");
        (plan, result)
    })
}

#[test]
fn checkpoint_round_trip_reproduces_traces() {
    let (plan, result) = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let reloaded: Vec<SeedArtifacts> = result
        .artifacts
        .iter()
        .map(|a| {
            let path = dir.path().join(format!("seed{}.ckpt", a.seed));
            a.save(&path).unwrap();
            SeedArtifacts::load(&path).unwrap()
        })
        .collect();
    assert_eq!(reloaded, result.artifacts);
    let (traces, summary) = evaluate_plan(plan, &reloaded).unwrap();
    assert_eq!(traces, result.traces);
    assert_eq!(summary, result.summary);
}

#[test]
fn missing_block_is_named_in_the_error() {
    let (_, result) = pipeline();
    let full = result.artifacts[0].to_blocks();
    let victim = "qtable.mbr.1";
    let mut pruned = BlockSet::new();
    for name in full.names() {
        if name != victim {
            let b = full.get(name).unwrap();
            pruned.insert(name.clone(), b.shape.clone(), b.values.clone());
        }
    }
    match SeedArtifacts::from_blocks(&pruned) {
        Err(Error::Shape { what, .. }) => assert!(what.contains(victim), "{what}"),
        other => panic!("expected a shape error, got {other:?}"),
    }
}

#[test]
fn pipeline_is_deterministic() {
    let (plan, result) = pipeline();
    let again = run_pipeline(plan).unwrap();
    assert_eq!(again.traces, result.traces);
    assert_eq!(again.artifacts, result.artifacts);
}

#[test]
fn evaluation_leaves_artifacts_untouched() {
    let (plan, result) = pipeline();
    let before = result.artifacts[0].clone();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("seed.ckpt");
    before.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    for &approach in &plan.approaches {
        evaluate(approach, &before, &plan.scenario, plan).unwrap();
    }
    before.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    assert_eq!(before, result.artifacts[0]);
}

#[test]
fn shifts_change_the_recorded_distribution() {
    let (plan, result) = pipeline();
    let mut shifted = plan.clone();
    shifted.approaches = vec![Approach::AtMarl];
    shifted.shifts = vec![
        Shift {
            at: 20,
            distribution: DistributionSpec::of_kind(DistributionKind::Gaussian),
        },
        Shift {
            at: 30,
            distribution: DistributionSpec::of_kind(DistributionKind::Gamma),
        },
    ];
    let trace = evaluate(Approach::AtMarl, &result.artifacts[0], &shifted.scenario, &shifted).unwrap();
    assert_eq!(trace.rows.len(), 40);
    for row in &trace.rows {
        let expected = match row.t {
            t if t < 20 => DistributionKind::Uniform,
            t if t < 30 => DistributionKind::Gaussian,
            _ => DistributionKind::Gamma,
        };
        assert_eq!(row.distribution, expected, "step {}", row.t);
    }
}

#[test]
fn bad_shift_is_rejected() {
    let mut plan = small_plan();
    plan.shifts = vec![Shift {
        at: 40,
        distribution: DistributionSpec::uniform(),
    }];
    assert!(matches!(plan.validate(), Err(Error::Plan(_))));
}

#[test]
fn summary_has_one_sorted_row_per_approach_and_kpi() {
    let (plan, result) = pipeline();
    assert_eq!(result.summary.len(), plan.approaches.len() * 3);
    let keys: Vec<_> = result.summary.iter().map(|r| (r.kpi.clone(), r.approach.name())).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert!(result.summary.iter().all(|r| r.seeds == plan.seeds.len()));
}

#[test]
fn traces_have_the_expected_layout() {
    let (plan, result) = pipeline();
    assert_eq!(result.traces.len(), plan.approaches.len() * plan.seeds.len());
    for trace in &result.traces {
        assert_eq!(trace.rows.len(), plan.episode_len);
        assert_eq!(trace.agents.len(), 6);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 1 + 3 + 12 + 4);
        assert_eq!(text.lines().count(), plan.episode_len + 1);
    }
}

#[test]
fn trace_csv_round_trips() {
    let (_, result) = pipeline();
    for trace in &result.traces {
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let back =
            EpisodeTrace::read_csv(buf.as_slice(), trace.approach, trace.seed, trace.kinds.clone(), trace.targets.clone())
                .unwrap();
        assert_eq!(&back, trace);
    }
}

#[test]
fn truncated_trace_csv_is_rejected() {
    let (_, result) = pipeline();
    let trace = &result.traces[0];
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let broken: String = text.lines().map(|l| format!("{}\n", l.rsplit_once(',').unwrap().0)).collect();
    let err = EpisodeTrace::read_csv(broken.as_bytes(), trace.approach, trace.seed, trace.kinds.clone(), trace.targets.clone());
    assert!(err.is_err());
}

#[test]
fn report_files_are_written() {
    let (plan, result) = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let written = emit_report(dir.path(), &result.traces, &result.summary).unwrap();
    assert!(written.len() >= result.traces.len() + 2);
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), SUMMARY_HEADER.join(","));
    assert_eq!(summary.lines().count(), plan.approaches.len() * 3 + 1);
    let resummarized = summarize(&result.traces, plan.oscillation_from).unwrap();
    assert_eq!(resummarized, result.summary);
    for row in &result.summary {
        if row.iae_mean.is_none() {
            assert!(summary.contains(NOT_REACHED));
        }
    }
}
