//! Finite-difference gradient checks shared by the test targets.
#![allow(dead_code)]

use atmarl::agents::{CapabilityVector, MarlSystem, QTable, SystemKind, DEFAULT_GOAL_LEVELS};
use atmarl::config::ScenarioConfig;
use atmarl::emulator::ServiceKind;
use atmarl::nn::{Activation, DenseLayer, GruCell};
use atmarl::supervisor::{
    discounted_returns, rollout, EpisodeRecord, HeadMode, LossWeights, PolicyShape, SupervisorPolicy, Team, TeamEnv,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;

/// ‖a − b‖ / (‖a‖ + ‖b‖), zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        0.0
    } else {
        diff / norm
    }
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Central-difference gradient of `loss` w.r.t. every entry of `params`, perturbing in place.
pub fn numeric_grad(params: &mut [f64], mut loss: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..params.len())
        .map(|i| {
            let orig = params[i];
            params[i] = orig + H;
            let plus = loss(params);
            params[i] = orig - H;
            let minus = loss(params);
            params[i] = orig;
            (plus - minus) / (2.0 * H)
        })
        .collect()
}

fn dense_loss(layer: &DenseLayer, x: &[f64], c: &[f64]) -> f64 {
    let out = layer.forward(x).unwrap().output;
    out.iter().zip(c).map(|(o, c)| o * c).sum()
}

/// Worst relative error over weights, bias and input of one dense layer.
pub fn dense_error(seed: u64, act: Activation) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer = DenseLayer::new(3, 4, act, &mut rng);
    let x = random_vec(&mut rng, 3);
    let c = random_vec(&mut rng, 4);
    let cache = layer.forward(&x).unwrap();
    if act == Activation::Relu {
        assert!(cache.pre.iter().all(|p| p.abs() > 1e-3), "seed {seed} lands on a relu kink");
    }
    let (grads, dx) = layer.backward(&cache, &c).unwrap();

    let mut probe = layer.clone();
    let w_num = numeric_grad(&mut probe.weights.data.clone(), |w| {
        probe.weights.data.copy_from_slice(w);
        dense_loss(&probe, &x, &c)
    });
    let mut probe = layer.clone();
    let b_num = numeric_grad(&mut probe.bias.clone(), |b| {
        probe.bias.copy_from_slice(b);
        dense_loss(&probe, &x, &c)
    });
    let x_num = numeric_grad(&mut x.clone(), |xv| dense_loss(&layer, xv, &c));
    [
        relative_error(&grads.weights.data, &w_num),
        relative_error(&grads.bias, &b_num),
        relative_error(&dx, &x_num),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn gru_loss(cell: &GruCell, xs: &[Vec<f64>], h0: &[f64], cs: &[Vec<f64>]) -> f64 {
    let mut h = h0.to_vec();
    let mut loss = 0.0;
    for (x, c) in xs.iter().zip(cs) {
        h = cell.forward(x, &h).unwrap().hidden;
        loss += h.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
    }
    loss
}

/// Worst relative error over every GRU tensor, the initial state and the inputs
/// of a `len`-step unrolled sequence.
pub fn gru_error(seed: u64, len: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_in, n_h) = (3, 4);
    let cell = GruCell::new(n_in, n_h, &mut rng);
    let xs: Vec<Vec<f64>> = (0..len).map(|_| random_vec(&mut rng, n_in)).collect();
    let cs: Vec<Vec<f64>> = (0..len).map(|_| random_vec(&mut rng, n_h)).collect();
    let h0 = random_vec(&mut rng, n_h);

    let mut caches = Vec::new();
    let mut h = h0.clone();
    for x in &xs {
        let cache = cell.forward(x, &h).unwrap();
        h = cache.hidden.clone();
        caches.push(cache);
    }
    let (grads, dxs, dh0) = cell.backward_sequence(&caches, &cs).unwrap();

    let mut worst: f64 = 0.0;
    let analytic: Vec<&[f64]> = grads.tensors();
    for (k, a) in analytic.iter().enumerate() {
        let mut probe = cell.clone();
        let mut buf = probe.tensors()[k].to_vec();
        let numeric = numeric_grad(&mut buf, |p| {
            probe.tensors_mut()[k].copy_from_slice(p);
            gru_loss(&probe, &xs, &h0, &cs)
        });
        worst = worst.max(relative_error(a, &numeric));
    }
    let dh0_num = numeric_grad(&mut h0.clone(), |h| gru_loss(&cell, &xs, h, &cs));
    worst = worst.max(relative_error(&dh0, &dh0_num));
    let mut xs_probe = xs.clone();
    let mut flat: Vec<f64> = xs.concat();
    let dx_num = numeric_grad(&mut flat, |f| {
        for (t, x) in xs_probe.iter_mut().enumerate() {
            x.copy_from_slice(&f[t * n_in..(t + 1) * n_in]);
        }
        gru_loss(&cell, &xs_probe, &h0, &cs)
    });
    worst.max(relative_error(&dxs.concat(), &dx_num))
}

pub fn untrained(kind: SystemKind, intents: usize) -> MarlSystem {
    MarlSystem {
        kind,
        agents: vec![QTable::new(0.1, 0.9, 0.05); intents],
    }
}

pub fn small_shape(intents: usize, mode: HeadMode) -> PolicyShape {
    PolicyShape {
        encoder_hidden: 5,
        merger_hidden: 4,
        fusion_hidden: 6,
        actor_hidden: 5,
        critic_hidden: 4,
        ..PolicyShape::new(intents, DEFAULT_GOAL_LEVELS, mode)
    }
}

pub fn one_service_scenario() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::three_intent();
    cfg.services.truncate(1);
    cfg.services[0].spec.demand_per_ue = 0.3;
    assert_eq!(cfg.services[0].spec.kind, ServiceKind::Cv);
    cfg
}

pub fn random_caps(rng: &mut ChaCha8Rng, n: usize) -> Vec<CapabilityVector> {
    (0..n)
        .map(|_| {
            let mut c = CapabilityVector::uniform_prior(DEFAULT_GOAL_LEVELS);
            c.probabilities.iter_mut().for_each(|p| *p = rng.gen());
            c
        })
        .collect()
}

/// Records a real length-3 episode of the two-agent toy slice with random advantages.
pub fn toy_record(seed: u64, policy: &SupervisorPolicy) -> EpisodeRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenario = one_service_scenario();
    let (p, m) = (untrained(SystemKind::Priority, 1), untrained(SystemKind::Mbr, 1));
    let team = Team::new(&p, &m).unwrap();
    let mut caps = random_caps(&mut rng, 2);
    let mut env = TeamEnv::new(team, &scenario, scenario.initial_controls(), DEFAULT_GOAL_LEVELS, &mut rng).unwrap();
    let run = rollout(policy, &mut caps, &mut env, 3, true, true, &mut rng).unwrap();
    let mut record = run.record;
    record.returns = discounted_returns(&run.rewards, 0.95);
    record.advantages = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    record
}

/// Actor-critic loss gradient on a toy episode against finite differences.
///
/// Returns the relative error over all parameters together and the worst
/// error of any tensor whose gradient is not negligibly small.
pub fn end_to_end_error(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let mut policy = SupervisorPolicy::new(small_shape(1, HeadMode::PerAgent), &mut rng);
    // Larger head weights so the actor term is not drowned by the critic term.
    for head in &mut policy.heads {
        head.weights.data.iter_mut().for_each(|w| *w *= 10.0);
    }
    let record = toy_record(seed, &policy);
    let weights = LossWeights::default();
    let (_, grads) = policy.episode_gradient(&record, weights).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();

    let (mut all_a, mut all_n) = (Vec::new(), Vec::new());
    let mut worst: f64 = 0.0;
    for (k, a) in analytic.iter().enumerate() {
        let mut numeric = Vec::with_capacity(a.len());
        for i in 0..a.len() {
            let orig = policy.tensors()[k][i];
            policy.tensors_mut()[k][i] = orig + H;
            let plus = policy.episode_loss(&record, weights).unwrap();
            policy.tensors_mut()[k][i] = orig - H;
            let minus = policy.episode_loss(&record, weights).unwrap();
            policy.tensors_mut()[k][i] = orig;
            numeric.push((plus - minus) / (2.0 * H));
        }
        if a.iter().map(|x| x.abs()).fold(0.0, f64::max) >= 1e-9 {
            worst = worst.max(relative_error(a, &numeric));
        }
        all_a.extend_from_slice(a);
        all_n.extend(numeric);
    }
    (relative_error(&all_a, &all_n), worst)
}
