//! The supervisor network and its hand-written episode gradient.

use rand::Rng;

use crate::agents::{KnobAction, ACTIONS, OBS_FIELDS};
use crate::error::{Error, Result};
use crate::nn::{add_assign, argmax, log_prob, softmax, softmax_sample, Activation, DenseCache, DenseLayer, GruCache, GruCell};

/// Which goals the actor heads produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeadMode {
    /// One head per agent: agent-level goals.
    PerAgent,
    /// One head per intent, broadcast to both systems: service-level goals.
    PerIntent,
}

impl HeadMode {
    pub fn name(self) -> &'static str {
        match self {
            HeadMode::PerAgent => "per-agent",
            HeadMode::PerIntent => "per-intent",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "per-agent" => Some(HeadMode::PerAgent),
            "per-intent" => Some(HeadMode::PerIntent),
            _ => None,
        }
    }
}

/// Layer sizes and roster of a [`SupervisorPolicy`].
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyShape {
    pub intents: usize,
    pub goal_levels: usize,
    pub head_mode: HeadMode,
    pub encoder_hidden: usize,
    pub merger_hidden: usize,
    pub fusion_hidden: usize,
    pub actor_hidden: usize,
    pub critic_hidden: usize,
}

impl PolicyShape {
    pub fn new(intents: usize, goal_levels: usize, head_mode: HeadMode) -> Self {
        PolicyShape {
            intents,
            goal_levels,
            head_mode,
            encoder_hidden: 32,
            merger_hidden: 32,
            fusion_hidden: 64,
            actor_hidden: 64,
            critic_hidden: 64,
        }
    }

    pub fn agents(&self) -> usize {
        2 * self.intents
    }

    pub fn heads(&self) -> usize {
        match self.head_mode {
            HeadMode::PerAgent => self.agents(),
            HeadMode::PerIntent => self.intents,
        }
    }

    fn merger_input(&self) -> usize {
        self.encoder_hidden + OBS_FIELDS + ACTIONS + 1
    }

    fn fusion_input(&self) -> usize {
        self.agents() * self.merger_hidden + self.intents
    }
}

/// What the supervisor sees of one agent: its observation, last action and last goal.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentTuple {
    pub observation: [f64; OBS_FIELDS],
    pub action: KnobAction,
    pub goal: f64,
}

/// Everything the supervisor consumes at one timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct SupervisorInput {
    pub capabilities: Vec<Vec<f64>>,
    pub tuples: Vec<AgentTuple>,
    /// Global targets, normalised to each KPI's range.
    pub targets: Vec<f64>,
}

/// Hidden states of the stacked recurrent actor.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorState {
    pub layers: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct StepCache {
    encoders: Vec<[DenseCache; 2]>,
    mergers: Vec<DenseCache>,
    fusion: Vec<DenseCache>,
    actor: Vec<GruCache>,
    heads: Vec<DenseCache>,
    critic: Vec<DenseCache>,
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub context: Vec<f64>,
    pub logits: Vec<Vec<f64>>,
    pub value: f64,
    pub state: ActorState,
}

/// Recorded episode used for the gradient: inputs, chosen levels, returns and
/// the advantages, which are held constant.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub inputs: Vec<SupervisorInput>,
    pub actions: Vec<Vec<usize>>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub entropy: f64,
    pub value: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            entropy: 0.01,
            value: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupervisorPolicy {
    pub shape: PolicyShape,
    pub encoders: Vec<[DenseLayer; 2]>,
    pub mergers: Vec<DenseLayer>,
    pub fusion: Vec<DenseLayer>,
    pub actor: Vec<GruCell>,
    pub heads: Vec<DenseLayer>,
    pub critic: Vec<DenseLayer>,
}

const HEAD_INIT_SCALE: f64 = 0.1;

impl SupervisorPolicy {
    pub fn new<R: Rng + ?Sized>(shape: PolicyShape, rng: &mut R) -> Self {
        let s = &shape;
        let encoders = (0..s.agents())
            .map(|_| {
                [
                    DenseLayer::new(s.goal_levels, s.encoder_hidden, Activation::Tanh, rng),
                    DenseLayer::new(s.encoder_hidden, s.encoder_hidden, Activation::Tanh, rng),
                ]
            })
            .collect();
        let mergers = (0..s.agents())
            .map(|_| DenseLayer::new(s.merger_input(), s.merger_hidden, Activation::Tanh, rng))
            .collect();
        let fusion = vec![
            DenseLayer::new(s.fusion_input(), s.fusion_hidden, Activation::Tanh, rng),
            DenseLayer::new(s.fusion_hidden, s.fusion_hidden, Activation::Tanh, rng),
            DenseLayer::new(s.fusion_hidden, s.fusion_hidden, Activation::Tanh, rng),
        ];
        let actor = vec![
            GruCell::new(s.fusion_hidden, s.actor_hidden, rng),
            GruCell::new(s.actor_hidden, s.actor_hidden, rng),
        ];
        let heads = (0..s.heads())
            .map(|_| {
                let mut head = DenseLayer::new(s.actor_hidden, s.goal_levels, Activation::Identity, rng);
                head.weights.data.iter_mut().for_each(|w| *w *= HEAD_INIT_SCALE);
                head.bias.iter_mut().for_each(|b| *b = 0.0);
                head
            })
            .collect();
        let critic = vec![
            DenseLayer::new(s.fusion_hidden, s.critic_hidden, Activation::Tanh, rng),
            DenseLayer::new(s.critic_hidden, 1, Activation::Identity, rng),
        ];
        SupervisorPolicy {
            shape,
            encoders,
            mergers,
            fusion,
            actor,
            heads,
            critic,
        }
    }

    /// Same structure with every parameter zero.
    pub fn zeros(shape: PolicyShape) -> Self {
        let mut policy = Self::new(shape, &mut rand::rngs::mock::StepRng::new(0, 0));
        for t in policy.tensors_mut() {
            t.fill(0.0);
        }
        policy
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.shape.clone())
    }

    pub fn initial_state(&self) -> ActorState {
        ActorState {
            layers: vec![vec![0.0; self.shape.actor_hidden]; self.actor.len()],
        }
    }

    fn check_agent(&self, agent: usize) -> Result<()> {
        if agent >= self.shape.agents() {
            return Err(Error::UnknownAgent(format!("supervisor slot {agent}")));
        }
        Ok(())
    }

    fn encode_cached(&self, agent: usize, capability: &[f64]) -> Result<[DenseCache; 2]> {
        self.check_agent(agent)?;
        if capability.len() != self.shape.goal_levels {
            return Err(Error::shape("capability vector", self.shape.goal_levels, capability.len()));
        }
        let [l1, l2] = &self.encoders[agent];
        let a = l1.forward(capability)?;
        let b = l2.forward(&a.output)?;
        Ok([a, b])
    }

    /// Projects one agent's capability vector through that agent's encoder.
    pub fn encode_capability(&self, agent: usize, capability: &[f64]) -> Result<Vec<f64>> {
        let [_, b] = self.encode_cached(agent, capability)?;
        Ok(b.output)
    }

    fn merge_cached(&self, agent: usize, latent: &[f64], tuple: &AgentTuple) -> Result<DenseCache> {
        self.check_agent(agent)?;
        if latent.len() != self.shape.encoder_hidden {
            return Err(Error::shape("capability latent", self.shape.encoder_hidden, latent.len()));
        }
        let mut input = Vec::with_capacity(self.shape.merger_input());
        input.extend_from_slice(latent);
        input.extend_from_slice(&tuple.observation);
        input.extend_from_slice(&tuple.action.one_hot());
        input.push(tuple.goal);
        self.mergers[agent].forward(&input)
    }

    /// Combines a latent with the agent's (observation, action, goal) tuple.
    pub fn merge(&self, agent: usize, latent: &[f64], tuple: &AgentTuple) -> Result<Vec<f64>> {
        Ok(self.merge_cached(agent, latent, tuple)?.output)
    }

    fn fuse_cached(&self, embeddings: &[Vec<f64>], targets: &[f64]) -> Result<Vec<DenseCache>> {
        if embeddings.len() != self.shape.agents() {
            return Err(Error::shape("agent embeddings", self.shape.agents(), embeddings.len()));
        }
        if targets.len() != self.shape.intents {
            return Err(Error::shape("global targets", self.shape.intents, targets.len()));
        }
        let mut input: Vec<f64> = embeddings.concat();
        input.extend_from_slice(targets);
        let mut caches: Vec<DenseCache> = Vec::with_capacity(self.fusion.len());
        for layer in &self.fusion {
            let x = caches.last().map_or(&input, |c| &c.output);
            let cache = layer.forward(x)?;
            caches.push(cache);
        }
        Ok(caches)
    }

    /// Fixed-order fusion of all agent embeddings and the global targets.
    pub fn fuse(&self, embeddings: &[Vec<f64>], targets: &[f64]) -> Result<Vec<f64>> {
        Ok(self.fuse_cached(embeddings, targets)?.pop().expect("fusion has layers").output)
    }

    fn actor_cached(&self, context: &[f64], state: &ActorState) -> Result<(Vec<GruCache>, Vec<DenseCache>)> {
        if state.layers.len() != self.actor.len() {
            return Err(Error::shape("actor state layers", self.actor.len(), state.layers.len()));
        }
        let mut grus: Vec<GruCache> = Vec::with_capacity(self.actor.len());
        for (cell, h) in self.actor.iter().zip(&state.layers) {
            let x = grus.last().map_or(context, |c| &c.hidden);
            let cache = cell.forward(x, h)?;
            grus.push(cache);
        }
        let top = &grus.last().expect("actor has layers").hidden;
        let heads = self.heads.iter().map(|h| h.forward(top)).collect::<Result<Vec<_>>>()?;
        Ok((grus, heads))
    }

    /// Advances the actor on a fused context and picks one level per head.
    ///
    /// Sampling when `explore`, argmax otherwise. Returns levels, their
    /// log-probabilities and the next actor state.
    pub fn act<R: Rng + ?Sized>(
        &self,
        context: &[f64],
        state: &ActorState,
        rng: &mut R,
        explore: bool,
    ) -> Result<(Vec<usize>, Vec<f64>, ActorState)> {
        let (grus, heads) = self.actor_cached(context, state)?;
        let (levels, log_probs) = choose(&heads.iter().map(|h| h.output.clone()).collect::<Vec<_>>(), rng, explore)?;
        Ok((
            levels,
            log_probs,
            ActorState {
                layers: grus.into_iter().map(|c| c.hidden).collect(),
            },
        ))
    }

    /// Full forward pass for one timestep.
    pub fn forward_step(&self, input: &SupervisorInput, state: &ActorState) -> Result<(StepOutput, StepCache)> {
        let n = self.shape.agents();
        if input.capabilities.len() != n {
            return Err(Error::shape("capability vectors", n, input.capabilities.len()));
        }
        if input.tuples.len() != n {
            return Err(Error::shape("agent tuples", n, input.tuples.len()));
        }
        let mut encoders = Vec::with_capacity(n);
        let mut mergers = Vec::with_capacity(n);
        for agent in 0..n {
            let enc = self.encode_cached(agent, &input.capabilities[agent])?;
            let merged = self.merge_cached(agent, &enc[1].output, &input.tuples[agent])?;
            encoders.push(enc);
            mergers.push(merged);
        }
        let embeddings: Vec<Vec<f64>> = mergers.iter().map(|m| m.output.clone()).collect();
        let fusion = self.fuse_cached(&embeddings, &input.targets)?;
        let context = fusion.last().expect("fusion has layers").output.clone();
        let (actor, heads) = self.actor_cached(&context, state)?;
        let c1 = self.critic[0].forward(&context)?;
        let c2 = self.critic[1].forward(&c1.output)?;
        let value = c2.output[0];
        if !value.is_finite() {
            return Err(Error::Numeric("critic produced a non-finite value".into()));
        }
        let output = StepOutput {
            context,
            logits: heads.iter().map(|h| h.output.clone()).collect(),
            value,
            state: ActorState {
                layers: actor.iter().map(|c| c.hidden.clone()).collect(),
            },
        };
        Ok((
            output,
            StepCache {
                encoders,
                mergers,
                fusion,
                actor,
                heads,
                critic: vec![c1, c2],
            },
        ))
    }

    /// Mean per-step actor-critic loss of a recorded episode.
    pub fn episode_loss(&self, record: &EpisodeRecord, weights: LossWeights) -> Result<f64> {
        Ok(self.episode_gradient_inner(record, weights, false)?.0)
    }

    /// Loss and its gradient with respect to every parameter, by backpropagation through time.
    pub fn episode_gradient(&self, record: &EpisodeRecord, weights: LossWeights) -> Result<(f64, SupervisorPolicy)> {
        let (loss, grads) = self.episode_gradient_inner(record, weights, true)?;
        Ok((loss, grads.expect("gradients requested")))
    }

    fn episode_gradient_inner(
        &self,
        record: &EpisodeRecord,
        weights: LossWeights,
        want_grads: bool,
    ) -> Result<(f64, Option<SupervisorPolicy>)> {
        let steps = record.inputs.len();
        if steps == 0 {
            return Err(Error::shape("episode", "at least one step", 0));
        }
        for (what, len) in [
            ("episode actions", record.actions.len()),
            ("episode returns", record.returns.len()),
            ("episode advantages", record.advantages.len()),
        ] {
            if len != steps {
                return Err(Error::shape(what, steps, len));
            }
        }
        let scale = 1.0 / steps as f64;
        let mut state = self.initial_state();
        let mut caches = Vec::with_capacity(steps);
        let mut d_logits: Vec<Vec<Vec<f64>>> = Vec::with_capacity(steps);
        let mut d_values = Vec::with_capacity(steps);
        let mut loss = 0.0;

        for t in 0..steps {
            let (out, cache) = self.forward_step(&record.inputs[t], &state)?;
            if record.actions[t].len() != out.logits.len() {
                return Err(Error::shape("chosen levels", out.logits.len(), record.actions[t].len()));
            }
            let adv = record.advantages[t];
            let mut step_grads = Vec::with_capacity(out.logits.len());
            for (logits, &a) in out.logits.iter().zip(&record.actions[t]) {
                let probs = softmax(logits)?;
                let log_p: Vec<f64> = (0..logits.len()).map(|j| log_prob(logits, j)).collect();
                let entropy: f64 = -probs.iter().zip(&log_p).map(|(p, lp)| p * lp).sum::<f64>();
                loss += scale * (-adv * log_p[a] - weights.entropy * entropy);
                let g: Vec<f64> = (0..logits.len())
                    .map(|j| {
                        let onehot = if j == a { 1.0 } else { 0.0 };
                        scale * (adv * (probs[j] - onehot) + weights.entropy * probs[j] * (log_p[j] + entropy))
                    })
                    .collect();
                step_grads.push(g);
            }
            let err = out.value - record.returns[t];
            loss += scale * weights.value * err * err;
            d_values.push(scale * 2.0 * weights.value * err);
            d_logits.push(step_grads);
            caches.push(cache);
            state = out.state;
        }
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("episode loss is {loss}")));
        }
        if !want_grads {
            return Ok((loss, None));
        }

        let mut grads = self.zeros_like();
        let top = self.actor.len() - 1;
        let mut d_hidden: Vec<Vec<f64>> = (0..steps)
            .map(|t| {
                let mut dh = vec![0.0; self.shape.actor_hidden];
                for (k, head) in self.heads.iter().enumerate() {
                    let dx = head.backward_into(&caches[t].heads[k], &d_logits[t][k], &mut grads.heads[k]);
                    add_assign(&mut dh, &dx);
                }
                dh
            })
            .collect();
        for layer in (0..=top).rev() {
            let layer_caches: Vec<GruCache> = caches.iter().map(|c| c.actor[layer].clone()).collect();
            let (g, dxs, _) = self.actor[layer].backward_sequence(&layer_caches, &d_hidden)?;
            grads.actor[layer] = g;
            d_hidden = dxs;
        }

        let merger_width = self.shape.merger_hidden;
        let encoder_width = self.shape.encoder_hidden;
        for (t, cache) in caches.iter().enumerate() {
            let mut d_context = d_hidden[t].clone();
            let dc1 = self.critic[1].backward_into(&cache.critic[1], &[d_values[t]], &mut grads.critic[1]);
            let dctx = self.critic[0].backward_into(&cache.critic[0], &dc1, &mut grads.critic[0]);
            add_assign(&mut d_context, &dctx);

            let mut d = d_context;
            for (k, layer) in self.fusion.iter().enumerate().rev() {
                d = layer.backward_into(&cache.fusion[k], &d, &mut grads.fusion[k]);
            }
            for agent in 0..self.shape.agents() {
                let dm = &d[agent * merger_width..(agent + 1) * merger_width];
                let d_merge_in = self.mergers[agent].backward_into(&cache.mergers[agent], dm, &mut grads.mergers[agent]);
                let [g1, g2] = &mut grads.encoders[agent];
                let [e1, e2] = &self.encoders[agent];
                let d_latent = e2.backward_into(&cache.encoders[agent][1], &d_merge_in[..encoder_width], g2);
                e1.backward_into(&cache.encoders[agent][0], &d_latent, g1);
            }
        }
        Ok((loss, Some(grads)))
    }

    /// Every parameter tensor with a stable name and shape, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        fn push_dense<'a>(out: &mut Vec<(String, Vec<usize>, &'a [f64])>, name: String, l: &'a DenseLayer) {
            out.push((format!("{name}.weight"), vec![l.weights.rows, l.weights.cols], &l.weights.data[..]));
            out.push((format!("{name}.bias"), vec![l.bias.len()], &l.bias[..]));
        }
        for (i, [a, b]) in self.encoders.iter().enumerate() {
            push_dense(&mut out, format!("encoder.{i}.0"), a);
            push_dense(&mut out, format!("encoder.{i}.1"), b);
        }
        for (i, m) in self.mergers.iter().enumerate() {
            push_dense(&mut out, format!("merger.{i}"), m);
        }
        for (i, f) in self.fusion.iter().enumerate() {
            push_dense(&mut out, format!("fusion.{i}"), f);
        }
        for (i, g) in self.actor.iter().enumerate() {
            let names = ["w_update", "w_reset", "w_candidate", "b_update", "b_reset", "b_candidate"];
            let rows = g.hidden_size;
            let cols = g.input_size + g.hidden_size;
            for (name, tensor) in names.iter().zip(g.tensors()) {
                let shape = if name.starts_with('w') { vec![rows, cols] } else { vec![rows] };
                out.push((format!("actor.{i}.{name}"), shape, tensor));
            }
        }
        for (i, h) in self.heads.iter().enumerate() {
            push_dense(&mut out, format!("head.{i}"), h);
        }
        for (i, c) in self.critic.iter().enumerate() {
            push_dense(&mut out, format!("critic.{i}"), c);
        }
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.named_tensors().into_iter().map(|(_, _, t)| t).collect()
    }

    /// Mutable tensors in the same order as [`SupervisorPolicy::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for [a, b] in &mut self.encoders {
            out.extend(a.tensors_mut());
            out.extend(b.tensors_mut());
        }
        for m in &mut self.mergers {
            out.extend(m.tensors_mut());
        }
        for f in &mut self.fusion {
            out.extend(f.tensors_mut());
        }
        for g in &mut self.actor {
            out.extend(g.tensors_mut());
        }
        for h in &mut self.heads {
            out.extend(h.tensors_mut());
        }
        for c in &mut self.critic {
            out.extend(c.tensors_mut());
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Samples (or argmaxes) one level per head.
pub fn choose<R: Rng + ?Sized>(logits: &[Vec<f64>], rng: &mut R, explore: bool) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut levels = Vec::with_capacity(logits.len());
    let mut log_probs = Vec::with_capacity(logits.len());
    for l in logits {
        let (idx, lp) = if explore {
            softmax_sample(l, rng)?
        } else {
            softmax(l)?;
            let idx = argmax(l);
            (idx, log_prob(l, idx))
        };
        levels.push(idx);
        log_probs.push(lp);
    }
    Ok((levels, log_probs))
}
