//! Small dense/GRU building blocks with hand-written gradients.
//!
//! Parameter containers double as gradient accumulators: `zeros_like()` gives
//! a structure of the same shape, and `tensors()`/`tensors_mut()` expose the
//! flat buffers in a fixed order for the optimizer and for checkpoints.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (cols as f64).sqrt();
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect(),
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `selfᵀ · y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
        out
    }

    /// `self += y xᵀ`
    pub fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, xc) in row.iter_mut().zip(x) {
                *w += yr * xc;
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation and output.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Values kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct DenseCache {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
    pub output: Vec<f64>,
}

impl DenseLayer {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let weights = Matrix::init(output, input, rng);
        let bound = 1.0 / (input as f64).sqrt();
        DenseLayer {
            weights,
            bias: (0..output).map(|_| rng.gen_range(-bound..=bound)).collect(),
            activation,
        }
    }

    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        DenseLayer {
            weights: Matrix::zeros(output, input),
            bias: vec![0.0; output],
            activation,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size(), self.output_size(), self.activation)
    }

    pub fn input_size(&self) -> usize {
        self.weights.cols
    }

    pub fn output_size(&self) -> usize {
        self.weights.rows
    }

    pub fn forward(&self, input: &[f64]) -> Result<DenseCache> {
        if input.len() != self.input_size() {
            return Err(Error::shape("dense input", self.input_size(), input.len()));
        }
        let pre: Vec<f64> = self
            .weights
            .matvec(input)
            .into_iter()
            .zip(&self.bias)
            .map(|(a, b)| a + b)
            .collect();
        let output = pre.iter().map(|&p| self.activation.apply(p)).collect();
        Ok(DenseCache {
            input: input.to_vec(),
            pre,
            output,
        })
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward_into(&self, cache: &DenseCache, upstream: &[f64], grads: &mut DenseLayer) -> Vec<f64> {
        debug_assert_eq!(upstream.len(), self.output_size());
        let delta: Vec<f64> = upstream
            .iter()
            .zip(cache.pre.iter().zip(&cache.output))
            .map(|(g, (&p, &o))| g * self.activation.derivative(p, o))
            .collect();
        grads.weights.add_outer(&delta, &cache.input);
        for (b, d) in grads.bias.iter_mut().zip(&delta) {
            *b += d;
        }
        self.weights.matvec_t(&delta)
    }

    pub fn backward(&self, cache: &DenseCache, upstream: &[f64]) -> Result<(DenseLayer, Vec<f64>)> {
        if upstream.len() != self.output_size() {
            return Err(Error::shape("dense upstream gradient", self.output_size(), upstream.len()));
        }
        let mut grads = self.zeros_like();
        let input_grad = self.backward_into(cache, upstream, &mut grads);
        Ok((grads, input_grad))
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.weights.data, &self.bias]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weights.data, &mut self.bias]
    }
}

/// Gated recurrent unit with the reset gate applied before the candidate matmul.
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_update: Matrix,
    pub w_reset: Matrix,
    pub w_candidate: Matrix,
    pub b_update: Vec<f64>,
    pub b_reset: Vec<f64>,
    pub b_candidate: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct GruCache {
    pub input: Vec<f64>,
    pub hidden_prev: Vec<f64>,
    pub update: Vec<f64>,
    pub reset: Vec<f64>,
    pub candidate: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let cols = input_size + hidden_size;
        let bound = 1.0 / (cols as f64).sqrt();
        let mut bias = |n: usize| (0..n).map(|_| rng.gen_range(-bound..=bound)).collect::<Vec<_>>();
        let (b_update, b_reset, b_candidate) = (bias(hidden_size), bias(hidden_size), bias(hidden_size));
        GruCell {
            input_size,
            hidden_size,
            w_update: Matrix::init(hidden_size, cols, rng),
            w_reset: Matrix::init(hidden_size, cols, rng),
            w_candidate: Matrix::init(hidden_size, cols, rng),
            b_update,
            b_reset,
            b_candidate,
        }
    }

    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let cols = input_size + hidden_size;
        GruCell {
            input_size,
            hidden_size,
            w_update: Matrix::zeros(hidden_size, cols),
            w_reset: Matrix::zeros(hidden_size, cols),
            w_candidate: Matrix::zeros(hidden_size, cols),
            b_update: vec![0.0; hidden_size],
            b_reset: vec![0.0; hidden_size],
            b_candidate: vec![0.0; hidden_size],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size, self.hidden_size)
    }

    pub fn forward(&self, input: &[f64], hidden: &[f64]) -> Result<GruCache> {
        if input.len() != self.input_size {
            return Err(Error::shape("gru input", self.input_size, input.len()));
        }
        if hidden.len() != self.hidden_size {
            return Err(Error::shape("gru hidden", self.hidden_size, hidden.len()));
        }
        let xh: Vec<f64> = input.iter().chain(hidden).copied().collect();
        let gate = |w: &Matrix, b: &[f64]| -> Vec<f64> {
            w.matvec(&xh).into_iter().zip(b).map(|(a, b)| sigmoid(a + b)).collect()
        };
        let update = gate(&self.w_update, &self.b_update);
        let reset = gate(&self.w_reset, &self.b_reset);
        let xrh: Vec<f64> = input
            .iter()
            .copied()
            .chain(reset.iter().zip(hidden).map(|(r, h)| r * h))
            .collect();
        let candidate: Vec<f64> = self
            .w_candidate
            .matvec(&xrh)
            .into_iter()
            .zip(&self.b_candidate)
            .map(|(a, b)| (a + b).tanh())
            .collect();
        let next: Vec<f64> = (0..self.hidden_size)
            .map(|i| (1.0 - update[i]) * hidden[i] + update[i] * candidate[i])
            .collect();
        Ok(GruCache {
            input: input.to_vec(),
            hidden_prev: hidden.to_vec(),
            update,
            reset,
            candidate,
            hidden: next,
        })
    }

    /// One step of backpropagation. `dh` is the total gradient w.r.t. this
    /// step's output hidden state. Returns `(d_input, d_hidden_prev)`.
    pub fn backward_step(&self, cache: &GruCache, dh: &[f64], grads: &mut GruCell) -> (Vec<f64>, Vec<f64>) {
        let n_in = self.input_size;
        let n_h = self.hidden_size;
        let h = &cache.hidden_prev;
        let (z, r, c) = (&cache.update, &cache.reset, &cache.candidate);

        let mut dh_prev: Vec<f64> = (0..n_h).map(|i| dh[i] * (1.0 - z[i])).collect();
        let d_cand_pre: Vec<f64> = (0..n_h).map(|i| dh[i] * z[i] * (1.0 - c[i] * c[i])).collect();
        let d_update_pre: Vec<f64> = (0..n_h)
            .map(|i| dh[i] * (c[i] - h[i]) * z[i] * (1.0 - z[i]))
            .collect();

        let xrh: Vec<f64> = cache
            .input
            .iter()
            .copied()
            .chain(r.iter().zip(h).map(|(r, h)| r * h))
            .collect();
        grads.w_candidate.add_outer(&d_cand_pre, &xrh);
        add_assign(&mut grads.b_candidate, &d_cand_pre);
        let d_xrh = self.w_candidate.matvec_t(&d_cand_pre);
        let mut d_input: Vec<f64> = d_xrh[..n_in].to_vec();
        let d_rh = &d_xrh[n_in..];

        let d_reset_pre: Vec<f64> = (0..n_h).map(|i| d_rh[i] * h[i] * r[i] * (1.0 - r[i])).collect();
        for i in 0..n_h {
            dh_prev[i] += d_rh[i] * r[i];
        }

        let xh: Vec<f64> = cache.input.iter().chain(h).copied().collect();
        grads.w_update.add_outer(&d_update_pre, &xh);
        add_assign(&mut grads.b_update, &d_update_pre);
        grads.w_reset.add_outer(&d_reset_pre, &xh);
        add_assign(&mut grads.b_reset, &d_reset_pre);

        for d in [self.w_update.matvec_t(&d_update_pre), self.w_reset.matvec_t(&d_reset_pre)] {
            add_assign(&mut d_input, &d[..n_in]);
            add_assign(&mut dh_prev, &d[n_in..]);
        }
        (d_input, dh_prev)
    }

    /// Backpropagation through time over a cached sequence.
    ///
    /// `dh_outputs[t]` is the direct loss gradient on hidden state `t`.
    /// Returns parameter gradients, per-step input gradients and the gradient
    /// on the initial hidden state.
    pub fn backward_sequence(
        &self,
        caches: &[GruCache],
        dh_outputs: &[Vec<f64>],
    ) -> Result<(GruCell, Vec<Vec<f64>>, Vec<f64>)> {
        if caches.is_empty() {
            return Err(Error::shape("gru sequence", "length >= 1", 0));
        }
        if caches.len() != dh_outputs.len() {
            return Err(Error::shape("gru output gradients", caches.len(), dh_outputs.len()));
        }
        let mut grads = self.zeros_like();
        let mut d_inputs = vec![Vec::new(); caches.len()];
        let mut carry = vec![0.0; self.hidden_size];
        for t in (0..caches.len()).rev() {
            let mut dh = dh_outputs[t].clone();
            add_assign(&mut dh, &carry);
            let (dx, dh_prev) = self.backward_step(&caches[t], &dh, &mut grads);
            d_inputs[t] = dx;
            carry = dh_prev;
        }
        Ok((grads, d_inputs, carry))
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![
            &self.w_update.data,
            &self.w_reset.data,
            &self.w_candidate.data,
            &self.b_update,
            &self.b_reset,
            &self.b_candidate,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.w_update.data,
            &mut self.w_reset.data,
            &mut self.w_candidate.data,
            &mut self.b_update,
            &mut self.b_reset,
            &mut self.b_candidate,
        ]
    }
}

pub fn add_assign(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::shape("softmax logits", "at least 1", 0));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric(format!("non-finite logits {logits:?}")));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Numerically stable `log softmax(logits)[index]`.
pub fn log_prob(logits: &[f64], index: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits[index] - lse
}

/// Draws a categorical sample; returns the index and its log-probability.
pub fn softmax_sample<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> Result<(usize, f64)> {
    let probs = softmax(logits)?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut index = probs.len() - 1;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            index = i;
            break;
        }
    }
    Ok((index, log_prob(logits, index)))
}

/// Greedy choice; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        OptimizerState {
            config,
            step: 0,
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One Adam update over matching parameter and gradient tensor lists.
    pub fn adam_step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::shape("adam tensors", self.first_moment.len(), params.len()));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::shape("adam tensor", p.len(), g.len()));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric("non-finite gradient".into()));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = DenseLayer {
            weights: Matrix::identity(3),
            bias: vec![0.0; 3],
            activation: Activation::Identity,
        };
        let out = layer.forward(&[0.5, -2.0, 3.0]).unwrap();
        assert_eq!(out.output, vec![0.5, -2.0, 3.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = DenseLayer::new(3, 4, Activation::Tanh, &mut rng);
        let cache = layer.forward(&[0.1, 0.2, 0.3]).unwrap();
        let (g, dx) = layer.backward(&cache, &[0.0; 4]).unwrap();
        assert!(g.weights.data.iter().chain(&g.bias).all(|v| *v == 0.0));
        assert!(dx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dense_shape_mismatch() {
        let layer = DenseLayer::zeros(3, 2, Activation::Relu);
        assert!(matches!(layer.forward(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn zero_gru_halves_hidden() {
        // z = σ(0) = 0.5, candidate = tanh(0) = 0, so h' = 0.5 h.
        let cell = GruCell::zeros(2, 3);
        let out = cell.forward(&[1.0, -1.0], &[0.4, -0.2, 0.8]).unwrap();
        for (a, b) in out.hidden.iter().zip([0.2, -0.1, 0.4]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn gru_hidden_stays_in_open_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cell = GruCell::new(3, 5, &mut rng);
        let mut h = vec![0.0; 5];
        for t in 0..50 {
            let x = [t as f64, -3.0, 10.0];
            h = cell.forward(&x, &h).unwrap().hidden;
            assert!(h.iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn length_one_bptt_equals_single_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cell = GruCell::new(2, 3, &mut rng);
        let cache = cell.forward(&[0.3, -0.7], &[0.1, 0.2, -0.4]).unwrap();
        let dh = vec![0.5, -1.0, 0.25];
        let mut single = cell.zeros_like();
        let (dx, dh0) = cell.backward_step(&cache, &dh, &mut single);
        let (seq, dxs, dh0_seq) = cell.backward_sequence(&[cache], &[dh]).unwrap();
        assert_eq!(single, seq);
        assert_eq!(dxs[0], dx);
        assert_eq!(dh0_seq, dh0);
    }

    #[test]
    fn softmax_basics() {
        let p = softmax(&[0.3; 4]).unwrap();
        assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-15));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (i, lp) = softmax_sample(&[0.0, 1e6, 0.0], &mut rng).unwrap();
        assert_eq!(i, 1);
        assert!(lp.abs() < 1e-12);
        assert!(matches!(softmax(&[0.0, f64::NAN]), Err(Error::Numeric(_))));
    }

    #[test]
    fn sampling_is_reproducible() {
        let logits = [0.1, -0.4, 0.9, 0.0];
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..32).map(|_| softmax_sample(&logits, &mut rng).unwrap().0).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn sample_log_prob_matches_probability() {
        let logits = [0.5, -1.0, 2.0];
        let probs = softmax(&logits).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (i, lp) = softmax_sample(&logits, &mut rng).unwrap();
            assert!((lp - probs[i].ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_with_zero_grads_is_noop() {
        let mut params = vec![vec![1.0, -2.0], vec![0.5]];
        let before = params.clone();
        let mut opt = OptimizerState::new(AdamConfig::default(), &[2, 1]);
        let zeros = [vec![0.0; 2], vec![0.0]];
        for _ in 0..3 {
            let mut p: Vec<&mut [f64]> = params.iter_mut().map(|v| v.as_mut_slice()).collect();
            let g: Vec<&[f64]> = zeros.iter().map(|v| v.as_slice()).collect();
            opt.adam_step(&mut p, &g).unwrap();
        }
        assert_eq!(params, before);
        assert_eq!(opt.step, 3);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut params = vec![vec![1.0]];
        let mut opt = OptimizerState::new(AdamConfig::default(), &[1]);
        let mut p: Vec<&mut [f64]> = params.iter_mut().map(|v| v.as_mut_slice()).collect();
        opt.adam_step(&mut p, &[&[0.7]]).unwrap();
        assert!((params[0][0] - (1.0 - 3e-4)).abs() < 1e-10);
    }

    #[test]
    fn adam_rejects_nan() {
        let mut params = vec![vec![1.0]];
        let mut opt = OptimizerState::new(AdamConfig::default(), &[1]);
        let mut p: Vec<&mut [f64]> = params.iter_mut().map(|v| v.as_mut_slice()).collect();
        assert!(opt.adam_step(&mut p, &[&[f64::NAN]]).is_err());
    }
}
