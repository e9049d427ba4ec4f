//! Small fully connected Q-network with hand-written backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Action;
use crate::{Error, Result, Scalar};

/// Dense layer; `weights` is row-major `[n_out][n_in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![T::zero(); n_in * n_out],
            biases: vec![T::zero(); n_out],
        }
    }

    fn affine(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(
            self.biases
                .iter()
                .enumerate()
                .map(|(o, &b)| b + dot(&self.weights[o * self.n_in..(o + 1) * self.n_in], x)),
        );
    }
}

/// Dot product with eight interleaved partial sums so the compiler can keep
/// the lanes in vector registers. The summation order is fixed, so results
/// are reproducible.
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let chunks = a.len() / 8 * 8;
    for (ca, cb) in a[..chunks].chunks_exact(8).zip(b[..chunks].chunks_exact(8)) {
        for k in 0..8 {
            lanes[k] += ca[k] * cb[k];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in a[chunks..].iter().zip(&b[chunks..]) {
        tail += x * y;
    }
    ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7])) + tail
}

/// Scalar-state Q-network: rectifier hidden layers, identity output of size
/// three. The state enters as `s - input_offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork<T> {
    pub layers: Vec<Layer<T>>,
    pub input_offset: T,
}

impl<T: Scalar> QNetwork<T> {
    pub fn from_layers(layers: Vec<Layer<T>>, input_offset: T) -> Result<Self> {
        let net = Self { layers, input_offset };
        net.check_shape()?;
        Ok(net)
    }

    fn check_shape(&self) -> Result<()> {
        let sizes = self.layer_sizes();
        let mut problems = Vec::new();
        if self.layers.is_empty() {
            problems.push("network needs at least one layer".to_string());
        } else {
            if sizes[0] != 1 {
                problems.push(format!("input size must be 1 (got {})", sizes[0]));
            }
            if sizes[sizes.len() - 1] != Action::ALL.len() {
                problems.push(format!("output size must be 3 (got {})", sizes[sizes.len() - 1]));
            }
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].n_out != pair[1].n_in {
                problems.push(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    pair[0].n_out,
                    i + 1,
                    pair[1].n_in
                ));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.n_in * l.n_out || l.biases.len() != l.n_out {
                problems.push(format!("layer {i} has inconsistent parameter lengths"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// All-zero network with the given hidden widths.
    pub fn zeros(hidden: &[usize]) -> Self {
        let sizes = Self::sizes_for(hidden);
        Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            input_offset: T::one(),
        }
    }

    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for
    /// weights and biases alike.
    pub fn random<R: Rng>(hidden: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(hidden);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.n_in as f64).sqrt();
            for p in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *p = T::lit(rng.gen_range(-bound..=bound));
            }
        }
        net
    }

    fn sizes_for(hidden: &[usize]) -> Vec<usize> {
        let mut sizes = vec![1];
        sizes.extend_from_slice(hidden);
        sizes.push(Action::ALL.len());
        sizes
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.layers.first().map(|l| vec![l.n_in]).unwrap_or_default();
        sizes.extend(self.layers.iter().map(|l| l.n_out));
        sizes
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn parameters(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[T]) {
        assert_eq!(params.len(), self.parameter_count(), "parameter vector length");
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for p in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *p = it.next().unwrap_or_else(T::zero);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|p| p.is_finite()))
    }

    /// Activations of every layer, input first; hidden entries are post-ReLU.
    fn activations(&self, s: T) -> Vec<Vec<T>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(vec![s - self.input_offset]);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.n_out);
            layer.affine(&acts[i], &mut out);
            if i < last {
                for v in &mut out {
                    *v = v.max(T::zero());
                }
            }
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, s: T) -> [T; 3] {
        let acts = self.activations(s);
        let out = &acts[acts.len() - 1];
        [out[0], out[1], out[2]]
    }

    /// Mean squared error of `Q(s_i, a_i)` against fixed `targets`.
    pub fn loss(&self, batch: &[(T, Action)], targets: &[T]) -> T {
        let total: T = batch
            .iter()
            .zip(targets)
            .map(|(&(s, a), &y)| {
                let d = self.forward(s)[a.index()] - y;
                d * d
            })
            .sum();
        total / T::from_count(batch.len())
    }

    /// Loss and its gradient with respect to [`parameters`](Self::parameters).
    pub fn loss_and_gradient(&self, batch: &[(T, Action)], targets: &[T]) -> (T, Vec<T>) {
        let scale = T::one() / T::from_count(batch.len());
        let mut grads: Vec<Layer<T>> = self.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect();
        let mut loss = T::zero();
        let last = self.layers.len() - 1;
        for (&(s, a), &y) in batch.iter().zip(targets) {
            let acts = self.activations(s);
            let q = acts[last + 1][a.index()];
            let d = q - y;
            loss += d * d;
            // dL/dq_a = 2 d / B; other outputs carry no error.
            let mut delta = vec![T::zero(); Action::ALL.len()];
            delta[a.index()] = T::lit(2.0) * d * scale;
            for i in (0..=last).rev() {
                let layer = &self.layers[i];
                let input = &acts[i];
                let g = &mut grads[i];
                for o in 0..layer.n_out {
                    let dz = delta[o];
                    if dz == T::zero() {
                        continue;
                    }
                    g.biases[o] += dz;
                    let row = &mut g.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    for (gw, &x) in row.iter_mut().zip(input) {
                        *gw += dz * x;
                    }
                }
                if i > 0 {
                    let mut prev = vec![T::zero(); layer.n_in];
                    for o in 0..layer.n_out {
                        let dz = delta[o];
                        if dz == T::zero() {
                            continue;
                        }
                        let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                        for (p, &w) in prev.iter_mut().zip(row) {
                            *p += dz * w;
                        }
                    }
                    // ReLU derivative: zero where the activation was clipped.
                    for (p, &act) in prev.iter_mut().zip(input) {
                        if act <= T::zero() {
                            *p = T::zero();
                        }
                    }
                    delta = prev;
                }
            }
        }
        let flat = grads
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect();
        (loss * scale, flat)
    }
}

/// Greedy action with ties going to the lowest index.
pub fn argmax_action<T: Scalar>(q: &[T; 3]) -> Action {
    let mut best = 0;
    for i in 1..q.len() {
        if q[i] > q[best] {
            best = i;
        }
    }
    Action::ALL[best]
}

pub fn q_forward<T: Scalar>(net: &QNetwork<T>, s: T) -> [T; 3] {
    net.forward(s)
}

/// Epsilon-greedy selection.
pub fn select_action<T: Scalar, R: Rng>(net: &QNetwork<T>, s: T, epsilon: f64, rng: &mut R) -> Action {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        Action::ALL[rng.gen_range(0..Action::ALL.len())]
    } else {
        argmax_action(&net.forward(s))
    }
}

/// `r + gamma * max_a Q_target(s', a)`.
pub fn td_target<T: Scalar>(r: T, s_next: T, target_net: &QNetwork<T>, gamma: T) -> T {
    let q = target_net.forward(s_next);
    r + gamma * q[1..].iter().fold(q[0], |m, &v| m.max(v))
}

/// `r + gamma * Q_target(s', argmax_a Q_online(s', a))`.
pub fn ddqn_target<T: Scalar>(r: T, s_next: T, online: &QNetwork<T>, target_net: &QNetwork<T>, gamma: T) -> T {
    let a = argmax_action(&online.forward(s_next));
    r + gamma * target_net.forward(s_next)[a.index()]
}

/// Copy the online parameters into the target every `interval` steps.
/// Returns whether a copy happened.
pub fn sync_target<T: Scalar>(net: &QNetwork<T>, target_net: &mut QNetwork<T>, step_count: u64, interval: u64) -> bool {
    if interval > 0 && step_count > 0 && step_count % interval == 0 {
        target_net.clone_from(net);
        true
    } else {
        false
    }
}

/// One gradient step on the mean squared TD error against precomputed
/// targets. Returns the loss before the step.
pub fn gradient_step<T: Scalar>(
    net: &mut QNetwork<T>,
    batch: &[(T, Action)],
    targets: &[T],
    learning_rate: T,
) -> Result<T> {
    let (loss, grad) = net.loss_and_gradient(batch, targets);
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::TrainingDiverged {
            episode: 0,
            step: 0,
            detail: format!("non-finite loss or gradient (loss {loss})"),
        });
    }
    let mut g = grad.iter();
    for l in &mut net.layers {
        for p in l.weights.iter_mut().chain(l.biases.iter_mut()) {
            *p -= learning_rate * *g.next().expect("gradient length matches parameters");
        }
    }
    if !net.is_finite() {
        return Err(Error::TrainingDiverged {
            episode: 0,
            step: 0,
            detail: "parameters became non-finite".into(),
        });
    }
    Ok(loss)
}
