//! Noisy dueling Q-network.
//!
//! Trunk of noisy affine layers interleaved with batch normalization and
//! ReLU, bifurcating into a scalar state-value stream and a three-action
//! advantage stream, recombined with mean-subtracted advantages. Exploration
//! comes from factorized Gaussian weight noise instead of epsilon-greedy.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::autodiff::{checkpoint, AdError, Param, Tape, Tensor, Var};

#[derive(Debug, Error)]
pub enum QnetError {
    #[error("hidden layer list must not be empty")]
    EmptyHidden,
    #[error("state dimension {got} does not match network input {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("network topologies differ: {0}")]
    TopologyMismatch(String),
    #[error("checkpoint tensor {0} missing or mis-shaped")]
    BadCheckpoint(String),
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The tri-dimensional trading action space. Ordering matters: argmax ties
/// break toward the lower index (BUY < HOLD < SELL).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Buy,
    Hold,
    Sell,
}

pub const ACTIONS: [Action; 3] = [Action::Buy, Action::Hold, Action::Sell];

impl Action {
    pub fn index(self) -> usize {
        match self {
            Action::Buy => 0,
            Action::Hold => 1,
            Action::Sell => 2,
        }
    }

    pub fn from_index(i: usize) -> Action {
        ACTIONS[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Buy => "BUY",
            Action::Hold => "HOLD",
            Action::Sell => "SELL",
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Batch-norm statistics mode for a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Factorized noise transform f(x) = sign(x) * sqrt(|x|).
fn noise_fn(x: f64) -> f64 {
    x.signum() * x.abs().sqrt()
}

/// Affine layer with learnable mean and noise-scale tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyLinear {
    pub mu_w: Param,
    pub sigma_w: Param,
    pub mu_b: Param,
    pub sigma_b: Param,
    pub eps_in: Vec<f64>,
    pub eps_out: Vec<f64>,
}

impl NoisyLinear {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, sigma_init: f64, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let sigma0 = sigma_init / (in_dim as f64).sqrt();
        let mu_w = Tensor::new(
            vec![in_dim, out_dim],
            (0..in_dim * out_dim)
                .map(|_| rng.gen_range(-bound..bound))
                .collect(),
        );
        let mu_b = Tensor::new(vec![out_dim], (0..out_dim).map(|_| rng.gen_range(-bound..bound)).collect());
        NoisyLinear {
            mu_w: Param::new(format!("{name}.mu_w"), mu_w),
            sigma_w: Param::new(
                format!("{name}.sigma_w"),
                Tensor::new(vec![in_dim, out_dim], vec![sigma0; in_dim * out_dim]),
            ),
            mu_b: Param::new(format!("{name}.mu_b"), mu_b),
            sigma_b: Param::new(
                format!("{name}.sigma_b"),
                Tensor::new(vec![out_dim], vec![sigma0; out_dim]),
            ),
            eps_in: vec![0.0; in_dim],
            eps_out: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.mu_w.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.mu_w.value.cols()
    }

    /// Draw fresh factorized unit-Gaussian noise.
    pub fn resample(&mut self, rng: &mut impl Rng) {
        for e in self.eps_in.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        for e in self.eps_out.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
    }

    /// Current noise tensors: outer product f(eps_in) x f(eps_out) for the
    /// weights and f(eps_out) for the bias.
    pub fn noise_tensors(&self) -> (Tensor, Tensor) {
        let (i, o) = (self.in_dim(), self.out_dim());
        let f_in: Vec<f64> = self.eps_in.iter().map(|&e| noise_fn(e)).collect();
        let f_out: Vec<f64> = self.eps_out.iter().map(|&e| noise_fn(e)).collect();
        let mut nw = Tensor::zeros(vec![i, o]);
        for r in 0..i {
            for c in 0..o {
                nw.data[r * o + c] = f_in[r] * f_out[c];
            }
        }
        (nw, Tensor::new(vec![o], f_out))
    }

    /// Effective weight matrix mu + sigma .* noise for the current draw.
    pub fn effective_weight(&self, noisy: bool) -> Tensor {
        let mut w = self.mu_w.value.clone();
        if noisy {
            let (nw, _) = self.noise_tensors();
            for (wv, (s, n)) in w
                .data
                .iter_mut()
                .zip(self.sigma_w.value.data.iter().zip(&nw.data))
            {
                *wv += s * n;
            }
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormLayer {
    fn new(name: &str, dim: usize) -> Self {
        BatchNormLayer {
            gamma: Param::new(format!("{name}.gamma"), Tensor::new(vec![dim], vec![1.0; dim])),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(vec![dim])),
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

/// All learnable tensors and running statistics of the network. Cloning a
/// `QNetwork` yields a bit-identical copy, which is how target syncs work.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub sigma_init: f64,
    pub trunk: Vec<NoisyLinear>,
    pub trunk_bn: Vec<BatchNormLayer>,
    pub value_head: NoisyLinear,
    pub adv_head: NoisyLinear,
}

/// Handle returned by a tape forward pass, used to push gradients back into
/// the owning network after `Tape::backward`.
pub struct ForwardHandle {
    pub q: Var,
    leaves: Vec<(usize, Var)>,
}

/// Build the noisy dueling network. `hidden` defaults to `[128, 256]` at the
/// call sites; mu weights initialize uniform within +/- 1/sqrt(fan_in) and
/// sigma to `sigma_init / sqrt(fan_in)`.
pub fn build_network(
    input_dim: usize,
    hidden: &[usize],
    sigma_init: f64,
    seed: u64,
) -> Result<QNetwork, QnetError> {
    if hidden.is_empty() {
        return Err(QnetError::EmptyHidden);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trunk = Vec::new();
    let mut trunk_bn = Vec::new();
    let mut dim = input_dim;
    for (i, &h) in hidden.iter().enumerate() {
        trunk.push(NoisyLinear::new(&format!("trunk{i}"), dim, h, sigma_init, &mut rng));
        trunk_bn.push(BatchNormLayer::new(&format!("bn{i}"), h));
        dim = h;
    }
    let value_head = NoisyLinear::new("value", dim, 1, sigma_init, &mut rng);
    let adv_head = NoisyLinear::new("advantage", dim, 3, sigma_init, &mut rng);
    Ok(QNetwork {
        input_dim,
        hidden: hidden.to_vec(),
        sigma_init,
        trunk,
        trunk_bn,
        value_head,
        adv_head,
    })
}

impl QNetwork {
    pub fn same_topology(&self, other: &QNetwork) -> bool {
        self.input_dim == other.input_dim && self.hidden == other.hidden
    }

    /// Flat parameter list in a stable order (trunk, bn, heads).
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for layer in self.trunk.iter_mut() {
            out.extend([
                &mut layer.mu_w,
                &mut layer.sigma_w,
                &mut layer.mu_b,
                &mut layer.sigma_b,
            ]);
        }
        for bn in self.trunk_bn.iter_mut() {
            out.extend([&mut bn.gamma, &mut bn.beta]);
        }
        for layer in [&mut self.value_head, &mut self.adv_head] {
            out.extend([
                &mut layer.mu_w,
                &mut layer.sigma_w,
                &mut layer.mu_b,
                &mut layer.sigma_b,
            ]);
        }
        out
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        for layer in self.trunk.iter() {
            out.extend([&layer.mu_w, &layer.sigma_w, &layer.mu_b, &layer.sigma_b]);
        }
        for bn in self.trunk_bn.iter() {
            out.extend([&bn.gamma, &bn.beta]);
        }
        for layer in [&self.value_head, &self.adv_head] {
            out.extend([&layer.mu_w, &layer.sigma_w, &layer.mu_b, &layer.sigma_b]);
        }
        out
    }

    /// Sum of squared parameter values (the L2 penalty without its factor).
    pub fn l2_norm_sq(&self) -> f64 {
        self.params()
            .iter()
            .map(|p| p.value.data.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    /// Resample factorized noise on every layer.
    pub fn resample_noise(&mut self, rng: &mut impl Rng) {
        for layer in self.trunk.iter_mut() {
            layer.resample(rng);
        }
        self.value_head.resample(rng);
        self.adv_head.resample(rng);
    }

    fn layer_forward(
        tape: &mut Tape,
        layer: &NoisyLinear,
        x: Var,
        noisy: bool,
        leaves: &mut Vec<(usize, Var)>,
        base: usize,
    ) -> Result<Var, AdError> {
        let mu_w = tape.leaf(layer.mu_w.value.clone(), true);
        let sigma_w = tape.leaf(layer.sigma_w.value.clone(), true);
        let mu_b = tape.leaf(layer.mu_b.value.clone(), true);
        let sigma_b = tape.leaf(layer.sigma_b.value.clone(), true);
        leaves.extend([(base, mu_w), (base + 1, sigma_w), (base + 2, mu_b), (base + 3, sigma_b)]);
        let (nw, nb) = if noisy {
            layer.noise_tensors()
        } else {
            (
                Tensor::zeros(layer.mu_w.value.shape.clone()),
                Tensor::zeros(layer.mu_b.value.shape.clone()),
            )
        };
        tape.noisy_affine(x, mu_w, sigma_w, mu_b, sigma_b, nw, nb)
    }

    /// Forward pass on a caller-provided tape. In train mode batch-norm uses
    /// batch statistics and updates the running stats in place.
    pub fn forward_tape(
        &mut self,
        tape: &mut Tape,
        states: &Tensor,
        mode: Mode,
        noisy: bool,
    ) -> Result<ForwardHandle, QnetError> {
        if states.shape.len() != 2 || states.cols() != self.input_dim {
            return Err(QnetError::DimensionMismatch {
                got: if states.shape.len() == 2 { states.cols() } else { 0 },
                expected: self.input_dim,
            });
        }
        let mut leaves = Vec::new();
        let mut x = tape.leaf(states.clone(), false);
        let n_trunk = self.trunk.len();
        let bn_base = n_trunk * 4;
        for i in 0..n_trunk {
            x = Self::layer_forward(tape, &self.trunk[i], x, noisy, &mut leaves, i * 4)?;
            let bn = &mut self.trunk_bn[i];
            let gamma = tape.leaf(bn.gamma.value.clone(), true);
            let beta = tape.leaf(bn.beta.value.clone(), true);
            leaves.extend([(bn_base + i * 2, gamma), (bn_base + i * 2 + 1, beta)]);
            x = match mode {
                Mode::Train => {
                    let (y, mean, var) = tape.batch_norm_train(x, gamma, beta, bn.eps)?;
                    for c in 0..mean.len() {
                        bn.running_mean[c] =
                            (1.0 - bn.momentum) * bn.running_mean[c] + bn.momentum * mean[c];
                        bn.running_var[c] =
                            (1.0 - bn.momentum) * bn.running_var[c] + bn.momentum * var[c];
                    }
                    y
                }
                Mode::Eval => tape.batch_norm_eval(
                    x,
                    gamma,
                    beta,
                    &bn.running_mean,
                    &bn.running_var,
                    bn.eps,
                )?,
            };
            x = tape.relu(x);
        }
        let head_base = bn_base + self.trunk_bn.len() * 2;
        let value = Self::layer_forward(tape, &self.value_head, x, noisy, &mut leaves, head_base)?;
        let adv = Self::layer_forward(tape, &self.adv_head, x, noisy, &mut leaves, head_base + 4)?;
        let q = tape.dueling(value, adv)?;
        Ok(ForwardHandle { q, leaves })
    }

    /// Copy gradients accumulated on the tape back into the network's
    /// parameter grad buffers (additively).
    pub fn accumulate_grads(&mut self, tape: &Tape, handle: &ForwardHandle) {
        let mut params = self.params_mut();
        for &(idx, var) in &handle.leaves {
            if let Some(g) = tape.grad(var) {
                let dst = &mut params[idx].grad;
                for (d, s) in dst.data.iter_mut().zip(&g.data) {
                    *d += s;
                }
            }
        }
    }

    /// Q-values for a batch of states. Convenience wrapper that builds a
    /// throwaway tape; train mode still updates batch-norm running stats.
    pub fn q_values(&mut self, states: &Tensor, mode: Mode, noisy: bool) -> Result<Tensor, QnetError> {
        let mut tape = Tape::new();
        let h = self.forward_tape(&mut tape, states, mode, noisy)?;
        Ok(tape.value(h.q).clone())
    }

    /// Q-values for one state (eval-mode batch norm).
    pub fn q_values_single(&mut self, state: &[f64], noisy: bool) -> Result<[f64; 3], QnetError> {
        let t = Tensor::new(vec![1, state.len()], state.to_vec());
        let q = self.q_values(&t, Mode::Eval, noisy)?;
        Ok([q.data[0], q.data[1], q.data[2]])
    }

    /// Argmax action; ties break by fixed order BUY < HOLD < SELL.
    pub fn greedy_action(&mut self, state: &[f64], noisy: bool) -> Result<Action, QnetError> {
        let q = self.q_values_single(state, noisy)?;
        Ok(argmax_action(&q))
    }

    /// Named tensors for checkpointing: all parameters plus batch-norm
    /// running statistics.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self
            .params()
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        for (i, bn) in self.trunk_bn.iter().enumerate() {
            out.push((
                format!("bn{i}.running_mean"),
                Tensor::new(vec![bn.running_mean.len()], bn.running_mean.clone()),
            ));
            out.push((
                format!("bn{i}.running_var"),
                Tensor::new(vec![bn.running_var.len()], bn.running_var.clone()),
            ));
        }
        out
    }

    pub fn save<W: Write>(&self, w: W) -> Result<(), QnetError> {
        let named = self.named_tensors();
        let refs: Vec<(String, &Tensor)> = named.iter().map(|(n, t)| (n.clone(), t)).collect();
        checkpoint::write_tensors(w, &refs)?;
        Ok(())
    }

    /// Load tensors by name into a network of matching topology.
    pub fn load<R: Read>(&mut self, r: R) -> Result<(), QnetError> {
        let tensors = checkpoint::read_tensors(r)?;
        let lookup: std::collections::HashMap<String, Tensor> = tensors.into_iter().collect();
        for p in self.params_mut() {
            let t = lookup
                .get(&p.name)
                .ok_or_else(|| QnetError::BadCheckpoint(p.name.clone()))?;
            if t.shape != p.value.shape {
                return Err(QnetError::BadCheckpoint(p.name.clone()));
            }
            p.value = t.clone();
        }
        for (i, bn) in self.trunk_bn.iter_mut().enumerate() {
            for (field, dst) in [
                ("running_mean", &mut bn.running_mean),
                ("running_var", &mut bn.running_var),
            ] {
                let name = format!("bn{i}.{field}");
                let t = lookup
                    .get(&name)
                    .ok_or_else(|| QnetError::BadCheckpoint(name.clone()))?;
                if t.numel() != dst.len() {
                    return Err(QnetError::BadCheckpoint(name));
                }
                dst.copy_from_slice(&t.data);
            }
        }
        Ok(())
    }
}

pub fn argmax_action(q: &[f64; 3]) -> Action {
    let mut best = 0;
    for i in 1..3 {
        if q[i] > q[best] {
            best = i;
        }
    }
    Action::from_index(best)
}

/// Softmax over Q-values. Reporting transform only; never used in target
/// computation.
pub fn softmax(q: &[f64]) -> Vec<f64> {
    let m = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = q.iter().map(|&v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_net(seed: u64) -> QNetwork {
        build_network(4, &[8], 0.5, seed).unwrap()
    }

    #[test]
    fn build_is_deterministic_and_shaped() {
        let a = build_network(12, &[128, 256], 0.5, 9).unwrap();
        let b = build_network(12, &[128, 256], 0.5, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trunk[0].mu_w.value.shape, vec![12, 128]);
        assert_eq!(a.trunk[1].mu_w.value.shape, vec![128, 256]);
        assert_eq!(a.value_head.mu_w.value.shape, vec![256, 1]);
        assert_eq!(a.adv_head.mu_w.value.shape, vec![256, 3]);
        assert!(build_network(4, &[], 0.5, 0).is_err());
    }

    #[test]
    fn zero_sigma_equals_plain_affine() {
        let mut net = build_network(4, &[8], 0.0, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let state = [0.3, -0.2, 0.9, 1.1];
        let q_off = net.q_values_single(&state, false).unwrap();
        net.resample_noise(&mut rng);
        let q_on = net.q_values_single(&state, true).unwrap();
        assert_eq!(q_off, q_on);
    }

    #[test]
    fn resample_determinism_and_effect() {
        let mut net = tiny_net(5);
        let mut r1 = ChaCha8Rng::seed_from_u64(77);
        let mut r2 = ChaCha8Rng::seed_from_u64(77);
        net.resample_noise(&mut r1);
        let eps_a = net.trunk[0].eps_in.clone();
        net.resample_noise(&mut r2);
        assert_eq!(eps_a, net.trunk[0].eps_in);

        let w_mu = net.trunk[0].effective_weight(false);
        let w_eff = net.trunk[0].effective_weight(true);
        let differing = w_mu
            .data
            .iter()
            .zip(&w_eff.data)
            .filter(|(a, b)| a != b)
            .count();
        assert!(differing > 0);
    }

    #[test]
    fn noise_is_zero_mean_monte_carlo() {
        // Empirical mean of the effective weight over many resamples stays
        // within 3*sigma/sqrt(n) of mu on a 2x2 layer.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layer_rng = &mut ChaCha8Rng::seed_from_u64(2);
        let mut layer = NoisyLinear::new("t", 2, 2, 0.5, layer_rng);
        let n = 100_000;
        let mut acc = vec![0.0; 4];
        for _ in 0..n {
            layer.resample(&mut rng);
            let w = layer.effective_weight(true);
            for (a, v) in acc.iter_mut().zip(&w.data) {
                *a += v;
            }
        }
        for (k, a) in acc.iter().enumerate() {
            let mean = a / n as f64;
            let mu = layer.mu_w.value.data[k];
            let sigma = layer.sigma_w.value.data[k];
            // Var(f(e1)f(e2)) = E[|e1|]E[|e2|] = 2/pi for unit Gaussians.
            let tol = 3.0 * sigma * (2.0 / std::f64::consts::PI).sqrt() / (n as f64).sqrt();
            assert!(
                (mean - mu).abs() < tol.max(1e-3),
                "weight {k}: mean {mean} vs mu {mu}"
            );
        }
    }

    #[test]
    fn dueling_identifiability() {
        let mut net = tiny_net(21);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        net.resample_noise(&mut rng);
        let state = Tensor::new(vec![1, 4], vec![0.5, 1.2, -0.3, 0.8]);
        // Adding a constant to every advantage bias leaves Q unchanged.
        let q0 = net.q_values(&state, Mode::Eval, false).unwrap();
        for b in net.adv_head.mu_b.value.data.iter_mut() {
            *b += 10.0;
        }
        let q1 = net.q_values(&state, Mode::Eval, false).unwrap();
        for (a, b) in q0.data.iter().zip(&q1.data) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn greedy_tie_break_and_shift_invariance() {
        assert_eq!(argmax_action(&[1.0, 0.2, 0.2]), Action::Buy);
        assert_eq!(argmax_action(&[0.5, 0.5, 0.1]), Action::Buy);
        assert_eq!(argmax_action(&[11.0, 10.2, 10.2]), Action::Buy);
        assert_eq!(argmax_action(&[0.1, 0.2, 0.9]), Action::Sell);
    }

    #[test]
    fn hand_built_single_layer_forward() {
        // One trunk layer of width 2 with all weights pinned by hand.
        let mut net = build_network(2, &[2], 0.0, 0).unwrap();
        net.trunk[0].mu_w.value = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        net.trunk[0].mu_b.value = Tensor::zeros(vec![2]);
        // Identity batch norm in eval mode: mean 0, var 1 - eps so inv_std = 1.
        for bn in net.trunk_bn.iter_mut() {
            bn.running_mean = vec![0.0, 0.0];
            bn.running_var = vec![1.0 - bn.eps, 1.0 - bn.eps];
        }
        net.value_head.mu_w.value = Tensor::new(vec![2, 1], vec![1.0, 1.0]);
        net.value_head.mu_b.value = Tensor::new(vec![1], vec![0.5]);
        net.adv_head.mu_w.value = Tensor::new(vec![2, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        net.adv_head.mu_b.value = Tensor::zeros(vec![3]);

        // state (2, 3): trunk -> relu([2,3]) = [2,3]; V = 5.5;
        // A = (2, 3, 0), mean 5/3; Q = V + A - mean.
        let q = net.q_values_single(&[2.0, 3.0], false).unwrap();
        let mean_a = 5.0 / 3.0;
        let expect = [5.5 + 2.0 - mean_a, 5.5 + 3.0 - mean_a, 5.5 - mean_a];
        for (a, b) in q.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12, "{q:?} vs {expect:?}");
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let s = softmax(&[1.0, 2.0, 3.0]);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn target_sync_clone_is_bit_identical() {
        let mut net = tiny_net(33);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        net.resample_noise(&mut rng);
        let mut copy = net.clone();
        for s in [[0.1, 0.2, 0.3, 0.4], [1.0, -1.0, 0.5, 2.0]] {
            let qa = net.q_values_single(&s, false).unwrap();
            let qb = copy.q_values_single(&s, false).unwrap();
            assert_eq!(qa, qb);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut net = tiny_net(8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        net.resample_noise(&mut rng);
        // perturb running stats so they are exercised too
        net.trunk_bn[0].running_mean[0] = 0.25;
        let mut buf = Vec::new();
        net.save(&mut buf).unwrap();
        let mut other = tiny_net(99);
        other.load(&buf[..]).unwrap();
        let s = [0.4, 0.1, -0.6, 1.0];
        assert_eq!(
            net.q_values_single(&s, false).unwrap(),
            other.q_values_single(&s, false).unwrap()
        );
    }
}
