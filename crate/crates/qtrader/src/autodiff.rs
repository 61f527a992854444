//! Minimal dense-tensor reverse-mode autodiff.
//!
//! A [`Tape`] records forward operations; [`Tape::backward`] replays them in
//! reverse topological order and accumulates gradients into every node. Only
//! the layer set the Q-network needs is implemented: affine maps (plain and
//! noisy), batch normalization, ReLU, dueling aggregation, per-row gather,
//! and a weighted smooth-L1 loss. All arithmetic is in `f64`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward already run on this tape")]
    BackwardTwice,
    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("batch normalization in train mode needs a batch of at least 2 rows")]
    BatchTooSmall,
    #[error("optimizer step called before any backward pass populated gradients")]
    StepBeforeBackward,
}

/// Row-major dense tensor of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "data length must equal product of shape"
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    /// y = x W + b, x: B x I, W: I x O, b: O
    Affine { x: usize, w: usize, b: usize },
    /// Affine with effective weights mu + sigma .* noise; gradients flow to
    /// both mu and sigma tensors.
    NoisyAffine {
        x: usize,
        mu_w: usize,
        sigma_w: usize,
        mu_b: usize,
        sigma_b: usize,
        noise_w: Tensor,
        noise_b: Tensor,
    },
    BatchNormTrain {
        x: usize,
        gamma: usize,
        beta: usize,
        x_hat: Tensor,
        inv_std: Vec<f64>,
    },
    /// Eval-mode normalization by fixed running statistics.
    BatchNormEval {
        x: usize,
        gamma: usize,
        beta: usize,
        inv_std: Vec<f64>,
    },
    Relu { x: usize },
    /// Q = V + A - mean_a A; value: B x 1, adv: B x A
    Dueling { value: usize, adv: usize },
    /// out[i] = x[i, cols[i]]
    Gather { x: usize, cols: Vec<usize> },
    /// Weighted huber loss; target and weights are constants.
    SmoothL1 {
        pred: usize,
        target: Tensor,
        weights: Tensor,
        mean: bool,
    },
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    op: Op,
}

/// Records a forward computation for one backward replay.
pub struct Tape {
    nodes: Vec<Node>,
    backward_run: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            backward_run: false,
        }
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        let grad = if requires_grad {
            Some(Tensor::zeros(value.shape.clone()))
        } else {
            None
        };
        self.nodes.push(Node {
            value,
            grad,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward target w.r.t. `v`. Zero until backward
    /// has run; `None` for nodes created with `requires_grad = false`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, AdError> {
        let (xv, wv, bv) = (&self.nodes[x.0].value, &self.nodes[w.0].value, &self.nodes[b.0].value);
        check_affine_shapes(xv, wv, bv)?;
        let y = affine_forward(xv, &wv.data, &bv.data, wv.cols());
        Ok(self.push(y, true, Op::Affine { x: x.0, w: w.0, b: b.0 }))
    }

    /// Noisy affine: effective W = mu_w + sigma_w .* noise_w, likewise for b.
    /// Pass zero noise tensors to disable the noise path (mu-only forward).
    pub fn noisy_affine(
        &mut self,
        x: Var,
        mu_w: Var,
        sigma_w: Var,
        mu_b: Var,
        sigma_b: Var,
        noise_w: Tensor,
        noise_b: Tensor,
    ) -> Result<Var, AdError> {
        let xv = &self.nodes[x.0].value;
        let muw = &self.nodes[mu_w.0].value;
        let mub = &self.nodes[mu_b.0].value;
        check_affine_shapes(xv, muw, mub)?;
        if !self.nodes[sigma_w.0].value.same_shape(muw)
            || !self.nodes[sigma_b.0].value.same_shape(mub)
            || !noise_w.same_shape(muw)
            || !noise_b.same_shape(mub)
        {
            return Err(AdError::ShapeMismatch(
                "sigma/noise tensors must match mu shapes".into(),
            ));
        }
        let out_dim = muw.cols();
        let mut w_eff = muw.data.clone();
        let sw = &self.nodes[sigma_w.0].value.data;
        for (i, w) in w_eff.iter_mut().enumerate() {
            *w += sw[i] * noise_w.data[i];
        }
        let mut b_eff = mub.data.clone();
        let sb = &self.nodes[sigma_b.0].value.data;
        for (i, b) in b_eff.iter_mut().enumerate() {
            *b += sb[i] * noise_b.data[i];
        }
        let y = affine_forward(xv, &w_eff, &b_eff, out_dim);
        Ok(self.push(
            y,
            true,
            Op::NoisyAffine {
                x: x.0,
                mu_w: mu_w.0,
                sigma_w: sigma_w.0,
                mu_b: mu_b.0,
                sigma_b: sigma_b.0,
                noise_w,
                noise_b,
            },
        ))
    }

    /// Train-mode batch norm. Returns the output together with the batch
    /// mean and (biased) variance so the caller can update running stats.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Vec<f64>, Vec<f64>), AdError> {
        let xv = &self.nodes[x.0].value;
        let (b, f) = (xv.rows(), xv.cols());
        if b < 2 {
            return Err(AdError::BatchTooSmall);
        }
        let g = &self.nodes[gamma.0].value;
        let be = &self.nodes[beta.0].value;
        if g.numel() != f || be.numel() != f {
            return Err(AdError::ShapeMismatch(format!(
                "batch norm expects gamma/beta of length {f}"
            )));
        }
        let mut mean = vec![0.0; f];
        for r in 0..b {
            for c in 0..f {
                mean[c] += xv.data[r * f + c];
            }
        }
        for m in mean.iter_mut() {
            *m /= b as f64;
        }
        let mut var = vec![0.0; f];
        for r in 0..b {
            for c in 0..f {
                let d = xv.data[r * f + c] - mean[c];
                var[c] += d * d;
            }
        }
        for v in var.iter_mut() {
            *v /= b as f64;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut x_hat = Tensor::zeros(vec![b, f]);
        let mut y = Tensor::zeros(vec![b, f]);
        for r in 0..b {
            for c in 0..f {
                let h = (xv.data[r * f + c] - mean[c]) * inv_std[c];
                x_hat.data[r * f + c] = h;
                y.data[r * f + c] = g.data[c] * h + be.data[c];
            }
        }
        let out = self.push(
            y,
            true,
            Op::BatchNormTrain {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                x_hat,
                inv_std,
            },
        );
        Ok((out, mean, var))
    }

    /// Eval-mode batch norm using fixed running statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<Var, AdError> {
        let xv = &self.nodes[x.0].value;
        let (b, f) = (xv.rows(), xv.cols());
        if running_mean.len() != f || running_var.len() != f {
            return Err(AdError::ShapeMismatch(format!(
                "running stats must have length {f}"
            )));
        }
        let g = &self.nodes[gamma.0].value;
        let be = &self.nodes[beta.0].value;
        let inv_std: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut y = Tensor::zeros(vec![b, f]);
        for r in 0..b {
            for c in 0..f {
                y.data[r * f + c] =
                    g.data[c] * (xv.data[r * f + c] - running_mean[c]) * inv_std[c] + be.data[c];
            }
        }
        Ok(self.push(
            y,
            true,
            Op::BatchNormEval {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                inv_std,
            },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let y = Tensor::new(xv.shape.clone(), xv.data.iter().map(|&v| v.max(0.0)).collect());
        self.push(y, true, Op::Relu { x: x.0 })
    }

    /// Dueling aggregation: Q[b,a] = V[b] + A[b,a] - mean_a' A[b,a'].
    pub fn dueling(&mut self, value: Var, adv: Var) -> Result<Var, AdError> {
        let vv = &self.nodes[value.0].value;
        let av = &self.nodes[adv.0].value;
        if vv.rows() != av.rows() || vv.cols() != 1 {
            return Err(AdError::ShapeMismatch(format!(
                "dueling expects value Bx1 and adv BxA, got {:?} and {:?}",
                vv.shape, av.shape
            )));
        }
        let (b, a) = (av.rows(), av.cols());
        let mut y = Tensor::zeros(vec![b, a]);
        for r in 0..b {
            let mean: f64 = av.data[r * a..(r + 1) * a].iter().sum::<f64>() / a as f64;
            for c in 0..a {
                y.data[r * a + c] = vv.data[r] + av.data[r * a + c] - mean;
            }
        }
        Ok(self.push(y, true, Op::Dueling { value: value.0, adv: adv.0 }))
    }

    /// Per-row column selection: out[i] = x[i, cols[i]].
    pub fn gather(&mut self, x: Var, cols: Vec<usize>) -> Result<Var, AdError> {
        let xv = &self.nodes[x.0].value;
        let (b, a) = (xv.rows(), xv.cols());
        if cols.len() != b || cols.iter().any(|&c| c >= a) {
            return Err(AdError::ShapeMismatch(format!(
                "gather needs {b} column indices below {a}"
            )));
        }
        let y = Tensor::new(
            vec![b],
            cols.iter().enumerate().map(|(r, &c)| xv.data[r * a + c]).collect(),
        );
        Ok(self.push(y, true, Op::Gather { x: x.0, cols }))
    }

    /// Weighted smooth-L1 (huber, transition at |delta| = 1). `mean = true`
    /// divides the weighted sum by the batch size. Target and weights are
    /// constants: no gradient flows into them.
    pub fn smooth_l1(
        &mut self,
        pred: Var,
        target: Tensor,
        weights: Tensor,
        mean: bool,
    ) -> Result<Var, AdError> {
        let pv = &self.nodes[pred.0].value;
        if !pv.same_shape(&target) || !pv.same_shape(&weights) {
            return Err(AdError::ShapeMismatch(
                "smooth_l1 pred/target/weights shapes must match".into(),
            ));
        }
        if weights.data.iter().any(|&w| w < 0.0) {
            return Err(AdError::ShapeMismatch(
                "smooth_l1 weights must be non-negative".into(),
            ));
        }
        let mut total = 0.0;
        for i in 0..pv.numel() {
            let d = pv.data[i] - target.data[i];
            let h = if d.abs() < 1.0 { 0.5 * d * d } else { d.abs() - 0.5 };
            total += weights.data[i] * h;
        }
        if mean {
            total /= pv.numel() as f64;
        }
        Ok(self.push(
            Tensor::scalar(total),
            true,
            Op::SmoothL1 { pred: pred.0, target, weights, mean },
        ))
    }

    /// Reverse pass from scalar `loss`. May be run at most once per tape.
    pub fn backward(&mut self, loss: Var) -> Result<(), AdError> {
        if self.backward_run {
            return Err(AdError::BackwardTwice);
        }
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.numel() != 1 {
            return Err(AdError::NonScalarLoss(loss_node.value.shape.clone()));
        }
        self.backward_run = true;
        // Intermediate nodes always carry grads; only requires_grad=false
        // leaves opt out.
        for n in self.nodes.iter_mut() {
            if n.grad.is_none() && !matches!(n.op, Op::Leaf) {
                n.grad = Some(Tensor::zeros(n.value.shape.clone()));
            }
        }
        if let Some(g) = self.nodes[loss.0].grad.as_mut() {
            g.data[0] = 1.0;
        }
        for i in (0..=loss.0).rev() {
            let out_grad = match self.nodes[i].grad.as_ref() {
                Some(g) => g.data.clone(),
                None => continue,
            };
            if out_grad.iter().all(|&g| g == 0.0) {
                continue;
            }
            self.backprop_node(i, &out_grad);
        }
        Ok(())
    }

    fn add_grad(&mut self, node: usize, delta: &[f64]) {
        let n = &mut self.nodes[node];
        if !n.requires_grad && matches!(n.op, Op::Leaf) {
            return;
        }
        if n.grad.is_none() {
            n.grad = Some(Tensor::zeros(n.value.shape.clone()));
        }
        let g = n.grad.as_mut().unwrap();
        for (a, b) in g.data.iter_mut().zip(delta) {
            *a += b;
        }
    }

    fn backprop_node(&mut self, i: usize, gy: &[f64]) {
        // Ops are taken apart immutably first, then grads written back.
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (x, w, b) = (*x, *w, *b);
                let xv = self.nodes[x].value.clone();
                let wv = self.nodes[w].value.clone();
                let (gx, gw, gb) = affine_backward(&xv, &wv.data, wv.cols(), gy);
                self.add_grad(x, &gx);
                self.add_grad(w, &gw);
                self.add_grad(b, &gb);
            }
            Op::NoisyAffine {
                x,
                mu_w,
                sigma_w,
                mu_b,
                sigma_b,
                noise_w,
                noise_b,
            } => {
                let (x, mu_w, sigma_w, mu_b, sigma_b) = (*x, *mu_w, *sigma_w, *mu_b, *sigma_b);
                let noise_w = noise_w.data.clone();
                let noise_b = noise_b.data.clone();
                let xv = self.nodes[x].value.clone();
                let muw = self.nodes[mu_w].value.clone();
                let sw = self.nodes[sigma_w].value.clone();
                let out_dim = muw.cols();
                let mut w_eff = muw.data;
                for (k, w) in w_eff.iter_mut().enumerate() {
                    *w += sw.data[k] * noise_w[k];
                }
                let (gx, gw, gb) = affine_backward(&xv, &w_eff, out_dim, gy);
                let gsw: Vec<f64> = gw.iter().zip(&noise_w).map(|(g, n)| g * n).collect();
                let gsb: Vec<f64> = gb.iter().zip(&noise_b).map(|(g, n)| g * n).collect();
                self.add_grad(x, &gx);
                self.add_grad(mu_w, &gw);
                self.add_grad(sigma_w, &gsw);
                self.add_grad(mu_b, &gb);
                self.add_grad(sigma_b, &gsb);
            }
            Op::BatchNormTrain {
                x,
                gamma,
                beta,
                x_hat,
                inv_std,
            } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let x_hat = x_hat.clone();
                let inv_std = inv_std.clone();
                let g = self.nodes[gamma].value.clone();
                let (b, f) = (x_hat.rows(), x_hat.cols());
                let bn = b as f64;
                let mut g_gamma = vec![0.0; f];
                let mut g_beta = vec![0.0; f];
                let mut sum_dxh = vec![0.0; f];
                let mut sum_dxh_xh = vec![0.0; f];
                for r in 0..b {
                    for c in 0..f {
                        let dxh = gy[r * f + c] * g.data[c];
                        g_gamma[c] += gy[r * f + c] * x_hat.data[r * f + c];
                        g_beta[c] += gy[r * f + c];
                        sum_dxh[c] += dxh;
                        sum_dxh_xh[c] += dxh * x_hat.data[r * f + c];
                    }
                }
                let mut gx = vec![0.0; b * f];
                for r in 0..b {
                    for c in 0..f {
                        let dxh = gy[r * f + c] * g.data[c];
                        gx[r * f + c] = inv_std[c] / bn
                            * (bn * dxh - sum_dxh[c] - x_hat.data[r * f + c] * sum_dxh_xh[c]);
                    }
                }
                self.add_grad(x, &gx);
                self.add_grad(gamma, &g_gamma);
                self.add_grad(beta, &g_beta);
            }
            Op::BatchNormEval {
                x,
                gamma,
                beta,
                inv_std,
            } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let inv_std = inv_std.clone();
                let g = self.nodes[gamma].value.clone();
                let xv = self.nodes[x].value.clone();
                let (b, f) = (xv.rows(), xv.cols());
                let mut gx = vec![0.0; b * f];
                let mut g_gamma = vec![0.0; f];
                let mut g_beta = vec![0.0; f];
                // Recover x_hat from the output relation y = g*x_hat + beta.
                let beta_v = self.nodes[beta].value.clone();
                let yv = self.nodes[i].value.clone();
                for r in 0..b {
                    for c in 0..f {
                        gx[r * f + c] = gy[r * f + c] * g.data[c] * inv_std[c];
                        let x_hat = if g.data[c] != 0.0 {
                            (yv.data[r * f + c] - beta_v.data[c]) / g.data[c]
                        } else {
                            0.0
                        };
                        g_gamma[c] += gy[r * f + c] * x_hat;
                        g_beta[c] += gy[r * f + c];
                    }
                }
                self.add_grad(x, &gx);
                self.add_grad(gamma, &g_gamma);
                self.add_grad(beta, &g_beta);
            }
            Op::Relu { x } => {
                let x = *x;
                let xv = &self.nodes[x].value;
                let gx: Vec<f64> = xv
                    .data
                    .iter()
                    .zip(gy)
                    .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                    .collect();
                self.add_grad(x, &gx);
            }
            Op::Dueling { value, adv } => {
                let (value, adv) = (*value, *adv);
                let av = &self.nodes[adv].value;
                let (b, a) = (av.rows(), av.cols());
                let mut gv = vec![0.0; b];
                let mut ga = vec![0.0; b * a];
                for r in 0..b {
                    let row = &gy[r * a..(r + 1) * a];
                    let sum: f64 = row.iter().sum();
                    gv[r] = sum;
                    let mean = sum / a as f64;
                    for c in 0..a {
                        ga[r * a + c] = row[c] - mean;
                    }
                }
                self.add_grad(value, &gv);
                self.add_grad(adv, &ga);
            }
            Op::Gather { x, cols } => {
                let x = *x;
                let cols = cols.clone();
                let a = self.nodes[x].value.cols();
                let mut gx = vec![0.0; self.nodes[x].value.numel()];
                for (r, &c) in cols.iter().enumerate() {
                    gx[r * a + c] += gy[r];
                }
                self.add_grad(x, &gx);
            }
            Op::SmoothL1 {
                pred,
                target,
                weights,
                mean,
            } => {
                let pred = *pred;
                let scale = if *mean {
                    gy[0] / target.numel() as f64
                } else {
                    gy[0]
                };
                let pv = self.nodes[pred].value.clone();
                let gp: Vec<f64> = pv
                    .data
                    .iter()
                    .zip(target.data.iter().zip(&weights.data))
                    .map(|(&p, (&t, &w))| {
                        let d = p - t;
                        let dh = if d.abs() < 1.0 { d } else { d.signum() };
                        scale * w * dh
                    })
                    .collect();
                self.add_grad(pred, &gp);
            }
        }
    }
}

fn check_affine_shapes(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(), AdError> {
    if x.shape.len() != 2 || w.shape.len() != 2 || b.shape.len() != 1 {
        return Err(AdError::ShapeMismatch(format!(
            "affine expects x BxI, W IxO, b O; got {:?}, {:?}, {:?}",
            x.shape, w.shape, b.shape
        )));
    }
    if x.cols() != w.rows() || w.cols() != b.numel() {
        return Err(AdError::ShapeMismatch(format!(
            "affine dims disagree: x {:?}, W {:?}, b {:?}",
            x.shape, w.shape, b.shape
        )));
    }
    Ok(())
}

fn affine_forward(x: &Tensor, w: &[f64], b: &[f64], out_dim: usize) -> Tensor {
    let (rows, in_dim) = (x.rows(), x.cols());
    let mut y = Tensor::zeros(vec![rows, out_dim]);
    for r in 0..rows {
        for k in 0..in_dim {
            let xv = x.data[r * in_dim + k];
            if xv == 0.0 {
                continue;
            }
            let wrow = &w[k * out_dim..(k + 1) * out_dim];
            let yrow = &mut y.data[r * out_dim..(r + 1) * out_dim];
            for (yo, wo) in yrow.iter_mut().zip(wrow) {
                *yo += xv * wo;
            }
        }
        for (yo, bo) in y.data[r * out_dim..(r + 1) * out_dim].iter_mut().zip(b) {
            *yo += bo;
        }
    }
    y
}

/// Returns (grad x, grad W, grad b) for y = xW + b.
fn affine_backward(x: &Tensor, w: &[f64], out_dim: usize, gy: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (rows, in_dim) = (x.rows(), x.cols());
    let mut gx = vec![0.0; rows * in_dim];
    let mut gw = vec![0.0; in_dim * out_dim];
    let mut gb = vec![0.0; out_dim];
    for r in 0..rows {
        let gyr = &gy[r * out_dim..(r + 1) * out_dim];
        for k in 0..in_dim {
            let wrow = &w[k * out_dim..(k + 1) * out_dim];
            let mut acc = 0.0;
            for (g, wv) in gyr.iter().zip(wrow) {
                acc += g * wv;
            }
            gx[r * in_dim + k] = acc;
            let xv = x.data[r * in_dim + k];
            if xv != 0.0 {
                for (gwv, g) in gw[k * out_dim..(k + 1) * out_dim].iter_mut().zip(gyr) {
                    *gwv += xv * g;
                }
            }
        }
        for (gbv, g) in gb.iter_mut().zip(gyr) {
            *gbv += g;
        }
    }
    (gx, gw, gb)
}

/// One learnable tensor with its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape.clone());
        Param {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Adaptive-moment optimizer with bias correction. The L2 coefficient
/// `lambda` is folded into the gradient (`g += lambda * theta`) before the
/// moment update, so the optimizer owns the weight-decay accounting.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lambda: f64,
    pub step_count: u64,
    moments: Vec<(Tensor, Tensor)>,
}

impl AdamState {
    pub fn new(lr: f64, lambda: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lambda,
            step_count: 0,
            moments: Vec::new(),
        }
    }

    /// Apply one update to `params`, whose order must be stable across calls.
    /// `grads_ready` guards against stepping before any backward pass;
    /// gradients are zeroed on return.
    pub fn step(&mut self, params: &mut [&mut Param], grads_ready: bool) -> Result<(), AdError> {
        if !grads_ready {
            return Err(AdError::StepBeforeBackward);
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| {
                    (
                        Tensor::zeros(p.value.shape.clone()),
                        Tensor::zeros(p.value.shape.clone()),
                    )
                })
                .collect();
        }
        assert_eq!(self.moments.len(), params.len(), "parameter list changed size");
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (p, (m, v)) in params.iter_mut().zip(self.moments.iter_mut()) {
            assert_eq!(m.shape, p.value.shape, "moment/parameter shape mismatch");
            for i in 0..p.value.numel() {
                let g = p.grad.data[i] + self.lambda * p.value.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * g;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m.data[i] / bc1;
                let v_hat = v.data[i] / bc2;
                p.value.data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.zero_grad();
        }
        Ok(())
    }
}

pub mod checkpoint {
    //! Flat binary parameter checkpoint: magic, version, tensor count, then
    //! per tensor (name length, name, rank, dims, little-endian f64 data).

    use super::Tensor;
    use std::io::{self, Read, Write};

    pub const MAGIC: &[u8; 4] = b"QCKP";
    pub const VERSION: u32 = 1;

    pub fn write_tensors<W: Write>(
        mut w: W,
        tensors: &[(String, &Tensor)],
    ) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(tensors.len() as u32).to_le_bytes())?;
        for (name, t) in tensors {
            let bytes = name.as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
            w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
            for &d in &t.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &x in &t.data {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_tensors<R: Read>(mut r: R) -> io::Result<Vec<(String, Tensor)>> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let count = read_u32(&mut r)? as usize;
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            out.push((name, Tensor::new(shape, data)));
        }
        Ok(out)
    }

    fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
}
