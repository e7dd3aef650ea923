//! Collocation-trained neural solver for the KKT projection dynamics.
//!
//! A scalar-input MLP `NN(t; w)` defines the trial solution
//!
//! ```text
//! ŷ(t) = y0 + (1 − e^{−t}) NN(t; w)
//! ```
//!
//! which meets the initial condition for every `w`. Training minimizes the
//! mean squared mismatch between `∂ŷ/∂t` and `φ(ŷ)` over a uniform time grid.
//! `∂NN/∂t` is propagated exactly alongside the forward pass, and the
//! parameter gradient is obtained by a hand-written reverse pass through both
//! the value and the tangent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kkt::{kkt_residual, phi_into, projected_multipliers, KktResidual, KktState, LpProblem};
use crate::linalg::{dot, norm_inf};

/// Feed-forward network with `tanh` hidden layers and a linear output layer.
///
/// Parameters live in one flat buffer: for each layer, the weight matrix
/// (row-major, `out × in`) followed by the bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
}

struct LayerView {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
}

/// Per-point forward values and tangents, kept for the reverse pass.
struct Tape {
    /// Layer inputs: `acts[0] = [t]`, then each hidden activation.
    acts: Vec<Vec<f64>>,
    /// `d acts / dt`.
    tans: Vec<Vec<f64>>,
    /// Pre-activation tangents of the hidden layers.
    pre_tans: Vec<Vec<f64>>,
    out: Vec<f64>,
    out_dt: Vec<f64>,
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![0.0; param_count(layer_sizes)],
        })
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn xavier(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut mlp = Self::zeros(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in mlp.layers() {
            let bound = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
            for p in &mut mlp.params[layer.w..layer.b] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(mlp)
    }

    pub fn from_params(layer_sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        Self::check_sizes(layer_sizes)?;
        let expected = param_count(layer_sizes);
        if params.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {expected} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params,
        })
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes[0] != 1 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer sizes must start with 1 and be positive, got {sizes:?}"
            )));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Output weights and bias.
    pub fn output_layer(&self) -> (&[f64], &[f64]) {
        let last = self.layers().pop().expect("at least one layer");
        let end = last.b + last.fan_out;
        (&self.params[last.w..last.b], &self.params[last.b..end])
    }

    fn layers(&self) -> Vec<LayerView> {
        let mut off = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let view = LayerView {
                    fan_in,
                    fan_out,
                    w: off,
                    b: off + fan_in * fan_out,
                };
                off += fan_in * fan_out + fan_out;
                view
            })
            .collect()
    }

    fn tape(&self, t: f64) -> Tape {
        let layers = self.layers();
        let last = layers.len() - 1;
        let mut acts = vec![vec![t]];
        let mut tans = vec![vec![1.0]];
        let mut pre_tans = Vec::new();
        let mut out = Vec::new();
        let mut out_dt = Vec::new();
        for (l, layer) in layers.iter().enumerate() {
            let a_in = &acts[l];
            let d_in = &tans[l];
            let mut h = self.params[layer.b..layer.b + layer.fan_out].to_vec();
            let mut hd = vec![0.0; layer.fan_out];
            for o in 0..layer.fan_out {
                let row =
                    &self.params[layer.w + o * layer.fan_in..layer.w + (o + 1) * layer.fan_in];
                for ((w, a), d) in row.iter().zip(a_in).zip(d_in) {
                    h[o] += w * a;
                    hd[o] += w * d;
                }
            }
            if l == last {
                out = h;
                out_dt = hd;
            } else {
                let a: Vec<f64> = h.iter().map(|v| v.tanh()).collect();
                let ad: Vec<f64> = a.iter().zip(&hd).map(|(a, d)| (1.0 - a * a) * d).collect();
                acts.push(a);
                tans.push(ad);
                pre_tans.push(hd);
            }
        }
        Tape {
            acts,
            tans,
            pre_tans,
            out,
            out_dt,
        }
    }

    /// Accumulates into `grad` the parameter gradient of a scalar whose
    /// gradients with respect to the output and its time derivative are
    /// `g_out` and `g_out_dt`.
    fn backward(&self, tape: &Tape, g_out: &[f64], g_out_dt: &[f64], grad: &mut [f64]) {
        let layers = self.layers();
        let last = layers.len() - 1;
        // gradient w.r.t. the current layer's pre-activation and its tangent
        let mut g_h = g_out.to_vec();
        let mut g_hd = g_out_dt.to_vec();
        for l in (0..=last).rev() {
            let layer = &layers[l];
            let a_in = &tape.acts[l];
            let d_in = &tape.tans[l];
            let mut g_a = vec![0.0; layer.fan_in];
            let mut g_ad = vec![0.0; layer.fan_in];
            for o in 0..layer.fan_out {
                let (gh, ghd) = (g_h[o], g_hd[o]);
                grad[layer.b + o] += gh;
                let base = layer.w + o * layer.fan_in;
                for i in 0..layer.fan_in {
                    grad[base + i] += gh * a_in[i] + ghd * d_in[i];
                    let w = self.params[base + i];
                    g_a[i] += w * gh;
                    g_ad[i] += w * ghd;
                }
            }
            if l == 0 {
                break;
            }
            // a = tanh(h), ȧ = (1 − a²) ḣ
            let a = &tape.acts[l];
            let hd_prev = &tape.pre_tans[l - 1];
            g_h = vec![0.0; layer.fan_in];
            g_hd = vec![0.0; layer.fan_in];
            for i in 0..layer.fan_in {
                let s = 1.0 - a[i] * a[i];
                g_hd[i] = s * g_ad[i];
                let g_s = hd_prev[i] * g_ad[i];
                let g_a_total = g_a[i] - 2.0 * a[i] * g_s;
                g_h[i] = s * g_a_total;
            }
        }
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// `NN(t)`.
pub fn mlp_forward(mlp: &Mlp, t: f64) -> Vec<f64> {
    mlp.tape(t).out
}

/// `(NN(t), dNN/dt)`.
pub fn mlp_forward_dt(mlp: &Mlp, t: f64) -> (Vec<f64>, Vec<f64>) {
    let tape = mlp.tape(t);
    (tape.out, tape.out_dt)
}

fn gate(t: f64) -> (f64, f64) {
    let e = (-t).exp();
    (1.0 - e, e)
}

fn check_output(mlp: &Mlp, y0: &KktState) -> Result<()> {
    if mlp.output_dim() != y0.len() {
        return Err(Error::Dimension(format!(
            "network outputs {} values, state has {}",
            mlp.output_dim(),
            y0.len()
        )));
    }
    Ok(())
}

/// `ŷ(t) = y0 + (1 − e^{−t}) NN(t)`.
pub fn ansatz(mlp: &Mlp, t: f64, y0: &KktState) -> Result<KktState> {
    check_output(mlp, y0)?;
    let (g, _) = gate(t);
    let y: Vec<f64> = y0
        .to_concat()
        .iter()
        .zip(mlp_forward(mlp, t))
        .map(|(a, n)| a + g * n)
        .collect();
    Ok(KktState::from_concat(&y, y0.x.len()))
}

/// `∂ŷ/∂t = e^{−t} NN(t) + (1 − e^{−t}) NN′(t)`.
pub fn ansatz_dt(mlp: &Mlp, t: f64, y0: &KktState) -> Result<KktState> {
    check_output(mlp, y0)?;
    let (g, e) = gate(t);
    let (nn, nn_dt) = mlp_forward_dt(mlp, t);
    let d: Vec<f64> = nn
        .iter()
        .zip(&nn_dt)
        .map(|(n, nd)| e * n + g * nd)
        .collect();
    Ok(KktState::from_concat(&d, y0.x.len()))
}

fn check_problem(mlp: &Mlp, lp: &LpProblem, y0: &KktState, times: &[f64]) -> Result<()> {
    if y0.x.len() != lp.n() || y0.u.len() != lp.m() {
        return Err(Error::Dimension(
            "initial state does not match the LP".into(),
        ));
    }
    check_output(mlp, y0)?;
    if times.is_empty() {
        return Err(Error::InvalidArgument(
            "collocation times must be nonempty".into(),
        ));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidArgument(
            "collocation times must be finite and ≥ 0".into(),
        ));
    }
    Ok(())
}

/// Mean over `times` of the mean squared difference between `∂ŷ/∂t` and `φ(ŷ)`.
pub fn collocation_loss(mlp: &Mlp, lp: &LpProblem, y0: &KktState, times: &[f64]) -> Result<f64> {
    check_problem(mlp, lp, y0, times)?;
    Ok(loss_impl(mlp, lp, y0, times, None))
}

/// Loss and its gradient with respect to the flat parameter vector.
pub fn collocation_loss_grad(
    mlp: &Mlp,
    lp: &LpProblem,
    y0: &KktState,
    times: &[f64],
) -> Result<(f64, Vec<f64>)> {
    check_problem(mlp, lp, y0, times)?;
    let mut grad = vec![0.0; mlp.params.len()];
    let loss = loss_impl(mlp, lp, y0, times, Some(&mut grad));
    Ok((loss, grad))
}

fn loss_impl(
    mlp: &Mlp,
    lp: &LpProblem,
    y0: &KktState,
    times: &[f64],
    mut grad: Option<&mut Vec<f64>>,
) -> f64 {
    let n = lp.n();
    let dim = y0.len();
    let y0c = y0.to_concat();
    let scale = 1.0 / (dim as f64 * times.len() as f64);
    let mut y = vec![0.0; dim];
    let mut field = vec![0.0; dim];
    let mut r = vec![0.0; dim];
    let mut total = 0.0;

    for &t in times {
        let tape = mlp.tape(t);
        let (g, e) = gate(t);
        for i in 0..dim {
            y[i] = y0c[i] + g * tape.out[i];
        }
        phi_into(lp, &y[..n], &y[n..], &mut field);
        let mut sq = 0.0;
        for i in 0..dim {
            r[i] = e * tape.out[i] + g * tape.out_dt[i] - field[i];
            sq += r[i] * r[i];
        }
        total += sq * scale;

        if let Some(grad) = grad.as_deref_mut() {
            let rho: Vec<f64> = r.iter().map(|v| 2.0 * scale * v).collect();
            let jt = phi_vjp(lp, &y[..n], &y[n..], &rho[..n], &rho[n..]);
            let g_out: Vec<f64> = (0..dim).map(|i| e * rho[i] - g * jt[i]).collect();
            let g_out_dt: Vec<f64> = rho.iter().map(|v| g * v).collect();
            mlp.backward(&tape, &g_out, &g_out_dt, grad);
        }
    }
    total
}

/// `J_φ(x, u)ᵀ (rho_x, rho_u)`, using the one-sided derivative 0 of `(·)⁺` at 0.
fn phi_vjp(lp: &LpProblem, x: &[f64], u: &[f64], rho_x: &[f64], rho_u: &[f64]) -> Vec<f64> {
    let (_, active) = projected_multipliers(lp, x, u);
    let a_rho = lp.a().mul_vec(rho_x);
    let q: Vec<f64> = active
        .iter()
        .zip(a_rho.iter().zip(rho_u))
        .map(|(&on, (ar, ru))| if on { ru - ar } else { 0.0 })
        .collect();
    let mut out = lp.a().tr_mul_vec(&q);
    out.extend(q.iter().zip(rho_u).map(|(qj, ru)| qj - ru));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Adam with β = (0.9, 0.999), ε = 1e-8.
    Adam,
    /// Plain full-batch gradient descent.
    Sgd,
    /// Limited-memory BFGS (20 pairs) with a weak Wolfe line search. One
    /// epoch is one quasi-Newton iteration; the learning rate sets the length
    /// of the first step as `lr / ||g||∞`.
    #[default]
    Lbfgs,
}

/// Collocation-training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub t0: f64,
    pub t_end: f64,
    /// Collocation spacing.
    pub dt: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub hidden_sizes: Vec<usize>,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            t0: 0.0,
            t_end: 10.0,
            dt: 0.01,
            epochs: 1000,
            learning_rate: 1e-3,
            seed: 0,
            hidden_sizes: vec![100],
            optimizer: Optimizer::Lbfgs,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.t0.is_finite()
            && self.t0 >= 0.0
            && self.t_end.is_finite()
            && self.t_end > self.t0
            && self.dt.is_finite()
            && self.dt > 0.0
            && self.epochs >= 1
            && self.learning_rate.is_finite()
            && self.learning_rate > 0.0
            && !self.hidden_sizes.contains(&0);
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "invalid training configuration {self:?}"
            )));
        }
        Ok(())
    }

    /// Uniform grid `t0, t0 + dt, ..., t_end`.
    pub fn collocation_times(&self) -> Vec<f64> {
        let steps = ((self.t_end - self.t0) / self.dt).round() as usize;
        (0..=steps)
            .map(|k| (self.t0 + k as f64 * self.dt).min(self.t_end))
            .collect()
    }

    pub fn layer_sizes(&self, output: usize) -> Vec<usize> {
        let mut sizes = vec![1];
        sizes.extend(&self.hidden_sizes);
        sizes.push(output);
        sizes
    }
}

/// Per-epoch training loss, measured before that epoch's update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossHistory(pub Vec<f64>);

impl LossHistory {
    pub fn first(&self) -> f64 {
        self.0[0]
    }

    pub fn last(&self) -> f64 {
        *self.0.last().expect("history has one entry per epoch")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

const LBFGS_MEMORY: usize = 20;

struct Lbfgs {
    memory: usize,
    s: std::collections::VecDeque<Vec<f64>>,
    y: std::collections::VecDeque<Vec<f64>>,
}

impl Lbfgs {
    fn new(memory: usize) -> Self {
        Self {
            memory,
            s: Default::default(),
            y: Default::default(),
        }
    }

    /// Two-loop recursion: approximate inverse Hessian times `grad`.
    fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q = grad.to_vec();
        let k = self.s.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&self.y[i], &self.s[i]);
            alpha[i] = rho * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if let (Some(s), Some(y)) = (self.s.back(), self.y.back()) {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..k {
            let rho = 1.0 / dot(&self.y[i], &self.s[i]);
            let beta = rho * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }

    fn step(
        &mut self,
        params: &mut [f64],
        loss: f64,
        grad: &[f64],
        first_step: f64,
        mut eval: impl FnMut(&[f64], &mut Vec<f64>) -> f64,
    ) {
        let mut dir = self.direction(grad);
        let mut slope = dot(&dir, grad);
        if !(slope < 0.0) {
            self.s.clear();
            self.y.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = -dot(grad, grad);
        }
        let mut step = if self.s.is_empty() {
            first_step / norm_inf(grad).max(1e-300)
        } else {
            1.0
        };
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        let mut trial = params.to_vec();
        let mut new_grad = vec![0.0; grad.len()];
        let mut accepted: Option<(f64, Vec<f64>)> = None;
        // weak Wolfe conditions by bisection/expansion
        for _ in 0..40 {
            for ((t, p), d) in trial.iter_mut().zip(params.iter()).zip(&dir) {
                *t = p + step * d;
            }
            let new_loss = eval(&trial, &mut new_grad);
            if !new_loss.is_finite() || new_loss > loss + 1e-4 * step * slope {
                hi = step;
            } else {
                accepted = Some((step, new_grad.clone()));
                if dot(&dir, &new_grad) < 0.9 * slope {
                    lo = step;
                } else {
                    break;
                }
            }
            step = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * lo
            };
        }
        if let Some((step, new_grad)) = accepted {
            let s: Vec<f64> = dir.iter().map(|d| step * d).collect();
            let y: Vec<f64> = new_grad.iter().zip(grad).map(|(a, b)| a - b).collect();
            if dot(&s, &y) > 1e-12 * dot(&y, &y).max(1e-300) {
                if self.s.len() == self.memory {
                    self.s.pop_front();
                    self.y.pop_front();
                }
                self.s.push_back(s);
                self.y.push_back(y);
            }
            for (p, d) in params.iter_mut().zip(&dir) {
                *p += step * d;
            }
            return;
        }
        // No acceptable step: drop the curvature history and stay put.
        self.s.clear();
        self.y.clear();
    }
}

/// Full-batch training of a freshly initialized network on the collocation grid.
pub fn train(lp: &LpProblem, y0: &KktState, config: &TrainConfig) -> Result<(Mlp, LossHistory)> {
    config.validate()?;
    let mut mlp = Mlp::xavier(&config.layer_sizes(lp.n() + lp.m()), config.seed)?;
    let times = config.collocation_times();
    check_problem(&mlp, lp, y0, &times)?;

    let mut adam = Adam::new(mlp.params.len());
    let mut lbfgs = Lbfgs::new(LBFGS_MEMORY);
    let mlp_sizes = mlp.layer_sizes.clone();
    let mut history = Vec::with_capacity(config.epochs);
    let mut grad = vec![0.0; mlp.params.len()];
    for epoch in 1..=config.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let loss = loss_impl(&mlp, lp, y0, &times, Some(&mut grad));
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.push(loss);
        match config.optimizer {
            Optimizer::Adam => adam.update(&mut mlp.params, &grad, config.learning_rate),
            Optimizer::Lbfgs => {
                lbfgs.step(
                    &mut mlp.params,
                    loss,
                    &grad,
                    config.learning_rate,
                    |p, g| {
                        g.iter_mut().for_each(|v| *v = 0.0);
                        let probe = Mlp {
                            layer_sizes: mlp_sizes.clone(),
                            params: p.to_vec(),
                        };
                        loss_impl(&probe, lp, y0, &times, Some(g))
                    },
                );
            }
            Optimizer::Sgd => {
                for (p, g) in mlp.params.iter_mut().zip(&grad) {
                    *p -= config.learning_rate * g;
                }
            }
        }
    }
    Ok((mlp, LossHistory(history)))
}

/// Result of [`solve_lp_nn`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NnSolution {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub objective: f64,
    pub residuals: KktResidual,
    pub loss_history: LossHistory,
    #[serde(skip)]
    pub mlp: Mlp,
}

/// Trains from the all-zero start and reads the ansatz at `t_end`.
pub fn solve_lp_nn(lp: &LpProblem, config: &TrainConfig) -> Result<NnSolution> {
    solve_lp_nn_from(lp, &KktState::zeros(lp), config)
}

pub fn solve_lp_nn_from(lp: &LpProblem, y0: &KktState, config: &TrainConfig) -> Result<NnSolution> {
    let (mlp, loss_history) = train(lp, y0, config)?;
    let y = ansatz(&mlp, config.t_end, y0)?;
    let residuals = kkt_residual(lp, &y.x, &y.u)?;
    Ok(NnSolution {
        objective: lp.objective(&y.x),
        x: y.x,
        u: y.u,
        residuals,
        loss_history,
        mlp,
    })
}
