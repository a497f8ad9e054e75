//! Feedforward regression network trained with MSE and Nadam.
//!
//! Hidden layers are dense with a shared activation and inverted dropout;
//! the output is a single linear unit. All parameters live in one flat
//! vector (weights row-major `[out][in]`, then biases, then PReLU slopes for
//! each hidden layer), which keeps the optimizer and gradient checks simple.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

pub const WIDTH_CHOICES: [usize; 8] = [16, 32, 48, 64, 80, 96, 112, 128];
pub const TAPER_SIZES: [f64; 2] = [0.2, 0.5];
pub const LEAKY_SLOPE: f64 = 0.3;
pub const PRELU_INIT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Elu,
    LeakyRelu,
    Prelu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 6] = [
        Self::Relu,
        Self::Elu,
        Self::LeakyRelu,
        Self::Prelu,
        Self::Tanh,
        Self::Sigmoid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Relu => "relu",
            Self::Elu => "elu",
            Self::LeakyRelu => "leaky_relu",
            Self::Prelu => "prelu",
            Self::Tanh => "tanh",
            Self::Sigmoid => "sigmoid",
        }
    }

    /// `slope` is only read by PReLU.
    #[inline]
    fn apply(self, z: f64, slope: f64) -> f64 {
        match self {
            Self::Relu => z.max(0.0),
            Self::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Self::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Self::Prelu => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Self::Tanh => z.tanh(),
            Self::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// d act / dz, given the pre-activation `z` and the output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64, slope: f64) -> f64 {
        match self {
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    a + 1.0
                }
            }
            Self::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Self::Prelu => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Self::Tanh => 1.0 - a * a,
            Self::Sigmoid => a * (1.0 - a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub n_layers: usize,
    pub base_width: usize,
    pub taper: bool,
    pub taper_size: f64,
    pub dropout_rate: f64,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without a new best training loss before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            n_layers: 2,
            base_width: 32,
            taper: false,
            taper_size: 0.5,
            dropout_rate: 0.1,
            activation: Activation::Relu,
            learning_rate: 0.001,
            epochs: 200,
            batch_size: 16,
            patience: 20,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn hidden_widths(&self) -> Vec<usize> {
        let mut widths = Vec::with_capacity(self.n_layers);
        let mut w = self.base_width;
        for _ in 0..self.n_layers {
            widths.push(w);
            if self.taper {
                w = ((w as f64 * self.taper_size).ceil() as usize).max(1);
            }
        }
        widths
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: usize,
    pub biases: usize,
    /// Offset of the per-unit PReLU slopes, for PReLU hidden layers.
    pub slopes: Option<usize>,
}

impl LayerShape {
    fn w<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.weights..self.weights + self.n_in * self.n_out]
    }

    fn b<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.biases..self.biases + self.n_out]
    }

    fn s<'a>(&self, p: &'a [f64]) -> Option<&'a [f64]> {
        self.slopes.map(|o| &p[o..o + self.n_out])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetModel {
    pub config: NetConfig,
    pub n_features: usize,
    /// Hidden layers followed by the linear output layer.
    pub layers: Vec<LayerShape>,
    pub params: Vec<f64>,
}

/// Per hidden layer, `batch x width` multipliers: 0 or `1 / (1 - rate)`.
pub type DropoutMasks = Vec<Vec<f64>>;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

struct Forward {
    /// Input to each layer (`acts[0]` is the batch itself).
    acts: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
    /// Activation outputs before dropout.
    post: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl NetModel {
    /// Glorot-uniform weights, zero biases, PReLU slopes at 0.25.
    pub fn build(config: &NetConfig, n_features: usize) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::Config(
                "network needs at least one input feature".into(),
            ));
        }
        let mut dims = vec![n_features];
        dims.extend(config.hidden_widths());
        dims.push(1);
        let n_hidden = dims.len() - 2;

        let mut layers = Vec::with_capacity(dims.len() - 1);
        let mut offset = 0;
        for (l, w) in dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = offset;
            let biases = weights + n_in * n_out;
            offset = biases + n_out;
            let slopes = (l < n_hidden && config.activation == Activation::Prelu).then(|| {
                let s = offset;
                offset += n_out;
                s
            });
            layers.push(LayerShape {
                n_in,
                n_out,
                weights,
                biases,
                slopes,
            });
        }

        let mut rng = seed::derived_rng(config.seed, &[0]);
        let mut params = vec![0.0; offset];
        for layer in &layers {
            let limit = (6.0 / (layer.n_in + layer.n_out) as f64).sqrt();
            for p in &mut params[layer.weights..layer.biases] {
                *p = rng.gen_range(-limit..limit);
            }
            if let Some(s) = layer.slopes {
                params[s..s + layer.n_out].fill(PRELU_INIT);
            }
        }
        Ok(Self {
            config: config.clone(),
            n_features,
            layers,
            params,
        })
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.n_out)
            .collect()
    }

    fn n_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn sample_masks<R: Rng>(&self, batch: usize, rng: &mut R) -> DropoutMasks {
        let rate = self.config.dropout_rate;
        let scale = 1.0 / (1.0 - rate);
        self.layers[..self.n_hidden()]
            .iter()
            .map(|l| {
                (0..batch * l.n_out)
                    .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { scale })
                    .collect()
            })
            .collect()
    }

    fn forward_batch(
        &self,
        params: &[f64],
        x: &[f64],
        batch: usize,
        masks: Option<&DropoutMasks>,
    ) -> Forward {
        let act = self.config.activation;
        let n_hidden = self.n_hidden();
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(n_hidden);
        let mut post = Vec::with_capacity(n_hidden);
        acts.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let (w, b) = (layer.w(params), layer.b(params));
            let input = &acts[l];
            let mut z = vec![0.0; batch * layer.n_out];
            for r in 0..batch {
                let a = &input[r * layer.n_in..(r + 1) * layer.n_in];
                for j in 0..layer.n_out {
                    z[r * layer.n_out + j] =
                        b[j] + dot(a, &w[j * layer.n_in..(j + 1) * layer.n_in]);
                }
            }
            if l == n_hidden {
                return Forward {
                    acts,
                    pre,
                    post,
                    output: z,
                };
            }
            let slopes = layer.s(params);
            let h: Vec<f64> = z
                .iter()
                .enumerate()
                .map(|(i, &zi)| act.apply(zi, slopes.map_or(0.0, |s| s[i % layer.n_out])))
                .collect();
            let next = match masks {
                Some(m) => h.iter().zip(&m[l]).map(|(a, k)| a * k).collect(),
                None => h.clone(),
            };
            pre.push(z);
            post.push(h);
            acts.push(next);
        }
        unreachable!("network always ends with an output layer")
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.n_cols() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: x.n_cols(),
            });
        }
        Ok(())
    }

    /// Single-example forward pass. Train mode samples a dropout mask from `rng`.
    pub fn forward<R: Rng>(&self, x: &[f64], train_mode: bool, rng: &mut R) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let masks = train_mode.then(|| self.sample_masks(1, rng));
        Ok(self
            .forward_batch(&self.params, x, 1, masks.as_ref())
            .output[0])
    }

    /// Eval-mode predictions.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self
            .forward_batch(&self.params, x.as_slice(), x.n_rows(), None)
            .output)
    }

    /// Batch MSE and its exact gradient with respect to every parameter,
    /// holding the given dropout masks fixed.
    pub fn loss_and_grad(
        &self,
        x: &Matrix,
        y: &[f64],
        masks: Option<&DropoutMasks>,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        self.loss_and_grad_with(&self.params, x.as_slice(), x.n_rows(), y, masks)
    }

    /// Same as [`Self::loss_and_grad`] for an arbitrary parameter vector.
    pub fn loss_and_grad_with(
        &self,
        params: &[f64],
        x: &[f64],
        batch: usize,
        y: &[f64],
        masks: Option<&DropoutMasks>,
    ) -> Result<(f64, Vec<f64>)> {
        if batch == 0 {
            return Err(Error::Empty("empty batch".into()));
        }
        if y.len() != batch {
            return Err(Error::Dimension {
                expected: batch,
                got: y.len(),
            });
        }
        let fwd = self.forward_batch(params, x, batch, masks);
        let loss = mse_loss(&fwd.output, y)?;
        let mut grad = vec![0.0; params.len()];
        let mut delta: Vec<f64> = fwd
            .output
            .iter()
            .zip(y)
            .map(|(p, t)| 2.0 * (p - t) / batch as f64)
            .collect();

        let act = self.config.activation;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (n_in, n_out) = (layer.n_in, layer.n_out);
            if l < self.n_hidden() {
                // delta currently holds dL/d(dropped activation); map to dL/dz.
                let slopes = layer.s(params);
                let (z, h) = (&fwd.pre[l], &fwd.post[l]);
                for i in 0..batch * n_out {
                    let mut d = delta[i];
                    if let Some(m) = masks {
                        d *= m[l][i];
                    }
                    let j = i % n_out;
                    if let (Some(s), Some(off)) = (slopes, layer.slopes) {
                        if z[i] <= 0.0 {
                            grad[off + j] += d * z[i];
                        }
                        delta[i] = d * act.derivative(z[i], h[i], s[j]);
                    } else {
                        delta[i] = d * act.derivative(z[i], h[i], 0.0);
                    }
                }
            }
            let input = &fwd.acts[l];
            let w = layer.w(params);
            let mut prev = if l > 0 {
                vec![0.0; batch * n_in]
            } else {
                Vec::new()
            };
            for r in 0..batch {
                let a = &input[r * n_in..(r + 1) * n_in];
                for j in 0..n_out {
                    let d = delta[r * n_out + j];
                    if d == 0.0 {
                        continue;
                    }
                    grad[layer.biases + j] += d;
                    let gw = layer.weights + j * n_in;
                    axpy(d, a, &mut grad[gw..gw + n_in]);
                    if l > 0 {
                        axpy(
                            d,
                            &w[j * n_in..(j + 1) * n_in],
                            &mut prev[r * n_in..(r + 1) * n_in],
                        );
                    }
                }
            }
            delta = prev;
        }
        Ok((loss, grad))
    }
}

pub fn mse_loss(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    if y_hat.len() != y.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Empty("mse of empty vectors".into()));
    }
    Ok(y_hat
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y.len() as f64)
}

/// Nadam optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nadam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Nadam {
    pub fn new(n_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension {
                expected: self.m.len(),
                got: grads.len().min(params.len()),
            });
        }
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let m_corr = 1.0 - b1.powi(t + 1);
        let g_corr = 1.0 - b1.powi(t);
        let v_corr = 1.0 - b2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / m_corr;
            let v_hat = self.v[i] / v_corr;
            params[i] -= lr * (b1 * m_hat + (1.0 - b1) * g / g_corr) / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNet {
    pub model: NetModel,
    /// Mean training loss (with dropout) per completed epoch.
    pub loss_trace: Vec<f64>,
}

/// Mini-batch training with seeded shuffling, dropout and Nadam updates.
/// Stops early once the epoch loss has not improved for `config.patience` epochs.
pub fn train_net(x: &Matrix, y: &[f64], config: &NetConfig) -> Result<TrainedNet> {
    if x.n_rows() == 0 {
        return Err(Error::Empty("no training rows".into()));
    }
    if x.n_rows() != y.len() {
        return Err(Error::Dimension {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut model = NetModel::build(config, x.n_cols())?;
    let mut opt = Nadam::new(model.params.len());
    let mut rng = seed::derived_rng(config.seed, &[1]);
    let n = x.n_rows();
    let d = x.n_cols();
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut xb = Vec::with_capacity(config.batch_size * d);
    let mut yb = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            xb.clear();
            yb.clear();
            for &r in chunk {
                xb.extend_from_slice(x.row(r));
                yb.push(y[r]);
            }
            let masks = model.sample_masks(chunk.len(), &mut rng);
            let (loss, grad) =
                model.loss_and_grad_with(&model.params, &xb, chunk.len(), &yb, Some(&masks))?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            opt.step(&mut model.params, &grad, config.learning_rate)?;
            total += loss * chunk.len() as f64;
        }
        let epoch_loss = total / n as f64;
        trace.push(epoch_loss);
        if epoch_loss < best {
            best = epoch_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    if model.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("network parameters after training".into()));
    }
    Ok(TrainedNet {
        model,
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taper_widths() {
        let cfg = |n_layers, base_width, taper, taper_size| NetConfig {
            n_layers,
            base_width,
            taper,
            taper_size,
            ..NetConfig::default()
        };
        assert_eq!(cfg(2, 16, true, 0.5).hidden_widths(), vec![16, 8]);
        assert_eq!(cfg(3, 32, false, 0.5).hidden_widths(), vec![32, 32, 32]);
        assert_eq!(cfg(1, 16, true, 0.2).hidden_widths(), vec![16]);
        assert_eq!(cfg(5, 16, true, 0.2).hidden_widths(), vec![16, 4, 1, 1, 1]);
        let m = NetModel::build(&cfg(2, 16, true, 0.5), 7).unwrap();
        assert_eq!(m.hidden_widths(), vec![16, 8]);
        assert_eq!(m.params.len(), 7 * 16 + 16 + 16 * 8 + 8 + 8 + 1);
    }

    #[test]
    fn zero_params_give_zero_output() {
        let mut m = NetModel::build(&NetConfig::default(), 3).unwrap();
        m.params.fill(0.0);
        let mut rng = seed::rng(0);
        assert_eq!(m.forward(&[1.0, -2.0, 3.0], false, &mut rng).unwrap(), 0.0);
        assert_eq!(m.forward(&[1.0, -2.0, 3.0], true, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let m = NetModel::build(
            &NetConfig {
                dropout_rate: 0.5,
                ..NetConfig::default()
            },
            4,
        )
        .unwrap();
        let mut rng = seed::rng(0);
        let x = [0.3, -0.1, 2.0, 0.7];
        let a = m.forward(&x, false, &mut rng).unwrap();
        let b = m.forward(&x, false, &mut rng).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            m.forward(&[1.0], false, &mut rng),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn single_relu_path_by_hand() {
        let cfg = NetConfig {
            n_layers: 1,
            base_width: 1,
            ..NetConfig::default()
        };
        let mut m = NetModel::build(&cfg, 1).unwrap();
        // hidden w=2, b=1; output w=0.5, b=-1
        m.params = vec![2.0, 1.0, 0.5, -1.0];
        let mut rng = seed::rng(0);
        assert_eq!(m.forward(&[3.0], false, &mut rng).unwrap(), 0.5 * 7.0 - 1.0);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[1.0, 3.0], &[0.0, 0.0]).unwrap(), 5.0);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gradient_of_single_weight() {
        // one hidden unit with identity-like path: w_h=1,b=0, relu, output w=1,b=0
        // y_hat = w * x for x>0; loss = (w*1 - 0)^2, dL/dw_out = 2 * hidden = 2
        let cfg = NetConfig {
            n_layers: 1,
            base_width: 1,
            ..NetConfig::default()
        };
        let mut m = NetModel::build(&cfg, 1).unwrap();
        m.params = vec![1.0, 0.0, 1.0, 0.0];
        let x = Matrix::new(1, 1, vec![1.0]).unwrap();
        let (loss, g) = m.loss_and_grad(&x, &[0.0], None).unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(g, vec![2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let m = NetModel::build(&NetConfig::default(), 3).unwrap();
        let x = Matrix::new(2, 3, vec![0.1, 0.2, 0.3, -1.0, 0.5, 0.0]).unwrap();
        let y = m.predict(&x).unwrap();
        let (loss, g) = m.loss_and_grad(&x, &y, None).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nadam_zero_gradient_is_noop() {
        let mut p = vec![1.0, -2.0];
        let mut opt = Nadam::new(2);
        opt.step(&mut p, &[0.0, 0.0], 0.01).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(opt.t, 1);
    }

    #[test]
    fn nadam_first_step_matches_transcription() {
        // t=1: m=0.1, v=0.001, m_hat=0.1/(1-0.81)=0.1/0.19, g/(1-0.9)=10,
        // v_hat=1 => update = lr*(0.9*0.1/0.19 + 0.1*10)/(1+1e-8)
        let mut p = vec![0.0];
        let mut opt = Nadam::new(1);
        opt.step(&mut p, &[1.0], 0.001).unwrap();
        let m = 0.1f64;
        let m_hat = m / (1.0 - 0.9f64 * 0.9);
        let g_term = 0.1 * 1.0 / (1.0 - 0.9);
        let v_hat = 0.001f64 / (1.0 - 0.999);
        let expected = -0.001 * (0.9 * m_hat + g_term) / (v_hat.sqrt() + 1e-8);
        assert!((p[0] - expected).abs() <= 1e-12);

        opt.step(&mut p, &[1.0], 0.001).unwrap();
        assert!(p[0].is_finite());
        assert!(opt.v[0] > 0.0);
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let cfg = NetConfig {
            epochs: 0,
            seed: 42,
            ..NetConfig::default()
        };
        let x = Matrix::new(3, 2, vec![0.0, 1.0, 1.0, 0.0, 0.5, 0.5]).unwrap();
        let trained = train_net(&x, &[0.0, 1.0, 0.5], &cfg).unwrap();
        assert_eq!(trained.model, NetModel::build(&cfg, 2).unwrap());
        assert!(trained.loss_trace.is_empty());
    }

    #[test]
    fn training_is_reproducible() {
        let cfg = NetConfig {
            epochs: 5,
            dropout_rate: 0.3,
            seed: 7,
            ..NetConfig::default()
        };
        let mut rng = seed::rng(1);
        let x = Matrix::new(20, 3, (0..60).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let y: Vec<f64> = (0..20).map(|r| x.get(r, 0) - x.get(r, 1)).collect();
        let a = train_net(&x, &y, &cfg).unwrap();
        let b = train_net(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inverted_dropout_preserves_mean() {
        let cfg = NetConfig {
            n_layers: 1,
            base_width: 16,
            dropout_rate: 0.5,
            ..NetConfig::default()
        };
        let m = NetModel::build(&cfg, 1).unwrap();
        let mut rng = seed::rng(3);
        let masks: Vec<f64> = (0..10_000)
            .flat_map(|_| m.sample_masks(1, &mut rng).remove(0))
            .collect();
        let mean = masks.iter().sum::<f64>() / masks.len() as f64;
        assert!((mean - 1.0).abs() <= 0.02, "mean multiplier {mean}");
    }
}
