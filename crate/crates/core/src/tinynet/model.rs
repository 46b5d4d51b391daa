use rand::{Rng, RngCore};

use super::loss::sigmoid;
use super::optim::Adam;
use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: [usize; 3] = [256, 1024, 256];
pub const DEFAULT_DROPOUT: f32 = 0.3;

/// Forward-pass mode. Training applies inverted dropout to hidden
/// activations using the supplied generator.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

/// Fully-connected network: rectifier on hidden layers, sigmoid output.
/// Layer `l` maps `dims[l]` to `dims[l + 1]`; its weights are stored
/// `[out × in]` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    dims: Vec<usize>,
    weights: Vec<Vec<f32>>,
    biases: Vec<Vec<f32>>,
    dropout: f32,
}

/// Parameter-shaped buffers, used for gradients and optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f32>>,
    pub biases: Vec<Vec<f32>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).flatten().all(|v| v.is_finite())
    }
}

fn check_dims(dims: &[usize], dropout: f32) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::Config("a model needs at least one layer".into()));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::Config(format!("zero-width layer in {dims:?}")));
    }
    if *dims.last().unwrap() != 1 {
        return Err(Error::Config(format!("output width must be 1, got {dims:?}")));
    }
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::Config(format!("dropout rate {dropout} outside [0, 1)")));
    }
    Ok(())
}

/// `c[m × n] += a[m × k] · b[k × n]` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    c: &mut [f32],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: every index touched lies within the slices given the strides
    // and shapes asserted by the callers.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Activations kept from a forward pass for backpropagation.
struct Trace {
    /// Input to each layer (`acts[0]` is the batch itself).
    acts: Vec<Vec<f32>>,
    /// d(hidden output)/d(pre-activation): 0 where the rectifier or dropout
    /// zeroed the unit, the dropout scale otherwise.
    derivs: Vec<Vec<f32>>,
    probs: Vec<f32>,
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], dropout: f32, rng: &mut R) -> Result<Self> {
        check_dims(dims, dropout)?;
        let weights = dims
            .windows(2)
            .map(|d| {
                let limit = (6.0 / (d[0] + d[1]) as f64).sqrt() as f32;
                (0..d[0] * d[1]).map(|_| rng.random_range(-limit..=limit)).collect()
            })
            .collect();
        let biases = dims[1..].iter().map(|&d| vec![0.0; d]).collect();
        Ok(MlpModel {
            dims: dims.to_vec(),
            weights,
            biases,
            dropout,
        })
    }

    /// Default architecture for `input_dim` features.
    pub fn with_default_hidden<R: Rng + ?Sized>(input_dim: usize, rng: &mut R) -> Result<Self> {
        let mut dims = vec![input_dim];
        dims.extend(DEFAULT_HIDDEN);
        dims.push(1);
        Self::new(&dims, DEFAULT_DROPOUT, rng)
    }

    pub fn zeros(dims: &[usize], dropout: f32) -> Result<Self> {
        check_dims(dims, dropout)?;
        Ok(MlpModel {
            dims: dims.to_vec(),
            weights: dims.windows(2).map(|d| vec![0.0; d[0] * d[1]]).collect(),
            biases: dims[1..].iter().map(|&d| vec![0.0; d]).collect(),
            dropout,
        })
    }

    pub fn from_parts(
        dims: &[usize],
        weights: Vec<Vec<f32>>,
        biases: Vec<Vec<f32>>,
        dropout: f32,
    ) -> Result<Self> {
        check_dims(dims, dropout)?;
        let layers = dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::Config(format!(
                "{} weight and {} bias blocks for {layers} layers",
                weights.len(),
                biases.len()
            )));
        }
        for (l, d) in dims.windows(2).enumerate() {
            if weights[l].len() != d[0] * d[1] || biases[l].len() != d[1] {
                return Err(Error::Config(format!("layer {l} parameter shape mismatch")));
            }
        }
        let model = MlpModel {
            dims: dims.to_vec(),
            weights,
            biases,
            dropout,
        };
        if !model.is_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(model)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn layer_count(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn dropout_rate(&self) -> f32 {
        self.dropout
    }

    pub fn parameter_count(&self) -> usize {
        self.dims.windows(2).map(|d| d[0] * d[1] + d[1]).sum()
    }

    pub fn weights(&self, layer: usize) -> &[f32] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f32] {
        &self.biases[layer]
    }

    pub fn layer_mut(&mut self, layer: usize) -> (&mut [f32], &mut [f32]) {
        (&mut self.weights[layer], &mut self.biases[layer])
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).flatten().all(|v| v.is_finite())
    }

    fn check_batch(&self, x: &[f32], batch: usize) -> Result<()> {
        if x.len() != batch * self.dims[0] {
            return Err(Error::Dimension(format!(
                "{} inputs for a batch of {batch} × {}",
                x.len(),
                self.dims[0]
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model input".into()));
        }
        Ok(())
    }

    fn run(&self, x: &[f32], batch: usize, mut mode: Mode<'_>, keep: bool) -> Trace {
        let layers = self.layer_count();
        let scale = 1.0 / (1.0 - self.dropout);
        let mut acts = Vec::with_capacity(if keep { layers } else { 0 });
        let mut derivs = Vec::new();
        let mut input = x.to_vec();
        for l in 0..layers {
            let (din, dout) = (self.dims[l], self.dims[l + 1]);
            let mut z: Vec<f32> = self.biases[l].iter().copied().cycle().take(batch * dout).collect();
            gemm(batch, din, dout, &input, (din, 1), &self.weights[l], (1, din), &mut z);
            if l + 1 < layers {
                let mut d = if keep { vec![0.0; z.len()] } else { Vec::new() };
                for (i, v) in z.iter_mut().enumerate() {
                    let mut g = if *v > 0.0 { 1.0 } else { 0.0 };
                    if let Mode::Train(rng) = &mut mode {
                        if self.dropout > 0.0 {
                            g = if rng.random::<f32>() < self.dropout { 0.0 } else { g * scale };
                        }
                    }
                    *v *= g;
                    if keep {
                        d[i] = g;
                    }
                }
                if keep {
                    derivs.push(d);
                }
            }
            if keep {
                acts.push(std::mem::replace(&mut input, z));
            } else {
                input = z;
            }
        }
        let probs = input.into_iter().map(sigmoid).collect();
        Trace { acts, derivs, probs }
    }

    /// Merge probabilities for a row-major `batch × input_dim` matrix.
    pub fn forward(&self, x: &[f32], batch: usize, mode: Mode<'_>) -> Result<Vec<f32>> {
        self.check_batch(x, batch)?;
        Ok(self.run(x, batch, mode, false).probs)
    }

    /// Eval-mode probabilities.
    pub fn predict(&self, x: &[f32], batch: usize) -> Result<Vec<f32>> {
        self.forward(x, batch, Mode::Eval)
    }

    /// Mean BCE loss over the batch and the gradient of every parameter.
    /// The sigmoid and the loss are differentiated jointly (`p − y` at the
    /// logit); probabilities are clamped for the loss value only.
    pub fn loss_and_gradients(
        &self,
        x: &[f32],
        y: &[f32],
        batch: usize,
        mode: Mode<'_>,
    ) -> Result<(f32, Gradients)> {
        self.check_batch(x, batch)?;
        if y.len() != batch {
            return Err(Error::Dimension(format!("{} labels for a batch of {batch}", y.len())));
        }
        let trace = self.run(x, batch, mode, true);
        let eps = super::loss::BCE_EPSILON as f32;
        let loss = trace
            .probs
            .iter()
            .zip(y)
            .map(|(&p, &y)| {
                let q = p.clamp(eps, 1.0 - eps) as f64;
                -(y as f64 * q.ln() + (1.0 - y as f64) * (1.0 - q).ln())
            })
            .sum::<f64>()
            / batch as f64;

        let inv = 1.0 / batch as f32;
        let mut delta: Vec<f32> = trace.probs.iter().zip(y).map(|(&p, &y)| (p - y) * inv).collect();
        let mut grads = Gradients::zeros_like(self);
        for l in (0..self.layer_count()).rev() {
            let (din, dout) = (self.dims[l], self.dims[l + 1]);
            let a = &trace.acts[l];
            gemm(dout, batch, din, &delta, (1, dout), a, (din, 1), &mut grads.weights[l]);
            for row in delta.chunks_exact(dout) {
                for (g, &d) in grads.biases[l].iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; batch * din];
                gemm(batch, dout, din, &delta, (dout, 1), &self.weights[l], (din, 1), &mut prev);
                for (p, &g) in prev.iter_mut().zip(&trace.derivs[l - 1]) {
                    *p *= g;
                }
                delta = prev;
            }
        }
        Ok((loss as f32, grads))
    }
}

/// One training step: dropout forward, backpropagation, Adam update.
/// Returns the batch loss before the update.
pub fn backward_and_step(
    model: &mut MlpModel,
    x: &[f32],
    y: &[f32],
    batch: usize,
    optimizer: &mut Adam,
    lr: f32,
    rng: &mut dyn RngCore,
) -> Result<f32> {
    let (loss, grads) = model.loss_and_gradients(x, y, batch, Mode::Train(rng))?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss at step {}", optimizer.steps() + 1)));
    }
    optimizer.step(model, &grads, lr)?;
    Ok(loss)
}
