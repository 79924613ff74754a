//! Dense neural-network substrate: layer forward/backward passes, parameter
//! flattening, Adam, and a finite-difference gradient oracle.
//!
//! Everything here is scalar double precision and is the definitional
//! reference for the batched single-precision engine; gradient checks and
//! oracle tests run against this path.

use crate::error::{Error, Result};

/// Activation applied after a dense layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// `sin(omega * pre)`.
    Sine(f64),
    Relu,
    Identity,
}

/// A dense layer `y = W x + b` with `weights` row-major `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    pub fn new(in_dim: usize, out_dim: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if weights.len() != in_dim * out_dim || biases.len() != out_dim {
            return Err(Error::shape(
                format!("{out_dim}x{in_dim} weights + {out_dim} biases"),
                format!("{} weights + {} biases", weights.len(), biases.len()),
            ));
        }
        Ok(DenseLayer { in_dim, out_dim, weights, biases })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer { in_dim, out_dim, weights: vec![0.0; in_dim * out_dim], biases: vec![0.0; out_dim] }
    }

    /// Number of parameters: `out*in` weights plus `out` biases.
    pub fn param_count(&self) -> usize {
        self.out_dim * self.in_dim + self.out_dim
    }
}

/// `W x + b`.
pub fn dense_forward(layer: &DenseLayer, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != layer.in_dim {
        return Err(Error::shape(format!("input of length {}", layer.in_dim), format!("length {}", input.len())));
    }
    let mut out = layer.biases.clone();
    for o in 0..layer.out_dim {
        let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
        let mut acc = 0.0;
        for (w, x) in row.iter().zip(input) {
            acc += w * x;
        }
        out[o] += acc;
    }
    Ok(out)
}

/// Applies an activation elementwise.
pub fn activation_forward(kind: Activation, pre: &[f64]) -> Vec<f64> {
    match kind {
        Activation::Sine(omega) => pre.iter().map(|&p| (omega * p).sin()).collect(),
        Activation::Relu => pre.iter().map(|&p| p.max(0.0)).collect(),
        Activation::Identity => pre.to_vec(),
    }
}

/// Derivative of the activation at pre-activation `pre`.
/// ReLU uses subgradient 0 at the kink; frozen so gradients are deterministic.
fn activation_deriv(kind: Activation, pre: f64) -> f64 {
    match kind {
        Activation::Sine(omega) => omega * (omega * pre).cos(),
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

/// Shape of one layer inside a flattened parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LayerShape {
    pub fn param_count(&self) -> usize {
        self.out_dim * self.in_dim + self.out_dim
    }
}

/// Total parameter count over a shape list.
pub fn param_count(shapes: &[LayerShape]) -> usize {
    shapes.iter().map(LayerShape::param_count).sum()
}

/// Flat parameter storage. Layout frozen as
/// `(layer 0 weights row-major, layer 0 biases, layer 1 weights, ...)`;
/// Adam state indexes this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub shapes: Vec<LayerShape>,
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(shapes: Vec<LayerShape>) -> Self {
        let n = param_count(&shapes);
        ParamVector { shapes, values: vec![0.0; n] }
    }

    pub fn from_layers(layers: &[DenseLayer]) -> Self {
        let shapes: Vec<LayerShape> =
            layers.iter().map(|l| LayerShape { in_dim: l.in_dim, out_dim: l.out_dim }).collect();
        let mut values = Vec::with_capacity(param_count(&shapes));
        for l in layers {
            values.extend_from_slice(&l.weights);
            values.extend_from_slice(&l.biases);
        }
        ParamVector { shapes, values }
    }

    /// Inverse of [`ParamVector::from_layers`]; bit-exact round-trip.
    pub fn to_layers(&self) -> Result<Vec<DenseLayer>> {
        let need = param_count(&self.shapes);
        if self.values.len() != need {
            return Err(Error::shape(format!("{need} values"), format!("{} values", self.values.len())));
        }
        let mut layers = Vec::with_capacity(self.shapes.len());
        let mut off = 0;
        for s in &self.shapes {
            let nw = s.out_dim * s.in_dim;
            let weights = self.values[off..off + nw].to_vec();
            off += nw;
            let biases = self.values[off..off + s.out_dim].to_vec();
            off += s.out_dim;
            layers.push(DenseLayer { in_dim: s.in_dim, out_dim: s.out_dim, weights, biases });
        }
        Ok(layers)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Forward pass through `(layer, activation)` pairs.
pub fn network_forward(layers: &[(DenseLayer, Activation)], input: &[f64]) -> Result<Vec<f64>> {
    let mut x = input.to_vec();
    for (layer, act) in layers {
        let pre = dense_forward(layer, &x)?;
        x = activation_forward(*act, &pre);
    }
    Ok(x)
}

/// Exact reverse-mode gradients of `<upstream, output>` with respect to every
/// parameter and the input.
pub fn network_backward(
    layers: &[(DenseLayer, Activation)],
    input: &[f64],
    upstream: &[f64],
) -> Result<(ParamVector, Vec<f64>)> {
    // Forward, keeping inputs and pre-activations of every layer.
    let mut xs: Vec<Vec<f64>> = vec![input.to_vec()];
    let mut pres: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    for (layer, act) in layers {
        let pre = dense_forward(layer, xs.last().unwrap())?;
        xs.push(activation_forward(*act, &pre));
        pres.push(pre);
    }
    let out_dim = layers.last().map_or(input.len(), |(l, _)| l.out_dim);
    if upstream.len() != out_dim {
        return Err(Error::shape(format!("upstream of length {out_dim}"), format!("length {}", upstream.len())));
    }

    let shapes: Vec<LayerShape> =
        layers.iter().map(|(l, _)| LayerShape { in_dim: l.in_dim, out_dim: l.out_dim }).collect();
    let mut grads = ParamVector::zeros(shapes);
    // Per-layer value offsets into the frozen layout.
    let mut offsets = Vec::with_capacity(layers.len());
    let mut off = 0;
    for (l, _) in layers {
        offsets.push(off);
        off += l.param_count();
    }

    let mut d_out = upstream.to_vec();
    for (idx, (layer, act)) in layers.iter().enumerate().rev() {
        let pre = &pres[idx];
        let x = &xs[idx];
        let d_pre: Vec<f64> =
            d_out.iter().zip(pre).map(|(&d, &p)| d * activation_deriv(*act, p)).collect();
        let base = offsets[idx];
        let nw = layer.out_dim * layer.in_dim;
        for o in 0..layer.out_dim {
            let g = d_pre[o];
            let row = &mut grads.values[base + o * layer.in_dim..base + (o + 1) * layer.in_dim];
            for (gw, xi) in row.iter_mut().zip(x) {
                *gw += g * xi;
            }
        }
        for o in 0..layer.out_dim {
            grads.values[base + nw + o] = d_pre[o];
        }
        let mut d_in = vec![0.0; layer.in_dim];
        for o in 0..layer.out_dim {
            let g = d_pre[o];
            let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (di, w) in d_in.iter_mut().zip(row) {
                *di += g * w;
            }
        }
        d_out = d_in;
    }
    Ok((grads, d_out))
}

/// Bias-corrected Adam state over one flat parameter layout.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub lr: f64,
    pub eps: f64,
}

/// Conventional default; only the betas are externally pinned.
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64) -> Self {
        AdamState { step: 0, m: vec![0.0; n], v: vec![0.0; n], beta1, beta2, lr, eps: ADAM_EPS }
    }
}

/// One bias-corrected Adam update; mutates `params` and `state` in place.
/// Non-finite gradient entries are a hard error naming the offending index.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(Error::shape(
            format!("{} params and grads", state.m.len()),
            format!("{} params, {} grads", params.len(), grads.len()),
        ));
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite { index, value: grads[index] });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let mh = state.m[i] / bc1;
        let vh = state.v[i] / bc2;
        params[i] -= state.lr * mh / (vh.sqrt() + state.eps);
    }
    Ok(())
}

/// Central finite differences `(f(p+h e_i) - f(p-h e_i)) / 2h` per coordinate.
/// The verification oracle for every analytic gradient in the crate.
pub fn finite_diff_grad<F>(mut f: F, params: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "step size must be positive");
    let mut p = params.to_vec();
    let mut g = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = p[i];
        p[i] = orig + h;
        let fp = f(&p);
        p[i] = orig - h;
        let fm = f(&p);
        p[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite { index: i, value: if fp.is_finite() { fm } else { fp } });
        }
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Loss applied to per-sample flow residuals during fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Mean squared residual norm; smooth everywhere. Default.
    #[default]
    Squared,
    /// Mean `sqrt(|r|^2 + eps)` with `eps = 1e-8`; smooth surrogate for the
    /// unsquared norm.
    Norm,
}

/// Smoothing constant for [`LossMode::Norm`].
pub const NORM_LOSS_EPS: f64 = 1e-8;

/// Optimizer settings shared by every fitting entry point.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitSettings {
    pub iterations: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub loss_mode: LossMode,
    /// Pixels sampled per iteration; `None` means the full grid.
    pub batch_pixels: Option<usize>,
}

impl Default for FitSettings {
    /// Desk-scale preset: lr 1e-4, 2,000 iterations, full-grid batches.
    fn default() -> Self {
        FitSettings {
            iterations: 2000,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
            loss_mode: LossMode::Squared,
            batch_pixels: None,
        }
    }
}

impl FitSettings {
    /// Production preset: lr 1e-6, 10K iterations, full grid.
    pub fn production() -> Self {
        FitSettings { iterations: 10_000, lr: 1e-6, batch_pixels: None, ..FitSettings::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidConfig(format!("lr must be > 0, got {}", self.lr)));
        }
        if let Some(0) = self.batch_pixels {
            return Err(Error::InvalidConfig("batch_pixels must be >= 1 when set".into()));
        }
        Ok(())
    }
}
