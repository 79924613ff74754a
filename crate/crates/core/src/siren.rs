//! The coordinate network: spatial coordinates (optionally plus time) to a
//! normalized 2D flow vector, with sine activations throughout and an
//! identity output layer.

use crate::blobio::{self, Reader};
use crate::error::{Error, Result};
use crate::nn::{
    param_count, Activation, DenseLayer, FitSettings, LayerShape, ParamVector,
};
use crate::util::{stream_rng, streams};
use rand::Rng;

/// Architecture of the coordinate network.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SirenConfig {
    pub hidden_layers: usize,
    pub width: usize,
    pub omega: f64,
    pub input_dims: usize,
    pub output_dims: usize,
}

impl Default for SirenConfig {
    fn default() -> Self {
        SirenConfig { hidden_layers: 5, width: 128, omega: 10.0, input_dims: 2, output_dims: 2 }
    }
}

impl SirenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers < 1 {
            return Err(Error::InvalidConfig("hidden_layers must be >= 1".into()));
        }
        if self.width < 1 {
            return Err(Error::InvalidConfig("width must be >= 1".into()));
        }
        if !(self.omega > 0.0) {
            return Err(Error::InvalidConfig(format!("omega must be > 0, got {}", self.omega)));
        }
        if !matches!(self.input_dims, 2 | 3) {
            return Err(Error::InvalidConfig(format!("input_dims must be 2 or 3, got {}", self.input_dims)));
        }
        if self.output_dims != 2 {
            return Err(Error::InvalidConfig(format!("output_dims must be 2, got {}", self.output_dims)));
        }
        Ok(())
    }

    /// Dense-layer shapes: input -> width, (hidden-1) x width -> width, width -> output.
    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        let mut shapes = vec![LayerShape { in_dim: self.input_dims, out_dim: self.width }];
        for _ in 1..self.hidden_layers {
            shapes.push(LayerShape { in_dim: self.width, out_dim: self.width });
        }
        shapes.push(LayerShape { in_dim: self.width, out_dim: self.output_dims });
        shapes
    }

    /// Sine on every layer except the identity output layer.
    pub fn activations(&self) -> Vec<Activation> {
        let mut acts = vec![Activation::Sine(self.omega); self.hidden_layers];
        acts.push(Activation::Identity);
        acts
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.layer_shapes())
    }
}

/// Parameters of one coordinate network in the frozen flat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SirenParams {
    pub config: SirenConfig,
    pub params: ParamVector,
}

impl SirenParams {
    /// Structured `(layer, activation)` view of the flat parameters.
    pub fn to_layers(&self) -> Vec<(DenseLayer, Activation)> {
        // Infallible: shapes are produced from the config alongside values.
        self.params
            .to_layers()
            .expect("SirenParams layout is shape-consistent by construction")
            .into_iter()
            .zip(self.config.activations())
            .collect()
    }
}

/// Uniform init: first layer in `[-1/in, 1/in]`, later layers in
/// `[-sqrt(6/in)/omega, sqrt(6/in)/omega]`, biases zero. Deterministic per seed.
pub fn siren_init(config: &SirenConfig, seed: u64) -> Result<SirenParams> {
    config.validate()?;
    let mut rng = stream_rng(seed, streams::INIT);
    Ok(siren_init_with_rng(config, &mut rng))
}

/// Init using a caller-provided RNG stream; the hypernetwork draws per-layer
/// bias seeds through this.
pub(crate) fn siren_init_with_rng(config: &SirenConfig, rng: &mut impl Rng) -> SirenParams {
    let shapes = config.layer_shapes();
    let mut values = Vec::with_capacity(param_count(&shapes));
    for (i, s) in shapes.iter().enumerate() {
        let bound = layer_init_bound(config, i, s.in_dim);
        for _ in 0..s.out_dim * s.in_dim {
            values.push(rng.random_range(-bound..bound));
        }
        values.extend(std::iter::repeat(0.0).take(s.out_dim));
    }
    SirenParams { config: *config, params: ParamVector { shapes, values } }
}

/// Init bound for one layer: `1/in` for the first, `sqrt(6/in)/omega` after.
pub(crate) fn layer_init_bound(config: &SirenConfig, layer_idx: usize, in_dim: usize) -> f64 {
    if layer_idx == 0 {
        1.0 / in_dim as f64
    } else {
        (6.0 / in_dim as f64).sqrt() / config.omega
    }
}

/// Evaluates the network at one coordinate. Coordinates are expected in the
/// normalized `[-1, 1]` range spatially; time is fed raw.
pub fn siren_forward(params: &SirenParams, coords: &[f64]) -> Result<[f64; 2]> {
    if coords.len() != params.config.input_dims {
        return Err(Error::shape(
            format!("{} coordinates", params.config.input_dims),
            format!("{}", coords.len()),
        ));
    }
    let layers = params.to_layers();
    let out = crate::nn::network_forward(&layers, coords)?;
    Ok([out[0], out[1]])
}

/// Fits a network to `(coordinate, flow)` samples by minimizing the mean
/// residual loss with Adam. `coords` is row-major `N x input_dims`, `flows`
/// row-major `N x 2`. Returns the parameters and the final full-set loss.
pub fn siren_fit(
    coords: &[f64],
    flows: &[f64],
    config: &SirenConfig,
    settings: &FitSettings,
) -> Result<(SirenParams, f64)> {
    siren_fit_history(coords, flows, config, settings).map(|(p, l, _)| (p, l))
}

/// Same as [`siren_fit`] but also returns the per-iteration minibatch losses,
/// one entry per optimizer step, for convergence monitoring.
pub fn siren_fit_history(
    coords: &[f64],
    flows: &[f64],
    config: &SirenConfig,
    settings: &FitSettings,
) -> Result<(SirenParams, f64, Vec<f64>)> {
    config.validate()?;
    settings.validate()?;
    let d = config.input_dims;
    if coords.is_empty() || coords.len() % d != 0 || flows.len() / 2 != coords.len() / d {
        return Err(Error::shape(
            format!("N x {d} coords and N x 2 flows"),
            format!("{} coords, {} flows", coords.len(), flows.len()),
        ));
    }
    let init = siren_init(config, settings.seed)?;
    crate::engine::fit_siren(init, coords, flows, settings)
}

const SIREN_MAGIC: &[u8; 4] = b"IFSN";
const SIREN_VERSION: u32 = 1;

impl SirenParams {
    /// Serializes to the versioned blob: magic "IFSN", version, config header,
    /// little-endian float64 parameter vector in the frozen layout.
    pub fn write_blob(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SIREN_MAGIC);
        blobio::put_u32(&mut out, SIREN_VERSION);
        write_params_body(&mut out, self);
        out
    }

    pub fn read_blob(bytes: &[u8]) -> Result<SirenParams> {
        let mut r = Reader::new(bytes);
        r.magic(SIREN_MAGIC)?;
        let version = r.u32()?;
        if version != SIREN_VERSION {
            return Err(Error::InvalidField {
                field: "version".into(),
                reason: format!("unsupported blob version {version}"),
            });
        }
        read_params_body(&mut r)
    }
}

pub(crate) fn write_config(out: &mut Vec<u8>, c: &SirenConfig) {
    blobio::put_u32(out, c.hidden_layers as u32);
    blobio::put_u32(out, c.width as u32);
    blobio::put_u32(out, c.input_dims as u32);
    blobio::put_u32(out, c.output_dims as u32);
    blobio::put_f64(out, c.omega);
}

pub(crate) fn read_config(r: &mut Reader) -> Result<SirenConfig> {
    let c = SirenConfig {
        hidden_layers: r.u32()? as usize,
        width: r.u32()? as usize,
        input_dims: r.u32()? as usize,
        output_dims: r.u32()? as usize,
        omega: r.f64()?,
    };
    c.validate()?;
    Ok(c)
}

/// Config header plus counted parameter vector; shared with the scene blob.
pub(crate) fn write_params_body(out: &mut Vec<u8>, p: &SirenParams) {
    write_config(out, &p.config);
    blobio::put_u64(out, p.params.values.len() as u64);
    blobio::put_f64_slice(out, &p.params.values);
}

/// Counterpart of [`write_params_body`].
pub(crate) fn read_params_body(r: &mut Reader) -> Result<SirenParams> {
    let config = read_config(r)?;
    let n = r.u64()? as usize;
    if n != config.param_count() {
        return Err(Error::InvalidField {
            field: "param_count".into(),
            reason: format!("{} does not match config ({})", n, config.param_count()),
        });
    }
    let values = r.f64_vec(n)?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i, value: values[i] });
    }
    Ok(SirenParams { config, params: ParamVector { shapes: config.layer_shapes(), values } })
}
