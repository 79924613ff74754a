//! The hypernetwork: one small MLP per coordinate-network layer, each mapping
//! the scalar time coordinate to that layer's flattened weights and biases.

use crate::blobio::{self, Reader};
use crate::error::{Error, Result};
use crate::nn::{param_count, LayerShape, ParamVector};
use crate::siren::{self, SirenConfig, SirenParams};
use crate::util::{stream_rng, streams};
use rand::Rng;

/// Hypernetwork shape and the two encoded time coordinates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct HyperConfig {
    pub hidden_width: usize,
    pub t0: f64,
    pub t1: f64,
}

impl Default for HyperConfig {
    fn default() -> Self {
        HyperConfig { hidden_width: 128, t0: 0.0, t1: 0.1 }
    }
}

impl HyperConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width < 1 {
            return Err(Error::InvalidConfig("hidden_width must be >= 1".into()));
        }
        if self.t0 == self.t1 {
            return Err(Error::DegenerateInterval { t: self.t0 });
        }
        if !self.t0.is_finite() || !self.t1.is_finite() {
            return Err(Error::InvalidConfig("t0, t1 must be finite".into()));
        }
        Ok(())
    }
}

/// Parameters of every per-layer hyper-MLP, flattened in the frozen layout
/// `(MLP 0 first-layer W, b, MLP 0 second-layer W, b, MLP 1 ...)` where MLP i
/// feeds coordinate-network layer i.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub config: HyperConfig,
    pub siren_config: SirenConfig,
    pub params: ParamVector,
}

/// Hyper-MLP shapes: for each target layer with `n` parameters, a `1 -> width`
/// layer (ReLU) and a `width -> n` layer (identity).
pub fn hyper_shapes(siren_config: &SirenConfig, hidden_width: usize) -> Vec<LayerShape> {
    let mut shapes = Vec::new();
    for s in siren_config.layer_shapes() {
        shapes.push(LayerShape { in_dim: 1, out_dim: hidden_width });
        shapes.push(LayerShape { in_dim: hidden_width, out_dim: s.param_count() });
    }
    shapes
}

/// Total hypernetwork parameter count.
pub fn hyper_param_count(siren_config: &SirenConfig, hidden_width: usize) -> usize {
    param_count(&hyper_shapes(siren_config, hidden_width))
}

/// Initializes the hypernetwork so that `f_phi(t)` at init approximates a
/// standard coordinate-network init plus a small t-dependent perturbation:
/// second-layer weights uniform in `[-1e-2/width, 1e-2/width]`, second-layer
/// biases a fresh coordinate-network draw for that layer, first layer uniform
/// in `[-1, 1]`. Nonzero first-layer biases keep every ReLU off its kink at
/// the encoded times, which analytic-vs-numeric gradient checks require.
pub fn hyper_init(config: &HyperConfig, siren_config: &SirenConfig, seed: u64) -> Result<HyperParams> {
    config.validate()?;
    siren_config.validate()?;
    let mut rng = stream_rng(seed, streams::INIT);
    let width = config.hidden_width;
    let shapes = hyper_shapes(siren_config, width);
    let mut values = Vec::with_capacity(param_count(&shapes));
    let out_bound = 1e-2 / width as f64;
    for (idx, s) in siren_config.layer_shapes().iter().enumerate() {
        // First hyper layer: W1 (width x 1), b1 (width).
        for _ in 0..2 * width {
            values.push(rng.random_range(-1.0..1.0));
        }
        // Second hyper layer weights: (n x width), small.
        for _ in 0..s.param_count() * width {
            values.push(rng.random_range(-out_bound..out_bound));
        }
        // Second hyper layer biases: a fresh draw of this coordinate-network
        // layer, in its own flat order (weights then zero biases).
        let wb = siren::layer_init_bound(siren_config, idx, s.in_dim);
        for _ in 0..s.out_dim * s.in_dim {
            values.push(rng.random_range(-wb..wb));
        }
        values.extend(std::iter::repeat(0.0).take(s.out_dim));
    }
    Ok(HyperParams { config: *config, siren_config: *siren_config, params: ParamVector { shapes, values } })
}

impl HyperParams {
    /// Offset of MLP `i`'s block in the flat layout, given target layer
    /// parameter counts.
    #[cfg(test)]
    fn mlp_offsets(&self) -> Vec<usize> {
        let width = self.config.hidden_width;
        let mut offs = Vec::new();
        let mut off = 0;
        for s in self.siren_config.layer_shapes() {
            offs.push(off);
            off += 2 * width + s.param_count() * (width + 1);
        }
        offs
    }
}

/// Evaluates every hyper-MLP at `t` and assembles the coordinate-network
/// parameters: per layer, `theta_l = W2 relu(W1 t + b1) + b2`.
pub fn hyper_forward(phi: &HyperParams, t: f64) -> Result<SirenParams> {
    if !t.is_finite() {
        return Err(Error::NonFinite { index: 0, value: t });
    }
    let width = phi.config.hidden_width;
    let vals = &phi.params.values;
    let mut theta = Vec::with_capacity(phi.siren_config.param_count());
    let mut off = 0;
    for s in phi.siren_config.layer_shapes() {
        let n = s.param_count();
        let w1 = &vals[off..off + width];
        let b1 = &vals[off + width..off + 2 * width];
        let w2 = &vals[off + 2 * width..off + 2 * width + n * width];
        let b2 = &vals[off + 2 * width + n * width..off + 2 * width + n * (width + 1)];
        off += 2 * width + n * (width + 1);

        let h: Vec<f64> = (0..width).map(|j| (w1[j] * t + b1[j]).max(0.0)).collect();
        for r in 0..n {
            let row = &w2[r * width..(r + 1) * width];
            let mut acc = b2[r];
            for (w, hj) in row.iter().zip(&h) {
                acc += w * hj;
            }
            theta.push(acc);
        }
    }
    Ok(SirenParams {
        config: phi.siren_config,
        params: ParamVector { shapes: phi.siren_config.layer_shapes(), values: theta },
    })
}

/// Exact gradient of `<grad_theta, f_phi(t)>` with respect to `phi`.
pub fn hyper_backward(phi: &HyperParams, t: f64, grad_theta: &[f64]) -> Result<ParamVector> {
    let expect = phi.siren_config.param_count();
    if grad_theta.len() != expect {
        return Err(Error::shape(format!("{expect} theta gradients"), format!("{}", grad_theta.len())));
    }
    let width = phi.config.hidden_width;
    let vals = &phi.params.values;
    let mut grads = vec![0.0; vals.len()];
    let mut off = 0;
    let mut theta_off = 0;
    for s in phi.siren_config.layer_shapes() {
        let n = s.param_count();
        let w1 = &vals[off..off + width];
        let b1 = &vals[off + width..off + 2 * width];
        let w2 = &vals[off + 2 * width..off + 2 * width + n * width];
        let g_theta = &grad_theta[theta_off..theta_off + n];
        theta_off += n;

        let pre: Vec<f64> = (0..width).map(|j| w1[j] * t + b1[j]).collect();
        let h: Vec<f64> = pre.iter().map(|&p| p.max(0.0)).collect();

        // d W2 = g ⊗ h, d b2 = g, and dh = W2^T g in one sweep.
        let mut dh = vec![0.0; width];
        {
            let gw2 = &mut grads[off + 2 * width..off + 2 * width + n * width];
            for r in 0..n {
                let g = g_theta[r];
                let row = &w2[r * width..(r + 1) * width];
                let grow = &mut gw2[r * width..(r + 1) * width];
                for j in 0..width {
                    grow[j] = g * h[j];
                    dh[j] += g * row[j];
                }
            }
        }
        grads[off + 2 * width + n * width..off + 2 * width + n * (width + 1)].copy_from_slice(g_theta);
        // Through the ReLU: subgradient 0 at the kink, as in the reference path.
        for j in 0..width {
            let dpre = if pre[j] > 0.0 { dh[j] } else { 0.0 };
            grads[off + j] = dpre * t;
            grads[off + width + j] = dpre;
        }
        off += 2 * width + n * (width + 1);
    }
    Ok(ParamVector { shapes: phi.params.shapes.clone(), values: grads })
}

const HYPER_MAGIC: &[u8; 4] = b"IFHN";
const HYPER_VERSION: u32 = 1;

impl HyperParams {
    /// Versioned blob: magic "IFHN", version, hyper config, coordinate-network
    /// config, little-endian float64 parameters in the frozen layout.
    pub fn write_blob(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(HYPER_MAGIC);
        blobio::put_u32(&mut out, HYPER_VERSION);
        blobio::put_u32(&mut out, self.config.hidden_width as u32);
        blobio::put_f64(&mut out, self.config.t0);
        blobio::put_f64(&mut out, self.config.t1);
        siren::write_config(&mut out, &self.siren_config);
        blobio::put_u64(&mut out, self.params.values.len() as u64);
        blobio::put_f64_slice(&mut out, &self.params.values);
        out
    }

    pub fn read_blob(bytes: &[u8]) -> Result<HyperParams> {
        let mut r = Reader::new(bytes);
        r.magic(HYPER_MAGIC)?;
        let version = r.u32()?;
        if version != HYPER_VERSION {
            return Err(Error::InvalidField {
                field: "version".into(),
                reason: format!("unsupported blob version {version}"),
            });
        }
        Self::read_body(&mut r)
    }

    pub(crate) fn read_body(r: &mut Reader) -> Result<HyperParams> {
        let config =
            HyperConfig { hidden_width: r.u32()? as usize, t0: r.f64()?, t1: r.f64()? };
        config.validate()?;
        let siren_config = siren::read_config(r)?;
        let n = r.u64()? as usize;
        let expect = hyper_param_count(&siren_config, config.hidden_width);
        if n != expect {
            return Err(Error::InvalidField {
                field: "param_count".into(),
                reason: format!("{n} does not match configs ({expect})"),
            });
        }
        let values = r.f64_vec(n)?;
        Ok(HyperParams {
            config,
            siren_config,
            params: ParamVector { shapes: hyper_shapes(&siren_config, config.hidden_width), values },
        })
    }

    pub(crate) fn write_body(&self, out: &mut Vec<u8>) {
        blobio::put_u32(out, self.config.hidden_width as u32);
        blobio::put_f64(out, self.config.t0);
        blobio::put_f64(out, self.config.t1);
        siren::write_config(out, &self.siren_config);
        blobio::put_u64(out, self.params.values.len() as u64);
        blobio::put_f64_slice(out, &self.params.values);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn;
    use crate::siren::siren_init;

    fn tiny_siren() -> SirenConfig {
        SirenConfig { hidden_layers: 1, width: 4, ..Default::default() }
    }

    #[test]
    fn init_is_deterministic() {
        let hc = HyperConfig { hidden_width: 8, ..Default::default() };
        let a = hyper_init(&hc, &tiny_siren(), 4).unwrap();
        let b = hyper_init(&hc, &tiny_siren(), 4).unwrap();
        assert_eq!(a, b, "same seed twice must be bit-identical");
    }

    #[test]
    fn default_output_count_matches_counting_oracle() {
        let phi = hyper_init(&HyperConfig::default(), &SirenConfig::default(), 0).unwrap();
        let theta = hyper_forward(&phi, 0.05).unwrap();
        // 66_690 from the counting script; 8_604_546 total hyper parameters.
        assert_eq!(theta.params.values.len(), 66_690);
        assert_eq!(phi.params.values.len(), 8_604_546);
    }

    #[test]
    fn init_output_stays_within_siren_bounds_plus_margin() {
        let sc = SirenConfig::default();
        let phi = hyper_init(&HyperConfig::default(), &sc, 12).unwrap();
        let theta = hyper_forward(&phi, 0.0).unwrap();
        let layers = theta.to_layers();
        for (i, (layer, _)) in layers.iter().enumerate() {
            let bound = crate::siren::layer_init_bound(&sc, i, layer.in_dim) + 1e-2;
            for &w in &layer.weights {
                assert!(w.abs() <= bound, "layer {i} weight {w} beyond init bound + 1e-2");
            }
            for &b in &layer.biases {
                assert!(b.abs() <= 1e-2, "layer {i} bias {b} beyond 1e-2 margin");
            }
        }
    }

    #[test]
    fn init_time_dependence_is_small() {
        let hc = HyperConfig::default();
        let phi = hyper_init(&hc, &SirenConfig::default(), 12).unwrap();
        let t0 = hyper_forward(&phi, hc.t0).unwrap();
        let t1 = hyper_forward(&phi, hc.t1).unwrap();
        let inf: f64 = t0
            .params
            .values
            .iter()
            .zip(&t1.params.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(inf <= 1e-3, "init |f(t1) - f(t0)|_inf = {inf}, want <= 1e-3 at defaults");
    }

    #[test]
    fn forward_is_deterministic_and_continuous() {
        let hc = HyperConfig { hidden_width: 8, ..Default::default() };
        let phi = hyper_init(&hc, &tiny_siren(), 2).unwrap();
        let a = hyper_forward(&phi, 0.05).unwrap();
        let b = hyper_forward(&phi, 0.05).unwrap();
        assert_eq!(a, b);
        let c = hyper_forward(&phi, 0.05 + 1e-6).unwrap();
        let inf: f64 =
            a.params.values.iter().zip(&c.params.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(inf <= 1e-3, "1e-6 time perturbation moved theta by {inf}");
    }

    #[test]
    fn backward_zero_seed_gives_zero() {
        let hc = HyperConfig { hidden_width: 8, ..Default::default() };
        let phi = hyper_init(&hc, &tiny_siren(), 2).unwrap();
        let g = hyper_backward(&phi, 0.03, &vec![0.0; tiny_siren().param_count()]).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_is_linear_in_seed() {
        let hc = HyperConfig { hidden_width: 8, ..Default::default() };
        let phi = hyper_init(&hc, &tiny_siren(), 3).unwrap();
        let n = tiny_siren().param_count();
        let g: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let g2: Vec<f64> = g.iter().map(|v| 2.0 * v).collect();
        let a = hyper_backward(&phi, 0.07, &g).unwrap();
        let b = hyper_backward(&phi, 0.07, &g2).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(*y, 2.0 * x, "backward(2g) must equal 2 backward(g)");
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let hc = HyperConfig { hidden_width: 8, ..Default::default() };
        let sc = tiny_siren();
        let phi = hyper_init(&hc, &sc, 9).unwrap();
        let n = sc.param_count();
        let seed_vec: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.61).cos()).collect();
        let t = 0.1;
        let analytic = hyper_backward(&phi, t, &seed_vec).unwrap();
        let shapes = phi.params.shapes.clone();
        let f = |vals: &[f64]| {
            let p = HyperParams {
                config: hc,
                siren_config: sc,
                params: ParamVector { shapes: shapes.clone(), values: vals.to_vec() },
            };
            let th = hyper_forward(&p, t).unwrap();
            th.params.values.iter().zip(&seed_vec).map(|(a, b)| a * b).sum()
        };
        let numeric = nn::finite_diff_grad(f, &phi.params.values, 1e-5).unwrap();
        let rel = analytic
            .values
            .iter()
            .zip(&numeric)
            .map(|(&a, &b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-8))
            .fold(0.0, f64::max);
        assert!(rel <= 1e-5, "hyper backward vs finite differences: max rel err {rel}");
    }

    #[test]
    fn lipschitz_bound_over_interval() {
        // Numeric Lipschitz check across [t0, t1]: nearby t give nearby theta.
        let hc = HyperConfig::default();
        let phi = hyper_init(&hc, &tiny_siren(), 5).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..20 {
            let t = hc.t0 + (hc.t1 - hc.t0) * k as f64 / 19.0;
            let a = hyper_forward(&phi, t).unwrap();
            let b = hyper_forward(&phi, t + 1e-6).unwrap();
            let inf: f64 =
                a.params.values.iter().zip(&b.params.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            worst = worst.max(inf / 1e-6);
        }
        // Slope bounded by width * out_bound * max|W1| = 128 * (1e-2/128) * 1 = 1e-2.
        assert!(worst <= 1e-2 + 1e-9, "numeric Lipschitz constant {worst} exceeds init bound");
    }

    #[test]
    fn blob_roundtrip_bitexact() {
        let hc = HyperConfig { hidden_width: 6, t0: 0.0, t1: 0.2 };
        let phi = hyper_init(&hc, &tiny_siren(), 8).unwrap();
        let bytes = phi.write_blob();
        let back = HyperParams::read_blob(&bytes).unwrap();
        assert_eq!(back, phi, "blob round-trip must be bit-exact");
    }

    #[test]
    fn init_bias_draw_matches_siren_bounds() {
        // The second-layer bias block must itself be a valid siren-style draw.
        let sc = tiny_siren();
        let hc = HyperConfig { hidden_width: 8, ..Default::default() };
        let phi = hyper_init(&hc, &sc, 14).unwrap();
        let shapes = sc.layer_shapes();
        let offs = phi.mlp_offsets();
        for (i, s) in shapes.iter().enumerate() {
            let n = s.param_count();
            let start = offs[i] + 2 * hc.hidden_width + n * hc.hidden_width;
            let b2 = &phi.params.values[start..start + n];
            let bound = crate::siren::layer_init_bound(&sc, i, s.in_dim);
            for &w in &b2[..s.out_dim * s.in_dim] {
                assert!(w.abs() <= bound, "bias-draw weight {w} outside bound {bound}");
            }
            assert!(b2[s.out_dim * s.in_dim..].iter().all(|&v| v == 0.0), "bias part must be zero");
        }
        // Sanity: same shapes as a direct init.
        assert_eq!(siren_init(&sc, 0).unwrap().params.shapes, shapes);
    }
}
