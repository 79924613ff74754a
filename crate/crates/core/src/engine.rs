//! Batched single-precision training substrate.
//!
//! The f64 functions in `nn` define the semantics; this module reproduces
//! them with batched GEMM kernels, a polynomial sine/cosine, and a fused
//! hypernetwork backward pass so that full encodes fit the time budget on a
//! single core. Losses are accumulated in f64 every iteration, and the final
//! reported loss is always re-evaluated over the full sample set in f64 with
//! the reference forward pass.

use gemm::Parallelism;
use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::hypernet::{hyper_forward, HyperParams};
use crate::nn::{
    network_forward, Activation, DenseLayer, FitSettings, LayerShape, LossMode, ADAM_EPS,
    NORM_LOSS_EPS,
};
use crate::siren::{SirenConfig, SirenParams};
use crate::util::{stream_rng, streams};

/// Cody-Waite split of pi/2; the three terms sum to pi/2 with ~5e-14 residual
/// so reduction stays accurate over the argument ranges training produces.
const PI2_A: f32 = 1.570_312_5;
const PI2_B: f32 = 4.837_512_969_970_703e-4;
const PI2_C: f32 = 7.549_789_9e-8;

/// Simultaneous sine and cosine of one argument: quadrant reduction and
/// minimax polynomials on `|r| <= pi/4`, with the quadrant swap and sign
/// flips done by bit selects so the surrounding loops stay branch-free and
/// vectorize. Absolute error stays below 5e-6 for arguments up to a few
/// hundred; far beyond that the reduction loses digits gracefully, which
/// bounded sine activations never reach in practice.
#[inline(always)]
fn sin_cos_one(x: f32) -> (f32, f32) {
    let k = (x * std::f32::consts::FRAC_2_PI).round_ties_even();
    let r = ((x - k * PI2_A) - k * PI2_B) - k * PI2_C;
    let z = r * r;
    let sp = ((-1.951_529_589_1e-4 * z + 8.332_160_873_6e-3) * z - 1.666_665_461_1e-1) * z * r + r;
    let cp = ((2.443_315_711_809_948e-5 * z - 1.388_731_625_493_765e-3) * z + 4.166_664_568_298_827e-2)
        * (z * z)
        - 0.5 * z
        + 1.0;
    // Quadrant q: odd swaps sine and cosine, q in {2, 3} negates the sine,
    // q in {1, 2} negates the cosine. Negation is a sign-bit flip.
    let q = (k as i32) as u32;
    let swap = 0u32.wrapping_sub(q & 1);
    let (sb, cb) = (sp.to_bits(), cp.to_bits());
    let s = (sb & !swap) | (cb & swap);
    let c = (cb & !swap) | (sb & swap);
    (
        f32::from_bits(s ^ ((q & 2) << 30)),
        f32::from_bits(c ^ ((q.wrapping_add(1) & 2) << 30)),
    )
}

/// Elementwise sine and cosine over a slice.
#[cfg(test)]
fn fast_sin_cos(xs: &[f32], sins: &mut [f32], coss: &mut [f32]) {
    debug_assert_eq!(xs.len(), sins.len());
    debug_assert_eq!(xs.len(), coss.len());
    for i in 0..xs.len() {
        let (s, c) = sin_cos_one(xs[i]);
        sins[i] = s;
        coss[i] = c;
    }
}

/// Fused sine-layer activation: `c[r][j] := sin(omega * (c[r][j] + bias[j]))`
/// in place with the cosine stored alongside, `bias` indexed by column. Doing
/// the bias add and omega scale here keeps the layer to one pass over memory.
fn sin_cos_bias(omega: f32, bias: &[f32], c: &mut [f32], coss: &mut [f32]) {
    let w = bias.len();
    debug_assert_eq!(c.len(), coss.len());
    debug_assert_eq!(c.len() % w.max(1), 0);
    for (crow, krow) in c.chunks_exact_mut(w).zip(coss.chunks_exact_mut(w)) {
        for j in 0..w {
            let (s, k) = sin_cos_one(omega * (crow[j] + bias[j]));
            crow[j] = s;
            krow[j] = k;
        }
    }
}

/// Single-threaded `C = A B + beta C` over f32 slices, strides in elements.
/// Callers pass exact-extent slices; strides address only within them.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: isize,
    csa: isize,
    b: &[f32],
    rsb: isize,
    csb: isize,
    beta: f32,
    c: &mut [f32],
    rsc: isize,
    csc: isize,
) {
    unsafe {
        gemm::gemm(
            m,
            n,
            k,
            c.as_mut_ptr(),
            csc,
            rsc,
            beta != 0.0,
            a.as_ptr(),
            csa,
            rsa,
            b.as_ptr(),
            csb,
            rsb,
            beta,
            1.0f32,
            false,
            false,
            false,
            Parallelism::None,
        );
    }
}

/// Preallocated per-batch workspace for one coordinate network: layer
/// geometry, flat parameter offsets, activations, and stored cosines for the
/// sine-layer backward pass.
struct Scratch {
    shapes: Vec<LayerShape>,
    offsets: Vec<usize>,
    omega: f32,
    acts: Vec<Vec<f32>>,
    coss: Vec<Vec<f32>>,
    da: Vec<f32>,
    db: Vec<f32>,
}

impl Scratch {
    fn new(cfg: &SirenConfig, batch: usize) -> Self {
        let shapes = cfg.layer_shapes();
        let nl = shapes.len();
        let mut offsets = Vec::with_capacity(nl);
        let mut off = 0;
        for s in &shapes {
            offsets.push(off);
            off += s.param_count();
        }
        let acts: Vec<Vec<f32>> = shapes.iter().map(|s| vec![0.0; batch * s.out_dim]).collect();
        let coss: Vec<Vec<f32>> = shapes
            .iter()
            .enumerate()
            .map(|(l, s)| if l + 1 < nl { vec![0.0; batch * s.out_dim] } else { Vec::new() })
            .collect();
        let maxd = shapes.iter().map(|s| s.in_dim.max(s.out_dim)).max().unwrap();
        Scratch {
            shapes,
            offsets,
            omega: cfg.omega as f32,
            acts,
            coss,
            da: vec![0.0; batch * maxd],
            db: vec![0.0; batch * maxd],
        }
    }

    fn predictions(&self, rows: usize) -> &[f32] {
        let last = self.acts.len() - 1;
        &self.acts[last][..rows * 2]
    }

    /// Batched forward pass: `pre = X W^T + b` per layer, sine layers store
    /// both sin and cos of `omega * pre`. The bias add rides along with the
    /// activation pass instead of seeding the GEMM accumulator.
    fn forward(&mut self, theta: &[f32], x: &[f32], rows: usize) {
        let Scratch { shapes, offsets, omega, acts, coss, .. } = self;
        let nl = shapes.len();
        for l in 0..nl {
            let (ind, outd) = (shapes[l].in_dim, shapes[l].out_dim);
            let off = offsets[l];
            let (lo, hi) = acts.split_at_mut(l);
            let cur: &[f32] = if l == 0 { &x[..rows * ind] } else { &lo[l - 1][..rows * ind] };
            let c = &mut hi[0][..rows * outd];
            let bias = &theta[off + outd * ind..off + outd * ind + outd];
            gemm(
                rows,
                ind,
                outd,
                cur,
                ind as isize,
                1,
                &theta[off..off + outd * ind],
                1,
                ind as isize,
                0.0,
                c,
                outd as isize,
                1,
            );
            if l + 1 < nl {
                sin_cos_bias(*omega, bias, c, &mut coss[l][..rows * outd]);
            } else {
                for crow in c.chunks_exact_mut(outd) {
                    for (v, bj) in crow.iter_mut().zip(bias) {
                        *v += *bj;
                    }
                }
            }
        }
    }

    /// Batched reverse pass for the gradient of `sum_rows <dout_row, out_row>`
    /// with respect to every parameter; `grad` is overwritten in the frozen
    /// flat layout. Requires a preceding `forward` on the same inputs.
    fn backward(&mut self, theta: &[f32], x: &[f32], rows: usize, dout: &[f32], grad: &mut [f32]) {
        let Scratch { shapes, offsets, omega, acts, coss, da, db, .. } = self;
        let nl = shapes.len();
        da[..rows * 2].copy_from_slice(dout);
        for l in (0..nl).rev() {
            let (ind, outd) = (shapes[l].in_dim, shapes[l].out_dim);
            let off = offsets[l];
            let dcur = &mut da[..rows * outd];
            if l + 1 < nl {
                let cw = &coss[l][..rows * outd];
                for (d, c) in dcur.iter_mut().zip(cw) {
                    *d *= *omega * *c;
                }
            }
            let x_in: &[f32] = if l == 0 { &x[..rows * ind] } else { &acts[l - 1][..rows * ind] };
            gemm(
                outd,
                rows,
                ind,
                dcur,
                1,
                outd as isize,
                x_in,
                ind as isize,
                1,
                0.0,
                &mut grad[off..off + outd * ind],
                ind as isize,
                1,
            );
            {
                let gb = &mut grad[off + outd * ind..off + outd * ind + outd];
                gb.fill(0.0);
                for r in 0..rows {
                    let row = &dcur[r * outd..(r + 1) * outd];
                    for (g, d) in gb.iter_mut().zip(row) {
                        *g += d;
                    }
                }
            }
            if l > 0 {
                let dx = &mut db[..rows * ind];
                gemm(
                    rows,
                    outd,
                    ind,
                    dcur,
                    outd as isize,
                    1,
                    &theta[off..off + outd * ind],
                    ind as isize,
                    1,
                    0.0,
                    dx,
                    ind as isize,
                    1,
                );
                std::mem::swap(da, db);
            }
        }
    }
}

/// Sum of per-row losses; writes the loss gradient with respect to the
/// predictions, already scaled by `inv_rows` (the caller's 1/rows factor).
fn loss_grad(pred: &[f32], targ: &[f32], mode: LossMode, inv_rows: f64, dout: &mut [f32]) -> f64 {
    let rows = pred.len() / 2;
    let s = inv_rows as f32;
    let mut sum = 0.0f64;
    match mode {
        LossMode::Squared => {
            for i in 0..rows {
                let r0 = pred[2 * i] - targ[2 * i];
                let r1 = pred[2 * i + 1] - targ[2 * i + 1];
                sum += f64::from(r0) * f64::from(r0) + f64::from(r1) * f64::from(r1);
                dout[2 * i] = 2.0 * s * r0;
                dout[2 * i + 1] = 2.0 * s * r1;
            }
        }
        LossMode::Norm => {
            let eps = NORM_LOSS_EPS as f32;
            for i in 0..rows {
                let r0 = pred[2 * i] - targ[2 * i];
                let r1 = pred[2 * i + 1] - targ[2 * i + 1];
                let l = (r0 * r0 + r1 * r1 + eps).sqrt();
                sum += f64::from(l);
                let k = s / l;
                dout[2 * i] = k * r0;
                dout[2 * i + 1] = k * r1;
            }
        }
    }
    sum
}

/// Flat single-precision Adam with the bias correction folded into per-step
/// scalars: `p -= alpha_t * m / (sqrt(v) + eps * sqrt(1 - beta2^t))`, which is
/// algebraically identical to the f64 reference update.
struct AdamF32 {
    step: u64,
    m: Vec<f32>,
    v: Vec<f32>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    b1: f32,
    omb1: f32,
    b2: f32,
    omb2: f32,
    alpha_t: f32,
    eps_t: f32,
}

impl AdamF32 {
    fn new(n: usize, s: &FitSettings) -> Self {
        AdamF32 {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
            lr: s.lr,
            beta1: s.beta1,
            beta2: s.beta2,
            b1: s.beta1 as f32,
            omb1: (1.0 - s.beta1) as f32,
            b2: s.beta2 as f32,
            omb2: (1.0 - s.beta2) as f32,
            alpha_t: 0.0,
            eps_t: 0.0,
        }
    }

    fn begin_step(&mut self) {
        self.step += 1;
        let t = self.step as i32;
        let c2 = (1.0 - self.beta2.powi(t)).sqrt();
        self.alpha_t = (self.lr * c2 / (1.0 - self.beta1.powi(t))) as f32;
        self.eps_t = (ADAM_EPS * c2) as f32;
    }

    fn update(&mut self, p: &mut [f32], g: &[f32]) {
        self.begin_step();
        let (b1, omb1, b2, omb2) = (self.b1, self.omb1, self.b2, self.omb2);
        let (alpha, eps_t) = (self.alpha_t, self.eps_t);
        let n = p.len();
        let (ms, vs, gs) = (&mut self.m[..n], &mut self.v[..n], &g[..n]);
        for i in 0..n {
            let gi = gs[i];
            let m = b1 * ms[i] + omb1 * gi;
            ms[i] = m;
            let v = b2 * vs[i] + omb2 * gi * gi;
            vs[i] = v;
            p[i] -= alpha * m / (v.sqrt() + eps_t);
        }
    }
}

/// Full-set loss sum in f64 with the reference forward pass.
fn full_loss_sum(
    layers: &[(DenseLayer, Activation)],
    coords: &[f64],
    flows: &[f64],
    in_dim: usize,
    mode: LossMode,
) -> Result<f64> {
    let n = coords.len() / in_dim;
    let mut sum = 0.0;
    for i in 0..n {
        let out = network_forward(layers, &coords[i * in_dim..(i + 1) * in_dim])?;
        let r0 = out[0] - flows[2 * i];
        let r1 = out[1] - flows[2 * i + 1];
        let q = r0 * r0 + r1 * r1;
        sum += match mode {
            LossMode::Squared => q,
            LossMode::Norm => (q + NORM_LOSS_EPS).sqrt(),
        };
    }
    Ok(sum)
}

/// Trains a coordinate network from the given initialization on `(coords,
/// flows)` rows, minibatched without replacement each iteration, and returns
/// the trained parameters, the final full-set f64 loss, and the per-iteration
/// minibatch losses. A non-finite iteration loss aborts with the iteration
/// index.
pub(crate) fn fit_siren(
    init: SirenParams,
    coords: &[f64],
    flows: &[f64],
    settings: &FitSettings,
) -> Result<(SirenParams, f64, Vec<f64>)> {
    settings.validate()?;
    let cfg = init.config;
    if cfg.output_dims != 2 {
        return Err(Error::InvalidConfig(format!("fitting expects 2 outputs, config has {}", cfg.output_dims)));
    }
    let in_dim = cfg.input_dims;
    if coords.is_empty() || coords.len() % in_dim != 0 || flows.len() != coords.len() / in_dim * 2 {
        return Err(Error::shape(
            format!("N x {in_dim} coords and N x 2 flows"),
            format!("{} coords, {} flows", coords.len(), flows.len()),
        ));
    }
    let n = coords.len() / in_dim;
    let b = settings.batch_pixels.map_or(n, |x| x.min(n)).max(1);

    let xs: Vec<f32> = coords.iter().map(|&v| v as f32).collect();
    let ts: Vec<f32> = flows.iter().map(|&v| v as f32).collect();
    let mut theta: Vec<f32> = init.params.values.iter().map(|&v| v as f32).collect();
    let mut grad = vec![0.0f32; theta.len()];
    let mut adam = AdamF32::new(theta.len(), settings);
    let mut rng = stream_rng(settings.seed, streams::BATCH);
    let mut sc = Scratch::new(&cfg, b);
    let mut xb = vec![0.0f32; b * in_dim];
    let mut tb = vec![0.0f32; b * 2];
    let mut dout = vec![0.0f32; b * 2];
    if b == n {
        xb.copy_from_slice(&xs);
        tb.copy_from_slice(&ts);
    }
    let inv = 1.0 / b as f64;
    let mut history = Vec::with_capacity(settings.iterations);

    for it in 0..settings.iterations {
        if b < n {
            for (row, i) in sample(&mut rng, n, b).into_iter().enumerate() {
                xb[row * in_dim..(row + 1) * in_dim].copy_from_slice(&xs[i * in_dim..(i + 1) * in_dim]);
                tb[row * 2..row * 2 + 2].copy_from_slice(&ts[i * 2..i * 2 + 2]);
            }
        }
        sc.forward(&theta, &xb, b);
        let sum = loss_grad(sc.predictions(b), &tb, settings.loss_mode, inv, &mut dout);
        let loss = sum * inv;
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration: it, loss });
        }
        history.push(loss);
        sc.backward(&theta, &xb, b, &dout, &mut grad);
        adam.update(&mut theta, &grad);
    }

    let mut params = init.params;
    for (dst, &src) in params.values.iter_mut().zip(&theta) {
        *dst = f64::from(src);
    }
    let trained = SirenParams { config: cfg, params };
    let layers = trained.to_layers();
    let sum = full_loss_sum(&layers, coords, flows, in_dim, settings.loss_mode)?;
    Ok((trained, sum / n as f64, history))
}

/// Trains a hypernetwork on the two encoded time samples. Each iteration
/// draws one pixel minibatch shared by both samples, evaluates every
/// hyper-MLP at both times with one sweep over the output weights, trains the
/// two emitted coordinate networks' gradients back through the hyper-MLPs,
/// and applies Adam in the same sweep that reads each output-weight row.
pub(crate) fn fit_hyper(
    init: HyperParams,
    coords: &[f64],
    flows_t0: &[f64],
    flows_t1: &[f64],
    settings: &FitSettings,
) -> Result<(HyperParams, f64)> {
    settings.validate()?;
    let scfg = init.siren_config;
    let in_dim = scfg.input_dims;
    if coords.is_empty() || coords.len() % in_dim != 0 {
        return Err(Error::shape(format!("N x {in_dim} coords"), format!("{} values", coords.len())));
    }
    let n = coords.len() / in_dim;
    if flows_t0.len() != 2 * n || flows_t1.len() != 2 * n {
        return Err(Error::shape(
            format!("{n} x 2 flows per time sample"),
            format!("{} and {}", flows_t0.len(), flows_t1.len()),
        ));
    }
    let (t0, t1) = (init.config.t0, init.config.t1);
    let (t0f, t1f) = (t0 as f32, t1 as f32);
    let hw = init.config.hidden_width;
    let lshapes = scfg.layer_shapes();
    let nl = lshapes.len();
    let mut phi_off = Vec::with_capacity(nl);
    let mut th_off = Vec::with_capacity(nl);
    let (mut po, mut to) = (0usize, 0usize);
    for s in &lshapes {
        phi_off.push(po);
        th_off.push(to);
        po += 2 * hw + s.param_count() * (hw + 1);
        to += s.param_count();
    }
    let n_theta = to;
    let b = settings.batch_pixels.map_or(n, |x| x.min(n)).max(1);

    let xs: Vec<f32> = coords.iter().map(|&v| v as f32).collect();
    let ts0: Vec<f32> = flows_t0.iter().map(|&v| v as f32).collect();
    let ts1: Vec<f32> = flows_t1.iter().map(|&v| v as f32).collect();
    let mut phi: Vec<f32> = init.params.values.iter().map(|&v| v as f32).collect();
    let mut adam = AdamF32::new(phi.len(), settings);
    let mut rng = stream_rng(settings.seed, streams::BATCH);

    let mut sc0 = Scratch::new(&scfg, b);
    let mut sc1 = Scratch::new(&scfg, b);
    let mut theta0 = vec![0.0f32; n_theta];
    let mut theta1 = vec![0.0f32; n_theta];
    let mut dtheta0 = vec![0.0f32; n_theta];
    let mut dtheta1 = vec![0.0f32; n_theta];
    let mut h0 = vec![0.0f32; nl * hw];
    let mut h1 = vec![0.0f32; nl * hw];
    let mut p0 = vec![0.0f32; nl * hw];
    let mut p1 = vec![0.0f32; nl * hw];
    let mut dh0 = vec![0.0f32; hw];
    let mut dh1 = vec![0.0f32; hw];
    let mut xb = vec![0.0f32; b * in_dim];
    let mut t0b = vec![0.0f32; b * 2];
    let mut t1b = vec![0.0f32; b * 2];
    let mut dout0 = vec![0.0f32; b * 2];
    let mut dout1 = vec![0.0f32; b * 2];
    if b == n {
        xb.copy_from_slice(&xs);
        t0b.copy_from_slice(&ts0);
        t1b.copy_from_slice(&ts1);
    }
    let inv = 1.0 / (2 * b) as f64;

    for it in 0..settings.iterations {
        if b < n {
            for (row, i) in sample(&mut rng, n, b).into_iter().enumerate() {
                xb[row * in_dim..(row + 1) * in_dim].copy_from_slice(&xs[i * in_dim..(i + 1) * in_dim]);
                t0b[row * 2..row * 2 + 2].copy_from_slice(&ts0[i * 2..i * 2 + 2]);
                t1b[row * 2..row * 2 + 2].copy_from_slice(&ts1[i * 2..i * 2 + 2]);
            }
        }

        // Hyper forward at both times: h = relu(W1 t + b1), theta = W2 h + b2.
        for l in 0..nl {
            let off = phi_off[l];
            let np = lshapes[l].param_count();
            let (w1, rest) = phi[off..].split_at(hw);
            let (b1, rest) = rest.split_at(hw);
            let (w2, b2) = rest[..np * hw + np].split_at(np * hw);
            let hs0 = &mut h0[l * hw..(l + 1) * hw];
            let hs1 = &mut h1[l * hw..(l + 1) * hw];
            let ps0 = &mut p0[l * hw..(l + 1) * hw];
            let ps1 = &mut p1[l * hw..(l + 1) * hw];
            for j in 0..hw {
                let q0 = w1[j] * t0f + b1[j];
                ps0[j] = q0;
                hs0[j] = q0.max(0.0);
                let q1 = w1[j] * t1f + b1[j];
                ps1[j] = q1;
                hs1[j] = q1.max(0.0);
            }
            // Eight-lane partial sums break the add latency chain and map
            // onto vector registers; the tail and lane fold stay scalar.
            let tail = hw - hw % 8;
            for r in 0..np {
                let row = &w2[r * hw..(r + 1) * hw];
                let mut acc0 = [0.0f32; 8];
                let mut acc1 = [0.0f32; 8];
                for (rc, (h0c, h1c)) in
                    row.chunks_exact(8).zip(hs0.chunks_exact(8).zip(hs1.chunks_exact(8)))
                {
                    for j in 0..8 {
                        acc0[j] += rc[j] * h0c[j];
                        acc1[j] += rc[j] * h1c[j];
                    }
                }
                let mut a0 = b2[r];
                let mut a1 = b2[r];
                for j in tail..hw {
                    a0 += row[j] * hs0[j];
                    a1 += row[j] * hs1[j];
                }
                for j in 0..8 {
                    a0 += acc0[j];
                    a1 += acc1[j];
                }
                theta0[th_off[l] + r] = a0;
                theta1[th_off[l] + r] = a1;
            }
        }

        sc0.forward(&theta0, &xb, b);
        sc1.forward(&theta1, &xb, b);
        let s0 = loss_grad(sc0.predictions(b), &t0b, settings.loss_mode, inv, &mut dout0);
        let s1 = loss_grad(sc1.predictions(b), &t1b, settings.loss_mode, inv, &mut dout1);
        let loss = (s0 + s1) * inv;
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration: it, loss });
        }
        sc0.backward(&theta0, &xb, b, &dout0, &mut dtheta0);
        sc1.backward(&theta1, &xb, b, &dout1, &mut dtheta1);

        // Fused hyper backward and Adam: each output-weight row is read for
        // the hidden-state gradient before it is overwritten, so the update
        // equals gradient-then-step exactly up to rounding.
        adam.begin_step();
        let (alpha, eps_t) = (adam.alpha_t, adam.eps_t);
        let (cb1, co1, cb2, co2) = (adam.b1, adam.omb1, adam.b2, adam.omb2);
        for l in 0..nl {
            let off = phi_off[l];
            let np = lshapes[l].param_count();
            let hs0 = &h0[l * hw..(l + 1) * hw];
            let hs1 = &h1[l * hw..(l + 1) * hw];
            let ps0 = &p0[l * hw..(l + 1) * hw];
            let ps1 = &p1[l * hw..(l + 1) * hw];
            dh0.fill(0.0);
            dh1.fill(0.0);
            let w2base = off + 2 * hw;
            let b2base = w2base + np * hw;
            for r in 0..np {
                let g0 = dtheta0[th_off[l] + r];
                let g1 = dtheta1[th_off[l] + r];
                let rowbase = w2base + r * hw;
                let w = &mut phi[rowbase..rowbase + hw];
                let ms = &mut adam.m[rowbase..rowbase + hw];
                let vs = &mut adam.v[rowbase..rowbase + hw];
                for ((d0, d1), &wj) in dh0.iter_mut().zip(dh1.iter_mut()).zip(w.iter()) {
                    *d0 += g0 * wj;
                    *d1 += g1 * wj;
                }
                for ((((&h0j, &h1j), mj), vj), wj) in
                    hs0.iter().zip(hs1.iter()).zip(ms.iter_mut()).zip(vs.iter_mut()).zip(w.iter_mut())
                {
                    let g = g0 * h0j + g1 * h1j;
                    let m = cb1 * *mj + co1 * g;
                    *mj = m;
                    let v = cb2 * *vj + co2 * g * g;
                    *vj = v;
                    *wj -= alpha * m / (v.sqrt() + eps_t);
                }
                let gb = g0 + g1;
                let i = b2base + r;
                let m = cb1 * adam.m[i] + co1 * gb;
                adam.m[i] = m;
                let v = cb2 * adam.v[i] + co2 * gb * gb;
                adam.v[i] = v;
                phi[i] -= alpha * m / (v.sqrt() + eps_t);
            }
            // First hyper layer: ReLU mask, scalar inputs t0 and t1.
            for j in 0..hw {
                let d0 = if ps0[j] > 0.0 { dh0[j] } else { 0.0 };
                let d1 = if ps1[j] > 0.0 { dh1[j] } else { 0.0 };
                let gw = d0 * t0f + d1 * t1f;
                let gbv = d0 + d1;
                let iw = off + j;
                let m = cb1 * adam.m[iw] + co1 * gw;
                adam.m[iw] = m;
                let v = cb2 * adam.v[iw] + co2 * gw * gw;
                adam.v[iw] = v;
                phi[iw] -= alpha * m / (v.sqrt() + eps_t);
                let ib = off + hw + j;
                let m = cb1 * adam.m[ib] + co1 * gbv;
                adam.m[ib] = m;
                let v = cb2 * adam.v[ib] + co2 * gbv * gbv;
                adam.v[ib] = v;
                phi[ib] -= alpha * m / (v.sqrt() + eps_t);
            }
        }
    }

    let mut params = init.params;
    for (dst, &src) in params.values.iter_mut().zip(&phi) {
        *dst = f64::from(src);
    }
    let trained = HyperParams { config: init.config, siren_config: scfg, params };
    let layers0 = hyper_forward(&trained, t0)?.to_layers();
    let layers1 = hyper_forward(&trained, t1)?.to_layers();
    let sum = full_loss_sum(&layers0, coords, flows_t0, in_dim, settings.loss_mode)?
        + full_loss_sum(&layers1, coords, flows_t1, in_dim, settings.loss_mode)?;
    Ok((trained, sum / (2 * n) as f64))
}
