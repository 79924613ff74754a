//! End-to-end workflows: encode a bidirectional flow pair into a
//! time-conditioned implicit representation, synthesize the two intermediate
//! flows at any time inside the interval, warp and blend the frame pair, and
//! evaluate or ablate against the analytic scene oracle.
//!
//! Three encoding strategies share one configuration: `hypernet` (a
//! hypernetwork emits coordinate-network weights from t), `single_siren` (one
//! coordinate network with a raw time input), and `two_sirens` (independent
//! fits at the two time samples, weight-interpolated in between). Flow
//! targets are normalized per unit time and divided by `max(width, height)`
//! before fitting; inference undoes the division. Intermediate flows follow
//! `F_{t->t0} = (t - t0) * f(t)` and `F_{t->t1} = (t - t1) * f(t)` with the
//! zero factor short-circuited so endpoint flows are exactly zero.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::blobio::{self, Reader};
use crate::error::{Error, Result};
use crate::flow::{
    backward_warp, epe, flow_to_color, normalize_pair, scale_flow, FlowField, Image,
    NormalizedFlowField,
};
use crate::hypernet::{hyper_backward, hyper_forward, hyper_init, HyperConfig, HyperParams};
use crate::nn::{
    network_backward, network_forward, FitSettings, LossMode, ParamVector, NORM_LOSS_EPS,
};
use crate::siren::{siren_fit, SirenConfig, SirenParams};
use crate::synth::{Motion, SceneSpec};
use crate::util::{derive_seed, streams};

/// How a flow pair is represented over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// A hypernetwork maps t to coordinate-network weights; both flows train
    /// one set of hyper parameters.
    Hypernet,
    /// One coordinate network with input (x, y, t), trained on both time
    /// samples jointly.
    SingleSiren,
    /// Two independently trained coordinate networks whose weights are
    /// linearly interpolated in t.
    TwoSirens,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Hypernet, Strategy::SingleSiren, Strategy::TwoSirens];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Hypernet => "hypernet",
            Strategy::SingleSiren => "single_siren",
            Strategy::TwoSirens => "two_sirens",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Full encoding configuration: strategy, network shapes, time interval
/// (carried by the hyper config for every strategy), and optimizer settings
/// (flattened into the top level in serialized form).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeConfig {
    pub strategy: Strategy,
    #[serde(default)]
    pub siren: SirenConfig,
    #[serde(default)]
    pub hyper: HyperConfig,
    #[serde(flatten)]
    pub fit: FitSettings,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            strategy: Strategy::Hypernet,
            siren: SirenConfig::default(),
            hyper: HyperConfig::default(),
            fit: FitSettings::default(),
        }
    }
}

impl EncodeConfig {
    /// Desk preset: the default configuration (2,000 iterations, lr 1e-4,
    /// full-grid batches).
    pub fn desk() -> Self {
        EncodeConfig::default()
    }

    /// Production preset: 10K iterations, lr 1e-6, full-grid batches.
    pub fn production() -> Self {
        EncodeConfig { fit: FitSettings::production(), ..EncodeConfig::default() }
    }

    /// The coordinate-network config actually trained: the single-network
    /// strategy takes (x, y, t), the others (x, y).
    pub fn effective_siren(&self) -> SirenConfig {
        let input_dims = if self.strategy == Strategy::SingleSiren { 3 } else { 2 };
        SirenConfig { input_dims, ..self.siren }
    }

    pub fn validate(&self) -> Result<()> {
        self.effective_siren().validate()?;
        self.hyper.validate()?;
        self.fit.validate()?;
        if !(self.hyper.t0 < self.hyper.t1) {
            return Err(Error::InvalidConfig(format!(
                "encode interval must satisfy t0 < t1, got [{}, {}]",
                self.hyper.t0, self.hyper.t1
            )));
        }
        Ok(())
    }
}

/// Trained parameters of one strategy.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenePayload {
    Hypernet(HyperParams),
    SingleSiren(SirenParams),
    TwoSirens(SirenParams, SirenParams),
}

impl ScenePayload {
    fn strategy(&self) -> Strategy {
        match self {
            ScenePayload::Hypernet(_) => Strategy::Hypernet,
            ScenePayload::SingleSiren(_) => Strategy::SingleSiren,
            ScenePayload::TwoSirens(..) => Strategy::TwoSirens,
        }
    }

    /// Frequency of the trained coordinate network.
    fn omega(&self) -> f64 {
        match self {
            ScenePayload::Hypernet(p) => p.siren_config.omega,
            ScenePayload::SingleSiren(p) => p.config.omega,
            ScenePayload::TwoSirens(a, _) => a.config.omega,
        }
    }
}

/// An encoded flow pair: strategy, trained parameters, the time interval and
/// grid they were trained on, the spatial divisor used for flow targets, the
/// final training loss, and optional references to the source frame pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedScene {
    pub strategy: Strategy,
    pub payload: ScenePayload,
    pub t0: f64,
    pub t1: f64,
    pub width: usize,
    pub height: usize,
    /// Spatial divisor applied to normalized flow targets: `max(width, height)`.
    pub scale: f64,
    pub final_loss: f64,
    /// Optional (I_t0, I_t1) references carried for provenance in manifests.
    pub images: Option<[String; 2]>,
}

/// Row-major normalized grid coordinates, `height * width` rows of
/// `(x, y)` with `x = -1 + 2(i + 0.5)/width` at pixel column i (and the same
/// formula vertically). The frozen coordinate convention shared by fitting
/// and inference.
pub fn grid_coords(width: usize, height: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(width * height * 2);
    for y in 0..height {
        for x in 0..width {
            out.push(-1.0 + 2.0 * (x as f64 + 0.5) / width as f64);
            out.push(-1.0 + 2.0 * (y as f64 + 0.5) / height as f64);
        }
    }
    out
}

fn flow_targets(nf: &NormalizedFlowField, scale: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(nf.flow.data.len() * 2);
    for v in &nf.flow.data {
        out.push(v[0] / scale);
        out.push(v[1] / scale);
    }
    out
}

/// Encodes a bidirectional displacement-flow pair over `[t0, t1]` (taken from
/// the hyper config) into the configured representation. Deterministic per
/// seed: identical inputs and config reproduce the scene bit for bit.
pub fn encode(fwd: &FlowField, bwd: &FlowField, cfg: &EncodeConfig) -> Result<EncodedScene> {
    cfg.validate()?;
    if fwd.width != bwd.width || fwd.height != bwd.height {
        return Err(Error::shape(
            format!("{}x{} for both flows", fwd.width, fwd.height),
            format!("{}x{}", bwd.width, bwd.height),
        ));
    }
    let (t0, t1) = (cfg.hyper.t0, cfg.hyper.t1);
    let (n0, n1) = normalize_pair(fwd, bwd, t0, t1)?;
    let (w, h) = (fwd.width, fwd.height);
    let scale = w.max(h) as f64;
    let coords = grid_coords(w, h);
    let targets0 = flow_targets(&n0, scale);
    let targets1 = flow_targets(&n1, scale);
    let scfg = cfg.effective_siren();

    let (payload, final_loss) = match cfg.strategy {
        Strategy::Hypernet => {
            let init = hyper_init(&cfg.hyper, &scfg, cfg.fit.seed)?;
            let (phi, loss) = crate::engine::fit_hyper(init, &coords, &targets0, &targets1, &cfg.fit)?;
            (ScenePayload::Hypernet(phi), loss)
        }
        Strategy::SingleSiren => {
            // 2N rows of (x, y, t) with the raw time appended; t0 rows first.
            let n = w * h;
            let mut coords3 = Vec::with_capacity(n * 3 * 2);
            for t in [t0, t1] {
                for row in coords.chunks_exact(2) {
                    coords3.extend_from_slice(row);
                    coords3.push(t);
                }
            }
            let mut targets = Vec::with_capacity(n * 2 * 2);
            targets.extend_from_slice(&targets0);
            targets.extend_from_slice(&targets1);
            let (theta, loss) = siren_fit(&coords3, &targets, &scfg, &cfg.fit)?;
            (ScenePayload::SingleSiren(theta), loss)
        }
        Strategy::TwoSirens => {
            let (a, loss_a) = siren_fit(&coords, &targets0, &scfg, &cfg.fit)?;
            let settings_b =
                FitSettings { seed: derive_seed(cfg.fit.seed, streams::INIT_B), ..cfg.fit.clone() };
            let (b, loss_b) = siren_fit(&coords, &targets1, &scfg, &settings_b)?;
            (ScenePayload::TwoSirens(a, b), 0.5 * (loss_a + loss_b))
        }
    };

    Ok(EncodedScene {
        strategy: cfg.strategy,
        payload,
        t0,
        t1,
        width: w,
        height: h,
        scale,
        final_loss,
        images: None,
    })
}

fn check_time_inside(t: f64, t0: f64, t1: f64) -> Result<()> {
    if !t.is_finite() || t < t0 || t > t1 {
        return Err(Error::TimeOutOfRange { t, t0, t1 });
    }
    Ok(())
}

/// Evaluates the strategy's per-unit-time flow at `t` on the full grid and
/// de-scales it back to pixels per unit time. Extrapolation outside
/// `[t0, t1]` is refused.
pub fn normalized_flow_at(scene: &EncodedScene, t: f64) -> Result<NormalizedFlowField> {
    check_time_inside(t, scene.t0, scene.t1)?;
    let (theta, time_input) = match &scene.payload {
        ScenePayload::Hypernet(phi) => (hyper_forward(phi, t)?, None),
        ScenePayload::SingleSiren(theta) => (theta.clone(), Some(t)),
        ScenePayload::TwoSirens(a, b) => {
            let tau = (t - scene.t0) / (scene.t1 - scene.t0);
            let mut lerp = a.clone();
            for (p, &q) in lerp.params.values.iter_mut().zip(&b.params.values) {
                *p += tau * (q - *p);
            }
            (lerp, None)
        }
    };
    let layers = theta.to_layers();
    let coords = grid_coords(scene.width, scene.height);
    let mut data = Vec::with_capacity(scene.width * scene.height);
    let mut input = [0.0f64; 3];
    let in_dim = if time_input.is_some() { 3 } else { 2 };
    if let Some(tv) = time_input {
        input[2] = tv;
    }
    for row in coords.chunks_exact(2) {
        input[0] = row[0];
        input[1] = row[1];
        let out = network_forward(&layers, &input[..in_dim])?;
        data.push([out[0] * scene.scale, out[1] * scene.scale]);
    }
    let flow = FlowField { width: scene.width, height: scene.height, data };
    Ok(NormalizedFlowField { flow, t0: scene.t0, t1: scene.t1, divisor: scene.t1 - scene.t0 })
}

/// The two intermediate displacement flows of a per-unit-time field `f` at
/// time `t`: `F_{t->t0} = (t - t0) * f` and `F_{t->t1} = (t - t1) * f`. A
/// zero factor short-circuits the multiply, so the endpoint identities
/// `F_{t0->t0} = 0` and `F_{t1->t1} = 0` hold bit-exactly.
pub fn displacement_flows(f: &FlowField, t: f64, t0: f64, t1: f64) -> (FlowField, FlowField) {
    let scale_or_zero = |k: f64| {
        if k == 0.0 {
            FlowField::zeros(f.width, f.height)
        } else {
            scale_flow(f, k)
        }
    };
    (scale_or_zero(t - t0), scale_or_zero(t - t1))
}

/// Synthesizes `(F_{t->t0}, F_{t->t1})` from the encoded scene at `t` inside
/// the interval.
pub fn interpolate_flows(scene: &EncodedScene, t: f64) -> Result<(FlowField, FlowField)> {
    let nf = normalized_flow_at(scene, t)?;
    Ok(displacement_flows(&nf.flow, t, scene.t0, scene.t1))
}

/// Warps both input frames to time `t` with the interpolated flows and
/// blends them linearly: `(1 - tau) * warp(I_t0) + tau * warp(I_t1)` with
/// `tau = (t - t0)/(t1 - t0)`. At the endpoints the zero flow and the
/// saturated blend weight return the corresponding input bit-exactly.
pub fn render_intermediate(
    scene: &EncodedScene,
    image_t0: &Image,
    image_t1: &Image,
    t: f64,
) -> Result<Image> {
    for (name, img) in [("I_t0", image_t0), ("I_t1", image_t1)] {
        if img.width != scene.width || img.height != scene.height {
            return Err(Error::shape(
                format!("{}x{} {name}", scene.width, scene.height),
                format!("{}x{}", img.width, img.height),
            ));
        }
    }
    if image_t0.channels != image_t1.channels {
        return Err(Error::shape(
            format!("{} channels in both images", image_t0.channels),
            format!("{}", image_t1.channels),
        ));
    }
    let (to_t0, to_t1) = interpolate_flows(scene, t)?;
    let w0 = backward_warp(image_t0, &to_t0)?;
    let w1 = backward_warp(image_t1, &to_t1)?;
    let tau = (t - scene.t0) / (scene.t1 - scene.t0);
    let data: Vec<f64> =
        w0.data.iter().zip(&w1.data).map(|(&a, &b)| (1.0 - tau) * a + tau * b).collect();
    Image::new(scene.width, scene.height, image_t0.channels, data)
}

/// One evaluation record; the CSV schema is
/// `strategy,omega,coord_distance,t,epe,centroid_err,final_loss,seconds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub strategy: Strategy,
    pub omega: f64,
    pub coord_distance: f64,
    pub t: f64,
    /// Mean of the two intermediate-flow endpoint errors against the oracle,
    /// in pixels: `0.5 * (|t - t0| + |t1 - t|) * mean ||f - f*||`, i.e. the
    /// average displacement EPE of `F_{t->t0}` and `F_{t->t1}`.
    pub epe: f64,
    /// Distance from the flow-support centroid to the analytic disk center
    /// (circle scenes; NaN otherwise, +inf when the support is empty).
    pub centroid_err: f64,
    pub final_loss: f64,
    /// Encode wall time; NaN when not measured.
    pub seconds: f64,
}

pub const REPORT_HEADER: &str = "strategy,omega,coord_distance,t,epe,centroid_err,final_loss,seconds";

/// Serializes rows to CSV. Floats in the metric columns use scientific
/// notation; swept values keep their shortest round-trip form.
pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(REPORT_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{:.9e},{:.9e},{:.9e},{:.9e}\n",
            r.strategy, r.omega, r.coord_distance, r.t, r.epe, r.centroid_err, r.final_loss, r.seconds
        ));
    }
    s
}

/// Compares a model's per-unit-time flow at `t` against the analytic oracle.
/// Returns `(epe, centroid_err)` as defined on [`ReportRow`]; the support
/// threshold for the centroid is half the oracle's peak speed.
pub fn flow_metrics(oracle: &SceneSpec, t: f64, flow: &FlowField) -> Result<(f64, f64)> {
    let onf = oracle.scene_flow(t)?;
    let unit_epe = epe(flow, &onf.flow)?;
    let weight = 0.5 * ((t - oracle.t0).abs() + (oracle.t1 - t).abs());
    let row_epe = weight * unit_epe;
    let centroid_err = match oracle.motion {
        Motion::Circle { center, velocity, .. } => {
            let threshold = 0.5 * onf.flow.max_magnitude();
            let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
            for y in 0..flow.height {
                for x in 0..flow.width {
                    let v = flow.get(x, y);
                    if (v[0] * v[0] + v[1] * v[1]).sqrt() > threshold {
                        sx += x as f64;
                        sy += y as f64;
                        n += 1.0;
                    }
                }
            }
            if n == 0.0 {
                f64::INFINITY
            } else {
                let ex = center[0] + t * velocity[0];
                let ey = center[1] + t * velocity[1];
                ((sx / n - ex).powi(2) + (sy / n - ey).powi(2)).sqrt()
            }
        }
        _ => f64::NAN,
    };
    Ok((row_epe, centroid_err))
}

/// Evaluates the encoded scene against its analytic oracle at each listed
/// time, producing CSV-ready rows (seconds left NaN; fill it from a measured
/// encode when available).
pub fn evaluate(scene: &EncodedScene, oracle: &SceneSpec, ts: &[f64]) -> Result<Vec<ReportRow>> {
    oracle.validate()?;
    if oracle.width != scene.width || oracle.height != scene.height {
        return Err(Error::shape(
            format!("{}x{} oracle", scene.width, scene.height),
            format!("{}x{}", oracle.width, oracle.height),
        ));
    }
    if oracle.t0 != scene.t0 || oracle.t1 != scene.t1 {
        return Err(Error::InvalidConfig(format!(
            "oracle interval [{}, {}] does not match the encoded interval [{}, {}]",
            oracle.t0, oracle.t1, scene.t0, scene.t1
        )));
    }
    let mut rows = Vec::with_capacity(ts.len());
    for &t in ts {
        let nf = normalized_flow_at(scene, t)?;
        let (row_epe, centroid_err) = flow_metrics(oracle, t, &nf.flow)?;
        rows.push(ReportRow {
            strategy: scene.strategy,
            omega: scene.payload.omega(),
            coord_distance: scene.t1 - scene.t0,
            t,
            epe: row_epe,
            centroid_err,
            final_loss: scene.final_loss,
            seconds: f64::NAN,
        });
    }
    Ok(rows)
}

/// One parameter sweep over encode settings.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// Coordinate-network frequencies to try.
    Omega(Vec<f64>),
    /// Time-coordinate distances `t1 - t0` to try; requires scenes anchored
    /// at `t0 = 0`. Motion rates are rescaled so the physical displacement
    /// over the interval is unchanged.
    CoordDistance(Vec<f64>),
    /// All three strategies with otherwise identical settings.
    Strategies,
}

/// Result of one sweep setting: its rows (seconds filled with the measured
/// encode time), a flow-color rendering per evaluated time, or the error that
/// stopped it (the sweep itself continues).
#[derive(Debug, Clone)]
pub struct AblationSetting {
    pub label: String,
    pub rows: Vec<ReportRow>,
    pub flow_images: Vec<(f64, Image)>,
    pub error: Option<String>,
}

/// Rescales a scene to a new time-coordinate distance `d`: the interval
/// becomes `[0, d]` and motion rates scale by `(t1 - t0)/d`, preserving every
/// physical position at the interval ends.
fn retime_scene(spec: &SceneSpec, d: f64) -> Result<SceneSpec> {
    if spec.t0 != 0.0 {
        return Err(Error::InvalidConfig(format!(
            "coordinate-distance sweeps need scenes anchored at t0 = 0, got t0 = {}",
            spec.t0
        )));
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::InvalidConfig(format!("coordinate distance must be positive, got {d}")));
    }
    let ratio = (spec.t1 - spec.t0) / d;
    let motion = match spec.motion {
        Motion::Translation { velocity } => {
            Motion::Translation { velocity: [velocity[0] * ratio, velocity[1] * ratio] }
        }
        Motion::Circle { center, radius, velocity } => Motion::Circle {
            center,
            radius,
            velocity: [velocity[0] * ratio, velocity[1] * ratio],
        },
        Motion::Rotation { center, rate } => Motion::Rotation { center, rate: rate * ratio },
    };
    let spec_d = SceneSpec { t0: 0.0, t1: d, motion, ..*spec };
    spec_d.validate()?;
    Ok(spec_d)
}

fn strictly_positive_finite(name: &str, vs: &[f64]) -> Result<()> {
    if vs.is_empty() {
        return Err(Error::InvalidConfig(format!("{name} sweep must be nonempty")));
    }
    for &v in vs {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidConfig(format!("{name} sweep values must be positive, got {v}")));
        }
    }
    Ok(())
}

/// Runs encode + evaluate once per sweep setting on the scene's analytic
/// flows, ordered by ascending swept value (strategies keep their canonical
/// order). `fracs` positions the evaluation times inside each setting's
/// interval as fractions in `[0, 1]`. Failed settings are recorded and the
/// sweep continues.
pub fn ablate(
    sweep: &Sweep,
    spec: &SceneSpec,
    cfg: &EncodeConfig,
    fracs: &[f64],
) -> Result<Vec<AblationSetting>> {
    spec.validate()?;
    cfg.validate()?;
    if fracs.is_empty() {
        return Err(Error::InvalidConfig("evaluation fractions must be nonempty".into()));
    }
    for &f in fracs {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::InvalidConfig(format!(
                "evaluation fractions must lie in [0, 1], got {f}"
            )));
        }
    }
    let interval_matches = cfg.hyper.t0 == spec.t0 && cfg.hyper.t1 == spec.t1;
    // Per-setting (label, scene spec, config) triples in run order.
    let settings: Vec<(String, SceneSpec, EncodeConfig)> = match sweep {
        Sweep::Omega(omegas) => {
            strictly_positive_finite("omega", omegas)?;
            require_interval(interval_matches, spec, cfg)?;
            let mut sorted = omegas.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite by validation"));
            sorted
                .into_iter()
                .map(|omega| {
                    let mut c = cfg.clone();
                    c.siren.omega = omega;
                    (format!("omega_{omega}"), *spec, c)
                })
                .collect()
        }
        Sweep::CoordDistance(distances) => {
            strictly_positive_finite("coordinate-distance", distances)?;
            let mut sorted = distances.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite by validation"));
            let mut out = Vec::with_capacity(sorted.len());
            for d in sorted {
                let spec_d = retime_scene(spec, d)?;
                let mut c = cfg.clone();
                c.hyper.t0 = spec_d.t0;
                c.hyper.t1 = spec_d.t1;
                out.push((format!("distance_{d}"), spec_d, c));
            }
            out
        }
        Sweep::Strategies => {
            require_interval(interval_matches, spec, cfg)?;
            Strategy::ALL
                .iter()
                .map(|&strategy| {
                    let c = EncodeConfig { strategy, ..cfg.clone() };
                    (strategy.as_str().to_string(), *spec, c)
                })
                .collect()
        }
    };

    let mut out = Vec::with_capacity(settings.len());
    for (label, spec_s, cfg_s) in settings {
        out.push(run_setting(label, &spec_s, &cfg_s, fracs));
    }
    Ok(out)
}

fn require_interval(matches: bool, spec: &SceneSpec, cfg: &EncodeConfig) -> Result<()> {
    if matches {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "encode interval [{}, {}] does not match the scene interval [{}, {}]",
            cfg.hyper.t0, cfg.hyper.t1, spec.t0, spec.t1
        )))
    }
}

fn run_setting(label: String, spec: &SceneSpec, cfg: &EncodeConfig, fracs: &[f64]) -> AblationSetting {
    match run_setting_inner(spec, cfg, fracs) {
        Ok((rows, flow_images)) => AblationSetting { label, rows, flow_images, error: None },
        Err(e) => {
            AblationSetting { label, rows: Vec::new(), flow_images: Vec::new(), error: Some(e.to_string()) }
        }
    }
}

fn run_setting_inner(
    spec: &SceneSpec,
    cfg: &EncodeConfig,
    fracs: &[f64],
) -> Result<(Vec<ReportRow>, Vec<(f64, Image)>)> {
    let (fwd, bwd) = spec.scene_bidirectional(spec.t0, spec.t1)?;
    let start = Instant::now();
    let scene = encode(&fwd, &bwd, cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    let ts: Vec<f64> =
        fracs.iter().map(|&f| spec.t0 + f * (spec.t1 - spec.t0)).collect();
    let mut rows = evaluate(&scene, spec, &ts)?;
    for row in &mut rows {
        row.seconds = seconds;
    }
    let mut flow_images = Vec::with_capacity(ts.len());
    for &t in &ts {
        let nf = normalized_flow_at(&scene, t)?;
        flow_images.push((t, flow_to_color(&nf.flow, None)));
    }
    Ok((rows, flow_images))
}

/// Reference loss and gradient of the joint objective in double precision:
/// the mean over both time samples' rows of the residual loss between the
/// emitted coordinate network's predictions and the targets, differentiated
/// through the hypernetwork. The oracle the batched trainer and gradient
/// checks compare against.
pub fn hyper_loss_grad(
    phi: &HyperParams,
    coords: &[f64],
    targets0: &[f64],
    targets1: &[f64],
    mode: LossMode,
) -> Result<(f64, ParamVector)> {
    let in_dim = phi.siren_config.input_dims;
    if coords.is_empty() || coords.len() % in_dim != 0 {
        return Err(Error::shape(format!("N x {in_dim} coords"), format!("{} values", coords.len())));
    }
    let n = coords.len() / in_dim;
    if targets0.len() != n * 2 || targets1.len() != n * 2 {
        return Err(Error::shape(
            format!("{} targets per time sample", n * 2),
            format!("{} and {}", targets0.len(), targets1.len()),
        ));
    }
    let inv = 1.0 / (2 * n) as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0f64; phi.params.values.len()];
    for (time, targets) in [(phi.config.t0, targets0), (phi.config.t1, targets1)] {
        let theta = hyper_forward(phi, time)?;
        let layers = theta.to_layers();
        let mut dtheta = vec![0.0f64; theta.params.values.len()];
        for i in 0..n {
            let x = &coords[i * in_dim..(i + 1) * in_dim];
            let out = network_forward(&layers, x)?;
            let r = [out[0] - targets[2 * i], out[1] - targets[2 * i + 1]];
            let upstream = match mode {
                LossMode::Squared => {
                    total += (r[0] * r[0] + r[1] * r[1]) * inv;
                    [2.0 * inv * r[0], 2.0 * inv * r[1]]
                }
                LossMode::Norm => {
                    let l = (r[0] * r[0] + r[1] * r[1] + NORM_LOSS_EPS).sqrt();
                    total += l * inv;
                    [inv * r[0] / l, inv * r[1] / l]
                }
            };
            let (g, _) = network_backward(&layers, x, &upstream)?;
            for (acc, v) in dtheta.iter_mut().zip(&g.values) {
                *acc += v;
            }
        }
        let gphi = hyper_backward(phi, time, &dtheta)?;
        for (acc, v) in grad.iter_mut().zip(&gphi.values) {
            *acc += v;
        }
    }
    Ok((total, ParamVector { shapes: phi.params.shapes.clone(), values: grad }))
}

const SCENE_MAGIC: &[u8; 4] = b"IFEN";
const SCENE_VERSION: u32 = 1;

impl EncodedScene {
    /// Versioned blob: magic "IFEN", version, strategy tag, grid, interval,
    /// scale, final loss, optional image references, then the strategy's
    /// parameter payload in its module layout.
    pub fn write_blob(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SCENE_MAGIC);
        blobio::put_u32(&mut out, SCENE_VERSION);
        blobio::put_u32(
            &mut out,
            match self.strategy {
                Strategy::Hypernet => 0,
                Strategy::SingleSiren => 1,
                Strategy::TwoSirens => 2,
            },
        );
        blobio::put_u64(&mut out, self.width as u64);
        blobio::put_u64(&mut out, self.height as u64);
        blobio::put_f64(&mut out, self.t0);
        blobio::put_f64(&mut out, self.t1);
        blobio::put_f64(&mut out, self.scale);
        blobio::put_f64(&mut out, self.final_loss);
        match &self.images {
            None => blobio::put_u32(&mut out, 0),
            Some([a, b]) => {
                blobio::put_u32(&mut out, 1);
                blobio::put_str(&mut out, a);
                blobio::put_str(&mut out, b);
            }
        }
        match &self.payload {
            ScenePayload::Hypernet(phi) => phi.write_body(&mut out),
            ScenePayload::SingleSiren(theta) => crate::siren::write_params_body(&mut out, theta),
            ScenePayload::TwoSirens(a, b) => {
                crate::siren::write_params_body(&mut out, a);
                crate::siren::write_params_body(&mut out, b);
            }
        }
        out
    }

    pub fn read_blob(bytes: &[u8]) -> Result<EncodedScene> {
        let mut r = Reader::new(bytes);
        r.magic(SCENE_MAGIC)?;
        let version = r.u32()?;
        if version != SCENE_VERSION {
            return Err(Error::InvalidField {
                field: "version".into(),
                reason: format!("unsupported blob version {version}"),
            });
        }
        let strategy = match r.u32()? {
            0 => Strategy::Hypernet,
            1 => Strategy::SingleSiren,
            2 => Strategy::TwoSirens,
            other => {
                return Err(Error::InvalidField {
                    field: "strategy".into(),
                    reason: format!("unknown strategy tag {other}"),
                })
            }
        };
        let width = r.u64()? as usize;
        let height = r.u64()? as usize;
        let t0 = r.f64()?;
        let t1 = r.f64()?;
        let scale = r.f64()?;
        let final_loss = r.f64()?;
        if width == 0 || height == 0 {
            return Err(Error::InvalidField {
                field: "grid".into(),
                reason: format!("degenerate {width}x{height} grid"),
            });
        }
        if !(t0 < t1) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::InvalidField {
                field: "interval".into(),
                reason: format!("invalid interval [{t0}, {t1}]"),
            });
        }
        if scale != width.max(height) as f64 {
            return Err(Error::InvalidField {
                field: "scale".into(),
                reason: format!("scale {scale} does not match the {width}x{height} grid"),
            });
        }
        let images = match r.u32()? {
            0 => None,
            1 => Some([r.str()?, r.str()?]),
            other => {
                return Err(Error::InvalidField {
                    field: "images".into(),
                    reason: format!("invalid image-reference flag {other}"),
                })
            }
        };
        let payload = match strategy {
            Strategy::Hypernet => {
                let phi = HyperParams::read_body(&mut r)?;
                if phi.config.t0 != t0 || phi.config.t1 != t1 {
                    return Err(Error::InvalidField {
                        field: "interval".into(),
                        reason: format!(
                            "hyper interval [{}, {}] does not match the scene interval [{t0}, {t1}]",
                            phi.config.t0, phi.config.t1
                        ),
                    });
                }
                ScenePayload::Hypernet(phi)
            }
            Strategy::SingleSiren => ScenePayload::SingleSiren(crate::siren::read_params_body(&mut r)?),
            Strategy::TwoSirens => {
                let a = crate::siren::read_params_body(&mut r)?;
                let b = crate::siren::read_params_body(&mut r)?;
                if a.config != b.config {
                    return Err(Error::InvalidField {
                        field: "config".into(),
                        reason: "the two network configs differ".into(),
                    });
                }
                ScenePayload::TwoSirens(a, b)
            }
        };
        if r.remaining() != 0 {
            return Err(Error::InvalidField {
                field: "trailer".into(),
                reason: format!("{} unread bytes after the payload", r.remaining()),
            });
        }
        debug_assert_eq!(payload.strategy(), strategy);
        Ok(EncodedScene { strategy, payload, t0, t1, width, height, scale, final_loss, images })
    }
}
