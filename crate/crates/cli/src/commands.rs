//! Implementations of the subcommands: each resolves its inputs, runs the
//! corresponding library operation, writes the output set atomically, and
//! finishes with a run manifest beside the outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use iflow_core::flow::{flow_to_color, read_flo, read_image, write_flo, write_image, Image};
use iflow_core::hypernet::{hyper_init, HyperConfig};
use iflow_core::nn::{finite_diff_grad, LossMode};
use iflow_core::pipeline::{
    self, evaluate, hyper_loss_grad, interpolate_flows, normalized_flow_at, render_intermediate,
    report_csv, EncodedScene, ReportRow,
};
use iflow_core::siren::SirenConfig;
use iflow_core::synth::SceneSpec;

use crate::config::{parse_sweep, EncodeOpts};
use crate::manifest::{path_str, write_atomic, RunManifest};

/// Interval fractions evaluated when no explicit times are given.
const DEFAULT_EVAL_FRACS: [f64; 5] = [0.125, 0.25, 0.5, 0.75, 0.875];

/// Relative tolerance `gradcheck` holds analytic gradients to.
const GRADCHECK_TOL: f64 = 1e-4;

fn read_scene_spec(path: &Path) -> Result<SceneSpec> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading scene {}", path.display()))?;
    SceneSpec::from_toml(&text).map_err(|e| anyhow::anyhow!("scene {}: {e}", path.display()))
}

fn read_flow(path: &Path) -> Result<iflow_core::flow::FlowField> {
    let bytes = fs::read(path).with_context(|| format!("reading flow {}", path.display()))?;
    read_flo(&bytes).map_err(|e| anyhow::anyhow!("flow {}: {e}", path.display()))
}

fn read_scene_blob(path: &Path) -> Result<EncodedScene> {
    let bytes = fs::read(path).with_context(|| format!("reading scene {}", path.display()))?;
    EncodedScene::read_blob(&bytes).map_err(|e| anyhow::anyhow!("scene {}: {e}", path.display()))
}

fn read_frame(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).with_context(|| format!("reading image {}", path.display()))?;
    read_image(&bytes).map_err(|e| anyhow::anyhow!("image {}: {e}", path.display()))
}

/// The manifest path for a single-file output: the file's extension is
/// replaced with `manifest.toml`.
fn sibling_manifest(out: &Path) -> PathBuf {
    out.with_extension("manifest.toml")
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SynthSnapshot {
    /// Sampled interval; defaults to the scene's own.
    t0: f64,
    t1: f64,
    scene: SceneSpec,
}

/// Renders a scene's frame pair and bidirectional flows into `out`.
pub fn synth(spec_path: &Path, t0: Option<f64>, t1: Option<f64>, out: &Path) -> Result<()> {
    let scene = read_scene_spec(spec_path)?;
    let s0 = t0.unwrap_or(scene.t0);
    let s1 = t1.unwrap_or(scene.t1);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let image_t0 = scene.scene_image(s0)?;
    let image_t1 = scene.scene_image(s1)?;
    let (fwd, bwd) = scene.scene_bidirectional(s0, s1)?;
    write_atomic(&out.join("I_t0.ppm"), &write_image(&image_t0))?;
    write_atomic(&out.join("I_t1.ppm"), &write_image(&image_t1))?;
    write_atomic(&out.join("fwd.flo"), &write_flo(&fwd))?;
    write_atomic(&out.join("bwd.flo"), &write_flo(&bwd))?;

    let mut m = RunManifest::new("synth")
        .with_config(&SynthSnapshot { t0: s0, t1: s1, scene })?;
    m.inputs = vec![path_str(spec_path)];
    m.outputs = ["I_t0.ppm", "I_t1.ppm", "fwd.flo", "bwd.flo"].map(String::from).to_vec();
    m.write(&out.join("manifest.toml"))
}

/// Encodes a bidirectional flow pair into a scene blob and prints the final
/// training loss.
pub fn encode(opts: &EncodeOpts, fwd: &Path, bwd: &Path, out: &Path) -> Result<()> {
    let f = read_flow(fwd)?;
    let b = read_flow(bwd)?;
    let cfg = opts.build(None)?;
    let scene = pipeline::encode(&f, &b, &cfg)?;
    ensure_parent(out)?;
    write_atomic(out, &scene.write_blob())?;
    println!("final loss: {:.9e}", scene.final_loss);

    let mut m = RunManifest::new("encode").with_config(&cfg)?;
    m.seed = Some(cfg.fit.seed);
    m.inputs = vec![path_str(fwd), path_str(bwd)];
    m.outputs = vec![out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path_str(out))];
    m.write(&sibling_manifest(out))
}

#[derive(Serialize)]
struct InterpSnapshot {
    ts: Vec<f64>,
    blended: bool,
}

/// Synthesizes intermediate flows (and optionally blended frames) at each
/// requested time, one subdirectory per time.
pub fn interp(
    scene_path: &Path,
    ts: &[f64],
    i0: Option<&Path>,
    i1: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let scene = read_scene_blob(scene_path)?;
    let offending: Vec<String> =
        ts.iter().filter(|&&t| !(t >= scene.t0 && t <= scene.t1)).map(f64::to_string).collect();
    if !offending.is_empty() {
        bail!(
            "t values outside [{}, {}]: {}",
            scene.t0,
            scene.t1,
            offending.join(", ")
        );
    }
    let frames = match (i0, i1) {
        (Some(a), Some(b)) => Some((read_frame(a)?, read_frame(b)?)),
        (None, None) => None,
        _ => bail!("blending needs both --i0 and --i1"),
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut outputs = Vec::new();
    for &t in ts {
        let sub = format!("t_{t}");
        fs::create_dir_all(out.join(&sub))?;
        let (to_t0, to_t1) = interpolate_flows(&scene, t)?;
        for (name, field) in [("F_to_t0", &to_t0), ("F_to_t1", &to_t1)] {
            let flo = format!("{sub}/{name}.flo");
            write_atomic(&out.join(&flo), &write_flo(field))?;
            let ppm = format!("{sub}/{name}.ppm");
            write_atomic(&out.join(&ppm), &write_image(&flow_to_color(field, None)))?;
            outputs.push(flo);
            outputs.push(ppm);
        }
        if let Some((a, b)) = &frames {
            let blend = render_intermediate(&scene, a, b, t)?;
            let name = format!("{sub}/blend.ppm");
            write_atomic(&out.join(&name), &write_image(&blend))?;
            outputs.push(name);
        }
    }

    let mut m = RunManifest::new("interp")
        .with_config(&InterpSnapshot { ts: ts.to_vec(), blended: frames.is_some() })?;
    m.inputs = [Some(scene_path), i0, i1].into_iter().flatten().map(path_str).collect();
    m.outputs = outputs;
    m.write(&out.join("manifest.toml"))
}

#[derive(Serialize)]
struct EvalSnapshot {
    ts: Vec<f64>,
}

/// Evaluates an encoded scene against its analytic oracle and writes the CSV
/// report plus a flow rendering per time.
pub fn eval(scene_path: &Path, spec_path: &Path, ts: &[f64], out: &Path) -> Result<()> {
    let scene = read_scene_blob(scene_path)?;
    let spec = read_scene_spec(spec_path)?;
    let ts: Vec<f64> = if ts.is_empty() {
        DEFAULT_EVAL_FRACS.iter().map(|f| scene.t0 + f * (scene.t1 - scene.t0)).collect()
    } else {
        ts.to_vec()
    };
    let rows = evaluate(&scene, &spec, &ts)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut outputs = vec!["eval.csv".to_string()];
    write_atomic(&out.join("eval.csv"), report_csv(&rows).as_bytes())?;
    for &t in &ts {
        let nf = normalized_flow_at(&scene, t)?;
        let name = format!("flow_{t}.ppm");
        write_atomic(&out.join(&name), &write_image(&flow_to_color(&nf.flow, None)))?;
        outputs.push(name);
    }

    let mut m = RunManifest::new("eval").with_config(&EvalSnapshot { ts })?;
    m.inputs = vec![path_str(scene_path), path_str(spec_path)];
    m.outputs = outputs;
    m.write(&out.join("manifest.toml"))
}

#[derive(Serialize)]
struct AblateSnapshot {
    sweep: String,
    fracs: Vec<f64>,
    config: iflow_core::pipeline::EncodeConfig,
}

/// Runs a sweep over the scene, writing the combined CSV and a flow
/// rendering per setting and time. Failed settings are reported on stderr
/// and turn the exit code nonzero after everything else is written.
pub fn ablate(
    spec_path: &Path,
    sweep_arg: &str,
    fracs: &[f64],
    opts: &EncodeOpts,
    out: &Path,
) -> Result<()> {
    let spec = read_scene_spec(spec_path)?;
    let sweep = parse_sweep(sweep_arg)?;
    let cfg = opts.build(Some((spec.t0, spec.t1)))?;
    let fracs: Vec<f64> = if fracs.is_empty() { vec![0.5] } else { fracs.to_vec() };
    let settings = pipeline::ablate(&sweep, &spec, &cfg, &fracs)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let rows: Vec<ReportRow> = settings.iter().flat_map(|s| s.rows.iter().copied()).collect();
    let mut outputs = vec!["ablate.csv".to_string()];
    write_atomic(&out.join("ablate.csv"), report_csv(&rows).as_bytes())?;
    for s in &settings {
        for (t, img) in &s.flow_images {
            let name = format!("{}_flow_{t}.ppm", s.label);
            write_atomic(&out.join(&name), &write_image(img))?;
            outputs.push(name);
        }
    }

    let mut m = RunManifest::new("ablate").with_config(&AblateSnapshot {
        sweep: sweep_arg.to_string(),
        fracs,
        config: cfg.clone(),
    })?;
    m.seed = Some(cfg.fit.seed);
    m.inputs = vec![path_str(spec_path)];
    m.outputs = outputs;
    m.write(&out.join("manifest.toml"))?;

    let failed: Vec<&pipeline::AblationSetting> =
        settings.iter().filter(|s| s.error.is_some()).collect();
    for s in &failed {
        eprintln!("setting {} failed: {}", s.label, s.error.as_deref().unwrap_or("unknown"));
    }
    if !failed.is_empty() {
        bail!("{} of {} sweep settings failed", failed.len(), settings.len());
    }
    Ok(())
}

/// Checks analytic joint-objective gradients against central finite
/// differences on small random configurations; nonzero exit above the
/// tolerance.
pub fn gradcheck(count: usize, seed: u64) -> Result<()> {
    if count == 0 {
        bail!("count must be >= 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for case in 0..count {
        let scfg = SirenConfig {
            hidden_layers: rng.random_range(1..=2),
            width: rng.random_range(2..=6),
            ..SirenConfig::default()
        };
        let hcfg = HyperConfig { hidden_width: rng.random_range(2..=6), ..HyperConfig::default() };
        let phi = hyper_init(&hcfg, &scfg, rng.random())?;
        let pixels = rng.random_range(2..=5);
        let coords: Vec<f64> = (0..pixels * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t0s: Vec<f64> = (0..pixels * 2).map(|_| rng.random_range(-0.5..0.5)).collect();
        let t1s: Vec<f64> = (0..pixels * 2).map(|_| rng.random_range(-0.5..0.5)).collect();
        let mode = if case % 2 == 0 { LossMode::Squared } else { LossMode::Norm };

        let (_, grad) = hyper_loss_grad(&phi, &coords, &t0s, &t1s, mode)?;
        let loss_only = |values: &[f64]| -> f64 {
            let mut p = phi.clone();
            p.params.values.copy_from_slice(values);
            hyper_loss_grad(&p, &coords, &t0s, &t1s, mode).expect("same shapes as above").0
        };
        let fd = finite_diff_grad(loss_only, &phi.params.values, 1e-5)?;
        for (a, f) in grad.values.iter().zip(&fd) {
            worst = worst.max((a - f).abs() / a.abs().max(f.abs()).max(1e-3));
        }
    }
    println!("max relative gradient error {worst:.3e} over {count} checks");
    if worst > GRADCHECK_TOL {
        bail!("gradient check failed: {worst:.3e} above {GRADCHECK_TOL:e}");
    }
    Ok(())
}

#[derive(Serialize)]
struct VizSnapshot {
    #[serde(skip_serializing_if = "Option::is_none")]
    max: Option<f64>,
}

/// Renders a `.flo` file to a color PPM.
pub fn viz(flo: &Path, max: Option<f64>, out: &Path) -> Result<()> {
    if let Some(m) = max {
        if !(m > 0.0 && m.is_finite()) {
            bail!("--max must be positive and finite, got {m}");
        }
    }
    let field = read_flow(flo)?;
    ensure_parent(out)?;
    write_atomic(out, &write_image(&flow_to_color(&field, max)))?;

    let mut m = RunManifest::new("viz").with_config(&VizSnapshot { max })?;
    m.inputs = vec![path_str(flo)];
    m.outputs = vec![out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path_str(out))];
    m.write(&sibling_manifest(out))
}
