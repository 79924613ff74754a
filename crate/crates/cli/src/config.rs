//! Encoding-configuration layering: preset, then config file, then flags.
//!
//! The precedence is fixed: command-line flags override config-file fields,
//! which override the chosen preset. The fully resolved configuration is
//! what lands in the run manifest, so the provenance of every value is
//! auditable from the artifacts alone.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;

use iflow_core::nn::LossMode;
use iflow_core::pipeline::{EncodeConfig, Strategy};

/// Baseline settings a run starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 2,000 iterations, lr 1e-4, full-grid batches: quick desk fits.
    Desk,
    /// 10,000 iterations, lr 1e-6, full-grid batches.
    Production,
}

impl Preset {
    fn base(self) -> EncodeConfig {
        match self {
            Preset::Desk => EncodeConfig::desk(),
            Preset::Production => EncodeConfig::production(),
        }
    }
}

/// Optional config-file fields; anything absent keeps the preset's value.
/// Unknown keys are rejected rather than silently ignored.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    strategy: Option<Strategy>,
    #[serde(default)]
    siren: SirenOverrides,
    #[serde(default)]
    hyper: HyperOverrides,
    iterations: Option<usize>,
    lr: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    seed: Option<u64>,
    loss_mode: Option<LossMode>,
    /// 0 selects full-grid batches.
    batch_pixels: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SirenOverrides {
    hidden_layers: Option<usize>,
    width: Option<usize>,
    omega: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct HyperOverrides {
    hidden_width: Option<usize>,
    t0: Option<f64>,
    t1: Option<f64>,
}

/// Encoding options shared by `encode` and `ablate`.
#[derive(Debug, Args)]
pub struct EncodeOpts {
    /// Baseline settings the config file and flags refine.
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    /// TOML config file; its fields override the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// hypernet | single_siren | two_sirens
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,
    /// Sine frequency of the coordinate network.
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Single seed every random choice flows from.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Start of the encoded time interval.
    #[arg(long, allow_negative_numbers = true)]
    pub t0: Option<f64>,
    /// End of the encoded time interval.
    #[arg(long, allow_negative_numbers = true)]
    pub t1: Option<f64>,
    /// squared | norm
    #[arg(long, value_parser = parse_loss_mode)]
    pub loss_mode: Option<LossMode>,
    /// Pixels per optimizer step; 0 selects full-grid batches.
    #[arg(long)]
    pub batch: Option<usize>,
}

pub fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::ALL
        .into_iter()
        .find(|v| v.as_str() == s)
        .ok_or_else(|| format!("unknown strategy {s:?}; expected hypernet, single_siren, or two_sirens"))
}

fn parse_loss_mode(s: &str) -> Result<LossMode, String> {
    match s {
        "squared" => Ok(LossMode::Squared),
        "norm" => Ok(LossMode::Norm),
        _ => Err(format!("unknown loss mode {s:?}; expected squared or norm")),
    }
}

/// `Some(0)` from a flag or config file means the full grid.
fn apply_batch(cfg: &mut EncodeConfig, batch: Option<usize>) {
    if let Some(n) = batch {
        cfg.fit.batch_pixels = if n == 0 { None } else { Some(n) };
    }
}

impl EncodeOpts {
    /// Resolves preset, config file, and flags into one validated
    /// configuration. `interval` seeds the preset's time interval before the
    /// overrides apply, for commands whose scene fixes it.
    pub fn build(&self, interval: Option<(f64, f64)>) -> Result<EncodeConfig> {
        let mut cfg = self.preset.base();
        if let Some((t0, t1)) = interval {
            cfg.hyper.t0 = t0;
            cfg.hyper.t1 = t1;
        }
        if let Some(path) = &self.config {
            apply_file(&mut cfg, path)?;
        }
        if let Some(s) = self.strategy {
            cfg.strategy = s;
        }
        if let Some(w) = self.omega {
            cfg.siren.omega = w;
        }
        if let Some(n) = self.iterations {
            cfg.fit.iterations = n;
        }
        if let Some(lr) = self.lr {
            cfg.fit.lr = lr;
        }
        if let Some(seed) = self.seed {
            cfg.fit.seed = seed;
        }
        if let Some(t0) = self.t0 {
            cfg.hyper.t0 = t0;
        }
        if let Some(t1) = self.t1 {
            cfg.hyper.t1 = t1;
        }
        if let Some(mode) = self.loss_mode {
            cfg.fit.loss_mode = mode;
        }
        apply_batch(&mut cfg, self.batch);
        cfg.validate().map_err(|e| anyhow::anyhow!("invalid configuration: {e}"))?;
        Ok(cfg)
    }
}

fn apply_file(cfg: &mut EncodeConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let file: ConfigFile = toml::from_str(&text)
        .map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))?;
    if let Some(s) = file.strategy {
        cfg.strategy = s;
    }
    if let Some(n) = file.siren.hidden_layers {
        cfg.siren.hidden_layers = n;
    }
    if let Some(n) = file.siren.width {
        cfg.siren.width = n;
    }
    if let Some(w) = file.siren.omega {
        cfg.siren.omega = w;
    }
    if let Some(n) = file.hyper.hidden_width {
        cfg.hyper.hidden_width = n;
    }
    if let Some(t0) = file.hyper.t0 {
        cfg.hyper.t0 = t0;
    }
    if let Some(t1) = file.hyper.t1 {
        cfg.hyper.t1 = t1;
    }
    if let Some(n) = file.iterations {
        cfg.fit.iterations = n;
    }
    if let Some(lr) = file.lr {
        cfg.fit.lr = lr;
    }
    if let Some(b) = file.beta1 {
        cfg.fit.beta1 = b;
    }
    if let Some(b) = file.beta2 {
        cfg.fit.beta2 = b;
    }
    if let Some(seed) = file.seed {
        cfg.fit.seed = seed;
    }
    if let Some(mode) = file.loss_mode {
        cfg.fit.loss_mode = mode;
    }
    apply_batch(cfg, file.batch_pixels);
    Ok(())
}

/// Sweep argument grammar: `omega=W,W,...`, `distance=D,D,...`, or
/// `strategy`.
pub fn parse_sweep(s: &str) -> Result<iflow_core::pipeline::Sweep> {
    use iflow_core::pipeline::Sweep;
    let parse_list = |name: &str, list: &str| -> Result<Vec<f64>> {
        if list.is_empty() {
            bail!("empty {name} sweep; give a comma-separated list of values");
        }
        list.split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| anyhow::anyhow!("bad {name} sweep value {v:?}"))
            })
            .collect()
    };
    if s == "strategy" {
        Ok(Sweep::Strategies)
    } else if let Some(list) = s.strip_prefix("omega=") {
        Ok(Sweep::Omega(parse_list("omega", list)?))
    } else if let Some(list) = s.strip_prefix("distance=") {
        Ok(Sweep::CoordDistance(parse_list("distance", list)?))
    } else {
        bail!("unknown sweep {s:?}; expected omega=..., distance=..., or strategy");
    }
}
