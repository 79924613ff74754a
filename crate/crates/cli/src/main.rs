//! `iflow`: encode bidirectional optical flow into a time-conditioned
//! implicit representation, then synthesize, evaluate, and visualize flows at
//! arbitrary intermediate times.
//!
//! Every command is deterministic given its inputs, flags, and seed; reruns
//! produce byte-identical outputs. Each output set carries a `manifest.toml`
//! recording the effective configuration. Exit code 0 means every requested
//! output was written.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::EncodeOpts;

#[derive(Parser)]
#[command(name = "iflow", version, about, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene: frame pair, bidirectional flows, manifest.
    Synth {
        /// Scene description (TOML).
        spec: PathBuf,
        /// Sample time of the first frame; defaults to the scene's t0.
        #[arg(long, allow_negative_numbers = true)]
        t0: Option<f64>,
        /// Sample time of the second frame; defaults to the scene's t1.
        #[arg(long, allow_negative_numbers = true)]
        t1: Option<f64>,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Encode a bidirectional flow pair into a scene blob.
    Encode {
        /// Forward flow (.flo), t0 to t1.
        #[arg(long)]
        fwd: PathBuf,
        /// Backward flow (.flo), t1 to t0.
        #[arg(long)]
        bwd: PathBuf,
        #[command(flatten)]
        opts: EncodeOpts,
        /// Output blob path.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Synthesize intermediate flows (and blended frames) from a scene blob.
    Interp {
        /// Encoded scene blob.
        scene: PathBuf,
        /// Times inside the encoded interval, one output set each.
        #[arg(short, long = "t", required = true, num_args = 1.., allow_negative_numbers = true)]
        ts: Vec<f64>,
        /// First input frame (PPM), enables blending.
        #[arg(long, requires = "i1")]
        i0: Option<PathBuf>,
        /// Second input frame (PPM), enables blending.
        #[arg(long, requires = "i0")]
        i1: Option<PathBuf>,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Evaluate an encoded scene against its analytic oracle.
    Eval {
        /// Encoded scene blob.
        scene: PathBuf,
        /// The scene description the encoding is judged against (TOML).
        #[arg(long)]
        spec: PathBuf,
        /// Evaluation times; defaults to five interior fractions of the
        /// encoded interval.
        #[arg(short, long = "t", num_args = 1.., allow_negative_numbers = true)]
        ts: Vec<f64>,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Sweep one axis (omega, coordinate distance, or strategy) over a scene.
    Ablate {
        /// The scene description to encode and judge against (TOML).
        #[arg(long)]
        spec: PathBuf,
        /// omega=W,... | distance=D,... | strategy
        #[arg(long)]
        sweep: String,
        /// Evaluation times as interval fractions in [0, 1]; default 0.5.
        #[arg(long, num_args = 1..)]
        fracs: Vec<f64>,
        #[command(flatten)]
        opts: EncodeOpts,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Check analytic gradients against finite differences; nonzero exit on
    /// failure.
    Gradcheck {
        /// Number of random configurations to check.
        #[arg(long, default_value_t = 5)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render a .flo file to a color PPM.
    Viz {
        /// Flow field (.flo).
        flo: PathBuf,
        /// Magnitude mapped to full saturation; defaults to the field's max.
        #[arg(long)]
        max: Option<f64>,
        /// Output PPM path.
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth { spec, t0, t1, out } => commands::synth(&spec, t0, t1, &out),
        Command::Encode { fwd, bwd, opts, out } => commands::encode(&opts, &fwd, &bwd, &out),
        Command::Interp { scene, ts, i0, i1, out } => {
            commands::interp(&scene, &ts, i0.as_deref(), i1.as_deref(), &out)
        }
        Command::Eval { scene, spec, ts, out } => commands::eval(&scene, &spec, &ts, &out),
        Command::Ablate { spec, sweep, fracs, opts, out } => {
            commands::ablate(&spec, &sweep, &fracs, &opts, &out)
        }
        Command::Gradcheck { count, seed } => commands::gradcheck(count, seed),
        Command::Viz { flo, max, out } => commands::viz(&flo, max, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
