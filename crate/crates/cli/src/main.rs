//! `roadstereo` command-line tool.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Failure;

#[derive(Parser, Debug)]
#[command(name = "roadstereo", version, about = "Dense road stereo: matching, roll-corrected disparity transformation and evaluation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Config file with `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Config override, applied after the file. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Maximum number of worker threads.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Report per-stage wall-clock time and throughput.
    #[arg(long, global = true)]
    pub timing: bool,
    /// Write the report to this file instead of standard output.
    #[arg(long, global = true, value_name = "FILE")]
    pub report: Option<PathBuf>,
    /// Report format: text or json.
    #[arg(long, global = true, value_name = "FORMAT")]
    pub report_format: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Perspective correction and dense matching of a stereo pair.
    Match {
        /// Reference (left) image, 8-bit grey.
        #[arg(long = "ref", value_name = "IMAGE")]
        reference: PathBuf,
        /// Target (right) image, same size as the reference.
        #[arg(long = "tar", value_name = "IMAGE")]
        target: PathBuf,
        /// Output disparity map (.pfm, .png or .csv).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Roll estimation and disparity transformation. Several maps are
    /// processed in order, each warm started from the previous roll.
    Transform {
        /// Input disparity map. Repeatable.
        #[arg(long = "disp", value_name = "FILE", required = true)]
        disp: Vec<PathBuf>,
        /// One output per input, in the same order.
        #[arg(long = "out", value_name = "FILE", required = true)]
        out: Vec<PathBuf>,
        /// Road mask image; nonzero pixels are fitted.
        #[arg(long, value_name = "IMAGE")]
        mask: Option<PathBuf>,
        /// Starting roll angle in radians.
        #[arg(long, value_name = "RAD", allow_negative_numbers = true)]
        psi_init: Option<f64>,
        /// Offset added to the transformed road plane, in pixels.
        #[arg(long, value_name = "PX", allow_negative_numbers = true)]
        delta_t: Option<f64>,
        /// One 3-sigma outlier trimming pass before the final fit.
        #[arg(long)]
        trim: bool,
    },
    /// Bad-pixel rate and RMSE against ground truth.
    Evaluate {
        /// Estimated disparity map.
        #[arg(long, value_name = "FILE")]
        est: PathBuf,
        /// Ground-truth disparity map.
        #[arg(long, value_name = "FILE")]
        gt: PathBuf,
        /// Evaluation mask image; nonzero pixels count.
        #[arg(long, value_name = "IMAGE")]
        mask: Option<PathBuf>,
        /// Bad-pixel threshold in pixels.
        #[arg(long, value_name = "PX")]
        epsilon_d: Option<f64>,
    },
    /// Render a synthetic road scene with ground truth.
    Synth {
        /// Receives ref.png, tar.png, gt.<format> and mask.png.
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        /// Texture and noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Camera roll angle in radians.
        #[arg(long, value_name = "RAD", allow_negative_numbers = true)]
        psi: Option<f64>,
    },
    /// Match, transform and (with --gt) evaluate in one run.
    Pipeline {
        /// Reference (left) image, 8-bit grey.
        #[arg(long = "ref", value_name = "IMAGE")]
        reference: PathBuf,
        /// Target (right) image, same size as the reference.
        #[arg(long = "tar", value_name = "IMAGE")]
        target: PathBuf,
        /// Receives disparity.<format> and transformed.<format>.
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        /// Ground-truth disparity map; enables evaluation.
        #[arg(long, value_name = "FILE")]
        gt: Option<PathBuf>,
        /// Road mask image used for fitting and evaluation.
        #[arg(long, value_name = "IMAGE")]
        mask: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error [{}]: {}", f.stage, f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Match { reference, target, out } => commands::run_match(&cli.common, &reference, &target, &out),
        Command::Transform {
            disp,
            out,
            mask,
            psi_init,
            delta_t,
            trim,
        } => commands::run_transform(&cli.common, &disp, &out, mask, psi_init, delta_t, trim),
        Command::Evaluate { est, gt, mask, epsilon_d } => commands::run_evaluate(&cli.common, &est, &gt, mask, epsilon_d),
        Command::Synth { out_dir, seed, psi } => commands::run_synth(&cli.common, &out_dir, seed, psi),
        Command::Pipeline {
            reference,
            target,
            out_dir,
            gt,
            mask,
        } => commands::run_pipeline(&cli.common, &reference, &target, &out_dir, gt, mask),
    }
}
