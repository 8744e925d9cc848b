use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use deep_lsd::config::{parse_keep, RunConfig};
use deep_lsd::pipeline;

#[derive(Parser)]
#[command(name = "deep-lsd", version, about = "Quasi-eigenvector latent spectral decomposition on MNIST")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Train generator and discriminator.
    TrainGan,
    /// Train the image classifier.
    TrainClassifier,
    /// Train the encoder against the frozen generator and classifier.
    TrainEncoder,
    /// Collect latent sets and build the quasi-eigenbasis.
    BuildBasis,
    /// LSD classification ensemble, cumulative top-n and rank profiles.
    LsdClassify,
    /// Truncated-decomposition reconstructions of test images.
    Denoise,
    /// Latent rotation trajectories from label 0 through label 9.
    Rotate,
    /// Check the basis invariants and print pass/fail per property.
    Verify,
    /// Every stage from train-gan through rotate.
    RunAll,
}

#[derive(Args)]
struct Overrides {
    /// key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for checkpoints and results.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory holding the four MNIST IDX files.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Epochs for the training stage being run (all three for run-all).
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long = "latent-dim", global = true)]
    latent_dim: Option<usize>,
    #[arg(long = "sets-per-label", global = true)]
    sets_per_label: Option<usize>,
    #[arg(long = "set-size", global = true)]
    set_size: Option<usize>,
    /// Comma-separated truncation sizes, e.g. 1,2,3,4,10.
    #[arg(long, global = true)]
    keep: Option<String>,
    /// Rotation step in radians.
    #[arg(long, global = true)]
    dtheta: Option<f64>,
    /// Rotation steps per label transition.
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Renormalize truncated latents before decoding.
    #[arg(long, global = true)]
    renorm: bool,
}

fn resolve(cli: &Cli) -> anyhow::Result<RunConfig> {
    let o = &cli.overrides;
    let mut cfg = match &o.config {
        Some(path) => RunConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = &o.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = &o.data {
        cfg.data_dir = v.clone();
    }
    if let Some(e) = o.epochs {
        match cli.command {
            Command::TrainGan => cfg.gan_epochs = e,
            Command::TrainClassifier => cfg.classifier_epochs = e,
            Command::TrainEncoder => cfg.encoder_epochs = e,
            _ => {
                cfg.gan_epochs = e;
                cfg.classifier_epochs = e;
                cfg.encoder_epochs = e;
            }
        }
    }
    if let Some(v) = o.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = o.latent_dim {
        cfg.latent_dim = v;
    }
    if let Some(v) = o.sets_per_label {
        cfg.sets_per_label = v;
    }
    if let Some(v) = o.set_size {
        cfg.set_size = v;
    }
    if let Some(v) = &o.keep {
        cfg.keep = parse_keep(v)?;
    }
    if let Some(v) = o.dtheta {
        cfg.dtheta = v;
    }
    if let Some(v) = o.steps {
        cfg.steps = v;
    }
    if let Some(v) = o.trials {
        cfg.trials = v;
    }
    if o.renorm {
        cfg.renorm = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let cfg = resolve(&cli)?;
    match cli.command {
        Command::TrainGan => pipeline::run_train_gan(&cfg)?,
        Command::TrainClassifier => pipeline::run_train_classifier(&cfg)?,
        Command::TrainEncoder => pipeline::run_train_encoder(&cfg)?,
        Command::BuildBasis => pipeline::run_build_basis(&cfg)?,
        Command::LsdClassify => pipeline::run_lsd_classify(&cfg)?,
        Command::Denoise => pipeline::run_denoise(&cfg)?,
        Command::Rotate => pipeline::run_rotate(&cfg)?,
        Command::RunAll => pipeline::run_all(&cfg)?,
        Command::Verify => {
            let checks = pipeline::run_verify(&cfg)?;
            for c in &checks {
                println!("{c}");
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
