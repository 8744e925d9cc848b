//! Run configuration: `key = value` files plus command-line overrides.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::training::ReconLoss;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub latent_dim: usize,
    pub labels: usize,
    pub sets_per_label: usize,
    pub set_size: usize,
    pub batch_size: usize,
    pub gan_epochs: usize,
    pub classifier_epochs: usize,
    pub encoder_epochs: usize,
    pub lambda: f64,
    pub kl_weight: f64,
    pub recon_weight: f64,
    pub recon: ReconLoss,
    /// 0 disables the sampled-set confidence threshold.
    pub min_prob: f32,
    /// 0 uses every training / test image.
    pub train_limit: usize,
    pub test_limit: usize,
    pub keep: Vec<usize>,
    pub renorm: bool,
    pub dtheta: f64,
    pub steps: usize,
    pub trials: usize,
    pub denoise_images: usize,
    pub rotate_images: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data/mnist"),
            out_dir: PathBuf::from("runs/default"),
            seed: 42,
            latent_dim: 100,
            labels: 10,
            sets_per_label: 10,
            set_size: 1000,
            batch_size: 25,
            gan_epochs: 50,
            classifier_epochs: 30,
            encoder_epochs: 30,
            lambda: 100.0,
            kl_weight: 1.0,
            recon_weight: 1.0,
            recon: ReconLoss::Hinge,
            min_prob: 0.0,
            train_limit: 0,
            test_limit: 0,
            keep: vec![1, 2, 3, 4, 10],
            renorm: false,
            dtheta: std::f64::consts::FRAC_PI_6,
            steps: 3,
            trials: 20,
            denoise_images: 8,
            rotate_images: 5,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true/false, got {value:?}"))),
    }
}

pub fn parse_keep(value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|s| parse::<usize>("keep", s.trim()))
        .collect()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "seed" => self.seed = parse(key, value)?,
            "latent_dim" => self.latent_dim = parse(key, value)?,
            "labels" => self.labels = parse(key, value)?,
            "sets_per_label" => self.sets_per_label = parse(key, value)?,
            "set_size" => self.set_size = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "gan_epochs" => self.gan_epochs = parse(key, value)?,
            "classifier_epochs" => self.classifier_epochs = parse(key, value)?,
            "encoder_epochs" => self.encoder_epochs = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "kl_weight" => self.kl_weight = parse(key, value)?,
            "recon_weight" => self.recon_weight = parse(key, value)?,
            "recon" => {
                self.recon = match value {
                    "hinge" => ReconLoss::Hinge,
                    "mse" => ReconLoss::Mse,
                    _ => return Err(Error::Config(format!("recon: expected hinge or mse, got {value:?}"))),
                }
            }
            "min_prob" => self.min_prob = parse(key, value)?,
            "train_limit" => self.train_limit = parse(key, value)?,
            "test_limit" => self.test_limit = parse(key, value)?,
            "keep" => self.keep = parse_keep(value)?,
            "renorm" => self.renorm = parse_bool(key, value)?,
            "dtheta" => self.dtheta = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "trials" => self.trials = parse(key, value)?,
            "denoise_images" => self.denoise_images = parse(key, value)?,
            "rotate_images" => self.rotate_images = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(&fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels == 0 || self.latent_dim != self.labels * self.sets_per_label {
            return Err(Error::Config(format!(
                "latent_dim ({}) must equal labels ({}) × sets_per_label ({})",
                self.latent_dim, self.labels, self.sets_per_label
            )));
        }
        if self.batch_size == 0 || self.set_size == 0 || self.trials == 0 || self.steps == 0 {
            return Err(Error::Config(
                "batch_size, set_size, trials and steps must be ≥ 1".into(),
            ));
        }
        if let Some(&k) = self.keep.iter().find(|&&k| k == 0 || k > self.latent_dim) {
            return Err(Error::Config(format!("keep entry {k} outside 1..={}", self.latent_dim)));
        }
        Ok(())
    }

    /// Every key with its resolved value, one `key = value` per line.
    pub fn resolved(&self) -> String {
        let keep: Vec<String> = self.keep.iter().map(usize::to_string).collect();
        let recon = match self.recon {
            ReconLoss::Hinge => "hinge",
            ReconLoss::Mse => "mse",
        };
        let mut s = String::new();
        let pairs = [
            ("data_dir", self.data_dir.display().to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("seed", self.seed.to_string()),
            ("latent_dim", self.latent_dim.to_string()),
            ("labels", self.labels.to_string()),
            ("sets_per_label", self.sets_per_label.to_string()),
            ("set_size", self.set_size.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("gan_epochs", self.gan_epochs.to_string()),
            ("classifier_epochs", self.classifier_epochs.to_string()),
            ("encoder_epochs", self.encoder_epochs.to_string()),
            ("lambda", self.lambda.to_string()),
            ("kl_weight", self.kl_weight.to_string()),
            ("recon_weight", self.recon_weight.to_string()),
            ("recon", recon.to_string()),
            ("min_prob", self.min_prob.to_string()),
            ("train_limit", self.train_limit.to_string()),
            ("test_limit", self.test_limit.to_string()),
            ("keep", keep.join(",")),
            ("renorm", self.renorm.to_string()),
            ("dtheta", self.dtheta.to_string()),
            ("steps", self.steps.to_string()),
            ("trials", self.trials.to_string()),
            ("denoise_images", self.denoise_images.to_string()),
            ("rotate_images", self.rotate_images.to_string()),
        ];
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("seed = 7\nkeep = 1, 5 # comment\nrenorm = true\nrecon = mse\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.keep, vec![1, 5]);
        let mut again = RunConfig::default();
        again.apply_text(&cfg.resolved()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = RunConfig::default().apply_text("learning_rate = 1").unwrap_err();
        assert!(err.to_string().contains("unknown key"));
    }

    #[test]
    fn latent_dim_must_split_into_sets() {
        let mut cfg = RunConfig::default();
        cfg.latent_dim = 30;
        assert!(cfg.validate().is_err());
        cfg.sets_per_label = 3;
        cfg.validate().unwrap();
    }
}
