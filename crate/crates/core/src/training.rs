//! GAN, classifier and encoder training.
//!
//! The objective functions are generic over the scalar so the exact same
//! code can be gradient-checked in `f64`; the training loops run in `f32`.

use crate::error::{Error, Result};
use crate::models::{classify, Network, NetworkSpec, Role};
use crate::nn::loss::{
    cross_entropy, discriminator_logit_grads, discriminator_loss_from_logits, generator_logit_grad,
    generator_loss_from_logits, hinge_recon, kl_gauss, mse_recon, onehot,
};
use crate::nn::{adam_step, AdamConfig, AdamState, Mlp, OutputGrad};
use crate::rng::SeededRng;
use crate::tensor::{concat_columns, split_columns, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReconLoss {
    Hinge,
    Mse,
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub latent_dim: usize,
    pub labels: usize,
    pub lambda: f64,
    pub kl_weight: f64,
    pub recon_weight: f64,
    pub recon: ReconLoss,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 25,
            epochs: 30,
            latent_dim: 100,
            labels: 10,
            lambda: 100.0,
            kl_weight: 1.0,
            recon_weight: 1.0,
            recon: ReconLoss::Hinge,
            adam: AdamConfig::GAN,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be ≥ 1".into()));
        }
        if self.labels == 0 || !self.latent_dim.is_multiple_of(self.labels) {
            return Err(Error::InvalidArgument(format!(
                "latent_dim {} must be a multiple of the label count {}",
                self.latent_dim, self.labels
            )));
        }
        self.adam.validate()
    }

    fn stamp(&self, net: &mut Network, epochs: usize) {
        net.epochs = epochs as u64;
        net.seed = self.seed;
        let hp = &mut net.hyperparameters;
        hp.insert("batch_size".into(), self.batch_size.to_string());
        hp.insert("eta".into(), self.adam.eta.to_string());
        hp.insert("beta1".into(), self.adam.beta1.to_string());
        hp.insert("beta2".into(), self.adam.beta2.to_string());
        hp.insert("epsilon".into(), self.adam.epsilon.to_string());
    }
}

/// Shuffled full batches for one epoch; the trailing partial batch is dropped.
fn epoch_batches(n: usize, batch: usize, seed: u64, purpose: &str, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::stream(seed, purpose, &[epoch as u64]).shuffle(&mut order);
    order.chunks_exact(batch).map(<[usize]>::to_vec).collect()
}

fn add_into<T: Real>(acc: &mut [Tensor<T>], other: Vec<Tensor<T>>) {
    for (a, b) in acc.iter_mut().zip(other) {
        for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
            *x = *x + *y;
        }
    }
}

// ---------------------------------------------------------------------------
// Objectives

pub struct Objective<T: Real> {
    pub loss: f64,
    pub grads: Vec<Tensor<T>>,
}

pub fn classifier_objective<T: Real>(classifier: &Mlp<T>, x: &Tensor<T>, targets: &Tensor<T>) -> Result<Objective<T>> {
    let trace = classifier.forward_trace(x)?;
    let ce = cross_entropy(trace.logits(), targets)?;
    let g = classifier.backward(&trace, OutputGrad::PreActivation(&ce.grad), true)?;
    Ok(Objective {
        loss: ce.value,
        grads: g.params.expect("requested"),
    })
}

pub fn discriminator_objective<T: Real>(disc: &Mlp<T>, real: &Tensor<T>, fake: &Tensor<T>) -> Result<Objective<T>> {
    let tr = disc.forward_trace(real)?;
    let tf = disc.forward_trace(fake)?;
    let loss = discriminator_loss_from_logits(tr.logits(), tf.logits());
    let (gr, gf) = discriminator_logit_grads(tr.logits(), tf.logits());
    let mut grads = disc
        .backward(&tr, OutputGrad::PreActivation(&gr), true)?
        .params
        .expect("requested");
    let fake_grads = disc
        .backward(&tf, OutputGrad::PreActivation(&gf), true)?
        .params
        .expect("requested");
    add_into(&mut grads, fake_grads);
    Ok(Objective { loss, grads })
}

/// Non-saturating generator loss; gradients for the generator only.
pub fn generator_objective<T: Real>(gen: &Mlp<T>, disc: &Mlp<T>, z: &Tensor<T>) -> Result<Objective<T>> {
    let tg = gen.forward_trace(z)?;
    let td = disc.forward_trace(tg.output())?;
    let loss = generator_loss_from_logits(td.logits());
    let gl = generator_logit_grad(td.logits());
    let d_fake = disc.backward(&td, OutputGrad::PreActivation(&gl), false)?.input;
    let grads = gen
        .backward(&tg, OutputGrad::Activated(&d_fake), true)?
        .params
        .expect("requested");
    Ok(Objective { loss, grads })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EncoderLoss {
    pub total: f64,
    pub kl: f64,
    pub recon: f64,
    pub class: f64,
}

pub struct EncoderWeights {
    pub kl: f64,
    pub recon: f64,
    pub lambda: f64,
    pub recon_loss: ReconLoss,
}

/// `kl·KL(μ, σ) + recon·R(x, G(z)) + λ·CE(C(G(z)), y)` with `z = μ + σ ⊙ ε`.
/// Only the encoder receives parameter gradients.
pub fn encoder_objective<T: Real>(
    encoder: &Mlp<T>,
    gen: &Mlp<T>,
    classifier: &Mlp<T>,
    x: &Tensor<T>,
    targets: &Tensor<T>,
    eps: &Tensor<T>,
    w: &EncoderWeights,
) -> Result<(EncoderLoss, Vec<Tensor<T>>)> {
    let te = encoder.forward_trace(x)?;
    let m = te.output().cols() / 2;
    let (mu, log_sigma) = split_columns(te.output(), m);
    eps.ensure_shape("encoder_objective (noise)", mu.shape())?;
    let sigma = log_sigma.map(T::exp);
    let mut z = mu.clone();
    for ((z, &s), &e) in z.data_mut().iter_mut().zip(sigma.data()).zip(eps.data()) {
        *z = *z + s * e;
    }

    let tg = gen.forward_trace(&z)?;
    let recon = match w.recon_loss {
        ReconLoss::Hinge => hinge_recon(x, tg.output())?,
        ReconLoss::Mse => mse_recon(x, tg.output())?,
    };
    let tc = classifier.forward_trace(tg.output())?;
    let ce = cross_entropy(tc.logits(), targets)?;
    let kl = kl_gauss(&mu, &log_sigma)?;

    let d_xhat_class = classifier
        .backward(&tc, OutputGrad::PreActivation(&ce.grad), false)?
        .input;
    let (wr, wl) = (T::from_f64_lossy(w.recon), T::from_f64_lossy(w.lambda));
    let mut d_xhat = recon.grad.clone();
    for (g, &c) in d_xhat.data_mut().iter_mut().zip(d_xhat_class.data()) {
        *g = wr * *g + wl * c;
    }
    let dz = gen.backward(&tg, OutputGrad::Activated(&d_xhat), false)?.input;

    let wk = T::from_f64_lossy(w.kl);
    let mut d_mu = dz.clone();
    let mut d_ls = dz;
    for (i, g) in d_mu.data_mut().iter_mut().enumerate() {
        *g = *g + wk * kl.grad_mu.data()[i];
    }
    for (i, g) in d_ls.data_mut().iter_mut().enumerate() {
        *g = *g * sigma.data()[i] * eps.data()[i] + wk * kl.grad_log_sigma.data()[i];
    }
    let d_out = concat_columns(&d_mu, &d_ls)?;
    let grads = encoder
        .backward(&te, OutputGrad::Activated(&d_out), true)?
        .params
        .expect("requested");
    let parts = EncoderLoss {
        total: w.kl * kl.value + w.recon * recon.value + w.lambda * ce.value,
        kl: kl.value,
        recon: recon.value,
        class: ce.value,
    };
    Ok((parts, grads))
}

// ---------------------------------------------------------------------------
// Loops

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GanEpoch {
    pub epoch: usize,
    pub loss_d: f64,
    pub loss_g: f64,
}

pub struct GanOutcome {
    pub generator: Network,
    pub discriminator: Network,
    pub history: Vec<GanEpoch>,
}

fn step(net: &mut Network, grads: &[Tensor], state: &mut AdamState, epoch: usize, batch: usize) -> Result<()> {
    let mut params = net.mlp_mut().params_mut();
    adam_step(&mut params, grads, state).map_err(|e| match e {
        Error::NonFiniteGradient { .. } => Error::NonFiniteLoss { epoch, batch },
        other => other,
    })
}

fn check_finite(v: f64, epoch: usize, batch: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss { epoch, batch })
    }
}

/// Alternating discriminator / generator updates, one of each per batch.
pub fn train_gan(images: &Tensor, cfg: &TrainConfig) -> Result<GanOutcome> {
    cfg.validate()?;
    let mut gen = Network::init(NetworkSpec::generator(cfg.latent_dim), cfg.seed)?;
    let mut disc = Network::init(NetworkSpec::discriminator(), cfg.seed)?;
    let mut gen_state = AdamState::new(cfg.adam, gen.mlp().params())?;
    let mut disc_state = AdamState::new(cfg.adam, disc.mlp().params())?;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let batches = epoch_batches(images.rows(), cfg.batch_size, cfg.seed, "shuffle-gan", epoch);
        let mut latent_rng = SeededRng::stream(cfg.seed, "gan-latent", &[epoch as u64]);
        let (mut sum_d, mut sum_g) = (0.0, 0.0);
        for (b, idx) in batches.iter().enumerate() {
            let real = images.gather_rows(idx);
            let z: Tensor = latent_rng.normal_tensor(&[idx.len(), cfg.latent_dim]);
            let fake = gen.mlp().forward(&z)?;

            let d = discriminator_objective(disc.mlp(), &real, &fake)?;
            sum_d += check_finite(d.loss, epoch, b)?;
            step(&mut disc, &d.grads, &mut disc_state, epoch, b)?;

            let g = generator_objective(gen.mlp(), disc.mlp(), &z)?;
            sum_g += check_finite(g.loss, epoch, b)?;
            step(&mut gen, &g.grads, &mut gen_state, epoch, b)?;
        }
        let n = batches.len().max(1) as f64;
        history.push(GanEpoch {
            epoch: epoch + 1,
            loss_d: sum_d / n,
            loss_g: sum_g / n,
        });
    }
    cfg.stamp(&mut gen, cfg.epochs);
    cfg.stamp(&mut disc, cfg.epochs);
    Ok(GanOutcome {
        generator: gen,
        discriminator: disc,
        history,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

pub struct ClassifierOutcome {
    pub classifier: Network,
    pub history: Vec<ClassifierEpoch>,
}

/// Fraction of `images` the classifier labels correctly.
pub fn classifier_accuracy(classifier: &Network, images: &Tensor, labels: &[u8]) -> Result<f64> {
    let mut correct = 0usize;
    for start in (0..labels.len()).step_by(500) {
        let idx: Vec<usize> = (start..(start + 500).min(labels.len())).collect();
        let (_, pred) = classify(classifier, &images.gather_rows(&idx))?;
        correct += idx.iter().zip(&pred).filter(|(&i, &p)| labels[i] == p).count();
    }
    Ok(correct as f64 / labels.len().max(1) as f64)
}

pub fn train_classifier(
    images: &Tensor,
    labels: &[u8],
    eval: Option<(&Tensor, &[u8])>,
    cfg: &TrainConfig,
) -> Result<ClassifierOutcome> {
    cfg.validate()?;
    let mut clf = Network::init(NetworkSpec::classifier(cfg.labels), cfg.seed)?;
    let mut state = AdamState::new(cfg.adam, clf.mlp().params())?;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let batches = epoch_batches(images.rows(), cfg.batch_size, cfg.seed, "shuffle-classifier", epoch);
        let (mut sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for (b, idx) in batches.iter().enumerate() {
            let x = images.gather_rows(idx);
            let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            let targets = onehot(&y, cfg.labels);
            let trace = clf.mlp().forward_trace(&x)?;
            correct += (0..y.len())
                .filter(|&i| crate::models::argmax(trace.output().row(i)) == y[i] as usize)
                .count();
            seen += y.len();
            let obj = classifier_objective(clf.mlp(), &x, &targets)?;
            sum += check_finite(obj.loss, epoch, b)?;
            step(&mut clf, &obj.grads, &mut state, epoch, b)?;
        }
        let test_accuracy = match eval {
            Some((xi, yl)) => Some(classifier_accuracy(&clf, xi, yl)?),
            None => None,
        };
        history.push(ClassifierEpoch {
            epoch: epoch + 1,
            loss: sum / batches.len().max(1) as f64,
            train_accuracy: correct as f64 / seen.max(1) as f64,
            test_accuracy,
        });
    }
    cfg.stamp(&mut clf, cfg.epochs);
    Ok(ClassifierOutcome {
        classifier: clf,
        history,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncoderEpoch {
    pub epoch: usize,
    pub loss: EncoderLoss,
}

pub struct EncoderOutcome {
    pub encoder: Network,
    pub history: Vec<EncoderEpoch>,
}

/// Trains only the encoder; `generator` and `classifier` are borrowed immutably.
pub fn train_encoder(
    images: &Tensor,
    labels: &[u8],
    generator: &Network,
    classifier: &Network,
    cfg: &TrainConfig,
) -> Result<EncoderOutcome> {
    cfg.validate()?;
    generator.expect_role(Role::Generator)?;
    classifier.expect_role(Role::Classifier)?;
    if generator.latent_dim() != Some(cfg.latent_dim) {
        return Err(Error::InvalidArgument(format!(
            "generator latent dim {:?} differs from configured {}",
            generator.latent_dim(),
            cfg.latent_dim
        )));
    }
    let mut enc = Network::init(NetworkSpec::encoder(cfg.latent_dim), cfg.seed)?;
    let mut state = AdamState::new(cfg.adam, enc.mlp().params())?;
    let weights = EncoderWeights {
        kl: cfg.kl_weight,
        recon: cfg.recon_weight,
        lambda: cfg.lambda,
        recon_loss: cfg.recon,
    };
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let batches = epoch_batches(images.rows(), cfg.batch_size, cfg.seed, "shuffle-encoder", epoch);
        let mut noise = SeededRng::stream(cfg.seed, "encoder-noise", &[epoch as u64]);
        let mut sum = EncoderLoss::default();
        for (b, idx) in batches.iter().enumerate() {
            let x = images.gather_rows(idx);
            let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            let targets = onehot(&y, cfg.labels);
            let eps = noise.normal_tensor(&[idx.len(), cfg.latent_dim]);
            let (parts, grads) = encoder_objective(
                enc.mlp(),
                generator.mlp(),
                classifier.mlp(),
                &x,
                &targets,
                &eps,
                &weights,
            )?;
            check_finite(parts.total, epoch, b)?;
            sum.total += parts.total;
            sum.kl += parts.kl;
            sum.recon += parts.recon;
            sum.class += parts.class;
            step(&mut enc, &grads, &mut state, epoch, b)?;
        }
        let n = batches.len().max(1) as f64;
        history.push(EncoderEpoch {
            epoch: epoch + 1,
            loss: EncoderLoss {
                total: sum.total / n,
                kl: sum.kl / n,
                recon: sum.recon / n,
                class: sum.class / n,
            },
        });
    }
    cfg.stamp(&mut enc, cfg.epochs);
    enc.hyperparameters.insert("lambda".into(), cfg.lambda.to_string());
    enc.hyperparameters.insert("kl_weight".into(), cfg.kl_weight.to_string());
    enc.hyperparameters.insert("recon_weight".into(), cfg.recon_weight.to_string());
    Ok(EncoderOutcome { encoder: enc, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_images(n: usize, seed: u64) -> Tensor {
        let mut rng = SeededRng::new(seed);
        let mut t = Tensor::zeros(&[n, 784]);
        for v in t.data_mut() {
            *v = (2.0 * rng.uniform() - 1.0) as f32;
        }
        t
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let cfg = TrainConfig {
            epochs: 0,
            latent_dim: 10,
            ..TrainConfig::default()
        };
        let out = train_gan(&tiny_images(30, 1), &cfg).unwrap();
        let init = Network::init(NetworkSpec::generator(10), cfg.seed).unwrap();
        assert_eq!(out.generator.mlp(), init.mlp());
        assert!(out.history.is_empty());
    }

    #[test]
    fn latent_dim_must_divide_labels() {
        let cfg = TrainConfig {
            latent_dim: 15,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn partial_batch_dropped() {
        let b = epoch_batches(53, 25, 1, "x", 0);
        assert_eq!(b.len(), 2);
        assert!(b.iter().all(|c| c.len() == 25));
    }
}
