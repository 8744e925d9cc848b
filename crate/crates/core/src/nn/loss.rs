//! Scalar objectives with their gradients.
//!
//! Loss values are accumulated in `f64`. Gradients come back in the tensor
//! precision, already divided by the batch (and pixel) counts.

use crate::error::{Error, Result};
use crate::nn::dense::sigmoid;
use crate::tensor::{Real, Tensor};

/// Probability clamp for the discriminator's log terms.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct Loss<T: Real> {
    pub value: f64,
    pub grad: Tensor<T>,
}

/// Reads a loss tensor as a scalar; anything but a single element is rejected.
pub fn scalar_value<T: Real>(t: &Tensor<T>) -> Result<f64> {
    if t.len() != 1 {
        return Err(Error::NonScalarLoss(t.shape().to_vec()));
    }
    Ok(t.data()[0].as_f64())
}

fn same_shape<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() || a.shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean softmax cross-entropy of `logits` against one-hot rows. Gradient is w.r.t. the logits.
pub fn cross_entropy<T: Real>(logits: &Tensor<T>, onehot: &Tensor<T>) -> Result<Loss<T>> {
    same_shape("cross_entropy", logits, onehot)?;
    let batch = logits.rows();
    let scale = 1.0 / batch as f64;
    let mut grad = Tensor::zeros(logits.shape());
    let mut total = 0.0;
    for i in 0..batch {
        let target = onehot_index(onehot.row(i)).ok_or(Error::NotOneHot { row: i })?;
        let row: Vec<f64> = logits.row(i).iter().map(|v| v.as_f64()).collect();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - row[target];
        for (j, (g, &v)) in grad.row_mut(i).iter_mut().zip(&row).enumerate() {
            let p = (v - log_z).exp();
            let y = if j == target { 1.0 } else { 0.0 };
            *g = T::from_f64_lossy((p - y) * scale);
        }
    }
    Ok(Loss {
        value: total * scale,
        grad,
    })
}

fn onehot_index<T: Real>(row: &[T]) -> Option<usize> {
    let mut hot = None;
    for (j, &v) in row.iter().enumerate() {
        if v == T::one() {
            if hot.is_some() {
                return None;
            }
            hot = Some(j);
        } else if v != T::zero() {
            return None;
        }
    }
    hot
}

pub fn onehot<T: Real>(labels: &[u8], classes: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        t.row_mut(i)[l as usize] = T::one();
    }
    t
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Jensen-Shannon GAN objectives on discriminator probabilities.
///
/// `loss_D = −mean log D(x) − mean log(1 − D(G(z)))`, `loss_G = −mean log D(G(z))`.
pub fn gan_losses<T: Real>(disc_real: &Tensor<T>, disc_fake: &Tensor<T>) -> Result<(f64, f64)> {
    if disc_real.rows() != disc_fake.rows() {
        return Err(Error::ShapeMismatch {
            op: "gan_losses",
            left: disc_real.shape().to_vec(),
            right: disc_fake.shape().to_vec(),
        });
    }
    let mean = |t: &Tensor<T>, f: &dyn Fn(f64) -> f64| -> f64 {
        t.data().iter().map(|&p| f(clamp_prob(p.as_f64()))).sum::<f64>() / t.len() as f64
    };
    let real_term = mean(disc_real, &|p| -p.ln());
    let fake_term = mean(disc_fake, &|p| -(1.0 - p).ln());
    let gen = mean(disc_fake, &|p| -p.ln());
    Ok((real_term + fake_term, gen))
}

/// Value of the discriminator objective evaluated from logits (no clamp needed).
pub fn discriminator_loss_from_logits<T: Real>(real_logits: &Tensor<T>, fake_logits: &Tensor<T>) -> f64 {
    let softplus = |x: f64| x.max(0.0) + (-x.abs()).exp().ln_1p();
    let real = real_logits.data().iter().map(|v| softplus(-v.as_f64())).sum::<f64>() / real_logits.len() as f64;
    let fake = fake_logits.data().iter().map(|v| softplus(v.as_f64())).sum::<f64>() / fake_logits.len() as f64;
    real + fake
}

/// Non-saturating generator objective from logits.
pub fn generator_loss_from_logits<T: Real>(fake_logits: &Tensor<T>) -> f64 {
    let softplus = |x: f64| x.max(0.0) + (-x.abs()).exp().ln_1p();
    fake_logits.data().iter().map(|v| softplus(-v.as_f64())).sum::<f64>() / fake_logits.len() as f64
}

/// Gradients of `loss_D` w.r.t. the real and fake logits.
pub fn discriminator_logit_grads<T: Real>(real_logits: &Tensor<T>, fake_logits: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let nr = T::from_f64_lossy(1.0 / real_logits.len() as f64);
    let nf = T::from_f64_lossy(1.0 / fake_logits.len() as f64);
    (
        real_logits.map(|a| (sigmoid(a) - T::one()) * nr),
        fake_logits.map(|a| sigmoid(a) * nf),
    )
}

/// Gradient of the non-saturating `loss_G` w.r.t. the fake logits.
pub fn generator_logit_grad<T: Real>(fake_logits: &Tensor<T>) -> Tensor<T> {
    let n = T::from_f64_lossy(1.0 / fake_logits.len() as f64);
    fake_logits.map(|a| (sigmoid(a) - T::one()) * n)
}

#[derive(Clone, Debug)]
pub struct KlLoss<T: Real> {
    pub value: f64,
    pub grad_mu: Tensor<T>,
    pub grad_log_sigma: Tensor<T>,
}

/// KL(N(μ, σ²) ‖ N(0, 1)) summed over latent coordinates, averaged over the batch.
pub fn kl_gauss<T: Real>(mu: &Tensor<T>, log_sigma: &Tensor<T>) -> Result<KlLoss<T>> {
    same_shape("kl_gauss", mu, log_sigma)?;
    let scale = 1.0 / mu.rows() as f64;
    let mut total = 0.0;
    let mut grad_mu = Tensor::zeros(mu.shape());
    let mut grad_ls = Tensor::zeros(mu.shape());
    for (idx, (&m, &ls)) in mu.data().iter().zip(log_sigma.data()).enumerate() {
        let (m, ls) = (m.as_f64(), ls.as_f64());
        let var = (2.0 * ls).exp();
        total += 0.5 * (m * m + var - 1.0 - 2.0 * ls);
        grad_mu.data_mut()[idx] = T::from_f64_lossy(m * scale);
        grad_ls.data_mut()[idx] = T::from_f64_lossy((var - 1.0) * scale);
    }
    Ok(KlLoss {
        value: total * scale,
        grad_mu,
        grad_log_sigma: grad_ls,
    })
}

/// Mean over batch and pixels of `max(0, 1 − x·x̂)`. Gradient is w.r.t. `x_pred`.
pub fn hinge_recon<T: Real>(x_true: &Tensor<T>, x_pred: &Tensor<T>) -> Result<Loss<T>> {
    same_shape("hinge_recon", x_true, x_pred)?;
    let scale = 1.0 / x_true.len() as f64;
    let mut grad = Tensor::zeros(x_pred.shape());
    let mut total = 0.0;
    for (idx, (&x, &y)) in x_true.data().iter().zip(x_pred.data()).enumerate() {
        let (x, y) = (x.as_f64(), y.as_f64());
        let margin = 1.0 - x * y;
        if margin > 0.0 {
            total += margin;
            grad.data_mut()[idx] = T::from_f64_lossy(-x * scale);
        }
    }
    Ok(Loss {
        value: total * scale,
        grad,
    })
}

/// Mean squared reconstruction error, the configurable alternative to the hinge term.
pub fn mse_recon<T: Real>(x_true: &Tensor<T>, x_pred: &Tensor<T>) -> Result<Loss<T>> {
    same_shape("mse_recon", x_true, x_pred)?;
    let scale = 1.0 / x_true.len() as f64;
    let mut grad = Tensor::zeros(x_pred.shape());
    let mut total = 0.0;
    for (idx, (&x, &y)) in x_true.data().iter().zip(x_pred.data()).enumerate() {
        let d = y.as_f64() - x.as_f64();
        total += d * d;
        grad.data_mut()[idx] = T::from_f64_lossy(2.0 * d * scale);
    }
    Ok(Loss {
        value: total * scale,
        grad,
    })
}
