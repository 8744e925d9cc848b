use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    /// Generator and discriminator settings (also reused for the encoder).
    pub const GAN: AdamConfig = AdamConfig {
        eta: 2e-4,
        beta1: 0.9,
        beta2: 0.999,
        epsilon: 1e-8,
    };

    pub const CLASSIFIER: AdamConfig = AdamConfig {
        eta: 3e-5,
        beta1: 0.5,
        beta2: 0.99,
        epsilon: 1e-8,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = self.eta > 0.0
            && self.epsilon > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid Adam settings {self:?}")))
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState<T: Real = f32> {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Tensor<T>>,
    pub second_moment: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let first_moment: Vec<Tensor<T>> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        let second_moment = first_moment.clone();
        Ok(Self {
            config,
            step: 0,
            first_moment,
            second_moment,
        })
    }
}

/// One bias-corrected Adam update. Nothing is modified if any gradient entry is non-finite.
pub fn adam_step<T: Real>(params: &mut [&mut Tensor<T>], grads: &[Tensor<T>], state: &mut AdamState<T>) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::InvalidArgument(format!(
            "adam_step: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for (idx, (p, g)) in params.iter().zip(grads).enumerate() {
        g.ensure_shape("adam_step (grad vs param)", p.shape())?;
        state.first_moment[idx].ensure_shape("adam_step (moment vs param)", p.shape())?;
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient { param: idx });
        }
    }

    state.step += 1;
    let AdamConfig {
        eta,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as i32;
    let correct1 = 1.0 - beta1.powi(t);
    let correct2 = 1.0 - beta2.powi(t);
    let (b1, b2) = (T::from_f64_lossy(beta1), T::from_f64_lossy(beta2));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    let step_size = T::from_f64_lossy(eta / correct1);
    let inv_sqrt_c2 = T::from_f64_lossy(1.0 / correct2.sqrt());
    let eps = T::from_f64_lossy(epsilon);

    for (idx, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first_moment[idx].data_mut();
        let v = state.second_moment[idx].data_mut();
        for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            *p = *p - step_size * *m / (v.sqrt() * inv_sqrt_c2 + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::new(vec![1], vec![v]).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::<f64>::new(vec![2], vec![1.5, -2.0]).unwrap();
        let mut st = AdamState::new(AdamConfig::GAN, [&p]).unwrap();
        adam_step(&mut [&mut p], &[Tensor::zeros(&[2])], &mut st).unwrap();
        assert_eq!(p.data(), &[1.5, -2.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_eta() {
        // m̂ = g, v̂ = g², so Δ = η·g/(|g| + ε) ≈ η.
        let cfg = AdamConfig {
            eta: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        };
        let mut p = scalar(1.0);
        let mut st = AdamState::new(cfg, [&p]).unwrap();
        adam_step(&mut [&mut p], &[scalar(1.0)], &mut st).unwrap();
        let expected = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-12, "{}", p.data()[0]);
        assert!((p.data()[0] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn non_finite_gradient_rejected_without_update() {
        let mut p = scalar(1.0);
        let mut st = AdamState::new(AdamConfig::GAN, [&p]).unwrap();
        let err = adam_step(&mut [&mut p], &[scalar(f64::NAN)], &mut st).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { param: 0 }));
        assert_eq!(p.data(), &[1.0]);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn paper_presets() {
        assert_eq!((AdamConfig::GAN.eta, AdamConfig::GAN.beta1, AdamConfig::GAN.beta2), (0.0002, 0.9, 0.999));
        assert_eq!(
            (AdamConfig::CLASSIFIER.eta, AdamConfig::CLASSIFIER.beta1, AdamConfig::CLASSIFIER.beta2),
            (3e-5, 0.5, 0.99)
        );
    }

    #[test]
    fn invalid_settings_rejected() {
        let bad = AdamConfig { beta1: 1.0, ..AdamConfig::GAN };
        assert!(AdamState::<f32>::new(bad, []).is_err());
    }
}
