#![allow(dead_code)]

use std::path::Path;

use deep_lsd::config::RunConfig;
use deep_lsd::data::{write_idx_images, write_idx_labels, TEST_IMAGES, TEST_LABELS, TRAIN_IMAGES, TRAIN_LABELS};
use deep_lsd::models::{generate, Network, NetworkSpec, IMAGE_DIM};
use deep_lsd::{SeededRng, Tensor};

/// Images drawn from the seeded generator initialization itself, labelled by
/// the closest of ten anchor images in centred correlation. A GAN
/// seeded the same way starts at the data distribution.
pub fn generator_images(n: usize, latent_dim: usize, seed: u64) -> (Vec<[u8; IMAGE_DIM]>, Vec<u8>) {
    let g = Network::init(NetworkSpec::generator(latent_dim), seed).unwrap();
    let z: Tensor = SeededRng::stream(seed, "synthetic-latent", &[]).normal_tensor(&[n, latent_dim]);
    let x = generate(&g, &z).unwrap();
    let images: Vec<[u8; IMAGE_DIM]> = (0..n)
        .map(|i| {
            let mut img = [0u8; IMAGE_DIM];
            img.iter_mut()
                .zip(x.row(i))
                .for_each(|(p, &v)| *p = ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8);
            img
        })
        .collect();
    let mut mean = vec![0.0f64; IMAGE_DIM];
    for img in &images {
        mean.iter_mut().zip(img).for_each(|(m, &p)| *m += f64::from(p) / n as f64);
    }
    let centred: Vec<Vec<f64>> = images
        .iter()
        .map(|img| img.iter().zip(&mean).map(|(&v, m)| f64::from(v) - m).collect())
        .collect();
    let anchors = &centred[..10];
    let labels = centred
        .iter()
        .map(|x| {
            let score = |a: &Vec<f64>| -> f64 { x.iter().zip(a).map(|(u, v)| u * v).sum::<f64>() / a.iter().map(|v| v * v).sum::<f64>().sqrt() };
            (0..10).max_by(|&a, &b| score(&anchors[a]).total_cmp(&score(&anchors[b]))).unwrap() as u8
        })
        .collect();
    (images, labels)
}

pub fn write_synthetic_mnist(dir: &Path, train: usize, test: usize, latent_dim: usize, seed: u64) {
    std::fs::create_dir_all(dir).unwrap();
    let (images, labels) = generator_images(train + test, latent_dim, seed);
    write_idx_images(&dir.join(TRAIN_IMAGES), &images[..train]).unwrap();
    write_idx_labels(&dir.join(TRAIN_LABELS), &labels[..train]).unwrap();
    write_idx_images(&dir.join(TEST_IMAGES), &images[train..]).unwrap();
    write_idx_labels(&dir.join(TEST_LABELS), &labels[train..]).unwrap();
}

/// Small but complete pipeline configuration over synthetic data.
pub fn tiny_config(data: &Path, out: &Path) -> RunConfig {
    RunConfig {
        data_dir: data.to_path_buf(),
        out_dir: out.to_path_buf(),
        latent_dim: 20,
        sets_per_label: 2,
        set_size: 8,
        gan_epochs: 1,
        classifier_epochs: 150,
        encoder_epochs: 20,
        trials: 3,
        keep: vec![1, 2, 4],
        denoise_images: 3,
        rotate_images: 2,
        ..RunConfig::default()
    }
}

/// Writes synthetic data under `root/data` and returns the matching tiny
/// configuration writing to `root/out`.
pub fn tiny_setup(root: &Path) -> RunConfig {
    let cfg = tiny_config(&root.join("data"), &root.join("out"));
    write_synthetic_mnist(&cfg.data_dir, SYNTH_TRAIN, SYNTH_TEST, cfg.latent_dim, cfg.seed);
    cfg
}

pub mod gradcheck {
    use deep_lsd::models::{Network, NetworkSpec};
    use deep_lsd::nn::Mlp;
    use deep_lsd::nn::loss::onehot;
    use deep_lsd::training::{
        classifier_objective, discriminator_objective, encoder_objective, generator_objective, EncoderWeights,
        ReconLoss,
    };
    use deep_lsd::{SeededRng, Tensor};

    pub const STEP: f64 = 1e-4;
    pub const FLOOR: f64 = 1e-6;
    /// One-sided differences further apart than this (relative) mean the
    /// step crosses a ReLU kink; such parameters are redrawn.
    pub const KINK: f64 = 1e-2;

    pub struct Report {
        pub name: &'static str,
        pub checked: usize,
        pub kinks: usize,
        pub max_rel: f64,
    }

    fn net(spec: NetworkSpec, seed: u64) -> Mlp<f64> {
        Network::init(spec, seed).unwrap().mlp().cast::<f64>()
    }

    /// Central differences on `count` random parameters of `mlp`, against
    /// the analytic `grads`.
    fn compare(
        name: &'static str,
        mlp: &Mlp<f64>,
        grads: &[Tensor<f64>],
        count: usize,
        rng: &mut SeededRng,
        loss: impl Fn(&Mlp<f64>) -> f64,
    ) -> Report {
        let sizes: Vec<usize> = mlp.params().iter().map(|p| p.len()).collect();
        let base = loss(mlp);
        let (mut max_rel, mut checked, mut kinks) = (0.0f64, 0, 0);
        while checked < count {
            let p = rng.below(sizes.len());
            let i = rng.below(sizes[p]);
            let mut plus = mlp.clone();
            plus.params_mut()[p].data_mut()[i] += STEP;
            let mut minus = mlp.clone();
            minus.params_mut()[p].data_mut()[i] -= STEP;
            let (lp, lm) = (loss(&plus), loss(&minus));
            let (forward, backward) = ((lp - base) / STEP, (base - lm) / STEP);
            if (forward - backward).abs() > KINK * forward.abs().max(backward.abs()).max(FLOOR) {
                kinks += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * STEP);
            let analytic = grads[p].data()[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
            max_rel = max_rel.max(rel);
            checked += 1;
        }
        Report {
            name,
            checked,
            kinks,
            max_rel,
        }
    }

    /// Gradient checks of all four training objectives in f64.
    pub fn run_all(per_network: usize, seed: u64) -> Vec<Report> {
        let m = 20;
        let batch = 4;
        let mut rng = SeededRng::stream(seed, "gradcheck", &[]);
        let x: Tensor<f64> = rng.normal_tensor::<f64>(&[batch, 784]).map(|v| v.tanh());
        let labels: Vec<u8> = (0..batch).map(|i| (i * 3 % 10) as u8).collect();
        let targets: Tensor<f64> = onehot(&labels, 10);
        let z: Tensor<f64> = rng.normal_tensor(&[batch, m]);
        let eps: Tensor<f64> = rng.normal_tensor(&[batch, m]);

        let g = net(NetworkSpec::generator(m), seed);
        let d = net(NetworkSpec::discriminator(), seed);
        let c = net(NetworkSpec::classifier(10), seed);
        let e = net(NetworkSpec::encoder(m), seed);
        let fake = g.forward(&z).unwrap();

        let mut out = Vec::new();
        let obj = classifier_objective(&c, &x, &targets).unwrap();
        out.push(compare("classifier", &c, &obj.grads, per_network, &mut rng, |n| {
            classifier_objective(n, &x, &targets).unwrap().loss
        }));
        let obj = discriminator_objective(&d, &x, &fake).unwrap();
        out.push(compare("discriminator", &d, &obj.grads, per_network, &mut rng, |n| {
            discriminator_objective(n, &x, &fake).unwrap().loss
        }));
        let obj = generator_objective(&g, &d, &z).unwrap();
        out.push(compare("generator", &g, &obj.grads, per_network, &mut rng, |n| {
            generator_objective(n, &d, &z).unwrap().loss
        }));
        for (name, recon) in [("encoder-hinge", ReconLoss::Hinge), ("encoder-mse", ReconLoss::Mse)] {
            let w = EncoderWeights {
                kl: 1.0,
                recon: 1.0,
                lambda: 100.0,
                recon_loss: recon,
            };
            let (_, grads) = encoder_objective(&e, &g, &c, &x, &targets, &eps, &w).unwrap();
            out.push(compare(name, &e, &grads, per_network, &mut rng, |n| {
                encoder_objective(n, &g, &c, &x, &targets, &eps, &w).unwrap().0.total
            }));
        }
        out
    }
}

/// Gram-Schmidt basis from `m` Gaussian means (l labels), seeded.
pub fn random_basis(m: usize, labels: usize, seed: u64) -> deep_lsd::basis::QuasiEigenBasis {
    use deep_lsd::basis::{gram_schmidt, MeanVector};
    let mut rng = SeededRng::stream(seed, "random-basis", &[]);
    let means: Vec<MeanVector> = (0..m)
        .map(|k| MeanVector {
            label: k % labels,
            set_index: k / labels + 1,
            values: (0..m).map(|_| rng.normal::<f64>()).collect(),
        })
        .collect();
    gram_schmidt(&means, m as f64, labels).unwrap()
}

pub const SYNTH_TRAIN: usize = 1000;
pub const SYNTH_TEST: usize = 100;
