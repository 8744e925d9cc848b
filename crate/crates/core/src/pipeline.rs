//! Pipeline stages behind the CLI subcommands. Each stage reads its inputs
//! from the output directory, refuses to run if an upstream artifact is
//! missing, and writes checkpoints, CSV tables and PGM images back into it.

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use crate::basis::{
    average_set, collect_all_sets, convergence_check, gram_matrix, gram_schmidt, label_pdf_histograms,
    processing_order, standard_normal_pdf, LabelHistogram, QuasiEigenBasis, HIST_BINS,
};
use crate::config::RunConfig;
use crate::data::{load_split, mnist_paths, MnistDataset, Split};
use crate::error::{Error, Result};
use crate::image::{heatmap, image_grid};
use crate::lsd::{amplitude_rank_profiles, denoise, encode_eval, ensemble_accuracy, mean_std, PROFILE_BINS};
use crate::models::{classify, generate, load_checkpoint, save_checkpoint, Network, Role};
use crate::nn::AdamConfig;
use crate::operators::decode_trajectories;
use crate::rng::SeededRng;
use crate::tensor::Tensor;
use crate::training::{train_classifier, train_encoder, train_gan, TrainConfig};
use crate::verify::{verify_basis, Check};

pub const GENERATOR: &str = "generator.lsdc";
pub const DISCRIMINATOR: &str = "discriminator.lsdc";
pub const CLASSIFIER: &str = "classifier.lsdc";
pub const ENCODER: &str = "encoder.lsdc";
pub const BASIS: &str = "basis.lsdb";

const VERIFY_SAMPLES: usize = 1000;

/// Exclusive hold on an output directory for one invocation.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn producer(file: &str) -> &'static str {
    match file {
        GENERATOR | DISCRIMINATOR => "train-gan",
        CLASSIFIER => "train-classifier",
        ENCODER => "train-encoder",
        _ => "build-basis",
    }
}

fn artifact(cfg: &RunConfig, file: &str) -> Result<PathBuf> {
    let path = cfg.out_dir.join(file);
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact {
            path,
            producer: producer(file),
        })
    }
}

fn load_network(cfg: &RunConfig, file: &str, role: Role) -> Result<Network> {
    let net = load_checkpoint(&artifact(cfg, file)?)?;
    net.expect_role(role)?;
    Ok(net)
}

pub fn load_basis(cfg: &RunConfig) -> Result<QuasiEigenBasis> {
    QuasiEigenBasis::load(&artifact(cfg, BASIS)?)
}

fn dataset(cfg: &RunConfig, split: Split) -> Result<MnistDataset> {
    if let Some(missing) = mnist_paths(&cfg.data_dir).into_iter().find(|p| !p.is_file()) {
        return Err(Error::Config(format!("MNIST file {} not found", missing.display())));
    }
    let ds = load_split(&cfg.data_dir, split)?;
    let limit = match split {
        Split::Train => cfg.train_limit,
        Split::Test => cfg.test_limit,
    };
    Ok(if limit > 0 { ds.truncate(limit) } else { ds })
}

fn train_config(cfg: &RunConfig, epochs: usize, adam: AdamConfig) -> TrainConfig {
    TrainConfig {
        batch_size: cfg.batch_size,
        epochs,
        latent_dim: cfg.latent_dim,
        labels: cfg.labels,
        lambda: cfg.lambda,
        kl_weight: cfg.kl_weight,
        recon_weight: cfg.recon_weight,
        recon: cfg.recon,
        adam,
        seed: cfg.seed,
    }
}

fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_report(path: &Path, pairs: &[(&str, String)]) -> Result<()> {
    let text: String = pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    fs::write(path, text)?;
    Ok(())
}

fn begin(cfg: &RunConfig, stage: &str) -> Result<DirLock> {
    cfg.validate()?;
    let lock = DirLock::acquire(&cfg.out_dir)?;
    let resolved = cfg.resolved();
    eprint!("[{stage}] resolved config:\n{resolved}");
    fs::write(cfg.out_dir.join(format!("{stage}.config")), resolved)?;
    Ok(lock)
}

fn s<T: ToString>(v: T) -> String {
    v.to_string()
}

pub fn run_train_gan(cfg: &RunConfig) -> Result<()> {
    let _lock = begin(cfg, "train-gan")?;
    let train = dataset(cfg, Split::Train)?;
    let out = train_gan(&train.images, &train_config(cfg, cfg.gan_epochs, AdamConfig::GAN))?;
    save_checkpoint(&out.generator, &cfg.out_dir.join(GENERATOR))?;
    save_checkpoint(&out.discriminator, &cfg.out_dir.join(DISCRIMINATOR))?;
    write_csv(
        &cfg.out_dir.join("gan_loss.csv"),
        &["epoch", "loss_d", "loss_g"],
        out.history.iter().map(|e| vec![s(e.epoch), s(e.loss_d), s(e.loss_g)]),
    )?;
    let z: Tensor = SeededRng::stream(cfg.seed, "samples", &[]).normal_tensor(&[25, cfg.latent_dim]);
    image_grid(&generate(&out.generator, &z)?, 5, 5)?.write(&cfg.out_dir.join("gan_samples.pgm"))
}

pub fn run_train_classifier(cfg: &RunConfig) -> Result<()> {
    let _lock = begin(cfg, "train-classifier")?;
    let train = dataset(cfg, Split::Train)?;
    let test = dataset(cfg, Split::Test)?;
    let out = train_classifier(
        &train.images,
        &train.labels,
        Some((&test.images, &test.labels)),
        &train_config(cfg, cfg.classifier_epochs, AdamConfig::CLASSIFIER),
    )?;
    save_checkpoint(&out.classifier, &cfg.out_dir.join(CLASSIFIER))?;
    write_csv(
        &cfg.out_dir.join("classifier_loss.csv"),
        &["epoch", "loss", "train_accuracy", "test_accuracy"],
        out.history.iter().map(|e| {
            vec![
                s(e.epoch),
                s(e.loss),
                s(e.train_accuracy),
                e.test_accuracy.map(s).unwrap_or_default(),
            ]
        }),
    )
}

pub fn run_train_encoder(cfg: &RunConfig) -> Result<()> {
    let _lock = begin(cfg, "train-encoder")?;
    let generator = load_network(cfg, GENERATOR, Role::Generator)?;
    let classifier = load_network(cfg, CLASSIFIER, Role::Classifier)?;
    let train = dataset(cfg, Split::Train)?;
    let out = train_encoder(
        &train.images,
        &train.labels,
        &generator,
        &classifier,
        &train_config(cfg, cfg.encoder_epochs, AdamConfig::GAN),
    )?;
    save_checkpoint(&out.encoder, &cfg.out_dir.join(ENCODER))?;
    write_csv(
        &cfg.out_dir.join("encoder_loss.csv"),
        &["epoch", "total", "kl", "recon", "class"],
        out.history.iter().map(|e| {
            vec![s(e.epoch), s(e.loss.total), s(e.loss.kl), s(e.loss.recon), s(e.loss.class)]
        }),
    )?;
    let test = dataset(cfg, Split::Test)?;
    let n = test.len().min(10);
    let x = test.images.gather_rows(&(0..n).collect::<Vec<_>>());
    let decoded = generate(&generator, &encode_eval(&out.encoder, &x, cfg.seed, 0)?)?;
    let mut both = x.into_data();
    both.extend(decoded.into_data());
    image_grid(&Tensor::new(vec![2 * n, crate::models::IMAGE_DIM], both)?, 2, n)?
        .write(&cfg.out_dir.join("encoder_reconstructions.pgm"))
}

fn gram_csv(path: &Path, g: &[Vec<f64>]) -> Result<()> {
    let mut header = vec!["k".to_string()];
    header.extend((0..g.len()).map(s));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        path,
        &header,
        g.iter().enumerate().map(|(k, row)| {
            let mut r = vec![s(k)];
            r.extend(row.iter().map(s));
            r
        }),
    )
}

fn decode_rows(generator: &Network, vectors: &[Vec<f64>], m: usize) -> Result<Tensor> {
    let flat: Vec<f32> = vectors.iter().flatten().map(|&v| v as f32).collect();
    generate(generator, &Tensor::new(vec![vectors.len(), m], flat)?)
}

pub fn run_build_basis(cfg: &RunConfig) -> Result<()> {
    let _lock = begin(cfg, "build-basis")?;
    let generator = load_network(cfg, GENERATOR, Role::Generator)?;
    let classifier = load_network(cfg, CLASSIFIER, Role::Classifier)?;
    let encoder = load_network(cfg, ENCODER, Role::Encoder)?;
    let train = dataset(cfg, Split::Train)?;
    let min_prob = (cfg.min_prob > 0.0).then_some(cfg.min_prob);
    let collected = collect_all_sets(
        &train.images,
        &encoder,
        &generator,
        &classifier,
        cfg.labels,
        cfg.set_size,
        min_prob,
        cfg.seed,
    )?;
    let means = processing_order(collected.sets.iter().map(average_set).collect::<Result<_>>()?);
    let m = cfg.latent_dim;
    let basis = gram_schmidt(&means, m as f64, cfg.labels)?;
    basis.check()?;
    basis.save(&cfg.out_dir.join(BASIS))?;

    let eta: Vec<Vec<f64>> = means.iter().map(|mv| mv.values.clone()).collect();
    let g_means = gram_matrix(&eta)?;
    let g_basis = gram_matrix(basis.vectors())?;
    gram_csv(&cfg.out_dir.join("gram_means.csv"), &g_means)?;
    gram_csv(&cfg.out_dir.join("gram_basis.csv"), &g_basis)?;
    heatmap(&g_means, 4).write(&cfg.out_dir.join("gram_means.pgm"))?;
    heatmap(&g_basis, 4).write(&cfg.out_dir.join("gram_basis.pgm"))?;

    let n = cfg.sets_per_label;
    image_grid(&decode_rows(&generator, &eta, m)?, n, cfg.labels)?.write(&cfg.out_dir.join("means_decoded.pgm"))?;
    image_grid(&decode_rows(&generator, basis.vectors(), m)?, n, cfg.labels)?
        .write(&cfg.out_dir.join("basis_decoded.pgm"))?;

    let sampled: Vec<_> = collected.sets.iter().filter(|st| st.set_index > 1).collect();
    let encoded: Vec<_> = collected.sets.iter().filter(|st| st.set_index == 1).collect();
    for (name, group) in [("histograms_sampled.csv", &sampled), ("histograms_encoded.csv", &encoded)] {
        let hists = label_pdf_histograms(group, cfg.labels);
        write_csv(
            &cfg.out_dir.join(name),
            &["label", "bin_center", "count", "density", "normal_pdf"],
            hists.iter().flat_map(|h| {
                (0..HIST_BINS).map(move |j| {
                    let x = LabelHistogram::bin_center(j);
                    vec![s(h.label), format!("{x:.1}"), s(h.counts[j]), s(h.density(j)), s(standard_normal_pdf(x))]
                })
            }),
        )?;
        write_csv(
            &cfg.out_dir.join(name.replace(".csv", "_overflow.csv")),
            &["label", "underflow", "overflow", "total"],
            hists.iter().map(|h| vec![s(h.label), s(h.underflow), s(h.overflow), s(h.total)]),
        )?;
    }

    let v = cfg.set_size;
    let mut prefixes: Vec<usize> = [v / 16, v / 8, v / 4, v / 2, v].into_iter().filter(|&p| p > 0).collect();
    prefixes.dedup();
    let mut rows = Vec::new();
    for set in &collected.sets {
        for p in convergence_check(set, &prefixes)? {
            rows.push(vec![s(set.label), s(set.set_index), s(p.size), s(p.mean_sem)]);
        }
    }
    write_csv(&cfg.out_dir.join("convergence.csv"), &["label", "set", "prefix", "mean_sem"], rows)?;
    write_csv(
        &cfg.out_dir.join("sampling.csv"),
        &["label", "set", "attempts", "accepted"],
        collected
            .sampling
            .iter()
            .map(|(l, i, st)| vec![s(l), s(i), s(st.attempts), s(st.accepted)]),
    )
}

pub fn run_lsd_classify(cfg: &RunConfig) -> Result<()> {
    let _lock = begin(cfg, "lsd-classify")?;
    let basis = load_basis(cfg)?;
    let generator = load_network(cfg, GENERATOR, Role::Generator)?;
    let classifier = load_network(cfg, CLASSIFIER, Role::Classifier)?;
    let encoder = load_network(cfg, ENCODER, Role::Encoder)?;
    let test = dataset(cfg, Split::Test)?;
    let report = ensemble_accuracy(
        &test.images,
        &test.labels,
        &encoder,
        &generator,
        &classifier,
        &basis,
        cfg.trials,
        cfg.seed,
    )?;
    let col = |f: fn(&crate::lsd::TrialAccuracy) -> f64| report.trials.iter().map(f).collect::<Vec<_>>();
    let (lsd, encdec, clf) = (col(|t| t.lsd), col(|t| t.encdec), col(|t| t.classifier));
    let (lsd_m, lsd_s) = mean_std(&lsd);
    let (enc_m, enc_s) = mean_std(&encdec);
    let (clf_m, clf_s) = mean_std(&clf);
    let mut rows: Vec<Vec<String>> = report
        .trials
        .iter()
        .map(|t| vec![s(t.trial), s(t.lsd), s(t.encdec), s(t.classifier)])
        .collect();
    rows.push(vec!["mean".into(), s(lsd_m), s(enc_m), s(clf_m)]);
    rows.push(vec!["std".into(), s(lsd_s), s(enc_s), s(clf_s)]);
    write_csv(&cfg.out_dir.join("accuracy.csv"), &["trial", "lsd_acc", "encdec_acc", "clf_acc"], rows)?;

    let curve = report.cumulative();
    write_csv(
        &cfg.out_dir.join("cumulative.csv"),
        &["n", "probability"],
        curve.iter().enumerate().map(|(i, p)| vec![s(i + 1), s(p)]),
    )?;

    let profiles = amplitude_rank_profiles(&report.first_trial);
    write_csv(
        &cfg.out_dir.join("rank_profiles.csv"),
        &["image_id", "truth_rank", "rank", "normalized_amplitude"],
        profiles.rows.iter().map(|&(i, t, r, a)| vec![s(i), s(t), s(r), s(a)]),
    )?;
    let mut pdf_rows = Vec::new();
    for g in 0..3 {
        for p in 0..3 {
            let total: u64 = profiles.pdfs[g][p].iter().sum();
            for (b, &count) in profiles.pdfs[g][p].iter().enumerate() {
                let center = (b as f64 + 0.5) / PROFILE_BINS as f64;
                let density = if total > 0 { count as f64 * PROFILE_BINS as f64 / total as f64 } else { 0.0 };
                pdf_rows.push(vec![s(g + 1), s(p + 2), s(center), s(count), s(density)]);
            }
        }
    }
    write_csv(
        &cfg.out_dir.join("rank_pdfs.csv"),
        &["truth_rank", "amplitude_rank", "bin_center", "count", "density"],
        pdf_rows,
    )?;

    let set1 = report.set1_fraction();
    let top = |n: usize| curve.get(n - 1).copied().unwrap_or(1.0);
    write_report(
        &cfg.out_dir.join("lsd_report.txt"),
        &[
            ("images", s(test.len())),
            ("trials", s(cfg.trials)),
            ("classifier_accuracy", s(clf_m)),
            ("encdec_accuracy_mean", s(enc_m)),
            ("encdec_accuracy_std", s(enc_s)),
            ("lsd_accuracy_mean", s(lsd_m)),
            ("lsd_accuracy_std", s(lsd_s)),
            ("lsd_accuracy_pooled", s(report.pooled_lsd_accuracy())),
            ("top1", s(top(1))),
            ("top2", s(top(2))),
            ("top3", s(top(3))),
            ("top4", s(top(4))),
            ("set1_fraction", s(set1)),
            ("set1_fraction_ge_0.98", s(set1 >= 0.98)),
            ("set1_fraction_ge_0.99", s(set1 >= 0.99)),
            ("truth_rank_group_sizes", format!("{:?}", profiles.group_sizes)),
        ],
    )
}

pub fn run_denoise(cfg: &RunConfig) -> Result<()> {
    let _lock = begin(cfg, "denoise")?;
    let basis = load_basis(cfg)?;
    let generator = load_network(cfg, GENERATOR, Role::Generator)?;
    let classifier = load_network(cfg, CLASSIFIER, Role::Classifier)?;
    let encoder = load_network(cfg, ENCODER, Role::Encoder)?;
    let test = dataset(cfg, Split::Test)?;
    let n = test.len().min(cfg.denoise_images);
    let picked = test.subset(&(0..n).collect::<Vec<_>>());
    let strip = denoise(&picked.images, &cfg.keep, &encoder, &generator, &basis, cfg.renorm, cfg.seed)?;
    let per_row = cfg.keep.len() + 2;
    image_grid(&strip, n, per_row)?.write(&cfg.out_dir.join("denoise.pgm"))?;
    let (_, labels) = classify(&classifier, &strip)?;
    let kinds: Vec<String> = ["truth".to_string(), "full".to_string()]
        .into_iter()
        .chain(cfg.keep.iter().map(|k| format!("k{k}")))
        .collect();
    write_csv(
        &cfg.out_dir.join("denoise.csv"),
        &["image", "truth", "column", "classifier_label"],
        (0..n * per_row).map(|i| {
            vec![s(i / per_row), s(picked.labels[i / per_row]), kinds[i % per_row].clone(), s(labels[i])]
        }),
    )
}

pub fn run_rotate(cfg: &RunConfig) -> Result<()> {
    let _lock = begin(cfg, "rotate")?;
    let basis = load_basis(cfg)?;
    let generator = load_network(cfg, GENERATOR, Role::Generator)?;
    let classifier = load_network(cfg, CLASSIFIER, Role::Classifier)?;
    let encoder = load_network(cfg, ENCODER, Role::Encoder)?;
    let test = dataset(cfg, Split::Test)?;
    let zeros: Vec<usize> = (0..test.len())
        .filter(|&i| test.labels[i] == 0)
        .take(cfg.rotate_images)
        .collect();
    if zeros.is_empty() {
        return Err(Error::InvalidArgument("the test split holds no label-0 images".into()));
    }
    let z = encode_eval(&encoder, &test.images.gather_rows(&zeros), cfg.seed, 0)?;
    let starts: Vec<Vec<f64>> = (0..z.rows())
        .map(|i| z.row(i).iter().map(|&v| f64::from(v)).collect())
        .collect();
    let traj = decode_trajectories(&starts, &basis, &generator, &classifier, cfg.steps, cfg.dtheta)?;
    image_grid(&traj.images, traj.rows(), traj.iterations)?.write(&cfg.out_dir.join("rotation.pgm"))?;
    write_csv(
        &cfg.out_dir.join("rotation.csv"),
        &["row", "iteration", "classifier_label", "classifier_confidence", "latent_norm"],
        traj.records.iter().map(|r| {
            vec![s(r.row), s(r.iteration), s(r.classifier_label), s(r.classifier_confidence), s(r.latent_norm)]
        }),
    )?;
    let success = traj.successful_transitions(cfg.steps);
    write_csv(
        &cfg.out_dir.join("rotation_transitions.csv"),
        &["from", "to", "endpoint_iteration", "success"],
        success
            .iter()
            .enumerate()
            .map(|(a, ok)| vec![s(a), s(a + 1), s((a + 1) * cfg.steps), s(ok)]),
    )
}

pub fn run_verify(cfg: &RunConfig) -> Result<Vec<Check>> {
    let basis = load_basis(cfg)?;
    let generator = match load_network(cfg, GENERATOR, Role::Generator) {
        Ok(g) => Some(g),
        Err(Error::MissingArtifact { .. }) => None,
        Err(e) => return Err(e),
    };
    verify_basis(&basis, generator.as_ref(), VERIFY_SAMPLES, cfg.seed)
}

/// train-gan, train-classifier, train-encoder, build-basis, lsd-classify,
/// denoise and rotate in order.
pub fn run_all(cfg: &RunConfig) -> Result<()> {
    run_train_gan(cfg)?;
    run_train_classifier(cfg)?;
    run_train_encoder(cfg)?;
    run_build_basis(cfg)?;
    run_lsd_classify(cfg)?;
    run_denoise(cfg)?;
    run_rotate(cfg)
}
