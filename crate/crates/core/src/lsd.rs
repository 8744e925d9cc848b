//! Latent spectral decomposition: coefficients `c_k = ⟨ξ_k|z⟩ / C`, the
//! largest-amplitude classifier, rank analytics and truncation denoising.
//!
//! Amplitude ties are always broken toward the lower flat index.

use crate::basis::QuasiEigenBasis;
use crate::error::{Error, Result};
use crate::models::{classify, encode_with_noise, generate, Network};
use crate::operators::renormalize;
use crate::rng::SeededRng;
use crate::tensor::{dot, Tensor};

const EVAL_CHUNK: usize = 500;
pub const PROFILE_BINS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub coefficients: Vec<f64>,
    /// Flat indices by |c| descending.
    pub rank_order: Vec<usize>,
}

impl Decomposition {
    pub fn winner(&self) -> usize {
        self.rank_order[0]
    }

    /// |c| at each rank divided by the largest |c|.
    pub fn normalized_amplitudes(&self) -> Vec<f64> {
        let max = self.coefficients[self.winner()].abs();
        self.rank_order
            .iter()
            .map(|&k| if max > 0.0 { self.coefficients[k].abs() / max } else { 0.0 })
            .collect()
    }
}

pub fn rank_order(c: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&a, &b| c[b].abs().total_cmp(&c[a].abs()).then(a.cmp(&b)));
    order
}

pub fn decompose(z: &[f64], basis: &QuasiEigenBasis) -> Result<Decomposition> {
    basis.check()?;
    decompose_unchecked(z, basis)
}

fn decompose_unchecked(z: &[f64], basis: &QuasiEigenBasis) -> Result<Decomposition> {
    if z.len() != basis.dim() {
        return Err(Error::ShapeMismatch {
            op: "decompose (latent vs basis)",
            left: vec![z.len()],
            right: vec![basis.dim()],
        });
    }
    let c_inv = 1.0 / basis.norm_constant();
    let coefficients: Vec<f64> = basis.vectors().iter().map(|xi| dot(xi, z) * c_inv).collect();
    let rank_order = rank_order(&coefficients);
    Ok(Decomposition {
        coefficients,
        rank_order,
    })
}

/// Σ c_k ξ_k over the `keep` largest-|c| components.
pub fn reconstruct(d: &Decomposition, basis: &QuasiEigenBasis, keep: usize) -> Result<Vec<f64>> {
    let m = basis.dim();
    if keep == 0 || keep > m || d.coefficients.len() != m {
        return Err(Error::InvalidArgument(format!(
            "keep must lie in 1..={m}, got {keep}"
        )));
    }
    let mut z = vec![0.0; m];
    for &k in &d.rank_order[..keep] {
        let c = d.coefficients[k];
        for (zi, xi) in z.iter_mut().zip(basis.vector(k)) {
            *zi += c * xi;
        }
    }
    Ok(z)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LsdLabel {
    pub label: usize,
    /// (α, i) of the winning direction.
    pub winner: (usize, usize),
    pub decomposition: Decomposition,
}

pub fn classify_lsd(z: &[f64], basis: &QuasiEigenBasis) -> Result<LsdLabel> {
    let decomposition = decompose(z, basis)?;
    let winner = basis.label_set(decomposition.winner());
    Ok(LsdLabel {
        label: winner.0,
        winner,
        decomposition,
    })
}

/// 1-based rank of the first direction carrying `truth`.
pub fn rank_of_truth(d: &Decomposition, basis: &QuasiEigenBasis, truth: usize) -> Result<usize> {
    d.rank_order
        .iter()
        .position(|&k| basis.label_of(k) == truth)
        .map(|p| p + 1)
        .ok_or_else(|| Error::InvalidArgument(format!("label {truth} has no basis direction")))
}

/// `curve[n − 1]` = fraction of truth ranks ≤ n, for n = 1..=M.
pub fn cumulative_topn(rank_counts: &[u64]) -> Vec<f64> {
    let total: u64 = rank_counts.iter().sum();
    let mut acc = 0u64;
    rank_counts
        .iter()
        .map(|&c| {
            acc += c;
            if total == 0 {
                0.0
            } else {
                acc as f64 / total as f64
            }
        })
        .collect()
}

/// Encoder noise for test image `image` in trial `trial`: stream ("eval", [trial, image]).
pub fn eval_noise(seed: u64, trial: usize, first_image: usize, rows: usize, m: usize) -> Tensor {
    let mut data = Vec::with_capacity(rows * m);
    for i in 0..rows {
        let mut rng = SeededRng::stream(seed, "eval", &[trial as u64, (first_image + i) as u64]);
        data.extend((0..m).map(|_| rng.normal::<f32>()));
    }
    Tensor::new(vec![rows, m], data).expect("rows·m values")
}

/// Latents `E(x)` for every image, with per-image noise streams.
pub fn encode_eval(encoder: &Network, images: &Tensor, seed: u64, trial: usize) -> Result<Tensor> {
    let m = encoder
        .latent_dim()
        .ok_or_else(|| Error::InvalidArgument("encode_eval needs an encoder".into()))?;
    let mut out = Vec::with_capacity(images.rows() * m);
    let idx: Vec<usize> = (0..images.rows()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let eps = eval_noise(seed, trial, chunk[0], chunk.len(), m);
        out.extend(encode_with_noise(encoder, &images.gather_rows(chunk), &eps)?.z.into_data());
    }
    Tensor::new(vec![images.rows(), m], out)
}

fn latent_row(z: &Tensor, i: usize) -> Vec<f64> {
    z.row(i).iter().map(|&v| f64::from(v)).collect()
}

fn classify_chunked(classifier: &Network, x: &Tensor) -> Result<Vec<u8>> {
    let idx: Vec<usize> = (0..x.rows()).collect();
    let mut out = Vec::with_capacity(x.rows());
    for chunk in idx.chunks(EVAL_CHUNK) {
        out.extend(classify(classifier, &x.gather_rows(chunk))?.1);
    }
    Ok(out)
}

fn generate_chunked(generator: &Network, z: &Tensor) -> Result<Tensor> {
    let idx: Vec<usize> = (0..z.rows()).collect();
    let mut out = Vec::with_capacity(z.rows() * 784);
    for chunk in idx.chunks(EVAL_CHUNK) {
        out.extend(generate(generator, &z.gather_rows(chunk))?.into_data());
    }
    Tensor::new(vec![z.rows(), out.len() / z.rows().max(1)], out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageLsd {
    pub image: usize,
    pub truth: usize,
    pub label: usize,
    pub winner_set: usize,
    pub truth_rank: usize,
    pub normalized: Vec<f64>,
}

pub fn analyze_latents(z: &Tensor, truths: &[u8], basis: &QuasiEigenBasis) -> Result<Vec<ImageLsd>> {
    basis.check()?;
    (0..z.rows())
        .map(|i| {
            let d = decompose_unchecked(&latent_row(z, i), basis)?;
            let (label, winner_set) = basis.label_set(d.winner());
            let truth = truths[i] as usize;
            Ok(ImageLsd {
                image: i,
                truth,
                label,
                winner_set,
                truth_rank: rank_of_truth(&d, basis, truth)?,
                normalized: d.normalized_amplitudes(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialAccuracy {
    pub trial: usize,
    pub lsd: f64,
    pub encdec: f64,
    pub classifier: f64,
}

#[derive(Clone, Debug)]
pub struct EnsembleReport {
    pub trials: Vec<TrialAccuracy>,
    /// Pooled counts of truth rank r at index r − 1.
    pub rank_counts: Vec<u64>,
    /// Pooled counts of images whose winning direction lies in set 1.
    pub set1_wins: u64,
    pub evaluated: u64,
    /// Per-image analysis of trial 0.
    pub first_trial: Vec<ImageLsd>,
}

impl EnsembleReport {
    /// LSD accuracy over all pooled evaluations; equals `cumulative()[0]`.
    pub fn pooled_lsd_accuracy(&self) -> f64 {
        self.cumulative()[0]
    }

    pub fn cumulative(&self) -> Vec<f64> {
        cumulative_topn(&self.rank_counts)
    }

    pub fn set1_fraction(&self) -> f64 {
        self.set1_wins as f64 / self.evaluated.max(1) as f64
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Repeats encode → {LSD label, G → C label} over `trials` fresh encoder
/// draws, alongside the deterministic classifier baseline.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_accuracy(
    images: &Tensor,
    labels: &[u8],
    encoder: &Network,
    generator: &Network,
    classifier: &Network,
    basis: &QuasiEigenBasis,
    trials: usize,
    seed: u64,
) -> Result<EnsembleReport> {
    let n = labels.len();
    if n == 0 || trials == 0 {
        return Err(Error::InvalidArgument("ensemble needs images and ≥ 1 trial".into()));
    }
    let frac = |hits: usize| hits as f64 / n as f64;
    let baseline = classify_chunked(classifier, images)?;
    let clf = frac(baseline.iter().zip(labels).filter(|(a, b)| a == b).count());
    let mut report = EnsembleReport {
        trials: Vec::with_capacity(trials),
        rank_counts: vec![0; basis.dim()],
        set1_wins: 0,
        evaluated: 0,
        first_trial: Vec::new(),
    };
    for trial in 0..trials {
        let z = encode_eval(encoder, images, seed, trial)?;
        let analysis = analyze_latents(&z, labels, basis)?;
        let decoded = classify_chunked(classifier, &generate_chunked(generator, &z)?)?;
        let mut lsd_hits = 0;
        for a in &analysis {
            report.rank_counts[a.truth_rank - 1] += 1;
            report.set1_wins += u64::from(a.winner_set == 1);
            lsd_hits += usize::from(a.truth_rank == 1);
        }
        report.evaluated += n as u64;
        report.trials.push(TrialAccuracy {
            trial,
            lsd: frac(lsd_hits),
            encdec: frac(decoded.iter().zip(labels).filter(|(a, b)| a == b).count()),
            classifier: clf,
        });
        if trial == 0 {
            report.first_trial = analysis;
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankProfiles {
    /// (image_id, truth_rank, rank, normalized_amplitude) for truth ranks 1..=3.
    pub rows: Vec<(usize, usize, usize, f64)>,
    /// `pdfs[g][p]`: 50-bin counts on [0, 1] of the (p+2)-th normalized
    /// amplitude for images with truth rank g+1.
    pub pdfs: [[Vec<u64>; 3]; 3],
    pub group_sizes: [usize; 3],
}

pub fn profile_bin(v: f64) -> usize {
    ((v * PROFILE_BINS as f64).floor().max(0.0) as usize).min(PROFILE_BINS - 1)
}

pub fn amplitude_rank_profiles(analysis: &[ImageLsd]) -> RankProfiles {
    let empty = || std::array::from_fn(|_| vec![0u64; PROFILE_BINS]);
    let mut out = RankProfiles {
        rows: Vec::new(),
        pdfs: std::array::from_fn(|_| empty()),
        group_sizes: [0; 3],
    };
    for a in analysis.iter().filter(|a| (1..=3).contains(&a.truth_rank)) {
        let g = a.truth_rank - 1;
        out.group_sizes[g] += 1;
        for (r, &v) in a.normalized.iter().enumerate() {
            out.rows.push((a.image, a.truth_rank, r + 1, v));
        }
        for p in 0..3 {
            if let Some(&v) = a.normalized.get(p + 1) {
                out.pdfs[g][p][profile_bin(v)] += 1;
            }
        }
    }
    out
}

/// For each image: [ground truth, G(full), G(top-k) for k in `keep`].
#[allow(clippy::too_many_arguments)]
pub fn denoise(
    images: &Tensor,
    keep: &[usize],
    encoder: &Network,
    generator: &Network,
    basis: &QuasiEigenBasis,
    renorm: bool,
    seed: u64,
) -> Result<Tensor> {
    basis.check()?;
    let m = basis.dim();
    let z = encode_eval(encoder, images, seed, 0)?;
    let per_row = keep.len() + 1;
    let mut latents = Vec::with_capacity(images.rows() * per_row * m);
    for i in 0..images.rows() {
        let d = decompose_unchecked(&latent_row(&z, i), basis)?;
        for k in std::iter::once(m).chain(keep.iter().copied()) {
            let mut v = reconstruct(&d, basis, k)?;
            if renorm && k < m {
                v = renormalize(&v)?;
            }
            latents.extend(v.into_iter().map(|x| x as f32));
        }
    }
    let decoded = generate(generator, &Tensor::new(vec![images.rows() * per_row, m], latents)?)?;
    let mut strip = Vec::with_capacity(images.rows() * (per_row + 1) * images.cols());
    for i in 0..images.rows() {
        strip.extend_from_slice(images.row(i));
        for j in 0..per_row {
            strip.extend_from_slice(decoded.row(i * per_row + j));
        }
    }
    Tensor::new(vec![images.rows() * (per_row + 1), images.cols()], strip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{gram_schmidt, MeanVector};

    fn basis(m: usize, labels: usize) -> QuasiEigenBasis {
        let means: Vec<MeanVector> = (0..m)
            .map(|k| MeanVector {
                label: k % labels,
                set_index: k / labels + 1,
                values: (0..m).map(|j| if j == k { 1.0 } else { 0.05 * ((j * 7 + k) % 5) as f64 }).collect(),
            })
            .collect();
        gram_schmidt(&means, m as f64, labels).unwrap()
    }

    #[test]
    fn basis_vector_decomposes_to_unit_coefficient() {
        let b = basis(6, 3);
        let d = decompose(b.vector(4), &b).unwrap();
        for (k, c) in d.coefficients.iter().enumerate() {
            let want = if k == 4 { 1.0 } else { 0.0 };
            assert!((c - want).abs() < 1e-9);
        }
        assert_eq!(reconstruct(&d, &b, 1).unwrap(), b.vector(4).iter().map(|x| x * d.coefficients[4]).collect::<Vec<_>>());
        assert_eq!(classify_lsd(b.vector(4), &b).unwrap().label, 1);
    }

    #[test]
    fn linear_combination() {
        let b = basis(6, 3);
        let z: Vec<f64> = b.vector(0).iter().zip(b.vector(5)).map(|(x, y)| 2.0 * x + 3.0 * y).collect();
        let d = decompose(&z, &b).unwrap();
        assert!((d.coefficients[0] - 2.0).abs() < 1e-9);
        assert!((d.coefficients[5] - 3.0).abs() < 1e-9);
        assert_eq!(&d.rank_order[..2], &[5, 0]);
    }

    #[test]
    fn ties_go_to_lower_index() {
        assert_eq!(rank_order(&[1.0, -2.0, 2.0, 0.0]), vec![1, 2, 0, 3]);
    }

    #[test]
    fn keep_out_of_range() {
        let b = basis(4, 2);
        let d = decompose(&[1.0, 0.0, 0.0, 0.0], &b).unwrap();
        assert!(reconstruct(&d, &b, 0).is_err());
        assert!(reconstruct(&d, &b, 5).is_err());
    }

    #[test]
    fn truth_rank_of_last_direction() {
        let b = basis(6, 3);
        let mut c = [6.0, 5.0, 0.0, 4.0, 3.0, 1.0];
        c[2] = 0.5;
        let z: Vec<f64> = (0..6).map(|j| (0..6).map(|k| c[k] * b.vector(k)[j]).sum()).collect();
        let d = decompose(&z, &b).unwrap();
        assert_eq!(rank_of_truth(&d, &b, 2).unwrap(), 5);
        assert_eq!(rank_of_truth(&d, &b, 0).unwrap(), 1);
    }

    #[test]
    fn cumulative_contract() {
        let curve = cumulative_topn(&[3, 1, 0, 0]);
        assert_eq!(curve, vec![0.75, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn profile_bins_cover_unit_interval() {
        assert_eq!(profile_bin(0.0), 0);
        assert_eq!(profile_bin(1.0), 49);
        assert_eq!(profile_bin(0.5), 25);
    }

    #[test]
    fn empty_profile_groups_are_allowed() {
        let p = amplitude_rank_profiles(&[]);
        assert!(p.rows.is_empty());
        assert_eq!(p.group_sizes, [0, 0, 0]);
    }
}
