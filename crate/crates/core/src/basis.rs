//! Labelled latent sets, their means, and the quasi-eigenbasis built from them.
//!
//! For `l` labels and `n = M / l` sets per label, set `i = 1` of every label is
//! collected by encoding training images and sets `i = 2..n` by rejection
//! sampling `z ~ N(0, I)`. Each set of `V` latents is averaged in `f64` into a
//! mean vector η, and the M means are orthogonalized into ξ with
//! `⟨ξ_a|ξ_b⟩ = C δ_ab`.
//!
//! Flat index order is set-major, label-minor: `k = (i − 1)·l + α`, so the
//! ten set-1 label directions are processed first and perturbed least.

use std::collections::VecDeque;
use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::models::{classify, encode, generate, Network};
use crate::rng::SeededRng;
use crate::tensor::{dot, Tensor};

pub const BASIS_MAGIC: [u8; 4] = *b"LSDB";
pub const BASIS_VERSION: u32 = 1;

/// Off-diagonal tolerance, relative to C.
pub const ORTHOGONALITY_TOL: f64 = 1e-9;
/// Diagonal tolerance, relative to C.
pub const NORM_TOL: f64 = 1e-12;
/// Minimum residual/input norm ratio accepted by Gram-Schmidt.
pub const RANK_TOL: f64 = 1e-8;

const SAMPLE_BATCH: usize = 256;
const ACCEPTANCE_WINDOW: usize = 100_000;
const MIN_ACCEPTANCE_RATE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetSource {
    Encoded,
    Sampled,
}

#[derive(Clone, Debug)]
pub struct LatentSet {
    pub label: usize,
    /// 1-based.
    pub set_index: usize,
    pub source: SetSource,
    /// (V, M).
    pub vectors: Tensor,
}

impl LatentSet {
    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanVector {
    pub label: usize,
    pub set_index: usize,
    pub values: Vec<f64>,
}

/// Collects one encoded set per requested label in a single shuffled pass
/// over `images`: encode, decode, classify, and keep the latent if the
/// round-trip label matches and that label's set is not yet full.
pub fn collect_encoded_sets(
    images: &Tensor,
    encoder: &Network,
    generator: &Network,
    classifier: &Network,
    labels: &[usize],
    size: usize,
    rng: &mut SeededRng,
) -> Result<Vec<LatentSet>> {
    let m = encoder
        .latent_dim()
        .ok_or_else(|| Error::InvalidArgument("collect_encoded_sets needs an encoder".into()))?;
    let mut order: Vec<usize> = (0..images.rows()).collect();
    rng.shuffle(&mut order);
    let mut buckets: Vec<Vec<f32>> = vec![Vec::with_capacity(size * m); labels.len()];
    let full = |b: &Vec<f32>| b.len() == size * m;
    for chunk in order.chunks(SAMPLE_BATCH) {
        if buckets.iter().all(full) {
            break;
        }
        let x = images.gather_rows(chunk);
        let z = encode(encoder, &x, rng)?.z;
        let (_, pred) = classify(classifier, &generate(generator, &z)?)?;
        for (row, &p) in pred.iter().enumerate() {
            if let Some(slot) = labels.iter().position(|&l| l == p as usize) {
                if !full(&buckets[slot]) {
                    buckets[slot].extend_from_slice(z.row(row));
                }
            }
        }
    }
    labels
        .iter()
        .zip(buckets)
        .map(|(&label, data)| {
            if data.len() < size * m {
                return Err(Error::InsufficientSet {
                    label,
                    achieved: data.len() / m,
                    wanted: size,
                });
            }
            Ok(LatentSet {
                label,
                set_index: 1,
                source: SetSource::Encoded,
                vectors: Tensor::new(vec![size, m], data)?,
            })
        })
        .collect()
}

pub fn collect_encoded_set(
    images: &Tensor,
    encoder: &Network,
    generator: &Network,
    classifier: &Network,
    label: usize,
    size: usize,
    rng: &mut SeededRng,
) -> Result<LatentSet> {
    let mut sets = collect_encoded_sets(images, encoder, generator, classifier, &[label], size, rng)?;
    Ok(sets.remove(0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplingStats {
    pub attempts: usize,
    pub accepted: usize,
}

/// Rejection-samples `size` latents `z ~ N(0, I)` whose decoded image the
/// classifier labels `label` (optionally with probability ≥ `min_prob`).
pub fn collect_sampled_set(
    generator: &Network,
    classifier: &Network,
    label: usize,
    set_index: usize,
    size: usize,
    min_prob: Option<f32>,
    rng: &mut SeededRng,
) -> Result<(LatentSet, SamplingStats)> {
    let m = generator
        .latent_dim()
        .ok_or_else(|| Error::InvalidArgument("collect_sampled_set needs a generator".into()))?;
    let mut data = Vec::with_capacity(size * m);
    let mut stats = SamplingStats {
        attempts: 0,
        accepted: 0,
    };
    let mut window: VecDeque<(usize, usize)> = VecDeque::new();
    let (mut win_attempts, mut win_accepted) = (0usize, 0usize);
    while stats.accepted < size {
        let z: Tensor = rng.normal_tensor(&[SAMPLE_BATCH, m]);
        let (probs, pred) = classify(classifier, &generate(generator, &z)?)?;
        let mut batch_accepted = 0;
        for (row, &p) in pred.iter().enumerate() {
            if stats.accepted == size {
                break;
            }
            let confident = min_prob.is_none_or(|t| probs.row(row)[p as usize] >= t);
            if p as usize == label && confident {
                data.extend_from_slice(z.row(row));
                stats.accepted += 1;
                batch_accepted += 1;
            }
        }
        stats.attempts += SAMPLE_BATCH;
        window.push_back((SAMPLE_BATCH, batch_accepted));
        win_attempts += SAMPLE_BATCH;
        win_accepted += batch_accepted;
        while win_attempts - window.front().map_or(0, |w| w.0) >= ACCEPTANCE_WINDOW {
            let (a, b) = window.pop_front().expect("non-empty");
            win_attempts -= a;
            win_accepted -= b;
        }
        if stats.accepted < size
            && win_attempts >= ACCEPTANCE_WINDOW
            && (win_accepted as f64) < MIN_ACCEPTANCE_RATE * win_attempts as f64
        {
            return Err(Error::DegenerateGenerator {
                label,
                accepted: win_accepted,
                window: win_attempts,
            });
        }
    }
    let set = LatentSet {
        label,
        set_index,
        source: SetSource::Sampled,
        vectors: Tensor::new(vec![size, m], data)?,
    };
    Ok((set, stats))
}

#[derive(Clone, Debug)]
pub struct CollectedSets {
    /// Flat (set-major) order.
    pub sets: Vec<LatentSet>,
    /// (label, set, stats) for each sampled set.
    pub sampling: Vec<(usize, usize, SamplingStats)>,
}

/// All `n·l` sets in flat (set-major) order: set 1 encoded, sets 2..n sampled.
/// Sampled set (α, i) draws from its own stream `("sampled-set", [α, i])`.
#[allow(clippy::too_many_arguments)]
pub fn collect_all_sets(
    images: &Tensor,
    encoder: &Network,
    generator: &Network,
    classifier: &Network,
    labels: usize,
    size: usize,
    min_prob: Option<f32>,
    seed: u64,
) -> Result<CollectedSets> {
    let m = generator
        .latent_dim()
        .ok_or_else(|| Error::InvalidArgument("collect_all_sets needs a generator".into()))?;
    if labels == 0 || m % labels != 0 {
        return Err(Error::InvalidArgument(format!(
            "latent dim {m} is not a multiple of {labels} labels"
        )));
    }
    let n = m / labels;
    let all_labels: Vec<usize> = (0..labels).collect();
    let mut rng = SeededRng::stream(seed, "encoded-sets", &[]);
    let mut sets = collect_encoded_sets(images, encoder, generator, classifier, &all_labels, size, &mut rng)?;
    let mut sampling = Vec::new();
    for i in 2..=n {
        for alpha in 0..labels {
            let mut rng = SeededRng::stream(seed, "sampled-set", &[alpha as u64, i as u64]);
            let (set, stats) = collect_sampled_set(generator, classifier, alpha, i, size, min_prob, &mut rng)?;
            sets.push(set);
            sampling.push((alpha, i, stats));
        }
    }
    Ok(CollectedSets { sets, sampling })
}

/// Coordinate-wise mean in `f64`, summed in row order.
pub fn average_set(set: &LatentSet) -> Result<MeanVector> {
    if set.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "set (label {}, set {}) is empty",
            set.label, set.set_index
        )));
    }
    let m = set.vectors.cols();
    let mut acc = vec![0.0f64; m];
    for r in 0..set.len() {
        for (a, &v) in acc.iter_mut().zip(set.vectors.row(r)) {
            *a += f64::from(v);
        }
    }
    let v = set.len() as f64;
    Ok(MeanVector {
        label: set.label,
        set_index: set.set_index,
        values: acc.into_iter().map(|s| s / v).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrefixStats {
    pub size: usize,
    pub mean: Vec<f64>,
    /// Sample standard deviation (n − 1 denominator; 0 for n = 1).
    pub std: Vec<f64>,
    /// Coordinate-averaged standard error of the mean, std/√n.
    pub mean_sem: f64,
}

/// Running mean/std of the first `k` members for each requested prefix size `k`.
pub fn convergence_check(set: &LatentSet, prefixes: &[usize]) -> Result<Vec<PrefixStats>> {
    let m = set.vectors.cols();
    prefixes
        .iter()
        .map(|&k| {
            if k == 0 || k > set.len() {
                return Err(Error::InvalidArgument(format!(
                    "prefix {k} outside 1..={}",
                    set.len()
                )));
            }
            let mut mean = vec![0.0f64; m];
            for r in 0..k {
                for (a, &v) in mean.iter_mut().zip(set.vectors.row(r)) {
                    *a += f64::from(v);
                }
            }
            mean.iter_mut().for_each(|a| *a /= k as f64);
            let mut var = vec![0.0f64; m];
            for r in 0..k {
                for ((s, &v), mu) in var.iter_mut().zip(set.vectors.row(r)).zip(&mean) {
                    let d = f64::from(v) - mu;
                    *s += d * d;
                }
            }
            let std: Vec<f64> = if k > 1 {
                var.iter().map(|s| (s / (k - 1) as f64).sqrt()).collect()
            } else {
                vec![0.0; m]
            };
            let mean_sem = std.iter().map(|s| s / (k as f64).sqrt()).sum::<f64>() / m as f64;
            Ok(PrefixStats {
                size: k,
                mean,
                std,
                mean_sem,
            })
        })
        .collect()
}

/// Orthogonal basis with common squared norm C and its (label, set) index map.
#[derive(Clone, Debug, PartialEq)]
pub struct QuasiEigenBasis {
    xi: Vec<Vec<f64>>,
    norm_constant: f64,
    labels: usize,
    index_map: Vec<(usize, usize)>,
    orthogonality_defect: f64,
    norm_defect: f64,
}

impl QuasiEigenBasis {
    /// Assembles a basis and measures (but does not enforce) its invariants;
    /// see [`QuasiEigenBasis::check`].
    pub fn from_parts(xi: Vec<Vec<f64>>, norm_constant: f64, labels: usize, index_map: Vec<(usize, usize)>) -> Result<Self> {
        let m = xi.len();
        if m == 0 || xi.iter().any(|v| v.len() != m) || index_map.len() != m {
            return Err(Error::InvalidArgument(format!(
                "basis needs {m} vectors of length {m} and {m} index entries"
            )));
        }
        if labels == 0 || !m.is_multiple_of(labels) || norm_constant <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "basis: M = {m}, l = {labels}, C = {norm_constant}"
            )));
        }
        let mut seen = vec![false; m];
        for &(label, set) in &index_map {
            let k = flat_index(label, set, labels);
            if label >= labels || set == 0 || k >= m || seen[k] {
                return Err(Error::InvalidArgument(format!(
                    "index map entry (label {label}, set {set}) is invalid or repeated"
                )));
            }
            seen[k] = true;
        }
        let (orthogonality_defect, norm_defect) = measure_defects(&xi, norm_constant);
        Ok(Self {
            xi,
            norm_constant,
            labels,
            index_map,
            orthogonality_defect,
            norm_defect,
        })
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    pub fn norm_constant(&self) -> f64 {
        self.norm_constant
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn sets_per_label(&self) -> usize {
        self.dim() / self.labels
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.xi
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        &self.xi[k]
    }

    /// (label α, 1-based set index i) of flat index k.
    pub fn label_set(&self, k: usize) -> (usize, usize) {
        self.index_map[k]
    }

    pub fn label_of(&self, k: usize) -> usize {
        self.index_map[k].0
    }

    pub fn index_of(&self, label: usize, set: usize) -> Option<usize> {
        self.index_map.iter().position(|&p| p == (label, set))
    }

    pub fn index_map(&self) -> &[(usize, usize)] {
        &self.index_map
    }

    /// max |⟨ξ_a|ξ_b⟩| / C over a ≠ b.
    pub fn orthogonality_defect(&self) -> f64 {
        self.orthogonality_defect
    }

    /// max |⟨ξ_k|ξ_k⟩ − C| / C.
    pub fn norm_defect(&self) -> f64 {
        self.norm_defect
    }

    pub fn check(&self) -> Result<()> {
        if self.orthogonality_defect > ORTHOGONALITY_TOL {
            return Err(Error::StaleBasis {
                defect: self.orthogonality_defect,
                tolerance: ORTHOGONALITY_TOL,
            });
        }
        if self.norm_defect > NORM_TOL {
            return Err(Error::StaleBasis {
                defect: self.norm_defect,
                tolerance: NORM_TOL,
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let m = self.dim();
        let mut out = Vec::with_capacity(28 + 8 * m + 8 * m * m);
        out.extend_from_slice(&BASIS_MAGIC);
        for v in [BASIS_VERSION, m as u32, self.labels as u32, self.sets_per_label() as u32] {
            out.write_u32::<LittleEndian>(v).expect("vec write");
        }
        out.write_f64::<LittleEndian>(self.norm_constant).expect("vec write");
        for &(label, set) in &self.index_map {
            out.write_u32::<LittleEndian>(label as u32).expect("vec write");
            out.write_u32::<LittleEndian>(set as u32).expect("vec write");
        }
        for row in &self.xi {
            for &v in row {
                out.write_f64::<LittleEndian>(v).expect("vec write");
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic).map_err(|_| Error::NotABasis(magic))?;
        if magic != BASIS_MAGIC {
            return Err(Error::NotABasis(magic));
        }
        let trunc = |what: &str| Error::Truncated(format!("basis {what}"));
        let version = cur.read_u32::<LittleEndian>().map_err(|_| trunc("version"))?;
        if version != BASIS_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: BASIS_VERSION,
            });
        }
        let m = cur.read_u32::<LittleEndian>().map_err(|_| trunc("header"))? as usize;
        let labels = cur.read_u32::<LittleEndian>().map_err(|_| trunc("header"))? as usize;
        let sets = cur.read_u32::<LittleEndian>().map_err(|_| trunc("header"))? as usize;
        let c = cur.read_f64::<LittleEndian>().map_err(|_| trunc("header"))?;
        if labels * sets != m {
            return Err(Error::MalformedHeader(format!("M = {m} but l·n = {labels}·{sets}")));
        }
        let expected = 28 + 8 * m + 8 * m * m;
        if bytes.len() != expected {
            return Err(Error::PayloadLengthMismatch {
                expected: m * m,
                actual: bytes.len().saturating_sub(28 + 8 * m) / 8,
            });
        }
        let mut index_map = Vec::with_capacity(m);
        for _ in 0..m {
            let label = cur.read_u32::<LittleEndian>().map_err(|_| trunc("index map"))? as usize;
            let set = cur.read_u32::<LittleEndian>().map_err(|_| trunc("index map"))? as usize;
            index_map.push((label, set));
        }
        let mut xi = Vec::with_capacity(m);
        for _ in 0..m {
            let mut row = vec![0f64; m];
            cur.read_f64_into::<LittleEndian>(&mut row).map_err(|_| trunc("vectors"))?;
            xi.push(row);
        }
        Self::from_parts(xi, c, labels, index_map)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn flat_index(label: usize, set: usize, labels: usize) -> usize {
    (set.saturating_sub(1)) * labels + label
}

fn measure_defects(xi: &[Vec<f64>], c: f64) -> (f64, f64) {
    let mut off = 0.0f64;
    let mut diag = 0.0f64;
    for a in 0..xi.len() {
        diag = diag.max((dot(&xi[a], &xi[a]) - c).abs() / c);
        for b in (a + 1)..xi.len() {
            off = off.max(dot(&xi[a], &xi[b]).abs() / c);
        }
    }
    (off, diag)
}

/// Orthogonalizes the means, taken in the given order, into ξ with ⟨ξ|ξ⟩ = C.
///
/// Modified Gram-Schmidt followed by a second full projection sweep; each
/// vector is projected against every previously produced ξ. A residual below
/// `RANK_TOL` times the input norm is reported as rank deficiency.
pub fn gram_schmidt(means: &[MeanVector], norm_constant: f64, labels: usize) -> Result<QuasiEigenBasis> {
    let m = means.len();
    if let Some(bad) = means.iter().find(|mv| mv.values.len() != m) {
        return Err(Error::InvalidArgument(format!(
            "{m} means needed of length {m}, (label {}, set {}) has {}",
            bad.label,
            bad.set_index,
            bad.values.len()
        )));
    }
    let mut units: Vec<Vec<f64>> = Vec::with_capacity(m);
    for mv in means {
        let norm = dot(&mv.values, &mv.values).sqrt();
        let mut v = mv.values.clone();
        for _pass in 0..2 {
            for q in &units {
                let p = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= p * qi;
                }
            }
        }
        let residual = dot(&v, &v).sqrt();
        if !(residual > RANK_TOL * norm) || norm == 0.0 {
            return Err(Error::RankDeficient {
                label: mv.label,
                set: mv.set_index,
                residual,
                norm,
            });
        }
        v.iter_mut().for_each(|x| *x /= residual);
        units.push(v);
    }
    let scale = norm_constant.sqrt();
    let xi = units
        .into_iter()
        .map(|u| u.into_iter().map(|x| x * scale).collect())
        .collect();
    let index_map = means.iter().map(|mv| (mv.label, mv.set_index)).collect();
    QuasiEigenBasis::from_parts(xi, norm_constant, labels, index_map)
}

/// Orders means set-major, label-minor as the flat index requires.
pub fn processing_order(mut means: Vec<MeanVector>) -> Vec<MeanVector> {
    means.sort_by_key(|mv| (mv.set_index, mv.label));
    means
}

/// Symmetric matrix of pairwise inner products.
pub fn gram_matrix(vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if let Some(first) = vectors.first() {
        if vectors.iter().any(|v| v.len() != first.len()) {
            return Err(Error::InvalidArgument("gram_matrix needs equal-length vectors".into()));
        }
    }
    let n = vectors.len();
    let mut g = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in a..n {
            let v = dot(&vectors[a], &vectors[b]);
            g[a][b] = v;
            g[b][a] = v;
        }
    }
    Ok(g)
}

pub const HIST_BINS: usize = 121;
pub const HIST_MIN: f64 = -6.0;
pub const HIST_WIDTH: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct LabelHistogram {
    pub label: usize,
    /// Bin j is centred on −6 + 0.1·j.
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
    pub total: u64,
}

impl LabelHistogram {
    pub fn bin_center(j: usize) -> f64 {
        HIST_MIN + HIST_WIDTH * j as f64
    }

    pub fn density(&self, j: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.counts[j] as f64 / (self.total as f64 * HIST_WIDTH)
        }
    }
}

pub fn standard_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Pools every latent coordinate of each label's sets into a 121-bin histogram.
pub fn label_pdf_histograms(sets: &[&LatentSet], labels: usize) -> Vec<LabelHistogram> {
    let mut out: Vec<LabelHistogram> = (0..labels)
        .map(|label| LabelHistogram {
            label,
            counts: vec![0; HIST_BINS],
            underflow: 0,
            overflow: 0,
            total: 0,
        })
        .collect();
    for set in sets {
        let h = &mut out[set.label];
        for &v in set.vectors.data() {
            let pos = ((f64::from(v) - HIST_MIN) / HIST_WIDTH + 0.5).floor();
            h.total += 1;
            if pos < 0.0 {
                h.underflow += 1;
            } else if pos >= HIST_BINS as f64 {
                h.overflow += 1;
            } else {
                h.counts[pos as usize] += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set_from(rows: &[Vec<f32>]) -> LatentSet {
        LatentSet {
            label: 0,
            set_index: 1,
            source: SetSource::Sampled,
            vectors: Tensor::from_rows(rows).unwrap(),
        }
    }

    fn mean(label: usize, set: usize, values: Vec<f64>) -> MeanVector {
        MeanVector {
            label,
            set_index: set,
            values,
        }
    }

    #[test]
    fn singleton_and_symmetric_means() {
        let one = average_set(&set_from(&[vec![1.5, -2.0]])).unwrap();
        assert_eq!(one.values, vec![1.5, -2.0]);
        let sym = average_set(&set_from(&[vec![1.0, -3.0], vec![-1.0, 3.0]])).unwrap();
        assert_eq!(sym.values, vec![0.0, 0.0]);
    }

    #[test]
    fn orthogonal_inputs_are_rescaled() {
        let means = vec![
            mean(0, 1, vec![2.0, 0.0]),
            mean(1, 1, vec![0.0, -0.5]),
        ];
        let b = gram_schmidt(&means, 2.0, 2).unwrap();
        let s = 2f64.sqrt();
        assert!((b.vector(0)[0] - s).abs() < 1e-15 && b.vector(0)[1] == 0.0);
        assert!((b.vector(1)[1] + s).abs() < 1e-15 && b.vector(1)[0] == 0.0);
        b.check().unwrap();
    }

    #[test]
    fn rank_deficiency_names_the_set() {
        let means = vec![
            mean(0, 1, vec![1.0, 1.0, 0.0]),
            mean(1, 1, vec![0.0, 1.0, 0.0]),
            mean(2, 1, vec![2.0, 3.0, 0.0]),
        ];
        match gram_schmidt(&means, 3.0, 3) {
            Err(Error::RankDeficient { label: 2, set: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gram_of_single_vector() {
        assert_eq!(gram_matrix(&[vec![3.0, 0.0]]).unwrap(), vec![vec![9.0]]);
    }

    #[test]
    fn convergence_degenerate_and_full() {
        let constant = set_from(&vec![vec![0.5f32, -1.0]; 8]);
        for p in convergence_check(&constant, &[1, 4, 8]).unwrap() {
            assert!(p.std.iter().all(|&s| s == 0.0));
        }
        let s = set_from(&[vec![1.0, 0.0], vec![3.0, 2.0], vec![2.0, 4.0]]);
        let r = convergence_check(&s, &[3]).unwrap();
        assert_eq!(r[0].mean, average_set(&s).unwrap().values);
        assert!((r[0].std[0] - 1.0).abs() < 1e-15);
        assert!((r[0].std[1] - 2.0).abs() < 1e-15);
        assert!(convergence_check(&s, &[4]).is_err());
    }

    #[test]
    fn histogram_binning_contract() {
        let s = set_from(&[vec![0.0, 0.04, -6.0, 6.0, 9.0, -7.0]]);
        let h = &label_pdf_histograms(&[&s], 1)[0];
        assert_eq!(h.counts.len(), 121);
        assert_eq!(h.counts[60], 2);
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.counts[120], 1);
        assert_eq!((h.underflow, h.overflow, h.total), (1, 1, 6));
        assert!((LabelHistogram::bin_center(60)).abs() < 1e-12);
    }

    #[test]
    fn flat_index_is_set_major() {
        assert_eq!(flat_index(0, 1, 10), 0);
        assert_eq!(flat_index(9, 1, 10), 9);
        assert_eq!(flat_index(0, 2, 10), 10);
        let sorted = processing_order(vec![mean(1, 2, vec![]), mean(0, 2, vec![]), mean(1, 1, vec![])]);
        let keys: Vec<_> = sorted.iter().map(|m| (m.label, m.set_index)).collect();
        assert_eq!(keys, vec![(1, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn basis_file_round_trip_and_guards() {
        let means = vec![
            mean(0, 1, vec![1.0, 0.2, 0.1, 0.0]),
            mean(1, 1, vec![0.3, 1.0, 0.0, 0.2]),
            mean(0, 2, vec![0.0, 0.1, 1.0, 0.4]),
            mean(1, 2, vec![0.5, 0.0, 0.2, 1.0]),
        ];
        let b = gram_schmidt(&means, 4.0, 2).unwrap();
        let bytes = b.to_bytes();
        assert_eq!(QuasiEigenBasis::from_bytes(&bytes).unwrap(), b);
        let mut bad = bytes.clone();
        bad[3] = b'C';
        assert!(matches!(QuasiEigenBasis::from_bytes(&bad), Err(Error::NotABasis(_))));
        assert!(matches!(
            QuasiEigenBasis::from_bytes(&bytes[..bytes.len() - 8]),
            Err(Error::PayloadLengthMismatch { .. })
        ));
    }

    #[test]
    fn perturbed_basis_fails_check() {
        let means = vec![mean(0, 1, vec![1.0, 0.0]), mean(1, 1, vec![0.0, 1.0])];
        let b = gram_schmidt(&means, 2.0, 2).unwrap();
        let mut xi = b.vectors().to_vec();
        xi[1][0] = 1e-3;
        let stale = QuasiEigenBasis::from_parts(xi, 2.0, 2, b.index_map().to_vec()).unwrap();
        assert!(matches!(stale.check(), Err(Error::StaleBasis { .. })));
    }
}
