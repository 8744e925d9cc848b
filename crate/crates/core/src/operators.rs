//! Latent-space operators built from a quasi-eigenbasis: the completeness
//! operator 𝒜, single-direction projectors ℬ, and in-plane rotations ℛ.

use crate::basis::QuasiEigenBasis;
use crate::error::{Error, Result};
use crate::models::{classify, generate, Network};
use crate::tensor::{dot, Tensor};

/// Squared-norm ratio below which a rotation step counts as annihilating z.
const ANNIHILATION_TOL: f64 = 1e-24;

#[derive(Clone, Debug, PartialEq)]
pub enum LatentOperator {
    /// Row-major M×M matrix.
    Dense(Vec<Vec<f64>>),
    /// `scale · |left⟩⟨right|`.
    RankOne {
        left: Vec<f64>,
        right: Vec<f64>,
        scale: f64,
    },
}

impl LatentOperator {
    pub fn dim(&self) -> usize {
        match self {
            Self::Dense(m) => m.len(),
            Self::RankOne { left, .. } => left.len(),
        }
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                op: "operator apply",
                left: vec![self.dim(), self.dim()],
                right: vec![z.len()],
            });
        }
        Ok(match self {
            Self::Dense(m) => m.iter().map(|row| dot(row, z)).collect(),
            Self::RankOne { left, right, scale } => {
                let p = scale * dot(right, z);
                left.iter().map(|l| l * p).collect()
            }
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        match self {
            Self::Dense(m) => m.clone(),
            Self::RankOne { left, right, scale } => left
                .iter()
                .map(|l| right.iter().map(|r| scale * l * r).collect())
                .collect(),
        }
    }
}

/// 𝒜 = Σ_k |ξ_k⟩⟨ξ_k| as a dense matrix.
pub fn completeness_operator(basis: &QuasiEigenBasis) -> Result<LatentOperator> {
    basis.check()?;
    let m = basis.dim();
    let mut a = vec![vec![0.0; m]; m];
    for xi in basis.vectors() {
        for (i, row) in a.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += xi[i] * xi[j];
            }
        }
    }
    Ok(LatentOperator::Dense(a))
}

fn check_index(basis: &QuasiEigenBasis, k: usize) -> Result<()> {
    if k >= basis.dim() {
        return Err(Error::InvalidArgument(format!(
            "basis index {k} out of range 0..{}",
            basis.dim()
        )));
    }
    Ok(())
}

/// ℬ_{from→to} z = c_from · ξ_to.
pub fn projector(basis: &QuasiEigenBasis, from: usize, to: usize) -> Result<LatentOperator> {
    check_index(basis, from)?;
    check_index(basis, to)?;
    Ok(LatentOperator::RankOne {
        left: basis.vector(to).to_vec(),
        right: basis.vector(from).to_vec(),
        scale: 1.0 / basis.norm_constant(),
    })
}

/// ℛ(Δθ, θ) in the (ξ_a, ξ_b) plane:
/// `(cos(θ+Δθ) ξ_a + sin(θ+Δθ) ξ_b)(cos θ ξ_a + sin θ ξ_b)ᵀ / C`.
pub fn rotation(basis: &QuasiEigenBasis, a: usize, b: usize, theta: f64, dtheta: f64) -> Result<LatentOperator> {
    check_index(basis, a)?;
    check_index(basis, b)?;
    if a == b {
        return Err(Error::InvalidArgument(format!(
            "rotation plane needs two distinct directions, got {a} twice"
        )));
    }
    let combine = |angle: f64| -> Vec<f64> {
        let (s, c) = angle.sin_cos();
        basis
            .vector(a)
            .iter()
            .zip(basis.vector(b))
            .map(|(x, y)| c * x + s * y)
            .collect()
    };
    Ok(LatentOperator::RankOne {
        left: combine(theta + dtheta),
        right: combine(theta),
        scale: 1.0 / basis.norm_constant(),
    })
}

/// `z / √(⟨z|z⟩ / M)`, giving ⟨z|z⟩ = M.
pub fn renormalize(z: &[f64]) -> Result<Vec<f64>> {
    let n2 = dot(z, z);
    if !(n2 > 0.0) || !n2.is_finite() {
        return Err(Error::ZeroVector);
    }
    let s = (n2 / z.len() as f64).sqrt();
    Ok(z.iter().map(|v| v / s).collect())
}

/// Latent path for one starting vector: the start itself, then the state
/// after every rotation step. Transition α → α+1 (α = 0..l−2) rotates in the
/// (ξ_{α,1}, ξ_{α+1,1}) plane with θ = (r−1)·Δθ for r = 1..steps, and
/// renormalizes after each step.
pub fn rotate_trajectory(z0: &[f64], basis: &QuasiEigenBasis, steps: usize, dtheta: f64) -> Result<Vec<Vec<f64>>> {
    basis.check()?;
    let labels = basis.labels();
    let mut path = Vec::with_capacity(1 + (labels - 1) * steps);
    path.push(z0.to_vec());
    let mut z = z0.to_vec();
    for alpha in 0..labels.saturating_sub(1) {
        let a = basis.index_of(alpha, 1).expect("set 1 exists for every label");
        let b = basis.index_of(alpha + 1, 1).expect("set 1 exists for every label");
        for r in 1..=steps {
            let op = rotation(basis, a, b, (r - 1) as f64 * dtheta, dtheta)?;
            let rotated = op.apply(&z)?;
            if dot(&rotated, &rotated) <= ANNIHILATION_TOL * dot(&z, &z) {
                return Err(Error::Annihilated { step: path.len() });
            }
            z = renormalize(&rotated)?;
            path.push(z.clone());
        }
    }
    Ok(path)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub row: usize,
    pub iteration: usize,
    pub classifier_label: u8,
    pub classifier_confidence: f32,
    pub latent_norm: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectories {
    /// (rows · iterations, 784), row-major by starting image.
    pub images: Tensor,
    pub iterations: usize,
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectories {
    pub fn rows(&self) -> usize {
        self.images.rows() / self.iterations
    }

    /// Per transition α → α+1, whether the classifier labels the endpoint
    /// α+1 in at least half of the rows.
    pub fn successful_transitions(&self, steps: usize) -> Vec<bool> {
        let transitions = (self.iterations - 1) / steps;
        (0..transitions)
            .map(|alpha| {
                let it = (alpha + 1) * steps;
                let hits = self
                    .records
                    .iter()
                    .filter(|r| r.iteration == it && r.classifier_label as usize == alpha + 1)
                    .count();
                2 * hits >= self.rows()
            })
            .collect()
    }
}

/// Decodes and classifies every iteration of each starting latent's path.
pub fn decode_trajectories(
    starts: &[Vec<f64>],
    basis: &QuasiEigenBasis,
    generator: &Network,
    classifier: &Network,
    steps: usize,
    dtheta: f64,
) -> Result<Trajectories> {
    let mut latents = Vec::new();
    let mut iterations = 0;
    for z0 in starts {
        let path = rotate_trajectory(z0, basis, steps, dtheta)?;
        iterations = path.len();
        latents.extend(path);
    }
    if latents.is_empty() {
        return Err(Error::InvalidArgument("no starting latents".into()));
    }
    let m = basis.dim();
    let flat: Vec<f32> = latents.iter().flatten().map(|&v| v as f32).collect();
    let images = generate(generator, &Tensor::new(vec![latents.len(), m], flat)?)?;
    let (probs, labels) = classify(classifier, &images)?;
    let records = latents
        .iter()
        .enumerate()
        .map(|(k, z)| TrajectoryRecord {
            row: k / iterations,
            iteration: k % iterations,
            classifier_label: labels[k],
            classifier_confidence: probs.row(k)[labels[k] as usize],
            latent_norm: dot(z, z).sqrt(),
        })
        .collect();
    Ok(Trajectories {
        images,
        iterations,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{gram_schmidt, MeanVector};
    use std::f64::consts::PI;

    fn axis_basis(m: usize, labels: usize) -> QuasiEigenBasis {
        let means: Vec<MeanVector> = (0..m)
            .map(|k| {
                let mut v = vec![0.1; m];
                v[k] += 1.0;
                MeanVector {
                    label: k % labels,
                    set_index: k / labels + 1,
                    values: v,
                }
            })
            .collect();
        gram_schmidt(&means, m as f64, labels).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn projector_actions() {
        let b = axis_basis(6, 3);
        let p = projector(&b, 1, 4).unwrap();
        assert!(close(&p.apply(b.vector(1)).unwrap(), b.vector(4), 1e-12));
        assert!(close(&p.apply(b.vector(2)).unwrap(), &[0.0; 6], 1e-12));
        let z: Vec<f64> = b.vector(1).iter().zip(b.vector(3)).map(|(x, y)| 2.0 * x + 5.0 * y).collect();
        let want: Vec<f64> = b.vector(4).iter().map(|x| 2.0 * x).collect();
        assert!(close(&p.apply(&z).unwrap(), &want, 1e-12));
    }

    #[test]
    fn rotation_quarter_turn_and_annihilation() {
        let b = axis_basis(6, 3);
        let r = rotation(&b, 0, 3, 0.0, PI / 2.0).unwrap();
        assert!(close(&r.apply(b.vector(0)).unwrap(), b.vector(3), 1e-9));
        assert!(close(&r.apply(b.vector(5)).unwrap(), &[0.0; 6], 1e-12));
        let id = rotation(&b, 0, 3, 0.0, 0.0).unwrap();
        assert!(close(&id.apply(b.vector(0)).unwrap(), b.vector(0), 1e-12));
        assert!(rotation(&b, 2, 2, 0.0, 1.0).is_err());
    }

    #[test]
    fn dense_and_factored_agree() {
        let b = axis_basis(4, 2);
        let r = rotation(&b, 1, 2, 0.3, 0.4).unwrap();
        let d = LatentOperator::Dense(r.to_dense());
        let z = [0.3, -1.2, 2.0, 0.7];
        assert!(close(&r.apply(&z).unwrap(), &d.apply(&z).unwrap(), 1e-12));
    }

    #[test]
    fn completeness_scales_by_c() {
        let b = axis_basis(4, 2);
        let a = completeness_operator(&b).unwrap();
        let z = [1.0, -2.0, 0.5, 3.0];
        let want: Vec<f64> = z.iter().map(|v| 4.0 * v).collect();
        assert!(close(&a.apply(&z).unwrap(), &want, 1e-12));
    }

    #[test]
    fn renormalize_cases() {
        let z = [1.0, -1.0, 1.0, -1.0];
        assert_eq!(renormalize(&z).unwrap(), z.to_vec());
        assert!(close(&renormalize(&[2.0, 0.0]).unwrap(), &[2f64.sqrt(), 0.0], 1e-15));
        assert!(matches!(renormalize(&[0.0; 3]), Err(Error::ZeroVector)));
    }

    #[test]
    fn trajectory_ends_on_last_label() {
        let b = axis_basis(6, 3);
        let path = rotate_trajectory(&[0.2, 1.0, -0.4, 0.3, 0.1, 0.9], &b, 3, PI / 6.0).unwrap();
        assert_eq!(path.len(), 1 + 2 * 3);
        let end = path.last().unwrap();
        let target = b.vector(b.index_of(2, 1).unwrap());
        let cos = dot(end, target) / (dot(end, end) * dot(target, target)).sqrt();
        assert!(1.0 - cos.abs() < 1e-9);
    }

    #[test]
    fn annihilated_start_reports_step() {
        let b = axis_basis(6, 3);
        let z = b.vector(b.index_of(2, 2).unwrap()).to_vec();
        assert!(matches!(rotate_trajectory(&z, &b, 3, PI / 6.0), Err(Error::Annihilated { step: 1 })));
    }
}
