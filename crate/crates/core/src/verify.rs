//! Invariant checks on a built basis (and optionally the generator), shared
//! by the `verify` subcommand and the test suites.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

use crate::basis::{QuasiEigenBasis, NORM_TOL, ORTHOGONALITY_TOL};
use crate::error::Result;
use crate::lsd::{classify_lsd, decompose, reconstruct};
use crate::models::{generate, Network};
use crate::operators::{completeness_operator, renormalize, rotate_trajectory, rotation, LatentOperator};
use crate::rng::SeededRng;
use crate::tensor::{dot, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

pub fn random_latents(m: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SeededRng::stream(seed, "verify", &[]);
    (0..count).map(|_| (0..m).map(|_| rng.normal::<f64>()).collect()).collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    (dot(&diff, &diff) / dot(b, b).max(f64::MIN_POSITIVE)).sqrt()
}

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    1.0 - (dot(a, b) / (dot(a, a) * dot(b, b)).sqrt()).abs()
}

pub fn orthogonality(basis: &QuasiEigenBasis) -> Vec<Check> {
    vec![
        Check::new(
            "orthogonality",
            basis.orthogonality_defect() <= ORTHOGONALITY_TOL,
            format!("max |<xi_a|xi_b>|/C = {:.3e} (tol {ORTHOGONALITY_TOL:e})", basis.orthogonality_defect()),
        ),
        Check::new(
            "norms",
            basis.norm_defect() <= NORM_TOL,
            format!("max |<xi|xi> - C|/C = {:.3e} (tol {NORM_TOL:e})", basis.norm_defect()),
        ),
    ]
}

/// Reconstruction, Parseval identity and 𝒜z = Cz on `zs`.
pub fn completeness(basis: &QuasiEigenBasis, zs: &[Vec<f64>]) -> Result<Vec<Check>> {
    let c = basis.norm_constant();
    let a = completeness_operator(basis)?;
    let (mut recon, mut parseval, mut op) = (0.0f64, 0.0f64, 0.0f64);
    for z in zs {
        let d = decompose(z, basis)?;
        recon = recon.max(rel_err(&reconstruct(&d, basis, basis.dim())?, z));
        let zz = dot(z, z);
        parseval = parseval.max((zz - c * dot(&d.coefficients, &d.coefficients)).abs() / zz);
        let cz: Vec<f64> = z.iter().map(|v| c * v).collect();
        op = op.max(rel_err(&a.apply(z)?, &cz));
    }
    Ok(vec![
        Check::new("completeness", recon <= 1e-6, format!("max relative error {recon:.3e} over {} z", zs.len())),
        Check::new("parseval", parseval <= 1e-6, format!("max relative error {parseval:.3e}")),
        Check::new("completeness-operator", op <= 1e-6, format!("max |Az - Cz|/|Cz| = {op:.3e}")),
    ])
}

pub fn scale_invariance(basis: &QuasiEigenBasis, zs: &[Vec<f64>]) -> Result<Check> {
    let mut mismatches = 0;
    for z in zs {
        let base = classify_lsd(z, basis)?.label;
        for s in [0.1, 10.0] {
            let scaled: Vec<f64> = z.iter().map(|v| s * v).collect();
            mismatches += usize::from(classify_lsd(&scaled, basis)?.label != base);
        }
    }
    Ok(Check::new(
        "scale-invariance",
        mismatches == 0,
        format!("{mismatches} label changes over {} z and s in {{0.1, 1, 10}}", zs.len()),
    ))
}

/// reconstruct(decompose(z), M) = z, and the decoded reconstruction matches G(z).
pub fn truncation(basis: &QuasiEigenBasis, zs: &[Vec<f64>], generator: Option<&Network>) -> Result<Vec<Check>> {
    let m = basis.dim();
    let mut worst = 0.0f64;
    let mut recon = Vec::with_capacity(zs.len());
    for z in zs {
        let r = reconstruct(&decompose(z, basis)?, basis, m)?;
        worst = worst.max(rel_err(&r, z));
        recon.push(r);
    }
    let mut out = vec![Check::new("truncation-identity", worst <= 1e-6, format!("max relative error {worst:.3e}"))];
    if let Some(g) = generator {
        let to_tensor = |v: &[Vec<f64>]| {
            let flat: Vec<f32> = v.iter().flatten().map(|&x| x as f32).collect();
            Tensor::new(vec![v.len(), m], flat)
        };
        let a = generate(g, &to_tensor(zs)?)?;
        let b = generate(g, &to_tensor(&recon)?)?;
        let diff = a
            .data()
            .iter()
            .zip(b.data())
            .fold(0.0f32, |acc, (x, y)| acc.max((x - y).abs()));
        out.push(Check::new(
            "decoded-full-reconstruction",
            diff <= 1e-5,
            format!("max abs pixel difference {diff:.3e}"),
        ));
    }
    Ok(out)
}

pub fn rotation_algebra(basis: &QuasiEigenBasis, zs: &[Vec<f64>]) -> Result<Vec<Check>> {
    let (a, b) = (0, 1);
    let quarter = rotation(basis, a, b, 0.0, FRAC_PI_2)?.apply(basis.vector(a))?;
    let q_err = quarter
        .iter()
        .zip(basis.vector(b))
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));

    let mut z = basis.vector(a).to_vec();
    for r in 0..3 {
        z = renormalize(&rotation(basis, a, b, r as f64 * FRAC_PI_6, FRAC_PI_6)?.apply(&z)?)?;
    }
    let three = cosine_distance(&z, basis.vector(b));

    let (theta, d1, d2) = (0.3f64, 0.4, 0.7);
    let (s, c) = theta.sin_cos();
    let unit: Vec<f64> = basis
        .vector(a)
        .iter()
        .zip(basis.vector(b))
        .map(|(x, y)| c * x + s * y)
        .collect();
    let two_step = rotation(basis, a, b, theta + d1, d2)?.apply(&rotation(basis, a, b, theta, d1)?.apply(&unit)?)?;
    let one_step = rotation(basis, a, b, theta, d1 + d2)?.apply(&unit)?;
    let additivity = two_step
        .iter()
        .zip(&one_step)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));

    let mut factored = 0.0f64;
    let op = rotation(basis, a, b, 0.2, 0.5)?;
    let dense = LatentOperator::Dense(op.to_dense());
    for z in zs.iter().take(100) {
        let f = op.apply(z)?;
        let d = dense.apply(z)?;
        if dot(&d, &d) > 0.0 {
            factored = factored.max(rel_err(&f, &d));
        }
    }

    let mut endpoint = 0.0f64;
    if let (Some(z0), Some(last)) = (zs.first(), basis.index_of(basis.labels() - 1, 1)) {
        let fine = rotate_trajectory(z0, basis, 3, FRAC_PI_6)?;
        let coarse = rotate_trajectory(z0, basis, 1, FRAC_PI_2)?;
        let (f, c) = (fine.last().expect("path"), coarse.last().expect("path"));
        endpoint = cosine_distance(f, basis.vector(last)).max(cosine_distance(f, c));
    }

    Ok(vec![
        Check::new("rotation-quarter-turn", q_err <= 1e-9, format!("max |R(pi/2,0) xi_a - xi_b| = {q_err:.3e}")),
        Check::new("rotation-three-steps", three <= 1e-6, format!("cosine distance to xi_b {three:.3e}")),
        Check::new("rotation-additivity", additivity <= 1e-9, format!("max deviation {additivity:.3e}")),
        Check::new("operator-factored-vs-dense", factored <= 1e-9, format!("max relative deviation {factored:.3e}")),
        Check::new(
            "trajectory-endpoint",
            endpoint <= 1e-6,
            format!("cosine distance of the final latent to xi_(l-1,1) and to the single-step path {endpoint:.3e}"),
        ),
    ])
}

/// The complete suite over `count` random latents.
pub fn verify_basis(basis: &QuasiEigenBasis, generator: Option<&Network>, count: usize, seed: u64) -> Result<Vec<Check>> {
    let zs = random_latents(basis.dim(), count, seed);
    let mut checks = orthogonality(basis);
    if !checks.iter().all(|c| c.passed) {
        return Ok(checks);
    }
    checks.extend(completeness(basis, &zs)?);
    checks.push(scale_invariance(basis, &zs)?);
    checks.extend(truncation(basis, &zs, generator)?);
    checks.extend(rotation_algebra(basis, &zs)?);
    Ok(checks)
}
