//! Rank-one recovery from a relaxed covariance.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::CMatrix;
use crate::error::{Error, Result};
use crate::geometry::CVector;

/// Defect above which Gaussian randomization is attempted.
pub const RANK1_DEFECT_THRESHOLD: f64 = 1e-2;
pub const RANDOMIZATION_SAMPLES: usize = 100;

/// Eigenpairs of a Hermitian matrix, eigenvalues descending.
pub fn sorted_eigen(cov: &CMatrix) -> (Vec<f64>, CMatrix) {
    let h = (cov + cov.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMatrix::from_columns(&idx.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>());
    (vals, vecs)
}

/// Rotates `v` so that its largest-magnitude entry is real and positive.
pub fn canonical_phase(mut v: CVector) -> CVector {
    if let Some((_, &p)) = v.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())) {
        if p.norm() > 0.0 {
            let rot = p.conj() / p.norm();
            v.iter_mut().for_each(|x| *x *= rot);
        }
    }
    v
}

/// `f = u₁√ρ₁` and the defect `ρ₂/ρ₁`.
pub fn extract_rank_one(cov: &CMatrix) -> Result<(CVector, f64)> {
    if cov.nrows() == 0 || cov.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
        return Err(Error::ZeroMatrix);
    }
    let (vals, vecs) = sorted_eigen(cov);
    let l1 = vals[0];
    if !(l1 > 0.0) {
        return Err(Error::ZeroMatrix);
    }
    let defect = vals.get(1).map_or(0.0, |&l2| l2.max(0.0) / l1);
    let f = vecs.column(0).into_owned() * Complex64::new(l1.sqrt(), 0.0);
    Ok((canonical_phase(f), defect))
}

/// Draws `ξ = U Λ^{1/2} r` with `r ~ CN(0, I)` and keeps the candidate with the
/// smallest score; `score` returns `None` for infeasible candidates.
pub fn gaussian_randomization(
    cov: &CMatrix,
    samples: usize,
    seed: u64,
    mut score: impl FnMut(&CVector) -> Option<f64>,
) -> Option<(CVector, f64)> {
    let (vals, vecs) = sorted_eigen(cov);
    let n = vals.len();
    let sqrt_l = CVector::from_iterator(n, vals.iter().map(|&l| Complex64::new(l.max(0.0).sqrt(), 0.0)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(CVector, f64)> = None;
    for _ in 0..samples {
        let r = CVector::from_fn(n, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        });
        let xi = &vecs * r.component_mul(&sqrt_l);
        if let Some(s) = score(&xi) {
            if best.as_ref().is_none_or(|(_, b)| s < *b) {
                best = Some((xi, s));
            }
        }
    }
    best
}
