//! Schur-complement epigraph of the diagonal of an inverse FIM.
//!
//! `[[J̃, e_a], [e_aᵀ, t_a]] ⪰ 0` holds iff `t_a ≥ [J̃⁻¹]_{aa}` for `J̃ ≻ 0`,
//! so minimizing `Σ t_a` minimizes `Tr{J̃⁻¹}`.
//!
//! FIMs of the bistatic model routinely have eigenvalue spreads above 1e10,
//! which no interior-point method resolves directly. The LMIs can therefore
//! be written after the congruence `blkdiag(V, σ_a^{-1/2})`, with `V` a
//! whitening matrix of a reference FIM and `σ_a` its reference inverse
//! diagonal. Congruence by an invertible matrix preserves semidefiniteness,
//! so the feasible set and the argmin are unchanged.

use nalgebra::{Matrix6, SymmetricEigen};

use super::problem::{AffineExpr, ConicProblem, Lmi, LmiEntry, Sense};

/// 6 × 6 symmetric matrix of affine expressions; only `i <= j` is read.
pub type FimExpr = Vec<Vec<AffineExpr>>;

pub fn fim_expr_constant(j: &Matrix6<f64>) -> FimExpr {
    (0..6).map(|r| (0..6).map(|c| AffineExpr::constant(j[(r, c)])).collect()).collect()
}

/// Eigenvalue floor of the reference FIM, relative to its largest eigenvalue.
const WHITENING_FLOOR: f64 = 1e-13;

/// Congruence that maps a reference FIM to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioner {
    /// Whitening matrix, `Vᵀ J_ref V ≈ I`.
    pub v: Matrix6<f64>,
    /// Reference `[J_ref⁻¹]_{aa}`; the epigraph variable is `t_a / σ_a`.
    pub sigma: [f64; 6],
}

impl Preconditioner {
    pub fn identity() -> Self {
        Self { v: Matrix6::identity(), sigma: [1.0; 6] }
    }

    /// Built from the (floored) eigendecomposition of `j_ref`.
    pub fn from_reference(j_ref: &Matrix6<f64>) -> Self {
        let sym = (j_ref + j_ref.transpose()) * 0.5;
        if !sym.iter().all(|v| v.is_finite()) {
            return Self::identity();
        }
        let eig = SymmetricEigen::new(sym);
        let lmax = eig.eigenvalues.max();
        if !(lmax > 0.0) {
            return Self::identity();
        }
        let lam = eig.eigenvalues.map(|l| l.max(lmax * WHITENING_FLOOR));
        let u = eig.eigenvectors;
        let v = u * Matrix6::from_diagonal(&lam.map(|l| 1.0 / l.sqrt()));
        let inv = u * Matrix6::from_diagonal(&lam.map(|l| 1.0 / l)) * u.transpose();
        Self { v, sigma: std::array::from_fn(|a| inv[(a, a)]) }
    }

    /// `Vᵀ M V`.
    pub fn whiten(&self, m: &Matrix6<f64>) -> Matrix6<f64> {
        self.v.transpose() * m * self.v
    }
}

/// Six 7 × 7 LMIs, one per diagonal entry of the inverse.
pub fn build_peb_epigraph_lmis(fim: &FimExpr, aux: &[usize; 6], tag: &str) -> Vec<Lmi> {
    build_preconditioned_epigraph_lmis(fim, aux, &Preconditioner::identity(), tag)
}

/// Epigraph LMIs after the congruence `blkdiag(V, σ_a^{-1/2})`.
///
/// `fim` must already be whitened (`Vᵀ J̃ V`). Feasibility of LMI `a` is
/// equivalent to `σ_a · aux_a ≥ [J̃⁻¹]_{aa}`.
pub fn build_preconditioned_epigraph_lmis(fim: &FimExpr, aux: &[usize; 6], pc: &Preconditioner, tag: &str) -> Vec<Lmi> {
    (0..6)
        .map(|a| {
            let mut entries = Vec::with_capacity(28);
            for r in 0..6 {
                for c in r..6 {
                    entries.push(LmiEntry { row: r, col: c, expr: fim[r][c].clone() });
                }
            }
            let k = 1.0 / pc.sigma[a].sqrt();
            for r in 0..6 {
                // (Vᵀ e_a)_r = V_ar
                let v = pc.v[(a, r)] * k;
                if v != 0.0 {
                    entries.push(LmiEntry { row: r, col: 6, expr: AffineExpr::constant(v) });
                }
            }
            entries.push(LmiEntry { row: 6, col: 6, expr: AffineExpr::scalar(aux[a], 1.0) });
            Lmi { tag: format!("{tag}/epigraph[{a}]"), size: 7, entries }
        })
        .collect()
}

/// Replaces each entry of `fim` by a fresh scalar tied to it by an equality.
/// The six LMIs then share 21 scalars instead of repeating the dense
/// expressions, which keeps the conic matrix sparse.
pub fn tie_fim_entries(p: &mut ConicProblem, fim: &FimExpr, prefix: &str) -> FimExpr {
    let mut out: FimExpr = vec![vec![AffineExpr::default(); 6]; 6];
    for r in 0..6 {
        for c in r..6 {
            let v = p.add_scalar(format!("{prefix}/J[{r},{c}]"));
            let tie = fim[r][c].clone().plus_scalar(v, -1.0);
            p.constrain(format!("{prefix}/tie[{r},{c}]"), tie, Sense::Eq);
            out[r][c] = AffineExpr::scalar(v, 1.0);
            out[c][r] = AffineExpr::scalar(v, 1.0);
        }
    }
    out
}

/// Power of two nearest to `1 / median |entry|` over the upper triangles of
/// the given FIMs; `1` when every entry vanishes.
pub fn fim_scale<'a>(fims: impl IntoIterator<Item = &'a Matrix6<f64>>) -> f64 {
    let mut mags: Vec<f64> = Vec::new();
    for j in fims {
        for r in 0..6 {
            for c in r..6 {
                mags.push(j[(r, c)].abs());
            }
        }
    }
    mags.retain(|v| v.is_finite());
    if mags.is_empty() {
        return 1.0;
    }
    mags.sort_by(f64::total_cmp);
    let med = mags[mags.len() / 2];
    if med <= 0.0 {
        let nz: Vec<f64> = mags.into_iter().filter(|&v| v > 0.0).collect();
        return match nz.get(nz.len() / 2) {
            Some(&m) => (-m.log2()).round().exp2(),
            None => 1.0,
        };
    }
    (-med.log2()).round().exp2()
}
