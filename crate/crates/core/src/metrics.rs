//! Achievable and secrecy rates, Fisher information of the target positions,
//! and position error bounds.
//!
//! The FIM is evaluated in the covariance form
//! `J_ij = (2Tϱ²/σ²)·Re Tr{∂H^H/∂η_i · W · ∂H/∂η_j · F}` with `F = f f^H` and
//! `W = W_H W_H^H`, which is linear in each of `F` and `W`. That linearity is
//! what lets the precoder and combiner subproblems be posed as SDPs.

use nalgebra::{Matrix6, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{
    bistatic_derivatives, bistatic_term_derivatives, effective_channel, ChannelSet, CMatrix, CRow, HrisState,
    Node, PowerSplit, ReflectionPhases, RfConstants, TargetPair,
};
use crate::error::{Error, Result};
use crate::geometry::{angle_jacobian, node_angle_jacobian, ArrayLayout, CVector, Position3};

/// Ridge added to the FIM diagonal before inversion, relative to Tr{J}/dim.
pub const FIM_RIDGE: f64 = 1e-12;
/// Largest condition number accepted when inverting a FIM.
pub const MAX_FIM_CONDITION: f64 = 1e14;

/// `log2(1 + |h f|²/σ²)` in bps/Hz.
pub fn achievable_rate(f: &CVector, h_eff: &CRow, sigma2: f64) -> f64 {
    let g = (h_eff * f)[(0, 0)].norm_sqr();
    (g / sigma2).ln_1p() / std::f64::consts::LN_2
}

/// Rates of the UE and Eve links for precoder `f` and HRIS state `state`.
pub fn link_rates(
    f: &CVector,
    state: &HrisState,
    channels: &ChannelSet,
    sigma2: f64,
    split: PowerSplit,
) -> Result<(f64, f64)> {
    let h_ue = effective_channel(state, channels, Node::Ue, split)?;
    let h_eve = effective_channel(state, channels, Node::Eve, split)?;
    Ok((achievable_rate(f, &h_ue, sigma2), achievable_rate(f, &h_eve, sigma2)))
}

/// `max{0, R_UE − R_Eve}`.
pub fn secrecy_rate(
    f: &CVector,
    state: &HrisState,
    channels: &ChannelSet,
    sigma2: f64,
    split: PowerSplit,
) -> Result<f64> {
    let (ue, eve) = link_rates(f, state, channels, sigma2, split)?;
    Ok((ue - eve).max(0.0))
}

/// `H_k = h_k^H h_k` from the effective channel of `node`.
pub fn secrecy_matrix(state: &HrisState, channels: &ChannelSet, node: Node, split: PowerSplit) -> Result<CMatrix> {
    let h = effective_channel(state, channels, node, split)?;
    Ok(h.adjoint() * h)
}

/// `Tr{(H_UE − 2^{r_th} H_Eve) F}`; the secrecy constraint holds iff this is
/// at least `σ²(2^{r_th} − 1)`.
pub fn secrecy_constraint_lhs(
    f_cov: &CMatrix,
    channels: &ChannelSet,
    state: &HrisState,
    r_th: f64,
    split: PowerSplit,
) -> Result<f64> {
    let h_ue = secrecy_matrix(state, channels, Node::Ue, split)?;
    let h_eve = secrecy_matrix(state, channels, Node::Eve, split)?;
    let m = h_ue - h_eve * Complex64::new(2f64.powf(r_th), 0.0);
    Ok(trace_product(&m, f_cov).re)
}

/// Right-hand side `σ²(2^{r_th} − 1)` of the secrecy constraint.
pub fn secrecy_constraint_rhs(sigma2: f64, r_th: f64) -> f64 {
    sigma2 * (2f64.powf(r_th) - 1.0)
}

/// `Tr{A B}` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Precoder and combiner covariances `F` and `W`.
#[derive(Debug, Clone)]
pub struct DesignCovariances {
    pub f_cov: CMatrix,
    pub w_cov: CMatrix,
}

impl DesignCovariances {
    pub fn from_design(f: &CVector, state: &HrisState) -> Self {
        Self { f_cov: f * f.adjoint(), w_cov: state.combiner_covariance() }
    }

    /// Checks PSD-ness, the power budget and the block-diagonal combiner structure.
    pub fn validate(&self, layout: &ArrayLayout, p_max: f64) -> Result<()> {
        let n_h = layout.n_h();
        if self.f_cov.shape() != (layout.n_tx, layout.n_tx) || self.w_cov.shape() != (n_h, n_h) {
            return Err(Error::Dimension("design covariance shapes do not match the layout".into()));
        }
        for (name, m) in [("F", &self.f_cov), ("W", &self.w_cov)] {
            let scale = m.norm().max(f64::MIN_POSITIVE);
            let lmin = m.clone().symmetric_eigenvalues().min();
            if lmin < -1e-10 * scale {
                return Err(Error::Dimension(format!("{name} is not PSD (min eigenvalue {lmin:e})")));
            }
        }
        let tr = self.f_cov.trace().re;
        if tr > p_max + 1e-9 {
            return Err(Error::Dimension(format!("Tr(F) = {tr} exceeds P_max = {p_max}")));
        }
        for r in 0..n_h {
            for c in 0..n_h {
                if r / layout.n_e != c / layout.n_e && self.w_cov[(r, c)] != Complex64::new(0.0, 0.0) {
                    return Err(Error::Dimension(format!("W entry ({r}, {c}) outside the diagonal blocks")));
                }
            }
        }
        Ok(())
    }
}

/// `2T s(ϱ)²/σ²`, with `s` the sensing amplitude of the power splitter.
pub fn fim_prefactor(constants: &RfConstants, rho: f64) -> f64 {
    let s = constants.power_split.sensing_gain(rho);
    2.0 * constants.block_len as f64 * s * s / constants.noise_power_w
}

/// Position-domain FIM from the bistatic channel derivatives.
pub fn fim_from_derivatives(cov: &DesignCovariances, derivs: &[CMatrix; 6], prefactor: f64) -> Matrix6<f64> {
    // M_j = W ∂H_j F, then J_ij = Re Tr{∂H_i^H M_j} = Re Σ conj(∂H_i) ⊙ M_j
    let m: Vec<CMatrix> = derivs.iter().map(|d| &cov.w_cov * d * &cov.f_cov).collect();
    let mut j = Matrix6::zeros();
    for a in 0..6 {
        for b in a..6 {
            let v: f64 = derivs[a].iter().zip(m[b].iter()).map(|(x, y)| (x.conj() * y).re).sum();
            j[(a, b)] = prefactor * v;
            j[(b, a)] = prefactor * v;
        }
    }
    j
}

/// Same FIM for a rank-one precoder, via `u_j = W_H^H ∂H_j f`.
pub fn fim_rank_one(f: &CVector, combiner: &CMatrix, derivs: &[CMatrix; 6], prefactor: f64) -> Matrix6<f64> {
    let u: Vec<CVector> = derivs.iter().map(|d| combiner.adjoint() * (d * f)).collect();
    Matrix6::from_fn(|a, b| prefactor * u[a].dotc(&u[b]).re)
}

/// Everything needed to evaluate FIMs at one target pair.
#[derive(Debug, Clone)]
pub struct SensingPoint {
    pub eta: TargetPair,
    pub derivs: [CMatrix; 6],
    /// `∂η̃/∂η`, or identity in the position domain.
    pub jacobian: Matrix6<f64>,
}

impl SensingPoint {
    pub fn new(
        eta: TargetPair,
        omega: &ReflectionPhases,
        p_h: Position3,
        constants: &RfConstants,
        layout: &ArrayLayout,
        domain: PebDomain,
    ) -> Result<Self> {
        let derivs = bistatic_derivatives(&eta, omega, p_h, constants, layout)?;
        let jacobian = match domain {
            PebDomain::Transformed => angle_jacobian(eta.ue, eta.eve, p_h)?,
            PebDomain::Position => Matrix6::identity(),
        };
        Ok(Self { eta, derivs, jacobian })
    }
}

/// Which FIM the PEB is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PebDomain {
    /// `J̃ = TᵀJT + J̃_prior` with T the angle-to-position Jacobian.
    #[default]
    Transformed,
    /// The position-domain FIM J directly (meters).
    Position,
}

/// `Tᵀ J T + J̃_prior`.
pub fn fim_transform(j_pos: &Matrix6<f64>, jacobian_t: &Matrix6<f64>, j_prior: &Matrix6<f64>) -> Matrix6<f64> {
    jacobian_t.transpose() * j_pos * jacobian_t + j_prior
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peb {
    pub total: f64,
    pub ue: f64,
    pub eve: f64,
}

impl Peb {
    pub const INFINITE: Peb = Peb { total: f64::INFINITY, ue: f64::INFINITY, eve: f64::INFINITY };
}

/// Ridge-regularized symmetric inverse of a FIM of any size.
pub fn regularized_inverse<D>(j: &nalgebra::OMatrix<f64, D, D>) -> Result<nalgebra::OMatrix<f64, D, D>>
where
    D: nalgebra::DimName + nalgebra::DimSub<nalgebra::U1>,
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<D, D>
        + nalgebra::allocator::Allocator<D>
        + nalgebra::allocator::Allocator<<D as nalgebra::DimSub<nalgebra::U1>>::Output>,
{
    let n = D::dim() as f64;
    let tr = j.trace();
    if !(tr.is_finite() && tr > 0.0) {
        return Err(Error::SingularFim { condition: f64::INFINITY });
    }
    let mut reg = (j + j.transpose()) * 0.5;
    for i in 0..D::dim() {
        reg[(i, i)] += FIM_RIDGE * tr / n;
    }
    let eig = SymmetricEigen::new(reg);
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if condition > MAX_FIM_CONDITION {
        return Err(Error::SingularFim { condition });
    }
    let inv_diag = eig.eigenvalues.map(|l| 1.0 / l);
    Ok(&eig.eigenvectors * nalgebra::OMatrix::<f64, D, D>::from_diagonal(&inv_diag) * eig.eigenvectors.transpose())
}

/// PEB triple from the transformed FIM.
pub fn peb(j_tilde: &Matrix6<f64>) -> Result<Peb> {
    let inv = regularized_inverse(j_tilde)?;
    let ue: f64 = (0..3).map(|i| inv[(i, i)]).sum();
    let eve: f64 = (3..6).map(|i| inv[(i, i)]).sum();
    Ok(Peb { total: (ue + eve).sqrt(), ue: ue.sqrt(), eve: eve.sqrt() })
}

/// Like [`peb`], but maps a singular FIM to an infinite bound.
pub fn peb_or_inf(j_tilde: &Matrix6<f64>) -> Peb {
    peb(j_tilde).unwrap_or(Peb::INFINITE)
}

#[derive(Debug, Clone)]
pub struct FimBundle {
    pub j_pos: Matrix6<f64>,
    pub jacobian_t: Matrix6<f64>,
    pub j_prior: Matrix6<f64>,
    pub j_tilde: Matrix6<f64>,
    pub peb: Peb,
}

impl FimBundle {
    pub fn evaluate(
        cov: &DesignCovariances,
        point: &SensingPoint,
        prefactor: f64,
        j_prior: &Matrix6<f64>,
    ) -> Result<Self> {
        let j_pos = fim_from_derivatives(cov, &point.derivs, prefactor);
        let j_tilde = fim_transform(&j_pos, &point.jacobian, j_prior);
        let peb = peb(&j_tilde)?;
        Ok(Self { j_pos, jacobian_t: point.jacobian, j_prior: *j_prior, j_tilde, peb })
    }
}

/// PEB of a single probe target that is the only scatterer in the scene.
pub fn probe_peb(
    f: &CVector,
    combiner: &CMatrix,
    p: Position3,
    omega: f64,
    p_h: Position3,
    constants: &RfConstants,
    layout: &ArrayLayout,
    prefactor: f64,
    domain: PebDomain,
) -> Result<f64> {
    let d = bistatic_term_derivatives(p, omega, p_h, constants, layout)?;
    let u: Vec<CVector> = d.iter().map(|m| combiner.adjoint() * (m * f)).collect();
    let j = nalgebra::Matrix3::from_fn(|a, b| prefactor * u[a].dotc(&u[b]).re);
    let jt = match domain {
        PebDomain::Transformed => {
            let t = node_angle_jacobian(p, p_h)?;
            t.transpose() * j * t
        }
        PebDomain::Position => j,
    };
    Ok(regularized_inverse(&jt)?.trace().sqrt())
}
