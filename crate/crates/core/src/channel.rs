//! Far-field channel synthesis for the BS / HRIS / UE / Eve geometry and the
//! analytic position derivatives of the bistatic sensing channel.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    bs_hris_angles, node_angle_jacobian, node_angles, ula_steering_derivative, ula_steering_spaced,
    upa_steering, upa_steering_derivatives, AngleSet, ArrayLayout, CVector, Position3,
};

pub type CMatrix = DMatrix<Complex64>;
pub type CRow = RowDVector<Complex64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Distance exponent of the amplitude path loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathLossLaw {
    /// Amplitude decays as 1/d² per hop.
    #[default]
    InverseSquare,
    /// Amplitude decays as 1/d per hop.
    FreeSpace,
}

impl PathLossLaw {
    fn exponent(self) -> i32 {
        match self {
            PathLossLaw::InverseSquare => 2,
            PathLossLaw::FreeSpace => 1,
        }
    }
}

/// How the HRIS power splitter scales the absorbed and reflected branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerSplit {
    /// Sensing amplitude ϱ, reflection amplitude 1-ϱ.
    #[default]
    Linear,
    /// Sensing amplitude √ϱ, reflection amplitude √(1-ϱ).
    SquareRoot,
}

impl PowerSplit {
    pub fn sensing_gain(self, rho: f64) -> f64 {
        match self {
            PowerSplit::Linear => rho,
            PowerSplit::SquareRoot => rho.sqrt(),
        }
    }

    pub fn reflection_gain(self, rho: f64) -> f64 {
        match self {
            PowerSplit::Linear => 1.0 - rho,
            PowerSplit::SquareRoot => (1.0 - rho).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfConstants {
    pub carrier_hz: f64,
    pub wavelength_m: f64,
    /// Noise power σ² in watts.
    pub noise_power_w: f64,
    /// Symbols per coherent block (T).
    pub block_len: usize,
    pub p_max_w: f64,
    pub path_loss: PathLossLaw,
    pub power_split: PowerSplit,
}

impl RfConstants {
    pub fn new(carrier_hz: f64, noise_power_w: f64, block_len: usize, p_max_w: f64) -> Result<Self> {
        let c = Self {
            carrier_hz,
            wavelength_m: SPEED_OF_LIGHT / carrier_hz,
            noise_power_w,
            block_len,
            p_max_w,
            path_loss: PathLossLaw::default(),
            power_split: PowerSplit::default(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.carrier_hz)
            && positive(self.wavelength_m)
            && positive(self.noise_power_w)
            && positive(self.p_max_w)
            && self.block_len > 0)
        {
            return Err(Error::Dimension(format!("RF constants must be strictly positive: {self:?}")));
        }
        let expected = SPEED_OF_LIGHT / self.carrier_hz;
        if ((self.wavelength_m - expected) / expected).abs() > 1e-9 {
            return Err(Error::Dimension(format!(
                "wavelength {} inconsistent with carrier {} Hz",
                self.wavelength_m, self.carrier_hz
            )));
        }
        Ok(())
    }

    fn hop_gain(&self, d: f64) -> f64 {
        self.wavelength_m / (4.0 * PI * d.powi(self.path_loss.exponent()))
    }

    fn propagation_phase(&self, d: f64) -> Complex64 {
        Complex64::from_polar(1.0, -2.0 * PI * d / self.wavelength_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Ue,
    Eve,
}

/// η = [p_UE; p_Eve].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPair {
    pub ue: Position3,
    pub eve: Position3,
}

impl TargetPair {
    pub fn new(ue: Position3, eve: Position3) -> Self {
        Self { ue, eve }
    }

    pub fn get(&self, node: Node) -> Position3 {
        match node {
            Node::Ue => self.ue,
            Node::Eve => self.eve,
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        let (u, e) = (self.ue, self.eve);
        [u.x, u.y, u.z, e.x, e.y, e.z]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new(Position3::new(a[0], a[1], a[2]), Position3::new(a[3], a[4], a[5]))
    }

    /// Shift coordinate `index` (0..6, ordered as η) by `delta`.
    pub fn shifted(&self, index: usize, delta: f64) -> Self {
        let mut a = self.to_array();
        a[index] += delta;
        Self::from_array(a)
    }
}

/// Reflection-coefficient phases (ω_UE, ω_Eve).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReflectionPhases {
    pub ue: f64,
    pub eve: f64,
}

impl ReflectionPhases {
    pub fn get(&self, node: Node) -> f64 {
        match node {
            Node::Ue => self.ue,
            Node::Eve => self.eve,
        }
    }
}

/// Direct BS-to-node channel (N_T entries).
pub fn dl_channel(p_k: Position3, theta_k: f64, constants: &RfConstants, layout: &ArrayLayout) -> Result<CVector> {
    let d = p_k.norm();
    if !(d > 0.0 && d.is_finite()) {
        return Err(crate::error::degenerate("DL channel requested for a node at the BS"));
    }
    let gain = constants.propagation_phase(d) * constants.hop_gain(d);
    Ok(ula_steering_spaced(theta_k, layout.n_tx, layout.element_spacing) * gain)
}

/// Rank-one LoS BS-to-HRIS channel (N_H × N_T).
pub fn bs_hris_channel(
    p_h: Position3,
    angles: &AngleSet,
    constants: &RfConstants,
    layout: &ArrayLayout,
) -> Result<CMatrix> {
    let d = p_h.norm();
    if !(d > 0.0 && d.is_finite()) {
        return Err(crate::error::degenerate("HRIS at the BS"));
    }
    let a = &angles.bs_hris;
    let gain = constants.propagation_phase(d) * constants.hop_gain(d);
    let a_h = upa_steering(a.psi_br, a.phi_br, layout);
    let a_bs = ula_steering_spaced(a.theta_br, layout.n_tx, layout.element_spacing);
    Ok(a_h * a_bs.adjoint() * gain)
}

/// HRIS-to-node channel as a row vector (1 × N_H), i.e. `gain · a_H^H(ψ_k, φ_k)`.
pub fn hris_user_channel(
    p_k: Position3,
    p_h: Position3,
    constants: &RfConstants,
    layout: &ArrayLayout,
) -> Result<CRow> {
    let ang = node_angles(p_k, p_h)?;
    if ang.r <= 1e-9 {
        return Err(crate::error::degenerate("node directly below the HRIS: azimuth AoA undefined"));
    }
    let d = p_h.distance(p_k);
    let gain = constants.propagation_phase(d) * constants.hop_gain(d);
    Ok(upa_steering(ang.psi, ang.phi, layout).adjoint() * gain)
}

/// Complex end-to-end gain of the BS → node → HRIS bounce, and its gradient
/// with respect to the node position.
fn bounce_gain(
    p_k: Position3,
    omega: f64,
    p_h: Position3,
    constants: &RfConstants,
) -> (Complex64, [Complex64; 3]) {
    let d1 = p_k.norm();
    let d2 = p_h.distance(p_k);
    let n = constants.path_loss.exponent();
    let lam = constants.wavelength_m;
    let amp = lam * lam / (4.0 * PI * PI * d1.powi(n) * d2.powi(n));
    let g = Complex64::from_polar(amp, omega - 2.0 * PI * (d1 + d2) / lam);
    let pk = p_k.to_array();
    let ph = p_h.to_array();
    let mut grad = [Complex64::new(0.0, 0.0); 3];
    for c in 0..3 {
        let dd1 = pk[c] / d1;
        let dd2 = (pk[c] - ph[c]) / d2;
        let log_amp = -(n as f64) * (dd1 / d1 + dd2 / d2);
        let phase = -2.0 * PI / lam * (dd1 + dd2);
        grad[c] = g * Complex64::new(log_amp, phase);
    }
    (g, grad)
}

/// Single-node summand of the bistatic channel.
pub fn bistatic_term(
    p_k: Position3,
    omega: f64,
    p_h: Position3,
    constants: &RfConstants,
    layout: &ArrayLayout,
) -> Result<CMatrix> {
    let ang = node_angles(p_k, p_h)?;
    let (g, _) = bounce_gain(p_k, omega, p_h, constants);
    let a_h = upa_steering(ang.psi, ang.phi, layout);
    let a_bs = ula_steering_spaced(ang.theta, layout.n_tx, layout.element_spacing);
    Ok(a_h * a_bs.adjoint() * g)
}

/// Bistatic sensing channel (N_H × N_T): sum of the UE and Eve bounces.
pub fn bistatic_channel(
    eta: &TargetPair,
    omega: &ReflectionPhases,
    p_h: Position3,
    constants: &RfConstants,
    layout: &ArrayLayout,
) -> Result<CMatrix> {
    Ok(bistatic_term(eta.ue, omega.ue, p_h, constants, layout)?
        + bistatic_term(eta.eve, omega.eve, p_h, constants, layout)?)
}

/// ∂/∂(x, y, z) of one node's bistatic summand.
pub fn bistatic_term_derivatives(
    p_k: Position3,
    omega: f64,
    p_h: Position3,
    constants: &RfConstants,
    layout: &ArrayLayout,
) -> Result<[CMatrix; 3]> {
    let ang = node_angles(p_k, p_h)?;
    let jac = node_angle_jacobian(p_k, p_h)?;
    let (g, grad_g) = bounce_gain(p_k, omega, p_h, constants);
    let sp = layout.element_spacing;
    let a_h = upa_steering(ang.psi, ang.phi, layout);
    let (da_h_dpsi, da_h_dphi) = upa_steering_derivatives(ang.psi, ang.phi, layout);
    let a_bs_h = ula_steering_spaced(ang.theta, layout.n_tx, sp).adjoint();
    let da_bs_h = ula_steering_derivative(ang.theta, layout.n_tx, sp).adjoint();

    let base = &a_h * &a_bs_h;
    let d_theta = &a_h * &da_bs_h * g;
    let d_psi = &da_h_dpsi * &a_bs_h * g;
    let d_phi = &da_h_dphi * &a_bs_h * g;

    Ok(std::array::from_fn(|c| {
        // rows of the angle Jacobian are (θ, ψ, φ)
        let r = |v: f64| Complex64::new(v, 0.0);
        &base * grad_g[c] + &d_theta * r(jac[(0, c)]) + &d_psi * r(jac[(1, c)]) + &d_phi * r(jac[(2, c)])
    }))
}

/// Analytic ∂H_H/∂η_i for the six coordinates of η. Entries 0..3 only
/// involve the UE summand, 3..6 only the Eve summand.
pub fn bistatic_derivatives(
    eta: &TargetPair,
    omega: &ReflectionPhases,
    p_h: Position3,
    constants: &RfConstants,
    layout: &ArrayLayout,
) -> Result<[CMatrix; 6]> {
    let [ux, uy, uz] = bistatic_term_derivatives(eta.ue, omega.ue, p_h, constants, layout)?;
    let [ex, ey, ez] = bistatic_term_derivatives(eta.eve, omega.eve, p_h, constants, layout)?;
    Ok([ux, uy, uz, ex, ey, ez])
}

/// All channel objects of one realization.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub h_dl_ue: CVector,
    pub h_dl_eve: CVector,
    pub h_bh: CMatrix,
    pub h_bistatic: CMatrix,
    pub h_hu_ue: CRow,
    pub h_hu_eve: CRow,
    pub omega: ReflectionPhases,
}

impl ChannelSet {
    pub fn build(
        eta: &TargetPair,
        omega: ReflectionPhases,
        p_h: Position3,
        constants: &RfConstants,
        layout: &ArrayLayout,
    ) -> Result<Self> {
        let ue = node_angles(eta.ue, p_h)?;
        let eve = node_angles(eta.eve, p_h)?;
        let angles = AngleSet { node: ue, bs_hris: bs_hris_angles(p_h)? };
        Ok(Self {
            h_dl_ue: dl_channel(eta.ue, ue.theta, constants, layout)?,
            h_dl_eve: dl_channel(eta.eve, eve.theta, constants, layout)?,
            h_bh: bs_hris_channel(p_h, &angles, constants, layout)?,
            h_bistatic: bistatic_channel(eta, &omega, p_h, constants, layout)?,
            h_hu_ue: hris_user_channel(eta.ue, p_h, constants, layout)?,
            h_hu_eve: hris_user_channel(eta.eve, p_h, constants, layout)?,
            omega,
        })
    }

    pub fn n_tx(&self) -> usize {
        self.h_dl_ue.len()
    }

    pub fn n_h(&self) -> usize {
        self.h_bh.nrows()
    }

    pub fn dl(&self, node: Node) -> &CVector {
        match node {
            Node::Ue => &self.h_dl_ue,
            Node::Eve => &self.h_dl_eve,
        }
    }

    pub fn hu(&self, node: Node) -> &CRow {
        match node {
            Node::Ue => &self.h_hu_ue,
            Node::Eve => &self.h_hu_eve,
        }
    }

    /// Per-element cascaded reflection rows: row n is `h_HU[n] · H_BH[n, :]`,
    /// so that the reflected channel is `Σ_n e^{jυ_n} · row_n`.
    pub fn cascade(&self, node: Node) -> CMatrix {
        let hu = self.hu(node);
        let mut out = self.h_bh.clone();
        for (n, mut row) in out.row_iter_mut().enumerate() {
            row *= hu[n];
        }
        out
    }

    fn check(&self, state: &HrisState) -> Result<()> {
        let (n_h, n_tx) = (self.n_h(), self.n_tx());
        if self.h_bh.ncols() != n_tx
            || self.h_hu_ue.ncols() != n_h
            || self.h_hu_eve.ncols() != n_h
            || self.h_dl_eve.len() != n_tx
            || state.phases.len() != n_h
        {
            return Err(Error::Dimension(format!(
                "channel set (N_H={n_h}, N_T={n_tx}) inconsistent with HRIS state ({} phases)",
                state.phases.len()
            )));
        }
        Ok(())
    }
}

/// HRIS configuration: power-split ratio, reflection phases and the
/// block-sparse analog combiner.
#[derive(Debug, Clone, PartialEq)]
pub struct HrisState {
    pub rho: f64,
    /// υ, with reflection coefficients e^{jυ}.
    pub phases: DVector<f64>,
    /// N_H × N_RF combiner; column l is nonzero only on rows l·n_e..(l+1)·n_e.
    pub combiner: CMatrix,
}

impl HrisState {
    pub fn new(rho: f64, phases: DVector<f64>, combiner: CMatrix, layout: &ArrayLayout) -> Result<Self> {
        let s = Self { rho, phases, combiner };
        s.validate(layout)?;
        Ok(s)
    }

    /// Zero phases and an all-ones combiner.
    pub fn initial(rho: f64, layout: &ArrayLayout) -> Result<Self> {
        let blocks = vec![CVector::from_element(layout.n_e, Complex64::new(1.0, 0.0)); layout.n_rf];
        Self::new(rho, DVector::zeros(layout.n_h()), combiner_from_blocks(&blocks, layout)?, layout)
    }

    pub fn validate(&self, layout: &ArrayLayout) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Dimension(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        let n_h = layout.n_h();
        if self.phases.len() != n_h || self.combiner.shape() != (n_h, layout.n_rf) {
            return Err(Error::Dimension(format!(
                "HRIS state shape mismatch: {} phases, combiner {:?}, expected N_H={n_h}, N_RF={}",
                self.phases.len(),
                self.combiner.shape(),
                layout.n_rf
            )));
        }
        if self.phases.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dimension("non-finite reflection phase".into()));
        }
        for l in 0..layout.n_rf {
            for r in 0..n_h {
                let v = self.combiner[(r, l)];
                let in_block = r / layout.n_e == l;
                if in_block && (v.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::Dimension(format!("combiner entry ({r}, {l}) is not unit modulus")));
                }
                if !in_block && v != Complex64::new(0.0, 0.0) {
                    return Err(Error::Dimension(format!("combiner entry ({r}, {l}) violates block sparsity")));
                }
            }
        }
        Ok(())
    }

    pub fn reflection_coefficients(&self) -> CVector {
        self.phases.map(|v| Complex64::from_polar(1.0, v))
    }

    /// W = W_H W_H^H.
    pub fn combiner_covariance(&self) -> CMatrix {
        &self.combiner * self.combiner.adjoint()
    }
}

/// Assemble the block-sparse combiner from per-RF-chain weight vectors.
pub fn combiner_from_blocks(blocks: &[CVector], layout: &ArrayLayout) -> Result<CMatrix> {
    if blocks.len() != layout.n_rf || blocks.iter().any(|b| b.len() != layout.n_e) {
        return Err(Error::Dimension("combiner blocks do not match the array layout".into()));
    }
    let mut w = CMatrix::zeros(layout.n_h(), layout.n_rf);
    for (l, b) in blocks.iter().enumerate() {
        w.view_mut((l * layout.n_e, l), (layout.n_e, 1)).copy_from(b);
    }
    Ok(w)
}

/// `h_DL,k + c_r · h_HU,k diag(e^{jυ}) H_BH` as a 1 × N_T row.
pub fn effective_channel(
    state: &HrisState,
    channels: &ChannelSet,
    node: Node,
    split: PowerSplit,
) -> Result<CRow> {
    channels.check(state)?;
    let direct = channels.dl(node).transpose();
    let c_r = split.reflection_gain(state.rho);
    if c_r == 0.0 {
        return Ok(direct);
    }
    let mut hu = channels.hu(node).clone();
    for (n, v) in hu.iter_mut().enumerate() {
        *v *= Complex64::from_polar(1.0, state.phases[n]);
    }
    Ok(direct + hu * &channels.h_bh * Complex64::new(c_r, 0.0))
}
