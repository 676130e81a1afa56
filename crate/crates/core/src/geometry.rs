//! Node positions, angle extraction, array steering vectors and the
//! angle-to-position Jacobian.
//!
//! The BS sits at the origin with a ULA along its local axis; the HRIS is a
//! UPA of `n_rf` columns by `n_e` elements whose first element sits at
//! `p_h`. All angles are radians in (-π, π].

use std::f64::consts::PI;

use nalgebra::{DVector, Matrix3, Matrix6};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{degenerate, Error, Result};

pub type CVector = DVector<Complex64>;

/// Smallest distance treated as non-degenerate.
const MIN_DIST: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn sub(self, other: Self) -> Self {
        Self::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    pub fn distance(self, other: Self) -> f64 {
        self.sub(other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Returns a copy with coordinate `axis` (0 = x, 1 = y, 2 = z) shifted by `delta`.
    pub fn shifted(self, axis: usize, delta: f64) -> Self {
        let mut a = self.to_array();
        a[axis] += delta;
        Self::from_array(a)
    }
}

/// BS and HRIS array dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayLayout {
    pub n_tx: usize,
    pub n_rf: usize,
    pub n_e: usize,
    /// Inter-element spacing in wavelengths.
    pub element_spacing: f64,
}

impl ArrayLayout {
    pub fn new(n_tx: usize, n_rf: usize, n_e: usize) -> Result<Self> {
        Self::with_spacing(n_tx, n_rf, n_e, 0.5)
    }

    pub fn with_spacing(n_tx: usize, n_rf: usize, n_e: usize, element_spacing: f64) -> Result<Self> {
        let layout = Self { n_tx, n_rf, n_e, element_spacing };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_rf == 0 || self.n_e == 0 {
            return Err(Error::Dimension(format!(
                "array sizes must be positive (n_tx={}, n_rf={}, n_e={})",
                self.n_tx, self.n_rf, self.n_e
            )));
        }
        if !(self.element_spacing.is_finite() && self.element_spacing > 0.0) {
            return Err(Error::Dimension(format!(
                "element spacing must be positive, got {}",
                self.element_spacing
            )));
        }
        Ok(())
    }

    /// Total number of HRIS meta-atoms.
    pub fn n_h(&self) -> usize {
        self.n_rf * self.n_e
    }
}

/// Angles of one node as seen from the BS and the HRIS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeAngles {
    /// Azimuth AoD at the BS.
    pub theta: f64,
    /// Elevation AoA at the HRIS.
    pub psi: f64,
    /// Azimuth AoA at the HRIS.
    pub phi: f64,
    /// Horizontal HRIS-to-node distance.
    pub r: f64,
}

/// Angles of the static BS-HRIS link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsHrisAngles {
    pub theta_br: f64,
    pub psi_br: f64,
    pub phi_br: f64,
    pub r_h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleSet {
    pub node: NodeAngles,
    pub bs_hris: BsHrisAngles,
}

/// Angles of node `p_k` and of the BS-HRIS link.
pub fn angles_from_positions(p_k: Position3, p_h: Position3) -> Result<AngleSet> {
    Ok(AngleSet { node: node_angles(p_k, p_h)?, bs_hris: bs_hris_angles(p_h)? })
}

pub fn node_angles(p_k: Position3, p_h: Position3) -> Result<NodeAngles> {
    check_finite(p_k)?;
    check_finite(p_h)?;
    if p_k.norm() <= MIN_DIST {
        return Err(degenerate("node coincides with the BS"));
    }
    if p_h.distance(p_k) <= MIN_DIST {
        return Err(degenerate("node coincides with the HRIS"));
    }
    let r = (p_h.x - p_k.x).hypot(p_h.y - p_k.y);
    Ok(NodeAngles {
        theta: p_k.y.atan2(p_k.x),
        phi: (p_k.y - p_h.y).atan2(p_k.x - p_h.x),
        psi: (p_k.z - p_h.z).atan2(r),
        r,
    })
}

pub fn bs_hris_angles(p_h: Position3) -> Result<BsHrisAngles> {
    check_finite(p_h)?;
    if p_h.norm() <= MIN_DIST {
        return Err(degenerate("HRIS coincides with the BS"));
    }
    let r_h = p_h.x.hypot(p_h.y);
    let az = p_h.y.atan2(p_h.x);
    Ok(BsHrisAngles { theta_br: az, psi_br: az, phi_br: p_h.z.atan2(r_h), r_h })
}

fn check_finite(p: Position3) -> Result<()> {
    if p.is_finite() {
        Ok(())
    } else {
        Err(degenerate(format!("non-finite position {p:?}")))
    }
}

/// Phase progression per element: 2π·spacing·sin(θ).
fn phase_step(theta: f64, spacing: f64) -> f64 {
    2.0 * PI * spacing * theta.sin()
}

/// ULA steering vector with half-wavelength spacing.
pub fn ula_steering(theta: f64, n: usize) -> CVector {
    ula_steering_spaced(theta, n, 0.5)
}

/// Entries `e^{j 2π d m sin θ} / √n`, `m = 0..n-1`.
pub fn ula_steering_spaced(theta: f64, n: usize, spacing: f64) -> CVector {
    let step = phase_step(theta, spacing);
    let scale = 1.0 / (n as f64).sqrt();
    CVector::from_fn(n, |m, _| Complex64::from_polar(scale, step * m as f64))
}

/// Derivative of [`ula_steering_spaced`] with respect to `theta`.
pub fn ula_steering_derivative(theta: f64, n: usize, spacing: f64) -> CVector {
    let a = ula_steering_spaced(theta, n, spacing);
    let dstep = 2.0 * PI * spacing * theta.cos();
    CVector::from_fn(n, |m, _| a[m] * Complex64::new(0.0, dstep * m as f64))
}

/// HRIS steering vector `a_rows(φ) ⊗ a_cols(ψ)`; element `(l, n)` of the
/// surface maps to index `l·n_e + n`.
pub fn upa_steering(psi: f64, phi: f64, layout: &ArrayLayout) -> CVector {
    let rows = ula_steering_spaced(phi, layout.n_rf, layout.element_spacing);
    let cols = ula_steering_spaced(psi, layout.n_e, layout.element_spacing);
    rows.kronecker(&cols)
}

/// Partial derivatives of [`upa_steering`] with respect to `(psi, phi)`.
pub fn upa_steering_derivatives(psi: f64, phi: f64, layout: &ArrayLayout) -> (CVector, CVector) {
    let d = layout.element_spacing;
    let rows = ula_steering_spaced(phi, layout.n_rf, d);
    let cols = ula_steering_spaced(psi, layout.n_e, d);
    let d_rows = ula_steering_derivative(phi, layout.n_rf, d);
    let d_cols = ula_steering_derivative(psi, layout.n_e, d);
    (rows.kronecker(&d_cols), d_rows.kronecker(&cols))
}

/// Jacobian of `(θ, ψ, φ)` of one node with respect to its `(x, y, z)`.
pub fn node_angle_jacobian(p_k: Position3, p_h: Position3) -> Result<Matrix3<f64>> {
    node_angles(p_k, p_h)?;
    let rho2 = p_k.x * p_k.x + p_k.y * p_k.y;
    if rho2.sqrt() <= MIN_DIST {
        return Err(degenerate("node on the BS vertical axis: azimuth AoD undefined"));
    }
    let dx = p_k.x - p_h.x;
    let dy = p_k.y - p_h.y;
    let dz = p_k.z - p_h.z;
    let r2 = dx * dx + dy * dy;
    let r = r2.sqrt();
    if r <= MIN_DIST {
        return Err(degenerate("node directly below/above the HRIS: azimuth AoA undefined"));
    }
    let q2 = r2 + dz * dz;
    // ψ = atan2(dz, r): ∂ψ/∂r = -dz/q², ∂ψ/∂dz = r/q²
    let dpsi_dr = -dz / q2;
    Ok(Matrix3::new(
        -p_k.y / rho2,
        p_k.x / rho2,
        0.0,
        dpsi_dr * dx / r,
        dpsi_dr * dy / r,
        r / q2,
        -dy / r2,
        dx / r2,
        0.0,
    ))
}

/// Block-diagonal 6×6 Jacobian `∂η̃/∂η` with η̃ = [θ, ψ, φ]_UE ++ [θ, ψ, φ]_Eve
/// and η = [p_UE; p_Eve].
pub fn angle_jacobian(p_ue: Position3, p_eve: Position3, p_h: Position3) -> Result<Matrix6<f64>> {
    let ue = node_angle_jacobian(p_ue, p_h)?;
    let eve = node_angle_jacobian(p_eve, p_h)?;
    let mut t = Matrix6::zeros();
    t.fixed_view_mut::<3, 3>(0, 0).copy_from(&ue);
    t.fixed_view_mut::<3, 3>(3, 3).copy_from(&eve);
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const P_H: Position3 = Position3::new(0.0, 30.0, 5.0);

    #[test]
    fn diagonal_node_has_quarter_pi_aod() {
        let a = angles_from_positions(Position3::new(1.0, 1.0, 0.0), P_H).unwrap();
        assert_eq!(a.node.theta, PI / 4.0);
    }

    #[test]
    fn elevation_matches_scalar_formula() {
        let a = angles_from_positions(Position3::new(5.0, 10.0, 2.0), P_H).unwrap();
        // atan2(-3, sqrt(425)) evaluated independently
        assert_relative_eq!(a.node.psi, -0.144_507_022_698_459_05, epsilon = 1e-12);
        assert_relative_eq!(a.node.psi, (-3.0f64).atan2(425f64.sqrt()), epsilon = 0.0);
    }

    #[test]
    fn bs_hris_angles_on_y_axis() {
        let a = bs_hris_angles(P_H).unwrap();
        assert_eq!(a.theta_br, PI / 2.0);
        assert_eq!(a.psi_br, PI / 2.0);
        assert_relative_eq!(a.phi_br, 5f64.atan2(30.0));
    }

    #[test]
    fn degenerate_nodes_are_rejected() {
        assert!(angles_from_positions(Position3::new(0.0, 0.0, 0.0), P_H).is_err());
        assert!(angles_from_positions(P_H, P_H).is_err());
        assert!(bs_hris_angles(Position3::new(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn ula_broadside_is_uniform() {
        let a = ula_steering(0.0, 4);
        for v in a.iter() {
            assert_relative_eq!(v.re, 0.5);
            assert_relative_eq!(v.im, 0.0);
        }
    }

    #[test]
    fn ula_endfire_alternates() {
        let a = ula_steering(PI / 2.0, 2);
        let s = 1.0 / 2f64.sqrt();
        assert_relative_eq!(a[0].re, s);
        assert_relative_eq!(a[1].re, -s, epsilon = 1e-15);
        assert!(a[1].im.abs() < 1e-15);
    }

    #[test]
    fn ula_thirty_degrees_quarter_turns() {
        let a = ula_steering(PI / 6.0, 8);
        let s = 1.0 / 8f64.sqrt();
        for m in 0..8 {
            let want = Complex64::from_polar(s, PI * m as f64 / 2.0);
            assert!((a[m] - want).norm() < 1e-14, "m={m}");
        }
        assert_relative_eq!(a.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn upa_reduces_to_ula_for_single_column() {
        let layout = ArrayLayout::new(4, 1, 6).unwrap();
        let a = upa_steering(0.3, -1.1, &layout);
        let b = ula_steering(0.3, 6);
        assert!((a - b).norm() < 1e-14);
    }

    #[test]
    fn upa_two_by_two_kronecker_table() {
        let layout = ArrayLayout::new(4, 2, 2).unwrap();
        let (psi, phi) = (PI / 4.0, PI / 3.0);
        let a = upa_steering(psi, phi, &layout);
        let p = PI * phi.sin();
        let q = PI * psi.sin();
        // index l·n_e + n ↔ e^{j(l·p + n·q)} / 2
        let table = [0.0, q, p, p + q];
        for (i, ph) in table.iter().enumerate() {
            assert!((a[i] - Complex64::from_polar(0.5, *ph)).norm() < 1e-14);
        }
    }

    #[test]
    fn upa_broadside_uniform() {
        let layout = ArrayLayout::new(4, 4, 8).unwrap();
        let a = upa_steering(0.0, 0.0, &layout);
        for v in a.iter() {
            assert_relative_eq!(v.re, 1.0 / 32f64.sqrt(), epsilon = 1e-15);
        }
    }

    #[test]
    fn layout_rejects_zero_sizes() {
        assert!(ArrayLayout::new(0, 4, 8).is_err());
        assert!(ArrayLayout::new(16, 0, 8).is_err());
        assert!(ArrayLayout::with_spacing(16, 4, 8, 0.0).is_err());
    }

    #[test]
    fn jacobian_cross_blocks_and_height_independence() {
        let t = angle_jacobian(Position3::new(5.0, 10.0, 2.0), Position3::new(20.0, 20.0, 2.0), P_H).unwrap();
        for i in 0..3 {
            for j in 3..6 {
                assert_eq!(t[(i, j)], 0.0);
                assert_eq!(t[(j, i)], 0.0);
            }
        }
        assert_eq!(t[(0, 2)], 0.0);
        assert_eq!(t[(3, 5)], 0.0);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let p = Position3::new(5.0, 10.0, 2.0);
        let jac = node_angle_jacobian(p, P_H).unwrap();
        let h = 1e-5;
        for axis in 0..3 {
            let plus = node_angles(p.shifted(axis, h), P_H).unwrap();
            let minus = node_angles(p.shifted(axis, -h), P_H).unwrap();
            let fd = [
                (plus.theta - minus.theta) / (2.0 * h),
                (plus.psi - minus.psi) / (2.0 * h),
                (plus.phi - minus.phi) / (2.0 * h),
            ];
            for row in 0..3 {
                let an = jac[(row, axis)];
                let err = (an - fd[row]).abs();
                assert!(err <= 1e-6 * an.abs().max(1e-3), "row {row} axis {axis}: {an} vs {}", fd[row]);
            }
        }
    }

    #[test]
    fn jacobian_rejects_node_below_hris() {
        assert!(node_angle_jacobian(Position3::new(0.0, 30.0, 2.0), P_H).is_err());
    }
}
