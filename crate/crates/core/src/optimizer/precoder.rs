//! Precoder subproblem: semidefinite relaxation over `F = f f^H`.
//!
//! The variable is the power-normalized `F' = F / P_max`, so `Tr F' ≤ 1`.
//! FIM expressions are divided by the prefactor `2T s(ϱ)²/σ²`, multiplied by
//! a power of two that brings their median magnitude near one, and whitened
//! around the FIM of the reference precoder; recovered `t` values are mapped
//! back by the inverse factors.

use nalgebra::Matrix6;
use num_complex::Complex64;

use super::{add_epigraphs, whiten_vec, Design, OptSettings, Scenario, TargetGrid};
use crate::channel::{effective_channel, CMatrix, HrisState, Node};
use crate::conic::rank_one::{sorted_eigen, RANDOMIZATION_SAMPLES, RANK1_DEFECT_THRESHOLD};
use crate::conic::{
    extract_rank_one, fim_scale, gaussian_randomization, solve, AffineExpr, ConicProblem, FimExpr, Preconditioner,
    Sense, SolveStatus,
};
use crate::error::{Error, Result};
use crate::geometry::CVector;
use crate::metrics::fim_prefactor;

/// Slack when re-checking the secrecy constraint on an extracted precoder.
const SECRECY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct PrecoderProblem {
    pub problem: ConicProblem,
    pub f_var: usize,
    pub t_vars: [usize; 6],
    pub t_weights: [f64; 6],
    /// True `Σ_b Tr{J̃_b⁻¹}` bound is `t_factor · Σ_a w_a t_a`.
    pub t_factor: f64,
}

#[derive(Debug, Clone)]
pub struct PrecoderOutcome {
    pub f_cov: CMatrix,
    pub f: CVector,
    pub rank1_defect: f64,
    pub status: SolveStatus,
    /// `Σ t` mapped back to FIM units.
    pub sdp_objective: f64,
    pub randomized: bool,
    /// Whether the returned `f` meets the secrecy threshold.
    pub secrecy_ok: bool,
}

fn fim_block(q: &[CMatrix]) -> Vec<Vec<CMatrix>> {
    (0..6).map(|a| (0..6).map(|c| q[a].adjoint() * &q[c]).collect()).collect()
}

/// Builds the relaxed precoder SDP for fixed combiner and reflection phases.
pub fn build_precoder_problem(
    scn: &Scenario,
    grid: &TargetGrid,
    state: &HrisState,
    r_th: Option<f64>,
    reference_f: &CVector,
) -> Result<PrecoderProblem> {
    let c = fim_prefactor(&scn.constants, state.rho);
    if !(c > 0.0) {
        return Err(Error::InvalidProblem("sensing prefactor is zero; the precoder has no effect on the FIM".into()));
    }
    let p_max = scn.constants.p_max_w;
    let n_tx = scn.layout.n_tx;

    // G_ab = Q_aᴴ Q_b with Q_a = W_Hᴴ E_a, so J̃_ab / c = P · Re Tr{G_ab F'}
    let qs: Vec<Vec<CMatrix>> = grid
        .transformed_derivs
        .iter()
        .map(|e| e.iter().map(|m| state.combiner.adjoint() * m).collect())
        .collect();
    let blocks: Vec<Vec<Vec<CMatrix>>> = qs.iter().map(|q| fim_block(q)).collect();
    let prior = scn.j_prior / c;

    let fim_at = |cov: &CMatrix| -> Vec<Matrix6<f64>> {
        blocks
            .iter()
            .map(|g| Matrix6::from_fn(|a, b| p_max * crate::metrics::trace_product(&g[a][b], cov).re) + prior)
            .collect()
    };
    let iso = CMatrix::identity(n_tx, n_tx) / Complex64::new(n_tx as f64, 0.0);
    let f_ref = reference_f * reference_f.adjoint() / Complex64::new(p_max, 0.0);
    // whitening around the reference alone under-represents directions the
    // reference happens to miss; half the power spread isotropically covers them
    let mixed = (&f_ref + &iso) * Complex64::new(0.5, 0.0);
    let refs = if f_ref.norm() == 0.0 { fim_at(&iso) } else { fim_at(&f_ref) };
    let s = fim_scale(refs.iter());
    let pcs: Vec<Preconditioner> = fim_at(&mixed).iter().map(|m| Preconditioner::from_reference(&(m * s))).collect();

    let mut p = ConicProblem::new();
    let fv = p.add_psd("F", n_tx);
    p.constrain("power", AffineExpr::psd(fv, &CMatrix::identity(n_tx, n_tx)).plus_constant(-1.0), Sense::Leq);

    if let Some(r) = r_th {
        let sigma2 = scn.constants.noise_power_w;
        let split = scn.constants.power_split;
        let gain = 2f64.powf(r);
        let ue: Vec<CMatrix> = (0..grid.ue.len())
            .map(|i| effective_channel(state, grid.ue_channels(i), Node::Ue, split).map(|h| h.adjoint() * h))
            .collect::<Result<_>>()?;
        let eve: Vec<CMatrix> = (0..grid.eve.len())
            .map(|j| effective_channel(state, grid.eve_channels(j), Node::Eve, split).map(|h| h.adjoint() * h))
            .collect::<Result<_>>()?;
        for (i, hu) in ue.iter().enumerate() {
            for (j, he) in eve.iter().enumerate() {
                let m = (hu - he * Complex64::new(gain, 0.0)) * Complex64::new(p_max / sigma2, 0.0);
                // max of Tr{M F} over Tr F <= 1 is λ_max(M): below the
                // threshold no precoder can meet the constraint
                if sorted_eigen(&m).0[0] * (1.0 + 1e-9) < gain - 1.0 {
                    return Err(Error::InfeasibleSecrecy { iteration: None });
                }
                p.constrain(format!("secrecy[{i},{j}]"), AffineExpr::psd(fv, &m).plus_constant(-(gain - 1.0)), Sense::Geq);
            }
        }
    }

    let fims: Vec<FimExpr> = qs
        .iter()
        .zip(&pcs)
        .map(|(q, pc)| {
            let g = fim_block(&whiten_vec(q, pc));
            let pw = pc.whiten(&(prior * s));
            (0..6)
                .map(|a| {
                    (0..6)
                        .map(|cc| {
                            AffineExpr::psd(fv, &(&g[a][cc] * Complex64::new(s * p_max, 0.0))).plus_constant(pw[(a, cc)])
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let (t, w) = add_epigraphs(&mut p, &fims, &pcs, grid.robust);
    Ok(PrecoderProblem { problem: p, f_var: fv, t_vars: t, t_weights: w, t_factor: s / c })
}

fn secrecy_ok(scn: &Scenario, grid: &TargetGrid, f: &CVector, state: &HrisState, r_th: Option<f64>) -> Result<bool> {
    match r_th {
        None => Ok(true),
        Some(r) => Ok(grid.secrecy_margin(scn, f, state)? >= r - SECRECY_SLACK),
    }
}

/// Solves the relaxed precoder problem and recovers a rank-one precoder.
///
/// Candidates are the principal eigenvector at full power and at its own
/// eigenvalue; when the rank-one defect exceeds the threshold, Gaussian
/// randomization adds more. The feasible candidate with the lowest true
/// objective wins.
pub fn solve_precoder(
    scn: &Scenario,
    grid: &TargetGrid,
    state: &HrisState,
    r_th: Option<f64>,
    reference_f: &CVector,
    settings: &OptSettings,
) -> Result<PrecoderOutcome> {
    let pp = build_precoder_problem(scn, grid, state, r_th, reference_f)?;
    let sol = solve(&pp.problem, &settings.solver)?;
    match sol.status {
        SolveStatus::Infeasible => return Err(Error::InfeasibleSecrecy { iteration: None }),
        SolveStatus::Failed => return Err(Error::Solver("precoder SDP failed".into())),
        _ => {}
    }
    let p_max = scn.constants.p_max_w;
    let f_cov = &sol.values.psd[pp.f_var] * Complex64::new(p_max, 0.0);
    let sdp_objective =
        pp.t_factor * pp.t_vars.iter().zip(pp.t_weights).map(|(&v, w)| w * sol.values.scalars[v]).sum::<f64>();
    let (f1, defect) = extract_rank_one(&f_cov)?;

    let full = {
        let n = f1.norm();
        &f1 * Complex64::new(p_max.sqrt() / n, 0.0)
    };
    let eval = |f: &CVector| -> Result<Option<f64>> {
        if !secrecy_ok(scn, grid, f, state, r_th)? {
            return Ok(None);
        }
        Ok(Some(grid.objective(scn, &Design { f: f.clone(), state: state.clone() })))
    };

    let mut best: Option<(CVector, f64)> = None;
    for cand in [full.clone(), f1.clone()] {
        if let Some(v) = eval(&cand)? {
            if best.as_ref().is_none_or(|(_, b)| v < *b) {
                best = Some((cand, v));
            }
        }
    }
    let mut randomized = false;
    if defect > RANK1_DEFECT_THRESHOLD {
        let sampled = gaussian_randomization(&f_cov, RANDOMIZATION_SAMPLES, settings.randomization_seed, |xi| {
            let n = xi.norm();
            if n == 0.0 {
                return None;
            }
            let f = xi * Complex64::new(p_max.sqrt() / n, 0.0);
            eval(&f).ok().flatten()
        });
        if let Some((xi, v)) = sampled {
            if best.as_ref().is_none_or(|(_, b)| v < *b) {
                let n = xi.norm();
                best = Some((xi * Complex64::new(p_max.sqrt() / n, 0.0), v));
                randomized = true;
            }
        }
    }
    let (f, ok) = match best {
        Some((f, _)) => (f, true),
        None => (full, false),
    };
    Ok(PrecoderOutcome { f_cov, f, rank1_defect: defect, status: sol.status, sdp_objective, randomized, secrecy_ok: ok })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::fixtures::{eta, scenario, with_prior};

    fn grid_best(scn: &Scenario, grid: &TargetGrid, state: &HrisState) -> f64 {
        let p = scn.constants.p_max_w.sqrt();
        let obj = |al: f64, be: f64| {
            let f = CVector::from_vec(vec![Complex64::new(p * al.cos(), 0.0), Complex64::from_polar(p * al.sin(), be)]);
            grid.objective(scn, &Design { f, state: state.clone() })
        };
        // 100 × 100 over (α, β) modulo the global phase, then local refinement
        let (mut ba, mut bb, mut bv) = (0.0, 0.0, f64::INFINITY);
        let (mut da, mut db) = (std::f64::consts::FRAC_PI_2 / 99.0, std::f64::consts::TAU / 100.0);
        for i in 0..100 {
            for k in 0..100 {
                let v = obj(da * i as f64, db * k as f64);
                if v < bv {
                    (ba, bb, bv) = (da * i as f64, db * k as f64, v);
                }
            }
        }
        for _ in 0..4 {
            let (ca, cb) = (ba, bb);
            for i in -10..=10 {
                for k in -10..=10 {
                    let (a, b) = (ca + da * i as f64 / 10.0, cb + db * k as f64 / 10.0);
                    let v = obj(a, b);
                    if v < bv {
                        (ba, bb, bv) = (a, b, v);
                    }
                }
            }
            da /= 10.0;
            db /= 10.0;
        }
        bv
    }

    #[test]
    fn two_antenna_precoder_matches_grid_search() {
        let scn = with_prior(scenario(2, 1, 4), 0.5, 0.05);
        let grid = TargetGrid::genie(&scn, eta()).unwrap();
        let state = HrisState::initial(0.5, &scn.layout).unwrap();
        let f0 = CVector::from_element(2, Complex64::new((scn.constants.p_max_w / 2.0).sqrt(), 0.0));
        let out = solve_precoder(&scn, &grid, &state, None, &f0, &OptSettings::default()).unwrap();
        let got = grid.objective(&scn, &Design { f: out.f.clone(), state: state.clone() });
        let want = grid_best(&scn, &grid, &state);
        println!("sdp {:e} extracted {got:e} grid {want:e} defect {:e}", out.sdp_objective, out.rank1_defect);
        assert!((got - want).abs() <= 1e-3 * want, "extracted {got:e} vs grid {want:e}");
        // the relaxation bounds every rank-one design from below
        assert!(out.sdp_objective <= want * (1.0 + 1e-6));
    }

    #[test]
    fn unreachable_threshold_is_certified_infeasible() {
        let scn = scenario(4, 1, 2);
        let grid = TargetGrid::genie(&scn, eta()).unwrap();
        let state = HrisState::initial(0.5, &scn.layout).unwrap();
        let f0 = CVector::from_element(4, Complex64::new((scn.constants.p_max_w / 4.0).sqrt(), 0.0));
        let err = solve_precoder(&scn, &grid, &state, Some(60.0), &f0, &OptSettings::default()).unwrap_err();
        assert!(matches!(err, Error::InfeasibleSecrecy { .. }), "{err}");
    }
}
