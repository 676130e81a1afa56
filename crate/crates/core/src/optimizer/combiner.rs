//! Combiner subproblem: one `N_E × N_E` PSD block `W_l` per RF chain with a
//! unit diagonal. For a rank-one precoder, `J̃_ab = c·Σ_l Re{v_alᴴ W_l v_bl}`
//! with `v_a = E_a f`, so the FIM is linear in the blocks.

use nalgebra::Matrix6;
use num_complex::Complex64;

use super::{add_epigraphs, whiten_vec, OptSettings, Scenario, TargetGrid};
use crate::channel::{combiner_from_blocks, CMatrix, HrisState};
use crate::conic::rank_one::{canonical_phase, sorted_eigen};
use crate::conic::{fim_scale, solve, AffineExpr, ConicProblem, FimExpr, Preconditioner, Sense, SolveStatus};
use crate::error::{Error, Result};
use crate::geometry::CVector;
use crate::metrics::fim_prefactor;

#[derive(Debug, Clone)]
pub struct CombinerOutcome {
    /// Relaxed blocks `W_l`.
    pub blocks: Vec<CMatrix>,
    /// Unit-modulus combiner rebuilt from the principal eigenvectors.
    pub combiner: CMatrix,
    pub status: SolveStatus,
    pub sdp_objective: f64,
    /// Largest `ρ₂/ρ₁` over the blocks.
    pub rank1_defect: f64,
}

/// Unit-modulus vector carrying the phases of `W_l`'s principal eigenvector.
pub fn phases_of_principal(w: &CMatrix) -> CVector {
    let (_, vecs) = sorted_eigen(w);
    // each column is defined up to a global phase; pin it for determinism
    canonical_phase(vecs.column(0).into_owned()).map(|v| if v.norm() > 0.0 { v / v.norm() } else { Complex64::new(1.0, 0.0) })
}

pub fn solve_combiner(
    scn: &Scenario,
    grid: &TargetGrid,
    f: &CVector,
    state: &HrisState,
    settings: &OptSettings,
) -> Result<CombinerOutcome> {
    let lay = &scn.layout;
    let (n_rf, n_e) = (lay.n_rf, lay.n_e);
    let c = fim_prefactor(&scn.constants, state.rho);
    if !(c > 0.0) {
        return Err(Error::InvalidProblem("sensing prefactor is zero; the combiner has no effect on the FIM".into()));
    }
    let prior = scn.j_prior / c;

    // v[b][a] = E_a f, sliced per block below
    let v: Vec<Vec<CVector>> = grid.transformed_derivs.iter().map(|e| e.iter().map(|m| m * f).collect()).collect();
    let block = |x: &CVector, l: usize| x.rows(l * n_e, n_e).into_owned();

    // scale from the FIM of the current combiner
    let refs: Vec<Matrix6<f64>> = (0..grid.pairs.len())
        .map(|b| {
            let u: Vec<CVector> = v[b].iter().map(|x| state.combiner.adjoint() * x).collect();
            Matrix6::from_fn(|a, cc| u[a].dotc(&u[cc]).re) + prior
        })
        .collect();
    let s = fim_scale(refs.iter());
    // whitening reference: current combiner mixed with identity blocks
    let pcs: Vec<Preconditioner> = refs
        .iter()
        .zip(&v)
        .map(|(r, vb)| {
            let iso = Matrix6::from_fn(|a, cc| vb[a].dotc(&vb[cc]).re) + prior;
            Preconditioner::from_reference(&((r + iso) * (0.5 * s)))
        })
        .collect();

    let mut p = ConicProblem::new();
    let wv: Vec<usize> = (0..n_rf).map(|l| p.add_psd(format!("W[{l}]"), n_e)).collect();
    for (l, &w) in wv.iter().enumerate() {
        for i in 0..n_e {
            let mut e = CMatrix::zeros(n_e, n_e);
            e[(i, i)] = Complex64::new(1.0, 0.0);
            p.constrain(format!("diag[{l},{i}]"), AffineExpr::psd(w, &e).plus_constant(-1.0), Sense::Eq);
        }
    }
    let fims: Vec<FimExpr> = (0..grid.pairs.len())
        .map(|b| {
            let vw = whiten_vec(&v[b], &pcs[b]);
            let pw = pcs[b].whiten(&(prior * s));
            (0..6)
                .map(|a| {
                    (0..6)
                        .map(|cc| {
                            let mut e = AffineExpr::constant(pw[(a, cc)]);
                            for (l, &w) in wv.iter().enumerate() {
                                let m = block(&vw[cc], l) * block(&vw[a], l).adjoint() * Complex64::new(s, 0.0);
                                e = e.plus(AffineExpr::psd(w, &m));
                            }
                            e
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let (t, weights) = add_epigraphs(&mut p, &fims, &pcs, grid.robust);

    let sol = solve(&p, &settings.solver)?;
    if !sol.status.has_point() {
        return Err(Error::Solver(format!("combiner SDP ended with status {}", sol.status.as_str())));
    }
    let blocks: Vec<CMatrix> = wv.iter().map(|&w| sol.values.psd[w].clone()).collect();
    let mut defect: f64 = 0.0;
    for w in &blocks {
        let (vals, _) = sorted_eigen(w);
        if vals.len() > 1 && vals[0] > 0.0 {
            defect = defect.max(vals[1].max(0.0) / vals[0]);
        }
    }
    let cols: Vec<CVector> = blocks.iter().map(phases_of_principal).collect();
    let combiner = combiner_from_blocks(&cols, lay)?;
    let sdp_objective = s / c * t.iter().zip(weights).map(|(&x, w)| w * sol.values.scalars[x]).sum::<f64>();
    Ok(CombinerOutcome { blocks, combiner, status: sol.status, sdp_objective, rank1_defect: defect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::fixtures::{eta, scenario, with_prior};
    use crate::optimizer::Design;

    #[test]
    fn two_element_combiner_matches_phase_grid() {
        let scn = with_prior(scenario(4, 1, 2), 0.5, 0.05);
        let grid = TargetGrid::genie(&scn, eta()).unwrap();
        let state = HrisState::initial(0.5, &scn.layout).unwrap();
        let f = CVector::from_fn(4, |i, _| Complex64::from_polar((scn.constants.p_max_w / 4.0).sqrt(), 0.7 * i as f64));
        let out = solve_combiner(&scn, &grid, &f, &state, &OptSettings::default()).unwrap();
        let eval = |w: CMatrix| {
            let mut s = state.clone();
            s.combiner = w;
            grid.objective(&scn, &Design { f: f.clone(), state: s })
        };
        let got = eval(out.combiner.clone());
        let want = (0..720)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / 720.0;
                eval(CMatrix::from_vec(2, 1, vec![Complex64::new(1.0, 0.0), Complex64::from_polar(1.0, th)]))
            })
            .fold(f64::INFINITY, f64::min);
        println!("sdp {:e} extracted {got:e} grid {want:e} defect {:e}", out.sdp_objective, out.rank1_defect);
        assert!(got <= want * (1.0 + 1e-3), "extracted {got:e} vs grid {want:e}");
        assert!(out.sdp_objective <= want * (1.0 + 1e-6));
    }

    #[test]
    fn single_element_blocks_are_unity() {
        let scn = scenario(4, 4, 1);
        let grid = TargetGrid::genie(&scn, eta()).unwrap();
        let state = HrisState::initial(0.5, &scn.layout).unwrap();
        let f = CVector::from_element(4, Complex64::new(0.1, 0.0));
        let out = solve_combiner(&scn, &grid, &f, &state, &OptSettings::default()).unwrap();
        for w in &out.blocks {
            assert!((w[(0, 0)].re - 1.0).abs() < 1e-7);
        }
        assert!(out.combiner.diagonal().iter().all(|c| (c - Complex64::new(1.0, 0.0)).norm() < 1e-9));
    }
}
