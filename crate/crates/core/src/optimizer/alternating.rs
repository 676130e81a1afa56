use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    optimize_reflection, solve_combiner, solve_precoder, Design, OptSettings, Scenario, TargetGrid,
};
use crate::channel::{combiner_from_blocks, effective_channel, HrisState, Node, TargetPair};
use crate::conic::rank_one::sorted_eigen;
use crate::error::{Error, Result};
use crate::geometry::{node_angles, upa_steering, CVector, Position3};
use crate::metrics::{fim_prefactor, Peb};

/// Square candidate area of one node, discretized into K points at fixed z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyRegion {
    pub center: Position3,
    pub half_extent_xy: f64,
    pub k_points: usize,
    pub points: Vec<Position3>,
}

/// `⌈√K⌉ × ⌈√K⌉` lattice over `center ± half_extent`, truncated row-major
/// (rows along y, columns along x) to K points. K = 1 gives the center.
pub fn discretize_region(center: Position3, half_extent: f64, k: usize) -> Result<UncertaintyRegion> {
    if k == 0 {
        return Err(Error::InvalidProblem("uncertainty region needs K >= 1".into()));
    }
    if !(half_extent.is_finite() && half_extent >= 0.0) || !center.is_finite() {
        return Err(Error::InvalidProblem(format!("invalid uncertainty region half extent {half_extent}")));
    }
    if k > 1 && half_extent == 0.0 {
        return Err(Error::InvalidProblem("K > 1 needs a positive half extent".into()));
    }
    let points = if k == 1 {
        vec![center]
    } else {
        let m = (k as f64).sqrt().ceil() as usize;
        let step = 2.0 * half_extent / (m - 1) as f64;
        (0..k)
            .map(|idx| {
                let (r, c) = (idx / m, idx % m);
                Position3::new(center.x - half_extent + step * c as f64, center.y - half_extent + step * r as f64, center.z)
            })
            .collect()
    };
    Ok(UncertaintyRegion { center, half_extent_xy: half_extent, k_points: k, points })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `Σ_b Tr{J̃_b⁻¹}` after the iteration.
    pub objective: f64,
    /// Largest PEB over the design pairs.
    pub peb_worst: f64,
    /// `min R_UE − max R_Eve`, unclamped.
    pub secrecy_margin: f64,
    pub precoder_status: String,
    pub precoder_defect: f64,
    pub precoder_accepted: bool,
    pub randomized: bool,
    pub combiner_status: String,
    pub combiner_defect: f64,
    pub combiner_accepted: bool,
    pub reflection_gain: f64,
}

#[derive(Debug, Clone)]
pub struct AlternatingReport {
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub initial_objective: f64,
    pub objective: f64,
    pub design: Design,
    /// PEB of every design pair, in grid order.
    pub pebs: Vec<Peb>,
    pub rate_ue: f64,
    pub rate_eve: f64,
    /// Whether the final design meets the secrecy threshold.
    pub secrecy_ok: bool,
    /// Rank-one defect of the last accepted precoder solve.
    pub rank1_defect: f64,
}

impl AlternatingReport {
    pub fn n_iter(&self) -> usize {
        self.iterations.len()
    }

    pub fn secrecy_rate(&self) -> f64 {
        (self.rate_ue - self.rate_eve).max(0.0)
    }

    /// Pair with the largest total PEB.
    pub fn worst_peb(&self) -> Peb {
        self.pebs.iter().copied().fold(Peb { total: f64::NEG_INFINITY, ue: 0.0, eve: 0.0 }, |a, b| {
            if b.total > a.total || b.total.is_nan() {
                b
            } else {
                a
            }
        })
    }
}

/// Zero phases, combiner blocks steered at the two centers, and the
/// principal eigenvector of the summed UE channel covariances at full power.
pub fn initial_design(scn: &Scenario, grid: &TargetGrid, rho: f64, ue_center: Position3, eve_center: Position3) -> Result<Design> {
    let lay = &scn.layout;
    let a_ue = {
        let a = node_angles(ue_center, scn.p_h)?;
        upa_steering(a.psi, a.phi, lay)
    };
    let a_eve = {
        let a = node_angles(eve_center, scn.p_h)?;
        upa_steering(a.psi, a.phi, lay)
    };
    let sum = a_ue + a_eve;
    let blocks: Vec<CVector> = (0..lay.n_rf)
        .map(|l| {
            sum.rows(l * lay.n_e, lay.n_e)
                .map(|v| if v.norm() > 1e-12 { v / v.norm() } else { Complex64::new(1.0, 0.0) })
        })
        .collect();
    let state = HrisState::new(rho, nalgebra::DVector::zeros(lay.n_h()), combiner_from_blocks(&blocks, lay)?, lay)?;

    let mut cov = crate::channel::CMatrix::zeros(lay.n_tx, lay.n_tx);
    for i in 0..grid.ue.len() {
        let h = effective_channel(&state, grid.ue_channels(i), Node::Ue, scn.constants.power_split)?;
        cov += h.adjoint() * h;
    }
    let (_, vecs) = sorted_eigen(&cov);
    let f = crate::conic::rank_one::canonical_phase(vecs.column(0).into_owned())
        * Complex64::new(scn.constants.p_max_w.sqrt(), 0.0);
    Ok(Design { f, state })
}

fn margin_ok(margin: f64, r_th: Option<f64>) -> bool {
    r_th.is_none_or(|r| margin >= r - 1e-9)
}

/// Alternating optimization over an arbitrary target grid.
///
/// A subproblem result that raises the true objective is rejected, so the
/// recorded objective never increases once the design meets the secrecy
/// threshold.
pub fn alternate(
    scn: &Scenario,
    grid: &TargetGrid,
    r_th: Option<f64>,
    init: Design,
    settings: &OptSettings,
) -> Result<AlternatingReport> {
    init.state.validate(&scn.layout)?;
    let mut design = init;
    let initial_objective = grid.objective(scn, &design);
    let mut obj = initial_objective;
    let mut feasible = margin_ok(grid.secrecy_margin(scn, &design.f, &design.state)?, r_th);
    let sensing = fim_prefactor(&scn.constants, design.state.rho) > 0.0;
    let mut records = Vec::new();
    let mut converged = false;
    let mut last_defect = 0.0;

    for it in 1..=settings.max_iters {
        let prev = obj;
        let mut rec = IterationRecord {
            iteration: it,
            objective: obj,
            peb_worst: f64::INFINITY,
            secrecy_margin: f64::NAN,
            precoder_status: "skipped".into(),
            precoder_defect: 0.0,
            precoder_accepted: false,
            randomized: false,
            combiner_status: "skipped".into(),
            combiner_defect: 0.0,
            combiner_accepted: false,
            reflection_gain: 0.0,
        };

        if sensing {
            let out = match solve_precoder(scn, grid, &design.state, r_th, &design.f, settings) {
                Err(Error::InfeasibleSecrecy { .. }) => return Err(Error::InfeasibleSecrecy { iteration: Some(it) }),
                other => other?,
            };
            let cand = Design { f: out.f.clone(), state: design.state.clone() };
            let cand_obj = grid.objective(scn, &cand);
            let accept = if feasible { out.secrecy_ok && cand_obj <= obj } else { out.secrecy_ok || cand_obj <= obj };
            rec.precoder_status = out.status.as_str().into();
            rec.precoder_defect = out.rank1_defect;
            rec.randomized = out.randomized;
            rec.precoder_accepted = accept;
            if accept {
                design = cand;
                obj = cand_obj;
                last_defect = out.rank1_defect;
            }
        }

        if sensing && !settings.skip_combiner {
            let out = solve_combiner(scn, grid, &design.f, &design.state, settings)?;
            let mut state = design.state.clone();
            state.combiner = out.combiner;
            let cand = Design { f: design.f.clone(), state };
            let cand_obj = grid.objective(scn, &cand);
            rec.combiner_status = out.status.as_str().into();
            rec.combiner_defect = out.rank1_defect;
            if cand_obj <= obj {
                // the combiner does not enter the rates, so feasibility is unchanged
                design = cand;
                obj = cand_obj;
                rec.combiner_accepted = true;
            }
        }

        if !settings.skip_reflection {
            let out = optimize_reflection(scn, grid, &design.f, &design.state, settings)?;
            rec.reflection_gain = out.value - out.initial_value;
            if out.value >= out.initial_value {
                design.state.phases = out.phases;
            }
        }

        let margin = grid.secrecy_margin(scn, &design.f, &design.state)?;
        feasible = margin_ok(margin, r_th);
        rec.objective = obj;
        rec.secrecy_margin = margin;
        rec.peb_worst = grid.pebs(scn, &design).iter().map(|p| p.total).fold(f64::NEG_INFINITY, f64::max);
        records.push(rec);

        let done = prev == obj || (prev.is_finite() && (prev - obj).abs() <= settings.tol * prev.abs());
        if done {
            converged = true;
            break;
        }
    }

    let (rate_ue, rate_eve) = grid.worst_case_rates(scn, &design.f, &design.state)?;
    Ok(AlternatingReport {
        iterations: records,
        converged,
        initial_objective,
        objective: obj,
        pebs: grid.pebs(scn, &design),
        secrecy_ok: margin_ok(rate_ue - rate_eve, r_th),
        design,
        rate_ue,
        rate_eve,
        rank1_defect: last_defect,
    })
}

/// Genie-aided design at the true target pair.
pub fn alternate_genie(
    scn: &Scenario,
    eta: TargetPair,
    rho: f64,
    r_th: Option<f64>,
    init: Option<Design>,
    settings: &OptSettings,
) -> Result<AlternatingReport> {
    let grid = TargetGrid::genie(scn, eta)?;
    let init = match init {
        Some(d) => d,
        None => initial_design(scn, &grid, rho, eta.ue, eta.eve)?,
    };
    alternate(scn, &grid, r_th, init, settings)
}

/// Robust design over all pairs of the two discretized regions.
pub fn alternate_robust(
    scn: &Scenario,
    region_ue: &UncertaintyRegion,
    region_eve: &UncertaintyRegion,
    rho: f64,
    r_th: Option<f64>,
    init: Option<Design>,
    settings: &OptSettings,
) -> Result<AlternatingReport> {
    let grid = robust_grid(scn, region_ue, region_eve, settings)?;
    let init = match init {
        Some(d) => d,
        None => initial_design(scn, &grid, rho, region_ue.center, region_eve.center)?,
    };
    alternate(scn, &grid, r_th, init, settings)
}

/// Target grid of a robust design, after the problem-size guard.
pub fn robust_grid(
    scn: &Scenario,
    region_ue: &UncertaintyRegion,
    region_eve: &UncertaintyRegion,
    settings: &OptSettings,
) -> Result<TargetGrid> {
    let k = region_ue.points.len().max(region_eve.points.len());
    if k > settings.max_k {
        return Err(Error::ProblemTooLarge {
            k,
            lmis: 6 * region_ue.points.len() * region_eve.points.len(),
            cap: 6 * settings.max_k * settings.max_k,
        });
    }
    TargetGrid::robust(scn, &region_ue.points, &region_eve.points)
}

#[derive(Debug, Clone)]
pub enum TradeoffTargets {
    Genie(TargetPair),
    Robust { ue: UncertaintyRegion, eve: UncertaintyRegion },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub rho: f64,
    /// Genie: PEB at the true pair. Robust: the worst pair of the grid.
    pub peb: Peb,
    pub rate_ue: f64,
    pub rate_eve: f64,
    pub secrecy_rate: f64,
    pub iterations: usize,
    pub status: String,
    pub rank1_defect: f64,
}

/// One alternating run per ϱ with the secrecy constraint dropped: the
/// precoder and combiner minimize the PEB, the phase step maximizes secrecy.
pub fn tradeoff_sweep(scn: &Scenario, targets: &TradeoffTargets, rho_grid: &[f64], settings: &OptSettings) -> Vec<TradeoffPoint> {
    rho_grid
        .par_iter()
        .map(|&rho| {
            let run = || -> Result<AlternatingReport> {
                if !(0.0..=1.0).contains(&rho) {
                    return Err(Error::InvalidProblem(format!("rho {rho} outside [0, 1]")));
                }
                match targets {
                    TradeoffTargets::Genie(eta) => alternate_genie(scn, *eta, rho, None, None, settings),
                    TradeoffTargets::Robust { ue, eve } => alternate_robust(scn, ue, eve, rho, None, None, settings),
                }
            };
            match run() {
                Ok(rep) => TradeoffPoint {
                    rho,
                    peb: rep.worst_peb(),
                    rate_ue: rep.rate_ue,
                    rate_eve: rep.rate_eve,
                    secrecy_rate: rep.secrecy_rate(),
                    iterations: rep.n_iter(),
                    status: if rep.converged { "converged".into() } else { "max_iters".into() },
                    rank1_defect: rep.rank1_defect,
                },
                Err(e) => TradeoffPoint {
                    rho,
                    peb: Peb::INFINITE,
                    rate_ue: f64::NAN,
                    rate_eve: f64::NAN,
                    secrecy_rate: f64::NAN,
                    iterations: 0,
                    status: format!("error: {e}"),
                    rank1_defect: f64::NAN,
                },
            }
        })
        .collect()
}
