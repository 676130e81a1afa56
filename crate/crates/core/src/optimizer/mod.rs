//! Joint design of the BS precoder, the HRIS combiner and the HRIS
//! reflection phases.
//!
//! Each alternating iteration solves a precoder SDP, a combiner SDP and a
//! projected-gradient ascent over the reflection phases. Genie-aided designs
//! use the true target pair; robust designs use every pair of a discretized
//! UE region and a discretized Eve region.

mod alternating;
mod combiner;
mod precoder;
mod reflection;

pub use alternating::{
    alternate, alternate_genie, alternate_robust, discretize_region, initial_design, robust_grid, tradeoff_sweep,
    AlternatingReport, IterationRecord, TradeoffPoint, TradeoffTargets, UncertaintyRegion,
};
pub use combiner::{solve_combiner, CombinerOutcome};
pub use precoder::{build_precoder_problem, solve_precoder, PrecoderOutcome, PrecoderProblem};
pub use reflection::{optimize_reflection, PhaseBounds, ReflectionOutcome};

use nalgebra::Matrix6;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{effective_channel, ChannelSet, CMatrix, HrisState, Node, ReflectionPhases, RfConstants, TargetPair};
use crate::conic::{build_preconditioned_epigraph_lmis, tie_fim_entries, AffineExpr, ConicProblem, FimExpr, Preconditioner, Sense, SolverSettings};
use crate::error::{Error, Result};
use crate::geometry::{ArrayLayout, CVector, Position3};
use crate::metrics::{achievable_rate, fim_prefactor, regularized_inverse, Peb, PebDomain, SensingPoint};

/// Fixed physical setup shared by every subproblem.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub layout: ArrayLayout,
    pub constants: RfConstants,
    pub p_h: Position3,
    /// Reflection phases ω of the two targets.
    pub omega: ReflectionPhases,
    pub j_prior: Matrix6<f64>,
    pub domain: PebDomain,
}

impl Scenario {
    pub fn new(layout: ArrayLayout, constants: RfConstants, p_h: Position3, omega: ReflectionPhases) -> Self {
        Self { layout, constants, p_h, omega, j_prior: Matrix6::zeros(), domain: PebDomain::Transformed }
    }
}

/// Knobs of the alternating optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptSettings {
    /// Relative objective change that counts as converged.
    pub tol: f64,
    pub max_iters: usize,
    pub solver: SolverSettings,
    pub phase_bounds: PhaseBounds,
    pub reflection_max_iter: usize,
    pub reflection_grad_tol: f64,
    pub skip_combiner: bool,
    pub skip_reflection: bool,
    /// Largest K accepted by the robust design (K² pairs, 6K² LMIs).
    pub max_k: usize,
    /// Seed of the Gaussian randomization fallback.
    pub randomization_seed: u64,
}

impl Default for OptSettings {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iters: 20,
            solver: SolverSettings::default(),
            phase_bounds: PhaseBounds::default(),
            reflection_max_iter: 500,
            reflection_grad_tol: 1e-6,
            skip_combiner: false,
            skip_reflection: false,
            max_k: 10,
            randomization_seed: 0x5eed,
        }
    }
}

/// Precoder plus HRIS configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub f: CVector,
    pub state: HrisState,
}

/// Target pairs a design is evaluated on, with their channels and FIM
/// derivatives precomputed. Pair `b = i·K_eve + j` couples UE point `i` with
/// Eve point `j`.
#[derive(Debug, Clone)]
pub struct TargetGrid {
    pub ue: Vec<Position3>,
    pub eve: Vec<Position3>,
    pub pairs: Vec<TargetPair>,
    pub channels: Vec<ChannelSet>,
    pub points: Vec<SensingPoint>,
    /// `E_a = Σ_i T_ia ∂H/∂η_i` per pair.
    pub transformed_derivs: Vec<[CMatrix; 6]>,
    /// Robust grids couple the per-pair epigraphs through a sum.
    pub robust: bool,
}

impl TargetGrid {
    pub fn genie(scn: &Scenario, eta: TargetPair) -> Result<Self> {
        Self::build(scn, vec![eta.ue], vec![eta.eve], false)
    }

    pub fn robust(scn: &Scenario, ue: &[Position3], eve: &[Position3]) -> Result<Self> {
        Self::build(scn, ue.to_vec(), eve.to_vec(), true)
    }

    fn build(scn: &Scenario, ue: Vec<Position3>, eve: Vec<Position3>, robust: bool) -> Result<Self> {
        if ue.is_empty() || eve.is_empty() {
            return Err(Error::InvalidProblem("empty target grid".into()));
        }
        let mut pairs = Vec::with_capacity(ue.len() * eve.len());
        for u in &ue {
            for e in &eve {
                pairs.push(TargetPair::new(*u, *e));
            }
        }
        let mut channels = Vec::with_capacity(pairs.len());
        let mut points = Vec::with_capacity(pairs.len());
        let mut transformed_derivs = Vec::with_capacity(pairs.len());
        for eta in &pairs {
            channels.push(ChannelSet::build(eta, scn.omega, scn.p_h, &scn.constants, &scn.layout)?);
            let pt = SensingPoint::new(*eta, &scn.omega, scn.p_h, &scn.constants, &scn.layout, scn.domain)?;
            let e: [CMatrix; 6] = std::array::from_fn(|a| {
                let mut acc = CMatrix::zeros(scn.layout.n_h(), scn.layout.n_tx);
                for (i, d) in pt.derivs.iter().enumerate() {
                    let w = pt.jacobian[(i, a)];
                    if w != 0.0 {
                        acc += d * Complex64::new(w, 0.0);
                    }
                }
                acc
            });
            transformed_derivs.push(e);
            points.push(pt);
        }
        Ok(Self { ue, eve, pairs, channels, points, transformed_derivs, robust })
    }

    pub fn k_eve(&self) -> usize {
        self.eve.len()
    }

    /// Channels with the UE at grid point `i`.
    pub fn ue_channels(&self, i: usize) -> &ChannelSet {
        &self.channels[i * self.k_eve()]
    }

    /// Channels with Eve at grid point `j`.
    pub fn eve_channels(&self, j: usize) -> &ChannelSet {
        &self.channels[j]
    }

    /// `J̃_b` of pair `b` for a rank-one precoder.
    pub fn fim_tilde(&self, scn: &Scenario, b: usize, f: &CVector, state: &HrisState) -> Matrix6<f64> {
        let c = fim_prefactor(&scn.constants, state.rho);
        let u: Vec<CVector> =
            self.transformed_derivs[b].iter().map(|e| state.combiner.adjoint() * (e * f)).collect();
        Matrix6::from_fn(|a, bb| c * u[a].dotc(&u[bb]).re) + scn.j_prior
    }

    /// PEB of every pair; singular FIMs map to infinity.
    pub fn pebs(&self, scn: &Scenario, design: &Design) -> Vec<Peb> {
        (0..self.pairs.len())
            .map(|b| crate::metrics::peb_or_inf(&self.fim_tilde(scn, b, &design.f, &design.state)))
            .collect()
    }

    /// `Σ_b Tr{J̃_b⁻¹}`: the quantity the epigraph objective `Σ t` bounds.
    pub fn objective(&self, scn: &Scenario, design: &Design) -> f64 {
        let mut acc = 0.0;
        for b in 0..self.pairs.len() {
            match regularized_inverse(&self.fim_tilde(scn, b, &design.f, &design.state)) {
                Ok(inv) => acc += inv.trace(),
                Err(_) => return f64::INFINITY,
            }
        }
        acc
    }

    /// Worst UE rate over the UE grid and best Eve rate over the Eve grid.
    pub fn worst_case_rates(&self, scn: &Scenario, f: &CVector, state: &HrisState) -> Result<(f64, f64)> {
        let sigma2 = scn.constants.noise_power_w;
        let split = scn.constants.power_split;
        let mut ue = f64::INFINITY;
        for i in 0..self.ue.len() {
            let h = effective_channel(state, self.ue_channels(i), Node::Ue, split)?;
            ue = ue.min(achievable_rate(f, &h, sigma2));
        }
        let mut eve = f64::NEG_INFINITY;
        for j in 0..self.eve.len() {
            let h = effective_channel(state, self.eve_channels(j), Node::Eve, split)?;
            eve = eve.max(achievable_rate(f, &h, sigma2));
        }
        Ok((ue, eve))
    }

    /// `min R_UE − max R_Eve`, not clamped at zero.
    pub fn secrecy_margin(&self, scn: &Scenario, f: &CVector, state: &HrisState) -> Result<f64> {
        let (ue, eve) = self.worst_case_rates(scn, f, state)?;
        Ok(ue - eve)
    }
}

/// Whitens `Σ_c x_c V_ca` for every `a`.
pub(crate) fn whiten_vec<T>(xs: &[T], pc: &Preconditioner) -> Vec<T>
where
    T: Clone + std::ops::Mul<Complex64, Output = T> + std::ops::Add<Output = T>,
{
    (0..6)
        .map(|a| {
            (1..6).fold(xs[0].clone() * Complex64::new(pc.v[(0, a)], 0.0), |acc, c| {
                acc + xs[c].clone() * Complex64::new(pc.v[(c, a)], 0.0)
            })
        })
        .collect()
}

/// Adds the PEB epigraph of every pair plus the objective.
///
/// `fims[b]` must already be whitened by `pcs[b]`. Returns the `t` variables
/// and weights `w` with `Σ_b Tr{M_b⁻¹} ≤ Σ_a w_a t_a` at any feasible point,
/// where `M_b` is the unwhitened FIM expression. The objective is that bound
/// divided by `Σ w` so it stays near one.
pub(crate) fn add_epigraphs(
    p: &mut ConicProblem,
    fims: &[FimExpr],
    pcs: &[Preconditioner],
    robust: bool,
) -> ([usize; 6], [f64; 6]) {
    // one pair makes the coupling redundant: solve the plain epigraph
    let robust = robust && fims.len() > 1;
    let t: [usize; 6] = std::array::from_fn(|a| p.add_scalar(format!("t[{a}]")));
    let weights: [f64; 6] = if robust {
        std::array::from_fn(|a| pcs.iter().map(|pc| pc.sigma[a]).sum())
    } else {
        pcs[0].sigma
    };
    let mut eps_sums: Vec<AffineExpr> = vec![AffineExpr::default(); 6];
    for (b, (fim, pc)) in fims.iter().zip(pcs).enumerate() {
        let tag = format!("pair[{b}]");
        let tied = tie_fim_entries(p, fim, &tag);
        let aux: [usize; 6] = if robust {
            std::array::from_fn(|a| {
                let x = p.add_scalar(format!("eps[{a},{b}]"));
                let e = std::mem::take(&mut eps_sums[a]);
                eps_sums[a] = e.plus_scalar(x, pc.sigma[a] / weights[a]);
                x
            })
        } else {
            t
        };
        for l in build_preconditioned_epigraph_lmis(&tied, &aux, pc, &tag) {
            p.add_lmi(l);
        }
    }
    if robust {
        for (a, e) in eps_sums.into_iter().enumerate() {
            p.constrain(format!("coupling[{a}]"), e.plus_scalar(t[a], -1.0), Sense::Leq);
        }
    }
    let total: f64 = weights.iter().sum();
    p.objective = t.iter().zip(weights).fold(AffineExpr::default(), |e, (&x, w)| e.plus_scalar(x, w / total));
    (t, weights)
}
