//! Numerical self-checks behind `isac validate`.

use nalgebra::Matrix6;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ScenarioConfig;
use crate::channel::{bistatic_channel, bistatic_derivatives, CMatrix, HrisState, ReflectionPhases, TargetPair};
use crate::conic::{build_peb_epigraph_lmis, solve, AffineExpr, ConicProblem, SolverSettings};
use crate::geometry::Position3;
use crate::metrics::{fim_from_derivatives, fim_prefactor, fim_transform, peb, DesignCovariances, SensingPoint};
use crate::optimizer::alternate_genie;

pub const FD_STEP_M: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-5;
pub const FD_GEOMETRIES: usize = 100;
pub const SCALING_TOL: f64 = 1e-10;
pub const SCHUR_TOL: f64 = 1e-6;
pub const SCHUR_SAMPLES: usize = 20;
pub const RANK1_TOL: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: &'static str,
    pub tolerance: f64,
    pub observed: f64,
    pub passed: bool,
    /// Reported but never fails the run.
    pub audit_only: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub rows: Vec<CheckRow>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed || r.audit_only)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.rows.iter().filter(|r| !r.passed && !r.audit_only).map(|r| r.name).collect()
    }

    /// Fixed-width table: check, tolerance, observed, verdict.
    pub fn table(&self) -> String {
        let mut s = format!("{:<24} {:>12} {:>14}  {}\n", "check", "tolerance", "observed", "result");
        for r in &self.rows {
            let verdict = match (r.passed, r.audit_only) {
                (true, _) => "pass",
                (false, true) => "warn",
                (false, false) => "FAIL",
            };
            s.push_str(&format!("{:<24} {:>12.3e} {:>14.6e}  {verdict}\n", r.name, r.tolerance, r.observed));
        }
        s
    }
}

fn row(name: &'static str, tolerance: f64, observed: f64, audit_only: bool) -> CheckRow {
    CheckRow { name, tolerance, observed, passed: observed.is_finite() && observed <= tolerance, audit_only }
}

fn random_pair(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig) -> (TargetPair, ReflectionPhases) {
    let g = &cfg.geometry;
    let mut p = || {
        Position3::new(
            rng.random_range(g.area_x_m[0]..=g.area_x_m[1]),
            rng.random_range(g.area_y_m[0]..=g.area_y_m[1]),
            rng.random_range(0.5..4.5),
        )
    };
    let eta = TargetPair::new(p(), p());
    let tau = std::f64::consts::TAU;
    (eta, ReflectionPhases { ue: rng.random_range(0.0..tau), eve: rng.random_range(0.0..tau) })
}

/// Largest relative Frobenius error of the analytic bistatic derivatives
/// (scaled by `1 + perturbation`) against central differences.
pub fn derivative_error(cfg: &ScenarioConfig, seed: u64, geometries: usize, perturbation: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = cfg.rf_constants().expect("validated config");
    let l = cfg.layout(cfg.array.n_e).expect("validated config");
    let p_h = Position3::from_array(cfg.geometry.hris);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < geometries {
        let (eta, omega) = random_pair(&mut rng, cfg);
        let Ok(d) = bistatic_derivatives(&eta, &omega, p_h, &c, &l) else { continue };
        for (i, di) in d.iter().enumerate() {
            let plus = bistatic_channel(&eta.shifted(i, FD_STEP_M), &omega, p_h, &c, &l);
            let minus = bistatic_channel(&eta.shifted(i, -FD_STEP_M), &omega, p_h, &c, &l);
            let (Ok(plus), Ok(minus)) = (plus, minus) else { return f64::INFINITY };
            let fd = (plus - minus) / Complex64::new(2.0 * FD_STEP_M, 0.0);
            let analytic = di * Complex64::new(1.0 + perturbation, 0.0);
            worst = worst.max((analytic - &fd).norm() / fd.norm());
        }
        done += 1;
    }
    worst
}

/// PEB at the configured pair for an isotropic full-power precoder.
fn isotropic_peb(cfg: &ScenarioConfig, block_len: usize, rho: f64) -> f64 {
    let mut c = cfg.rf_constants().expect("validated config");
    c.block_len = block_len;
    let l = cfg.layout(cfg.array.n_e).expect("validated config");
    let p_h = Position3::from_array(cfg.geometry.hris);
    let Ok(point) = SensingPoint::new(cfg.eta(), &cfg.omega(), p_h, &c, &l, cfg.opt.peb_domain) else { return f64::NAN };
    let state = HrisState::initial(rho, &l).expect("valid layout");
    let n = l.n_tx;
    let cov = DesignCovariances {
        f_cov: CMatrix::identity(n, n) * Complex64::new(c.p_max_w / n as f64, 0.0),
        w_cov: state.combiner_covariance(),
    };
    let j = fim_from_derivatives(&cov, &point.derivs, fim_prefactor(&c, rho));
    let jt = fim_transform(&j, &point.jacobian, &Matrix6::zeros());
    peb(&jt).map(|p| p.total).unwrap_or(f64::NAN)
}

/// Largest relative gap between `Σ t` of the epigraph SDP and `Tr{J̃⁻¹}`.
pub fn schur_gap(seed: u64, samples: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let a = Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let j = a * a.transpose() + Matrix6::identity() * 0.1;
        let want = j.try_inverse().map(|m| m.trace()).unwrap_or(f64::NAN);
        let mut p = ConicProblem::new();
        let t: [usize; 6] = std::array::from_fn(|k| p.add_scalar(format!("t[{k}]")));
        p.objective = t.iter().fold(AffineExpr::default(), |e, &v| e.plus_scalar(v, 1.0));
        let fim = (0..6).map(|r| (0..6).map(|c| AffineExpr::constant(j[(r, c)])).collect()).collect();
        for l in build_peb_epigraph_lmis(&fim, &t, "check") {
            p.add_lmi(l);
        }
        let got = match solve(&p, &SolverSettings::default()) {
            Ok(s) if s.status.has_point() => s.objective,
            _ => return f64::INFINITY,
        };
        worst = worst.max((got - want).abs() / want);
    }
    worst
}

/// Runs every check. `perturbation` scales the analytic derivatives and is
/// non-zero only in negative-control tests.
pub fn run_validate(cfg: &ScenarioConfig, perturbation: f64) -> ValidationReport {
    let seed = cfg.run.seed;
    let mut rows = Vec::new();
    rows.push(row("derivative_fd", FD_TOL, derivative_error(cfg, seed, FD_GEOMETRIES, perturbation), false));

    let t = cfg.rf.block_len;
    let ratio_t = isotropic_peb(cfg, 2 * t, cfg.opt.rho) / isotropic_peb(cfg, t, cfg.opt.rho);
    rows.push(row("fim_scaling_block_len", SCALING_TOL, (ratio_t * 2f64.sqrt() - 1.0).abs(), false));

    let (r0, r1) = (0.25, 0.5);
    let split = cfg.rf.power_split;
    let want_rho = split.sensing_gain(r0) / split.sensing_gain(r1);
    let ratio_rho = isotropic_peb(cfg, t, r1) / isotropic_peb(cfg, t, r0);
    rows.push(row("fim_scaling_rho", SCALING_TOL, (ratio_rho / want_rho - 1.0).abs(), false));

    rows.push(row("schur_epigraph", SCHUR_TOL, schur_gap(seed, SCHUR_SAMPLES), false));

    let defect = cfg
        .scenario(None, cfg.omega())
        .and_then(|scn| alternate_genie(&scn, cfg.eta(), cfg.opt.rho, cfg.opt.r_th_bps, None, &cfg.opt_settings()))
        .map(|r| r.rank1_defect)
        .unwrap_or(f64::INFINITY);
    rows.push(row("rank_one_defect_audit", RANK1_TOL, defect, true));
    ValidationReport { rows }
}
