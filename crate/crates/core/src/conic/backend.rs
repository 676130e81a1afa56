//! Interior-point backend on top of Clarabel.
//!
//! A Hermitian `n × n` variable is stored as `n²` reals: the diagonal, then
//! `(Re, Im)` of each strictly-upper entry. Its PSD constraint goes through
//! the real embedding `[[Re X, −Im X], [Im X, Re X]] ⪰ 0`, which Clarabel sees
//! as a `2n` PSD triangle cone.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::problem::{AffineExpr, ConicProblem, Sense, Term, VarValues};
use crate::channel::CMatrix;
use crate::error::{Error, Result};

/// Feasibility slack used by the post-solve certificate checks.
pub const CHECK_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Duality-gap and feasibility tolerance.
    pub tolerance: f64,
    pub max_iter: u32,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Inaccurate,
    Failed,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Inaccurate => "inaccurate",
            SolveStatus::Failed => "failed",
        }
    }

    /// Optimal or inaccurate: a usable primal point exists.
    pub fn has_point(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Inaccurate)
    }
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub values: VarValues,
    pub objective: f64,
    /// Largest relative violation over all cone and linear constraints.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub solve_time_s: f64,
    pub iterations: u32,
}

struct Layout {
    n_scalars: usize,
    psd_offsets: Vec<usize>,
    psd_sizes: Vec<usize>,
    n: usize,
}

impl Layout {
    fn new(p: &ConicProblem) -> Self {
        let mut off = p.scalars.len();
        let mut psd_offsets = Vec::with_capacity(p.psd_vars.len());
        for v in &p.psd_vars {
            psd_offsets.push(off);
            off += v.size * v.size;
        }
        Self {
            n_scalars: p.scalars.len(),
            psd_offsets,
            psd_sizes: p.psd_vars.iter().map(|v| v.size).collect(),
            n: off,
        }
    }

    fn diag(&self, var: usize, i: usize) -> usize {
        self.psd_offsets[var] + i
    }

    /// Indices of (Re, Im) of entry (i, j), i < j.
    fn off_diag(&self, var: usize, i: usize, j: usize) -> (usize, usize) {
        let n = self.psd_sizes[var];
        // strictly-upper pairs enumerated row by row
        let k = i * n - i * (i + 1) / 2 + (j - i - 1);
        let base = self.psd_offsets[var] + n + 2 * k;
        (base, base + 1)
    }

    fn unpack(&self, x: &[f64]) -> VarValues {
        let psd = (0..self.psd_sizes.len())
            .map(|v| {
                let n = self.psd_sizes[v];
                let mut m = CMatrix::zeros(n, n);
                for i in 0..n {
                    m[(i, i)] = Complex64::new(x[self.diag(v, i)], 0.0);
                    for j in i + 1..n {
                        let (re, im) = self.off_diag(v, i, j);
                        m[(i, j)] = Complex64::new(x[re], x[im]);
                        m[(j, i)] = Complex64::new(x[re], -x[im]);
                    }
                }
                m
            })
            .collect();
        VarValues { scalars: x[..self.n_scalars].to_vec(), psd }
    }

    /// Sparse linear form `(index, coefficient)` plus constant.
    fn compile(&self, e: &AffineExpr) -> (Vec<(usize, f64)>, f64) {
        let mut out: Vec<(usize, f64)> = Vec::new();
        for t in &e.terms {
            match t {
                Term::Scalar { var, coeff } => out.push((*var, *coeff)),
                Term::Psd { var, coeff } => {
                    let n = self.psd_sizes[*var];
                    for i in 0..n {
                        out.push((self.diag(*var, i), coeff.get(i, i).re));
                        for j in i + 1..n {
                            let (re, im) = self.off_diag(*var, i, j);
                            let (cij, cji) = (coeff.get(i, j), coeff.get(j, i));
                            out.push((re, cij.re + cji.re));
                            out.push((im, cij.im - cji.im));
                        }
                    }
                }
            }
        }
        out.sort_unstable_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(out.len());
        for (i, v) in out {
            match merged.last_mut() {
                Some((j, w)) if *j == i => *w += v,
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        (merged, e.constant)
    }
}

/// Accumulates `s = b − A x` rows.
#[derive(Default)]
struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    /// Appends the row `s = scale·(a·x + c)`.
    fn push_affine(&mut self, a: &[(usize, f64)], c: f64, scale: f64) {
        let r = self.b.len();
        for &(j, v) in a {
            self.i.push(r);
            self.j.push(j);
            self.v.push(-scale * v);
        }
        self.b.push(scale * c);
    }
}

fn svec_scale(r: usize, c: usize) -> f64 {
    if r == c {
        1.0
    } else {
        std::f64::consts::SQRT_2
    }
}

fn map_status(s: SolverStatus) -> SolveStatus {
    match s {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => SolveStatus::Inaccurate,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        _ => SolveStatus::Failed,
    }
}

fn min_eig_violation(m: DMatrix<f64>) -> f64 {
    let norm = m.norm();
    let lmin = m.symmetric_eigenvalues().min();
    (-lmin).max(0.0) / (1.0 + norm)
}

/// Largest relative violation of all constraints at `vals`.
pub fn constraint_violation(p: &ConicProblem, vals: &VarValues) -> f64 {
    let mut worst: f64 = 0.0;
    for x in &vals.psd {
        let norm = x.norm();
        let lmin = x.clone().symmetric_eigenvalues().min();
        worst = worst.max((-lmin).max(0.0) / (1.0 + norm));
    }
    for l in &p.lmis {
        worst = worst.max(min_eig_violation(vals.eval_lmi(l)));
    }
    for c in &p.linear {
        let v = vals.eval(&c.expr);
        // relative to the size of the summands, so tiny-valued rows are not waved through
        let mag = c.expr.constant.abs() + c.expr.terms.iter().map(|t| vals.eval_term(t).abs()).sum::<f64>();
        let viol = match c.sense {
            Sense::Eq => v.abs(),
            Sense::Geq => (-v).max(0.0),
            Sense::Leq => v.max(0.0),
        };
        if viol > 0.0 {
            worst = worst.max(viol / mag);
        }
    }
    worst
}

/// Solves `p`. Infeasibility and numerical trouble are reported through the
/// status; only malformed problems return an error.
pub fn solve(p: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution> {
    p.validate()?;
    let lay = Layout::new(p);
    if lay.n == 0 {
        return Err(Error::InvalidProblem("problem has no variables".into()));
    }

    let mut eq = Rows::default();
    let mut ineq = Rows::default();
    for c in &p.linear {
        let (mut a, mut k) = lay.compile(&c.expr);
        // unit-norm rows keep the equilibration well conditioned
        let scale = a.iter().map(|&(_, v)| v.abs()).fold(0.0, f64::max);
        if scale > 0.0 {
            a.iter_mut().for_each(|(_, v)| *v /= scale);
            k /= scale;
        }
        match c.sense {
            // a·x + k = 0  →  s = −k − a·x = 0
            Sense::Eq => eq.push_affine(&a, k, -1.0),
            // a·x + k ≥ 0  →  s = k + a·x ≥ 0
            Sense::Geq => ineq.push_affine(&a, k, 1.0),
            Sense::Leq => ineq.push_affine(&a, k, -1.0),
        }
    }

    let mut psd = Rows::default();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let mut psd_cones: Vec<SupportedConeT<f64>> = Vec::new();
    for (v, &n) in lay.psd_sizes.iter().enumerate() {
        if n == 1 {
            ineq.push_affine(&[(lay.diag(v, 0), 1.0)], 0.0, 1.0);
            continue;
        }
        let m = 2 * n;
        for col in 0..m {
            for row in 0..=col {
                let s = svec_scale(row, col);
                let (bi, bj) = (row % n, col % n);
                let entry: Vec<(usize, f64)> = if (row < n) == (col < n) {
                    // Re X block
                    if bi == bj {
                        vec![(lay.diag(v, bi), 1.0)]
                    } else {
                        let (re, _) = lay.off_diag(v, bi.min(bj), bi.max(bj));
                        vec![(re, 1.0)]
                    }
                } else {
                    // upper-right block is −Im X
                    if bi == bj {
                        vec![]
                    } else {
                        let (_, im) = lay.off_diag(v, bi.min(bj), bi.max(bj));
                        let sign = if bi < bj { -1.0 } else { 1.0 };
                        vec![(im, sign)]
                    }
                };
                psd.push_affine(&entry, 0.0, s);
            }
        }
        psd_cones.push(SupportedConeT::PSDTriangleConeT(m));
    }
    for l in &p.lmis {
        if l.size == 1 {
            let e = l.entries.iter().fold(AffineExpr::default(), |acc, e| acc.plus(e.expr.clone()));
            let (a, k) = lay.compile(&e);
            ineq.push_affine(&a, k, 1.0);
            continue;
        }
        let mut cells: Vec<AffineExpr> = vec![AffineExpr::default(); l.size * (l.size + 1) / 2];
        for e in &l.entries {
            let idx = e.col * (e.col + 1) / 2 + e.row;
            let cell = std::mem::take(&mut cells[idx]);
            cells[idx] = cell.plus(e.expr.clone());
        }
        for col in 0..l.size {
            for row in 0..=col {
                let (a, k) = lay.compile(&cells[col * (col + 1) / 2 + row]);
                psd.push_affine(&a, k, svec_scale(row, col));
            }
        }
        psd_cones.push(SupportedConeT::PSDTriangleConeT(l.size));
    }

    if !eq.b.is_empty() {
        cones.push(SupportedConeT::ZeroConeT(eq.b.len()));
    }
    if !ineq.b.is_empty() {
        cones.push(SupportedConeT::NonnegativeConeT(ineq.b.len()));
    }
    cones.extend(psd_cones);

    let (mut ii, mut jj, mut vv, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for block in [eq, ineq, psd] {
        let off = b.len();
        ii.extend(block.i.iter().map(|r| r + off));
        jj.extend(block.j);
        vv.extend(block.v);
        b.extend(block.b);
    }
    let m = b.len();
    let a = CscMatrix::new_from_triplets(m, lay.n, ii, jj, vv);
    let pm = CscMatrix::zeros((lay.n, lay.n));
    let (obj_lin, obj_const) = lay.compile(&p.objective);
    let mut q = vec![0.0; lay.n];
    for (i, v) in obj_lin {
        q[i] = v;
    }

    let cfg = DefaultSettings {
        max_iter: settings.max_iter,
        verbose: false,
        tol_gap_abs: settings.tolerance,
        tol_gap_rel: settings.tolerance,
        tol_feas: settings.tolerance,
        ..DefaultSettings::default()
    };
    let start = Instant::now();
    let mut solver = DefaultSolver::new(&pm, &q, &a, &b, &cones, cfg)
        .map_err(|e| Error::Solver(format!("setup failed: {e}")))?;
    solver.solve();
    let sol = &solver.solution;
    log::debug!("clarabel status {:?} after {} iterations", sol.status, sol.iterations);
    let mut status = map_status(sol.status);
    let values = lay.unpack(&sol.x);
    let objective = values.eval(&p.objective);
    debug_assert!((objective - (obj_const + sol.obj_val)).abs() <= 1e-6 * (1.0 + objective.abs()) || !status.has_point());
    let primal_residual = if status.has_point() { constraint_violation(p, &values) } else { f64::INFINITY };
    if status == SolveStatus::Optimal && primal_residual > CHECK_TOL {
        log::debug!("solver reported optimal but residual is {primal_residual:e}");
        status = SolveStatus::Inaccurate;
    }
    Ok(ConicSolution {
        status,
        values,
        objective,
        primal_residual,
        dual_residual: sol.r_dual,
        solve_time_s: start.elapsed().as_secs_f64(),
        iterations: sol.iterations,
    })
}
