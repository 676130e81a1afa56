//! Semidefinite programming layer: problem description, Schur epigraph
//! construction, rank-one recovery and the interior-point backend.

pub mod backend;
pub mod epigraph;
pub mod problem;
pub mod rank_one;

pub use backend::{solve, ConicSolution, SolveStatus, SolverSettings};
pub use epigraph::{
    build_peb_epigraph_lmis, build_preconditioned_epigraph_lmis, fim_scale, tie_fim_entries, FimExpr, Preconditioner,
};
pub use problem::{AffineExpr, CoeffMatrix, ConicProblem, Lmi, LmiEntry, LinearConstraint, PsdVar, Sense, Term, VarValues};
pub use rank_one::{extract_rank_one, gaussian_randomization};
