//! Solver-agnostic description of a semidefinite program.
//!
//! Variables are real scalars and complex Hermitian PSD matrices. Every
//! constraint and the objective are affine in those variables, where a matrix
//! variable `X` enters only through `Re Tr{C X}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::CMatrix;
use crate::error::{Error, Result};

/// Dense complex matrix stored row-major as `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl CoeffMatrix {
    pub fn from_cmatrix(m: &CMatrix) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                data.push([v.re, v.im]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_cmatrix(&self) -> CMatrix {
        CMatrix::from_fn(self.rows, self.cols, |r, c| {
            let [re, im] = self.data[r * self.cols + c];
            Complex64::new(re, im)
        })
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let [re, im] = self.data[r * self.cols + c];
        Complex64::new(re, im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdVar {
    pub name: String,
    pub size: usize,
}

/// One summand of an affine expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    /// `coeff · scalars[var]`.
    Scalar { var: usize, coeff: f64 },
    /// `Re Tr{coeff · psd_vars[var]}`.
    Psd { var: usize, coeff: CoeffMatrix },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    pub terms: Vec<Term>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn scalar(var: usize, coeff: f64) -> Self {
        Self { terms: vec![Term::Scalar { var, coeff }], constant: 0.0 }
    }

    pub fn psd(var: usize, coeff: &CMatrix) -> Self {
        Self { terms: vec![Term::Psd { var, coeff: CoeffMatrix::from_cmatrix(coeff) }], constant: 0.0 }
    }

    pub fn plus(mut self, other: AffineExpr) -> Self {
        self.terms.extend(other.terms);
        self.constant += other.constant;
        self
    }

    pub fn plus_scalar(mut self, var: usize, coeff: f64) -> Self {
        self.terms.push(Term::Scalar { var, coeff });
        self
    }

    pub fn plus_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }
}

/// Real symmetric matrix of affine expressions required to be PSD. Only the
/// upper triangle (`row <= col`) is stored; absent entries are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lmi {
    pub tag: String,
    pub size: usize,
    pub entries: Vec<LmiEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiEntry {
    pub row: usize,
    pub col: usize,
    pub expr: AffineExpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// `expr = 0`
    Eq,
    /// `expr >= 0`
    Geq,
    /// `expr <= 0`
    Leq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub tag: String,
    pub expr: AffineExpr,
    pub sense: Sense,
}

/// Minimize `objective` subject to `psd_vars ⪰ 0`, `lmis ⪰ 0` and `linear`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConicProblem {
    pub psd_vars: Vec<PsdVar>,
    pub scalars: Vec<String>,
    pub objective: AffineExpr,
    pub lmis: Vec<Lmi>,
    pub linear: Vec<LinearConstraint>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_psd(&mut self, name: impl Into<String>, size: usize) -> usize {
        self.psd_vars.push(PsdVar { name: name.into(), size });
        self.psd_vars.len() - 1
    }

    pub fn add_scalar(&mut self, name: impl Into<String>) -> usize {
        self.scalars.push(name.into());
        self.scalars.len() - 1
    }

    pub fn constrain(&mut self, tag: impl Into<String>, expr: AffineExpr, sense: Sense) {
        self.linear.push(LinearConstraint { tag: tag.into(), expr, sense });
    }

    pub fn add_lmi(&mut self, lmi: Lmi) {
        self.lmis.push(lmi);
    }

    pub fn psd_index(&self, name: &str) -> Option<usize> {
        self.psd_vars.iter().position(|v| v.name == name)
    }

    pub fn scalar_index(&self, name: &str) -> Option<usize> {
        self.scalars.iter().position(|v| v == name)
    }

    fn check_expr(&self, e: &AffineExpr, ctx: &str) -> Result<()> {
        if !e.constant.is_finite() {
            return Err(Error::InvalidProblem(format!("{ctx}: non-finite constant")));
        }
        for t in &e.terms {
            match t {
                Term::Scalar { var, coeff } => {
                    if *var >= self.scalars.len() {
                        return Err(Error::InvalidProblem(format!("{ctx}: undeclared scalar #{var}")));
                    }
                    if !coeff.is_finite() {
                        return Err(Error::InvalidProblem(format!("{ctx}: non-finite coefficient")));
                    }
                }
                Term::Psd { var, coeff } => {
                    let Some(v) = self.psd_vars.get(*var) else {
                        return Err(Error::InvalidProblem(format!("{ctx}: undeclared PSD variable #{var}")));
                    };
                    if coeff.rows != v.size || coeff.cols != v.size || coeff.data.len() != v.size * v.size {
                        return Err(Error::InvalidProblem(format!(
                            "{ctx}: coefficient shape {}x{} does not match `{}` ({})",
                            coeff.rows, coeff.cols, v.name, v.size
                        )));
                    }
                    if coeff.data.iter().flatten().any(|x| !x.is_finite()) {
                        return Err(Error::InvalidProblem(format!("{ctx}: non-finite coefficient")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks that every reference is declared and every shape is consistent.
    pub fn validate(&self) -> Result<()> {
        if self.psd_vars.iter().any(|v| v.size == 0) {
            return Err(Error::InvalidProblem("PSD variable of size 0".into()));
        }
        self.check_expr(&self.objective, "objective")?;
        for l in &self.lmis {
            if l.size == 0 {
                return Err(Error::InvalidProblem(format!("LMI `{}` has size 0", l.tag)));
            }
            for e in &l.entries {
                if e.row > e.col || e.col >= l.size {
                    return Err(Error::InvalidProblem(format!(
                        "LMI `{}` entry ({}, {}) is not in the upper triangle",
                        l.tag, e.row, e.col
                    )));
                }
                self.check_expr(&e.expr, &l.tag)?;
            }
        }
        for c in &self.linear {
            self.check_expr(&c.expr, &c.tag)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }
}

/// Variable values for a problem.
#[derive(Debug, Clone, PartialEq)]
pub struct VarValues {
    pub scalars: Vec<f64>,
    pub psd: Vec<CMatrix>,
}

impl VarValues {
    pub fn eval(&self, e: &AffineExpr) -> f64 {
        e.constant + e.terms.iter().map(|t| self.eval_term(t)).sum::<f64>()
    }

    pub fn eval_term(&self, t: &Term) -> f64 {
        match t {
            Term::Scalar { var, coeff } => coeff * self.scalars[*var],
            Term::Psd { var, coeff } => {
                let x = &self.psd[*var];
                let mut acc = 0.0;
                for r in 0..coeff.rows {
                    for c in 0..coeff.cols {
                        acc += (coeff.get(r, c) * x[(c, r)]).re;
                    }
                }
                acc
            }
        }
    }

    /// Symmetric matrix value of an LMI.
    pub fn eval_lmi(&self, l: &Lmi) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(l.size, l.size);
        for e in &l.entries {
            let v = self.eval(&e.expr);
            m[(e.row, e.col)] += v;
            if e.row != e.col {
                m[(e.col, e.row)] += v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ConicProblem {
        let mut p = ConicProblem::new();
        let x = p.add_psd("X", 2);
        let t = p.add_scalar("t");
        let c = CMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(0.1, 0.0), Complex64::new(1.0 / 3.0, -0.7), Complex64::new(1.0 / 3.0, 0.7), Complex64::new(2.5e-11, 0.0)],
        );
        p.objective = AffineExpr::scalar(t, 1.0);
        p.constrain("lin", AffineExpr::psd(x, &c).plus_constant(-std::f64::consts::PI), Sense::Geq);
        p.add_lmi(Lmi {
            tag: "schur".into(),
            size: 2,
            entries: vec![
                LmiEntry { row: 0, col: 0, expr: AffineExpr::constant(1.0) },
                LmiEntry { row: 0, col: 1, expr: AffineExpr::constant(1.0) },
                LmiEntry { row: 1, col: 1, expr: AffineExpr::scalar(t, 1.0) },
            ],
        });
        p
    }

    #[test]
    fn json_round_trip_is_exact() {
        let p = sample();
        let s = p.to_json().unwrap();
        let q = ConicProblem::from_json(&s).unwrap();
        assert_eq!(p, q);
        assert_eq!(s, q.to_json().unwrap());
    }

    #[test]
    fn undeclared_references_rejected() {
        let mut p = sample();
        p.objective = AffineExpr::scalar(7, 1.0);
        assert!(matches!(p.validate(), Err(Error::InvalidProblem(_))));
        let mut p = sample();
        p.lmis[0].entries[1].row = 1;
        p.lmis[0].entries[1].col = 0;
        assert!(p.validate().is_err());
        let mut p = sample();
        p.objective = AffineExpr::psd(0, &CMatrix::identity(3, 3));
        assert!(p.validate().is_err());
    }

    #[test]
    fn eval_trace_form() {
        let p = sample();
        let x = CMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(2.0, 0.0), Complex64::new(0.5, 0.25), Complex64::new(0.5, -0.25), Complex64::new(1.0, 0.0)],
        );
        let vals = VarValues { scalars: vec![3.0], psd: vec![x.clone()] };
        let c = p.linear[0].expr.terms[0].clone();
        let Term::Psd { coeff, .. } = c else { unreachable!() };
        let want = (coeff.to_cmatrix() * &x).trace().re - std::f64::consts::PI;
        assert!((vals.eval(&p.linear[0].expr) - want).abs() < 1e-14);
        let m = vals.eval_lmi(&p.lmis[0]);
        assert_eq!(m, nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 3.0]));
    }
}
