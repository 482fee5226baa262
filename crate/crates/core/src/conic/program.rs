//! Canonical conic program and the interior-point adapter.
//!
//! A program is a linear objective over real variables together with a list
//! of cone memberships. Each constraint is a vector of affine expressions that
//! must lie in its cone:
//!
//! * zero cone: every expression equals zero;
//! * nonnegative cone: every expression is `>= 0`;
//! * second-order cone: `rows[0] >= ||rows[1..]||`.
//!
//! Rotated cones `||w||^2 <= x y` are lowered to second-order cones through
//! `||(2w, x - y)|| <= x + y`.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::Serialize;

use crate::error::{Error, Result};

/// `constant + sum coef * x[index]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(index: usize) -> Self {
        Self { terms: vec![(index, 1.0)], constant: 0.0 }
    }

    pub fn term(index: usize, coef: f64) -> Self {
        Self { terms: vec![(index, coef)], constant: 0.0 }
    }

    pub fn plus(mut self, other: &AffExpr) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn plus_term(mut self, index: usize, coef: f64) -> Self {
        self.terms.push((index, coef));
        self
    }

    pub fn plus_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self.constant *= s;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConeKind {
    Zero,
    Nonnegative,
    SecondOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub kind: ConeKind,
    pub rows: Vec<AffExpr>,
    pub label: &'static str,
}

/// Named contiguous range of real variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarBlock {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    pub blocks: Vec<VarBlock>,
    pub num_vars: usize,
    /// Linear objective, minimized.
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    /// Optional primal starting point; the interior-point adapter ignores it.
    pub warm_start: Option<Vec<f64>>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declare `len` new variables; returns the first index.
    pub fn add_block(&mut self, name: impl Into<String>, len: usize) -> usize {
        let offset = self.num_vars;
        self.blocks.push(VarBlock { name: name.into(), offset, len });
        self.num_vars += len;
        self.objective.resize(self.num_vars, 0.0);
        offset
    }

    pub fn set_cost(&mut self, index: usize, coef: f64) {
        self.objective[index] = coef;
    }

    pub fn add_eq_zero(&mut self, label: &'static str, e: AffExpr) {
        self.constraints.push(Constraint { kind: ConeKind::Zero, rows: vec![e], label });
    }

    pub fn add_nonneg(&mut self, label: &'static str, e: AffExpr) {
        self.constraints.push(Constraint { kind: ConeKind::Nonnegative, rows: vec![e], label });
    }

    /// `||rest|| <= head`.
    pub fn add_soc(&mut self, label: &'static str, head: AffExpr, rest: Vec<AffExpr>) {
        let mut rows = Vec::with_capacity(rest.len() + 1);
        rows.push(head);
        rows.extend(rest);
        self.constraints.push(Constraint { kind: ConeKind::SecondOrder, rows, label });
    }

    /// `||w||^2 <= x * y` with `x, y >= 0`.
    pub fn add_rotated(&mut self, label: &'static str, x: AffExpr, y: AffExpr, w: Vec<AffExpr>) {
        let head = x.clone().plus(&y);
        let diff = x.plus(&y.scaled(-1.0));
        let mut rest = Vec::with_capacity(w.len() + 1);
        rest.push(diff);
        rest.extend(w.into_iter().map(|e| e.scaled(2.0)));
        self.add_soc(label, head, rest);
    }

    /// `||w||^2 <= s`.
    pub fn add_quad_le(&mut self, label: &'static str, w: Vec<AffExpr>, s: AffExpr) {
        self.add_rotated(label, s, AffExpr::constant(1.0), w);
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Check that every expression references declared variables, every cone
    /// is nonempty and all data is finite.
    pub fn check(&self) -> Result<()> {
        if self.objective.len() != self.num_vars || self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numeric("objective is malformed".into()));
        }
        for c in &self.constraints {
            if c.rows.is_empty() {
                return Err(Error::Numeric(format!("empty cone in constraint {}", c.label)));
            }
            for e in &c.rows {
                if !e.constant.is_finite() {
                    return Err(Error::Numeric(format!("non-finite constant in {}", c.label)));
                }
                for &(i, coef) in &e.terms {
                    if i >= self.num_vars {
                        return Err(Error::Numeric(format!("undeclared variable {i} in {}", c.label)));
                    }
                    if !coef.is_finite() {
                        return Err(Error::Numeric(format!("non-finite coefficient in {}", c.label)));
                    }
                }
            }
        }
        Ok(())
    }

    /// Largest cone violation at `x` (zero when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints.iter().map(|c| constraint_violation(c, x)).fold(0.0, f64::max)
    }
}

pub(crate) fn constraint_violation(c: &Constraint, x: &[f64]) -> f64 {
    let vals: Vec<f64> = c.rows.iter().map(|e| e.eval(x)).collect();
    match c.kind {
        ConeKind::Zero => vals.iter().map(|v| v.abs()).fold(0.0, f64::max),
        ConeKind::Nonnegative => vals.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max),
        ConeKind::SecondOrder => {
            let norm = vals[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            (norm - vals[0]).max(0.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    NearOptimal,
    Infeasible,
    NumericalFailure,
}

impl SolveStatus {
    pub fn is_usable(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::NearOptimal)
    }
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub status: SolveStatus,
    pub objective: f64,
}

/// Interior-point tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Relative and absolute duality-gap tolerance.
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-8, feas_tol: 1e-8, max_iter: 200 }
    }
}

/// Anything that can solve a [`ConicProgram`]. Implementations must be
/// shareable across threads and hold no per-solve mutable state.
pub trait ConicSolver: Send + Sync {
    fn solve(&self, prog: &ConicProgram) -> ConicSolution;
}

/// Adapter over the Clarabel interior-point solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelSolver {
    pub options: SolverOptions,
}

impl ClarabelSolver {
    pub fn new(options: SolverOptions) -> Self {
        Self { options }
    }
}

fn failure(prog: &ConicProgram, status: SolveStatus) -> ConicSolution {
    ConicSolution { x: vec![0.0; prog.num_vars], status, objective: f64::NAN }
}

/// Assemble `A`, `b` and cones such that `b - A x` lies in the cone product.
fn assemble(prog: &ConicProgram) -> (CscMatrix<f64>, Vec<f64>, Vec<SupportedConeT<f64>>) {
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut b = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let mut row = 0;
    for c in &prog.constraints {
        for e in &c.rows {
            b.push(e.constant);
            for &(i, coef) in &e.terms {
                if coef != 0.0 {
                    triplets.push((row, i, -coef));
                }
            }
            row += 1;
        }
        let dim = c.rows.len();
        let cone = match c.kind {
            ConeKind::Zero => SupportedConeT::ZeroConeT(dim),
            ConeKind::Nonnegative => SupportedConeT::NonnegativeConeT(dim),
            ConeKind::SecondOrder => SupportedConeT::SecondOrderConeT(dim),
        };
        // merge runs of identical scalar cones to keep the cone list short
        match (cones.last_mut(), &cone) {
            (Some(SupportedConeT::ZeroConeT(n)), SupportedConeT::ZeroConeT(m)) => *n += m,
            (Some(SupportedConeT::NonnegativeConeT(n)), SupportedConeT::NonnegativeConeT(m)) => *n += m,
            _ => cones.push(cone),
        }
    }
    triplets.sort_by_key(|t| (t.1, t.0));
    let n = prog.num_vars;
    let mut colptr = vec![0usize; n + 1];
    let mut rowval = Vec::with_capacity(triplets.len());
    let mut nzval: Vec<f64> = Vec::with_capacity(triplets.len());
    let mut last: Option<(usize, usize)> = None;
    for (r, c, v) in triplets {
        if last == Some((r, c)) {
            *nzval.last_mut().expect("duplicate follows an entry") += v;
            continue;
        }
        last = Some((r, c));
        rowval.push(r);
        nzval.push(v);
        colptr[c + 1] += 1;
    }
    for j in 0..n {
        colptr[j + 1] += colptr[j];
    }
    (CscMatrix::new(row, n, colptr, rowval, nzval), b, cones)
}

impl ConicSolver for ClarabelSolver {
    fn solve(&self, prog: &ConicProgram) -> ConicSolution {
        if prog.check().is_err() {
            return failure(prog, SolveStatus::NumericalFailure);
        }
        let (a, b, cones) = assemble(prog);
        let n = prog.num_vars;
        let p = CscMatrix::<f64>::zeros((n, n));
        let settings = match DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.options.max_iter)
            .tol_gap_abs(self.options.gap_tol)
            .tol_gap_rel(self.options.gap_tol)
            .tol_feas(self.options.feas_tol)
            .build()
        {
            Ok(s) => s,
            Err(_) => return failure(prog, SolveStatus::NumericalFailure),
        };
        let mut solver = match DefaultSolver::new(&p, &prog.objective, &a, &b, &cones, settings) {
            Ok(s) => s,
            Err(_) => return failure(prog, SolveStatus::NumericalFailure),
        };
        solver.solve();
        let status = match solver.solution.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved => SolveStatus::NearOptimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            _ => SolveStatus::NumericalFailure,
        };
        let x = solver.solution.x.clone();
        if status.is_usable() && x.iter().any(|v| !v.is_finite()) {
            return failure(prog, SolveStatus::NumericalFailure);
        }
        let objective = prog.objective_value(&x);
        ConicSolution { x, status, objective }
    }
}

/// Solve with the default Clarabel adapter.
pub fn solve_conic(prog: &ConicProgram) -> ConicSolution {
    ClarabelSolver::default().solve(prog)
}
