//! Minimal LP/QP modelling layer over an interior-point backend.
//!
//! Variables are nonnegative unless given other bounds. Objectives are linear
//! plus an optional diagonal quadratic term; callers are expected to scale
//! their data so that values are O(1).

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goal {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    sense: Sense,
    rhs: f64,
}

#[derive(Debug, Clone)]
pub struct Problem {
    goal: Goal,
    obj: Vec<f64>,
    quad: Vec<f64>,
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
    rows: Vec<Row>,
    tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    pub objective: f64,
}

impl Solution {
    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }
}

impl Problem {
    pub fn new(goal: Goal) -> Self {
        Self { goal, obj: Vec::new(), quad: Vec::new(), lower: Vec::new(), upper: Vec::new(), rows: Vec::new(), tol: 1e-9 }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// Nonnegative variable with linear objective coefficient `c`.
    pub fn var(&mut self, c: f64) -> Var {
        self.var_bounded(c, Some(0.0), None)
    }

    pub fn var_bounded(&mut self, c: f64, lower: Option<f64>, upper: Option<f64>) -> Var {
        self.obj.push(c);
        self.quad.push(0.0);
        self.lower.push(lower);
        self.upper.push(upper);
        Var(self.obj.len() - 1)
    }

    /// Adds `q/2 * v^2` to the objective (minimization only).
    pub fn set_quadratic(&mut self, v: Var, q: f64) {
        self.quad[v.0] = q;
    }

    pub fn set_objective(&mut self, v: Var, c: f64) {
        self.obj[v.0] = c;
    }

    pub fn constraint(&mut self, coeffs: impl IntoIterator<Item = (Var, f64)>, sense: Sense, rhs: f64) {
        let coeffs = coeffs.into_iter().filter(|c| c.1 != 0.0).map(|(v, c)| (v.0, c)).collect();
        self.rows.push(Row { coeffs, sense, rhs });
    }

    pub fn num_vars(&self) -> usize {
        self.obj.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn solve(&self) -> Result<Solution> {
        let nv = self.obj.len();
        if self.goal == Goal::Maximize && self.quad.iter().any(|&q| q != 0.0) {
            return Err(Error::Solver("quadratic objectives must be minimized".into()));
        }
        let sign = if self.goal == Goal::Maximize { -1.0 } else { 1.0 };
        let q: Vec<f64> = self.obj.iter().map(|c| sign * c).collect();
        let (mut ri, mut ci, mut vals, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut push_row = |coeffs: &[(usize, f64)], scale: f64, rhs: f64, b: &mut Vec<f64>| {
            let r = b.len();
            for &(c, v) in coeffs {
                ri.push(r);
                ci.push(c);
                vals.push(scale * v);
            }
            b.push(scale * rhs);
        };
        for row in self.rows.iter().filter(|r| r.sense == Sense::Eq) {
            push_row(&row.coeffs, 1.0, row.rhs, &mut b);
        }
        let n_eq = b.len();
        for row in self.rows.iter().filter(|r| r.sense != Sense::Eq) {
            let s = if row.sense == Sense::Le { 1.0 } else { -1.0 };
            push_row(&row.coeffs, s, row.rhs, &mut b);
        }
        for v in 0..nv {
            if let Some(l) = self.lower[v] {
                push_row(&[(v, 1.0)], -1.0, l, &mut b);
            }
            if let Some(u) = self.upper[v] {
                push_row(&[(v, 1.0)], 1.0, u, &mut b);
            }
        }
        let m = b.len();
        let a = CscMatrix::new_from_triplets(m, nv, ri, ci, vals);
        let (pi, pv): (Vec<usize>, Vec<f64>) =
            self.quad.iter().enumerate().filter(|(_, &q)| q != 0.0).map(|(i, &q)| (i, q)).unzip();
        let p = CscMatrix::new_from_triplets(nv, nv, pi.clone(), pi, pv);
        let mut cones = Vec::new();
        if n_eq > 0 {
            cones.push(SupportedConeT::ZeroConeT(n_eq));
        }
        if m > n_eq {
            cones.push(SupportedConeT::NonnegativeConeT(m - n_eq));
        }
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_gap_abs(self.tol)
            .tol_gap_rel(self.tol)
            .tol_feas(self.tol)
            .max_iter(400)
            .build()
            .map_err(|e| Error::Solver(format!("{e:?}")))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| Error::Solver(format!("{e:?}")))?;
        solver.solve();
        match solver.solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {}
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                return Err(Error::Infeasible("linear program has no feasible point".into()))
            }
            s => return Err(Error::Solver(format!("backend stopped with status {s:?}"))),
        }
        let values = solver.solution.x.clone();
        let objective = values
            .iter()
            .zip(&self.obj)
            .zip(&self.quad)
            .map(|((x, c), qd)| c * x + 0.5 * qd * x * x)
            .sum();
        Ok(Solution { values, objective })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lp() {
        // max 3x + 2y, x + y <= 4, x + 3y <= 6, x <= 3
        let mut p = Problem::new(Goal::Maximize);
        let x = p.var(3.0);
        let y = p.var(2.0);
        p.constraint([(x, 1.0), (y, 1.0)], Sense::Le, 4.0);
        p.constraint([(x, 1.0), (y, 3.0)], Sense::Le, 6.0);
        p.constraint([(x, 1.0)], Sense::Le, 3.0);
        let s = p.solve().unwrap();
        assert!((s.objective - 11.0).abs() < 1e-7);
        assert!((s.value(x) - 3.0).abs() < 1e-7 && (s.value(y) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn equal_split_qp() {
        // min a^2 + b^2, a + b = 2
        let mut p = Problem::new(Goal::Minimize);
        let a = p.var(0.0);
        let b = p.var(0.0);
        p.set_quadratic(a, 2.0);
        p.set_quadratic(b, 2.0);
        p.constraint([(a, 1.0), (b, 1.0)], Sense::Eq, 2.0);
        let s = p.solve().unwrap();
        assert!((s.value(a) - 1.0).abs() < 1e-7);
        assert!((s.objective - 2.0).abs() < 1e-7);
    }

    #[test]
    fn infeasible_detected() {
        let mut p = Problem::new(Goal::Minimize);
        let x = p.var(1.0);
        p.constraint([(x, 1.0)], Sense::Ge, 2.0);
        p.constraint([(x, 1.0)], Sense::Le, 1.0);
        assert!(p.solve().is_err());
    }
}
