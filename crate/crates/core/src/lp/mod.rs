//! Linear programs in the form
//!
//! ```text
//! minimize    c^T x
//! subject to  A_eq x  = b_eq
//!             A_in x <= b_in
//!             x >= 0
//! ```
//!
//! solved by a two-phase revised simplex method (see [`simplex`]).

mod mps;
mod simplex;
mod sparse;

pub use mps::write_mps;
pub use simplex::{solve, solve_with};
pub use sparse::SparseMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem<T> {
    pub objective: Vec<T>,
    pub eq: SparseMatrix<T>,
    pub eq_rhs: Vec<T>,
    pub ineq: SparseMatrix<T>,
    pub ineq_rhs: Vec<T>,
}

impl<T: Scalar> LpProblem<T> {
    pub fn new(
        objective: Vec<T>,
        eq: SparseMatrix<T>,
        eq_rhs: Vec<T>,
        ineq: SparseMatrix<T>,
        ineq_rhs: Vec<T>,
    ) -> Result<Self> {
        let p = Self { objective, eq, eq_rhs, ineq, ineq_rhs };
        p.validate()?;
        Ok(p)
    }

    /// Builds a problem from dense row lists; convenient for small instances.
    pub fn from_dense(objective: Vec<T>, eq: &[Vec<T>], eq_rhs: Vec<T>, ineq: &[Vec<T>], ineq_rhs: Vec<T>) -> Result<Self> {
        let n = objective.len();
        Self::new(
            objective,
            SparseMatrix::from_dense_rows(eq, n)?,
            eq_rhs,
            SparseMatrix::from_dense_rows(ineq, n)?,
            ineq_rhs,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.objective.len();
        if self.eq.n_cols() != n || self.ineq.n_cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} variables but constraint matrices have {} and {} columns",
                self.eq.n_cols(),
                self.ineq.n_cols()
            )));
        }
        if self.eq.n_rows() != self.eq_rhs.len() || self.ineq.n_rows() != self.ineq_rhs.len() {
            return Err(Error::DimensionMismatch("right-hand side length differs from row count".into()));
        }
        let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
        if !finite(&self.eq_rhs) || !finite(&self.ineq_rhs) {
            return Err(Error::InvalidParameter("right-hand sides must be finite".into()));
        }
        if !finite(&self.objective) || !finite(self.eq.values()) || !finite(self.ineq.values()) {
            return Err(Error::InvalidParameter("coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.objective.iter().zip(x).map(|(&c, &v)| c * v).sum()
    }

    /// Max equality residual, max inequality violation, and min entry of `x`.
    pub fn residuals(&self, x: &[T]) -> Residuals<T> {
        let ax = self.eq.mul_vec(x);
        let eq = ax.iter().zip(&self.eq_rhs).fold(T::zero(), |m, (&l, &r)| m.max((l - r).abs()));
        let gx = self.ineq.mul_vec(x);
        let ineq = gx.iter().zip(&self.ineq_rhs).fold(T::zero(), |m, (&l, &r)| m.max(l - r));
        let min_x = x.iter().copied().fold(T::infinity(), T::min);
        Residuals { eq, ineq, min_x }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals<T> {
    pub eq: T,
    pub ineq: T,
    pub min_x: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    /// Primal point; meaningful only when optimal. Entries may dip below
    /// zero by up to the feasibility tolerance; clipping them would move
    /// the equality residuals instead.
    pub x: Vec<T>,
    pub objective: T,
    /// Dual multipliers of the equality rows (free sign).
    pub eq_duals: Vec<T>,
    /// Dual multipliers of the inequality rows (non-positive at optimum).
    pub ineq_duals: Vec<T>,
    pub iterations: usize,
}

impl<T: Scalar> LpSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// `b_eq^T y_eq + b_in^T y_in`, the dual objective of the multipliers.
    pub fn dual_objective(&self, problem: &LpProblem<T>) -> T {
        let d = |y: &[T], b: &[T]| y.iter().zip(b).map(|(&u, &v)| u * v).sum::<T>();
        d(&self.eq_duals, &problem.eq_rhs) + d(&self.ineq_duals, &problem.ineq_rhs)
    }
}

/// Solver tolerances and limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions<T> {
    /// Primal feasibility tolerance.
    pub feasibility_tol: T,
    /// Reduced costs above `-optimality_tol` count as non-negative.
    pub optimality_tol: T,
    /// Smallest pivot element accepted in the ratio test.
    pub pivot_tol: T,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub stall_threshold: usize,
    pub max_iterations: usize,
    /// Iterations between recomputing primal values and duals from scratch.
    pub refresh_interval: usize,
    /// Scale of the right-hand-side shift used against degeneracy; zero
    /// disables it.
    pub perturbation: T,
}

impl<T: Scalar> Default for LpOptions<T> {
    fn default() -> Self {
        Self {
            feasibility_tol: T::tol(1e-8),
            optimality_tol: T::tol(1e-9),
            pivot_tol: T::tol(1e-10),
            stall_threshold: 100,
            max_iterations: 1_000_000,
            refresh_interval: 200,
            perturbation: T::tol(1e-7),
        }
    }
}
