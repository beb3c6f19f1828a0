use std::io::Write;

use super::LpProblem;
use crate::scalar::Scalar;

/// Writes the problem in free-format MPS. Equality rows are named `E<i>`,
/// inequality rows `L<i>`, variables `X<j>`; non-negativity is the MPS
/// default bound so no BOUNDS section is emitted.
pub fn write_mps<T: Scalar, W: Write>(problem: &LpProblem<T>, name: &str, mut out: W) -> std::io::Result<()> {
    writeln!(out, "NAME {name}")?;
    writeln!(out, "ROWS")?;
    writeln!(out, " N COST")?;
    for i in 0..problem.eq.n_rows() {
        writeln!(out, " E E{i}")?;
    }
    for i in 0..problem.ineq.n_rows() {
        writeln!(out, " L L{i}")?;
    }
    writeln!(out, "COLUMNS")?;
    for j in 0..problem.n_vars() {
        let c = problem.objective[j];
        if c != T::zero() {
            writeln!(out, " X{j} COST {c:e}")?;
        }
        let (rows, vals) = problem.eq.column(j);
        for (r, v) in rows.iter().zip(vals) {
            writeln!(out, " X{j} E{r} {v:e}")?;
        }
        let (rows, vals) = problem.ineq.column(j);
        for (r, v) in rows.iter().zip(vals) {
            writeln!(out, " X{j} L{r} {v:e}")?;
        }
    }
    writeln!(out, "RHS")?;
    for (i, v) in problem.eq_rhs.iter().enumerate() {
        if *v != T::zero() {
            writeln!(out, " RHS E{i} {v:e}")?;
        }
    }
    for (i, v) in problem.ineq_rhs.iter().enumerate() {
        if *v != T::zero() {
            writeln!(out, " RHS L{i} {v:e}")?;
        }
    }
    writeln!(out, "ENDATA")
}
