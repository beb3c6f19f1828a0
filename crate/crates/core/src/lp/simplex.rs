//! Two-phase revised simplex with an explicit dense basis inverse.
//!
//! The right-hand side is perturbed to `b + A xi` for a small fixed positive
//! `xi`, which keeps the problem feasible whenever the original is and makes
//! degenerate vertices (the norm for occupation-measure programs) rare.
//! Once the perturbed problem is solved the true right-hand side is
//! restored and any primal infeasibility this exposes is removed by dual
//! simplex pivots, which preserve optimality of the reduced costs.
//!
//! Rows are sign-normalized so every right-hand side is non-negative. The
//! starting basis uses the slack of each `<=` row with a non-negative
//! right-hand side and an artificial column everywhere else, so the initial
//! inverse is the identity. Phase 1 minimizes the sum of artificials; any
//! artificial still basic afterwards is pivoted out, and one that cannot be
//! (its row of `B^-1 A` vanishes) marks a linearly dependent row and stays
//! basic at zero.
//!
//! Pricing is Dantzig's rule with lowest-index tie breaking. After
//! `stall_threshold` consecutive degenerate pivots the solver switches to
//! Bland's rule until the next non-degenerate pivot.
//!
//! The inverse is stored row-major and updated with a rank-one step that
//! only touches the rows where the entering column is non-zero. Duals are
//! updated incrementally; both primal values and duals are
//! recomputed from the inverse every `refresh_interval` iterations, and the
//! inverse is rebuilt from scratch if the primal residual drifts past the
//! feasibility tolerance.

use super::{LpOptions, LpProblem, LpSolution, LpStatus, SparseMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_RESTORE_ROUNDS: usize = 8;
const NONBASIC: usize = usize::MAX;

pub fn solve<T: Scalar>(problem: &LpProblem<T>) -> Result<LpSolution<T>> {
    solve_with(problem, &LpOptions::default())
}

pub fn solve_with<T: Scalar>(problem: &LpProblem<T>, opts: &LpOptions<T>) -> Result<LpSolution<T>> {
    problem.validate()?;
    let mut t = Tableau::new(problem, *opts)?;
    let status = t.phase_one()?;
    t.finish(problem, status)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Phase {
    One,
    Two,
}

enum Step {
    Optimal,
    Unbounded,
    Continue,
}

struct Tableau<T> {
    opts: LpOptions<T>,
    m: usize,
    n_struct: usize,
    n_eq: usize,
    /// Structural and slack columns of the sign-normalized rows.
    cols: SparseMatrix<T>,
    art_start: usize,
    /// Working right-hand side, perturbed until [`Tableau::restore_rhs`].
    b: Vec<T>,
    b_true: Vec<T>,
    /// Total absolute change made to `b` by bound shifting.
    shifted: T,
    sign: Vec<T>,
    basis: Vec<usize>,
    position: Vec<usize>,
    binv: Vec<T>,
    x_b: Vec<T>,
    y: Vec<T>,
    cost: Vec<T>,
    iterations: usize,
    since_refresh: usize,
    degenerate_run: usize,
    alpha: Vec<T>,
    alpha_nz: Vec<usize>,
    rho: Vec<T>,
    rho_nz: Vec<usize>,
    drop_tol: T,
}

impl<T: Scalar> Tableau<T> {
    fn new(p: &LpProblem<T>, opts: LpOptions<T>) -> Result<Self> {
        let (n, n_eq, n_in) = (p.n_vars(), p.eq.n_rows(), p.ineq.n_rows());
        let m = n_eq + n_in;
        let rhs: Vec<T> = p.eq_rhs.iter().chain(&p.ineq_rhs).copied().collect();
        let mut shifted = rhs.clone();
        if opts.perturbation > T::zero() {
            let xi: Vec<T> = (0..n + n_in).map(|j| opts.perturbation * perturbation_weight(j)).collect();
            for (r, v) in p.eq.mul_vec(&xi[..n]).into_iter().enumerate() {
                shifted[r] += v;
            }
            for (r, v) in p.ineq.mul_vec(&xi[..n]).into_iter().enumerate() {
                shifted[n_eq + r] += v + xi[n + r];
            }
        }
        let sign: Vec<T> = shifted.iter().map(|&v| if v < T::zero() { -T::one() } else { T::one() }).collect();
        let b: Vec<T> = shifted.iter().zip(&sign).map(|(&v, &s)| v * s).collect();
        let b_true: Vec<T> = rhs.iter().zip(&sign).map(|(&v, &s)| v * s).collect();

        let mut trip = Vec::with_capacity(p.eq.nnz() + p.ineq.nnz() + n_in);
        for c in 0..n {
            let (rows, vals) = p.eq.column(c);
            trip.extend(rows.iter().zip(vals).map(|(&r, &v)| (r, c, v * sign[r])));
            let (rows, vals) = p.ineq.column(c);
            trip.extend(rows.iter().zip(vals).map(|(&r, &v)| (n_eq + r, c, v * sign[n_eq + r])));
        }
        for i in 0..n_in {
            trip.push((n_eq + i, n + i, sign[n_eq + i]));
        }
        let cols = SparseMatrix::from_triplets(m, n + n_in, trip)?;
        let art_start = n + n_in;
        let n_total = art_start + m;

        let mut basis = Vec::with_capacity(m);
        let mut position = vec![NONBASIC; n_total];
        for r in 0..m {
            let j = if r >= n_eq && sign[r] > T::zero() { n + (r - n_eq) } else { art_start + r };
            basis.push(j);
            position[j] = r;
        }
        let binv_len = m.checked_mul(m).ok_or_else(|| Error::InvalidParameter("too many rows".into()))?;
        let mut binv = vec![T::zero(); binv_len];
        for r in 0..m {
            binv[r * m + r] = T::one();
        }
        Ok(Self {
            opts,
            m,
            n_struct: n,
            n_eq,
            cols,
            art_start,
            x_b: b.clone(),
            b,
            b_true,
            shifted: T::zero(),
            sign,
            basis,
            position,
            binv,
            y: vec![T::zero(); m],
            cost: vec![T::zero(); n_total],
            iterations: 0,
            since_refresh: 0,
            degenerate_run: 0,
            alpha: vec![T::zero(); m],
            alpha_nz: Vec::with_capacity(m),
            rho: vec![T::zero(); m],
            rho_nz: Vec::with_capacity(m),
            drop_tol: T::tol(1e-14),
        })
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.art_start
    }

    fn for_column(&self, j: usize, mut f: impl FnMut(usize, T)) {
        if j >= self.art_start {
            f(j - self.art_start, T::one());
        } else {
            let (rows, vals) = self.cols.column(j);
            for (&r, &v) in rows.iter().zip(vals) {
                f(r, v);
            }
        }
    }

    fn reduced_cost(&self, j: usize) -> T {
        let mut d = self.cost[j];
        self.for_column(j, |r, v| d -= self.y[r] * v);
        d
    }

    /// Phase 1; `Optimal` here means a feasible basis was found.
    fn phase_one(&mut self) -> Result<LpStatus> {
        if self.basis.iter().any(|&j| self.is_artificial(j)) {
            for r in 0..self.m {
                self.cost[self.art_start + r] = T::one();
            }
            self.refresh()?;
            self.run_phase(Phase::One)?;
            let infeasibility: T = (0..self.m)
                .filter(|&r| self.is_artificial(self.basis[r]))
                .map(|r| self.x_b[r].max(T::zero()))
                .sum();
            let scale = self.b.iter().copied().fold(T::one(), T::max);
            // shifts may leave that much residue on dependent rows
            if infeasibility > self.opts.feasibility_tol * scale + self.shifted {
                return Ok(LpStatus::Infeasible);
            }
            self.drive_out_artificials();
        }
        Ok(LpStatus::Optimal)
    }

    fn run_phase(&mut self, phase: Phase) -> Result<LpStatus> {
        self.degenerate_run = 0;
        loop {
            match self.iterate(phase)? {
                Step::Continue => {}
                Step::Optimal => {
                    if self.since_refresh == 0 {
                        return Ok(LpStatus::Optimal);
                    }
                    // confirm with freshly computed duals
                    self.refresh()?;
                }
                Step::Unbounded => return Ok(LpStatus::Unbounded),
            }
        }
    }

    fn iterate(&mut self, phase: Phase) -> Result<Step> {
        if self.iterations >= self.opts.max_iterations {
            return Err(Error::Numerical(format!("simplex iteration limit {} reached", self.opts.max_iterations)));
        }
        if self.since_refresh >= self.opts.refresh_interval {
            self.refresh()?;
        }
        let bland = self.degenerate_run >= self.opts.stall_threshold;
        let Some((q, d_q)) = self.price(bland) else {
            return Ok(Step::Optimal);
        };
        self.ftran(q);
        let Some(r) = self.ratio_test(phase, bland) else {
            if phase == Phase::One {
                return Err(Error::Numerical("phase 1 ray detected; basis is ill-conditioned".into()));
            }
            return Ok(Step::Unbounded);
        };
        let theta = self.step_length(r);
        let largest = self.alpha_nz.iter().fold(T::zero(), |acc, &i| acc.max(self.alpha[i].abs()));
        let small = self.alpha[r].abs() < largest * T::lit(1e-7);
        self.pivot(q, r, d_q, theta);
        if small {
            // a relatively tiny pivot may have made the basis singular
            self.reinvert()?;
            self.recompute();
            self.since_refresh = 0;
        }
        if theta <= self.opts.feasibility_tol * T::lit(1e-3) {
            self.degenerate_run += 1;
        } else {
            self.degenerate_run = 0;
        }
        Ok(Step::Continue)
    }

    /// Entering column and its reduced cost.
    fn price(&self, bland: bool) -> Option<(usize, T)> {
        let mut best: Option<(usize, T)> = None;
        for j in 0..self.art_start {
            if self.position[j] != NONBASIC {
                continue;
            }
            let d = self.reduced_cost(j);
            if d >= -self.opts.optimality_tol {
                continue;
            }
            if bland {
                return Some((j, d));
            }
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        best
    }

    /// `alpha = B^-1 a_q`.
    fn ftran(&mut self, q: usize) {
        let m = self.m;
        self.alpha.iter_mut().for_each(|v| *v = T::zero());
        let mut entries = Vec::new();
        self.for_column(q, |r, v| entries.push((r, v)));
        if m == 0 {
            return;
        }
        for (i, row) in self.binv.chunks_exact(m).enumerate() {
            self.alpha[i] = entries.iter().map(|&(k, v)| v * row[k]).sum();
        }
        self.alpha_nz.clear();
        for i in 0..m {
            if self.alpha[i].abs() > self.drop_tol {
                self.alpha_nz.push(i);
            } else {
                self.alpha[i] = T::zero();
            }
        }
    }

    /// Leaving row position by a two-pass (Harris) ratio test: the step
    /// bound is relaxed by a tenth of the feasibility tolerance, and among
    /// rows blocking within that bound the largest pivot wins. Under Bland's
    /// rule the lowest basic column wins among pivots within a factor 1e-3
    /// of the largest.
    fn ratio_test(&self, phase: Phase, bland: bool) -> Option<usize> {
        let ptol = self.opts.pivot_tol;
        let slack = self.opts.feasibility_tol * T::lit(0.1);
        let eligible = |i: usize| -> bool {
            // artificials surviving phase 1 sit on dependent rows, where any
            // non-zero entry of `alpha` is roundoff
            self.alpha[i] > ptol && !(phase == Phase::Two && self.is_artificial(self.basis[i]))
        };
        let bound = self
            .alpha_nz
            .iter()
            .filter(|&&i| eligible(i))
            .map(|&i| (self.x_b[i].max(T::zero()) + slack) / self.alpha[i])
            .fold(None, |acc: Option<T>, r| Some(acc.map_or(r, |a| a.min(r))))?;
        let blocking: Vec<usize> = self
            .alpha_nz
            .iter()
            .copied()
            .filter(|&i| eligible(i) && self.x_b[i].max(T::zero()) / self.alpha[i] <= bound)
            .collect();
        let largest = blocking.iter().map(|&i| self.alpha[i]).fold(T::zero(), T::max);
        if bland {
            let floor = largest * T::lit(1e-3);
            blocking.into_iter().filter(|&i| self.alpha[i] >= floor).min_by_key(|&i| self.basis[i])
        } else {
            blocking.into_iter().find(|&i| self.alpha[i] == largest)
        }
    }

    fn load_rho(&mut self, r: usize) {
        let m = self.m;
        self.rho_nz.clear();
        for c in 0..m {
            let v = self.binv[r * m + c];
            if v.abs() > self.drop_tol {
                self.rho[c] = v;
                self.rho_nz.push(c);
            } else {
                self.rho[c] = T::zero();
            }
        }
    }

    /// Primal step length for leaving row `r`. A leaving value the Harris
    /// test let go slightly negative is first shifted into the working
    /// right-hand side, so the leaving column becomes non-basic at exactly
    /// zero and `x_B` stays consistent with the basis.
    fn step_length(&mut self, r: usize) -> T {
        if self.x_b[r] < T::zero() {
            self.shift_to_zero(r);
        }
        self.x_b[r] / self.alpha[r]
    }

    /// Moves the basic value at row `r` into the right-hand side.
    fn shift_to_zero(&mut self, r: usize) {
        let x_r = self.x_b[r];
        let mut b = std::mem::take(&mut self.b);
        let mut moved = T::zero();
        self.for_column(self.basis[r], |i, v| {
            b[i] -= v * x_r;
            moved += (v * x_r).abs();
        });
        self.b = b;
        self.shifted += moved;
        self.x_b[r] = T::zero();
    }

    /// Swaps column `q` into row position `r`, moving the primal point by
    /// `theta` along the entering direction.
    fn pivot(&mut self, q: usize, r: usize, d_q: T, theta: T) {
        let m = self.m;
        let a_r = self.alpha[r];
        if theta != T::zero() {
            for &i in &self.alpha_nz {
                self.x_b[i] -= theta * self.alpha[i];
            }
        }
        self.x_b[r] = theta;

        self.load_rho(r);
        let f = d_q / a_r;
        for &c in &self.rho_nz {
            self.y[c] += f * self.rho[c];
        }
        let inv = T::one() / a_r;
        for v in self.rho.iter_mut() {
            *v *= inv;
        }
        let dense = self.rho_nz.len() * 4 > m;
        for &i in &self.alpha_nz {
            if i == r {
                continue;
            }
            let a = self.alpha[i];
            let row = &mut self.binv[i * m..(i + 1) * m];
            if dense {
                for (x, &v) in row.iter_mut().zip(&self.rho) {
                    *x -= a * v;
                }
            } else {
                for &c in &self.rho_nz {
                    row[c] -= a * self.rho[c];
                }
            }
        }
        self.binv[r * m..(r + 1) * m].copy_from_slice(&self.rho);

        self.position[self.basis[r]] = NONBASIC;
        self.position[q] = r;
        self.basis[r] = q;
        self.iterations += 1;
        self.since_refresh += 1;
    }

    /// Pivots basic artificials out on any non-zero entry of their row.
    fn drive_out_artificials(&mut self) {
        for r in 0..self.m {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            self.load_rho(r);
            let mut best: Option<(usize, T)> = None;
            for j in 0..self.art_start {
                if self.position[j] != NONBASIC {
                    continue;
                }
                let mut v = T::zero();
                self.for_column(j, |i, a| v += self.rho[i] * a);
                if v.abs() > self.opts.pivot_tol && best.is_none_or(|(_, bv)| v.abs() > bv.abs()) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                self.ftran(j);
                self.shift_to_zero(r);
                self.pivot(j, r, T::zero(), T::zero());
            }
        }
    }

    /// Switches to the unperturbed right-hand side. Returns `false` if the
    /// original problem turns out to be infeasible.
    fn restore_rhs(&mut self) -> Result<bool> {
        if self.b == self.b_true {
            return Ok(true);
        }
        self.b = self.b_true.clone();
        self.refresh()?;
        self.dual_cleanup()
    }

    /// Dual simplex pivots until `x_B >= -feasibility_tol / 1000`. Reduced costs
    /// stay non-negative throughout.
    fn dual_cleanup(&mut self) -> Result<bool> {
        // Aim well inside the tolerance: many entries each short by nearly
        // `feasibility_tol` add up in averages formed from the solution.
        let (ftol, ptol) = (self.opts.feasibility_tol * T::lit(1e-3), self.opts.pivot_tol);
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(Error::Numerical(format!("simplex iteration limit {} reached", self.opts.max_iterations)));
            }
            if self.since_refresh >= self.opts.refresh_interval {
                self.refresh()?;
            }
            let leaving = (0..self.m)
                .filter(|&i| self.x_b[i] < -ftol && !self.is_artificial(self.basis[i]))
                .min_by(|&i, &j| self.x_b[i].partial_cmp(&self.x_b[j]).unwrap());
            let Some(r) = leaving else { return Ok(true) };
            self.load_rho(r);
            // two-pass dual ratio test over the pivot row
            let mut row = Vec::new();
            for j in 0..self.art_start {
                if self.position[j] != NONBASIC {
                    continue;
                }
                let mut a = T::zero();
                self.for_column(j, |i, v| a += self.rho[i] * v);
                if a < -ptol {
                    row.push((j, a, self.reduced_cost(j)));
                }
            }
            // entries far below the row maximum are roundoff-sized pivots
            let amax = row.iter().fold(T::zero(), |m, &(_, a, _)| m.max(a.abs()));
            row.retain(|&(_, a, _)| -a >= amax * T::lit(1e-7));
            let dslack = self.opts.optimality_tol;
            let bound = row.iter().map(|&(_, a, d)| (d.max(T::zero()) + dslack) / -a).fold(T::infinity(), T::min);
            let best = row
                .iter()
                .filter(|&&(_, a, d)| d.max(T::zero()) / -a <= bound)
                .fold(None, |acc: Option<(usize, T, T)>, &(j, a, d)| match acc {
                    Some((_, ba, _)) if ba.abs() >= a.abs() => acc,
                    _ => Some((j, a, d)),
                });
            let Some((q, _, d_q)) = best else { return Ok(false) };
            self.ftran(q);
            let theta = self.x_b[r] / self.alpha[r];
            self.pivot(q, r, d_q, theta);
        }
    }

    fn set_phase_two_costs(&mut self, objective: &[T]) {
        self.cost.iter_mut().for_each(|c| *c = T::zero());
        self.cost[..self.n_struct].copy_from_slice(objective);
    }

    /// Recomputes `x_B = B^-1 b` and `y = c_B^T B^-1`; rebuilds the inverse
    /// if the primal residual has drifted.
    fn refresh(&mut self) -> Result<()> {
        self.recompute();
        if self.primal_residual() > self.opts.feasibility_tol {
            self.reinvert()?;
            self.recompute();
        }
        self.since_refresh = 0;
        Ok(())
    }

    fn recompute(&mut self) {
        let m = self.m;
        if m == 0 {
            return;
        }
        for (i, row) in self.binv.chunks_exact(m).enumerate() {
            self.x_b[i] = row.iter().zip(&self.b).map(|(&v, &b)| v * b).sum();
        }
        self.y.iter_mut().for_each(|v| *v = T::zero());
        for (i, row) in self.binv.chunks_exact(m).enumerate() {
            let c = self.cost[self.basis[i]];
            if c == T::zero() {
                continue;
            }
            for (y, &v) in self.y.iter_mut().zip(row) {
                *y += c * v;
            }
        }
    }

    fn primal_residual(&self) -> T {
        let mut res = self.b.clone();
        for (r, &j) in self.basis.iter().enumerate() {
            let x = self.x_b[r];
            self.for_column(j, |i, v| res[i] -= v * x);
        }
        res.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Gauss-Jordan inversion of the current basis matrix.
    fn reinvert(&mut self) -> Result<()> {
        let m = self.m;
        let mut a = vec![T::zero(); m * m]; // row-major basis matrix
        for (c, &j) in self.basis.iter().enumerate() {
            let mut entries = Vec::new();
            self.for_column(j, |i, v| entries.push((i, v)));
            for (i, v) in entries {
                a[i * m + c] = v;
            }
        }
        let mut inv = vec![T::zero(); m * m];
        for i in 0..m {
            inv[i * m + i] = T::one();
        }
        for k in 0..m {
            let mut p = (k..m)
                .max_by(|&i, &j| a[i * m + k].abs().partial_cmp(&a[j * m + k].abs()).unwrap())
                .unwrap();
            if a[p * m + k].abs() <= self.opts.pivot_tol {
                // Column k depends on the columns before it. Swap in the
                // artificial whose transformed column `inv e_i` is largest
                // below row k.
                let mut best: Option<(usize, usize, T)> = None;
                for r in k..m {
                    for i in 0..m {
                        let v = inv[r * m + i].abs();
                        if self.position[self.art_start + i] == NONBASIC && best.is_none_or(|(_, _, bv)| v > bv) {
                            best = Some((r, i, v));
                        }
                    }
                }
                let Some((r, i, _)) = best.filter(|&(_, _, v)| v > self.opts.pivot_tol) else {
                    return Err(Error::Numerical(format!("singular basis at column {k}")));
                };
                for row in 0..m {
                    a[row * m + k] = inv[row * m + i];
                }
                self.position[self.basis[k]] = NONBASIC;
                self.basis[k] = self.art_start + i;
                self.position[self.art_start + i] = k;
                p = r;
            }
            if p != k {
                for c in 0..m {
                    a.swap(p * m + c, k * m + c);
                    inv.swap(p * m + c, k * m + c);
                }
            }
            let d = T::one() / a[k * m + k];
            for c in 0..m {
                a[k * m + c] *= d;
                inv[k * m + c] *= d;
            }
            let piv_a: Vec<T> = a[k * m..(k + 1) * m].to_vec();
            let piv_i: Vec<T> = inv[k * m..(k + 1) * m].to_vec();
            let nz_a: Vec<usize> = (0..m).filter(|&c| piv_a[c] != T::zero()).collect();
            let nz_i: Vec<usize> = (0..m).filter(|&c| piv_i[c] != T::zero()).collect();
            for i in 0..m {
                let f = a[i * m + k];
                if i == k || f == T::zero() {
                    continue;
                }
                for &c in &nz_a {
                    a[i * m + c] -= f * piv_a[c];
                }
                for &c in &nz_i {
                    inv[i * m + c] -= f * piv_i[c];
                }
            }
        }
        self.binv = inv;
        Ok(())
    }

    fn finish(mut self, problem: &LpProblem<T>, status: LpStatus) -> Result<LpSolution<T>> {
        let empty = |status| LpSolution {
            status,
            x: Vec::new(),
            objective: T::nan(),
            eq_duals: Vec::new(),
            ineq_duals: Vec::new(),
            iterations: 0,
        };
        if status == LpStatus::Infeasible {
            return Ok(LpSolution { iterations: self.iterations, ..empty(status) });
        }
        self.set_phase_two_costs(&problem.objective);
        self.refresh()?;
        let status = self.run_phase(Phase::Two)?;
        if status == LpStatus::Unbounded {
            return Ok(LpSolution { iterations: self.iterations, ..empty(status) });
        }
        // Dual pivots may leave tiny negative reduced costs behind, and the
        // primal pivots that fix them may shift `b` again.
        for round in 0.. {
            if !self.restore_rhs()? {
                return Ok(LpSolution { iterations: self.iterations, ..empty(LpStatus::Infeasible) });
            }
            if round == MAX_RESTORE_ROUNDS {
                break;
            }
            if self.run_phase(Phase::Two)? == LpStatus::Unbounded {
                return Ok(LpSolution { iterations: self.iterations, ..empty(LpStatus::Unbounded) });
            }
            if self.b == self.b_true {
                break;
            }
        }
        self.refresh()?;
        let x = self.primal();
        let res = problem.residuals(&x);
        let tol = self.opts.feasibility_tol;
        if res.eq > tol || res.ineq > tol || res.min_x < -tol {
            self.reinvert()?;
            self.recompute();
        }
        let x = self.primal();
        let res = problem.residuals(&x);
        if res.eq > tol || res.ineq > tol || res.min_x < -tol {
            return Err(Error::Numerical(format!(
                "final point violates tolerances: eq {} ineq {} min {}",
                res.eq, res.ineq, res.min_x
            )));
        }
        let duals: Vec<T> = self.y.iter().zip(&self.sign).map(|(&y, &s)| y * s).collect();
        Ok(LpSolution {
            status: LpStatus::Optimal,
            objective: problem.objective_value(&x),
            x,
            eq_duals: duals[..self.n_eq].to_vec(),
            ineq_duals: duals[self.n_eq..].to_vec(),
            iterations: self.iterations,
        })
    }

    fn primal(&self) -> Vec<T> {
        let mut x = vec![T::zero(); self.n_struct];
        for (r, &j) in self.basis.iter().enumerate() {
            if j < self.n_struct {
                x[j] = self.x_b[r];
            }
        }
        x
    }
}

/// Deterministic weights in `[0.5, 1)` spreading the perturbation so that
/// distinct columns almost never produce equal ratios.
fn perturbation_weight<T: Scalar>(j: usize) -> T {
    const GOLDEN: f64 = 0.618_033_988_749_894_9;
    T::lit(0.5 + 0.5 * ((j as f64 + 1.0) * GOLDEN).fract())
}
