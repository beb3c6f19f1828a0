//! Constrained average-cost MDPs solved through the occupation-measure LP.
//!
//! Variables are `x(z, a)`, the stationary probability of being in `z` and
//! choosing `a`, laid out `z * n_actions + a`. The LP has one balance row
//! per state, one normalization row, and one `<=` row per finite bound.

use std::io::{BufRead, Write};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::aging::{AgingBounds, CostSpec, CONSTRAINT_NAMES, N_CONSTRAINTS};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lp::{self, LpOptions, LpProblem, LpStatus, SparseMatrix};
use crate::model::Kernel;
use crate::scalar::Scalar;

/// Stationary joint distribution over (state, action).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationMeasure<T> {
    pub n_states: usize,
    pub n_actions: usize,
    pub x: Vec<T>,
}

/// Worst violations of the occupation-measure invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupationCheck<T> {
    pub min_entry: T,
    pub normalization_error: T,
    pub balance_residual: T,
}

impl<T: Scalar> OccupationMeasure<T> {
    pub fn state_mass(&self, z: usize) -> T {
        self.x[z * self.n_actions..(z + 1) * self.n_actions].iter().copied().sum()
    }

    pub fn check(&self, kernel: &Kernel<T>) -> OccupationCheck<T> {
        let min_entry = self.x.iter().copied().fold(T::infinity(), T::min);
        let total: T = self.x.iter().copied().sum();
        let mut flow: Vec<T> = (0..self.n_states).map(|z| self.state_mass(z)).collect();
        for z in 0..self.n_states {
            for a in 0..self.n_actions {
                let xa = self.x[z * self.n_actions + a];
                if xa == T::zero() {
                    continue;
                }
                for (j, p) in kernel.iter_row(z, a) {
                    flow[j] -= xa * p;
                }
            }
        }
        let balance_residual = flow.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        OccupationCheck { min_entry, normalization_error: (total - T::one()).abs(), balance_residual }
    }

    /// `sum x(z, a) f(z, a)` for a cost table laid out like `x`.
    pub fn average(&self, cost: &[T]) -> T {
        self.x.iter().zip(cost).map(|(&x, &c)| x * c).sum()
    }
}

/// Randomized stationary policy `mu(a | z)`, laid out `z * n_actions + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T> {
    n_states: usize,
    n_actions: usize,
    probs: Vec<T>,
}

impl<T: Scalar> Policy<T> {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<T>) -> Result<Self> {
        if probs.len() != n_states * n_actions || n_actions == 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} probabilities for {n_states} states x {n_actions} actions",
                probs.len()
            )));
        }
        let tol = T::tol(1e-9);
        for (z, row) in probs.chunks(n_actions).enumerate() {
            let s: T = row.iter().copied().sum();
            if row.iter().any(|&p| !(p >= T::zero())) || (s - T::one()).abs() > tol {
                return Err(Error::InvalidParameter(format!("policy row {z} is not a distribution")));
            }
        }
        Ok(Self { n_states, n_actions, probs })
    }

    /// Always choose action index `choice[z]` in state `z`.
    pub fn deterministic(n_actions: usize, choice: &[usize]) -> Result<Self> {
        let mut probs = vec![T::zero(); choice.len() * n_actions];
        for (z, &a) in choice.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::OutOfRange { index: a, size: n_actions });
            }
            probs[z * n_actions + a] = T::one();
        }
        Self::new(choice.len(), n_actions, probs)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = T::one() / T::of_usize(n_actions);
        Self { n_states, n_actions, probs: vec![p; n_states * n_actions] }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, z: usize) -> &[T] {
        &self.probs[z * self.n_actions..(z + 1) * self.n_actions]
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    /// Number of states whose row puts mass on more than one action.
    pub fn randomized_states(&self) -> usize {
        (0..self.n_states)
            .filter(|&z| self.row(z).iter().filter(|&&p| p > T::tol(1e-9)).count() > 1)
            .count()
    }

    /// Text table `state,action,probability` listing the non-zero entries.
    /// Header lines start with `#` and carry `key=value` metadata.
    pub fn write_table<W: Write>(&self, mut out: W, header: &[(&str, String)]) -> std::io::Result<()> {
        writeln!(out, "# ehs-policy v1")?;
        for (k, v) in header {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "# n_states={}", self.n_states)?;
        writeln!(out, "# n_actions={}", self.n_actions)?;
        writeln!(out, "state,action,probability")?;
        for z in 0..self.n_states {
            for (a, &p) in self.row(z).iter().enumerate() {
                if p != T::zero() {
                    writeln!(out, "{z},{a},{p}")?;
                }
            }
        }
        Ok(())
    }

    /// Parses [`Policy::write_table`] output; returns the policy and the
    /// header metadata.
    pub fn read_table<R: BufRead>(input: R) -> Result<(Self, Vec<(String, String)>)> {
        let bad = |m: String| Error::PolicyFormat(m);
        let mut meta = Vec::new();
        let mut entries = Vec::new();
        let mut seen_columns = false;
        for (ln, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    meta.push((k.trim().to_string(), v.trim().to_string()));
                }
                continue;
            }
            if !seen_columns {
                if line != "state,action,probability" {
                    return Err(bad(format!("line {}: expected column header", ln + 1)));
                }
                seen_columns = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(bad(format!("line {}: expected 3 fields", ln + 1)));
            }
            let z: usize = f[0].parse().map_err(|_| bad(format!("line {}: bad state", ln + 1)))?;
            let a: usize = f[1].parse().map_err(|_| bad(format!("line {}: bad action", ln + 1)))?;
            let p: f64 = f[2].parse().map_err(|_| bad(format!("line {}: bad probability", ln + 1)))?;
            entries.push((z, a, p));
        }
        let get = |key: &str| -> Result<usize> {
            meta.iter()
                .find(|(k, _)| k == key)
                .and_then(|(_, v)| v.parse().ok())
                .ok_or_else(|| bad(format!("missing header `{key}`")))
        };
        let (n, m) = (get("n_states")?, get("n_actions")?);
        let mut probs = vec![T::zero(); n * m];
        for (z, a, p) in entries {
            if z >= n || a >= m {
                return Err(bad(format!("entry ({z}, {a}) outside {n}x{m}")));
            }
            probs[z * m + a] = T::lit(p);
        }
        let policy = Self::new(n, m, probs).map_err(|e| bad(e.to_string()))?;
        Ok((policy, meta))
    }
}

fn check_dims<T: Scalar>(kernel: &Kernel<T>, costs: &CostSpec<T>) -> Result<()> {
    costs.validate_for(kernel)
}

/// Occupation-measure LP. Infinite bounds contribute no row.
pub fn build_lp<T: Scalar>(kernel: &Kernel<T>, costs: &CostSpec<T>, bounds: &AgingBounds) -> Result<LpProblem<T>> {
    check_dims(kernel, costs)?;
    bounds.validate()?;
    let (n, m) = (kernel.n_states(), kernel.n_actions());
    let n_vars = n * m;
    let mut eq = Vec::with_capacity(kernel.nnz() + 2 * n_vars);
    for z in 0..n {
        for a in 0..m {
            let v = z * m + a;
            eq.push((z, v, T::one()));
            for (j, p) in kernel.iter_row(z, a) {
                eq.push((j, v, -p));
            }
            eq.push((n, v, T::one()));
        }
    }
    let mut eq_rhs = vec![T::zero(); n + 1];
    eq_rhs[n] = T::one();

    let finite: Vec<(usize, f64)> = bounds.as_array().into_iter().enumerate().filter(|(_, b)| b.is_finite()).collect();
    let mut ineq = Vec::new();
    let mut ineq_rhs = Vec::with_capacity(finite.len());
    for (row, &(k, bound)) in finite.iter().enumerate() {
        ineq.extend(costs.constraints[k].iter().enumerate().map(|(v, &d)| (row, v, d)));
        ineq_rhs.push(T::lit(bound));
    }
    LpProblem::new(
        costs.objective.clone(),
        SparseMatrix::from_triplets(n + 1, n_vars, eq)?,
        eq_rhs,
        SparseMatrix::from_triplets(finite.len(), n_vars, ineq)?,
        ineq_rhs,
    )
}

/// `mu(a|z) = x(z,a) / sum_a x(z,a)` after zeroing entries at or below
/// 1e-12; states left without occupation fall back to a point mass on
/// `fallback_action`.
pub fn extract_policy<T: Scalar>(x: &OccupationMeasure<T>, fallback_action: usize) -> Policy<T> {
    let m = x.n_actions;
    let mut probs = Vec::with_capacity(x.x.len());
    let floor = T::tol(1e-12);
    for z in 0..x.n_states {
        let row = &x.x[z * m..(z + 1) * m];
        // solver roundoff leaves entries of order 1e-15 on unused actions
        let clipped: Vec<T> = row.iter().map(|&v| if v > floor { v } else { T::zero() }).collect();
        let mass: T = clipped.iter().copied().sum();
        if mass > floor {
            probs.extend(clipped.iter().map(|&v| v / mass));
        } else {
            probs.extend((0..m).map(|a| if a == fallback_action { T::one() } else { T::zero() }));
        }
    }
    Policy { n_states: x.n_states, n_actions: m, probs }
}

/// Long-run averages of a policy, computed analytically.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyCosts<T> {
    pub objective: T,
    pub constraints: [T; N_CONSTRAINTS],
    /// Stationary state distribution of the induced chain.
    pub stationary: Vec<T>,
    /// Size of the recurrent class reached from the initial state.
    pub recurrent_states: usize,
}

/// Sparse rows of the chain induced by `policy`.
pub fn induced_chain<T: Scalar>(policy: &Policy<T>, kernel: &Kernel<T>) -> Result<Vec<Vec<(usize, T)>>> {
    if policy.n_states != kernel.n_states() || policy.n_actions != kernel.n_actions() {
        return Err(Error::DimensionMismatch(format!(
            "policy is {}x{}, kernel is {}x{}",
            policy.n_states,
            policy.n_actions,
            kernel.n_states(),
            kernel.n_actions()
        )));
    }
    let mut rows = Vec::with_capacity(kernel.n_states());
    for z in 0..kernel.n_states() {
        let mut row: Vec<(usize, T)> = Vec::new();
        for (a, &mu) in policy.row(z).iter().enumerate() {
            if mu > T::zero() {
                row.extend(kernel.iter_row(z, a).map(|(j, p)| (j, mu * p)));
            }
        }
        row.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, T)> = Vec::with_capacity(row.len());
        for (j, p) in row {
            match merged.last_mut() {
                Some((lj, lp)) if *lj == j => *lp += p,
                _ => merged.push((j, p)),
            }
        }
        rows.push(merged);
    }
    Ok(rows)
}

/// The unique closed communicating class reachable from `initial`.
pub fn recurrent_class<T: Scalar>(rows: &[Vec<(usize, T)>], initial: usize) -> Result<Vec<usize>> {
    let n = rows.len();
    if initial >= n {
        return Err(Error::OutOfRange { index: initial, size: n });
    }
    let mut local = vec![usize::MAX; n];
    let mut reach = vec![initial];
    local[initial] = 0;
    let mut head = 0;
    while head < reach.len() {
        let z = reach[head];
        head += 1;
        for &(j, p) in &rows[z] {
            if p > T::zero() && local[j] == usize::MAX {
                local[j] = reach.len();
                reach.push(j);
            }
        }
    }
    let mut g = DiGraph::<(), ()>::with_capacity(reach.len(), 0);
    let nodes: Vec<_> = reach.iter().map(|_| g.add_node(())).collect();
    for (li, &z) in reach.iter().enumerate() {
        for &(j, p) in &rows[z] {
            if p > T::zero() {
                g.add_edge(nodes[li], nodes[local[j]], ());
            }
        }
    }
    let sccs = tarjan_scc(&g);
    let mut comp = vec![0usize; reach.len()];
    for (c, scc) in sccs.iter().enumerate() {
        for nd in scc {
            comp[nd.index()] = c;
        }
    }
    let closed: Vec<usize> = (0..sccs.len())
        .filter(|&c| {
            sccs[c].iter().all(|nd| {
                let z = reach[nd.index()];
                rows[z].iter().all(|&(j, p)| p == T::zero() || comp[local[j]] == c)
            })
        })
        .collect();
    match closed.as_slice() {
        [c] => {
            let mut class: Vec<usize> = sccs[*c].iter().map(|nd| reach[nd.index()]).collect();
            class.sort_unstable();
            Ok(class)
        }
        _ => Err(Error::Numerical(format!(
            "{} recurrent classes reachable from state {initial}; stationary distribution is not unique",
            closed.len()
        ))),
    }
}

/// Stationary distribution of the chain induced by `policy`, started from
/// `initial`, and the resulting long-run objective and constraint costs.
pub fn evaluate_policy<T: Scalar>(
    policy: &Policy<T>,
    kernel: &Kernel<T>,
    costs: &CostSpec<T>,
    initial: usize,
) -> Result<PolicyCosts<T>> {
    check_dims(kernel, costs)?;
    let rows = induced_chain(policy, kernel)?;
    let class = recurrent_class(&rows, initial)?;
    let r = class.len();
    let mut local = vec![usize::MAX; rows.len()];
    for (i, &z) in class.iter().enumerate() {
        local[z] = i;
    }
    let mut dense = vec![T::zero(); r * r];
    for (i, &z) in class.iter().enumerate() {
        for &(j, p) in &rows[z] {
            dense[i * r + local[j]] += p;
        }
    }
    let pi_class = linalg::stationary_dense(&dense, r)?;
    let mut stationary = vec![T::zero(); rows.len()];
    for (i, &z) in class.iter().enumerate() {
        stationary[z] = pi_class[i];
    }
    let m = kernel.n_actions();
    let mut objective = T::zero();
    let mut constraints = [T::zero(); N_CONSTRAINTS];
    for &z in &class {
        for (a, &mu) in policy.row(z).iter().enumerate() {
            let w = stationary[z] * mu;
            if w == T::zero() {
                continue;
            }
            objective += w * costs.objective[z * m + a];
            for (k, c) in constraints.iter_mut().enumerate() {
                *c += w * costs.constraints[k][z * m + a];
            }
        }
    }
    Ok(PolicyCosts { objective, constraints, stationary, recurrent_states: r })
}

/// Achieved constraint costs against their bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics<T> {
    pub achieved: [T; N_CONSTRAINTS],
    pub bounds: [f64; N_CONSTRAINTS],
    /// A finite bound met with slack below `1e-7`.
    pub binding: [bool; N_CONSTRAINTS],
    pub lp_iterations: usize,
    pub randomized_states: usize,
}

#[derive(Debug, Clone)]
pub struct CmdpSolution<T> {
    pub policy: Policy<T>,
    pub occupation: OccupationMeasure<T>,
    pub objective: T,
    pub diagnostics: Diagnostics<T>,
}

/// Builds and solves the occupation-measure LP and extracts `mu*`.
pub fn solve_cmdp<T: Scalar>(
    kernel: &Kernel<T>,
    costs: &CostSpec<T>,
    bounds: &AgingBounds,
    fallback_action: usize,
) -> Result<CmdpSolution<T>> {
    solve_cmdp_with(kernel, costs, bounds, fallback_action, &LpOptions::default())
}

pub fn solve_cmdp_with<T: Scalar>(
    kernel: &Kernel<T>,
    costs: &CostSpec<T>,
    bounds: &AgingBounds,
    fallback_action: usize,
    options: &LpOptions<T>,
) -> Result<CmdpSolution<T>> {
    let problem = build_lp(kernel, costs, bounds)?;
    let sol = lp::solve_with(&problem, options)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::Infeasible(infeasibility_report(kernel, costs, bounds, options))),
        LpStatus::Unbounded => return Err(Error::Unbounded),
    }
    let occupation = OccupationMeasure { n_states: kernel.n_states(), n_actions: kernel.n_actions(), x: sol.x };
    let policy = extract_policy(&occupation, fallback_action);
    let b = bounds.as_array();
    let achieved: [T; N_CONSTRAINTS] = std::array::from_fn(|k| occupation.average(&costs.constraints[k]));
    let binding = std::array::from_fn(|k| b[k].is_finite() && T::lit(b[k]) - achieved[k] <= T::tol(1e-7));
    let randomized_states = policy.randomized_states();
    Ok(CmdpSolution {
        objective: sol.objective,
        diagnostics: Diagnostics { achieved, bounds: b, binding, lp_iterations: sol.iterations, randomized_states },
        policy,
        occupation,
    })
}

/// For each finite bound, the smallest achievable average of that cost
/// alone; bounds below it are reported as violated.
fn infeasibility_report<T: Scalar>(
    kernel: &Kernel<T>,
    costs: &CostSpec<T>,
    bounds: &AgingBounds,
    options: &LpOptions<T>,
) -> String {
    let b = bounds.as_array();
    let mut parts = Vec::new();
    for k in 0..N_CONSTRAINTS {
        if !b[k].is_finite() {
            continue;
        }
        let single = CostSpec { objective: costs.constraints[k].clone(), ..costs.clone() };
        let min = build_lp(kernel, &single, &AgingBounds::unconstrained())
            .and_then(|p| lp::solve_with(&p, options))
            .ok()
            .filter(|s| s.is_optimal())
            .map(|s| s.objective.as_f64());
        match min {
            Some(v) if v > b[k] + 1e-9 => {
                parts.push(format!("bound `{}` = {} is below its minimum achievable value {v:.6}", CONSTRAINT_NAMES[k], b[k]))
            }
            Some(v) => parts.push(format!("bound `{}` = {} alone is attainable (min {v:.6})", CONSTRAINT_NAMES[k], b[k])),
            None => parts.push(format!("bound `{}` = {}: minimum could not be computed", CONSTRAINT_NAMES[k], b[k])),
        }
    }
    if parts.iter().all(|p| p.contains("alone is attainable")) {
        parts.push("the bounds are only jointly infeasible".into());
    }
    parts.join("; ")
}
