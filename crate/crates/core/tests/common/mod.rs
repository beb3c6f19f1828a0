//! Reference solvers used as oracles. They share no code with the library
//! beyond the problem types they read.

#![allow(dead_code)]

use ehs_core::aging::CostSpec;
use ehs_core::lp::LpProblem;
use ehs_core::markov::{BurstParams, EmissionDist, FiniteChain, ModulatedSource};
use ehs_core::model::{Kernel, SystemConfig, SystemModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves `a x = b` (row-major `n x n`) by Gaussian elimination with partial
/// pivoting; `None` when a pivot falls below `1e-10` of the largest one.
pub fn gauss_solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))?;
        if a[p * n + k].abs() < 1e-10 * scale {
            return None;
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            b.swap(k, p);
        }
        for i in k + 1..n {
            let f = a[i * n + k] / a[k * n + k];
            if f != 0.0 {
                for j in k..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k * n + j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k * n + k];
    }
    Some(x)
}

/// Dense standard form `[A_eq 0; A_in I] (x, s) = (b_eq, b_in)`.
fn standard_form(p: &LpProblem<f64>) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let n = p.n_vars();
    let (me, mi) = (p.eq_rhs.len(), p.ineq_rhs.len());
    let width = n + mi;
    let mut rows = Vec::with_capacity(me + mi);
    for mut row in p.eq.to_dense_rows() {
        row.resize(width, 0.0);
        rows.push(row);
    }
    for (r, mut row) in p.ineq.to_dense_rows().into_iter().enumerate() {
        row.resize(width, 0.0);
        row[n + r] = 1.0;
        rows.push(row);
    }
    debug_assert_eq!(rows.len(), me + mi);
    let mut rhs = p.eq_rhs.clone();
    rhs.extend(&p.ineq_rhs);
    let mut cost = p.objective.clone();
    cost.resize(width, 0.0);
    (rows, rhs, cost)
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Drops rows that are linear combinations of earlier ones (the system is
/// assumed consistent), by Gram-Schmidt against the kept rows.
fn independent_rows(rows: Vec<Vec<f64>>, rhs: Vec<f64>) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let (mut kept, mut kept_rhs) = (Vec::new(), Vec::new());
    for (row, b) in rows.into_iter().zip(rhs) {
        let mut r = row.clone();
        for q in &basis {
            let d: f64 = r.iter().zip(q).map(|(x, y)| x * y).sum();
            r.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
        }
        let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 * scale.max(1.0) {
            basis.push(r.into_iter().map(|x| x / norm).collect());
            kept.push(row);
            kept_rhs.push(b);
        }
    }
    (kept, kept_rhs)
}

/// Minimum objective over all basic feasible solutions, or `None` if there
/// is none. Assumes a consistent system and a bounded feasible region.
pub fn bfs_enumeration(p: &LpProblem<f64>) -> Option<f64> {
    let (rows, rhs, cost) = standard_form(p);
    let (rows, rhs) = independent_rows(rows, rhs);
    let m = rows.len();
    let width = cost.len();
    if m == 0 {
        return Some(0.0);
    }
    let mut best: Option<f64> = None;
    let mut cols: Vec<usize> = (0..m).collect();
    loop {
        let mut b = vec![0.0; m * m];
        for (i, row) in rows.iter().enumerate() {
            for (k, &j) in cols.iter().enumerate() {
                b[i * m + k] = row[j];
            }
        }
        if let Some(xb) = gauss_solve(b, rhs.clone(), m) {
            if xb.iter().all(|&v| v >= -1e-9) {
                let obj: f64 = cols.iter().zip(&xb).map(|(&j, &v)| cost[j] * v).sum();
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
        if !next_combination(&mut cols, width) {
            break;
        }
    }
    best
}

/// Feasible, bounded LP with `n` variables: random equality and inequality
/// rows built around a random interior point, plus `sum x <= n`.
pub fn random_lp(rng: &mut ChaCha8Rng, n: usize, m_eq: usize, m_in: usize) -> LpProblem<f64> {
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let coef = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(-3i32..=3) as f64 }).collect()
    };
    let eq: Vec<Vec<f64>> = (0..m_eq).map(|_| coef(rng)).collect();
    let eq_rhs = eq.iter().map(|r| r.iter().zip(&x0).map(|(a, x)| a * x).sum()).collect();
    let mut ineq: Vec<Vec<f64>> = (0..m_in).map(|_| coef(rng)).collect();
    let mut ineq_rhs: Vec<f64> =
        ineq.iter().map(|r| r.iter().zip(&x0).map(|(a, x)| a * x).sum::<f64>() + rng.random_range(0.0..1.0)).collect();
    ineq.push(vec![1.0; n]);
    ineq_rhs.push(n as f64);
    let objective = (0..n).map(|_| rng.random_range(-5i32..=5) as f64).collect();
    LpProblem::from_dense(objective, &eq, eq_rhs, &ineq, ineq_rhs).unwrap()
}

/// Kernel whose rows are all strictly positive, so every stationary policy
/// induces an irreducible aperiodic chain.
pub fn random_positive_kernel(seed: u64, n: usize, m: usize) -> (Kernel<f64>, CostSpec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n * m)
        .map(|_| {
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().enumerate().map(|(j, v)| (j, v / s)).collect()
        })
        .collect();
    let kernel = Kernel::from_rows(n, m, rows).unwrap();
    let objective = (0..n * m).map(|_| rng.random_range(0.0..10.0)).collect();
    let constraints = std::array::from_fn(|_| (0..n * m).map(|_| rng.random_range(0.0..1.0)).collect());
    (kernel, CostSpec { n_states: n, n_actions: m, objective, constraints })
}

fn dense_chain(kernel: &Kernel<f64>, choice: &[usize]) -> Vec<f64> {
    let n = kernel.n_states();
    let mut p = vec![0.0; n * n];
    for (z, &a) in choice.iter().enumerate() {
        for (j, v) in kernel.iter_row(z, a) {
            p[z * n + j] += v;
        }
    }
    p
}

/// Stationary law of an irreducible chain: `pi (P - I) = 0` with the last
/// equation replaced by normalization.
pub fn stationary(p: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // row i of the system is column i of (P - I)^T
            a[i * n + j] = p[j * n + i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1) * n + j] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    gauss_solve(a, b, n)
}

/// Closed communicating classes of a dense chain, from the transitive
/// closure of its support.
pub fn closed_classes(p: &[f64], n: usize) -> Vec<Vec<usize>> {
    let mut reach = vec![false; n * n];
    for i in 0..n {
        reach[i * n + i] = true;
        for j in 0..n {
            if p[i * n + j] > 0.0 {
                reach[i * n + j] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i * n + k] {
                for j in 0..n {
                    if reach[k * n + j] {
                        reach[i * n + j] = true;
                    }
                }
            }
        }
    }
    let mut seen = vec![false; n];
    let mut classes = Vec::new();
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let closed = (0..n).all(|j| !reach[i * n + j] || reach[j * n + i]);
        if closed {
            let class: Vec<usize> = (0..n).filter(|&j| reach[i * n + j]).collect();
            class.iter().for_each(|&j| seen[j] = true);
            classes.push(class);
        }
    }
    classes
}

/// Minimum long-run average objective over all `m^n` deterministic
/// stationary policies and all closed classes each one induces. This is
/// the least average cost any stationary occupation measure attains.
pub fn exhaustive_min_gain(kernel: &Kernel<f64>, costs: &CostSpec<f64>) -> f64 {
    let (n, m) = (kernel.n_states(), kernel.n_actions());
    let mut choice = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let p = dense_chain(kernel, &choice);
        for class in closed_classes(&p, n) {
            let r = class.len();
            let mut sub = vec![0.0; r * r];
            for (a, &i) in class.iter().enumerate() {
                for (b, &j) in class.iter().enumerate() {
                    sub[a * r + b] = p[i * n + j];
                }
            }
            let pi = stationary(&sub, r).expect("closed class is irreducible");
            let g: f64 = class.iter().zip(&pi).map(|(&z, w)| w * costs.objective[z * m + choice[z]]).sum();
            best = best.min(g);
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            choice[i] += 1;
            if choice[i] < m {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Optimal average cost by relative value iteration on the aperiodic
/// transform `P' = (P + I) / 2`, which has the same optimal gain.
pub fn relative_value_iteration(kernel: &Kernel<f64>, costs: &CostSpec<f64>, tol: f64, max_iter: usize) -> f64 {
    let (n, m) = (kernel.n_states(), kernel.n_actions());
    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iter {
        for z in 0..n {
            next[z] = (0..m)
                .map(|a| costs.objective[z * m + a] + 0.5 * (h[z] + kernel.expect(z, a, |j| h[j])))
                .fold(f64::INFINITY, f64::min);
        }
        // span of T h - h brackets the gain
        let (lo, hi) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| {
            let d = next[z] - h[z];
            (lo.min(d), hi.max(d))
        });
        let offset = next[0];
        for z in 0..n {
            h[z] = next[z] - offset;
        }
        if hi - lo < tol {
            return 0.5 * (lo + hi);
        }
    }
    panic!("relative value iteration did not converge in {max_iter} sweeps");
}

fn small_config() -> SystemConfig {
    SystemConfig { q_max: 1, w_max: 1, y_levels: 2, ..SystemConfig::reference() }
}

/// Smallest burst-driven instance of the system model: one-unit battery
/// and buffer, two smoothing levels, so `|Z| = 64`.
pub fn tiny_system(phi_l: f64, b_l: f64) -> SystemModel<f64> {
    let h = ModulatedSource::binary_burst(&BurstParams::new(0.7, 3.0).unwrap()).unwrap();
    let l = ModulatedSource::binary_burst(&BurstParams::new(phi_l, b_l).unwrap()).unwrap();
    SystemModel::new(small_config(), h, l).unwrap()
}

/// The same with memoryless harvest and load (one-state chains emitting a
/// unit with the given probability), so `|Z| = 16`.
pub fn bernoulli_system(p_h: f64, p_l: f64) -> SystemModel<f64> {
    let src = |p: f64| {
        let emission = EmissionDist::new(vec![vec![(0, 1.0 - p), (1, p)]]).unwrap();
        ModulatedSource::new(FiniteChain::new(1, vec![1.0]).unwrap(), emission).unwrap()
    };
    SystemModel::new(small_config(), src(p_h), src(p_l)).unwrap()
}
