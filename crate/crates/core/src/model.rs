//! Composition of harvest, battery, task queue, smoothed backlog and
//! charge-direction sub-machines into one controlled Markov chain.
//!
//! A state is the tuple `(h, q, w, y, l, lambda)`:
//!
//! * `h` harvest chain state, `l` load chain state;
//! * `q` battery charge in energy units, `0..=q_max`;
//! * `w` pending task energy, `0..=w_max`;
//! * `y` index into a uniform grid over `[0, w_max]` holding the
//!   exponentially smoothed backlog;
//! * `lambda` direction of the last non-zero charge change (1 charging).
//!
//! States are numbered in mixed radix with `lambda` fastest, then `l`, `y`,
//! `w`, `q`, and `h` slowest.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::ModulatedSource;
use crate::scalar::Scalar;

/// Kernel rows must sum to one within this tolerance.
pub const KERNEL_TOL: f64 = 1e-10;

fn default_y_levels() -> u32 {
    9
}

fn default_delta_q() -> f64 {
    1.0
}

/// How an action's energy draw relates to the charge actually available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Service {
    /// The load receives `min(a, q)` units: tasks are served only with
    /// energy that is in the battery.
    #[default]
    Coupled,
    /// Charge and backlog are updated with `a` independently, so a task can
    /// be served from an empty battery.
    Decoupled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Battery capacity in energy units.
    pub q_max: u32,
    /// Task buffer capacity in energy units.
    pub w_max: u32,
    /// Number of grid points for the smoothed backlog.
    #[serde(default = "default_y_levels")]
    pub y_levels: u32,
    /// Smoothing factor in (0, 1).
    pub theta: f64,
    /// Allowed per-slot energy draws, ascending, containing 0.
    pub actions: Vec<u32>,
    /// Energy per charge unit. Only used to report physical quantities.
    #[serde(default = "default_delta_q")]
    pub delta_q: f64,
    #[serde(default)]
    pub service: Service,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.q_max < 1 {
            return bad("q_max must be >= 1".into());
        }
        if self.w_max < 1 {
            return bad("w_max must be >= 1".into());
        }
        if self.y_levels < 2 {
            return bad("y_levels must be >= 2".into());
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad(format!("theta = {} must lie in (0, 1)", self.theta));
        }
        if self.actions.is_empty() || !self.actions.contains(&0) {
            return bad("action set must be non-empty and contain 0".into());
        }
        if self.actions.windows(2).any(|w| w[0] >= w[1]) {
            return bad("actions must be strictly ascending".into());
        }
        if self.actions.iter().any(|&a| a > self.q_max) {
            return bad("actions must not exceed q_max".into());
        }
        if !(self.delta_q > 0.0 && self.delta_q.is_finite()) {
            return bad("delta_q must be positive".into());
        }
        Ok(())
    }

    /// Reference instance: 8-unit battery and buffer, binary
    /// actions, 9-level smoothing grid with `theta = 0.1`.
    pub fn reference() -> Self {
        Self { q_max: 8, w_max: 8, y_levels: 9, theta: 0.1, actions: vec![0, 1], delta_q: 1.0, service: Service::Coupled }
    }

    /// Units actually drawn from the battery by action `a` at charge `q`.
    pub fn drawn(&self, q: u32, a: u32) -> u32 {
        match self.service {
            Service::Coupled => a.min(q),
            Service::Decoupled => a,
        }
    }

    /// Index of the idle action (value 0) in the action list.
    pub fn idle_action(&self) -> usize {
        self.actions.iter().position(|&a| a == 0).unwrap_or(0)
    }

    pub fn y_grid(&self) -> YGrid {
        YGrid { w_max: self.w_max, levels: self.y_levels, theta: self.theta }
    }
}

/// `min(max(q - a, 0) + e, q_max)`; energy above capacity is discarded.
pub fn soc_update(q: u32, a: u32, e: u32, q_max: u32) -> u32 {
    (q.saturating_sub(a) + e).min(q_max)
}

/// `min(max(w - a, 0) + u, w_max)`; tasks beyond the buffer are dropped.
pub fn backlog_update(w: u32, a: u32, u: u32, w_max: u32) -> u32 {
    (w.saturating_sub(a) + u).min(w_max)
}

/// 1 after a charge increase, 0 after a decrease, unchanged otherwise.
pub fn lambda_update(q_prev: u32, q_next: u32, lam_prev: u8) -> u8 {
    match q_next.cmp(&q_prev) {
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Less => 0,
        std::cmp::Ordering::Equal => lam_prev,
    }
}

/// Uniform grid of `levels` points over `[0, w_max]` for the smoothed backlog.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YGrid {
    w_max: u32,
    levels: u32,
    theta: f64,
}

impl YGrid {
    pub fn levels(&self) -> usize {
        self.levels as usize
    }

    pub fn step(&self) -> f64 {
        self.w_max as f64 / (self.levels - 1) as f64
    }

    pub fn value(&self, idx: usize) -> f64 {
        idx as f64 * self.step()
    }

    /// `theta * y + (1 - theta) * w` before rounding. As theta tends to 0
    /// this is just `w`, the instantaneous queue length.
    ///
    /// ```
    /// use ehs_core::model::SystemConfig;
    /// let cfg = SystemConfig { theta: 1e-12, ..SystemConfig::reference() };
    /// let g = cfg.y_grid();
    /// assert!((g.smoothed(6, 3) - 3.0).abs() < 1e-9);
    /// ```
    pub fn smoothed(&self, y_idx: usize, w: u32) -> f64 {
        self.theta * self.value(y_idx) + (1.0 - self.theta) * w as f64
    }

    /// Nearest grid index, ties rounding up. A relative slack of 1e-9 grid
    /// steps absorbs representation error so that exact halves tie upward.
    pub fn nearest(&self, x: f64) -> usize {
        let t = x / self.step();
        let idx = (t + 0.5 + 1e-9).floor();
        (idx.max(0.0) as usize).min(self.levels() - 1)
    }

    pub fn update(&self, y_idx: usize, w: u32) -> usize {
        self.nearest(self.smoothed(y_idx, w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SystemState {
    pub h: usize,
    pub q: u32,
    pub w: u32,
    pub y_idx: usize,
    pub l: usize,
    pub lam: u8,
}

/// Dense index bijection over the product state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    pub n_h: usize,
    pub n_q: usize,
    pub n_w: usize,
    pub n_y: usize,
    pub n_l: usize,
}

impl StateSpace {
    pub const N_LAMBDA: usize = 2;

    pub fn len(&self) -> usize {
        self.n_h * self.n_q * self.n_w * self.n_y * self.n_l * Self::N_LAMBDA
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, s: &SystemState) -> bool {
        s.h < self.n_h
            && (s.q as usize) < self.n_q
            && (s.w as usize) < self.n_w
            && s.y_idx < self.n_y
            && s.l < self.n_l
            && (s.lam as usize) < Self::N_LAMBDA
    }

    pub fn index(&self, s: &SystemState) -> usize {
        debug_assert!(self.contains(s), "{s:?} outside {self:?}");
        ((((s.h * self.n_q + s.q as usize) * self.n_w + s.w as usize) * self.n_y + s.y_idx)
            * self.n_l
            + s.l)
            * Self::N_LAMBDA
            + s.lam as usize
    }

    pub fn state_of(&self, mut i: usize) -> SystemState {
        let lam = (i % Self::N_LAMBDA) as u8;
        i /= Self::N_LAMBDA;
        let l = i % self.n_l;
        i /= self.n_l;
        let y_idx = i % self.n_y;
        i /= self.n_y;
        let w = (i % self.n_w) as u32;
        i /= self.n_w;
        let q = (i % self.n_q) as u32;
        i /= self.n_q;
        SystemState { h: i, q, w, y_idx, l, lam }
    }

    pub fn describe(&self) -> String {
        format!(
            "h={} q={} w={} y={} l={} lambda={}",
            self.n_h,
            self.n_q,
            self.n_w,
            self.n_y,
            self.n_l,
            Self::N_LAMBDA
        )
    }
}

/// The composed plant: configuration plus harvest and load sources.
#[derive(Debug, Clone)]
pub struct SystemModel<T> {
    pub config: SystemConfig,
    pub harvest: ModulatedSource<T>,
    pub load: ModulatedSource<T>,
    space: StateSpace,
    grid: YGrid,
}

impl<T: Scalar> SystemModel<T> {
    pub fn new(config: SystemConfig, harvest: ModulatedSource<T>, load: ModulatedSource<T>) -> Result<Self> {
        config.validate()?;
        let space = StateSpace {
            n_h: harvest.n_states(),
            n_q: config.q_max as usize + 1,
            n_w: config.w_max as usize + 1,
            n_y: config.y_levels as usize,
            n_l: load.n_states(),
        };
        let grid = config.y_grid();
        Ok(Self { config, harvest, load, space, grid })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn grid(&self) -> &YGrid {
        &self.grid
    }

    pub fn n_actions(&self) -> usize {
        self.config.actions.len()
    }

    /// Deterministic part of a slot: apply action `a` (units), arrivals
    /// `e`, `u`, and the sampled next chain states.
    pub fn advance(&self, s: &SystemState, a: u32, e: u32, u: u32, h_next: usize, l_next: usize) -> SystemState {
        let drawn = self.config.drawn(s.q, a);
        let q = soc_update(s.q, drawn, e, self.config.q_max);
        SystemState {
            h: h_next,
            q,
            w: backlog_update(s.w, drawn, u, self.config.w_max),
            y_idx: self.grid.update(s.y_idx, s.w),
            l: l_next,
            lam: lambda_update(s.q, q, s.lam),
        }
    }
}

/// Sparse controlled transition kernel: one distribution per (state, action).
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T> {
    n_states: usize,
    n_actions: usize,
    offsets: Vec<usize>,
    next: Vec<u32>,
    prob: Vec<T>,
}

impl<T: Scalar> Kernel<T> {
    /// Builds a kernel from explicit rows indexed `z * n_actions + a`.
    /// Duplicate successors are merged and zero entries dropped.
    pub fn from_rows(n_states: usize, n_actions: usize, rows: Vec<Vec<(usize, T)>>) -> Result<Self> {
        if rows.len() != n_states * n_actions || n_actions == 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} rows for {n_states} states x {n_actions} actions",
                rows.len()
            )));
        }
        let mut k = Kernel {
            n_states,
            n_actions,
            offsets: Vec::with_capacity(rows.len() + 1),
            next: Vec::new(),
            prob: Vec::new(),
        };
        k.offsets.push(0);
        let tol = T::tol(KERNEL_TOL);
        for (r, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            let mut sum = T::zero();
            let mut last: Option<usize> = None;
            for (j, p) in row {
                if j >= n_states {
                    return Err(Error::OutOfRange { index: j, size: n_states });
                }
                if !(p >= T::zero()) {
                    return Err(Error::InvalidParameter(format!("negative probability in row {r}")));
                }
                sum += p;
                if p == T::zero() {
                    continue;
                }
                if last == Some(j) {
                    *k.prob.last_mut().unwrap() += p;
                } else {
                    k.next.push(j as u32);
                    k.prob.push(p);
                    last = Some(j);
                }
            }
            if (sum - T::one()).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "row (z={}, a={}) sums to {sum}",
                    r / n_actions,
                    r % n_actions
                )));
            }
            k.offsets.push(k.next.len());
        }
        Ok(k)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn nnz(&self) -> usize {
        self.next.len()
    }

    /// Successors and probabilities of `(z, a)`.
    pub fn row(&self, z: usize, a: usize) -> (&[u32], &[T]) {
        let r = z * self.n_actions + a;
        let (lo, hi) = (self.offsets[r], self.offsets[r + 1]);
        (&self.next[lo..hi], &self.prob[lo..hi])
    }

    pub fn iter_row(&self, z: usize, a: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (n, p) = self.row(z, a);
        n.iter().zip(p).map(|(&j, &p)| (j as usize, p))
    }

    /// `sum_{z'} p(z'|z,a) f(z')`.
    pub fn expect(&self, z: usize, a: usize, mut f: impl FnMut(usize) -> T) -> T {
        self.iter_row(z, a).map(|(j, p)| p * f(j)).sum()
    }

    /// One `state action next probability` record per line.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# state_index action_index next_state_index probability")?;
        for z in 0..self.n_states {
            for a in 0..self.n_actions {
                for (j, p) in self.iter_row(z, a) {
                    writeln!(out, "{z} {a} {j} {p}")?;
                }
            }
        }
        Ok(())
    }
}

/// Enumerates chain moves and joint emissions for every (state, action)
/// and applies the deterministic charge, backlog, smoothing and flag updates.
pub fn build_kernel<T: Scalar>(model: &SystemModel<T>) -> Result<Kernel<T>> {
    let space = *model.space();
    let n = space.len();
    let actions = &model.config.actions;
    let (hs, ls) = (&model.harvest, &model.load);
    let mut rows = Vec::with_capacity(n * actions.len());
    for z in 0..n {
        let s = space.state_of(z);
        for &a in actions {
            let mut row = Vec::new();
            for (h_next, &ph) in hs.chain.row(s.h).iter().enumerate() {
                if ph == T::zero() {
                    continue;
                }
                for (l_next, &pl) in ls.chain.row(s.l).iter().enumerate() {
                    if pl == T::zero() {
                        continue;
                    }
                    for &(e, pe) in hs.emission.support(s.h) {
                        for &(u, pu) in ls.emission.support(s.l) {
                            let next = model.advance(&s, a, e, u, h_next, l_next);
                            row.push((space.index(&next), ph * pl * pe * pu));
                        }
                    }
                }
            }
            rows.push(row);
        }
    }
    Kernel::from_rows(n, actions.len(), rows)
}
