//! Monte Carlo rollout of the closed-loop system and the persistent random
//! walk check of the charge-diffusion variance law.
//!
//! Randomness comes from `ChaCha8Rng`, a counter-based generator: a run is
//! fully determined by `(seed, stream)`, so independent runs use the same
//! seed and consecutive stream numbers.
//!
//! Per-slot averages are taken over the post-warm-up window and line up
//! with the constraint costs: slot `t` contributes `q_t`, the cycle cost of
//! the energy drawn at `t` plus harvest `e_t`, `|q_{t+1} - q_t|`, and the
//! indicator `q_{t+1} != q_t and lambda_{t+1} == lambda_t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::aging::{degrade_trace, discrete_metrics, BatteryConstants, Degradation, DiscreteMetrics, Objective};
use crate::cmdp::Policy;
use crate::error::{Error, Result};
use crate::model::{SystemModel, SystemState};
use crate::scalar::Scalar;

/// Slots discarded before statistics: 1% of the horizon, at least
/// `MIN_WARMUP`, and never more than half the horizon.
pub const MIN_WARMUP: usize = 1000;

pub fn default_warmup(horizon: usize) -> usize {
    (horizon / 100).max(MIN_WARMUP).min(horizon / 2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub horizon: usize,
    pub seed: u64,
    pub stream: u64,
    pub initial: SystemState,
    /// `None` selects [`default_warmup`].
    pub warmup: Option<usize>,
    /// Batches used for the batch-means standard errors.
    pub batches: usize,
    pub record_trace: bool,
    /// Count post-warm-up visits of every (state, action) pair.
    pub record_visits: bool,
}

impl SimOptions {
    pub fn new(horizon: usize, seed: u64) -> Self {
        Self {
            horizon,
            seed,
            stream: 0,
            initial: SystemState::default(),
            warmup: None,
            batches: 32,
            record_trace: false,
            record_visits: false,
        }
    }
}

/// Sample mean with a standard error (`NaN` when it cannot be estimated).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Mean of independent values with the usual `s / sqrt(n)` error.
    pub fn of_independent(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return Self { mean, std_error: f64::NAN };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self { mean, std_error: (var / n).sqrt() }
    }

    /// Batch-means estimate for a serially correlated series: the series is
    /// cut into `batches` contiguous blocks (the remainder is folded into
    /// the last one) and block means are treated as independent.
    pub fn batch_means(values: &[f64], batches: usize) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let k = batches.min(n);
        if k < 2 {
            return Self { mean, std_error: f64::NAN };
        }
        let size = n / k;
        let means: Vec<f64> = (0..k)
            .map(|b| {
                let hi = if b + 1 == k { n } else { (b + 1) * size };
                let block = &values[b * size..hi];
                block.iter().sum::<f64>() / block.len() as f64
            })
            .collect();
        Self { mean, std_error: Self::of_independent(&means).std_error }
    }

    /// Standard errors by which `self` exceeds an independent estimate;
    /// negative when it is smaller.
    pub fn separation(&self, other: &Estimate) -> f64 {
        (self.mean - other.mean) / self.std_error.hypot(other.std_error)
    }
}

/// One slot of a rollout: the state at the start of the slot, the chosen
/// action (units requested) and the arrivals during the slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    pub state: SystemState,
    pub action: u32,
    pub e: u32,
    pub u: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStats {
    pub seed: u64,
    pub stream: u64,
    pub horizon: usize,
    pub warmup: usize,
    pub charge: Estimate,
    pub charge_sd: f64,
    pub backlog: Estimate,
    pub backlog_sd: f64,
    /// Share of slots with a full task buffer.
    pub saturation: Estimate,
    /// Average `f(y)`.
    pub objective: Estimate,
    /// Average `(drawn + e) / (2 q_nom)`.
    pub cycle_rate: Estimate,
    pub amplitude: Estimate,
    pub persistence: Estimate,
    pub degradation: Degradation<f64>,
    pub metrics: DiscreteMetrics,
}

impl TraceStats {
    /// Slot averages in constraint order: charge, cycle rate, amplitude,
    /// persistence.
    pub fn constraint_estimates(&self) -> [Estimate; 4] {
        [self.charge, self.cycle_rate, self.amplitude, self.persistence]
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub stats: TraceStats,
    /// Every slot including warm-up, when requested.
    pub trace: Option<Vec<SlotRecord>>,
    /// Post-warm-up visits indexed `z * n_actions + a`, when requested.
    pub visits: Option<Vec<u64>>,
}

/// Cumulative tables for inverse-transform sampling.
struct Sampler {
    cum: Vec<f64>,
    offsets: Vec<usize>,
}

impl Sampler {
    fn new(rows: impl Iterator<Item = Vec<f64>>) -> Self {
        let mut cum = Vec::new();
        let mut offsets = vec![0];
        for row in rows {
            let mut acc = 0.0;
            for p in row {
                acc += p;
                cum.push(acc);
            }
            offsets.push(cum.len());
        }
        Self { cum, offsets }
    }

    /// Index within `row`; the last outcome with positive mass absorbs any
    /// rounding shortfall of the cumulative sum.
    fn draw(&self, row: usize, u: f64) -> usize {
        let c = &self.cum[self.offsets[row]..self.offsets[row + 1]];
        let total = c[c.len() - 1];
        match c.iter().position(|&x| u * total < x) {
            Some(i) => i,
            None => c.len() - 1,
        }
    }
}

/// Runs one closed-loop rollout of `policy` on `model`.
pub fn simulate<T: Scalar>(
    model: &SystemModel<T>,
    policy: &Policy<T>,
    constants: &BatteryConstants,
    objective: &Objective,
    opts: &SimOptions,
) -> Result<Simulation> {
    let space = model.space();
    let cfg = &model.config;
    if policy.n_states() != space.len() || policy.n_actions() != model.n_actions() {
        return Err(Error::DimensionMismatch(format!(
            "policy is {}x{} but the system has {} states and {} actions",
            policy.n_states(),
            policy.n_actions(),
            space.len(),
            model.n_actions()
        )));
    }
    if !space.contains(&opts.initial) {
        return Err(Error::InvalidParameter(format!("initial state {:?} outside the state space", opts.initial)));
    }
    constants.validate()?;
    let warmup = opts.warmup.unwrap_or_else(|| default_warmup(opts.horizon));
    if opts.horizon < warmup + 2 {
        return Err(Error::EmptyTrace);
    }

    let to_f64 = |row: &[T]| row.iter().map(|v| v.as_f64()).collect::<Vec<f64>>();
    let actions = Sampler::new((0..space.len()).map(|z| to_f64(policy.row(z))));
    let harvest_next = Sampler::new((0..space.n_h).map(|h| to_f64(model.harvest.chain.row(h))));
    let load_next = Sampler::new((0..space.n_l).map(|l| to_f64(model.load.chain.row(l))));
    let emit = |src: &crate::markov::EmissionDist<T>, n: usize| {
        let values: Vec<Vec<u32>> = (0..n).map(|s| src.support(s).iter().map(|&(e, _)| e).collect()).collect();
        let sampler = Sampler::new((0..n).map(|s| src.support(s).iter().map(|&(_, p)| p.as_f64()).collect()));
        (values, sampler)
    };
    let (e_values, e_sampler) = emit(&model.harvest.emission, space.n_h);
    let (u_values, u_sampler) = emit(&model.load.emission, space.n_l);
    let f_y: Vec<f64> = (0..space.n_y).map(|i| objective.apply(model.grid().value(i))).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(opts.stream);
    let n_keep = opts.horizon - warmup;
    let mut q_tr = Vec::with_capacity(n_keep);
    let mut drawn_tr = Vec::with_capacity(n_keep);
    let mut e_tr = Vec::with_capacity(n_keep);
    let mut series: [Vec<f64>; 8] = Default::default();
    series.iter_mut().for_each(|s| s.reserve(n_keep));
    let mut trace = opts.record_trace.then(|| Vec::with_capacity(opts.horizon));
    let mut visits = opts.record_visits.then(|| vec![0u64; space.len() * model.n_actions()]);
    let cycle_scale = 1.0 / (2.0 * constants.q_nom);

    let mut s = opts.initial;
    for slot in 0..opts.horizon {
        let z = space.index(&s);
        let a_idx = actions.draw(z, rng.random());
        let a = cfg.actions[a_idx];
        let e = e_values[s.h][e_sampler.draw(s.h, rng.random())];
        let u = u_values[s.l][u_sampler.draw(s.l, rng.random())];
        let h_next = harvest_next.draw(s.h, rng.random());
        let l_next = load_next.draw(s.l, rng.random());
        let next = model.advance(&s, a, e, u, h_next, l_next);
        if let Some(t) = trace.as_mut() {
            t.push(SlotRecord { slot, state: s, action: a, e, u });
        }
        if slot >= warmup {
            let drawn = cfg.drawn(s.q, a);
            q_tr.push(s.q);
            drawn_tr.push(drawn);
            e_tr.push(e);
            let moved = next.q != s.q;
            let sample = [
                s.q as f64,
                s.w as f64,
                f64::from(u8::from(s.w == cfg.w_max)),
                f_y[s.y_idx],
                (drawn + e) as f64 * cycle_scale,
                next.q.abs_diff(s.q) as f64,
                f64::from(u8::from(moved && next.lam == s.lam)),
                (drawn + e) as f64,
            ];
            for (dst, v) in series.iter_mut().zip(sample) {
                dst.push(v);
            }
            if let Some(v) = visits.as_mut() {
                v[z * model.n_actions() + a_idx] += 1;
            }
        }
        s = next;
    }

    let est = |i: usize| Estimate::batch_means(&series[i], opts.batches);
    let sd = |i: usize, mean: f64| (series[i].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n_keep as f64).sqrt();
    let charge = est(0);
    let backlog = est(1);
    let q_max = f64::from(cfg.q_max);
    let soc: Vec<f64> = q_tr.iter().map(|&q| f64::from(q) / q_max).collect();
    let degradation = degrade_trace(&soc, &series[7], constants)?;
    let metrics = discrete_metrics(&q_tr, &drawn_tr, &e_tr, constants.q_nom)?;
    let stats = TraceStats {
        seed: opts.seed,
        stream: opts.stream,
        horizon: opts.horizon,
        warmup,
        charge,
        charge_sd: sd(0, charge.mean),
        backlog,
        backlog_sd: sd(1, backlog.mean),
        saturation: est(2),
        objective: est(3),
        cycle_rate: est(4),
        amplitude: est(5),
        persistence: est(6),
        degradation,
        metrics,
    };
    Ok(Simulation { stats, trace, visits })
}

/// Independent rollouts on streams `0..runs` of the same seed.
pub fn simulate_runs<T: Scalar>(
    model: &SystemModel<T>,
    policy: &Policy<T>,
    constants: &BatteryConstants,
    objective: &Objective,
    opts: &SimOptions,
    runs: usize,
) -> Result<Vec<TraceStats>> {
    (0..runs as u64)
        .map(|stream| {
            let o = SimOptions { stream, record_trace: false, record_visits: false, ..opts.clone() };
            simulate(model, policy, constants, objective, &o).map(|s| s.stats)
        })
        .collect()
}

/// Parameters of the persistent walk: each step keeps the previous
/// direction with probability `p` and has an amplitude uniform on
/// `1..=delta_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkParams {
    pub p: f64,
    pub delta_max: u32,
    pub tau: usize,
    pub samples: usize,
}

impl WalkParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidParameter(format!("persistence p = {} outside (0, 1)", self.p)));
        }
        if self.delta_max < 1 || self.tau < 1 || self.samples < 2 {
            return Err(Error::InvalidParameter("delta_max, tau must be >= 1 and samples >= 2".into()));
        }
        Ok(())
    }

    /// Mean amplitude `(1 + delta_max) / 2`.
    pub fn mean_amplitude(&self) -> f64 {
        (1.0 + f64::from(self.delta_max)) / 2.0
    }

    /// `delta_bar * tau * p / (1 - p)`.
    pub fn predicted_variance(&self) -> f64 {
        self.mean_amplitude() * self.tau as f64 * self.p / (1.0 - self.p)
    }

    /// Exact variance of the `tau`-step displacement. Directions form a
    /// stationary chain with lag correlation `rho^k`, `rho = 2p - 1`, and
    /// amplitudes are independent of directions, so
    /// `Var = tau E[delta^2] + 2 delta_bar^2 sum_{k<tau} (tau - k) rho^k`.
    pub fn exact_variance(&self) -> f64 {
        let d = f64::from(self.delta_max);
        let second = (d + 1.0) * (2.0 * d + 1.0) / 6.0;
        let mean = self.mean_amplitude();
        let rho = 2.0 * self.p - 1.0;
        let tau = self.tau as f64;
        // sum_{k=1}^{tau-1} (tau - k) rho^k in closed form
        let cross = rho * (tau - 1.0 - tau * rho + rho.powf(tau)) / (1.0 - rho).powi(2);
        tau * second + 2.0 * mean * mean * cross
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkReport {
    pub params: WalkParams,
    pub empirical_mean: f64,
    pub empirical_variance: f64,
    pub predicted_variance: f64,
    pub exact_variance: f64,
    /// Kolmogorov-Smirnov distance to the normal law with the empirical
    /// mean and variance.
    pub ks_distance: f64,
}

impl WalkReport {
    /// `|empirical / predicted - 1|`.
    pub fn relative_error(&self) -> f64 {
        (self.empirical_variance / self.predicted_variance - 1.0).abs()
    }
}

/// Simulates `samples` independent walks of `tau` steps. Directions are
/// generated run by run: a run lasts `1 + Geometric(1 - p)` steps, the
/// first direction is a fair coin.
pub fn validate_walk(params: &WalkParams, seed: u64) -> Result<WalkReport> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let runs = Geometric::new(1.0 - params.p).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut xs = Vec::with_capacity(params.samples);
    for _ in 0..params.samples {
        let mut dir: i64 = if rng.random::<bool>() { 1 } else { -1 };
        let mut left = params.tau as u64;
        let mut x: i64 = 0;
        while left > 0 {
            let len = (1 + runs.sample(&mut rng)).min(left);
            let amount: u64 = if params.delta_max == 1 {
                len
            } else {
                (0..len).map(|_| u64::from(rng.random_range(1..=params.delta_max))).sum()
            };
            x += dir * amount as i64;
            left -= len;
            dir = -dir;
        }
        xs.push(x as f64);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(WalkReport {
        params: *params,
        empirical_mean: mean,
        empirical_variance: var,
        predicted_variance: params.predicted_variance(),
        exact_variance: params.exact_variance(),
        ks_distance: ks_to_normal(&mut xs, mean, var.sqrt())?,
    })
}

/// Two-sided KS distance between the sample and `N(mean, sd^2)`. Sorts
/// `xs` in place; ties are handled by comparing at both sides of each jump.
pub fn ks_to_normal(xs: &mut [f64], mean: f64, sd: f64) -> Result<f64> {
    let normal = Normal::new(mean, sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j < xs.len() && xs[j] == xs[i] {
            j += 1;
        }
        let f = normal.cdf(xs[i]);
        d = d.max((f - i as f64 / n).abs()).max((j as f64 / n - f).abs());
        i = j;
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{BurstParams, EmissionDist, FiniteChain, ModulatedSource};
    use crate::model::SystemConfig;

    fn constants() -> BatteryConstants {
        BatteryConstants { a_coef: 1.0, b_coef: 1.0, c_coef: 1.0, d_coef: 1.0, t_life: 1e6, q_nom: 8.0 }
    }

    fn silent_source() -> ModulatedSource<f64> {
        ModulatedSource::new(FiniteChain::new(1, vec![1.0]).unwrap(), EmissionDist::deterministic(&[0]).unwrap()).unwrap()
    }

    fn reference(phi_l: f64, b_l: f64) -> SystemModel<f64> {
        let h = ModulatedSource::binary_burst(&BurstParams::new(0.9, 10.0).unwrap()).unwrap();
        let l = ModulatedSource::binary_burst(&BurstParams::new(phi_l, b_l).unwrap()).unwrap();
        SystemModel::new(SystemConfig::reference(), h, l).unwrap()
    }

    #[test]
    fn frozen_system_has_constant_traces() {
        let m = SystemModel::new(SystemConfig::reference(), silent_source(), silent_source()).unwrap();
        let idle = Policy::deterministic(2, &vec![0; m.space().len()]).unwrap();
        let mut o = SimOptions::new(5000, 3);
        o.initial = SystemState { q: 5, ..SystemState::default() };
        o.record_trace = true;
        let s = simulate(&m, &idle, &constants(), &Objective::Square, &o).unwrap();
        assert_eq!(s.stats.charge.mean, 5.0);
        assert_eq!(s.stats.charge_sd, 0.0);
        assert_eq!(s.stats.backlog_sd, 0.0);
        assert_eq!(s.stats.saturation.mean, 0.0);
        assert_eq!(s.stats.amplitude.mean, 0.0);
        assert_eq!(s.trace.unwrap().len(), 5000);
    }

    #[test]
    fn same_seed_same_stats_and_streams_differ() {
        let m = reference(0.5, 10.0);
        let pol = Policy::uniform(m.space().len(), 2);
        let o = SimOptions::new(20_000, 11);
        let a = simulate(&m, &pol, &constants(), &Objective::Square, &o).unwrap().stats;
        let b = simulate(&m, &pol, &constants(), &Objective::Square, &o).unwrap().stats;
        assert_eq!(a, b);
        let c = simulate(&m, &pol, &constants(), &Objective::Square, &SimOptions { stream: 1, ..o }).unwrap().stats;
        assert_ne!(a.charge.mean, c.charge.mean);
    }

    #[test]
    fn rollout_respects_ranges() {
        let m = reference(0.8, 12.0);
        let pol = Policy::uniform(m.space().len(), 2);
        let mut o = SimOptions::new(30_000, 5);
        o.record_trace = true;
        let s = simulate(&m, &pol, &constants(), &Objective::Square, &o).unwrap();
        for r in s.trace.unwrap() {
            assert!(m.space().contains(&r.state));
        }
        assert!((0.0..=1.0).contains(&s.stats.saturation.mean));
    }

    #[test]
    fn short_horizon_rejected() {
        let m = reference(0.5, 10.0);
        let pol = Policy::uniform(m.space().len(), 2);
        let r = simulate(&m, &pol, &constants(), &Objective::Square, &SimOptions::new(0, 1));
        assert!(matches!(r, Err(Error::EmptyTrace)));
    }

    #[test]
    fn warmup_rule() {
        assert_eq!(default_warmup(10_000), 1000);
        assert_eq!(default_warmup(1_000_000), 10_000);
        assert_eq!(default_warmup(1000), 500);
    }

    #[test]
    fn batch_means_of_iid_matches_plain_error() {
        let v: Vec<f64> = (0..64).map(|i| (i % 2) as f64).collect();
        let e = Estimate::batch_means(&v, 32);
        assert_eq!(e.mean, 0.5);
        // every batch is {0, 1}, so batch means carry no spread
        assert_eq!(e.std_error, 0.0);
        let e = Estimate::of_independent(&[1.0, 3.0]);
        assert_eq!(e.mean, 2.0);
        assert!((e.std_error - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exact_walk_variance_small_cases() {
        // tau = 2, p = 0.9, unit steps: Var = 2 + 2 * 0.8 = 3.6
        let w = WalkParams { p: 0.9, delta_max: 1, tau: 2, samples: 2 };
        assert!((w.exact_variance() - 3.6).abs() < 1e-12);
        // p = 1/2 makes directions independent: Var = tau * E[delta^2]
        let w = WalkParams { p: 0.5, delta_max: 3, tau: 10, samples: 2 };
        assert!((w.exact_variance() - 10.0 * 14.0 / 3.0).abs() < 1e-12);
        assert!((w.predicted_variance() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn exact_walk_variance_matches_enumeration() {
        // all 2^tau direction paths weighted by their probability
        let (p, tau) = (0.7, 8usize);
        let mut var = 0.0;
        for mask in 0u32..(1 << tau) {
            let dirs: Vec<i32> = (0..tau).map(|k| if mask >> k & 1 == 1 { 1 } else { -1 }).collect();
            let mut prob = 0.5;
            for k in 1..tau {
                prob *= if dirs[k] == dirs[k - 1] { p } else { 1.0 - p };
            }
            let s: i32 = dirs.iter().sum();
            var += prob * f64::from(s * s);
        }
        let w = WalkParams { p, delta_max: 1, tau, samples: 2 };
        assert!((w.exact_variance() - var).abs() < 1e-12);
    }

    #[test]
    fn simple_walk_variance() {
        let w = WalkParams { p: 0.5, delta_max: 1, tau: 100, samples: 20_000 };
        let r = validate_walk(&w, 9).unwrap();
        assert_eq!(r.predicted_variance, 100.0);
        // standard error of a variance estimate is about sqrt(2 / n)
        assert!(r.relative_error() < 5.0 * (2.0f64 / 20_000.0).sqrt());
    }

    #[test]
    fn ks_distance_of_exact_quantiles_is_small() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut xs: Vec<f64> = (0..1000).map(|i| normal.inverse_cdf((i as f64 + 0.5) / 1000.0)).collect();
        // inverse_cdf is accurate to about 1e-9, far below the 5e-4 spacing
        assert!((ks_to_normal(&mut xs, 0.0, 1.0).unwrap() - 0.5 / 1000.0).abs() < 1e-6);
        let mut same = vec![0.0; 10];
        assert!((ks_to_normal(&mut same, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn walk_params_validation() {
        assert!(WalkParams { p: 1.0, delta_max: 1, tau: 10, samples: 10 }.validate().is_err());
        assert!(WalkParams { p: 0.5, delta_max: 0, tau: 10, samples: 10 }.validate().is_err());
    }
}
