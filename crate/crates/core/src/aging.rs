//! Battery degradation scoring and the per-(state, action) costs that turn
//! aging metrics into long-run averages over the controlled chain.
//!
//! Four constraint costs are produced for every pair `(z, a)`:
//!
//! | k | quantity                    | cost `d^k(z, a)`                                   |
//! |---|-----------------------------|----------------------------------------------------|
//! | 1 | mean charge                 | `q`                                                |
//! | 2 | cycle rate                  | `(a' + E[e | h]) / (2 q_nom)`                      |
//! | 3 | mean step amplitude         | `E[ |q' - q| ]` under the kernel                   |
//! | 4 | phase persistence           | `P(q' != q and lambda' == lambda)` under the kernel |
//!
//! `a'` is the energy actually drawn, `min(a, q)` under coupled service.
//! Costs 3 and 4 are kernel expectations, so their stationary averages equal
//! the long-run slot averages of `|Delta|` and of the persistence indicator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::expected_emission;
use crate::model::{Kernel, SystemModel};
use crate::scalar::Scalar;

pub const N_CONSTRAINTS: usize = 4;
pub const CONSTRAINT_NAMES: [&str; N_CONSTRAINTS] = ["charge", "cycle_rate", "amplitude", "persistence"];

/// Constants of the closed-form degradation model. The values shipped in
/// `configs/` are illustrative, not fitted to any physical cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryConstants {
    #[serde(rename = "a")]
    pub a_coef: f64,
    #[serde(rename = "b")]
    pub b_coef: f64,
    #[serde(rename = "c")]
    pub c_coef: f64,
    #[serde(rename = "d")]
    pub d_coef: f64,
    /// Shelf life in slots.
    pub t_life: f64,
    /// Nominal capacity in energy units.
    pub q_nom: f64,
}

impl BatteryConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_life > 0.0) || !(self.q_nom > 0.0) {
            return Err(Error::InvalidParameter("t_life and q_nom must be positive".into()));
        }
        let all = [self.a_coef, self.b_coef, self.c_coef, self.d_coef, self.t_life, self.q_nom];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("battery constants must be finite".into()));
        }
        Ok(())
    }
}

fn default_true() -> bool {
    true
}

/// Upper bounds on the four average aging costs. `None` drops the
/// corresponding constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgingBounds {
    #[serde(default)]
    pub charge: Option<f64>,
    #[serde(default)]
    pub cycle_rate: Option<f64>,
    #[serde(default)]
    pub amplitude: Option<f64>,
    #[serde(default)]
    pub persistence: Option<f64>,
    /// Divide the cycle cost by `2 q_nom` so `cycle_rate` is in cycles per slot.
    #[serde(default = "default_true")]
    pub normalize_cycle_rate: bool,
}

impl Default for AgingBounds {
    fn default() -> Self {
        Self::unconstrained()
    }
}

impl AgingBounds {
    pub fn unconstrained() -> Self {
        Self { charge: None, cycle_rate: None, amplitude: None, persistence: None, normalize_cycle_rate: true }
    }

    /// Bounds indexed by constraint, `+inf` where absent.
    pub fn as_array(&self) -> [f64; N_CONSTRAINTS] {
        [self.charge, self.cycle_rate, self.amplitude, self.persistence].map(|b| b.unwrap_or(f64::INFINITY))
    }

    pub fn from_array(values: [f64; N_CONSTRAINTS], normalize_cycle_rate: bool) -> Self {
        let f = |v: f64| if v.is_finite() { Some(v) } else { None };
        Self {
            charge: f(values[0]),
            cycle_rate: f(values[1]),
            amplitude: f(values[2]),
            persistence: f(values[3]),
            normalize_cycle_rate,
        }
    }

    pub fn is_unconstrained(&self) -> bool {
        self.as_array().iter().all(|b| b.is_infinite())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, b) in CONSTRAINT_NAMES.iter().zip(self.as_array()) {
            if b.is_nan() || b == f64::NEG_INFINITY {
                return Err(Error::InvalidParameter(format!("bound `{name}` is not a number")));
            }
        }
        if let Some(p) = self.persistence {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("persistence bound {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Convex penalty applied to the smoothed backlog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Objective {
    #[default]
    Square,
    Linear,
    Power {
        exponent: f64,
    },
}

impl Objective {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Objective::Power { exponent } if !(exponent >= 1.0) => Err(Error::InvalidParameter(format!(
                "objective exponent {exponent} is not convex"
            ))),
            _ => Ok(()),
        }
    }

    pub fn apply(&self, y: f64) -> f64 {
        match *self {
            Objective::Square => y * y,
            Objective::Linear => y,
            Objective::Power { exponent } => y.powf(exponent),
        }
    }
}

/// Objective `c(z, a)` and constraint costs `d^k(z, a)`, indexed `z * n_actions + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec<T> {
    pub n_states: usize,
    pub n_actions: usize,
    pub objective: Vec<T>,
    pub constraints: [Vec<T>; N_CONSTRAINTS],
}

impl<T: Scalar> CostSpec<T> {
    pub fn objective_at(&self, z: usize, a: usize) -> T {
        self.objective[z * self.n_actions + a]
    }

    pub fn constraint_at(&self, k: usize, z: usize, a: usize) -> T {
        self.constraints[k][z * self.n_actions + a]
    }

    pub fn validate_for(&self, kernel: &Kernel<T>) -> Result<()> {
        let n = kernel.n_states() * kernel.n_actions();
        if self.n_states != kernel.n_states()
            || self.n_actions != kernel.n_actions()
            || self.objective.len() != n
            || self.constraints.iter().any(|d| d.len() != n)
        {
            return Err(Error::DimensionMismatch(format!(
                "costs sized for {}x{}, kernel is {}x{}",
                self.n_states,
                self.n_actions,
                kernel.n_states(),
                kernel.n_actions()
            )));
        }
        Ok(())
    }
}

/// `f(y)` at the grid value of the state's smoothed backlog.
pub fn objective_cost<T: Scalar>(model: &SystemModel<T>, z: usize, objective: &Objective) -> T {
    let s = model.space().state_of(z);
    T::lit(objective.apply(model.grid().value(s.y_idx)))
}

pub fn constraint_costs<T: Scalar>(
    model: &SystemModel<T>,
    kernel: &Kernel<T>,
    z: usize,
    a_idx: usize,
    q_nom: f64,
    normalize_cycle_rate: bool,
) -> Result<[T; N_CONSTRAINTS]> {
    let space = model.space();
    let s = space.state_of(z);
    let a = T::from_u32(model.config.drawn(s.q, model.config.actions[a_idx])).unwrap();
    let mean_e = expected_emission(&model.harvest.emission, s.h)?;
    let scale = if normalize_cycle_rate { T::lit(2.0 * q_nom) } else { T::one() };
    let q = T::from_u32(s.q).unwrap();
    let mut amplitude = T::zero();
    let mut persistence = T::zero();
    for (j, p) in kernel.iter_row(z, a_idx) {
        let t = space.state_of(j);
        if t.q != s.q {
            amplitude += p * T::from_u32(t.q.abs_diff(s.q)).unwrap();
            if t.lam == s.lam {
                persistence += p;
            }
        }
    }
    Ok([q, (a + mean_e) / scale, amplitude, persistence])
}

pub fn build_costs<T: Scalar>(
    model: &SystemModel<T>,
    kernel: &Kernel<T>,
    objective: &Objective,
    q_nom: f64,
    normalize_cycle_rate: bool,
) -> Result<CostSpec<T>> {
    let (n, m) = (kernel.n_states(), kernel.n_actions());
    if n != model.space().len() || m != model.n_actions() {
        return Err(Error::DimensionMismatch("kernel does not match system model".into()));
    }
    let mut obj = Vec::with_capacity(n * m);
    let mut cons: [Vec<T>; N_CONSTRAINTS] = Default::default();
    for z in 0..n {
        let f = objective_cost(model, z, objective);
        for a in 0..m {
            obj.push(f);
            for (k, v) in constraint_costs(model, kernel, z, a, q_nom, normalize_cycle_rate)?.into_iter().enumerate() {
                cons[k].push(v);
            }
        }
    }
    Ok(CostSpec { n_states: n, n_actions: m, objective: obj, constraints: cons })
}

/// Intermediate and final values of the degradation model over one trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Degradation<T> {
    pub soc_avg: T,
    pub soc_dev: T,
    pub n_cyc: T,
    /// Cycle plus calendar term before the SoC-level stress factor.
    pub base: T,
    pub degradation: T,
}

/// Scores a trace of normalized SoC values and per-slot throughput
/// `|A| + |E|` (energy units). The horizon is the trace length in slots.
pub fn degrade_trace<T: Scalar>(soc: &[T], throughput: &[T], constants: &BatteryConstants) -> Result<Degradation<T>> {
    if soc.len() < 2 {
        return Err(Error::EmptyTrace);
    }
    if soc.len() != throughput.len() {
        return Err(Error::LengthMismatch(format!(
            "{} SoC samples vs {} throughput samples",
            soc.len(),
            throughput.len()
        )));
    }
    if soc.iter().any(|&s| !(s >= T::zero() && s <= T::one())) {
        return Err(Error::InvalidParameter("SoC samples must lie in [0, 1]".into()));
    }
    constants.validate()?;
    let len = T::of_usize(soc.len());
    let soc_avg = soc.iter().copied().sum::<T>() / len;
    let var = soc.iter().map(|&s| (s - soc_avg) * (s - soc_avg)).sum::<T>() / len;
    let soc_dev = T::lit(2.0) * (T::lit(3.0) * var).sqrt();
    let n_cyc = throughput.iter().copied().sum::<T>() / T::lit(2.0 * constants.q_nom);
    let k = |v: f64| T::lit(v);
    let base = k(constants.a_coef) * n_cyc * ((soc_dev - T::one()) * k(constants.b_coef)).exp()
        + k(0.2) * len / k(constants.t_life);
    let degradation = base * k(constants.c_coef) * (k(constants.d_coef) * (soc_avg - k(0.5))).exp();
    Ok(Degradation { soc_avg, soc_dev, n_cyc, base, degradation })
}

/// Slot-level aging metrics of an integer charge trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteMetrics {
    pub q_mu: f64,
    pub q_sigma2: f64,
    pub n_cyc: f64,
    /// Mean `|Delta|` over the `T - 1` charge changes.
    pub delta_bar: f64,
    /// Share of changes that continue the direction of the last non-zero
    /// change; flat slots score 0.
    pub v_bar: f64,
}

pub fn discrete_metrics(q: &[u32], a: &[u32], e: &[u32], q_nom: f64) -> Result<DiscreteMetrics> {
    if q.len() < 2 {
        return Err(Error::EmptyTrace);
    }
    if a.len() != q.len() || e.len() != q.len() {
        return Err(Error::LengthMismatch(format!(
            "charge {} / action {} / harvest {} samples",
            q.len(),
            a.len(),
            e.len()
        )));
    }
    let t = q.len() as f64;
    let q_mu = q.iter().map(|&x| x as f64).sum::<f64>() / t;
    let q_sigma2 = q.iter().map(|&x| (x as f64 - q_mu).powi(2)).sum::<f64>() / t;
    let n_cyc = a.iter().zip(e).map(|(&a, &e)| (a + e) as f64).sum::<f64>() / (2.0 * q_nom);
    let deltas: Vec<i64> = q.windows(2).map(|w| w[1] as i64 - w[0] as i64).collect();
    let delta_bar = deltas.iter().map(|d| d.unsigned_abs() as f64).sum::<f64>() / deltas.len() as f64;
    let mut same = 0usize;
    let mut last_sign = deltas[0].signum();
    for &d in &deltas[1..] {
        let s = d.signum();
        if s != 0 {
            if s == last_sign {
                same += 1;
            }
            last_sign = s;
        }
    }
    let pairs = deltas.len() - 1;
    let v_bar = if pairs == 0 { 0.0 } else { same as f64 / pairs as f64 };
    Ok(DiscreteMetrics { q_mu, q_sigma2, n_cyc, delta_bar, v_bar })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{BurstParams, ModulatedSource};
    use crate::model::{build_kernel, SystemConfig, SystemState};
    use proptest::prelude::*;

    fn constants(a: f64, b: f64, c: f64, d: f64) -> BatteryConstants {
        BatteryConstants { a_coef: a, b_coef: b, c_coef: c, d_coef: d, t_life: 1e5, q_nom: 8.0 }
    }

    fn reference_model() -> SystemModel<f64> {
        SystemModel::new(
            SystemConfig::reference(),
            ModulatedSource::binary_burst(&BurstParams::new(0.9, 10.0).unwrap()).unwrap(),
            ModulatedSource::binary_burst(&BurstParams::new(0.8, 12.0).unwrap()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn square_objective() {
        let m = reference_model();
        let sp = m.space();
        let at = |y_idx| sp.index(&SystemState { y_idx, ..Default::default() });
        assert_eq!(objective_cost(&m, at(0), &Objective::Square), 0.0);
        assert_eq!(objective_cost(&m, at(3), &Objective::Square), 9.0);
        assert_eq!(objective_cost(&m, at(8), &Objective::Square), 64.0);
        assert_eq!(objective_cost(&m, at(3), &Objective::Linear), 3.0);
        assert!(Objective::Power { exponent: 0.5 }.validate().is_err());
    }

    #[test]
    fn reference_constraint_costs() {
        let m = reference_model();
        let k = build_kernel(&m).unwrap();
        let sp = m.space();
        let z = sp.index(&SystemState { q: 5, ..Default::default() });
        for a in 0..2 {
            assert_eq!(constraint_costs(&m, &k, z, a, 8.0, true).unwrap()[0], 5.0);
        }
        let z = sp.index(&SystemState { h: 1, q: 3, ..Default::default() });
        let d = constraint_costs(&m, &k, z, 1, 8.0, true).unwrap();
        assert!((d[1] - 0.125).abs() < 1e-15);
        let raw = constraint_costs(&m, &k, z, 1, 8.0, false).unwrap();
        assert_eq!(raw[1], 2.0);
        // q=3, a=1, e=1 leaves the charge unchanged
        assert_eq!(d[2], 0.0);
        assert_eq!(d[3], 0.0);
        // an empty battery delivers nothing under coupled service
        let z = sp.index(&SystemState { h: 1, q: 0, ..Default::default() });
        let d = constraint_costs(&m, &k, z, 1, 8.0, false).unwrap();
        assert_eq!(d[1], 1.0);
    }

    #[test]
    fn idle_without_harvest_has_no_movement() {
        let m = reference_model();
        let k = build_kernel(&m).unwrap();
        let sp = m.space();
        for lam in 0..2 {
            let z = sp.index(&SystemState { q: 4, lam, ..Default::default() });
            let d = constraint_costs(&m, &k, z, 0, 8.0, true).unwrap();
            assert_eq!(d[2], 0.0);
            assert_eq!(d[3], 0.0);
        }
        // discharging from a discharging phase persists, from charging it does not
        let down = |lam| sp.index(&SystemState { q: 4, lam, ..Default::default() });
        assert!((constraint_costs(&m, &k, down(0), 1, 8.0, true).unwrap()[3] - 1.0).abs() < 1e-15);
        assert_eq!(constraint_costs(&m, &k, down(1), 1, 8.0, true).unwrap()[3], 0.0);
    }

    #[test]
    fn cost_ranges() {
        let m = reference_model();
        let k = build_kernel(&m).unwrap();
        let c = build_costs(&m, &k, &Objective::Square, 8.0, true).unwrap();
        assert!(c.objective.iter().all(|&v| v >= 0.0));
        assert!(c.constraints[0].iter().all(|&v| (0.0..=8.0).contains(&v)));
        assert!(c.constraints[3].iter().all(|&v| (0.0..=1.0).contains(&v)));
        c.validate_for(&k).unwrap();
    }

    #[test]
    fn degradation_closed_forms() {
        let soc = [0.2f64, 0.4, 0.9, 0.5];
        let thr = [1.0f64, 2.0, 0.0, 1.0];
        let no_stress = degrade_trace(&soc, &thr, &constants(0.7, 2.0, 1.0, 0.0)).unwrap();
        assert!((no_stress.degradation - no_stress.base).abs() < 1e-15);

        // constant half-charged trace: only calendar aging, 0.2 T / T_life
        let flat = degrade_trace(&[0.5f64; 10], &[0.0; 10], &constants(1.0, 1.0, 1.0, 1.0)).unwrap();
        assert_eq!(flat.soc_avg, 0.5);
        assert_eq!(flat.soc_dev, 0.0);
        assert_eq!(flat.n_cyc, 0.0);
        assert!((flat.degradation - 0.2 * 10.0 / 1e5).abs() < 1e-20);
    }

    #[test]
    fn unit_deviation_drops_cycle_exponent() {
        // 0.5 +- 1/(2 sqrt 3) has variance 1/12, so SoC_dev = 1
        let h = 0.5 / 3f64.sqrt();
        let soc = [0.5 - h, 0.5 + h];
        let r = degrade_trace(&soc, &[3.0, 5.0], &constants(1.0, 4.0, 1.0, 0.0)).unwrap();
        assert!((r.soc_dev - 1.0).abs() < 1e-12);
        assert!((r.base - (r.n_cyc + 0.2 * 2.0 / 1e5)).abs() < 1e-12);
        assert_eq!(r.n_cyc, 0.5);
    }

    #[test]
    fn degradation_input_errors() {
        let c = constants(1.0, 1.0, 1.0, 1.0);
        assert!(matches!(degrade_trace::<f64>(&[], &[], &c), Err(Error::EmptyTrace)));
        assert!(matches!(degrade_trace(&[0.1f64, 0.2], &[0.0], &c), Err(Error::LengthMismatch(_))));
        assert!(degrade_trace(&[0.1f64, 1.2], &[0.0, 0.0], &c).is_err());
    }

    #[test]
    fn metrics_examples() {
        let z = [0u32; 5];
        let flat = discrete_metrics(&[3, 3, 3, 3, 3], &z, &z, 8.0).unwrap();
        assert_eq!(flat.q_sigma2, 0.0);
        assert_eq!(flat.delta_bar, 0.0);
        assert_eq!(flat.v_bar, 0.0);

        let ramp = discrete_metrics(&[0, 1, 2, 3, 4], &z, &[1, 1, 1, 1, 0], 8.0).unwrap();
        assert_eq!(ramp.delta_bar, 1.0);
        assert_eq!(ramp.v_bar, 1.0);
        assert_eq!(ramp.q_mu, 2.0);
        assert_eq!(ramp.q_sigma2, 2.0);
        assert_eq!(ramp.n_cyc, 4.0 / 16.0);

        let alt = discrete_metrics(&[2, 3, 2, 3, 2], &z, &z, 8.0).unwrap();
        assert_eq!(alt.v_bar, 0.0);
        assert_eq!(alt.delta_bar, 1.0);

        // flat slots neither score nor reset the retained direction
        let gap = discrete_metrics(&[0, 1, 1, 2, 2], &z, &z, 8.0).unwrap();
        assert!((gap.v_bar - 1.0 / 3.0).abs() < 1e-15);
        assert!(discrete_metrics(&[1, 2], &[0], &[0, 0], 8.0).is_err());
    }

    #[test]
    fn bounds_roundtrip_and_validation() {
        let b = AgingBounds { charge: Some(2.0), amplitude: Some(0.3), ..AgingBounds::unconstrained() };
        assert_eq!(AgingBounds::from_array(b.as_array(), true), b);
        assert!(AgingBounds::unconstrained().is_unconstrained());
        let bad = AgingBounds { persistence: Some(1.5), ..AgingBounds::unconstrained() };
        assert!(bad.validate().is_err());
    }

    fn soc_trace() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.1f64..0.6, 2..40)
    }

    proptest! {
        #[test]
        fn increasing_in_average_soc(trace in soc_trace(), shift in 0.01f64..0.4, thr in 0.0f64..3.0) {
            let c = constants(1e-3, 1.5, 1.0, 2.0);
            let throughput = vec![thr; trace.len()];
            let shifted: Vec<f64> = trace.iter().map(|s| s + shift).collect();
            let lo = degrade_trace(&trace, &throughput, &c).unwrap();
            let hi = degrade_trace(&shifted, &throughput, &c).unwrap();
            prop_assert!(hi.degradation > lo.degradation);
        }

        #[test]
        fn increasing_in_soc_deviation(trace in prop::collection::vec(0.3f64..0.7, 2..40), gain in 1.05f64..1.6, thr in 0.5f64..3.0) {
            let c = constants(1e-3, 1.5, 1.0, 2.0);
            let throughput = vec![thr; trace.len()];
            let mean = trace.iter().sum::<f64>() / trace.len() as f64;
            prop_assume!(trace.iter().any(|&s| (s - mean).abs() > 1e-6));
            let wide: Vec<f64> = trace.iter().map(|s| mean + gain * (s - mean)).collect();
            let lo = degrade_trace(&trace, &throughput, &c).unwrap();
            let hi = degrade_trace(&wide, &throughput, &c).unwrap();
            prop_assert!(hi.degradation > lo.degradation);
        }

        #[test]
        fn zero_throughput_is_calendar_aging(trace in soc_trace(), d in -3.0f64..3.0) {
            let c = constants(0.5, 1.0, 1.3, d);
            let r = degrade_trace(&trace, &vec![0.0; trace.len()], &c).unwrap();
            let expected = 0.2 * c.c_coef * (d * (r.soc_avg - 0.5)).exp() * trace.len() as f64 / c.t_life;
            prop_assert!((r.degradation - expected).abs() <= 1e-15 * expected.max(1.0));
        }
    }
}
