//! Finite Markov chains with per-state emission distributions, and the
//! two-state burst parameterization used for harvest and task arrivals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

/// Row-sum tolerance for stochastic matrices and emission distributions.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Arrival rate and mean burst length of a two-state on/off process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstParams {
    /// Long-run fraction of slots spent in the arrival state, in (0, 1).
    pub phi: f64,
    /// Mean run length of consecutive arrival slots, at least 1.
    pub b: f64,
}

impl BurstParams {
    pub fn new(phi: f64, b: f64) -> Result<Self> {
        let p = Self { phi, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "burst rate phi = {} must lie in (0, 1)",
                self.phi
            )));
        }
        if !(self.b >= 1.0) || !self.b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "burst length b = {} must be >= 1",
                self.b
            )));
        }
        let up = self.p_on();
        if up > 1.0 {
            return Err(Error::InvalidParameter(format!(
                "phi = {}, b = {} gives p(1|0) = {up} > 1",
                self.phi, self.b
            )));
        }
        Ok(())
    }

    /// p(0|1): leaving the arrival state.
    pub fn p_off(&self) -> f64 {
        1.0 / self.b
    }

    /// p(1|0): entering the arrival state.
    pub fn p_on(&self) -> f64 {
        self.phi / (self.b * (1.0 - self.phi))
    }
}

/// Row-stochastic transition matrix over `n_states` states, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain<T> {
    n_states: usize,
    transition: Vec<T>,
}

impl<T: Scalar> FiniteChain<T> {
    pub fn new(n_states: usize, transition: Vec<T>) -> Result<Self> {
        if n_states == 0 || transition.len() != n_states * n_states {
            return Err(Error::DimensionMismatch(format!(
                "{} transition entries for {n_states} states",
                transition.len()
            )));
        }
        let tol = T::tol(STOCHASTIC_TOL);
        for (i, row) in transition.chunks(n_states).enumerate() {
            if row.iter().any(|&p| !(p >= T::zero() && p <= T::one())) {
                return Err(Error::InvalidParameter(format!(
                    "row {i} has an entry outside [0, 1]"
                )));
            }
            let s: T = row.iter().copied().sum();
            if (s - T::one()).abs() > tol {
                return Err(Error::InvalidParameter(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { n_states, transition })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn prob(&self, from: usize, to: usize) -> T {
        self.transition[from * self.n_states + to]
    }

    pub fn row(&self, from: usize) -> &[T] {
        &self.transition[from * self.n_states..(from + 1) * self.n_states]
    }

    pub fn matrix(&self) -> &[T] {
        &self.transition
    }

    /// True when every state reaches every other along positive entries.
    pub fn is_irreducible(&self) -> bool {
        let n = self.n_states;
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    let p = if forward { self.prob(i, j) } else { self.prob(j, i) };
                    if p > T::zero() && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }
}

/// Two-state chain with state 1 as the arrival state.
pub fn build_burst_chain<T: Scalar>(params: &BurstParams) -> Result<FiniteChain<T>> {
    params.validate()?;
    let off = T::lit(params.p_off());
    let on = T::lit(params.p_on());
    FiniteChain::new(2, vec![T::one() - on, on, off, T::one() - off])
}

/// Stationary distribution by direct solve of `(P^T - I) pi = 0`, `sum pi = 1`.
pub fn stationary_distribution<T: Scalar>(chain: &FiniteChain<T>) -> Result<Vec<T>> {
    if !chain.is_irreducible() {
        return Err(Error::Reducible(format!(
            "{}-state chain has more than one communicating class",
            chain.n_states
        )));
    }
    linalg::stationary_dense(chain.matrix(), chain.n_states)
}

/// Per-state distribution over non-negative unit counts, stored as explicit
/// `(units, probability)` supports.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionDist<T> {
    per_state: Vec<Vec<(u32, T)>>,
}

impl<T: Scalar> EmissionDist<T> {
    pub fn new(per_state: Vec<Vec<(u32, T)>>) -> Result<Self> {
        if per_state.is_empty() {
            return Err(Error::DimensionMismatch("emission table has no states".into()));
        }
        let tol = T::tol(STOCHASTIC_TOL);
        let mut cleaned = Vec::with_capacity(per_state.len());
        for (s, mut support) in per_state.into_iter().enumerate() {
            if support.iter().any(|&(_, p)| !(p >= T::zero() && p <= T::one())) {
                return Err(Error::InvalidParameter(format!(
                    "emission probability outside [0, 1] in state {s}"
                )));
            }
            let total: T = support.iter().map(|&(_, p)| p).sum();
            if (total - T::one()).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "emissions of state {s} sum to {total}"
                )));
            }
            support.retain(|&(_, p)| p > T::zero());
            support.sort_by_key(|&(e, _)| e);
            if support.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate emission value in state {s}"
                )));
            }
            cleaned.push(support);
        }
        Ok(Self { per_state: cleaned })
    }

    /// Point masses: state `s` always emits `units[s]`.
    pub fn deterministic(units: &[u32]) -> Result<Self> {
        Self::new(units.iter().map(|&u| vec![(u, T::one())]).collect())
    }

    pub fn n_states(&self) -> usize {
        self.per_state.len()
    }

    /// Support of state `s` with positive probabilities, sorted by value.
    pub fn support(&self, state: usize) -> &[(u32, T)] {
        &self.per_state[state]
    }

    pub fn max_units(&self) -> u32 {
        self.per_state
            .iter()
            .flat_map(|s| s.iter().map(|&(e, _)| e))
            .max()
            .unwrap_or(0)
    }
}

pub fn expected_emission<T: Scalar>(dist: &EmissionDist<T>, state: usize) -> Result<T> {
    if state >= dist.n_states() {
        return Err(Error::OutOfRange { index: state, size: dist.n_states() });
    }
    Ok(dist.per_state[state]
        .iter()
        .map(|&(e, p)| T::from_u32(e).unwrap() * p)
        .sum())
}

/// A Markov-modulated source: a chain and the unit counts it emits per state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulatedSource<T> {
    pub chain: FiniteChain<T>,
    pub emission: EmissionDist<T>,
}

impl<T: Scalar> ModulatedSource<T> {
    pub fn new(chain: FiniteChain<T>, emission: EmissionDist<T>) -> Result<Self> {
        if chain.n_states() != emission.n_states() {
            return Err(Error::DimensionMismatch(format!(
                "chain has {} states but emission table has {}",
                chain.n_states(),
                emission.n_states()
            )));
        }
        Ok(Self { chain, emission })
    }

    /// Binary burst source: nothing in state 0, one unit in state 1.
    pub fn binary_burst(params: &BurstParams) -> Result<Self> {
        Self::new(build_burst_chain(params)?, EmissionDist::deterministic(&[0, 1])?)
    }

    pub fn n_states(&self) -> usize {
        self.chain.n_states()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn harvest_reference_chain() {
        let c: FiniteChain<f64> = build_burst_chain(&BurstParams::new(0.9, 10.0).unwrap()).unwrap();
        assert!((c.prob(1, 0) - 0.1).abs() < 1e-15);
        assert!((c.prob(0, 1) - 0.9).abs() < 1e-15);
        assert!((c.prob(0, 0) - 0.1).abs() < 1e-15);
        assert!((c.prob(1, 1) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn load_reference_chain() {
        let c: FiniteChain<f64> = build_burst_chain(&BurstParams::new(0.8, 12.0).unwrap()).unwrap();
        assert!((c.prob(1, 0) - 1.0 / 12.0).abs() < 1e-15);
        assert!((c.prob(0, 1) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unit_burst_alternates() {
        let c: FiniteChain<f64> = build_burst_chain(&BurstParams::new(0.5, 1.0).unwrap()).unwrap();
        assert_eq!(c.matrix(), &[0.0, 1.0, 1.0, 0.0]);
        let pi = stationary_distribution(&c).unwrap();
        assert!((pi[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_entry_probability_above_one() {
        // phi / (b (1 - phi)) = 0.9 / 0.1 = 9
        let err = BurstParams::new(0.9, 1.0).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
        assert!(BurstParams::new(0.0, 2.0).is_err());
        assert!(BurstParams::new(1.0, 2.0).is_err());
        assert!(BurstParams::new(0.5, 0.5).is_err());
        assert!(BurstParams::new(0.5, f64::NAN).is_err());
    }

    #[test]
    fn stationary_matches_rate() {
        for (phi, b) in [(0.9, 10.0), (0.8, 12.0)] {
            let c: FiniteChain<f64> = build_burst_chain(&BurstParams::new(phi, b).unwrap()).unwrap();
            let pi = stationary_distribution(&c).unwrap();
            assert!((pi[1] - phi).abs() < 1e-12, "{pi:?}");
        }
    }

    #[test]
    fn identity_chain_is_reducible() {
        let c = FiniteChain::new(2, vec![1.0f64, 0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(stationary_distribution(&c), Err(Error::Reducible(_))));
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        assert!(FiniteChain::new(2, vec![0.5f64, 0.4, 0.0, 1.0]).is_err());
        assert!(FiniteChain::new(2, vec![1.5f64, -0.5, 0.0, 1.0]).is_err());
        assert!(FiniteChain::new(2, vec![1.0f64, 0.0, 0.0]).is_err());
    }

    #[test]
    fn f32_chain() {
        let c: FiniteChain<f32> = build_burst_chain(&BurstParams::new(0.8, 12.0).unwrap()).unwrap();
        let pi = stationary_distribution(&c).unwrap();
        assert!((pi[1] - 0.8).abs() < 1e-5);
    }

    #[test]
    fn emission_moments() {
        let harvest = EmissionDist::<f64>::deterministic(&[0, 1]).unwrap();
        assert_eq!(expected_emission(&harvest, 1).unwrap(), 1.0);
        assert_eq!(expected_emission(&harvest, 0).unwrap(), 0.0);
        let spread = EmissionDist::new(vec![vec![(0, 0.5f64), (2, 0.5)]]).unwrap();
        assert_eq!(expected_emission(&spread, 0).unwrap(), 1.0);
        assert!(matches!(
            expected_emission(&spread, 3),
            Err(Error::OutOfRange { index: 3, size: 1 })
        ));
    }

    #[test]
    fn emission_validation() {
        assert!(EmissionDist::new(vec![vec![(0, 0.5f64), (1, 0.4)]]).is_err());
        assert!(EmissionDist::new(vec![vec![(1, 0.5f64), (1, 0.5)]]).is_err());
        assert!(EmissionDist::<f64>::new(vec![]).is_err());
    }

    fn valid_burst() -> impl Strategy<Value = BurstParams> {
        (0.01f64..0.99, 1.0f64..50.0).prop_filter_map("p(1|0) <= 1", |(phi, b)| {
            BurstParams::new(phi, b).ok()
        })
    }

    proptest! {
        #[test]
        fn burst_rows_stochastic_and_stationary(p in valid_burst()) {
            let c: FiniteChain<f64> = build_burst_chain(&p).unwrap();
            for s in 0..2 {
                let sum: f64 = c.row(s).iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12);
            }
            let pi = stationary_distribution(&c).unwrap();
            prop_assert!((pi[1] - p.phi).abs() <= 1e-12);
            for j in 0..2 {
                let back: f64 = (0..2).map(|i| pi[i] * c.prob(i, j)).sum();
                prop_assert!((back - pi[j]).abs() <= 1e-12);
            }
        }
    }
}
