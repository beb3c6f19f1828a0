//! Experiment configuration and the solve / simulate pipeline shared by the
//! command-line driver and the acceptance suite.
//!
//! Configs are JSON5 documents. Parsing goes through a JSON value first so
//! that type errors name the offending key path.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aging::{build_costs, AgingBounds, BatteryConstants, CostSpec, Objective, N_CONSTRAINTS};
use crate::cmdp::{evaluate_policy, solve_cmdp, CmdpSolution, Policy, PolicyCosts};
use crate::error::{Error, Result};
use crate::markov::{build_burst_chain, BurstParams, EmissionDist, ModulatedSource};
use crate::model::{build_kernel, Kernel, SystemConfig, SystemModel, SystemState};
use crate::sim::{simulate_runs, SimOptions, TraceStats};

/// A burst source and, optionally, its per-state emission table as
/// `[[units, probability], ...]` lists. The default emits nothing in state
/// 0 and one unit in state 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub phi: f64,
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emissions: Option<Vec<Vec<(u32, f64)>>>,
}

impl SourceConfig {
    pub fn burst(phi: f64, b: f64) -> Self {
        Self { phi, b, emissions: None }
    }

    pub fn build(&self) -> Result<ModulatedSource<f64>> {
        let params = BurstParams::new(self.phi, self.b)?;
        let emission = match &self.emissions {
            Some(table) => EmissionDist::new(table.clone())?,
            None => EmissionDist::deterministic(&[0, 1])?,
        };
        ModulatedSource::new(build_burst_chain::<f64>(&params)?, emission)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Slots per run.
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { horizon: 10_000, runs: 1000, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub harvest: SourceConfig,
    pub load: SourceConfig,
    pub battery: BatteryConstants,
    #[serde(default)]
    pub bounds: AgingBounds,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parameters a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    PhiL,
    BL,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phi_l" => Ok(Self::PhiL),
            "b_l" => Ok(Self::BL),
            _ => Err(Error::InvalidParameter(format!("unknown sweep parameter `{s}` (expected phi_l or b_l)"))),
        }
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::PhiL => "phi_l",
            Self::BL => "b_l",
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            json5::from_str(text).map_err(|e| Error::Config { path: "<document>".into(), message: e.to_string() })?;
        let cfg: Self = serde_path_to_error::deserialize(value).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let at = |path: &str| {
            let path = path.to_string();
            move |e: Error| Error::Config { path: path.clone(), message: e.to_string() }
        };
        self.system.validate().map_err(at("system"))?;
        self.harvest.build().map_err(at("harvest"))?;
        self.load.build().map_err(at("load"))?;
        self.battery.validate().map_err(at("battery"))?;
        self.bounds.validate().map_err(at("bounds"))?;
        self.objective.validate().map_err(at("objective"))?;
        if self.simulation.horizon == 0 {
            return Err(Error::Config { path: "simulation.horizon".into(), message: "must be positive".into() });
        }
        Ok(())
    }

    /// Hex SHA-256 of everything that shapes the model and the policy
    /// (simulation settings and the output directory are excluded).
    pub fn hash(&self) -> String {
        let keyed = serde_json::json!({
            "system": self.system,
            "harvest": self.harvest,
            "load": self.load,
            "battery": self.battery,
            "bounds": self.bounds,
            "objective": self.objective,
        });
        sha256_hex(keyed.to_string().as_bytes())
    }

    /// Short form of [`ExperimentConfig::hash`] for CSV columns.
    pub fn short_hash(&self) -> String {
        self.hash()[..16].to_string()
    }

    pub fn with_param(&self, param: SweepParam, value: f64) -> Self {
        let mut c = self.clone();
        match param {
            SweepParam::PhiL => c.load.phi = value,
            SweepParam::BL => c.load.b = value,
        }
        c
    }

    /// The same configuration with every bound dropped.
    pub fn unconstrained(&self) -> Self {
        let mut c = self.clone();
        c.bounds = AgingBounds { normalize_cycle_rate: self.bounds.normalize_cycle_rate, ..AgingBounds::unconstrained() };
        c
    }
}

/// Model, kernel and costs of one configuration.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: SystemModel<f64>,
    pub kernel: Kernel<f64>,
    pub costs: CostSpec<f64>,
}

/// A solved configuration, evaluated analytically from `start`.
#[derive(Debug, Clone)]
pub struct SolvedPolicy {
    pub solution: CmdpSolution<f64>,
    pub evaluation: PolicyCosts<f64>,
    /// State with the largest occupation mass; it lies in the recurrent
    /// class of the solution and is used to start evaluation and rollouts.
    pub start: usize,
    /// Whether the all-zero state reaches the same recurrent class.
    pub zero_state_reaches_class: bool,
    /// Whether the policy evaluated from `start` reproduces the LP's
    /// objective and constraint averages. It fails when the optimal
    /// occupation measure spreads over several closed classes of the
    /// extracted policy, so no single start state realizes the LP value.
    pub single_class: bool,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let model = SystemModel::new(config.system.clone(), config.harvest.build()?, config.load.build()?)?;
        let kernel = build_kernel(&model)?;
        let costs =
            build_costs(&model, &kernel, &config.objective, config.battery.q_nom, config.bounds.normalize_cycle_rate)?;
        Ok(Self { config, model, kernel, costs })
    }

    pub fn solve(&self) -> Result<SolvedPolicy> {
        self.solve_with_bounds(&self.config.bounds)
    }

    pub fn solve_with_bounds(&self, bounds: &AgingBounds) -> Result<SolvedPolicy> {
        let idle = self.model.config.idle_action();
        let solution = solve_cmdp(&self.kernel, &self.costs, bounds, idle)?;
        let x = &solution.occupation;
        let start = (0..x.n_states)
            .max_by(|&a, &b| x.state_mass(a).total_cmp(&x.state_mass(b)).then(b.cmp(&a)))
            .unwrap_or(0);
        let evaluation = evaluate_policy(&solution.policy, &self.kernel, &self.costs, start)?;
        let zero = self.model.space().index(&SystemState::default());
        let zero_state_reaches_class = evaluate_policy(&solution.policy, &self.kernel, &self.costs, zero)
            .map(|e| e.recurrent_states == evaluation.recurrent_states && e.stationary[start] > 0.0)
            .unwrap_or(false);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0);
        let single_class = close(evaluation.objective, solution.objective)
            && (0..N_CONSTRAINTS).all(|k| close(evaluation.constraints[k], solution.diagnostics.achieved[k]));
        Ok(SolvedPolicy { solution, evaluation, start, zero_state_reaches_class, single_class })
    }

    /// Rollouts on streams `0..runs` with the configured seed and horizon
    /// unless overridden in `opts`.
    pub fn simulate(&self, policy: &Policy<f64>, start: usize, runs: usize, opts: Option<SimOptions>) -> Result<Vec<TraceStats>> {
        let sim = &self.config.simulation;
        let mut o = opts.unwrap_or_else(|| SimOptions::new(sim.horizon, sim.seed));
        o.initial = self.model.space().state_of(start);
        simulate_runs(&self.model, policy, &self.config.battery, &self.config.objective, &o, runs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        // comments and trailing commas are accepted
        system: { q_max: 4, w_max: 4, y_levels: 5, theta: 0.1, actions: [0, 1] },
        harvest: { phi: 0.9, b: 10 },
        load: { phi: 0.5, b: 4 },
        battery: { a: 1, b: 1, c: 1, d: 1, t_life: 1e6, q_nom: 4 },
        bounds: { amplitude: 0.2 },
    }"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.simulation, SimulationConfig::default());
        assert_eq!(c.bounds.amplitude, Some(0.2));
        assert!(c.bounds.charge.is_none());
        assert!(c.bounds.normalize_cycle_rate);
        assert_eq!(c.objective, Objective::Square);
    }

    #[test]
    fn errors_name_the_key() {
        let bad = MINIMAL.replace("theta: 0.1", "theta: \"x\"");
        match ExperimentConfig::parse(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "system.theta"),
            other => panic!("unexpected {other:?}"),
        }
        let unknown = MINIMAL.replace("b: 4 }", "b: 4, rate: 2 }");
        match ExperimentConfig::parse(&unknown) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "load.rate");
                assert!(message.contains("rate"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let invalid = MINIMAL.replace("phi: 0.5", "phi: 1.5");
        assert!(matches!(ExperimentConfig::parse(&invalid), Err(Error::Config { path, .. }) if path == "load"));
    }

    #[test]
    fn hash_ignores_simulation_settings() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        let mut d = c.clone();
        d.simulation.seed = 99;
        d.output_dir = Some("elsewhere".into());
        assert_eq!(c.hash(), d.hash());
        assert_ne!(c.hash(), c.with_param(SweepParam::PhiL, 0.6).hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn small_experiment_solves_and_simulates() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        let ex = Experiment::new(c).unwrap();
        let s = ex.solve().unwrap();
        assert!(s.single_class);
        assert!((s.evaluation.objective - s.solution.objective).abs() < 1e-6);
        assert!(s.evaluation.constraints[2] <= 0.2 + 1e-6);
        let stats = ex.simulate(&s.solution.policy, s.start, 2, Some(SimOptions::new(5000, 3))).unwrap();
        assert_eq!(stats.len(), 2);
        assert_ne!(stats[0], stats[1]);
    }
}
