//! Aging-aware control of energy harvesting systems.
//!
//! The harvest source, battery, and task queue are composed into a finite
//! controlled Markov chain ([`model`]). Battery aging metrics are expressed
//! as average costs over state-action pairs ([`aging`]), the constrained
//! average-cost problem is solved as a linear program over occupation
//! measures ([`cmdp`], [`lp`]), and resulting policies are checked by Monte
//! Carlo rollout ([`sim`]).
//!
//! Numeric types are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix `f64`, which is what the experiment drivers use.

pub mod aging;
pub mod cmdp;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod lp;
pub mod markov;
pub mod model;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Chain = markov::FiniteChain<f64>;
pub type Source = markov::ModulatedSource<f64>;
pub type System = model::SystemModel<f64>;
pub type Kernel = model::Kernel<f64>;
pub type Costs = aging::CostSpec<f64>;
pub type LinearProgram = lp::LpProblem<f64>;
pub type LinearProgramSolution = lp::LpSolution<f64>;
pub type Policy = cmdp::Policy<f64>;
pub type OccupationMeasure = cmdp::OccupationMeasure<f64>;
