//! Risk-averse stochastic finite-state controllers (FSCs) for partially
//! observable Markov decision processes.
//!
//! The crate synthesizes FSCs under dynamic coherent risk objectives
//! (expectation or CVaR) with bounded policy iteration:
//!
//! * [`lp`] is a dense simplex solver with dual extraction.
//! * [`pomdp`] holds the model, belief updates, the text model format and the
//!   grid-world benchmark generator.
//! * [`risk`] implements the one-step risk maps and nested evaluation.
//! * [`fsc`] builds the global Markov chain a controller induces on a POMDP.
//! * [`eval`], [`improve`], [`escape`] and [`bpi`] are the evaluation,
//!   node-improvement, node-addition and outer-loop stages.
//! * [`oracle`] is brute-force ground truth for small instances.
//! * [`sim`] runs Monte-Carlo rollouts and perturbed scenario studies.
//! * [`cli`] is the command-line front end.

pub mod bpi;
pub mod cli;
pub mod error;
pub mod escape;
pub mod eval;
pub mod fsc;
pub mod improve;
pub mod lp;
pub mod oracle;
pub mod pomdp;
pub mod risk;
pub mod sim;

pub use error::{Error, Result};
pub use fsc::{Fsc, GlobalChain};
pub use pomdp::{Belief, Pomdp};
pub use risk::{DiscreteDistribution, RiskSpec};
