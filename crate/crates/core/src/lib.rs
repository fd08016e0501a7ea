//! Incremental adaptive dynamic programming (IADP).
//!
//! A model-free, input-saturated optimal regulator for control-affine
//! plants with matched and unmatched disturbances. Time-delay estimation
//! replaces the unknown drift and disturbance terms with the previous
//! state derivative, which turns the Hamilton-Jacobi-Bellman equation into
//! a linear-in-parameters regression. A single critic is then trained by a
//! concurrent-learning update law.
//!
//! Two model-based baselines share the same critic and learner:
//! zero-sum game ADP ([`ControllerKind::Zsadp`]) and transformed-system
//! ADP ([`ControllerKind::Tadp`]).
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`, which the benchmark uses.
//!
//! ```
//! use iadp::{config, run_episode};
//!
//! let mut cfg = config::preset("s1").unwrap();
//! cfg.t_end = 1.0;
//! let log = run_episode(&cfg).unwrap();
//! assert_eq!(log.rows.len(), 1001);
//! ```

// `!(x > 0)` style checks are there so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod controllers;
pub mod critic;
pub mod error;
pub mod learner;
pub mod plant;
pub mod scalar;
pub mod sim;
pub mod tde;
pub mod verify;

pub use controllers::ControllerKind;
pub use error::{Error, Result};
pub use learner::InsertionPolicy;
pub use scalar::Real;
pub use sim::{run_episode, EpisodeStatus};
pub use tde::XdotSource;

pub type Vector = scalar::Vector<f64>;
pub type Matrix = scalar::Matrix<f64>;
pub type Plant = plant::Plant<f64>;
pub type Pendulum = plant::Pendulum<f64>;
pub type Controller = controllers::Controller<f64>;
pub type CriticWeights = critic::CriticWeights<f64>;
pub type CostConfig = critic::CostConfig<f64>;
pub type Learner = learner::Learner<f64>;
pub type SimConfig = sim::SimConfig<f64>;
pub type Scenario = sim::Scenario<f64>;
pub type TrajectoryLog = sim::TrajectoryLog<f64>;
pub type DelayLine = tde::DelayLine<f64>;
