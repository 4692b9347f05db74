//! Flit-level discrete-event simulator for all-to-all Dragonfly networks,
//! with adaptive Q-learning routing and the usual oblivious/adaptive
//! baselines (minimal, Valiant, UGAL, PAR).

pub mod config;
pub mod engine;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod qlearn;
pub mod router;
pub mod routing;
pub mod sim;
pub mod topology;
pub mod traffic;

pub use config::{Algo, RunConfig, Timing};
pub use error::SimError;
pub use sim::{run, RunOutput, Sim};
pub use topology::{DragonflyParams, Topology};
