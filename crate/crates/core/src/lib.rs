//! Moments, covariances and scaling limits of Markov-modulated
//! infinite-server queues.
//!
//! Two service disciplines are covered. In [`Model::I`] every job in the
//! system is served at the rate of the current background state; in
//! [`Model::II`] a job keeps the service rate of the state it arrived in.
//! Exact moments come from [`model1`] and [`model2`], scaling limits from
//! [`asymptotics`], and [`simulator`] checks both by Monte Carlo.

pub mod asymptotics;
pub mod chain;
pub mod error;
pub mod linalg;
pub mod model1;
pub mod model2;
pub mod ode;
pub mod quad;
pub mod queue;
pub mod simulator;

pub use chain::{ChainAnalysis, Generator};
pub use error::{Error, Result};
pub use queue::{QueueSpec, ScalingParams};

/// Service discipline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    /// Service rate follows the current background state.
    I,
    /// Service rate is fixed at arrival.
    II,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Model::I => "I",
            Model::II => "II",
        })
    }
}
