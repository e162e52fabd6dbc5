//! Subcommand bodies. Each writes its artifacts into the output directory
//! and returns the failures that turn exit code 0 into 1.

pub mod convergence;
pub mod estimate;
pub mod particles;
pub mod simulate;
pub mod verify;

pub use convergence::cmd_convergence;
pub use estimate::cmd_estimate;
pub use particles::cmd_particles;
pub use simulate::cmd_simulate;
pub use verify::cmd_verify;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// Scientific failures; empty on success.
    pub failures: Vec<String>,
    pub summary: serde_json::Value,
}
