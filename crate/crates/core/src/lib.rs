//! Evolutionary reinforcement learning of tutoring policies against a
//! simulated student.
//!
//! The crate is organized bottom-up:
//!
//! - [`graph`]: concept graph, interdisciplinary links, misconception rules
//! - [`sim`]: the partially observable student environment
//! - [`belief`]: particle-filter belief tracking and policy features
//! - [`policy`]: frozen base network plus evolutionary and gradient low-rank adapters
//! - [`reward`]: gatekeeper / process / outcome reward cascade and evaluators
//! - [`ppo`]: inner PPO loop with per-objective gradient projection
//! - [`evo`]: Pareto selection, crossover and mutation in adapter space
//! - [`trainer`]: the generation loop, run configuration, checkpoints
//! - [`metrics`]: diversity, projection, and output files

pub mod graph;
pub mod sim;
pub mod belief;
pub mod policy;
pub mod reward;
pub mod ppo;
pub mod evo;
pub mod metrics;
pub mod trainer;

pub use graph::KnowledgeGraph;
pub use policy::{AdapterSet, PolicyNet};
pub use trainer::{run, RunConfig, TrainerError};
