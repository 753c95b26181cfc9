//! Agent-based simulation of fake news spreading through a population of
//! persona-driven agents.
//!
//! Each agent keeps a short-term memory of the day's conversations and a
//! long-term memory of everything reflected so far, and forms a daily belief
//! through an [`backend::OpinionBackend`]: either a deterministic mock or a
//! chat-completions language model. The [`simulator`] runs the day loop and
//! labels agents susceptible, infected or recovered; [`epidemic`] fits an SIS
//! model to the resulting curves and [`metrics`] summarizes a run.

pub mod agent;
pub mod artifacts;
pub mod backend;
pub mod config;
pub mod epidemic;
pub mod error;
pub mod metrics;
pub mod persona;
pub mod rng;
pub mod simulator;

pub use agent::{AblationFlags, AgentState, Belief, Message, Opinion};
pub use backend::mock::{MockBackend, MockConfig};
pub use backend::llm::{LlmBackend, LlmConfig};
pub use backend::prompts::PromptSet;
pub use backend::{BackendKind, OpinionBackend};
pub use config::{parse_config, parse_config_str, write_config, SimulationConfig};
pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use persona::{Persona, ProfileKind};
pub use simulator::{
    run_simulation, InterventionSchedule, PopulationCounts, PopulationLabel, SimulationTrace,
};
