//! Cognition backends behind the agent pipeline.
//!
//! A backend provides three capabilities: summarizing the day's
//! conversations, integrating that summary into long-term memory, and forming
//! an opinion. [`mock::MockBackend`] is a deterministic stand-in driven by the
//! persona's susceptibility; [`llm::LlmBackend`] talks to a chat-completions
//! endpoint.

pub mod llm;
pub mod mock;
pub mod prompts;

use serde::{Deserialize, Serialize};

use crate::agent::{Belief, Message, Opinion};
use crate::error::BackendError;
use crate::persona::Persona;

/// Identifies the agent-day a backend call belongs to.
#[derive(Debug, Clone, Copy)]
pub struct CallContext<'a> {
    pub run_seed: u64,
    pub agent_id: u32,
    pub day: u32,
    pub topic: &'a str,
}

/// Memory handed to opinion formation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryView<'a> {
    /// Long-term memory, already integrated with today's summary.
    Consolidated(&'a str),
    /// Today's short-term memory only (long-term memory ablated).
    ShortTermOnly(&'a str),
}

impl<'a> MemoryView<'a> {
    pub fn text(&self) -> &'a str {
        match self {
            MemoryView::Consolidated(t) | MemoryView::ShortTermOnly(t) => t,
        }
    }

    pub fn is_consolidated(&self) -> bool {
        matches!(self, MemoryView::Consolidated(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpinionDraft {
    pub belief: Belief,
    pub tweet: String,
    pub reasoning: String,
}

pub trait OpinionBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn summarize(
        &self,
        ctx: &CallContext<'_>,
        persona: &Persona,
        messages: &[Message],
    ) -> Result<String, BackendError>;

    fn integrate(
        &self,
        ctx: &CallContext<'_>,
        persona: &Persona,
        long_term: &str,
        short_term: &str,
        cap: usize,
    ) -> Result<String, BackendError>;

    fn form_opinion(
        &self,
        ctx: &CallContext<'_>,
        persona: &Persona,
        memory: MemoryView<'_>,
        previous: &Opinion,
        with_reasoning: bool,
    ) -> Result<OpinionDraft, BackendError>;

    /// Number of backend calls made so far.
    fn calls(&self) -> u64;

    /// Upper bound on concurrent calls; `None` means unconstrained.
    fn max_concurrency(&self) -> Option<usize> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Llm,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Mock => "mock",
            BackendKind::Llm => "llm",
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "mock" => Ok(BackendKind::Mock),
            "llm" => Ok(BackendKind::Llm),
            other => Err(format!("unknown backend `{other}` (expected mock or llm)")),
        }
    }
}
