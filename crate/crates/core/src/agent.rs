//! The dynamic opinion agent.
//!
//! Each simulated day an agent walks a fixed pipeline:
//!
//! ```text
//! receive* -> reflect_short_term -> reflect_long_term -> update_opinion -> end_of_day
//! ```
//!
//! The current [`DayPhase`] is tracked on the state and every step checks it,
//! so calling the steps out of order is reported as [`AgentError::OutOfOrder`]
//! instead of silently corrupting memory.

use serde::{Deserialize, Serialize};

use crate::backend::{CallContext, MemoryView, OpinionBackend};
use crate::error::{AgentError, BackendError, ConfigError};
use crate::persona::Persona;
use crate::simulator::{classify_state, PopulationLabel};

pub const NO_CONVERSATIONS: &str = "No conversations today.";
pub const DEFAULT_TWEET_CHAR_CAP: usize = 560;
pub const DEFAULT_LONG_TERM_CHAR_CAP: usize = 2000;

/// Binary belief flag, serialized as `0` / `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Belief {
    Disbelieve,
    Believe,
}

impl Belief {
    pub fn as_u8(self) -> u8 {
        match self {
            Belief::Disbelieve => 0,
            Belief::Believe => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.as_u8())
    }

    pub fn is_believe(self) -> bool {
        self == Belief::Believe
    }

    pub fn flipped(self) -> Self {
        match self {
            Belief::Disbelieve => Belief::Believe,
            Belief::Believe => Belief::Disbelieve,
        }
    }
}

impl From<Belief> for u8 {
    fn from(b: Belief) -> u8 {
        b.as_u8()
    }
}

impl From<bool> for Belief {
    fn from(b: bool) -> Self {
        if b {
            Belief::Believe
        } else {
            Belief::Disbelieve
        }
    }
}

impl TryFrom<u8> for Belief {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Belief::Disbelieve),
            1 => Ok(Belief::Believe),
            other => Err(format!("belief must be 0 or 1, got {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opinion {
    pub belief: Belief,
    pub tweet: String,
    pub reasoning: String,
    pub day: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryState {
    pub short_term: String,
    pub long_term: String,
    pub long_term_char_cap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Agent(u32),
    Official,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Peer,
    Official,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub speaker: Speaker,
    pub belief: Belief,
    pub tweet: String,
    pub kind: MessageKind,
}

impl Message {
    pub fn peer(speaker_id: u32, belief: Belief, tweet: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::Agent(speaker_id),
            belief,
            tweet: tweet.into(),
            kind: MessageKind::Peer,
        }
    }

    /// Official statements always carry disbelief.
    pub fn official(tweet: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::Official,
            belief: Belief::Disbelieve,
            tweet: tweet.into(),
            kind: MessageKind::Official,
        }
    }

    /// One line of raw, unsummarized conversation text.
    pub fn raw_line(&self) -> String {
        let who = match self.speaker {
            Speaker::Agent(id) => format!("agent {id}"),
            Speaker::Official => "official spokesperson".to_owned(),
        };
        let stance = if self.belief.is_believe() {
            "believes"
        } else {
            "does not believe"
        };
        format!("{who} ({stance}): {}", self.tweet)
    }
}

/// Where an agent is in its daily pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayPhase {
    Receiving,
    ShortTermReflected,
    LongTermReflected,
    OpinionUpdated,
}

/// Component switches for ablation runs. All combinations are legal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    pub disable_long_term: bool,
    pub disable_short_term: bool,
    pub disable_reasoning: bool,
}

/// Everything an agent needs from the environment to run its pipeline.
#[derive(Clone, Copy)]
pub struct Pipeline<'a> {
    pub backend: &'a dyn OpinionBackend,
    pub ablation: AblationFlags,
    pub topic: &'a str,
    pub run_seed: u64,
    pub tweet_char_cap: usize,
}

impl<'a> Pipeline<'a> {
    pub fn new(backend: &'a dyn OpinionBackend, topic: &'a str, run_seed: u64) -> Self {
        Self {
            backend,
            ablation: AblationFlags::default(),
            topic,
            run_seed,
            tweet_char_cap: DEFAULT_TWEET_CHAR_CAP,
        }
    }

    pub fn with_ablation(mut self, flags: AblationFlags) -> Self {
        self.ablation = flags;
        self
    }

    pub fn with_tweet_cap(mut self, cap: usize) -> Self {
        self.tweet_char_cap = cap;
        self
    }

    fn context(&self, agent_id: u32, day: u32) -> CallContext<'a> {
        CallContext {
            run_seed: self.run_seed,
            agent_id,
            day,
            topic: self.topic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub persona: Persona,
    pub memory: MemoryState,
    pub opinion: Opinion,
    /// Belief assigned at initialization (day 0).
    pub initial_belief: Belief,
    /// One entry per completed day.
    pub belief_history: Vec<Belief>,
    pub inbox: Vec<Message>,
    pub label: PopulationLabel,
    pub phase: DayPhase,
    /// Backend failure recorded for the most recent day, if any.
    pub last_error: Option<String>,
}

pub fn initial_tweet(belief: Belief, topic: &str) -> String {
    match belief {
        Belief::Believe => format!("Everyone needs to hear this: {topic}. I believe it."),
        Belief::Disbelieve => {
            format!("I have seen people claim that {topic}. I am not convinced.")
        }
    }
}

impl AgentState {
    pub fn new(
        persona: Persona,
        initially_infected: bool,
        topic: &str,
        long_term_char_cap: usize,
    ) -> Result<Self, ConfigError> {
        if topic.trim().is_empty() {
            return Err(ConfigError::invalid("topic", "topic must not be empty"));
        }
        let belief = Belief::from(initially_infected);
        let label = classify_state(&[belief]).expect("non-empty history");
        Ok(Self {
            persona,
            memory: MemoryState {
                short_term: String::new(),
                long_term: String::new(),
                long_term_char_cap,
            },
            opinion: Opinion {
                belief,
                tweet: initial_tweet(belief, topic.trim()),
                reasoning: "Initial stance.".to_owned(),
                day: 0,
            },
            initial_belief: belief,
            belief_history: Vec::new(),
            inbox: Vec::new(),
            label,
            phase: DayPhase::Receiving,
            last_error: None,
        })
    }

    pub fn id(&self) -> u32 {
        self.persona.id
    }

    pub fn completed_days(&self) -> u32 {
        self.belief_history.len() as u32
    }

    fn current_day(&self) -> u32 {
        self.completed_days() + 1
    }

    fn expect_phase(&self, expected: DayPhase, operation: &'static str) -> Result<(), AgentError> {
        if self.phase == expected {
            Ok(())
        } else {
            Err(AgentError::OutOfOrder {
                agent: self.id(),
                operation,
                phase: self.phase,
            })
        }
    }

    pub fn receive(&mut self, msg: Message) -> Result<(), AgentError> {
        self.expect_phase(DayPhase::Receiving, "receive")?;
        self.inbox.push(msg);
        Ok(())
    }

    pub fn reflect_short_term(&mut self, pipeline: &Pipeline<'_>) -> Result<(), StepError> {
        self.expect_phase(DayPhase::Receiving, "reflect_short_term")?;
        self.memory.short_term = if self.inbox.is_empty() {
            NO_CONVERSATIONS.to_owned()
        } else if pipeline.ablation.disable_short_term {
            raw_transcript(&self.inbox)
        } else {
            let ctx = pipeline.context(self.id(), self.current_day());
            pipeline
                .backend
                .summarize(&ctx, &self.persona, &self.inbox)?
        };
        self.phase = DayPhase::ShortTermReflected;
        Ok(())
    }

    pub fn reflect_long_term(&mut self, pipeline: &Pipeline<'_>) -> Result<(), StepError> {
        self.expect_phase(DayPhase::ShortTermReflected, "reflect_long_term")?;
        if !pipeline.ablation.disable_long_term {
            let ctx = pipeline.context(self.id(), self.current_day());
            let cap = self.memory.long_term_char_cap;
            let integrated = pipeline.backend.integrate(
                &ctx,
                &self.persona,
                &self.memory.long_term,
                &self.memory.short_term,
                cap,
            )?;
            self.memory.long_term = compress_to_cap(&integrated, cap);
        }
        self.phase = DayPhase::LongTermReflected;
        Ok(())
    }

    pub fn update_opinion(&mut self, pipeline: &Pipeline<'_>) -> Result<(), StepError> {
        self.expect_phase(DayPhase::LongTermReflected, "update_opinion")?;
        let day = self.current_day();
        let ctx = pipeline.context(self.id(), day);
        let view = if pipeline.ablation.disable_long_term {
            MemoryView::ShortTermOnly(&self.memory.short_term)
        } else {
            MemoryView::Consolidated(&self.memory.long_term)
        };
        let with_reasoning = !pipeline.ablation.disable_reasoning;
        let draft = pipeline
            .backend
            .form_opinion(&ctx, &self.persona, view, &self.opinion, with_reasoning)?;
        self.opinion = Opinion {
            belief: draft.belief,
            tweet: truncate_chars(draft.tweet.trim(), pipeline.tweet_char_cap),
            reasoning: if with_reasoning {
                draft.reasoning
            } else {
                String::new()
            },
            day,
        };
        self.belief_history.push(draft.belief);
        self.last_error = None;
        self.phase = DayPhase::OpinionUpdated;
        Ok(())
    }

    /// Backend failure policy: keep yesterday's opinion, count the day as
    /// completed with an unchanged belief and remember the error.
    pub fn retain_opinion_after_failure(&mut self, error: &BackendError) {
        self.belief_history.push(self.opinion.belief);
        self.last_error = Some(error.to_string());
        self.phase = DayPhase::OpinionUpdated;
    }

    /// Clears today's inbox and short-term memory and relabels the agent.
    /// Returns the short-term memory that was cleared.
    pub fn end_of_day(&mut self) -> Result<String, AgentError> {
        self.expect_phase(DayPhase::OpinionUpdated, "end_of_day")?;
        self.inbox.clear();
        let short = std::mem::take(&mut self.memory.short_term);
        self.label = classify_state(&self.full_history())?;
        self.phase = DayPhase::Receiving;
        Ok(short)
    }

    /// Initial belief followed by one belief per completed day.
    pub fn full_history(&self) -> Vec<Belief> {
        std::iter::once(self.initial_belief)
            .chain(self.belief_history.iter().copied())
            .collect()
    }

    /// Runs reflection, opinion update and end-of-day for one day, applying
    /// the retain-previous-opinion policy on backend failure. Returns the
    /// cleared short-term memory.
    pub fn run_day(&mut self, pipeline: &Pipeline<'_>) -> Result<String, AgentError> {
        let outcome = self
            .reflect_short_term(pipeline)
            .and_then(|_| self.reflect_long_term(pipeline))
            .and_then(|_| self.update_opinion(pipeline));
        match outcome {
            Ok(()) => {}
            Err(StepError::Agent(e)) => return Err(e),
            Err(StepError::Backend(e)) => {
                log::warn!("agent {} day {}: {e}", self.id(), self.current_day());
                self.retain_opinion_after_failure(&e);
            }
        }
        self.end_of_day()
    }
}

/// Failure of a single pipeline step.
#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum StepError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

pub fn raw_transcript(messages: &[Message]) -> String {
    messages
        .iter()
        .map(Message::raw_line)
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn truncate_chars(text: &str, cap: usize) -> String {
    match text.char_indices().nth(cap) {
        Some((idx, _)) => text[..idx].to_owned(),
        None => text.to_owned(),
    }
}

/// Keeps the most recent content within `cap` characters: whole oldest lines
/// are dropped first, then the remaining text is cut down to its tail.
pub fn compress_to_cap(text: &str, cap: usize) -> String {
    let mut len = text.chars().count();
    if len <= cap {
        return text.to_owned();
    }
    let mut rest = text;
    while len > cap {
        match rest.split_once('\n') {
            Some((head, tail)) => {
                len -= head.chars().count() + 1;
                rest = tail;
            }
            None => break,
        }
    }
    if len > cap {
        let skip = len - cap;
        let idx = rest
            .char_indices()
            .nth(skip)
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        rest = &rest[idx..];
    }
    rest.to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mock::{MockBackend, MockConfig};
    use crate::persona::{Education, Polarity, TraitVector};

    const TOPIC: &str = "the moon landing was staged";

    fn persona(id: u32, polarity: Polarity, education: Education) -> Persona {
        Persona {
            id,
            name: "Michael".into(),
            age: 40,
            education,
            traits: TraitVector::uniform(polarity),
        }
    }

    fn agent(infected: bool) -> AgentState {
        AgentState::new(
            persona(0, Polarity::High, Education::Bachelor),
            infected,
            TOPIC,
            DEFAULT_LONG_TERM_CHAR_CAP,
        )
        .unwrap()
    }

    fn believer(id: u32) -> Message {
        Message::peer(id, Belief::Believe, "it is true")
    }

    #[test]
    fn init_sets_belief_and_empty_memory() {
        let a = agent(true);
        assert_eq!(a.opinion.belief, Belief::Believe);
        assert_eq!(a.label, PopulationLabel::Infected);
        let b = agent(false);
        assert_eq!(b.opinion.belief, Belief::Disbelieve);
        assert_eq!(b.label, PopulationLabel::Susceptible);
        for s in [&a, &b] {
            assert!(s.memory.short_term.is_empty() && s.memory.long_term.is_empty());
            assert!(s.belief_history.is_empty());
            assert!(!s.opinion.tweet.is_empty());
        }
    }

    #[test]
    fn empty_topic_rejected() {
        let err = AgentState::new(persona(0, Polarity::Low, Education::Master), false, "  ", 100)
            .unwrap_err();
        assert_eq!(err.key, "topic");
    }

    #[test]
    fn receive_appends_in_order_without_touching_belief() {
        let mut a = agent(false);
        a.receive(Message::official("refuted")).unwrap();
        a.receive(believer(3)).unwrap();
        a.receive(believer(5)).unwrap();
        assert_eq!(a.inbox.len(), 3);
        assert_eq!(a.inbox[0].kind, MessageKind::Official);
        assert_eq!(a.inbox[2].speaker, Speaker::Agent(5));
        assert_eq!(a.opinion.belief, Belief::Disbelieve);
    }

    #[test]
    fn short_term_sentinel_and_tally() {
        let backend = MockBackend::default();
        let pipeline = Pipeline::new(&backend, TOPIC, 1);
        let mut a = agent(false);
        a.reflect_short_term(&pipeline).unwrap();
        assert_eq!(a.memory.short_term, NO_CONVERSATIONS);

        let mut b = agent(false);
        for id in 1..=3 {
            b.receive(believer(id)).unwrap();
        }
        b.reflect_short_term(&pipeline).unwrap();
        assert_eq!(b.memory.short_term, "heard 3 believe, 0 disbelieve, 0 official");
        assert_eq!(b.inbox.len(), 3);

        let mut c = agent(false);
        c.receive(Message::official("refuted")).unwrap();
        c.reflect_short_term(&pipeline).unwrap();
        assert!(c.memory.short_term.ends_with("1 official"));
    }

    #[test]
    fn out_of_order_calls_are_rejected() {
        let backend = MockBackend::default();
        let pipeline = Pipeline::new(&backend, TOPIC, 1);
        let mut a = agent(false);
        assert!(matches!(
            a.update_opinion(&pipeline),
            Err(StepError::Agent(AgentError::OutOfOrder { .. }))
        ));
        assert!(a.end_of_day().is_err());
        a.reflect_short_term(&pipeline).unwrap();
        assert!(a.receive(believer(1)).is_err());
        assert!(a.reflect_short_term(&pipeline).is_err());
    }

    #[test]
    fn long_term_identity_on_empty_prior() {
        let backend = MockBackend::default();
        let pipeline = Pipeline::new(&backend, TOPIC, 1);
        let mut a = agent(false);
        a.receive(believer(1)).unwrap();
        a.reflect_short_term(&pipeline).unwrap();
        a.reflect_long_term(&pipeline).unwrap();
        assert_eq!(
            a.memory.long_term,
            "day 1: heard 1 believe, 0 disbelieve, 0 official"
        );
    }

    #[test]
    fn long_term_respects_cap_over_100_days() {
        let backend = MockBackend::default();
        let pipeline = Pipeline::new(&backend, TOPIC, 11);
        let mut a = AgentState::new(
            persona(0, Polarity::High, Education::Bachelor),
            false,
            TOPIC,
            300,
        )
        .unwrap();
        for day in 0..100u32 {
            for id in 1..=(day % 4 + 1) {
                a.receive(believer(id)).unwrap();
            }
            a.run_day(&pipeline).unwrap();
            assert!(a.memory.long_term.chars().count() <= 300);
            assert!(a.memory.short_term.is_empty());
        }
        assert_eq!(a.belief_history.len(), 100);
    }

    #[test]
    fn compression_differs_from_concatenation_over_cap() {
        let prior = "x".repeat(40);
        let naive = format!("{prior}\nday 2: heard 1 believe, 0 disbelieve, 0 official");
        let compressed = compress_to_cap(&naive, 50);
        assert_ne!(compressed, naive);
        assert!(compressed.chars().count() <= 50);
        assert_eq!(compressed, "day 2: heard 1 believe, 0 disbelieve, 0 official");
        assert_eq!(compress_to_cap("abcdef", 3), "def");
        assert_eq!(compress_to_cap("héllo", 10), "héllo");
    }

    #[test]
    fn unanimous_inbox_flips_with_susceptibility() {
        // primary education + high A/N gives 0.9; force 0.95 via the weights
        let config = MockConfig {
            susceptibility: crate::persona::SusceptibilityWeights {
                base: 0.65,
                ..Default::default()
            },
            ..MockConfig::default()
        };
        let backend = MockBackend::new(config);
        let trials = 1000;
        let mut flips = 0;
        for seed in 0..trials {
            let pipeline = Pipeline::new(&backend, TOPIC, seed);
            let mut a = agent(false);
            assert!(
                (crate::persona::susceptibility_with(&a.persona, &config.susceptibility) - 0.95)
                    .abs()
                    < 1e-12
            );
            for id in 1..=4 {
                a.receive(believer(id)).unwrap();
            }
            a.run_day(&pipeline).unwrap();
            if a.opinion.belief.is_believe() {
                flips += 1;
            }
        }
        let frac = f64::from(flips) / trials as f64;
        assert!((frac - 0.95).abs() <= 0.02, "flip fraction {frac}");
    }

    #[test]
    fn silent_day_keeps_belief() {
        let backend = MockBackend::default();
        for seed in 0..50 {
            let pipeline = Pipeline::new(&backend, TOPIC, seed);
            for infected in [true, false] {
                let mut a = agent(infected);
                let before = a.opinion.belief;
                a.run_day(&pipeline).unwrap();
                assert_eq!(a.opinion.belief, before);
                assert_eq!(a.belief_history.len(), 1);
            }
        }
    }

    #[test]
    fn end_of_day_resets_but_keeps_history() {
        let backend = MockBackend::default();
        let pipeline = Pipeline::new(&backend, TOPIC, 3);
        let mut a = agent(true);
        a.receive(believer(2)).unwrap();
        a.reflect_short_term(&pipeline).unwrap();
        a.reflect_long_term(&pipeline).unwrap();
        a.update_opinion(&pipeline).unwrap();
        let history = a.belief_history.clone();
        let cleared = a.end_of_day().unwrap();
        assert!(cleared.starts_with("heard"));
        assert!(a.memory.short_term.is_empty());
        assert!(a.inbox.is_empty());
        assert_eq!(a.belief_history, history);
        assert_eq!(a.phase, DayPhase::Receiving);
    }

    #[test]
    fn tweets_are_capped() {
        assert_eq!(truncate_chars("abcdef", 4), "abcd");
        assert_eq!(truncate_chars("ab", 4), "ab");
        assert_eq!(truncate_chars("ééé", 2), "éé");
    }
}
