//! Deterministic, trait-parameterized stand-in for a language model.
//!
//! The summarizer emits one canonical tally line, integration appends dated
//! tally lines to long-term memory, and opinion formation flips the belief
//! with a probability driven by the persona's susceptibility σ and the
//! believing fraction f of the latest tally:
//!
//! * disbelieving agents adopt with probability `σ · f`
//! * believing agents abandon with probability `(1 − σ) · (1 − f)`
//!
//! Official messages count as `official_weight` disbelieving votes. Randomness
//! comes from a per agent-day stream so the backend is a pure function of its
//! inputs.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CallContext, MemoryView, OpinionBackend, OpinionDraft};
use crate::agent::{compress_to_cap, Belief, Message, MessageKind, Opinion, NO_CONVERSATIONS};
use crate::error::{BackendError, ConfigError};
use crate::persona::{susceptibility_with, Persona, SusceptibilityWeights};
use crate::rng::{agent_day_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockConfig {
    /// Disbelieve votes an official message is worth (w_o ≥ 1).
    pub official_weight: f64,
    /// Multiplier on the adoption probability σ·f.
    pub adopt_gain: f64,
    /// Multiplier on the abandonment probability (1−σ)·(1−f).
    pub abandon_gain: f64,
    /// Multiplier on both flip probabilities when opinion formation only sees
    /// today's short-term memory.
    pub unconsolidated_weight: f64,
    pub susceptibility: SusceptibilityWeights,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            official_weight: 3.0,
            adopt_gain: 1.0,
            abandon_gain: 1.0,
            unconsolidated_weight: 0.1,
            susceptibility: SusceptibilityWeights::default(),
        }
    }
}

impl MockConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite_nonneg = |key: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, format!("must be a finite value ≥ 0, got {v}")))
            }
        };
        if !(self.official_weight.is_finite() && self.official_weight >= 1.0) {
            return Err(ConfigError::invalid(
                "official_weight",
                format!("must be ≥ 1, got {}", self.official_weight),
            ));
        }
        finite_nonneg("adopt_gain", self.adopt_gain)?;
        finite_nonneg("abandon_gain", self.abandon_gain)?;
        finite_nonneg("unconsolidated_weight", self.unconsolidated_weight)?;
        let w = &self.susceptibility;
        for (key, v) in [
            ("base", w.base),
            ("agreeableness", w.agreeableness),
            ("neuroticism", w.neuroticism),
            ("education", w.education),
        ] {
            if !v.is_finite() {
                return Err(ConfigError::invalid(key, "must be finite"));
            }
        }
        Ok(())
    }
}

/// Counts carried by one summary line. `disbelieve` includes officials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Tally {
    pub believe: u32,
    pub disbelieve: u32,
    pub official: u32,
}

impl Tally {
    pub fn of(messages: &[Message]) -> Self {
        let mut t = Tally::default();
        for m in messages {
            if m.belief.is_believe() {
                t.believe += 1;
            } else {
                t.disbelieve += 1;
            }
            if m.kind == MessageKind::Official {
                t.official += 1;
            }
        }
        t
    }

    pub fn line(&self) -> String {
        format!(
            "heard {} believe, {} disbelieve, {} official",
            self.believe, self.disbelieve, self.official
        )
    }

    /// Parses a canonical tally line, optionally prefixed with `day N: `.
    pub fn parse(line: &str) -> Option<Self> {
        let line = line.trim();
        let line = match line.strip_prefix("day ") {
            Some(rest) => {
                let (day, body) = rest.split_once(": ")?;
                day.parse::<u32>().ok()?;
                body
            }
            None => line,
        };
        let rest = line.strip_prefix("heard ")?;
        let (b, rest) = rest.split_once(" believe, ")?;
        let (d, rest) = rest.split_once(" disbelieve, ")?;
        let o = rest.strip_suffix(" official")?;
        let tally = Tally {
            believe: b.parse().ok()?,
            disbelieve: d.parse().ok()?,
            official: o.parse().ok()?,
        };
        (tally.official <= tally.disbelieve).then_some(tally)
    }

    /// Latest tally in a memory text: only its final line is considered.
    pub fn latest_in(memory: &str) -> Option<Self> {
        memory.trim_end().lines().last().and_then(Tally::parse)
    }

    /// Believing fraction with officials weighted as `official_weight` votes.
    pub fn believing_fraction(&self, official_weight: f64) -> Option<f64> {
        let peers_disbelieve = f64::from(self.disbelieve - self.official);
        let believe = f64::from(self.believe);
        let total = believe + peers_disbelieve + official_weight * f64::from(self.official);
        (total > 0.0).then(|| believe / total)
    }
}

pub fn mock_summarize(messages: &[Message]) -> String {
    if messages.is_empty() {
        NO_CONVERSATIONS.to_owned()
    } else {
        Tally::of(messages).line()
    }
}

/// Flip probability of the mock rule for a prior belief, susceptibility σ and
/// believing fraction f.
pub fn flip_probability(config: &MockConfig, prior: Belief, sigma: f64, fraction: f64) -> f64 {
    let p = match prior {
        Belief::Disbelieve => config.adopt_gain * sigma * fraction,
        Belief::Believe => config.abandon_gain * (1.0 - sigma) * (1.0 - fraction),
    };
    p.clamp(0.0, 1.0)
}

pub fn mock_form_opinion<R: Rng + ?Sized>(
    config: &MockConfig,
    persona: &Persona,
    tally: Option<Tally>,
    previous: &Opinion,
    consolidated: bool,
    topic: &str,
    rng: &mut R,
) -> OpinionDraft {
    let prior = previous.belief;
    let sigma = susceptibility_with(persona, &config.susceptibility);
    let fraction = tally
        .and_then(|t| t.believing_fraction(config.official_weight))
        .unwrap_or(prior.as_f64());
    let mut p = flip_probability(config, prior, sigma, fraction);
    if !consolidated {
        p *= config.unconsolidated_weight;
    }
    // Always draw so the stream position does not depend on the branch.
    let u: f64 = rng.random();
    let belief = if u < p { prior.flipped() } else { prior };
    let (tweet, reasoning) = match tally {
        Some(t) => (
            tally_tweet(t, prior, belief, topic),
            format!(
                "Memory tally: {} believe, {} disbelieve, {} official. Susceptibility {sigma:.2}, \
                 believing share {fraction:.3}, chance of changing my mind {p:.3}; {}.",
                t.believe,
                t.disbelieve,
                t.official,
                if belief == prior {
                    "kept my position"
                } else {
                    "changed my position"
                }
            ),
        ),
        None => (
            format!(
                "Nothing I heard changes my mind: I {} that {topic}.",
                if prior.is_believe() {
                    "still believe"
                } else {
                    "still doubt"
                }
            ),
            "No summarized tally in memory, so I keep my previous belief.".to_owned(),
        ),
    };
    OpinionDraft {
        belief,
        tweet,
        reasoning,
    }
}

fn tally_tweet(t: Tally, prior: Belief, now: Belief, topic: &str) -> String {
    let total = t.believe + t.disbelieve;
    let mut tweet = match (prior, now) {
        (Belief::Disbelieve, Belief::Believe) => format!(
            "{} people I talked to believe it and {} doubt it. Now I am convinced: {topic}.",
            t.believe, t.disbelieve
        ),
        (Belief::Believe, Belief::Believe) => format!(
            "Still believe that {topic}. {} of the {total} voices I heard agree.",
            t.believe
        ),
        (Belief::Believe, Belief::Disbelieve) => format!(
            "Changed my mind, I no longer buy that {topic}. Only {} of {total} voices still back it.",
            t.believe
        ),
        (Belief::Disbelieve, Belief::Disbelieve) => format!(
            "Not convinced that {topic}. {} of the {total} voices I heard doubt it too.",
            t.disbelieve
        ),
    };
    if t.official > 0 {
        tweet.push_str(" Officials have issued a refutation.");
    }
    tweet
}

#[derive(Debug, Default)]
pub struct MockBackend {
    config: MockConfig,
    calls: AtomicU64,
}

impl MockBackend {
    pub fn new(config: MockConfig) -> Self {
        Self {
            config,
            calls: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    fn count(&self) {
        self.calls.fetch_add(1, Ordering::Relaxed);
    }
}

impl OpinionBackend for MockBackend {
    fn name(&self) -> &'static str {
        "mock"
    }

    fn summarize(
        &self,
        _ctx: &CallContext<'_>,
        _persona: &Persona,
        messages: &[Message],
    ) -> Result<String, BackendError> {
        self.count();
        Ok(mock_summarize(messages))
    }

    fn integrate(
        &self,
        ctx: &CallContext<'_>,
        _persona: &Persona,
        long_term: &str,
        short_term: &str,
        cap: usize,
    ) -> Result<String, BackendError> {
        self.count();
        let entry = format!("day {}: {}", ctx.day, short_term);
        let combined = if long_term.is_empty() {
            entry
        } else {
            format!("{long_term}\n{entry}")
        };
        Ok(compress_to_cap(&combined, cap))
    }

    fn form_opinion(
        &self,
        ctx: &CallContext<'_>,
        persona: &Persona,
        memory: MemoryView<'_>,
        previous: &Opinion,
        _with_reasoning: bool,
    ) -> Result<OpinionDraft, BackendError> {
        self.count();
        let mut rng = agent_day_rng(ctx.run_seed, ctx.agent_id, ctx.day, Stream::Opinion);
        Ok(mock_form_opinion(
            &self.config,
            persona,
            Tally::latest_in(memory.text()),
            previous,
            memory.is_consolidated(),
            ctx.topic,
            &mut rng,
        ))
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}
