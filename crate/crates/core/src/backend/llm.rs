//! Chat-completions client backend.
//!
//! Requests go to any endpoint speaking the OpenAI chat-completions wire
//! format. Transport failures (network, HTTP 408/429/5xx, broken envelopes)
//! and unparseable opinion replies share one retry budget of `max_retries`
//! extra attempts; unparseable replies are re-asked with a stricter suffix.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::prompts::PromptSet;
use super::{CallContext, MemoryView, OpinionBackend, OpinionDraft};
use crate::agent::{raw_transcript, Belief, Message, Opinion};
use crate::error::{BackendError, ConfigError};
use crate::persona::Persona;

pub const API_KEY_ENV: &str = "FPS_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint_url: String,
    pub model_name: String,
    /// Read from `FPS_API_KEY`, never from config files.
    #[serde(skip)]
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout_secs: f64,
    pub max_concurrent_requests: usize,
    /// First backoff delay; doubles on every transport retry.
    pub retry_base_delay_ms: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.openai.com/v1/chat/completions".to_owned(),
            model_name: "gpt-3.5-turbo-1106".to_owned(),
            api_key: None,
            temperature: 1.0,
            max_retries: 3,
            timeout_secs: 60.0,
            max_concurrent_requests: 8,
            retry_base_delay_ms: 500,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.endpoint_url.trim().is_empty() {
            return Err(ConfigError::invalid("endpoint_url", "must not be empty"));
        }
        if self.model_name.trim().is_empty() {
            return Err(ConfigError::invalid("model_name", "must not be empty"));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(ConfigError::invalid(
                "timeout_secs",
                format!("must be > 0, got {}", self.timeout_secs),
            ));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(ConfigError::invalid(
                "temperature",
                format!("must be ≥ 0, got {}", self.temperature),
            ));
        }
        if self.max_concurrent_requests == 0 {
            return Err(ConfigError::invalid(
                "max_concurrent_requests",
                "must be at least 1",
            ));
        }
        Ok(())
    }

    pub fn with_env_api_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        self
    }
}

/// A parsed opinion together with how many retries it took.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmOpinion {
    pub draft: OpinionDraft,
    pub retries: u32,
}

#[derive(Debug)]
pub struct LlmBackend {
    config: LlmConfig,
    prompts: PromptSet,
    client: reqwest::blocking::Client,
    calls: AtomicU64,
    retries: AtomicU64,
}

impl LlmBackend {
    pub fn new(config: LlmConfig, prompts: PromptSet) -> Result<Self, ConfigError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| ConfigError::invalid("llm", format!("cannot build HTTP client: {e}")))?;
        Ok(Self {
            config,
            prompts,
            client,
            calls: AtomicU64::new(0),
            retries: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    /// Total retries across all calls so far.
    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    /// One HTTP round trip, no retries.
    pub fn complete(&self, system: &str, user: &str) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let body = json!({
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.config.temperature,
        });
        let mut request = self.client.post(&self.config.endpoint_url).json(&body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| BackendError::Network(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| BackendError::Network(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Http {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        extract_content(&text)
    }

    fn backoff(&self, attempt: u32) {
        let base = self.config.retry_base_delay_ms;
        if base > 0 {
            let ms = base.saturating_mul(1u64 << attempt.min(6)).min(30_000);
            std::thread::sleep(Duration::from_millis(ms));
        }
    }

    fn complete_with_retry(&self, system: &str, user: &str) -> Result<String, BackendError> {
        let mut attempt = 0;
        loop {
            match self.complete(system, user) {
                Ok(text) => return Ok(text),
                Err(e) if is_retryable(&e) && attempt < self.config.max_retries => {
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    self.backoff(attempt);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn llm_form_opinion(
        &self,
        persona: &Persona,
        topic: &str,
        long_term: &str,
        previous: &Opinion,
        with_reasoning: bool,
    ) -> Result<LlmOpinion, BackendError> {
        let system = self.prompts.render_system(persona)?;
        let user = self.prompts.render_opinion(
            persona,
            topic,
            &previous.tweet,
            long_term,
            with_reasoning,
        )?;
        let strict = format!("{user}{}", self.prompts.reask);
        let mut last_error = None;
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                self.retries.fetch_add(1, Ordering::Relaxed);
            }
            let prompt = match &last_error {
                Some(BackendError::ParseExhausted { .. }) => strict.as_str(),
                _ => user.as_str(),
            };
            match self.complete(&system, prompt) {
                Ok(reply) => match parse_opinion_reply(&reply) {
                    Some(draft) => {
                        return Ok(LlmOpinion {
                            draft,
                            retries: attempt,
                        })
                    }
                    None => {
                        last_error = Some(BackendError::ParseExhausted {
                            attempts: attempt + 1,
                            last_reply: reply.chars().take(500).collect(),
                        })
                    }
                },
                Err(e) if is_retryable(&e) => {
                    last_error = Some(e);
                    self.backoff(attempt);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_error.expect("at least one attempt was made"))
    }
}

fn is_retryable(e: &BackendError) -> bool {
    match e {
        BackendError::Network(_) | BackendError::Envelope(_) => true,
        BackendError::Http { status, .. } => matches!(status, 408 | 429 | 500..=599),
        BackendError::ParseExhausted { .. } | BackendError::Template { .. } => false,
    }
}

#[derive(Deserialize)]
struct Envelope {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

/// Pulls `choices[0].message.content` out of a completions response body.
pub fn extract_content(body: &str) -> Result<String, BackendError> {
    let envelope: Envelope =
        serde_json::from_str(body).map_err(|e| BackendError::Envelope(e.to_string()))?;
    envelope
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| BackendError::Envelope("no message content in choices".to_owned()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Belief,
    Tweet,
    Reasoning,
}

fn labelled(line: &str) -> Option<(Field, &str)> {
    let t = line.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '#' | '-' | '>'));
    for (field, key) in [
        (Field::Belief, "belief"),
        (Field::Tweet, "tweet"),
        (Field::Reasoning, "reasoning"),
    ] {
        let Some(head) = t.get(..key.len()) else {
            continue;
        };
        if head.eq_ignore_ascii_case(key) {
            let rest = t[key.len()..].trim_start_matches(['*', ' ']);
            if let Some(value) = rest.strip_prefix(':') {
                return Some((field, value.trim_start_matches('*').trim()));
            }
        }
    }
    None
}

fn first_binary_token(text: &str) -> Option<Belief> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .find_map(|tok| match tok {
            "0" => Some(Belief::Disbelieve),
            "1" => Some(Belief::Believe),
            _ => None,
        })
}

/// Parses `Belief: / Tweet: / Reasoning:` segments. The belief comes from the
/// `Belief:` segment when it holds a standalone 0 or 1, otherwise from the
/// first standalone 0 or 1 anywhere in the reply. A non-empty tweet is
/// required; a missing reasoning segment yields an empty string.
pub fn parse_opinion_reply(reply: &str) -> Option<OpinionDraft> {
    let mut belief_text = String::new();
    let mut tweet = String::new();
    let mut reasoning = String::new();
    let mut current: Option<Field> = None;
    for line in reply.lines() {
        let (field, value) = match labelled(line) {
            Some((field, value)) => {
                current = Some(field);
                (field, value)
            }
            None => match current {
                Some(field) => (field, line.trim()),
                None => continue,
            },
        };
        let slot = match field {
            Field::Belief => &mut belief_text,
            Field::Tweet => &mut tweet,
            Field::Reasoning => &mut reasoning,
        };
        if !value.is_empty() {
            if !slot.is_empty() {
                slot.push(' ');
            }
            slot.push_str(value);
        }
    }
    let belief = first_binary_token(&belief_text).or_else(|| first_binary_token(reply))?;
    let tweet = tweet.trim().trim_matches('"').trim().to_owned();
    if tweet.is_empty() {
        return None;
    }
    Some(OpinionDraft {
        belief,
        tweet,
        reasoning: reasoning.trim().to_owned(),
    })
}

impl OpinionBackend for LlmBackend {
    fn name(&self) -> &'static str {
        "llm"
    }

    fn summarize(
        &self,
        ctx: &CallContext<'_>,
        persona: &Persona,
        messages: &[Message],
    ) -> Result<String, BackendError> {
        let system = self.prompts.render_system(persona)?;
        let user = self
            .prompts
            .render_short_term(ctx.topic, &raw_transcript(messages))?;
        Ok(self.complete_with_retry(&system, &user)?.trim().to_owned())
    }

    fn integrate(
        &self,
        ctx: &CallContext<'_>,
        persona: &Persona,
        long_term: &str,
        short_term: &str,
        cap: usize,
    ) -> Result<String, BackendError> {
        let system = self.prompts.render_system(persona)?;
        let user = self
            .prompts
            .render_long_term(ctx.topic, long_term, short_term, cap)?;
        Ok(self.complete_with_retry(&system, &user)?.trim().to_owned())
    }

    fn form_opinion(
        &self,
        ctx: &CallContext<'_>,
        persona: &Persona,
        memory: MemoryView<'_>,
        previous: &Opinion,
        with_reasoning: bool,
    ) -> Result<OpinionDraft, BackendError> {
        self.llm_form_opinion(persona, ctx.topic, memory.text(), previous, with_reasoning)
            .map(|o| o.draft)
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn max_concurrency(&self) -> Option<usize> {
        Some(self.config.max_concurrent_requests)
    }
}
