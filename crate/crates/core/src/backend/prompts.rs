//! Prompt templates with `{name}` placeholders.
//!
//! Defaults are bundled with the crate; a prompt directory may override any
//! of the files by name (`system.txt`, `short_term.txt`, `long_term.txt`,
//! `opinion.txt`, `reasoning_request.txt`, `official.txt`, `reask.txt`).

use std::fs;
use std::path::Path;

use crate::error::{BackendError, ConfigError};
use crate::persona::Persona;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub system: String,
    pub short_term: String,
    pub long_term: String,
    pub opinion: String,
    pub reasoning_request: String,
    pub official: String,
    pub reask: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            system: include_str!("../../assets/prompts/system.txt").to_owned(),
            short_term: include_str!("../../assets/prompts/short_term.txt").to_owned(),
            long_term: include_str!("../../assets/prompts/long_term.txt").to_owned(),
            opinion: include_str!("../../assets/prompts/opinion.txt").to_owned(),
            reasoning_request: include_str!("../../assets/prompts/reasoning_request.txt")
                .trim_end()
                .to_owned(),
            official: include_str!("../../assets/prompts/official.txt")
                .trim_end()
                .to_owned(),
            reask: include_str!("../../assets/prompts/reask.txt")
                .trim_end()
                .to_owned(),
        }
    }
}

impl PromptSet {
    /// Bundled defaults overridden by whichever files exist in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, ConfigError> {
        let mut set = PromptSet::default();
        let slots: [(&str, &mut String, bool); 7] = [
            ("system.txt", &mut set.system, false),
            ("short_term.txt", &mut set.short_term, false),
            ("long_term.txt", &mut set.long_term, false),
            ("opinion.txt", &mut set.opinion, false),
            ("reasoning_request.txt", &mut set.reasoning_request, true),
            ("official.txt", &mut set.official, true),
            ("reask.txt", &mut set.reask, true),
        ];
        if !dir.is_dir() {
            return Err(ConfigError::invalid(
                "prompt_dir",
                format!("{} is not a directory", dir.display()),
            ));
        }
        for (file, slot, fragment) in slots {
            let path = dir.join(file);
            if path.exists() {
                let text = fs::read_to_string(&path).map_err(|e| {
                    ConfigError::invalid("prompt_dir", format!("{}: {e}", path.display()))
                })?;
                *slot = if fragment {
                    text.trim_end().to_owned()
                } else {
                    text
                };
            }
        }
        Ok(set)
    }

    pub fn render_system(&self, persona: &Persona) -> Result<String, BackendError> {
        render(
            "system",
            &self.system,
            &[
                ("name", &persona.name),
                ("age", &persona.age.to_string()),
                ("trait", &persona.traits.describe()),
                ("education", persona.education.as_str()),
            ],
        )
    }

    pub fn render_short_term(&self, topic: &str, messages: &str) -> Result<String, BackendError> {
        render(
            "short_term",
            &self.short_term,
            &[("topic", topic), ("messages", messages)],
        )
    }

    pub fn render_long_term(
        &self,
        topic: &str,
        long_memory: &str,
        short_memory: &str,
        cap: usize,
    ) -> Result<String, BackendError> {
        let long_memory = if long_memory.is_empty() {
            "(empty)"
        } else {
            long_memory
        };
        render(
            "long_term",
            &self.long_term,
            &[
                ("topic", topic),
                ("long_memory", long_memory),
                ("short_memory", short_memory),
                ("cap", &cap.to_string()),
            ],
        )
    }

    pub fn render_opinion(
        &self,
        persona: &Persona,
        topic: &str,
        previous_opinion: &str,
        long_memory: &str,
        with_reasoning: bool,
    ) -> Result<String, BackendError> {
        let long_memory = if long_memory.is_empty() {
            "(empty)"
        } else {
            long_memory
        };
        let (request, format) = if with_reasoning {
            (self.reasoning_request.as_str(), "\nReasoning: <your reasoning>")
        } else {
            ("", "")
        };
        render(
            "opinion",
            &self.opinion,
            &[
                ("trait", &persona.traits.describe()),
                ("education", persona.education.as_str()),
                ("topic", topic),
                ("previous_opinion", previous_opinion),
                ("long_memory", long_memory),
                ("reasoning_request", request),
                ("reasoning_format", format),
            ],
        )
    }

    pub fn render_official(&self, topic: &str) -> Result<String, BackendError> {
        render("official", &self.official, &[("topic", topic)])
    }
}

/// Substitutes every `{key}` in one pass, so substituted values are never
/// re-scanned. Fails on any placeholder left without a value.
pub fn render(name: &str, template: &str, vars: &[(&str, &str)]) -> Result<String, BackendError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        let end = after.find('}').filter(|&end| is_identifier(&after[..end]));
        match end {
            Some(end) => {
                let key = &after[..end];
                let value = vars
                    .iter()
                    .find(|(k, _)| *k == key)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| BackendError::Template {
                        template: name.to_owned(),
                        placeholder: key.to_owned(),
                    })?;
                out.push_str(value);
                rest = &after[end + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}
