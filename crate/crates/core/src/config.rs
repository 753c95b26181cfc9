//! Run configuration: TOML parsing with defaults, validation and echo.
//!
//! Only `topic` is required. Unknown keys are rejected, and every error names
//! the offending key together with its line in the source file when the key
//! appears there.
//!
//! ```toml
//! topic = "a new vaccine alters human DNA"
//! n_agents = 30
//! horizon = 15
//! contacts_per_day = [2, 5]
//! intervention = "every_k(1,3)"
//! profile = "credulous"
//!
//! [ablation]
//! disable_short_term = true
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{AblationFlags, DEFAULT_LONG_TERM_CHAR_CAP, DEFAULT_TWEET_CHAR_CAP};
use crate::backend::llm::LlmConfig;
use crate::backend::mock::MockConfig;
use crate::backend::BackendKind;
use crate::error::ConfigError;
use crate::persona::ProfileKind;
use crate::simulator::{ContactRange, InteractionMode, InterventionSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub topic: String,
    #[serde(default = "defaults::n_agents")]
    pub n_agents: usize,
    #[serde(default = "defaults::horizon")]
    pub horizon: u32,
    #[serde(default)]
    pub contacts_per_day: ContactRange,
    #[serde(default = "defaults::n_initially_infected")]
    pub n_initially_infected: usize,
    #[serde(default, with = "seed_format")]
    pub seed: u64,
    #[serde(default)]
    pub profile: ProfileKind,
    #[serde(default)]
    pub intervention: InterventionSchedule,
    #[serde(default)]
    pub interaction_mode: InteractionMode,
    #[serde(default = "defaults::long_term_char_cap")]
    pub long_term_char_cap: usize,
    #[serde(default = "defaults::tweet_char_cap")]
    pub tweet_char_cap: usize,
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name_pool: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_dir: Option<PathBuf>,
    #[serde(default)]
    pub ablation: AblationFlags,
    #[serde(default)]
    pub mock: MockConfig,
    #[serde(default)]
    pub llm: LlmConfig,
}

mod defaults {
    pub fn n_agents() -> usize {
        30
    }
    pub fn horizon() -> u32 {
        15
    }
    pub fn n_initially_infected() -> usize {
        1
    }
    pub fn long_term_char_cap() -> usize {
        super::DEFAULT_LONG_TERM_CHAR_CAP
    }
    pub fn tweet_char_cap() -> usize {
        super::DEFAULT_TWEET_CHAR_CAP
    }
}

impl SimulationConfig {
    /// Defaults for everything except the topic.
    pub fn new(topic: impl Into<String>) -> Self {
        Self {
            topic: topic.into(),
            n_agents: defaults::n_agents(),
            horizon: defaults::horizon(),
            contacts_per_day: ContactRange::default(),
            n_initially_infected: defaults::n_initially_infected(),
            seed: 0,
            profile: ProfileKind::default(),
            intervention: InterventionSchedule::default(),
            interaction_mode: InteractionMode::default(),
            long_term_char_cap: defaults::long_term_char_cap(),
            tweet_char_cap: defaults::tweet_char_cap(),
            backend: BackendKind::default(),
            name_pool: None,
            prompt_dir: None,
            ablation: AblationFlags::default(),
            mock: MockConfig::default(),
            llm: LlmConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.topic.trim().is_empty() {
            return Err(ConfigError::invalid("topic", "topic must not be empty"));
        }
        let n = self.n_agents;
        if n < 2 {
            return Err(ConfigError::invalid(
                "n_agents",
                format!("need at least 2 agents, got {n}"),
            ));
        }
        if n > u32::MAX as usize {
            return Err(ConfigError::invalid("n_agents", "too many agents"));
        }
        if self.horizon < 1 {
            return Err(ConfigError::invalid("horizon", "horizon must be ≥ 1 day"));
        }
        let c = self.contacts_per_day;
        if c.min < 1 || c.min > c.max || c.max > n - 1 {
            return Err(ConfigError::invalid(
                "contacts_per_day",
                format!(
                    "need 1 ≤ c_min ≤ c_max ≤ N−1 = {}, got [{}, {}]",
                    n - 1,
                    c.min,
                    c.max
                ),
            ));
        }
        if self.n_initially_infected > n {
            return Err(ConfigError::invalid(
                "n_initially_infected",
                format!("must be ≤ n_agents = {n}, got {}", self.n_initially_infected),
            ));
        }
        self.intervention.validate(self.horizon)?;
        if self.long_term_char_cap == 0 {
            return Err(ConfigError::invalid("long_term_char_cap", "must be ≥ 1"));
        }
        if self.tweet_char_cap == 0 {
            return Err(ConfigError::invalid("tweet_char_cap", "must be ≥ 1"));
        }
        self.mock.validate()?;
        self.llm.validate()?;
        Ok(())
    }
}

/// Parses and validates a config file.
pub fn parse_config(path: &Path) -> Result<SimulationConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::invalid("config", format!("{}: {e}", path.display())))?;
    let mut config = parse_config_str(&text)?;
    // Relative asset paths resolve against the config file's directory.
    let base = path.parent().unwrap_or(Path::new("."));
    for p in [&mut config.name_pool, &mut config.prompt_dir]
        .into_iter()
        .flatten()
    {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(config)
}

pub fn parse_config_str(text: &str) -> Result<SimulationConfig, ConfigError> {
    let config: SimulationConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|span| line_of_offset(text, span.start));
        ConfigError::invalid("config", e.message().trim().to_owned()).at_line(line)
    })?;
    config
        .validate()
        .map_err(|e| {
            let line = find_key_line(text, &e.key);
            e.at_line(line)
        })?;
    Ok(config)
}

pub fn write_config(config: &SimulationConfig) -> String {
    toml::to_string(config).expect("config always serializes")
}

/// TOML integers are signed 64-bit; larger seeds are written as strings.
mod seed_format {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.collect_str(seed),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(v),
            Repr::Text(t) => t.trim().parse().map_err(serde::de::Error::custom),
        }
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn find_key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|line| {
        line.trim_start()
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str("topic = \"x\"").unwrap();
        assert_eq!(c.n_agents, 30);
        assert_eq!(c.horizon, 15);
        assert_eq!(c.contacts_per_day, ContactRange { min: 2, max: 5 });
        assert_eq!(c.seed, 0);
        assert_eq!(c.n_initially_infected, 1);
        assert_eq!(c.backend, BackendKind::Mock);
        assert_eq!(c, SimulationConfig::new("x"));
    }

    #[test]
    fn missing_topic_is_reported() {
        let err = parse_config_str("n_agents = 10").unwrap_err();
        assert!(err.message.contains("topic"), "{err}");
    }

    #[test]
    fn c_max_equal_to_n_is_rejected_with_line() {
        let err = parse_config_str("topic = \"x\"\nn_agents = 10\ncontacts_per_day = [2, 10]\n")
            .unwrap_err();
        assert_eq!(err.key, "contacts_per_day");
        assert_eq!(err.line, Some(3));
        assert!(err.to_string().starts_with("line 3: contacts_per_day"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse_config_str("topic = \"x\"\n\nfoo = 1\n").unwrap_err();
        assert_eq!(err.line, Some(3));
        let err = parse_config_str("topic = \"x\"\n[mock]\nofficial_wieght = 2.0\n").unwrap_err();
        assert!(err.message.contains("official_wieght"), "{err}");
    }

    #[test]
    fn intervention_spec_parses() {
        let c = parse_config_str("topic = \"x\"\nintervention = \"every_k(1,3)\"").unwrap();
        assert_eq!(c.intervention.days(c.horizon), vec![1, 4, 7, 10, 13]);
        let err = parse_config_str("topic = \"x\"\nintervention = \"weekly\"").unwrap_err();
        assert_eq!(err.line, Some(2));
        let err = parse_config_str("topic = \"x\"\nhorizon = 5\nintervention = \"on_days(7)\"")
            .unwrap_err();
        assert_eq!((err.key.as_str(), err.line), ("intervention", Some(3)));
    }

    #[test]
    fn range_violations() {
        for (body, key) in [
            ("n_initially_infected = 31", "n_initially_infected"),
            ("horizon = 0", "horizon"),
            ("n_agents = 1\ncontacts_per_day = [1, 1]", "n_agents"),
            ("[mock]\nofficial_weight = 0.5", "official_weight"),
            ("[llm]\ntimeout_secs = 0.0", "timeout_secs"),
        ] {
            let err = parse_config_str(&format!("topic = \"x\"\n{body}")).unwrap_err();
            assert_eq!(err.key, key, "{body}");
        }
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "topic = \"x\"\nname_pool = \"names.txt\"\n").unwrap();
        let c = parse_config(&path).unwrap();
        assert_eq!(c.name_pool.unwrap(), dir.path().join("names.txt"));
        assert!(parse_config(&dir.path().join("missing.toml")).is_err());
    }

    fn schedule() -> impl Strategy<Value = InterventionSchedule> {
        prop_oneof![
            Just(InterventionSchedule::None),
            prop::collection::vec(1u32..=10, 1..4).prop_map(InterventionSchedule::OnDays),
            (1u32..=10, 1u32..5).prop_map(|(start, k)| InterventionSchedule::EveryK { start, k }),
        ]
    }

    prop_compose! {
        fn valid_config()(
            n in 3usize..60,
            horizon in 10u32..30,
            seed in any::<u64>(),
            lo in 1usize..3,
            extra in 0usize..2,
            schedule in schedule(),
            profile in prop_oneof![Just(ProfileKind::Random), Just(ProfileKind::Credulous), Just(ProfileKind::Skeptical)],
            flags in any::<(bool, bool, bool)>(),
            weight in 1.0f64..10.0,
            temperature in 0.0f64..2.0,
        ) -> SimulationConfig {
            let mut c = SimulationConfig::new("topic with \"quotes\" and ünïcode");
            c.n_agents = n;
            c.horizon = horizon;
            c.seed = seed;
            c.contacts_per_day = ContactRange { min: lo.min(n - 1), max: (lo + extra).min(n - 1) };
            c.n_initially_infected = n / 3;
            c.intervention = schedule;
            c.profile = profile;
            c.ablation = AblationFlags {
                disable_long_term: flags.0,
                disable_short_term: flags.1,
                disable_reasoning: flags.2,
            };
            c.mock.official_weight = weight;
            c.llm.temperature = temperature;
            c
        }
    }

    proptest! {
        #[test]
        fn write_then_parse_round_trips(c in valid_config()) {
            prop_assert!(c.validate().is_ok());
            let text = write_config(&c);
            prop_assert_eq!(parse_config_str(&text).unwrap(), c);
        }
    }
}
