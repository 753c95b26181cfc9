//! Agent personas: name, age, education and a Big Five polarity vector.
//!
//! Personas are immutable for the lifetime of a run. The mock backend reads
//! them through [`susceptibility_score`], which folds agreeableness,
//! neuroticism and education into a single belief-adoption propensity.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

pub const MIN_AGE: u32 = 18;
pub const MAX_AGE: u32 = 64;

/// Bundled name pool, one name per line.
pub const DEFAULT_NAME_POOL: &str = include_str!("../assets/names.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    High,
    Low,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::High => 1.0,
            Polarity::Low => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::High => "high",
            Polarity::Low => "low",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraitVector {
    pub openness: Polarity,
    pub conscientiousness: Polarity,
    pub extraversion: Polarity,
    pub agreeableness: Polarity,
    pub neuroticism: Polarity,
}

impl TraitVector {
    pub fn uniform(polarity: Polarity) -> Self {
        Self {
            openness: polarity,
            conscientiousness: polarity,
            extraversion: polarity,
            agreeableness: polarity,
            neuroticism: polarity,
        }
    }

    /// Dimensions in canonical order, paired with their names.
    pub fn dimensions(&self) -> [(&'static str, Polarity); 5] {
        [
            ("openness", self.openness),
            ("conscientiousness", self.conscientiousness),
            ("extraversion", self.extraversion),
            ("agreeableness", self.agreeableness),
            ("neuroticism", self.neuroticism),
        ]
    }

    /// Renders e.g. `high openness, low conscientiousness, ...` for prompts.
    pub fn describe(&self) -> String {
        self.dimensions()
            .iter()
            .map(|(name, p)| format!("{} {}", p.as_str(), name))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraitRule {
    Random5050,
    ForceHigh,
    ForceLow,
}

impl TraitRule {
    fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> Polarity {
        match self {
            TraitRule::Random5050 => {
                if rng.random_bool(0.5) {
                    Polarity::High
                } else {
                    Polarity::Low
                }
            }
            TraitRule::ForceHigh => Polarity::High,
            TraitRule::ForceLow => Polarity::Low,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraitProfile {
    pub openness: TraitRule,
    pub conscientiousness: TraitRule,
    pub extraversion: TraitRule,
    pub agreeableness: TraitRule,
    pub neuroticism: TraitRule,
}

impl TraitProfile {
    pub fn uniform(rule: TraitRule) -> Self {
        Self {
            openness: rule,
            conscientiousness: rule,
            extraversion: rule,
            agreeableness: rule,
            neuroticism: rule,
        }
    }

    /// Every dimension is a fair coin.
    pub fn random() -> Self {
        Self::uniform(TraitRule::Random5050)
    }

    /// High agreeableness and high neuroticism, the rest random.
    pub fn credulous() -> Self {
        Self {
            agreeableness: TraitRule::ForceHigh,
            neuroticism: TraitRule::ForceHigh,
            ..Self::random()
        }
    }

    /// Low agreeableness and low neuroticism, the rest random.
    pub fn skeptical() -> Self {
        Self {
            agreeableness: TraitRule::ForceLow,
            neuroticism: TraitRule::ForceLow,
            ..Self::random()
        }
    }
}

/// Named profiles selectable from config files and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    #[default]
    Random,
    Credulous,
    Skeptical,
}

impl ProfileKind {
    pub fn profile(self) -> TraitProfile {
        match self {
            ProfileKind::Random => TraitProfile::random(),
            ProfileKind::Credulous => TraitProfile::credulous(),
            ProfileKind::Skeptical => TraitProfile::skeptical(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileKind::Random => "random",
            ProfileKind::Credulous => "credulous",
            ProfileKind::Skeptical => "skeptical",
        }
    }
}

impl FromStr for ProfileKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "random" => Ok(ProfileKind::Random),
            "credulous" => Ok(ProfileKind::Credulous),
            "skeptical" => Ok(ProfileKind::Skeptical),
            other => Err(format!(
                "unknown trait profile `{other}` (expected random, credulous or skeptical)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Education {
    Primary,
    Secondary,
    Bachelor,
    Master,
    Doctorate,
}

impl Education {
    pub const ALL: [Education; 5] = [
        Education::Primary,
        Education::Secondary,
        Education::Bachelor,
        Education::Master,
        Education::Doctorate,
    ];

    /// Rank centred on bachelor: -2 ..= 2.
    pub fn rank(self) -> i32 {
        match self {
            Education::Primary => -2,
            Education::Secondary => -1,
            Education::Bachelor => 0,
            Education::Master => 1,
            Education::Doctorate => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Education::Primary => "primary school",
            Education::Secondary => "secondary school",
            Education::Bachelor => "bachelor's degree",
            Education::Master => "master's degree",
            Education::Doctorate => "doctorate",
        }
    }
}

impl fmt::Display for Education {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Persona {
    pub id: u32,
    pub name: String,
    pub age: u32,
    pub education: Education,
    pub traits: TraitVector,
}

/// Coefficients of the susceptibility formula used by the mock backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SusceptibilityWeights {
    pub base: f64,
    pub agreeableness: f64,
    pub neuroticism: f64,
    pub education: f64,
}

impl Default for SusceptibilityWeights {
    fn default() -> Self {
        Self {
            base: 0.5,
            agreeableness: 0.15,
            neuroticism: 0.15,
            education: 0.05,
        }
    }
}

pub const SUSCEPTIBILITY_FLOOR: f64 = 0.05;
pub const SUSCEPTIBILITY_CEIL: f64 = 0.95;

pub fn sample_traits<R: Rng + ?Sized>(rng: &mut R, profile: &TraitProfile) -> TraitVector {
    // Draw order is fixed so seeded runs stay reproducible.
    TraitVector {
        openness: profile.openness.sample(rng),
        conscientiousness: profile.conscientiousness.sample(rng),
        extraversion: profile.extraversion.sample(rng),
        agreeableness: profile.agreeableness.sample(rng),
        neuroticism: profile.neuroticism.sample(rng),
    }
}

pub fn generate_persona<R: Rng + ?Sized>(
    rng: &mut R,
    id: u32,
    profile: &TraitProfile,
    name_pool: &[String],
) -> Result<Persona, ConfigError> {
    let name = name_pool
        .choose(rng)
        .ok_or_else(|| ConfigError::invalid("name_pool", "name pool is empty"))?
        .clone();
    let age = rng.random_range(MIN_AGE..=MAX_AGE);
    let education = *Education::ALL
        .choose(rng)
        .expect("education levels are non-empty");
    let traits = sample_traits(rng, profile);
    Ok(Persona {
        id,
        name,
        age,
        education,
        traits,
    })
}

/// Parses a name-pool file: UTF-8, one name per line, blank lines ignored.
pub fn parse_name_pool(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect()
}

pub fn default_name_pool() -> Vec<String> {
    parse_name_pool(DEFAULT_NAME_POOL)
}

pub fn susceptibility_score(persona: &Persona) -> f64 {
    susceptibility_with(persona, &SusceptibilityWeights::default())
}

pub fn susceptibility_with(persona: &Persona, weights: &SusceptibilityWeights) -> f64 {
    let raw = weights.base + weights.agreeableness * persona.traits.agreeableness.sign()
        + weights.neuroticism * persona.traits.neuroticism.sign()
        - weights.education * f64::from(persona.education.rank());
    raw.clamp(SUSCEPTIBILITY_FLOOR, SUSCEPTIBILITY_CEIL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn persona(a: Polarity, n: Polarity, education: Education) -> Persona {
        Persona {
            id: 0,
            name: "Test".into(),
            age: 30,
            education,
            traits: TraitVector {
                agreeableness: a,
                neuroticism: n,
                ..TraitVector::uniform(Polarity::Low)
            },
        }
    }

    #[test]
    fn forced_profile_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let profile = TraitProfile::uniform(TraitRule::ForceHigh);
        for _ in 0..100 {
            assert_eq!(
                sample_traits(&mut rng, &profile),
                TraitVector::uniform(Polarity::High)
            );
        }
    }

    #[test]
    fn credulous_and_skeptical_pin_two_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let c = sample_traits(&mut rng, &TraitProfile::credulous());
            assert_eq!(c.agreeableness, Polarity::High);
            assert_eq!(c.neuroticism, Polarity::High);
            let s = sample_traits(&mut rng, &TraitProfile::skeptical());
            assert_eq!(s.agreeableness, Polarity::Low);
            assert_eq!(s.neuroticism, Polarity::Low);
        }
    }

    #[test]
    fn random_dimension_is_fair() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let profile = TraitProfile::random();
        let highs = (0..10_000)
            .filter(|_| sample_traits(&mut rng, &profile).openness == Polarity::High)
            .count();
        let frac = highs as f64 / 10_000.0;
        assert!((frac - 0.5).abs() <= 0.02, "high fraction {frac}");
    }

    #[test]
    fn persona_generation_is_seeded() {
        let pool = default_name_pool();
        let a = generate_persona(
            &mut ChaCha8Rng::seed_from_u64(9),
            4,
            &TraitProfile::random(),
            &pool,
        )
        .unwrap();
        let b = generate_persona(
            &mut ChaCha8Rng::seed_from_u64(9),
            4,
            &TraitProfile::random(),
            &pool,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn persona_ids_and_ages() {
        let pool = default_name_pool();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let personas: Vec<_> = (0..30)
            .map(|id| generate_persona(&mut rng, id, &TraitProfile::random(), &pool).unwrap())
            .collect();
        let mut ids: Vec<_> = personas.iter().map(|p| p.id).collect();
        ids.dedup();
        assert_eq!(ids.len(), 30);
        assert!(personas
            .iter()
            .all(|p| (MIN_AGE..=MAX_AGE).contains(&p.age) && pool.contains(&p.name)));
    }

    #[test]
    fn empty_pool_is_a_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = generate_persona(&mut rng, 0, &TraitProfile::random(), &[]).unwrap_err();
        assert!(err.to_string().contains("name pool"));
    }

    #[test]
    fn name_pool_skips_blank_lines() {
        assert_eq!(parse_name_pool("Ann\n\n  \nBo \r\n"), vec!["Ann", "Bo"]);
        assert!(default_name_pool().len() >= 50);
    }

    #[test]
    fn susceptibility_examples() {
        use Polarity::*;
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(
            susceptibility_score(&persona(High, High, Education::Bachelor)),
            0.80
        ));
        assert!(close(
            susceptibility_score(&persona(Low, Low, Education::Bachelor)),
            0.20
        ));
        assert!(close(
            susceptibility_score(&persona(High, High, Education::Primary)),
            0.90
        ));
    }

    #[test]
    fn credulous_mean_exceeds_skeptical_mean() {
        let pool = default_name_pool();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mean = |profile: TraitProfile, rng: &mut ChaCha8Rng| {
                (0..30)
                    .map(|id| susceptibility_score(&generate_persona(rng, id, &profile, &pool).unwrap()))
                    .sum::<f64>()
                    / 30.0
            };
            let c = mean(TraitProfile::credulous(), &mut rng);
            let s = mean(TraitProfile::skeptical(), &mut rng);
            assert!(c > s, "seed {seed}: {c} <= {s}");
        }
    }

    fn polarity() -> impl Strategy<Value = Polarity> {
        prop_oneof![Just(Polarity::High), Just(Polarity::Low)]
    }

    fn education() -> impl Strategy<Value = Education> {
        prop::sample::select(Education::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn susceptibility_is_monotone(a in polarity(), n in polarity(), e in education()) {
            let s = susceptibility_score(&persona(a, n, e));
            prop_assert!((SUSCEPTIBILITY_FLOOR..=SUSCEPTIBILITY_CEIL).contains(&s));
            prop_assert!(susceptibility_score(&persona(Polarity::High, n, e)) >= s);
            prop_assert!(susceptibility_score(&persona(a, Polarity::High, e)) >= s);
            if e != Education::Doctorate {
                let next = Education::ALL[(e.rank() + 3) as usize];
                prop_assert!(susceptibility_score(&persona(a, n, next)) <= s);
            }
        }
    }
}
