//! Propagation metrics over a finished run, plus distinct-n lexical
//! diversity of the opinions agents posted.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::Belief;
use crate::simulator::{PopulationCounts, SimulationTrace};

pub fn belief_average(beliefs: &[Belief]) -> f64 {
    assert!(!beliefs.is_empty(), "belief vector must be non-empty");
    beliefs.iter().filter(|b| b.is_believe()).count() as f64 / beliefs.len() as f64
}

/// Population variance (divides by N).
pub fn belief_variance(beliefs: &[Belief]) -> f64 {
    let mean = belief_average(beliefs);
    beliefs
        .iter()
        .map(|b| {
            let d = f64::from(u8::from(*b)) - mean;
            d * d
        })
        .sum::<f64>()
        / beliefs.len() as f64
}

fn horizon_of(counts: &[PopulationCounts]) -> f64 {
    assert!(counts.len() >= 2, "counts must cover day 0 and at least one day");
    (counts.len() - 1) as f64
}

/// I(T)/T in persons per day; `counts` is indexed by day, day 0 first.
pub fn infection_rate(counts: &[PopulationCounts]) -> f64 {
    counts.last().expect("non-empty").infected as f64 / horizon_of(counts)
}

/// R(T)/T in persons per day.
pub fn recovery_rate(counts: &[PopulationCounts]) -> f64 {
    counts.last().expect("non-empty").recovered as f64 / horizon_of(counts)
}

/// `(max_t I(t)/N, t*/T)` with `t*` the earliest maximizing day in `1..=T`.
pub fn peak_metrics(infected: &[usize], population: usize) -> (f64, f64) {
    assert!(infected.len() >= 2, "series must cover day 0 and at least one day");
    let horizon = (infected.len() - 1) as f64;
    let (mut peak_day, mut peak) = (1, infected[1]);
    for (day, &i) in infected.iter().enumerate().skip(2) {
        if i > peak {
            peak = i;
            peak_day = day;
        }
    }
    (peak as f64 / population as f64, peak_day as f64 / horizon)
}

/// Normalized time at which half the population first believes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HalfTime {
    At(f64),
    /// Never reached within the horizon, written `>1`.
    NotReached,
}

impl HalfTime {
    pub fn value(self) -> Option<f64> {
        match self {
            HalfTime::At(v) => Some(v),
            HalfTime::NotReached => None,
        }
    }
}

impl fmt::Display for HalfTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HalfTime::At(v) => write!(f, "{v:.3}"),
            HalfTime::NotReached => f.write_str(">1"),
        }
    }
}

impl Serialize for HalfTime {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            HalfTime::At(v) => s.serialize_f64(*v),
            HalfTime::NotReached => s.serialize_str(">1"),
        }
    }
}

impl<'de> Deserialize<'de> for HalfTime {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(HalfTime::At(v)),
            Repr::Text(t) if t == ">1" => Ok(HalfTime::NotReached),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad half time `{t}`"))),
        }
    }
}

/// First day `t` in `0..=T` with `I(t) ≥ N/2`, divided by `T`.
pub fn half_time_norm(infected: &[usize], population: usize) -> HalfTime {
    assert!(infected.len() >= 2, "series must cover day 0 and at least one day");
    let horizon = (infected.len() - 1) as f64;
    infected
        .iter()
        .position(|&i| 2 * i >= population)
        .map_or(HalfTime::NotReached, |t| HalfTime::At(t as f64 / horizon))
}

/// Lowercases, strips punctuation and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .filter(|c| !is_punct(*c))
        .collect::<String>()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '‘' | '’' | '“' | '”' | '…' | '–' | '—' | '«' | '»' | '¿' | '¡'
        )
}

/// Unique n-grams over total n-grams, pooled over the corpus. N-grams do not
/// cross text boundaries. An empty corpus (no n-grams) scores 0.
pub fn distinct_n<S: AsRef<str>>(texts: &[S], n: usize) -> f64 {
    assert!(n >= 1, "n must be positive");
    let mut total = 0usize;
    let mut unique = HashSet::new();
    for text in texts {
        let tokens = tokenize(text.as_ref());
        for gram in tokens.windows(n) {
            total += 1;
            unique.insert(gram.to_vec());
        }
    }
    if total == 0 {
        0.0
    } else {
        unique.len() as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub belief_average: f64,
    pub belief_variance: f64,
    pub infection_rate: f64,
    pub recovery_rate: f64,
    pub peak_fraction: f64,
    pub peak_time_norm: f64,
    pub half_time_norm: HalfTime,
    pub distinct_1: f64,
    pub distinct_2: f64,
}

pub const CSV_HEADER: &str = "belief_average,belief_variance,infection_rate,recovery_rate,peak_fraction,peak_time_norm,half_time_norm,distinct_1,distinct_2";

impl MetricsReport {
    /// Metrics from final beliefs, the day-indexed counts and the tweets.
    pub fn compute<S: AsRef<str>>(
        final_beliefs: &[Belief],
        counts: &[PopulationCounts],
        tweets: &[S],
    ) -> Self {
        let population = final_beliefs.len();
        let infected: Vec<usize> = counts.iter().map(|c| c.infected).collect();
        let (peak_fraction, peak_time_norm) = peak_metrics(&infected, population);
        Self {
            belief_average: belief_average(final_beliefs),
            belief_variance: belief_variance(final_beliefs),
            infection_rate: infection_rate(counts),
            recovery_rate: recovery_rate(counts),
            peak_fraction,
            peak_time_norm,
            half_time_norm: half_time_norm(&infected, population),
            distinct_1: distinct_n(tweets, 1),
            distinct_2: distinct_n(tweets, 2),
        }
    }

    pub fn from_trace(trace: &SimulationTrace) -> Self {
        Self::compute(&trace.final_beliefs(), &trace.counts, &trace.tweets())
    }

    pub fn csv_row(&self) -> String {
        let half = match self.half_time_norm {
            HalfTime::At(v) => v.to_string(),
            HalfTime::NotReached => ">1".to_owned(),
        };
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.belief_average,
            self.belief_variance,
            self.infection_rate,
            self.recovery_rate,
            self.peak_fraction,
            self.peak_time_norm,
            half,
            self.distinct_1,
            self.distinct_2
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{CSV_HEADER}\n{}\n", self.csv_row())
    }
}
