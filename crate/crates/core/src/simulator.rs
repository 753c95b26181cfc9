//! The agent interaction simulator: contact scheduling, official
//! interventions, population labelling and the day loop.
//!
//! Days are 1-based; day 0 is the initialization snapshot. Each day runs in
//! two barrier-separated phases. First every inbox is filled from the
//! previous day's opinion snapshot (official statement first, then peers in
//! ascending speaker id). Then every agent runs its reflection pipeline.
//! Agents draw randomness from their own agent-day stream, so the second
//! phase runs in parallel and the result does not depend on update order.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentState, Belief, Message, Pipeline};
use crate::backend::prompts::PromptSet;
use crate::backend::OpinionBackend;
use crate::config::SimulationConfig;
use crate::error::{AgentError, ConfigError, Error};
use crate::persona::{generate_persona, Persona};
use crate::rng::{stream_rng, Stream, DAY_MIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationLabel {
    Susceptible,
    Infected,
    Recovered,
}

impl PopulationLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PopulationLabel::Susceptible => "susceptible",
            PopulationLabel::Infected => "infected",
            PopulationLabel::Recovered => "recovered",
        }
    }
}

/// Modified SIR labelling: infected agents believe now; recovered agents
/// believed on some earlier day but not now; susceptible agents never did.
pub fn classify_state(history: &[Belief]) -> Result<PopulationLabel, AgentError> {
    let (&current, earlier) = history.split_last().ok_or(AgentError::EmptyHistory)?;
    Ok(match current {
        Belief::Believe => PopulationLabel::Infected,
        Belief::Disbelieve if earlier.iter().any(|b| b.is_believe()) => PopulationLabel::Recovered,
        Belief::Disbelieve => PopulationLabel::Susceptible,
    })
}

/// Days on which the official agent broadcasts a refutation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum InterventionSchedule {
    #[default]
    None,
    OnDays(Vec<u32>),
    EveryK { start: u32, k: u32 },
}

impl InterventionSchedule {
    pub fn fires_on(&self, day: u32) -> bool {
        match self {
            InterventionSchedule::None => false,
            InterventionSchedule::OnDays(days) => days.contains(&day),
            InterventionSchedule::EveryK { start, k } => day >= *start && (day - start).is_multiple_of(*k),
        }
    }

    /// Expanded list of intervention days within `1..=horizon`.
    pub fn days(&self, horizon: u32) -> Vec<u32> {
        (1..=horizon).filter(|&d| self.fires_on(d)).collect()
    }

    pub fn validate(&self, horizon: u32) -> Result<(), ConfigError> {
        let in_range = |d: u32| (1..=horizon).contains(&d);
        match self {
            InterventionSchedule::None => Ok(()),
            InterventionSchedule::OnDays(days) => match days.iter().find(|&&d| !in_range(d)) {
                Some(d) => Err(ConfigError::invalid(
                    "intervention",
                    format!("day {d} outside 1..={horizon}"),
                )),
                None if days.is_empty() => Err(ConfigError::invalid(
                    "intervention",
                    "on_days needs at least one day",
                )),
                None => Ok(()),
            },
            InterventionSchedule::EveryK { start, k } => {
                if !in_range(*start) {
                    Err(ConfigError::invalid(
                        "intervention",
                        format!("start day {start} outside 1..={horizon}"),
                    ))
                } else if *k == 0 {
                    Err(ConfigError::invalid("intervention", "every_k period must be ≥ 1"))
                } else {
                    Ok(())
                }
            }
        }
    }
}

impl fmt::Display for InterventionSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InterventionSchedule::None => f.write_str("none"),
            InterventionSchedule::OnDays(days) => {
                let list: Vec<String> = days.iter().map(u32::to_string).collect();
                write!(f, "on_days({})", list.join(","))
            }
            InterventionSchedule::EveryK { start, k } => write!(f, "every_k({start},{k})"),
        }
    }
}

impl FromStr for InterventionSchedule {
    type Err = String;

    /// Grammar: `none` | `on_days(d1,d2,...)` | `every_k(start,k)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "none" {
            return Ok(InterventionSchedule::None);
        }
        let (mode, args) = s
            .strip_suffix(')')
            .and_then(|body| body.split_once('('))
            .ok_or_else(|| format!("unknown intervention mode `{s}`"))?;
        let numbers = args
            .split(',')
            .map(|a| a.trim())
            .filter(|a| !a.is_empty())
            .map(|a| {
                a.parse::<u32>()
                    .map_err(|_| format!("`{a}` is not a day number"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        match (mode.trim(), numbers.as_slice()) {
            ("on_days", []) => Err("on_days needs at least one day".to_owned()),
            ("on_days", _) => Ok(InterventionSchedule::OnDays(numbers)),
            ("every_k", [start, k]) => Ok(InterventionSchedule::EveryK {
                start: *start,
                k: *k,
            }),
            ("every_k", _) => Err("every_k takes exactly two arguments: start, k".to_owned()),
            (other, _) => Err(format!("unknown intervention mode `{other}`")),
        }
    }
}

impl Serialize for InterventionSchedule {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InterventionSchedule {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionMode {
    /// The listener hears the speaker; the speaker hears nothing back.
    #[default]
    Directed,
    /// Every scheduled contact is heard in both directions.
    Symmetric,
}

/// Inclusive range of contacts per agent per day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "[usize; 2]", from = "[usize; 2]")]
pub struct ContactRange {
    pub min: usize,
    pub max: usize,
}

impl From<[usize; 2]> for ContactRange {
    fn from([min, max]: [usize; 2]) -> Self {
        Self { min, max }
    }
}

impl From<ContactRange> for [usize; 2] {
    fn from(r: ContactRange) -> Self {
        [r.min, r.max]
    }
}

impl Default for ContactRange {
    fn default() -> Self {
        Self { min: 2, max: 5 }
    }
}

/// Directed contact: `listener` hears `speaker`'s previous-day opinion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interaction {
    pub listener: u32,
    pub speaker: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PopulationCounts {
    #[serde(rename = "S")]
    pub susceptible: usize,
    #[serde(rename = "I")]
    pub infected: usize,
    #[serde(rename = "R")]
    pub recovered: usize,
}

impl PopulationCounts {
    pub fn total(&self) -> usize {
        self.susceptible + self.infected + self.recovered
    }
}

/// Speakers are drawn without replacement from the other `n − 1` agents;
/// the listener's contact count is uniform on `range`. Output is grouped by
/// listener with speakers in ascending order.
pub fn schedule_interactions<R: Rng + ?Sized>(
    n_agents: usize,
    range: ContactRange,
    rng: &mut R,
) -> Result<Vec<Interaction>, ConfigError> {
    if n_agents < 2 {
        return Err(ConfigError::invalid(
            "n_agents",
            "at least two agents are needed to interact",
        ));
    }
    if range.min < 1 || range.min > range.max || range.max > n_agents - 1 {
        return Err(ConfigError::invalid(
            "contacts_per_day",
            format!(
                "need 1 ≤ c_min ≤ c_max ≤ N−1 = {}, got [{}, {}]",
                n_agents - 1,
                range.min,
                range.max
            ),
        ));
    }
    let mut edges = Vec::with_capacity(n_agents * range.max);
    for listener in 0..n_agents {
        let c = rng.random_range(range.min..=range.max);
        let mut speakers: Vec<usize> = index::sample(rng, n_agents - 1, c)
            .into_iter()
            .map(|i| if i < listener { i } else { i + 1 })
            .collect();
        speakers.sort_unstable();
        edges.extend(speakers.into_iter().map(|s| Interaction {
            listener: listener as u32,
            speaker: s as u32,
        }));
    }
    Ok(edges)
}

/// Adds the reverse of every contact, dropping duplicates.
pub fn symmetrize(edges: &[Interaction]) -> Vec<Interaction> {
    let mut all: Vec<Interaction> = edges
        .iter()
        .flat_map(|e| {
            [
                *e,
                Interaction {
                    listener: e.speaker,
                    speaker: e.listener,
                },
            ]
        })
        .collect();
    all.sort_unstable();
    all.dedup();
    all
}

/// Delivers the official refutation to every agent if `day` is scheduled.
/// Returns the number of messages delivered.
pub fn apply_intervention(
    day: u32,
    schedule: &InterventionSchedule,
    agents: &mut [AgentState],
    statement: &str,
) -> Result<usize, AgentError> {
    if !schedule.fires_on(day) {
        return Ok(0);
    }
    for agent in agents.iter_mut() {
        agent.receive(Message::official(statement))?;
    }
    Ok(agents.len())
}

pub fn tally_populations(agents: &[AgentState]) -> PopulationCounts {
    let mut counts = PopulationCounts::default();
    for a in agents {
        match a.label {
            PopulationLabel::Susceptible => counts.susceptible += 1,
            PopulationLabel::Infected => counts.infected += 1,
            PopulationLabel::Recovered => counts.recovered += 1,
        }
    }
    counts
}

/// One agent's state at the end of a day, as written to the transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: u32,
    pub day: u32,
    pub belief: Belief,
    pub tweet: String,
    pub reasoning: String,
    pub short_term: String,
    pub long_term: String,
    pub label: PopulationLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AgentRecord {
    fn capture(agent: &AgentState, day: u32, short_term: String) -> Self {
        Self {
            id: agent.id(),
            day,
            belief: agent.opinion.belief,
            tweet: agent.opinion.tweet.clone(),
            reasoning: agent.opinion.reasoning.clone(),
            short_term,
            long_term: agent.memory.long_term.clone(),
            label: agent.label,
            error: agent.last_error.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub config: SimulationConfig,
    pub seed: u64,
    pub personas: Vec<Persona>,
    /// Index = day, `0..=horizon`.
    pub counts: Vec<PopulationCounts>,
    /// Index = day, one record per agent in id order.
    pub records: Vec<Vec<AgentRecord>>,
    /// Index = day − 1.
    pub interactions: Vec<Vec<Interaction>>,
    pub intervention_days: Vec<u32>,
    pub backend: String,
    pub backend_failures: usize,
}

impl SimulationTrace {
    pub fn horizon(&self) -> u32 {
        (self.counts.len() - 1) as u32
    }

    pub fn population(&self) -> usize {
        self.personas.len()
    }

    pub fn final_beliefs(&self) -> Vec<Belief> {
        self.records
            .last()
            .map(|day| day.iter().map(|r| r.belief).collect())
            .unwrap_or_default()
    }

    pub fn infected_series(&self) -> Vec<usize> {
        self.counts.iter().map(|c| c.infected).collect()
    }

    /// Tweets from simulated days (day 0 templates excluded).
    pub fn tweets(&self) -> Vec<&str> {
        self.records
            .iter()
            .skip(1)
            .flatten()
            .map(|r| r.tweet.as_str())
            .collect()
    }
}

/// Order in which agents run their daily pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum UpdateOrder {
    #[default]
    Parallel,
    Sequential(Vec<usize>),
}

/// A run in progress. [`run_simulation`] drives it to completion.
pub struct Simulation<'a> {
    config: &'a SimulationConfig,
    backend: &'a dyn OpinionBackend,
    statement: String,
    agents: Vec<AgentState>,
    day: u32,
    trace: SimulationTrace,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Simulation<'a> {
    pub fn new(
        config: &'a SimulationConfig,
        backend: &'a dyn OpinionBackend,
        prompts: &PromptSet,
        name_pool: &[String],
    ) -> Result<Self, Error> {
        config.validate()?;
        let seed = config.seed;
        let mut rng = stream_rng(seed, Stream::Population);
        let profile = config.profile.profile();
        let personas = (0..config.n_agents as u32)
            .map(|id| generate_persona(&mut rng, id, &profile, name_pool))
            .collect::<Result<Vec<_>, _>>()?;
        let infected: Vec<usize> =
            index::sample(&mut rng, config.n_agents, config.n_initially_infected).into_vec();
        let topic = config.topic.trim();
        let agents = personas
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, p)| AgentState::new(p, infected.contains(&i), topic, config.long_term_char_cap))
            .collect::<Result<Vec<_>, _>>()?;
        let statement = prompts.render_official(topic).map_err(|e| {
            ConfigError::invalid("prompt_dir", e.to_string())
        })?;
        let pool = match backend.max_concurrency() {
            Some(n) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| ConfigError::invalid("max_concurrent_requests", e.to_string()))?,
            ),
            None => None,
        };
        let day0: Vec<AgentRecord> = agents
            .iter()
            .map(|a| AgentRecord::capture(a, 0, String::new()))
            .collect();
        let trace = SimulationTrace {
            config: config.clone(),
            seed,
            personas,
            counts: vec![tally_populations(&agents)],
            records: vec![day0],
            interactions: Vec::new(),
            intervention_days: Vec::new(),
            backend: backend.name().to_owned(),
            backend_failures: 0,
        };
        Ok(Self {
            config,
            backend,
            statement,
            agents,
            day: 0,
            trace,
            pool,
        })
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn day(&self) -> u32 {
        self.day
    }

    pub fn is_finished(&self) -> bool {
        self.day >= self.config.horizon
    }

    pub fn step(&mut self, order: &UpdateOrder) -> Result<PopulationCounts, Error> {
        let day = self.day + 1;
        let config = self.config;

        // Phase 1: deliver messages from the previous-day snapshot.
        let snapshot: Vec<(Belief, String)> = self
            .agents
            .iter()
            .map(|a| (a.opinion.belief, a.opinion.tweet.clone()))
            .collect();
        let mut schedule_rng = stream_rng(
            config.seed ^ u64::from(day).wrapping_mul(DAY_MIX),
            Stream::Schedule,
        );
        let mut edges =
            schedule_interactions(config.n_agents, config.contacts_per_day, &mut schedule_rng)?;
        if config.interaction_mode == InteractionMode::Symmetric {
            edges = symmetrize(&edges);
        }
        if apply_intervention(day, &config.intervention, &mut self.agents, &self.statement)? > 0 {
            self.trace.intervention_days.push(day);
        }
        for e in &edges {
            let (belief, tweet) = &snapshot[e.speaker as usize];
            self.agents[e.listener as usize].receive(Message::peer(e.speaker, *belief, tweet.clone()))?;
        }

        // Phase 2: per-agent pipelines.
        let pipeline = Pipeline::new(self.backend, config.topic.trim(), config.seed)
            .with_ablation(config.ablation)
            .with_tweet_cap(config.tweet_char_cap);
        let mut cleared = vec![String::new(); self.agents.len()];
        match order {
            UpdateOrder::Parallel => {
                let agents = &mut self.agents;
                let slots = &mut cleared;
                let mut run = move || {
                    agents
                        .par_iter_mut()
                        .zip(slots.par_iter_mut())
                        .try_for_each(|(agent, slot)| {
                            *slot = agent.run_day(&pipeline)?;
                            Ok::<_, AgentError>(())
                        })
                };
                match &self.pool {
                    Some(pool) => pool.install(run)?,
                    None => run()?,
                }
            }
            UpdateOrder::Sequential(ids) => {
                for &i in ids {
                    cleared[i] = self.agents[i].run_day(&pipeline)?;
                }
            }
        }

        let records: Vec<AgentRecord> = self
            .agents
            .iter()
            .zip(cleared)
            .map(|(a, short)| AgentRecord::capture(a, day, short))
            .collect();
        self.trace.backend_failures += records.iter().filter(|r| r.error.is_some()).count();
        let counts = tally_populations(&self.agents);
        self.trace.counts.push(counts);
        self.trace.records.push(records);
        self.trace.interactions.push(edges);
        self.day = day;
        Ok(counts)
    }

    pub fn into_trace(self) -> SimulationTrace {
        self.trace
    }
}

/// Runs a full simulation from initialization through `config.horizon` days.
pub fn run_simulation(
    config: &SimulationConfig,
    backend: &dyn OpinionBackend,
    prompts: &PromptSet,
    name_pool: &[String],
) -> Result<SimulationTrace, Error> {
    run_simulation_ordered(config, backend, prompts, name_pool, &UpdateOrder::Parallel)
}

pub fn run_simulation_ordered(
    config: &SimulationConfig,
    backend: &dyn OpinionBackend,
    prompts: &PromptSet,
    name_pool: &[String],
    order: &UpdateOrder,
) -> Result<SimulationTrace, Error> {
    let mut sim = Simulation::new(config, backend, prompts, name_pool)?;
    while !sim.is_finished() {
        sim.step(order)?;
    }
    Ok(sim.into_trace())
}
