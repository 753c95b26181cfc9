//! Run orchestration and on-disk artifacts.
//!
//! A run directory holds:
//!
//! | file               | contents                                        |
//! |--------------------|-------------------------------------------------|
//! | `counts.csv`       | `day,S,I,R`, one row per day including day 0    |
//! | `transcript.jsonl` | one [`AgentRecord`] per agent per day           |
//! | `metrics.csv`      | one [`MetricsReport`] row                       |
//! | `fit.json`         | SIS fit and the fitted daily overlay            |
//! | `config.toml`      | the effective configuration                     |
//! | `manifest.json`    | seed, timestamps, backend identity, call counts |
//!
//! plus `interactions.csv` (`day,listener,speaker`). A run that fails leaves
//! a `FAILED` marker carrying the error instead.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::agent::Belief;
use crate::backend::llm::LlmBackend;
use crate::backend::mock::MockBackend;
use crate::backend::prompts::PromptSet;
use crate::backend::{BackendKind, OpinionBackend};
use crate::config::{write_config, SimulationConfig};
use crate::epidemic::{fit_counts, SisFit};
use crate::error::{ArtifactError, ConfigError, Error};
use crate::metrics::MetricsReport;
use crate::persona::{default_name_pool, parse_name_pool};
use crate::simulator::{AgentRecord, PopulationCounts, Simulation, SimulationTrace, UpdateOrder};

pub const COUNTS_FILE: &str = "counts.csv";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const FIT_FILE: &str = "fit.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const INTERACTIONS_FILE: &str = "interactions.csv";
pub const FAILED_MARKER: &str = "FAILED";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunArtifacts {
    pub dir: PathBuf,
}

impl RunArtifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn counts(&self) -> PathBuf {
        self.dir.join(COUNTS_FILE)
    }
    pub fn transcript(&self) -> PathBuf {
        self.dir.join(TRANSCRIPT_FILE)
    }
    pub fn metrics(&self) -> PathBuf {
        self.dir.join(METRICS_FILE)
    }
    pub fn fit(&self) -> PathBuf {
        self.dir.join(FIT_FILE)
    }
    pub fn config(&self) -> PathBuf {
        self.dir.join(CONFIG_FILE)
    }
    pub fn manifest(&self) -> PathBuf {
        self.dir.join(MANIFEST_FILE)
    }
    pub fn interactions(&self) -> PathBuf {
        self.dir.join(INTERACTIONS_FILE)
    }
    pub fn failed_marker(&self) -> PathBuf {
        self.dir.join(FAILED_MARKER)
    }

    /// The six required artifacts, in a fixed order.
    pub fn required(&self) -> [PathBuf; 6] {
        [
            self.counts(),
            self.transcript(),
            self.metrics(),
            self.fit(),
            self.config(),
            self.manifest(),
        ]
    }

    pub fn is_complete(&self) -> bool {
        self.required().iter().all(|p| p.is_file())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub started_unix: f64,
    pub finished_unix: f64,
    /// `mock` or `llm`.
    pub backend: String,
    /// Model name for the LLM backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub backend_calls: u64,
    pub backend_failures: usize,
    pub n_agents: usize,
    pub horizon: u32,
    pub version: String,
}

/// SIS fit plus the fitted infected counts aligned with the observed rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    #[serde(flatten)]
    pub fit: SisFit,
    pub observed: Vec<usize>,
    pub fitted: Vec<f64>,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), ArtifactError> {
    fs::write(path, contents).map_err(|e| ArtifactError::io(path, e))
}

fn read_file(path: &Path) -> Result<String, ArtifactError> {
    if !path.exists() {
        return Err(ArtifactError::Missing(path.to_owned()));
    }
    fs::read_to_string(path).map_err(|e| ArtifactError::io(path, e))
}

/// Prompt set and name pool named by the config, or the bundled defaults.
pub fn load_assets(config: &SimulationConfig) -> Result<(PromptSet, Vec<String>), ConfigError> {
    let prompts = match &config.prompt_dir {
        Some(dir) => PromptSet::load_dir(dir)?,
        None => PromptSet::default(),
    };
    let names = match &config.name_pool {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                ConfigError::invalid("name_pool", format!("{}: {e}", path.display()))
            })?;
            let names = parse_name_pool(&text);
            if names.is_empty() {
                return Err(ConfigError::invalid(
                    "name_pool",
                    format!("{} holds no names", path.display()),
                ));
            }
            names
        }
        None => default_name_pool(),
    };
    Ok((prompts, names))
}

pub fn build_backend(
    config: &SimulationConfig,
    prompts: &PromptSet,
) -> Result<Box<dyn OpinionBackend>, ConfigError> {
    Ok(match config.backend {
        BackendKind::Mock => Box::new(MockBackend::new(config.mock)),
        BackendKind::Llm => {
            let llm = config.llm.clone().with_env_api_key();
            if llm.api_key.is_none() {
                log::warn!(
                    "{} is not set; requests are sent without an API key",
                    crate::backend::llm::API_KEY_ENV
                );
            }
            Box::new(LlmBackend::new(llm, prompts.clone())?)
        }
    })
}

/// Runs the simulation and writes every artifact into `out_dir`.
/// `on_day` sees each day's counts as soon as the day completes (day 0
/// included). On failure the directory gets a `FAILED` marker.
pub fn run_command(
    config: &SimulationConfig,
    out_dir: &Path,
    on_day: &mut dyn FnMut(u32, PopulationCounts),
) -> Result<(RunArtifacts, SimulationTrace), Error> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| ArtifactError::io(out_dir, e))?;
    let artifacts = RunArtifacts::new(out_dir);
    let result = run_into(config, &artifacts, on_day);
    match &result {
        Ok(_) => {
            let marker = artifacts.failed_marker();
            if marker.exists() {
                fs::remove_file(&marker).map_err(|e| ArtifactError::io(&marker, e))?;
            }
        }
        Err(e) => {
            // Best effort: the original error matters more than this one.
            let _ = fs::write(artifacts.failed_marker(), format!("{e}\n"));
        }
    }
    result.map(|trace| (artifacts, trace))
}

fn run_into(
    config: &SimulationConfig,
    artifacts: &RunArtifacts,
    on_day: &mut dyn FnMut(u32, PopulationCounts),
) -> Result<SimulationTrace, Error> {
    let started = unix_now();
    let (prompts, names) = load_assets(config)?;
    let backend = build_backend(config, &prompts)?;
    let mut sim = Simulation::new(config, backend.as_ref(), &prompts, &names)?;
    on_day(0, crate::simulator::tally_populations(sim.agents()));
    while !sim.is_finished() {
        let counts = sim.step(&UpdateOrder::Parallel)?;
        on_day(sim.day(), counts);
    }
    let trace = sim.into_trace();

    write_file(&artifacts.config(), write_config(config))?;
    write_counts(&artifacts.counts(), &trace.counts, trace.population())?;
    write_transcript(&artifacts.transcript(), &trace.records)?;
    write_interactions(&artifacts.interactions(), &trace)?;
    let report = MetricsReport::from_trace(&trace);
    write_file(&artifacts.metrics(), report.to_csv())?;
    write_fit(&artifacts.fit(), &trace.counts)?;

    let manifest = Manifest {
        seed: trace.seed,
        started_unix: started,
        finished_unix: unix_now(),
        backend: backend.name().to_owned(),
        model: (config.backend == BackendKind::Llm).then(|| config.llm.model_name.clone()),
        backend_calls: backend.calls(),
        backend_failures: trace.backend_failures,
        n_agents: config.n_agents,
        horizon: config.horizon,
        version: env!("CARGO_PKG_VERSION").to_owned(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&artifacts.manifest(), json + "\n")?;
    Ok(trace)
}

pub fn format_counts(counts: &[PopulationCounts], population: usize) -> Result<String, String> {
    let mut out = String::from("day,S,I,R\n");
    for (day, c) in counts.iter().enumerate() {
        if c.total() != population {
            return Err(format!(
                "day {day}: S+I+R = {} but N = {population}",
                c.total()
            ));
        }
        writeln!(out, "{day},{},{},{}", c.susceptible, c.infected, c.recovered)
            .expect("writing to a String");
    }
    Ok(out)
}

pub fn write_counts(
    path: &Path,
    counts: &[PopulationCounts],
    population: usize,
) -> Result<(), ArtifactError> {
    let text = format_counts(counts, population).map_err(|message| ArtifactError::Invalid {
        path: path.to_owned(),
        message,
    })?;
    write_file(path, text)
}

/// Parses a counts file. Rows must run day 0, 1, 2, ... and share one total.
/// Row numbers in errors are 1-based file lines.
pub fn parse_counts(path: &Path, text: &str) -> Result<Vec<PopulationCounts>, ArtifactError> {
    let malformed = |row: usize, message: String| ArtifactError::Malformed {
        path: path.to_owned(),
        row,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim() == "day,S,I,R" => {}
        Some((i, header)) => {
            return Err(malformed(i + 1, format!("expected header `day,S,I,R`, got `{header}`")))
        }
        None => return Err(malformed(1, "empty counts file".to_owned())),
    }
    let mut counts = Vec::new();
    let mut population = None;
    for (i, line) in lines {
        let row = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(malformed(row, format!("expected 4 fields, got {}", fields.len())));
        }
        let nums = fields
            .iter()
            .map(|f| f.parse::<usize>().map_err(|_| malformed(row, format!("`{f}` is not a count"))))
            .collect::<Result<Vec<_>, _>>()?;
        if nums[0] != counts.len() {
            return Err(malformed(row, format!("expected day {}, got {}", counts.len(), nums[0])));
        }
        let c = PopulationCounts {
            susceptible: nums[1],
            infected: nums[2],
            recovered: nums[3],
        };
        match population {
            None => population = Some(c.total()),
            Some(n) if n != c.total() => {
                return Err(malformed(row, format!("S+I+R = {} but N = {n}", c.total())))
            }
            Some(_) => {}
        }
        counts.push(c);
    }
    if counts.is_empty() {
        return Err(malformed(2, "no data rows".to_owned()));
    }
    Ok(counts)
}

pub fn read_counts(path: &Path) -> Result<Vec<PopulationCounts>, ArtifactError> {
    parse_counts(path, &read_file(path)?)
}

pub fn write_transcript(path: &Path, records: &[Vec<AgentRecord>]) -> Result<(), ArtifactError> {
    let mut out = String::new();
    for record in records.iter().flatten() {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    write_file(path, out)
}

/// Reads a transcript and regroups it by day. Every day `0..=T` must hold
/// the same agents in id order.
pub fn read_transcript(path: &Path) -> Result<Vec<Vec<AgentRecord>>, ArtifactError> {
    let text = read_file(path)?;
    let mut days: Vec<Vec<AgentRecord>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: AgentRecord =
            serde_json::from_str(line).map_err(|e| ArtifactError::Malformed {
                path: path.to_owned(),
                row: i + 1,
                message: e.to_string(),
            })?;
        let day = record.day as usize;
        if day == days.len() {
            days.push(Vec::new());
        } else if day + 1 != days.len() {
            return Err(ArtifactError::Malformed {
                path: path.to_owned(),
                row: i + 1,
                message: format!("day {day} out of sequence"),
            });
        }
        days[day].push(record);
    }
    if days.is_empty() {
        return Err(ArtifactError::Invalid {
            path: path.to_owned(),
            message: "transcript is empty".to_owned(),
        });
    }
    let n = days[0].len();
    if let Some((day, _)) = days.iter().enumerate().find(|(_, d)| d.len() != n) {
        return Err(ArtifactError::Invalid {
            path: path.to_owned(),
            message: format!("day {day} has a different number of agents than day 0"),
        });
    }
    Ok(days)
}

fn write_interactions(path: &Path, trace: &SimulationTrace) -> Result<(), ArtifactError> {
    let mut out = String::from("day,listener,speaker\n");
    for (i, edges) in trace.interactions.iter().enumerate() {
        for e in edges {
            writeln!(out, "{},{},{}", i + 1, e.listener, e.speaker).expect("writing to a String");
        }
    }
    write_file(path, out)
}

pub fn fit_artifact(counts: &[PopulationCounts]) -> Result<FitArtifact, crate::epidemic::FitError> {
    let fit = fit_counts(counts)?;
    let fitted = fit.fitted_series(counts.len());
    Ok(FitArtifact {
        fit,
        observed: counts.iter().map(|c| c.infected).collect(),
        fitted,
    })
}

fn write_fit(path: &Path, counts: &[PopulationCounts]) -> Result<FitArtifact, ArtifactError> {
    let artifact = fit_artifact(counts).map_err(|e| ArtifactError::Invalid {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    let json = serde_json::to_string_pretty(&artifact).expect("fit serializes");
    write_file(path, json + "\n")?;
    Ok(artifact)
}

/// Fits the SIS model to a counts file and writes the fit to `out`.
pub fn fit_command(counts_path: &Path, out: &Path) -> Result<FitArtifact, ArtifactError> {
    let counts = read_counts(counts_path)?;
    write_fit(out, &counts)
}

/// Recomputes the metrics of a run directory from its counts and transcript.
pub fn compute_metrics(dir: &Path) -> Result<MetricsReport, ArtifactError> {
    let artifacts = RunArtifacts::new(dir);
    let counts_path = artifacts.counts();
    let counts = read_counts(&counts_path)?;
    let transcript_path = artifacts.transcript();
    let days = read_transcript(&transcript_path)?;
    if days.len() != counts.len() {
        return Err(ArtifactError::Invalid {
            path: transcript_path,
            message: format!(
                "covers {} days but {} has {} rows",
                days.len(),
                COUNTS_FILE,
                counts.len()
            ),
        });
    }
    if counts.len() < 2 {
        return Err(ArtifactError::Invalid {
            path: counts_path,
            message: "need day 0 and at least one simulated day".to_owned(),
        });
    }
    let last = days.last().expect("non-empty");
    let beliefs: Vec<Belief> = last.iter().map(|r| r.belief).collect();
    if beliefs.len() != counts[0].total() {
        return Err(ArtifactError::Invalid {
            path: transcript_path,
            message: format!(
                "{} agents per day but counts total {}",
                beliefs.len(),
                counts[0].total()
            ),
        });
    }
    let tweets: Vec<&str> = days.iter().skip(1).flatten().map(|r| r.tweet.as_str()).collect();
    Ok(MetricsReport::compute(&beliefs, &counts, &tweets))
}

/// Writes `metrics.csv` into the run directory.
pub fn metrics_command(dir: &Path) -> Result<MetricsReport, ArtifactError> {
    let report = compute_metrics(dir)?;
    write_file(&RunArtifacts::new(dir).metrics(), report.to_csv())?;
    Ok(report)
}

/// Computes metrics for each run directory and renders a comparison table.
pub fn report_command(dirs: &[PathBuf]) -> Result<String, ArtifactError> {
    let mut rows = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let report = metrics_command(dir)?;
        let label = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        rows.push((label, report));
    }
    Ok(render_table(&rows))
}

pub const TABLE_COLUMNS: [&str; 9] = [
    "Belief Average",
    "Belief Variance",
    "Infection Rate",
    "Recovery Rate",
    "Peak Rate (fraction)",
    "Peak Rate (time)",
    "Half Rate",
    "Distinct-1",
    "Distinct-2",
];

pub fn render_table(rows: &[(String, MetricsReport)]) -> String {
    let label_width = rows
        .iter()
        .map(|(l, _)| l.chars().count())
        .chain(["Run".len()])
        .max()
        .unwrap_or(3);
    let mut out = String::new();
    write!(out, "{:<label_width$}", "Run").unwrap();
    for col in TABLE_COLUMNS {
        write!(out, " | {col}").unwrap();
    }
    out.push('\n');
    for (label, r) in rows {
        let cells = [
            format!("{:.3}", r.belief_average),
            format!("{:.3}", r.belief_variance),
            format!("{:.3}", r.infection_rate),
            format!("{:.3}", r.recovery_rate),
            format!("{:.3}", r.peak_fraction),
            format!("{:.3}", r.peak_time_norm),
            r.half_time_norm.to_string(),
            format!("{:.3}", r.distinct_1),
            format!("{:.3}", r.distinct_2),
        ];
        write!(out, "{label:<label_width$}").unwrap();
        for (col, cell) in TABLE_COLUMNS.iter().zip(cells) {
            write!(out, " | {cell:>w$}", w = col.len()).unwrap();
        }
        out.push('\n');
    }
    out.push_str(
        "\nPeak Rate is ambiguous between the maximum infected fraction and the normalized \
         day it occurs; both are shown.\n",
    );
    out
}
