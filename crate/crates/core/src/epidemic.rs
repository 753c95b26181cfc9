//! SIS compartment model: derivatives, fixed-step RK4 integration and
//! least-squares fitting of (β, γ) to an observed infected series.
//!
//! State variables are head counts, so β has units 1/(person·day):
//!
//! ```text
//! dS/dt = −β·S·I + γ·I
//! dI/dt =  β·S·I − γ·I
//! ```

use serde::{Deserialize, Serialize};

use crate::error::IntegrationError;
use crate::simulator::PopulationCounts;

/// Default integration step in days.
pub const DEFAULT_STEP: f64 = 0.05;
pub const MAX_STEP: f64 = 0.1;

pub const BETA_BOUNDS: (f64, f64) = (1e-4, 1.0);
pub const GAMMA_BOUNDS: (f64, f64) = (1e-4, 2.0);
pub const GRID_SIZE: usize = 50;
pub const MAX_REFINE_ITERATIONS: usize = 200;
pub const REFINE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SisParams {
    pub beta: f64,
    pub gamma: f64,
}

pub fn sis_derivatives(s: f64, i: f64, params: SisParams) -> (f64, f64) {
    let infection = params.beta * s * i;
    let recovery = params.gamma * i;
    (-infection + recovery, infection - recovery)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SisTrajectory {
    pub step: f64,
    pub times: Vec<f64>,
    pub susceptible: Vec<f64>,
    pub infected: Vec<f64>,
}

impl SisTrajectory {
    /// Infected count at integer days `0..=days`.
    pub fn daily_infected(&self) -> Vec<f64> {
        let per_day = (1.0 / self.step).round() as usize;
        self.infected.iter().step_by(per_day).copied().collect()
    }

    pub fn last(&self) -> (f64, f64) {
        (
            *self.susceptible.last().expect("trajectory is non-empty"),
            *self.infected.last().expect("trajectory is non-empty"),
        )
    }
}

/// Classical fourth-order Runge–Kutta with a fixed step. The step is adjusted
/// down so that it divides `horizon` exactly.
///
/// # Panics
///
/// If `step` is not in `(0, MAX_STEP]` or `horizon` is negative.
pub fn integrate_sis(
    params: SisParams,
    s0: f64,
    i0: f64,
    horizon: f64,
    step: f64,
) -> Result<SisTrajectory, IntegrationError> {
    assert!(step > 0.0 && step <= MAX_STEP, "step must be in (0, {MAX_STEP}]");
    assert!(horizon >= 0.0, "horizon must be non-negative");
    let n_steps = (horizon / step).ceil() as usize;
    let h = if n_steps == 0 { step } else { horizon / n_steps as f64 };
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut susceptible = Vec::with_capacity(n_steps + 1);
    let mut infected = Vec::with_capacity(n_steps + 1);
    let (mut s, mut i) = (s0, i0);
    times.push(0.0);
    susceptible.push(s);
    infected.push(i);
    for k in 1..=n_steps {
        let (k1s, k1i) = sis_derivatives(s, i, params);
        let (k2s, k2i) = sis_derivatives(s + 0.5 * h * k1s, i + 0.5 * h * k1i, params);
        let (k3s, k3i) = sis_derivatives(s + 0.5 * h * k2s, i + 0.5 * h * k2i, params);
        let (k4s, k4i) = sis_derivatives(s + h * k3s, i + h * k3i, params);
        s += h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
        i += h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i);
        let t = k as f64 * h;
        if !(s.is_finite() && i.is_finite()) {
            return Err(IntegrationError { time: t });
        }
        times.push(t);
        susceptible.push(s);
        infected.push(i);
    }
    Ok(SisTrajectory {
        step: h,
        times,
        susceptible,
        infected,
    })
}

/// Infected counts predicted at integer days `0..=days`.
pub fn predict_daily(
    params: SisParams,
    population: f64,
    i0: f64,
    days: usize,
) -> Result<Vec<f64>, IntegrationError> {
    integrate_sis(params, population - i0, i0, days as f64, DEFAULT_STEP)
        .map(|t| t.daily_infected())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxIterations,
    /// Observations carry no information about β (e.g. no infections).
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SisFit {
    pub beta: f64,
    pub gamma: f64,
    pub population: f64,
    pub initial_infected: f64,
    /// Sum of squared errors over all observation days.
    pub residual: f64,
    pub status: FitStatus,
    pub iterations: usize,
}

impl SisFit {
    pub fn params(&self) -> SisParams {
        SisParams {
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    /// Fitted infected counts at days `0..days`.
    pub fn fitted_series(&self, days: usize) -> Vec<f64> {
        if self.status == FitStatus::Degenerate {
            return vec![self.initial_infected; days];
        }
        let mut series = predict_daily(
            self.params(),
            self.population,
            self.initial_infected,
            days.saturating_sub(1),
        )
        .unwrap_or_else(|_| vec![f64::NAN; days]);
        series.truncate(days);
        series
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("need at least 3 observation days, got {0}")]
    TooFewObservations(usize),
    #[error("observation {day} = {value} outside [0, {population}]")]
    OutOfRange {
        day: usize,
        value: f64,
        population: f64,
    },
    #[error("population must be positive and finite")]
    Population,
}

fn sse(observed: &[f64], population: f64, i0: f64, params: SisParams) -> f64 {
    match predict_daily(params, population, i0, observed.len() - 1) {
        Ok(model) => model
            .iter()
            .zip(observed)
            .map(|(m, o)| (m - o) * (m - o))
            .sum(),
        Err(_) => f64::INFINITY,
    }
}

fn log_grid(bounds: (f64, f64), n: usize) -> Vec<f64> {
    let (lo, hi) = (bounds.0.ln(), bounds.1.ln());
    (0..n)
        .map(|k| (lo + (hi - lo) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Least-squares fit of (β, γ) to daily infected counts `observed[t]`,
/// `t = 0, 1, ...`, starting from `i0` infected.
///
/// A 50×50 log-spaced grid over the parameter box picks the start point; a
/// coordinate search in log-parameter space (with Hooke–Jeeves pattern moves)
/// then shrinks its step until an accepted move improves the loss by less
/// than a relative 1e−8, or 200 iterations pass.
pub fn fit_sis(observed: &[f64], population: f64, i0: f64) -> Result<SisFit, FitError> {
    if observed.len() < 3 {
        return Err(FitError::TooFewObservations(observed.len()));
    }
    if !(population.is_finite() && population > 0.0) {
        return Err(FitError::Population);
    }
    if let Some((day, &value)) = observed
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v.is_finite() && (0.0..=population).contains(&v)))
    {
        return Err(FitError::OutOfRange {
            day,
            value,
            population,
        });
    }
    if !(0.0..=population).contains(&i0) {
        return Err(FitError::OutOfRange {
            day: 0,
            value: i0,
            population,
        });
    }

    if i0 == 0.0 || observed.iter().all(|&v| v == 0.0) {
        // I ≡ 0 whatever the rates.
        let residual = observed.iter().map(|o| o * o).sum();
        return Ok(SisFit {
            beta: 0.0,
            gamma: 0.0,
            population,
            initial_infected: i0,
            residual,
            status: FitStatus::Degenerate,
            iterations: 0,
        });
    }

    let loss = |log_beta: f64, log_gamma: f64| {
        sse(
            observed,
            population,
            i0,
            SisParams {
                beta: log_beta.exp(),
                gamma: log_gamma.exp(),
            },
        )
    };

    let betas = log_grid(BETA_BOUNDS, GRID_SIZE);
    let gammas = log_grid(GAMMA_BOUNDS, GRID_SIZE);
    let mut best = (f64::INFINITY, 0usize, 0usize);
    for (bi, b) in betas.iter().enumerate() {
        for (gi, g) in gammas.iter().enumerate() {
            let l = loss(b.ln(), g.ln());
            if l < best.0 {
                best = (l, bi, gi);
            }
        }
    }

    let lower = [BETA_BOUNDS.0.ln(), GAMMA_BOUNDS.0.ln()];
    let upper = [BETA_BOUNDS.1.ln(), GAMMA_BOUNDS.1.ln()];
    let clamp = |p: [f64; 2]| [p[0].clamp(lower[0], upper[0]), p[1].clamp(lower[1], upper[1])];
    let explore = |from: [f64; 2], f_from: f64, step: [f64; 2]| {
        let (mut x, mut f) = (from, f_from);
        for k in 0..2 {
            for dir in [1.0, -1.0] {
                let mut trial = x;
                trial[k] = (x[k] + dir * step[k]).clamp(lower[k], upper[k]);
                if trial[k] == x[k] {
                    continue;
                }
                let l = loss(trial[0], trial[1]);
                if l < f {
                    x = trial;
                    f = l;
                    break;
                }
            }
        }
        (x, f)
    };

    let mut x = [betas[best.1].ln(), gammas[best.2].ln()];
    let mut f = best.0;
    let mut step = [
        (upper[0] - lower[0]) / (GRID_SIZE - 1) as f64,
        (upper[1] - lower[1]) / (GRID_SIZE - 1) as f64,
    ];
    let mut status = FitStatus::MaxIterations;
    let mut iterations = 0;
    'search: while iterations < MAX_REFINE_ITERATIONS {
        iterations += 1;
        if f == 0.0 {
            status = FitStatus::Converged;
            break;
        }
        let (moved, f_moved) = explore(x, f, step);
        if f_moved < f {
            let relative = (f - f_moved) / f;
            let (mut prev, mut base, mut f_base) = (x, moved, f_moved);
            // Pattern moves: keep extrapolating along the last successful
            // direction while it pays off.
            while iterations < MAX_REFINE_ITERATIONS {
                let jump = clamp([2.0 * base[0] - prev[0], 2.0 * base[1] - prev[1]]);
                let f_jump = loss(jump[0], jump[1]);
                let (probe, f_probe) = explore(jump, f_jump, step);
                if f_probe >= f_base {
                    break;
                }
                iterations += 1;
                (prev, base, f_base) = (base, probe, f_probe);
            }
            x = base;
            f = f_base;
            if relative < REFINE_TOLERANCE {
                status = FitStatus::Converged;
                break 'search;
            }
        } else {
            step = [step[0] * 0.5, step[1] * 0.5];
            if step[0] < 1e-12 && step[1] < 1e-12 {
                status = FitStatus::Converged;
                break;
            }
        }
    }

    Ok(SisFit {
        beta: x[0].exp(),
        gamma: x[1].exp(),
        population,
        initial_infected: i0,
        residual: f,
        status,
        iterations,
    })
}

/// Relabels recovered as susceptible: S' = S + R, I' = I.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SisCounts {
    pub susceptible: usize,
    pub infected: usize,
}

pub fn relabel_for_sis(counts: &[PopulationCounts]) -> Vec<SisCounts> {
    counts
        .iter()
        .map(|c| SisCounts {
            susceptible: c.susceptible + c.recovered,
            infected: c.infected,
        })
        .collect()
}

/// Fits the SIS model to a per-day S/I/R series (day 0 first).
pub fn fit_counts(counts: &[PopulationCounts]) -> Result<SisFit, FitError> {
    let relabelled = relabel_for_sis(counts);
    let population = relabelled
        .first()
        .map(|c| (c.susceptible + c.infected) as f64)
        .unwrap_or(0.0);
    let observed: Vec<f64> = relabelled.iter().map(|c| c.infected as f64).collect();
    let i0 = observed.first().copied().unwrap_or(0.0);
    fit_sis(&observed, population, i0)
}
