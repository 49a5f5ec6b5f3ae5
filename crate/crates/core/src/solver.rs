//! QUBO minimization.
//!
//! [`anneal`] runs a parallel-trial Metropolis search: every sweep evaluates
//! the flip energy of every variable against the current state, collects the
//! accepted candidates and applies one of them chosen uniformly. When a sweep
//! accepts nothing, a dynamic offset is added to the acceptance test so the
//! walk can climb out of the local minimum. [`exhaustive_min`] enumerates all
//! states in Gray-code order and serves as ground truth for small models.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qubo::{Decoded, Qubo, QuboModel};

pub const DEFAULT_EXHAUSTIVE_LIMIT: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Candidate-evaluation rounds per restart.
    pub sweeps: usize,
    pub restarts: usize,
    /// Derived from the coefficient scale when `None`.
    pub temp_initial: Option<f64>,
    pub temp_final: Option<f64>,
    /// Defaults to a tenth of the final temperature. Zero disables the offset.
    pub offset_increment: Option<f64>,
    pub seed: u64,
    pub time_budget: Option<Duration>,
    /// Starting state for restart 0 (all zeros otherwise).
    pub initial_state: Option<Vec<bool>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            sweeps: 2000,
            restarts: 8,
            temp_initial: None,
            temp_final: None,
            offset_increment: None,
            seed: 0,
            time_budget: None,
            initial_state: None,
        }
    }
}

impl SolverConfig {
    pub fn new(sweeps: usize, restarts: usize, seed: u64) -> Self {
        SolverConfig {
            sweeps,
            restarts,
            seed,
            ..Default::default()
        }
    }

    /// Resolves temperatures and the offset step against `qubo`.
    pub fn schedule(&self, qubo: &Qubo) -> Result<Schedule> {
        if self.sweeps == 0 || self.restarts == 0 {
            return Err(Error::InvalidParameter(
                "sweeps and restarts must be at least 1".into(),
            ));
        }
        let (auto_hot, auto_cold) = auto_temperatures(qubo);
        let initial = self.temp_initial.unwrap_or(auto_hot);
        let fin = self.temp_final.unwrap_or(auto_cold.min(initial));
        if !(initial.is_finite() && fin.is_finite() && initial > 0.0 && fin > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "temperatures must be positive, got {initial} and {fin}"
            )));
        }
        if initial < fin {
            return Err(Error::InvalidParameter(format!(
                "initial temperature {initial} below final temperature {fin}"
            )));
        }
        let offset_increment = self.offset_increment.unwrap_or(fin / 10.0);
        if !(offset_increment.is_finite() && offset_increment >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "offset increment must be >= 0, got {offset_increment}"
            )));
        }
        Ok(Schedule {
            initial,
            fin,
            sweeps: self.sweeps,
            offset_increment,
        })
    }
}

/// Hot enough that the largest possible flip is accepted half the time, cold
/// enough that the smallest coefficient is accepted 1% of the time.
fn auto_temperatures(qubo: &Qubo) -> (f64, f64) {
    let mut max_field = 0.0f64;
    let mut min_coef = f64::INFINITY;
    for i in 0..qubo.n_vars() {
        let lin = qubo.linear()[i].abs();
        let mut bound = lin;
        if lin > 0.0 {
            min_coef = min_coef.min(lin);
        }
        for &(_, v) in qubo.neighbors(i) {
            bound += v.abs();
            min_coef = min_coef.min(v.abs());
        }
        max_field = max_field.max(bound);
    }
    if max_field == 0.0 || !min_coef.is_finite() {
        return (1.0, 1.0);
    }
    let hot = max_field / std::f64::consts::LN_2;
    let cold = min_coef / 100f64.ln();
    (hot, cold.min(hot))
}

/// Geometric temperature schedule from `initial` to `fin` over `sweeps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Schedule {
    pub initial: f64,
    #[serde(rename = "final")]
    pub fin: f64,
    pub sweeps: usize,
    pub offset_increment: f64,
}

impl Schedule {
    pub fn temperature(&self, sweep: usize) -> f64 {
        if self.sweeps <= 1 {
            return self.initial;
        }
        let frac = sweep as f64 / (self.sweeps - 1) as f64;
        self.initial * (self.fin / self.initial).powf(frac)
    }

    pub fn temperatures(&self) -> Vec<f64> {
        (0..self.sweeps).map(|s| self.temperature(s)).collect()
    }
}

/// A bit vector with cached local fields, so flip energies are O(1) and an
/// applied flip costs O(degree).
#[derive(Debug, Clone)]
pub struct FieldState<'a> {
    qubo: &'a Qubo,
    bits: Vec<bool>,
    field: Vec<f64>,
    energy: f64,
}

impl<'a> FieldState<'a> {
    pub fn new(qubo: &'a Qubo, bits: Vec<bool>) -> Result<Self> {
        let energy = qubo.energy(&bits)?;
        let mut state = FieldState {
            qubo,
            field: Vec::new(),
            bits,
            energy,
        };
        state.recompute_fields();
        Ok(state)
    }

    fn recompute_fields(&mut self) {
        let q = self.qubo;
        self.field = (0..q.n_vars())
            .map(|i| {
                q.linear()[i]
                    + q.neighbors(i)
                        .iter()
                        .filter(|(j, _)| self.bits[*j])
                        .map(|(_, v)| v)
                        .sum::<f64>()
            })
            .collect();
    }

    /// Recomputes energy and fields from scratch, discarding rounding drift.
    pub fn resync(&mut self) {
        self.energy = self.qubo.energy(&self.bits).expect("length checked");
        self.recompute_fields();
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Incrementally tracked energy.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Energy change from flipping bit `i`.
    pub fn flip_delta(&self, i: usize) -> Result<f64> {
        if i >= self.bits.len() {
            return Err(Error::IndexOutOfRange {
                what: "variable",
                index: i,
                len: self.bits.len(),
            });
        }
        Ok(self.delta(i))
    }

    #[inline]
    fn delta(&self, i: usize) -> f64 {
        if self.bits[i] {
            -self.field[i]
        } else {
            self.field[i]
        }
    }

    /// Flips bit `i`, updates neighbouring fields, returns the energy change.
    pub fn flip(&mut self, i: usize) -> Result<f64> {
        let d = self.flip_delta(i)?;
        self.apply(i, d);
        Ok(d)
    }

    #[inline]
    fn apply(&mut self, i: usize, delta: f64) {
        let sign = if self.bits[i] { -1.0 } else { 1.0 };
        self.bits[i] = !self.bits[i];
        self.energy += delta;
        for &(j, v) in self.qubo.neighbors(i) {
            self.field[j] += sign * v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartStats {
    pub best_energy: f64,
    pub accepted_flips: u64,
    pub offset_activations: u64,
    pub sweeps_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveStats {
    pub restarts: Vec<RestartStats>,
    pub best_restart: usize,
    /// True when the time budget cut at least one restart short.
    pub truncated: bool,
    pub schedule: Schedule,
}

/// Result of annealing a bare [`Qubo`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealOutcome {
    pub best_bits: Vec<bool>,
    pub best_energy: f64,
    pub stats: SolveStats,
    /// Wall-clock time; the only field that varies between identical runs.
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub best_bits: Vec<bool>,
    pub best_energy: f64,
    pub decoded: Decoded,
    pub stats: SolveStats,
    pub elapsed: Duration,
}

struct RestartOutcome {
    bits: Vec<bool>,
    energy: f64,
    stats: RestartStats,
    truncated: bool,
}

fn run_restart(
    qubo: &Qubo,
    schedule: &Schedule,
    config: &SolverConfig,
    restart: usize,
    deadline: Option<Instant>,
    observe: &mut dyn FnMut(f64),
) -> RestartOutcome {
    let n = qubo.n_vars();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(restart as u64);

    let start = match (&config.initial_state, restart) {
        (Some(init), 0) => init.clone(),
        (None, 0) => vec![false; n],
        _ => (0..n).map(|_| rng.gen::<bool>()).collect(),
    };
    let mut state = FieldState::new(qubo, start).expect("initial state length checked");
    observe(state.energy());

    let mut best_bits = state.bits().to_vec();
    let mut best_energy = state.energy();
    let mut offset = 0.0;
    let mut accepted = Vec::with_capacity(n);
    let mut stats = RestartStats {
        best_energy,
        accepted_flips: 0,
        offset_activations: 0,
        sweeps_run: 0,
    };
    let mut truncated = false;

    for sweep in 0..schedule.sweeps {
        if let Some(deadline) = deadline {
            if Instant::now() >= deadline {
                truncated = true;
                break;
            }
        }
        let temp = schedule.temperature(sweep);
        accepted.clear();
        for i in 0..n {
            let d = state.delta(i) - offset;
            if d <= 0.0 || rng.gen::<f64>() < (-d / temp).exp() {
                accepted.push(i);
            }
        }
        stats.sweeps_run += 1;

        if accepted.is_empty() {
            offset += schedule.offset_increment;
            stats.offset_activations += 1;
            continue;
        }
        let pick = accepted[rng.gen_range(0..accepted.len())];
        let d = state.delta(pick);
        state.apply(pick, d);
        offset = 0.0;
        stats.accepted_flips += 1;
        observe(state.energy());

        if state.energy() < best_energy {
            best_energy = state.energy();
            best_bits.copy_from_slice(state.bits());
        }
    }

    let energy = qubo.energy(&best_bits).expect("length checked");
    stats.best_energy = energy;
    RestartOutcome {
        bits: best_bits,
        energy,
        stats,
        truncated,
    }
}

fn check_config(qubo: &Qubo, config: &SolverConfig) -> Result<Schedule> {
    let schedule = config.schedule(qubo)?;
    if let Some(init) = &config.initial_state {
        qubo.check_len(init)?;
    }
    Ok(schedule)
}

/// Anneals a bare QUBO. Restarts run concurrently; the result depends only
/// on `(qubo, config)` unless a time budget truncates the run.
pub fn anneal_qubo(qubo: &Qubo, config: &SolverConfig) -> Result<AnnealOutcome> {
    let schedule = check_config(qubo, config)?;
    let started = Instant::now();
    let deadline = config.time_budget.map(|b| started + b);

    let outcomes: Vec<RestartOutcome> = (0..config.restarts)
        .into_par_iter()
        .map(|r| run_restart(qubo, &schedule, config, r, deadline, &mut |_| {}))
        .collect();

    // lowest energy wins, earlier restart on ties
    let best_restart = outcomes
        .iter()
        .enumerate()
        .fold(0, |best, (r, o)| if o.energy < outcomes[best].energy { r } else { best });

    let truncated = outcomes.iter().any(|o| o.truncated);
    let restarts = outcomes.iter().map(|o| o.stats.clone()).collect();
    let best = outcomes.into_iter().nth(best_restart).expect("at least one restart");
    Ok(AnnealOutcome {
        best_bits: best.bits,
        best_energy: best.energy,
        stats: SolveStats {
            restarts,
            best_restart,
            truncated,
            schedule,
        },
        elapsed: started.elapsed(),
    })
}

/// Anneals a compiled model and decodes the best state.
pub fn anneal(model: &QuboModel, config: &SolverConfig) -> Result<SolveResult> {
    let out = anneal_qubo(model.qubo(), config)?;
    let decoded = model.decode(&out.best_bits)?;
    Ok(SolveResult {
        best_bits: out.best_bits,
        best_energy: out.best_energy,
        decoded,
        stats: out.stats,
        elapsed: out.elapsed,
    })
}

/// Global minimum by enumerating all `2^n` states. Ties go to the state with
/// the smallest value read as a little-endian integer (bit 0 least
/// significant).
pub fn exhaustive_min(qubo: &Qubo) -> Result<(Vec<bool>, f64)> {
    exhaustive_min_with_limit(qubo, DEFAULT_EXHAUSTIVE_LIMIT)
}

pub fn exhaustive_min_with_limit(qubo: &Qubo, limit: usize) -> Result<(Vec<bool>, f64)> {
    let n = qubo.n_vars();
    if n > limit || n >= 64 {
        return Err(Error::SizeLimit { n_vars: n, limit });
    }
    const RESYNC: u64 = 1 << 12;
    let tie = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);

    let mut state = FieldState::new(qubo, vec![false; n])?;
    let mut value: u64 = 0;
    let mut best_value = 0u64;
    let mut best_energy = state.energy();

    for g in 1u64..(1u64 << n) {
        let bit = g.trailing_zeros() as usize;
        let d = state.delta(bit);
        state.apply(bit, d);
        value ^= 1 << bit;
        if g % RESYNC == 0 {
            state.resync();
        }
        let e = state.energy();
        if tie(e, best_energy) {
            if value < best_value {
                best_value = value;
                best_energy = best_energy.min(e);
            }
        } else if e < best_energy {
            best_value = value;
            best_energy = e;
        }
    }

    let bits: Vec<bool> = (0..n).map(|b| best_value >> b & 1 == 1).collect();
    let energy = qubo.energy(&bits)?;
    Ok((bits, energy))
}
