//! Independent trials of the slot controller, run in parallel and merged in trial order.

use rayon::prelude::*;
use swipt_core::config::SystemConfig;
use swipt_core::control::{run_trial, ControlError, EnergyAccount, SolverChoice, TrialOutput};
use swipt_core::record::SlotRecord;
use thiserror::Error;

use crate::config::LoadError;
use crate::export::ExportError;
use crate::summary::{summarize, ExperimentSummary, TimingSummary};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Config(#[from] LoadError),
    #[error("{0}")]
    Usage(String),
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    /// Ordered by trial, then slot.
    pub records: Vec<SlotRecord>,
    /// Per trial, per user.
    pub energy: Vec<Vec<EnergyAccount>>,
    pub summary: ExperimentSummary,
    pub timing: TimingSummary,
}

fn assemble(config: &SystemConfig, solver: SolverChoice, trials: Vec<TrialOutput>) -> ExperimentOutput {
    let num_trials = trials.len();
    let mut records = Vec::with_capacity(num_trials * config.horizon);
    let mut energy = Vec::with_capacity(num_trials);
    for t in trials {
        records.extend(t.records);
        energy.push(t.energy);
    }
    let summary = summarize(&records, config, solver, num_trials);
    let seconds: Vec<f64> = records.iter().map(|r| r.wall_time).collect();
    let timing = TimingSummary::from_seconds(solver, &seconds);
    ExperimentOutput { records, energy, summary, timing }
}

/// Runs `num_trials` trajectories on the rayon pool. Trial `t` is seeded with
/// `config.rng_seed + t`, so the output does not depend on scheduling.
pub fn run_experiment(config: &SystemConfig, solver: SolverChoice, num_trials: usize) -> Result<ExperimentOutput, SimError> {
    let trials = (0..num_trials)
        .into_par_iter()
        .map(|t| run_trial(config, solver, t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(config, solver, trials))
}

pub fn run_experiment_serial(config: &SystemConfig, solver: SolverChoice, num_trials: usize) -> Result<ExperimentOutput, SimError> {
    let trials = (0..num_trials).map(|t| run_trial(config, solver, t)).collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(config, solver, trials))
}

/// Summary of each trial on its own.
pub fn trial_summaries(output: &ExperimentOutput) -> Vec<ExperimentSummary> {
    let config = &output.summary.config;
    output
        .records
        .chunk_by(|a, b| a.trial == b.trial)
        .map(|chunk| summarize(chunk, config, output.summary.solver, 1))
        .collect()
}
