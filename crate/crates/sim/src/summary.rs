//! Aggregates over a record stream.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use swipt_core::config::SystemConfig;
use swipt_core::control::SolverChoice;
use swipt_core::record::{SlotFlags, SlotRecord};

/// Bumped whenever a field of `summary.json` or `timing.json` changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

/// Empirical distribution function stored at its jump points: `probs[i]` is the
/// fraction of samples `<= values[i]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Ecdf {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Ecdf {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut e = Ecdf::default();
        for (i, &x) in sorted.iter().enumerate() {
            if e.values.last() == Some(&x) {
                *e.probs.last_mut().unwrap() = (i + 1) as f64 / n;
            } else {
                e.values.push(x);
                e.probs.push((i + 1) as f64 / n);
            }
        }
        e
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.values.partition_point(|&v| v <= x) {
            0 => 0.0,
            i => self.probs[i - 1],
        }
    }
}

/// A power level in watts and dBm. Both are absent for an empty sample, and dBm is
/// absent when the power is zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerLevel {
    pub watts: Option<f64>,
    pub dbm: Option<f64>,
}

impl PowerLevel {
    pub fn from_watts(watts: Option<f64>) -> Self {
        let dbm = watts.filter(|&w| w > 0.0).map(|w| 10.0 * (w * 1e3).log10());
        Self { watts, dbm }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserSummary {
    pub mean_queue: Option<f64>,
    pub mean_virtual_queue: Option<f64>,
    pub mean_battery: Option<f64>,
    pub mean_rate: Option<f64>,
    pub mean_energy_used: Option<f64>,
    pub harvested_power: PowerLevel,
    /// Fraction of slots that start with the queue at or above its threshold.
    pub queue_violation: Option<f64>,
    pub queue_ecdf: Ecdf,
    pub battery_ecdf: Ecdf,
    pub harvested_power_ecdf: Ecdf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub schema_version: u32,
    pub solver: SolverChoice,
    pub seed: u64,
    pub num_trials: usize,
    pub num_records: usize,
    pub tx_power: PowerLevel,
    /// Summed over users.
    pub harvested_power: PowerLevel,
    pub tx_power_ecdf: Ecdf,
    pub mean_objective: Option<f64>,
    pub mean_iterations: Option<f64>,
    pub users: Vec<UserSummary>,
    /// Slots carrying each flag; every flag is listed.
    pub flag_counts: BTreeMap<String, usize>,
    pub config: SystemConfig,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn summarize_user(records: &[SlotRecord], config: &SystemConfig, k: usize) -> UserSummary {
    let col = |f: fn(&swipt_core::record::UserRecord) -> f64| records.iter().map(move |r| f(&r.users[k]));
    let queue: Vec<f64> = col(|u| u.queue).collect();
    let battery: Vec<f64> = col(|u| u.battery).collect();
    let harvested: Vec<f64> = col(|u| u.harvest).map(|e| e / config.slot_duration).collect();
    let threshold = config.users[k].queue_threshold;
    UserSummary {
        mean_queue: mean(queue.iter().copied()),
        mean_virtual_queue: mean(col(|u| u.virtual_queue)),
        mean_battery: mean(battery.iter().copied()),
        mean_rate: mean(col(|u| u.rate)),
        mean_energy_used: mean(col(|u| u.energy_used)),
        harvested_power: PowerLevel::from_watts(mean(harvested.iter().copied())),
        queue_violation: mean(queue.iter().map(|&q| if q >= threshold { 1.0 } else { 0.0 })),
        queue_ecdf: Ecdf::from_samples(&queue),
        battery_ecdf: Ecdf::from_samples(&battery),
        harvested_power_ecdf: Ecdf::from_samples(&harvested),
    }
}

pub fn flag_counts(records: &[SlotRecord]) -> BTreeMap<String, usize> {
    SlotFlags::all()
        .iter_names()
        .map(|(name, flag)| (name.to_string(), records.iter().filter(|r| r.flags.contains(flag)).count()))
        .collect()
}

pub fn summarize(records: &[SlotRecord], config: &SystemConfig, solver: SolverChoice, num_trials: usize) -> ExperimentSummary {
    let tx: Vec<f64> = records.iter().map(|r| r.tx_power).collect();
    let harvested = mean(records.iter().map(|r| r.users.iter().map(|u| u.harvest).sum::<f64>() / config.slot_duration));
    ExperimentSummary {
        schema_version: SCHEMA_VERSION,
        solver,
        seed: config.rng_seed,
        num_trials,
        num_records: records.len(),
        tx_power: PowerLevel::from_watts(mean(tx.iter().copied())),
        harvested_power: PowerLevel::from_watts(harvested),
        tx_power_ecdf: Ecdf::from_samples(&tx),
        mean_objective: mean(records.iter().map(|r| r.objective)),
        mean_iterations: mean(records.iter().map(|r| r.iterations as f64)),
        users: (0..config.num_users).map(|k| summarize_user(records, config, k)).collect(),
        flag_counts: flag_counts(records),
        config: config.clone(),
    }
}

/// Solver wall-clock statistics, seconds. Kept out of the summary so that the summary
/// depends only on seed, configuration and solver.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub schema_version: u32,
    pub solver: Option<SolverChoice>,
    pub solves: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub p95: Option<f64>,
    pub max: Option<f64>,
}

/// Nearest-rank quantile of sorted samples.
fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

impl TimingSummary {
    pub fn from_seconds(solver: SolverChoice, seconds: &[f64]) -> Self {
        let mut sorted = seconds.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            schema_version: SCHEMA_VERSION,
            solver: Some(solver),
            solves: sorted.len(),
            mean: mean(sorted.iter().copied()),
            median: quantile(&sorted, 0.5),
            p95: quantile(&sorted, 0.95),
            max: sorted.last().copied(),
        }
    }
}
