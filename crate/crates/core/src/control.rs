//! Drift-plus-penalty slot control and the horizon loop.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{draw_angles, generate_channel};
use crate::config::{AngleRefresh, ConfigError, SystemConfig};
use crate::model::{achieved_rate, energy_consumed, max_harvest, max_rate, BeamDecision, ChannelState};
use crate::record::{SlotFlags, SlotRecord, UserRecord};
use crate::solvers::init::initial_point;
use crate::solvers::kkt::solve_kkt;
use crate::solvers::sca::{solve_sca, solve_sca_batteryless};
use crate::solvers::sdr_fp::solve_sdr_fp;
use crate::solvers::{Diagnostics, HarvestMode, SlotProblem, SolverError, SolverOutput, UserTerms};
use crate::state::{advance_battery, advance_data_queue, advance_virtual_queue, sample_arrivals, NetworkState, StateError};

/// Relative certification shortfall above which a slot is flagged.
const CERTIFY_FLAG: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("{0} cannot solve the {1:?} problem")]
    Unsupported(SolverChoice, HarvestMode),
    #[error("state has {found} users, config has {expected}")]
    UserCount { expected: usize, found: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverChoice {
    SdrFp,
    Sca,
    /// Batteryless only.
    Kkt,
}

impl SolverChoice {
    pub const ALL: [SolverChoice; 3] = [SolverChoice::SdrFp, SolverChoice::Sca, SolverChoice::Kkt];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverChoice::SdrFp => "sdr-fp",
            SolverChoice::Sca => "sca",
            SolverChoice::Kkt => "kkt",
        }
    }

    pub fn supports(self, mode: HarvestMode) -> bool {
        self != SolverChoice::Kkt || mode == HarvestMode::Batteryless
    }
}

impl fmt::Display for SolverChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SolverChoice::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown solver `{s}` (expected sdr-fp, sca or kkt)"))
    }
}

/// Per-user weights and caps of one slot's subproblem.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotWeights {
    /// `Q + A + Z`, bits.
    pub rate_weight: Vec<f64>,
    /// `omega (B_max - B)`.
    pub energy_weight: Vec<f64>,
    /// Bits per slot; infinite without a battery.
    pub rate_cap: Vec<f64>,
    /// Joules.
    pub harvest_cap: Vec<f64>,
    pub tradeoff: f64,
}

/// Largest rate the battery can pay for this slot.
pub fn rate_cap(config: &SystemConfig, k: usize, battery: f64) -> f64 {
    if config.mode == HarvestMode::Batteryless {
        return f64::INFINITY;
    }
    let u = &config.users[k];
    let t = config.slot_duration;
    // With the reserve, one slot of circuit energy always stays behind for the next slot.
    let spendable = if config.battery_reserve { battery - t * u.circuit_power } else { battery };
    max_rate(spendable, u.circuit_power, u.decoder_efficiency, t)
}

pub fn compute_weights(state: &NetworkState, config: &SystemConfig) -> SlotWeights {
    let battery = config.mode == HarvestMode::Battery;
    let mut w = SlotWeights {
        rate_weight: Vec::new(),
        energy_weight: Vec::new(),
        rate_cap: Vec::new(),
        harvest_cap: Vec::new(),
        tradeoff: config.tradeoff,
    };
    for (k, (s, u)) in state.users.iter().zip(&config.users).enumerate() {
        w.rate_weight.push(s.queue + s.arrival + s.virtual_queue);
        w.rate_cap.push(rate_cap(config, k, s.battery));
        let spare = if battery { max_harvest(s.battery, u.battery_capacity).max(0.0) } else { 0.0 };
        w.energy_weight.push(u.battery_weight * spare);
        w.harvest_cap.push(spare);
    }
    w
}

/// The slot's subproblem for the given state and channel.
pub fn slot_problem(config: &SystemConfig, state: &NetworkState, channel: ChannelState) -> SlotProblem {
    let w = compute_weights(state, config);
    let users = config
        .users
        .iter()
        .enumerate()
        .map(|(k, u)| UserTerms {
            rate_weight: w.rate_weight[k],
            energy_weight: w.energy_weight[k],
            sinr_cap: (2f64.powf(w.rate_cap[k]) - 1.0).max(0.0),
            harvest_cap: w.harvest_cap[k],
            min_harvest: if config.mode == HarvestMode::Batteryless { u.min_harvest } else { 0.0 },
            rx_noise_var: u.rx_noise_var,
            id_noise_var: u.id_noise_var,
            eh_efficiency: u.eh_efficiency,
        })
        .collect();
    SlotProblem {
        channel,
        users,
        tradeoff: w.tradeoff,
        slot_duration: config.slot_duration,
        ps_bounds: config.ps_bounds,
        mode: config.mode,
    }
}

/// Runs the chosen solver on one subproblem.
pub fn solve_slot(p: &SlotProblem, config: &SystemConfig, choice: SolverChoice) -> Result<SolverOutput, SolverError> {
    match (choice, p.mode) {
        (SolverChoice::SdrFp, _) => solve_sdr_fp(p, &config.solver),
        (SolverChoice::Sca, HarvestMode::Battery) => solve_sca(p, &config.solver),
        (SolverChoice::Sca, HarvestMode::Batteryless) => solve_sca_batteryless(p, &config.solver),
        (SolverChoice::Kkt, _) => solve_kkt(p, &config.solver, config.kkt_step),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlotOutcome {
    pub decision: BeamDecision,
    pub objective: f64,
    pub iterations: usize,
    /// Seconds.
    pub wall_time: f64,
    pub diagnostics: Diagnostics,
    pub flags: SlotFlags,
    pub error: Option<String>,
}

/// Solves one slot. Solver failures never propagate: the slot falls back to the
/// shared starting point (or silence) and is flagged.
pub fn control_step(
    channel: ChannelState,
    state: &NetworkState,
    config: &SystemConfig,
    choice: SolverChoice,
) -> Result<SlotOutcome, ControlError> {
    if !choice.supports(config.mode) {
        return Err(ControlError::Unsupported(choice, config.mode));
    }
    if state.users.len() != config.users.len() {
        return Err(ControlError::UserCount { expected: config.users.len(), found: state.users.len() });
    }
    let p = slot_problem(config, state, channel);
    let floor = config.solver.floor;
    let start = Instant::now();
    let result = solve_slot(&p, config, choice);
    let wall_time = start.elapsed().as_secs_f64();

    let mut flags = SlotFlags::empty();
    let (decision, iterations, diagnostics, error) = match result {
        Ok(out) => {
            if !out.converged {
                flags |= SlotFlags::NOT_CONVERGED;
            }
            (out.decision, out.iterations, out.diagnostics, None)
        }
        Err(e) => {
            flags |= SlotFlags::SOLVER_ERROR;
            let mut d = initial_point(&p, floor)
                .unwrap_or_else(|_| BeamDecision::idle(p.num_users(), p.num_antennas()));
            p.certify(&mut d, floor);
            (d, 0, Diagnostics::default(), Some(e.to_string()))
        }
    };
    if diagnostics.restored {
        flags |= SlotFlags::RESTORED;
    }
    if diagnostics.clamp_events > 0 {
        flags |= SlotFlags::CLAMPED;
    }
    if diagnostics.certification_gap > CERTIFY_FLAG {
        flags |= SlotFlags::CERTIFIED;
    }
    if diagnostics.step_halved {
        flags |= SlotFlags::STEP_HALVED;
    }
    if p.harvest_margin(&decision) < -CERTIFY_FLAG {
        flags |= SlotFlags::HARVEST_SHORTFALL;
    }
    let objective = p.objective(&decision);
    Ok(SlotOutcome { decision, objective, iterations, wall_time, diagnostics, flags, error })
}

/// Energy bookkeeping of one user over a trajectory, joules.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyAccount {
    pub initial: f64,
    pub last: f64,
    pub harvested: f64,
    pub used: f64,
    pub overflow: f64,
}

impl EnergyAccount {
    /// `harvested - used - overflow - (last - initial)`; zero up to rounding.
    pub fn imbalance(&self) -> f64 {
        self.harvested - self.used - self.overflow - (self.last - self.initial)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutput {
    pub records: Vec<SlotRecord>,
    pub energy: Vec<EnergyAccount>,
}

/// Applies a slot's decision to the state. Returns the per-user records and the next state.
fn advance(
    config: &SystemConfig,
    state: &NetworkState,
    p: &SlotProblem,
    decision: &BeamDecision,
    flags: &mut SlotFlags,
    energy: &mut [EnergyAccount],
) -> Result<(Vec<UserRecord>, NetworkState), ControlError> {
    let t = config.slot_duration;
    let mut next = state.clone();
    let mut users = Vec::with_capacity(state.users.len());
    for (k, s) in state.users.iter().enumerate() {
        let u = &config.users[k];
        let mut rate = if decision.sinr[k] > 0.0 { achieved_rate(decision.sinr[k]) } else { 0.0 };
        let (harvest, used) = match config.mode {
            HarvestMode::Battery => {
                let circuit = energy_consumed(0.0, u.circuit_power, u.decoder_efficiency, t);
                if s.battery < circuit {
                    *flags |= SlotFlags::RECEIVER_OFF;
                    rate = 0.0;
                    (decision.harvest[k], 0.0)
                } else {
                    // The rate cap keeps the draw within the battery; only rounding can exceed it.
                    let used = energy_consumed(rate, u.circuit_power, u.decoder_efficiency, t).min(s.battery);
                    (decision.harvest[k], used)
                }
            }
            HarvestMode::Batteryless => (p.actual_harvest(decision, k), 0.0),
        };
        if config.mode == HarvestMode::Battery {
            let step = advance_battery(s.battery, used, harvest, u.battery_capacity)?;
            if step.overflow > 1e-12 * u.battery_capacity {
                *flags |= SlotFlags::OVERFLOW;
            }
            energy[k].harvested += harvest;
            energy[k].used += used;
            energy[k].overflow += step.overflow;
            energy[k].last = step.level;
            next.users[k].battery = step.level;
        }
        let queue = advance_data_queue(s.queue, rate, s.arrival);
        next.users[k].queue = queue;
        next.users[k].virtual_queue = advance_virtual_queue(s.virtual_queue, queue, config.violation_prob, u.queue_threshold);
        next.users[k].arrival = 0.0;
        users.push(UserRecord {
            queue: s.queue,
            virtual_queue: s.virtual_queue,
            battery: s.battery,
            arrival: s.arrival,
            ps_ratio: decision.ps_ratio[k],
            sinr: decision.sinr[k],
            harvest,
            rate,
            energy_used: used,
        });
    }
    Ok((users, next))
}

/// One trajectory of `config.horizon` slots, seeded by `rng_seed + trial`.
pub fn run_trial(config: &SystemConfig, choice: SolverChoice, trial: usize) -> Result<TrialOutput, ControlError> {
    config.validate()?;
    if !choice.supports(config.mode) {
        return Err(ControlError::Unsupported(choice, config.mode));
    }
    let k = config.num_users;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed.wrapping_add(trial as u64));
    let mut angles = draw_angles(&mut rng, k);
    let mut state = NetworkState::initial(config);
    let mut energy: Vec<EnergyAccount> = state
        .users
        .iter()
        .map(|s| EnergyAccount { initial: s.battery, last: s.battery, ..Default::default() })
        .collect();
    let mut records = Vec::with_capacity(config.horizon);
    for slot in 0..config.horizon {
        let arrivals = sample_arrivals(&mut rng, config.mean_arrival, k)?;
        for (s, a) in state.users.iter_mut().zip(arrivals) {
            s.arrival = a;
        }
        if config.angle_refresh == AngleRefresh::PerSlot && slot > 0 {
            angles = draw_angles(&mut rng, k);
        }
        let channel = generate_channel(&mut rng, &angles, config.rician_factor, config.pathloss_amplitude, config.num_antennas);
        let out = control_step(channel.clone(), &state, config, choice)?;
        let p = slot_problem(config, &state, channel);
        let mut flags = out.flags;
        let (users, next) = advance(config, &state, &p, &out.decision, &mut flags, &mut energy)?;
        records.push(SlotRecord {
            trial,
            slot,
            users,
            tx_power: out.decision.tx_power(),
            objective: out.objective,
            iterations: out.iterations,
            wall_time: out.wall_time,
            eigen_ratio: out.diagnostics.eigen_ratio,
            kkt_residual: out.diagnostics.kkt.map(|r| r.max()),
            flags,
        });
        state = next;
    }
    Ok(TrialOutput { records, energy })
}

/// The first trajectory of a configuration.
pub fn run_horizon(config: &SystemConfig, choice: SolverChoice) -> Result<Vec<SlotRecord>, ControlError> {
    Ok(run_trial(config, choice, 0)?.records)
}
