use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Decibels, Dbm};
use crate::solvers::HarvestMode;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{field} must be {requirement}, got {value}")]
    OutOfRange { field: &'static str, requirement: &'static str, value: f64 },
    #[error("expected {expected} per-user entries, found {found}")]
    UserCount { expected: usize, found: usize },
}

/// Parameters that may differ between users.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserParams {
    /// Antenna noise variance in watts.
    pub rx_noise_var: f64,
    /// Decoder noise variance in watts.
    pub id_noise_var: f64,
    pub eh_efficiency: f64,
    /// Joules.
    pub battery_capacity: f64,
    /// Watts.
    pub circuit_power: f64,
    /// Joules per bit.
    pub decoder_efficiency: f64,
    /// Bits.
    pub queue_threshold: f64,
    pub battery_weight: f64,
    /// Watts; only used by the batteryless problem.
    pub min_harvest: f64,
}

impl Default for UserParams {
    fn default() -> Self {
        Self {
            rx_noise_var: Dbm(-70.0).to_watts(),
            id_noise_var: Dbm(-50.0).to_watts(),
            eh_efficiency: 0.8,
            battery_capacity: 10.0,
            circuit_power: Dbm(0.0).to_watts(),
            decoder_efficiency: 0.5,
            queue_threshold: 5.0,
            battery_weight: 150.0,
            min_harvest: Dbm(10.0).to_watts(),
        }
    }
}

/// When the user azimuths are redrawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AngleRefresh {
    PerTrial,
    PerSlot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Relative objective change that ends the SDR-FP and SCA outer loops.
    pub outer_tol: f64,
    pub max_outer_iter: usize,
    /// Relative objective change that ends the KKT iteration.
    pub kkt_tol: f64,
    /// Relative KKT residual that must also hold before the KKT iteration stops.
    pub kkt_residual_tol: f64,
    pub kkt_max_iter: usize,
    /// Halve the step once and restart from the best iterate after 10 straight increases.
    pub kkt_restart: bool,
    /// Largest eigenvalue ratio accepted as rank one.
    pub rank_one_threshold: f64,
    /// Floor on linearization denominators.
    pub floor: f64,
    pub conic_gap_rel: f64,
    pub conic_feas_tol: f64,
    pub conic_max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            outer_tol: 1e-4,
            max_outer_iter: 50,
            kkt_tol: 1e-4,
            kkt_residual_tol: 1e-5,
            kkt_max_iter: 200,
            kkt_restart: false,
            rank_one_threshold: 1e-6,
            floor: 1e-9,
            conic_gap_rel: 1e-8,
            conic_feas_tol: 1e-8,
            conic_max_iter: 200,
        }
    }
}

impl SolverSettings {
    pub fn conic(&self) -> swipt_conic::Settings {
        swipt_conic::Settings {
            gap_rel: self.conic_gap_rel,
            feas_tol: self.conic_feas_tol,
            max_iter: self.conic_max_iter,
            ..Default::default()
        }
    }
}

/// Every physical, economic and algorithmic parameter, in SI linear units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub num_users: usize,
    pub num_antennas: usize,
    pub mode: HarvestMode,
    /// Seconds.
    pub slot_duration: f64,
    pub users: Vec<UserParams>,
    pub violation_prob: f64,
    /// Bits per slot.
    pub mean_arrival: f64,
    pub tradeoff: f64,
    /// Linear power ratio.
    pub rician_factor: f64,
    pub pathloss_amplitude: f64,
    pub kkt_step: f64,
    pub ps_bounds: (f64, f64),
    pub solver: SolverSettings,
    pub horizon: usize,
    pub rng_seed: u64,
    /// Initial battery level as a fraction of capacity.
    pub initial_battery_fraction: f64,
    pub angle_refresh: AngleRefresh,
    /// Keep one slot of circuit energy in the battery when capping the rate.
    pub battery_reserve: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::with_users(2, 8)
    }
}

impl SystemConfig {
    /// Evaluation defaults with `k` identical users and `nt` transmit antennas.
    pub fn with_users(k: usize, nt: usize) -> Self {
        Self {
            num_users: k,
            num_antennas: nt,
            mode: HarvestMode::Battery,
            slot_duration: 1.0,
            users: vec![UserParams::default(); k],
            violation_prob: 0.1,
            mean_arrival: 3.0,
            tradeoff: 1.0,
            rician_factor: Decibels(5.0).to_linear(),
            pathloss_amplitude: Decibels(-40.0).to_amplitude(),
            kkt_step: 0.25,
            ps_bounds: (1e-4, 1.0 - 1e-4),
            solver: SolverSettings::default(),
            horizon: 500,
            rng_seed: 1,
            initial_battery_fraction: 0.5,
            angle_refresh: AngleRefresh::PerTrial,
            battery_reserve: true,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(ok: bool, field: &'static str, requirement: &'static str, value: f64) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange { field, requirement, value })
            }
        }
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let pos = |v: f64| v.is_finite() && v > 0.0;
        check(self.num_users > 0, "num_users", "positive", self.num_users as f64)?;
        check(self.num_antennas > 0, "num_antennas", "positive", self.num_antennas as f64)?;
        if self.users.len() != self.num_users {
            return Err(ConfigError::UserCount { expected: self.num_users, found: self.users.len() });
        }
        check(pos(self.slot_duration), "slot_duration", "positive", self.slot_duration)?;
        check(
            self.violation_prob > 0.0 && self.violation_prob < 1.0,
            "violation_prob",
            "in (0, 1)",
            self.violation_prob,
        )?;
        check(nonneg(self.mean_arrival), "mean_arrival", "non-negative", self.mean_arrival)?;
        check(nonneg(self.tradeoff), "tradeoff", "non-negative", self.tradeoff)?;
        check(nonneg(self.rician_factor), "rician_factor", "non-negative", self.rician_factor)?;
        check(pos(self.pathloss_amplitude), "pathloss_amplitude", "positive", self.pathloss_amplitude)?;
        check(self.kkt_step > 0.0 && self.kkt_step <= 1.0, "kkt_step", "in (0, 1]", self.kkt_step)?;
        let (lo, hi) = self.ps_bounds;
        check(lo > 0.0 && lo < hi, "ps_bounds.0", "in (0, upper)", lo)?;
        check(hi < 1.0, "ps_bounds.1", "below 1", hi)?;
        check(
            (0.0..=1.0).contains(&self.initial_battery_fraction),
            "initial_battery_fraction",
            "in [0, 1]",
            self.initial_battery_fraction,
        )?;
        for u in &self.users {
            check(pos(u.rx_noise_var), "rx_noise_var", "positive", u.rx_noise_var)?;
            check(pos(u.id_noise_var), "id_noise_var", "positive", u.id_noise_var)?;
            check(
                u.eh_efficiency >= 0.0 && u.eh_efficiency < 1.0,
                "eh_efficiency",
                "in [0, 1)",
                u.eh_efficiency,
            )?;
            check(nonneg(u.battery_capacity), "battery_capacity", "non-negative", u.battery_capacity)?;
            check(nonneg(u.circuit_power), "circuit_power", "non-negative", u.circuit_power)?;
            check(pos(u.decoder_efficiency), "decoder_efficiency", "positive", u.decoder_efficiency)?;
            check(nonneg(u.queue_threshold), "queue_threshold", "non-negative", u.queue_threshold)?;
            check(pos(u.battery_weight), "battery_weight", "positive", u.battery_weight)?;
            check(nonneg(u.min_harvest), "min_harvest", "non-negative", u.min_harvest)?;
        }
        Ok(())
    }
}
