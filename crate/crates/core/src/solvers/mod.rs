//! Per-slot beamforming solvers and the problem description they share.

pub mod init;
pub mod kkt;
pub mod linearize;
pub mod polish;
pub mod sca;
pub mod sdr_fp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{compute_harvested_power, compute_sinr, BeamDecision, ChannelState};

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("conic backend returned {status:?} at outer iteration {iteration}")]
    Backend { status: swipt_conic::Status, iteration: usize },
    #[error("conic subproblem is malformed: {0}")]
    Construction(#[from] swipt_conic::ConicError),
    #[error("no feasible starting point: {0}")]
    InfeasibleStart(String),
    #[error("{0} needs the batteryless problem")]
    WrongMode(&'static str),
    #[error("linearization point is degenerate: {0}")]
    Degenerate(String),
}

/// Battery-backed storage or same-slot harvest-use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HarvestMode {
    Battery,
    Batteryless,
}

/// Weights, caps and physical constants of one user for one slot.
#[derive(Clone, Debug, PartialEq)]
pub struct UserTerms {
    /// Bits; multiplies `log2(1 + sinr)`.
    pub rate_weight: f64,
    /// Multiplies harvested joules in battery mode.
    pub energy_weight: f64,
    /// Upper bound on the SINR variable (`2^rate_cap - 1`).
    pub sinr_cap: f64,
    /// Joules the battery can still absorb.
    pub harvest_cap: f64,
    /// Watts that must be harvested in batteryless mode.
    pub min_harvest: f64,
    pub rx_noise_var: f64,
    pub id_noise_var: f64,
    pub eh_efficiency: f64,
}

/// One instance of the per-slot problem.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotProblem {
    pub channel: ChannelState,
    pub users: Vec<UserTerms>,
    pub tradeoff: f64,
    pub slot_duration: f64,
    pub ps_bounds: (f64, f64),
    pub mode: HarvestMode,
}

impl SlotProblem {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.channel.num_antennas()
    }

    /// Users whose rate term and SINR constraint enter the problem.
    pub fn rate_active(&self, k: usize, floor: f64) -> bool {
        let u = &self.users[k];
        u.rate_weight > 0.0 && u.sinr_cap > floor
    }

    /// Users with a harvest variable (battery mode only).
    pub fn harvest_active(&self, k: usize) -> bool {
        let u = &self.users[k];
        self.mode == HarvestMode::Battery
            && u.energy_weight > 0.0
            && u.harvest_cap > 0.0
            && u.eh_efficiency > 0.0
    }

    /// Users bound by a minimum-harvest constraint (batteryless mode only).
    pub fn harvest_required(&self, k: usize) -> bool {
        self.mode == HarvestMode::Batteryless && self.users[k].min_harvest > 0.0
    }

    /// Per-slot objective: power penalty minus rate reward minus stored-energy reward.
    pub fn objective(&self, d: &BeamDecision) -> f64 {
        let mut obj = self.tradeoff * d.tx_power();
        for (k, u) in self.users.iter().enumerate() {
            if d.sinr[k] > 0.0 {
                obj -= u.rate_weight * (1.0 + d.sinr[k]).log2();
            }
            if self.mode == HarvestMode::Battery {
                obj -= u.energy_weight * d.harvest[k];
            }
        }
        obj
    }

    /// SINR delivered by the decision's beams and split ratio.
    pub fn actual_sinr(&self, d: &BeamDecision, k: usize) -> f64 {
        let u = &self.users[k];
        compute_sinr(self.channel.user(k), &d.beams, k, d.ps_ratio[k], u.rx_noise_var, u.id_noise_var)
            .unwrap_or(0.0)
    }

    /// Joules per slot reaching the harvesting branch.
    pub fn actual_harvest(&self, d: &BeamDecision, k: usize) -> f64 {
        let u = &self.users[k];
        compute_harvested_power(self.channel.user(k), &d.beams, d.ps_ratio[k], u.eh_efficiency, u.rx_noise_var)
            .map(|p| p * self.slot_duration)
            .unwrap_or(0.0)
    }

    /// Clips the epigraph variables to what the beams actually deliver and to the caps.
    /// Returns the largest relative shortfall that had to be removed.
    pub fn certify(&self, d: &mut BeamDecision, floor: f64) -> f64 {
        let mut worst: f64 = 0.0;
        let (lo, hi) = self.ps_bounds;
        for k in 0..self.num_users() {
            d.ps_ratio[k] = d.ps_ratio[k].clamp(lo, hi);
            let u = &self.users[k];
            if self.rate_active(k, floor) {
                let actual = self.actual_sinr(d, k);
                let g = d.sinr[k].max(0.0);
                if g > actual {
                    worst = worst.max((g - actual) / g);
                }
                d.sinr[k] = g.min(actual).min(u.sinr_cap);
            } else {
                d.sinr[k] = 0.0;
            }
            if self.harvest_active(k) {
                let actual = self.actual_harvest(d, k);
                let e = d.harvest[k].max(0.0);
                if e > actual {
                    worst = worst.max((e - actual) / e);
                }
                d.harvest[k] = e.min(actual).min(u.harvest_cap);
            } else {
                d.harvest[k] = 0.0;
            }
        }
        worst
    }

    /// Largest relative violation of the true (non-convex) constraints at `d`.
    pub fn violation(&self, d: &BeamDecision, floor: f64) -> f64 {
        let mut c = d.clone();
        let gap = self.certify(&mut c, floor);
        let margin = self.harvest_margin(d);
        if margin.is_finite() {
            gap.max(-margin)
        } else {
            gap
        }
    }

    /// Smallest relative slack of the minimum-harvest constraints (negative when violated).
    pub fn harvest_margin(&self, d: &BeamDecision) -> f64 {
        (0..self.num_users())
            .filter(|&k| self.harvest_required(k))
            .map(|k| {
                let need = self.users[k].min_harvest * self.slot_duration;
                (self.actual_harvest(d, k) - need) / need
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Stationarity and slackness residuals of the batteryless KKT system, relative to their scales.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub beam_stationarity: f64,
    pub sinr_stationarity: f64,
    pub split_stationarity: f64,
    pub sinr_slackness: f64,
    pub harvest_slackness: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.beam_stationarity
            .max(self.sinr_stationarity)
            .max(self.split_stationarity)
            .max(self.sinr_slackness)
            .max(self.harvest_slackness)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// Largest second-to-first eigenvalue ratio over the lifted matrices.
    pub eigen_ratio: Option<f64>,
    /// A non-rank-one lift required the restoration pass.
    pub restored: bool,
    pub kkt: Option<KktResiduals>,
    /// Split ratios or SINRs clamped to their box or floor.
    pub clamp_events: usize,
    /// Relative infeasibility removed by certification.
    pub certification_gap: f64,
    /// The backend stopped early on some subproblem; the last iterate was kept.
    pub backend_incomplete: bool,
    pub step_halved: bool,
    /// Largest relative constraint violation over the accepted outer iterates (SCA only).
    pub iterate_violation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOutput {
    pub decision: BeamDecision,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after initialization and after every outer iteration.
    pub history: Vec<f64>,
    pub diagnostics: Diagnostics,
}

pub(crate) fn relative_change(old: f64, new: f64) -> f64 {
    (new - old).abs() / old.abs().max(new.abs()).max(1e-12)
}
