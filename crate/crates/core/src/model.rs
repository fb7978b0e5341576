//! Physical-layer quantities: SINR, harvested power, energy use and per-slot caps.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type CVector = DVector<Complex64>;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("power-splitting ratio {0} must be positive")]
    NonPositiveSplit(f64),
    #[error("power-splitting ratio {0} outside [0, 1]")]
    SplitOutOfRange(f64),
    #[error("user index {index} out of range for {count} beams")]
    UserIndex { index: usize, count: usize },
}

/// Power level in dBm.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Dbm(pub f64);

/// Power ratio in dB.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Decibels(pub f64);

impl Dbm {
    pub fn to_watts(self) -> f64 {
        dbm_to_watts(self.0)
    }

    pub fn from_watts(w: f64) -> Self {
        Dbm(10.0 * w.log10() + 30.0)
    }
}

impl Decibels {
    pub fn to_linear(self) -> f64 {
        10f64.powf(self.0 / 10.0)
    }

    /// Amplitude gain whose square is the power ratio.
    pub fn to_amplitude(self) -> f64 {
        10f64.powf(self.0 / 20.0)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Downlink channel vectors of all users for one slot.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelState {
    pub vectors: Vec<CVector>,
}

impl ChannelState {
    pub fn new(vectors: Vec<CVector>) -> Self {
        Self { vectors }
    }

    pub fn num_users(&self) -> usize {
        self.vectors.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.vectors.first().map_or(0, |h| h.len())
    }

    pub fn user(&self, k: usize) -> &CVector {
        &self.vectors[k]
    }

    pub fn is_valid(&self) -> bool {
        self.vectors
            .iter()
            .all(|h| h.iter().all(|c| c.re.is_finite() && c.im.is_finite()) && h.norm() > 0.0)
    }
}

/// Beamformers, splitting ratios and the epigraph variables chosen for one slot.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamDecision {
    pub beams: Vec<CVector>,
    pub ps_ratio: Vec<f64>,
    pub sinr: Vec<f64>,
    /// Joules per slot.
    pub harvest: Vec<f64>,
}

impl BeamDecision {
    pub fn idle(k: usize, nt: usize) -> Self {
        Self {
            beams: vec![CVector::zeros(nt); k],
            ps_ratio: vec![0.5; k],
            sinr: vec![0.0; k],
            harvest: vec![0.0; k],
        }
    }

    pub fn tx_power(&self) -> f64 {
        self.beams.iter().map(|f| f.norm_squared()).sum()
    }

    /// Bits per slot for each user.
    pub fn rates(&self) -> Vec<f64> {
        self.sinr.iter().map(|&g| achieved_rate(g)).collect()
    }
}

/// `|h^H f|^2`
pub fn gain(h: &CVector, f: &CVector) -> f64 {
    h.dotc(f).norm_sqr()
}

/// SINR of user `k` at the decoding branch.
pub fn compute_sinr(
    h: &CVector,
    beams: &[CVector],
    k: usize,
    ps_ratio: f64,
    rx_noise_var: f64,
    id_noise_var: f64,
) -> Result<f64, ModelError> {
    if !(ps_ratio > 0.0) {
        return Err(ModelError::NonPositiveSplit(ps_ratio));
    }
    if k >= beams.len() {
        return Err(ModelError::UserIndex { index: k, count: beams.len() });
    }
    let signal = ps_ratio * gain(h, &beams[k]);
    let interference: f64 = beams
        .iter()
        .enumerate()
        .filter(|(u, _)| *u != k)
        .map(|(_, f)| gain(h, f))
        .sum();
    Ok(signal / (ps_ratio * interference + ps_ratio * rx_noise_var + id_noise_var))
}

/// Power (watts) available at the harvesting branch.
pub fn compute_harvested_power(
    h: &CVector,
    beams: &[CVector],
    ps_ratio: f64,
    eh_efficiency: f64,
    rx_noise_var: f64,
) -> Result<f64, ModelError> {
    if !(0.0..=1.0).contains(&ps_ratio) {
        return Err(ModelError::SplitOutOfRange(ps_ratio));
    }
    let received: f64 = beams.iter().map(|f| gain(h, f)).sum();
    Ok(eh_efficiency * (1.0 - ps_ratio) * (received + rx_noise_var))
}

/// Joules spent by a receiver decoding `rate` bits in one slot.
pub fn energy_consumed(rate: f64, circuit_power: f64, decoder_efficiency: f64, slot: f64) -> f64 {
    slot * (circuit_power + decoder_efficiency * rate)
}

/// Largest rate whose decoding energy the battery can cover.
pub fn max_rate(battery: f64, circuit_power: f64, decoder_efficiency: f64, slot: f64) -> f64 {
    ((battery - slot * circuit_power) / (slot * decoder_efficiency)).max(0.0)
}

/// Energy the battery can still absorb.
pub fn max_harvest(battery: f64, capacity: f64) -> f64 {
    capacity - battery
}

pub fn achieved_rate(sinr: f64) -> f64 {
    (1.0 + sinr.max(0.0)).log2()
}
