//! Per-slot telemetry produced by the horizon loop.

use bitflags::bitflags;
use serde::{Deserialize, Serialize};

bitflags! {
    /// Conditions worth flagging on a slot.
    #[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
    pub struct SlotFlags: u16 {
        /// The solver stopped at its iteration cap; the last iterate was used.
        const NOT_CONVERGED = 1;
        /// The solver failed outright; a fallback decision was used.
        const SOLVER_ERROR = 1 << 1;
        /// The lifted solution was not rank one and was restored.
        const RESTORED = 1 << 2;
        /// Split ratios or SINRs hit their box or floor during the solve.
        const CLAMPED = 1 << 3;
        /// Certification removed more than a part per million of some epigraph variable.
        const CERTIFIED = 1 << 4;
        /// The battery could not cover the decoder circuit; the receiver sat idle.
        const RECEIVER_OFF = 1 << 5;
        /// The minimum harvest was not met.
        const HARVEST_SHORTFALL = 1 << 6;
        /// The KKT step was halved after repeated objective increases.
        const STEP_HALVED = 1 << 7;
        /// Harvested energy overflowed the battery.
        const OVERFLOW = 1 << 8;
    }
}

impl SlotFlags {
    /// `A|B` text form; empty when no flag is set.
    pub fn to_text(self) -> String {
        let mut out = String::new();
        bitflags::parser::to_writer_strict(&self, &mut out).expect("writing to a String");
        out.replace(' ', "")
    }

    pub fn from_text(s: &str) -> Result<Self, bitflags::parser::ParseError> {
        bitflags::parser::from_str_strict(&s.replace('|', " | "))
    }
}

/// State and decision of one user in one slot. Queue, virtual queue and battery are
/// the values at the start of the slot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub queue: f64,
    pub virtual_queue: f64,
    pub battery: f64,
    pub arrival: f64,
    pub ps_ratio: f64,
    pub sinr: f64,
    /// Joules credited to the battery, or harvested and used at once without one.
    pub harvest: f64,
    /// Bits served, `log2(1 + sinr)`.
    pub rate: f64,
    /// Joules drawn from the battery.
    pub energy_used: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub trial: usize,
    pub slot: usize,
    pub users: Vec<UserRecord>,
    /// Watts.
    pub tx_power: f64,
    pub objective: f64,
    pub iterations: usize,
    /// Seconds spent in the solver.
    pub wall_time: f64,
    pub eigen_ratio: Option<f64>,
    /// Largest relative KKT residual.
    pub kkt_residual: Option<f64>,
    pub flags: SlotFlags,
}
