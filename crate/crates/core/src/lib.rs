//! System model, queue and battery dynamics, drift-plus-penalty control and per-slot solvers
//! for multiuser downlink beamforming with power-splitting receivers.

pub mod channel;
pub mod config;
pub mod control;
pub mod model;
pub mod record;
pub mod solvers;
pub mod state;
