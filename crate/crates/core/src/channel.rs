//! Rician downlink channels for a uniform linear array.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::{CVector, ChannelState};

/// Amplitude weights `(sqrt(k/(1+k)), sqrt(1/(1+k)))` of the LoS and scattered parts.
pub fn rician_weights(rician_factor: f64) -> (f64, f64) {
    if rician_factor.is_infinite() {
        return (1.0, 0.0);
    }
    let k = rician_factor;
    ((k / (1.0 + k)).sqrt(), (1.0 / (1.0 + k)).sqrt())
}

/// Far-field steering vector with half-wavelength spacing, scaled by `amplitude`.
pub fn steering_vector(angle: f64, amplitude: f64, nt: usize) -> CVector {
    CVector::from_iterator(
        nt,
        (0..nt).map(|n| Complex64::from_polar(amplitude, -PI * n as f64 * angle.sin())),
    )
}

/// Azimuths drawn uniformly on `[-pi/2, pi/2]`.
pub fn draw_angles<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(-FRAC_PI_2..=FRAC_PI_2)).collect()
}

/// One slot of channels; the scattered part has per-entry variance `amplitude^2`.
pub fn generate_channel<R: Rng + ?Sized>(
    rng: &mut R,
    angles: &[f64],
    rician_factor: f64,
    amplitude: f64,
    nt: usize,
) -> ChannelState {
    let (w_los, w_nlos) = rician_weights(rician_factor);
    let std = amplitude / 2f64.sqrt();
    let vectors = angles
        .iter()
        .map(|&theta| {
            let los = steering_vector(theta, amplitude, nt);
            CVector::from_iterator(
                nt,
                los.iter().map(|l| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    l * w_los + Complex64::new(re * std, im * std) * w_nlos
                }),
            )
        })
        .collect();
    ChannelState::new(vectors)
}
