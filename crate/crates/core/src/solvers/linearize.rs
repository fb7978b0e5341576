//! First-order minorants of the convex SINR and harvest functions.

use thiserror::Error;

use crate::model::{gain, CVector};

#[derive(Debug, Error, PartialEq)]
pub enum LinearizationError {
    #[error("expansion value {value} is below the floor {floor}")]
    BelowFloor { value: f64, floor: f64 },
}

/// `sum_j 2 Re{coef_j^H f_j} + scalar_coef * s + constant`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineFunctional {
    pub beam_coefs: Vec<(usize, CVector)>,
    pub scalar_coef: f64,
    pub constant: f64,
}

impl AffineFunctional {
    pub fn eval(&self, beams: &[CVector], scalar: f64) -> f64 {
        self.beam_coefs
            .iter()
            .map(|(j, c)| 2.0 * c.dotc(&beams[*j]).re)
            .sum::<f64>()
            + self.scalar_coef * scalar
            + self.constant
    }
}

/// `|h^H f|^2 / gamma`
pub fn sinr_ratio(h: &CVector, f: &CVector, gamma: f64) -> f64 {
    gain(h, f) / gamma
}

/// `scale * (sum_j |h^H f_j|^2 + noise) / e`
pub fn harvest_ratio(h: &CVector, beams: &[CVector], noise: f64, e: f64, scale: f64) -> f64 {
    scale * (beams.iter().map(|f| gain(h, f)).sum::<f64>() + noise) / e
}

fn check(value: f64, floor: f64) -> Result<(), LinearizationError> {
    if value >= floor {
        Ok(())
    } else {
        Err(LinearizationError::BelowFloor { value, floor })
    }
}

/// Tangent plane of `|h^H f_k|^2 / gamma` at `(f0, gamma0)`; `k` labels the beam.
pub fn linearize_sinr_ratio(
    h: &CVector,
    k: usize,
    f0: &CVector,
    gamma0: f64,
    floor: f64,
) -> Result<AffineFunctional, LinearizationError> {
    check(gamma0, floor)?;
    let c = h.dotc(f0);
    let a = c.norm_sqr();
    // 2 Re{f0^H h h^H f} / gamma0 - a gamma / gamma0^2; the constants cancel.
    Ok(AffineFunctional {
        beam_coefs: vec![(k, h * (c / gamma0))],
        scalar_coef: -a / (gamma0 * gamma0),
        constant: 0.0,
    })
}

/// Tangent plane of `scale * (sum_j |h^H f_j|^2 + noise) / e` at `(beams0, e0)`.
pub fn linearize_harvest_ratio(
    h: &CVector,
    beams0: &[CVector],
    noise: f64,
    e0: f64,
    scale: f64,
    floor: f64,
) -> Result<AffineFunctional, LinearizationError> {
    check(e0, floor)?;
    let mut beam_coefs = Vec::with_capacity(beams0.len());
    let mut linear_at_point = 0.0;
    let mut received = noise;
    for (j, f) in beams0.iter().enumerate() {
        let c = h.dotc(f);
        received += c.norm_sqr();
        linear_at_point += 2.0 * c.norm_sqr();
        beam_coefs.push((j, h * (c * (scale / e0))));
    }
    let r = scale * received;
    // 2 sum Re{f0_j^H h h^H (f_j - f0_j)} / e0 + (r / e0) (1 - (e - e0) / e0)
    Ok(AffineFunctional {
        beam_coefs,
        scalar_coef: -r / (e0 * e0),
        constant: -scale * linear_at_point / e0 + 2.0 * r / e0,
    })
}

/// Tangent plane of `sum_j |h^H f_j|^2 + noise` at `beams0`.
pub fn linearize_received_power(h: &CVector, beams0: &[CVector], noise: f64) -> AffineFunctional {
    let mut beam_coefs = Vec::with_capacity(beams0.len());
    let mut constant = noise;
    for (j, f) in beams0.iter().enumerate() {
        let c = h.dotc(f);
        // 2 Re{c^* h^H (f - f0)} + |c|^2
        constant -= c.norm_sqr();
        beam_coefs.push((j, h * c));
    }
    AffineFunctional { beam_coefs, scalar_coef: 0.0, constant }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CVector {
        CVector::from_iterator(
            n,
            (0..n).map(|_| Complex64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))),
        )
    }

    /// Direct received power without the functional machinery.
    fn received(h: &CVector, beams: &[CVector]) -> f64 {
        beams.iter().map(|f| h.dotc(f).norm_sqr()).sum()
    }

    #[test]
    fn tangency_at_expansion_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let h = random_vec(&mut rng, 4, 1.0);
            let beams: Vec<_> = (0..3).map(|_| random_vec(&mut rng, 4, 2.0)).collect();
            let gamma0 = rng.random_range(0.01..50.0);
            let e0 = rng.random_range(0.01..50.0);
            let g = linearize_sinr_ratio(&h, 1, &beams[1], gamma0, 1e-9).unwrap();
            let exact = sinr_ratio(&h, &beams[1], gamma0);
            assert!((g.eval(&beams, gamma0) - exact).abs() <= 1e-12 * exact.max(1.0));
            let s = linearize_harvest_ratio(&h, &beams, 0.3, e0, 2.0, 1e-9).unwrap();
            let exact = harvest_ratio(&h, &beams, 0.3, e0, 2.0);
            assert!((s.eval(&beams, e0) - exact).abs() <= 1e-12 * exact.max(1.0));
            let r = linearize_received_power(&h, &beams, 0.3);
            let exact = received(&h, &beams) + 0.3;
            assert!((r.eval(&beams, 0.0) - exact).abs() <= 1e-12 * exact.max(1.0));
        }
    }

    #[test]
    fn minorants_hold_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = random_vec(&mut rng, 3, 1.0);
        let beams0: Vec<_> = (0..2).map(|_| random_vec(&mut rng, 3, 1.0)).collect();
        let (gamma0, e0) = (2.5, 0.7);
        let g = linearize_sinr_ratio(&h, 0, &beams0[0], gamma0, 1e-9).unwrap();
        let s = linearize_harvest_ratio(&h, &beams0, 0.1, e0, 1.0, 1e-9).unwrap();
        let r = linearize_received_power(&h, &beams0, 0.1);
        for _ in 0..10_000 {
            let beams: Vec<_> = (0..2).map(|_| random_vec(&mut rng, 3, 3.0)).collect();
            let gamma = rng.random_range(1e-3..20.0);
            let e = rng.random_range(1e-3..20.0);
            let exact = sinr_ratio(&h, &beams[0], gamma);
            assert!(g.eval(&beams, gamma) <= exact + 1e-12 * exact.max(1.0));
            let exact = harvest_ratio(&h, &beams, 0.1, e, 1.0);
            assert!(s.eval(&beams, e) <= exact + 1e-12 * exact.max(1.0));
            let exact = received(&h, &beams) + 0.1;
            assert!(r.eval(&beams, 0.0) <= exact + 1e-12 * exact.max(1.0));
        }
    }

    #[test]
    fn zero_point_degenerates() {
        let h = CVector::from_element(2, Complex64::new(1.0, 0.5));
        let zero = vec![CVector::zeros(2), CVector::zeros(2)];
        let probe = vec![
            CVector::from_element(2, Complex64::new(3.0, -1.0)),
            CVector::from_element(2, Complex64::new(-2.0, 0.2)),
        ];
        let g = linearize_sinr_ratio(&h, 0, &zero[0], 1.0, 1e-9).unwrap();
        assert_eq!(g.eval(&probe, 7.0), 0.0);
        let s = linearize_harvest_ratio(&h, &zero, 0.2, 0.5, 1.0, 1e-9).unwrap();
        assert_eq!(s.eval(&probe, 0.0), s.constant);
        assert!(s.scalar_coef < 0.0);
        let r = linearize_received_power(&h, &zero, 0.2);
        assert_eq!(r.eval(&probe, 0.0), 0.2);
    }

    #[test]
    fn floors_reject_degenerate_points() {
        let h = CVector::from_element(1, Complex64::new(1.0, 0.0));
        assert_eq!(
            linearize_sinr_ratio(&h, 0, &h, 1e-12, 1e-9),
            Err(LinearizationError::BelowFloor { value: 1e-12, floor: 1e-9 })
        );
        assert!(linearize_harvest_ratio(&h, &[h.clone()], 0.1, 0.0, 1.0, 1e-9).is_err());
    }
}
