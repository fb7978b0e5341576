//! Per-slot queue and battery dynamics.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SystemConfig;

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("slot needs {used} J but the battery holds {level} J")]
    Overdraw { used: f64, level: f64 },
    #[error("mean arrival {0} must be finite and non-negative")]
    ArrivalRate(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    /// Bits.
    pub queue: f64,
    /// Bits.
    pub virtual_queue: f64,
    /// Joules.
    pub battery: f64,
    /// Bits that arrived this slot.
    pub arrival: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub users: Vec<UserState>,
}

impl NetworkState {
    /// Empty queues and batteries at the configured initial fraction.
    pub fn initial(config: &SystemConfig) -> Self {
        Self {
            users: config
                .users
                .iter()
                .map(|u| UserState {
                    battery: config.initial_battery_fraction * u.battery_capacity,
                    ..Default::default()
                })
                .collect(),
        }
    }

    /// Free battery space of user `k`.
    pub fn spare_battery(&self, config: &SystemConfig, k: usize) -> f64 {
        config.users[k].battery_capacity - self.users[k].battery
    }
}

/// Independent Poisson arrivals for `k` users.
pub fn sample_arrivals<R: Rng + ?Sized>(rng: &mut R, mean: f64, k: usize) -> Result<Vec<f64>, StateError> {
    if !(mean.is_finite() && mean >= 0.0) {
        return Err(StateError::ArrivalRate(mean));
    }
    if mean == 0.0 {
        return Ok(vec![0.0; k]);
    }
    let dist = Poisson::new(mean).map_err(|_| StateError::ArrivalRate(mean))?;
    Ok((0..k).map(|_| dist.sample(rng)).collect())
}

pub fn advance_data_queue(queue: f64, rate: f64, arrival: f64) -> f64 {
    (queue - rate + arrival).max(0.0)
}

pub fn advance_virtual_queue(virtual_queue: f64, next_queue: f64, violation_prob: f64, threshold: f64) -> f64 {
    (virtual_queue + next_queue - violation_prob * threshold).max(0.0)
}

/// Battery level after one slot plus the harvested energy that did not fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatteryStep {
    pub level: f64,
    pub overflow: f64,
}

/// Harvest-store-use update: spend, then add this slot's harvest up to capacity.
pub fn advance_battery(level: f64, used: f64, harvested: f64, capacity: f64) -> Result<BatteryStep, StateError> {
    if used > level {
        return Err(StateError::Overdraw { used, level });
    }
    Ok(battery_step(level, used, harvested, capacity))
}

/// The same update without the overdraw check; the deficit is clamped at zero.
pub fn battery_step(level: f64, used: f64, harvested: f64, capacity: f64) -> BatteryStep {
    let uncapped = (level - used).max(0.0) + harvested;
    let next = uncapped.min(capacity);
    BatteryStep { level: next, overflow: uncapped - next }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn arrivals() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_arrivals(&mut rng, 0.0, 3).unwrap(), vec![0.0; 3]);
        let n = 100_000;
        let draws = sample_arrivals(&mut rng, 3.0, n).unwrap();
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - 3.0).abs() < 0.05);
        let a = sample_arrivals(&mut ChaCha8Rng::seed_from_u64(7), 2.0, 50).unwrap();
        let b = sample_arrivals(&mut ChaCha8Rng::seed_from_u64(7), 2.0, 50).unwrap();
        assert_eq!(a, b);
        assert!(sample_arrivals(&mut rng, -1.0, 1).is_err());
    }

    #[test]
    fn queue_examples() {
        assert_eq!(advance_data_queue(5.0, 3.0, 1.0), 3.0);
        assert_eq!(advance_data_queue(2.0, 5.0, 1.0), 0.0);
        assert_eq!(advance_data_queue(0.0, 0.0, 4.0), 4.0);
        assert_eq!(advance_virtual_queue(1.0, 6.0, 0.1, 5.0), 6.5);
        assert_eq!(advance_virtual_queue(0.0, 0.0, 0.1, 5.0), 0.0);
        assert_eq!(advance_virtual_queue(0.0, 0.5, 0.1, 5.0), 0.0);
    }

    #[test]
    fn battery_examples() {
        assert_eq!(advance_battery(5.0, 2.0, 1.0, 10.0).unwrap().level, 4.0);
        let full = advance_battery(9.0, 0.0, 3.0, 10.0).unwrap();
        assert_eq!((full.level, full.overflow), (10.0, 2.0));
        assert_eq!(advance_battery(1.0, 1.0, 0.5, 10.0).unwrap().level, 0.5);
        assert_eq!(
            advance_battery(1.0, 1.5, 0.0, 10.0),
            Err(StateError::Overdraw { used: 1.5, level: 1.0 })
        );
    }

    proptest! {
        #[test]
        fn queue_is_monotone(q in 0.0f64..50.0, r in 0.0f64..20.0, a in 0.0f64..20.0, d in 0.0f64..5.0) {
            prop_assert!(advance_data_queue(q, r, a + d) >= advance_data_queue(q, r, a));
            prop_assert!(advance_data_queue(q, r + d, a) <= advance_data_queue(q, r, a));
            prop_assert!(advance_virtual_queue(q, a, 0.1, 5.0) >= 0.0);
        }

        #[test]
        fn battery_accounting_balances(
            steps in prop::collection::vec((0.0f64..1.0, 0.0f64..4.0), 1..200),
            start in 0.0f64..10.0,
        ) {
            let capacity = 10.0;
            let mut level = start;
            let (mut used_total, mut harvested_total, mut overflow_total) = (0.0, 0.0, 0.0);
            for (frac, harvest) in steps {
                let used = frac * level;
                let s = advance_battery(level, used, harvest, capacity).unwrap();
                prop_assert!(s.level >= 0.0 && s.level <= capacity);
                prop_assert!(s.overflow >= 0.0);
                used_total += used;
                harvested_total += harvest;
                overflow_total += s.overflow;
                level = s.level;
            }
            let lhs = harvested_total - used_total - overflow_total;
            prop_assert!((lhs - (level - start)).abs() < 1e-9);
        }
    }
}
