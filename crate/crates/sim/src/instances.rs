//! Random slot subproblems drawn from plausible controller states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swipt_core::channel::{draw_angles, generate_channel};
use swipt_core::config::SystemConfig;
use swipt_core::control::slot_problem;
use swipt_core::model::ChannelState;
use swipt_core::solvers::SlotProblem;
use swipt_core::state::{sample_arrivals, NetworkState, UserState};

#[derive(Clone, Debug)]
pub struct Instance {
    pub state: NetworkState,
    pub channel: ChannelState,
    pub problem: SlotProblem,
}

/// Queues up to twice their threshold, virtual queues up to twenty thresholds, Poisson
/// arrivals at the configured mean and batteries between 5% and 95% of capacity.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R, config: &SystemConfig) -> NetworkState {
    let arrivals = sample_arrivals(rng, config.mean_arrival, config.num_users).expect("validated arrival rate");
    let users = config
        .users
        .iter()
        .zip(arrivals)
        .map(|(u, arrival)| UserState {
            queue: rng.random_range(0.0..2.0 * u.queue_threshold),
            virtual_queue: rng.random_range(0.0..20.0 * u.queue_threshold),
            battery: rng.random_range(0.05..0.95) * u.battery_capacity,
            arrival,
        })
        .collect();
    NetworkState { users }
}

pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, config: &SystemConfig) -> Instance {
    let state = random_state(rng, config);
    let angles = draw_angles(rng, config.num_users);
    let channel = generate_channel(rng, &angles, config.rician_factor, config.pathloss_amplitude, config.num_antennas);
    let problem = slot_problem(config, &state, channel.clone());
    Instance { state, channel, problem }
}

/// `count` instances from a fixed seed.
pub fn instances(config: &SystemConfig, count: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_instance(&mut rng, config)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn states_fall_in_their_ranges() {
        let cfg = SystemConfig::default();
        for i in instances(&cfg, 50, 3) {
            for (s, u) in i.state.users.iter().zip(&cfg.users) {
                assert!((0.0..10.0).contains(&s.queue));
                assert!((0.05 * u.battery_capacity..0.95 * u.battery_capacity).contains(&s.battery));
            }
            assert_eq!(i.problem.num_users(), 2);
            assert_eq!(i.problem.num_antennas(), 8);
        }
    }

    #[test]
    fn same_seed_same_instances() {
        let cfg = SystemConfig::default();
        let a = instances(&cfg, 3, 9);
        let b = instances(&cfg, 3, 9);
        assert!(a.iter().zip(&b).all(|(x, y)| x.state == y.state && x.channel == y.channel));
    }
}
