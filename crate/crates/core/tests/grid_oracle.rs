mod support {
    pub mod grid;
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::LN_2;
use swipt_core::channel::{draw_angles, generate_channel};
use swipt_core::config::SystemConfig;
use swipt_core::control::{slot_problem, solve_slot, SolverChoice};
use swipt_core::solvers::{HarvestMode, SlotProblem};
use swipt_core::state::{NetworkState, UserState};
use support::grid::grid_optimum;

fn random_slot(seed: u64, mode: HarvestMode) -> (SystemConfig, SlotProblem) {
    let mut cfg = SystemConfig::with_users(1, 1);
    cfg.mode = mode;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = NetworkState {
        users: vec![UserState {
            queue: rng.random_range(0.0..10.0),
            virtual_queue: rng.random_range(0.0..200.0),
            battery: rng.random_range(0.5..9.5),
            arrival: rng.random_range(0..8) as f64,
        }],
    };
    let angles = draw_angles(&mut rng, 1);
    let ch = generate_channel(&mut rng, &angles, cfg.rician_factor, cfg.pathloss_amplitude, 1);
    let p = slot_problem(&cfg, &state, ch);
    (cfg, p)
}

fn gap(reference: f64, value: f64) -> f64 {
    (value - reference).abs() / reference.abs().max(1e-12)
}

#[test]
fn grid_matches_closed_form_without_harvest_reward() {
    // Rate-only slot at a fixed ratio: V = w a / (ln2 (1 + a p)) gives p = w / (V ln 2) - 1 / a.
    let (_, mut p) = random_slot(3, HarvestMode::Battery);
    p.users[0].energy_weight = 0.0;
    p.users[0].sinr_cap = f64::INFINITY;
    p.users[0].rate_weight = 12.0;
    let hi = p.ps_bounds.1;
    p.ps_bounds.0 = hi - 1e-12;
    let u = &p.users[0];
    let a = hi * p.channel.user(0).norm_squared() / (hi * u.rx_noise_var + u.id_noise_var);
    let power = u.rate_weight / (p.tradeoff * LN_2) - 1.0 / a;
    let g = grid_optimum(&p, 50);
    assert!((g.power - power).abs() < 1e-6 * power, "{} vs {power}", g.power);
    assert!((g.ps_ratio - hi).abs() < 1e-9);
}

#[test]
fn grid_is_a_lower_bound_on_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for seed in 0..5 {
        for mode in [HarvestMode::Battery, HarvestMode::Batteryless] {
            let (_, p) = random_slot(seed, mode);
            let g = grid_optimum(&p, 1000);
            for _ in 0..2000 {
                let mut d = swipt_core::model::BeamDecision::idle(1, 1);
                let power: f64 = rng.random_range(0.0..2.0 * g.power.max(1.0));
                d.beams[0][0] = num_complex::Complex64::new(power.sqrt(), 0.0);
                d.ps_ratio[0] = rng.random_range(p.ps_bounds.0..p.ps_bounds.1);
                p.clone().certify(&mut d, 0.0);
                d.sinr[0] = p.actual_sinr(&d, 0).min(p.users[0].sinr_cap);
                if p.harvest_active(0) {
                    d.harvest[0] = p.actual_harvest(&d, 0).min(p.users[0].harvest_cap);
                }
                if mode == HarvestMode::Batteryless && p.harvest_margin(&d) < 0.0 {
                    continue;
                }
                assert!(p.objective(&d) >= g.objective - 1e-9 * g.objective.abs());
            }
        }
    }
}

#[test]
fn solvers_match_the_grid() {
    for mode in [HarvestMode::Battery, HarvestMode::Batteryless] {
        for seed in 0..20 {
            let (cfg, p) = random_slot(seed, mode);
            let g = grid_optimum(&p, 1000);
            for choice in [SolverChoice::Sca, SolverChoice::SdrFp] {
                let out = solve_slot(&p, &cfg, choice).unwrap();
                let obj = p.objective(&out.decision);
                assert!(
                    gap(g.objective, obj) < 5e-3,
                    "{choice} {mode:?} seed {seed}: solver {obj} grid {}",
                    g.objective
                );
            }
        }
    }
}

#[test]
fn zero_weight_user_does_not_change_the_optimum() {
    let cfg = SystemConfig::with_users(2, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let angles = draw_angles(&mut rng, 2);
        let ch = generate_channel(&mut rng, &angles, cfg.rician_factor, cfg.pathloss_amplitude, 4);
        let busy = UserState { queue: rng.random_range(1.0..10.0), battery: rng.random_range(1.0..9.0), ..Default::default() };
        // Empty queues and a full battery: no reward at all for the second user.
        let idle = UserState { battery: 10.0, ..Default::default() };
        let both = slot_problem(&cfg, &NetworkState { users: vec![busy, idle] }, ch.clone());
        let single_cfg = SystemConfig::with_users(1, 4);
        let alone = slot_problem(&single_cfg, &NetworkState { users: vec![busy] }, swipt_core::model::ChannelState::new(vec![ch.user(0).clone()]));
        let a = solve_slot(&both, &cfg, SolverChoice::Sca).unwrap();
        let b = solve_slot(&alone, &single_cfg, SolverChoice::Sca).unwrap();
        assert!(gap(b.objective, a.objective) < 1e-3, "{} vs {}", a.objective, b.objective);
        assert!(a.decision.beams[1].norm_squared() < 1e-6 * a.decision.tx_power().max(1e-12));
    }
}

#[test]
fn optimal_power_does_not_grow_with_the_tradeoff() {
    for seed in 0..10 {
        let (cfg, base) = random_slot(100 + seed, HarvestMode::Battery);
        let mut last_grid = f64::INFINITY;
        let mut last_sca = f64::INFINITY;
        for v in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let mut p = base.clone();
            p.tradeoff = v;
            let g = grid_optimum(&p, 1000);
            assert!(g.power <= last_grid * (1.0 + 1e-6) + 1e-9, "seed {seed} V {v}");
            last_grid = g.power;
            let power = solve_slot(&p, &cfg, SolverChoice::Sca).unwrap().decision.tx_power();
            assert!(power <= last_sca * (1.0 + 1e-3) + 1e-9, "seed {seed} V {v}: {power} after {last_sca}");
            last_sca = power;
        }
    }
}
