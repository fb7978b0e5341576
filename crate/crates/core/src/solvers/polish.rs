//! Split-ratio restoration with the beamformers held fixed.

use crate::model::{gain, BeamDecision};

use super::SlotProblem;

/// Maximizer of a unimodal function on `[lo, hi]` by golden-section search.
pub fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-13 * (1.0 + a.abs()) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    [lo, mid, hi].into_iter().fold(mid, |best, x| if f(x) > f(best) { x } else { best })
}

/// Re-chooses every split ratio for the fixed beams and sets the SINR and harvest
/// variables to what the beams deliver, capped. Returns the number of users whose
/// harvest requirement cannot be met at any split.
pub fn optimize_split(p: &SlotProblem, d: &mut BeamDecision, floor: f64) -> usize {
    let (lo, hi) = p.ps_bounds;
    let mut unmet = 0;
    for k in 0..p.num_users() {
        let u = &p.users[k];
        let h = p.channel.user(k);
        let own = gain(h, &d.beams[k]);
        let received: f64 = d.beams.iter().map(|f| gain(h, f)).sum::<f64>() + u.rx_noise_var;
        let interference = received - own;
        let rate = p.rate_active(k, floor);
        let stored = p.harvest_active(k);
        let sinr = |rho: f64| rho * own / (rho * interference + u.id_noise_var);
        let harvest = |rho: f64| p.slot_duration * u.eh_efficiency * (1.0 - rho) * received;
        let rho = if p.harvest_required(k) {
            let top = 1.0 - u.min_harvest / (u.eh_efficiency * received);
            if top < lo {
                unmet += 1;
                lo
            } else {
                top.min(hi)
            }
        } else if rate || stored {
            let reward = |rho: f64| {
                let mut v = 0.0;
                if rate {
                    v += u.rate_weight * (1.0 + sinr(rho).min(u.sinr_cap)).log2();
                }
                if stored {
                    v += u.energy_weight * harvest(rho).min(u.harvest_cap);
                }
                v
            };
            golden_max(reward, lo, hi)
        } else {
            d.ps_ratio[k].clamp(lo, hi)
        };
        d.ps_ratio[k] = rho;
        d.sinr[k] = if rate { sinr(rho).min(u.sinr_cap) } else { 0.0 };
        d.harvest[k] = if stored { harvest(rho).min(u.harvest_cap) } else { 0.0 };
    }
    unmet
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::testing::random_problem;
    use crate::solvers::HarvestMode;

    #[test]
    fn golden_section_finds_parabola_peak() {
        let x = golden_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0);
        assert!((x - 0.3).abs() < 1e-7);
        assert_eq!(golden_max(|x| x, 0.0, 1.0), 1.0);
    }

    #[test]
    fn split_beats_a_fine_scan() {
        for seed in 0..10 {
            let p = random_problem(seed, 2, 3, HarvestMode::Battery);
            let mut d = crate::solvers::init::initial_point(&p, 1e-9).unwrap();
            optimize_split(&p, &mut d, 1e-9);
            let best = p.objective(&d);
            for k in 0..2 {
                for i in 0..=2000 {
                    let mut probe = d.clone();
                    probe.ps_ratio[k] = p.ps_bounds.0 + (p.ps_bounds.1 - p.ps_bounds.0) * i as f64 / 2000.0;
                    probe.sinr[k] = p.actual_sinr(&probe, k).min(p.users[k].sinr_cap);
                    probe.harvest[k] = if p.harvest_active(k) {
                        p.actual_harvest(&probe, k).min(p.users[k].harvest_cap)
                    } else {
                        0.0
                    };
                    assert!(p.objective(&probe) >= best - 1e-9 * best.abs());
                }
            }
        }
    }

    #[test]
    fn batteryless_split_meets_the_requirement() {
        let p = random_problem(3, 2, 4, HarvestMode::Batteryless);
        let mut d = crate::solvers::init::initial_point(&p, 1e-9).unwrap();
        assert_eq!(optimize_split(&p, &mut d, 1e-9), 0);
        assert!(p.harvest_margin(&d) > -1e-9);
    }
}
