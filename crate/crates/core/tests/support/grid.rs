//! Brute-force reference for single-antenna, single-user slots.
//!
//! For a fixed split ratio the slot objective is convex in the transmit power, so each
//! ratio on the grid gets an exact one-dimensional minimization; the best cell is then
//! refined by golden-section search over the ratio.

use swipt_core::solvers::{HarvestMode, SlotProblem};

pub struct GridOptimum {
    pub objective: f64,
    pub power: f64,
    pub ps_ratio: f64,
}

struct Scalar {
    gain: f64,
    tradeoff: f64,
    rate_weight: f64,
    energy_weight: f64,
    sinr_cap: f64,
    harvest_cap: f64,
    min_harvest: f64,
    rx_noise: f64,
    id_noise: f64,
    efficiency: f64,
    slot: f64,
    batteryless: bool,
}

impl Scalar {
    fn from_problem(p: &SlotProblem) -> Self {
        assert_eq!((p.num_users(), p.num_antennas()), (1, 1), "grid reference needs K = Nt = 1");
        let u = &p.users[0];
        Self {
            gain: p.channel.user(0).norm_squared(),
            tradeoff: p.tradeoff,
            rate_weight: u.rate_weight,
            energy_weight: u.energy_weight,
            sinr_cap: u.sinr_cap,
            harvest_cap: u.harvest_cap,
            min_harvest: u.min_harvest,
            rx_noise: u.rx_noise_var,
            id_noise: u.id_noise_var,
            efficiency: u.eh_efficiency,
            slot: p.slot_duration,
            batteryless: p.mode == HarvestMode::Batteryless,
        }
    }

    fn received(&self, power: f64) -> f64 {
        self.gain * power + self.rx_noise
    }

    /// Smallest power meeting the harvest requirement at `rho`.
    fn min_power(&self, rho: f64) -> f64 {
        if !self.batteryless || self.min_harvest <= 0.0 {
            return 0.0;
        }
        ((self.min_harvest / (self.efficiency * (1.0 - rho)) - self.rx_noise) / self.gain).max(0.0)
    }

    fn value(&self, power: f64, rho: f64) -> f64 {
        let sinr = (rho * self.gain * power / (rho * self.rx_noise + self.id_noise)).min(self.sinr_cap);
        let mut v = self.tradeoff * power - self.rate_weight * (1.0 + sinr).log2();
        if !self.batteryless {
            let harvest = self.slot * self.efficiency * (1.0 - rho) * self.received(power);
            v -= self.energy_weight * harvest.min(self.harvest_cap);
        }
        v
    }

    fn best_power(&self, rho: f64) -> (f64, f64) {
        let lo = self.min_power(rho);
        let f = |x: f64| self.value(lo + x, rho);
        let mut x = 1e-12;
        while x < 1e12 && f(2.0 * x) < f(x) {
            x *= 2.0;
        }
        let x = golden_min(f, 0.0, 2.0 * x);
        (lo + x, f(x))
    }
}

fn golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a <= 1e-14 * b.abs().max(1e-300) {
            break;
        }
        if fc <= fd {
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
    [lo, 0.5 * (a + b)].into_iter().fold(0.5 * (a + b), |best, x| if f(x) < f(best) { x } else { best })
}

/// Reference optimum over (power, split ratio) with `points` ratios per grid.
pub fn grid_optimum(p: &SlotProblem, points: usize) -> GridOptimum {
    let s = Scalar::from_problem(p);
    let (lo, hi) = p.ps_bounds;
    // Linear grid plus a logarithmic one that resolves ratios near the lower bound.
    let mut ratios: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    ratios.extend((0..points).map(|i| lo * (hi / lo).powf(i as f64 / (points - 1) as f64)));
    ratios.sort_by(f64::total_cmp);

    let mut best = (0, f64::INFINITY);
    for (i, &rho) in ratios.iter().enumerate() {
        let (_, v) = s.best_power(rho);
        if v < best.1 {
            best = (i, v);
        }
    }
    let a = ratios[best.0.saturating_sub(1)];
    let b = ratios[(best.0 + 1).min(ratios.len() - 1)];
    let rho = golden_min(|r| s.best_power(r).1, a, b);
    let rho = if s.best_power(rho).1 <= best.1 { rho } else { ratios[best.0] };
    let (power, objective) = s.best_power(rho);
    GridOptimum { objective, power, ps_ratio: rho }
}
