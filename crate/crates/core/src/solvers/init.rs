//! Feasible starting points: matched-filter directions with fixed-point power control.

use crate::model::{gain, BeamDecision, CVector};

use super::{SlotProblem, SolverError};

const POWER_INFLATION: f64 = 1e-3;
const HARVEST_MARGIN: f64 = 1e-2;
const MAX_POWER: f64 = 1e12;

/// Fixed-point power control: `p_k = t_k (sum_{u != k} p_u g_ku + n_k) / g_kk`.
/// `cross[k][u]` is the gain of beam `u` at user `k`; `fixed` powers are not updated
/// but still interfere. Returns `None` when the iteration diverges.
pub fn power_control(
    cross: &[Vec<f64>],
    noise: &[f64],
    targets: &[Option<f64>],
    fixed: &[f64],
) -> Option<Vec<f64>> {
    let k = noise.len();
    let mut p: Vec<f64> = (0..k).map(|u| if targets[u].is_some() { 0.0 } else { fixed[u] }).collect();
    for _ in 0..2000 {
        let mut next = p.clone();
        let mut change: f64 = 0.0;
        for i in 0..k {
            let Some(t) = targets[i] else { continue };
            let interference: f64 = (0..k).filter(|&u| u != i).map(|u| p[u] * cross[i][u]).sum();
            next[i] = t * (interference + noise[i]) / cross[i][i];
            change = change.max((next[i] - p[i]).abs() / next[i].max(1e-300));
        }
        p = next;
        if p.iter().any(|x| !x.is_finite() || *x > MAX_POWER) {
            return None;
        }
        if change < 1e-12 {
            return Some(p);
        }
    }
    None
}

/// Starting point at split ratio one half (clamped to the box).
pub fn initial_point(p: &SlotProblem, floor: f64) -> Result<BeamDecision, SolverError> {
    let k = p.num_users();
    let nt = p.num_antennas();
    let rho = 0.5f64.clamp(p.ps_bounds.0, p.ps_bounds.1);
    let mut d = BeamDecision::idle(k, nt);
    d.ps_ratio = vec![rho; k];

    let rate: Vec<bool> = (0..k).map(|u| p.rate_active(u, floor) && p.channel.user(u).norm() > 0.0).collect();
    let served: Vec<bool> = (0..k)
        .map(|u| rate[u] || ((p.harvest_active(u) || p.harvest_required(u)) && p.channel.user(u).norm() > 0.0))
        .collect();
    if !served.iter().any(|&s| s) {
        if (0..k).any(|u| p.harvest_required(u)) {
            return Err(SolverError::InfeasibleStart("harvest required over a zero channel".into()));
        }
        return Ok(d);
    }

    let dirs: Vec<CVector> = (0..k)
        .map(|u| {
            let h = p.channel.user(u);
            if served[u] {
                h.unscale(h.norm())
            } else {
                CVector::zeros(nt)
            }
        })
        .collect();
    let cross: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|u| gain(p.channel.user(i), &dirs[u])).collect()).collect();
    let noise: Vec<f64> = p.users.iter().map(|u| u.rx_noise_var + u.id_noise_var / rho).collect();

    // Harvest-only users transmit at the mean power of the others, or one watt.
    let mut targets: Vec<Option<f64>> = (0..k).map(|u| rate[u].then(|| p.users[u].sinr_cap.min(1.0))).collect();
    let mut powers = None;
    for _ in 0..80 {
        let Some(q) = power_control(&cross, &noise, &targets, &vec![0.0; k]) else {
            for t in targets.iter_mut().flatten() {
                *t *= 0.5;
            }
            continue;
        };
        let rate_powers: Vec<f64> = (0..k).filter(|&u| rate[u]).map(|u| q[u]).collect();
        let level = if rate_powers.is_empty() {
            1.0
        } else {
            rate_powers.iter().sum::<f64>() / rate_powers.len() as f64
        };
        let fixed: Vec<f64> = (0..k).map(|u| if served[u] && !rate[u] { level } else { 0.0 }).collect();
        match power_control(&cross, &noise, &targets, &fixed) {
            Some(q) => {
                powers = Some(q);
                break;
            }
            None => {
                for t in targets.iter_mut().flatten() {
                    *t *= 0.5;
                }
            }
        }
    }
    let mut powers = powers.ok_or_else(|| SolverError::InfeasibleStart("power control diverged".into()))?;
    for q in powers.iter_mut() {
        *q *= 1.0 + POWER_INFLATION;
    }

    // Batteryless users must already harvest enough at the starting split.
    let mut scale: f64 = 1.0;
    for i in 0..k {
        if !p.harvest_required(i) {
            continue;
        }
        let u = &p.users[i];
        if u.eh_efficiency <= 0.0 {
            return Err(SolverError::InfeasibleStart(format!("user {i} cannot harvest")));
        }
        let need = (1.0 + HARVEST_MARGIN) * u.min_harvest / (u.eh_efficiency * (1.0 - rho)) - u.rx_noise_var;
        let have: f64 = (0..k).map(|j| powers[j] * cross[i][j]).sum();
        if need > 0.0 {
            if have <= 0.0 {
                return Err(SolverError::InfeasibleStart(format!("user {i} receives no power")));
            }
            scale = scale.max(need / have);
        }
    }

    d.beams = (0..k).map(|u| dirs[u].scale((powers[u] * scale).sqrt())).collect();
    for u in 0..k {
        if rate[u] {
            d.sinr[u] = targets[u].unwrap_or(0.0);
        }
        if p.harvest_active(u) {
            d.harvest[u] = (0.5 * p.actual_harvest(&d, u)).min(p.users[u].harvest_cap);
        }
    }
    Ok(d)
}
