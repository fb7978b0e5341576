//! Closed-form KKT iteration for the batteryless problem.
//!
//! Each sweep updates every beam from a damped fixed-point step, then the split ratios,
//! SINR variables and both multiplier families, all from the previous iterate.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::config::SolverSettings;
use crate::model::{gain, BeamDecision, CVector};

use super::init::initial_point;
use super::{relative_change, Diagnostics, HarvestMode, KktResiduals, SlotProblem, SolverError, SolverOutput};

/// Increases in a row that trigger the optional step-halving restart.
const RESTART_AFTER: usize = 10;

/// SINR multiplier from the rate stationarity condition.
/// `weight` already includes any logarithm base conversion.
pub fn lambda1_update(weight: f64, gamma_old: f64, gamma_new: f64, gain_old: f64) -> f64 {
    weight * gamma_old * gamma_old / ((1.0 + gamma_new) * gain_old)
}

/// Harvest multiplier from the split-ratio stationarity condition.
pub fn lambda2_update(eh_efficiency: f64, id_noise_var: f64, lambda1_old: f64, rho_old: f64, min_harvest: f64) -> f64 {
    eh_efficiency * id_noise_var * lambda1_old * (1.0 - rho_old).powi(2) / (min_harvest * rho_old * rho_old)
}

/// Multipliers of the SINR and harvest constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct Multipliers {
    pub sinr: Vec<f64>,
    pub harvest: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KktState {
    pub decision: BeamDecision,
    pub multipliers: Multipliers,
}

/// `sum_j lambda_j h_j (h_j^H f)`
fn weighted_projection(p: &SlotProblem, weights: &[f64], skip: Option<usize>, f: &CVector) -> CVector {
    let mut out = CVector::zeros(f.len());
    for (j, &w) in weights.iter().enumerate() {
        if Some(j) == skip || w == 0.0 {
            continue;
        }
        let h = p.channel.user(j);
        out += h * (h.dotc(f) * w);
    }
    out
}

/// Solves `(V I + sum_{u != k} lambda1_u h_u h_u^H) x = b` by Cholesky.
fn solve_beam(p: &SlotProblem, lambda1: &[f64], k: usize, b: &CVector) -> Option<CVector> {
    let nt = p.num_antennas();
    let mut a = DMatrix::<Complex64>::identity(nt, nt).scale(p.tradeoff);
    for (u, &l) in lambda1.iter().enumerate() {
        if u != k && l != 0.0 {
            let h = p.channel.user(u);
            a += (h * h.adjoint()).scale(l);
        }
    }
    a.cholesky().map(|c| c.solve(b))
}

fn rate_weight(p: &SlotProblem, k: usize) -> f64 {
    p.users[k].rate_weight / LN_2
}

/// Multipliers consistent with the stationarity conditions at `d`.
pub fn initial_multipliers(p: &SlotProblem, d: &BeamDecision, rate: &[bool]) -> Multipliers {
    let k = p.num_users();
    let sinr: Vec<f64> = (0..k)
        .map(|u| {
            let g = gain(p.channel.user(u), &d.beams[u]);
            if rate[u] && g > 0.0 {
                lambda1_update(rate_weight(p, u), d.sinr[u], d.sinr[u], g)
            } else {
                0.0
            }
        })
        .collect();
    let harvest = (0..k)
        .map(|u| {
            let t = &p.users[u];
            if p.harvest_required(u) {
                lambda2_update(t.eh_efficiency, t.id_noise_var, sinr[u], d.ps_ratio[u], t.min_harvest)
            } else {
                0.0
            }
        })
        .collect();
    Multipliers { sinr, harvest }
}

/// Relative stationarity and slackness residuals at a state.
pub fn residuals(p: &SlotProblem, s: &KktState, rate: &[bool]) -> KktResiduals {
    let d = &s.decision;
    let m = &s.multipliers;
    let mut r = KktResiduals::default();
    for k in 0..p.num_users() {
        let t = &p.users[k];
        let h = p.channel.user(k);
        let f = &d.beams[k];
        let lhs = f.scale(p.tradeoff) + weighted_projection(p, &m.sinr, Some(k), f);
        let mut rhs = weighted_projection(p, &m.harvest, None, f);
        let rate = rate[k] && d.sinr[k] > 0.0;
        if rate {
            rhs += h * (h.dotc(f) * (m.sinr[k] / d.sinr[k]));
        }
        let scale = lhs.norm().max(rhs.norm());
        if scale > 0.0 {
            r.beam_stationarity = r.beam_stationarity.max((lhs - rhs).norm() / scale);
        }

        let rho = d.ps_ratio[k];
        let received: f64 = d.beams.iter().map(|b| gain(h, b)).sum::<f64>() + t.rx_noise_var;
        let own = gain(h, f);
        if rate {
            let w = rate_weight(p, k) / (1.0 + d.sinr[k]);
            let v = m.sinr[k] * own / (d.sinr[k] * d.sinr[k]);
            r.sinr_stationarity = r.sinr_stationarity.max((w - v).abs() / w.max(v));
            let need = received - own + t.id_noise_var / rho;
            let have = own / d.sinr[k];
            r.sinr_slackness = r.sinr_slackness.max((need - have).abs() / have.max(need));
        }
        if p.harvest_required(k) {
            let a = m.sinr[k] * t.id_noise_var / (rho * rho);
            let b = m.harvest[k] * t.min_harvest / (t.eh_efficiency * (1.0 - rho).powi(2));
            if a.max(b) > 0.0 {
                r.split_stationarity = r.split_stationarity.max((a - b).abs() / a.max(b));
            }
            let need = t.min_harvest / (t.eh_efficiency * (1.0 - rho));
            r.harvest_slackness = r.harvest_slackness.max((need - received).abs() / received.max(need));
        }
    }
    r
}

/// One sweep: beams, then split ratios, then SINRs, then multipliers.
/// Returns the new state and the number of clamp events.
pub fn kkt_iterate(p: &SlotProblem, s: &KktState, rate: &[bool], step: f64, floor: f64) -> (KktState, usize) {
    let k = p.num_users();
    let (lo, hi) = p.ps_bounds;
    let old = &s.decision;
    let m = &s.multipliers;
    let mut clamps = 0;

    let mut beams = Vec::with_capacity(k);
    for u in 0..k {
        let h = p.channel.user(u);
        let f = &old.beams[u];
        let mut b = weighted_projection(p, &m.harvest, None, f);
        if rate[u] {
            b += h * (h.dotc(f) * (m.sinr[u] / old.sinr[u]));
        }
        let target = solve_beam(p, &m.sinr, u, &b).unwrap_or_else(|| f.clone());
        beams.push(f + (target - f).scale(step));
    }

    let mut ps_ratio = old.ps_ratio.clone();
    let mut sinr = old.sinr.clone();
    for u in 0..k {
        let t = &p.users[u];
        let h = p.channel.user(u);
        let rho = if p.harvest_required(u) {
            // Received power linearized at the previous beams.
            let mut linear = t.rx_noise_var;
            for (f0, f1) in old.beams.iter().zip(&beams) {
                let c = h.dotc(f0);
                linear += 2.0 * (c.conj() * h.dotc(&(f1 - f0))).re + c.norm_sqr();
            }
            1.0 - t.min_harvest / (t.eh_efficiency * linear)
        } else {
            hi
        };
        let clamped = if rho.is_finite() { rho.clamp(lo, hi) } else { lo };
        if clamped != rho && p.harvest_required(u) {
            clamps += 1;
        }
        ps_ratio[u] = clamped;

        if rate[u] {
            let g0 = old.sinr[u];
            let c = h.dotc(&old.beams[u]);
            let own_old = c.norm_sqr();
            let tangent = 2.0 * (c.conj() * h.dotc(&(&beams[u] - &old.beams[u]))).re / g0;
            let interference: f64 = (0..k).filter(|&v| v != u).map(|v| gain(h, &beams[v])).sum();
            let need = interference + t.rx_noise_var + t.id_noise_var / clamped;
            let g = 2.0 * g0 + (tangent - need) * g0 * g0 / own_old;
            let capped = g.min(t.sinr_cap).max(floor);
            if capped != g || !g.is_finite() {
                clamps += 1;
            }
            sinr[u] = if capped.is_finite() { capped } else { floor };
        }
    }

    let mut next = Multipliers { sinr: vec![0.0; k], harvest: vec![0.0; k] };
    for u in 0..k {
        let t = &p.users[u];
        if rate[u] {
            let g = gain(p.channel.user(u), &old.beams[u]);
            next.sinr[u] = if g > 0.0 { lambda1_update(rate_weight(p, u), old.sinr[u], sinr[u], g) } else { 0.0 };
        }
        if p.harvest_required(u) {
            next.harvest[u] = lambda2_update(t.eh_efficiency, t.id_noise_var, m.sinr[u], old.ps_ratio[u], t.min_harvest);
        }
    }

    let decision = BeamDecision { beams, ps_ratio, sinr, harvest: vec![0.0; k] };
    (KktState { decision, multipliers: next }, clamps)
}

/// Runs the KKT iteration with damping `step` from the shared initialization.
pub fn solve_kkt(p: &SlotProblem, settings: &SolverSettings, step: f64) -> Result<SolverOutput, SolverError> {
    if p.mode != HarvestMode::Batteryless {
        return Err(SolverError::WrongMode("KKT iteration"));
    }
    if p.tradeoff <= 0.0 {
        return Err(SolverError::Degenerate("the closed-form beam step needs a positive power price".into()));
    }
    let k = p.num_users();
    let floor = settings.floor;
    let rate: Vec<bool> = (0..k).map(|u| p.rate_active(u, floor)).collect();
    let start = initial_point(p, floor)?;
    let multipliers = initial_multipliers(p, &start, &rate);
    let mut state = KktState { decision: start, multipliers };
    let mut diagnostics = Diagnostics::default();
    let mut objective = p.objective(&state.decision);
    let mut history = vec![objective];
    let mut converged = false;
    let mut iterations = 0;
    let mut step = step;
    let mut best = (objective, state.clone());
    let mut rises = 0;

    let idle = !(0..k).any(|u| rate[u] || p.harvest_required(u));
    while !idle && iterations < settings.kkt_max_iter {
        iterations += 1;
        let (next, clamps) = kkt_iterate(p, &state, &rate, step, floor);
        diagnostics.clamp_events += clamps;
        let value = p.objective(&next.decision);
        if !value.is_finite() {
            return Err(SolverError::Degenerate(format!("non-finite objective at sweep {iterations}")));
        }
        let change = relative_change(objective, value);
        rises = if value > objective { rises + 1 } else { 0 };
        state = next;
        objective = value;
        history.push(objective);
        if objective < best.0 {
            best = (objective, state.clone());
        }
        if settings.kkt_restart && !diagnostics.step_halved && rises >= RESTART_AFTER {
            diagnostics.step_halved = true;
            step *= 0.5;
            state = best.1.clone();
            objective = best.0;
            rises = 0;
            continue;
        }
        if change < settings.kkt_tol && residuals(p, &state, &rate).max() < settings.kkt_residual_tol {
            converged = true;
            break;
        }
    }
    if idle {
        converged = true;
    }

    diagnostics.kkt = Some(residuals(p, &state, &rate));
    let mut decision = state.decision;
    diagnostics.certification_gap = p.certify(&mut decision, floor);
    let objective = p.objective(&decision);
    Ok(SolverOutput { decision, objective, iterations, converged, history, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::sca::solve_sca_batteryless;
    use crate::solvers::testing::random_problem;

    #[test]
    fn multiplier_updates_match_hand_values() {
        // 10 * 1 / ((1 + 1) * 2)
        assert_eq!(lambda1_update(10.0, 1.0, 1.0, 2.0), 2.5);
        // 0.8 * 0.01 * 2 * 0.25 / (0.01 * 0.25)
        assert!((lambda2_update(0.8, 0.01, 2.0, 0.5, 0.01) - 1.6).abs() < 1e-12);
    }

    #[test]
    fn zero_multipliers_give_zero_beams() {
        let p = random_problem(2, 2, 4, HarvestMode::Batteryless);
        let rate = vec![true, true];
        let d = initial_point(&p, 1e-9).unwrap();
        let s = KktState { decision: d, multipliers: Multipliers { sinr: vec![0.0; 2], harvest: vec![0.0; 2] } };
        let (next, _) = kkt_iterate(&p, &s, &rate, 1.0, 1e-9);
        assert!(next.decision.beams.iter().all(|f| f.norm() == 0.0));
    }

    #[test]
    fn battery_mode_is_rejected() {
        let p = random_problem(0, 2, 2, HarvestMode::Battery);
        assert_eq!(solve_kkt(&p, &SolverSettings::default(), 0.25), Err(SolverError::WrongMode("KKT iteration")));
    }

    #[test]
    fn stationary_at_the_sca_limit() {
        let settings = SolverSettings { outer_tol: 1e-10, max_outer_iter: 500, conic_gap_rel: 1e-11, ..Default::default() };
        let mut checked = 0;
        for seed in 0..8 {
            let p = random_problem(seed, 2, 4, HarvestMode::Batteryless);
            let rate = vec![true, true];
            let sca = solve_sca_batteryless(&p, &settings).unwrap();
            let m = initial_multipliers(&p, &sca.decision, &rate);
            let s = KktState { decision: sca.decision, multipliers: m };
            if s.decision.sinr.iter().any(|&g| g < 1.0) {
                // A switched-off user sits on the boundary; the interior conditions do not apply.
                continue;
            }
            checked += 1;
            let r = residuals(&p, &s, &rate);
            assert!(r.max() < 1e-3, "seed {seed}: {r:?}");
        }
        assert!(checked >= 4);
    }

    #[test]
    fn sca_limit_is_nearly_a_fixed_point() {
        let p = random_problem(0, 2, 4, HarvestMode::Batteryless);
        let rate = vec![true, true];
        let settings = SolverSettings { outer_tol: 1e-10, max_outer_iter: 500, conic_gap_rel: 1e-11, ..Default::default() };
        let sca = solve_sca_batteryless(&p, &settings).unwrap();
        let m = initial_multipliers(&p, &sca.decision, &rate);
        let s = KktState { decision: sca.decision.clone(), multipliers: m };
        let (next, _) = kkt_iterate(&p, &s, &rate, 1.0, 1e-9);
        for (a, b) in next.decision.beams.iter().zip(&sca.decision.beams) {
            assert!((a - b).norm() < 1e-3 * b.norm());
        }
        for (a, b) in next.decision.ps_ratio.iter().zip(&sca.decision.ps_ratio) {
            assert!((a - b).abs() < 1e-3);
        }
    }
}
