//! Successive convex approximation over the beamformers, split ratios and epigraph variables.

use std::f64::consts::LN_2;

use swipt_conic::{AffineExpr, ComplexVector, Problem, Scalar, Solution, Status};

use crate::config::SolverSettings;
use crate::model::{gain, BeamDecision, CVector};

use super::init::initial_point;
use super::linearize::{
    linearize_harvest_ratio, linearize_received_power, linearize_sinr_ratio, AffineFunctional,
};
use super::{relative_change, Diagnostics, HarvestMode, SlotProblem, SolverError, SolverOutput};

/// Interior margin used when shrinking the previous iterate into the new subproblem.
const SHRINK: f64 = 1e-7;

struct Layout {
    beams: Vec<ComplexVector>,
    split: Vec<Option<Scalar>>,
    sinr: Vec<Option<Scalar>>,
    harvest: Vec<Option<Scalar>>,
}

pub(crate) fn functional_expr(fun: &AffineFunctional, beams: &[ComplexVector], scalar: Option<Scalar>) -> AffineExpr {
    let mut e = AffineExpr::constant(fun.constant);
    for (j, c) in &fun.beam_coefs {
        e.add_scaled(&beams[*j].inner(c.as_slice()).re, 2.0);
    }
    if let Some(s) = scalar {
        e.add_term(s, fun.scalar_coef);
    }
    e
}

fn map_linearization<T>(r: Result<T, super::linearize::LinearizationError>) -> Result<T, SolverError> {
    r.map_err(|e| SolverError::Degenerate(e.to_string()))
}

/// Convex inner approximation around `point` together with a candidate start.
fn build(
    p: &SlotProblem,
    point: &BeamDecision,
    rate: &[bool],
    stored: &[bool],
    floor: f64,
) -> Result<(Problem, Layout, Vec<f64>), SolverError> {
    let k = p.num_users();
    let nt = p.num_antennas();
    let (lo, hi) = p.ps_bounds;
    let mut prob = Problem::new();
    let beams: Vec<ComplexVector> = (0..k).map(|_| prob.complex_vector(nt)).collect();
    let mut layout = Layout { beams: beams.clone(), split: vec![None; k], sinr: vec![None; k], harvest: vec![None; k] };
    // A zero power price would leave the beams unbounded along directions the caps do not see.
    let price = p.tradeoff.max(1e-12);
    for f in &beams {
        prob.add_squared_norm(f, price);
    }

    let mut start_vals: Vec<(Scalar, f64)> = Vec::new();
    for u in 0..k {
        let required = p.harvest_required(u);
        if !(rate[u] || stored[u] || required) {
            continue;
        }
        let terms = &p.users[u];
        let h = p.channel.user(u);
        let rho = prob.scalar();
        layout.split[u] = Some(rho);
        prob.nonneg({
            let mut e = rho.expr();
            e.add_constant(-lo);
            e
        });
        prob.nonneg({
            let mut e = AffineExpr::constant(hi);
            e.add_term(rho, -1.0);
            e
        });
        let eps = 1e-9 * (hi - lo);
        let rho_s = point.ps_ratio[u].clamp(lo + eps, hi - eps);
        start_vals.push((rho, rho_s));
        let mut one_minus_rho = AffineExpr::constant(1.0);
        one_minus_rho.add_term(rho, -1.0);

        if rate[u] {
            // SINR rows divided by the decoder noise.
            let delta = terms.id_noise_var.sqrt();
            let hn = h.unscale(delta);
            let noise = terms.rx_noise_var / terms.id_noise_var;
            let gamma = prob.scalar();
            let slack = prob.scalar();
            layout.sinr[u] = Some(gamma);
            prob.add_neg_log(terms.rate_weight / LN_2, {
                let mut e = AffineExpr::constant(1.0);
                e.add_term(gamma, 1.0);
                e
            });
            prob.nonneg(gamma.expr());
            if terms.sinr_cap.is_finite() {
                let mut e = AffineExpr::constant(terms.sinr_cap);
                e.add_term(gamma, -1.0);
                prob.nonneg(e);
            }
            let g0 = point.sinr[u];
            let lin = map_linearization(linearize_sinr_ratio(&hn, u, &point.beams[u], g0, floor))?;
            let mut x = functional_expr(&lin, &beams, Some(gamma));
            x.add_constant(-noise);
            x.add_term(slack, -1.0);
            let mut z = Vec::new();
            let mut interference = 0.0;
            for (v, f) in beams.iter().enumerate() {
                if v == u {
                    continue;
                }
                let c = f.inner(hn.as_slice());
                z.push(c.re);
                z.push(c.im);
                interference += gain(&hn, &point.beams[v]);
            }
            if z.is_empty() {
                prob.nonneg(x);
            } else {
                prob.rotated_second_order(x, AffineExpr::constant(1.0), z);
            }
            prob.rotated_second_order(slack.expr(), rho.expr(), vec![AffineExpr::constant(1.0)]);

            let own = gain(&hn, &point.beams[u]);
            let need = noise + interference + 1.0 / rho_s;
            let reachable = if own > 0.0 { g0 * (2.0 - need * g0 / own) } else { -1.0 };
            let mut g_s = g0.min(reachable * (1.0 - SHRINK));
            if terms.sinr_cap.is_finite() {
                g_s = g_s.min(terms.sinr_cap * (1.0 - 1e-9));
            }
            let tangent = if own > 0.0 { own / g0 * (2.0 - g_s / g0) } else { 0.0 };
            let margin = tangent - need;
            start_vals.push((gamma, g_s));
            start_vals.push((slack, 1.0 / rho_s + 0.5 * margin.max(0.0)));
        }

        if stored[u] {
            let e = prob.scalar();
            layout.harvest[u] = Some(e);
            prob.minimize(&AffineExpr::term(e, -terms.energy_weight));
            prob.nonneg(e.expr());
            let mut cap = AffineExpr::constant(terms.harvest_cap);
            cap.add_term(e, -1.0);
            prob.nonneg(cap);
            let e0 = point.harvest[u];
            let lin = map_linearization(linearize_harvest_ratio(
                h,
                &point.beams,
                terms.rx_noise_var,
                e0,
                p.slot_duration,
                floor,
            ))?;
            let x = functional_expr(&lin, &beams, Some(e));
            prob.rotated_second_order(x, one_minus_rho.clone(), vec![AffineExpr::constant(1.0 / terms.eh_efficiency.sqrt())]);

            let received = p.slot_duration * (point.beams.iter().map(|f| gain(h, f)).sum::<f64>() + terms.rx_noise_var);
            let need = 1.0 / (terms.eh_efficiency * (1.0 - rho_s));
            let reachable = e0 * (2.0 - need * e0 / received);
            let e_s = e0.min(terms.harvest_cap * (1.0 - 1e-9)).min(reachable * (1.0 - SHRINK));
            start_vals.push((e, e_s));
        }

        if required {
            // Rows divided by the required power.
            let lin = linearize_received_power(h, &point.beams, terms.rx_noise_var);
            let x = functional_expr(&lin, &beams, None).scaled(1.0 / terms.min_harvest);
            prob.rotated_second_order(x, one_minus_rho, vec![AffineExpr::constant(1.0 / terms.eh_efficiency.sqrt())]);
        }
    }

    let mut start = vec![0.0; prob.num_vars()];
    for (f, b) in beams.iter().zip(&point.beams) {
        f.write(&mut start, b.as_slice());
    }
    for (s, v) in start_vals {
        start[s.index()] = v;
    }
    Ok((prob, layout, start))
}

fn extract(layout: &Layout, sol: &Solution, previous: &BeamDecision) -> BeamDecision {
    let k = layout.beams.len();
    BeamDecision {
        beams: layout.beams.iter().map(|f| CVector::from_vec(sol.vector(f))).collect(),
        ps_ratio: (0..k).map(|u| layout.split[u].map_or(previous.ps_ratio[u], |s| sol.value(s))).collect(),
        sinr: (0..k).map(|u| layout.sinr[u].map_or(0.0, |s| sol.value(s).max(0.0))).collect(),
        harvest: (0..k).map(|u| layout.harvest[u].map_or(0.0, |s| sol.value(s).max(0.0))).collect(),
    }
}

/// Runs the outer loop from the shared initialization.
pub fn solve_sca(p: &SlotProblem, settings: &SolverSettings) -> Result<SolverOutput, SolverError> {
    let start = initial_point(p, settings.floor)?;
    solve_sca_from(p, settings, start)
}

/// Same-slot harvest-use variant; the problem must be batteryless.
pub fn solve_sca_batteryless(p: &SlotProblem, settings: &SolverSettings) -> Result<SolverOutput, SolverError> {
    if p.mode != HarvestMode::Batteryless {
        return Err(SolverError::WrongMode("batteryless SCA"));
    }
    solve_sca(p, settings)
}

/// Runs the outer loop from a caller-supplied feasible point.
pub fn solve_sca_from(
    p: &SlotProblem,
    settings: &SolverSettings,
    start: BeamDecision,
) -> Result<SolverOutput, SolverError> {
    let k = p.num_users();
    let floor = settings.floor;
    let conic = settings.conic();
    let mut diagnostics = Diagnostics::default();
    let mut point = start;
    let mut rate: Vec<bool> = (0..k).map(|u| p.rate_active(u, floor)).collect();
    let mut stored: Vec<bool> = (0..k).map(|u| p.harvest_active(u)).collect();
    let mut objective = p.objective(&point);
    let mut history = vec![objective];
    let mut converged = false;
    let mut iterations = 0;
    diagnostics.iterate_violation = p.violation(&point, floor);

    let idle = !(0..k).any(|u| rate[u] || stored[u] || p.harvest_required(u));
    while !idle && iterations < settings.max_outer_iter {
        for u in 0..k {
            if rate[u] && point.sinr[u] < floor {
                rate[u] = false;
                point.sinr[u] = 0.0;
                diagnostics.clamp_events += 1;
            }
            if stored[u] && point.harvest[u] < floor {
                stored[u] = false;
                point.harvest[u] = 0.0;
                diagnostics.clamp_events += 1;
            }
        }
        iterations += 1;
        let (prob, layout, x0) = build(p, &point, &rate, &stored, floor)?;
        let sol = prob.solve(&conic, Some(&x0))?;
        match sol.status {
            Status::Optimal => {}
            Status::MaxIterations | Status::NumericalFailure => diagnostics.backend_incomplete = true,
            Status::Infeasible => return Err(SolverError::Backend { status: sol.status, iteration: iterations }),
        }
        let next = extract(&layout, &sol, &point);
        let value = p.objective(&next);
        // An inexact subproblem may fail to descend; keep the better point.
        if value > objective + 1e-9 * objective.abs().max(1.0) {
            diagnostics.backend_incomplete = true;
            history.push(objective);
            converged = relative_change(objective, value) < settings.outer_tol;
            break;
        }
        let change = relative_change(objective, value);
        diagnostics.iterate_violation = diagnostics.iterate_violation.max(p.violation(&next, floor));
        point = next;
        objective = value;
        history.push(objective);
        if change < settings.outer_tol {
            converged = true;
            break;
        }
    }
    if idle {
        converged = true;
    }

    diagnostics.certification_gap = p.certify(&mut point, floor);
    let objective = p.objective(&point);
    Ok(SolverOutput { decision: point, objective, iterations, converged, history, diagnostics })
}
