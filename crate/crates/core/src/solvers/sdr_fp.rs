//! Semidefinite relaxation with quadratic-transform updates of the fractional terms.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use swipt_conic::{AffineExpr, HermitianBlock, Problem, Scalar, Solution, Status};

use crate::config::SolverSettings;
use crate::model::{BeamDecision, CVector};

use super::init::initial_point;
use super::polish::optimize_split;
use super::{relative_change, Diagnostics, SlotProblem, SolverError, SolverOutput};

pub type CMatrix = DMatrix<Complex64>;

const SHRINK: f64 = 1e-7;
/// Smallest eigenvalue of a start block, relative to the mean per-antenna beam power.
const START_LIFT: f64 = 1e-6;

/// Iterate of the lifted problem: one transmit covariance per user.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedDecision {
    pub covariances: Vec<CMatrix>,
    pub ps_ratio: Vec<f64>,
    pub sinr: Vec<f64>,
    /// Joules per slot.
    pub harvest: Vec<f64>,
}

impl LiftedDecision {
    pub fn tx_power(&self) -> f64 {
        self.covariances.iter().map(|f| f.trace().re).sum()
    }
}

/// `h^H F h`
pub fn quad(h: &CVector, f: &CMatrix) -> f64 {
    h.dotc(&(f * h)).re
}

/// Auxiliary weight of the SINR fraction: `sqrt(h^H F h) / gamma`.
pub fn update_nu(h: &CVector, f: &CMatrix, gamma: f64) -> f64 {
    quad(h, f).max(0.0).sqrt() / gamma
}

/// Auxiliary weight of the harvest fraction: `sqrt(sum_j h^H F_j h + noise) / e`.
pub fn update_mu(h: &CVector, covariances: &[CMatrix], e: f64, noise: f64) -> f64 {
    (covariances.iter().map(|f| quad(h, f)).sum::<f64>() + noise).max(0.0).sqrt() / e
}

/// Principal beam `sqrt(l1) q1` and the ratio `l2 / l1` (zero for rank at most one).
pub fn recover_beamformer(f: &CMatrix) -> (CVector, f64) {
    let n = f.nrows();
    let eig = f.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l1 = eig.eigenvalues[order[0]];
    if l1 <= 0.0 {
        return (CVector::zeros(n), 0.0);
    }
    let ratio = if n > 1 { eig.eigenvalues[order[1]].max(0.0) / l1 } else { 0.0 };
    (eig.eigenvectors.column(order[0]).into_owned().scale(l1.sqrt()), ratio)
}

struct Layout {
    blocks: Vec<HermitianBlock>,
    split: Vec<Option<Scalar>>,
    sinr: Vec<Option<Scalar>>,
    harvest: Vec<Option<Scalar>>,
}

fn split_bounds(prob: &mut Problem, rho: Scalar, lo: f64, hi: f64) {
    let mut e = rho.expr();
    e.add_constant(-lo);
    prob.nonneg(e);
    let mut e = AffineExpr::constant(hi);
    e.add_term(rho, -1.0);
    prob.nonneg(e);
}

/// Lifted convex subproblem for fixed auxiliary weights, with a strictly feasible start.
fn build(
    p: &SlotProblem,
    point: &LiftedDecision,
    rate: &[bool],
    stored: &[bool],
) -> (Problem, Layout, Vec<f64>) {
    let k = p.num_users();
    let nt = p.num_antennas();
    let (lo, hi) = p.ps_bounds;
    let mut prob = Problem::new();
    let blocks: Vec<HermitianBlock> = (0..k).map(|_| prob.hermitian(nt)).collect();
    let price = p.tradeoff.max(1e-12);
    for b in &blocks {
        prob.minimize(&b.trace().scaled(price));
        prob.psd(b.clone());
    }
    let mut layout = Layout { blocks: blocks.clone(), split: vec![None; k], sinr: vec![None; k], harvest: vec![None; k] };
    // Blocks that have collapsed towards zero would start on the cone boundary.
    let lift_floor = START_LIFT * point.tx_power() / (k * nt) as f64;
    let covariances: Vec<CMatrix> = point
        .covariances
        .iter()
        .map(|f| {
            let smallest = f.clone().symmetric_eigenvalues().min();
            if smallest < lift_floor {
                f + CMatrix::identity(nt, nt).scale(lift_floor - smallest.min(0.0))
            } else {
                f.clone()
            }
        })
        .collect();
    let point = &LiftedDecision { covariances, ..point.clone() };
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
        split_bounds(&mut prob, rho, lo, hi);
        let eps = 1e-9 * (hi - lo);
        let rho_s = point.ps_ratio[u].clamp(lo + eps, hi - eps);
        start_vals.push((rho, rho_s));
        let mut one_minus_rho = AffineExpr::constant(1.0);
        one_minus_rho.add_term(rho, -1.0);
        let received: Vec<f64> = point.covariances.iter().map(|f| quad(h, f)).collect();

        if rate[u] {
            let delta = terms.id_noise_var.sqrt();
            let hn = h.unscale(delta);
            let noise = terms.rx_noise_var / terms.id_noise_var;
            let gamma = prob.scalar();
            let amp = prob.scalar();
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
            let own = quad(&hn, &point.covariances[u]);
            let interference: f64 = (0..k).filter(|&v| v != u).map(|v| received[v]).sum::<f64>() / terms.id_noise_var;
            let nu = update_nu(&hn, &point.covariances[u], point.sinr[u]);
            // (2 nu s - nu^2 gamma - interference - noise) rho >= 1 and s^2 <= h^H F_u h.
            let mut x = AffineExpr::term(amp, 2.0 * nu);
            x.add_term(gamma, -nu * nu);
            x.add_constant(-noise);
            for (v, b) in blocks.iter().enumerate() {
                if v != u {
                    x.add_scaled(&b.quad_form(hn.as_slice()), -1.0);
                }
            }
            prob.rotated_second_order(x, rho.expr(), vec![AffineExpr::constant(1.0)]);
            prob.rotated_second_order(blocks[u].quad_form(hn.as_slice()), AffineExpr::constant(1.0), vec![amp.expr()]);

            let s = own.sqrt() * (1.0 - 1e-9);
            let reachable = (2.0 * nu * s - interference - noise - 1.0 / rho_s) / (nu * nu);
            let mut g_s = point.sinr[u].min(reachable * (1.0 - SHRINK));
            if terms.sinr_cap.is_finite() {
                g_s = g_s.min(terms.sinr_cap * (1.0 - 1e-9));
            }
            start_vals.push((gamma, g_s));
            start_vals.push((amp, s));
        }

        if stored[u] {
            let e = prob.scalar();
            let amp = prob.scalar();
            layout.harvest[u] = Some(e);
            prob.minimize(&AffineExpr::term(e, -terms.energy_weight));
            prob.nonneg(e.expr());
            let mut cap = AffineExpr::constant(terms.harvest_cap);
            cap.add_term(e, -1.0);
            prob.nonneg(cap);
            let total = p.slot_duration * (received.iter().sum::<f64>() + terms.rx_noise_var);
            let mu = p.slot_duration.sqrt() * update_mu(h, &point.covariances, point.harvest[u], terms.rx_noise_var);
            // (2 mu r - mu^2 e)(1 - rho) >= 1 / zeta and r^2 <= T (sum_j h^H F_j h + noise).
            let mut x = AffineExpr::term(amp, 2.0 * mu);
            x.add_term(e, -mu * mu);
            prob.rotated_second_order(x, one_minus_rho.clone(), vec![AffineExpr::constant(1.0 / terms.eh_efficiency.sqrt())]);
            let mut power = AffineExpr::constant(p.slot_duration * terms.rx_noise_var);
            for b in &blocks {
                power.add_scaled(&b.quad_form(h.as_slice()), p.slot_duration);
            }
            prob.rotated_second_order(power, AffineExpr::constant(1.0), vec![amp.expr()]);

            let r = total.sqrt() * (1.0 - 1e-9);
            let reachable = (2.0 * mu * r - 1.0 / (terms.eh_efficiency * (1.0 - rho_s))) / (mu * mu);
            let e_s = point.harvest[u].min(terms.harvest_cap * (1.0 - 1e-9)).min(reachable * (1.0 - SHRINK));
            start_vals.push((e, e_s));
            start_vals.push((amp, r));
        }

        if required {
            let mut x = AffineExpr::constant(terms.rx_noise_var / terms.min_harvest);
            for b in &blocks {
                x.add_scaled(&b.quad_form(h.as_slice()), 1.0 / terms.min_harvest);
            }
            prob.rotated_second_order(x, one_minus_rho, vec![AffineExpr::constant(1.0 / terms.eh_efficiency.sqrt())]);
        }
    }

    let mut start = vec![0.0; prob.num_vars()];
    for (b, f) in blocks.iter().zip(&point.covariances) {
        b.write(&mut start, f);
    }
    for (s, v) in start_vals {
        start[s.index()] = v;
    }
    (prob, layout, start)
}

fn extract(layout: &Layout, sol: &Solution, previous: &LiftedDecision) -> LiftedDecision {
    let k = layout.blocks.len();
    LiftedDecision {
        covariances: layout.blocks.iter().map(|b| sol.matrix(b)).collect(),
        ps_ratio: (0..k).map(|u| layout.split[u].map_or(previous.ps_ratio[u], |s| sol.value(s))).collect(),
        sinr: (0..k).map(|u| layout.sinr[u].map_or(0.0, |s| sol.value(s).max(0.0))).collect(),
        harvest: (0..k).map(|u| layout.harvest[u].map_or(0.0, |s| sol.value(s).max(0.0))).collect(),
    }
}

fn lifted_objective(p: &SlotProblem, d: &LiftedDecision) -> f64 {
    let mut obj = p.tradeoff * d.tx_power();
    for (k, u) in p.users.iter().enumerate() {
        if d.sinr[k] > 0.0 {
            obj -= u.rate_weight * (1.0 + d.sinr[k]).log2();
        }
        obj -= u.energy_weight * d.harvest[k];
    }
    obj
}

/// Outer loop over the auxiliary weights, then rank-one recovery and certification.
pub fn solve_sdr_fp(p: &SlotProblem, settings: &SolverSettings) -> Result<SolverOutput, SolverError> {
    let k = p.num_users();
    let nt = p.num_antennas();
    let floor = settings.floor;
    let conic = settings.conic();
    let mut diagnostics = Diagnostics::default();
    let init = initial_point(p, floor)?;

    // A small identity component puts the start strictly inside the PSD cone.
    let mean_power = init.tx_power() / k as f64;
    let eps = 1e-6 * mean_power.max(1e-12) / nt as f64;
    let mut point = LiftedDecision {
        covariances: init.beams.iter().map(|f| f * f.adjoint() + CMatrix::identity(nt, nt).scale(eps)).collect(),
        ps_ratio: init.ps_ratio.clone(),
        sinr: init.sinr.clone(),
        harvest: init.harvest.clone(),
    };
    let mut rate: Vec<bool> = (0..k).map(|u| p.rate_active(u, floor)).collect();
    let mut stored: Vec<bool> = (0..k).map(|u| p.harvest_active(u)).collect();
    let mut objective = lifted_objective(p, &point);
    let mut history = vec![objective];
    let mut converged = false;
    let mut iterations = 0;

    let idle = !(0..k).any(|u| rate[u] || stored[u] || p.harvest_required(u));
    if idle {
        let mut decision = init;
        diagnostics.certification_gap = p.certify(&mut decision, floor);
        let objective = p.objective(&decision);
        return Ok(SolverOutput { decision, objective, iterations, converged: true, history, diagnostics });
    }

    while iterations < settings.max_outer_iter {
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
        let (prob, layout, x0) = build(p, &point, &rate, &stored);
        let sol = prob.solve(&conic, Some(&x0))?;
        match sol.status {
            Status::Optimal => {}
            Status::MaxIterations | Status::NumericalFailure => diagnostics.backend_incomplete = true,
            Status::Infeasible => return Err(SolverError::Backend { status: sol.status, iteration: iterations }),
        }
        let next = extract(&layout, &sol, &point);
        let value = lifted_objective(p, &next);
        if value > objective + 1e-9 * objective.abs().max(1.0) {
            diagnostics.backend_incomplete = true;
            history.push(objective);
            converged = relative_change(objective, value) < settings.outer_tol;
            break;
        }
        let change = relative_change(objective, value);
        point = next;
        objective = value;
        history.push(objective);
        if change < settings.outer_tol {
            converged = true;
            break;
        }
    }

    let mut worst_ratio: f64 = 0.0;
    let mut beams = Vec::with_capacity(k);
    for f in &point.covariances {
        let (b, ratio) = recover_beamformer(f);
        worst_ratio = worst_ratio.max(ratio);
        beams.push(b);
    }
    diagnostics.eigen_ratio = Some(worst_ratio);
    let mut decision = BeamDecision {
        beams,
        ps_ratio: point.ps_ratio.clone(),
        sinr: point.sinr.clone(),
        harvest: point.harvest.clone(),
    };
    if worst_ratio >= settings.rank_one_threshold {
        diagnostics.restored = true;
        if optimize_split(p, &mut decision, floor) > 0 {
            diagnostics.backend_incomplete = true;
        }
    }
    for u in 0..k {
        if !rate[u] {
            decision.sinr[u] = 0.0;
        }
        if !stored[u] {
            decision.harvest[u] = 0.0;
        }
    }
    diagnostics.certification_gap = p.certify(&mut decision, floor);
    let objective = p.objective(&decision);
    Ok(SolverOutput { decision, objective, iterations, converged, history, diagnostics })
}

/// Lifted iterate reached by the outer loop, before recovery. Exposed for tests.
#[cfg(test)]
pub(crate) fn lift(f: &CVector) -> CMatrix {
    f * f.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::sca::solve_sca;
    use crate::solvers::testing::random_problem;
    use crate::solvers::HarvestMode;

    #[test]
    fn auxiliary_updates_match_hand_values() {
        // h = [2], F = [1]: h^H F h = 4, gamma = 2 gives sqrt(4)/2.
        let h = CVector::from_element(1, Complex64::new(2.0, 0.0));
        let f = CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        assert_eq!(update_nu(&h, &f, 2.0), 1.0);
        // Received power 3 plus noise 1 is 4; e = 2.
        let h = CVector::from_element(1, Complex64::new(3f64.sqrt(), 0.0));
        let g = (update_mu(&h, &[f], 2.0, 1.0) - 1.0).abs();
        assert!(g < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn optimal_auxiliaries_recover_the_fractions(
            re in proptest::collection::vec(-3.0f64..3.0, 6),
            gamma in 1e-3f64..1e3,
            e in 1e-3f64..1e3,
            noise in 0.0f64..2.0,
        ) {
            let h = CVector::from_iterator(3, (0..3).map(|i| Complex64::new(re[i], re[i + 3])));
            let f = lift(&CVector::from_iterator(3, (0..3).map(|i| Complex64::new(re[5 - i], -re[i]))));
            let q = quad(&h, &f);
            let nu = update_nu(&h, &f, gamma);
            let fraction = q / gamma;
            proptest::prop_assert!((2.0 * nu * q.sqrt() - nu * nu * gamma - fraction).abs() <= 1e-9 * fraction.max(1.0));
            let r = q + noise;
            let mu = update_mu(&h, &[f], e, noise);
            let fraction = r / e;
            proptest::prop_assert!((2.0 * mu * r.sqrt() - mu * mu * e - fraction).abs() <= 1e-9 * fraction.max(1.0));
        }
    }

    #[test]
    fn rank_one_recovery_is_exact() {
        let f = CVector::from_vec(vec![Complex64::new(1.0, -2.0), Complex64::new(0.5, 0.3), Complex64::new(0.0, 1.0)]);
        let (b, ratio) = recover_beamformer(&lift(&f));
        assert!(ratio < 1e-12);
        assert!((lift(&b) - lift(&f)).norm() < 1e-12);
        let (z, r) = recover_beamformer(&CMatrix::zeros(3, 3));
        assert_eq!(r, 0.0);
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn full_rank_matrix_reports_its_ratio() {
        let f = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(4.0, 0.0),
            Complex64::new(1.0, 0.0),
        ]));
        let (b, ratio) = recover_beamformer(&f);
        assert!((ratio - 0.25).abs() < 1e-14);
        assert!((b.norm_squared() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn lifted_solution_is_nearly_rank_one_and_agrees_with_sca() {
        let settings = SolverSettings::default();
        for seed in 0..3 {
            for mode in [HarvestMode::Battery, HarvestMode::Batteryless] {
                let p = random_problem(seed, 2, 4, mode);
                let sdr = solve_sdr_fp(&p, &settings).unwrap();
                let sca = solve_sca(&p, &settings).unwrap();
                for w in sdr.history.windows(2) {
                    assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
                }
                assert!(sdr.diagnostics.certification_gap < 1e-5, "{:?}", sdr.diagnostics);
                let gap = relative_change(sca.objective, sdr.objective);
                assert!(gap < 1e-2, "seed {seed} {mode:?}: sdr {} sca {}", sdr.objective, sca.objective);
            }
        }
    }
}
