use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::barrier::{self, Eval, Order};
use crate::expr::{AffineExpr, ComplexVector, HermitianBlock, Scalar};
use crate::problem::{ConicError, Cone, ConstraintId, Objective, Problem};

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    /// Stop when the barrier gap bound is below `gap_abs + gap_rel * |objective|`.
    pub gap_rel: f64,
    pub gap_abs: f64,
    /// Phase I gives up once no point with margin above this exists.
    pub feas_tol: f64,
    /// Newton steps allowed per phase.
    pub max_iter: usize,
    /// Barrier parameter growth per outer iteration.
    pub mu: f64,
    /// Centering ends when half the squared Newton decrement is below this,
    /// or once the decrement stalls at the rounding floor.
    pub centering_tol: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            gap_rel: 1e-8,
            gap_abs: 1e-12,
            feas_tol: 1e-8,
            max_iter: 200,
            mu: 20.0,
            centering_tol: 1e-10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    MaxIterations,
    NumericalFailure,
    Infeasible,
}

/// Dual estimate of one constraint in its own coordinates.
#[derive(Clone, Debug, PartialEq)]
pub enum Dual {
    Vector(Vec<f64>),
    Matrix(DMatrix<Complex64>),
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub status: Status,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Lagrangian lower bound `objective - gap`; valid when stationarity is small.
    pub dual_objective: f64,
    pub gap: f64,
    /// Norm of the Lagrangian gradient at the returned dual estimate.
    pub stationarity: f64,
    pub iterations: usize,
    duals: Vec<Dual>,
}

impl Solution {
    pub fn value(&self, v: Scalar) -> f64 {
        self.x[v.index()]
    }

    pub fn eval(&self, e: &AffineExpr) -> f64 {
        e.eval(&self.x)
    }

    pub fn vector(&self, v: &ComplexVector) -> Vec<Complex64> {
        v.value(&self.x)
    }

    pub fn matrix(&self, b: &HermitianBlock) -> DMatrix<Complex64> {
        b.value(&self.x)
    }

    pub fn dual(&self, id: ConstraintId) -> Option<&Dual> {
        self.duals.get(id.0)
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

struct Barrier<'a> {
    n: usize,
    objective: &'a Objective,
    cones: &'a [Cone],
    grams: Vec<Option<barrier::Gram>>,
}

impl<'a> Barrier<'a> {
    fn new(n: usize, objective: &'a Objective, cones: &'a [Cone]) -> Self {
        Self { n, objective, cones, grams: cones.iter().map(barrier::gram).collect() }
    }

    fn degree(&self) -> f64 {
        self.cones.iter().map(Cone::degree).sum()
    }

    fn eval(&self, x: &[f64], t: f64, order: Order) -> Option<Eval> {
        let mut out = Eval::new(self.n, order);
        barrier::objective(self.objective, x, t, &mut out)?;
        for (c, g) in self.cones.iter().zip(&self.grams) {
            barrier::cone(c, x, g.as_ref(), &mut out)?;
        }
        out.value.is_finite().then_some(out)
    }

    fn strictly_feasible(&self, x: &[f64]) -> bool {
        self.eval(x, 1.0, Order::Value).is_some()
    }

    fn objective_value(&self, x: &[f64]) -> f64 {
        barrier::objective_value(self.objective, x)
    }
}

enum Failure {
    MaxIterations,
    Numerical,
}

/// Solves `hess * dx = -grad` with Jacobi scaling and growing regularization.
fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let n = grad.len();
    let d: DVector<f64> = DVector::from_iterator(
        n,
        (0..n).map(|i| {
            let h = hess[(i, i)];
            if h > 0.0 && h.is_finite() {
                1.0 / h.sqrt()
            } else {
                1.0
            }
        }),
    );
    let mut scaled = hess.clone();
    for j in 0..n {
        for i in 0..n {
            scaled[(i, j)] *= d[i] * d[j];
        }
    }
    let rhs = -grad.component_mul(&d);
    let mut reg = 0.0;
    loop {
        let mut m = scaled.clone();
        for i in 0..n {
            m[(i, i)] += reg;
        }
        if let Some(ch) = m.cholesky() {
            let y = ch.solve(&rhs);
            let dx = y.component_mul(&d);
            if dx.iter().all(|v| v.is_finite()) {
                return Some(dx);
            }
        }
        reg = if reg == 0.0 { 1e-14 } else { reg * 100.0 };
        if reg > 1e-2 {
            return None;
        }
    }
}

/// Backtracking Newton minimization of `t * f0 + barrier` starting from a strictly feasible `x`.
/// Returns the gradient norm at the last evaluated point.
fn center(
    b: &Barrier,
    x: &mut [f64],
    t: f64,
    s: &Settings,
    iters: &mut usize,
) -> Result<f64, Failure> {
    let mut previous = f64::INFINITY;
    loop {
        let e = b.eval(x, t, Order::Second).ok_or(Failure::Numerical)?;
        let gnorm = e.grad.norm();
        let dx = newton_direction(&e.hess, &e.grad).ok_or(Failure::Numerical)?;
        let lam2 = -e.grad.dot(&dx);
        if !lam2.is_finite() {
            return Err(Failure::Numerical);
        }
        // Past quadratic convergence the decrement stops shrinking at the rounding floor.
        let stalled = lam2 < 1e-6 && lam2 > 0.5 * previous;
        if lam2 / 2.0 <= s.centering_tol || stalled {
            return Ok(gnorm);
        }
        previous = lam2;
        if *iters >= s.max_iter {
            return Err(Failure::MaxIterations);
        }
        let mut step = 1.0;
        let mut xn = x.to_vec();
        loop {
            for i in 0..x.len() {
                xn[i] = x[i] + step * dx[i];
            }
            let ok = match b.eval(&xn, t, Order::Value) {
                Some(v) => v.value <= e.value - 0.25 * step * lam2 + 4.0 * f64::EPSILON * e.value.abs(),
                None => false,
            };
            if ok {
                break;
            }
            step *= 0.5;
            if step < 1e-14 {
                // Rounding floor: a tiny decrement means we are as centered as arithmetic allows.
                return if lam2 < 1e-4 { Ok(gnorm) } else { Err(Failure::Numerical) };
            }
        }
        x.copy_from_slice(&xn);
        *iters += 1;
    }
}

/// Initial barrier weight balancing objective and barrier gradients.
fn initial_t(b: &Barrier, x: &[f64]) -> f64 {
    let nu = b.degree();
    let f = b.objective_value(x).abs();
    let fallback = if f > 0.0 { nu / f } else { 1.0 };
    let mut obj = Eval::new(b.n, Order::Second);
    if barrier::objective(b.objective, x, 1.0, &mut obj).is_none() {
        return fallback;
    }
    let mut bar = Eval::new(b.n, Order::Second);
    for (c, g) in b.cones.iter().zip(&b.grams) {
        if barrier::cone(c, x, g.as_ref(), &mut bar).is_none() {
            return fallback;
        }
    }
    let h = bar.hess + &obj.hess;
    let Some(a) = newton_direction(&h, &obj.grad) else { return fallback };
    // a = -H^{-1} grad f0
    let num = bar.grad.dot(&a);
    let den = -obj.grad.dot(&a);
    let t = num / den;
    if t.is_finite() && t > 0.0 {
        t
    } else {
        fallback
    }
}

enum Outcome {
    Converged { x: Vec<f64>, t: f64, gnorm: f64 },
    Stopped { x: Vec<f64>, t: f64, gnorm: f64, failure: Failure },
}

/// Barrier method; `early_stop` is consulted after each centering with `(x, gap)`.
fn barrier_method(
    b: &Barrier,
    mut x: Vec<f64>,
    s: &Settings,
    iters: &mut usize,
    early_stop: &dyn Fn(&[f64], f64) -> bool,
) -> Outcome {
    let nu = b.degree();
    let mut t = if nu > 0.0 { initial_t(b, &x) } else { 1.0 };
    loop {
        let gnorm = match center(b, &mut x, t, s, iters) {
            Ok(g) => g,
            Err(failure) => return Outcome::Stopped { x, t, gnorm: f64::NAN, failure },
        };
        let gap = nu / t;
        if early_stop(&x, gap) {
            return Outcome::Converged { x, t, gnorm };
        }
        let f = b.objective_value(&x);
        if gap <= s.gap_abs + s.gap_rel * f.abs() {
            return Outcome::Converged { x, t, gnorm };
        }
        t *= s.mu;
    }
}

fn shift_expr(e: &AffineExpr, s: usize) -> AffineExpr {
    let mut out = e.clone();
    out.add_raw(s, 1.0);
    out
}

/// Smallest `s` that makes `x` strictly feasible for the shifted cone, ignoring strictness.
fn required_shift(c: &Cone, x: &[f64]) -> f64 {
    match c {
        Cone::NonNeg(e) => -e.eval(x),
        Cone::SecondOrder { t, u } => {
            let n: f64 = u.iter().map(|r| r.eval(x).powi(2)).sum::<f64>().sqrt();
            n - t.eval(x)
        }
        Cone::RotatedSecondOrder { x: a, y: b, z } => {
            let (a, b) = (a.eval(x), b.eval(x));
            let zz: f64 = z.iter().map(|r| r.eval(x).powi(2)).sum();
            let root = (-(a + b) + ((a - b).powi(2) + 4.0 * zz).sqrt()) / 2.0;
            root.max(-a).max(-b)
        }
        Cone::Psd { block, shift } => {
            let f = barrier::psd_matrix(block, *shift, x);
            let eig = f.symmetric_eigenvalues();
            -eig.iter().cloned().fold(f64::INFINITY, f64::min)
        }
    }
}

enum PhaseOne {
    Found(Vec<f64>),
    Infeasible,
    Failed(Failure),
}

fn phase_one(p: &Problem, x0: &[f64], s: &Settings, iters: &mut usize) -> PhaseOne {
    let n = p.num_vars;
    let si = n;
    let mut cones: Vec<Cone> = p
        .cones
        .iter()
        .map(|c| match c {
            Cone::NonNeg(e) => Cone::NonNeg(shift_expr(e, si)),
            Cone::SecondOrder { t, u } => Cone::SecondOrder { t: shift_expr(t, si), u: u.clone() },
            Cone::RotatedSecondOrder { x, y, z } => Cone::RotatedSecondOrder {
                x: shift_expr(x, si),
                y: shift_expr(y, si),
                z: z.clone(),
            },
            Cone::Psd { block, .. } => Cone::Psd { block: *block, shift: Some(si) },
        })
        .collect();
    cones.extend(
        p.objective
            .neg_logs
            .iter()
            .map(|(_, a)| Cone::NonNeg(shift_expr(a, si))),
    );
    // A large ball around the start keeps every centering problem bounded.
    let radius = 1e4 * (1.0 + x0.iter().map(|v| v * v).sum::<f64>().sqrt());
    cones.push(Cone::SecondOrder {
        t: AffineExpr::constant(radius),
        u: x0
            .iter()
            .enumerate()
            .map(|(i, v)| AffineExpr { terms: vec![(i, 1.0)], constant: -v })
            .collect(),
    });
    let mut x = x0.to_vec();
    x.push(0.0);
    let need = cones
        .iter()
        .map(|c| required_shift(c, &x))
        .fold(f64::NEG_INFINITY, f64::max);
    if !need.is_finite() {
        return PhaseOne::Failed(Failure::Numerical);
    }
    x[si] = need + 0.5 * need.abs() + 1e-6;
    let objective = Objective { linear: AffineExpr { terms: vec![(si, 1.0)], constant: 0.0 }, ..Default::default() };
    let b = Barrier::new(n + 1, &objective, &cones);
    let feas_tol = s.feas_tol;
    let stop = |x: &[f64], _gap: f64| x[si] < 0.0;
    let (x, t, failure) = match barrier_method(&b, x, s, iters, &stop) {
        Outcome::Converged { x, t, .. } => (x, t, None),
        Outcome::Stopped { x, t, failure, .. } => (x, t, Some(failure)),
    };
    if x[si] < 0.0 {
        let mut out = x;
        out.truncate(n);
        return PhaseOne::Found(out);
    }
    let gap = b.degree() / t;
    match failure {
        Some(f) if x[si] - gap <= feas_tol => PhaseOne::Failed(f),
        _ => PhaseOne::Infeasible,
    }
}

impl Problem {
    /// Solves the program, starting from `start` when it is strictly feasible
    /// and running a phase-I search otherwise.
    pub fn solve(&self, settings: &Settings, start: Option<&[f64]>) -> Result<Solution, ConicError> {
        let p = self.validated()?;
        let n = p.num_vars;
        if let Some(s) = start {
            if s.len() != n {
                return Err(ConicError::StartDimension { got: s.len(), expected: n });
            }
        }
        let x0 = start.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
        let b = Barrier::new(n, &p.objective, &p.cones);
        let mut iters = 0;
        let x = if b.strictly_feasible(&x0) {
            x0
        } else {
            match phase_one(&p, &x0, settings, &mut iters) {
                PhaseOne::Found(x) => x,
                PhaseOne::Infeasible => return Ok(Self::failed(x0, Status::Infeasible, iters)),
                PhaseOne::Failed(Failure::MaxIterations) => {
                    return Ok(Self::failed(x0, Status::MaxIterations, iters))
                }
                PhaseOne::Failed(Failure::Numerical) => {
                    return Ok(Self::failed(x0, Status::NumericalFailure, iters))
                }
            }
        };
        let mut iters2 = 0;
        let (x, t, gnorm, status) = match barrier_method(&b, x, settings, &mut iters2, &|_, _| false) {
            Outcome::Converged { x, t, gnorm } => (x, t, gnorm, Status::Optimal),
            Outcome::Stopped { x, t, gnorm, failure } => {
                let st = match failure {
                    Failure::MaxIterations => Status::MaxIterations,
                    Failure::Numerical => Status::NumericalFailure,
                };
                (x, t, gnorm, st)
            }
        };
        let objective = b.objective_value(&x);
        let gap = b.degree() / t;
        let duals = p.cones.iter().map(|c| barrier::cone_dual(c, &x, t)).collect();
        Ok(Solution {
            status,
            objective,
            dual_objective: objective - gap,
            gap,
            stationarity: gnorm / t,
            iterations: iters + iters2,
            duals,
            x,
        })
    }

    fn failed(x: Vec<f64>, status: Status, iterations: usize) -> Solution {
        Solution {
            status,
            x,
            objective: f64::NAN,
            dual_objective: f64::NAN,
            gap: f64::INFINITY,
            stationarity: f64::NAN,
            iterations,
            duals: Vec::new(),
        }
    }
}
