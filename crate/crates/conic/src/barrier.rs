//! Value, gradient and Hessian of the objective and the cone barriers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::expr::{AffineExpr, HermitianBlock};
use crate::problem::{Cone, Objective};

/// Derivatives requested from an evaluation.
#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Order {
    Value,
    Second,
}

pub(crate) struct Eval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl Eval {
    pub fn new(n: usize, order: Order) -> Self {
        let (g, h) = match order {
            Order::Value => (0, 0),
            Order::Second => (n, n),
        };
        Self { value: 0.0, grad: DVector::zeros(g), hess: DMatrix::zeros(h, h) }
    }

    fn wants_derivs(&self) -> bool {
        !self.grad.is_empty()
    }
}

/// Adds `scale * (f, grad f, hess f)` of the objective; `None` outside the log domain.
pub(crate) fn objective(obj: &Objective, x: &[f64], scale: f64, out: &mut Eval) -> Option<()> {
    let d = out.wants_derivs();
    out.value += scale * obj.linear.eval(x);
    if d {
        for &(i, c) in &obj.linear.terms {
            out.grad[i] += scale * c;
        }
    }
    for &(i, j, c) in &obj.quadratic {
        out.value += scale * c * x[i] * x[j];
        if d {
            if i == j {
                out.grad[i] += 2.0 * scale * c * x[i];
                out.hess[(i, i)] += 2.0 * scale * c;
            } else {
                out.grad[i] += scale * c * x[j];
                out.grad[j] += scale * c * x[i];
                out.hess[(i, j)] += scale * c;
                out.hess[(j, i)] += scale * c;
            }
        }
    }
    for (w, arg) in &obj.neg_logs {
        let a = arg.eval(x);
        if !(a > 0.0) {
            return None;
        }
        out.value -= scale * w * a.ln();
        if d {
            scatter_rank_one(arg, -scale * w / a, scale * w / (a * a), out);
        }
    }
    Some(())
}

/// Value of the objective without the barrier.
pub(crate) fn objective_value(obj: &Objective, x: &[f64]) -> f64 {
    let mut e = Eval::new(0, Order::Value);
    match objective(obj, x, 1.0, &mut e) {
        Some(()) => e.value,
        None => f64::INFINITY,
    }
}

fn scatter_rank_one(row: &AffineExpr, g: f64, h: f64, out: &mut Eval) {
    for &(i, a) in &row.terms {
        out.grad[i] += g * a;
        if h != 0.0 {
            for &(j, b) in &row.terms {
                out.hess[(i, j)] += h * a * b;
            }
        }
    }
}

/// Local Hessian of a cone barrier: `sum c u u^T`, single-row and symmetric row-pair terms,
/// and a multiple of the cached Gram matrix of the tail rows.
struct LocalHessian<'a> {
    outer: Vec<(f64, &'a [f64])>,
    diag: Vec<(usize, f64)>,
    pairs: Vec<(usize, usize, f64)>,
    tail: f64,
}

/// `sum_k a_k a_k^T` over the tail rows of a cone, which do not change between evaluations.
pub(crate) struct Gram {
    idx: Vec<usize>,
    mat: DMatrix<f64>,
}

impl Gram {
    fn new(rows: &[AffineExpr]) -> Self {
        let mut idx: Vec<usize> = rows.iter().flat_map(|r| r.terms.iter().map(|&(i, _)| i)).collect();
        idx.sort_unstable();
        idx.dedup();
        let pos = |i: usize| idx.binary_search(&i).unwrap();
        let mut mat = DMatrix::zeros(idx.len(), idx.len());
        for r in rows {
            for &(i, a) in &r.terms {
                for &(j, b) in &r.terms {
                    mat[(pos(i), pos(j))] += a * b;
                }
            }
        }
        Self { idx, mat }
    }

    fn add_to(&self, c: f64, out: &mut Eval) {
        let n = out.grad.len();
        let m = self.idx.len();
        let hs = out.hess.as_mut_slice();
        let gs = self.mat.as_slice();
        for (q, &j) in self.idx.iter().enumerate() {
            let col = &mut hs[j * n..(j + 1) * n];
            for (&i, g) in self.idx.iter().zip(&gs[q * m..(q + 1) * m]) {
                col[i] += c * g;
            }
        }
    }
}

/// Gram matrix for cones with a tail, `None` otherwise.
pub(crate) fn gram(c: &Cone) -> Option<Gram> {
    match c {
        Cone::SecondOrder { u, .. } => Some(Gram::new(u)),
        Cone::RotatedSecondOrder { z, .. } => Some(Gram::new(z)),
        _ => None,
    }
}

/// `sum_r u[r] * row_r` as a sparse gradient-space vector.
fn combine(rows: &[&AffineExpr], u: &[f64], n: usize) -> Vec<(usize, f64)> {
    let mut dense = vec![0.0; n];
    let mut touched = Vec::new();
    for (row, &ur) in rows.iter().zip(u) {
        if ur == 0.0 {
            continue;
        }
        for &(i, a) in &row.terms {
            if dense[i] == 0.0 {
                touched.push(i);
            }
            dense[i] += ur * a;
        }
    }
    touched.sort_unstable();
    touched.dedup();
    touched.into_iter().map(|i| (i, dense[i])).collect()
}

/// Scatters a local gradient `gy` and structured Hessian through the rows.
fn scatter(rows: &[&AffineExpr], gy: &[f64], hy: &LocalHessian, gram: Option<&Gram>, out: &mut Eval) {
    let n = out.grad.len();
    for (row, g) in rows.iter().zip(gy) {
        for &(i, a) in &row.terms {
            out.grad[i] += g * a;
        }
    }
    let hs = out.hess.as_mut_slice();
    for &(c, u) in &hy.outer {
        let w = combine(rows, u, n);
        for &(j, b) in &w {
            let col = &mut hs[j * n..(j + 1) * n];
            let cb = c * b;
            for &(i, a) in &w {
                col[i] += cb * a;
            }
        }
    }
    for &(r, c) in &hy.diag {
        scatter_rank_one(rows[r], 0.0, c, out);
    }
    if hy.tail != 0.0 {
        if let Some(g) = gram {
            g.add_to(hy.tail, out);
        }
    }
    for &(r, s, c) in &hy.pairs {
        for &(i, a) in &rows[r].terms {
            for &(j, b) in &rows[s].terms {
                out.hess[(i, j)] += c * a * b;
                out.hess[(j, i)] += c * a * b;
            }
        }
    }
}

/// Adds the barrier of one cone; `None` when `x` is not strictly inside.
/// Computes the Gram matrix on the fly when the caller has none cached.
pub(crate) fn cone(c: &Cone, x: &[f64], gram: Option<&Gram>, out: &mut Eval) -> Option<()> {
    let local;
    let gram = match gram {
        Some(g) => Some(g),
        None if out.wants_derivs() => {
            local = self::gram(c);
            local.as_ref()
        }
        None => None,
    };
    match c {
        Cone::NonNeg(e) => {
            let s = e.eval(x);
            if !(s > 0.0) {
                return None;
            }
            out.value -= s.ln();
            if out.wants_derivs() {
                scatter_rank_one(e, -1.0 / s, 1.0 / (s * s), out);
            }
            Some(())
        }
        Cone::SecondOrder { t, u } => {
            let mut rows: Vec<&AffineExpr> = Vec::with_capacity(u.len() + 1);
            rows.push(t);
            rows.extend(u.iter());
            let y: Vec<f64> = rows.iter().map(|r| r.eval(x)).collect();
            let d = y[0] * y[0] - y[1..].iter().map(|v| v * v).sum::<f64>();
            if !(y[0] > 0.0 && d > 0.0) {
                return None;
            }
            out.value -= d.ln();
            if out.wants_derivs() {
                // J = diag(1, -1, ..., -1)
                let jy: Vec<f64> = y
                    .iter()
                    .enumerate()
                    .map(|(k, v)| if k == 0 { *v } else { -v })
                    .collect();
                let gy: Vec<f64> = jy.iter().map(|v| -2.0 * v / d).collect();
                let hy = LocalHessian {
                    outer: vec![(4.0 / (d * d), &jy[..])],
                    diag: vec![(0, -2.0 / d)],
                    pairs: Vec::new(),
                    tail: 2.0 / d,
                };
                scatter(&rows, &gy, &hy, gram, out);
            }
            Some(())
        }
        Cone::RotatedSecondOrder { x: xe, y: ye, z } => {
            let mut rows: Vec<&AffineExpr> = Vec::with_capacity(z.len() + 2);
            rows.push(xe);
            rows.push(ye);
            rows.extend(z.iter());
            let v: Vec<f64> = rows.iter().map(|r| r.eval(x)).collect();
            let d = v[0] * v[1] - v[2..].iter().map(|a| a * a).sum::<f64>();
            if !(v[0] > 0.0 && v[1] > 0.0 && d > 0.0) {
                return None;
            }
            out.value -= d.ln();
            if out.wants_derivs() {
                let m = v.len();
                let mut gd = vec![0.0; m];
                gd[0] = v[1];
                gd[1] = v[0];
                for k in 2..m {
                    gd[k] = -2.0 * v[k];
                }
                let gy: Vec<f64> = gd.iter().map(|a| -a / d).collect();
                let hy = LocalHessian {
                    outer: vec![(1.0 / (d * d), &gd[..])],
                    diag: Vec::new(),
                    pairs: vec![(0, 1, -1.0 / d)],
                    tail: 2.0 / d,
                };
                scatter(&rows, &gy, &hy, gram, out);
            }
            Some(())
        }
        Cone::Psd { block, shift } => psd(block, *shift, x, out),
    }
}

/// `E_p = sum alpha * e_a e_b^T` for each real parameter of a Hermitian block.
fn param_basis(block: &HermitianBlock) -> Vec<(usize, Vec<(usize, usize, Complex64)>)> {
    let n = block.dim();
    let one = Complex64::new(1.0, 0.0);
    let i_unit = Complex64::new(0.0, 1.0);
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push((block.diag_index(i), vec![(i, i, one)]));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (re, im) = block.upper_index(i, j);
            out.push((re, vec![(i, j, one), (j, i, one)]));
            out.push((im, vec![(i, j, i_unit), (j, i, -i_unit)]));
        }
    }
    out
}

pub(crate) fn psd_matrix(block: &HermitianBlock, shift: Option<usize>, x: &[f64]) -> DMatrix<Complex64> {
    let mut f = block.value(x);
    if let Some(s) = shift {
        for i in 0..block.dim() {
            f[(i, i)] += x[s];
        }
    }
    f
}

fn psd(block: &HermitianBlock, shift: Option<usize>, x: &[f64], out: &mut Eval) -> Option<()> {
    let f = psd_matrix(block, shift, x);
    let chol = f.cholesky()?;
    let l = chol.l_dirty();
    let mut logdet = 0.0;
    for i in 0..block.dim() {
        let d = l[(i, i)].re;
        if !(d > 0.0) {
            return None;
        }
        logdet += 2.0 * d.ln();
    }
    if !logdet.is_finite() {
        return None;
    }
    out.value -= logdet;
    if !out.wants_derivs() {
        return Some(());
    }
    let g = chol.inverse();
    let basis = param_basis(block);
    for (p, ep) in &basis {
        let tr: Complex64 = ep.iter().map(|&(a, b, al)| al * g[(b, a)]).sum();
        out.grad[*p] -= tr.re;
        for (q, eq) in &basis {
            let mut h = Complex64::new(0.0, 0.0);
            for &(a, b, al) in ep {
                for &(c, d, be) in eq {
                    h += al * be * g[(d, a)] * g[(b, c)];
                }
            }
            out.hess[(*p, *q)] += h.re;
        }
    }
    if let Some(s) = shift {
        let g2 = &g * &g;
        out.grad[s] -= g.trace().re;
        out.hess[(s, s)] += g2.trace().re;
        for (q, eq) in &basis {
            let h: Complex64 = eq.iter().map(|&(c, d, be)| be * g2[(d, c)]).sum();
            out.hess[(s, *q)] += h.re;
            out.hess[(*q, s)] += h.re;
        }
    }
    Some(())
}

/// Local dual estimate `-grad(barrier) / t` in cone coordinates.
pub(crate) fn cone_dual(c: &Cone, x: &[f64], t: f64) -> crate::solve::Dual {
    use crate::solve::Dual;
    match c {
        Cone::NonNeg(e) => Dual::Vector(vec![1.0 / (t * e.eval(x))]),
        Cone::SecondOrder { t: te, u } => {
            let y0 = te.eval(x);
            let u: Vec<f64> = u.iter().map(|r| r.eval(x)).collect();
            let d = y0 * y0 - u.iter().map(|v| v * v).sum::<f64>();
            let mut z = vec![2.0 * y0 / (t * d)];
            z.extend(u.iter().map(|v| -2.0 * v / (t * d)));
            Dual::Vector(z)
        }
        Cone::RotatedSecondOrder { x: xe, y: ye, z } => {
            let a = xe.eval(x);
            let b = ye.eval(x);
            let zv: Vec<f64> = z.iter().map(|r| r.eval(x)).collect();
            let d = a * b - zv.iter().map(|v| v * v).sum::<f64>();
            let mut out = vec![b / (t * d), a / (t * d)];
            out.extend(zv.iter().map(|v| -2.0 * v / (t * d)));
            Dual::Vector(out)
        }
        Cone::Psd { block, shift } => {
            let f = psd_matrix(block, *shift, x);
            let inv = f.cholesky().map(|c| c.inverse()).unwrap_or_else(|| {
                DMatrix::from_element(block.dim(), block.dim(), Complex64::new(f64::NAN, 0.0))
            });
            Dual::Matrix(inv / Complex64::new(t, 0.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Problem;

    fn fd_check(c: &Cone, x: &[f64]) {
        let n = x.len();
        let mut base = Eval::new(n, Order::Second);
        cone(c, x, None, &mut base).expect("interior point");
        let h = 1e-6;
        for i in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let mut ep = Eval::new(n, Order::Second);
            let mut em = Eval::new(n, Order::Second);
            cone(c, &xp, None, &mut ep).unwrap();
            cone(c, &xm, None, &mut em).unwrap();
            let g = (ep.value - em.value) / (2.0 * h);
            assert!((g - base.grad[i]).abs() < 1e-5 * (1.0 + g.abs()), "grad {i}: {g} vs {}", base.grad[i]);
            for j in 0..n {
                let hd = (ep.grad[j] - em.grad[j]) / (2.0 * h);
                assert!(
                    (hd - base.hess[(i, j)]).abs() < 1e-4 * (1.0 + hd.abs()),
                    "hess {i},{j}: {hd} vs {}",
                    base.hess[(i, j)]
                );
            }
        }
    }

    #[test]
    fn second_order_derivatives() {
        let mut p = Problem::new();
        let a = p.scalar();
        let b = p.scalar();
        let c = p.scalar();
        let mut t = a.expr();
        t.add_constant(2.0);
        let mut u1 = b.expr();
        u1.add_term(c, 0.5);
        let cone_ = Cone::SecondOrder { t, u: vec![u1, c.expr()] };
        fd_check(&cone_, &[0.3, 0.4, -0.2]);
    }

    #[test]
    fn rotated_second_order_derivatives() {
        let mut p = Problem::new();
        let a = p.scalar();
        let b = p.scalar();
        let c = p.scalar();
        let mut y = b.expr();
        y.add_term(a, 0.3);
        let cone_ = Cone::RotatedSecondOrder { x: a.expr(), y, z: vec![c.expr(), AffineExpr::constant(0.1)] };
        fd_check(&cone_, &[1.2, 0.9, 0.5]);
    }

    #[test]
    fn psd_derivatives_with_shift() {
        let mut p = Problem::new();
        let blk = p.hermitian(3);
        let s = p.scalar();
        let mut x = vec![0.0; p.num_vars()];
        x[blk.diag_index(0)] = 2.0;
        x[blk.diag_index(1)] = 1.5;
        x[blk.diag_index(2)] = 1.0;
        let (re, im) = blk.upper_index(0, 1);
        x[re] = 0.3;
        x[im] = -0.2;
        let (re, im) = blk.upper_index(1, 2);
        x[re] = 0.1;
        x[im] = 0.25;
        x[s.index()] = 0.2;
        fd_check(&Cone::Psd { block: blk, shift: Some(s.index()) }, &x);
    }
}
