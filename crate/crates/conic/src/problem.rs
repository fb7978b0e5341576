use thiserror::Error;

use crate::expr::{AffineExpr, ComplexVector, HermitianBlock, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum ConicError {
    #[error("expression references variable {index} but only {num_vars} exist")]
    UnknownVariable { index: usize, num_vars: usize },
    #[error("starting point has length {got}, expected {expected}")]
    StartDimension { got: usize, expected: usize },
    #[error("cone must have at least one component")]
    EmptyCone,
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("negative weight {0} on a log objective term")]
    NegativeLogWeight(f64),
    #[error("quadratic objective is not positive semidefinite")]
    NonConvexQuadratic,
}

/// Handle to a constraint, used to look up its dual value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConstraintId(pub(crate) usize);

#[derive(Clone, Debug)]
pub(crate) enum Cone {
    /// `expr >= 0`
    NonNeg(AffineExpr),
    /// `||u|| <= t`
    SecondOrder { t: AffineExpr, u: Vec<AffineExpr> },
    /// `x * y >= ||z||^2`, `x, y >= 0`
    RotatedSecondOrder { x: AffineExpr, y: AffineExpr, z: Vec<AffineExpr> },
    /// Hermitian block (plus `x[shift] * I` when set) is positive semidefinite.
    Psd { block: HermitianBlock, shift: Option<usize> },
}

impl Cone {
    pub(crate) fn degree(&self) -> f64 {
        match self {
            Cone::NonNeg(_) => 1.0,
            Cone::SecondOrder { .. } | Cone::RotatedSecondOrder { .. } => 2.0,
            Cone::Psd { block, .. } => block.dim() as f64,
        }
    }

    fn exprs(&self) -> Box<dyn Iterator<Item = &AffineExpr> + '_> {
        match self {
            Cone::NonNeg(e) => Box::new(std::iter::once(e)),
            Cone::SecondOrder { t, u } => Box::new(std::iter::once(t).chain(u.iter())),
            Cone::RotatedSecondOrder { x, y, z } => {
                Box::new([x, y].into_iter().chain(z.iter()))
            }
            Cone::Psd { .. } => Box::new(std::iter::empty()),
        }
    }

    fn compacted(&self) -> Cone {
        match self {
            Cone::NonNeg(e) => Cone::NonNeg(e.compacted()),
            Cone::SecondOrder { t, u } => Cone::SecondOrder {
                t: t.compacted(),
                u: u.iter().map(AffineExpr::compacted).collect(),
            },
            Cone::RotatedSecondOrder { x, y, z } => Cone::RotatedSecondOrder {
                x: x.compacted(),
                y: y.compacted(),
                z: z.iter().map(AffineExpr::compacted).collect(),
            },
            Cone::Psd { block, shift } => Cone::Psd { block: *block, shift: *shift },
        }
    }
}

/// Smooth convex objective: linear + convex quadratic - weighted logs of affine terms.
#[derive(Clone, Debug, Default)]
pub(crate) struct Objective {
    pub(crate) linear: AffineExpr,
    /// `coef * x[i] * x[j]`, stored once per unordered pair.
    pub(crate) quadratic: Vec<(usize, usize, f64)>,
    /// `-weight * ln(arg)`
    pub(crate) neg_logs: Vec<(f64, AffineExpr)>,
}

/// A convex program assembled incrementally.
///
/// Minimizes a linear + convex quadratic + negative-log objective over
/// nonnegative, second-order, rotated second-order and Hermitian PSD cones.
#[derive(Clone, Debug, Default)]
pub struct Problem {
    pub(crate) num_vars: usize,
    pub(crate) objective: Objective,
    pub(crate) cones: Vec<Cone>,
}

impl Problem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn scalar(&mut self) -> Scalar {
        self.num_vars += 1;
        Scalar(self.num_vars - 1)
    }

    pub fn complex_vector(&mut self, len: usize) -> ComplexVector {
        let v = ComplexVector { offset: self.num_vars, len };
        self.num_vars += 2 * len;
        v
    }

    pub fn hermitian(&mut self, dim: usize) -> HermitianBlock {
        let b = HermitianBlock { offset: self.num_vars, dim };
        self.num_vars += dim * dim;
        b
    }

    /// Adds `expr` to the objective (the constant part is kept for reporting).
    pub fn minimize(&mut self, expr: &AffineExpr) {
        self.objective.linear.add_scaled(expr, 1.0);
    }

    /// Adds `coef * ||v||^2` to the objective.
    pub fn add_squared_norm(&mut self, v: &ComplexVector, coef: f64) {
        for k in v.span() {
            self.objective.quadratic.push((k, k, coef));
        }
    }

    /// Adds `coef * x_i * x_j` to the objective.
    pub fn add_product(&mut self, a: Scalar, b: Scalar, coef: f64) {
        let (i, j) = if a.0 <= b.0 { (a.0, b.0) } else { (b.0, a.0) };
        self.objective.quadratic.push((i, j, coef));
    }

    /// Adds `-weight * ln(arg)` to the objective; `arg > 0` becomes implicit.
    pub fn add_neg_log(&mut self, weight: f64, arg: AffineExpr) {
        self.objective.neg_logs.push((weight, arg));
    }

    fn push(&mut self, cone: Cone) -> ConstraintId {
        self.cones.push(cone);
        ConstraintId(self.cones.len() - 1)
    }

    /// `expr >= 0`
    pub fn nonneg(&mut self, expr: AffineExpr) -> ConstraintId {
        self.push(Cone::NonNeg(expr))
    }

    /// `lhs <= rhs`
    pub fn less_eq(&mut self, lhs: &AffineExpr, rhs: &AffineExpr) -> ConstraintId {
        let mut e = rhs.clone();
        e.add_scaled(lhs, -1.0);
        self.nonneg(e)
    }

    /// `||u|| <= t`
    pub fn second_order(&mut self, t: AffineExpr, u: Vec<AffineExpr>) -> ConstraintId {
        self.push(Cone::SecondOrder { t, u })
    }

    /// `x * y >= ||z||^2` with `x, y >= 0`.
    pub fn rotated_second_order(
        &mut self,
        x: AffineExpr,
        y: AffineExpr,
        z: Vec<AffineExpr>,
    ) -> ConstraintId {
        self.push(Cone::RotatedSecondOrder { x, y, z })
    }

    pub fn psd(&mut self, block: HermitianBlock) -> ConstraintId {
        self.push(Cone::Psd { block, shift: None })
    }

    /// Checks references and coefficients, returning a compacted copy.
    pub(crate) fn validated(&self) -> Result<Problem, ConicError> {
        let n = self.num_vars;
        let check = |e: &AffineExpr, what: &'static str| -> Result<(), ConicError> {
            if let Some(i) = e.max_index() {
                if i >= n {
                    return Err(ConicError::UnknownVariable { index: i, num_vars: n });
                }
            }
            if !e.constant.is_finite() || e.terms.iter().any(|t| !t.1.is_finite()) {
                return Err(ConicError::NonFinite(what));
            }
            Ok(())
        };
        check(&self.objective.linear, "objective")?;
        for &(i, j, c) in &self.objective.quadratic {
            if i.max(j) >= n {
                return Err(ConicError::UnknownVariable { index: i.max(j), num_vars: n });
            }
            if !c.is_finite() {
                return Err(ConicError::NonFinite("quadratic objective"));
            }
            if i == j && c < 0.0 {
                return Err(ConicError::NonConvexQuadratic);
            }
        }
        for (w, arg) in &self.objective.neg_logs {
            if !w.is_finite() {
                return Err(ConicError::NonFinite("log weight"));
            }
            if *w < 0.0 {
                return Err(ConicError::NegativeLogWeight(*w));
            }
            check(arg, "log argument")?;
        }
        for cone in &self.cones {
            match cone {
                Cone::SecondOrder { u, .. } if u.is_empty() => return Err(ConicError::EmptyCone),
                Cone::Psd { block, .. } if block.dim() == 0 => return Err(ConicError::EmptyCone),
                Cone::Psd { block, .. } if block.span().end > n => {
                    return Err(ConicError::UnknownVariable {
                        index: block.span().end - 1,
                        num_vars: n,
                    })
                }
                _ => {}
            }
            for e in cone.exprs() {
                check(e, "constraint")?;
            }
        }
        let mut out = Problem {
            num_vars: n,
            objective: Objective {
                linear: self.objective.linear.compacted(),
                quadratic: self.objective.quadratic.clone(),
                neg_logs: self
                    .objective
                    .neg_logs
                    .iter()
                    .filter(|(w, _)| *w > 0.0)
                    .map(|(w, a)| (*w, a.compacted()))
                    .collect(),
            },
            cones: self.cones.iter().map(Cone::compacted).collect(),
        };
        out.objective.quadratic.retain(|t| t.2 != 0.0);
        Ok(out)
    }
}
