use num_complex::Complex64;

/// A real decision variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scalar(pub(crate) usize);

/// A complex vector variable stored as interleaved `(re, im)` pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComplexVector {
    pub(crate) offset: usize,
    pub(crate) len: usize,
}

/// A Hermitian matrix variable.
///
/// Parameters are the `dim` real diagonal entries followed by `(re, im)` of each
/// strictly upper entry in row-major order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HermitianBlock {
    pub(crate) offset: usize,
    pub(crate) dim: usize,
}

/// Sparse real affine function `constant + sum(coef * x[index])`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffineExpr {
    pub(crate) terms: Vec<(usize, f64)>,
    pub(crate) constant: f64,
}

/// Complex affine function split into real and imaginary parts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComplexAffine {
    pub re: AffineExpr,
    pub im: AffineExpr,
}

impl Scalar {
    pub fn index(self) -> usize {
        self.0
    }

    pub fn expr(self) -> AffineExpr {
        AffineExpr::term(self, 1.0)
    }
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn term(v: Scalar, coef: f64) -> Self {
        Self { terms: vec![(v.0, coef)], constant: 0.0 }
    }

    pub fn add_term(&mut self, v: Scalar, coef: f64) -> &mut Self {
        self.terms.push((v.0, coef));
        self
    }

    pub(crate) fn add_raw(&mut self, index: usize, coef: f64) {
        if coef != 0.0 {
            self.terms.push((index, coef));
        }
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &AffineExpr, scale: f64) -> &mut Self {
        self.terms
            .extend(other.terms.iter().map(|&(i, c)| (i, c * scale)));
        self.constant += scale * other.constant;
        self
    }

    pub fn scaled(&self, scale: f64) -> Self {
        let mut out = AffineExpr::default();
        out.add_scaled(self, scale);
        out
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(i, c)| acc + c * x[i])
    }

    pub(crate) fn max_index(&self) -> Option<usize> {
        self.terms.iter().map(|&(i, _)| i).max()
    }

    /// Merges duplicate indices and drops zero coefficients.
    pub(crate) fn compacted(&self) -> Self {
        let mut terms = self.terms.clone();
        terms.sort_by_key(|&(i, _)| i);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (i, c) in terms {
            match out.last_mut() {
                Some((j, acc)) if *j == i => *acc += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|&(_, c)| c != 0.0);
        Self { terms: out, constant: self.constant }
    }
}

impl ComplexAffine {
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        Complex64::new(self.re.eval(x), self.im.eval(x))
    }

    /// `self += scale * other` for a complex scale.
    pub fn add_scaled(&mut self, other: &ComplexAffine, scale: Complex64) -> &mut Self {
        self.re.add_scaled(&other.re, scale.re);
        self.re.add_scaled(&other.im, -scale.im);
        self.im.add_scaled(&other.re, scale.im);
        self.im.add_scaled(&other.im, scale.re);
        self
    }
}

impl ComplexVector {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub(crate) fn re_index(&self, i: usize) -> usize {
        self.offset + 2 * i
    }

    pub(crate) fn im_index(&self, i: usize) -> usize {
        self.offset + 2 * i + 1
    }

    /// Entry `i` as a complex affine expression.
    pub fn entry(&self, i: usize) -> ComplexAffine {
        let mut out = ComplexAffine::default();
        out.re.add_raw(self.re_index(i), 1.0);
        out.im.add_raw(self.im_index(i), 1.0);
        out
    }

    /// Inner product `h^H v` with a fixed vector `h`.
    pub fn inner(&self, h: &[Complex64]) -> ComplexAffine {
        assert_eq!(h.len(), self.len, "inner product length mismatch");
        let mut out = ComplexAffine::default();
        for (i, hi) in h.iter().enumerate() {
            // conj(x + iy) * (a + ib) = (xa + yb) + i(xb - ya)
            out.re.add_raw(self.re_index(i), hi.re);
            out.re.add_raw(self.im_index(i), hi.im);
            out.im.add_raw(self.im_index(i), hi.re);
            out.im.add_raw(self.re_index(i), -hi.im);
        }
        out
    }

    /// Real affine parts of every entry, suitable as cone rows.
    pub fn components(&self) -> Vec<AffineExpr> {
        (0..2 * self.len)
            .map(|k| {
                let mut e = AffineExpr::default();
                e.add_raw(self.offset + k, 1.0);
                e
            })
            .collect()
    }

    pub fn value(&self, x: &[f64]) -> Vec<Complex64> {
        (0..self.len)
            .map(|i| Complex64::new(x[self.re_index(i)], x[self.im_index(i)]))
            .collect()
    }

    pub fn write(&self, x: &mut [f64], v: &[Complex64]) {
        assert_eq!(v.len(), self.len, "vector length mismatch");
        for (i, vi) in v.iter().enumerate() {
            x[self.re_index(i)] = vi.re;
            x[self.im_index(i)] = vi.im;
        }
    }

    pub(crate) fn span(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + 2 * self.len
    }
}

impl HermitianBlock {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn num_params(&self) -> usize {
        self.dim * self.dim
    }

    pub(crate) fn diag_index(&self, i: usize) -> usize {
        self.offset + i
    }

    /// Indices of `(re, im)` for entry `(i, j)` with `i < j`.
    pub(crate) fn upper_index(&self, i: usize, j: usize) -> (usize, usize) {
        debug_assert!(i < j && j < self.dim);
        // Rows before i contribute (dim-1) + (dim-2) + ... + (dim-i) entries.
        let before = i * (2 * self.dim - i - 1) / 2;
        let k = before + (j - i - 1);
        let base = self.offset + self.dim + 2 * k;
        (base, base + 1)
    }

    pub fn trace(&self) -> AffineExpr {
        let mut out = AffineExpr::default();
        for i in 0..self.dim {
            out.add_raw(self.diag_index(i), 1.0);
        }
        out
    }

    /// Quadratic form `h^H F h`, which is real for Hermitian `F`.
    pub fn quad_form(&self, h: &[Complex64]) -> AffineExpr {
        assert_eq!(h.len(), self.dim, "quadratic form length mismatch");
        let mut out = AffineExpr::default();
        for i in 0..self.dim {
            out.add_raw(self.diag_index(i), h[i].norm_sqr());
            for j in (i + 1)..self.dim {
                let c = h[i].conj() * h[j];
                let (re, im) = self.upper_index(i, j);
                out.add_raw(re, 2.0 * c.re);
                out.add_raw(im, -2.0 * c.im);
            }
        }
        out
    }

    pub fn value(&self, x: &[f64]) -> nalgebra::DMatrix<Complex64> {
        let n = self.dim;
        let mut m = nalgebra::DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(x[self.diag_index(i)], 0.0);
            for j in (i + 1)..n {
                let (re, im) = self.upper_index(i, j);
                let v = Complex64::new(x[re], x[im]);
                m[(i, j)] = v;
                m[(j, i)] = v.conj();
            }
        }
        m
    }

    /// Writes the Hermitian part of `m` into the parameter vector.
    pub fn write(&self, x: &mut [f64], m: &nalgebra::DMatrix<Complex64>) {
        let n = self.dim;
        assert_eq!(m.shape(), (n, n), "matrix shape mismatch");
        for i in 0..n {
            x[self.diag_index(i)] = m[(i, i)].re;
            for j in (i + 1)..n {
                let (re, im) = self.upper_index(i, j);
                let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                x[re] = v.re;
                x[im] = v.im;
            }
        }
    }

    pub(crate) fn span(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.num_params()
    }
}
