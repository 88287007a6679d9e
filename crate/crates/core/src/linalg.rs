//! Small complex matrices for per-frequency-bin algebra.
//!
//! Every demixing and covariance matrix in this crate is `K x K` with
//! `K` between 2 and 4, so [`CMat`] and [`CVec`] are fixed-capacity,
//! `Copy` value types. Nothing here allocates.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const MAX_DIM: usize = 4;

/// Pivot magnitude below which a matrix is treated as singular.
pub const PIVOT_FLOOR: f64 = 1e-30;

/// Largest 1-norm condition number accepted by [`CMat::inverse`].
pub const CONDITION_CAP: f64 = 1e12;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

fn check_dim(dim: usize) -> Result<()> {
    if (2..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(dim))
    }
}

/// Dense `dim x dim` complex matrix, row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct CMat {
    dim: usize,
    data: [C64; MAX_DIM * MAX_DIM],
}

/// Complex column vector of length `dim`.
#[derive(Clone, Copy, PartialEq)]
pub struct CVec {
    dim: usize,
    data: [C64; MAX_DIM],
}

impl fmt::Debug for CMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for i in 0..self.dim {
            list.entry(&self.row_slice(i));
        }
        list.finish()
    }
}

impl fmt::Debug for CVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

impl CVec {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim <= MAX_DIM && dim > 0, "vector dimension {dim} unsupported");
        CVec { dim, data: [ZERO; MAX_DIM] }
    }

    /// Unit vector `e_k`.
    pub fn unit(dim: usize, k: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.data[k] = ONE;
        v
    }

    pub fn from_slice(values: &[C64]) -> Self {
        let mut v = Self::zeros(values.len());
        v.data[..values.len()].copy_from_slice(values);
        v
    }

    pub fn from_real(values: &[f64]) -> Self {
        let mut v = Self::zeros(values.len());
        for (dst, &x) in v.data.iter_mut().zip(values) {
            *dst = C64::new(x, 0.0);
        }
        v
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data[..self.dim]
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data[..self.dim]
    }

    /// Inner product `self^H other`.
    #[inline]
    pub fn dot(&self, other: &CVec) -> C64 {
        debug_assert_eq!(self.dim, other.dim);
        let mut acc = ZERO;
        for i in 0..self.dim {
            acc += self.data[i].conj() * other.data[i];
        }
        acc
    }

    #[inline]
    pub fn norm_sqr(&self) -> f64 {
        self.as_slice().iter().map(|z| z.norm_sqr()).sum()
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, s: C64) -> CVec {
        let mut out = *self;
        for z in out.as_mut_slice() {
            *z *= s;
        }
        out
    }

    pub fn conj(&self) -> CVec {
        let mut out = *self;
        for z in out.as_mut_slice() {
            *z = z.conj();
        }
        out
    }

    /// Rotates the vector so its largest-magnitude entry is real and positive.
    /// Ties resolve to the lowest index.
    pub fn fix_phase(&self) -> CVec {
        let mut best = 0;
        let mut best_mag = -1.0;
        for (i, z) in self.as_slice().iter().enumerate() {
            let m = z.norm_sqr();
            if m > best_mag {
                best_mag = m;
                best = i;
            }
        }
        let pivot = self.data[best];
        if pivot.norm() == 0.0 {
            return *self;
        }
        self.scale(pivot.conj() / pivot.norm())
    }

    /// Outer product `self * other^H`.
    pub fn outer(&self, other: &CVec) -> CMat {
        let mut m = CMat::zeros_unchecked(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[(i, j)] = self.data[i] * other.data[j].conj();
            }
        }
        m
    }
}

impl Index<usize> for CVec {
    type Output = C64;
    #[inline]
    fn index(&self, i: usize) -> &C64 {
        &self.as_slice()[i]
    }
}

impl IndexMut<usize> for CVec {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.as_mut_slice()[i]
    }
}

impl Add for CVec {
    type Output = CVec;
    fn add(mut self, rhs: CVec) -> CVec {
        for i in 0..self.dim {
            self.data[i] += rhs.data[i];
        }
        self
    }
}

impl Sub for CVec {
    type Output = CVec;
    fn sub(mut self, rhs: CVec) -> CVec {
        for i in 0..self.dim {
            self.data[i] -= rhs.data[i];
        }
        self
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.dim && j < self.dim);
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.dim && j < self.dim);
        &mut self.data[i * self.dim + j]
    }
}

impl CMat {
    fn zeros_unchecked(dim: usize) -> Self {
        assert!(dim <= MAX_DIM && dim > 0, "matrix dimension {dim} unsupported");
        CMat { dim, data: [ZERO; MAX_DIM * MAX_DIM] }
    }

    /// All-zero matrix. Panics if `dim` is outside `2..=4`.
    pub fn zeros(dim: usize) -> Self {
        check_dim(dim).expect("CMat dimension");
        Self::zeros_unchecked(dim)
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Result<Self> {
        check_dim(dim)?;
        let mut m = Self::zeros_unchecked(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = f(i, j);
            }
        }
        Ok(m)
    }

    /// Builds a matrix from row-major entries; `entries.len()` must be a square of 2..=4.
    pub fn from_row_major(entries: &[C64]) -> Result<Self> {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        if dim * dim != entries.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} entries do not form a square matrix",
                entries.len()
            )));
        }
        Self::from_fn(dim, |i, j| entries[i * dim + j])
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::from_fn(dim, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        Self::from_fn(values.len(), |i, j| {
            if i == j {
                C64::new(values[i], 0.0)
            } else {
                ZERO
            }
        })
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[CVec]) -> Result<Self> {
        let dim = cols.len();
        if cols.iter().any(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch("column length differs from column count".into()));
        }
        Self::from_fn(dim, |i, j| cols[j][i])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data[..self.dim * self.dim]
    }

    pub fn row_slice(&self, i: usize) -> &[C64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row(&self, i: usize) -> CVec {
        CVec::from_slice(self.row_slice(i))
    }

    pub fn column(&self, j: usize) -> CVec {
        let mut v = CVec::zeros(self.dim);
        for i in 0..self.dim {
            v[i] = self[(i, j)];
        }
        v
    }

    pub fn set_row(&mut self, i: usize, row: &CVec) {
        for j in 0..self.dim {
            self[(i, j)] = row[j];
        }
    }

    pub fn adjoint(&self) -> CMat {
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(i, j)] = self[(j, i)].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: C64) -> CMat {
        let mut out = *self;
        for z in &mut out.data[..self.dim * self.dim] {
            *z *= s;
        }
        out
    }

    pub fn scale_real(&self, s: f64) -> CMat {
        self.scale(C64::new(s, 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest column sum of magnitudes.
    pub fn norm_1(&self) -> f64 {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, v: &CVec) -> CVec {
        debug_assert_eq!(self.dim, v.dim());
        let mut out = CVec::zeros(self.dim);
        for i in 0..self.dim {
            let mut acc = ZERO;
            for j in 0..self.dim {
                acc += self[(i, j)] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Applies the matrix to a raw slice of length `dim`, writing into `out`.
    #[inline]
    pub fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        for i in 0..self.dim {
            let row = self.row_slice(i);
            let mut acc = ZERO;
            for j in 0..self.dim {
                acc += row[j] * x[j];
            }
            out[i] = acc;
        }
    }

    /// Quadratic form `w^H M w`, real part only (the form is real for Hermitian `M`).
    pub fn quad_form(&self, w: &CVec) -> f64 {
        w.dot(&self.mul_vec(w)).re
    }

    /// Accumulates `weight * x x^H` in place.
    #[inline]
    pub fn add_weighted_outer(&mut self, x: &[C64], weight: f64) {
        for i in 0..self.dim {
            let xi = x[i] * weight;
            for j in 0..self.dim {
                self.data[i * self.dim + j] += xi * x[j].conj();
            }
        }
    }

    /// Averages the matrix with its adjoint so `M[(i,j)] == conj(M[(j,i)])` holds exactly.
    pub fn hermitian_part(&self) -> CMat {
        let mut out = *self;
        for i in 0..self.dim {
            out[(i, i)] = C64::new(self[(i, i)].re, 0.0);
            for j in (i + 1)..self.dim {
                let z = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
                out[(i, j)] = z;
                out[(j, i)] = z.conj();
            }
        }
        out
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let scale = self.frobenius_norm().max(f64::MIN_POSITIVE);
        (0..self.dim).all(|i| {
            (0..self.dim).all(|j| (self[(i, j)] - self[(j, i)].conj()).norm() <= tol * scale)
        })
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `M + eps * I`. Off-diagonal entries are untouched, so exact Hermitian symmetry is kept.
    pub fn diag_load(&self, eps: f64) -> CMat {
        let mut out = *self;
        for i in 0..self.dim {
            out[(i, i)].re += eps;
        }
        out
    }

    /// LU factorisation with partial pivoting. Returns the packed factors,
    /// the row permutation and the permutation sign.
    fn lu(&self) -> Result<(CMat, [usize; MAX_DIM], f64)> {
        let n = self.dim;
        let mut lu = *self;
        let mut perm = [0usize, 1, 2, 3];
        let mut sign = 1.0;
        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_mag = lu[(col, col)].norm();
            for r in (col + 1)..n {
                let m = lu[(r, col)].norm();
                if m > pivot_mag {
                    pivot_mag = m;
                    pivot_row = r;
                }
            }
            if !(pivot_mag >= PIVOT_FLOOR) {
                return Err(Error::SingularMatrix);
            }
            if pivot_row != col {
                for j in 0..n {
                    let tmp = lu[(col, j)];
                    lu[(col, j)] = lu[(pivot_row, j)];
                    lu[(pivot_row, j)] = tmp;
                }
                perm.swap(col, pivot_row);
                sign = -sign;
            }
            let inv_pivot = ONE / lu[(col, col)];
            for r in (col + 1)..n {
                let factor = lu[(r, col)] * inv_pivot;
                lu[(r, col)] = factor;
                for j in (col + 1)..n {
                    let sub = factor * lu[(col, j)];
                    lu[(r, j)] -= sub;
                }
            }
        }
        Ok((lu, perm, sign))
    }

    fn lu_solve(lu: &CMat, perm: &[usize; MAX_DIM], b: &CVec) -> CVec {
        let n = lu.dim;
        let mut y = CVec::zeros(n);
        for i in 0..n {
            let mut acc = b[perm[i]];
            for j in 0..i {
                acc -= lu[(i, j)] * y[j];
            }
            y[i] = acc;
        }
        let mut x = CVec::zeros(n);
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in (i + 1)..n {
                acc -= lu[(i, j)] * x[j];
            }
            x[i] = acc / lu[(i, i)];
        }
        x
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &CVec) -> Result<CVec> {
        let (lu, perm, _) = self.lu()?;
        let x = Self::lu_solve(&lu, &perm, b);
        if x.as_slice().iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(x)
        } else {
            Err(Error::SingularMatrix)
        }
    }

    /// Matrix inverse by partial-pivoting LU.
    ///
    /// Fails with [`Error::SingularMatrix`] when a pivot drops below
    /// [`PIVOT_FLOOR`] or the 1-norm condition number exceeds
    /// [`CONDITION_CAP`]; callers usually respond by diagonal loading.
    pub fn inverse(&self) -> Result<CMat> {
        let (lu, perm, _) = self.lu()?;
        let n = self.dim;
        let mut inv = Self::zeros_unchecked(n);
        for j in 0..n {
            let col = Self::lu_solve(&lu, &perm, &CVec::unit(n, j));
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        let cond = self.norm_1() * inv.norm_1();
        if !cond.is_finite() || cond > CONDITION_CAP {
            return Err(Error::SingularMatrix);
        }
        Ok(inv)
    }

    pub fn det(&self) -> C64 {
        match self.lu() {
            Ok((lu, _, sign)) => {
                let mut d = C64::new(sign, 0.0);
                for i in 0..self.dim {
                    d *= lu[(i, i)];
                }
                d
            }
            Err(_) => ZERO,
        }
    }

    /// Upper-triangular `P` with `P^H P = M` for Hermitian positive definite `M`.
    pub fn cholesky(&self) -> Result<CMat> {
        let n = self.dim;
        // Lower factor L with M = L L^H; P = L^H.
        let mut l = Self::zeros_unchecked(n);
        for j in 0..n {
            let mut d = self[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite);
            }
            let ljj = d.sqrt();
            l[(j, j)] = C64::new(ljj, 0.0);
            for i in (j + 1)..n {
                let mut acc = self[(i, j)];
                for k in 0..j {
                    acc -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = acc / ljj;
            }
        }
        Ok(l.adjoint())
    }

    /// Inverse of an upper-triangular matrix by back substitution.
    fn upper_triangular_inverse(&self) -> Result<CMat> {
        let n = self.dim;
        let mut inv = Self::zeros_unchecked(n);
        for j in 0..n {
            for i in (0..=j).rev() {
                let mut acc = if i == j { ONE } else { ZERO };
                for k in (i + 1)..=j {
                    acc -= self[(i, k)] * inv[(k, j)];
                }
                let d = self[(i, i)];
                if d.norm() < PIVOT_FLOOR {
                    return Err(Error::SingularMatrix);
                }
                inv[(i, j)] = acc / d;
            }
        }
        Ok(inv)
    }

    /// Eigen-decomposition of a Hermitian matrix.
    ///
    /// Returns eigenvalues in descending order and the matching unit
    /// eigenvectors as columns. `K = 2` uses the closed form; larger sizes
    /// use cyclic complex Jacobi rotations.
    pub fn hermitian_eig(&self) -> ([f64; MAX_DIM], CMat) {
        let h = self.hermitian_part();
        if h.dim == 2 {
            eig2(&h)
        } else {
            jacobi_eig(&h)
        }
    }
}

impl Mul for CMat {
    type Output = CMat;
    fn mul(self, rhs: CMat) -> CMat {
        debug_assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = CMat::zeros_unchecked(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Add for CMat {
    type Output = CMat;
    fn add(mut self, rhs: CMat) -> CMat {
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += *b;
        }
        self
    }
}

impl Sub for CMat {
    type Output = CMat;
    fn sub(mut self, rhs: CMat) -> CMat {
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a -= *b;
        }
        self
    }
}

fn eig2(m: &CMat) -> ([f64; MAX_DIM], CMat) {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let mean = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let r = half_diff.hypot(b.norm());
    let mut vals = [0.0; MAX_DIM];
    if r == 0.0 {
        vals[0] = mean;
        vals[1] = mean;
        return (vals, CMat::identity(2));
    }
    let top = mean + r;
    let det = a * d - b.norm_sqr();
    vals[0] = top;
    vals[1] = if top != 0.0 { det / top } else { mean - r };
    // Pick the better-conditioned null vector of (M - top I).
    let v = if half_diff >= 0.0 {
        CVec::from_slice(&[C64::new(r + half_diff, 0.0), b.conj()])
    } else {
        CVec::from_slice(&[b, C64::new(r - half_diff, 0.0)])
    };
    let v = v.scale(C64::new(1.0 / v.norm(), 0.0));
    let u = CVec::from_slice(&[-v[1].conj(), v[0].conj()]);
    let vecs = CMat::from_columns(&[v, u]).expect("2x2");
    (vals, vecs)
}

fn jacobi_eig(m: &CMat) -> ([f64; MAX_DIM], CMat) {
    let n = m.dim;
    let mut a = *m;
    let mut v = CMat::identity(n);
    let total = a.frobenius_norm();
    for _sweep in 0..64 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let g = apq.norm();
                if g <= 1e-300 {
                    continue;
                }
                let phase = apq / g;
                let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * g);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let mut rot = CMat::identity(n);
                rot[(p, p)] = C64::new(c, 0.0);
                rot[(p, q)] = C64::new(s, 0.0);
                rot[(q, p)] = phase.conj() * (-s);
                rot[(q, q)] = phase.conj() * c;
                a = (rot.adjoint() * a * rot).hermitian_part();
                v = v * rot;
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re));
    let mut vals = [0.0; MAX_DIM];
    let mut vecs = CMat::zeros_unchecked(n);
    for (dst, &src) in order.iter().enumerate() {
        vals[dst] = a[(src, src)].re;
        for i in 0..n {
            vecs[(i, dst)] = v[(i, src)];
        }
    }
    (vals, vecs)
}

/// Matrix inverse with the condition-number cap; see [`CMat::inverse`].
pub fn herm_inverse(m: &CMat) -> Result<CMat> {
    m.inverse()
}

pub fn cholesky(m: &CMat) -> Result<CMat> {
    m.cholesky()
}

pub fn diag_load(m: &CMat, eps: f64) -> CMat {
    m.diag_load(eps)
}

/// Largest generalized eigenpair of `S v = lambda N v`.
///
/// Reduces through the Cholesky split `N = P^H P` to the standard problem
/// on `P^{-H} S P^{-1}`. The returned vector has unit 2-norm and its
/// largest-magnitude entry is real and positive. `lambda` is clamped at 0.
pub fn gen_eig_max(s: &CMat, n: &CMat) -> Result<(f64, CVec)> {
    if s.dim() != n.dim() {
        return Err(Error::DimensionMismatch("S and N differ in size".into()));
    }
    let p = n.cholesky()?;
    let p_inv = p.upper_triangular_inverse()?;
    let reduced = (p_inv.adjoint() * *s * p_inv).hermitian_part();
    let (vals, vecs) = reduced.hermitian_eig();
    let v = p_inv.mul_vec(&vecs.column(0));
    let norm = v.norm();
    if !(norm > 0.0) {
        return Err(Error::DegenerateDirection);
    }
    let v = v.scale(C64::new(1.0 / norm, 0.0)).fix_phase();
    Ok((vals[0].max(0.0), v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_mat(rng: &mut ChaCha8Rng, dim: usize) -> CMat {
        CMat::from_fn(dim, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).unwrap()
    }

    fn random_pd(rng: &mut ChaCha8Rng, dim: usize) -> CMat {
        let b = random_mat(rng, dim);
        (b * b.adjoint()).diag_load(0.1).hermitian_part()
    }

    fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
        a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn inverse_of_identity_and_diagonal() {
        let i2 = CMat::identity(2);
        assert_eq!(i2.inverse().unwrap(), i2);
        let d = CMat::diag(&[2.0, 4.0]).unwrap();
        let inv = d.inverse().unwrap();
        assert!(max_abs_diff(&inv, &CMat::diag(&[0.5, 0.25]).unwrap()) < 1e-15);
    }

    #[test]
    fn inverse_residual_for_random_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let m = random_pd(&mut rng, 3);
            let inv = herm_inverse(&m).unwrap();
            let resid = (m * inv - CMat::identity(3)).frobenius_norm();
            assert!(resid <= 1e-10 * m.frobenius_norm(), "residual {resid}");
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        let m = CMat::from_real_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).unwrap();
        assert!(matches!(m.inverse(), Err(Error::SingularMatrix)));
        let nearly = CMat::diag(&[1.0, 1e-14]).unwrap();
        assert!(matches!(nearly.inverse(), Err(Error::SingularMatrix)));
    }

    #[test]
    fn cholesky_small_cases() {
        assert_eq!(CMat::identity(2).cholesky().unwrap(), CMat::identity(2));
        let p = CMat::diag(&[4.0, 9.0]).unwrap().cholesky().unwrap();
        assert!(max_abs_diff(&p, &CMat::diag(&[2.0, 3.0]).unwrap()) < 1e-15);
        let bad = CMat::diag(&[1.0, -1.0]).unwrap();
        assert!(matches!(bad.cholesky(), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn cholesky_is_upper_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dim in 2..=4 {
            let m = random_pd(&mut rng, dim);
            let p = m.cholesky().unwrap();
            for i in 0..dim {
                for j in 0..i {
                    assert_eq!(p[(i, j)], C64::new(0.0, 0.0));
                }
                assert!(p[(i, i)].im == 0.0 && p[(i, i)].re > 0.0);
            }
            let rel = (p.adjoint() * p - m).frobenius_norm() / m.frobenius_norm();
            assert!(rel <= 1e-10, "dim {dim}: {rel}");
        }
    }

    #[test]
    fn gen_eig_diagonal_case() {
        let s = CMat::diag(&[4.0, 0.0]).unwrap();
        let (lambda, v) = gen_eig_max(&s, &CMat::identity(2)).unwrap();
        assert!((lambda - 4.0).abs() < 1e-12);
        assert!((v[0] - c(1.0, 0.0)).norm() < 1e-12 && v[1].norm() < 1e-12);
    }

    #[test]
    fn gen_eig_rank_one_matches_quadratic_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dim in 2..=4 {
            let a = CVec::from_slice(
                &(0..dim)
                    .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect::<Vec<_>>(),
            );
            let sigma2 = 2.5;
            let n = random_pd(&mut rng, dim);
            let s = a.outer(&a).scale_real(sigma2);
            let (lambda, _) = gen_eig_max(&s, &n).unwrap();
            let bound = sigma2 * a.dot(&n.solve(&a).unwrap()).re;
            assert!((lambda - bound).abs() <= 1e-10 * bound, "{lambda} vs {bound}");
        }
    }

    /// Power iteration on N^{-1} S, an independent route to the top eigenvalue.
    fn power_iteration_top(s: &CMat, n: &CMat) -> f64 {
        let dim = s.dim();
        let mut v = CVec::from_real(&vec![1.0; dim]);
        let mut lambda = 0.0;
        for _ in 0..5000 {
            let w = n.solve(&s.mul_vec(&v)).unwrap();
            lambda = w.norm() / v.norm();
            v = w.scale(c(1.0 / w.norm(), 0.0));
        }
        lambda
    }

    #[test]
    fn gen_eig_matches_power_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for dim in [2, 3, 3, 4] {
            let s = random_pd(&mut rng, dim);
            let n = random_pd(&mut rng, dim);
            let (lambda, v) = gen_eig_max(&s, &n).unwrap();
            let oracle = power_iteration_top(&s, &n);
            assert!((lambda - oracle).abs() <= 1e-8 * oracle, "{lambda} vs {oracle}");
            let resid = s.mul_vec(&v) - n.mul_vec(&v).scale(c(lambda, 0.0));
            assert!(resid.norm() <= 1e-9 * s.frobenius_norm());
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gen_eig_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let s = random_pd(&mut rng, 3);
        let n = random_pd(&mut rng, 3);
        let (l1, v1) = gen_eig_max(&s, &n).unwrap();
        let (l2, v2) = gen_eig_max(&s.scale_real(7.0), &n).unwrap();
        assert!((l2 - 7.0 * l1).abs() <= 1e-10 * l2);
        assert!((v1 - v2).norm() < 1e-9);
    }

    #[test]
    fn diag_load_cases() {
        let z = CMat::zeros(2).diag_load(1e-6);
        assert_eq!(z, CMat::diag(&[1e-6, 1e-6]).unwrap());
        let i = CMat::identity(2).diag_load(0.1);
        assert_eq!(i, CMat::diag(&[1.1, 1.1]).unwrap());
    }

    #[test]
    fn diag_load_lifts_rank_one_spectrum() {
        let a = CVec::from_slice(&[c(1.0, 0.5), c(-0.3, 0.2), c(0.7, -1.1)]);
        let m = a.outer(&a).diag_load(1e-6);
        let (vals, _) = m.hermitian_eig();
        assert!(vals[2] >= 1e-6 * (1.0 - 1e-6), "{}", vals[2]);
    }

    #[test]
    fn hermitian_eig_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for dim in 2..=4 {
            let m = random_pd(&mut rng, dim);
            let (vals, vecs) = m.hermitian_eig();
            let d = CMat::diag(&vals[..dim]).unwrap();
            let rebuilt = vecs * d * vecs.adjoint();
            assert!((rebuilt - m).frobenius_norm() <= 1e-12 * m.frobenius_norm());
            assert!(vals[..dim].windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn determinant_of_triangular_product() {
        let m = CMat::from_real_rows(&[&[2.0, 1.0], &[0.0, 3.0]]).unwrap();
        assert!((m.det() - c(6.0, 0.0)).norm() < 1e-14);
        let p = CMat::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        assert!((p.det() - c(-1.0, 0.0)).norm() < 1e-14);
    }
}
