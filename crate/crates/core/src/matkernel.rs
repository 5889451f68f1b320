//! Dense complex matrices of fixed small dimension.
//!
//! Everything in the walk models lives in dimension 2 (coins, density blocks)
//! or dimension 4 (vectorized channels and their Fourier symbols), so the
//! matrix type is a `Copy` array parameterized by a const dimension.
//!
//! `vec` flattens row-major: `vec([[a, b], [c, d]]) = [a, b, c, d]`. With that
//! convention `vec(A X B^T) = (A ⊗ B) vec(X)`, and a Kraus map
//! `X ↦ Σ B X B*` is represented by `Σ B ⊗ conj(B)`.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{QwalkError, Result};

pub type C64 = Complex64;

/// A two-component complex vector (one site of a coined walk).
pub type Spinor = [C64; 2];

pub type Mat2 = Matrix<2>;
pub type Mat4 = Matrix<4>;

/// Absolute tolerance for exactly representable targets.
pub const EXACT_TOL: f64 = 1e-12;

/// Relative tolerance for iterative results.
pub const ITERATIVE_TOL: f64 = 1e-8;

pub const fn c64(re: f64, im: f64) -> C64 {
    Complex64::new(re, im)
}

const ZERO: C64 = c64(0.0, 0.0);
const ONE: C64 = c64(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix<const N: usize> {
    rows: [[C64; N]; N],
}

impl<const N: usize> Default for Matrix<N> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<const N: usize> Matrix<N> {
    pub const fn from_rows(rows: [[C64; N]; N]) -> Self {
        Self { rows }
    }

    pub fn from_real(rows: [[f64; N]; N]) -> Self {
        Self { rows: rows.map(|r| r.map(|x| c64(x, 0.0))) }
    }

    pub const fn zeros() -> Self {
        Self { rows: [[ZERO; N]; N] }
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.rows[i][i] = ONE;
        }
        m
    }

    pub fn from_diagonal(diag: [C64; N]) -> Self {
        let mut m = Self::zeros();
        for (i, d) in diag.into_iter().enumerate() {
            m.rows[i][i] = d;
        }
        m
    }

    pub const fn dim(&self) -> usize {
        N
    }

    pub fn rows(&self) -> &[[C64; N]; N] {
        &self.rows
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                out.rows[j][i] = self.rows[i][j].conj();
            }
        }
        out
    }

    pub fn conj(&self) -> Self {
        Self { rows: self.rows.map(|r| r.map(|z| z.conj())) }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                out.rows[j][i] = self.rows[i][j];
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..N).map(|i| self.rows[i][i]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows.map(|r| r.map(|z| z * s)) }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self { rows: self.rows.map(|r| r.map(|z| z * s)) }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.rows.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.rows.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `max |A - B|` entrywise.
    pub fn max_diff(&self, other: &Self) -> f64 {
        (*self - *other).max_abs()
    }

    pub fn apply(&self, v: &[C64; N]) -> [C64; N] {
        let mut out = [ZERO; N];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.rows[i].iter().zip(v).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// `A ρ A*`.
    pub fn conjugate(&self, rho: &Self) -> Self {
        *self * *rho * self.adjoint()
    }

    pub fn pow(&self, mut n: u32) -> Self {
        let mut base = *self;
        let mut acc = Self::identity();
        while n > 0 {
            if n & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            n >>= 1;
        }
        acc
    }

    /// `max |A - A*|`.
    pub fn hermitian_deviation(&self) -> f64 {
        self.max_diff(&self.adjoint())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    pub fn is_normal(&self, tol: f64) -> bool {
        let a = self.adjoint();
        (a * *self).max_diff(&(*self * a)) <= tol
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> C64 {
        let mut a = self.rows;
        let mut det = ONE;
        for col in 0..N {
            let pivot = (col..N)
                .max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))
                .unwrap_or(col);
            if a[pivot][col] == ZERO {
                return ZERO;
            }
            if pivot != col {
                a.swap(pivot, col);
                det = -det;
            }
            let p = a[col][col];
            det *= p;
            for r in col + 1..N {
                let f = a[r][col] / p;
                for c in col..N {
                    let v = a[col][c];
                    a[r][c] -= f * v;
                }
            }
        }
        det
    }
}

impl<const N: usize> Index<(usize, usize)> for Matrix<N> {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.rows[i][j]
    }
}

impl<const N: usize> IndexMut<(usize, usize)> for Matrix<N> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.rows[i][j]
    }
}

impl<const N: usize> Mul for Matrix<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = Self::zeros();
        for i in 0..N {
            for k in 0..N {
                let a = self.rows[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..N {
                    out.rows[i][j] += a * rhs.rows[k][j];
                }
            }
        }
        out
    }
}

impl<const N: usize> Mul<C64> for Matrix<N> {
    type Output = Self;
    fn mul(self, rhs: C64) -> Self {
        self.scale(rhs)
    }
}

impl<const N: usize> Add for Matrix<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl<const N: usize> AddAssign for Matrix<N> {
    fn add_assign(&mut self, rhs: Self) {
        for i in 0..N {
            for j in 0..N {
                self.rows[i][j] += rhs.rows[i][j];
            }
        }
    }
}

impl<const N: usize> Sub for Matrix<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl<const N: usize> Neg for Matrix<N> {
    type Output = Self;
    fn neg(self) -> Self {
        Self { rows: self.rows.map(|r| r.map(|z| -z)) }
    }
}

impl<const N: usize> std::iter::Sum for Matrix<N> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zeros(), |a, b| a + b)
    }
}

impl Mat2 {
    /// Row-major flattening.
    pub fn vec(&self) -> [C64; 4] {
        let [[a, b], [c, d]] = self.rows;
        [a, b, c, d]
    }

    pub fn unvec(v: &[C64; 4]) -> Self {
        Self::from_rows([[v[0], v[1]], [v[2], v[3]]])
    }

    /// Projector `|ψ⟩⟨ψ|`.
    pub fn outer(psi: &Spinor) -> Self {
        let mut m = Self::zeros();
        for i in 0..2 {
            for j in 0..2 {
                m.rows[i][j] = psi[i] * psi[j].conj();
            }
        }
        m
    }

    /// Smallest eigenvalue of the Hermitian part; used as a positivity check.
    pub fn min_hermitian_eigenvalue(&self) -> f64 {
        let h = (*self + self.adjoint()).scale_real(0.5);
        let (_, lo) = hermitian_pair(&h);
        lo
    }
}

pub fn spinor_norm_sqr(v: &Spinor) -> f64 {
    v[0].norm_sqr() + v[1].norm_sqr()
}

pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    let mut out = Mat4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

/// `[Φ] = Σ Bᵢ ⊗ conj(Bᵢ)`, the matrix acting on `vec(ρ)`.
pub fn channel_matrix(kraus: &[Mat2]) -> Result<Mat4> {
    if kraus.is_empty() {
        return Err(QwalkError::EmptyKrausSet);
    }
    Ok(kraus.iter().map(|b| kron(b, &b.conj())).sum())
}

fn hermitian_pair(a: &Mat2) -> (f64, f64) {
    let p = a[(0, 0)].re;
    let q = a[(1, 1)].re;
    let mean = 0.5 * (p + q);
    let r = (0.5 * (p - q)).hypot(a[(0, 1)].norm());
    (mean + r, mean - r)
}

fn hermitian_check(a: &Mat2) -> Result<()> {
    let deviation = a.hermitian_deviation();
    if deviation > EXACT_TOL * a.max_abs().max(1.0) {
        return Err(QwalkError::NotHermitian { deviation });
    }
    Ok(())
}

/// Closed-form eigenvalues of a Hermitian 2×2, largest first.
pub fn hermitian_eigenvalues(a: &Mat2) -> Result<(f64, f64)> {
    hermitian_check(a)?;
    Ok(hermitian_pair(a))
}

/// Eigen-decomposition `A = U diag(values) U*` of a Hermitian 2×2.
///
/// A diagonal input keeps the standard basis and its natural order; otherwise
/// the eigenvalues come largest first. Columns of `vectors` are the eigenvectors.
#[derive(Clone, Copy, Debug)]
pub struct HermitianEigen {
    pub values: [f64; 2],
    pub vectors: Mat2,
}

pub fn hermitian_eigen(a: &Mat2) -> Result<HermitianEigen> {
    hermitian_check(a)?;
    let b = a[(0, 1)];
    if b.norm() <= EXACT_TOL * a.max_abs().max(1.0) {
        return Ok(HermitianEigen { values: [a[(0, 0)].re, a[(1, 1)].re], vectors: Mat2::identity() });
    }
    let (hi, lo) = hermitian_pair(a);
    let p = a[(0, 0)].re;
    let q = a[(1, 1)].re;
    // (A - λ) v = 0 with first row (p - λ, b) gives v = (b, λ - p); the
    // second row gives v = (λ - q, conj(b)). The second column is v1 rotated.
    // Use whichever row of (A - λ) is better conditioned.
    let (x, y) = if (hi - p).abs() >= (hi - q).abs() {
        (b, c64(hi - p, 0.0))
    } else {
        (c64(hi - q, 0.0), b.conj())
    };
    let n = (x.norm_sqr() + y.norm_sqr()).sqrt();
    let v1 = [x / n, y / n];
    let v2 = [-v1[1].conj(), v1[0].conj()];
    Ok(HermitianEigen {
        values: [hi, lo],
        vectors: Mat2::from_rows([[v1[0], v2[0]], [v1[1], v2[1]]]),
    })
}

/// Singular values, largest first.
pub fn singular_values(a: &Mat2) -> (f64, f64) {
    let (hi, lo) = hermitian_pair(&(a.adjoint() * *a));
    (hi.max(0.0).sqrt(), lo.max(0.0).sqrt())
}

/// Eigenvalues of a general complex 4×4 matrix.
pub fn eigenvalues_4x4(m: &Mat4) -> Result<[C64; 4]> {
    eigenvalues(m)
}

/// Eigenvalues of a general complex matrix, with multiplicity.
///
/// Givens reduction to upper Hessenberg form, then Wilkinson-shifted QR
/// with bottom-up deflation. The result is checked against the contract
/// `|det(M - λI)| < 1e-8 ‖M‖` before returning.
pub fn eigenvalues<const N: usize>(m: &Matrix<N>) -> Result<[C64; N]> {
    let scale = m.max_abs();
    if scale == 0.0 {
        return Ok([ZERO; N]);
    }
    let mut h = m.rows;
    hessenberg(&mut h);

    let mut out = [ZERO; N];
    let mut hi = N - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    loop {
        if hi == 0 {
            out[0] = h[0][0];
            break;
        }
        let mut l = hi;
        while l > 0 {
            let s = h[l - 1][l - 1].norm() + h[l][l].norm();
            let s = if s == 0.0 { scale } else { s };
            if h[l][l - 1].norm() <= f64::EPSILON * s {
                h[l][l - 1] = ZERO;
                break;
            }
            l -= 1;
        }
        if l == hi {
            out[hi] = h[hi][hi];
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if total > 60 * N {
            return Err(QwalkError::NoConvergence { residual: h[hi][hi - 1].norm() });
        }
        let shift = if iter % 11 == 10 {
            // exceptional shift to break cycles
            h[hi][hi] + c64(h[hi][hi - 1].norm() * 0.75, h[hi][hi - 1].norm() * 0.25)
        } else {
            wilkinson_shift(h[hi - 1][hi - 1], h[hi - 1][hi], h[hi][hi - 1], h[hi][hi])
        };
        qr_step(&mut h, l, hi, shift);
    }

    let norm = m.frobenius_norm();
    let bound = ITERATIVE_TOL * norm.max(norm.powi(N as i32));
    for lambda in out {
        let residual = (*m - Matrix::<N>::identity().scale(lambda)).det().norm();
        if residual >= bound {
            return Err(QwalkError::NoConvergence { residual });
        }
    }
    Ok(out)
}

/// Rotation `[[c, s], [-conj(s), c]]` (c real) that zeroes `y` in `(x, y)`.
fn givens(x: C64, y: C64) -> (f64, C64) {
    let ax = x.norm();
    let r = ax.hypot(y.norm());
    if r == 0.0 {
        return (1.0, ZERO);
    }
    if ax == 0.0 {
        return (0.0, y.conj() / y.norm());
    }
    (ax / r, (x / ax) * y.conj() / r)
}

fn rotate_rows<const N: usize>(h: &mut [[C64; N]; N], i: usize, c: f64, s: C64, cols: std::ops::Range<usize>) {
    for col in cols {
        let a = h[i][col];
        let b = h[i + 1][col];
        h[i][col] = a * c + s * b;
        h[i + 1][col] = -s.conj() * a + b * c;
    }
}

fn rotate_cols<const N: usize>(h: &mut [[C64; N]; N], j: usize, c: f64, s: C64, rows: std::ops::Range<usize>) {
    for row in rows {
        let a = h[row][j];
        let b = h[row][j + 1];
        h[row][j] = a * c + b * s.conj();
        h[row][j + 1] = -a * s + b * c;
    }
}

fn hessenberg<const N: usize>(h: &mut [[C64; N]; N]) {
    for col in 0..N.saturating_sub(2) {
        for row in (col + 2..N).rev() {
            let (c, s) = givens(h[row - 1][col], h[row][col]);
            rotate_rows(h, row - 1, c, s, 0..N);
            rotate_cols(h, row - 1, c, s, 0..N);
            h[row][col] = ZERO;
        }
    }
}

fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let mean = (a + d) * 0.5;
    let (m1, m2) = (mean + disc, mean - disc);
    if (m1 - d).norm() <= (m2 - d).norm() {
        m1
    } else {
        m2
    }
}

fn qr_step<const N: usize>(h: &mut [[C64; N]; N], lo: usize, hi: usize, shift: C64) {
    for i in lo..=hi {
        h[i][i] -= shift;
    }
    let mut rots = Vec::with_capacity(hi - lo);
    for k in lo..hi {
        let (c, s) = givens(h[k][k], h[k + 1][k]);
        rotate_rows(h, k, c, s, lo..hi + 1);
        h[k + 1][k] = ZERO;
        rots.push((k, c, s));
    }
    for (k, c, s) in rots {
        rotate_cols(h, k, c, s, lo..hi + 1);
    }
    for i in lo..=hi {
        h[i][i] += shift;
    }
}
