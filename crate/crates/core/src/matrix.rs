//! Small dense complex matrices and the matrix functions built on them.
//!
//! Everything here works on [`SquareMatrix`], a row-major `n x n` array of
//! `Complex64`. Real matrices are the zero-imaginary special case. The sizes
//! of interest are tiny (2 for a single oscillator, 4 to a few dozen for
//! coupled networks), so the algorithms favour robustness over speed:
//!
//! * eigen-decomposition goes through a complex Schur form (Householder
//!   Hessenberg reduction followed by single-shift QR with Wilkinson shifts);
//! * [`mat_exp`] and [`mat_log`] diagonalise when the eigenvector basis is
//!   well conditioned and otherwise fall back to scaling-and-squaring with a
//!   degree-13 Padé approximant (exp) or inverse scaling-and-squaring on the
//!   triangular Schur factor with Gauss-Legendre quadrature (log).
//!
//! Logarithms use the principal branch. Eigenvalues on the negative real axis
//! get `+i*pi`, including values whose imaginary part is a signed zero or
//! rounding noise.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{MsfError, Result};

/// Eigenvector bases with a condition number above this are treated as
/// near-defective and the matrix functions switch to the fallback algorithms.
pub const EIGEN_CONDITION_LIMIT: f64 = 1e6;

/// `mat_log` refuses matrices whose smallest singular value is below this
/// fraction of their Frobenius norm.
pub const SINGULARITY_THRESHOLD: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "matrix dimension must be at least 1");
        SquareMatrix {
            n,
            data: vec![ZERO; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a real matrix from row-major entries.
    pub fn from_real(n: usize, entries: &[f64]) -> Self {
        assert_eq!(entries.len(), n * n, "expected {} entries", n * n);
        Self::from_fn(n, |i, j| Complex64::new(entries[i * n + j], 0.0))
    }

    pub fn from_real_rows<const N: usize>(rows: [[f64; N]; N]) -> Self {
        Self::from_fn(N, |i, j| Complex64::new(rows[i][j], 0.0))
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        SquareMatrix {
            n: self.n,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn real_part(&self) -> Self {
        SquareMatrix {
            n: self.n,
            data: self.data.iter().map(|z| Complex64::new(z.re, 0.0)).collect(),
        }
    }

    /// Frobenius norm of the imaginary part.
    pub fn imag_norm(&self) -> f64 {
        self.data.iter().map(|z| z.im * z.im).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                let row = &self.data[i * self.n..(i + 1) * self.n];
                row.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }

    /// Real parts as a row-major vector.
    pub fn to_real_vec(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }

    pub fn determinant(&self) -> Complex64 {
        match Lu::factor(self) {
            Some(lu) => lu.determinant(),
            None => ZERO,
        }
    }

    pub fn inverse(&self) -> Option<Self> {
        Lu::factor(self).map(|lu| lu.inverse())
    }

    /// Solves `self * X = rhs`.
    pub fn solve(&self, rhs: &SquareMatrix) -> Option<Self> {
        assert_eq!(self.n, rhs.n);
        Lu::factor(self).map(|lu| lu.solve_matrix(rhs))
    }

    /// Estimate of the smallest singular value, `1 / ||M^-1||_F`. Lies within a
    /// factor `sqrt(n)` below the true value; zero for exactly singular input.
    pub fn min_singular_value_estimate(&self) -> f64 {
        match self.inverse() {
            Some(inv) if inv.is_finite() => 1.0 / inv.frobenius_norm(),
            _ => 0.0,
        }
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.n + j]
    }
}

impl Add for &SquareMatrix {
    type Output = SquareMatrix;
    fn add(self, rhs: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.n, rhs.n);
        SquareMatrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &SquareMatrix {
    type Output = SquareMatrix;
    fn sub(self, rhs: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.n, rhs.n);
        SquareMatrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &SquareMatrix {
    type Output = SquareMatrix;
    fn mul(self, rhs: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SquareMatrix({}x{}) [", self.n, self.n)?;
        for i in 0..self.n {
            write!(f, "  ")?;
            for j in 0..self.n {
                let z = self[(i, j)];
                write!(f, "{:>12.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// LU factorisation with partial pivoting.
struct Lu {
    lu: SquareMatrix,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    fn factor(m: &SquareMatrix) -> Option<Lu> {
        let n = m.n;
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].norm()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pivot == 0.0 || !pivot.is_finite() {
                return None;
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let d = lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] / d;
                lu[(i, k)] = factor;
                if factor != ZERO {
                    for j in k + 1..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= factor * u;
                    }
                }
            }
        }
        Some(Lu { lu, perm, sign })
    }

    fn determinant(&self) -> Complex64 {
        let prod: Complex64 = (0..self.lu.n).map(|i| self.lu[(i, i)]).product();
        prod * self.sign
    }

    fn solve_vec(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.lu.n;
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                let l = self.lu[(i, k)];
                let xk = x[k];
                x[i] -= l * xk;
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.lu[(i, k)];
                let xk = x[k];
                x[i] -= u * xk;
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }

    fn solve_matrix(&self, rhs: &SquareMatrix) -> SquareMatrix {
        let n = self.lu.n;
        let mut out = SquareMatrix::zeros(n);
        for j in 0..n {
            let x = self.solve_vec(&rhs.column(j));
            for i in 0..n {
                out[(i, j)] = x[i];
            }
        }
        out
    }

    fn inverse(&self) -> SquareMatrix {
        self.solve_matrix(&SquareMatrix::identity(self.lu.n))
    }
}

/// Complex Schur factorisation `M = Q T Q^H` with `Q` unitary and `T` upper
/// triangular.
#[derive(Clone, Debug)]
pub struct Schur {
    pub q: SquareMatrix,
    pub t: SquareMatrix,
}

/// Plane rotation `[[c, s], [-conj(s), c]]` with real `c`.
#[derive(Clone, Copy)]
struct Givens {
    c: f64,
    s: Complex64,
}

impl Givens {
    /// Rotation mapping `(a, b)` to `(r, 0)`.
    fn zeroing(a: Complex64, b: Complex64) -> Givens {
        let na = a.norm();
        let nb = b.norm();
        if nb == 0.0 {
            return Givens { c: 1.0, s: ZERO };
        }
        if na == 0.0 {
            return Givens { c: 0.0, s: ONE };
        }
        let nu = na.hypot(nb);
        Givens {
            c: na / nu,
            s: (a / na) * b.conj() / nu,
        }
    }

    fn rotate_rows(&self, m: &mut SquareMatrix, k: usize, cols: std::ops::Range<usize>) {
        for j in cols {
            let x = m[(k, j)];
            let y = m[(k + 1, j)];
            m[(k, j)] = x * self.c + self.s * y;
            m[(k + 1, j)] = -self.s.conj() * x + y * self.c;
        }
    }

    /// Right-multiplication by the conjugate transpose on columns `k, k+1`.
    fn rotate_cols(&self, m: &mut SquareMatrix, k: usize, rows: std::ops::Range<usize>) {
        for i in rows {
            let x = m[(i, k)];
            let y = m[(i, k + 1)];
            m[(i, k)] = x * self.c + y * self.s.conj();
            m[(i, k + 1)] = -x * self.s + y * self.c;
        }
    }
}

fn hessenberg(m: &SquareMatrix) -> (SquareMatrix, SquareMatrix) {
    let n = m.n;
    let mut h = m.clone();
    let mut q = SquareMatrix::identity(n);
    for k in 0..n.saturating_sub(2) {
        let x: Vec<Complex64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let xnorm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            continue;
        }
        let phase = if x[0].norm() == 0.0 {
            ONE
        } else {
            x[0] / x[0].norm()
        };
        let mut v = x.clone();
        v[0] += phase * xnorm;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for z in v.iter_mut() {
            *z /= vnorm;
        }
        // H <- P H P with P = I - 2 v v^H acting on indices k+1..n.
        for j in 0..n {
            let dot: Complex64 = (0..v.len()).map(|i| v[i].conj() * h[(k + 1 + i, j)]).sum();
            for i in 0..v.len() {
                h[(k + 1 + i, j)] -= v[i] * dot * 2.0;
            }
        }
        for target in [&mut h, &mut q] {
            for i in 0..n {
                let dot: Complex64 = (0..v.len()).map(|j| target[(i, k + 1 + j)] * v[j]).sum();
                for j in 0..v.len() {
                    target[(i, k + 1 + j)] -= dot * v[j].conj() * 2.0;
                }
            }
        }
        for i in k + 2..n {
            h[(i, k)] = ZERO;
        }
    }
    (h, q)
}

fn wilkinson_shift(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let mean = (a + d) * 0.5;
    let mu1 = mean + disc;
    let mu2 = mean - disc;
    if (mu1 - d).norm() <= (mu2 - d).norm() {
        mu1
    } else {
        mu2
    }
}

/// Complex Schur decomposition of a finite square matrix.
pub fn schur(m: &SquareMatrix) -> Result<Schur> {
    if !m.is_finite() {
        return Err(MsfError::Numerical("schur: non-finite matrix entries".into()));
    }
    let n = m.n;
    let (mut h, mut q) = hessenberg(m);
    let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    while hi > 0 {
        // Locate the start of the active unreduced block.
        let mut lo = hi;
        while lo > 0 {
            let off = h[(lo, lo - 1)].norm();
            let diag = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            let diag = if diag == 0.0 { scale } else { diag };
            if off <= f64::EPSILON * diag {
                h[(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if total > 100 * n {
            return Err(MsfError::Numerical("schur: QR iteration did not converge".into()));
        }
        let mu = if iter % 11 == 10 {
            // Exceptional shift to break cycles.
            h[(hi, hi)] + Complex64::new(h[(hi, hi - 1)].norm() * 0.75, 0.0)
        } else {
            wilkinson_shift(
                h[(hi - 1, hi - 1)],
                h[(hi - 1, hi)],
                h[(hi, hi - 1)],
                h[(hi, hi)],
            )
        };
        for i in lo..=hi {
            h[(i, i)] -= mu;
        }
        let mut rotations = Vec::with_capacity(hi - lo);
        for k in lo..hi {
            let g = Givens::zeroing(h[(k, k)], h[(k + 1, k)]);
            g.rotate_rows(&mut h, k, k..n);
            h[(k + 1, k)] = ZERO;
            rotations.push(g);
        }
        for (idx, g) in rotations.iter().enumerate() {
            let k = lo + idx;
            g.rotate_cols(&mut h, k, 0..(k + 2).min(hi + 1));
            g.rotate_cols(&mut q, k, 0..n);
        }
        for i in lo..=hi {
            h[(i, i)] += mu;
        }
    }
    for i in 1..n {
        for j in 0..i {
            h[(i, j)] = ZERO;
        }
    }
    Ok(Schur { q, t: h })
}

/// Eigenvalues and (column) eigenvectors of a square matrix.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<Complex64>,
    /// Unit-norm eigenvectors stored as columns.
    pub vectors: SquareMatrix,
    /// 1-norm condition number of `vectors`; infinite when singular.
    pub condition: f64,
}

impl EigenDecomposition {
    /// Set when the eigenvector basis is too ill-conditioned to diagonalise.
    pub fn near_defective(&self) -> bool {
        !(self.condition <= EIGEN_CONDITION_LIMIT)
    }
}

fn triangular_eigenvectors(t: &SquareMatrix) -> SquareMatrix {
    let n = t.n;
    let small = f64::EPSILON * t.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut y = SquareMatrix::zeros(n);
    for k in 0..n {
        let lambda = t[(k, k)];
        y[(k, k)] = ONE;
        for i in (0..k).rev() {
            let rhs: Complex64 = (i + 1..=k).map(|j| t[(i, j)] * y[(j, k)]).sum();
            let mut denom = t[(i, i)] - lambda;
            if denom.norm() < small {
                denom = Complex64::new(small, 0.0);
            }
            y[(i, k)] = -rhs / denom;
        }
    }
    y
}

/// Eigen-decomposition via the complex Schur form.
pub fn solve_eigen(m: &SquareMatrix) -> Result<EigenDecomposition> {
    let Schur { q, t } = schur(m)?;
    let n = m.n;
    let values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    let mut vectors = &q * &triangular_eigenvectors(&t);
    for j in 0..n {
        let norm = vectors.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            for i in 0..n {
                vectors[(i, j)] /= norm;
            }
        }
    }
    let condition = match vectors.inverse() {
        Some(inv) if inv.is_finite() => vectors.one_norm() * inv.one_norm(),
        _ => f64::INFINITY,
    };
    Ok(EigenDecomposition {
        values,
        vectors,
        condition,
    })
}

/// True when `z` sits on the negative real axis up to rounding noise.
fn on_negative_axis(z: Complex64) -> bool {
    z.re < 0.0 && z.im.abs() <= 8.0 * f64::EPSILON * z.re.abs()
}

/// Principal logarithm with the branch cut assigned to `+i*pi`.
pub fn principal_ln(z: Complex64) -> Complex64 {
    if on_negative_axis(z) {
        Complex64::new(z.norm().ln(), std::f64::consts::PI)
    } else {
        z.ln()
    }
}

/// Principal square root, consistent with [`principal_ln`] on the cut.
fn principal_sqrt(z: Complex64) -> Complex64 {
    if on_negative_axis(z) {
        Complex64::new(0.0, z.norm().sqrt())
    } else {
        z.sqrt()
    }
}

fn apply_diagonal_function(
    eig: &EigenDecomposition,
    f: impl Fn(Complex64) -> Complex64,
) -> Option<SquareMatrix> {
    let inv = eig.vectors.inverse()?;
    let d = SquareMatrix::from_diagonal(&eig.values.iter().map(|&l| f(l)).collect::<Vec<_>>());
    Some(&(&eig.vectors * &d) * &inv)
}

/// Matrix exponential.
pub fn mat_exp(m: &SquareMatrix) -> Result<SquareMatrix> {
    if !m.is_finite() {
        return Err(MsfError::Numerical("mat_exp: non-finite input".into()));
    }
    if let Ok(eig) = solve_eigen(m) {
        if !eig.near_defective() {
            if let Some(out) = apply_diagonal_function(&eig, |l| l.exp()) {
                if out.is_finite() {
                    return Ok(out);
                }
            }
        }
    }
    expm_pade13(m)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Scaling-and-squaring with the [13/13] Padé approximant.
pub fn expm_pade13(m: &SquareMatrix) -> Result<SquareMatrix> {
    let n = m.n;
    let norm = m.one_norm();
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = m.scale_real(0.5f64.powi(s));
    let id = SquareMatrix::identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = |k: usize| Complex64::new(PADE13[k], 0.0);
    let sum = |terms: &[(&SquareMatrix, usize)]| {
        terms
            .iter()
            .fold(SquareMatrix::zeros(n), |acc, (mat, k)| &acc + &mat.scale(b(*k)))
    };
    let u_inner = &(&a6 * &sum(&[(&a6, 13), (&a4, 11), (&a2, 9)]))
        + &sum(&[(&a6, 7), (&a4, 5), (&a2, 3), (&id, 1)]);
    let u = &a * &u_inner;
    let v = &(&a6 * &sum(&[(&a6, 12), (&a4, 10), (&a2, 8)]))
        + &sum(&[(&a6, 6), (&a4, 4), (&a2, 2), (&id, 0)]);
    let mut r = (&v - &u)
        .solve(&(&v + &u))
        .ok_or_else(|| MsfError::Numerical("mat_exp: singular Padé denominator".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.is_finite() {
        Ok(r)
    } else {
        Err(MsfError::Numerical("mat_exp: overflow".into()))
    }
}

/// Principal matrix logarithm.
///
/// Fails with [`MsfError::NonInvertible`] when the smallest singular value is
/// below [`SINGULARITY_THRESHOLD`] times the Frobenius norm.
pub fn mat_log(m: &SquareMatrix) -> Result<SquareMatrix> {
    if !m.is_finite() {
        return Err(MsfError::Numerical("mat_log: non-finite input".into()));
    }
    let norm = m.frobenius_norm();
    let sigma_min = m.min_singular_value_estimate();
    if !(sigma_min >= SINGULARITY_THRESHOLD * norm) || norm == 0.0 {
        return Err(MsfError::NonInvertible { sigma_min, norm });
    }
    let eig = solve_eigen(m)?;
    if !eig.near_defective() {
        if let Some(out) = apply_diagonal_function(&eig, principal_ln) {
            if out.is_finite() {
                return Ok(out);
            }
        }
    }
    logm_schur(m)
}

/// Inverse scaling-and-squaring on the triangular Schur factor.
pub fn logm_schur(m: &SquareMatrix) -> Result<SquareMatrix> {
    let Schur { q, t } = schur(m)?;
    let n = m.n;
    if (0..n).any(|i| t[(i, i)].norm() == 0.0) {
        return Err(MsfError::NonInvertible {
            sigma_min: 0.0,
            norm: m.frobenius_norm(),
        });
    }
    let id = SquareMatrix::identity(n);
    let mut r = t;
    let mut roots = 0;
    while (&r - &id).one_norm() > 0.25 {
        if roots >= 64 {
            return Err(MsfError::Numerical("mat_log: square roots did not converge".into()));
        }
        r = sqrt_upper_triangular(&r)?;
        roots += 1;
    }
    let x = &r - &id;
    let mut log = SquareMatrix::zeros(n);
    for (node, weight) in gauss_legendre_unit(10) {
        // x (I + node x)^-1, both factors upper triangular and commuting.
        let denom = &id + &x.scale_real(node);
        let term = solve_upper_triangular(&denom, &x)?;
        log = &log + &term.scale_real(weight);
    }
    let log = log.scale_real(2f64.powi(roots));
    let out = &(&q * &log) * &q.conj_transpose();
    if out.is_finite() {
        Ok(out)
    } else {
        Err(MsfError::Numerical("mat_log: non-finite result".into()))
    }
}

fn sqrt_upper_triangular(t: &SquareMatrix) -> Result<SquareMatrix> {
    let n = t.n;
    let mut u = SquareMatrix::zeros(n);
    for i in 0..n {
        u[(i, i)] = principal_sqrt(t[(i, i)]);
    }
    for d in 1..n {
        for i in 0..n - d {
            let j = i + d;
            let s: Complex64 = (i + 1..j).map(|k| u[(i, k)] * u[(k, j)]).sum();
            let denom = u[(i, i)] + u[(j, j)];
            if denom.norm() == 0.0 {
                return Err(MsfError::Numerical(
                    "mat_log: eigenvalues straddle the branch cut".into(),
                ));
            }
            u[(i, j)] = (t[(i, j)] - s) / denom;
        }
    }
    Ok(u)
}

/// Solves `a * X = b` for upper-triangular `a`.
fn solve_upper_triangular(a: &SquareMatrix, b: &SquareMatrix) -> Result<SquareMatrix> {
    let n = a.n;
    let mut x = SquareMatrix::zeros(n);
    for j in 0..n {
        for i in (0..n).rev() {
            let s: Complex64 = (i + 1..n).map(|k| a[(i, k)] * x[(k, j)]).sum();
            let d = a[(i, i)];
            if d.norm() == 0.0 {
                return Err(MsfError::Numerical("singular triangular system".into()));
            }
            x[(i, j)] = (b[(i, j)] - s) / d;
        }
    }
    Ok(x)
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
fn gauss_legendre_unit(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for k in 1..=m {
        // Newton iteration on P_m starting from the Chebyshev-like guess.
        let mut x = (std::f64::consts::PI * (k as f64 - 0.25) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for l in 2..=m {
                let l = l as f64;
                let p2 = ((2.0 * l - 1.0) * x * p1 - (l - 1.0) * p0) / l;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((x + 1.0) * 0.5, w * 0.5));
    }
    out
}
