//! Small dense complex linear algebra shared by the link model and the estimators.

use nalgebra::{Cholesky, DMatrix, Dyn};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

pub fn zeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Matrix with i.i.d. circularly-symmetric complex Gaussian entries of variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMat {
    let sd = (var / 2.0).sqrt();
    // column-major fill keeps the draw order independent of nalgebra internals
    let mut m = CMat::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            m[(r, c)] = Complex64::new(sd * re, sd * im);
        }
    }
    m
}

pub fn frobenius_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// `Re tr(Bᴴ X) = Re Σ conj(b_ij) x_ij`.
pub fn re_inner(b: &CMat, x: &CMat) -> f64 {
    debug_assert_eq!(b.shape(), x.shape());
    b.iter().zip(x.iter()).map(|(b, x)| b.re * x.re + b.im * x.im).sum()
}

/// `acc += B Bᴴ`.
pub fn add_outer(acc: &mut CMat, b: &CMat) {
    acc.gemm(Complex64::new(1.0, 0.0), b, &b.adjoint(), Complex64::new(1.0, 0.0));
}

/// Cholesky factorization of a Hermitian positive-definite matrix after symmetric diagonal
/// equilibration `M̃ = D M D`, `D = diag(M)^(-1/2)`.
///
/// The equilibration keeps the factorization accurate when the diagonal spans many orders of
/// magnitude, which is the normal situation for interference-plus-noise covariances.
pub struct HpdFactor {
    inv_sqrt_diag: Vec<f64>,
    chol: Cholesky<Complex64, Dyn>,
    ln_det: f64,
}

impl HpdFactor {
    pub fn new(m: &CMat) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::Numerical(format!("non-square matrix {}x{}", n, m.ncols())));
        }
        let mut inv_sqrt_diag = Vec::with_capacity(n);
        let mut ln_det = 0.0;
        for i in 0..n {
            let d = m[(i, i)].re;
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Numerical(format!(
                    "matrix is not positive definite (diagonal entry {i} = {d:e})"
                )));
            }
            inv_sqrt_diag.push(1.0 / d.sqrt());
            ln_det += d.ln();
        }
        let mut scaled = m.clone();
        for c in 0..n {
            for r in 0..n {
                scaled[(r, c)] *= inv_sqrt_diag[r] * inv_sqrt_diag[c];
            }
        }
        let chol = scaled
            .cholesky()
            .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
        let l = chol.l_dirty();
        for i in 0..n {
            ln_det += 2.0 * l[(i, i)].re.ln();
        }
        Ok(Self { inv_sqrt_diag, chol, ln_det })
    }

    /// Natural log of the determinant.
    pub fn ln_det(&self) -> f64 {
        self.ln_det
    }

    /// `M⁻¹ B`.
    pub fn solve(&self, b: &CMat) -> CMat {
        let mut x = b.clone();
        for c in 0..x.ncols() {
            for r in 0..x.nrows() {
                x[(r, c)] *= self.inv_sqrt_diag[r];
            }
        }
        self.chol.solve_mut(&mut x);
        for c in 0..x.ncols() {
            for r in 0..x.nrows() {
                x[(r, c)] *= self.inv_sqrt_diag[r];
            }
        }
        x
    }
}

/// Equilibrated Cholesky factorization of a small Hermitian positive-definite `n × n` matrix
/// held column-major in a flat buffer, without heap traffic.
///
/// `m` is overwritten by the lower factor of `D M D` and `d` receives `diag(M)^(-1/2)`. Returns
/// the natural log of `det M`.
pub fn small_chol(m: &mut [Complex64], n: usize, d: &mut [f64]) -> Result<f64> {
    let mut ln_det = 0.0;
    for i in 0..n {
        let v = m[i + i * n].re;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Numerical(format!(
                "matrix is not positive definite (diagonal entry {i} = {v:e})"
            )));
        }
        d[i] = 1.0 / v.sqrt();
        ln_det += v.ln();
    }
    for c in 0..n {
        for r in c..n {
            m[r + c * n] *= d[r] * d[c];
        }
    }
    for j in 0..n {
        let mut s = m[j + j * n].re;
        for k in 0..j {
            s -= m[j + k * n].norm_sqr();
        }
        if !(s > 0.0) {
            return Err(Error::Numerical("matrix is not positive definite".into()));
        }
        let ljj = s.sqrt();
        m[j + j * n] = Complex64::new(ljj, 0.0);
        ln_det += 2.0 * ljj.ln();
        for i in j + 1..n {
            let mut v = m[i + j * n];
            for k in 0..j {
                v -= m[i + k * n] * m[j + k * n].conj();
            }
            m[i + j * n] = v / ljj;
        }
    }
    Ok(ln_det)
}

/// `M⁻¹` from the output of [`small_chol`], written column-major into `inv`.
pub fn small_chol_inverse(l: &[Complex64], n: usize, d: &[f64], inv: &mut [Complex64]) {
    for c in 0..n {
        // forward: L y = e_c
        for r in 0..n {
            let mut v = if r == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            for k in 0..r {
                v -= l[r + k * n] * inv[k + c * n];
            }
            inv[r + c * n] = v / l[r + r * n].re;
        }
        // backward: Lᴴ x = y
        for r in (0..n).rev() {
            let mut v = inv[r + c * n];
            for k in r + 1..n {
                v -= l[k + r * n].conj() * inv[k + c * n];
            }
            inv[r + c * n] = v / l[r + r * n].re;
        }
    }
    for c in 0..n {
        for r in 0..n {
            inv[r + c * n] *= d[r] * d[c];
        }
    }
}

/// Natural-log determinant of a Hermitian positive-definite matrix.
pub fn hpd_ln_det(m: &CMat) -> Result<f64> {
    HpdFactor::new(m).map(|f| f.ln_det())
}

/// Ratio of extreme singular values squared, i.e. the condition number of `GᴴG`.
pub fn gram_condition(g: &CMat) -> f64 {
    let sv = g.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        (max / min).powi(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;

    #[test]
    fn small_kernel_matches_dense() {
        for (n, seed) in [(1, 1), (2, 2), (3, 3), (5, 4)] {
            let m = random_hpd(n, seed);
            let mut flat: Vec<Complex64> = m.iter().cloned().collect();
            let mut d = vec![0.0; n];
            let ln_det = small_chol(&mut flat, n, &mut d).unwrap();
            assert!((ln_det - hpd_ln_det(&m).unwrap()).abs() < 1e-10);
            let mut inv = vec![Complex64::new(0.0, 0.0); n * n];
            small_chol_inverse(&flat, n, &d, &mut inv);
            let inv = CMat::from_column_slice(n, n, &inv);
            let err = (&m * &inv - identity(n)).norm();
            assert!(err < 1e-10, "n={n} err={err}");
        }
    }

    fn random_hpd(n: usize, seed: u64) -> CMat {
        let mut r = rng(seed);
        let a = complex_gaussian(&mut r, n, n + 2, 1.0);
        &a * a.adjoint() + identity(n) * Complex64::new(0.1, 0.0)
    }

    #[test]
    fn ln_det_matches_product_of_eigenvalues() {
        let m = random_hpd(3, 5);
        let eig = nalgebra::SymmetricEigen::new(m.clone());
        let expected: f64 = eig.eigenvalues.iter().map(|l| l.ln()).sum();
        assert!((hpd_ln_det(&m).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn badly_scaled_diagonal_keeps_accuracy() {
        // diag(1e20, 1e-13) with a small coupling: determinant known in closed form
        let mut m = CMat::zeros(2, 2);
        m[(0, 0)] = Complex64::new(1e20, 0.0);
        m[(1, 1)] = Complex64::new(1e-13, 0.0);
        m[(0, 1)] = Complex64::new(1e3, 1e3);
        m[(1, 0)] = Complex64::new(1e3, -1e3);
        let det: f64 = 1e20 * 1e-13 - 2e6;
        assert!((hpd_ln_det(&m).unwrap() - det.ln()).abs() < 1e-12);
    }

    #[test]
    fn solve_inverts() {
        let m = random_hpd(4, 9);
        let f = HpdFactor::new(&m).unwrap();
        let b = complex_gaussian(&mut rng(1), 4, 2, 1.0);
        let x = f.solve(&b);
        assert!(frobenius_sq(&(&m * x - b)) < 1e-20);
    }

    #[test]
    fn rejects_indefinite() {
        let mut m = identity(2);
        m[(1, 1)] = Complex64::new(-1.0, 0.0);
        assert!(HpdFactor::new(&m).is_err());
    }
}
