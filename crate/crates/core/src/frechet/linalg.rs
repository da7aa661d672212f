//! Dense square matrices and the symmetric eigensolver behind the SPD square root.

use std::ops::{Index, IndexMut};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-major `n × n` matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Matrix::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::invalid(format!(
                "{} entries do not form a {n}x{n} matrix",
                data.len()
            )));
        }
        Ok(Matrix { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.n;
        let mut t = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n, "dimension mismatch in matmul");
        let n = self.n;
        let mut out = vec![0.0; n * n];
        out.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let b = &other.data[k * n..(k + 1) * n];
                for (r, &bv) in row.iter_mut().zip(b) {
                    *r += a * bv;
                }
            }
        });
        Matrix { n, data: out }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        Matrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        Matrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> Matrix {
        Matrix {
            n: self.n,
            data: self.data.iter().map(|a| a * k).collect(),
        }
    }

    pub fn add_diagonal(&mut self, eps: f64) {
        for i in 0..self.n {
            self[(i, i)] += eps;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Replaces the matrix by `(A + Aᵀ) / 2`.
    pub fn symmetrize(&mut self) {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let m = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = m;
                self[(j, i)] = m;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

pub const JACOBI_TOLERANCE: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues (unsorted) and, when requested, eigenvectors as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Option<Matrix>,
    pub sweeps: usize,
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps over all off-diagonal pairs until the off-diagonal Frobenius norm
/// falls below `1e-12 · ‖A‖_F`, or 100 sweeps have run. Only the upper
/// triangle's symmetric counterpart is assumed; call `symmetrize` first.
pub fn symmetric_eigen(a: &Matrix, with_vectors: bool) -> SymmetricEigen {
    let n = a.dim();
    let mut a = a.clone();
    let mut v = with_vectors.then(|| Matrix::identity(n));
    let norm = a.frobenius();
    let target = JACOBI_TOLERANCE * norm;
    let mut sweeps = 0;

    while sweeps < JACOBI_MAX_SWEEPS && off_diagonal_norm(&a) > target {
        sweeps += 1;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    let new_rp = c * arp - s * arq;
                    let new_rq = s * arp + c * arq;
                    a[(r, p)] = new_rp;
                    a[(p, r)] = new_rp;
                    a[(r, q)] = new_rq;
                    a[(q, r)] = new_rq;
                }
                a[(p, p)] -= t * apq;
                a[(q, q)] += t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;

                if let Some(v) = v.as_mut() {
                    for r in 0..n {
                        let vrp = v[(r, p)];
                        let vrq = v[(r, q)];
                        v[(r, p)] = c * vrp - s * vrq;
                        v[(r, q)] = s * vrp + c * vrq;
                    }
                }
            }
        }
    }

    SymmetricEigen {
        values: (0..n).map(|i| a[(i, i)]).collect(),
        vectors: v,
        sweeps,
    }
}

/// Relative asymmetry tolerated on input to `sqrt_spd`.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;
/// Eigenvalues below `-PSD_TOLERANCE · trace` mark a matrix as indefinite.
pub const PSD_TOLERANCE: f64 = 1e-6;

fn check_symmetric(a: &Matrix) -> Result<()> {
    if !a.is_finite() {
        return Err(Error::invalid("matrix contains non-finite entries"));
    }
    let scale = a.frobenius().max(1e-300);
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (max |a_ij - a_ji| = {asym:e})"
        )));
    }
    Ok(())
}

/// Eigenvalues clamped at zero after checking they are not meaningfully negative.
fn checked_nonnegative(values: &[f64], trace: f64) -> Result<Vec<f64>> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE * trace.abs() || (min < 0.0 && trace <= 0.0) {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
            trace,
        });
    }
    Ok(values.iter().map(|&l| l.max(0.0)).collect())
}

/// Principal square root of a symmetric positive semidefinite matrix via
/// `V · diag(√λ) · Vᵀ`, with slightly negative eigenvalues clamped to zero.
pub fn sqrt_spd(a: &Matrix) -> Result<Matrix> {
    check_symmetric(a)?;
    let mut sym = a.clone();
    sym.symmetrize();
    let eig = symmetric_eigen(&sym, true);
    let lambdas = checked_nonnegative(&eig.values, sym.trace())?;
    let v = eig.vectors.expect("vectors requested");
    let n = sym.dim();
    let roots: Vec<f64> = lambdas.iter().map(|l| l.sqrt()).collect();
    // S = V diag(r) Vᵀ, built as (V diag(r)) · Vᵀ.
    let mut vr = v.clone();
    for i in 0..n {
        for j in 0..n {
            vr[(i, j)] *= roots[j];
        }
    }
    let mut s = vr.matmul(&v.transpose());
    s.symmetrize();
    Ok(s)
}

/// `Σ √λ_i` over the eigenvalues of a symmetric PSD matrix, i.e. `Tr(A^{1/2})`.
pub fn trace_sqrt_spd(a: &Matrix) -> Result<f64> {
    check_symmetric(a)?;
    let mut sym = a.clone();
    sym.symmetrize();
    let eig = symmetric_eigen(&sym, false);
    let lambdas = checked_nonnegative(&eig.values, sym.trace())?;
    Ok(lambdas.iter().map(|l| l.sqrt()).sum())
}
