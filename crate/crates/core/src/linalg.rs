//! Dense complex linear algebra services: non-restarted GMRES, dense spectra,
//! SVD condition numbers and cached sparse Cholesky solves for mass matrices.

use faer::c64;
use faer::prelude::*;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};

#[derive(Debug, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is not symmetric positive definite")]
    NotSpd,
    #[error("eigenvalue iteration failed to converge")]
    EigenFailed,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Result of a GMRES solve.
#[derive(Debug, Clone)]
pub struct GmresReport {
    pub solution: Vec<c64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    /// Relative residual after each Arnoldi step.
    pub residual_history: Vec<f64>,
}

/// Full spectrum and 2-norm condition number of a dense matrix.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<c64>,
    pub condition_number: f64,
}

pub fn dot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm2(a: &[c64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Non-restarted GMRES with modified Gram-Schmidt and zero initial guess.
///
/// One iteration is one Arnoldi step, i.e. one application of the operator.
/// A zero right-hand side short-circuits to the zero solution. Happy
/// breakdown is treated as convergence.
pub fn gmres(
    apply: impl Fn(&[c64]) -> Vec<c64>,
    rhs: &[c64],
    tol: f64,
    max_iter: usize,
) -> GmresReport {
    let n = rhs.len();
    let bnorm = norm2(rhs);
    if bnorm == 0.0 {
        return GmresReport {
            solution: vec![c64::new(0.0, 0.0); n],
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
            residual_history: Vec::new(),
        };
    }
    let max_iter = max_iter.min(n);

    // Krylov basis, Hessenberg columns, Givens rotations, rotated rhs.
    let mut basis: Vec<Vec<c64>> = Vec::with_capacity(max_iter + 1);
    let mut hess: Vec<Vec<c64>> = Vec::with_capacity(max_iter);
    let mut cos: Vec<f64> = Vec::with_capacity(max_iter);
    let mut sin: Vec<c64> = Vec::with_capacity(max_iter);
    let mut g: Vec<c64> = vec![c64::new(0.0, 0.0); max_iter + 1];
    g[0] = c64::new(bnorm, 0.0);
    basis.push(rhs.iter().map(|x| x / bnorm).collect());

    let mut history = Vec::new();
    let mut converged = false;
    let mut steps = 0usize;

    for j in 0..max_iter {
        steps = j + 1;
        let mut w = apply(&basis[j]);
        assert_eq!(w.len(), n, "operator changed dimension");

        let mut h = vec![c64::new(0.0, 0.0); j + 2];
        for (i, v) in basis.iter().enumerate() {
            let hij = dot(v, &w);
            h[i] = hij;
            for (wk, vk) in w.iter_mut().zip(v) {
                *wk -= hij * vk;
            }
        }
        let wnorm = norm2(&w);
        h[j + 1] = c64::new(wnorm, 0.0);

        // Apply accumulated rotations to the new column.
        for i in 0..j {
            let t = cos[i] * h[i] + sin[i] * h[i + 1];
            h[i + 1] = -sin[i].conj() * h[i] + cos[i] * h[i + 1];
            h[i] = t;
        }
        // New rotation eliminating the subdiagonal.
        let denom = (h[j].norm_sqr() + wnorm * wnorm).sqrt();
        let (c, s) = if denom == 0.0 {
            (1.0, c64::new(0.0, 0.0))
        } else if h[j].norm() == 0.0 {
            (0.0, c64::new(1.0, 0.0))
        } else {
            let c = h[j].norm() / denom;
            let s = (h[j] / h[j].norm()) * (wnorm / denom);
            (c, s)
        };
        cos.push(c);
        sin.push(s);
        h[j] = c * h[j] + s * h[j + 1];
        h[j + 1] = c64::new(0.0, 0.0);
        let gt = c * g[j] + s * g[j + 1];
        g[j + 1] = -s.conj() * g[j] + c * g[j + 1];
        g[j] = gt;

        hess.push(h);
        let rel = g[j + 1].norm() / bnorm;
        history.push(rel);

        let happy_breakdown = wnorm < 1e-14 * bnorm;
        if rel <= tol || happy_breakdown {
            converged = true;
            break;
        }
        basis.push(w.iter().map(|x| x / wnorm).collect());
    }

    // Back substitution for the least-squares coefficients.
    let m = steps;
    let mut y = vec![c64::new(0.0, 0.0); m];
    for i in (0..m).rev() {
        let mut sum = g[i];
        for (kk, yk) in y.iter().enumerate().take(m).skip(i + 1) {
            sum -= hess[kk][i] * yk;
        }
        y[i] = sum / hess[i][i];
    }
    let mut x = vec![c64::new(0.0, 0.0); n];
    for (yk, v) in y.iter().zip(&basis) {
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi += yk * vi;
        }
    }

    GmresReport {
        solution: x,
        iterations: m,
        relative_residual: history.last().copied().unwrap_or(0.0),
        converged,
        residual_history: history,
    }
}

/// Full spectrum of a dense complex matrix.
pub fn eigenvalues(a: MatRef<'_, c64>) -> Result<Vec<c64>, LinalgError> {
    a.eigenvalues().map_err(|_| LinalgError::EigenFailed)
}

/// 2-norm condition number from the full SVD; a singular matrix reports
/// infinity.
pub fn condition_number(a: MatRef<'_, c64>) -> f64 {
    let svd = match a.svd() {
        Ok(svd) => svd,
        Err(_) => return f64::INFINITY,
    };
    let s = svd.S();
    let n = Ord::min(a.nrows(), a.ncols());
    let smax = s[0].re;
    let smin = s[n - 1].re;
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Largest singular value.
pub fn spectral_norm(a: MatRef<'_, c64>) -> f64 {
    match a.svd() {
        Ok(svd) => svd.S()[0].re,
        Err(_) => f64::NAN,
    }
}

pub fn spectrum(a: MatRef<'_, c64>) -> Result<SpectrumResult, LinalgError> {
    Ok(SpectrumResult {
        eigenvalues: eigenvalues(a)?,
        condition_number: condition_number(a),
    })
}

/// Dense LU solve, used as the direct-solver oracle and for small systems.
pub fn lu_solve(a: MatRef<'_, c64>, b: &[c64]) -> Vec<c64> {
    let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let x = a.partial_piv_lu().solve(&rhs);
    (0..b.len()).map(|i| x[(i, 0)]).collect()
}

/// Cached Cholesky factorization of a sparse SPD matrix (real), applied to
/// complex right-hand sides by solving the real and imaginary parts jointly.
pub struct SpdFactor {
    n: usize,
    llt: Llt<usize, f64>,
}

impl SpdFactor {
    pub fn new(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, LinalgError> {
        let entries: Vec<Triplet<usize, usize, f64>> = triplets
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let mat =
            SparseColMat::try_new_from_triplets(n, n, &entries).map_err(|_| LinalgError::NotSpd)?;
        let llt = mat
            .sp_cholesky(faer::Side::Lower)
            .map_err(|_| LinalgError::NotSpd)?;
        Ok(Self { n, llt })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves M x = b for a complex right-hand side.
    pub fn solve_vec(&self, b: &[c64]) -> Vec<c64> {
        assert_eq!(b.len(), self.n);
        let rhs = Mat::<f64>::from_fn(self.n, 2, |i, j| if j == 0 { b[i].re } else { b[i].im });
        let x = self.llt.solve(&rhs);
        (0..self.n)
            .map(|i| c64::new(x[(i, 0)], x[(i, 1)]))
            .collect()
    }

    /// Solves M X = B columnwise for a dense complex right-hand side.
    pub fn solve_mat(&self, b: MatRef<'_, c64>) -> Mat<c64> {
        assert_eq!(b.nrows(), self.n);
        let ncols = b.ncols();
        let mut rhs = Mat::<f64>::zeros(self.n, 2 * ncols);
        for j in 0..ncols {
            for i in 0..self.n {
                rhs[(i, 2 * j)] = b[(i, j)].re;
                rhs[(i, 2 * j + 1)] = b[(i, j)].im;
            }
        }
        let x = self.llt.solve(&rhs);
        Mat::from_fn(self.n, ncols, |i, j| {
            c64::new(x[(i, 2 * j)], x[(i, 2 * j + 1)])
        })
    }
}

/// Solve against a cached SPD factorization; thin naming wrapper used by the
/// operator-composition code.
pub fn mass_solve(factor: &SpdFactor, b: &[c64]) -> Vec<c64> {
    factor.solve_vec(b)
}
