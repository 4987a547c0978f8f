//! Dense linear algebra helpers on top of nalgebra.

use std::io::Write;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, SVD};

use crate::error::{Result, SvError};

fn max_singular(sv: &DVector<f64>) -> f64 {
    sv.iter().fold(0.0_f64, |m, s| m.max(*s))
}

/// Numerical rank: singular values above `rel_tol · σ_max`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let cut = rel_tol * max_singular(&sv);
    sv.iter().filter(|s| **s > cut && **s > 0.0).count()
}

/// Orthonormal basis (columns) of the row space of `m`.
pub fn row_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if m.nrows() == 0 || n == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = SVD::new(m.clone(), false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let cut = rel_tol * max_singular(&svd.singular_values);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > cut && svd.singular_values[i] > 0.0)
        .collect();
    DMatrix::from_fn(n, keep.len(), |i, j| v_t[(keep[j], i)])
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// orthonormal columns of `basis`, via Householder reflections.
pub fn orthonormal_complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let n = basis.nrows();
    let r = basis.ncols();
    let mut work = basis.clone();
    let mut reflectors: Vec<DVector<f64>> = Vec::with_capacity(r);
    for j in 0..r {
        let mut v = DVector::zeros(n);
        for i in j..n {
            v[i] = work[(i, j)];
        }
        let alpha = v.norm();
        if alpha == 0.0 {
            reflectors.push(DVector::zeros(n));
            continue;
        }
        let sign = if v[j] >= 0.0 { 1.0 } else { -1.0 };
        v[j] += sign * alpha;
        let vn = v.norm();
        v /= vn;
        for c in j..r {
            let dot: f64 = (j..n).map(|i| v[i] * work[(i, c)]).sum();
            for i in j..n {
                work[(i, c)] -= 2.0 * dot * v[i];
            }
        }
        reflectors.push(v);
    }
    // Q = H_0 H_1 ... H_{r-1}; the trailing n - r columns of Q span the complement.
    let mut q = DMatrix::zeros(n, n - r);
    for c in 0..(n - r) {
        q[(r + c, c)] = 1.0;
    }
    for v in reflectors.iter().rev() {
        for c in 0..(n - r) {
            let dot: f64 = (0..n).map(|i| v[i] * q[(i, c)]).sum();
            if dot != 0.0 {
                for i in 0..n {
                    q[(i, c)] -= 2.0 * dot * v[i];
                }
            }
        }
    }
    q
}

/// Orthonormal basis (columns) of the null space of `m`.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    orthonormal_complement(&row_space(m, rel_tol))
}

/// Minimum-norm least-squares solution of `m x = b`; singular values below
/// `rel_tol · σ_max` are treated as zero. Also returns the numerical rank.
pub fn min_norm_lstsq(m: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> Result<(DVector<f64>, usize)> {
    if m.ncols() == 0 {
        return Ok((DVector::zeros(0), 0));
    }
    let svd = SVD::new(m.clone(), true, true);
    let cut = rel_tol * max_singular(&svd.singular_values);
    let r = svd.singular_values.iter().filter(|s| **s > cut && **s > 0.0).count();
    let x = svd
        .solve(b, cut.max(f64::MIN_POSITIVE))
        .map_err(|e| SvError::Numerical(e.to_string()))?;
    Ok((x, r))
}

/// Cholesky factorization of a symmetric positive-definite matrix.
pub fn cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| SvError::Numerical(format!("{what} is not positive definite")))
}

/// All eigenpairs of the symmetric-definite pencil `(s, m)`, eigenvalues ascending.
/// Eigenvectors are `m`-orthonormal columns.
pub fn generalized_symmetric_eigen(s: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = s.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let chol = cholesky(m.clone(), "mass matrix of the pencil")?;
    let l = chol.l();
    // C = L^{-1} S L^{-T}
    let mut c = s.clone();
    if !l.solve_lower_triangular_mut(&mut c) {
        return Err(SvError::Numerical("triangular solve failed".into()));
    }
    let mut ct = c.transpose();
    if !l.solve_lower_triangular_mut(&mut ct) {
        return Err(SvError::Numerical("triangular solve failed".into()));
    }
    let sym = (&ct + ct.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut y = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    // x = L^{-T} y
    let lt = l.transpose();
    if !lt.solve_upper_triangular_mut(&mut y) {
        return Err(SvError::Numerical("triangular solve failed".into()));
    }
    Ok((values, y))
}

/// Smallest eigenvalue of the symmetric-definite pencil `(s, m)` by block inverse
/// iteration with Rayleigh–Ritz projection. `s` must be positive definite.
pub fn smallest_eigen_inverse_iteration(
    s: &DMatrix<f64>,
    m: &DMatrix<f64>,
    block: usize,
    rel_tol: f64,
    max_iter: usize,
) -> Result<(f64, DVector<f64>)> {
    let n = s.nrows();
    if n == 0 {
        return Err(SvError::InvalidArgument("empty pencil".into()));
    }
    let block = block.clamp(1, n);
    let chol = cholesky(s.clone(), "operator of the inverse iteration")?;
    // Deterministic start: smooth-ish columns plus a pseudo-random component.
    let mut x = DMatrix::from_fn(n, block, |i, j| {
        let t = (i as f64 + 1.0) * (j as f64 + 1.0);
        (t * 0.7548776662466927).fract() - 0.5 + if i % block == j { 1.0 } else { 0.0 }
    });
    let mut last = f64::INFINITY;
    for _ in 0..max_iter {
        let y = chol.solve(&(m * &x));
        // Rayleigh–Ritz on span(y).
        let sy = s * &y;
        let my = m * &y;
        let small_s = y.transpose() * &sy;
        let small_m = y.transpose() * &my;
        let small_s = (&small_s + small_s.transpose()) * 0.5;
        let small_m = (&small_m + small_m.transpose()) * 0.5;
        let (vals, vecs) = generalized_symmetric_eigen(&small_s, &small_m)?;
        x = &y * &vecs;
        let lambda = vals[0];
        if (lambda - last).abs() <= rel_tol * lambda.abs() {
            let v = x.column(0).into_owned();
            return Ok((lambda, v));
        }
        last = lambda;
    }
    Err(SvError::Numerical(format!(
        "inverse iteration did not converge in {max_iter} iterations"
    )))
}

/// Write a dense matrix in MatrixMarket coordinate format, skipping exact zeros.
pub fn write_matrix_market(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let nnz = m.iter().filter(|v| **v != 0.0).count();
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", m.nrows(), m.ncols(), nnz)?;
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if v != 0.0 {
                writeln!(out, "{} {} {:.17e}", r + 1, c + 1, v)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
