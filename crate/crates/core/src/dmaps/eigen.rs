//! Leading eigenpairs of the Markov matrix through its symmetric conjugate.

use crate::error::{Error, Result};

use super::kernel::MarkovKernel;

/// Top `k` eigenpairs of a dense symmetric `n×n` matrix (row-major),
/// largest first. Eigenvectors are returned as unit vectors.
pub fn symmetric_top_eigenpairs(a: Vec<f64>, n: usize, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if k == 0 || k > n || a.len() != n * n {
        return Err(Error::Domain(format!("cannot take {k} eigenpairs of a {n}x{n} matrix")));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let mat = faer::Mat::<f64>::from_fn(n, n, |i, j| a[i * n + j]);
    drop(a);
    let eig = mat
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigensolver did not converge: {e:?}")))?;
    let (s, u) = (eig.S(), eig.U());
    // ascending order from the solver
    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    for c in (n - k..n).rev() {
        values.push(s[c]);
        vectors.push((0..n).map(|i| u[(i, c)]).collect());
    }
    Ok((values, vectors))
}

/// Flips `v` so its first component with magnitude above `tol` is positive.
pub fn fix_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-10 * scale;
    if let Some(first) = v.iter().find(|x| x.abs() > tol) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Right eigenpairs of `W = D⁻¹Ã`, descending, each eigenvector scaled to
/// Euclidean norm `√M` (so the trivial one is identically 1).
pub fn eigendecompose(kernel: &MarkovKernel, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = kernel.size;
    let (values, vectors) = symmetric_top_eigenpairs(kernel.symmetric_conjugate(), m, k)?;
    let inv_sqrt_d: Vec<f64> = kernel.row_sums.iter().map(|d| d.sqrt().recip()).collect();
    let target = (m as f64).sqrt();
    let mut phis = Vec::with_capacity(k);
    for v in vectors {
        let mut phi: Vec<f64> = v.iter().zip(&inv_sqrt_d).map(|(x, s)| x * s).collect();
        let norm = phi.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::Numerical("zero eigenvector".into()));
        }
        phi.iter_mut().for_each(|x| *x *= target / norm);
        fix_sign(&mut phi);
        phis.push(phi);
    }
    if let Some(l) = values.iter().find(|l| l.abs() > 1.0 + 1e-8) {
        return Err(Error::Numerical(format!("Markov eigenvalue {l} exceeds one")));
    }
    Ok((values, phis))
}
