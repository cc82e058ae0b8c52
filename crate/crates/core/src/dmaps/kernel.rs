//! Gaussian kernel, α = 1 density normalization and the Markov matrix.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Pairwise-distance sample size above which the median is subsampled.
const EXACT_MEDIAN_LIMIT: usize = 4000;

/// Squared ℓ² distance, accumulated in four interleaved lanes.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += (x - y) * (x - y);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn kernel_value(d2: f64, epsilon: f64) -> f64 {
    (-d2 / (2.0 * epsilon)).exp()
}

/// Dense symmetric kernel `A_ij = exp(-|f_i - f_j|² / 2ε)`, row-major.
pub fn build_kernel(fields: &[Vec<f64>], epsilon: f64) -> Result<Vec<f64>> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Domain(format!("kernel scale must be positive, got {epsilon}")));
    }
    let m = fields.len();
    let mut a = vec![0.0; m * m];
    a.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        for j in i..m {
            row[j] = if i == j {
                1.0
            } else {
                kernel_value(squared_distance(&fields[i], &fields[j]), epsilon)
            };
        }
    });
    for i in 0..m {
        for j in 0..i {
            a[i * m + j] = a[j * m + i];
        }
    }
    Ok(a)
}

/// Median of pairwise squared distances. Above the exact limit the median is
/// taken over pairs drawn from an evenly strided subset.
pub fn choose_epsilon(fields: &[Vec<f64>]) -> Result<f64> {
    let m = fields.len();
    if m < 2 {
        return Err(Error::Empty("at least two fields are needed to choose a kernel scale".into()));
    }
    let idx: Vec<usize> = if m <= EXACT_MEDIAN_LIMIT {
        (0..m).collect()
    } else {
        (0..EXACT_MEDIAN_LIMIT).map(|k| k * m / EXACT_MEDIAN_LIMIT).collect()
    };
    let mut d2: Vec<f64> = idx
        .par_iter()
        .enumerate()
        .flat_map_iter(|(a, &i)| {
            idx[a + 1..]
                .iter()
                .map(move |&j| squared_distance(&fields[i], &fields[j]))
        })
        .collect();
    let mid = d2.len() / 2;
    let (_, median, _) = d2.select_nth_unstable_by(mid, f64::total_cmp);
    let eps = *median;
    if !(eps > 0.0) {
        return Err(Error::Degenerate("all fields coincide; kernel scale is zero".into()));
    }
    Ok(eps)
}

/// α = 1 normalized kernel together with the degrees needed to apply the
/// same normalization to new points.
#[derive(Debug, Clone)]
pub struct MarkovKernel {
    pub size: usize,
    /// `P_ii = Σ_j A_ij`
    pub degrees: Vec<f64>,
    /// Row sums of `Ã = P⁻¹ A P⁻¹`.
    pub row_sums: Vec<f64>,
    /// `Ã`, row-major and symmetric.
    pub normalized: Vec<f64>,
}

impl MarkovKernel {
    /// Row-stochastic `W = D⁻¹ Ã`.
    pub fn transition_matrix(&self) -> Vec<f64> {
        let m = self.size;
        let mut w = self.normalized.clone();
        for (row, d) in w.chunks_mut(m).zip(&self.row_sums) {
            row.iter_mut().for_each(|x| *x /= d);
        }
        w
    }

    /// `S = D^-½ Ã D^-½`, similar to `W` and symmetric.
    pub fn symmetric_conjugate(&self) -> Vec<f64> {
        let m = self.size;
        let s: Vec<f64> = self.row_sums.iter().map(|d| d.sqrt().recip()).collect();
        let mut out = self.normalized.clone();
        for (i, row) in out.chunks_mut(m).enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x *= s[i] * s[j];
            }
        }
        out
    }
}

/// Applies the α-normalization `Ã = P^-α A P^-α` and records row sums.
pub fn normalize(a: Vec<f64>, m: usize, alpha: f64) -> Result<MarkovKernel> {
    if a.len() != m * m {
        return Err(Error::Domain(format!("kernel has {} entries, expected {m}x{m}", a.len())));
    }
    let degrees: Vec<f64> = a.chunks(m).map(|r| r.iter().sum()).collect();
    if let Some(i) = degrees.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::Numerical(format!("kernel row {i} has zero degree")));
    }
    let scale: Vec<f64> = degrees.iter().map(|d| d.powf(-alpha)).collect();
    let mut normalized = a;
    for (i, row) in normalized.chunks_mut(m).enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x *= scale[i] * scale[j];
        }
    }
    let row_sums: Vec<f64> = normalized.chunks(m).map(|r| r.iter().sum()).collect();
    if let Some(i) = row_sums.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::Numerical(format!("normalized kernel row {i} has zero sum")));
    }
    Ok(MarkovKernel {
        size: m,
        degrees,
        row_sums,
        normalized,
    })
}
