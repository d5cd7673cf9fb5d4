//! Per-bin input correlation across partitions and its conditioning.
//!
//! For a partitioned filter with `N = M + L` point frames advancing by `L`
//! samples and partitions `p = M / L` hops apart, the vector of bin `m`
//! seen by the `M_P` partitions is
//! `[X_k(m), X_{k−p}(m), …, X_{k−p(M_P−1)}(m)]`. Its normalized correlation
//! matrix is tridiagonal for white input, with off-diagonal magnitude equal
//! to the overlap fraction `L / (M + L) = 1 / (p + 1)`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{FlafError, Result};
use crate::spectral::Transform;

/// Slack allowed on `|α| ≤ 0.5` for statistical estimates.
pub const ALPHA_TOLERANCE: f64 = 0.05;

/// Snapshots required per partition before an estimate is accepted.
pub const MIN_BLOCKS_PER_PARTITION: usize = 10;

#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub bin: usize,
    /// `diag(R)^{-1} R`, unit diagonal.
    pub corr: DMatrix<Complex64>,
    /// Mean of the first super-diagonal of `corr`.
    pub alpha_est: Complex64,
    /// `λ_max / λ_min` of the normalized Hermitian estimate.
    pub cond: f64,
    pub blocks: usize,
}

impl AnalysisReport {
    /// Build a report from per-block snapshot vectors of one bin.
    pub fn from_snapshots(bin: usize, snapshots: &[Vec<Complex64>]) -> Result<Self> {
        let dim = snapshots.first().map(Vec::len).unwrap_or(0);
        if snapshots.is_empty() || dim == 0 {
            return Err(FlafError::InsufficientData("no snapshots".into()));
        }
        if snapshots.iter().any(|v| v.len() != dim) {
            return Err(FlafError::InvalidInput("snapshot dimensions differ".into()));
        }
        let mut r = DMatrix::<Complex64>::zeros(dim, dim);
        for v in snapshots {
            for i in 0..dim {
                for j in 0..dim {
                    r[(i, j)] += v[i] * v[j].conj();
                }
            }
        }
        r /= Complex64::new(snapshots.len() as f64, 0.0);

        let diag: Vec<f64> = (0..dim).map(|i| r[(i, i)].re).collect();
        if diag.iter().any(|d| !(*d > 0.0)) {
            return Err(FlafError::InsufficientData(format!("bin {bin} has zero power")));
        }
        let mut corr = r.clone();
        let mut sym = r;
        for i in 0..dim {
            for j in 0..dim {
                corr[(i, j)] = if i == j {
                    Complex64::new(1.0, 0.0)
                } else {
                    corr[(i, j)] / diag[i]
                };
                sym[(i, j)] /= (diag[i] * diag[j]).sqrt();
            }
        }
        let alpha_est = if dim > 1 {
            (0..dim - 1).map(|i| corr[(i, i + 1)]).sum::<Complex64>() / (dim - 1) as f64
        } else {
            Complex64::new(0.0, 0.0)
        };
        let eig = SymmetricEigen::new(sym).eigenvalues;
        let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(FlafError::IllConditioned(format!(
                "bin {bin}: smallest eigenvalue {min:e}"
            )));
        }
        Ok(Self { bin, corr, alpha_est, cond: max / min, blocks: snapshots.len() })
    }
}

/// Monte-Carlo estimate of the partition correlation for several bins of
/// the stream `x`.
pub fn estimate_bin_correlations(
    x: &[f64],
    filter_len: usize,
    hop: usize,
    partitions: usize,
    bins: &[usize],
    n_blocks: usize,
) -> Result<Vec<AnalysisReport>> {
    if filter_len == 0 || hop == 0 || partitions == 0 {
        return Err(FlafError::InvalidConfig("sizes must be >= 1".into()));
    }
    if filter_len % hop != 0 {
        return Err(FlafError::InvalidConfig(format!(
            "filter length {filter_len} must be a multiple of block length {hop}"
        )));
    }
    let n = filter_len + hop;
    if let Some(b) = bins.iter().find(|&&b| b > n / 2) {
        return Err(FlafError::InvalidConfig(format!("bin {b} beyond {}", n / 2)));
    }
    if n_blocks < MIN_BLOCKS_PER_PARTITION * partitions {
        return Err(FlafError::InsufficientData(format!(
            "{n_blocks} blocks for {partitions} partitions"
        )));
    }
    let p = filter_len / hop;
    let first = p * partitions;
    let last = first + n_blocks - 1;
    if (last + 1) * hop > x.len() {
        return Err(FlafError::InsufficientData(format!(
            "stream of {} samples, need {}",
            x.len(),
            (last + 1) * hop
        )));
    }

    let t = Transform::new(n)?;
    // frame k starts at k·L − M; frames before k = p are never needed
    let frames: Vec<Vec<Complex64>> = (p..=last)
        .map(|k| {
            let start = k * hop - filter_len;
            let s = t.forward(&x[start..start + n])?;
            Ok(bins.iter().map(|&b| s.bins[b]).collect())
        })
        .collect::<Result<_>>()?;
    let frame = |k: usize, bi: usize| frames[k - p][bi];

    bins.iter()
        .enumerate()
        .map(|(bi, &bin)| {
            let snaps: Vec<Vec<Complex64>> = (first..=last)
                .map(|k| (0..partitions).map(|l| frame(k - p * l, bi)).collect())
                .collect();
            AnalysisReport::from_snapshots(bin, &snaps)
        })
        .collect()
}

pub fn estimate_bin_correlation(
    x: &[f64],
    filter_len: usize,
    hop: usize,
    partitions: usize,
    bin: usize,
    n_blocks: usize,
) -> Result<AnalysisReport> {
    let mut v = estimate_bin_correlations(x, filter_len, hop, partitions, &[bin], n_blocks)?;
    Ok(v.remove(0))
}

/// Condition number of the `M_P × M_P` tridiagonal Toeplitz matrix with unit
/// diagonal and off-diagonal `alpha`. Its eigenvalues are
/// `1 + 2|α|·cos(kπ / (M_P + 1))`, `k = 1..M_P`.
pub fn tridiag_condition(partitions: usize, alpha: f64) -> Result<f64> {
    if partitions == 0 {
        return Err(FlafError::InvalidInput("partition count must be >= 1".into()));
    }
    if !(alpha.abs() < 0.5 + ALPHA_TOLERANCE) {
        return Err(FlafError::InvalidInput(format!("|alpha| = {} too large", alpha.abs())));
    }
    if partitions == 1 {
        return Ok(1.0);
    }
    let spread = 2.0 * alpha.abs() * (std::f64::consts::PI / (partitions + 1) as f64).cos();
    let (max, min) = (1.0 + spread, 1.0 - spread);
    if min <= 0.0 {
        return Err(FlafError::IllConditioned(format!(
            "smallest eigenvalue {min:e} for {partitions} partitions"
        )));
    }
    Ok(max / min)
}
