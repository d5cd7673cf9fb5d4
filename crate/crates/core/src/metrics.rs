//! Echo-cancellation quality measures.

use crate::error::{check_len, FlafError, Result};

/// Ceiling (and floor, negated) applied to ERLE values with a zero energy.
pub const ERLE_CLAMP_DB: f64 = 80.0;

/// Reported value for a perfect weight estimate.
pub const MISALIGNMENT_FLOOR_DB: f64 = -300.0;

pub const DEFAULT_ERLE_WINDOW: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct ErleTrace {
    pub window: usize,
    /// Samples excluded from `mean_db`.
    pub warmup: usize,
    /// Per-sample ERLE in dB from causal sliding-window energies.
    pub values: Vec<f64>,
    /// Whole-run energy ratio after the warm-up prefix.
    pub mean_db: f64,
    /// Whole-run energy ratio including the warm-up prefix.
    pub mean_db_full: f64,
    /// Set when any value hit the ±80 dB clamp.
    pub clamped: bool,
}

fn ratio_db(num: f64, den: f64, clamped: &mut bool) -> f64 {
    if den <= 0.0 {
        *clamped = true;
        return ERLE_CLAMP_DB;
    }
    if num <= 0.0 {
        *clamped = true;
        return -ERLE_CLAMP_DB;
    }
    let v = 10.0 * (num / den).log10();
    if v.abs() > ERLE_CLAMP_DB {
        *clamped = true;
    }
    v.clamp(-ERLE_CLAMP_DB, ERLE_CLAMP_DB)
}

/// ERLE of microphone signal `d` against residual `e`.
pub fn erle(d: &[f64], e: &[f64], window: usize, warmup: usize) -> Result<ErleTrace> {
    check_len(d.len(), e.len())?;
    if window == 0 {
        return Err(FlafError::InvalidInput("ERLE window must be >= 1".into()));
    }
    let mut clamped = false;
    let mut values = Vec::with_capacity(d.len());
    let energy = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    // Direct window sums: running add/subtract loses precision after large
    // energy drops.
    for n in 0..d.len() {
        let start = (n + 1).saturating_sub(window);
        let sd = energy(&d[start..=n]);
        let se = energy(&e[start..=n]);
        values.push(ratio_db(sd, se, &mut clamped));
    }
    let start = warmup.min(d.len());
    let mean_db = ratio_db(energy(&d[start..]), energy(&e[start..]), &mut clamped);
    let mean_db_full = ratio_db(energy(d), energy(e), &mut clamped);
    Ok(ErleTrace { window, warmup, values, mean_db, mean_db_full, clamped })
}

/// Normalized weight error `20·log10(‖w_est − w_true‖ / ‖w_true‖)` in dB.
/// The shorter vector is zero-padded.
pub fn misalignment(w_est: &[f64], w_true: &[f64]) -> Result<f64> {
    let n = w_est.len().max(w_true.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let ref_norm = w_true.iter().map(|v| v * v).sum::<f64>().sqrt();
    if ref_norm == 0.0 {
        return Err(FlafError::InvalidInput("reference weights have zero norm".into()));
    }
    let err = (0..n).map(|i| (at(w_est, i) - at(w_true, i)).powi(2)).sum::<f64>().sqrt();
    if err == 0.0 {
        return Ok(MISALIGNMENT_FLOOR_DB);
    }
    Ok((20.0 * (err / ref_norm).log10()).max(MISALIGNMENT_FLOOR_DB))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_signals_are_zero_db() {
        let d: Vec<f64> = (0..500).map(|i| (i as f64 * 0.1).sin()).collect();
        let t = erle(&d, &d, 64, 0).unwrap();
        assert!(t.values.iter().skip(1).all(|v| v.abs() < 1e-9));
        assert!(t.mean_db.abs() < 1e-12);
    }

    #[test]
    fn twenty_db_ratio() {
        let d: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let e: Vec<f64> = d.iter().map(|v| 0.1 * v).collect();
        let t = erle(&d, &e, 100, 10).unwrap();
        assert!(t.values.iter().all(|v| (v - 20.0).abs() < 1e-9));
        assert!((t.mean_db - 20.0).abs() < 1e-12);
    }

    #[test]
    fn zero_error_clamps() {
        let d = vec![0.5; 100];
        let t = erle(&d, &vec![0.0; 100], 10, 0).unwrap();
        assert!(t.clamped);
        assert!(t.values.iter().all(|v| *v == ERLE_CLAMP_DB));
        assert!(erle(&d, &d[1..], 10, 0).is_err());
        assert!(erle(&d, &d, 0, 0).is_err());
    }

    #[test]
    fn misalignment_values() {
        let w = [1.0, -2.0, 0.5];
        assert_eq!(misalignment(&w, &w).unwrap(), MISALIGNMENT_FLOOR_DB);
        assert!(misalignment(&[0.0; 3], &w).unwrap().abs() < 1e-12);
        let scaled: Vec<f64> = w.iter().map(|v| 0.9 * v).collect();
        assert!((misalignment(&scaled, &w).unwrap() + 20.0).abs() < 1e-9);
        assert!(misalignment(&w, &[0.0; 3]).is_err());
        assert!((misalignment(&[1.0], &[1.0, 1.0]).unwrap() - 20.0 * 0.5f64.sqrt().log10()).abs() < 1e-12);
    }
}
