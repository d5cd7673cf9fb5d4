//! Overlap-save frequency-domain FLAF.
//!
//! Each branch is an OS-FDAF: the input window of `n_fft ≥ M + L` samples is
//! transformed once per block, multiplied by the branch weights and the last
//! `L` output samples are kept. Updates use per-bin step sizes
//! `μ / (ε + B(m))` with `B(m) = λ·B(m) + (1 − λ)·|X(m)|²`.

use crate::engine::{BranchSpec, FilterParams, FlafEngine, SpectralBranch};
use crate::error::{check_len, Result};
use crate::expansions::ExpansionConfig;
use crate::ops::OpCounter;
use crate::spectral::{gradient_constrain, OverlapSaveBuffer, Spectrum, Transform};

/// One overlap-save adaptive branch.
#[derive(Debug, Clone)]
pub struct FreqBranch {
    transform: Transform,
    weights: Spectrum,
    power: Vec<f64>,
    mu: f64,
    lambda: f64,
    reg: f64,
    constrained: bool,
    buf: OverlapSaveBuffer,
    input: Spectrum,
    ops: OpCounter,
}

impl FreqBranch {
    pub fn weights(&self) -> &Spectrum {
        &self.weights
    }

    /// Input spectrum of the most recent block.
    pub fn input_spectrum(&self) -> &Spectrum {
        &self.input
    }

    /// Smoothed per-bin input power.
    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    pub fn is_constrained(&self) -> bool {
        self.constrained
    }
}

impl SpectralBranch for FreqBranch {
    type Probe = OverlapSaveBuffer;

    fn build(spec: BranchSpec) -> Result<Self> {
        let n_fft = (spec.filter_len + spec.hop).next_power_of_two();
        let transform = Transform::new(n_fft)?;
        let half = n_fft / 2 + 1;
        Ok(Self {
            transform,
            weights: Spectrum::zeros(n_fft),
            power: vec![spec.power_init; half],
            mu: spec.mu,
            lambda: spec.lambda,
            reg: spec.reg,
            constrained: spec.constrained,
            buf: OverlapSaveBuffer::new(n_fft, spec.hop, spec.filter_len)?,
            input: Spectrum::zeros(n_fft),
            ops: OpCounter::default(),
        })
    }

    fn transform(&self) -> &Transform {
        &self.transform
    }

    fn filter_len(&self) -> usize {
        self.buf.filter_len()
    }

    fn hop(&self) -> usize {
        self.buf.hop()
    }

    fn filter(&mut self, block: &[f64]) -> Result<Vec<f64>> {
        self.buf.push(block)?;
        self.input = self.transform.forward(self.buf.history())?;
        let y = self.transform.inverse(&self.input.mul(&self.weights)?)?;
        let n = self.transform.n_fft();
        self.ops.charge_transform(n);
        self.ops.charge_transform(n);
        self.ops += OpCounter::new(4 * self.input.len() as u64, 2 * self.input.len() as u64, 0);
        Ok(y[n - self.buf.hop()..].to_vec())
    }

    fn adapt(&mut self, error: &Spectrum) -> Result<()> {
        check_len(self.transform.n_fft(), error.n_fft())?;
        let mut grad = Spectrum::zeros(self.transform.n_fft());
        for (m, g) in grad.bins.iter_mut().enumerate() {
            let x = self.input.bins[m];
            let b = self.lambda * self.power[m] + (1.0 - self.lambda) * x.norm_sqr();
            self.power[m] = b;
            let step = self.mu / (self.reg + b);
            *g = x.conj() * error.bins[m] * step;
        }
        let bins = grad.len() as u64;
        self.ops += OpCounter::new(10 * bins, 5 * bins, 0);
        if self.constrained {
            grad = gradient_constrain(&self.transform, &grad, self.buf.filter_len())?;
            self.ops.charge_transform(self.transform.n_fft());
            self.ops.charge_transform(self.transform.n_fft());
        }
        self.weights.add_assign(&grad)
    }

    fn time_weights(&self) -> Result<Vec<f64>> {
        let mut t = self.transform.inverse(&self.weights)?;
        t.truncate(self.buf.filter_len());
        Ok(t)
    }

    fn set_time_weights(&mut self, w: &[f64]) -> Result<()> {
        check_len(self.buf.filter_len(), w.len())?;
        self.weights = self.transform.forward_padded(w)?;
        Ok(())
    }

    fn power(&self) -> &[f64] {
        &self.power
    }

    fn max_weight_abs(&self) -> f64 {
        self.weights.max_abs()
    }

    fn ops(&self) -> OpCounter {
        self.ops
    }

    fn new_probe(&self) -> Result<OverlapSaveBuffer> {
        OverlapSaveBuffer::new(self.transform.n_fft(), self.buf.hop(), self.buf.filter_len())
    }

    fn probe_spectrum(&self, probe: &mut OverlapSaveBuffer, block: &[f64]) -> Result<Spectrum> {
        probe.push(block)?;
        self.transform.forward(probe.history())?.mul(&self.weights)
    }
}

/// Overlap-save frequency-domain FLAF.
pub type FdFlaf = FlafEngine<FreqBranch>;

impl FlafEngine<FreqBranch> {
    /// Zero weights and `B_0(m) = power_init` in every branch. `expansion`
    /// of `None` gives the classical linear OS-FDAF.
    pub fn init(params: FilterParams, expansion: Option<ExpansionConfig>) -> Result<Self> {
        Self::build(params, expansion)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::NonlinearBranch;
    use crate::error::FlafError;

    fn params(m: usize, l: usize) -> FilterParams {
        FilterParams { mu_nl: 0.1, ..FilterParams::new(m, l) }
    }

    #[test]
    fn init_sets_power_and_channel_count() {
        let f = FdFlaf::init(
            FilterParams { mu_lin: 0.01, mu_nl: 0.001, ..FilterParams::new(300, 64) },
            Some(ExpansionConfig::trigonometric(10, 128)),
        )
        .unwrap();
        assert_eq!(f.channel_count(), 20);
        assert!(f.linear_branch().power().iter().all(|&b| b == 1e-3));
        let (wl, wn) = f.equivalent_time_weights().unwrap();
        assert_eq!(wl.len(), 300);
        assert_eq!(wn.len(), 2560);
        assert!(wl.iter().chain(&wn).all(|v| *v == 0.0));
    }

    #[test]
    fn zero_signals_keep_zero_weights() {
        let mut f = FdFlaf::init(params(16, 8), Some(ExpansionConfig::chebyshev(2, 4))).unwrap();
        for _ in 0..5 {
            let (y, e) = f.process_block(&[0.0; 8], &[0.0; 8]).unwrap();
            assert!(y.iter().chain(&e).all(|v| *v == 0.0));
        }
        let (wl, _) = f.equivalent_time_weights().unwrap();
        assert!(wl.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unit_forgetting_keeps_initial_power() {
        let mut f = FdFlaf::init(FilterParams { lambda: 1.0, ..params(8, 4) }, None).unwrap();
        f.process_block(&[0.3, -0.1, 0.8, 0.2], &[0.1, 0.0, 0.4, -0.3]).unwrap();
        assert!(f.linear_branch().power().iter().all(|&b| b == 1e-3));
    }

    #[test]
    fn weights_round_trip() {
        let mut f = FdFlaf::init(params(12, 4), Some(ExpansionConfig::legendre(3, 5))).unwrap();
        let wl: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).cos()).collect();
        let wn: Vec<f64> = (0..15).map(|i| (i as f64 * 0.3).sin()).collect();
        f.set_equivalent_time_weights(&wl, &wn).unwrap();
        let (a, b) = f.equivalent_time_weights().unwrap();
        for (x, y) in a.iter().zip(&wl).chain(b.iter().zip(&wn)) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(f.set_equivalent_time_weights(&wl, &wn[1..]).is_err());
    }

    #[test]
    fn rejects_bad_blocks_and_sizes() {
        assert!(FdFlaf::init(FilterParams::new(4, 8), None).is_err());
        assert!(FdFlaf::init(FilterParams { lambda: 0.0, ..FilterParams::new(8, 4) }, None).is_err());
        let mut f = FdFlaf::init(params(8, 4), None).unwrap();
        assert!(f.process_block(&[0.0; 3], &[0.0; 3]).is_err());
        assert!(f.process_block(&[0.0, f64::NAN, 0.0, 0.0], &[0.0; 4]).is_err());
        assert_eq!(f.skipped_blocks(), 1);
    }

    #[test]
    fn divergence_is_reported() {
        let mut f = FdFlaf::init(FilterParams { mu_lin: 1e9, ..params(8, 4) }, None).unwrap();
        let mut hit = false;
        for k in 0..50 {
            let x: Vec<f64> = (0..4).map(|i| ((k * 4 + i) as f64).sin()).collect();
            let d: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
            if let Err(FlafError::Divergence(_)) = f.process_block(&x, &d) {
                hit = true;
                break;
            }
        }
        assert!(hit);
        assert!(f.diverged());
    }

    #[test]
    fn random_vector_uses_feature_branch() {
        let f = FdFlaf::init(params(8, 4), Some(ExpansionConfig::random_vector(10, 4, 1))).unwrap();
        assert!(matches!(f.nonlinear_branches(), NonlinearBranch::Features(_)));
    }
}
