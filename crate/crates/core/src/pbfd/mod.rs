//! Partitioned-block frequency-domain FLAF.
//!
//! A branch of length `F` is split into `M_P = ⌈F / L⌉` partitions of `L`
//! taps (a branch shorter than `L` keeps a single partition of `F` taps).
//! Partition `l` multiplies the input spectrum from `l` hops ago, so output
//! is available after a single hop of `L` samples whatever the partition
//! count. The error spectrum is formed once per block and shared by every
//! partition update.

pub mod analysis;

use std::collections::VecDeque;

use crate::engine::{BranchSpec, FilterParams, FlafEngine, SpectralBranch};
use crate::error::{check_len, FlafError, Result};
use crate::expansions::ExpansionConfig;
use crate::ops::OpCounter;
use crate::spectral::{gradient_constrain, Spectrum, Transform};

pub use analysis::{
    estimate_bin_correlation, estimate_bin_correlations, tridiag_condition, AnalysisReport,
};

/// Sliding time window plus the spectra of its last `depth` positions,
/// newest first.
#[derive(Debug, Clone)]
pub struct SpectralDelayLine {
    window: Vec<f64>,
    hop: usize,
    history: VecDeque<Spectrum>,
}

impl SpectralDelayLine {
    pub fn new(n_fft: usize, hop: usize, depth: usize) -> Self {
        Self {
            window: vec![0.0; n_fft],
            hop,
            history: (0..depth).map(|_| Spectrum::zeros(n_fft)).collect(),
        }
    }

    pub fn push(&mut self, transform: &Transform, block: &[f64]) -> Result<()> {
        check_len(self.hop, block.len())?;
        let n = self.window.len();
        self.window.copy_within(self.hop.., 0);
        self.window[n - self.hop..].copy_from_slice(block);
        let x = transform.forward(&self.window)?;
        self.history.pop_back();
        self.history.push_front(x);
        Ok(())
    }

    /// Spectrum from `lag` hops ago.
    pub fn spectrum(&self, lag: usize) -> &Spectrum {
        &self.history[lag]
    }

    pub fn depth(&self) -> usize {
        self.history.len()
    }
}

/// One partitioned adaptive branch.
#[derive(Debug, Clone)]
pub struct PartitionedBranch {
    transform: Transform,
    filter_len: usize,
    part_len: usize,
    hop: usize,
    partitions: Vec<Spectrum>,
    line: SpectralDelayLine,
    power: Vec<f64>,
    mu: f64,
    lambda: f64,
    reg: f64,
    constrained: bool,
    ops: OpCounter,
}

impl PartitionedBranch {
    pub fn partition_count(&self) -> usize {
        self.partitions.len()
    }

    pub fn part_len(&self) -> usize {
        self.part_len
    }

    pub fn partitions(&self) -> &[Spectrum] {
        &self.partitions
    }

    /// Taps carried by partition `l` (the last one may be short).
    pub fn partition_taps(&self, l: usize) -> usize {
        self.part_len.min(self.filter_len - l * self.part_len)
    }

    fn sum_products(&self, line: &SpectralDelayLine) -> Result<Spectrum> {
        let mut acc = Spectrum::zeros(self.transform.n_fft());
        for (l, w) in self.partitions.iter().enumerate() {
            acc.accumulate_product(line.spectrum(l), w)?;
        }
        Ok(acc)
    }
}

impl SpectralBranch for PartitionedBranch {
    type Probe = SpectralDelayLine;

    fn build(spec: BranchSpec) -> Result<Self> {
        if spec.filter_len == 0 || spec.hop == 0 {
            return Err(FlafError::InvalidConfig("branch length and hop must be >= 1".into()));
        }
        let part_len = spec.filter_len.min(spec.hop);
        let count = spec.filter_len.div_ceil(part_len);
        let n_fft = (part_len + spec.hop).next_power_of_two();
        let transform = Transform::new(n_fft)?;
        Ok(Self {
            filter_len: spec.filter_len,
            part_len,
            hop: spec.hop,
            partitions: vec![Spectrum::zeros(n_fft); count],
            line: SpectralDelayLine::new(n_fft, spec.hop, count),
            power: vec![spec.power_init; n_fft / 2 + 1],
            mu: spec.mu,
            lambda: spec.lambda,
            reg: spec.reg,
            constrained: spec.constrained,
            ops: OpCounter::default(),
            transform,
        })
    }

    fn transform(&self) -> &Transform {
        &self.transform
    }

    fn filter_len(&self) -> usize {
        self.filter_len
    }

    fn hop(&self) -> usize {
        self.hop
    }

    fn filter(&mut self, block: &[f64]) -> Result<Vec<f64>> {
        self.line.push(&self.transform, block)?;
        let y = self.transform.inverse(&self.sum_products(&self.line)?)?;
        let n = self.transform.n_fft();
        let bins = (n / 2 + 1) as u64;
        self.ops.charge_transform(n);
        self.ops.charge_transform(n);
        self.ops += OpCounter::new(4 * bins, 4 * bins, 0) * self.partitions.len() as u64;
        Ok(y[n - self.hop..].to_vec())
    }

    fn adapt(&mut self, error: &Spectrum) -> Result<()> {
        check_len(self.transform.n_fft(), error.n_fft())?;
        let current = self.line.spectrum(0);
        let steps: Vec<f64> = self
            .power
            .iter_mut()
            .zip(&current.bins)
            .map(|(b, x)| {
                *b = self.lambda * *b + (1.0 - self.lambda) * x.norm_sqr();
                self.mu / (self.reg + *b)
            })
            .collect();
        let n = self.transform.n_fft();
        let bins = steps.len() as u64;
        self.ops += OpCounter::new(4 * bins, 2 * bins, 0);
        for l in 0..self.partitions.len() {
            let x = self.line.spectrum(l);
            let mut grad = Spectrum::zeros(n);
            for (m, g) in grad.bins.iter_mut().enumerate() {
                *g = x.bins[m].conj() * error.bins[m] * steps[m];
            }
            self.ops += OpCounter::new(6 * bins, 4 * bins, 0);
            if self.constrained {
                grad = gradient_constrain(&self.transform, &grad, self.partition_taps(l))?;
                self.ops.charge_transform(n);
                self.ops.charge_transform(n);
            }
            self.partitions[l].add_assign(&grad)?;
        }
        Ok(())
    }

    fn time_weights(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.filter_len);
        for (l, w) in self.partitions.iter().enumerate() {
            let t = self.transform.inverse(w)?;
            out.extend_from_slice(&t[..self.partition_taps(l)]);
        }
        Ok(out)
    }

    fn set_time_weights(&mut self, w: &[f64]) -> Result<()> {
        check_len(self.filter_len, w.len())?;
        for (l, chunk) in w.chunks(self.part_len).enumerate() {
            self.partitions[l] = self.transform.forward_padded(chunk)?;
        }
        Ok(())
    }

    fn power(&self) -> &[f64] {
        &self.power
    }

    fn max_weight_abs(&self) -> f64 {
        self.partitions.iter().map(Spectrum::max_abs).fold(0.0, f64::max)
    }

    fn ops(&self) -> OpCounter {
        self.ops
    }

    fn new_probe(&self) -> Result<SpectralDelayLine> {
        Ok(SpectralDelayLine::new(self.transform.n_fft(), self.hop, self.partitions.len()))
    }

    fn probe_spectrum(&self, probe: &mut SpectralDelayLine, block: &[f64]) -> Result<Spectrum> {
        probe.push(&self.transform, block)?;
        self.sum_products(probe)
    }
}

/// Partitioned-block frequency-domain FLAF.
pub type PbfdFlaf = FlafEngine<PartitionedBranch>;

impl FlafEngine<PartitionedBranch> {
    /// Build a PBFD-FLAF whose linear branch has `partitions` partitions of
    /// `L` taps covering `M` (so `partitions == ⌈M / L⌉`). Nonlinear channels
    /// use `min(M_i, L)`-tap partitions.
    pub fn init(
        params: FilterParams,
        partitions: usize,
        expansion: Option<ExpansionConfig>,
    ) -> Result<Self> {
        if params.hop == 0 {
            return Err(FlafError::InvalidConfig("block length must be >= 1".into()));
        }
        let needed = params.filter_len.div_ceil(params.hop);
        if partitions != needed {
            return Err(FlafError::InvalidConfig(format!(
                "{partitions} partitions of {} taps cannot cover a {}-tap filter exactly (need {needed})",
                params.hop, params.filter_len
            )));
        }
        Self::build(params, expansion)
    }

    pub fn partition_count(&self) -> usize {
        self.linear_branch().partition_count()
    }
}
