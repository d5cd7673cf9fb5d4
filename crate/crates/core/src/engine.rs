//! Block loop shared by the overlap-save and partitioned-block FLAFs.
//!
//! A filter is a linear branch plus either `Q` per-channel branches (one per
//! functional link, each of length `M_i`) or a single random-vector feature
//! branch. All branches share the hop `L`, so their block outputs sum
//! sample by sample.

use crate::error::{check_finite, check_len, FlafError, Result};
use crate::expansions::{ExpansionConfig, ExpansionKind, Expander};
use crate::ops::OpCounter;
use crate::spectral::{Spectrum, Transform};

/// Any spectral weight magnitude above this is treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Step sizes and sizes shared by both frequency-domain filters.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterParams {
    /// Linear filter length `M`.
    pub filter_len: usize,
    /// Block length `L`.
    pub hop: usize,
    pub mu_lin: f64,
    pub mu_nl: f64,
    /// Forgetting factor of the per-bin power estimate.
    pub lambda: f64,
    /// Step-size regularizer `ε`.
    pub reg: f64,
    /// Initial per-bin power `B_0(m)`.
    pub power_init: f64,
    /// Gradient constraint on or off.
    pub constrained: bool,
}

impl FilterParams {
    pub fn new(filter_len: usize, hop: usize) -> Self {
        Self {
            filter_len,
            hop,
            mu_lin: 0.5,
            mu_nl: 0.0,
            lambda: 0.9,
            reg: 1e-6,
            power_init: 1e-3,
            constrained: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FlafError::InvalidConfig(m));
        if self.filter_len == 0 || self.hop == 0 {
            return bad("filter length and block length must be >= 1".into());
        }
        if self.hop > self.filter_len {
            return bad(format!(
                "block length {} exceeds filter length {}",
                self.hop, self.filter_len
            ));
        }
        for (name, v) in [("mu_lin", self.mu_lin), ("mu_nl", self.mu_nl)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0"));
            }
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad(format!("lambda {} outside (0, 1]", self.lambda));
        }
        if !(self.reg.is_finite() && self.reg > 0.0) {
            return bad("regularizer must be > 0".into());
        }
        if !(self.power_init.is_finite() && self.power_init >= 0.0) {
            return bad("power_init must be finite and >= 0".into());
        }
        Ok(())
    }
}

/// Settings for constructing one spectral branch.
#[derive(Debug, Clone, Copy)]
pub struct BranchSpec {
    pub filter_len: usize,
    pub hop: usize,
    pub mu: f64,
    pub lambda: f64,
    pub reg: f64,
    pub power_init: f64,
    pub constrained: bool,
}

/// A frequency-domain adaptive FIR branch.
pub trait SpectralBranch: Sized {
    /// Auxiliary input line used to filter a second stream through the same
    /// weights (the exponential-factor derivative).
    type Probe;

    fn build(spec: BranchSpec) -> Result<Self>;
    fn transform(&self) -> &Transform;
    fn filter_len(&self) -> usize;
    fn hop(&self) -> usize;
    /// Consume one input block and return the branch output block.
    fn filter(&mut self, block: &[f64]) -> Result<Vec<f64>>;
    /// Apply one normalized gradient step from the error spectrum.
    fn adapt(&mut self, error: &Spectrum) -> Result<()>;
    fn time_weights(&self) -> Result<Vec<f64>>;
    fn set_time_weights(&mut self, w: &[f64]) -> Result<()>;
    fn power(&self) -> &[f64];
    fn max_weight_abs(&self) -> f64;
    fn ops(&self) -> OpCounter;
    fn new_probe(&self) -> Result<Self::Probe>;
    /// Push `block` into the probe and return the spectrum whose inverse
    /// (last `L` samples) is the probe stream filtered by this branch.
    fn probe_spectrum(&self, probe: &mut Self::Probe, block: &[f64]) -> Result<Spectrum>;
}

/// Random-vector feature branch: an instantaneous weight per feature with
/// block NLMS updates normalized by the smoothed feature-vector energy.
#[derive(Debug, Clone)]
pub struct FeatureBranch {
    weights: Vec<f64>,
    power: f64,
    mu: f64,
    lambda: f64,
    reg: f64,
    features: Vec<f64>,
    ops: OpCounter,
}

impl FeatureBranch {
    pub fn new(len: usize, mu: f64, lambda: f64, reg: f64, power_init: f64) -> Self {
        Self {
            weights: vec![0.0; len],
            power: power_init,
            mu,
            lambda,
            reg,
            features: Vec::new(),
            ops: OpCounter::default(),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Smoothed per-sample energy of the feature vector.
    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn set_weights(&mut self, w: &[f64]) -> Result<()> {
        check_len(self.weights.len(), w.len())?;
        self.weights.copy_from_slice(w);
        Ok(())
    }

    /// `features` holds one feature vector per sample, sample-major.
    pub fn filter(&mut self, features: &[f64]) -> Result<Vec<f64>> {
        let r = self.weights.len();
        if features.len() % r != 0 {
            return Err(FlafError::SizeMismatch { expected: r, got: features.len() % r });
        }
        self.features = features.to_vec();
        let y: Vec<f64> = features
            .chunks_exact(r)
            .map(|f| f.iter().zip(&self.weights).map(|(a, b)| a * b).sum())
            .collect();
        self.ops += OpCounter::new((r * y.len()) as u64, (r * y.len()) as u64, 0);
        Ok(y)
    }

    pub fn adapt(&mut self, e: &[f64]) -> Result<()> {
        let r = self.weights.len();
        check_len(self.features.len(), e.len() * r)?;
        let energy = self.features.iter().map(|f| f * f).sum::<f64>() / e.len() as f64;
        self.power = self.lambda * self.power + (1.0 - self.lambda) * energy;
        let step = self.mu / (self.reg + self.power);
        for (f, &en) in self.features.chunks_exact(r).zip(e) {
            let g = step * en;
            for (w, v) in self.weights.iter_mut().zip(f) {
                *w += g * v;
            }
        }
        let n = (r * e.len()) as u64;
        self.ops += OpCounter::new(2 * n + e.len() as u64 + 3, 2 * n + 2, 0);
        Ok(())
    }

    fn max_weight_abs(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub enum NonlinearBranch<B> {
    None,
    Channels(Vec<B>),
    Features(FeatureBranch),
}

/// Linear branch plus nonlinear branches driven block by block.
pub struct FlafEngine<B: SpectralBranch> {
    params: FilterParams,
    lin: B,
    nl: NonlinearBranch<B>,
    expander: Option<Expander>,
    ae_probes: Vec<B::Probe>,
    last_nl: Vec<f64>,
    diverged: bool,
    skipped_blocks: u64,
    ops: OpCounter,
}

impl<B: SpectralBranch> FlafEngine<B> {
    pub(crate) fn build(params: FilterParams, expansion: Option<ExpansionConfig>) -> Result<Self> {
        params.validate()?;
        let spec = |filter_len, mu| BranchSpec {
            filter_len,
            hop: params.hop,
            mu,
            lambda: params.lambda,
            reg: params.reg,
            power_init: params.power_init,
            constrained: params.constrained,
        };
        let lin = B::build(spec(params.filter_len, params.mu_lin))?;
        let (expander, nl) = match expansion {
            None => (None, NonlinearBranch::None),
            Some(cfg) => {
                let expander = Expander::new(cfg)?;
                let cfg = expander.config();
                let nl = if cfg.kind == ExpansionKind::RandomVector {
                    NonlinearBranch::Features(FeatureBranch::new(
                        cfg.expanded_len,
                        params.mu_nl,
                        params.lambda,
                        params.reg,
                        params.power_init,
                    ))
                } else {
                    let channels = (0..cfg.channels())
                        .map(|_| B::build(spec(cfg.input_len, params.mu_nl)))
                        .collect::<Result<Vec<_>>>()?;
                    NonlinearBranch::Channels(channels)
                };
                (Some(expander), nl)
            }
        };
        let ae_probes = match (&expander, &nl) {
            (Some(e), NonlinearBranch::Channels(ch)) if e.kind() == ExpansionKind::AdaptiveExponential => {
                ch.iter().map(B::new_probe).collect::<Result<Vec<_>>>()?
            }
            _ => Vec::new(),
        };
        Ok(Self {
            last_nl: vec![0.0; params.hop],
            params,
            lin,
            nl,
            expander,
            ae_probes,
            diverged: false,
            skipped_blocks: 0,
            ops: OpCounter::default(),
        })
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn hop(&self) -> usize {
        self.params.hop
    }

    pub fn linear_branch(&self) -> &B {
        &self.lin
    }

    pub fn nonlinear_branches(&self) -> &NonlinearBranch<B> {
        &self.nl
    }

    pub fn expander(&self) -> Option<&Expander> {
        self.expander.as_ref()
    }

    /// Number of nonlinear channel branches (`Q`, or 0 without expansion).
    pub fn channel_count(&self) -> usize {
        match &self.nl {
            NonlinearBranch::None => 0,
            NonlinearBranch::Channels(c) => c.len(),
            NonlinearBranch::Features(_) => 1,
        }
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    pub fn skipped_blocks(&self) -> u64 {
        self.skipped_blocks
    }

    /// Nonlinear-branch contribution to the most recent output block.
    pub fn last_nonlinear_output(&self) -> &[f64] {
        &self.last_nl
    }

    pub fn expansion_ops(&self) -> OpCounter {
        self.expander.as_ref().map(Expander::ops).unwrap_or_default()
    }

    /// Total operations: branches, error transforms and expansion.
    pub fn ops(&self) -> OpCounter {
        let nl = match &self.nl {
            NonlinearBranch::None => OpCounter::default(),
            NonlinearBranch::Channels(c) => c.iter().map(B::ops).fold(OpCounter::default(), |a, b| a + b),
            NonlinearBranch::Features(f) => f.ops,
        };
        self.ops + self.lin.ops() + nl + self.expansion_ops()
    }

    /// Process one block of `L` far-end samples `x` and microphone samples
    /// `d`, returning the echo estimate and the residual.
    pub fn process_block(&mut self, x: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let l = self.params.hop;
        check_len(l, x.len())?;
        check_len(l, d.len())?;
        if let Err(err) = check_finite("far-end block", x).and_then(|_| check_finite("desired block", d)) {
            self.skipped_blocks += 1;
            return Err(err);
        }
        if self.diverged {
            return Err(FlafError::Divergence("filter already diverged".into()));
        }

        let frame = match self.expander.as_mut() {
            Some(e) => Some(e.expand_block(x)?),
            None => None,
        };

        let mut y = self.lin.filter(x)?;
        let mut y_nl = vec![0.0; l];
        let mut dy_da: Option<Vec<f64>> = None;
        match (&mut self.nl, &frame) {
            (NonlinearBranch::Channels(channels), Some(frame)) => {
                for (ch, input) in channels.iter_mut().zip(&frame.channels) {
                    for (acc, v) in y_nl.iter_mut().zip(ch.filter(input)?) {
                        *acc += v;
                    }
                }
                if !self.ae_probes.is_empty() {
                    let abs_x: Vec<f64> = x.iter().map(|v| v.clamp(-1.0, 1.0).abs()).collect();
                    let t = channels[0].transform().clone();
                    let mut sum = Spectrum::zeros(t.n_fft());
                    for ((ch, probe), input) in channels.iter().zip(&mut self.ae_probes).zip(&frame.channels) {
                        let deriv: Vec<f64> = input.iter().zip(&abs_x).map(|(g, a)| -a * g).collect();
                        sum.add_assign(&ch.probe_spectrum(probe, &deriv)?)?;
                    }
                    let full = t.inverse(&sum)?;
                    self.ops.charge_transform(t.n_fft());
                    dy_da = Some(full[full.len() - l..].to_vec());
                }
            }
            (NonlinearBranch::Features(fb), Some(frame)) => {
                y_nl = fb.filter(&frame.channels[0])?;
            }
            _ => {}
        }
        for (a, b) in y.iter_mut().zip(&y_nl) {
            *a += b;
        }
        let e: Vec<f64> = d.iter().zip(&y).map(|(d, y)| d - y).collect();

        let mut cache: Vec<(usize, Spectrum)> = Vec::new();
        let mut error_spectrum = |t: &Transform, ops: &mut OpCounter| -> Result<Spectrum> {
            if let Some((_, s)) = cache.iter().find(|(n, _)| *n == t.n_fft()) {
                return Ok(s.clone());
            }
            let s = t.forward_tail(&e)?;
            ops.charge_transform(t.n_fft());
            cache.push((t.n_fft(), s.clone()));
            Ok(s)
        };

        let e_lin = error_spectrum(self.lin.transform(), &mut self.ops)?;
        self.lin.adapt(&e_lin)?;
        match &mut self.nl {
            NonlinearBranch::Channels(channels) => {
                for ch in channels.iter_mut() {
                    let es = error_spectrum(ch.transform(), &mut self.ops)?;
                    ch.adapt(&es)?;
                }
            }
            NonlinearBranch::Features(fb) => fb.adapt(&e)?,
            NonlinearBranch::None => {}
        }
        if let (Some(g), Some(exp)) = (dy_da, self.expander.as_mut()) {
            let weighted: f64 = g.iter().zip(&e).map(|(a, b)| a * b).sum();
            exp.ae_apply(weighted)?;
        }
        self.last_nl = y_nl;

        let max_w = match &self.nl {
            NonlinearBranch::None => 0.0,
            NonlinearBranch::Channels(c) => c.iter().map(B::max_weight_abs).fold(0.0, f64::max),
            NonlinearBranch::Features(f) => f.max_weight_abs(),
        }
        .max(self.lin.max_weight_abs());
        if !(max_w <= DIVERGENCE_LIMIT) {
            self.diverged = true;
            return Err(FlafError::Divergence(format!("weight magnitude {max_w:e}")));
        }
        Ok((y, e))
    }

    /// Time-domain image of the weights: linear taps (length `M`) and the
    /// nonlinear weights in sample-major order `w[i·Q + j]`.
    pub fn equivalent_time_weights(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let w_lin = self.lin.time_weights()?;
        let w_nl = match &self.nl {
            NonlinearBranch::None => Vec::new(),
            NonlinearBranch::Features(f) => f.weights.clone(),
            NonlinearBranch::Channels(channels) => {
                let per: Vec<Vec<f64>> = channels.iter().map(B::time_weights).collect::<Result<_>>()?;
                let (q, mi) = (per.len(), per[0].len());
                let mut out = vec![0.0; q * mi];
                for (j, w) in per.iter().enumerate() {
                    for (i, v) in w.iter().enumerate() {
                        out[i * q + j] = *v;
                    }
                }
                out
            }
        };
        Ok((w_lin, w_nl))
    }

    /// Load weights from their time-domain image (inverse of
    /// [`equivalent_time_weights`](Self::equivalent_time_weights)).
    pub fn set_equivalent_time_weights(&mut self, w_lin: &[f64], w_nl: &[f64]) -> Result<()> {
        check_len(self.lin.filter_len(), w_lin.len())?;
        self.lin.set_time_weights(w_lin)?;
        match &mut self.nl {
            NonlinearBranch::None => check_len(0, w_nl.len()),
            NonlinearBranch::Features(f) => f.set_weights(w_nl),
            NonlinearBranch::Channels(channels) => {
                let q = channels.len();
                let mi = channels[0].filter_len();
                check_len(q * mi, w_nl.len())?;
                for (j, ch) in channels.iter_mut().enumerate() {
                    let w: Vec<f64> = (0..mi).map(|i| w_nl[i * q + j]).collect();
                    ch.set_time_weights(&w)?;
                }
                Ok(())
            }
        }
    }
}
