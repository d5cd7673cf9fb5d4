//! Functional-link expansion blocks.
//!
//! Each expander maps input samples in `[-1, 1]` to a set of nonlinear
//! functionals. Four kinds are memoryless (Chebyshev, Legendre,
//! trigonometric, adaptive exponential) and emit `Q` channels per sample;
//! the random-vector kind projects the last `M_i` input samples through a
//! fixed random matrix and a sigmoid, emitting `M_re` features per sample.
//!
//! Channel order inside a sample follows the function index `j`, and the
//! expanded vector of a buffer is laid out sample-major (all `j` for the
//! newest sample, then the next older sample, and so on).

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FlafError, Result};
use crate::ops::OpCounter;

/// Upper clamp for the adaptive exponential factor.
pub const AE_FACTOR_MAX: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExpansionKind {
    Chebyshev,
    Legendre,
    Trigonometric,
    RandomVector,
    AdaptiveExponential,
}

impl ExpansionKind {
    pub const ALL: [ExpansionKind; 5] = [
        ExpansionKind::Chebyshev,
        ExpansionKind::Legendre,
        ExpansionKind::Trigonometric,
        ExpansionKind::RandomVector,
        ExpansionKind::AdaptiveExponential,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            ExpansionKind::Chebyshev => "che",
            ExpansionKind::Legendre => "leg",
            ExpansionKind::Trigonometric => "tri",
            ExpansionKind::RandomVector => "rv",
            ExpansionKind::AdaptiveExponential => "ae",
        }
    }
}

/// Which functional-link set to use and its dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionConfig {
    pub kind: ExpansionKind,
    /// Expansion order `P`. Ignored by the random-vector kind.
    pub order: usize,
    /// Number of input samples `M_i` feeding the nonlinear branch.
    pub input_len: usize,
    /// Feature count `M_re` for the random-vector kind. Other kinds derive it.
    pub expanded_len: usize,
    /// Seed for the random-vector projection.
    pub seed: u64,
    /// Step size of the adaptive exponential factor.
    pub ae_step: f64,
    /// Initial adaptive exponential factor.
    pub ae_init: f64,
}

impl ExpansionConfig {
    fn base(kind: ExpansionKind, order: usize, input_len: usize) -> Self {
        Self {
            kind,
            order,
            input_len,
            expanded_len: 0,
            seed: 0,
            ae_step: 0.0,
            ae_init: 0.0,
        }
    }

    pub fn chebyshev(order: usize, input_len: usize) -> Self {
        Self::base(ExpansionKind::Chebyshev, order, input_len)
    }

    pub fn legendre(order: usize, input_len: usize) -> Self {
        Self::base(ExpansionKind::Legendre, order, input_len)
    }

    pub fn trigonometric(order: usize, input_len: usize) -> Self {
        Self::base(ExpansionKind::Trigonometric, order, input_len)
    }

    pub fn random_vector(expanded_len: usize, input_len: usize, seed: u64) -> Self {
        Self {
            expanded_len,
            seed,
            ..Self::base(ExpansionKind::RandomVector, 1, input_len)
        }
    }

    pub fn adaptive_exponential(order: usize, input_len: usize, ae_step: f64, ae_init: f64) -> Self {
        Self {
            ae_step,
            ae_init,
            ..Self::base(ExpansionKind::AdaptiveExponential, order, input_len)
        }
    }

    /// Number of functional links per input sample (`Q`).
    pub fn channels(&self) -> usize {
        match self.kind {
            ExpansionKind::Chebyshev | ExpansionKind::Legendre => self.order,
            ExpansionKind::Trigonometric | ExpansionKind::AdaptiveExponential => 2 * self.order,
            ExpansionKind::RandomVector => 1,
        }
    }

    /// Length of the expanded vector (`M_re`).
    pub fn expanded_len(&self) -> usize {
        match self.kind {
            ExpansionKind::RandomVector => self.expanded_len,
            _ => self.channels() * self.input_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 {
            return Err(FlafError::InvalidConfig("expansion input_len must be >= 1".into()));
        }
        match self.kind {
            ExpansionKind::RandomVector => {
                if self.expanded_len == 0 {
                    return Err(FlafError::InvalidConfig(
                        "random-vector expanded_len must be >= 1".into(),
                    ));
                }
            }
            _ => {
                if self.order == 0 {
                    return Err(FlafError::InvalidConfig("expansion order must be >= 1".into()));
                }
            }
        }
        if self.kind == ExpansionKind::AdaptiveExponential {
            if !(self.ae_step.is_finite() && self.ae_step >= 0.0) {
                return Err(FlafError::InvalidConfig("ae_step must be finite and >= 0".into()));
            }
            if !self.ae_init.is_finite() {
                return Err(FlafError::InvalidConfig("ae_init must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Closed-form multiplications per iteration for each expansion kind.
pub fn predicted_mul_count(config: &ExpansionConfig) -> u64 {
    let p = config.order as u64;
    let mi = config.input_len as u64;
    match config.kind {
        ExpansionKind::Chebyshev => 2 * p * mi,
        ExpansionKind::Legendre => 2 * p * (2 * mi + 1),
        ExpansionKind::Trigonometric => p * (mi + 1),
        ExpansionKind::RandomVector => config.expanded_len as u64 * (mi + 1),
        ExpansionKind::AdaptiveExponential => 11 * p * mi + p + 1,
    }
}

/// Cost of one iteration, built from per-sample kernel costs applied to the
/// whole `M_i`-sample input vector plus per-iteration overheads.
fn iteration_cost(config: &ExpansionConfig) -> OpCounter {
    let p = config.order as u64;
    let mi = config.input_len as u64;
    match config.kind {
        // 2·x·φ_{j-1}: two products per link.
        ExpansionKind::Chebyshev => OpCounter::new(2 * p * mi, p * mi, 0),
        // (2j-1)·x·φ_{j-1}, (j-1)·φ_{j-2} and the 1/j scale per link, plus the
        // two coefficient products per order.
        ExpansionKind::Legendre => OpCounter::new(4 * p * mi + 2 * p, p * (mi + 2), 0),
        // p·π·x per harmonic, with p·π formed once per iteration.
        ExpansionKind::Trigonometric => OpCounter::new(p * mi + p, 0, 2 * p * mi),
        ExpansionKind::RandomVector => {
            let re = config.expanded_len as u64;
            OpCounter::new(re * mi + re, re * mi + re, re)
        }
        ExpansionKind::AdaptiveExponential => {
            let trig = OpCounter::new(p * mi + p, 0, 2 * p * mi);
            let re = 2 * p * mi;
            let exponent = OpCounter::new(3 * re, 0, re);
            let adaptation = OpCounter::new(2 * re + 1, 2 * re + 2, 0);
            trig + exponent + adaptation
        }
    }
}

/// One block of expanded samples.
///
/// Memoryless kinds hold `Q` channels of `L` samples each. The random-vector
/// kind holds a single channel of `L · M_re` values, one feature vector per
/// input sample, newest sample last.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedFrame {
    pub channels: Vec<Vec<f64>>,
}

impl ExpandedFrame {
    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sample-major flattening: `[φ_0(x_0), …, φ_{Q-1}(x_0), φ_0(x_1), …]`.
    pub fn interleaved(&self) -> Vec<f64> {
        let q = self.channels.len();
        let len = self.len();
        let mut out = Vec::with_capacity(q * len);
        for i in 0..len {
            out.extend(self.channels.iter().map(|c| c[i]));
        }
        out
    }
}

fn chebyshev_links(x: f64, out: &mut [f64]) {
    let (mut prev2, mut prev1) = (1.0, x);
    for slot in out.iter_mut() {
        let v = 2.0 * x * prev1 - prev2;
        *slot = v;
        prev2 = prev1;
        prev1 = v;
    }
}

fn legendre_links(x: f64, out: &mut [f64]) {
    // φ_j = P_{j+1}(x), seeded with P_0 = 1, P_1 = x.
    let (mut prev2, mut prev1) = (1.0, x);
    for (j, slot) in out.iter_mut().enumerate() {
        if j == 0 {
            *slot = x;
            continue;
        }
        let n = (j + 1) as f64;
        let v = ((2.0 * n - 1.0) * x * prev1 - (n - 1.0) * prev2) / n;
        *slot = v;
        prev2 = prev1;
        prev1 = v;
    }
}

fn trigonometric_links(x: f64, out: &mut [f64]) {
    for (p, pair) in out.chunks_exact_mut(2).enumerate() {
        let arg = (p + 1) as f64 * PI * x;
        let (s, c) = arg.sin_cos();
        pair[0] = s;
        pair[1] = c;
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Streaming expander with its adaptive or random parameters.
#[derive(Debug, Clone)]
pub struct Expander {
    config: ExpansionConfig,
    /// Row-major `M_re × M_i` projection (random-vector only).
    rv_weights: Vec<f64>,
    rv_bias: Vec<f64>,
    /// Most recent `M_i` inputs, newest first (random-vector only).
    rv_history: Vec<f64>,
    ae_factor: f64,
    ae_warning: bool,
    saturations: u64,
    ops: OpCounter,
}

impl Expander {
    pub fn new(config: ExpansionConfig) -> Result<Self> {
        config.validate()?;
        let (rv_weights, rv_bias, rv_history) = if config.kind == ExpansionKind::RandomVector {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let rows = config.expanded_len;
            let cols = config.input_len;
            let w: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let b: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..=1.0)).collect();
            (w, b, vec![0.0; cols])
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        let ae_factor = config.ae_init.clamp(0.0, AE_FACTOR_MAX);
        Ok(Self {
            config,
            rv_weights,
            rv_bias,
            rv_history,
            ae_factor,
            ae_warning: false,
            saturations: 0,
            ops: OpCounter::default(),
        })
    }

    pub fn config(&self) -> &ExpansionConfig {
        &self.config
    }

    pub fn kind(&self) -> ExpansionKind {
        self.config.kind
    }

    /// Channel count `Q`.
    pub fn channels(&self) -> usize {
        self.config.channels()
    }

    /// Values emitted per input sample: `Q` for memoryless kinds, `M_re` for
    /// the random-vector kind.
    pub fn values_per_sample(&self) -> usize {
        match self.config.kind {
            ExpansionKind::RandomVector => self.config.expanded_len,
            _ => self.channels(),
        }
    }

    pub fn ops(&self) -> OpCounter {
        self.ops
    }

    pub fn reset_ops(&mut self) {
        self.ops.reset();
    }

    /// Number of input samples clipped into `[-1, 1]` so far.
    pub fn saturations(&self) -> u64 {
        self.saturations
    }

    pub fn ae_factor(&self) -> f64 {
        self.ae_factor
    }

    /// Set when an exponential-factor update was rejected as non-finite.
    pub fn ae_warning(&self) -> bool {
        self.ae_warning
    }

    pub fn set_ae_factor(&mut self, a: f64) {
        self.ae_factor = a.clamp(0.0, AE_FACTOR_MAX);
    }

    pub fn rv_weights(&self) -> &[f64] {
        &self.rv_weights
    }

    pub fn rv_bias(&self) -> &[f64] {
        &self.rv_bias
    }

    /// Overwrite the random projection (random-vector only).
    pub fn set_rv_parameters(&mut self, weights: Vec<f64>, bias: Vec<f64>) -> Result<()> {
        if self.config.kind != ExpansionKind::RandomVector {
            return Err(FlafError::Unsupported(
                "random projection exists only for the random-vector kind".into(),
            ));
        }
        crate::error::check_len(self.rv_weights.len(), weights.len())?;
        crate::error::check_len(self.rv_bias.len(), bias.len())?;
        self.rv_weights = weights;
        self.rv_bias = bias;
        Ok(())
    }

    fn clip(&mut self, x: f64) -> f64 {
        if x.abs() > 1.0 {
            self.saturations += 1;
            x.clamp(-1.0, 1.0)
        } else {
            x
        }
    }

    /// Evaluate the functional links of a memoryless kind at `x` into `out`
    /// without touching counters or the saturation tally.
    pub fn links_at(&self, x: f64, out: &mut [f64]) -> Result<()> {
        crate::error::check_len(self.channels(), out.len())?;
        match self.config.kind {
            ExpansionKind::Chebyshev => chebyshev_links(x, out),
            ExpansionKind::Legendre => legendre_links(x, out),
            ExpansionKind::Trigonometric => trigonometric_links(x, out),
            ExpansionKind::AdaptiveExponential => {
                trigonometric_links(x, out);
                let scale = (-self.ae_factor * x.abs()).exp();
                out.iter_mut().for_each(|v| *v *= scale);
            }
            ExpansionKind::RandomVector => {
                return Err(FlafError::Unsupported(
                    "random-vector expansion is block-structured; use expand_block".into(),
                ))
            }
        }
        Ok(())
    }

    /// Expand one sample of a memoryless kind into its `Q` functional links.
    pub fn expand_sample(&mut self, x: f64) -> Result<Vec<f64>> {
        if !x.is_finite() {
            return Err(FlafError::InvalidInput(format!("non-finite sample {x}")));
        }
        let mut out = vec![0.0; self.channels()];
        let x = self.clip(x);
        self.links_at(x, &mut out)?;
        self.ops += iteration_cost(&self.config);
        Ok(out)
    }

    /// Expand a block of `L` samples.
    pub fn expand_block(&mut self, block: &[f64]) -> Result<ExpandedFrame> {
        if block.is_empty() {
            return Err(FlafError::InvalidInput("empty block".into()));
        }
        crate::error::check_finite("expansion block", block)?;
        let cost = iteration_cost(&self.config);
        if self.config.kind == ExpansionKind::RandomVector {
            let re = self.config.expanded_len;
            let mi = self.config.input_len;
            let mut feats = Vec::with_capacity(block.len() * re);
            for &raw in block {
                let x = self.clip(raw);
                self.rv_history.copy_within(0..mi - 1, 1);
                self.rv_history[0] = x;
                for (row, b) in self.rv_weights.chunks_exact(mi).zip(&self.rv_bias) {
                    let z: f64 = row.iter().zip(&self.rv_history).map(|(v, x)| v * x).sum::<f64>() + b;
                    feats.push(sigmoid(z));
                }
                self.ops += cost;
            }
            return Ok(ExpandedFrame { channels: vec![feats] });
        }

        let q = self.channels();
        let mut channels = vec![Vec::with_capacity(block.len()); q];
        let mut links = vec![0.0; q];
        for &raw in block {
            let x = self.clip(raw);
            self.links_at(x, &mut links)?;
            for (c, v) in channels.iter_mut().zip(&links) {
                c.push(*v);
            }
            self.ops += cost;
        }
        Ok(ExpandedFrame { channels })
    }

    /// Derivative of the branch output with respect to the exponential factor,
    /// `Σ_i Σ_j w_{j,i} · (−|x[n−i]|) · φ_j(x[n−i])`.
    ///
    /// `x_recent[i]` is `x[n−i]`; `weights` uses the sample-major layout
    /// `w[i·Q + j]`.
    pub fn ae_output_gradient(&self, x_recent: &[f64], weights: &[f64]) -> Result<f64> {
        if self.config.kind != ExpansionKind::AdaptiveExponential {
            return Err(FlafError::Unsupported(
                "exponential-factor gradient requires the adaptive exponential kind".into(),
            ));
        }
        let q = self.channels();
        let mut links = vec![0.0; q];
        let mut grad = 0.0;
        for (&raw, w) in x_recent.iter().zip(weights.chunks_exact(q)) {
            let x = raw.clamp(-1.0, 1.0);
            self.links_at(x, &mut links)?;
            let dot: f64 = w.iter().zip(&links).map(|(a, b)| a * b).sum();
            grad -= x.abs() * dot;
        }
        Ok(grad)
    }

    /// Apply `a ← clamp(a + μ_a · g, 0, a_max)` where `g` is the
    /// error-weighted output gradient. Non-finite updates leave `a` unchanged
    /// and raise the warning flag.
    pub fn ae_apply(&mut self, weighted_gradient: f64) -> Result<f64> {
        if self.config.kind != ExpansionKind::AdaptiveExponential {
            return Err(FlafError::Unsupported(
                "exponential-factor update requires the adaptive exponential kind".into(),
            ));
        }
        let next = self.ae_factor + self.config.ae_step * weighted_gradient;
        if next.is_finite() {
            self.ae_factor = next.clamp(0.0, AE_FACTOR_MAX);
        } else {
            self.ae_warning = true;
        }
        Ok(self.ae_factor)
    }

    /// One gradient step of the exponential factor from the current error.
    pub fn ae_adapt(&mut self, x_recent: &[f64], error: f64, weights: &[f64]) -> Result<f64> {
        let grad = self.ae_output_gradient(x_recent, weights)?;
        self.ae_apply(error * grad)
    }
}
