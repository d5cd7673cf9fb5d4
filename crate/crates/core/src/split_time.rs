//! Time-domain split FLAF: a linear FIR branch and a functional-link branch
//! whose outputs sum, each adapted by NLMS with its own buffer energy.

use crate::error::{check_len, FlafError, Result};
use crate::expansions::{ExpansionConfig, ExpansionKind, Expander};
use crate::ops::OpCounter;

/// How expanded values enter the nonlinear buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlinearLayout {
    /// `Q` links per sample shifted into a sliding buffer of `Q · M_i`
    /// values, newest sample first.
    Memoryless { channels: usize },
    /// The whole feature vector is replaced on every sample.
    Instantaneous,
}

/// Joint weights and sliding buffers of the split filter.
#[derive(Debug, Clone)]
pub struct SplitFlafState {
    pub w_lin: Vec<f64>,
    pub w_nl: Vec<f64>,
    buf_lin: Vec<f64>,
    buf_nl: Vec<f64>,
    pub mu_lin: f64,
    pub mu_nl: f64,
    pub reg: f64,
    layout: NonlinearLayout,
    diverged: bool,
    skipped: u64,
    ops: OpCounter,
}

impl SplitFlafState {
    /// `filter_len` linear taps and `expanded_len` nonlinear weights. Use
    /// `expanded_len = 0` for a purely linear NLMS filter.
    pub fn new(
        filter_len: usize,
        expanded_len: usize,
        layout: NonlinearLayout,
        mu_lin: f64,
        mu_nl: f64,
        reg: f64,
    ) -> Result<Self> {
        if filter_len == 0 {
            return Err(FlafError::InvalidConfig("filter length must be >= 1".into()));
        }
        if let NonlinearLayout::Memoryless { channels } = layout {
            if channels == 0 || expanded_len % channels != 0 {
                return Err(FlafError::InvalidConfig(format!(
                    "expanded length {expanded_len} is not a multiple of {channels} channels"
                )));
            }
        }
        for (name, v) in [("mu_lin", mu_lin), ("mu_nl", mu_nl)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(FlafError::InvalidConfig(format!("{name} must be finite and >= 0")));
            }
        }
        if !(reg.is_finite() && reg > 0.0) {
            return Err(FlafError::InvalidConfig("regularizer must be > 0".into()));
        }
        Ok(Self {
            w_lin: vec![0.0; filter_len],
            w_nl: vec![0.0; expanded_len],
            buf_lin: vec![0.0; filter_len],
            buf_nl: vec![0.0; expanded_len],
            mu_lin,
            mu_nl,
            reg,
            layout,
            diverged: false,
            skipped: 0,
            ops: OpCounter::default(),
        })
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    pub fn ops(&self) -> OpCounter {
        self.ops
    }

    /// Concatenated input vector `[x_L; g]`.
    pub fn joint_input(&self) -> Vec<f64> {
        [self.buf_lin.as_slice(), self.buf_nl.as_slice()].concat()
    }

    /// Process one sample. `g_new` holds the `Q` new links for memoryless
    /// layouts or the full feature vector for instantaneous ones.
    pub fn step(&mut self, x_new: f64, g_new: &[f64], d: f64) -> Result<(f64, f64)> {
        if !x_new.is_finite() || !d.is_finite() || g_new.iter().any(|v| !v.is_finite()) {
            self.skipped += 1;
            return Err(FlafError::InvalidInput("non-finite sample skipped".into()));
        }
        match self.layout {
            NonlinearLayout::Memoryless { channels } => {
                if !self.buf_nl.is_empty() {
                    check_len(channels, g_new.len())?;
                    let n = self.buf_nl.len();
                    self.buf_nl.copy_within(0..n - channels, channels);
                    self.buf_nl[..channels].copy_from_slice(g_new);
                }
            }
            NonlinearLayout::Instantaneous => {
                check_len(self.buf_nl.len(), g_new.len())?;
                self.buf_nl.copy_from_slice(g_new);
            }
        }
        let m = self.buf_lin.len();
        self.buf_lin.copy_within(0..m - 1, 1);
        self.buf_lin[0] = x_new;

        let y = dot(&self.w_lin, &self.buf_lin) + dot(&self.w_nl, &self.buf_nl);
        let e = d - y;

        nlms_update(&mut self.w_lin, &self.buf_lin, self.mu_lin, self.reg, e);
        nlms_update(&mut self.w_nl, &self.buf_nl, self.mu_nl, self.reg, e);

        let taps = (self.w_lin.len() + self.w_nl.len()) as u64;
        // output, energy and update: three products per tap plus two scalars
        self.ops += OpCounter::new(3 * taps + 4, 3 * taps, 0);

        if self.w_lin.iter().chain(&self.w_nl).any(|v| !v.is_finite()) {
            self.diverged = true;
            return Err(FlafError::Divergence("non-finite time-domain weights".into()));
        }
        Ok((y, e))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nlms_update(w: &mut [f64], buf: &[f64], mu: f64, reg: f64, e: f64) {
    if mu == 0.0 || w.is_empty() {
        return;
    }
    let g = mu * e / (reg + dot(buf, buf));
    for (wi, xi) in w.iter_mut().zip(buf) {
        *wi += g * xi;
    }
}

/// Streaming split FLAF bundling the expander with the NLMS state.
#[derive(Debug, Clone)]
pub struct FlafTd {
    state: SplitFlafState,
    expander: Option<Expander>,
    /// Clipped recent inputs for the exponential-factor gradient, newest first.
    x_recent: Vec<f64>,
}

impl FlafTd {
    pub fn new(
        filter_len: usize,
        expansion: Option<ExpansionConfig>,
        mu_lin: f64,
        mu_nl: f64,
        reg: f64,
    ) -> Result<Self> {
        let (expander, expanded_len, layout, input_len) = match expansion {
            None => (None, 0, NonlinearLayout::Memoryless { channels: 1 }, 0),
            Some(cfg) => {
                let layout = if cfg.kind == ExpansionKind::RandomVector {
                    NonlinearLayout::Instantaneous
                } else {
                    NonlinearLayout::Memoryless { channels: cfg.channels() }
                };
                let (len, mi) = (cfg.expanded_len(), cfg.input_len);
                (Some(Expander::new(cfg)?), len, layout, mi)
            }
        };
        let state = SplitFlafState::new(filter_len, expanded_len, layout, mu_lin, mu_nl, reg)?;
        Ok(Self { state, expander, x_recent: vec![0.0; input_len] })
    }

    pub fn state(&self) -> &SplitFlafState {
        &self.state
    }

    pub fn expander(&self) -> Option<&Expander> {
        self.expander.as_ref()
    }

    pub fn ops(&self) -> OpCounter {
        self.state.ops() + self.expansion_ops()
    }

    pub fn expansion_ops(&self) -> OpCounter {
        self.expander.as_ref().map(Expander::ops).unwrap_or_default()
    }

    /// Output contributed by the nonlinear branch for the current buffers.
    pub fn nonlinear_output(&self) -> f64 {
        dot(&self.state.w_nl, &self.state.buf_nl)
    }

    pub fn process_sample(&mut self, x: f64, d: f64) -> Result<(f64, f64)> {
        if !x.is_finite() || !d.is_finite() {
            self.state.skipped += 1;
            return Err(FlafError::InvalidInput("non-finite sample skipped".into()));
        }
        let g = match self.expander.as_mut() {
            None => Vec::new(),
            Some(exp) if exp.kind() == ExpansionKind::RandomVector => {
                exp.expand_block(&[x])?.channels.swap_remove(0)
            }
            Some(exp) => exp.expand_sample(x)?,
        };
        if !self.x_recent.is_empty() {
            let n = self.x_recent.len();
            self.x_recent.copy_within(0..n - 1, 1);
            self.x_recent[0] = x.clamp(-1.0, 1.0);
        }
        let (y, e) = self.state.step(x, &g, d)?;
        if let Some(exp) = self.expander.as_mut() {
            if exp.kind() == ExpansionKind::AdaptiveExponential {
                exp.ae_adapt(&self.x_recent, e, &self.state.w_nl)?;
            }
        }
        Ok((y, e))
    }

    pub fn process_block(&mut self, x: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len(x.len(), d.len())?;
        let mut y = Vec::with_capacity(x.len());
        let mut e = Vec::with_capacity(x.len());
        for (&xi, &di) in x.iter().zip(d) {
            let (yi, ei) = self.process_sample(xi, di)?;
            y.push(yi);
            e.push(ei);
        }
        Ok((y, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn zero_steps_keep_weights() {
        let mut s =
            SplitFlafState::new(3, 4, NonlinearLayout::Memoryless { channels: 2 }, 0.0, 0.0, 1e-6)
                .unwrap();
        s.w_lin = vec![1.0, 0.5, 0.0];
        s.w_nl = vec![0.1, 0.2, 0.3, 0.4];
        let (y1, _) = s.step(1.0, &[1.0, 2.0], 9.0).unwrap();
        assert!((y1 - (1.0 + 0.1 + 0.4)).abs() < 1e-15);
        let (y2, _) = s.step(2.0, &[3.0, 4.0], 9.0).unwrap();
        // buf_lin = [2,1,0], buf_nl = [3,4,1,2]
        assert!((y2 - (2.5 + 0.3 + 0.8 + 0.3 + 0.8)).abs() < 1e-12);
        assert_eq!(s.w_lin, vec![1.0, 0.5, 0.0]);
        assert_eq!(s.joint_input(), vec![2.0, 1.0, 0.0, 3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn one_tap_identity_plant_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut f = FlafTd::new(1, None, 0.5, 0.0, 1e-8).unwrap();
        let mut last = 0.0;
        for _ in 0..2000 {
            let x: f64 = StandardNormal.sample(&mut rng);
            let (_, e) = f.process_sample(x, x).unwrap();
            last = e * e;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn non_finite_sample_is_skipped() {
        let mut f = FlafTd::new(2, Some(ExpansionConfig::chebyshev(2, 2)), 0.1, 0.1, 1e-6).unwrap();
        assert!(f.process_sample(f64::NAN, 0.0).is_err());
        assert!(f.process_sample(0.1, f64::INFINITY).is_err());
        assert_eq!(f.state().skipped(), 2);
        assert!(f.state().w_lin.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn random_vector_replaces_features() {
        let cfg = ExpansionConfig::random_vector(5, 3, 2);
        let mut f = FlafTd::new(4, Some(cfg), 0.1, 0.1, 1e-6).unwrap();
        f.process_sample(0.2, 0.1).unwrap();
        assert_eq!(f.state().w_nl.len(), 5);
        assert_eq!(f.state().joint_input().len(), 9);
    }
}
