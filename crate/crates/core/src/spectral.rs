//! Real-input transform engine, overlap-save convolution and the gradient
//! constraint projection.
//!
//! Spectra are stored as half-spectra of `n_fft / 2 + 1` bins. The forward
//! transform is unscaled and the inverse carries the `1 / n_fft` factor, so
//! `inverse(forward(x)) == x`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{check_len, FlafError, Result};

/// Half-spectrum of a real frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
    n_fft: usize,
}

impl Spectrum {
    pub fn zeros(n_fft: usize) -> Self {
        Self {
            bins: vec![Complex64::new(0.0, 0.0); n_fft / 2 + 1],
            n_fft,
        }
    }

    pub fn from_bins(n_fft: usize, bins: Vec<Complex64>) -> Result<Self> {
        check_len(n_fft / 2 + 1, bins.len())?;
        Ok(Self { bins, n_fft })
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Bin-wise product `self ⊙ other`.
    pub fn mul(&self, other: &Spectrum) -> Result<Spectrum> {
        check_len(self.n_fft, other.n_fft)?;
        let bins = self.bins.iter().zip(&other.bins).map(|(a, b)| a * b).collect();
        Ok(Spectrum { bins, n_fft: self.n_fft })
    }

    /// `self += a ⊙ b`.
    pub fn accumulate_product(&mut self, a: &Spectrum, b: &Spectrum) -> Result<()> {
        check_len(self.n_fft, a.n_fft)?;
        check_len(self.n_fft, b.n_fft)?;
        for ((acc, x), w) in self.bins.iter_mut().zip(&a.bins).zip(&b.bins) {
            *acc += x * w;
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Spectrum) -> Result<()> {
        check_len(self.n_fft, other.n_fft)?;
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
        Ok(())
    }

    /// Sum of squared magnitudes over the implied full spectrum, divided by
    /// `n_fft`. Equals the time-domain energy of the frame.
    pub fn parseval_energy(&self) -> f64 {
        let n = self.n_fft;
        let mut total = 0.0;
        for (m, b) in self.bins.iter().enumerate() {
            let mirrored = m != 0 && !(n % 2 == 0 && m == n / 2);
            total += b.norm_sqr() * if mirrored { 2.0 } else { 1.0 };
        }
        total / n as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.bins.iter().map(|b| b.norm()).fold(0.0, f64::max)
    }
}

/// Forward/inverse real transform pair of a fixed size. Cloning shares the
/// plans.
#[derive(Clone)]
pub struct Transform {
    n: usize,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl fmt::Debug for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transform").field("n", &self.n).finish()
    }
}

impl Transform {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(FlafError::InvalidConfig("transform size must be >= 1".into()));
        }
        let mut planner = RealFftPlanner::<f64>::new();
        Ok(Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn n_fft(&self) -> usize {
        self.n
    }

    pub fn forward(&self, x: &[f64]) -> Result<Spectrum> {
        check_len(self.n, x.len())?;
        let mut input = x.to_vec();
        let mut out = self.forward.make_output_vec();
        self.forward
            .process(&mut input, &mut out)
            .map_err(|e| FlafError::InvalidInput(e.to_string()))?;
        Ok(Spectrum { bins: out, n_fft: self.n })
    }

    pub fn inverse(&self, s: &Spectrum) -> Result<Vec<f64>> {
        check_len(self.n, s.n_fft)?;
        let mut input = s.bins.clone();
        // Hermitian symmetry forces real DC (and Nyquist for even sizes).
        input[0].im = 0.0;
        if self.n % 2 == 0 {
            input[self.n / 2].im = 0.0;
        }
        let mut out = self.inverse.make_output_vec();
        self.inverse
            .process(&mut input, &mut out)
            .map_err(|e| FlafError::InvalidInput(e.to_string()))?;
        let scale = 1.0 / self.n as f64;
        out.iter_mut().for_each(|v| *v *= scale);
        Ok(out)
    }

    /// Transform of `x` zero-padded to `n_fft`.
    pub fn forward_padded(&self, x: &[f64]) -> Result<Spectrum> {
        if x.len() > self.n {
            return Err(FlafError::SizeMismatch { expected: self.n, got: x.len() });
        }
        let mut frame = vec![0.0; self.n];
        frame[..x.len()].copy_from_slice(x);
        self.forward(&frame)
    }

    /// Transform of `[0; tail]`, the tail right-aligned in the frame.
    pub fn forward_tail(&self, tail: &[f64]) -> Result<Spectrum> {
        if tail.len() > self.n {
            return Err(FlafError::SizeMismatch { expected: self.n, got: tail.len() });
        }
        let mut frame = vec![0.0; self.n];
        frame[self.n - tail.len()..].copy_from_slice(tail);
        self.forward(&frame)
    }
}

/// Sliding input window for overlap-save processing.
#[derive(Debug, Clone)]
pub struct OverlapSaveBuffer {
    history: Vec<f64>,
    hop: usize,
    filter_len: usize,
}

impl OverlapSaveBuffer {
    pub fn new(n_fft: usize, hop: usize, filter_len: usize) -> Result<Self> {
        if hop == 0 || filter_len == 0 {
            return Err(FlafError::InvalidConfig("hop and filter length must be >= 1".into()));
        }
        if n_fft < filter_len + hop {
            return Err(FlafError::InvalidConfig(format!(
                "n_fft {n_fft} must be >= filter length {filter_len} + hop {hop}"
            )));
        }
        Ok(Self { history: vec![0.0; n_fft], hop, filter_len })
    }

    pub fn n_fft(&self) -> usize {
        self.history.len()
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn filter_len(&self) -> usize {
        self.filter_len
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    /// Shift out the oldest `hop` samples and append `block`.
    pub fn push(&mut self, block: &[f64]) -> Result<()> {
        check_len(self.hop, block.len())?;
        let n = self.history.len();
        self.history.copy_within(self.hop.., 0);
        self.history[n - self.hop..].copy_from_slice(block);
        Ok(())
    }
}

/// Push `new_block` into the window and return the last `L` samples of
/// `IFFT(FFT(window) ⊙ W)`: one block of linear convolution with the filter
/// whose zero-padded transform is `W`.
pub fn os_convolve(
    transform: &Transform,
    buf: &mut OverlapSaveBuffer,
    weights: &Spectrum,
    new_block: &[f64],
) -> Result<Vec<f64>> {
    check_len(buf.n_fft(), weights.n_fft())?;
    check_len(buf.n_fft(), transform.n_fft())?;
    buf.push(new_block)?;
    let x = transform.forward(buf.history())?;
    let y = transform.inverse(&x.mul(weights)?)?;
    Ok(y[y.len() - buf.hop()..].to_vec())
}

/// Project a spectrum onto filters supported on the first `keep` samples.
pub fn gradient_constrain(transform: &Transform, g: &Spectrum, keep: usize) -> Result<Spectrum> {
    check_len(transform.n_fft(), g.n_fft())?;
    if keep > g.n_fft() {
        return Err(FlafError::InvalidInput(format!(
            "keep {keep} exceeds transform size {}",
            g.n_fft()
        )));
    }
    if keep == g.n_fft() {
        return Ok(g.clone());
    }
    let mut t = transform.inverse(g)?;
    t[keep..].iter_mut().for_each(|v| *v = 0.0);
    transform.forward(&t)
}
