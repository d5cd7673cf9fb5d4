//! Simulated loudspeaker-enclosure-microphone system.
//!
//! The far-end signal `x` drives a memoryless loudspeaker nonlinearity, the
//! result is convolved with a synthetic room response to give the echo `s`,
//! and white noise `v` at the requested SNR is added: `d = s + v`.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{FlafError, Result};

const SOURCE_STREAM: u64 = 0x5EED_0001;
const NOISE_STREAM: u64 = 0x5EED_0002;

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    WhiteGaussian,
    ColoredAr1 { alpha: f64 },
    /// 16-bit PCM mono file, already at the scenario sample rate.
    WavFile { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonlinearity {
    None,
    SoftClip { zeta: f64 },
    /// Sinusoidal distortion with a four-sample lag term.
    Composite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RirSpec {
    pub t60_ms: f64,
    pub length: usize,
    pub fs: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub source: SourceKind,
    pub nonlinearity: Nonlinearity,
    pub rir: RirSpec,
    /// Echo-to-noise ratio in dB; `+inf` disables the noise.
    pub snr_db: f64,
    /// Number of samples to generate (for WAV sources, 0 means the whole file).
    pub duration_samples: usize,
    pub seed: u64,
    /// `(start_sample, gain)` pairs; the gain holds until the next entry.
    pub volume_schedule: Vec<(usize, f64)>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FlafError::InvalidConfig(m));
        match self.source {
            SourceKind::ColoredAr1 { alpha } if !(alpha.abs() < 1.0) => {
                return bad(format!("AR(1) alpha {alpha} must satisfy |alpha| < 1"))
            }
            _ => {}
        }
        if let Nonlinearity::SoftClip { zeta } = self.nonlinearity {
            check_zeta(zeta)?;
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return bad("snr_db must be finite or +inf".into());
        }
        if self.rir.length == 0 {
            return bad("rir length must be >= 1".into());
        }
        if !(self.rir.fs > 0.0) || !(self.rir.t60_ms > 0.0) {
            return bad("rir fs and t60_ms must be > 0".into());
        }
        if self.duration_samples == 0 && !matches!(self.source, SourceKind::WavFile { .. }) {
            return bad("duration_samples must be >= 1".into());
        }
        if self.volume_schedule.iter().any(|(_, g)| !g.is_finite()) {
            return bad("volume gains must be finite".into());
        }
        if self.volume_schedule.windows(2).any(|w| w[0].0 >= w[1].0) {
            return bad("volume schedule start samples must increase".into());
        }
        Ok(())
    }
}

/// Generated signals of one scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioStream {
    /// Far-end (loudspeaker) signal.
    pub x: Vec<f64>,
    /// Microphone signal.
    pub d: Vec<f64>,
    pub echo: Vec<f64>,
    pub noise: Vec<f64>,
    pub rir: Vec<f64>,
}

impl ScenarioStream {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `(x[n], d[n])` pairs.
    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.iter().copied().zip(self.d.iter().copied())
    }
}

fn check_zeta(zeta: f64) -> Result<()> {
    if zeta > 0.0 && zeta <= 0.5 {
        Ok(())
    } else {
        Err(FlafError::InvalidConfig(format!("soft-clip threshold {zeta} outside (0, 0.5]")))
    }
}

/// Symmetric soft clipping with threshold `zeta`.
pub fn soft_clip(x: f64, zeta: f64) -> Result<f64> {
    check_zeta(zeta)?;
    let a = x.abs().min(1.0);
    let y = if a <= zeta {
        2.0 * a / (3.0 * zeta)
    } else if a <= 2.0 * zeta {
        let t = 2.0 - a / zeta;
        (3.0 - t * t) / 3.0
    } else {
        1.0
    };
    Ok(if x < 0.0 { -y } else { y })
}

/// `0.6·sin³(π·x − 2/(x³ + 2)) − 0.1·cos(4π·x_lag4) + 1.125`.
pub fn composite_nl(x_now: f64, x_lag4: f64) -> Result<f64> {
    if !x_now.is_finite() || !x_lag4.is_finite() {
        return Err(FlafError::InvalidInput("non-finite input".into()));
    }
    let denom = x_now.powi(3) + 2.0;
    if denom == 0.0 {
        return Err(FlafError::InvalidInput("x^3 + 2 = 0".into()));
    }
    let s = (PI * x_now - 2.0 / denom).sin();
    Ok(0.6 * s * s * s - 0.1 * (4.0 * PI * x_lag4).cos() + 1.125)
}

/// First-order autoregressive colouring with unit-variance gain
/// `√(1 − α²) / (1 − α·z⁻¹)`.
pub fn ar1_colorize(white: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha.abs() < 1.0) {
        return Err(FlafError::InvalidConfig(format!("|alpha| = {} must be < 1", alpha.abs())));
    }
    let gain = (1.0 - alpha * alpha).sqrt();
    let mut prev = 0.0;
    Ok(white
        .iter()
        .map(|w| {
            prev = alpha * prev + gain * w;
            prev
        })
        .collect())
}

/// Amplitude envelope `10^(−3n / (fs · T60))` of a room response.
pub fn rir_envelope(n: usize, fs: f64, t60_ms: f64) -> f64 {
    if t60_ms.is_infinite() {
        return 1.0;
    }
    10f64.powf(-3.0 * n as f64 / (fs * t60_ms / 1000.0))
}

/// Seeded exponentially decaying noise with a dominant direct path,
/// normalized to unit energy.
pub fn generate_rir(spec: &RirSpec) -> Result<Vec<f64>> {
    if spec.length == 0 {
        return Err(FlafError::InvalidConfig("rir length must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut h: Vec<f64> = (0..spec.length)
        .map(|n| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * rir_envelope(n, spec.fs, spec.t60_ms)
        })
        .collect();
    let tail_peak = h[1..].iter().map(|v| v.abs()).fold(0.0, f64::max);
    h[0] = if tail_peak > 0.0 { 2.0 * tail_peak } else { 1.0 };
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    h.iter_mut().for_each(|v| *v /= norm);
    Ok(h)
}

fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            h.iter()
                .take(n + 1)
                .enumerate()
                .map(|(k, hk)| hk * x[n - k])
                .sum()
        })
        .collect()
}

fn read_wav(path: &PathBuf, limit: usize) -> Result<Vec<f64>> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(FlafError::InvalidConfig(format!(
            "{}: expected 16-bit PCM mono",
            path.display()
        )));
    }
    let take = if limit == 0 { usize::MAX } else { limit };
    reader
        .samples::<i16>()
        .take(take)
        .map(|s| Ok(f64::from(s?) / 32768.0))
        .collect()
}

fn peak_normalize(v: &mut [f64]) {
    let peak = v.iter().map(|s| s.abs()).fold(0.0, f64::max);
    if peak > 0.0 {
        v.iter_mut().for_each(|s| *s /= peak);
    }
}

fn apply_volume(x: &mut [f64], schedule: &[(usize, f64)]) {
    for (i, &(start, gain)) in schedule.iter().enumerate() {
        let end = schedule.get(i + 1).map_or(x.len(), |n| n.0.min(x.len()));
        if start < end {
            x[start..end].iter_mut().for_each(|s| *s *= gain);
        }
    }
}

/// Generate the far-end and microphone streams. Deterministic in the
/// config, including its seeds.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioStream> {
    config.validate()?;
    let n = config.duration_samples;
    let mut x = match &config.source {
        SourceKind::WavFile { path } => read_wav(path, n)?,
        SourceKind::WhiteGaussian | SourceKind::ColoredAr1 { .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SOURCE_STREAM);
            let white: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut s = match config.source {
                SourceKind::ColoredAr1 { alpha } => ar1_colorize(&white, alpha)?,
                _ => white,
            };
            peak_normalize(&mut s);
            s
        }
    };
    apply_volume(&mut x, &config.volume_schedule);

    let distorted: Vec<f64> = match config.nonlinearity {
        Nonlinearity::None => x.clone(),
        Nonlinearity::SoftClip { zeta } => x.iter().map(|&v| soft_clip(v, zeta)).collect::<Result<_>>()?,
        Nonlinearity::Composite => (0..x.len())
            .map(|i| composite_nl(x[i], if i >= 4 { x[i - 4] } else { 0.0 }))
            .collect::<Result<_>>()?,
    };
    let rir = generate_rir(&config.rir)?;
    let echo = convolve(&distorted, &rir);

    let noise = if config.snr_db == f64::INFINITY {
        vec![0.0; echo.len()]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ NOISE_STREAM);
        let raw: Vec<f64> = (0..echo.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let es = echo.iter().map(|v| v * v).sum::<f64>();
        let en = raw.iter().map(|v| v * v).sum::<f64>();
        let scale = if en > 0.0 { (es / en / 10f64.powf(config.snr_db / 10.0)).sqrt() } else { 0.0 };
        raw.into_iter().map(|v| v * scale).collect()
    };
    let d = echo.iter().zip(&noise).map(|(s, v)| s + v).collect();
    Ok(ScenarioStream { x, d, echo, noise, rir })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ScenarioConfig {
        ScenarioConfig {
            source: SourceKind::WhiteGaussian,
            nonlinearity: Nonlinearity::None,
            rir: RirSpec { t60_ms: 150.0, length: 32, fs: 8000.0, seed: 3 },
            snr_db: f64::INFINITY,
            duration_samples: 2000,
            seed: 1,
            volume_schedule: Vec::new(),
        }
    }

    #[test]
    fn soft_clip_branches() {
        assert_eq!(soft_clip(0.0, 0.3).unwrap(), 0.0);
        assert!((soft_clip(0.1, 0.2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((soft_clip(0.3, 0.2).unwrap() - 11.0 / 12.0).abs() < 1e-15);
        assert_eq!(soft_clip(0.5, 0.2).unwrap(), 1.0);
        assert_eq!(soft_clip(-0.3, 0.2).unwrap(), -soft_clip(0.3, 0.2).unwrap());
        assert_eq!(soft_clip(1.7, 0.2).unwrap(), 1.0);
        assert!(soft_clip(0.1, 0.0).is_err());
        assert!(soft_clip(0.1, 0.51).is_err());
    }

    #[test]
    fn composite_values() {
        let v = composite_nl(0.0, 0.0).unwrap();
        let expect = 0.6 * (-1.0f64).sin().powi(3) - 0.1 + 1.125;
        assert!((v - expect).abs() < 1e-15);
        assert!((v - 0.6675).abs() < 1e-4);
        let a = composite_nl(0.5, 0.0).unwrap();
        let b = composite_nl(0.5, 0.5).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn ar1_identity_and_bad_alpha() {
        let w = [0.3, -1.2, 0.5];
        assert_eq!(ar1_colorize(&w, 0.0).unwrap(), w.to_vec());
        assert!(ar1_colorize(&w, 1.0).is_err());
    }

    #[test]
    fn rir_envelope_and_norm() {
        let e = rir_envelope(1200, 8000.0, 150.0) / rir_envelope(0, 8000.0, 150.0);
        assert!((e - 1e-3).abs() < 1e-15);
        let h = generate_rir(&RirSpec { t60_ms: f64::INFINITY, length: 64, fs: 8000.0, seed: 1 })
            .unwrap();
        assert!((h.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        let spec = RirSpec { t60_ms: 150.0, length: 300, fs: 8000.0, seed: 9 };
        assert_eq!(generate_rir(&spec).unwrap(), generate_rir(&spec).unwrap());
    }

    #[test]
    fn noiseless_linear_scenario_is_convolution() {
        let s = run_scenario(&base()).unwrap();
        assert_eq!(s.d, convolve(&s.x, &s.rir));
        assert!(s.x.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn snr_is_met() {
        let s = run_scenario(&ScenarioConfig { snr_db: 20.0, ..base() }).unwrap();
        let es: f64 = s.echo.iter().map(|v| v * v).sum();
        let en: f64 = s.noise.iter().map(|v| v * v).sum();
        assert!((10.0 * (es / en).log10() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn volume_schedule_scales() {
        let cfg = ScenarioConfig { volume_schedule: vec![(0, 1.0), (1000, 0.5)], ..base() };
        let a = run_scenario(&base()).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a.x[..1000], b.x[..1000]);
        for (u, v) in a.x[1000..].iter().zip(&b.x[1000..]) {
            assert_eq!(u * 0.5, *v);
        }
    }

    #[test]
    fn config_validation() {
        let bad_zeta = ScenarioConfig { nonlinearity: Nonlinearity::SoftClip { zeta: 0.7 }, ..base() };
        assert!(run_scenario(&bad_zeta).is_err());
        let bad_alpha = ScenarioConfig { source: SourceKind::ColoredAr1 { alpha: -1.0 }, ..base() };
        assert!(run_scenario(&bad_alpha).is_err());
        let bad_snr = ScenarioConfig { snr_db: f64::NAN, ..base() };
        assert!(run_scenario(&bad_snr).is_err());
        let missing = ScenarioConfig {
            source: SourceKind::WavFile { path: "/nonexistent/file.wav".into() },
            ..base()
        };
        assert!(matches!(run_scenario(&missing), Err(FlafError::Wav(_))));
    }
}
