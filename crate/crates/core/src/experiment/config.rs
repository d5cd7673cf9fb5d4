//! TOML experiment description.
//!
//! ```toml
//! output_dir = "out/demo"
//! report_ops = true
//!
//! [scenario]
//! duration_samples = 8000
//! seed = 1
//! snr_db = 30.0
//! source = { kind = "white-gaussian" }
//! nonlinearity = { kind = "soft-clip", zeta = 0.2 }
//! rir = { t60_ms = 150.0, length = 64, fs = 8000.0, seed = 2 }
//!
//! [[algorithm]]
//! name = "fd-flaf"
//! filter_len = 64
//! block_len = 64
//! mu_lin = 0.5
//! mu_nl = 0.05
//! expansion = { kind = "chebyshev", order = 3, input_len = 16 }
//! ```
//!
//! Unknown keys are rejected. Range errors point at the offending value.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer};
use serde::Deserialize;
use toml::Spanned;

use crate::engine::FilterParams;
use crate::error::{FlafError, Result};
use crate::expansions::{ExpansionConfig, ExpansionKind};
use crate::metrics::DEFAULT_ERLE_WINDOW;
use crate::scenario::{Nonlinearity, RirSpec, ScenarioConfig, SourceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    LinearPbfdaf,
    FdFlaf,
    PbfdFlaf,
    FlafTd,
}

impl AlgorithmKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmKind::LinearPbfdaf => "linear-pbfdaf",
            AlgorithmKind::FdFlaf => "fd-flaf",
            AlgorithmKind::PbfdFlaf => "pbfd-flaf",
            AlgorithmKind::FlafTd => "flaf-td",
        }
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum KindName {
    Chebyshev,
    Legendre,
    Trigonometric,
    RandomVector,
    AdaptiveExponential,
}

impl From<KindName> for ExpansionKind {
    fn from(k: KindName) -> Self {
        match k {
            KindName::Chebyshev => ExpansionKind::Chebyshev,
            KindName::Legendre => ExpansionKind::Legendre,
            KindName::Trigonometric => ExpansionKind::Trigonometric,
            KindName::RandomVector => ExpansionKind::RandomVector,
            KindName::AdaptiveExponential => ExpansionKind::AdaptiveExponential,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpansionEntry {
    kind: KindName,
    #[serde(default, deserialize_with = "positive_usize_opt")]
    order: Option<usize>,
    #[serde(deserialize_with = "positive_usize")]
    input_len: usize,
    #[serde(default, deserialize_with = "positive_usize_opt")]
    expanded_len: Option<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default, deserialize_with = "non_negative")]
    ae_step: f64,
    #[serde(default, deserialize_with = "non_negative")]
    ae_init: f64,
}

impl ExpansionEntry {
    fn resolve(&self) -> std::result::Result<ExpansionConfig, String> {
        let kind = ExpansionKind::from(self.kind);
        let cfg = match kind {
            ExpansionKind::RandomVector => {
                if self.order.is_some() {
                    return Err("`order` does not apply to random-vector; set `expanded_len`".into());
                }
                let re = self.expanded_len.ok_or("random-vector needs `expanded_len`")?;
                ExpansionConfig::random_vector(re, self.input_len, self.seed)
            }
            _ => {
                if self.expanded_len.is_some() {
                    return Err(format!("`expanded_len` is derived for {kind:?}; remove it"));
                }
                let p = self.order.ok_or("missing `order`")?;
                match kind {
                    ExpansionKind::Chebyshev => ExpansionConfig::chebyshev(p, self.input_len),
                    ExpansionKind::Legendre => ExpansionConfig::legendre(p, self.input_len),
                    ExpansionKind::Trigonometric => ExpansionConfig::trigonometric(p, self.input_len),
                    _ => ExpansionConfig::adaptive_exponential(p, self.input_len, self.ae_step, self.ae_init),
                }
            }
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlgorithmEntry {
    name: AlgorithmKind,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    expansion: Option<ExpansionEntry>,
    #[serde(deserialize_with = "positive_usize")]
    filter_len: usize,
    #[serde(default, deserialize_with = "positive_usize_opt")]
    block_len: Option<usize>,
    #[serde(default, deserialize_with = "positive_usize_opt")]
    partitions: Option<usize>,
    #[serde(deserialize_with = "non_negative")]
    mu_lin: f64,
    #[serde(default, deserialize_with = "non_negative")]
    mu_nl: f64,
    #[serde(default = "default_lambda", deserialize_with = "forgetting")]
    lambda: f64,
    #[serde(default = "default_reg", deserialize_with = "positive")]
    reg: f64,
    #[serde(default = "default_power_init", deserialize_with = "positive")]
    power_init: f64,
    #[serde(default = "default_true")]
    constrained: bool,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum SourceEntry {
    WhiteGaussian,
    ColoredAr1 { alpha: f64 },
    WavFile { path: PathBuf },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum NonlinearityEntry {
    None,
    SoftClip { zeta: f64 },
    Composite,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RirEntry {
    #[serde(deserialize_with = "positive")]
    t60_ms: f64,
    #[serde(deserialize_with = "positive_usize")]
    length: usize,
    #[serde(default = "default_fs", deserialize_with = "positive")]
    fs: f64,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioEntry {
    duration_samples: usize,
    #[serde(default)]
    seed: u64,
    #[serde(deserialize_with = "snr")]
    snr_db: f64,
    source: SourceEntry,
    #[serde(default = "default_nonlinearity")]
    nonlinearity: NonlinearityEntry,
    rir: RirEntry,
    #[serde(default)]
    volume_schedule: Vec<(usize, f64)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    #[serde(default)]
    report_ops: bool,
    #[serde(default = "default_window", deserialize_with = "positive_usize")]
    erle_window: usize,
    #[serde(default)]
    warmup_samples: Option<usize>,
    scenario: Spanned<ScenarioEntry>,
    #[serde(rename = "algorithm")]
    algorithms: Vec<Spanned<AlgorithmEntry>>,
}

fn default_lambda() -> f64 {
    0.9
}
fn default_reg() -> f64 {
    1e-6
}
fn default_power_init() -> f64 {
    1e-3
}
fn default_true() -> bool {
    true
}
fn default_fs() -> f64 {
    8000.0
}
fn default_window() -> usize {
    DEFAULT_ERLE_WINDOW
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("flaf-out")
}
fn default_nonlinearity() -> NonlinearityEntry {
    NonlinearityEntry::None
}

fn positive_usize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<usize, D::Error> {
    let v = usize::deserialize(d)?;
    if v == 0 {
        return Err(de::Error::custom("must be at least 1"));
    }
    Ok(v)
}

fn positive_usize_opt<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<usize>, D::Error> {
    positive_usize(d).map(Some)
}

fn finite<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let v = f64::deserialize(d)?;
    if !v.is_finite() {
        return Err(de::Error::custom(format!("{v} is not finite")));
    }
    Ok(v)
}

fn non_negative<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let v = finite(d)?;
    if v < 0.0 {
        return Err(de::Error::custom(format!("{v} is negative")));
    }
    Ok(v)
}

fn positive<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let v = f64::deserialize(d)?;
    if !(v > 0.0) {
        return Err(de::Error::custom(format!("{v} must be positive")));
    }
    Ok(v)
}

fn forgetting<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let v = f64::deserialize(d)?;
    if !(v > 0.0 && v <= 1.0) {
        return Err(de::Error::custom(format!("{v} outside (0, 1]")));
    }
    Ok(v)
}

fn snr<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let v = f64::deserialize(d)?;
    if v.is_nan() || v == f64::NEG_INFINITY {
        return Err(de::Error::custom(format!("{v} is not a usable SNR (use inf for no noise)")));
    }
    Ok(v)
}

/// One algorithm of an experiment, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmConfig {
    pub kind: AlgorithmKind,
    /// Unique name used for the trace file and the summary row.
    pub label: String,
    pub expansion: Option<ExpansionConfig>,
    pub params: FilterParams,
    /// Partition count for the partitioned kinds.
    pub partitions: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub algorithms: Vec<AlgorithmConfig>,
    pub output_dir: PathBuf,
    pub report_ops: bool,
    pub erle_window: usize,
    pub warmup_samples: usize,
}

fn line_of(text: &str, span: Range<usize>) -> usize {
    text[..span.start.min(text.len())].matches('\n').count() + 1
}

impl ExperimentConfig {
    /// Parse and validate a configuration. Relative WAV paths are resolved
    /// against `base_dir` when given.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let doc: Document =
            toml::from_str(text).map_err(|e| FlafError::InvalidConfig(e.to_string().trim_end().to_string()))?;
        let at = |span: Range<usize>, msg: String| {
            FlafError::InvalidConfig(format!("line {}: {msg}", line_of(text, span)))
        };

        let scen_span = doc.scenario.span();
        let s = doc.scenario.into_inner();
        let source = match s.source {
            SourceEntry::WhiteGaussian => SourceKind::WhiteGaussian,
            SourceEntry::ColoredAr1 { alpha } => SourceKind::ColoredAr1 { alpha },
            SourceEntry::WavFile { path } => SourceKind::WavFile {
                path: match base_dir {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path,
                },
            },
        };
        let nonlinearity = match s.nonlinearity {
            NonlinearityEntry::None => Nonlinearity::None,
            NonlinearityEntry::SoftClip { zeta } => Nonlinearity::SoftClip { zeta },
            NonlinearityEntry::Composite => Nonlinearity::Composite,
        };
        let scenario = ScenarioConfig {
            source,
            nonlinearity,
            rir: RirSpec { t60_ms: s.rir.t60_ms, length: s.rir.length, fs: s.rir.fs, seed: s.rir.seed },
            snr_db: s.snr_db,
            duration_samples: s.duration_samples,
            seed: s.seed,
            volume_schedule: s.volume_schedule,
        };
        scenario.validate().map_err(|e| at(scen_span.clone(), format!("[scenario]: {e}")))?;

        if doc.algorithms.is_empty() {
            return Err(FlafError::InvalidConfig("no [[algorithm]] entries".into()));
        }
        let mut labels = HashSet::new();
        let mut algorithms = Vec::with_capacity(doc.algorithms.len());
        for entry in doc.algorithms {
            let span = entry.span();
            let a = entry.into_inner();
            let alg = resolve_algorithm(a).map_err(|m| at(span.clone(), m))?;
            if !labels.insert(alg.label.clone()) {
                return Err(at(span, format!("duplicate label `{}`", alg.label)));
            }
            algorithms.push(alg);
        }

        let n = scenario.duration_samples;
        let warmup_samples = match doc.warmup_samples {
            Some(w) if w >= n => {
                return Err(FlafError::InvalidConfig(format!(
                    "warmup_samples = {w} leaves nothing of a {n}-sample run"
                )))
            }
            Some(w) => w,
            None => ((scenario.rir.fs / 2.0).round() as usize).min(n / 2),
        };
        Ok(Self {
            scenario,
            algorithms,
            output_dir: doc.output_dir,
            report_ops: doc.report_ops,
            erle_window: doc.erle_window,
            warmup_samples,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, path.parent())
            .map_err(|e| match e {
                FlafError::InvalidConfig(m) => FlafError::InvalidConfig(format!("{}: {m}", path.display())),
                other => FlafError::InvalidConfig(format!("{}: {other}", path.display())),
            })
    }
}

fn resolve_algorithm(a: AlgorithmEntry) -> std::result::Result<AlgorithmConfig, String> {
    let expansion = a.expansion.as_ref().map(ExpansionEntry::resolve).transpose()?;
    if a.name == AlgorithmKind::LinearPbfdaf && expansion.is_some() {
        return Err("linear-pbfdaf takes no expansion".into());
    }
    let partitioned = matches!(a.name, AlgorithmKind::LinearPbfdaf | AlgorithmKind::PbfdFlaf);
    if !partitioned && a.partitions.is_some() {
        return Err(format!("`partitions` does not apply to {}", a.name));
    }
    let hop = match (a.name, a.block_len) {
        (AlgorithmKind::FlafTd, l) => l.unwrap_or(1),
        (_, Some(l)) => l,
        (_, None) => return Err(format!("{} needs `block_len`", a.name)),
    };
    let params = FilterParams {
        filter_len: a.filter_len,
        hop,
        mu_lin: a.mu_lin,
        mu_nl: a.mu_nl,
        lambda: a.lambda,
        reg: a.reg,
        power_init: a.power_init,
        constrained: a.constrained,
    };
    if a.name != AlgorithmKind::FlafTd {
        params.validate().map_err(|e| e.to_string())?;
    }
    let partitions = if partitioned {
        let needed = a.filter_len.div_ceil(hop);
        match a.partitions {
            Some(p) if p != needed => {
                return Err(format!(
                    "partitions = {p} does not cover filter_len = {} with block_len = {hop} (need {needed})",
                    a.filter_len
                ))
            }
            _ => Some(needed),
        }
    } else {
        None
    };
    let label = a.label.unwrap_or_else(|| match &expansion {
        Some(e) => format!("{}-{}", a.name, e.kind.short_name()),
        None => a.name.to_string(),
    });
    if label.is_empty() || label.contains(['/', '\\']) {
        return Err(format!("label `{label}` is not a usable file name"));
    }
    Ok(AlgorithmConfig { kind: a.name, label, expansion, params, partitions })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
output_dir = "x"

[scenario]
duration_samples = 800
snr_db = 30.0
source = { kind = "white-gaussian" }
rir = { t60_ms = 100.0, length = 16 }

[[algorithm]]
name = "pbfd-flaf"
filter_len = 16
block_len = 8
mu_lin = 0.5
mu_nl = 0.1
expansion = { kind = "trigonometric", order = 2, input_len = 4 }
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml_str(BASE, None).unwrap();
        assert_eq!(c.algorithms.len(), 1);
        let a = &c.algorithms[0];
        assert_eq!(a.label, "pbfd-flaf-tri");
        assert_eq!(a.partitions, Some(2));
        assert_eq!(a.params.lambda, 0.9);
        assert!(a.params.constrained);
        assert_eq!(c.warmup_samples, 400);
        assert_eq!(c.erle_window, DEFAULT_ERLE_WINDOW);
        let long = ExperimentConfig::from_toml_str(&BASE.replace("800", "80000"), None).unwrap();
        assert_eq!(long.warmup_samples, 4000);
    }

    #[test]
    fn warmup_must_leave_samples() {
        let text = BASE.replace("output_dir = \"x\"", "output_dir = \"x\"\nwarmup_samples = 800");
        let err = ExperimentConfig::from_toml_str(&text, None).unwrap_err().to_string();
        assert!(err.contains("warmup_samples"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let text = BASE.replace("mu_nl = 0.1", "mu_nl = 0.1\nmu_typo = 1.0");
        let err = ExperimentConfig::from_toml_str(&text, None).unwrap_err().to_string();
        assert!(err.contains("mu_typo"), "{err}");
        assert!(err.contains("line 16"), "{err}");
    }

    #[test]
    fn range_error_points_at_value() {
        let text = BASE.replace("mu_lin = 0.5", "mu_lin = -0.5");
        let err = ExperimentConfig::from_toml_str(&text, None).unwrap_err().to_string();
        assert!(err.contains("line 14"), "{err}");
        assert!(err.contains("negative"), "{err}");
    }

    #[test]
    fn cross_field_errors_name_the_entry() {
        let text = BASE.replace("block_len = 8", "block_len = 8\npartitions = 3");
        let err = ExperimentConfig::from_toml_str(&text, None).unwrap_err().to_string();
        assert!(err.contains("line 10") && err.contains("need 2"), "{err}");

        let text = BASE.replace("zeta", "z").replace("white-gaussian", "colored-ar1\", alpha = 1.5, x = \"");
        assert!(ExperimentConfig::from_toml_str(&text, None).is_err());

        let dup = format!("{BASE}\n[[algorithm]]\nname = \"pbfd-flaf\"\nfilter_len = 16\nblock_len = 8\nmu_lin = 0.5\nexpansion = {{ kind = \"trigonometric\", order = 2, input_len = 4 }}\n");
        let err = ExperimentConfig::from_toml_str(&dup, None).unwrap_err().to_string();
        assert!(err.contains("duplicate label"), "{err}");
    }

    #[test]
    fn random_vector_needs_expanded_len() {
        let text = BASE.replace(
            "{ kind = \"trigonometric\", order = 2, input_len = 4 }",
            "{ kind = \"random-vector\", input_len = 4 }",
        );
        assert!(ExperimentConfig::from_toml_str(&text, None).is_err());
        let text = BASE.replace(
            "{ kind = \"trigonometric\", order = 2, input_len = 4 }",
            "{ kind = \"random-vector\", input_len = 4, expanded_len = 16, seed = 9 }",
        );
        let c = ExperimentConfig::from_toml_str(&text, None).unwrap();
        assert_eq!(c.algorithms[0].expansion.as_ref().unwrap().expanded_len, 16);
    }
}
