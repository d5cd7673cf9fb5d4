//! Config-driven benchmark runs and the partition-correlation analysis.

pub mod config;
pub mod runner;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{FlafError, Result};
use crate::pbfd::{estimate_bin_correlations, tridiag_condition, AnalysisReport};

pub use config::{AlgorithmConfig, AlgorithmKind, ExperimentConfig};
pub use runner::{
    build_filter, run_experiment, run_filter, write_outputs, AlgorithmReport, BlockFilter, FilterRun, RunOutput,
};

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "FLAF_OUTPUT_DIR";

/// Bundled configurations, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("table2", include_str!("../../presets/table2.toml")),
    ("table3", include_str!("../../presets/table3.toml")),
    ("table4-z0.40", include_str!("../../presets/table4-z0.40.toml")),
    ("table4-z0.30", include_str!("../../presets/table4-z0.30.toml")),
    ("table4-z0.18", include_str!("../../presets/table4-z0.18.toml")),
    ("table4-z0.08", include_str!("../../presets/table4-z0.08.toml")),
    ("table5-z0.40", include_str!("../../presets/table5-z0.40.toml")),
    ("table5-z0.30", include_str!("../../presets/table5-z0.30.toml")),
    ("table5-z0.18", include_str!("../../presets/table5-z0.18.toml")),
    ("table5-z0.08", include_str!("../../presets/table5-z0.08.toml")),
    ("table6", include_str!("../../presets/table6.toml")),
    ("table7", include_str!("../../presets/table7.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Parse a bundled preset. WAV paths stay relative to the working directory.
pub fn load_preset(name: &str) -> Result<ExperimentConfig> {
    let text = preset(name).ok_or_else(|| FlafError::InvalidConfig(format!("unknown preset `{name}`")))?;
    ExperimentConfig::from_toml_str(text, None)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrAnalysis {
    pub filter_len: usize,
    pub hop: usize,
    pub partitions: usize,
    pub n_blocks: usize,
    pub seed: u64,
}

/// Estimate partition correlations of seeded white noise for `bins`.
pub fn analyze_corr(spec: &CorrAnalysis, bins: &[usize]) -> Result<Vec<AnalysisReport>> {
    if spec.hop == 0 || spec.filter_len % spec.hop != 0 {
        return Err(FlafError::InvalidConfig(format!(
            "filter length {} must be a positive multiple of block length {}",
            spec.filter_len, spec.hop
        )));
    }
    let p = spec.filter_len / spec.hop;
    let len = (p * spec.partitions + spec.n_blocks) * spec.hop;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let x: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    estimate_bin_correlations(&x, spec.filter_len, spec.hop, spec.partitions, bins, spec.n_blocks)
}

/// CSV with one row per bin. `cond_tridiag` is left empty when the
/// tridiagonal model is singular for the estimated `|α|`.
pub fn write_corr_csv<W: Write>(out: W, spec: &CorrAnalysis, reports: &[AnalysisReport]) -> Result<()> {
    let expected = spec.hop as f64 / (spec.filter_len + spec.hop) as f64;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "bin",
        "alpha_re",
        "alpha_im",
        "alpha_abs",
        "alpha_abs_expected",
        "cond_est",
        "cond_tridiag",
    ])?;
    for r in reports {
        let a = r.alpha_est;
        let tri = tridiag_condition(spec.partitions, a.norm()).map(|c| format!("{c:.6}")).unwrap_or_default();
        w.write_record([
            r.bin.to_string(),
            format!("{:.6}", a.re),
            format!("{:.6}", a.im),
            format!("{:.6}", a.norm()),
            format!("{expected:.6}"),
            format!("{:.6}", r.cond),
            tri,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for (name, _) in PRESETS {
            let c = load_preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(!c.algorithms.is_empty());
        }
        assert!(load_preset("nope").is_err());
    }

    #[test]
    fn table2_matches_experiment_setup() {
        let c = load_preset("table2").unwrap();
        assert_eq!(c.scenario.duration_samples, 40000);
        let flaf: Vec<_> = c.algorithms.iter().filter(|a| a.kind == AlgorithmKind::PbfdFlaf).collect();
        assert_eq!(flaf.len(), 5);
        for a in flaf {
            assert_eq!(a.params.filter_len, 300);
            assert_eq!(a.partitions, Some(4));
            assert_eq!((a.params.mu_lin, a.params.mu_nl, a.params.power_init), (0.01, 0.001, 1e-3));
            assert_eq!(a.expansion.as_ref().unwrap().input_len, 128);
        }
    }

    #[test]
    fn corr_csv_has_one_row_per_bin() {
        let spec = CorrAnalysis { filter_len: 8, hop: 8, partitions: 2, n_blocks: 200, seed: 3 };
        let reports = analyze_corr(&spec, &[0, 1, 2]).unwrap();
        let mut buf = Vec::new();
        write_corr_csv(&mut buf, &spec, &reports).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("bin,alpha_re"));
    }
}
