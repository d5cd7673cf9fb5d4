use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::error::{FlafError, Result};
use crate::experiment::config::{AlgorithmConfig, AlgorithmKind, ExperimentConfig};
use crate::fd_flaf::FdFlaf;
use crate::metrics::{erle, ErleTrace};
use crate::ops::OpCounter;
use crate::pbfd::PbfdFlaf;
use crate::scenario::{run_scenario, ScenarioStream};
use crate::split_time::FlafTd;

/// Common driver interface over the three filter families.
pub trait BlockFilter: Send {
    fn block_len(&self) -> usize;
    fn process_block(&mut self, x: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
    fn ops(&self) -> OpCounter;
    fn expansion_ops(&self) -> OpCounter;
}

impl BlockFilter for FdFlaf {
    fn block_len(&self) -> usize {
        self.hop()
    }
    fn process_block(&mut self, x: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        FdFlaf::process_block(self, x, d)
    }
    fn ops(&self) -> OpCounter {
        FdFlaf::ops(self)
    }
    fn expansion_ops(&self) -> OpCounter {
        FdFlaf::expansion_ops(self)
    }
}

impl BlockFilter for PbfdFlaf {
    fn block_len(&self) -> usize {
        self.hop()
    }
    fn process_block(&mut self, x: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        PbfdFlaf::process_block(self, x, d)
    }
    fn ops(&self) -> OpCounter {
        PbfdFlaf::ops(self)
    }
    fn expansion_ops(&self) -> OpCounter {
        PbfdFlaf::expansion_ops(self)
    }
}

struct TimeDomain {
    inner: FlafTd,
    block: usize,
}

impl BlockFilter for TimeDomain {
    fn block_len(&self) -> usize {
        self.block
    }
    fn process_block(&mut self, x: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.inner.process_block(x, d)
    }
    fn ops(&self) -> OpCounter {
        self.inner.ops()
    }
    fn expansion_ops(&self) -> OpCounter {
        self.inner.expansion_ops()
    }
}

/// Instantiate the filter described by `alg`.
pub fn build_filter(alg: &AlgorithmConfig) -> Result<Box<dyn BlockFilter>> {
    let p = alg.params.clone();
    let exp = alg.expansion.clone();
    Ok(match alg.kind {
        AlgorithmKind::FdFlaf => Box::new(FdFlaf::init(p, exp)?),
        AlgorithmKind::LinearPbfdaf | AlgorithmKind::PbfdFlaf => {
            let parts = alg.partitions.unwrap_or_else(|| p.filter_len.div_ceil(p.hop));
            Box::new(PbfdFlaf::init(p, parts, exp)?)
        }
        AlgorithmKind::FlafTd => Box::new(TimeDomain {
            block: p.hop,
            inner: FlafTd::new(p.filter_len, exp, p.mu_lin, p.mu_nl, p.reg)?,
        }),
    })
}

#[derive(Debug, Clone)]
pub struct AlgorithmReport {
    pub label: String,
    pub kind: AlgorithmKind,
    pub e: Vec<f64>,
    pub erle: ErleTrace,
    /// First sample of the block at which the weights blew up. The residual
    /// equals `d` from there on.
    pub diverged_at: Option<usize>,
    pub mults_per_sample: f64,
    pub adds_per_sample: f64,
    pub expansion_mults_per_sample: f64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub stream: ScenarioStream,
    /// Sorted by descending mean ERLE, ties broken by label.
    pub reports: Vec<AlgorithmReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub e: Vec<f64>,
    pub diverged_at: Option<usize>,
    /// Samples fed to the filter, zero padding included.
    pub processed: usize,
}

/// Stream `x`/`d` through a filter block by block. The final partial block
/// is zero-padded and the padding trimmed from the residual.
pub fn run_filter(filter: &mut dyn BlockFilter, x: &[f64], d: &[f64]) -> Result<FilterRun> {
    if x.len() != d.len() {
        return Err(FlafError::SizeMismatch { expected: x.len(), got: d.len() });
    }
    let l = filter.block_len();
    let mut e = Vec::with_capacity(x.len());
    let (mut xb, mut db) = (vec![0.0; l], vec![0.0; l]);
    let mut start = 0;
    while start < x.len() {
        let n = l.min(x.len() - start);
        xb.fill(0.0);
        db.fill(0.0);
        xb[..n].copy_from_slice(&x[start..start + n]);
        db[..n].copy_from_slice(&d[start..start + n]);
        match filter.process_block(&xb, &db) {
            Ok((_, eb)) => e.extend_from_slice(&eb[..n]),
            Err(FlafError::Divergence(_)) => {
                e.extend_from_slice(&d[start..]);
                return Ok(FilterRun { e, diverged_at: Some(start), processed: start + l });
            }
            Err(err) => return Err(err),
        }
        start += n;
    }
    let processed = x.len().div_ceil(l) * l;
    Ok(FilterRun { e, diverged_at: None, processed })
}

fn run_one(
    alg: &AlgorithmConfig,
    stream: &ScenarioStream,
    window: usize,
    warmup: usize,
) -> Result<AlgorithmReport> {
    let t0 = Instant::now();
    let mut filter = build_filter(alg)?;
    let FilterRun { e, diverged_at, processed } = run_filter(filter.as_mut(), &stream.x, &stream.d)?;
    let elapsed = t0.elapsed();
    let n = processed.max(1) as f64;
    let ops = filter.ops();
    Ok(AlgorithmReport {
        label: alg.label.clone(),
        kind: alg.kind,
        erle: erle(&stream.d, &e, window, warmup)?,
        e,
        diverged_at,
        mults_per_sample: ops.mults as f64 / n,
        adds_per_sample: ops.adds as f64 / n,
        expansion_mults_per_sample: filter.expansion_ops().mults as f64 / n,
        elapsed,
    })
}

/// Generate the scenario once and run every algorithm on it, one thread per
/// algorithm.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    let stream = run_scenario(&config.scenario)?;
    let results: Vec<Result<AlgorithmReport>> = std::thread::scope(|s| {
        let handles: Vec<_> = config
            .algorithms
            .iter()
            .map(|alg| {
                let stream = &stream;
                s.spawn(move || run_one(alg, stream, config.erle_window, config.warmup_samples))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(FlafError::InvalidInput("worker panicked".into()))))
            .collect()
    });
    let mut reports = results.into_iter().collect::<Result<Vec<_>>>()?;
    reports.sort_by(|a, b| b.erle.mean_db.total_cmp(&a.erle.mean_db).then_with(|| a.label.cmp(&b.label)));
    Ok(RunOutput { stream, reports })
}

/// Write `<label>.csv` traces and `summary.csv` into `dir`.
pub fn write_outputs(dir: &Path, out: &RunOutput, report_ops: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for r in &out.reports {
        let path = dir.join(format!("{}.csv", r.label));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["sample_index", "e", "erle_db"])?;
        for (i, (e, v)) in r.e.iter().zip(&r.erle.values).enumerate() {
            w.write_record([i.to_string(), e.to_string(), v.to_string()])?;
        }
        w.flush()?;
        written.push(path);
    }

    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec![
        "rank",
        "label",
        "algorithm",
        "mean_erle_db",
        "mean_erle_db_full",
        "diverged_at",
        "mults_per_sample",
        "expansion_mults_per_sample",
    ];
    if report_ops {
        header.push("adds_per_sample");
    }
    w.write_record(&header)?;
    for (rank, r) in out.reports.iter().enumerate() {
        let mut row = vec![
            (rank + 1).to_string(),
            r.label.clone(),
            r.kind.to_string(),
            format!("{:.4}", r.erle.mean_db),
            format!("{:.4}", r.erle.mean_db_full),
            r.diverged_at.map(|v| v.to_string()).unwrap_or_default(),
            format!("{:.2}", r.mults_per_sample),
            format!("{:.2}", r.expansion_mults_per_sample),
        ];
        if report_ops {
            row.push(format!("{:.2}", r.adds_per_sample));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    written.push(path);
    Ok(written)
}
