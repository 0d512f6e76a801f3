//! Benchmark harness: relative-error and wall-clock comparisons between
//! exact pairwise partial transport and its embedded approximation.
//!
//! Work runs on a rayon pool sized by the caller (the binary reads
//! `LOPT_THREADS`); records are sorted by key before they are written, so the
//! schedule never leaks into the output bytes.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use lopt_core::embeddings::{lopt_embed, lopt_discrepancy, LoptEmbedding};
use lopt_core::{solve_opt, DiscreteMeasure, Error, Result};

use crate::datagen::generate_gaussians;

/// Partial-transport costs at or below this are treated as exact zeros when
/// they appear in a denominator.
const ZERO_COST: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    RelativeError,
    Timing,
}

impl RecordKind {
    fn as_str(self) -> &'static str {
        match self {
            RecordKind::RelativeError => "relative_error",
            RecordKind::Timing => "timing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    OptPairwise,
    Lopt,
}

impl Method {
    fn as_str(self) -> &'static str {
        match self {
            Method::OptPairwise => "opt_pairwise",
            Method::Lopt => "lopt",
        }
    }
}

/// One benchmark measurement with full provenance. `value` is a mean relative
/// error (dimensionless) or a wall-clock duration in seconds, depending on
/// `kind`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub kind: RecordKind,
    pub method: Method,
    pub n: usize,
    pub k: usize,
    pub lambda: f64,
    pub trial: usize,
    pub seed: u64,
    pub value: f64,
}

impl ExperimentRecord {
    pub const CSV_HEADER: &'static str = "kind,method,n,k,lambda,trial,seed,value";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.kind.as_str(),
            self.method.as_str(),
            self.n,
            self.k,
            self.lambda,
            self.trial,
            self.seed,
            self.value
        )
    }

    fn sort_key(&self) -> (u8, u8, usize, usize, f64, usize) {
        let kind = match self.kind {
            RecordKind::RelativeError => 0,
            RecordKind::Timing => 1,
        };
        let method = match self.method {
            Method::OptPairwise => 0,
            Method::Lopt => 1,
        };
        (kind, method, self.n, self.k, self.lambda, self.trial)
    }
}

pub fn write_records_csv(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    let mut out = String::from(ExperimentRecord::CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Pairs whose exact cost is zero are excluded from the relative-error mean;
/// this records how many were dropped per `(lambda, trial)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SkippedPairs {
    pub lambda: f64,
    pub trial: usize,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct RelativeErrorReport {
    pub records: Vec<ExperimentRecord>,
    pub skipped: Vec<SkippedPairs>,
}

fn build_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Numerical(format!("cannot build worker pool: {e}")))
}

fn pair_indices(k: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            pairs.push((i, j));
        }
    }
    pairs
}

fn embed_all(
    reference: &DiscreteMeasure,
    measures: &[DiscreteMeasure],
    lambda: f64,
) -> Result<Vec<LoptEmbedding>> {
    measures
        .par_iter()
        .map(|m| lopt_embed(reference, m, lambda))
        .collect()
}

/// Mean relative error of the embedded approximation against exact pairwise
/// costs, per `(lambda, trial)`. Trial `t` regenerates data with seed
/// `seed + t`; the embedded side evaluates with the deficit correction on,
/// since the task here is approximating the exact cost.
pub fn bench_relative_error(
    n: usize,
    k: usize,
    lambdas: &[f64],
    trials: usize,
    seed: u64,
    threads: usize,
) -> Result<RelativeErrorReport> {
    if k < 2 {
        return Err(Error::InvalidParameter("relative error needs k >= 2".into()));
    }
    if lambdas.is_empty() || trials == 0 {
        return Err(Error::InvalidParameter("need at least one lambda and one trial".into()));
    }
    let pool = build_pool(threads)?;
    let pairs = pair_indices(k);

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for trial in 0..trials {
        let trial_seed = seed + trial as u64;
        let fam = generate_gaussians(n, k, trial_seed)?;
        for &lambda in lambdas {
            let (errors, skips) = pool.install(|| -> Result<(Vec<f64>, usize)> {
                let embeddings = embed_all(&fam.reference, &fam.measures, lambda)?;
                let per_pair: Vec<Option<f64>> = pairs
                    .par_iter()
                    .map(|(i, j)| -> Result<Option<f64>> {
                        let exact =
                            solve_opt(&fam.measures[*i], &fam.measures[*j], lambda)?.cost;
                        if exact <= ZERO_COST {
                            return Ok(None);
                        }
                        let approx = lopt_discrepancy(
                            &embeddings[*i],
                            &embeddings[*j],
                            &fam.reference,
                            true,
                        )?;
                        Ok(Some((exact - approx).abs() / exact))
                    })
                    .collect::<Result<_>>()?;
                let mut errors = Vec::new();
                let mut skips = 0usize;
                for e in per_pair {
                    match e {
                        Some(v) => errors.push(v),
                        None => skips += 1,
                    }
                }
                Ok((errors, skips))
            })?;
            let mean = if errors.is_empty() {
                0.0
            } else {
                errors.iter().sum::<f64>() / errors.len() as f64
            };
            records.push(ExperimentRecord {
                kind: RecordKind::RelativeError,
                method: Method::Lopt,
                n,
                k,
                lambda,
                trial,
                seed: trial_seed,
                value: mean,
            });
            if skips > 0 {
                skipped.push(SkippedPairs { lambda, trial, count: skips });
            }
        }
    }
    records.sort_by(|a, b| a.sort_key().partial_cmp(&b.sort_key()).unwrap());
    Ok(RelativeErrorReport { records, skipped })
}

/// Wall-clock comparison on one generated family: all pairwise exact solves
/// versus `k` embeddings plus all pairwise embedded evaluations. Both sides
/// run on the same pool.
pub fn bench_timing(
    n: usize,
    k: usize,
    lambda: f64,
    seed: u64,
    threads: usize,
) -> Result<Vec<ExperimentRecord>> {
    if k < 2 {
        return Err(Error::InvalidParameter("timing needs k >= 2".into()));
    }
    let pool = build_pool(threads)?;
    let fam = generate_gaussians(n, k, seed)?;
    let pairs = pair_indices(k);

    let start = Instant::now();
    pool.install(|| -> Result<()> {
        pairs
            .par_iter()
            .map(|(i, j)| solve_opt(&fam.measures[*i], &fam.measures[*j], lambda).map(|_| ()))
            .collect::<Result<()>>()
    })?;
    let opt_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    pool.install(|| -> Result<()> {
        let embeddings = embed_all(&fam.reference, &fam.measures, lambda)?;
        pairs
            .par_iter()
            .map(|(i, j)| {
                lopt_discrepancy(&embeddings[*i], &embeddings[*j], &fam.reference, true)
                    .map(|_| ())
            })
            .collect::<Result<()>>()
    })?;
    let lopt_seconds = start.elapsed().as_secs_f64();

    let record = |method: Method, value: f64| ExperimentRecord {
        kind: RecordKind::Timing,
        method,
        n,
        k,
        lambda,
        trial: 0,
        seed,
        value,
    };
    Ok(vec![record(Method::OptPairwise, opt_seconds), record(Method::Lopt, lopt_seconds)])
}
