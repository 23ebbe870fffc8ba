//! Metrics rows, CSV I/O with deterministic float formatting, and the
//! per-round summarizer.

use std::io::{Read, Write};

use super::HarnessError;
use crate::estimators::math;

/// One scored estimate: full key plus value, truth, and query accounting.
/// Undefined values (failed rounds, undefined truths) stay empty in the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub trial: u32,
    pub round: u32,
    pub estimator: String,
    pub aggregate: String,
    pub estimate: Option<f64>,
    pub truth: Option<f64>,
    /// `|estimate - truth| / |truth|` when both are defined and truth != 0.
    pub rel_error: Option<f64>,
    pub queries: u32,
    pub cum_queries: u64,
}

impl MetricsRow {
    pub fn compute_rel_error(estimate: Option<f64>, truth: Option<f64>) -> Option<f64> {
        match (estimate, truth) {
            (Some(e), Some(t)) if t != 0.0 => Some((e - t).abs() / t.abs()),
            _ => None,
        }
    }
}

/// 17 significant decimal digits: enough to reproduce any f64 bit pattern,
/// so equal runs produce byte-identical files.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn parse_opt(field: &str, line: usize) -> Result<Option<f64>, HarnessError> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|e| HarnessError::Parse {
            line,
            message: format!("bad float `{field}`: {e}"),
        })
}

pub const METRICS_HEADER: [&str; 9] = [
    "trial",
    "round",
    "estimator",
    "aggregate",
    "estimate",
    "truth",
    "rel_error",
    "queries",
    "cum_queries",
];

pub fn write_metrics_csv<W: Write>(writer: W, rows: &[MetricsRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record([
            r.trial.to_string(),
            r.round.to_string(),
            r.estimator.clone(),
            r.aggregate.clone(),
            fmt_opt(r.estimate),
            fmt_opt(r.truth),
            fmt_opt(r.rel_error),
            r.queries.to_string(),
            r.cum_queries.to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(reader: R) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| HarnessError::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |idx: usize| -> Result<&str, HarnessError> {
            record.get(idx).ok_or(HarnessError::Parse {
                line,
                message: format!("missing column {idx}"),
            })
        };
        let parse_int = |s: &str| -> Result<u64, HarnessError> {
            s.parse().map_err(|e| HarnessError::Parse {
                line,
                message: format!("bad integer `{s}`: {e}"),
            })
        };
        rows.push(MetricsRow {
            trial: parse_int(field(0)?)? as u32,
            round: parse_int(field(1)?)? as u32,
            estimator: field(2)?.to_string(),
            aggregate: field(3)?.to_string(),
            estimate: parse_opt(field(4)?, line)?,
            truth: parse_opt(field(5)?, line)?,
            rel_error: parse_opt(field(6)?, line)?,
            queries: parse_int(field(7)?)? as u32,
            cum_queries: parse_int(field(8)?)?,
        });
    }
    Ok(rows)
}

/// Per-(round, estimator, aggregate) summary across trials.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub round: u32,
    pub estimator: String,
    pub aggregate: String,
    /// Trials with a defined estimate.
    pub n: usize,
    pub mean_estimate: Option<f64>,
    pub mean_truth: Option<f64>,
    /// Mean of (estimate - truth) over trials where both are defined.
    pub bias: Option<f64>,
    /// Bessel-corrected sample variance of the estimates; undefined for a
    /// single trial.
    pub variance: Option<f64>,
    pub mean_rel_error: Option<f64>,
    /// Error-bar endpoints: extremes of the raw estimates.
    pub min_estimate: Option<f64>,
    pub max_estimate: Option<f64>,
}

/// Groups rows by (round, estimator, aggregate) and reduces each group.
/// Input order does not matter; the output is sorted.
pub fn summarize(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(u32, &str, &str), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.round, r.estimator.as_str(), r.aggregate.as_str()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((round, estimator, aggregate), group)| {
            let estimates: Vec<f64> = group.iter().filter_map(|r| r.estimate).collect();
            let truths: Vec<f64> = group.iter().filter_map(|r| r.truth).collect();
            let errors: Vec<f64> = group
                .iter()
                .filter_map(|r| match (r.estimate, r.truth) {
                    (Some(e), Some(t)) => Some(e - t),
                    _ => None,
                })
                .collect();
            let rels: Vec<f64> = group.iter().filter_map(|r| r.rel_error).collect();
            SummaryRow {
                round,
                estimator: estimator.to_string(),
                aggregate: aggregate.to_string(),
                n: estimates.len(),
                mean_estimate: math::mean(&estimates),
                mean_truth: math::mean(&truths),
                bias: math::mean(&errors),
                variance: math::sample_variance(&estimates).ok(),
                mean_rel_error: math::mean(&rels),
                min_estimate: estimates.iter().copied().reduce(f64::min),
                max_estimate: estimates.iter().copied().reduce(f64::max),
            }
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "round",
        "estimator",
        "aggregate",
        "n",
        "mean_estimate",
        "mean_truth",
        "bias",
        "variance",
        "mean_rel_error",
        "min_estimate",
        "max_estimate",
    ])?;
    for r in rows {
        w.write_record([
            r.round.to_string(),
            r.estimator.clone(),
            r.aggregate.clone(),
            r.n.to_string(),
            fmt_opt(r.mean_estimate),
            fmt_opt(r.mean_truth),
            fmt_opt(r.bias),
            fmt_opt(r.variance),
            fmt_opt(r.mean_rel_error),
            fmt_opt(r.min_estimate),
            fmt_opt(r.max_estimate),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(())
}
