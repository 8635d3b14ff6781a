//! Machine-readable run report and the two summary tables.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::geometry::Point3;
use crate::metrics::{ErrorSummary, EvaluationReport, PairwiseError};
use crate::pipeline::{RunConfig, RunOutcome, TargetFailure};
use crate::registration::RegistrationMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationSummary {
    pub mode: RegistrationMode,
    pub rotation_deg: f64,
    /// Row-major 2×2.
    pub rotation: [[f64; 2]; 2],
    pub translation: [f64; 2],
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEntry {
    pub target_id: String,
    pub estimated: Point3,
    /// Estimate after registration; absent when nothing was registered.
    pub registered: Option<Point3>,
    pub ground_truth: Point3,
    /// Absolute error; absent when nothing was registered.
    pub error: Option<f64>,
    pub registration_residual: Option<f64>,
    pub sample_spread: Point3,
    pub samples: usize,
    pub retries_used: usize,
}

/// Top-level JSON report. Metric fields are `null` when fewer than two
/// targets were estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub relative_error: Option<ErrorSummary>,
    pub absolute_error: Option<ErrorSummary>,
    pub pairwise: Vec<PairwiseError>,
    pub per_target: Vec<TargetEntry>,
    pub registration: Option<RegistrationSummary>,
    pub failures: Vec<TargetFailure>,
    pub config_echo: RunConfig,
}

impl ReportDocument {
    pub fn from_outcome(outcome: &RunOutcome) -> Self {
        let report = outcome.report.as_ref();
        let per_target = outcome
            .estimates
            .iter()
            .map(|e| {
                let truth = outcome
                    .ground_truth
                    .iter()
                    .find(|g| g.target_id == e.target_id)
                    .map(|g| g.position)
                    .unwrap_or_default();
                let idx = report.and_then(|r| r.pairs.iter().position(|p| p.target_id == e.target_id));
                let reg = report.zip(idx);
                TargetEntry {
                    target_id: e.target_id.clone(),
                    estimated: e.position,
                    registered: reg.map(|(r, _)| r.registration.transform.apply(&e.position)),
                    ground_truth: truth,
                    error: reg.map(|(r, i)| r.per_target_errors[i].error),
                    registration_residual: reg.map(|(r, i)| r.registration.residuals[i]),
                    sample_spread: e.sample_spread,
                    samples: e.sample_positions.len(),
                    retries_used: e.retries_used,
                }
            })
            .collect();
        Self {
            relative_error: report.map(|r| r.relative),
            absolute_error: report.map(|r| r.absolute),
            pairwise: report.map(|r| r.pairwise_errors.clone()).unwrap_or_default(),
            per_target,
            registration: report.map(|r| registration_summary(r, outcome.config.registration_mode)),
            failures: outcome.failures.clone(),
            config_echo: outcome.config.clone(),
        }
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn registration_summary(r: &EvaluationReport, mode: RegistrationMode) -> RegistrationSummary {
    let t = &r.registration.transform;
    let m = t.rotation();
    RegistrationSummary {
        mode,
        rotation_deg: t.angle().to_degrees(),
        rotation: [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]],
        translation: [t.translation().x, t.translation().y],
        objective: r.registration.objective,
        iterations: r.registration.iterations,
    }
}

/// One row per sequence: `sequence,E_rel,sigma_rel` then one column per
/// target pair, headed `<a> & <b>`. Pair columns follow the first report.
pub fn write_relative_table<W: Write>(rows: &[(&str, &EvaluationReport)], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some((_, first)) = rows.first() else {
        return w.flush().map_err(Into::into);
    };
    let mut header = vec!["sequence".to_string(), "E_rel".into(), "sigma_rel".into()];
    header.extend(first.pairwise_errors.iter().map(|p| format!("{} & {}", p.id_a, p.id_b)));
    w.write_record(&header)?;
    for (seq, r) in rows {
        let mut rec = vec![seq.to_string(), fmt(r.relative.mean), fmt(r.relative.std)];
        rec.extend(first.pairwise_errors.iter().map(|col| {
            r.pairwise_errors
                .iter()
                .find(|p| p.id_a == col.id_a && p.id_b == col.id_b)
                .map(|p| fmt(p.error))
                .unwrap_or_default()
        }));
        w.write_record(&rec)?;
    }
    w.flush().map_err(Into::into)
}

/// One row per sequence: `sequence,E_abs,sigma_abs` then one column per
/// target. Target columns follow the first report.
pub fn write_absolute_table<W: Write>(rows: &[(&str, &EvaluationReport)], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some((_, first)) = rows.first() else {
        return w.flush().map_err(Into::into);
    };
    let mut header = vec!["sequence".to_string(), "E_abs".into(), "sigma_abs".into()];
    header.extend(first.per_target_errors.iter().map(|t| t.target_id.clone()));
    w.write_record(&header)?;
    for (seq, r) in rows {
        let mut rec = vec![seq.to_string(), fmt(r.absolute.mean), fmt(r.absolute.std)];
        rec.extend(first.per_target_errors.iter().map(|col| {
            r.per_target_errors.iter().find(|t| t.target_id == col.target_id).map(|t| fmt(t.error)).unwrap_or_default()
        }));
        w.write_record(&rec)?;
    }
    w.flush().map_err(Into::into)
}

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}
