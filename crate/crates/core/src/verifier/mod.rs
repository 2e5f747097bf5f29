//! The two verification procedures.
//!
//! [`tfm_verify`] checks the reference model's metrics against their bounds
//! and derives the replication margin `eps_max`. [`replicate_verify`] then
//! only needs the two prediction sets: if every per-sample discrepancy is
//! within `eps_max`, the replica inherits every verified bound.

mod report;
mod usecase;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::compare_outputs;
use crate::matrix::Matrix;
use crate::metrics::{
    build_lut, default_eps_grid, derive_margin_with, map_with_margin, metric_value, top_n_worst_case,
    BoundDirection, BudgetRule, Detection, GroundTruthBox, MetricBound, MetricContext, MetricKind,
};

pub use report::{emit_cdf, CdfTable, ReportConfig, ReportEnvelope, ReplicationSummary};
pub use usecase::{
    generate_usecase, generate_usecase_with, latin_hypercube, linear_like_model, lstm_like_model, suggest_bounds, Arch,
    Sampling, UseCase, FEATURES, LSTM_HIDDEN, WINDOW,
};

/// The data a reference model is validated on.
#[derive(Debug, Clone, Copy)]
pub enum TaskData<'a> {
    Regression {
        gt: &'a [f64],
        pred: &'a [f64],
    },
    Classification {
        logits: &'a Matrix,
        labels: &'a [usize],
    },
    Detection {
        detections: &'a [Detection<f64>],
        ground_truth: &'a [GroundTruthBox<f64>],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub metric: MetricKind,
    pub direction: BoundDirection,
    pub m1: f64,
    pub r: f64,
    pub pass: bool,
    /// `ε_M`; zero when the bound is violated.
    pub eps: f64,
    pub published_eps: Option<f64>,
    pub sound_eps: Option<f64>,
    pub discrepancy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfmVerdict {
    pub rule: BudgetRule,
    pub rows: Vec<VerdictRow>,
    /// Minimum margin over all rows; `None` when some bound is violated.
    pub eps_max: Option<f64>,
    pub pass: bool,
}

/// Checks each bound on the reference predictions and derives its margin.
/// Regression margins come from the budget formulas under `rule`; Top-N and
/// mAP margins come from inverting an `ε`-to-score lookup table.
pub fn tfm_verify(task: TaskData<'_>, bounds: &[MetricBound<f64>], rule: BudgetRule) -> Result<TfmVerdict> {
    if bounds.is_empty() {
        return Err(Error::Invalid("no metric bounds given".to_string()));
    }
    let ctx = match task {
        TaskData::Regression { gt, pred } => Some(MetricContext::from_data(gt, pred)?),
        _ => None,
    };
    let mut rows = Vec::with_capacity(bounds.len());
    for b in bounds {
        let row = match (task, b.metric) {
            (TaskData::Regression { gt, pred }, m) if m.is_regression() => {
                let m1 = metric_value(m, gt, pred)?;
                let ctx = ctx.as_ref().expect("regression context");
                let r = derive_margin_with(rule, b, m1, ctx)?;
                VerdictRow {
                    metric: m,
                    direction: b.direction,
                    m1,
                    r: b.r,
                    pass: r.feasible,
                    eps: r.eps,
                    published_eps: r.published_eps,
                    sound_eps: r.sound_eps,
                    discrepancy: r.discrepancy,
                }
            }
            (TaskData::Classification { logits, labels }, MetricKind::TopN) => {
                let n = b.params.n.unwrap_or(1);
                lut_row(b, |e| top_n_worst_case(logits, labels, n, e))?
            }
            (TaskData::Detection { detections, ground_truth }, MetricKind::Map) => {
                let t = b.params.iou_threshold.unwrap_or(0.5);
                lut_row(b, |e| match map_with_margin(detections, ground_truth, t, e) {
                    // A perturbation that can collapse a box scores nothing.
                    Err(Error::PreconditionViolated(_)) => Ok(0.0),
                    other => other,
                })?
            }
            (_, m) => {
                return Err(Error::Invalid(format!("metric {m} does not apply to this task")));
            }
        };
        rows.push(row);
    }
    let pass = rows.iter().all(|r| r.pass);
    let eps_max = pass.then(|| rows.iter().map(|r| r.eps).fold(f64::INFINITY, f64::min));
    Ok(TfmVerdict {
        rule,
        rows,
        eps_max,
        pass,
    })
}

fn lut_row<F>(b: &MetricBound<f64>, mut score: F) -> Result<VerdictRow>
where
    F: FnMut(f64) -> Result<f64>,
{
    let grid = b.params.eps_grid.clone().unwrap_or_else(default_eps_grid);
    let m1 = score(0.0)?;
    let pass = b.direction.holds(m1, b.r);
    let eps = if !pass {
        0.0
    } else {
        let lut = build_lut(&mut score, &grid)?;
        match lut.invert(b.r) {
            Ok(e) if score(e)? >= b.r => e,
            Ok(_) => lut.grid_floor(b.r).unwrap_or(0.0),
            // The score never drops below the target on this grid.
            Err(Error::TargetOutOfRange { .. }) => grid[grid.len() - 1],
            Err(e) => return Err(e),
        }
    };
    Ok(VerdictRow {
        metric: b.metric,
        direction: b.direction,
        m1,
        r: b.r,
        pass,
        eps,
        published_eps: None,
        sound_eps: None,
        discrepancy: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ReplicationStatus {
    Replicated,
    /// Some discrepancy exceeds the margin: nothing can be concluded.
    Inconclusive,
}

impl std::fmt::Display for ReplicationStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReplicationStatus::Replicated => "REPLICATED",
            ReplicationStatus::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationReport {
    /// Largest `|ε|` component of each sample.
    pub per_sample_max: Vec<f64>,
    pub max_abs_eps: f64,
    pub eps_max: f64,
    pub status: ReplicationStatus,
    /// Number of samples with a component above `eps_max`.
    pub violations: usize,
    pub first_violation: Option<usize>,
    /// Distribution of the signed components `ε = pred2 - pred1`.
    pub cdf: CdfTable,
}

/// Asserts `|pred2_i - pred1_i| <= eps_max` for every sample. Ground truth
/// is deliberately not an input.
pub fn replicate_verify(pred1: &Matrix, pred2: &Matrix, eps_max: f64) -> Result<ReplicationReport> {
    if !(eps_max >= 0.0) {
        return Err(Error::Invalid(format!("eps_max must be non-negative, got {eps_max}")));
    }
    let cmp = compare_outputs(pred1, pred2)?;
    let per_sample_max: Vec<f64> = cmp
        .eps
        .iter_rows()
        .map(|r| r.iter().fold(0.0f64, |m, e| m.max(e.abs())))
        .collect();
    let violating: Vec<usize> = per_sample_max
        .iter()
        .enumerate()
        .filter(|(_, &m)| !(m <= eps_max))
        .map(|(i, _)| i)
        .collect();
    let status = if violating.is_empty() {
        ReplicationStatus::Replicated
    } else {
        ReplicationStatus::Inconclusive
    };
    Ok(ReplicationReport {
        max_abs_eps: cmp.max_abs,
        eps_max,
        status,
        violations: violating.len(),
        first_violation: violating.first().copied(),
        cdf: emit_cdf(cmp.eps.as_slice())?,
        per_sample_max,
    })
}
