//! Property metrics, their error budgets `g_M(ε)` and the margins `ε_M`
//! derived from acceptability bounds.
//!
//! Regression metrics compare a prediction vector with ground truth through
//! `δ_i = pred_i - gt_i`. Classification and detection scores are handled
//! through worst-case evaluation under a perturbation of size `ε` and an
//! `ε`-to-score lookup table that is inverted to obtain a margin.

mod budget;
mod classification;
mod detection;
mod regression;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use budget::{budget, budget_with, derive_margin, derive_margin_with, BudgetRule, MarginResult};
pub use classification::{
    build_lut, build_lut_and_invert, default_eps_grid, geometric_grid, top1_worst_case,
    top_n_worst_case, Lut,
};
pub use detection::{
    average_precision, iou, iou_min, map_with_margin, worst_case_iou, BBox, BoxPair, Detection,
    GroundTruthBox, IouMin,
};
pub use regression::{compute_regression_metrics, metric_value, MetricContext, RegressionMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    Linf,
    #[serde(rename = "MAE")]
    Mae,
    #[serde(rename = "MSE")]
    Mse,
    #[serde(rename = "MAPE")]
    Mape,
    R2,
    #[serde(rename = "EVS")]
    Evs,
    Var,
    Bias,
    TopN,
    #[serde(rename = "mAP")]
    Map,
}

impl MetricKind {
    pub const REGRESSION: [MetricKind; 8] = [
        MetricKind::Linf,
        MetricKind::Mae,
        MetricKind::Mse,
        MetricKind::Mape,
        MetricKind::R2,
        MetricKind::Evs,
        MetricKind::Var,
        MetricKind::Bias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Linf => "Linf",
            MetricKind::Mae => "MAE",
            MetricKind::Mse => "MSE",
            MetricKind::Mape => "MAPE",
            MetricKind::R2 => "R2",
            MetricKind::Evs => "EVS",
            MetricKind::Var => "Var",
            MetricKind::Bias => "Bias",
            MetricKind::TopN => "TopN",
            MetricKind::Map => "mAP",
        }
    }

    /// Direction in which the metric improves: `Ge` for scores, `Le` for
    /// errors.
    pub fn direction(self) -> BoundDirection {
        match self {
            MetricKind::R2 | MetricKind::Evs | MetricKind::TopN | MetricKind::Map => BoundDirection::Ge,
            _ => BoundDirection::Le,
        }
    }

    pub fn is_regression(self) -> bool {
        !matches!(self, MetricKind::TopN | MetricKind::Map)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = MetricKind::REGRESSION.into_iter().chain([MetricKind::TopN, MetricKind::Map]);
        for m in all {
            if m.name().eq_ignore_ascii_case(s) {
                return Ok(m);
            }
        }
        match s.to_ascii_lowercase().as_str() {
            "l_inf" | "max" | "max_abs" => Ok(MetricKind::Linf),
            "top1" | "top-n" | "top_n" => Ok(MetricKind::TopN),
            "variance" => Ok(MetricKind::Var),
            _ => Err(Error::schema("metric", format!("unknown metric `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundDirection {
    /// `M <= R`
    Le,
    /// `M >= R`
    Ge,
}

impl BoundDirection {
    pub fn holds<T: Scalar>(self, value: T, bound: T) -> bool {
        match self {
            BoundDirection::Le => value <= bound,
            BoundDirection::Ge => value >= bound,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BoundDirection::Le => "<=",
            BoundDirection::Ge => ">=",
        }
    }
}

/// Optional parameters of a bound: `n` for Top-N, the IoU threshold for
/// mAP, and an explicit `ε` grid for the lookup-table metrics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundParams<T = f64> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iou_threshold: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_grid: Option<Vec<T>>,
}

/// An acceptability bound `R_M` chosen by the model designer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricBound<T = f64> {
    pub metric: MetricKind,
    pub direction: BoundDirection,
    #[serde(rename = "R")]
    pub r: T,
    #[serde(default)]
    pub params: BoundParams<T>,
}

impl<T: Scalar> MetricBound<T> {
    /// A bound in the metric's natural direction.
    pub fn new(metric: MetricKind, r: T) -> Self {
        MetricBound {
            metric,
            direction: metric.direction(),
            r,
            params: BoundParams::default(),
        }
    }
}

/// Parses a bounds file: a JSON list of `{"metric", "direction", "R", "params"}`.
pub fn parse_bounds(text: &str) -> Result<Vec<MetricBound<f64>>> {
    let bounds: Vec<MetricBound<f64>> = crate::io::parse_json(text)?;
    for (i, b) in bounds.iter().enumerate() {
        if b.direction != b.metric.direction() {
            return Err(Error::schema(
                format!("[{i}].direction"),
                format!("{} bounds must use `{:?}`", b.metric, b.metric.direction()).to_lowercase(),
            ));
        }
        if !b.r.is_finite() {
            return Err(Error::schema(format!("[{i}].R"), "bound must be finite"));
        }
    }
    Ok(bounds)
}
