use serde::{Deserialize, Serialize};

use super::MetricKind;
use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, mean, Scalar};

/// All eight regression metrics of `pred` against `gt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics<T> {
    pub linf: T,
    pub mae: T,
    pub mse: T,
    pub mape: T,
    pub r2: T,
    pub evs: T,
    pub var: T,
    pub bias: T,
}

impl<T: Scalar> RegressionMetrics<T> {
    pub fn get(&self, m: MetricKind) -> Option<T> {
        Some(match m {
            MetricKind::Linf => self.linf,
            MetricKind::Mae => self.mae,
            MetricKind::Mse => self.mse,
            MetricKind::Mape => self.mape,
            MetricKind::R2 => self.r2,
            MetricKind::Evs => self.evs,
            MetricKind::Var => self.var,
            MetricKind::Bias => self.bias,
            MetricKind::TopN | MetricKind::Map => return None,
        })
    }
}

fn check_lengths<T>(gt: &[T], pred: &[T]) -> Result<usize> {
    if gt.len() != pred.len() {
        return Err(Error::Invalid(format!(
            "ground truth has {} samples, predictions {}",
            gt.len(),
            pred.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::Invalid("no samples".to_string()));
    }
    Ok(gt.len())
}

fn deltas<T: Scalar>(gt: &[T], pred: &[T]) -> Vec<T> {
    gt.iter().zip(pred).map(|(&g, &p)| p - g).collect()
}

/// Population variance of the ground truth.
fn variance<T: Scalar>(xs: &[T]) -> T {
    let m = mean(xs.iter().copied(), xs.len());
    mean(xs.iter().map(|&x| (x - m) * (x - m)), xs.len())
}

fn mape<T: Scalar>(gt: &[T], d: &[T]) -> Result<T> {
    if let Some(i) = gt.iter().position(|g| g.is_zero()) {
        return Err(Error::DivisionDomain { index: i });
    }
    Ok(mean(gt.iter().zip(d).map(|(&g, &e)| (e / g).abs()), gt.len()))
}

fn nonzero_variance<T: Scalar>(gt: &[T]) -> Result<T> {
    let v = variance(gt);
    if v > T::zero() {
        Ok(v)
    } else {
        Err(Error::DegenerateVariance)
    }
}

/// Computes every regression metric. Fails when MAPE or R²/EVS are
/// undefined; use [`metric_value`] to compute a single metric.
pub fn compute_regression_metrics<T: Scalar>(gt: &[T], pred: &[T]) -> Result<RegressionMetrics<T>> {
    let n = check_lengths(gt, pred)?;
    let d = deltas(gt, pred);
    let bias = mean(d.iter().copied(), n);
    let mae = mean(d.iter().map(|e| e.abs()), n);
    let mse = mean(d.iter().map(|&e| e * e), n);
    let linf = d.iter().fold(T::zero(), |m, e| m.max(e.abs()));
    let var = mse - bias * bias;
    let var_f = nonzero_variance(gt)?;
    Ok(RegressionMetrics {
        linf,
        mae,
        mse,
        mape: mape(gt, &d)?,
        r2: T::one() - compensated_sum(d.iter().map(|&e| e * e)) / (var_f * T::lit(n as f64)),
        evs: T::one() - var / var_f,
        var,
        bias,
    })
}

/// One regression metric of `pred` against `gt`.
pub fn metric_value<T: Scalar>(metric: MetricKind, gt: &[T], pred: &[T]) -> Result<T> {
    let n = check_lengths(gt, pred)?;
    let d = deltas(gt, pred);
    let bias = || mean(d.iter().copied(), n);
    let mse = || mean(d.iter().map(|&e| e * e), n);
    Ok(match metric {
        MetricKind::Linf => d.iter().fold(T::zero(), |m, e| m.max(e.abs())),
        MetricKind::Mae => mean(d.iter().map(|e| e.abs()), n),
        MetricKind::Mse => mse(),
        MetricKind::Mape => mape(gt, &d)?,
        MetricKind::R2 => {
            let var_f = nonzero_variance(gt)?;
            T::one() - compensated_sum(d.iter().map(|&e| e * e)) / (var_f * T::lit(n as f64))
        }
        MetricKind::Evs => {
            let var_f = nonzero_variance(gt)?;
            let b = bias();
            T::one() - (mse() - b * b) / var_f
        }
        MetricKind::Var => {
            let b = bias();
            mse() - b * b
        }
        MetricKind::Bias => bias(),
        MetricKind::TopN | MetricKind::Map => {
            return Err(Error::Invalid(format!("{metric} is not a regression metric")))
        }
    })
}

/// Aggregates of the reference model's errors `δ_i` that the budgets need.
///
/// The first three fields feed the published budget formulas; `mae1`,
/// `mad1` and `inv_gt` feed the sound variants (see [`BudgetRule`]).
///
/// [`BudgetRule`]: super::BudgetRule
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricContext<T = f64> {
    /// `|bias^(1)|`
    pub bias1: Option<T>,
    /// Population variance of the ground truth.
    pub var_f: Option<T>,
    pub mape1: Option<T>,
    /// `mean |δ_i|`
    pub mae1: Option<T>,
    /// `mean |δ_i - mean δ|`
    pub mad1: Option<T>,
    /// `mean 1/|gt_i|`
    pub inv_gt: Option<T>,
    pub n: usize,
}

impl<T: Scalar> MetricContext<T> {
    /// Context holding only the published aggregates, as printed in a table.
    pub fn published(bias1: T, var_f: T, mape1: T) -> Self {
        MetricContext {
            bias1: Some(bias1.abs()),
            var_f: Some(var_f),
            mape1: Some(mape1),
            mae1: None,
            mad1: None,
            inv_gt: None,
            n: 1,
        }
    }

    /// Every aggregate that is defined on this data.
    pub fn from_data(gt: &[T], pred1: &[T]) -> Result<Self> {
        let n = check_lengths(gt, pred1)?;
        let d = deltas(gt, pred1);
        let bias = mean(d.iter().copied(), n);
        let var_f = variance(gt);
        let has_zero = gt.iter().any(|g| g.is_zero());
        Ok(MetricContext {
            bias1: Some(bias.abs()),
            var_f: (var_f > T::zero()).then_some(var_f),
            mape1: if has_zero { None } else { Some(mape(gt, &d)?) },
            mae1: Some(mean(d.iter().map(|e| e.abs()), n)),
            mad1: Some(mean(d.iter().map(|&e| (e - bias).abs()), n)),
            inv_gt: (!has_zero).then(|| mean(gt.iter().map(|g| g.abs().recip()), n)),
            n,
        })
    }

    pub(crate) fn need(v: Option<T>, name: &'static str) -> Result<T> {
        v.ok_or(Error::MissingContext(name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn identical_predictions() {
        let gt = [1.0, -2.0, 3.5];
        let m = compute_regression_metrics(&gt, &gt).unwrap();
        assert_eq!((m.linf, m.mae, m.mse, m.mape, m.var, m.bias), (0.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!((m.r2, m.evs), (1.0, 1.0));
    }

    #[test]
    fn small_example_against_brute_force() {
        let gt = [1.0, 2.0, 3.0];
        let pred = [1.1, 1.9, 3.2];
        let m = compute_regression_metrics(&gt, &pred).unwrap();
        // Independent evaluation of the defining sums.
        let d: Vec<f64> = gt.iter().zip(&pred).map(|(g, p)| p - g).collect();
        let mse = d.iter().map(|e| e * e).sum::<f64>() / 3.0;
        let bias = d.iter().sum::<f64>() / 3.0;
        assert!(close(m.mse, mse, 1e-15) && close(m.mse, 0.02, 1e-12));
        assert!(close(m.bias, bias, 1e-15) && close(m.bias, 0.0667, 1e-4));
        assert!(close(m.mae, 0.4 / 3.0, 1e-12));
        assert!(close(m.linf, 0.2, 1e-12));
        assert!(close(m.r2, 0.97, 1e-12));
        assert!(close(m.var, 0.015556, 1e-6));
        assert!(close(m.evs, 0.976667, 1e-6));
        assert!(close(m.mape, 0.072222, 1e-6));
    }

    #[test]
    fn constant_offset() {
        let gt = [0.5, 1.5, -2.0, 4.0];
        let pred: Vec<f64> = gt.iter().map(|g| g + 0.25).collect();
        let m = compute_regression_metrics(&gt, &pred).unwrap();
        assert_eq!(m.bias, 0.25);
        assert_eq!(m.var, 0.0);
        assert_eq!(m.mse, 0.0625);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            metric_value(MetricKind::Mape, &[1.0, 0.0], &[1.0, 1.0]),
            Err(Error::DivisionDomain { index: 1 })
        ));
        assert!(matches!(
            metric_value(MetricKind::R2, &[2.0, 2.0], &[1.0, 1.0]),
            Err(Error::DegenerateVariance)
        ));
        assert!(matches!(metric_value(MetricKind::Evs, &[2.0], &[1.0]), Err(Error::DegenerateVariance)));
        assert_eq!(metric_value(MetricKind::Mae, &[2.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn generic_over_f32() {
        let m = compute_regression_metrics(&[1.0f32, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((m.mse - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn context_from_data() {
        let ctx = MetricContext::<f64>::from_data(&[1.0, 2.0, 3.0], &[2.0, 1.0, 3.0]).unwrap();
        assert_eq!(ctx.bias1, Some(0.0));
        assert_eq!(ctx.mae1, Some(2.0 / 3.0));
        assert_eq!(ctx.mad1, Some(2.0 / 3.0));
        assert!((ctx.var_f.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ctx.n, 3);
    }
}
