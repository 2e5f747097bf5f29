use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Worst-case Top-N accuracy when every logit may move by up to `eps`.
///
/// A sample counts iff its ground-truth logit beats the N-th largest of
/// the other logits by more than `2 eps`: the adversary lowers the true
/// class and raises a competitor. A margin of exactly `2 eps` is lost.
pub fn top_n_worst_case<T: Scalar>(logits: &Matrix<T>, gt: &[usize], n: usize, eps: T) -> Result<T> {
    let c = logits.cols();
    if c < 2 {
        return Err(Error::Invalid(format!("need at least 2 classes, got {c}")));
    }
    if n == 0 || n >= c {
        return Err(Error::Invalid(format!("N must be in [1, {}], got {n}", c - 1)));
    }
    if gt.len() != logits.rows() || logits.rows() == 0 {
        return Err(Error::Invalid(format!(
            "{} labels for {} samples",
            gt.len(),
            logits.rows()
        )));
    }
    let mut others = Vec::with_capacity(c - 1);
    let mut hits = 0usize;
    for (row, &label) in logits.iter_rows().zip(gt) {
        if label >= c {
            return Err(Error::Invalid(format!("label {label} out of range for {c} classes")));
        }
        others.clear();
        others.extend(row.iter().enumerate().filter(|&(j, _)| j != label).map(|(_, &v)| v));
        others.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        let competitor = others[n - 1];
        if row[label] - competitor > T::lit(2.0) * eps {
            hits += 1;
        }
    }
    Ok(T::lit(hits as f64) / T::lit(logits.rows() as f64))
}

pub fn top1_worst_case<T: Scalar>(logits: &Matrix<T>, gt: &[usize], eps: T) -> Result<T> {
    top_n_worst_case(logits, gt, 1, eps)
}

/// Worst-case score tabulated over an ascending `ε` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lut<T = f64> {
    pub eps: Vec<T>,
    pub score: Vec<T>,
}

pub fn build_lut<T: Scalar, F>(mut score_fn: F, grid: &[T]) -> Result<Lut<T>>
where
    F: FnMut(T) -> Result<T>,
{
    if grid.is_empty() {
        return Err(Error::Invalid("empty epsilon grid".to_string()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) || grid[0] < T::zero() {
        return Err(Error::Invalid("epsilon grid must be non-negative and strictly ascending".to_string()));
    }
    let score = grid.iter().map(|&e| score_fn(e)).collect::<Result<_>>()?;
    Ok(Lut {
        eps: grid.to_vec(),
        score,
    })
}

impl<T: Scalar> Lut<T> {
    /// Running minimum of the scores, so that noise in a score function
    /// that should be non-increasing never makes the inverse optimistic.
    fn envelope(&self) -> Vec<T> {
        let mut s = self.score.clone();
        for i in 1..s.len() {
            s[i] = s[i].min(s[i - 1]);
        }
        s
    }

    /// Largest `ε` whose piecewise-linear interpolated score is at least
    /// `target`.
    pub fn invert(&self, target: T) -> Result<T> {
        let s = self.envelope();
        let (hi, lo) = (s[0], s[s.len() - 1]);
        if !(target <= hi && target >= lo) {
            return Err(Error::TargetOutOfRange {
                target: target.to_f64_lossy(),
                lo: lo.to_f64_lossy(),
                hi: hi.to_f64_lossy(),
            });
        }
        let last = s.len() - 1;
        let i = (0..=last).rev().find(|&i| s[i] >= target).unwrap_or(0);
        if i == last {
            return Ok(self.eps[last]);
        }
        let frac = (s[i] - target) / (s[i] - s[i + 1]);
        Ok(self.eps[i] + frac * (self.eps[i + 1] - self.eps[i]))
    }

    /// Largest grid point whose tabulated score is at least `target`.
    pub fn grid_floor(&self, target: T) -> Option<T> {
        let s = self.envelope();
        (0..s.len()).rev().find(|&i| s[i] >= target).map(|i| self.eps[i])
    }
}

/// Tabulates `score_fn`, inverts at `target`, then re-scores the result.
/// Worst-case scores are step functions, so interpolation can land past a
/// step; in that case the largest grid point meeting the target is used.
pub fn build_lut_and_invert<T: Scalar, F>(mut score_fn: F, grid: &[T], target: T) -> Result<T>
where
    F: FnMut(T) -> Result<T>,
{
    let lut = build_lut(&mut score_fn, grid)?;
    let eps = lut.invert(target)?;
    if score_fn(eps)? >= target {
        return Ok(eps);
    }
    Ok(lut.grid_floor(target).unwrap_or_else(T::zero))
}

/// `0` followed by `points - 1` geometrically spaced values in `[lo, hi]`.
pub fn geometric_grid<T: Scalar>(lo: T, hi: T, points: usize) -> Vec<T> {
    let mut grid = vec![T::zero()];
    let k = points.saturating_sub(1);
    if k == 0 {
        return grid;
    }
    if k == 1 {
        grid.push(hi);
        return grid;
    }
    let ratio = (hi / lo).ln() / T::lit((k - 1) as f64);
    grid.extend((0..k).map(|i| lo * (ratio * T::lit(i as f64)).exp()));
    grid
}

/// 64 points: zero, then 1e-6 to 1 geometrically.
pub fn default_eps_grid<T: Scalar>() -> Vec<T> {
    geometric_grid(T::lit(1e-6), T::one(), 64)
}
