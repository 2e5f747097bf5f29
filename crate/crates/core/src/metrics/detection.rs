use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ground-truth box `[0, x] x [0, y]` and predicted box `[0, x1] x [0, y1]`
/// sharing the origin corner, with a corner perturbation bound `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxPair<T = f64> {
    pub x: T,
    pub y: T,
    pub x1: T,
    pub y1: T,
    pub eps: T,
}

/// Minimum IoU and the predicted corner attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IouMin<T = f64> {
    pub iou: T,
    pub x2: T,
    pub y2: T,
}

impl<T: Scalar> BoxPair<T> {
    pub fn check(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::PreconditionViolated(m.to_string()));
        if !(self.x > T::zero() && self.y > T::zero()) {
            return fail("ground-truth corner must be positive");
        }
        if !(self.eps >= T::zero()) {
            return fail("eps must be non-negative");
        }
        if !(self.eps < (self.x1 - self.x).abs() && self.eps < (self.y1 - self.y).abs()) {
            return fail("eps must be smaller than the corner offsets |x1 - x| and |y1 - y|");
        }
        if !(self.x1 - self.eps > T::zero() && self.y1 - self.eps > T::zero()) {
            return fail("perturbed prediction corner must stay positive");
        }
        Ok(())
    }

    /// IoU of the ground truth against the prediction corner `(x2, y2)`.
    pub fn iou_at(&self, x2: T, y2: T) -> T {
        let inter = self.x.min(x2) * self.y.min(y2);
        inter / (self.x * self.y + x2 * y2 - inter)
    }
}

fn away<T: Scalar>(v: T, from: T, eps: T) -> T {
    if v > from {
        v + eps
    } else {
        v - eps
    }
}

/// Minimum IoU over predictions whose corner moves by at most `eps` per
/// axis. The worst corner moves each coordinate away from the ground
/// truth, which yields four closed forms by quadrant.
pub fn iou_min<T: Scalar>(bp: &BoxPair<T>) -> Result<IouMin<T>> {
    bp.check()?;
    let (x, y) = (bp.x, bp.y);
    let x2 = away(bp.x1, x, bp.eps);
    let y2 = away(bp.y1, y, bp.eps);
    let iou = match (bp.x1 < x, bp.y1 < y) {
        // Prediction inside the ground truth.
        (true, true) => (x2 * y2) / (x * y),
        // Ground truth inside the prediction.
        (false, false) => (x * y) / (x2 * y2),
        (false, true) => (x * y2) / (x * y + x2 * y2 - x * y2),
        (true, false) => (x2 * y) / (x * y + x2 * y2 - x2 * y),
    };
    Ok(IouMin { iou, x2, y2 })
}

/// Axis-aligned box in corner form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox<T = f64> {
    pub x_min: T,
    pub y_min: T,
    pub x_max: T,
    pub y_max: T,
}

impl<T: Scalar> BBox<T> {
    pub fn new(x_min: T, y_min: T, x_max: T, y_max: T) -> Self {
        BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn area(&self) -> T {
        (self.x_max - self.x_min).max(T::zero()) * (self.y_max - self.y_min).max(T::zero())
    }
}

pub fn iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(T::zero());
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(T::zero());
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union > T::zero() {
        inter / union
    } else {
        T::zero()
    }
}

/// Minimum IoU of `gt` against any box whose four edges lie within `eps`
/// of `pred`'s.
///
/// With the other edges fixed, IoU is unimodal in each edge coordinate, so
/// the minimum over the perturbation box is reached at one of its 16
/// vertices. Unlike [`iou_min`] this places no condition on how the boxes
/// overlap, so exact copies (`eps = 0`) are allowed.
pub fn worst_case_iou<T: Scalar>(gt: &BBox<T>, pred: &BBox<T>, eps: T) -> Result<T> {
    if !(eps >= T::zero()) {
        return Err(Error::PreconditionViolated("eps must be non-negative".to_string()));
    }
    let two = T::lit(2.0);
    if !(pred.x_max - pred.x_min > two * eps && pred.y_max - pred.y_min > two * eps) {
        return Err(Error::PreconditionViolated(format!(
            "prediction extent must exceed 2 * eps = {}",
            two * eps
        )));
    }
    if eps.is_zero() {
        return Ok(iou(gt, pred));
    }
    let mut worst = T::infinity();
    for mask in 0..16u8 {
        let s = |bit: u8| if mask & (1 << bit) != 0 { eps } else { -eps };
        let b = BBox::new(pred.x_min + s(0), pred.y_min + s(1), pred.x_max + s(2), pred.y_max + s(3));
        worst = worst.min(iou(gt, &b));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection<T = f64> {
    #[serde(default)]
    pub image: usize,
    pub bbox: BBox<T>,
    pub class: usize,
    pub confidence: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox<T = f64> {
    #[serde(default)]
    pub image: usize,
    pub bbox: BBox<T>,
    pub class: usize,
}

/// All-point interpolated average precision from TP flags ordered by
/// descending confidence.
pub fn average_precision<T: Scalar>(tp: &[bool], n_positives: usize) -> T {
    if n_positives == 0 {
        return T::zero();
    }
    let npos = T::lit(n_positives as f64);
    let mut recall = vec![T::zero()];
    let mut precision = vec![T::zero()];
    let mut hits = 0usize;
    for (k, &t) in tp.iter().enumerate() {
        hits += t as usize;
        recall.push(T::lit(hits as f64) / npos);
        precision.push(T::lit(hits as f64) / T::lit((k + 1) as f64));
    }
    recall.push(T::one());
    precision.push(T::zero());
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = T::zero();
    for i in 1..recall.len() {
        if recall[i] != recall[i - 1] {
            ap = ap + (recall[i] - recall[i - 1]) * precision[i];
        }
    }
    ap
}

/// Worst-case mAP at IoU threshold `t` when every predicted edge may move
/// by up to `eps`.
///
/// Per class, detections are matched greedily by descending confidence to
/// the unmatched ground-truth box of the same image with the largest
/// worst-case IoU; a match counts as a true positive iff that IoU is at
/// least `t`. AP is averaged over the classes present in the ground truth.
pub fn map_with_margin<T: Scalar>(
    detections: &[Detection<T>],
    ground_truth: &[GroundTruthBox<T>],
    t: T,
    eps: T,
) -> Result<T> {
    let classes: BTreeSet<usize> = ground_truth.iter().map(|g| g.class).collect();
    if classes.is_empty() {
        return Err(Error::Invalid("no ground-truth boxes".to_string()));
    }
    let mut total = T::zero();
    for &c in &classes {
        let gts: Vec<&GroundTruthBox<T>> = ground_truth.iter().filter(|g| g.class == c).collect();
        let mut dets: Vec<&Detection<T>> = detections.iter().filter(|d| d.class == c).collect();
        dets.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap_or(std::cmp::Ordering::Equal));
        let mut matched = vec![false; gts.len()];
        let mut tp = Vec::with_capacity(dets.len());
        for d in dets {
            let mut best: Option<(usize, T)> = None;
            for (j, g) in gts.iter().enumerate() {
                if g.image != d.image {
                    continue;
                }
                let v = worst_case_iou(&g.bbox, &d.bbox, eps)?;
                if best.map_or(true, |(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            let hit = match best {
                Some((j, v)) if v >= t && !matched[j] => {
                    matched[j] = true;
                    true
                }
                _ => false,
            };
            tp.push(hit);
        }
        total = total + average_precision(&tp, gts.len());
    }
    Ok(total / T::lit(classes.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(x: f64, y: f64, x1: f64, y1: f64, eps: f64) -> BoxPair<f64> {
        BoxPair { x, y, x1, y1, eps }
    }

    #[test]
    fn worked_examples() {
        assert!((iou_min(&pair(1.0, 1.0, 0.9, 0.9, 0.0)).unwrap().iou - 0.81).abs() < 1e-12);
        assert!((iou_min(&pair(1.0, 1.0, 0.9, 0.9, 0.05)).unwrap().iou - 0.7225).abs() < 1e-12);
        let mixed = iou_min(&pair(1.0, 1.0, 1.2, 0.8, 0.1)).unwrap();
        assert!((mixed.iou - 0.7 / 1.21).abs() < 1e-12);
        assert!((mixed.iou - 1.0 / (1.3 + 1.0 / 0.7 - 1.0)).abs() < 1e-12);
        assert!((mixed.x2 - 1.3).abs() < 1e-12 && (mixed.y2 - 0.7).abs() < 1e-12);
    }

    #[test]
    fn preconditions() {
        assert!(iou_min(&pair(1.0, 1.0, 0.9, 0.9, 0.1)).is_err());
        assert!(iou_min(&pair(1.0, 1.0, 0.05, 0.5, 0.06)).is_err());
        assert!(iou_min(&pair(1.0, 1.0, 1.0, 0.5, 0.0)).is_err());
    }

    #[test]
    fn quadrant_formulas_match_direct_evaluation() {
        for (x1, y1) in [(0.7, 0.6), (1.4, 1.3), (1.3, 0.6), (0.6, 1.3)] {
            let bp = pair(1.0, 1.0, x1, y1, 0.05);
            let m = iou_min(&bp).unwrap();
            assert!((m.iou - bp.iou_at(m.x2, m.y2)).abs() < 1e-12);
        }
    }

    #[test]
    fn box_iou() {
        let a: BBox<f64> = BBox::new(0.0, 0.0, 2.0, 2.0);
        let b = BBox::new(1.0, 1.0, 3.0, 3.0);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(worst_case_iou(&a, &a, 0.0).unwrap(), 1.0);
        let w = worst_case_iou(&a, &a, 0.1).unwrap();
        assert!((w - 1.8 * 1.8 / 4.0).abs() < 1e-12);
        assert!(worst_case_iou(&a, &BBox::new(0.0, 0.0, 0.1, 2.0), 0.1).is_err());
    }

    #[test]
    fn ap_cases() {
        assert_eq!(average_precision::<f64>(&[true, true], 2), 1.0);
        assert_eq!(average_precision::<f64>(&[false], 1), 0.0);
        assert_eq!(average_precision::<f64>(&[], 3), 0.0);
        // FP then TP: precision 1/2 at recall 1.
        assert_eq!(average_precision::<f64>(&[false, true], 1), 0.5);
    }

    #[test]
    fn exact_copies_score_one() {
        let gts: Vec<GroundTruthBox> = (0..3)
            .map(|i| GroundTruthBox {
                image: i,
                bbox: BBox::new(0.0, 0.0, 1.0 + i as f64, 2.0),
                class: 0,
            })
            .collect();
        let dets: Vec<Detection> = gts
            .iter()
            .map(|g| Detection {
                image: g.image,
                bbox: g.bbox,
                class: 0,
                confidence: 0.9,
            })
            .collect();
        assert_eq!(map_with_margin(&dets, &gts, 0.5, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn two_classes_one_missed() {
        let gts = vec![
            GroundTruthBox { image: 0, bbox: BBox::new(0.0, 0.0, 1.0, 1.0), class: 0 },
            GroundTruthBox { image: 0, bbox: BBox::new(2.0, 2.0, 3.0, 3.0), class: 1 },
        ];
        let dets = vec![Detection { image: 0, bbox: BBox::new(0.0, 0.0, 1.0, 1.0), class: 0, confidence: 0.8 }];
        assert_eq!(map_with_margin(&dets, &gts, 0.5, 0.0).unwrap(), 0.5);
    }
}
