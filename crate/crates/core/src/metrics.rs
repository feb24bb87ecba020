//! Segmentation quality measures: per-class Dice and IoU, plus the
//! superpixel oracle (the best labeling that is constant on each
//! superpixel, judged against ground truth).
//!
//! Classes absent from both prediction and truth are excluded from the
//! mean; the mean is unweighted over the remaining classes.

use crate::error::{Error, Result};
use crate::tensor::LabelMap;

/// Per-class scores with `None` for classes absent from both inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

fn class_counts(
    pred: &[i32],
    truth: &[i32],
    num_classes: usize,
) -> Result<(Vec<u64>, Vec<u64>, Vec<u64>)> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "prediction has {} pixels, truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut pred_n = vec![0u64; num_classes];
    let mut truth_n = vec![0u64; num_classes];
    let mut inter_n = vec![0u64; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        let (p, t) = (check_class(p, num_classes)?, check_class(t, num_classes)?);
        pred_n[p] += 1;
        truth_n[t] += 1;
        if p == t {
            inter_n[p] += 1;
        }
    }
    Ok((pred_n, truth_n, inter_n))
}

fn check_class(c: i32, num_classes: usize) -> Result<usize> {
    if c < 0 || c as usize >= num_classes {
        return Err(Error::Parameter(format!(
            "class {c} outside [0, {num_classes})"
        )));
    }
    Ok(c as usize)
}

fn mean_of(per_class: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    if present.is_empty() {
        return 0.0;
    }
    present.iter().sum::<f64>() / present.len() as f64
}

/// Dice coefficient per class: `2*|pred=c & truth=c| / (|pred=c| + |truth=c|)`.
pub fn dice(pred: &[i32], truth: &[i32], num_classes: usize) -> Result<ClassScores> {
    let (pred_n, truth_n, inter_n) = class_counts(pred, truth, num_classes)?;
    let per_class = (0..num_classes)
        .map(|c| {
            let denom = pred_n[c] + truth_n[c];
            (denom > 0).then(|| 2.0 * inter_n[c] as f64 / denom as f64)
        })
        .collect::<Vec<_>>();
    let mean = mean_of(&per_class);
    Ok(ClassScores { per_class, mean })
}

/// Intersection over union per class.
pub fn iou(pred: &[i32], truth: &[i32], num_classes: usize) -> Result<ClassScores> {
    let (pred_n, truth_n, inter_n) = class_counts(pred, truth, num_classes)?;
    let per_class = (0..num_classes)
        .map(|c| {
            let union = pred_n[c] + truth_n[c] - inter_n[c];
            (union > 0).then(|| inter_n[c] as f64 / union as f64)
        })
        .collect::<Vec<_>>();
    let mean = mean_of(&per_class);
    Ok(ClassScores { per_class, mean })
}

/// Fraction of pixels where prediction equals truth.
pub fn pixel_accuracy(pred: &[i32], truth: &[i32]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "prediction has {} pixels, truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Assigns every superpixel its majority ground-truth class (ties break
/// toward the smaller class index) and broadcasts it back to the pixels.
pub fn oracle_labels(seg: &LabelMap, truth: &[i32]) -> Result<Vec<i32>> {
    if truth.len() != seg.pixel_count() {
        return Err(Error::Dimension(format!(
            "truth has {} pixels, segmentation has {}",
            truth.len(),
            seg.pixel_count()
        )));
    }
    let max_class = *truth.iter().max().unwrap();
    if truth.iter().any(|&t| t < 0) {
        return Err(Error::Parameter("truth contains negative classes".into()));
    }
    let num_classes = max_class as usize + 1;
    let k = seg.num_labels();
    let mut counts = vec![0u64; k * num_classes];
    for (i, &t) in truth.iter().enumerate() {
        counts[seg.label_at(i) * num_classes + t as usize] += 1;
    }
    let majority: Vec<i32> = (0..k)
        .map(|label| {
            let row = &counts[label * num_classes..(label + 1) * num_classes];
            let mut best = 0usize;
            for (c, &n) in row.iter().enumerate() {
                if n > row[best] {
                    best = c;
                }
            }
            best as i32
        })
        .collect();
    Ok((0..seg.pixel_count())
        .map(|i| majority[seg.label_at(i)])
        .collect())
}

/// Mean Dice of the oracle labeling against the truth.
pub fn oracle_dice(seg: &LabelMap, truth: &[i32], num_classes: usize) -> Result<f64> {
    let labels = oracle_labels(seg, truth)?;
    Ok(dice(&labels, truth, num_classes)?.mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::GridShape;

    #[test]
    fn dice_perfect_match() {
        let s = dice(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(s.per_class, vec![Some(1.0), Some(1.0), Some(1.0)]);
        assert_eq!(s.mean, 1.0);
    }

    #[test]
    fn dice_direct_count() {
        // class0: 2*1/(2+1), class1: 2*2/(2+3).
        let s = dice(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert!((s.per_class[0].unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.per_class[1].unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn dice_disjoint_is_zero() {
        let s = dice(&[0, 0], &[1, 1], 2).unwrap();
        assert_eq!(s.per_class, vec![Some(0.0), Some(0.0)]);
        assert_eq!(s.mean, 0.0);
    }

    #[test]
    fn dice_excludes_absent_classes() {
        let s = dice(&[0, 0], &[0, 0], 5).unwrap();
        assert_eq!(s.per_class[0], Some(1.0));
        assert!(s.per_class[1..].iter().all(|v| v.is_none()));
        assert_eq!(s.mean, 1.0);
    }

    #[test]
    fn iou_direct_count() {
        // class0: 1/2, class1: 2/3.
        let s = iou(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert!((s.per_class[0].unwrap() - 0.5).abs() < 1e-12);
        assert!((s.per_class[1].unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn iou_perfect_match() {
        let s = iou(&[1, 0], &[1, 0], 2).unwrap();
        assert_eq!(s.mean, 1.0);
    }

    #[test]
    fn out_of_range_class_rejected() {
        assert!(dice(&[0, 3], &[0, 0], 2).is_err());
        assert!(iou(&[0, 1], &[0, -1], 2).is_err());
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(matches!(dice(&[0, 0], &[0], 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn oracle_identity_partition_recovers_truth() {
        let shape = GridShape::new(&[1, 4]).unwrap();
        let seg = LabelMap::new(shape, 4, vec![0, 1, 2, 3]).unwrap();
        let truth = vec![2, 0, 1, 1];
        assert_eq!(oracle_labels(&seg, &truth).unwrap(), truth);
        assert_eq!(oracle_dice(&seg, &truth, 3).unwrap(), 1.0);
    }

    #[test]
    fn oracle_single_label_majority() {
        let shape = GridShape::new(&[1, 3]).unwrap();
        let seg = LabelMap::new(shape, 1, vec![0, 0, 0]).unwrap();
        assert_eq!(oracle_labels(&seg, &[0, 0, 1]).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn oracle_constant_truth() {
        let shape = GridShape::new(&[2, 2]).unwrap();
        let seg = LabelMap::new(shape, 2, vec![0, 1, 1, 0]).unwrap();
        assert_eq!(oracle_labels(&seg, &[3, 3, 3, 3]).unwrap(), vec![3; 4]);
    }

    #[test]
    fn oracle_majority_tie_breaks_low() {
        let shape = GridShape::new(&[1, 4]).unwrap();
        let seg = LabelMap::new(shape, 1, vec![0; 4]).unwrap();
        assert_eq!(oracle_labels(&seg, &[1, 1, 2, 2]).unwrap(), vec![1; 4]);
    }

    #[test]
    fn oracle_dice_balanced_two_class() {
        // Single superpixel over [0,0,1,1]: oracle picks class 0;
        // Dice class0 = 2*2/(4+2), class1 = 0; mean 1/3.
        let shape = GridShape::new(&[1, 4]).unwrap();
        let seg = LabelMap::new(shape, 1, vec![0; 4]).unwrap();
        let d = oracle_dice(&seg, &[0, 0, 1, 1], 2).unwrap();
        assert!((d - 1.0 / 3.0).abs() < 1e-12);
    }
}
