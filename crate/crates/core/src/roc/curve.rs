use serde::{Deserialize, Serialize};

use super::{check_scores, ScoredSample};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Units with score >= threshold are called positive; the first point
    /// uses +inf.
    pub threshold: f64,
}

/// Operating points at every distinct score, from (0, 0) to (1, 1).
pub fn roc_curve(samples: &[ScoredSample]) -> Result<Vec<RocPoint>> {
    let (m, n) = check_scores(samples)?;
    let mut sorted: Vec<&ScoredSample> = samples.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].score;
        while i < sorted.len() && sorted[i].score == t {
            if sorted[i].label {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / m as f64,
            threshold: t,
        });
    }
    Ok(points)
}

/// Trapezoidal area under a polyline of ROC points.
pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roc::auc_midrank;
    use crate::roc::tests::make;
    use rand::Rng;

    #[test]
    fn perfect_curve_hits_corner() {
        let c = roc_curve(&make(&[0.9, 0.8], &[0.1, 0.2])).unwrap();
        assert!(c.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(c.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
    }

    #[test]
    fn area_matches_auc_and_reversal() {
        let mut rng = crate::rng::rng_from_seed(11);
        for _ in 0..100 {
            let pos: Vec<f64> = (0..25).map(|_| rng.random_range(0..30) as f64 / 7.0).collect();
            let neg: Vec<f64> = (0..35).map(|_| rng.random_range(0..25) as f64 / 7.0).collect();
            let s = make(&pos, &neg);
            let c = roc_curve(&s).unwrap();
            assert!(c.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
            let auc = auc_midrank(&s).unwrap();
            assert!((trapezoid_area(&c) - auc).abs() < 1e-12);

            let r: Vec<ScoredSample> = s.iter().map(|x| ScoredSample { score: -x.score, ..x.clone() }).collect();
            assert!((trapezoid_area(&roc_curve(&r).unwrap()) - (1.0 - auc)).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_labels_rejected() {
        assert!(roc_curve(&make(&[0.3], &[])).is_err());
    }
}
