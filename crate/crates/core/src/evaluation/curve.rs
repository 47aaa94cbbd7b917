//! ROC curve construction, area and equal error rate.

use crate::detection::Thresholds;
use crate::error::{AvidError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Sweep thresholds that produced the point, if any.
    pub thresholds: Option<Thresholds>,
    /// Score cut-off (`score >= cut` is positive) for score-ranked curves.
    pub cut: Option<f64>,
}

impl CurvePoint {
    pub fn bare(fpr: f64, tpr: f64) -> Self {
        Self {
            fpr,
            tpr,
            thresholds: None,
            cut: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalCurve {
    /// Sorted by FPR (then TPR), starting at (0, 0) and ending at (1, 1).
    pub points: Vec<CurvePoint>,
    pub auc: f64,
    pub eer: f64,
}

impl EvalCurve {
    /// Curve through `points` as given (plus endpoints), without discarding dominated points.
    pub fn through(points: Vec<CurvePoint>) -> Result<Self> {
        let points = prepare(points)?;
        let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
        Ok(Self {
            auc: trapezoid(&xy),
            eer: crossing(&xy),
            points,
        })
    }

    /// Upper-left envelope of `points`: only operating points not dominated by another one.
    pub fn envelope(points: Vec<CurvePoint>) -> Result<Self> {
        let mut sorted = prepare(points)?;
        // Highest TPR first within equal FPR, so one pass keeps the frontier.
        sorted.sort_by(|a, b| a.fpr.total_cmp(&b.fpr).then(b.tpr.total_cmp(&a.tpr)));
        let mut frontier: Vec<CurvePoint> = Vec::new();
        for p in sorted {
            if frontier.last().map_or(true, |last| p.tpr > last.tpr) {
                frontier.push(p);
            }
        }
        if frontier.last().map(|p| (p.fpr, p.tpr)) != Some((1.0, 1.0)) {
            frontier.push(CurvePoint::bare(1.0, 1.0));
        }
        Self::through(frontier)
    }
}

fn prepare(mut points: Vec<CurvePoint>) -> Result<Vec<CurvePoint>> {
    for p in &points {
        if !(p.fpr.is_finite() && p.tpr.is_finite()) || !(0.0..=1.0).contains(&p.fpr) || !(0.0..=1.0).contains(&p.tpr) {
            return Err(AvidError::argument(format!(
                "ROC point ({}, {}) is not inside the unit square",
                p.fpr, p.tpr
            )));
        }
    }
    points.sort_by(|a, b| a.fpr.total_cmp(&b.fpr).then(a.tpr.total_cmp(&b.tpr)));
    if points.first().map(|p| (p.fpr, p.tpr)) != Some((0.0, 0.0)) {
        points.insert(0, CurvePoint::bare(0.0, 0.0));
    }
    if points.last().map(|p| (p.fpr, p.tpr)) != Some((1.0, 1.0)) {
        points.push(CurvePoint::bare(1.0, 1.0));
    }
    Ok(points)
}

fn trapezoid(xy: &[(f64, f64)]) -> f64 {
    xy.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// FPR where the polyline meets `tpr = 1 - fpr`.
fn crossing(xy: &[(f64, f64)]) -> f64 {
    // g = fpr + tpr - 1 runs from -1 at (0,0) to +1 at (1,1).
    let g = |p: (f64, f64)| p.0 + p.1 - 1.0;
    for w in xy.windows(2) {
        let (a, b) = (g(w[0]), g(w[1]));
        if a == 0.0 {
            return w[0].0;
        }
        if a < 0.0 && b >= 0.0 {
            let t = a / (a - b);
            return w[0].0 + t * (w[1].0 - w[0].0);
        }
    }
    1.0
}

fn to_points(points: &[(f64, f64)]) -> Vec<CurvePoint> {
    points.iter().map(|&(f, t)| CurvePoint::bare(f, t)).collect()
}

/// Trapezoidal area under `(fpr, tpr)` points; (0,0) and (1,1) are added if absent.
pub fn auc_of(points: &[(f64, f64)]) -> Result<f64> {
    Ok(EvalCurve::through(to_points(points))?.auc)
}

/// Equal error rate of `(fpr, tpr)` points, linearly interpolated.
pub fn eer_of(points: &[(f64, f64)]) -> Result<f64> {
    Ok(EvalCurve::through(to_points(points))?.eer)
}

/// Threshold-free ROC of a continuous score (higher = more irregular).
pub fn roc_from_scores(scores: &[f64], labels: &[bool]) -> Result<EvalCurve> {
    if scores.len() != labels.len() {
        return Err(AvidError::argument("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(AvidError::argument("scores contain NaN"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(AvidError::argument("ROC needs both positive and negative samples"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let cut = scores[order[i]];
        while i < order.len() && scores[order[i]] == cut {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(CurvePoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            thresholds: None,
            cut: Some(cut),
        });
    }
    EvalCurve::through(points)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn diagonal_and_perfect_curves() {
        assert_eq!(auc_of(&[(0.0, 0.0), (1.0, 1.0)]).unwrap(), 0.5);
        assert_eq!(eer_of(&[(0.0, 0.0), (1.0, 1.0)]).unwrap(), 0.5);
        assert_eq!(auc_of(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]).unwrap(), 1.0);
        assert_eq!(eer_of(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]).unwrap(), 0.0);
        // Endpoints are implied.
        assert_eq!(auc_of(&[(0.0, 1.0)]).unwrap(), 1.0);
    }

    #[test]
    fn invalid_points_are_rejected() {
        assert!(matches!(auc_of(&[(f64::NAN, 0.2)]), Err(AvidError::Argument(_))));
        assert!(eer_of(&[(0.5, 1.2)]).is_err());
    }

    #[test]
    fn envelope_drops_dominated_points() {
        let pts = vec![
            CurvePoint::bare(0.1, 0.6),
            CurvePoint::bare(0.2, 0.5),
            CurvePoint::bare(0.3, 0.9),
            CurvePoint::bare(0.3, 0.7),
        ];
        let c = EvalCurve::envelope(pts).unwrap();
        let xy: Vec<_> = c.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(xy, vec![(0.0, 0.0), (0.1, 0.6), (0.3, 0.9), (1.0, 1.0)]);
    }

    #[test]
    fn constant_scores_give_the_diagonal() {
        let c = roc_from_scores(&[0.3; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(c.auc, 0.5);
        assert_eq!(c.eer, 0.5);
    }

    #[test]
    fn perfect_separation() {
        let c = roc_from_scores(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(c.auc, 1.0);
        assert_eq!(c.eer, 0.0);
    }

    #[test]
    fn six_point_fixture() {
        // Positives 0.9, 0.6, 0.35; negatives 0.7, 0.3, 0.1.
        // Pairs won: 0.9 beats all 3, 0.6 beats 2, 0.35 beats 2 -> 7/9.
        let s = [0.9, 0.7, 0.6, 0.35, 0.3, 0.1];
        let l = [true, false, true, true, false, false];
        let c = roc_from_scores(&s, &l).unwrap();
        assert!((c.auc - 7.0 / 9.0).abs() < 1e-12);
        // Points (0,1/3),(1/3,1/3),(1/3,2/3),(1/3,1): crossing at fpr 1/3.
        assert!((c.eer - 1.0 / 3.0).abs() < 1e-12);
    }

    fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    /// Every cut-off, evaluated from scratch, then a bisection on the resulting polyline.
    fn brute_force_eer(scores: &[f64], labels: &[bool]) -> f64 {
        let pos = labels.iter().filter(|&&l| l).count() as f64;
        let neg = labels.len() as f64 - pos;
        let mut cuts: Vec<f64> = scores.to_vec();
        cuts.push(f64::INFINITY);
        cuts.sort_by(|a, b| b.total_cmp(a));
        cuts.dedup();
        let mut pts: Vec<(f64, f64)> = cuts
            .iter()
            .map(|&c| {
                let tp = scores.iter().zip(labels).filter(|(&s, &l)| l && s >= c).count() as f64;
                let fp = scores.iter().zip(labels).filter(|(&s, &l)| !l && s >= c).count() as f64;
                (fp / neg, tp / pos)
            })
            .collect();
        pts.push((1.0, 1.0));
        // Parametrise the polyline by arc index and bisect g = fpr + tpr - 1.
        let at = |u: f64| {
            let k = (u.floor() as usize).min(pts.len() - 2);
            let t = u - k as f64;
            let (a, b) = (pts[k], pts[k + 1]);
            (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
        };
        let (mut lo, mut hi) = (0.0, (pts.len() - 1) as f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let p = at(mid);
            if p.0 + p.1 - 1.0 < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(hi).0
    }

    #[test]
    fn matches_brute_force_on_random_score_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..200 {
            let n = rng.gen_range(2..16);
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            // Coarse scores so ties occur.
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64 / 8.0).collect();
            let c = roc_from_scores(&scores, &labels).unwrap();
            assert!((c.auc - mann_whitney(&scores, &labels)).abs() < 1e-6);
            assert!((c.eer - brute_force_eer(&scores, &labels)).abs() < 1e-6, "{scores:?} {labels:?}");
        }
    }

    proptest! {
        #[test]
        fn flipping_scores_mirrors_auc(
            scores in proptest::collection::vec(0.0f64..1.0, 2..30),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut labels: Vec<bool> = scores.iter().map(|_| rng.gen_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let a = roc_from_scores(&scores, &labels).unwrap().auc;
            let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
            let b = roc_from_scores(&flipped, &labels).unwrap().auc;
            prop_assert!((a + b - 1.0).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn dense_resampling_agrees(raw in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 8)) {
            // A monotone 10-point curve built from sorted coordinates.
            let mut f: Vec<f64> = raw.iter().map(|p| p.0).collect();
            let mut t: Vec<f64> = raw.iter().map(|p| p.1).collect();
            f.sort_by(f64::total_cmp);
            t.sort_by(f64::total_cmp);
            let mut pts = vec![(0.0, 0.0)];
            pts.extend(f.iter().copied().zip(t.iter().copied()));
            pts.push((1.0, 1.0));
            let n = 100_000;
            let interp = |x: f64| {
                let k = pts.windows(2).position(|w| x <= w[1].0).unwrap_or(pts.len() - 2);
                let (a, b) = (pts[k], pts[k + 1]);
                if b.0 == a.0 { b.1 } else { a.1 + (x - a.0) / (b.0 - a.0) * (b.1 - a.1) }
            };
            let dense: f64 = (0..n).map(|i| interp((i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
            prop_assert!((auc_of(&pts).unwrap() - dense).abs() < 1e-4);
            let eer = eer_of(&pts).unwrap();
            let g = |x: f64| x + interp(x) - 1.0;
            // The crossing is where g changes sign.
            prop_assert!(g((eer - 1e-6).max(0.0)) <= 1e-6 || eer == 0.0);
            prop_assert!(g((eer + 1e-6).min(1.0)) >= -1e-6);
        }
    }
}
