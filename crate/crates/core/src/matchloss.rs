//! Set-prediction matching and the training losses as plain functions.
//!
//! Predictions are matched to label vertices by a minimum-cost bipartite
//! assignment on Euclidean distance. The coordinate loss is an L1 distance
//! over matched pairs, the validity loss a binary cross entropy over all
//! queries, and segmentation maps use the focal loss.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::imaging::Tile;
use crate::scalar::Scalar;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("length mismatch: {0} probabilities, {1} targets")]
    LengthMismatch(usize, usize),
    #[error("map shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment<T> {
    /// `(prediction index, label index)`, sorted by prediction index.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: T,
}

impl<T: Scalar> Assignment<T> {
    /// Validity targets: `true` for every matched prediction.
    pub fn matched_flags(&self, n_preds: usize) -> Vec<bool> {
        let mut flags = vec![false; n_preds];
        for (p, _) in &self.pairs {
            flags[*p] = true;
        }
        flags
    }

    /// Label index matched to each prediction.
    pub fn label_for(&self, pred: usize) -> Option<usize> {
        self.pairs.iter().find(|(p, _)| *p == pred).map(|(_, l)| *l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights<T> {
    /// Weight on the coordinate loss.
    pub alpha: T,
    /// Weight on the validity loss.
    pub beta: T,
    pub focal_alpha: T,
    pub focal_gamma: T,
}

impl<T: Scalar> Default for LossWeights<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(5.0),
            beta: T::one(),
            focal_alpha: T::lit(0.25),
            focal_gamma: T::lit(2.0),
        }
    }
}

/// Minimum-cost assignment for a `rows × cols` cost matrix with
/// `rows <= cols`. Returns the column for every row.
///
/// Shortest augmenting path formulation with row and column potentials,
/// O(rows² · cols). Among equal reduced costs the smallest column index
/// wins, which makes the result deterministic.
pub fn hungarian<T: Scalar>(cost: &[Vec<T>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "hungarian needs rows <= cols");
    let inf = T::infinity();
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    // p[j]: row (1-based) assigned to column j; column 0 is the virtual root
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Matches predictions to labels minimizing the summed Euclidean distance.
/// Exactly `min(preds, labels)` pairs are produced.
pub fn match_vertices<T: Scalar>(preds: &[Point2<T>], labels: &[Point2<T>]) -> Assignment<T> {
    if preds.is_empty() || labels.is_empty() {
        return Assignment {
            pairs: Vec::new(),
            total_cost: T::zero(),
        };
    }
    let mut pairs: Vec<(usize, usize)> = if preds.len() <= labels.len() {
        let cost: Vec<Vec<T>> = preds
            .iter()
            .map(|p| labels.iter().map(|l| p.dist(*l)).collect())
            .collect();
        hungarian(&cost).into_iter().enumerate().collect()
    } else {
        let cost: Vec<Vec<T>> = labels
            .iter()
            .map(|l| preds.iter().map(|p| p.dist(*l)).collect())
            .collect();
        hungarian(&cost)
            .into_iter()
            .enumerate()
            .map(|(l, p)| (p, l))
            .collect()
    };
    pairs.sort_unstable();
    let total_cost = pairs.iter().map(|(p, l)| preds[*p].dist(labels[*l])).sum();
    Assignment { pairs, total_cost }
}

/// Mean L1 distance (|dx| + |dy|) over matched pairs; zero without pairs.
pub fn coord_loss<T: Scalar>(preds: &[Point2<T>], labels: &[Point2<T>], a: &Assignment<T>) -> T {
    if a.pairs.is_empty() {
        return T::zero();
    }
    let sum: T = a.pairs.iter().map(|(p, l)| preds[*p].l1(labels[*l])).sum();
    sum / T::from_usize_lossy(a.pairs.len())
}

fn clamp_prob<T: Scalar>(p: T) -> T {
    let eps = T::lit(PROB_EPS);
    p.max(eps).min(T::one() - eps)
}

fn bce_term<T: Scalar>(p: T, target: bool) -> T {
    let p = clamp_prob(p);
    if target {
        -p.ln()
    } else {
        -(T::one() - p).ln()
    }
}

/// Mean binary cross entropy over all queries, matched or not.
pub fn valid_loss<T: Scalar>(probs: &[T], matched: &[bool]) -> Result<T, LossError> {
    if probs.len() != matched.len() {
        return Err(LossError::LengthMismatch(probs.len(), matched.len()));
    }
    if probs.is_empty() {
        return Ok(T::zero());
    }
    let sum: T = probs
        .iter()
        .zip(matched)
        .map(|(p, y)| bce_term(*p, *y))
        .sum();
    Ok(sum / T::from_usize_lossy(probs.len()))
}

fn check_shapes<T: Scalar>(a: &Tile<T>, b: &Tile<T>) -> Result<(), LossError> {
    if a.shape() != b.shape() || a.channels() != 1 {
        return Err(LossError::ShapeMismatch(a.shape(), b.shape()));
    }
    Ok(())
}

/// Mean per-pixel focal loss `-a_t (1 - p_t)^gamma ln p_t`, with
/// `a_t = focal_alpha` on positive pixels (mask value >= 0.5) and
/// `1 - focal_alpha` on negatives.
pub fn focal_loss<T: Scalar>(
    pred: &Tile<T>,
    gt: &Tile<T>,
    focal_alpha: T,
    focal_gamma: T,
) -> Result<T, LossError> {
    check_shapes(pred, gt)?;
    let half = T::lit(0.5);
    let n = pred.data().len();
    if n == 0 {
        return Ok(T::zero());
    }
    let sum: T = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(p, y)| {
            let p = clamp_prob(*p);
            let positive = *y >= half;
            let (pt, at) = if positive {
                (p, focal_alpha)
            } else {
                (T::one() - p, T::one() - focal_alpha)
            };
            -at * (T::one() - pt).powf(focal_gamma) * pt.ln()
        })
        .sum();
    Ok(sum / T::from_usize_lossy(n))
}

/// Mean per-pixel binary cross entropy of a probability map.
pub fn bce_map_loss<T: Scalar>(pred: &Tile<T>, gt: &Tile<T>) -> Result<T, LossError> {
    check_shapes(pred, gt)?;
    let half = T::lit(0.5);
    let n = pred.data().len();
    if n == 0 {
        return Ok(T::zero());
    }
    let sum: T = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(p, y)| bce_term(*p, *y >= half))
        .sum();
    Ok(sum / T::from_usize_lossy(n))
}

/// Loss terms of one training step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents<T> {
    pub road_focal: T,
    pub intersection_focal: T,
    pub coord: T,
    pub valid: T,
}

impl<T: Scalar> LossComponents<T> {
    pub fn seg(&self) -> T {
        self.road_focal + self.intersection_focal
    }
}

/// `seg + alpha * coord + beta * valid`, where seg sums the two focal terms.
pub fn total_loss<T: Scalar>(c: &LossComponents<T>, w: &LossWeights<T>) -> T {
    c.seg() + w.alpha * c.coord + w.beta * c.valid
}

/// Matches one step's predictions to its labels and evaluates the vertex
/// losses. The segmentation terms are left at zero.
pub fn vertex_losses<T: Scalar>(
    preds: &[Point2<T>],
    probs: &[T],
    labels: &[Point2<T>],
) -> Result<(Assignment<T>, LossComponents<T>), LossError> {
    if preds.len() != probs.len() {
        return Err(LossError::LengthMismatch(probs.len(), preds.len()));
    }
    let a = match_vertices(preds, labels);
    let coord = coord_loss(preds, labels, &a);
    let valid = valid_loss(probs, &a.matched_flags(preds.len()))?;
    Ok((
        a,
        LossComponents {
            coord,
            valid,
            ..Default::default()
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    type P = Point2<f64>;

    #[test]
    fn empty_sides() {
        let a = match_vertices::<f64>(&[], &[P::new(1.0, 1.0)]);
        assert!(a.pairs.is_empty());
        assert_eq!(a.total_cost, 0.0);
        assert_eq!(coord_loss(&[], &[P::new(1.0, 1.0)], &a), 0.0);
    }

    #[test]
    fn single_pair() {
        let preds = [P::new(0.0, 0.0)];
        let labels = [P::new(3.0, 4.0)];
        let a = match_vertices(&preds, &labels);
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert_eq!(a.total_cost, 5.0);
        assert_eq!(coord_loss(&preds, &labels, &a), 7.0);
        assert_eq!(
            coord_loss(&labels, &labels, &match_vertices(&labels, &labels)),
            0.0
        );
    }

    #[test]
    fn more_predictions_than_labels() {
        let preds = [P::new(100.0, 0.0), P::new(0.0, 0.0), P::new(10.0, 0.0)];
        let labels = [P::new(9.0, 0.0), P::new(1.0, 0.0)];
        let a = match_vertices(&preds, &labels);
        assert_eq!(a.pairs, vec![(1, 1), (2, 0)]);
        assert_eq!(a.total_cost, 2.0);
        assert_eq!(a.matched_flags(3), vec![false, true, true]);
    }

    #[test]
    fn ties_resolve_deterministically() {
        let preds = [P::new(0.0, 0.0), P::new(0.0, 0.0)];
        let labels = [P::new(1.0, 0.0), P::new(1.0, 0.0)];
        assert_eq!(match_vertices(&preds, &labels).pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn bce_anchors() {
        let perfect = valid_loss(&[1.0f64, 0.0, 1.0], &[true, false, true]).unwrap();
        assert!(perfect < 1e-6);
        let half = valid_loss(&[0.5f64; 4], &[true, false, false, true]).unwrap();
        assert_abs_diff_eq!(half, std::f64::consts::LN_2, epsilon = 1e-15);
        assert_eq!(
            valid_loss(&[0.5f64], &[true, false]),
            Err(LossError::LengthMismatch(1, 2))
        );
    }

    /// Reference value from 50-digit decimal evaluation.
    #[test]
    fn bce_matches_high_precision_reference() {
        let probs = [0.9f64, 0.2, 0.65, 0.01, 0.5, 0.999];
        let flags = [true, false, true, false, false, true];
        let v = valid_loss(&probs, &flags).unwrap();
        assert_abs_diff_eq!(v, 0.243_914_166_635_253_43, epsilon = 1e-14);
    }

    #[test]
    fn focal_single_pixel_reference() {
        let pred = Tile::from_vec(1, 1, 1, vec![0.5f64]).unwrap();
        let gt = Tile::from_vec(1, 1, 1, vec![1.0f64]).unwrap();
        let v = focal_loss(&pred, &gt, 0.25, 2.0).unwrap();
        assert_abs_diff_eq!(v, 0.043_321_698_784_996_58, epsilon = 1e-15);
        let f32v = focal_loss(&pred.cast::<f32>(), &gt.cast::<f32>(), 0.25, 2.0).unwrap();
        assert!((f64::from(f32v) - 0.043_321_698_784_996_58).abs() < 1e-6);
    }

    #[test]
    fn focal_map_reference() {
        let pred = Tile::from_vec(2, 2, 1, vec![0.8f64, 0.3, 0.6, 0.05]).unwrap();
        let gt = Tile::from_vec(2, 2, 1, vec![1.0f64, 0.0, 0.0, 1.0]).unwrap();
        let v = focal_loss(&pred, &gt, 0.25, 2.0).unwrap();
        assert_abs_diff_eq!(v, 0.237_404_396_513_911_9, epsilon = 1e-14);
    }

    #[test]
    fn focal_perfect_prediction_is_tiny() {
        let gt = Tile::from_vec(2, 1, 1, vec![1.0f64, 0.0]).unwrap();
        assert!(focal_loss(&gt, &gt, 0.25, 2.0).unwrap() <= 1e-5);
        let other = Tile::<f64>::zeros(3, 1, 1);
        assert!(matches!(
            focal_loss(&gt, &other, 0.25, 2.0),
            Err(LossError::ShapeMismatch(..))
        ));
    }

    #[test]
    fn total_loss_combination() {
        let c = LossComponents {
            road_focal: 0.1f64,
            intersection_focal: 0.2,
            coord: 3.0,
            valid: 0.5,
        };
        let w = LossWeights::default();
        assert_abs_diff_eq!(total_loss(&c, &w), 0.3 + 15.0 + 0.5, epsilon = 1e-12);
        let zero_w = LossWeights {
            alpha: 0.0,
            beta: 0.0,
            ..w
        };
        assert_eq!(total_loss(&c, &zero_w), c.seg());
        assert_eq!(total_loss(&LossComponents::default(), &w), 0.0);
    }
}
