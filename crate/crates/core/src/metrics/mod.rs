//! Evaluation metrics: pixel-level and intersection-level precision/recall/F
//! under a distance tolerance, and the APLS path-length similarity.

mod apls;

use serde::{Deserialize, Serialize};

use crate::graph::RoadGraph;
use crate::imaging::{rasterize_graph, squared_distance_transform};
use crate::scalar::Scalar;

pub use apls::{apls, AplsResult, DEFAULT_APLS_PAIRS, DEFAULT_SNAP_RADIUS};

/// Tolerances reported by [`full_report`] by default.
pub const DEFAULT_DELTAS: [f64; 3] = [2.0, 5.0, 10.0];

/// Precision, recall and F1 with the raw tallies behind them.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub pred_matched: usize,
    pub pred_total: usize,
    pub gt_matched: usize,
    pub gt_total: usize,
}

/// Ratio with the empty-set convention: 1 when both sets are empty, 0 when
/// only the evaluated set is.
fn ratio(matched: usize, total: usize, other_total: usize) -> f64 {
    if total == 0 {
        if other_total == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        matched as f64 / total as f64
    }
}

pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl PrfScore {
    pub fn from_counts(
        pred_matched: usize,
        pred_total: usize,
        gt_matched: usize,
        gt_total: usize,
    ) -> Self {
        let precision = ratio(pred_matched, pred_total, gt_total);
        let recall = ratio(gt_matched, gt_total, pred_total);
        Self {
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
            pred_matched,
            pred_total,
            gt_matched,
            gt_total,
        }
    }
}

/// Number of `true` pixels of `mask` strictly closer than `delta` to a
/// `true` pixel of the other mask, given the other mask's squared distance
/// transform.
fn count_within(mask: &[bool], other_dist_sq: &[f64], delta: f64) -> usize {
    let d2 = delta * delta;
    mask.iter()
        .zip(other_dist_sq)
        .filter(|(m, d)| **m && **d < d2)
        .count()
}

/// Pixel-level P/R/F at tolerance `delta` on one-pixel rasterizations.
pub fn pixel_metrics<T: Scalar>(
    gt: &RoadGraph<T>,
    pred: &RoadGraph<T>,
    width: usize,
    height: usize,
    delta: f64,
) -> PrfScore {
    let gm = rasterize_graph(gt, width, height, 1).to_mask();
    let pm = rasterize_graph(pred, width, height, 1).to_mask();
    pixel_metrics_masks(&gm, &pm, width, height, &[delta])[0]
}

/// Pixel-level P/R/F for several tolerances, sharing the distance transforms.
pub fn pixel_metrics_masks(
    gt: &[bool],
    pred: &[bool],
    width: usize,
    height: usize,
    deltas: &[f64],
) -> Vec<PrfScore> {
    let gt_dist = squared_distance_transform(gt, width, height);
    let pred_dist = squared_distance_transform(pred, width, height);
    let gt_total = gt.iter().filter(|m| **m).count();
    let pred_total = pred.iter().filter(|m| **m).count();
    deltas
        .iter()
        .map(|&delta| {
            PrfScore::from_counts(
                count_within(pred, &gt_dist, delta),
                pred_total,
                count_within(gt, &pred_dist, delta),
                gt_total,
            )
        })
        .collect()
}

/// Distinct rounded pixel positions of the degree >= 3 vertices of the
/// simplified graph.
pub fn intersection_pixels<T: Scalar>(g: &RoadGraph<T>) -> Vec<(i64, i64)> {
    let s = g.simplified();
    let mut px: Vec<(i64, i64)> = s
        .vertices()
        .filter(|(id, _)| s.degree(*id) >= 3)
        .map(|(_, p)| p.pixel())
        .collect();
    px.sort_unstable();
    px.dedup();
    px
}

fn points_within(from: &[(i64, i64)], to: &[(i64, i64)], delta: f64) -> usize {
    let d2 = delta * delta;
    from.iter()
        .filter(|(x, y)| {
            to.iter().any(|(u, v)| {
                let (dx, dy) = ((x - u) as f64, (y - v) as f64);
                dx * dx + dy * dy < d2
            })
        })
        .count()
}

/// Intersection-level P/R/F at tolerance `delta`.
pub fn intersection_metrics<T: Scalar>(
    gt: &RoadGraph<T>,
    pred: &RoadGraph<T>,
    delta: f64,
) -> PrfScore {
    let g = intersection_pixels(gt);
    let p = intersection_pixels(pred);
    intersection_metrics_points(&g, &p, delta)
}

fn intersection_metrics_points(g: &[(i64, i64)], p: &[(i64, i64)], delta: f64) -> PrfScore {
    PrfScore::from_counts(
        points_within(p, g, delta),
        p.len(),
        points_within(g, p, delta),
        g.len(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub deltas: Vec<f64>,
    pub apls_pairs: usize,
    pub snap_radius: f64,
    pub seed: u64,
    pub symmetric: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            deltas: DEFAULT_DELTAS.to_vec(),
            apls_pairs: DEFAULT_APLS_PAIRS,
            snap_radius: DEFAULT_SNAP_RADIUS,
            seed: 0,
            symmetric: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaScore {
    pub delta: f64,
    #[serde(flatten)]
    pub score: PrfScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pixel: Vec<DeltaScore>,
    pub intersection: Vec<DeltaScore>,
    pub apls: f64,
    pub apls_pairs: usize,
    pub apls_degenerate: bool,
}

impl MetricReport {
    pub fn pixel_at(&self, delta: f64) -> Option<&PrfScore> {
        self.pixel
            .iter()
            .find(|d| d.delta == delta)
            .map(|d| &d.score)
    }

    pub fn intersection_at(&self, delta: f64) -> Option<&PrfScore> {
        self.intersection
            .iter()
            .find(|d| d.delta == delta)
            .map(|d| &d.score)
    }

    /// Plain-text table: one row per family and statistic, one column per
    /// tolerance, values in percent.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let head: Vec<String> = self
            .pixel
            .iter()
            .map(|d| format!("{:>8.1}", d.delta))
            .collect();
        out.push_str(&format!("{:<8}{}\n", "delta", head.join("")));
        let rows: [(&str, &Vec<DeltaScore>, fn(&PrfScore) -> f64); 6] = [
            ("P-P", &self.pixel, |s| s.precision),
            ("P-R", &self.pixel, |s| s.recall),
            ("P-F", &self.pixel, |s| s.f1),
            ("I-P", &self.intersection, |s| s.precision),
            ("I-R", &self.intersection, |s| s.recall),
            ("I-F", &self.intersection, |s| s.f1),
        ];
        for (name, family, get) in rows {
            let cells: Vec<String> = family
                .iter()
                .map(|d| format!("{:>8.2}", 100.0 * get(&d.score)))
                .collect();
            out.push_str(&format!("{:<8}{}\n", name, cells.join("")));
        }
        out.push_str(&format!("{:<8}{:>8.2}\n", "APLS", 100.0 * self.apls));
        out
    }
}

/// All metric families at every configured tolerance.
pub fn full_report<T: Scalar>(
    gt: &RoadGraph<T>,
    pred: &RoadGraph<T>,
    width: usize,
    height: usize,
    cfg: &MetricsConfig,
) -> MetricReport {
    let gm = rasterize_graph(gt, width, height, 1).to_mask();
    let pm = rasterize_graph(pred, width, height, 1).to_mask();
    let pixel = pixel_metrics_masks(&gm, &pm, width, height, &cfg.deltas);
    let gi = intersection_pixels(gt);
    let pi = intersection_pixels(pred);
    let a = apls(
        gt,
        pred,
        cfg.apls_pairs,
        cfg.snap_radius,
        cfg.seed,
        cfg.symmetric,
    );
    MetricReport {
        pixel: cfg
            .deltas
            .iter()
            .zip(pixel)
            .map(|(&delta, score)| DeltaScore { delta, score })
            .collect(),
        intersection: cfg
            .deltas
            .iter()
            .map(|&delta| DeltaScore {
                delta,
                score: intersection_metrics_points(&gi, &pi, delta),
            })
            .collect(),
        apls: a.value,
        apls_pairs: a.pairs,
        apls_degenerate: a.degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    type G = RoadGraph<f64>;

    fn line(y: f64) -> G {
        let mut g = G::new();
        let a = g.add_vertex(Point2::new(2.0, y));
        let b = g.add_vertex(Point2::new(29.0, y));
        g.add_edge(a, b).unwrap();
        g
    }

    fn cross(cx: f64, cy: f64) -> G {
        let mut g = G::new();
        let c = g.add_vertex(Point2::new(cx, cy));
        for (dx, dy) in [(20.0, 0.0), (-20.0, 0.0), (0.0, 20.0), (0.0, -20.0)] {
            let v = g.add_vertex(Point2::new(cx + dx, cy + dy));
            g.add_edge(c, v).unwrap();
        }
        g
    }

    #[test]
    fn identical_graphs_score_one() {
        let g = line(5.0);
        let s = pixel_metrics(&g, &g, 32, 32, 2.0);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let s = pixel_metrics(&line(5.0), &G::new(), 32, 32, 5.0);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = pixel_metrics(&G::new(), &G::new(), 32, 32, 5.0);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    /// Parallel lines compared against brute-force pixel distances.
    #[test]
    fn strict_tolerance_on_parallel_lines() {
        for delta in [2.0, 5.0, 10.0] {
            let gt = line(5.0);
            let near = pixel_metrics(&gt, &line(5.0 + delta - 1.0), 32, 32, delta);
            assert_eq!((near.precision, near.recall, near.f1), (1.0, 1.0, 1.0));
            let far = pixel_metrics(&gt, &line(5.0 + delta), 32, 32, delta);
            assert_eq!((far.precision, far.recall, far.f1), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn brute_force_agreement() {
        let gt = cross(15.0, 15.0);
        let pred = line(13.0);
        let gm = rasterize_graph(&gt, 32, 32, 1).to_mask();
        let pm = rasterize_graph(&pred, 32, 32, 1).to_mask();
        let pts = |m: &[bool]| -> Vec<(i64, i64)> {
            (0..m.len())
                .filter(|i| m[*i])
                .map(|i| ((i % 32) as i64, (i / 32) as i64))
                .collect()
        };
        let (g, p) = (pts(&gm), pts(&pm));
        for delta in [1.0, 2.0, 3.0, 5.0] {
            let s = pixel_metrics(&gt, &pred, 32, 32, delta);
            assert_eq!(s.pred_matched, points_within(&p, &g, delta));
            assert_eq!(s.gt_matched, points_within(&g, &p, delta));
        }
    }

    #[test]
    fn intersection_anchors() {
        let g = cross(50.0, 50.0);
        let s = intersection_metrics(&g, &g, 2.0);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        let s = intersection_metrics(&g, &line(5.0), 10.0);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let moved = cross(52.5, 50.0);
        assert_eq!(intersection_metrics(&g, &moved, 5.0).f1, 1.0);
        // displacement equal to delta is not a match
        assert_eq!(intersection_metrics(&g, &cross(55.0, 50.0), 5.0).f1, 0.0);
    }

    #[test]
    fn report_matches_single_calls_and_table() {
        let gt = cross(50.0, 50.0);
        let pred = cross(53.0, 49.0);
        let cfg = MetricsConfig::default();
        let r = full_report(&gt, &pred, 100, 100, &cfg);
        for d in DEFAULT_DELTAS {
            assert_eq!(
                *r.pixel_at(d).unwrap(),
                pixel_metrics(&gt, &pred, 100, 100, d)
            );
            assert_eq!(
                *r.intersection_at(d).unwrap(),
                intersection_metrics(&gt, &pred, d)
            );
        }
        assert_eq!(r.apls, apls(&gt, &pred, 500, 15.0, 0, false).value);
        let swapped = full_report(&pred, &gt, 100, 100, &cfg);
        for (a, b) in r.pixel.iter().zip(&swapped.pixel) {
            assert_eq!(a.score.precision, b.score.recall);
            assert_eq!(a.score.recall, b.score.precision);
        }
        let table = r.to_table();
        assert!(table.contains("P-F") && table.contains("APLS"));
        assert_eq!(table.lines().count(), 8);
    }
}
