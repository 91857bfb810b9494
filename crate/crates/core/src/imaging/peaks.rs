use std::cmp::Ordering;

use crate::geometry::Point2;
use crate::imaging::Tile;
use crate::scalar::Scalar;

pub const DEFAULT_PEAK_THRESHOLD: f64 = 0.5;
pub const DEFAULT_NMS_RADIUS: f64 = 8.0;

/// A local maximum of a probability map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak<T> {
    pub position: Point2<T>,
    pub value: T,
}

/// Local peaks of a one-channel probability map.
///
/// A peak is an 8-connected plateau of equal value, at least `threshold`
/// and positive, with no strictly larger neighbor; its position is the
/// plateau centroid. Peaks are accepted greedily by descending value (ties
/// by (y, x)) and any candidate closer than `nms_radius` to an accepted peak
/// is suppressed. Output is in acceptance order.
pub fn extract_peaks<T: Scalar>(prob: &Tile<T>, threshold: T, nms_radius: T) -> Vec<Peak<T>> {
    let (w, h) = (prob.width(), prob.height());
    let value = |x: usize, y: usize| prob.get(x, y, 0);
    let mut seen = vec![false; w * h];
    let mut candidates: Vec<Peak<T>> = Vec::new();
    let mut stack = Vec::new();
    let mut region = Vec::new();

    for y0 in 0..h {
        for x0 in 0..w {
            let v = value(x0, y0);
            if seen[y0 * w + x0] || v < threshold || v <= T::zero() {
                continue;
            }
            region.clear();
            stack.push((x0, y0));
            seen[y0 * w + x0] = true;
            let mut is_max = true;
            while let Some((x, y)) = stack.pop() {
                region.push((x, y));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        let nv = value(nx, ny);
                        if nv > v {
                            is_max = false;
                        } else if nv == v && !seen[ny * w + nx] {
                            seen[ny * w + nx] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            if is_max {
                let n = T::from_usize_lossy(region.len());
                let sx: T = region.iter().map(|(x, _)| T::from_usize_lossy(*x)).sum();
                let sy: T = region.iter().map(|(_, y)| T::from_usize_lossy(*y)).sum();
                candidates.push(Peak {
                    position: Point2::new(sx / n, sy / n),
                    value: v,
                });
            }
        }
    }

    candidates.sort_by(|a, b| {
        b.value
            .partial_cmp(&a.value)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.position.cmp_yx(&b.position))
    });
    let radius_sq = nms_radius * nms_radius;
    let mut accepted: Vec<Peak<T>> = Vec::new();
    for c in candidates {
        if accepted
            .iter()
            .all(|a| a.position.dist_sq(c.position) >= radius_sq)
        {
            accepted.push(c);
        }
    }
    accepted
}
