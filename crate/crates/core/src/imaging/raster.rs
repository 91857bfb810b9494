//! Binary rasterization of graphs, ROI cropping and exact distance transforms.

use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::graph::RoadGraph;
use crate::imaging::Tile;
use crate::scalar::Scalar;

/// Default crop side in pixels.
pub const DEFAULT_ROI_SIDE: usize = 256;

/// Square region of interest centered on a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiSpec<T> {
    pub center: Point2<T>,
    pub side: usize,
}

impl<T: Scalar> RoiSpec<T> {
    /// `side` must be positive and even.
    pub fn new(center: Point2<T>, side: usize) -> Option<Self> {
        (side > 0 && side % 2 == 0).then_some(Self { center, side })
    }

    /// Source coordinates of the crop's top-left pixel.
    pub fn origin(&self) -> (i64, i64) {
        let (cx, cy) = self.center.pixel();
        let half = (self.side / 2) as i64;
        (cx - half, cy - half)
    }
}

/// Integer line from `(x0, y0)` to `(x1, y1)` inclusive.
///
/// Endpoints are put in canonical (y, x) order first, so the pixel set does
/// not depend on the direction of the segment.
pub fn bresenham(x0: i64, y0: i64, x1: i64, y1: i64) -> Vec<(i64, i64)> {
    let ((x0, y0), (x1, y1)) = if (y0, x0) <= (y1, x1) {
        ((x0, y0), (x1, y1))
    } else {
        ((x1, y1), (x0, y0))
    };
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    let mut out = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        out.push((x, y));
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// Pixel offsets of a filled disk of the given radius.
pub fn disk_offsets(radius: f64) -> Vec<(i64, i64)> {
    let r = radius.max(0.0);
    let ri = r.floor() as i64;
    let r_sq = r * r;
    let mut out = Vec::new();
    for dy in -ri..=ri {
        for dx in -ri..=ri {
            if ((dx * dx + dy * dy) as f64) <= r_sq {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Pen used for a stroke width: a disk of radius `(stroke - 1) / 2`.
fn pen(stroke: usize) -> Vec<(i64, i64)> {
    disk_offsets((stroke.max(1) as f64 - 1.0) / 2.0)
}

fn stamp<T: Scalar>(t: &mut Tile<T>, x: i64, y: i64, pen: &[(i64, i64)]) {
    for (dx, dy) in pen {
        t.put(x + dx, y + dy, T::one());
    }
}

/// Draws a polyline into `t` with the window origin at `(ox, oy)`.
fn draw_polyline<T: Scalar>(
    t: &mut Tile<T>,
    poly: &[Point2<T>],
    origin: (i64, i64),
    pen: &[(i64, i64)],
) {
    let reach = pen.iter().map(|(dx, _)| dx.abs()).max().unwrap_or(0) + 1;
    let (w, h) = (t.width() as i64, t.height() as i64);
    for seg in poly.windows(2) {
        let (x0, y0) = seg[0].pixel();
        let (x1, y1) = seg[1].pixel();
        let (x0, y0, x1, y1) = (x0 - origin.0, y0 - origin.1, x1 - origin.0, y1 - origin.1);
        if x0.max(x1) < -reach
            || y0.max(y1) < -reach
            || x0.min(x1) >= w + reach
            || y0.min(y1) >= h + reach
        {
            continue;
        }
        for (x, y) in bresenham(x0, y0, x1, y1) {
            stamp(t, x, y, pen);
        }
    }
}

/// Binary mask of the graph: polylines drawn with integer line stepping and
/// dilated to `stroke` width, every vertex stamped with the same pen.
/// Geometry outside the tile is clipped.
pub fn rasterize_graph<T: Scalar>(
    g: &RoadGraph<T>,
    width: usize,
    height: usize,
    stroke: usize,
) -> Tile<T> {
    rasterize_graph_window(g, (0, 0), width, height, stroke)
}

/// Like [`rasterize_graph`] but for the window whose top-left source pixel
/// is `origin`.
pub fn rasterize_graph_window<T: Scalar>(
    g: &RoadGraph<T>,
    origin: (i64, i64),
    width: usize,
    height: usize,
    stroke: usize,
) -> Tile<T> {
    let mut t = Tile::zeros(width, height, 1);
    let pen = pen(stroke);
    for (_, _, poly) in g.edges() {
        draw_polyline(&mut t, poly, origin, &pen);
    }
    for (_, p) in g.vertices() {
        let (x, y) = p.pixel();
        stamp(&mut t, x - origin.0, y - origin.1, &pen);
    }
    t
}

/// Mask with filled disks of `radius` at the given points.
pub fn rasterize_disks<T: Scalar>(
    points: &[Point2<T>],
    width: usize,
    height: usize,
    radius: f64,
) -> Tile<T> {
    let mut t = Tile::zeros(width, height, 1);
    let pen = disk_offsets(radius);
    for p in points {
        let (x, y) = p.pixel();
        stamp(&mut t, x, y, &pen);
    }
    t
}

/// `side`×`side` crop centered at the rounded ROI center, zero padded.
pub fn crop_roi<T: Scalar>(t: &Tile<T>, spec: &RoiSpec<T>) -> Tile<T> {
    let (ox, oy) = spec.origin();
    let mut out = Tile::zeros(spec.side, spec.side, t.channels());
    for j in 0..spec.side {
        let sy = oy + j as i64;
        if sy < 0 || sy >= t.height() as i64 {
            continue;
        }
        for i in 0..spec.side {
            let sx = ox + i as i64;
            if sx < 0 || sx >= t.width() as i64 {
                continue;
            }
            for c in 0..t.channels() {
                out.set(i, j, c, t.get(sx as usize, sy as usize, c));
            }
        }
    }
    out
}

/// Squared Euclidean distance from every pixel to the nearest `true` pixel
/// of `mask` (infinite when the mask is empty). Exact, separable
/// lower-envelope algorithm.
pub fn squared_distance_transform(mask: &[bool], width: usize, height: usize) -> Vec<f64> {
    assert_eq!(mask.len(), width * height);
    let inf = f64::INFINITY;
    let mut grid: Vec<f64> = mask.iter().map(|m| if *m { 0.0 } else { inf }).collect();
    let mut buf_in = vec![0.0; width.max(height)];
    let mut buf_out = vec![0.0; width.max(height)];
    for x in 0..width {
        for y in 0..height {
            buf_in[y] = grid[y * width + x];
        }
        edt_1d(&buf_in[..height], &mut buf_out[..height]);
        for y in 0..height {
            grid[y * width + x] = buf_out[y];
        }
    }
    for y in 0..height {
        buf_in[..width].copy_from_slice(&grid[y * width..(y + 1) * width]);
        edt_1d(&buf_in[..width], &mut buf_out[..width]);
        grid[y * width..(y + 1) * width].copy_from_slice(&buf_out[..width]);
    }
    grid
}

fn edt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    // skip leading infinities so parabola intersections stay finite
    let first = match f.iter().position(|x| x.is_finite()) {
        Some(i) => i,
        None => {
            d.iter_mut().for_each(|x| *x = f64::INFINITY);
            return;
        }
    };
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s =
                ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}
