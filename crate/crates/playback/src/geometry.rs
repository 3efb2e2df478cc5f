//! Oriented bird's-eye-view rectangles, rotated IoU via convex polygon
//! clipping, and priority-ordered BEV non-maximum suppression.
//!
//! Everything here is a pure function over value inputs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Intersections with absolute area below this count as empty.
const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("box extent must be positive (length={length}, width={width})")]
    NonPositiveExtent { length: f64, width: f64 },
}

/// Wrap an angle into (−π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    if theta.is_nan() {
        return theta;
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut t = theta % two_pi;
    if t <= -std::f64::consts::PI {
        t += two_pi;
    } else if t > std::f64::consts::PI {
        t -= two_pi;
    }
    t
}

/// An oriented rectangle in the ground plane. Which frame `cx`/`cy` live in
/// (world or ego) is the caller's contract; all operations are frame-agnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevBox {
    cx: f64,
    cy: f64,
    yaw: f64,
    length: f64,
    width: f64,
}

impl BevBox {
    /// Yaw is wrapped into (−π, π] here; extents must be positive.
    pub fn new(cx: f64, cy: f64, yaw: f64, length: f64, width: f64) -> Result<Self, GeometryError> {
        if !(length > 0.0) || !(width > 0.0) {
            return Err(GeometryError::NonPositiveExtent { length, width });
        }
        Ok(BevBox {
            cx,
            cy,
            yaw: wrap_angle(yaw),
            length,
            width,
        })
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    /// The four vertices in counter-clockwise order, starting at the
    /// front-left corner (+length/2, +width/2 in the box frame).
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = 0.5 * self.length;
        let hw = 0.5 * self.width;
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[x, y]| [self.cx + c * x - s * y, self.cy + s * x + c * y])
    }

    /// True if the point lies inside or on the boundary.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let dx = px - self.cx;
        let dy = py - self.cy;
        let lx = c * dx + s * dy;
        let ly = -s * dx + c * dy;
        lx.abs() <= 0.5 * self.length && ly.abs() <= 0.5 * self.width
    }
}

/// Signed polygon area via the shoelace formula; positive for CCW order.
fn shoelace(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..poly.len() {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % poly.len()];
        twice += x0 * y1 - x1 * y0;
    }
    0.5 * twice
}

/// Sutherland–Hodgman: clip a convex subject polygon against the half-plane
/// on the left of the directed edge (a, b).
fn clip_edge(subject: &[[f64; 2]], a: [f64; 2], b: [f64; 2]) -> Vec<[f64; 2]> {
    let inside = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0;
    let mut out = Vec::with_capacity(subject.len() + 1);
    for i in 0..subject.len() {
        let cur = subject[i];
        let prev = subject[(i + subject.len() - 1) % subject.len()];
        let cur_in = inside(cur);
        let prev_in = inside(prev);
        if cur_in != prev_in {
            // Edge crossing: intersect (prev, cur) with the clip line.
            let dx = cur[0] - prev[0];
            let dy = cur[1] - prev[1];
            let denom = (b[0] - a[0]) * dy - (b[1] - a[1]) * dx;
            if denom.abs() > 0.0 {
                let t = ((b[0] - a[0]) * (a[1] - prev[1]) - (b[1] - a[1]) * (a[0] - prev[0]))
                    / denom;
                out.push([prev[0] + t * dx, prev[1] + t * dy]);
            }
        }
        if cur_in {
            out.push(cur);
        }
    }
    out
}

/// Intersection area of two oriented rectangles.
pub fn intersection_area(a: &BevBox, b: &BevBox) -> f64 {
    let mut poly: Vec<[f64; 2]> = a.corners().to_vec();
    let clip = b.corners();
    for i in 0..4 {
        if poly.len() < 3 {
            return 0.0;
        }
        poly = clip_edge(&poly, clip[i], clip[(i + 1) % 4]);
    }
    let area = shoelace(&poly);
    if poly.len() < 3 || area.abs() < DEGENERATE_AREA {
        0.0
    } else {
        area
    }
}

/// Intersection over union of two oriented rectangles, in [0, 1].
pub fn bev_iou(a: &BevBox, b: &BevBox) -> f64 {
    let inter = intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy non-maximum suppression over oriented boxes.
///
/// Candidates are visited in descending `priority`, ties broken by descending
/// score, then ascending input index. A candidate is dropped when its IoU with
/// any already-kept box strictly exceeds `iou_threshold`. Returns the kept
/// input indices in ascending order.
pub fn bev_nms<K: Ord>(candidates: &[(BevBox, K, f64)], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| {
        let (_, ref pi, si) = candidates[i];
        let (_, ref pj, sj) = candidates[j];
        pj.cmp(pi)
            .then(sj.partial_cmp(&si).unwrap_or(std::cmp::Ordering::Equal))
            .then(i.cmp(&j))
    });
    let mut kept: Vec<usize> = Vec::new();
    for idx in order {
        let suppressed = kept
            .iter()
            .any(|&k| bev_iou(&candidates[idx].0, &candidates[k].0) > iou_threshold);
        if !suppressed {
            kept.push(idx);
        }
    }
    kept.sort_unstable();
    kept
}
