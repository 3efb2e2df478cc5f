//! Shared domain types crossing module boundaries: detections, poses,
//! pseudo-labels and their provenance tags.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, BevBox};

/// One frame-wise detector output. `cx`/`cy`/`yaw` live in the ego frame of
/// the frame that produced it; `cz` and `h` are carried through untouched by
/// the BEV pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub yaw: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

impl Detection {
    pub fn bev_box(&self) -> BevBox {
        BevBox::new(self.cx, self.cy, self.yaw, self.l, self.w)
            .expect("detection with non-positive extent")
    }

    /// BEV range of the box center from the ego reference point.
    pub fn range(&self) -> f64 {
        self.cx.hypot(self.cy)
    }
}

/// SE(2) pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Pose2 {
            x,
            y,
            yaw: wrap_angle(yaw),
        }
    }

    /// Express a world-frame point in this pose's local frame.
    pub fn world_to_local(&self, wx: f64, wy: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        let dx = wx - self.x;
        let dy = wy - self.y;
        (c * dx + s * dy, -s * dx + c * dy)
    }
}

/// Where a per-frame box came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    /// A raw detector output (or a track frame carrying one).
    Detected,
    /// A live track frame with no matched detection.
    Missed,
    /// A measurement-updated track frame after offline smoothing.
    Smoothed,
    /// An interior missed frame filled from the smoothed trajectory.
    Interpolated,
    /// A frame recovered beyond the track's observed span.
    Extrapolated,
}

/// One exported label: a BEV box with passthrough height fields, the track
/// that produced it, and its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub frame_index: usize,
    /// Producing track id; -1 when there is none (raw detections, ground truth).
    pub track_id: i64,
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub yaw: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
    pub source: SourceTag,
}

impl PseudoLabel {
    pub fn bev_box(&self) -> BevBox {
        BevBox::new(self.cx, self.cy, self.yaw, self.l, self.w)
            .expect("label with non-positive extent")
    }

    pub fn range(&self) -> f64 {
        self.cx.hypot(self.cy)
    }

    pub fn from_detection(frame_index: usize, det: &Detection) -> Self {
        PseudoLabel {
            frame_index,
            track_id: -1,
            cx: det.cx,
            cy: det.cy,
            cz: det.cz,
            yaw: wrap_angle(det.yaw),
            l: det.l,
            w: det.w,
            h: det.h,
            score: det.score,
            source: SourceTag::Detected,
        }
    }
}
