//! Axis-aligned box arithmetic shared by rendering, pooling, and the verb
//! predicates.

use serde::{Deserialize, Serialize};

/// Axis-aligned box in raw pixel units, `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Box2D {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Box2D { x0, y0, x1, y1 }
    }

    pub fn centered(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Box2D {
            x0: cx - w / 2.0,
            y0: cy - h / 2.0,
            x1: cx + w / 2.0,
            y1: cy + h / 2.0,
        }
    }

    /// Clips to the `[0, w] x [0, h]` frame.
    pub fn clip(self, w: f64, h: f64) -> Self {
        Box2D {
            x0: self.x0.max(0.0).min(w),
            y0: self.y0.max(0.0).min(h),
            x1: self.x1.max(0.0).min(w),
            y1: self.y1.max(0.0).min(h),
        }
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn width(&self) -> f64 {
        (self.x1 - self.x0).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y1 - self.y0).max(0.0)
    }

    /// True when the interiors intersect with positive area.
    pub fn overlaps(&self, other: &Box2D) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains_box(&self, other: &Box2D) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && self.x1 >= other.x1 && self.y1 >= other.y1
    }

    /// Smallest box covering both.
    pub fn union(&self, other: &Box2D) -> Box2D {
        Box2D {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    /// Euclidean distance between centers.
    pub fn center_distance(&self, other: &Box2D) -> f64 {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    }
}

/// Projects a raw-pixel interval `[lo, hi)` onto the grid axis: floor/ceil
/// to whole cells, widened to cover at least one cell, clamped in range.
/// Returns the half-open cell range `[c0, c1)`.
pub fn grid_span(lo: f64, hi: f64, raw: u32, grid: u32) -> (usize, usize) {
    let scale = grid as f64 / raw as f64;
    let mut c0 = (lo * scale).floor() as i64;
    let mut c1 = (hi * scale).ceil() as i64;
    c0 = c0.clamp(0, grid as i64 - 1);
    if c1 <= c0 {
        c1 = c0 + 1;
    }
    c1 = c1.clamp(c0 + 1, grid as i64);
    (c0 as usize, c1 as usize)
}
