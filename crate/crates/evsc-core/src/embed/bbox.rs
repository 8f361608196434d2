//! Bounding boxes in raw-pixel and grid-cell space, projection between the
//! two, union folds, and feature pooling over grid cells.

use crate::scene::{grid_span, Box2D, GridTensor};

use super::{EmbedError, EmbedResult};

/// Coordinate space a box lives in: raw video pixels or backbone grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxSpace {
    Raw,
    Grid,
}

/// Axis-aligned box. Grid-space boxes carry integer cell bounds stored as
/// floats; the half-open span `[x0, x1) x [y0, y1)` names the covered cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub space: BoxSpace,
}

impl BBox {
    pub fn raw(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        BBox {
            x0,
            y0,
            x1,
            y1,
            space: BoxSpace::Raw,
        }
    }

    pub fn grid(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        BBox {
            x0: x0 as f64,
            y0: y0 as f64,
            x1: x1 as f64,
            y1: y1 as f64,
            space: BoxSpace::Grid,
        }
    }

    pub fn from_raw_box(b: &Box2D) -> Self {
        BBox::raw(b.x0, b.y0, b.x1, b.y1)
    }

    pub fn width(&self) -> f64 {
        (self.x1 - self.x0).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y1 - self.y0).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// True when `other` lies inside `self` (shared edges allowed).
    pub fn contains(&self, other: &BBox) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && self.x1 >= other.x1 && self.y1 >= other.y1
    }

    /// Grid cell bounds as indices. Only meaningful for grid-space boxes.
    pub fn cells(&self) -> (usize, usize, usize, usize) {
        (
            self.x0 as usize,
            self.y0 as usize,
            self.x1 as usize,
            self.y1 as usize,
        )
    }
}

/// Projects a raw-pixel box onto the feature grid, covering every cell the
/// box touches: floor on the low edge, ceil on the high edge, widened to at
/// least one cell. The box must lie within the `raw_w x raw_h` frame.
pub fn project_bbox_to_grid(
    b: &BBox,
    raw_w: f64,
    raw_h: f64,
    grid_w: usize,
    grid_h: usize,
) -> EmbedResult<BBox> {
    if b.space != BoxSpace::Raw {
        return Err(EmbedError::WrongSpace {
            expected: BoxSpace::Raw,
        });
    }
    let inside = b.x0 >= 0.0
        && b.y0 >= 0.0
        && b.x1 <= raw_w
        && b.y1 <= raw_h
        && b.x0 <= b.x1
        && b.y0 <= b.y1;
    if !inside {
        return Err(EmbedError::OutOfFrame {
            x0: b.x0,
            y0: b.y0,
            x1: b.x1,
            y1: b.y1,
            w: raw_w,
            h: raw_h,
        });
    }
    let (cx0, cx1) = grid_span(b.x0, b.x1, raw_w as u32, grid_w as u32);
    let (cy0, cy1) = grid_span(b.y0, b.y1, raw_h as u32, grid_h as u32);
    Ok(BBox::grid(cx0, cy0, cx1, cy1))
}

/// Smallest box covering every input. All boxes must share a space.
pub fn union_box(boxes: &[BBox]) -> EmbedResult<BBox> {
    let first = boxes.first().ok_or(EmbedError::EmptyUnion)?;
    let mut out = *first;
    for b in &boxes[1..] {
        if b.space != first.space {
            return Err(EmbedError::WrongSpace {
                expected: first.space,
            });
        }
        out.x0 = out.x0.min(b.x0);
        out.y0 = out.y0.min(b.y0);
        out.x1 = out.x1.max(b.x1);
        out.y1 = out.y1.max(b.y1);
    }
    Ok(out)
}

/// Mean feature over the cells of a grid-space box at frame `t`; one value
/// per channel.
pub fn pool_in_box(grid: &GridTensor, t: usize, b: &BBox) -> EmbedResult<Vec<f64>> {
    if b.space != BoxSpace::Grid {
        return Err(EmbedError::WrongSpace {
            expected: BoxSpace::Grid,
        });
    }
    let (x0, y0, x1, y1) = b.cells();
    if x1 <= x0 || y1 <= y0 {
        return Err(EmbedError::EmptyPool);
    }
    if x1 > grid.grid_w || y1 > grid.grid_h {
        return Err(EmbedError::OutsideGrid {
            gw: grid.grid_w,
            gh: grid.grid_h,
        });
    }
    let mut sum = vec![0.0; grid.channels];
    for x in x0..x1 {
        for y in y0..y1 {
            for (s, v) in sum.iter_mut().zip(grid.cell(t, x, y)) {
                *s += v;
            }
        }
    }
    let count = ((x1 - x0) * (y1 - y0)) as f64;
    for s in &mut sum {
        *s /= count;
    }
    Ok(sum)
}

/// Per-channel mean over every frame and cell of one pathway's features.
pub fn video_mean_feature(grid: &GridTensor) -> Vec<f64> {
    let mut sum = vec![0.0; grid.channels];
    for t in 0..grid.frames {
        for x in 0..grid.grid_w {
            for y in 0..grid.grid_h {
                for (s, v) in sum.iter_mut().zip(grid.cell(t, x, y)) {
                    *s += v;
                }
            }
        }
    }
    let count = (grid.frames * grid.grid_w * grid.grid_h) as f64;
    for s in &mut sum {
        *s /= count;
    }
    sum
}
