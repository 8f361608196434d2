//! Grid-feature rendering: turns object scripts into the two-pathway
//! feature tensors a video backbone would produce.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::geom::grid_span;
use super::{ClipRecord, SceneError, SceneResult};

/// One pathway's features, shape `[frames, grid_w, grid_h, channels]`,
/// row-major in that index order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTensor {
    pub frames: usize,
    pub grid_w: usize,
    pub grid_h: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl GridTensor {
    pub fn zeros(frames: usize, grid_w: usize, grid_h: usize, channels: usize) -> Self {
        GridTensor {
            frames,
            grid_w,
            grid_h,
            channels,
            data: vec![0.0; frames * grid_w * grid_h * channels],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    fn offset(&self, t: usize, x: usize, y: usize) -> usize {
        ((t * self.grid_w + x) * self.grid_h + y) * self.channels
    }

    /// Channel vector of one grid cell.
    pub fn cell(&self, t: usize, x: usize, y: usize) -> &[f64] {
        let o = self.offset(t, x, y);
        &self.data[o..o + self.channels]
    }

    pub fn cell_mut(&mut self, t: usize, x: usize, y: usize) -> &mut [f64] {
        let o = self.offset(t, x, y);
        &mut self.data[o..o + self.channels]
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.frames, self.grid_w, self.grid_h, self.channels]
    }
}

/// Both pathways of one rendered clip.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFeaturePack {
    pub slow: GridTensor,
    pub fast: GridTensor,
}

/// Renders a clip's grid features. Pure in the record: the noise stream is
/// keyed by the record's `feature_seed`.
///
/// Every fast frame is rendered over `max(d1, d2)` channels; the fast
/// tensor keeps the leading `d2` channels of every frame, the slow tensor
/// keeps the leading `d1` channels of every `stride`-th frame. A cell
/// covered by several objects accumulates their signatures.
pub fn render_grid_features(clip: &ClipRecord) -> SceneResult<GridFeaturePack> {
    let (gw, gh) = (clip.grid_w as usize, clip.grid_h as usize);
    let dmax = clip.d1.max(clip.d2) as usize;
    let frames = clip.f2 as usize;
    let (raw_w, raw_h) = (clip.raw_w as f64, clip.raw_h as f64);

    let mut field = GridTensor::zeros(frames, gw, gh, dmax);
    for t in 0..frames {
        for obj in &clip.objects {
            let bbox = match obj.box_at(t, raw_w, raw_h) {
                Some(b) => b,
                None => continue,
            };
            if obj.signature.len() != dmax {
                return Err(SceneError::BadClip {
                    clip_id: clip.clip_id.clone(),
                    what: "signature length != max(d1, d2)".to_string(),
                });
            }
            let tau = obj.texture.signal(t);
            let (x0, x1) = grid_span(bbox.x0, bbox.x1, clip.raw_w, clip.grid_w);
            let (y0, y1) = grid_span(bbox.y0, bbox.y1, clip.raw_h, clip.grid_h);
            for x in x0..x1 {
                for y in y0..y1 {
                    let cell = field.cell_mut(t, x, y);
                    for (c, &sig) in obj.signature.iter().enumerate() {
                        if sig != 0.0 {
                            cell[c] += tau * sig;
                        }
                    }
                }
            }
        }
        for blob in &clip.decor {
            if blob.channel >= dmax {
                return Err(SceneError::BadClip {
                    clip_id: clip.clip_id.clone(),
                    what: format!("decor channel {} out of range", blob.channel),
                });
            }
            let bbox = blob.bbox(raw_w, raw_h);
            let (x0, x1) = grid_span(bbox.x0, bbox.x1, clip.raw_w, clip.grid_w);
            let (y0, y1) = grid_span(bbox.y0, bbox.y1, clip.raw_h, clip.grid_h);
            for x in x0..x1 {
                for y in y0..y1 {
                    field.cell_mut(t, x, y)[blob.channel] += 1.0;
                }
            }
        }
    }

    if clip.sigma_bg > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(clip.feature_seed);
        let noise = Normal::new(0.0, clip.sigma_bg).map_err(|e| SceneError::BadClip {
            clip_id: clip.clip_id.clone(),
            what: format!("bad noise level: {e}"),
        })?;
        for v in field.data.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }

    let stride = clip.stride();
    let (d1, d2) = (clip.d1 as usize, clip.d2 as usize);
    let mut slow = GridTensor::zeros(clip.f1 as usize, gw, gh, d1);
    for k in 0..clip.f1 as usize {
        for x in 0..gw {
            for y in 0..gh {
                slow.cell_mut(k, x, y)
                    .copy_from_slice(&field.cell(k * stride, x, y)[..d1]);
            }
        }
    }
    let mut fast = GridTensor::zeros(frames, gw, gh, d2);
    for t in 0..frames {
        for x in 0..gw {
            for y in 0..gh {
                fast.cell_mut(t, x, y).copy_from_slice(&field.cell(t, x, y)[..d2]);
            }
        }
    }
    Ok(GridFeaturePack { slow, fast })
}
