use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::RegionPixels;

const CELLS: usize = 4;
const CELL_SIZE: usize = 4;
const ORIENTATION_BINS: usize = 8;
/// 4x4 cells of 8 orientation bins.
pub const DESCRIPTOR_LEN: usize = CELLS * CELLS * ORIENTATION_BINS;
const MARGIN: usize = 2;
/// Descriptor entries are stored as multiples of `1 / QUANT_LEVELS`.
pub const QUANT_LEVELS: f64 = 255.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestPoint {
    /// Frame coordinates, pixels.
    pub position: [f64; 2],
    /// Unit-length gradient-orientation histogram quantized to 8 bits per
    /// entry, or all zeros for flat patches. Serialized as the byte values.
    #[serde(with = "quantized")]
    pub descriptor: Vec<f64>,
}

impl InterestPoint {
    pub fn is_flat(&self) -> bool {
        self.descriptor.iter().all(|v| *v == 0.0)
    }
}

/// Grid samples at `stride/2 + i*stride` on foreground pixels, each with a
/// gradient descriptor. Points too close to the border are skipped.
pub fn sample_interest_points(r: &RegionPixels, stride: usize) -> Vec<InterestPoint> {
    let stride = stride.max(1);
    let start = stride / 2;
    let origin = r.origin();
    let grads = Gradients::new(r);
    let mut out = Vec::new();
    for y in (start..r.height()).step_by(stride) {
        for x in (start..r.width()).step_by(stride) {
            if !r.is_foreground(x, y) {
                continue;
            }
            if let Some(descriptor) = descriptor_at(&grads, [x, y]) {
                out.push(InterestPoint {
                    position: [origin[0] + x as f64, origin[1] + y as f64],
                    descriptor,
                });
            }
        }
    }
    out
}

/// Gradient magnitude and orientation bin per pixel, from central
/// differences of the channel-mean intensity. Border pixels have none.
struct Gradients {
    width: usize,
    height: usize,
    values: Vec<(f64, usize)>,
}

impl Gradients {
    fn new(r: &RegionPixels) -> Self {
        let (w, h) = (r.width(), r.height());
        let mut gray = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let p = r.rgb(x, y);
                gray.push((p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0);
            }
        }
        let mut values = vec![(0.0, 0); w * h];
        for y in 1..h.saturating_sub(1) {
            for x in 1..w.saturating_sub(1) {
                let gx = (gray[y * w + x + 1] - gray[y * w + x - 1]) / 2.0;
                let gy = (gray[(y + 1) * w + x] - gray[(y - 1) * w + x]) / 2.0;
                let mag = gx.hypot(gy);
                if mag == 0.0 {
                    continue;
                }
                let theta = gy.atan2(gx).rem_euclid(TAU);
                let bin =
                    ((theta / TAU * ORIENTATION_BINS as f64) as usize).min(ORIENTATION_BINS - 1);
                values[y * w + x] = (mag, bin);
            }
        }
        Self {
            width: w,
            height: h,
            values,
        }
    }
}

/// Gradient-orientation histogram over a 16x16 patch centred at `p`
/// (region coordinates). Returns `None` when `p` lies within 2 px of the
/// region edge. Patch pixels whose central difference would leave the
/// region do not contribute.
pub fn compute_point_descriptor(r: &RegionPixels, p: [usize; 2]) -> Option<Vec<f64>> {
    descriptor_at(&Gradients::new(r), p)
}

fn descriptor_at(g: &Gradients, p: [usize; 2]) -> Option<Vec<f64>> {
    let (w, h) = (g.width, g.height);
    let [px, py] = p;
    if px < MARGIN || py < MARGIN || px + MARGIN > w || py + MARGIN > h {
        return None;
    }
    let half = (CELLS * CELL_SIZE / 2) as isize;
    let mut desc = vec![0.0; DESCRIPTOR_LEN];
    for dy in -half..half {
        for dx in -half..half {
            let x = px as isize + dx;
            let y = py as isize + dy;
            if x < 1 || y < 1 || x >= w as isize - 1 || y >= h as isize - 1 {
                continue;
            }
            let (mag, bin) = g.values[y as usize * w + x as usize];
            if mag == 0.0 {
                continue;
            }
            let cx = ((dx + half) as usize) / CELL_SIZE;
            let cy = ((dy + half) as usize) / CELL_SIZE;
            desc[(cy * CELLS + cx) * ORIENTATION_BINS + bin] += mag;
        }
    }
    let norm = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        desc.iter_mut()
            .for_each(|v| *v = dequantize(quantize(*v / norm)));
    }
    Some(desc)
}

fn quantize(v: f64) -> u8 {
    (v * QUANT_LEVELS).round().clamp(0.0, 255.0) as u8
}

fn dequantize(q: u8) -> f64 {
    q as f64 / QUANT_LEVELS
}

mod quantized {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| super::quantize(*x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<u8>::deserialize(d)?
            .into_iter()
            .map(super::dequantize)
            .collect())
    }
}
