//! Seeded synthetic scenes: textured rectangles moving over a noise
//! background, with detections, ground truth and optional rendered frames.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::features::{extract_appearance, RegionPixels};
use crate::io::{
    crop_region, write_detections, write_ground_truth, write_pgm, write_ppm, DetectionRecord,
    GrayImage, GroundTruthRecord, RgbImage,
};
use crate::model::{BBox2D, WorldPoint3};

/// Frames in which object `b` is drawn overlapping object `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionWindow {
    pub a: usize,
    pub b: usize,
    pub start: u32,
    pub end: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n_objects: usize,
    pub n_frames: u32,
    pub width: usize,
    pub height: usize,
    pub object_width: f64,
    pub object_height: f64,
    /// Speed range, pixels per frame.
    pub min_speed: f64,
    pub max_speed: f64,
    /// Standard deviation of per-frame position jitter, pixels.
    pub sigma_motion: f64,
    /// Standard deviation of detector box noise, pixels.
    pub sigma_detection: f64,
    /// Probability that a detection is dropped.
    pub miss_rate: f64,
    /// Probability per frame of one spurious detection.
    pub clutter_rate: f64,
    pub occlusions: Vec<OcclusionWindow>,
    /// Ground-plane scale used for world coordinates.
    pub meters_per_pixel: f64,
    /// Extract appearance from the rendered pixels.
    pub appearance: bool,
    /// Write frame images and reference them instead of embedding features.
    pub write_frames: bool,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_objects: 5,
            n_frames: 200,
            width: 640,
            height: 480,
            object_width: 24.0,
            object_height: 48.0,
            min_speed: 1.0,
            max_speed: 3.0,
            sigma_motion: 0.5,
            sigma_detection: 1.0,
            miss_rate: 0.0,
            clutter_rate: 0.0,
            occlusions: Vec::new(),
            meters_per_pixel: 0.02,
            appearance: true,
            write_frames: false,
            seed: 1,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, p) in [
            ("miss_rate", self.miss_rate),
            ("clutter_rate", self.clutter_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                problems.push(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.width < 16 || self.height < 16 {
            problems.push("frame must be at least 16x16".into());
        }
        if self.object_width < 4.0 || self.object_height < 4.0 {
            problems.push("objects must be at least 4 px on each side".into());
        }
        if self.object_width >= self.width as f64 / 2.0 {
            problems.push("objects must be narrower than half the frame".into());
        }
        if self.n_objects > 0 && self.object_height > self.height as f64 / self.n_objects as f64 {
            problems.push("object lanes overlap; lower n_objects or object_height".into());
        }
        if !(0.0 <= self.min_speed && self.min_speed <= self.max_speed) {
            problems.push("need 0 <= min_speed <= max_speed".into());
        }
        for (name, v) in [
            ("sigma_motion", self.sigma_motion),
            ("sigma_detection", self.sigma_detection),
            ("meters_per_pixel", self.meters_per_pixel),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                problems.push(format!("{name} must be finite and non-negative"));
            }
        }
        for o in &self.occlusions {
            if o.a >= self.n_objects || o.b >= self.n_objects || o.a == o.b || o.start > o.end {
                problems.push(format!("bad occlusion window {o:?}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(problems.join("; ")))
        }
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

/// Generated scene. `frames` holds rendered images only when requested.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub detections: Vec<DetectionRecord>,
    pub ground_truth: Vec<GroundTruthRecord>,
    pub frames: Vec<(RgbImage, GrayImage)>,
}

#[derive(Debug, Clone)]
struct Actor {
    x: f64,
    lane_y: f64,
    vx: f64,
    w: f64,
    h: f64,
    top: [u8; 3],
    bottom: [u8; 3],
    stripe: u32,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn pixel_noise(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    splitmix(seed ^ splitmix(a ^ splitmix(b ^ splitmix(c))))
}

fn hsv(h: f64, s: f64, v: f64) -> [u8; 3] {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - f * s), v * (1.0 - (1.0 - f) * s));
    let (r, g, b) = match i as i64 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8]
}

struct Renderer<'a> {
    spec: &'a ScenarioSpec,
    frame: u32,
    boxes: &'a [(usize, BBox2D)],
    actors: &'a [Actor],
}

impl Renderer<'_> {
    fn background(&self, x: usize, y: usize) -> [u8; 3] {
        let n = pixel_noise(self.spec.seed, 0, x as u64, y as u64);
        let g = 60 + (n % 60) as u8;
        [g, g, g.saturating_add((n >> 8) as u8 % 20)]
    }

    /// Colour and foreground flag at a pixel; later objects draw on top.
    fn pixel(&self, x: usize, y: usize) -> ([u8; 3], bool) {
        let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
        for &(i, b) in self.boxes.iter().rev() {
            if fx >= b.x() && fx < b.x() + b.w() && fy >= b.y() && fy < b.y() + b.h() {
                let a = &self.actors[i];
                let ly = fy - b.y();
                let base = if ly < b.h() / 2.0 {
                    if ((ly as u32) / a.stripe).is_multiple_of(2) {
                        a.top
                    } else {
                        a.top.map(|c| c / 2)
                    }
                } else {
                    a.bottom
                };
                let n = pixel_noise(self.spec.seed, 1 + self.frame as u64, x as u64, y as u64);
                let jitter = (n % 17) as i32 - 8;
                return (base.map(|c| (c as i32 + jitter).clamp(0, 255) as u8), true);
            }
        }
        (self.background(x, y), false)
    }

    fn render(&self) -> (RgbImage, GrayImage) {
        let (w, h) = (self.spec.width, self.spec.height);
        let mut rgb = Vec::with_capacity(w * h);
        let mut mask = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let (c, fg) = self.pixel(x, y);
                rgb.push(c);
                mask.push(if fg { 255 } else { 0 });
            }
        }
        (
            RgbImage {
                width: w,
                height: h,
                pixels: rgb,
            },
            GrayImage {
                width: w,
                height: h,
                pixels: mask,
            },
        )
    }

    /// Renders only the pixels under `bbox`.
    fn region(&self, bbox: &BBox2D) -> Result<RegionPixels> {
        let x0 = bbox.x().floor().max(0.0) as usize;
        let y0 = bbox.y().floor().max(0.0) as usize;
        let x1 = ((bbox.x() + bbox.w()).ceil() as usize).min(self.spec.width);
        let y1 = ((bbox.y() + bbox.h()).ceil() as usize).min(self.spec.height);
        if x1 <= x0 || y1 <= y0 {
            return Err(Error::InvalidRegion("box lies outside the frame".into()));
        }
        let mut rgb = Vec::with_capacity((x1 - x0) * (y1 - y0));
        let mut fg = Vec::with_capacity(rgb.capacity());
        for y in y0..y1 {
            for x in x0..x1 {
                let (c, f) = self.pixel(x, y);
                rgb.push(c);
                fg.push(f);
            }
        }
        Ok(RegionPixels::new(x1 - x0, y1 - y0, rgb, fg)?.with_origin(x0 as f64, y0 as f64))
    }
}

fn clip_box(b: BBox2D, w: usize, h: usize) -> Option<BBox2D> {
    let x0 = b.x().max(0.0);
    let y0 = b.y().max(0.0);
    let x1 = (b.x() + b.w()).min(w as f64);
    let y1 = (b.y() + b.h()).min(h as f64);
    (x1 - x0 >= 2.0 && y1 - y0 >= 2.0)
        .then(|| BBox2D::new(x0, y0, x1 - x0, y1 - y0).expect("positive size"))
}

fn world_of(b: &BBox2D, mpp: f64) -> WorldPoint3 {
    let c = b.center();
    WorldPoint3::new(c[0] * mpp, (b.y() + b.h()) * mpp, 0.0).expect("finite")
}

/// Generates a scene. Appearance is extracted with `cfg`'s feature settings.
pub fn synth_generate(spec: &ScenarioSpec, cfg: &TrackerConfig) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lane = spec.height as f64 / spec.n_objects.max(1) as f64;
    let mut actors: Vec<Actor> = (0..spec.n_objects)
        .map(|i| {
            let w = spec.object_width * rng.random_range(0.9..1.1);
            let h = spec.object_height * rng.random_range(0.9..1.1);
            let speed = rng.random_range(spec.min_speed..=spec.max_speed);
            let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let hue = (i as f64 + rng.random_range(0.0..0.3)) / spec.n_objects as f64;
            Actor {
                x: rng.random_range(0.0..spec.width as f64 - w),
                lane_y: i as f64 * lane + (lane - h) / 2.0,
                vx: speed * dir,
                w,
                h,
                top: hsv(hue, 0.8, 0.95),
                bottom: hsv((hue + 0.5) % 1.0, 0.6, 0.6),
                stripe: rng.random_range(2..6),
            }
        })
        .collect();
    let motion = Normal::new(0.0, spec.sigma_motion.max(1e-12)).expect("valid sigma");
    let det_noise = Normal::new(0.0, spec.sigma_detection.max(1e-12)).expect("valid sigma");

    let mut out = Scenario {
        detections: Vec::new(),
        ground_truth: Vec::new(),
        frames: Vec::new(),
    };
    for f in 0..spec.n_frames {
        // true boxes this frame, in draw order
        let mut boxes: Vec<(usize, BBox2D)> = Vec::new();
        for (i, a) in actors.iter().enumerate() {
            let jy = if spec.sigma_motion > 0.0 {
                motion.sample(&mut rng)
            } else {
                0.0
            };
            let mut x = a.x;
            let mut y = a.lane_y + jy;
            if let Some(o) = spec
                .occlusions
                .iter()
                .find(|o| o.b == i && (o.start..=o.end).contains(&f))
            {
                let other = &actors[o.a];
                x = other.x + other.w / 3.0;
                y = other.lane_y + other.h / 6.0;
            }
            if let Some(b) = clip_box(BBox2D::new(x, y, a.w, a.h)?, spec.width, spec.height) {
                boxes.push((i, b));
            }
        }
        let renderer = Renderer {
            spec,
            frame: f,
            boxes: &boxes,
            actors: &actors,
        };
        let mut frame_dets = Vec::new();
        for &(i, b) in &boxes {
            out.ground_truth.push(GroundTruthRecord {
                gt_id: i as u64 + 1,
                frame: f,
                bbox: b,
                world: Some(world_of(&b, spec.meters_per_pixel)),
            });
            let noisy = |rng: &mut ChaCha8Rng| {
                if spec.sigma_detection > 0.0 {
                    det_noise.sample(rng)
                } else {
                    0.0
                }
            };
            let (dx, dy) = (noisy(&mut rng), noisy(&mut rng));
            let missed = rng.random_bool(spec.miss_rate);
            if missed {
                continue;
            }
            if let Some(d) = clip_box(
                BBox2D::new(b.x() + dx, b.y() + dy, b.w(), b.h())?,
                spec.width,
                spec.height,
            ) {
                frame_dets.push(d);
            }
        }
        if rng.random_bool(spec.clutter_rate) {
            let w = spec.object_width * rng.random_range(0.5..1.5);
            let h = spec.object_height * rng.random_range(0.5..1.5);
            let x = rng.random_range(0.0..(spec.width as f64 - w).max(1.0));
            let y = rng.random_range(0.0..(spec.height as f64 - h).max(1.0));
            if let Some(d) = clip_box(BBox2D::new(x, y, w, h)?, spec.width, spec.height) {
                frame_dets.push(d);
            }
        }

        let rendered = spec.write_frames.then(|| renderer.render());
        for d in frame_dets {
            let mut rec = DetectionRecord {
                frame: f,
                bbox: d,
                world: Some(world_of(&d, spec.meters_per_pixel)),
                features: None,
                frame_image: None,
                mask_image: None,
            };
            if spec.appearance {
                if let Some((img, mask)) = &rendered {
                    // check the crop now so that bad boxes fail at generation time
                    crop_region(img, Some(mask), &d)?;
                    rec.frame_image = Some(frame_name(f, "ppm"));
                    rec.mask_image = Some(frame_name(f, "pgm"));
                } else {
                    rec.features = Some(extract_appearance(&renderer.region(&d)?, cfg));
                }
            }
            out.detections.push(rec);
        }
        if let Some(r) = rendered {
            out.frames.push(r);
        }

        for a in actors.iter_mut() {
            a.x += a.vx;
            if a.x < 0.0 || a.x + a.w > spec.width as f64 {
                a.vx = -a.vx;
                a.x = a.x.clamp(0.0, spec.width as f64 - a.w);
            }
        }
    }
    Ok(out)
}

fn frame_name(f: u32, ext: &str) -> String {
    let dir = if ext == "ppm" { "frames" } else { "masks" };
    format!("{dir}/{f:06}.{ext}")
}

/// Writes `detections.jsonl`, `ground_truth.jsonl` and any rendered frames.
pub fn write_scenario(s: &Scenario, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_detections(&s.detections, dir.join("detections.jsonl"))?;
    write_ground_truth(&s.ground_truth, dir.join("ground_truth.jsonl"))?;
    if !s.frames.is_empty() {
        for sub in ["frames", "masks"] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        for (f, (img, mask)) in s.frames.iter().enumerate() {
            write_ppm(img, dir.join(frame_name(f as u32, "ppm")))?;
            write_pgm(mask, dir.join(frame_name(f as u32, "pgm")))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{load_objects, parse_detections};

    fn quick(n_objects: usize, n_frames: u32, miss_rate: f64) -> ScenarioSpec {
        ScenarioSpec {
            n_objects,
            n_frames,
            miss_rate,
            appearance: false,
            ..Default::default()
        }
    }

    #[test]
    fn counts_without_misses() {
        let s = synth_generate(&quick(1, 50, 0.0), &TrackerConfig::default()).unwrap();
        assert_eq!(s.detections.len(), 50);
        assert_eq!(s.ground_truth.len(), 50);
        assert!(s.ground_truth.iter().all(|g| g.gt_id == 1));
    }

    #[test]
    fn same_seed_same_output() {
        let spec = ScenarioSpec {
            n_frames: 5,
            ..Default::default()
        };
        let c = TrackerConfig::default();
        assert_eq!(
            synth_generate(&spec, &c).unwrap(),
            synth_generate(&spec, &c).unwrap()
        );
        let other = ScenarioSpec { seed: 2, ..spec };
        assert_ne!(
            synth_generate(&other, &c).unwrap(),
            synth_generate(
                &ScenarioSpec {
                    seed: 1,
                    ..other.clone()
                },
                &c
            )
            .unwrap()
        );
    }

    #[test]
    fn miss_rate_binomial() {
        let s = synth_generate(&quick(5, 500, 0.1), &TrackerConfig::default()).unwrap();
        let n = 2500.0;
        let (mean, sd) = (n * 0.9, (n * 0.9 * 0.1f64).sqrt());
        assert!(
            (s.detections.len() as f64 - mean).abs() <= 3.0 * sd,
            "{}",
            s.detections.len()
        );
        assert_eq!(s.ground_truth.len(), 2500);
    }

    #[test]
    fn rendered_frames_match_embedded_features() {
        let c = TrackerConfig::default();
        let spec = ScenarioSpec {
            n_objects: 2,
            n_frames: 3,
            width: 160,
            height: 120,
            sigma_detection: 0.0,
            ..Default::default()
        };
        let embedded = synth_generate(&spec, &c).unwrap();
        let rendered = synth_generate(
            &ScenarioSpec {
                write_frames: true,
                ..spec
            },
            &c,
        )
        .unwrap();
        assert_eq!(rendered.frames.len(), 3);
        let dir = tempfile::tempdir().unwrap();
        write_scenario(&rendered, dir.path()).unwrap();
        let recs = parse_detections(dir.path().join("detections.jsonl")).unwrap();
        let objs = load_objects(&recs, dir.path(), &c).unwrap();
        for (o, e) in objs.iter().zip(&embedded.detections) {
            assert_eq!(Some(&o.appearance), e.features.as_ref());
        }
    }

    #[test]
    fn occlusion_overlaps_boxes() {
        let spec = ScenarioSpec {
            n_objects: 2,
            n_frames: 10,
            occlusions: vec![OcclusionWindow {
                a: 0,
                b: 1,
                start: 3,
                end: 5,
            }],
            ..quick(2, 10, 0.0)
        };
        let s = synth_generate(&spec, &TrackerConfig::default()).unwrap();
        let at = |id: u64, f: u32| {
            s.ground_truth
                .iter()
                .find(|g| g.gt_id == id && g.frame == f)
                .unwrap()
                .bbox
        };
        assert!(crate::model::bbox_iou(&at(1, 4), &at(2, 4)) > 0.2);
        assert_eq!(crate::model::bbox_iou(&at(1, 8), &at(2, 8)), 0.0);
    }

    #[test]
    fn invalid_specs_rejected() {
        let c = TrackerConfig::default();
        assert!(synth_generate(
            &ScenarioSpec {
                miss_rate: 1.5,
                ..Default::default()
            },
            &c
        )
        .is_err());
        assert!(ScenarioSpec::from_toml_str("n_objects = 2\nbogus = 1").is_err());
        assert_eq!(
            ScenarioSpec::from_toml_str("n_objects = 2")
                .unwrap()
                .n_objects,
            2
        );
    }
}
