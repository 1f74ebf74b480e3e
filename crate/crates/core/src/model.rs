//! Shared domain types: boxes, world points, detections, feature tags and weights.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Appearance;

/// Axis-aligned image box, top-left corner plus size, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox2D {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BBox2D {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0)
            || !x.is_finite()
            || !y.is_finite()
            || !w.is_finite()
            || !h.is_finite()
        {
            return Err(Error::InvalidBox { w, h });
        }
        Ok(Self { x, y, w, h })
    }

    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn aspect(&self) -> f64 {
        self.w / self.h
    }

    pub fn center(&self) -> [f64; 2] {
        bbox_center(self)
    }

    /// Linear interpolation between two boxes, `t` in [0, 1].
    pub fn lerp(&self, other: &BBox2D, t: f64) -> BBox2D {
        let mix = |a: f64, b: f64| a + (b - a) * t;
        BBox2D {
            x: mix(self.x, other.x),
            y: mix(self.y, other.y),
            w: mix(self.w, other.w),
            h: mix(self.h, other.h),
        }
    }
}

impl TryFrom<[f64; 4]> for BBox2D {
    type Error = Error;
    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox2D::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox2D> for [f64; 4] {
    fn from(b: BBox2D) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

pub fn bbox_center(b: &BBox2D) -> [f64; 2] {
    [b.x + b.w / 2.0, b.y + b.h / 2.0]
}

/// Intersection over union of two boxes.
pub fn bbox_iou(a: &BBox2D, b: &BBox2D) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Scene position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct WorldPoint3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint3 {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        if x.is_finite() && y.is_finite() && z.is_finite() {
            Ok(Self { x, y, z })
        } else {
            Err(Error::NonFiniteWorld)
        }
    }

    pub fn distance(&self, other: &WorldPoint3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }
}

impl TryFrom<[f64; 3]> for WorldPoint3 {
    type Error = Error;
    fn try_from(v: [f64; 3]) -> Result<Self> {
        WorldPoint3::new(v[0], v[1], v[2])
    }
}

impl From<WorldPoint3> for [f64; 3] {
    fn from(p: WorldPoint3) -> Self {
        [p.x, p.y, p.z]
    }
}

/// Identifies a detection by frame and position within the frame. Ordering is
/// lexicographic and drives every deterministic tie-break in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectKey {
    pub frame: u32,
    pub index: u32,
}

impl fmt::Display for ObjectKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.frame, self.index)
    }
}

#[derive(Debug, Clone)]
pub struct DetectedObject {
    pub key: ObjectKey,
    pub bbox: BBox2D,
    pub world: Option<WorldPoint3>,
    pub appearance: Appearance,
}

impl DetectedObject {
    pub fn new(frame: u32, index: u32, bbox: BBox2D) -> Self {
        Self {
            key: ObjectKey { frame, index },
            bbox,
            world: None,
            appearance: Appearance::default(),
        }
    }

    pub fn with_world(mut self, world: WorldPoint3) -> Self {
        self.world = Some(world);
        self
    }

    pub fn with_appearance(mut self, appearance: Appearance) -> Self {
        self.appearance = appearance;
        self
    }

    pub fn frame(&self) -> u32 {
        self.key.frame
    }
}

/// The eight link-similarity features, in their canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureId {
    Disp3D,
    Disp2D,
    ShapeRatio,
    Area2D,
    ColorHist,
    Hog,
    ColorCov,
    DomColor,
}

impl FeatureId {
    pub const COUNT: usize = 8;

    pub const ALL: [FeatureId; 8] = [
        FeatureId::Disp3D,
        FeatureId::Disp2D,
        FeatureId::ShapeRatio,
        FeatureId::Area2D,
        FeatureId::ColorHist,
        FeatureId::Hog,
        FeatureId::ColorCov,
        FeatureId::DomColor,
    ];

    /// Zero-based position (feature k lives at `k - 1`).
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureId::Disp3D => "disp3d",
            FeatureId::Disp2D => "disp2d",
            FeatureId::ShapeRatio => "shape_ratio",
            FeatureId::Area2D => "area2d",
            FeatureId::ColorHist => "color_hist",
            FeatureId::Hog => "hog",
            FeatureId::ColorCov => "color_cov",
            FeatureId::DomColor => "dom_color",
        }
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FeatureId::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidWeights(format!("unknown feature `{s}`")))
    }
}

/// Non-negative per-feature weights with at least one positive entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureWeights([f64; 8]);

impl FeatureWeights {
    pub fn new(w: [f64; 8]) -> Result<Self> {
        if let Some(k) = w.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidWeights(format!(
                "{} = {} must be a finite non-negative number",
                FeatureId::ALL[k],
                w[k]
            )));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidWeights(
                "at least one weight must be positive".into(),
            ));
        }
        Ok(Self(w))
    }

    pub fn uniform() -> Self {
        Self([1.0 / 8.0; 8])
    }

    /// Weight 1 on `k`, 0 elsewhere.
    pub fn single(k: FeatureId) -> Self {
        let mut w = [0.0; 8];
        w[k.index()] = 1.0;
        Self(w)
    }

    pub fn from_pairs(pairs: &[(FeatureId, f64)]) -> Result<Self> {
        let mut w = [0.0; 8];
        for &(k, v) in pairs {
            w[k.index()] = v;
        }
        Self::new(w)
    }

    pub fn get(&self, k: FeatureId) -> f64 {
        self.0[k.index()]
    }

    pub fn as_array(&self) -> &[f64; 8] {
        &self.0
    }

    /// Features with a strictly positive weight, in canonical order.
    pub fn active(&self) -> impl Iterator<Item = FeatureId> + '_ {
        FeatureId::ALL.into_iter().filter(|k| self.get(*k) > 0.0)
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}
