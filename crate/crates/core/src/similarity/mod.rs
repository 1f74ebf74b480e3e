//! The eight per-feature link similarities and their weighted combination.

mod forstner;
mod pyramid;

pub use forstner::{forstner_distance, generalized_eigenvalues};
pub use pyramid::{dcd_distance, pyramid_distance};

use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::features::{ColorHistogram, COVARIANCE_EPSILON};
use crate::model::{DetectedObject, FeatureId, FeatureWeights};

/// Per-feature similarity of one object pair. Unavailable features carry no
/// value and are left out of every combination.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimilarityVector {
    values: [f64; 8],
    available: [bool; 8],
}

impl SimilarityVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_options(values: [Option<f64>; 8]) -> Self {
        let mut s = Self::default();
        for (k, v) in FeatureId::ALL.into_iter().zip(values) {
            s.set(k, v);
        }
        s
    }

    pub fn set(&mut self, k: FeatureId, v: Option<f64>) {
        let i = k.index();
        match v {
            Some(v) => {
                self.values[i] = v;
                self.available[i] = true;
            }
            None => {
                self.values[i] = 0.0;
                self.available[i] = false;
            }
        }
    }

    pub fn get(&self, k: FeatureId) -> Option<f64> {
        let i = k.index();
        self.available[i].then_some(self.values[i])
    }

    pub fn is_available(&self, k: FeatureId) -> bool {
        self.available[k.index()]
    }

    /// Weighted mean over available features with positive weight.
    pub fn combine(&self, weights: &FeatureWeights) -> Option<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for k in weights.active() {
            if let Some(v) = self.get(k) {
                let w = weights.get(k);
                num += w * v;
                den += w;
            }
        }
        (den > 0.0).then(|| num / den)
    }
}

/// Supplies the interest-point similarity, which depends on tracked point
/// trajectories rather than on the two detections alone.
pub trait HogSimilarity {
    fn ls6(&self, a: &DetectedObject, b: &DetectedObject) -> Option<f64>;
}

/// No point trajectories: the HOG feature is never available.
pub struct NoPointTracks;

impl HogSimilarity for NoPointTracks {
    fn ls6(&self, _: &DetectedObject, _: &DetectedObject) -> Option<f64> {
        None
    }
}

fn frame_gap(a: &DetectedObject, b: &DetectedObject) -> Option<f64> {
    let n = a.frame().abs_diff(b.frame());
    (n >= 1).then_some(n as f64)
}

fn displacement_similarity(d: f64, d_max: f64, n: f64) -> f64 {
    (1.0 - d / (d_max * n)).max(0.0)
}

/// 3D displacement similarity; needs world points on both sides and distinct frames.
pub fn ls1_disp3d(a: &DetectedObject, b: &DetectedObject, cfg: &TrackerConfig) -> Option<f64> {
    let (pa, pb) = (a.world.as_ref()?, b.world.as_ref()?);
    let n = frame_gap(a, b)?;
    Some(displacement_similarity(pa.distance(pb), cfg.d_max_3d, n))
}

/// 2D analog of [`ls1_disp3d`] on box centers.
pub fn ls2_disp2d(a: &DetectedObject, b: &DetectedObject, cfg: &TrackerConfig) -> Option<f64> {
    let n = frame_gap(a, b)?;
    let (ca, cb) = (a.bbox.center(), b.bbox.center());
    let d = (ca[0] - cb[0]).hypot(ca[1] - cb[1]);
    Some(displacement_similarity(d, cfg.d_max_2d, n))
}

fn min_over_max(x: f64, y: f64) -> f64 {
    x.min(y) / x.max(y)
}

pub fn ls3_shape_ratio(a: &DetectedObject, b: &DetectedObject) -> f64 {
    min_over_max(a.bbox.aspect(), b.bbox.aspect())
}

pub fn ls4_area(a: &DetectedObject, b: &DetectedObject) -> f64 {
    min_over_max(a.bbox.area(), b.bbox.area())
}

/// Histogram intersection divided by the channel count. Empty histograms
/// make the feature unavailable.
pub fn histogram_intersection(ha: &ColorHistogram, hb: &ColorHistogram) -> Result<Option<f64>> {
    if ha.bins() != hb.bins() {
        return Err(Error::BinMismatch(ha.bins(), hb.bins()));
    }
    if ha.is_empty() || hb.is_empty() {
        return Ok(None);
    }
    let s: f64 = ha
        .values()
        .iter()
        .zip(hb.values())
        .map(|(x, y)| x.min(*y))
        .sum();
    Ok(Some((s / 3.0).clamp(0.0, 1.0)))
}

pub fn ls5_histogram(a: &DetectedObject, b: &DetectedObject) -> Result<Option<f64>> {
    match (&a.appearance.histogram, &b.appearance.histogram) {
        (Some(ha), Some(hb)) => histogram_intersection(ha, hb),
        _ => Ok(None),
    }
}

/// Spatial-pyramid Förstner distance between the covariance pyramids.
pub fn covariance_pyramid_distance(
    a: &DetectedObject,
    b: &DetectedObject,
    cfg: &TrackerConfig,
) -> Result<Option<f64>> {
    let (Some(pa), Some(pb)) = (&a.appearance.cov_pyramid, &b.appearance.cov_pyramid) else {
        return Ok(None);
    };
    pyramid_distance(pa, pb, cfg.level_weighting, |ci, cj| {
        forstner_distance(
            &ci.regularized(COVARIANCE_EPSILON),
            &cj.regularized(COVARIANCE_EPSILON),
        )
    })
}

pub fn ls7_covariance(
    a: &DetectedObject,
    b: &DetectedObject,
    cfg: &TrackerConfig,
) -> Result<Option<f64>> {
    Ok(covariance_pyramid_distance(a, b, cfg)?.map(|d| (1.0 - d / cfg.d_cov_max).max(0.0)))
}

pub fn ls8_dominant_color(
    a: &DetectedObject,
    b: &DetectedObject,
    cfg: &TrackerConfig,
) -> Option<f64> {
    let (pa, pb) = (
        a.appearance.dcd_pyramid.as_ref()?,
        b.appearance.dcd_pyramid.as_ref()?,
    );
    let d = pyramid_distance(pa, pb, cfg.level_weighting, |x, y| {
        Ok(dcd_distance(x, y, cfg.dcd_color_threshold))
    })
    .ok()??;
    Some((1.0 - d).clamp(0.0, 1.0))
}

/// Single-feature similarity. A covariance pair that is not positive definite
/// even after regularization is reported as unavailable.
pub fn feature_similarity(
    k: FeatureId,
    a: &DetectedObject,
    b: &DetectedObject,
    cfg: &TrackerConfig,
    hog: &dyn HogSimilarity,
) -> Result<Option<f64>> {
    Ok(match k {
        FeatureId::Disp3D => ls1_disp3d(a, b, cfg),
        FeatureId::Disp2D => ls2_disp2d(a, b, cfg),
        FeatureId::ShapeRatio => Some(ls3_shape_ratio(a, b)),
        FeatureId::Area2D => Some(ls4_area(a, b)),
        FeatureId::ColorHist => ls5_histogram(a, b)?,
        FeatureId::Hog => hog.ls6(a, b),
        FeatureId::ColorCov => match ls7_covariance(a, b, cfg) {
            Ok(v) => v,
            Err(Error::Numerical(_)) => None,
            Err(e) => return Err(e),
        },
        FeatureId::DomColor => ls8_dominant_color(a, b, cfg),
    })
}

/// Computes the listed features for a pair; others stay unavailable.
pub fn similarity_vector(
    a: &DetectedObject,
    b: &DetectedObject,
    features: impl IntoIterator<Item = FeatureId>,
    cfg: &TrackerConfig,
    hog: &dyn HogSimilarity,
) -> Result<SimilarityVector> {
    let mut s = SimilarityVector::new();
    for k in features {
        s.set(k, feature_similarity(k, a, b, cfg, hog)?);
    }
    Ok(s)
}

/// Weighted link similarity of a pair, evaluating only positively weighted
/// features. `Ok(None)` when none of them is available for the pair.
pub fn link_similarity(
    a: &DetectedObject,
    b: &DetectedObject,
    weights: &FeatureWeights,
    cfg: &TrackerConfig,
    hog: &dyn HogSimilarity,
) -> Result<Option<(f64, SimilarityVector)>> {
    let sim = similarity_vector(a, b, weights.active(), cfg, hog)?;
    Ok(sim.combine(weights).map(|ls| (ls, sim)))
}
