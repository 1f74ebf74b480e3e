//! Per-detection appearance extraction from raw pixel regions.

mod covariance;
mod dominant;
mod histogram;
mod points;
mod pyramid;

use serde::{Deserialize, Serialize};

use crate::config::TrackerConfig;
use crate::error::{Error, Result};

pub use covariance::{
    compute_covariance, CovarianceMatrix, DescriptorField, COVARIANCE_DIM, COVARIANCE_EPSILON,
};
pub use dominant::{
    extract_dominant_colors, quantize_dominant_colors, DominantColor, DominantColorSet,
};
pub use histogram::{compute_color_histogram, ColorHistogram};
pub use points::{compute_point_descriptor, sample_interest_points, InterestPoint, DESCRIPTOR_LEN};
pub use pyramid::{build_pyramid, cell_rects, CellRect, Pyramid};

pub type CovariancePyramid = Pyramid<CovarianceMatrix>;
pub type DominantColorPyramid = Pyramid<DominantColorSet>;

/// A rectangular crop of a frame with its foreground mask.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPixels {
    width: usize,
    height: usize,
    rgb: Vec<[u8; 3]>,
    mask: Vec<bool>,
    /// Frame coordinates of the top-left pixel.
    origin: [f64; 2],
}

impl RegionPixels {
    pub fn new(width: usize, height: usize, rgb: Vec<[u8; 3]>, mask: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRegion(format!(
                "empty region {width}x{height}"
            )));
        }
        if rgb.len() != width * height || mask.len() != width * height {
            return Err(Error::InvalidRegion(format!(
                "expected {} pixels, got rgb={} mask={}",
                width * height,
                rgb.len(),
                mask.len()
            )));
        }
        Ok(Self {
            width,
            height,
            rgb,
            mask,
            origin: [0.0, 0.0],
        })
    }

    /// Region with every pixel marked foreground.
    pub fn opaque(width: usize, height: usize, rgb: Vec<[u8; 3]>) -> Result<Self> {
        let n = rgb.len();
        Self::new(width, height, rgb, vec![true; n])
    }

    pub fn with_origin(mut self, x: f64, y: f64) -> Self {
        self.origin = [x, y];
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    #[inline]
    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        self.rgb[y * self.width + x]
    }

    #[inline]
    pub fn is_foreground(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn foreground_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Foreground colors inside `rect`, row-major.
    pub fn foreground_colors(&self, rect: CellRect) -> Vec<[u8; 3]> {
        let mut out = Vec::with_capacity(rect.w * rect.h);
        for y in rect.y..rect.y + rect.h {
            for x in rect.x..rect.x + rect.w {
                if self.is_foreground(x, y) {
                    out.push(self.rgb(x, y));
                }
            }
        }
        out
    }

    pub fn full_rect(&self) -> CellRect {
        CellRect {
            x: 0,
            y: 0,
            w: self.width,
            h: self.height,
        }
    }
}

/// Everything the similarity features read from a detection. Each part is
/// optional so that geometry-only detections remain valid input.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<ColorHistogram>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_pyramid: Option<CovariancePyramid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dcd_pyramid: Option<DominantColorPyramid>,
    /// `None` when points were never extracted, as opposed to none found.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<InterestPoint>>,
}

impl Appearance {
    /// Total interest points on the object (`M`), if points were extracted.
    pub fn point_count(&self) -> Option<usize> {
        self.points.as_ref().map(Vec::len)
    }

    pub fn points(&self) -> &[InterestPoint] {
        self.points.as_deref().unwrap_or(&[])
    }
}

/// Computes the full appearance payload for one detection region.
pub fn extract_appearance(region: &RegionPixels, cfg: &TrackerConfig) -> Appearance {
    let histogram = compute_color_histogram(region, cfg.hist_bins).ok();
    let field = DescriptorField::new(region);
    let cov_pyramid = build_pyramid(region, cfg.pyramid_levels, |r, rect| {
        field.covariance(r, rect).ok()
    });
    let dcd_pyramid = build_pyramid(region, cfg.pyramid_levels, |r, rect| {
        let colors = r.foreground_colors(rect);
        quantize_dominant_colors(&colors, cfg.dominant_color_max, cfg.dcd_min_distortion)
            .ok()
            .map(|(set, _)| set)
    });
    let points = sample_interest_points(region, cfg.point_stride);
    Appearance {
        histogram,
        cov_pyramid: cov_pyramid.has_any().then_some(cov_pyramid),
        dcd_pyramid: dcd_pyramid.has_any().then_some(dcd_pyramid),
        points: Some(points),
    }
}
