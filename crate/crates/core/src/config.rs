//! Threshold ledger and its key-value file format.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How Gaussian consistency terms are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GaussianMode {
    /// `exp(-(x-mu)^2 / 2 sigma^2)`, always in [0, 1].
    #[default]
    Normalized,
    /// Full density `exp(..) / sqrt(2 pi sigma^2)`; may exceed 1.
    Pdf,
}

impl GaussianMode {
    pub fn score(self, x: f64, mean: f64, sigma: f64) -> f64 {
        let e = (-(x - mean).powi(2) / (2.0 * sigma * sigma)).exp();
        match self {
            GaussianMode::Normalized => e,
            GaussianMode::Pdf => e / (2.0 * std::f64::consts::PI * sigma * sigma).sqrt(),
        }
    }
}

/// Relative weight of spatial-pyramid levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LevelWeighting {
    /// Level `i` of `L` weighs `2^-(L-i)`, finer levels count more.
    #[default]
    Geometric,
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Temporal window in frames; also the termination patience.
    pub t2_window: u32,
    /// Minimum link similarity for a graph edge and weak-classifier threshold.
    pub th1_link: f64,
    /// Cap on the long-term blend weight.
    pub th4_beta_cap: f64,
    /// Minimum trajectory length in frames.
    pub th5_min_frames: u32,
    /// Minimum spatial extent in meters when world coordinates are present.
    pub th6_min_extent: f64,
    /// Minimum spatial extent in pixels when only image boxes are present.
    pub th6_min_extent_px: f64,
    /// Maximum 3D displacement per frame, meters.
    pub d_max_3d: f64,
    /// Maximum 2D displacement per frame, pixels.
    pub d_max_2d: f64,
    pub d_cov_max: f64,
    pub hist_bins: usize,
    pub q_window: usize,
    pub pyramid_levels: usize,
    pub sigma_floor: f64,
    pub dominant_color_max: usize,
    /// RGB distance beyond which two dominant colors are unrelated.
    pub dcd_color_threshold: f64,
    /// Mean squared RGB error below which dominant-color splitting stops.
    pub dcd_min_distortion: f64,
    pub level_weighting: LevelWeighting,
    pub gaussian_mode: GaussianMode,
    /// Interest-point grid stride, pixels.
    pub point_stride: usize,
    /// Search radius for point matching between frames, pixels.
    pub point_radius: f64,
    pub max_rounds: usize,
    /// Boosting stops once the best weak classifier's edge is within this
    /// many standard errors of chance. Zero disables the check.
    pub edge_significance: f64,
    pub iou_threshold: f64,
    pub coverage_fraction: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            t2_window: 10,
            th1_link: 0.5,
            th4_beta_cap: 0.5,
            th5_min_frames: 5,
            th6_min_extent: 0.5,
            th6_min_extent_px: 15.0,
            d_max_3d: 2.0,
            d_max_2d: 50.0,
            d_cov_max: 15.0,
            hist_bins: 8,
            q_window: 20,
            pyramid_levels: 2,
            sigma_floor: 1e-3,
            dominant_color_max: 8,
            dcd_color_threshold: 25.0,
            dcd_min_distortion: 4.0,
            level_weighting: LevelWeighting::Geometric,
            gaussian_mode: GaussianMode::Normalized,
            point_stride: 8,
            point_radius: 50.0,
            max_rounds: 64,
            edge_significance: 3.0,
            iou_threshold: 0.5,
            coverage_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigViolation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Every violated invariant, keyed by field name. Empty means valid.
pub fn validate_config(c: &TrackerConfig) -> Vec<ConfigViolation> {
    let mut out = Vec::new();
    let mut check = |ok: bool, field: &'static str, message: &str| {
        if !ok {
            out.push(ConfigViolation {
                field,
                message: message.to_string(),
            });
        }
    };
    let unit = |v: f64| (0.0..=1.0).contains(&v);
    let positive = |v: f64| v > 0.0 && v.is_finite();

    check(c.t2_window >= 1, "t2_window", "must be >= 1");
    check(unit(c.th1_link), "th1_link", "must be in [0, 1]");
    check(unit(c.th4_beta_cap), "th4_beta_cap", "must be in [0, 1]");
    check(c.th6_min_extent >= 0.0, "th6_min_extent", "must be >= 0");
    check(
        c.th6_min_extent_px >= 0.0,
        "th6_min_extent_px",
        "must be >= 0",
    );
    check(positive(c.d_max_3d), "d_max_3d", "must be > 0");
    check(positive(c.d_max_2d), "d_max_2d", "must be > 0");
    check(positive(c.d_cov_max), "d_cov_max", "must be > 0");
    check(
        (1..=256).contains(&c.hist_bins),
        "hist_bins",
        "must be in 1..=256",
    );
    check(c.q_window >= 1, "q_window", "must be >= 1");
    check(c.pyramid_levels <= 8, "pyramid_levels", "must be <= 8");
    check(positive(c.sigma_floor), "sigma_floor", "must be > 0");
    check(
        c.dominant_color_max >= 1,
        "dominant_color_max",
        "must be >= 1",
    );
    check(
        positive(c.dcd_color_threshold),
        "dcd_color_threshold",
        "must be > 0",
    );
    check(
        c.dcd_min_distortion >= 0.0,
        "dcd_min_distortion",
        "must be >= 0",
    );
    check(c.point_stride >= 1, "point_stride", "must be >= 1");
    check(positive(c.point_radius), "point_radius", "must be > 0");
    check(
        c.edge_significance >= 0.0,
        "edge_significance",
        "must be >= 0",
    );
    check(
        c.iou_threshold > 0.0 && c.iou_threshold <= 1.0,
        "iou_threshold",
        "must be in (0, 1]",
    );
    check(
        c.coverage_fraction > 0.0 && c.coverage_fraction <= 1.0,
        "coverage_fraction",
        "must be in (0, 1]",
    );
    out
}

impl TrackerConfig {
    pub fn validated(self) -> Result<Self> {
        let v = validate_config(&self);
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidConfig(v))
        }
    }

    /// Parses `key = value` text. Missing keys take defaults; unknown keys are rejected.
    pub fn from_kv_str(text: &str) -> std::result::Result<Self, String> {
        let cfg: TrackerConfig = toml::from_str(text).map_err(|e| e.message().to_string())?;
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<TrackerConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TrackerConfig::from_kv_str(&text)
        .map_err(|message| Error::Format {
            path: path.to_path_buf(),
            message,
        })?
        .validated()
}
