use serde::{Deserialize, Serialize};

use super::RegionPixels;
use crate::error::{Error, Result};

/// Per-channel normalized RGB histogram, laid out `[R bins | G bins | B bins]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorHistogram {
    bins: usize,
    values: Vec<f64>,
}

impl ColorHistogram {
    pub fn from_values(bins: usize, values: Vec<f64>) -> Result<Self> {
        if !(1..=256).contains(&bins) || values.len() != 3 * bins {
            return Err(Error::InvalidRegion(format!(
                "histogram needs 3x{bins} values, got {}",
                values.len()
            )));
        }
        Ok(Self { bins, values })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * self.bins..(c + 1) * self.bins]
    }

    /// True when no foreground pixel contributed.
    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

/// Histogram of foreground pixels; an empty mask yields all zeros.
pub fn compute_color_histogram(r: &RegionPixels, bins: usize) -> Result<ColorHistogram> {
    if !(1..=256).contains(&bins) {
        return Err(Error::InvalidRegion(format!(
            "hist_bins {bins} outside 1..=256"
        )));
    }
    let mut counts = vec![0u64; 3 * bins];
    let mut n = 0u64;
    for (px, fg) in r.rgb.iter().zip(&r.mask) {
        if !fg {
            continue;
        }
        n += 1;
        for (c, v) in px.iter().enumerate() {
            let b = (*v as usize * bins) / 256;
            counts[c * bins + b] += 1;
        }
    }
    let values = if n == 0 {
        vec![0.0; 3 * bins]
    } else {
        counts.iter().map(|c| *c as f64 / n as f64).collect()
    };
    Ok(ColorHistogram { bins, values })
}
