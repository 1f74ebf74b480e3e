use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CellRect, RegionPixels};
use crate::error::{Error, Result};

/// Descriptor count: x, y, R, G, B and gradient magnitude/orientation per channel.
pub const COVARIANCE_DIM: usize = 11;

/// Diagonal load applied before any distance computation.
pub const COVARIANCE_EPSILON: f64 = 1e-6;

/// Dense symmetric matrix, row-major. Serialized as its upper triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PackedCovariance", try_from = "PackedCovariance")]
pub struct CovarianceMatrix {
    dim: usize,
    entries: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PackedCovariance {
    dim: usize,
    upper: Vec<f64>,
}

impl From<CovarianceMatrix> for PackedCovariance {
    fn from(c: CovarianceMatrix) -> Self {
        let mut upper = Vec::with_capacity(c.dim * (c.dim + 1) / 2);
        for i in 0..c.dim {
            for j in i..c.dim {
                upper.push(c.get(i, j));
            }
        }
        PackedCovariance { dim: c.dim, upper }
    }
}

impl TryFrom<PackedCovariance> for CovarianceMatrix {
    type Error = Error;
    fn try_from(p: PackedCovariance) -> Result<Self> {
        if p.upper.len() != p.dim * (p.dim + 1) / 2 {
            return Err(Error::Numerical(format!(
                "packed covariance of dim {} needs {} entries, got {}",
                p.dim,
                p.dim * (p.dim + 1) / 2,
                p.upper.len()
            )));
        }
        let mut entries = vec![0.0; p.dim * p.dim];
        let mut it = p.upper.into_iter();
        for i in 0..p.dim {
            for j in i..p.dim {
                let v = it.next().unwrap();
                entries[i * p.dim + j] = v;
                entries[j * p.dim + i] = v;
            }
        }
        Ok(CovarianceMatrix {
            dim: p.dim,
            entries,
        })
    }
}

impl CovarianceMatrix {
    /// Builds from row-major entries; rejects non-square or asymmetric input.
    pub fn from_row_major(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::Numerical(format!(
                "expected {dim}x{dim} entries, got {}",
                entries.len()
            )));
        }
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (entries[i * dim + j], entries[j * dim + i]);
                if (a - b).abs() > 1e-9 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::Numerical(format!(
                        "matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|v| v * k).collect(),
        }
    }

    /// `C + eps * I`.
    pub fn regularized(&self, eps: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.entries[i * self.dim + i] += eps;
        }
        out
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }
}

/// Per-pixel descriptor vectors for a whole region, computed once and shared
/// by every pyramid cell.
pub struct DescriptorField {
    width: usize,
    values: Vec<[f64; COVARIANCE_DIM]>,
}

impl DescriptorField {
    pub fn new(r: &RegionPixels) -> Self {
        let (w, h) = (r.width(), r.height());
        let mut values = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let px = r.rgb(x, y);
                let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
                let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
                let mut v = [0.0; COVARIANCE_DIM];
                v[0] = x as f64;
                v[1] = y as f64;
                for c in 0..3 {
                    v[2 + c] = px[c] as f64;
                    let gx = (r.rgb(xr, y)[c] as f64 - r.rgb(xl, y)[c] as f64) / 2.0;
                    let gy = (r.rgb(x, yd)[c] as f64 - r.rgb(x, yu)[c] as f64) / 2.0;
                    v[5 + 2 * c] = (gx * gx + gy * gy).sqrt();
                    v[6 + 2 * c] = gy.atan2(gx);
                }
                values.push(v);
            }
        }
        Self { width: w, values }
    }

    /// Sample covariance of the descriptors of foreground pixels in `rect`.
    /// Coordinates are relative to the region, so translating the region
    /// leaves the result unchanged.
    pub fn covariance(&self, r: &RegionPixels, rect: CellRect) -> Result<CovarianceMatrix> {
        const F: usize = COVARIANCE_DIM;
        let mut n = 0usize;
        let mut mean = [0.0; F];
        // co-moment, upper triangle
        let mut m2 = [[0.0; F]; F];
        let mut delta = [0.0; F];
        for y in rect.y..rect.y + rect.h {
            for x in rect.x..rect.x + rect.w {
                if !r.is_foreground(x, y) {
                    continue;
                }
                let v = &self.values[y * self.width + x];
                n += 1;
                let inv = 1.0 / n as f64;
                for i in 0..F {
                    delta[i] = v[i] - mean[i];
                    mean[i] += delta[i] * inv;
                }
                for i in 0..F {
                    let after = v[i] - mean[i];
                    for j in i..F {
                        m2[i][j] += after * delta[j];
                    }
                }
            }
        }
        if n < 2 {
            return Err(Error::DegenerateRegion(format!(
                "covariance needs at least 2 foreground pixels, found {n}"
            )));
        }
        let denom = (n - 1) as f64;
        let mut entries = vec![0.0; F * F];
        for i in 0..F {
            for j in i..F {
                let c = m2[i][j] / denom;
                entries[i * F + j] = c;
                entries[j * F + i] = c;
            }
        }
        Ok(CovarianceMatrix { dim: F, entries })
    }
}

pub fn compute_covariance(r: &RegionPixels) -> Result<CovarianceMatrix> {
    DescriptorField::new(r).covariance(r, r.full_rect())
}
