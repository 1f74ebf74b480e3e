use std::collections::BTreeMap;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::RegionPixels;
use crate::error::{Error, Result};

const LLOYD_MAX_ITERS: usize = 50;
/// Lloyd iterations stop once distortion improves by less than this fraction.
const LLOYD_REL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantColor {
    pub color: [f64; 3],
    pub fraction: f64,
}

/// Compact color summary: fractions are positive and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantColorSet {
    colors: Vec<DominantColor>,
}

impl DominantColorSet {
    pub fn new(colors: Vec<DominantColor>) -> Result<Self> {
        let total: f64 = colors.iter().map(|c| c.fraction).sum();
        if colors.is_empty()
            || colors.iter().any(|c| c.fraction <= 0.0)
            || (total - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidRegion(
                "dominant colors need positive fractions summing to 1".into(),
            ));
        }
        Ok(Self { colors })
    }

    pub fn single(color: [f64; 3]) -> Self {
        Self {
            colors: vec![DominantColor {
                color,
                fraction: 1.0,
            }],
        }
    }

    pub fn colors(&self) -> &[DominantColor] {
        &self.colors
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }
}

pub fn extract_dominant_colors(
    r: &RegionPixels,
    a_max: usize,
    min_distortion: f64,
) -> Result<DominantColorSet> {
    let colors = r.foreground_colors(r.full_rect());
    quantize_dominant_colors(&colors, a_max, min_distortion).map(|(set, _)| set)
}

struct Sample {
    color: [f64; 3],
    weight: f64,
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

fn lex_less(a: &[f64; 3], b: &[f64; 3]) -> bool {
    a.partial_cmp(b) == Some(std::cmp::Ordering::Less)
}

/// Binary-splitting generalized Lloyd quantization.
///
/// Starts from the mean color and keeps splitting the cluster with the highest
/// distortion along its principal color axis, re-running Lloyd iterations
/// after each split, until `a_max` clusters exist or the mean squared error
/// drops below `min_distortion`. Returns the set together with the total
/// distortion after the initial fit and after every split.
pub fn quantize_dominant_colors(
    pixels: &[[u8; 3]],
    a_max: usize,
    min_distortion: f64,
) -> Result<(DominantColorSet, Vec<f64>)> {
    if pixels.is_empty() {
        return Err(Error::DegenerateRegion(
            "no foreground pixels for dominant colors".into(),
        ));
    }
    let a_max = a_max.max(1);
    let mut counts: BTreeMap<[u8; 3], u32> = BTreeMap::new();
    for p in pixels {
        *counts.entry(*p).or_default() += 1;
    }
    let samples: Vec<Sample> = counts
        .into_iter()
        .map(|(c, n)| Sample {
            color: [c[0] as f64, c[1] as f64, c[2] as f64],
            weight: n as f64,
        })
        .collect();
    let total_weight = pixels.len() as f64;

    let mut assign = vec![0usize; samples.len()];
    let mut centroids = vec![centroid(&samples, &assign, 0)];
    let mut history = vec![total_distortion(&samples, &assign, &centroids)];

    while centroids.len() < a_max && history.last().unwrap() / total_weight >= min_distortion {
        let per_cluster = cluster_distortions(&samples, &assign, centroids.len(), &centroids);
        let mut worst = 0;
        for k in 1..centroids.len() {
            let better = per_cluster[k] > per_cluster[worst]
                || (per_cluster[k] == per_cluster[worst]
                    && lex_less(&centroids[k], &centroids[worst]));
            if better {
                worst = k;
            }
        }
        if per_cluster[worst] <= 0.0 {
            break;
        }
        let axis = principal_axis(&samples, &assign, worst, &centroids[worst]);
        let base = centroids[worst];
        let new_id = centroids.len();
        let mut moved = 0;
        for (i, s) in samples.iter().enumerate() {
            if assign[i] == worst {
                let proj: f64 = (0..3).map(|d| (s.color[d] - base[d]) * axis[d]).sum();
                if proj > 0.0 {
                    assign[i] = new_id;
                    moved += 1;
                }
            }
        }
        let remaining = assign.iter().filter(|a| **a == worst).count();
        if moved == 0 || remaining == 0 {
            for a in assign.iter_mut() {
                if *a == new_id {
                    *a = worst;
                }
            }
            break;
        }
        centroids[worst] = centroid(&samples, &assign, worst);
        centroids.push(centroid(&samples, &assign, new_id));
        lloyd(&samples, &mut assign, &mut centroids);
        history.push(total_distortion(&samples, &assign, &centroids));
    }

    let mut weights = vec![0.0; centroids.len()];
    for (i, s) in samples.iter().enumerate() {
        weights[assign[i]] += s.weight;
    }
    let mut colors: Vec<DominantColor> = centroids
        .iter()
        .zip(&weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(c, w)| DominantColor {
            color: *c,
            fraction: w / total_weight,
        })
        .collect();
    colors.sort_by(|a, b| {
        b.fraction.total_cmp(&a.fraction).then_with(|| {
            a.color
                .partial_cmp(&b.color)
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    Ok((DominantColorSet { colors }, history))
}

fn centroid(samples: &[Sample], assign: &[usize], k: usize) -> [f64; 3] {
    let mut sum = [0.0; 3];
    let mut w = 0.0;
    for (s, a) in samples.iter().zip(assign) {
        if *a == k {
            for (acc, c) in sum.iter_mut().zip(s.color) {
                *acc += c * s.weight;
            }
            w += s.weight;
        }
    }
    if w > 0.0 {
        sum.map(|v| v / w)
    } else {
        sum
    }
}

/// All centroids in one pass; same arithmetic order as `centroid`.
fn recenter(samples: &[Sample], assign: &[usize], centroids: &mut [[f64; 3]]) {
    let mut sums = vec![([0.0; 3], 0.0); centroids.len()];
    for (s, a) in samples.iter().zip(assign) {
        let (sum, w) = &mut sums[*a];
        for (acc, c) in sum.iter_mut().zip(s.color) {
            *acc += c * s.weight;
        }
        *w += s.weight;
    }
    for (c, (sum, w)) in centroids.iter_mut().zip(sums) {
        *c = if w > 0.0 { sum.map(|v| v / w) } else { sum };
    }
}

fn cluster_distortions(
    samples: &[Sample],
    assign: &[usize],
    k: usize,
    centroids: &[[f64; 3]],
) -> Vec<f64> {
    let mut out = vec![0.0; k];
    for (s, a) in samples.iter().zip(assign) {
        out[*a] += s.weight * dist2(&s.color, &centroids[*a]);
    }
    out
}

fn total_distortion(samples: &[Sample], assign: &[usize], centroids: &[[f64; 3]]) -> f64 {
    cluster_distortions(samples, assign, centroids.len(), centroids)
        .iter()
        .sum()
}

fn principal_axis(samples: &[Sample], assign: &[usize], k: usize, mean: &[f64; 3]) -> [f64; 3] {
    let mut cov = Matrix3::<f64>::zeros();
    for (s, a) in samples.iter().zip(assign) {
        if *a == k {
            let d = Vector3::new(
                s.color[0] - mean[0],
                s.color[1] - mean[1],
                s.color[2] - mean[2],
            );
            cov += d * d.transpose() * s.weight;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut best = 0;
    for i in 1..3 {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let v = eig.eigenvectors.column(best);
    let mut axis = [v[0], v[1], v[2]];
    // canonical sign: first non-negligible component positive
    if let Some(first) = axis.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            axis = axis.map(|c| -c);
        }
    }
    axis
}

/// Lloyd iterations until assignments stop changing. Clusters that lose all
/// members are dropped.
fn lloyd(samples: &[Sample], assign: &mut [usize], centroids: &mut Vec<[f64; 3]>) {
    let mut prev = total_distortion(samples, assign, centroids);
    for _ in 0..LLOYD_MAX_ITERS {
        let mut changed = false;
        for (i, s) in samples.iter().enumerate() {
            let mut best = assign[i];
            let mut best_d = dist2(&s.color, &centroids[best]);
            for (k, c) in centroids.iter().enumerate() {
                let d = dist2(&s.color, c);
                if d < best_d || (d == best_d && k < best) {
                    best = k;
                    best_d = d;
                }
            }
            if best != assign[i] {
                assign[i] = best;
                changed = true;
            }
        }
        // drop empty clusters, then recenter
        let mut used = vec![false; centroids.len()];
        for a in assign.iter() {
            used[*a] = true;
        }
        if used.iter().any(|u| !u) {
            let mut remap = vec![usize::MAX; centroids.len()];
            let mut next = 0;
            for (k, u) in used.iter().enumerate() {
                if *u {
                    remap[k] = next;
                    next += 1;
                }
            }
            for a in assign.iter_mut() {
                *a = remap[*a];
            }
            *centroids = centroids
                .iter()
                .zip(&used)
                .filter(|(_, u)| **u)
                .map(|(c, _)| *c)
                .collect();
        }
        recenter(samples, assign, centroids);
        let d = total_distortion(samples, assign, centroids);
        if !changed || prev - d <= LLOYD_REL_TOL * prev {
            break;
        }
        prev = d;
    }
}
