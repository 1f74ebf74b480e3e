use crate::config::LevelWeighting;
use crate::error::Result;
use crate::features::{DominantColorSet, Pyramid};

/// MPEG-7 convention: colors closer than `T_d` are related with strength
/// `1 - dist / (ALPHA * T_d)`.
const DCD_ALPHA: f64 = 1.2;

/// Occlusion-tolerant spatial pyramid distance.
///
/// For each level, `cell_distance` is evaluated on co-located cells present in
/// both pyramids; only the lowest half (rounded up) is averaged. Levels are
/// then blended with `weighting`, normalized over the levels that had at
/// least one pair. Returns `None` when no level had a pair.
pub fn pyramid_distance<T>(
    pa: &Pyramid<T>,
    pb: &Pyramid<T>,
    weighting: LevelWeighting,
    mut cell_distance: impl FnMut(&T, &T) -> Result<f64>,
) -> Result<Option<f64>> {
    let depth = pa.depth().min(pb.depth());
    let mut per_level = Vec::with_capacity(depth + 1);
    let mut dists = Vec::new();
    for i in 0..=depth {
        dists.clear();
        for (a, b) in pa.level(i).iter().zip(pb.level(i)) {
            if let (Some(a), Some(b)) = (a, b) {
                dists.push(cell_distance(a, b)?);
            }
        }
        if dists.is_empty() {
            continue;
        }
        dists.sort_by(f64::total_cmp);
        let keep = dists.len().div_ceil(2);
        let mean = dists[..keep].iter().sum::<f64>() / keep as f64;
        per_level.push((i, mean));
    }
    if per_level.is_empty() {
        return Ok(None);
    }
    let weight = |i: usize| match weighting {
        LevelWeighting::Geometric => 0.5f64.powi((depth - i) as i32),
        LevelWeighting::Equal => 1.0,
    };
    let total: f64 = per_level.iter().map(|(i, _)| weight(*i)).sum();
    Ok(Some(
        per_level.iter().map(|(i, d)| weight(*i) * d).sum::<f64>() / total,
    ))
}

/// Quadratic dominant-color dissimilarity in [0, 1].
pub fn dcd_distance(f1: &DominantColorSet, f2: &DominantColorSet, color_threshold: f64) -> f64 {
    let self_term = |f: &DominantColorSet| {
        f.colors()
            .iter()
            .map(|c| c.fraction * c.fraction)
            .sum::<f64>()
    };
    let mut cross = 0.0;
    for a in f1.colors() {
        for b in f2.colors() {
            let dist = (0..3)
                .map(|d| (a.color[d] - b.color[d]).powi(2))
                .sum::<f64>()
                .sqrt();
            if dist <= color_threshold {
                let sim = 1.0 - dist / (DCD_ALPHA * color_threshold);
                cross += sim * a.fraction * b.fraction;
            }
        }
    }
    let d2 = self_term(f1) + self_term(f2) - 2.0 * cross;
    d2.max(0.0).sqrt().min(1.0)
}
