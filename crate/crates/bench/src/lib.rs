//! Deterministic inputs shared by the benchmarks.

use featrack::features::{CovarianceMatrix, RegionPixels};
use featrack::io::load_objects;
use featrack::{synth_generate, DetectedObject, ScenarioSpec, TrackerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A region of uniformly random pixels, fully foreground.
pub fn random_region(seed: u64, w: usize, h: usize) -> RegionPixels {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rgb = (0..w * h)
        .map(|_| [rng.random(), rng.random(), rng.random()])
        .collect();
    RegionPixels::new(w, h, rgb, vec![true; w * h]).expect("valid region")
}

/// `A Aᵀ + I` for a random `A`, so always positive definite.
pub fn random_spd(seed: u64, dim: usize) -> CovarianceMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..dim * dim)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let mut m = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            let dot: f64 = (0..dim).map(|k| a[i * dim + k] * a[j * dim + k]).sum();
            m[i * dim + j] = dot + if i == j { 1.0 } else { 0.0 };
        }
    }
    CovarianceMatrix::from_row_major(dim, m).expect("symmetric")
}

/// Detections of a synthetic scene with appearance features attached.
pub fn scene_objects(n_objects: usize, n_frames: u32, seed: u64) -> Vec<DetectedObject> {
    let cfg = TrackerConfig::default();
    let spec = ScenarioSpec {
        n_objects,
        n_frames,
        seed,
        ..Default::default()
    };
    let scene = synth_generate(&spec, &cfg).expect("valid spec");
    load_objects(&scene.detections, std::path::Path::new("."), &cfg).expect("embedded features")
}
