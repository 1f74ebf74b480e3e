//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line, and exits nonzero if any fail.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use featrack::evaluation::OutputTrack;
use featrack::features::{CovarianceMatrix, Pyramid};
use featrack::io::{
    ground_truth_tracks, load_objects, output_tracks, write_trajectories, write_weights,
    DetectionRecord, TrackRecord,
};
use featrack::learning::Label;
use featrack::similarity::{
    feature_similarity, forstner_distance, pyramid_distance, NoPointTracks,
};
use featrack::synth::write_scenario;
use featrack::tracking::filter_trajectories;
use featrack::{
    evaluate, extract_appearance, learn_weights, m_bar, run_adaboost, synth_generate, track,
    BBox2D, DetectedObject, FeatureId, FeatureWeights, LevelWeighting, RegionPixels, ScenarioSpec,
    SimilarityVector, TrackerConfig, TrainingPair, Trajectory, WorldPoint3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- oracles

/// Generalized eigenvalues of a 2×2 pencil as roots of
/// det(B)·λ² − (a11·b22 + a22·b11 − 2·a12·b12)·λ + det(A) = 0.
fn forstner_2x2_oracle(a: [f64; 3], b: [f64; 3]) -> f64 {
    let [a11, a12, a22] = a;
    let [b11, b12, b22] = b;
    let qa = b11 * b22 - b12 * b12;
    let qb = -(a11 * b22 + a22 * b11 - 2.0 * a12 * b12);
    let qc = a11 * a22 - a12 * a12;
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
    // numerically stable pair of roots
    let q = -0.5 * (qb + qb.signum() * disc);
    let (l1, l2) = (q / qa, qc / q);
    (l1.ln().powi(2) + l2.ln().powi(2)).sqrt()
}

fn random_spd(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let a: Vec<f64> = (0..dim * dim)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let mut m = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            let dot: f64 = (0..dim).map(|k| a[i * dim + k] * a[j * dim + k]).sum();
            m[i * dim + j] = dot + if i == j { 0.5 } else { 0.0 };
        }
    }
    m
}

fn cov(dim: usize, m: Vec<f64>) -> CovarianceMatrix {
    CovarianceMatrix::from_row_major(dim, m).unwrap()
}

fn random_region(rng: &mut ChaCha8Rng) -> RegionPixels {
    let (w, h) = (rng.random_range(6..40), rng.random_range(8..64));
    let base: [u8; 3] = [rng.random(), rng.random(), rng.random()];
    let spread = rng.random_range(5u8..120);
    let fg = rng.random_range(0.5..1.0);
    let rgb = (0..w * h)
        .map(|_| base.map(|c| c.saturating_add(rng.random_range(0..spread))))
        .collect();
    let mask = (0..w * h).map(|_| rng.random_bool(fg)).collect();
    RegionPixels::new(w, h, rgb, mask).unwrap()
}

fn random_detection(rng: &mut ChaCha8Rng, cfg: &TrackerConfig, frame: u32) -> DetectedObject {
    let region = random_region(rng);
    let bbox = BBox2D::new(
        rng.random_range(0.0..600.0),
        rng.random_range(0.0..400.0),
        region.width() as f64,
        region.height() as f64,
    )
    .unwrap();
    let mut o =
        DetectedObject::new(frame, 0, bbox).with_appearance(extract_appearance(&region, cfg));
    if rng.random_bool(0.8) {
        let w =
            WorldPoint3::new(rng.random_range(0.0..4.0), rng.random_range(0.0..4.0), 0.0).unwrap();
        o = o.with_world(w);
    }
    o
}

fn pipeline_spec(seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        n_objects: 5,
        n_frames: 500,
        miss_rate: 0.1,
        sigma_motion: 0.0,
        seed,
        ..Default::default()
    }
}

fn objects(detections: &[DetectionRecord], cfg: &TrackerConfig) -> Vec<DetectedObject> {
    load_objects(detections, Path::new("."), cfg).unwrap()
}

// --------------------------------------------------------------- criteria

fn c1_similarity_bounds() -> String {
    let t = Instant::now();
    let cfg = TrackerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let pool: Vec<_> = (0..400)
        .map(|i| random_detection(&mut rng, &cfg, i))
        .collect();
    let symmetric = [1, 2, 3, 4, 5, 7, 8];
    let reflexive = [3, 4, 5, 7, 8];
    let (mut pairs, mut values) = (0usize, 0usize);
    while pairs < 10_000 {
        let (i, j) = (
            rng.random_range(0..pool.len()),
            rng.random_range(0..pool.len()),
        );
        if i == j {
            continue;
        }
        let (a, b) = (&pool[i], &pool[j]);
        for (n, k) in FeatureId::ALL
            .into_iter()
            .enumerate()
            .map(|(n, k)| (n + 1, k))
        {
            let ab = feature_similarity(k, a, b, &cfg, &NoPointTracks).unwrap();
            if let Some(v) = ab {
                assert!((0.0..=1.0).contains(&v), "LS{n} = {v} out of range");
                values += 1;
            }
            if symmetric.contains(&n) {
                let ba = feature_similarity(k, b, a, &cfg, &NoPointTracks).unwrap();
                match (ab, ba) {
                    (Some(x), Some(y)) => {
                        assert!((x - y).abs() <= 1e-9, "LS{n} asymmetric: {x} vs {y}")
                    }
                    (x, y) => assert_eq!(x.is_some(), y.is_some(), "LS{n} availability asymmetric"),
                }
            }
        }
        pairs += 1;
    }
    for a in &pool {
        for (n, k) in FeatureId::ALL
            .into_iter()
            .enumerate()
            .map(|(n, k)| (n + 1, k))
        {
            if reflexive.contains(&n) {
                if let Some(v) = feature_similarity(k, a, a, &cfg, &NoPointTracks).unwrap() {
                    assert!((v - 1.0).abs() <= 1e-9, "LS{n}(a,a) = {v}");
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    assert!(secs < 30.0, "runtime {secs:.1} s");
    format!("{pairs} pairs, {values} values in [0,1], symmetric, reflexive, {secs:.2} s")
}

fn c2_forstner_oracle() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let (a, b) = (random_spd(&mut rng, 2), random_spd(&mut rng, 2));
        let got = forstner_distance(&cov(2, a.clone()), &cov(2, b.clone())).unwrap();
        let want = forstner_2x2_oracle([a[0], a[1], a[3]], [b[0], b[1], b[3]]);
        worst = worst.max((got - want).abs());
    }
    assert!(worst <= 1e-8, "2x2 oracle error {worst:e}");
    let mut worst_scale = 0.0f64;
    for dim in [2usize, 11] {
        for _ in 0..200 {
            let c = random_spd(&mut rng, dim);
            let k: f64 = rng.random_range(0.05..20.0);
            let kc: Vec<f64> = c.iter().map(|v| v * k).collect();
            let got = forstner_distance(&cov(dim, kc), &cov(dim, c)).unwrap();
            let want = (dim as f64).sqrt() * k.ln().abs();
            worst_scale = worst_scale.max((got - want).abs());
        }
    }
    assert!(worst_scale <= 1e-8, "scaling law error {worst_scale:e}");
    format!("2000 pairs max err {worst:.1e}, scaling law max err {worst_scale:.1e}")
}

fn c3_pyramid_half_keep() -> String {
    let abs = |a: &f64, b: &f64| Ok((a - b).abs());
    let pyr = |l1: Vec<Option<f64>>| Pyramid::from_levels(vec![vec![Some(0.0)], l1]).unwrap();
    let a = pyr(vec![Some(0.0); 4]);
    // two occluded cells are discarded
    let b = pyr(vec![Some(0.0), Some(0.0), Some(10.0), Some(10.0)]);
    for w in [LevelWeighting::Geometric, LevelWeighting::Equal] {
        assert_eq!(pyramid_distance(&a, &b, w, abs).unwrap(), Some(0.0));
    }
    // odd count rounds up: of (1, 3, 10) keep (1, 3); level means 0 and 2
    let b = pyr(vec![Some(1.0), Some(3.0), None, Some(10.0)]);
    let g = pyramid_distance(&a, &b, LevelWeighting::Geometric, abs)
        .unwrap()
        .unwrap();
    assert!((g - 2.0 / 1.5).abs() < 1e-12, "geometric {g}");
    let e = pyramid_distance(&a, &b, LevelWeighting::Equal, abs)
        .unwrap()
        .unwrap();
    assert!((e - 1.0).abs() < 1e-12, "equal {e}");
    // identical real pyramids
    let cfg = TrackerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..20 {
        let o = random_detection(&mut rng, &cfg, 0);
        if let Some(p) = &o.appearance.cov_pyramid {
            let d = pyramid_distance(p, p, cfg.level_weighting, forstner_distance).unwrap();
            assert!(d.is_none_or(|d| d.abs() < 1e-9), "cov self distance {d:?}");
        }
        if let Some(p) = &o.appearance.dcd_pyramid {
            let d = pyramid_distance(p, p, cfg.level_weighting, |x, y| {
                Ok(featrack::similarity::dcd_distance(
                    x,
                    y,
                    cfg.dcd_color_threshold,
                ))
            })
            .unwrap();
            assert!(d.is_none_or(|d| d.abs() < 1e-9), "dcd self distance {d:?}");
        }
    }
    "occlusion rule exact, identical pyramids at distance 0".into()
}

fn boost_pair(vals: [f64; 8], label: Label) -> TrainingPair {
    TrainingPair {
        sim: SimilarityVector::from_options(vals.map(Some)),
        label,
    }
}

fn c4_adaboost() -> String {
    let cfg = TrackerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let sep = FeatureId::ColorHist;
    let pairs: Vec<_> = (0..1000)
        .map(|_| {
            let label = if rng.random_bool(0.3) {
                Label::Same
            } else {
                Label::Different
            };
            let mut v: [f64; 8] = std::array::from_fn(|_| rng.random());
            v[sep.index()] = match label {
                Label::Same => rng.random_range(0.6..1.0),
                Label::Different => rng.random_range(0.0..0.4),
            };
            boost_pair(v, label)
        })
        .collect();
    let r = run_adaboost(&pairs, &cfg).unwrap();
    assert!(r.rounds.len() <= 2, "{} rounds", r.rounds.len());
    assert_eq!(r.weights.get(sep), 1.0);
    assert_eq!(r.weights, FeatureWeights::single(sep));
    for rr in &r.rounds {
        assert!(
            (rr.weight_sum - 1.0).abs() <= 1e-9,
            "round {} sum {}",
            rr.round,
            rr.weight_sum
        );
    }
    let one = r.rounds.len();

    // two informative features: same iff their sum exceeds 1
    let (fa, fb) = (FeatureId::Area2D, FeatureId::ColorCov);
    let pairs: Vec<_> = (0..1000)
        .map(|_| {
            let v: [f64; 8] = std::array::from_fn(|_| rng.random());
            let label = if v[fa.index()] + v[fb.index()] > 1.0 {
                Label::Same
            } else {
                Label::Different
            };
            boost_pair(v, label)
        })
        .collect();
    let cfg64 = TrackerConfig {
        max_rounds: 64,
        ..cfg
    };
    let r = run_adaboost(&pairs, &cfg64).unwrap();
    assert!(r.rounds.len() <= 64);
    for rr in &r.rounds {
        assert!(
            (rr.weight_sum - 1.0).abs() <= 1e-9,
            "round {} sum {}",
            rr.round,
            rr.weight_sum
        );
    }
    let share = (r.weights.get(fa) + r.weights.get(fb)) / r.weights.total();
    assert!(share >= 0.9, "share {share}, weights {:?}", r.weights);
    assert!(!r.non_separable);
    format!(
        "separating feature weight 1.0 in {one} round(s); two-feature share {share:.3} in {} rounds",
        r.rounds.len()
    )
}

fn c5_gap_bridging() -> String {
    let cfg = TrackerConfig {
        t2_window: 10,
        ..Default::default()
    };
    let spec = ScenarioSpec {
        n_objects: 1,
        n_frames: 200,
        seed: 505,
        ..Default::default()
    };
    let scene = synth_generate(&spec, &cfg).unwrap();
    let gap = 100..104;
    let dets: Vec<_> = scene
        .detections
        .iter()
        .filter(|d| !gap.contains(&d.frame))
        .cloned()
        .collect();
    assert_eq!(dets.len(), 196);
    let trajs = track(&objects(&dets, &cfg), &FeatureWeights::uniform(), &cfg).unwrap();
    assert_eq!(trajs.len(), 1, "{} trajectories", trajs.len());
    let t = &trajs[0];
    assert_eq!(
        (t.first_frame(), t.last_frame(), t.nodes().len()),
        (0, 199, 196)
    );
    "1 trajectory over frames 0..199 across a 4-frame gap".into()
}

fn c6_end_to_end() -> String {
    let t = Instant::now();
    let cfg = TrackerConfig::default();
    let train = synth_generate(&pipeline_spec(1), &cfg).unwrap();
    let test = synth_generate(&pipeline_spec(2), &cfg).unwrap();
    let rep = learn_weights(
        &objects(&train.detections, &cfg),
        &ground_truth_tracks(&train.ground_truth).unwrap(),
        &cfg,
    )
    .unwrap();
    let trajs = track(&objects(&test.detections, &cfg), &rep.weights, &cfg).unwrap();
    let out: Vec<_> = trajs.iter().map(OutputTrack::from_trajectory).collect();
    let m = evaluate(
        &ground_truth_tracks(&test.ground_truth).unwrap(),
        &out,
        &cfg,
    )
    .unwrap();
    let secs = t.elapsed().as_secs_f64();
    let summary = format!(
        "M1 {:.3} M2 {:.3} M3 {:.3} TP {} FP {} in {secs:.2} s",
        m.m1, m.m2, m.m3, m.tp, m.fp
    );
    assert!(m.m1 >= 0.9, "{summary}");
    assert_eq!((m.m2, m.m3, m.fp), (1.0, 1.0, 0), "{summary}");
    assert!(secs < 10.0, "{summary}");
    summary
}

fn c7_filter_rules() -> String {
    let cfg = TrackerConfig {
        th5_min_frames: 5,
        th6_min_extent: 0.5,
        ..Default::default()
    };
    let line = |id: u64, len: u32, step: f64| {
        let mk = |f: u32| {
            DetectedObject::new(
                f,
                0,
                BBox2D::new(f as f64 * step * 50.0, 0.0, 10.0, 20.0).unwrap(),
            )
            .with_world(WorldPoint3::new(f as f64 * step, 0.0, 0.0).unwrap())
        };
        let mut t = Trajectory::start(id, mk(0), &cfg);
        for f in 1..len {
            t.extend(mk(f), &SimilarityVector::new(), &cfg);
        }
        t
    };
    // (short, static) truth table
    let cases = [
        (1, 3, 0.5, false),
        (2, 100, 0.0, false),
        (3, 100, 0.05, true),
        (4, 3, 0.0, false),
    ];
    let trajs = cases
        .iter()
        .map(|&(id, len, step, _)| line(id, len, step))
        .collect();
    let (kept, removed) = filter_trajectories(trajs, &cfg);
    for &(id, _, _, keep) in &cases {
        let in_kept = kept.iter().any(|t| t.track_id() == id);
        let in_removed = removed.iter().any(|t| t.track_id() == id);
        assert_eq!((in_kept, in_removed), (keep, !keep), "trajectory {id}");
    }
    "short removed, static removed, long moving kept, short static removed".into()
}

fn c8_metric_arithmetic() -> String {
    let a = format!("{:.2}", m_bar(0.50, 1.00, 1.00));
    let b = format!("{:.2}", m_bar(0.79, 1.00, 1.00));
    assert_eq!((a.as_str(), b.as_str()), ("0.83", "0.93"));
    let cfg = TrackerConfig::default();
    let spec = ScenarioSpec {
        n_objects: 4,
        n_frames: 80,
        appearance: false,
        seed: 808,
        ..Default::default()
    };
    let scene = synth_generate(&spec, &cfg).unwrap();
    let as_tracks: Vec<_> = scene
        .ground_truth
        .iter()
        .map(|g| TrackRecord {
            track_id: g.gt_id + 100,
            frame: g.frame,
            bbox: g.bbox,
            world: g.world,
            interpolated: false,
        })
        .collect();
    let m = evaluate(
        &ground_truth_tracks(&scene.ground_truth).unwrap(),
        &output_tracks(&as_tracks).unwrap(),
        &cfg,
    )
    .unwrap();
    assert_eq!((m.m1, m.m2, m.m3, m.m_bar), (1.0, 1.0, 1.0, 1.0));
    assert_eq!((m.tp, m.fn_, m.fp), (4, 0, 0));
    format!("m_bar {a} and {b}; perfect output scores 1.0")
}

fn run_pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let cfg = TrackerConfig::default();
    let small = |seed| ScenarioSpec {
        n_objects: 3,
        n_frames: 120,
        miss_rate: 0.1,
        seed,
        ..Default::default()
    };
    let train = synth_generate(&small(11), &cfg).unwrap();
    let test = synth_generate(&small(12), &cfg).unwrap();
    write_scenario(&train, dir.join("train")).unwrap();
    write_scenario(&test, dir.join("test")).unwrap();
    let rep = learn_weights(
        &objects(&train.detections, &cfg),
        &ground_truth_tracks(&train.ground_truth).unwrap(),
        &cfg,
    )
    .unwrap();
    write_weights(&rep.weights, dir.join("weights.txt")).unwrap();
    std::fs::write(dir.join("report.txt"), rep.to_text()).unwrap();
    let trajs = track(&objects(&test.detections, &cfg), &rep.weights, &cfg).unwrap();
    write_trajectories(&trajs, dir.join("tracks.jsonl")).unwrap();
    let out: Vec<_> = trajs.iter().map(OutputTrack::from_trajectory).collect();
    let m = evaluate(
        &ground_truth_tracks(&test.ground_truth).unwrap(),
        &out,
        &cfg,
    )
    .unwrap();
    std::fs::write(dir.join("metrics.txt"), m.to_kv_string()).unwrap();
    [
        "train/detections.jsonl",
        "train/ground_truth.jsonl",
        "test/detections.jsonl",
        "test/ground_truth.jsonl",
        "weights.txt",
        "report.txt",
        "tracks.jsonl",
        "metrics.txt",
    ]
    .iter()
    .map(|f| (f.to_string(), std::fs::read(dir.join(f)).unwrap()))
    .collect()
}

fn c9_determinism() -> String {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (a, b) = (run_pipeline(d1.path()), run_pipeline(d2.path()));
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        assert!(!x.is_empty(), "{name} empty");
        assert!(x == y, "{name} differs between runs");
    }
    format!("{} output files byte-identical across two runs", a.len())
}

type Criterion = (&'static str, fn() -> String);

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "similarity bounds, symmetry, self-similarity",
            c1_similarity_bounds,
        ),
        (
            "Förstner distance oracle and scaling law",
            c2_forstner_oracle,
        ),
        ("pyramid half-keep rule", c3_pyramid_half_keep),
        ("AdaBoost feature selection", c4_adaboost),
        ("tracker bridges a detection gap", c5_gap_bridging),
        ("end-to-end synthetic tracking", c6_end_to_end),
        ("trajectory filter rules", c7_filter_rules),
        ("metric arithmetic", c8_metric_arithmetic),
        ("pipeline determinism", c9_determinism),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match catch_unwind(AssertUnwindSafe(f)) {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL {} {name}: {msg}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
