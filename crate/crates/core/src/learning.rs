//! Offline AdaBoost over labeled object pairs, producing per-feature weights.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::evaluation::{match_frame, GroundTruthTrack};
use crate::model::{BBox2D, DetectedObject, FeatureId, FeatureWeights, ObjectKey};
use crate::point_tracking::PointTrackStore;
use crate::similarity::{similarity_vector, SimilarityVector};

/// Lower cap on the weighted error so that the classifier weight stays finite.
pub const EPS_MIN: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Same,
    Different,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Same => 1.0,
            Label::Different => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub sim: SimilarityVector,
    pub label: Label,
}

/// Builds all cross pairs between consecutive non-empty frames. Frames are
/// given in increasing order; `identity` maps detections to a ground-truth
/// track (unmapped detections never form a positive pair).
pub fn label_pairs(
    frames: &[Vec<DetectedObject>],
    identity: &BTreeMap<ObjectKey, u64>,
    cfg: &TrackerConfig,
) -> Result<Vec<TrainingPair>> {
    let mut store = PointTrackStore::new(cfg);
    let mut out = Vec::new();
    let mut prev: Option<&Vec<DetectedObject>> = None;
    for frame in frames.iter().filter(|f| !f.is_empty()) {
        let t = frame[0].frame();
        store.update(t, frame)?;
        if let Some(prev) = prev {
            for a in prev {
                for b in frame {
                    let same = match (identity.get(&a.key), identity.get(&b.key)) {
                        (Some(x), Some(y)) => x == y,
                        _ => false,
                    };
                    let sim = similarity_vector(a, b, FeatureId::ALL, cfg, &store)?;
                    out.push(TrainingPair {
                        sim,
                        label: if same { Label::Same } else { Label::Different },
                    });
                }
            }
        }
        prev = Some(frame);
    }
    Ok(out)
}

/// Gives each detection the id of the ground-truth box it overlaps best in
/// its frame (IoU at least `iou_threshold`, one-to-one per frame).
pub fn assign_identities(
    objects: &[DetectedObject],
    gt: &[GroundTruthTrack],
    iou_threshold: f64,
) -> BTreeMap<ObjectKey, u64> {
    let mut gt_by_frame: BTreeMap<u32, Vec<(u64, BBox2D)>> = BTreeMap::new();
    for g in gt {
        for b in &g.boxes {
            gt_by_frame
                .entry(b.frame)
                .or_default()
                .push((g.gt_id, b.bbox));
        }
    }
    let mut obj_by_frame: BTreeMap<u32, Vec<&DetectedObject>> = BTreeMap::new();
    for o in objects {
        obj_by_frame.entry(o.frame()).or_default().push(o);
    }
    let mut out = BTreeMap::new();
    for (f, objs) in obj_by_frame {
        let Some(gts) = gt_by_frame.get(&f) else {
            continue;
        };
        let gb: Vec<BBox2D> = gts.iter().map(|g| g.1).collect();
        let ob: Vec<BBox2D> = objs.iter().map(|o| o.bbox).collect();
        for (i, j) in match_frame(&gb, &ob, iou_threshold) {
            out.insert(objs[j].key, gts[i].0);
        }
    }
    out
}

/// Labels consecutive-frame pairs from ground truth and boosts on them.
pub fn learn_weights(
    objects: &[DetectedObject],
    gt: &[GroundTruthTrack],
    cfg: &TrackerConfig,
) -> Result<TrainingReport> {
    let identity = assign_identities(objects, gt, cfg.iou_threshold);
    let mut frames: BTreeMap<u32, Vec<DetectedObject>> = BTreeMap::new();
    for o in objects {
        frames.entry(o.frame()).or_default().push(o.clone());
    }
    let frames: Vec<_> = frames.into_values().collect();
    run_adaboost(&label_pairs(&frames, &identity, cfg)?, cfg)
}

/// Threshold weak classifier; an unavailable feature votes "different".
pub fn weak_classify(k: FeatureId, pair: &TrainingPair, th1: f64) -> Label {
    match pair.sim.get(k) {
        Some(v) if v >= th1 => Label::Same,
        _ => Label::Different,
    }
}

/// Weighted misclassification mass of feature `k`'s weak classifier.
pub fn weighted_loss(k: FeatureId, pairs: &[TrainingPair], d: &[f64], th1: f64) -> f64 {
    pairs
        .iter()
        .zip(d)
        .filter(|(p, _)| weak_classify(k, p, th1) != p.label)
        .map(|(_, w)| w)
        .sum()
}

/// Classifier weight `0.5 ln((1 - eps) / eps)`, with `eps` floored at [`EPS_MIN`].
pub fn alpha(eps: f64) -> f64 {
    let eps = eps.max(EPS_MIN);
    0.5 * ((1.0 - eps) / eps).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostState {
    pub sample_weights: Vec<f64>,
    pub round: usize,
    pub chosen: Vec<(FeatureId, f64)>,
}

impl BoostState {
    /// Uniform `1/N` initialization.
    pub fn new(n: usize) -> Self {
        Self {
            sample_weights: vec![1.0 / n as f64; n],
            round: 0,
            chosen: Vec::new(),
        }
    }
}

/// Reweights samples after choosing `h` with weight `alpha_z`; returns the
/// normalization factor.
pub fn update_sample_weights(
    state: &mut BoostState,
    h: FeatureId,
    alpha_z: f64,
    pairs: &[TrainingPair],
    th1: f64,
) -> f64 {
    for (d, p) in state.sample_weights.iter_mut().zip(pairs) {
        let margin = p.label.sign() * weak_classify(h, p, th1).sign();
        *d *= (-alpha_z * margin).exp();
    }
    let norm: f64 = state.sample_weights.iter().sum();
    state.sample_weights.iter_mut().for_each(|d| *d /= norm);
    state.round += 1;
    state.chosen.push((h, alpha_z));
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub feature: FeatureId,
    pub eps: f64,
    pub alpha: f64,
    pub weight_sum: f64,
    /// Unweighted training error of the strong classifier after this round.
    pub training_error: f64,
    /// Product of normalization factors so far: an upper bound on the
    /// training error that never increases.
    pub loss_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxRounds,
    NoEdge,
    ZeroTrainingError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub rounds: Vec<RoundRecord>,
    pub stop: StopReason,
    /// Best weighted error of the first round.
    pub first_round_eps: f64,
    /// No weak classifier beat chance: weights fall back to uniform.
    pub non_separable: bool,
    pub weights: FeatureWeights,
}

impl TrainingReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.rounds {
            let _ = writeln!(
                s,
                "round {} feature {} eps {:.6} alpha {:.6} train_error {:.6}",
                r.round, r.feature, r.eps, r.alpha, r.training_error
            );
        }
        let stop = match self.stop {
            StopReason::MaxRounds => "max_rounds",
            StopReason::NoEdge => "no_edge",
            StopReason::ZeroTrainingError => "zero_training_error",
        };
        let _ = writeln!(s, "stop {stop}");
        let _ = writeln!(s, "non_separable {}", self.non_separable);
        for k in FeatureId::ALL {
            let _ = writeln!(s, "weight {} {:.6}", k, self.weights.get(k));
        }
        s
    }
}

fn strong_error(pairs: &[TrainingPair], chosen: &[(FeatureId, f64)], th1: f64) -> f64 {
    let wrong = pairs
        .iter()
        .filter(|p| {
            let score: f64 = chosen
                .iter()
                .map(|(k, a)| a * weak_classify(*k, p, th1).sign())
                .sum();
            let predicted = if score > 0.0 {
                Label::Same
            } else {
                Label::Different
            };
            predicted != p.label
        })
        .count();
    wrong as f64 / pairs.len() as f64
}

/// Runs boosting and maps the result to feature weights: each feature's
/// weight is the sum of the classifier weights of the rounds that chose it,
/// normalized to sum to one.
///
/// Stops at `cfg.max_rounds`, at zero training error, or when the best weak
/// classifier no longer beats chance: `eps >= 0.5`, or its edge `0.5 - eps`
/// is below `cfg.edge_significance` standard errors of a chance classifier
/// under the current sample weights.
pub fn run_adaboost(pairs: &[TrainingPair], cfg: &TrackerConfig) -> Result<TrainingReport> {
    if pairs.is_empty() {
        return Err(Error::DegenerateTraining("no training pairs".into()));
    }
    let positives = pairs.iter().filter(|p| p.label == Label::Same).count();
    if positives == 0 || positives == pairs.len() {
        return Err(Error::DegenerateTraining(
            "training pairs carry a single label".into(),
        ));
    }
    let th1 = cfg.th1_link;
    let mut state = BoostState::new(pairs.len());
    let mut rounds = Vec::new();
    let mut bound = 1.0;
    let mut first_round_eps = None;
    let mut stop = StopReason::MaxRounds;

    while state.round < cfg.max_rounds {
        let d = &state.sample_weights;
        let (best, eps) = FeatureId::ALL
            .into_iter()
            .map(|k| (k, weighted_loss(k, pairs, d, th1)))
            .fold(None, |acc: Option<(FeatureId, f64)>, (k, e)| match acc {
                Some((_, be)) if be <= e => acc,
                _ => Some((k, e)),
            })
            .unwrap();
        first_round_eps.get_or_insert(eps);
        let stderr = 0.5 * d.iter().map(|w| w * w).sum::<f64>().sqrt();
        if eps >= 0.5 || 0.5 - eps < cfg.edge_significance * stderr {
            stop = StopReason::NoEdge;
            break;
        }
        let a = alpha(eps);
        let norm = update_sample_weights(&mut state, best, a, pairs, th1);
        bound *= norm;
        let training_error = strong_error(pairs, &state.chosen, th1);
        rounds.push(RoundRecord {
            round: state.round,
            feature: best,
            eps,
            alpha: a,
            weight_sum: state.sample_weights.iter().sum(),
            training_error,
            loss_bound: bound,
        });
        if training_error == 0.0 {
            stop = StopReason::ZeroTrainingError;
            break;
        }
    }

    let mut w = [0.0; 8];
    for (k, a) in &state.chosen {
        w[k.index()] += a;
    }
    let total: f64 = w.iter().sum();
    let non_separable = state.chosen.is_empty();
    let weights = if non_separable {
        FeatureWeights::uniform()
    } else {
        FeatureWeights::new(w.map(|v| v / total))?
    };
    Ok(TrainingReport {
        rounds,
        stop,
        first_round_eps: first_round_eps.unwrap_or(0.5),
        non_separable,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BBox2D;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair(values: [Option<f64>; 8], label: Label) -> TrainingPair {
        TrainingPair {
            sim: SimilarityVector::from_options(values),
            label,
        }
    }

    fn one(k: FeatureId, v: f64, label: Label) -> TrainingPair {
        let mut vals = [None; 8];
        vals[k.index()] = Some(v);
        pair(vals, label)
    }

    #[test]
    fn weak_classifier_rules() {
        let p = one(FeatureId::Hog, 0.5, Label::Same);
        assert_eq!(weak_classify(FeatureId::Hog, &p, 0.5), Label::Same);
        let p = one(FeatureId::Hog, 0.0, Label::Same);
        assert_eq!(weak_classify(FeatureId::Hog, &p, 0.5), Label::Different);
        assert_eq!(weak_classify(FeatureId::Area2D, &p, 0.5), Label::Different);
    }

    #[test]
    fn loss_examples() {
        let k = FeatureId::Area2D;
        let pairs = vec![
            one(k, 0.9, Label::Same),
            one(k, 0.1, Label::Different),
            one(k, 0.9, Label::Different),
            one(k, 0.8, Label::Same),
        ];
        let d = vec![0.25; 4];
        assert_eq!(weighted_loss(k, &pairs, &d, 0.5), 0.25);
        assert_eq!(weighted_loss(k, &pairs[..2], &[0.5, 0.5], 0.5), 0.0);
        let flipped: Vec<_> = pairs[..2]
            .iter()
            .map(|p| TrainingPair {
                label: if p.label == Label::Same {
                    Label::Different
                } else {
                    Label::Same
                },
                ..p.clone()
            })
            .collect();
        assert_eq!(weighted_loss(k, &flipped, &[0.5, 0.5], 0.5), 1.0);
    }

    #[test]
    fn alpha_examples() {
        assert!((alpha(0.2) - 0.5 * 4f64.ln()).abs() < 1e-12);
        assert!((alpha(0.2) - std::f64::consts::LN_2).abs() < 1e-12);
        let e2 = std::f64::consts::E.powi(2);
        assert!((alpha(1.0 / (1.0 + e2)) - 1.0).abs() < 1e-12);
        assert!(alpha(0.5 - 1e-9) > 0.0 && alpha(0.5 - 1e-9) < 1e-8);
        assert!(alpha(0.0).is_finite());
        assert_eq!(alpha(0.0), alpha(EPS_MIN));
    }

    #[test]
    fn sample_weight_updates() {
        assert_eq!(BoostState::new(4).sample_weights, vec![0.25; 4]);
        let k = FeatureId::Area2D;
        let pairs = vec![one(k, 0.9, Label::Different), one(k, 0.9, Label::Same)];
        let mut s = BoostState::new(2);
        update_sample_weights(&mut s, k, 0.5 * 4f64.ln(), &pairs, 0.5);
        assert!((s.sample_weights[0] - 0.8).abs() < 1e-12);
        assert!((s.sample_weights[1] - 0.2).abs() < 1e-12);

        let pairs = vec![
            one(k, 0.9, Label::Same),
            one(k, 0.1, Label::Different),
            one(k, 0.7, Label::Same),
        ];
        let mut s = BoostState::new(3);
        s.sample_weights = vec![0.5, 0.3, 0.2];
        update_sample_weights(&mut s, k, 0.7, &pairs, 0.5);
        for (a, b) in s.sample_weights.iter().zip([0.5, 0.3, 0.2]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_feature_wins_in_one_round() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs: Vec<_> = (0..200)
            .map(|i| {
                let label = if i % 2 == 0 {
                    Label::Same
                } else {
                    Label::Different
                };
                let mut vals = [None; 8];
                for v in vals.iter_mut() {
                    *v = Some(rng.random::<f64>());
                }
                vals[FeatureId::Hog.index()] = Some(if label == Label::Same { 0.9 } else { 0.1 });
                pair(vals, label)
            })
            .collect();
        let r = run_adaboost(&pairs, &TrackerConfig::default()).unwrap();
        assert_eq!(r.weights, FeatureWeights::single(FeatureId::Hog));
        assert_eq!(r.rounds.len(), 1);
        assert_eq!(r.stop, StopReason::ZeroTrainingError);
    }

    #[test]
    fn single_label_is_degenerate() {
        let pairs = vec![one(FeatureId::Hog, 0.9, Label::Same); 3];
        assert!(matches!(
            run_adaboost(&pairs, &TrackerConfig::default()),
            Err(Error::DegenerateTraining(_))
        ));
        assert!(run_adaboost(&[], &TrackerConfig::default()).is_err());
    }

    #[test]
    fn random_features_are_non_separable() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pairs: Vec<_> = (0..4000)
            .map(|_| {
                let label = if rng.random_bool(0.5) {
                    Label::Same
                } else {
                    Label::Different
                };
                let mut vals = [None; 8];
                for v in vals.iter_mut() {
                    *v = Some(rng.random::<f64>());
                }
                pair(vals, label)
            })
            .collect();
        let r = run_adaboost(&pairs, &TrackerConfig::default()).unwrap();
        assert!(r.non_separable);
        assert_eq!(r.stop, StopReason::NoEdge);
        assert!((r.first_round_eps - 0.5).abs() <= 0.05);
        assert_eq!(r.weights, FeatureWeights::uniform());
    }

    #[test]
    fn deterministic_and_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pairs: Vec<_> = (0..500)
            .map(|_| {
                let label = if rng.random_bool(0.4) {
                    Label::Same
                } else {
                    Label::Different
                };
                let mut vals = [None; 8];
                for (i, v) in vals.iter_mut().enumerate() {
                    let signal = if label == Label::Same {
                        0.15 * i as f64 / 8.0
                    } else {
                        0.0
                    };
                    *v = Some((rng.random::<f64>() * 0.8 + signal).min(1.0));
                }
                pair(vals, label)
            })
            .collect();
        let cfg = TrackerConfig::default();
        let a = run_adaboost(&pairs, &cfg).unwrap();
        let b = run_adaboost(&pairs, &cfg).unwrap();
        assert_eq!(a, b);
        assert!((a.weights.total() - 1.0).abs() < 1e-12);
        for r in &a.rounds {
            assert!((r.weight_sum - 1.0).abs() < 1e-9);
            assert!(r.alpha > 0.0);
        }
        for w in a.rounds.windows(2) {
            assert!(w[1].loss_bound <= w[0].loss_bound + 1e-15);
        }
    }

    #[test]
    fn labels_consecutive_frame_pairs() {
        let cfg = TrackerConfig::default();
        let bb = |x: f64| BBox2D::new(x, 0.0, 10.0, 20.0).unwrap();
        let frames = vec![
            vec![
                DetectedObject::new(0, 0, bb(0.0)),
                DetectedObject::new(0, 1, bb(100.0)),
            ],
            vec![
                DetectedObject::new(1, 0, bb(1.0)),
                DetectedObject::new(1, 1, bb(101.0)),
            ],
        ];
        let mut ids = BTreeMap::new();
        for f in &frames {
            for (i, o) in f.iter().enumerate() {
                ids.insert(o.key, i as u64);
            }
        }
        let pairs = label_pairs(&frames, &ids, &cfg).unwrap();
        assert_eq!(pairs.len(), 4);
        assert_eq!(pairs.iter().filter(|p| p.label == Label::Same).count(), 2);
        assert_eq!(pairs[0].sim.get(FeatureId::Area2D), Some(1.0));

        let single = vec![
            vec![DetectedObject::new(0, 0, bb(0.0))],
            vec![],
            vec![DetectedObject::new(2, 0, bb(1.0))],
        ];
        let mut ids = BTreeMap::new();
        ids.insert(ObjectKey { frame: 0, index: 0 }, 7);
        ids.insert(ObjectKey { frame: 2, index: 0 }, 7);
        let pairs = label_pairs(&single, &ids, &cfg).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].label, Label::Same);

        assert!(label_pairs(&[], &BTreeMap::new(), &cfg).unwrap().is_empty());
    }
}
