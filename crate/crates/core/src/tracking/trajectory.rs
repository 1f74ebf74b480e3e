use std::collections::VecDeque;

use crate::config::TrackerConfig;
use crate::model::{BBox2D, DetectedObject, FeatureId, FeatureWeights, ObjectKey, WorldPoint3};
use crate::similarity::SimilarityVector;

/// Features with a Gaussian long-term model. The rest reuse their link similarity.
pub const LONG_TERM_FEATURES: [FeatureId; 5] = [
    FeatureId::ShapeRatio,
    FeatureId::Area2D,
    FeatureId::ColorHist,
    FeatureId::ColorCov,
    FeatureId::DomColor,
];

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryNode {
    pub key: ObjectKey,
    pub bbox: BBox2D,
    pub world: Option<WorldPoint3>,
}

impl TrajectoryNode {
    pub fn frame(&self) -> u32 {
        self.key.frame
    }
}

/// One box per frame of a trajectory, gaps filled by interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedBox {
    pub frame: u32,
    pub bbox: BBox2D,
    pub world: Option<WorldPoint3>,
    pub interpolated: bool,
}

/// Bounded history of one feature's scalar values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureHistory {
    values: VecDeque<f64>,
}

impl FeatureHistory {
    pub fn push(&mut self, v: f64, cap: usize) {
        if self.values.len() == cap {
            self.values.pop_front();
        }
        self.values.push_back(v);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Mean and sample standard deviation.
    pub fn stats(&self) -> Option<(f64, f64)> {
        let n = self.values.len();
        if n < 2 {
            return None;
        }
        let mean = self.values.iter().sum::<f64>() / n as f64;
        let var = self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Some((mean, var.sqrt()))
    }
}

/// A chain of official links plus the running statistics the global score needs.
#[derive(Debug, Clone)]
pub struct Trajectory {
    track_id: u64,
    nodes: Vec<TrajectoryNode>,
    tail: DetectedObject,
    history: [FeatureHistory; 5],
    terminated: bool,
}

fn history_slot(k: FeatureId) -> Option<usize> {
    LONG_TERM_FEATURES.iter().position(|f| *f == k)
}

/// Raw per-object value for the geometric long-term features.
fn object_value(k: FeatureId, o: &DetectedObject) -> Option<f64> {
    match k {
        FeatureId::ShapeRatio => Some(o.bbox.aspect()),
        FeatureId::Area2D => Some(o.bbox.area()),
        _ => None,
    }
}

impl Trajectory {
    pub fn start(track_id: u64, first: DetectedObject, cfg: &TrackerConfig) -> Self {
        let mut t = Self {
            track_id,
            nodes: Vec::new(),
            tail: first.clone(),
            history: Default::default(),
            terminated: false,
        };
        t.append(first, None, cfg);
        t
    }

    /// Appends `o` as the new tail. `link` is the similarity vector of the
    /// official link from the previous tail, absent for the first node.
    pub fn extend(&mut self, o: DetectedObject, link: &SimilarityVector, cfg: &TrackerConfig) {
        self.append(o, Some(link), cfg);
    }

    fn append(&mut self, o: DetectedObject, link: Option<&SimilarityVector>, cfg: &TrackerConfig) {
        debug_assert!(self.nodes.last().is_none_or(|n| n.frame() < o.frame()));
        for (slot, k) in LONG_TERM_FEATURES.into_iter().enumerate() {
            let v = object_value(k, &o).or_else(|| link.and_then(|s| s.get(k)));
            if let Some(v) = v {
                self.history[slot].push(v, cfg.q_window);
            }
        }
        self.nodes.push(TrajectoryNode {
            key: o.key,
            bbox: o.bbox,
            world: o.world,
        });
        self.tail = o;
    }

    pub fn track_id(&self) -> u64 {
        self.track_id
    }

    pub fn nodes(&self) -> &[TrajectoryNode] {
        &self.nodes
    }

    pub fn tail(&self) -> &DetectedObject {
        &self.tail
    }

    pub fn first_frame(&self) -> u32 {
        self.nodes[0].frame()
    }

    pub fn last_frame(&self) -> u32 {
        self.nodes[self.nodes.len() - 1].frame()
    }

    /// `T`: frames spanned, inclusive.
    pub fn time_length(&self) -> u32 {
        self.last_frame() - self.first_frame() + 1
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn terminate(&mut self) {
        self.terminated = true;
    }

    pub fn history(&self, k: FeatureId) -> Option<&FeatureHistory> {
        history_slot(k).map(|s| &self.history[s])
    }

    /// Largest distance between any two positions: world points when every
    /// node has one, else box centers.
    pub fn spatial_extent(&self) -> (f64, bool) {
        let all_world = self.nodes.iter().all(|n| n.world.is_some());
        let mut best = 0.0f64;
        for (i, a) in self.nodes.iter().enumerate() {
            for b in &self.nodes[i + 1..] {
                let d = if all_world {
                    a.world.unwrap().distance(&b.world.unwrap())
                } else {
                    let (ca, cb) = (a.bbox.center(), b.bbox.center());
                    (ca[0] - cb[0]).hypot(ca[1] - cb[1])
                };
                best = best.max(d);
            }
        }
        (best, all_world)
    }

    /// Boxes for every frame from first to last, linearly interpolated
    /// across detection gaps.
    pub fn per_frame_boxes(&self) -> Vec<TrackedBox> {
        let mut out = Vec::with_capacity(self.time_length() as usize);
        for (i, n) in self.nodes.iter().enumerate() {
            if i > 0 {
                let prev = &self.nodes[i - 1];
                let span = (n.frame() - prev.frame()) as f64;
                for f in prev.frame() + 1..n.frame() {
                    let t = (f - prev.frame()) as f64 / span;
                    let world = match (prev.world, n.world) {
                        (Some(a), Some(b)) => Some(WorldPoint3 {
                            x: a.x + (b.x - a.x) * t,
                            y: a.y + (b.y - a.y) * t,
                            z: a.z + (b.z - a.z) * t,
                        }),
                        _ => None,
                    };
                    out.push(TrackedBox {
                        frame: f,
                        bbox: prev.bbox.lerp(&n.bbox, t),
                        world,
                        interpolated: true,
                    });
                }
            }
            out.push(TrackedBox {
                frame: n.frame(),
                bbox: n.bbox,
                world: n.world,
                interpolated: false,
            });
        }
        out
    }
}

/// Long-term similarity of `o_l` to the trajectory for feature `k`.
///
/// `link` is the link similarity of `k` between `o_l` and the trajectory's
/// tail. For the Gaussian features the score is the consistency of the
/// feature's current scalar with the trajectory's recent history, scaled by
/// `min(T/Q, 1)`. Displacement and HOG features, and trajectories with fewer
/// than two recorded values, return `link` unchanged.
pub fn long_term_similarity(
    o_l: &DetectedObject,
    traj: &Trajectory,
    k: FeatureId,
    link: f64,
    cfg: &TrackerConfig,
) -> f64 {
    let Some(slot) = history_slot(k) else {
        return link;
    };
    let Some((mean, sd)) = traj.history[slot].stats() else {
        return link;
    };
    let s_l = object_value(k, o_l).unwrap_or(link);
    let length_factor = (traj.time_length() as f64 / cfg.q_window as f64).min(1.0);
    cfg.gaussian_mode.score(s_l, mean, sd.max(cfg.sigma_floor)) * length_factor
}

/// Long-term blend weight `min(T/Q, Th_4)`.
pub fn beta(traj: &Trajectory, cfg: &TrackerConfig) -> f64 {
    (traj.time_length() as f64 / cfg.q_window as f64).min(cfg.th4_beta_cap)
}

/// Weighted blend of link and long-term similarity over the features that
/// are weighted and available on the link.
pub fn global_score(
    o_l: &DetectedObject,
    traj: &Trajectory,
    link: &SimilarityVector,
    weights: &FeatureWeights,
    cfg: &TrackerConfig,
) -> Option<f64> {
    let b = beta(traj, cfg);
    let mut num = 0.0;
    let mut den = 0.0;
    for k in weights.active() {
        let Some(ls) = link.get(k) else { continue };
        let lt = long_term_similarity(o_l, traj, k, ls, cfg);
        let w = weights.get(k);
        num += w * ((1.0 - b) * ls + b * lt);
        den += w;
    }
    (den > 0.0).then(|| num / den)
}

/// Splits trajectories into kept and removed (too short in time or in space).
pub fn filter_trajectories(
    trajs: Vec<Trajectory>,
    cfg: &TrackerConfig,
) -> (Vec<Trajectory>, Vec<Trajectory>) {
    trajs.into_iter().partition(|t| {
        let (extent, world) = t.spatial_extent();
        let min_extent = if world {
            cfg.th6_min_extent
        } else {
            cfg.th6_min_extent_px
        };
        !(t.time_length() < cfg.th5_min_frames || extent < min_extent)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(frame: u32, x: f64, w: f64, h: f64) -> DetectedObject {
        DetectedObject::new(frame, 0, BBox2D::new(x, 0.0, w, h).unwrap())
    }

    fn cfg() -> TrackerConfig {
        TrackerConfig {
            q_window: 20,
            th4_beta_cap: 0.5,
            ..Default::default()
        }
    }

    /// Trajectory of `len` frames with areas alternating 90/110 (mean 100).
    fn area_track(len: u32) -> Trajectory {
        let c = cfg();
        let mut t = Trajectory::start(1, at(0, 0.0, 9.0, 10.0), &c);
        for f in 1..len {
            let w = if f % 2 == 0 { 9.0 } else { 11.0 };
            t.extend(at(f, f as f64, w, 10.0), &SimilarityVector::new(), &c);
        }
        t
    }

    #[test]
    fn long_term_at_mean() {
        let c = cfg();
        let t = area_track(20);
        let (mean, _) = t.history(FeatureId::Area2D).unwrap().stats().unwrap();
        assert!((mean - 100.0).abs() < 1e-12);
        let o = at(20, 0.0, 10.0, 10.0);
        assert!((long_term_similarity(&o, &t, FeatureId::Area2D, 0.3, &c) - 1.0).abs() < 1e-12);
        let half = area_track(10);
        assert!((long_term_similarity(&o, &half, FeatureId::Area2D, 0.3, &c) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn long_term_one_sigma() {
        let c = cfg();
        let t = area_track(20);
        let (mean, sd) = t.history(FeatureId::Area2D).unwrap().stats().unwrap();
        let o = at(20, 0.0, (mean + sd) / 10.0, 10.0);
        let v = long_term_similarity(&o, &t, FeatureId::Area2D, 0.3, &c);
        assert!((v - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn long_term_passthrough() {
        let c = cfg();
        let t = area_track(20);
        let o = at(20, 0.0, 10.0, 10.0);
        for k in [FeatureId::Disp3D, FeatureId::Disp2D, FeatureId::Hog] {
            assert_eq!(long_term_similarity(&o, &t, k, 0.37, &c), 0.37);
        }
        // one recorded value: no statistics yet
        let fresh = Trajectory::start(2, at(0, 0.0, 5.0, 5.0), &c);
        assert_eq!(
            long_term_similarity(&o, &fresh, FeatureId::Area2D, 0.42, &c),
            0.42
        );
        // similarity features have no entries until a link is recorded
        assert_eq!(
            long_term_similarity(&o, &t, FeatureId::ColorHist, 0.8, &c),
            0.8
        );
    }

    #[test]
    fn similarity_history_from_links() {
        let c = cfg();
        let mut t = Trajectory::start(1, at(0, 0.0, 5.0, 5.0), &c);
        for (f, v) in [(1, 0.8), (2, 0.9), (3, 0.7)] {
            let mut s = SimilarityVector::new();
            s.set(FeatureId::ColorHist, Some(v));
            t.extend(at(f, 0.0, 5.0, 5.0), &s, &c);
        }
        let h = t.history(FeatureId::ColorHist).unwrap();
        assert_eq!(h.len(), 3);
        let (m, _) = h.stats().unwrap();
        assert!((m - 0.8).abs() < 1e-12);
    }

    #[test]
    fn ring_buffer_caps_at_q() {
        let c = TrackerConfig {
            q_window: 4,
            ..cfg()
        };
        let mut t = Trajectory::start(1, at(0, 0.0, 5.0, 5.0), &c);
        for f in 1..10 {
            t.extend(at(f, 0.0, 5.0, 5.0), &SimilarityVector::new(), &c);
        }
        assert_eq!(t.history(FeatureId::ShapeRatio).unwrap().len(), 4);
    }

    #[test]
    fn beta_examples() {
        let c = cfg();
        let t = Trajectory::start(1, at(0, 0.0, 5.0, 5.0), &c);
        assert!((beta(&t, &c) - 0.05).abs() < 1e-15);
        assert_eq!(beta(&area_track(10), &c), 0.5);
        assert_eq!(beta(&area_track(15), &c), 0.5);
    }

    #[test]
    fn global_score_examples() {
        let c = cfg();
        let t = Trajectory::start(1, at(0, 0.0, 5.0, 5.0), &c);
        let o = at(1, 1.0, 5.0, 5.0);
        let mut s = SimilarityVector::new();
        s.set(FeatureId::Disp2D, Some(0.6));
        s.set(FeatureId::Hog, Some(0.2));
        let w =
            FeatureWeights::from_pairs(&[(FeatureId::Disp2D, 1.0), (FeatureId::Hog, 1.0)]).unwrap();
        // LT equals LS for these features, so GS = LS for any beta
        assert!((global_score(&o, &t, &s, &w, &c).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(
            global_score(&o, &t, &s, &FeatureWeights::single(FeatureId::Area2D), &c),
            None
        );
    }

    #[test]
    fn new_trajectory_barely_weighs_long_term() {
        let c = cfg();
        let mut t = Trajectory::start(1, at(0, 0.0, 10.0, 10.0), &c);
        t.extend(at(1, 0.0, 10.0, 20.0), &SimilarityVector::new(), &c);
        let o = at(2, 0.0, 10.0, 40.0);
        let mut s = SimilarityVector::new();
        s.set(FeatureId::Area2D, Some(0.5));
        let gs = global_score(&o, &t, &s, &FeatureWeights::single(FeatureId::Area2D), &c).unwrap();
        let b = 2.0 / 20.0;
        let lt = long_term_similarity(&o, &t, FeatureId::Area2D, 0.5, &c);
        assert!((gs - ((1.0 - b) * 0.5 + b * lt)).abs() < 1e-12);
        assert!((gs - 0.5).abs() <= b * 0.5 + 1e-12);
    }

    fn line(len: u32, step: f64, with_world: bool) -> Trajectory {
        let c = cfg();
        let mk = |f: u32| {
            let o = at(f, f as f64 * step, 10.0, 10.0);
            if with_world {
                o.with_world(WorldPoint3::new(f as f64 * step / 20.0, 0.0, 0.0).unwrap())
            } else {
                o
            }
        };
        let mut t = Trajectory::start(f64::to_bits(step) ^ len as u64, mk(0), &c);
        for f in 1..len {
            t.extend(mk(f), &SimilarityVector::new(), &c);
        }
        t
    }

    #[test]
    fn filter_truth_table() {
        let c = TrackerConfig {
            th5_min_frames: 5,
            th6_min_extent: 0.5,
            th6_min_extent_px: 15.0,
            ..cfg()
        };
        let short = line(3, 10.0, true);
        let still = line(100, 0.0, true);
        let moving = line(100, 2.0, true);
        let short_still = line(3, 0.0, false);
        let (kept, removed) = filter_trajectories(vec![short, still, moving, short_still], &c);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].time_length(), 100);
        assert!(kept[0].spatial_extent().0 > 0.5);
        assert_eq!(removed.len(), 3);
        // 2D fallback uses the pixel threshold
        let (kept, _) = filter_trajectories(vec![line(10, 2.0, false)], &c);
        assert_eq!(kept.len(), 1);
        let (kept, _) = filter_trajectories(vec![line(10, 1.0, false)], &c);
        assert!(kept.is_empty());
    }

    #[test]
    fn per_frame_boxes_interpolate_gaps() {
        let c = cfg();
        let mut t = Trajectory::start(1, at(0, 0.0, 10.0, 10.0), &c);
        t.extend(at(4, 8.0, 10.0, 10.0), &SimilarityVector::new(), &c);
        let boxes = t.per_frame_boxes();
        assert_eq!(boxes.len(), 5);
        assert_eq!(boxes.iter().filter(|b| b.interpolated).count(), 3);
        assert_eq!(boxes[2].bbox.x(), 4.0);
        assert_eq!(t.time_length(), 5);
    }
}
