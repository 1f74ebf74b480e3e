//! Online tracker: link graph over a temporal window, trajectory
//! determination by global score, and noise filtering.

mod graph;
mod trajectory;

use std::collections::BTreeMap;

pub use graph::{LinkEdge, LinkGraph};
pub use trajectory::{
    beta, filter_trajectories, global_score, long_term_similarity, FeatureHistory, TrackedBox,
    Trajectory, TrajectoryNode, LONG_TERM_FEATURES,
};

use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::model::{DetectedObject, FeatureId, FeatureWeights, ObjectKey};
use crate::point_tracking::PointTrackStore;
use crate::similarity::{HogSimilarity, NoPointTracks};

/// Candidate official link: detection `later` continuing trajectory `traj`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub later: ObjectKey,
    pub traj: usize,
    /// Key of the trajectory's tail, used to break ties.
    pub tail: ObjectKey,
    pub score: f64,
}

/// Global greedy assignment: highest score first, ties by (detection, tail)
/// key; each detection and trajectory is used at most once.
pub fn greedy_assign(mut cands: Vec<Candidate>) -> Vec<Candidate> {
    cands.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.later.cmp(&b.later))
            .then(a.tail.cmp(&b.tail))
    });
    let mut used_obj = std::collections::BTreeSet::new();
    let mut used_traj = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for c in cands {
        if used_obj.contains(&c.later) || used_traj.contains(&c.traj) {
            continue;
        }
        used_obj.insert(c.later);
        used_traj.insert(c.traj);
        out.push(c);
    }
    out
}

/// Frame-by-frame tracker state.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    weights: FeatureWeights,
    graph: LinkGraph,
    points: Option<PointTrackStore>,
    live: Vec<Trajectory>,
    finished: Vec<Trajectory>,
    next_id: u64,
    last_frame: Option<u32>,
}

impl Tracker {
    pub fn new(weights: FeatureWeights, cfg: TrackerConfig) -> Self {
        // point trajectories only matter when the HOG feature is weighted
        let points = (weights.get(FeatureId::Hog) > 0.0).then(|| PointTrackStore::new(&cfg));
        Self {
            cfg,
            weights,
            graph: LinkGraph::new(),
            points,
            live: Vec::new(),
            finished: Vec::new(),
            next_id: 1,
            last_frame: None,
        }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn live(&self) -> &[Trajectory] {
        &self.live
    }

    pub fn graph(&self) -> &LinkGraph {
        &self.graph
    }

    /// Advances the tracker by one frame. Frames must strictly increase;
    /// a frame with no detections still ages the live trajectories.
    pub fn process_frame(&mut self, frame: u32, detections: &[DetectedObject]) -> Result<()> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(Error::StreamOrder { last, got: frame });
            }
        }
        if let Some(o) = detections.iter().find(|o| o.frame() != frame) {
            return Err(Error::StreamOrder {
                last: frame,
                got: o.frame(),
            });
        }
        self.last_frame = Some(frame);

        if let Some(store) = self.points.as_mut() {
            store.update(frame, detections)?;
        }
        let hog: &dyn HogSimilarity = match &self.points {
            Some(s) => s,
            None => &NoPointTracks,
        };
        let edges = self
            .graph
            .build_links(detections, &self.weights, &self.cfg, hog)?;
        self.determine_trajectories(frame, detections, &edges)
    }

    fn determine_trajectories(
        &mut self,
        frame: u32,
        detections: &[DetectedObject],
        edges: &[LinkEdge],
    ) -> Result<()> {
        let tails: BTreeMap<ObjectKey, usize> = self
            .live
            .iter()
            .enumerate()
            .map(|(i, t)| (t.tail().key, i))
            .collect();
        let by_key: BTreeMap<ObjectKey, &DetectedObject> =
            detections.iter().map(|o| (o.key, o)).collect();

        let mut cands = Vec::new();
        for e in edges {
            let Some(&ti) = tails.get(&e.earlier) else {
                continue;
            };
            let o_l = by_key[&e.later];
            if let Some(score) =
                global_score(o_l, &self.live[ti], &e.features, &self.weights, &self.cfg)
            {
                cands.push(Candidate {
                    later: e.later,
                    traj: ti,
                    tail: e.earlier,
                    score,
                });
            }
        }
        let chosen = greedy_assign(cands);

        let mut claimed = std::collections::BTreeSet::new();
        for c in &chosen {
            let edge = edges
                .iter()
                .find(|e| e.later == c.later && e.earlier == c.tail)
                .expect("candidate comes from an edge");
            self.live[c.traj].extend(by_key[&c.later].clone(), &edge.features, &self.cfg);
            claimed.insert(c.later);
        }
        for o in detections {
            if !claimed.contains(&o.key) {
                self.live
                    .push(Trajectory::start(self.next_id, o.clone(), &self.cfg));
                self.next_id += 1;
            }
        }

        let window = self.cfg.t2_window;
        let (done, live): (Vec<_>, Vec<_>) = std::mem::take(&mut self.live)
            .into_iter()
            .partition(|t| frame - t.last_frame() >= window);
        self.live = live;
        for mut t in done {
            t.terminate();
            self.finished.push(t);
        }
        Ok(())
    }

    /// Terminates every live trajectory and applies the noise filter.
    /// Returns (kept, removed), each ordered by track id.
    pub fn finish(mut self) -> (Vec<Trajectory>, Vec<Trajectory>) {
        for mut t in std::mem::take(&mut self.live) {
            t.terminate();
            self.finished.push(t);
        }
        self.finished.sort_by_key(Trajectory::track_id);
        filter_trajectories(self.finished, &self.cfg)
    }
}

/// Groups a frame-ordered detection list into (frame, detections) runs.
pub fn group_by_frame(detections: &[DetectedObject]) -> Result<Vec<(u32, &[DetectedObject])>> {
    let mut out: Vec<(u32, &[DetectedObject])> = Vec::new();
    let mut start = 0;
    for i in 1..=detections.len() {
        if i == detections.len() || detections[i].frame() != detections[start].frame() {
            let f = detections[start].frame();
            if let Some((last, _)) = out.last() {
                if f <= *last {
                    return Err(Error::StreamOrder {
                        last: *last,
                        got: f,
                    });
                }
            }
            out.push((f, &detections[start..i]));
            start = i;
        }
    }
    Ok(out)
}

/// Runs the tracker over a frame-ordered detection list and returns the
/// trajectories that survive filtering.
pub fn track(
    detections: &[DetectedObject],
    weights: &FeatureWeights,
    cfg: &TrackerConfig,
) -> Result<Vec<Trajectory>> {
    let mut tracker = Tracker::new(*weights, cfg.clone());
    let frames = group_by_frame(detections)?;
    let (Some(first), Some(last)) = (frames.first().map(|f| f.0), frames.last().map(|f| f.0))
    else {
        return Ok(Vec::new());
    };
    let mut it = frames.into_iter().peekable();
    for f in first..=last {
        let dets = match it.peek() {
            Some((g, d)) if *g == f => {
                let d = *d;
                it.next();
                d
            }
            _ => &[],
        };
        tracker.process_frame(f, dets)?;
    }
    Ok(tracker.finish().0)
}
