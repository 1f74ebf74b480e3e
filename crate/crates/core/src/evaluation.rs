//! Trajectory-level tracking metrics against ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::model::{bbox_iou, BBox2D, WorldPoint3};
use crate::tracking::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameBox {
    pub frame: u32,
    pub bbox: BBox2D,
    pub world: Option<WorldPoint3>,
}

fn check_increasing(boxes: &[FrameBox], what: &str, id: u64) -> Result<()> {
    if boxes.windows(2).any(|w| w[0].frame >= w[1].frame) {
        return Err(Error::InvalidTrack(format!(
            "{what} {id} has non-increasing frames"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTrack {
    pub gt_id: u64,
    pub boxes: Vec<FrameBox>,
}

impl GroundTruthTrack {
    pub fn new(gt_id: u64, boxes: Vec<FrameBox>) -> Result<Self> {
        check_increasing(&boxes, "ground-truth track", gt_id)?;
        Ok(Self { gt_id, boxes })
    }
}

/// A tracker output track as one box per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputTrack {
    pub track_id: u64,
    pub boxes: Vec<FrameBox>,
}

impl OutputTrack {
    pub fn new(track_id: u64, boxes: Vec<FrameBox>) -> Result<Self> {
        check_increasing(&boxes, "output track", track_id)?;
        Ok(Self { track_id, boxes })
    }

    pub fn from_trajectory(t: &Trajectory) -> Self {
        Self {
            track_id: t.track_id(),
            boxes: t
                .per_frame_boxes()
                .into_iter()
                .map(|b| FrameBox {
                    frame: b.frame,
                    bbox: b.bbox,
                    world: b.world,
                })
                .collect(),
        }
    }
}

/// Greedy one-to-one assignment by descending IoU; pairs below the threshold
/// stay unmatched. Returns (gt index, track index) pairs.
pub fn match_frame(gt: &[BBox2D], tracked: &[BBox2D], iou_threshold: f64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, g) in gt.iter().enumerate() {
        for (j, t) in tracked.iter().enumerate() {
            let iou = bbox_iou(g, t);
            if iou >= iou_threshold {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut used_g = vec![false; gt.len()];
    let mut used_t = vec![false; tracked.len()];
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used_g[i] && !used_t[j] {
            used_g[i] = true;
            used_t[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// Frame-level association counts between ground truth and output tracks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Associations {
    /// Per ground-truth index: matched frame count per output track index.
    pub gt_to_tracks: Vec<BTreeMap<usize, usize>>,
    /// Per output track index: matched frame count per ground-truth index.
    pub track_to_gts: Vec<BTreeMap<usize, usize>>,
    pub gt_frames: Vec<usize>,
    pub track_frames: Vec<usize>,
}

/// Ground-truth and track boxes present in one frame, with their indices.
type FrameBoxes = (Vec<(usize, BBox2D)>, Vec<(usize, BBox2D)>);

impl Associations {
    pub fn compute(gt: &[GroundTruthTrack], tracks: &[OutputTrack], iou_threshold: f64) -> Self {
        let mut by_frame: BTreeMap<u32, FrameBoxes> = BTreeMap::new();
        for (i, g) in gt.iter().enumerate() {
            for b in &g.boxes {
                by_frame.entry(b.frame).or_default().0.push((i, b.bbox));
            }
        }
        for (j, t) in tracks.iter().enumerate() {
            for b in &t.boxes {
                by_frame.entry(b.frame).or_default().1.push((j, b.bbox));
            }
        }
        let mut a = Associations {
            gt_to_tracks: vec![BTreeMap::new(); gt.len()],
            track_to_gts: vec![BTreeMap::new(); tracks.len()],
            gt_frames: gt.iter().map(|g| g.boxes.len()).collect(),
            track_frames: tracks.iter().map(|t| t.boxes.len()).collect(),
        };
        for (gs, ts) in by_frame.values() {
            let gb: Vec<BBox2D> = gs.iter().map(|x| x.1).collect();
            let tb: Vec<BBox2D> = ts.iter().map(|x| x.1).collect();
            for (i, j) in match_frame(&gb, &tb, iou_threshold) {
                let (gi, tj) = (gs[i].0, ts[j].0);
                *a.gt_to_tracks[gi].entry(tj).or_default() += 1;
                *a.track_to_gts[tj].entry(gi).or_default() += 1;
            }
        }
        a
    }

    fn gt_matched_frames(&self, i: usize) -> usize {
        self.gt_to_tracks[i].values().sum()
    }

    fn track_matched_frames(&self, j: usize) -> usize {
        self.track_to_gts[j].values().sum()
    }

    /// The ground truth a track matched most often, ties to the lower index.
    fn dominant_gt(&self, j: usize) -> Option<usize> {
        let mut best: Option<(usize, usize)> = None;
        for (&gi, &n) in &self.track_to_gts[j] {
            if best.is_none_or(|(_, bn)| n > bn) {
                best = Some((gi, n));
            }
        }
        best.map(|b| b.0)
    }
}

fn require_gt(gt: &[GroundTruthTrack]) -> Result<()> {
    if gt.is_empty() {
        return Err(Error::UndefinedMetric("no ground-truth tracks".into()));
    }
    Ok(())
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Mean fraction of each ground-truth track's frames that are matched.
pub fn metric_m1(
    gt: &[GroundTruthTrack],
    tracks: &[OutputTrack],
    cfg: &TrackerConfig,
) -> Result<f64> {
    require_gt(gt)?;
    let a = Associations::compute(gt, tracks, cfg.iou_threshold);
    Ok(m1_from(&a))
}

fn m1_from(a: &Associations) -> f64 {
    mean((0..a.gt_frames.len()).map(|i| {
        if a.gt_frames[i] == 0 {
            0.0
        } else {
            a.gt_matched_frames(i) as f64 / a.gt_frames[i] as f64
        }
    }))
    .unwrap_or(0.0)
}

/// Mean over ground-truth tracks of 1 / (distinct output tracks matched).
pub fn metric_m2(
    gt: &[GroundTruthTrack],
    tracks: &[OutputTrack],
    cfg: &TrackerConfig,
) -> Result<f64> {
    require_gt(gt)?;
    let a = Associations::compute(gt, tracks, cfg.iou_threshold);
    Ok(m2_from(&a))
}

fn m2_from(a: &Associations) -> f64 {
    mean(a.gt_to_tracks.iter().map(|m| {
        if m.is_empty() {
            0.0
        } else {
            1.0 / m.len() as f64
        }
    }))
    .unwrap_or(0.0)
}

/// Mean over associated output tracks of 1 / (distinct ground truths
/// matched). Tracks that never match are left to the false-positive count.
pub fn metric_m3(
    gt: &[GroundTruthTrack],
    tracks: &[OutputTrack],
    cfg: &TrackerConfig,
) -> Result<f64> {
    require_gt(gt)?;
    if tracks.is_empty() {
        return Err(Error::UndefinedMetric("no output tracks".into()));
    }
    let a = Associations::compute(gt, tracks, cfg.iou_threshold);
    Ok(m3_from(&a))
}

fn m3_from(a: &Associations) -> f64 {
    mean(
        a.track_to_gts
            .iter()
            .filter(|m| !m.is_empty())
            .map(|m| 1.0 / m.len() as f64),
    )
    .unwrap_or(0.0)
}

pub fn m_bar(m1: f64, m2: f64, m3: f64) -> f64 {
    (m1 + m2 + m3) / 3.0
}

/// (true positives, false negatives, false positives) at trajectory level.
pub fn count_tp_fn_fp(
    gt: &[GroundTruthTrack],
    tracks: &[OutputTrack],
    cfg: &TrackerConfig,
) -> (usize, usize, usize) {
    let a = Associations::compute(gt, tracks, cfg.iou_threshold);
    counts_from(&a, cfg.coverage_fraction)
}

fn counts_from(a: &Associations, coverage: f64) -> (usize, usize, usize) {
    let mut covered = BTreeSet::new();
    for (j, m) in a.track_to_gts.iter().enumerate() {
        let Some(g) = a.dominant_gt(j) else { continue };
        if m[&g] as f64 >= coverage * a.gt_frames[g] as f64 {
            covered.insert(g);
        }
    }
    let tp = covered.len();
    let fp = (0..a.track_frames.len())
        .filter(|&j| 2 * a.track_matched_frames(j) < a.track_frames[j])
        .count();
    (tp, a.gt_frames.len() - tp, fp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m_bar: f64,
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
}

impl MetricReport {
    /// One `key = value` line per metric.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("m1", self.m1),
            ("m2", self.m2),
            ("m3", self.m3),
            ("m_bar", self.m_bar),
        ] {
            writeln!(s, "{k} = {v:.6}").unwrap();
        }
        for (k, v) in [("tp", self.tp), ("fn", self.fn_), ("fp", self.fp)] {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }

    pub fn to_text(&self) -> String {
        format!(
            "M1 {:.2}  M2 {:.2}  M3 {:.2}  M_bar {:.2}\nTP {}  FN {}  FP {}\n",
            self.m1, self.m2, self.m3, self.m_bar, self.tp, self.fn_, self.fp
        )
    }
}

/// Computes every metric. With no output tracks M3 is reported as 0.
pub fn evaluate(
    gt: &[GroundTruthTrack],
    tracks: &[OutputTrack],
    cfg: &TrackerConfig,
) -> Result<MetricReport> {
    require_gt(gt)?;
    let a = Associations::compute(gt, tracks, cfg.iou_threshold);
    let (m1, m2, m3) = (m1_from(&a), m2_from(&a), m3_from(&a));
    let (tp, fn_, fp) = counts_from(&a, cfg.coverage_fraction);
    Ok(MetricReport {
        m1,
        m2,
        m3,
        m_bar: m_bar(m1, m2, m3),
        tp,
        fn_,
        fp,
    })
}
