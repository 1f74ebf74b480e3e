//! Interest-point trajectories, their coherence scores, and the HOG link
//! similarity built from them.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use crate::config::{GaussianMode, TrackerConfig};
use crate::error::{Error, Result};
use crate::features::InterestPoint;
use crate::model::{DetectedObject, ObjectKey};
use crate::similarity::HogSimilarity;

/// Trajectories shorter than this score 1 on every channel.
pub const MIN_EVIDENCE_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceParams {
    pub sigma_floor: f64,
    pub mode: GaussianMode,
}

impl From<&TrackerConfig> for CoherenceParams {
    fn from(cfg: &TrackerConfig) -> Self {
        Self {
            sigma_floor: cfg.sigma_floor,
            mode: cfg.gaussian_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceScore {
    pub s_dist: f64,
    pub s_dir: f64,
    pub s_desc: f64,
    pub s: f64,
}

impl CoherenceScore {
    pub fn new(s_dist: f64, s_dir: f64, s_desc: f64) -> Self {
        Self {
            s_dist,
            s_dir,
            s_desc,
            s: (s_dist + s_dir + s_desc) / 3.0,
        }
    }

    pub fn full() -> Self {
        Self::new(1.0, 1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointObservation {
    pub frame: u32,
    pub position: [f64; 2],
    pub descriptor: Vec<f64>,
    pub owner: ObjectKey,
    /// Coherence of the trajectory prefix ending at this observation.
    pub coherence: CoherenceScore,
}

/// One tracked point. Frames strictly increase along `points`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointTrajectory {
    points: Vec<PointObservation>,
    // per-step sequences, kept so that scoring a push costs no descriptor work
    steps: Vec<f64>,
    headings: Vec<f64>,
    turns: Vec<f64>,
    sims: Vec<f64>,
    last_sim: Option<f64>,
}

impl PointTrajectory {
    pub fn points(&self) -> &[PointObservation] {
        &self.points
    }

    pub fn last(&self) -> Option<&PointObservation> {
        self.points.last()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Appends an observation and scores the extended prefix.
    pub fn push(
        &mut self,
        frame: u32,
        position: [f64; 2],
        descriptor: Vec<f64>,
        owner: ObjectKey,
        params: &CoherenceParams,
    ) -> Result<()> {
        if let Some(last) = self.points.last() {
            if frame <= last.frame {
                return Err(Error::StreamOrder {
                    last: last.frame,
                    got: frame,
                });
            }
        }
        let mut coherence = CoherenceScore::full();
        if let Some(prev) = self.points.last() {
            let (dx, dy) = (
                position[0] - prev.position[0],
                position[1] - prev.position[1],
            );
            self.steps.push(dx.hypot(dy));
            let h = if dx == 0.0 && dy == 0.0 {
                self.headings.last().copied().unwrap_or(0.0)
            } else {
                dy.atan2(dx)
            };
            if let Some(&last_h) = self.headings.last() {
                self.turns.push(wrap_angle(h - last_h));
            }
            self.headings.push(h);
            self.last_sim = cosine(&prev.descriptor, &descriptor);
            if let Some(c) = self.last_sim {
                self.sims.push(c);
            }
            if self.points.len() + 1 >= MIN_EVIDENCE_POINTS {
                let desc = if self.last_sim.is_some() {
                    last_value_score(&self.sims, params)
                } else {
                    1.0
                };
                coherence = CoherenceScore::new(
                    last_value_score(&self.steps, params),
                    last_value_score(&self.turns, params),
                    desc,
                );
            }
        }
        self.points.push(PointObservation {
            frame,
            position,
            descriptor,
            owner,
            coherence,
        });
        Ok(())
    }
}

fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

fn mean_and_sample_sd(seq: &[f64]) -> (f64, f64) {
    let n = seq.len() as f64;
    let mean = seq.iter().sum::<f64>() / n;
    if seq.len() < 2 {
        return (mean, 0.0);
    }
    let var = seq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Gaussian consistency of the last value of `seq` with the whole sequence
/// (the last value included in the statistics).
fn last_value_score(seq: &[f64], params: &CoherenceParams) -> f64 {
    let Some(&x) = seq.last() else {
        return 1.0;
    };
    let (mean, sd) = mean_and_sample_sd(seq);
    params.mode.score(x, mean, sd.max(params.sigma_floor))
}

fn check_len(n: usize) -> Result<bool> {
    if n < 2 {
        return Err(Error::ShortTrajectory(n));
    }
    Ok(n >= MIN_EVIDENCE_POINTS)
}

fn step_lengths(obs: &[PointObservation]) -> Vec<f64> {
    obs.windows(2)
        .map(|w| {
            let (a, b) = (w[0].position, w[1].position);
            (b[0] - a[0]).hypot(b[1] - a[1])
        })
        .collect()
}

/// Frame-to-frame distance coherence at the last point of `obs`.
pub fn coherence_dist(obs: &[PointObservation], params: &CoherenceParams) -> Result<f64> {
    if !check_len(obs.len())? {
        return Ok(1.0);
    }
    Ok(last_value_score(&step_lengths(obs), params))
}

/// Direction coherence: statistics of the wrapped change in heading between
/// consecutive steps. A zero-length step keeps the previous heading.
pub fn coherence_dir(obs: &[PointObservation], params: &CoherenceParams) -> Result<f64> {
    if !check_len(obs.len())? {
        return Ok(1.0);
    }
    let mut headings = Vec::with_capacity(obs.len() - 1);
    for w in obs.windows(2) {
        let (a, b) = (w[0].position, w[1].position);
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let h = if dx == 0.0 && dy == 0.0 {
            headings.last().copied().unwrap_or(0.0)
        } else {
            dy.atan2(dx)
        };
        headings.push(h);
    }
    let turns: Vec<f64> = headings
        .windows(2)
        .map(|h| wrap_angle(h[1] - h[0]))
        .collect();
    Ok(last_value_score(&turns, params))
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 || a.len() != b.len() {
        return None;
    }
    Some(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

/// Descriptor coherence over consecutive cosine similarities. Steps touching
/// a flat (all-zero) descriptor carry no evidence and are skipped; a flat
/// current step scores 1.
pub fn coherence_desc(obs: &[PointObservation], params: &CoherenceParams) -> Result<f64> {
    if !check_len(obs.len())? {
        return Ok(1.0);
    }
    let n = obs.len();
    if cosine(&obs[n - 2].descriptor, &obs[n - 1].descriptor).is_none() {
        return Ok(1.0);
    }
    let sims: Vec<f64> = obs
        .windows(2)
        .filter_map(|w| cosine(&w[0].descriptor, &w[1].descriptor))
        .collect();
    Ok(last_value_score(&sims, params))
}

pub fn coherence(obs: &[PointObservation], params: &CoherenceParams) -> Result<CoherenceScore> {
    Ok(CoherenceScore::new(
        coherence_dist(obs, params)?,
        coherence_dir(obs, params)?,
        coherence_desc(obs, params)?,
    ))
}

/// Greedy matching by ascending descriptor distance among pairs whose spatial
/// distance is within `radius`. Each point is used at most once; ties go to
/// the lower (prev, cur) index pair.
pub fn match_points(
    prev: &[InterestPoint],
    cur: &[InterestPoint],
    radius: f64,
) -> Vec<(usize, usize)> {
    let p: Vec<_> = prev
        .iter()
        .map(|p| (p.position, p.descriptor.as_slice(), radius))
        .collect();
    let c: Vec<_> = cur
        .iter()
        .map(|p| (p.position, p.descriptor.as_slice()))
        .collect();
    match_views(&p, &c)
}

fn match_views(
    prev: &[([f64; 2], &[f64], f64)],
    cur: &[([f64; 2], &[f64])],
) -> Vec<(usize, usize)> {
    let mut cands = Vec::new();
    for (i, (pp, pd, radius)) in prev.iter().enumerate() {
        for (j, (cp, cd)) in cur.iter().enumerate() {
            let d = (pp[0] - cp[0]).hypot(pp[1] - cp[1]);
            if d > *radius || pd.len() != cd.len() {
                continue;
            }
            let dd = pd
                .iter()
                .zip(cd.iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            cands.push((dd, i, j));
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; prev.len()];
    let mut used_c = vec![false; cur.len()];
    let mut out = Vec::new();
    for (_, i, j) in cands {
        if !used_p[i] && !used_c[j] {
            used_p[i] = true;
            used_c[j] = true;
            out.push((i, j));
        }
    }
    out.sort_unstable();
    out
}

/// Frame-by-frame store of point trajectories over a sliding window.
#[derive(Debug, Clone)]
pub struct PointTrackStore {
    params: CoherenceParams,
    window: u32,
    radius: f64,
    next_id: usize,
    trajectories: BTreeMap<usize, PointTrajectory>,
    by_object: BTreeMap<ObjectKey, Vec<(usize, usize)>>,
    point_counts: BTreeMap<ObjectKey, usize>,
}

impl PointTrackStore {
    pub fn new(cfg: &TrackerConfig) -> Self {
        Self {
            params: cfg.into(),
            window: cfg.t2_window,
            radius: cfg.point_radius,
            next_id: 0,
            trajectories: BTreeMap::new(),
            by_object: BTreeMap::new(),
            point_counts: BTreeMap::new(),
        }
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &PointTrajectory> {
        self.trajectories.values()
    }

    /// Matches the points of this frame's detections against trajectory tails
    /// seen within the window and extends or starts trajectories.
    pub fn update(&mut self, frame: u32, objects: &[DetectedObject]) -> Result<()> {
        let oldest = frame.saturating_sub(self.window);
        self.trajectories
            .retain(|_, t| t.last().is_some_and(|p| p.frame >= oldest));
        self.by_object.retain(|k, _| k.frame >= oldest);
        self.point_counts.retain(|k, _| k.frame >= oldest);

        let tails: Vec<(usize, &PointObservation)> = self
            .trajectories
            .iter()
            .filter_map(|(id, t)| t.last().filter(|p| p.frame < frame).map(|p| (*id, p)))
            .collect();
        let prev_views: Vec<_> = tails
            .iter()
            .map(|(_, p)| {
                (
                    p.position,
                    p.descriptor.as_slice(),
                    self.radius * (frame - p.frame) as f64,
                )
            })
            .collect();
        let mut cur: Vec<(ObjectKey, &InterestPoint)> = Vec::new();
        for o in objects {
            if o.frame() != frame {
                return Err(Error::StreamOrder {
                    last: frame,
                    got: o.frame(),
                });
            }
            if let Some(n) = o.appearance.point_count() {
                self.point_counts.insert(o.key, n);
            }
            cur.extend(o.appearance.points().iter().map(|p| (o.key, p)));
        }
        let cur_views: Vec<_> = cur
            .iter()
            .map(|(_, p)| (p.position, p.descriptor.as_slice()))
            .collect();
        let matches = match_views(&prev_views, &cur_views);

        let mut target: Vec<Option<usize>> = vec![None; cur.len()];
        for (i, j) in matches {
            target[j] = Some(tails[i].0);
        }
        for (j, (owner, p)) in cur.into_iter().enumerate() {
            let id = target[j].unwrap_or_else(|| {
                let id = self.next_id;
                self.next_id += 1;
                self.trajectories.insert(id, PointTrajectory::default());
                id
            });
            let traj = self.trajectories.get_mut(&id).expect("live trajectory");
            traj.push(frame, p.position, p.descriptor.clone(), owner, &self.params)?;
            let idx = traj.len() - 1;
            self.by_object.entry(owner).or_default().push((id, idx));
        }
        Ok(())
    }

    /// Coherence-weighted share of points shared by the two objects.
    pub fn ls6_hog(&self, a: &DetectedObject, b: &DetectedObject) -> Option<f64> {
        let ma = a
            .appearance
            .point_count()
            .or_else(|| self.point_counts.get(&a.key).copied())?;
        let mb = b
            .appearance
            .point_count()
            .or_else(|| self.point_counts.get(&b.key).copied())?;
        if ma == 0 || mb == 0 {
            return None;
        }
        let empty = Vec::new();
        let on_a = self.by_object.get(&a.key).unwrap_or(&empty);
        let on_b = self.by_object.get(&b.key).unwrap_or(&empty);
        let (mut sum_a, mut sum_b) = (0.0, 0.0);
        for (ta, ia) in on_a {
            if let Some((_, ib)) = on_b.iter().find(|(tb, _)| tb == ta) {
                let t = &self.trajectories[ta];
                sum_a += t.points[*ia].coherence.s;
                sum_b += t.points[*ib].coherence.s;
            }
        }
        Some((sum_a / ma as f64).min(sum_b / mb as f64).clamp(0.0, 1.0))
    }
}

impl HogSimilarity for PointTrackStore {
    fn ls6(&self, a: &DetectedObject, b: &DetectedObject) -> Option<f64> {
        self.ls6_hog(a, b)
    }
}
