use std::collections::BTreeMap;

use crate::config::TrackerConfig;
use crate::error::Result;
use crate::model::{DetectedObject, FeatureWeights, ObjectKey};
use crate::similarity::{link_similarity, HogSimilarity, SimilarityVector};

/// Candidate temporal link from an earlier object to a newer one.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkEdge {
    pub earlier: ObjectKey,
    pub later: ObjectKey,
    pub similarity: f64,
    pub features: SimilarityVector,
}

/// Objects inside the temporal window and the links among them.
#[derive(Debug, Clone, Default)]
pub struct LinkGraph {
    objects: BTreeMap<ObjectKey, DetectedObject>,
    /// Edges grouped by their later endpoint.
    incoming: BTreeMap<ObjectKey, Vec<LinkEdge>>,
}

impl LinkGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn object(&self, key: &ObjectKey) -> Option<&DetectedObject> {
        self.objects.get(key)
    }

    pub fn objects(&self) -> impl Iterator<Item = &DetectedObject> {
        self.objects.values()
    }

    pub fn incoming(&self, later: &ObjectKey) -> &[LinkEdge] {
        self.incoming.get(later).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn edges(&self) -> impl Iterator<Item = &LinkEdge> {
        self.incoming.values().flatten()
    }

    pub fn edge_count(&self) -> usize {
        self.incoming.values().map(Vec::len).sum()
    }

    /// Drops objects (and their edges) more than `window` frames before `frame`.
    pub fn prune(&mut self, frame: u32, window: u32) {
        let oldest = frame.saturating_sub(window);
        self.objects.retain(|k, _| k.frame >= oldest);
        self.incoming.retain(|k, _| k.frame >= oldest);
        for edges in self.incoming.values_mut() {
            edges.retain(|e| e.earlier.frame >= oldest);
        }
    }

    /// Links every new object to every earlier object within the window whose
    /// weighted similarity reaches `th1_link`, then inserts the new objects.
    /// Returns the edges added.
    pub fn build_links(
        &mut self,
        new: &[DetectedObject],
        weights: &FeatureWeights,
        cfg: &TrackerConfig,
        hog: &dyn HogSimilarity,
    ) -> Result<Vec<LinkEdge>> {
        let Some(frame) = new.iter().map(DetectedObject::frame).max() else {
            return Ok(Vec::new());
        };
        self.prune(frame, cfg.t2_window);
        let mut added = Vec::new();
        for o in new {
            for prior in self.objects.values() {
                let gap = o.frame().saturating_sub(prior.frame());
                if gap == 0 || gap > cfg.t2_window {
                    continue;
                }
                if let Some((ls, features)) = link_similarity(prior, o, weights, cfg, hog)? {
                    if ls >= cfg.th1_link {
                        added.push(LinkEdge {
                            earlier: prior.key,
                            later: o.key,
                            similarity: ls,
                            features,
                        });
                    }
                }
            }
        }
        for e in &added {
            self.incoming.entry(e.later).or_default().push(e.clone());
        }
        for o in new {
            self.objects.insert(o.key, o.clone());
        }
        Ok(added)
    }
}
