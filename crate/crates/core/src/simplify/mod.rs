//! Progressive, reversible simplification.
//!
//! At every step the active Gaussian with the smallest covariance
//! determinant (ties by id) is merged with its nearest partner under the
//! weighted distance `‖u_i − u_j‖ / m0_j^β`. Each step is logged with full
//! child payloads so the whole run can be undone.

mod kdtree;

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::gaussian::{det_cov, merge_detailed, moments, Gaussian3D};
use crate::set::GaussianSet;

use kdtree::{partner_distance, KdTree, Points};

/// How the partner search is carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NeighborSearch {
    /// Heap-ordered subjects and a kd-tree partner query.
    #[default]
    Accelerated,
    /// Linear scans for both the subject and the partner. O(n²).
    ReferenceScan,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplifyConfig {
    /// Exponent on the partner's zeroth moment in the distance weighting.
    pub beta: f64,
    pub search: NeighborSearch,
}

impl Default for SimplifyConfig {
    fn default() -> Self {
        Self {
            beta: 0.0,
            search: NeighborSearch::Accelerated,
        }
    }
}

impl SimplifyConfig {
    pub fn reference() -> Self {
        Self {
            search: NeighborSearch::ReferenceScan,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeRecord {
    pub step: u32,
    pub parent_id: u32,
    pub child1_id: u32,
    pub child2_id: u32,
    pub child1: Gaussian3D,
    pub child2: Gaussian3D,
    pub parent: Gaussian3D,
}

impl MergeRecord {
    pub fn bits_eq(&self, other: &Self) -> bool {
        self.step == other.step
            && self.parent_id == other.parent_id
            && self.child1_id == other.child1_id
            && self.child2_id == other.child2_id
            && self.child1.bits_eq(&other.child1)
            && self.child2.bits_eq(&other.child2)
            && self.parent.bits_eq(&other.parent)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MergeSequence {
    pub records: Vec<MergeRecord>,
    pub source_count: u32,
}

impl MergeSequence {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.source_count >= 1 && self.records.len() + 1 == self.source_count as usize
    }

    pub fn bits_eq(&self, other: &Self) -> bool {
        self.source_count == other.source_count
            && self.records.len() == other.records.len()
            && self
                .records
                .iter()
                .zip(&other.records)
                .all(|(a, b)| a.bits_eq(b))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimplifyStats {
    pub opacity_clamps: usize,
    pub index_rebuilds: usize,
}

#[inline]
fn distance_weight(g: &Gaussian3D, beta: f64) -> f64 {
    if beta == 0.0 {
        1.0
    } else {
        moments(g).m0.powf(beta)
    }
}

/// Active id other than `subject_id` minimizing the weighted distance,
/// ties broken by the smaller id.
pub fn nearest_partner(subject_id: u32, set: &GaussianSet, config: &SimplifyConfig) -> Result<u32> {
    let active = set.active_count();
    if active < 2 {
        return Err(Error::InsufficientPopulation(active));
    }
    let subject = set
        .ids
        .iter()
        .zip(&set.active)
        .position(|(id, a)| *id == subject_id && *a)
        .ok_or_else(|| Error::InvalidParameter(format!("subject {subject_id} is not active")))?;
    let centers: Vec<Vector3<f64>> = set.gaussians.iter().map(|g| g.center).collect();
    let weights: Vec<f64> = set
        .gaussians
        .iter()
        .map(|g| distance_weight(g, config.beta))
        .collect();
    let pts = Points {
        centers: &centers,
        weights: &weights,
        active: &set.active,
        ids: &set.ids,
    };
    let slot = match config.search {
        NeighborSearch::ReferenceScan => scan_partner(subject, &pts),
        NeighborSearch::Accelerated => {
            let live = (0..set.len()).filter(|&s| set.active[s]).collect();
            KdTree::build(live, &pts).nearest(subject, &pts).map(|(_, s)| s)
        }
    };
    slot.map(|s| set.ids[s])
        .ok_or(Error::InsufficientPopulation(active))
}

fn scan_partner(subject: usize, pts: &Points<'_>) -> Option<usize> {
    let q = pts.centers[subject];
    let mut best: Option<(f64, u32, usize)> = None;
    for s in 0..pts.centers.len() {
        if s == subject || !pts.active[s] {
            continue;
        }
        let d = partner_distance(&q, &pts.centers[s], pts.weights[s]);
        let id = pts.ids[s];
        let better = match best {
            None => true,
            Some((bd, bid, _)) => d < bd || (d == bd && id < bid),
        };
        if better {
            best = Some((d, id, s));
        }
    }
    best.map(|(_, _, s)| s)
}

#[derive(Debug, Clone, Copy)]
struct HeapKey {
    det: f64,
    id: u32,
    slot: usize,
}

impl PartialEq for HeapKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapKey {}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.det
            .total_cmp(&other.det)
            .then(self.id.cmp(&other.id))
    }
}

/// Per-slot working state. Slots are never reused, so an id's heap entry
/// is stale exactly when its slot is inactive.
struct Work {
    gaussians: Vec<Gaussian3D>,
    centers: Vec<Vector3<f64>>,
    weights: Vec<f64>,
    dets: Vec<f64>,
    active: Vec<bool>,
    ids: Vec<u32>,
    live: usize,
}

impl Work {
    fn new(set: &GaussianSet, beta: f64) -> Self {
        let mut w = Work {
            gaussians: Vec::new(),
            centers: Vec::new(),
            weights: Vec::new(),
            dets: Vec::new(),
            active: Vec::new(),
            ids: Vec::new(),
            live: 0,
        };
        for (id, g) in set.iter_active() {
            w.push(id, g.clone(), beta);
        }
        w
    }

    fn push(&mut self, id: u32, g: Gaussian3D, beta: f64) -> usize {
        self.centers.push(g.center);
        self.weights.push(distance_weight(&g, beta));
        self.dets.push(det_cov(&g));
        self.gaussians.push(g);
        self.active.push(true);
        self.ids.push(id);
        self.live += 1;
        self.gaussians.len() - 1
    }

    fn points(&self) -> Points<'_> {
        Points {
            centers: &self.centers,
            weights: &self.weights,
            active: &self.active,
            ids: &self.ids,
        }
    }

    fn scan_subject(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for s in 0..self.gaussians.len() {
            if !self.active[s] {
                continue;
            }
            best = match best {
                None => Some(s),
                Some(b) => {
                    let key = (self.dets[s], self.ids[s]);
                    let cur = (self.dets[b], self.ids[b]);
                    if key.0 < cur.0 || (key.0 == cur.0 && key.1 < cur.1) {
                        Some(s)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best
    }
}

/// Reduces the active members of `set` to `target_count` by repeated
/// pairwise merges and returns the merge log.
pub fn simplify(set: &GaussianSet, target_count: usize, config: &SimplifyConfig) -> Result<MergeSequence> {
    simplify_with_stats(set, target_count, config).map(|(seq, _)| seq)
}

pub fn simplify_with_stats(
    set: &GaussianSet,
    target_count: usize,
    config: &SimplifyConfig,
) -> Result<(MergeSequence, SimplifyStats)> {
    let n = set.active_count();
    if target_count < 1 || target_count > n {
        return Err(Error::InvalidTarget {
            target: target_count,
            n,
        });
    }
    {
        let mut ids: Vec<u32> = set.ids.clone();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate ids in set".into()));
        }
    }
    let mut work = Work::new(set, config.beta);
    let mut next_id = set.ids.iter().max().map_or(0, |m| m + 1);
    let mut stats = SimplifyStats::default();
    let mut records = Vec::with_capacity(n - target_count);

    let mut heap: BinaryHeap<Reverse<HeapKey>> = BinaryHeap::new();
    let mut tree = KdTree::default();
    if config.search == NeighborSearch::Accelerated {
        heap = (0..work.gaussians.len())
            .map(|s| {
                Reverse(HeapKey {
                    det: work.dets[s],
                    id: work.ids[s],
                    slot: s,
                })
            })
            .collect();
        tree = KdTree::build((0..work.gaussians.len()).collect(), &work.points());
    }

    for step in 0..(n - target_count) {
        let (subject, partner) = match config.search {
            NeighborSearch::ReferenceScan => {
                let subject = work.scan_subject().expect("population checked");
                let partner = scan_partner(subject, &work.points())
                    .ok_or(Error::InsufficientPopulation(work.live))?;
                (subject, partner)
            }
            NeighborSearch::Accelerated => {
                let subject = loop {
                    let Reverse(key) = heap.pop().expect("heap holds every active slot");
                    if work.active[key.slot] {
                        break key.slot;
                    }
                };
                let (_, partner) = tree
                    .nearest(subject, &work.points())
                    .ok_or(Error::InsufficientPopulation(work.live))?;
                (subject, partner)
            }
        };

        let out = merge_detailed(&work.gaussians[subject], &work.gaussians[partner])?;
        if out.opacity_clamped {
            stats.opacity_clamps += 1;
        }
        let parent_id = next_id;
        next_id = next_id
            .checked_add(1)
            .ok_or_else(|| Error::InvalidParameter("id space exhausted".into()))?;

        work.active[subject] = false;
        work.active[partner] = false;
        work.live -= 2;
        let slot = work.push(parent_id, out.gaussian.clone(), config.beta);

        records.push(MergeRecord {
            step: step as u32,
            parent_id,
            child1_id: work.ids[subject],
            child2_id: work.ids[partner],
            child1: work.gaussians[subject].clone(),
            child2: work.gaussians[partner].clone(),
            parent: out.gaussian,
        });

        if config.search == NeighborSearch::Accelerated {
            heap.push(Reverse(HeapKey {
                det: work.dets[slot],
                id: parent_id,
                slot,
            }));
            tree.note_removal();
            tree.note_removal();
            if tree.mutations() >= (tree.built_size() / 4).max(16) {
                let live = (0..work.gaussians.len()).filter(|&s| work.active[s]).collect();
                tree = KdTree::build(live, &work.points());
                stats.index_rebuilds += 1;
            } else {
                tree.insert(slot, &work.points());
            }
        }
    }

    Ok((
        MergeSequence {
            records,
            source_count: n as u32,
        },
        stats,
    ))
}

/// Applies the first `steps` records of `seq` to `set`, returning the
/// active set after those merges (sorted by id).
pub fn replay(set: &GaussianSet, seq: &MergeSequence, steps: usize) -> Result<GaussianSet> {
    if steps > seq.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot replay {steps} of {} records",
            seq.len()
        )));
    }
    let mut live: BTreeMap<u32, Gaussian3D> =
        set.iter_active().map(|(id, g)| (id, g.clone())).collect();
    for r in &seq.records[..steps] {
        for child in [r.child1_id, r.child2_id] {
            if live.remove(&child).is_none() {
                return Err(Error::InconsistentSequence(format!(
                    "step {} consumes inactive id {child}",
                    r.step
                )));
            }
        }
        if live.insert(r.parent_id, r.parent.clone()).is_some() {
            return Err(Error::InconsistentSequence(format!(
                "step {} reuses id {}",
                r.step, r.parent_id
            )));
        }
    }
    Ok(from_map(live))
}

/// Undoes the last `steps` records of `seq`, starting from the set of
/// roots the full sequence ends in. Each parent is replaced by its two
/// stored children. The result is sorted by id.
pub fn expand(roots: &GaussianSet, seq: &MergeSequence, steps: usize) -> Result<GaussianSet> {
    if steps > seq.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot expand {steps} of {} records",
            seq.len()
        )));
    }
    let mut live: BTreeMap<u32, Gaussian3D> =
        roots.iter_active().map(|(id, g)| (id, g.clone())).collect();
    for r in seq.records.iter().rev().take(steps) {
        if live.remove(&r.parent_id).is_none() {
            return Err(Error::InconsistentSequence(format!(
                "parent id {} of step {} is absent",
                r.parent_id, r.step
            )));
        }
        for (id, g) in [(r.child1_id, &r.child1), (r.child2_id, &r.child2)] {
            if live.insert(id, g.clone()).is_some() {
                return Err(Error::InconsistentSequence(format!(
                    "child id {id} of step {} already present",
                    r.step
                )));
            }
        }
    }
    Ok(from_map(live))
}

fn from_map(live: BTreeMap<u32, Gaussian3D>) -> GaussianSet {
    let (ids, gaussians): (Vec<_>, Vec<_>) = live.into_iter().unzip();
    let n = ids.len();
    GaussianSet {
        gaussians,
        ids,
        active: vec![true; n],
    }
}
