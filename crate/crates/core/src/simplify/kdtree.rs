//! Bucketed kd-tree over Gaussian centers supporting lazy deletion,
//! in-place insertion and exact weighted nearest-neighbor queries.
//!
//! Bounding boxes and weight maxima only ever grow between rebuilds, so
//! the lower bounds stay conservative after deletions.

use nalgebra::Vector3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
struct Node {
    lo: [f64; 3],
    hi: [f64; 3],
    /// Largest distance weight of any item ever stored below this node.
    wmax: f64,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Leaf(Vec<usize>),
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Read-only view of the per-slot state owned by the simplifier.
pub(crate) struct Points<'a> {
    pub centers: &'a [Vector3<f64>],
    pub weights: &'a [f64],
    pub active: &'a [bool],
    pub ids: &'a [u32],
}

/// Weighted partner distance `‖a − b‖ / w`.
#[inline]
pub(crate) fn partner_distance(a: &Vector3<f64>, b: &Vector3<f64>, w: f64) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    (dx * dx + dy * dy + dz * dz).sqrt() / w
}

#[derive(Debug, Clone, Default)]
pub(crate) struct KdTree {
    nodes: Vec<Node>,
    built_size: usize,
    mutations: usize,
}

impl KdTree {
    pub fn build(slots: Vec<usize>, pts: &Points<'_>) -> Self {
        let mut tree = KdTree {
            nodes: Vec::new(),
            built_size: slots.len(),
            mutations: 0,
        };
        if !slots.is_empty() {
            tree.build_node(slots, pts);
        }
        tree
    }

    fn build_node(&mut self, mut slots: Vec<usize>, pts: &Points<'_>) -> usize {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut wmax = 0.0f64;
        for &s in &slots {
            let c = &pts.centers[s];
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
            wmax = wmax.max(pts.weights[s]);
        }
        let index = self.nodes.len();
        if slots.len() <= LEAF_SIZE {
            self.nodes.push(Node {
                lo,
                hi,
                wmax,
                kind: Kind::Leaf(slots),
            });
            return index;
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        slots.sort_by(|&a, &b| {
            pts.centers[a][axis]
                .total_cmp(&pts.centers[b][axis])
                .then(a.cmp(&b))
        });
        let right_slots = slots.split_off(slots.len() / 2);
        let value = pts.centers[right_slots[0]][axis];
        self.nodes.push(Node {
            lo,
            hi,
            wmax,
            kind: Kind::Leaf(Vec::new()),
        });
        let left = self.build_node(slots, pts);
        let right = self.build_node(right_slots, pts);
        self.nodes[index].kind = Kind::Split {
            axis,
            value,
            left,
            right,
        };
        index
    }

    /// Number of inserts and deletes since the last build.
    pub fn mutations(&self) -> usize {
        self.mutations
    }

    pub fn built_size(&self) -> usize {
        self.built_size
    }

    pub fn note_removal(&mut self) {
        self.mutations += 1;
    }

    pub fn insert(&mut self, slot: usize, pts: &Points<'_>) {
        self.mutations += 1;
        let c = pts.centers[slot];
        let w = pts.weights[slot];
        if self.nodes.is_empty() {
            self.nodes.push(Node {
                lo: [c.x, c.y, c.z],
                hi: [c.x, c.y, c.z],
                wmax: w,
                kind: Kind::Leaf(vec![slot]),
            });
            return;
        }
        let mut at = 0;
        loop {
            let node = &mut self.nodes[at];
            for a in 0..3 {
                node.lo[a] = node.lo[a].min(c[a]);
                node.hi[a] = node.hi[a].max(c[a]);
            }
            node.wmax = node.wmax.max(w);
            match &mut node.kind {
                Kind::Leaf(items) => {
                    items.push(slot);
                    return;
                }
                Kind::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    at = if c[*axis] < *value { *left } else { *right };
                }
            }
        }
    }

    /// Exact argmin of `(partner_distance, id)` over active slots other
    /// than `subject`.
    pub fn nearest(&self, subject: usize, pts: &Points<'_>) -> Option<(f64, usize)> {
        if self.nodes.is_empty() {
            return None;
        }
        let q = pts.centers[subject];
        let mut best: Option<(f64, u32, usize)> = None;
        let mut stack = vec![(0usize, self.lower_bound(0, &q))];
        while let Some((at, lb)) = stack.pop() {
            if let Some((bd, _, _)) = best {
                if lb > bd {
                    continue;
                }
            }
            match &self.nodes[at].kind {
                Kind::Leaf(items) => {
                    for &s in items {
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
                }
                Kind::Split { left, right, .. } => {
                    let ll = self.lower_bound(*left, &q);
                    let rl = self.lower_bound(*right, &q);
                    // Push the farther child first so the nearer one is explored first.
                    if ll <= rl {
                        stack.push((*right, rl));
                        stack.push((*left, ll));
                    } else {
                        stack.push((*left, ll));
                        stack.push((*right, rl));
                    }
                }
            }
        }
        best.map(|(d, _, s)| (d, s))
    }

    /// Lower bound on `partner_distance` for anything stored under `at`.
    /// Built from the same rounded operations as the exact distance, so it
    /// never exceeds it.
    fn lower_bound(&self, at: usize, q: &Vector3<f64>) -> f64 {
        let node = &self.nodes[at];
        let gap = |a: usize| {
            if q[a] < node.lo[a] {
                node.lo[a] - q[a]
            } else if q[a] > node.hi[a] {
                q[a] - node.hi[a]
            } else {
                0.0
            }
        };
        let (gx, gy, gz) = (gap(0), gap(1), gap(2));
        (gx * gx + gy * gy + gz * gz).sqrt() / node.wmax
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_scan_under_churn() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 400;
        let mut centers: Vec<Vector3<f64>> = (0..n)
            .map(|_| Vector3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let mut weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let mut active = vec![true; n];
        let mut ids: Vec<u32> = (0..n as u32).collect();
        let mut tree = KdTree::build(
            (0..n).collect(),
            &Points {
                centers: &centers,
                weights: &weights,
                active: &active,
                ids: &ids,
            },
        );
        for step in 0..300 {
            let live: Vec<usize> = (0..centers.len()).filter(|&s| active[s]).collect();
            let subject = live[rng.gen_range(0..live.len())];
            let pts = Points {
                centers: &centers,
                weights: &weights,
                active: &active,
                ids: &ids,
            };
            let got = tree.nearest(subject, &pts);
            let want = live
                .iter()
                .filter(|&&s| s != subject)
                .map(|&s| (partner_distance(&centers[subject], &centers[s], weights[s]), ids[s], s))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(d, _, s)| (d, s));
            assert_eq!(got, want, "step {step}");
            if let Some((_, partner)) = got {
                active[subject] = false;
                active[partner] = false;
                tree.note_removal();
                tree.note_removal();
                centers.push((centers[subject] + centers[partner]) / 2.0);
                weights.push(rng.gen_range(0.5..2.0));
                active.push(true);
                ids.push(ids.len() as u32);
                let slot = centers.len() - 1;
                tree.insert(
                    slot,
                    &Points {
                        centers: &centers,
                        weights: &weights,
                        active: &active,
                        ids: &ids,
                    },
                );
            }
            if live.len() <= 3 {
                break;
            }
        }
    }
}
