//! Merge tree and level sets built from a complete merge sequence.
//!
//! Level 0 holds the root. Each following level replaces every node that
//! has a recorded child pair by its two children and carries the others
//! forward, until only leaves remain.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::Gaussian3D;
use crate::simplify::MergeSequence;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub payload: Gaussian3D,
    pub parent: Option<u32>,
    pub children: Option<(u32, u32)>,
    pub created_level: u32,
    /// `None` for leaves, which are never split.
    pub split_level: Option<u32>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    /// Whether the node is part of the frontier `N_level`.
    pub fn in_level(&self, level: u32) -> bool {
        self.created_level <= level && self.split_level.is_none_or(|s| level < s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyTree {
    pub nodes: BTreeMap<u32, TreeNode>,
    pub root_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSets {
    pub levels: Vec<Vec<u32>>,
}

impl LevelSets {
    /// Index of the last level, `L`.
    pub fn depth(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyStats {
    pub n_leaves: usize,
    pub n_internal: usize,
    pub depth: usize,
    pub level_sizes: Vec<usize>,
    pub max_leaf_depth: u32,
    pub mean_leaf_depth: f64,
}

impl HierarchyTree {
    /// A tree holding a single leaf.
    pub fn single(id: u32, payload: Gaussian3D) -> Self {
        let mut nodes = BTreeMap::new();
        nodes.insert(
            id,
            TreeNode {
                payload,
                parent: None,
                children: None,
                created_level: 0,
                split_level: None,
            },
        );
        Self { nodes, root_id: id }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: u32) -> Option<&TreeNode> {
        self.nodes.get(&id)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (u32, &TreeNode)> + '_ {
        self.nodes
            .iter()
            .filter(|(_, n)| n.is_leaf())
            .map(|(id, n)| (*id, n))
    }

    /// Strict ancestors of `id`, nearest first.
    pub fn ancestors(&self, id: u32) -> Vec<u32> {
        let mut out = Vec::new();
        let mut at = self.nodes.get(&id).and_then(|n| n.parent);
        while let Some(p) = at {
            out.push(p);
            at = self.nodes.get(&p).and_then(|n| n.parent);
        }
        out
    }

    /// One line per node: `id parent child1 child2 created_level split_level`,
    /// `-` for absent links and `inf` for leaves.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# id parent child1 child2 created_level split_level\n");
        for (id, n) in &self.nodes {
            let parent = n.parent.map_or("-".to_string(), |p| p.to_string());
            let (c1, c2) = n
                .children
                .map_or(("-".to_string(), "-".to_string()), |(a, b)| {
                    (a.to_string(), b.to_string())
                });
            let split = n.split_level.map_or("inf".to_string(), |l| l.to_string());
            let _ = writeln!(s, "{id} {parent} {c1} {c2} {} {split}", n.created_level);
        }
        s
    }
}

/// Builds the parent-to-child map of a complete merge sequence and
/// annotates every node with its creation and split levels.
pub fn build_tree(seq: &MergeSequence) -> Result<HierarchyTree> {
    if !seq.is_complete() {
        return Err(Error::NotFullySimplified {
            records: seq.len(),
            source_count: seq.source_count as usize,
        });
    }
    if seq.is_empty() {
        return Err(Error::InconsistentSequence(
            "an empty sequence carries no root payload; use HierarchyTree::single".into(),
        ));
    }
    let mut nodes: BTreeMap<u32, TreeNode> = BTreeMap::new();
    let blank = |payload: &Gaussian3D| TreeNode {
        payload: payload.clone(),
        parent: None,
        children: None,
        created_level: 0,
        split_level: None,
    };
    for r in &seq.records {
        for (id, g) in [(r.child1_id, &r.child1), (r.child2_id, &r.child2)] {
            let node = nodes.entry(id).or_insert_with(|| blank(g));
            if node.parent.is_some() {
                return Err(Error::InconsistentSequence(format!(
                    "id {id} consumed twice (step {})",
                    r.step
                )));
            }
            node.parent = Some(r.parent_id);
        }
        if nodes.contains_key(&r.parent_id) {
            return Err(Error::InconsistentSequence(format!(
                "parent id {} of step {} already exists",
                r.parent_id, r.step
            )));
        }
        let mut parent = blank(&r.parent);
        parent.children = Some((r.child1_id, r.child2_id));
        nodes.insert(r.parent_id, parent);
    }
    let roots: Vec<u32> = nodes
        .iter()
        .filter(|(_, n)| n.parent.is_none())
        .map(|(id, _)| *id)
        .collect();
    if roots.len() != 1 {
        return Err(Error::NotFullySimplified {
            records: seq.len(),
            source_count: seq.source_count as usize,
        });
    }
    let mut tree = HierarchyTree {
        nodes,
        root_id: roots[0],
    };
    let levels = level_sets(&tree);
    for (l, level) in levels.levels.iter().enumerate() {
        let l = l as u32;
        for id in level {
            let node = tree.nodes.get_mut(id).expect("level ids come from the tree");
            if node.children.is_some() {
                node.split_level = Some(l + 1);
            }
        }
    }
    // A node is created on the level right after its parent splits.
    for level in &levels.levels {
        for id in level {
            if let Some((a, b)) = tree.nodes[id].children {
                let split = tree.nodes[id].split_level.expect("internal node is split");
                tree.nodes.get_mut(&a).unwrap().created_level = split;
                tree.nodes.get_mut(&b).unwrap().created_level = split;
            }
        }
    }
    Ok(tree)
}

/// Breadth expansion `N_0 = {root}`, `N_{l+1}` = every splittable member of
/// `N_l` replaced by its children, until the frontier holds only leaves.
pub fn level_sets(tree: &HierarchyTree) -> LevelSets {
    let mut levels = vec![vec![tree.root_id]];
    loop {
        let last = levels.last().expect("non-empty");
        if last.iter().all(|id| tree.nodes[id].children.is_none()) {
            break;
        }
        let mut next = Vec::with_capacity(last.len() * 2);
        for id in last {
            match tree.nodes[id].children {
                Some((a, b)) => {
                    next.push(a);
                    next.push(b);
                }
                None => next.push(*id),
            }
        }
        levels.push(next);
    }
    LevelSets { levels }
}

pub fn stats(tree: &HierarchyTree) -> HierarchyStats {
    let levels = level_sets(tree);
    let mut leaf_depths = Vec::new();
    for (_, n) in tree.leaves() {
        leaf_depths.push(n.created_level);
    }
    let n_leaves = leaf_depths.len();
    HierarchyStats {
        n_leaves,
        n_internal: tree.len() - n_leaves,
        depth: levels.depth(),
        level_sizes: levels.sizes(),
        max_leaf_depth: leaf_depths.iter().copied().max().unwrap_or(0),
        mean_leaf_depth: if n_leaves == 0 {
            0.0
        } else {
            leaf_depths.iter().map(|d| *d as f64).sum::<f64>() / n_leaves as f64
        },
    }
}

/// Ids of every node, for set comparisons.
pub fn node_ids(tree: &HierarchyTree) -> BTreeSet<u32> {
    tree.nodes.keys().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplify::MergeRecord;
    use nalgebra::Vector3;

    fn g(x: f64) -> Gaussian3D {
        Gaussian3D::isotropic(Vector3::new(x, 0.0, 0.0), 0.5, 0.1)
    }

    fn rec(step: u32, parent: u32, a: u32, b: u32) -> MergeRecord {
        MergeRecord {
            step,
            parent_id: parent,
            child1_id: a,
            child2_id: b,
            child1: g(a as f64),
            child2: g(b as f64),
            parent: g(parent as f64),
        }
    }

    /// Perfect tree over leaves 0..4: 4=(0,1), 5=(2,3), 6=(4,5).
    pub(crate) fn perfect7() -> MergeSequence {
        MergeSequence {
            records: vec![rec(0, 4, 0, 1), rec(1, 5, 2, 3), rec(2, 6, 4, 5)],
            source_count: 4,
        }
    }

    #[test]
    fn pair_tree() {
        let seq = MergeSequence {
            records: vec![rec(0, 2, 0, 1)],
            source_count: 2,
        };
        let t = build_tree(&seq).unwrap();
        assert_eq!(t.root_id, 2);
        assert_eq!(level_sets(&t).levels, vec![vec![2], vec![0, 1]]);
        assert_eq!(t.nodes[&0].created_level, 1);
        assert_eq!(t.nodes[&2].split_level, Some(1));
    }

    #[test]
    fn caterpillar() {
        // 4=(0,1), 5=(4,2), 6=(5,3)
        let seq = MergeSequence {
            records: vec![rec(0, 4, 0, 1), rec(1, 5, 4, 2), rec(2, 6, 5, 3)],
            source_count: 4,
        };
        let t = build_tree(&seq).unwrap();
        let ls = level_sets(&t);
        assert_eq!(ls.depth(), 3);
        assert_eq!(ls.levels[1], vec![5, 3]);
        assert_eq!(ls.levels[2], vec![4, 2, 3]);
        assert_eq!(ls.levels[3], vec![0, 1, 2, 3]);
        assert_eq!(t.ancestors(0), vec![4, 5, 6]);
        assert_eq!(t.nodes[&3].created_level, 1);
        assert_eq!(t.nodes[&0].created_level, 3);
    }

    #[test]
    fn perfect_tree_levels_and_stats() {
        let t = build_tree(&perfect7()).unwrap();
        assert_eq!(level_sets(&t).sizes(), vec![1, 2, 4]);
        let s = stats(&t);
        assert_eq!((s.depth, s.n_leaves, s.n_internal), (2, 4, 3));
        assert_eq!(s.max_leaf_depth, 2);
    }

    #[test]
    fn single_node() {
        let t = HierarchyTree::single(0, g(0.0));
        assert_eq!(level_sets(&t).levels, vec![vec![0]]);
        let s = stats(&t);
        assert_eq!((s.depth, s.n_leaves), (0, 1));
    }

    #[test]
    fn multi_root_rejected() {
        let seq = MergeSequence {
            records: vec![rec(0, 4, 0, 1)],
            source_count: 4,
        };
        assert!(matches!(build_tree(&seq), Err(Error::NotFullySimplified { .. })));
        let seq = MergeSequence {
            records: vec![rec(0, 4, 0, 1), rec(1, 5, 2, 3), rec(2, 6, 2, 5)],
            source_count: 4,
        };
        assert!(build_tree(&seq).is_err());
    }

    #[test]
    fn text_export() {
        let t = build_tree(&perfect7()).unwrap();
        let text = t.to_text();
        assert!(text.contains("\n6 - 4 5 0 1\n"));
        assert!(text.contains("\n0 4 - - 2 inf\n"));
    }
}
