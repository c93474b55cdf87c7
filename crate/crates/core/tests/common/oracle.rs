//! Slow, direct reference implementations.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::Vector3;
use rand::Rng;

use splat_lod::gaussian::{det_cov, merge, moments, Gaussian3D};
use splat_lod::hierarchy::{HierarchyTree, TreeNode};
use splat_lod::render::Image;
use splat_lod::simplify::{MergeRecord, MergeSequence};
use splat_lod::GaussianSet;

/// Quadratic-per-step simplifier over a plain `id -> Gaussian` map.
pub fn brute_simplify(set: &GaussianSet, target: usize, beta: f64) -> MergeSequence {
    let mut live: BTreeMap<u32, Gaussian3D> =
        set.iter_active().map(|(id, g)| (id, g.clone())).collect();
    let source_count = live.len() as u32;
    let mut next = live.keys().max().map_or(0, |m| m + 1);
    let mut records = Vec::new();
    let mut step = 0;
    while live.len() > target {
        let (&sid, _) = live
            .iter()
            .min_by(|a, b| det_cov(a.1).total_cmp(&det_cov(b.1)).then(a.0.cmp(b.0)))
            .unwrap();
        let su = live[&sid].center;
        let (&pid, _) = live
            .iter()
            .filter(|(id, _)| **id != sid)
            .map(|(id, g)| {
                let w = if beta == 0.0 { 1.0 } else { moments(g).m0.powf(beta) };
                let d = g.center - su;
                (id, (d.x * d.x + d.y * d.y + d.z * d.z).sqrt() / w)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(b.0)))
            .unwrap();
        let a = live.remove(&sid).unwrap();
        let b = live.remove(&pid).unwrap();
        let (parent, _) = merge(&a, &b).unwrap();
        live.insert(next, parent.clone());
        records.push(MergeRecord {
            step,
            parent_id: next,
            child1_id: sid,
            child2_id: pid,
            child1: a,
            child2: b,
            parent,
        });
        next += 1;
        step += 1;
    }
    MergeSequence {
        records,
        source_count,
    }
}

/// Frontiers by recursion on depth: `frontier(l)` of a subtree is the node
/// itself at `l == 0` and the children's frontiers at `l - 1` otherwise.
pub fn recursive_levels(tree: &HierarchyTree) -> Vec<Vec<u32>> {
    fn height(tree: &HierarchyTree, id: u32) -> usize {
        match tree.nodes[&id].children {
            None => 0,
            Some((a, b)) => 1 + height(tree, a).max(height(tree, b)),
        }
    }
    fn frontier(tree: &HierarchyTree, id: u32, l: usize, out: &mut Vec<u32>) {
        match tree.nodes[&id].children {
            Some((a, b)) if l > 0 => {
                frontier(tree, a, l - 1, out);
                frontier(tree, b, l - 1, out);
            }
            _ => out.push(id),
        }
    }
    (0..=height(tree, tree.root_id))
        .map(|l| {
            let mut v = Vec::new();
            frontier(tree, tree.root_id, l, &mut v);
            v
        })
        .collect()
}

/// Strict ancestors by walking parent links.
pub fn ancestors(tree: &HierarchyTree, id: u32) -> BTreeSet<u32> {
    let mut out = BTreeSet::new();
    let mut cur = tree.nodes[&id].parent;
    while let Some(p) = cur {
        out.insert(p);
        cur = tree.nodes[&p].parent;
    }
    out
}

/// Node ids in breadth-first order, children in stored order.
pub fn bfs_order(tree: &HierarchyTree) -> Vec<u32> {
    let mut out = Vec::new();
    let mut queue = VecDeque::from([tree.root_id]);
    while let Some(id) = queue.pop_front() {
        out.push(id);
        if let Some((a, b)) = tree.nodes[&id].children {
            queue.push_back(a);
            queue.push_back(b);
        }
    }
    out
}

/// A random full binary tree with `leaves` leaves and arbitrary shape,
/// with ids and levels filled in the same way as a built hierarchy.
pub fn random_tree<R: Rng>(rng: &mut R, leaves: usize) -> HierarchyTree {
    // Grow by splitting a uniformly chosen leaf.
    let mut children: BTreeMap<u32, (u32, u32)> = BTreeMap::new();
    let mut parent: BTreeMap<u32, u32> = BTreeMap::new();
    let mut current = vec![0u32];
    let mut next = 1u32;
    while current.len() < leaves {
        let i = rng.gen_range(0..current.len());
        let id = current.swap_remove(i);
        children.insert(id, (next, next + 1));
        parent.insert(next, id);
        parent.insert(next + 1, id);
        current.push(next);
        current.push(next + 1);
        next += 2;
    }
    let mut nodes = BTreeMap::new();
    for id in 0..next {
        nodes.insert(
            id,
            TreeNode {
                payload: Gaussian3D::isotropic(
                    Vector3::new(rng.gen(), rng.gen(), rng.gen()),
                    rng.gen_range(0.05..1.0),
                    rng.gen_range(0.01..0.2),
                ),
                parent: parent.get(&id).copied(),
                children: children.get(&id).copied(),
                created_level: 0,
                split_level: None,
            },
        );
    }
    let mut tree = HierarchyTree { nodes, root_id: 0 };
    // Levels straight from the definition: depth below the root.
    let levels = recursive_levels(&tree);
    for (l, level) in levels.iter().enumerate() {
        for id in level {
            let node = tree.nodes.get_mut(id).unwrap();
            if node.children.is_some() {
                node.split_level = Some(l as u32 + 1);
            }
        }
    }
    let ids: Vec<u32> = tree.nodes.keys().copied().collect();
    for id in ids {
        let depth = ancestors(&tree, id).len() as u32;
        tree.nodes.get_mut(&id).unwrap().created_level = depth;
    }
    tree
}

/// SSIM with a directly evaluated 2D window at every valid position.
pub fn naive_ssim(a: &Image, b: &Image) -> f64 {
    let (w, h) = (a.width, a.height);
    let mut win = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in 0..3 {
        for y0 in 0..=h - 11 {
            for x0 in 0..=w - 11 {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (i, row) in win.iter().enumerate() {
                    for (j, wt) in row.iter().enumerate() {
                        let wt = wt / total;
                        let x = a.pixel(x0 + j, y0 + i)[c] as f64;
                        let y = b.pixel(x0 + j, y0 + i)[c] as f64;
                        mx += wt * x;
                        my += wt * y;
                        sxx += wt * x * x;
                        syy += wt * y * y;
                        sxy += wt * x * y;
                    }
                }
                let vx = sxx - mx * mx;
                let vy = syy - my * my;
                let cov = sxy - mx * my;
                sum += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    sum / count as f64
}

pub fn random_image<R: Rng>(rng: &mut R, w: usize, h: usize) -> Image {
    Image::from_data(w, h, (0..w * h * 3).map(|_| rng.gen()).collect()).unwrap()
}
