//! Oracle-equivalence suites over seeded fixtures.
//!
//! Each suite checks a fast path against a brute-force reference. The
//! references here are deliberately naive and share no code with the paths
//! they check beyond the data types.

use std::collections::BTreeSet;

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::fixtures;
use crate::gaussian::{merge_detailed, moments};
use crate::hierarchy::{build_tree, level_sets, HierarchyTree};
use crate::masks::{causal_mask, levelwise_mask, tree_mask};
use crate::metrics::{gaussian_taps, ssim, SSIM_K1, SSIM_K2, SSIM_WINDOW};
use crate::render::{orbit_cameras, render_with_workers, Image};
use crate::simplify::{expand, replay, simplify, NeighborSearch, SimplifyConfig};
use crate::tokenize::{bin_center, dequantize, fit_quant_spec, fit_quant_spec_trees, quantize, tokenize_tree, ATTRIBUTES};

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
    pub failures: usize,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn suite(name: &str, cases: usize, outcome: Result<std::result::Result<(), String>>) -> SuiteResult {
    let (passed, detail) = match outcome {
        Ok(Ok(())) => (true, "ok".to_string()),
        Ok(Err(msg)) => (false, msg),
        Err(e) => (false, format!("error: {e}")),
    };
    SuiteResult {
        name: name.to_string(),
        passed,
        cases,
        detail,
    }
}

/// Runs every suite with fixtures derived from `seed`.
pub fn run_all(seed: u64) -> VerifyReport {
    let suites = vec![
        suite("merge-bookkeeping", 200, merge_bookkeeping(seed, 200)),
        suite("simplify-equivalence", 4, simplify_equivalence(seed, 4, 300)),
        suite("reversibility", 3, reversibility(seed)),
        suite("hierarchy-leaves", 3, hierarchy_leaves(seed)),
        suite("mask-oracles", 30, mask_oracles(seed, 30)),
        suite("quantization-roundtrip", 2000, quantization_roundtrip(seed, 2000)),
        suite("ssim-reference", 3, ssim_reference(seed, 3)),
        suite("render-partitions", 2, render_partitions(seed)),
    ];
    let failures = suites.iter().filter(|s| !s.passed).count();
    VerifyReport {
        seed,
        suites,
        failures,
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

pub fn merge_bookkeeping(seed: u64, pairs: usize) -> Result<std::result::Result<(), String>> {
    let mut rng = fixtures::rng(seed ^ 0x6d65_7267);
    for i in 0..pairs {
        let a = fixtures::random_gaussian(&mut rng);
        let b = fixtures::random_gaussian(&mut rng);
        let out = merge_detailed(&a, &b)?;
        let swapped = merge_detailed(&b, &a)?;
        if !out.gaussian.bits_eq(&swapped.gaussian) {
            return Ok(Err(format!("pair {i}: merge is not symmetric")));
        }
        let (ma, mb, mc) = (moments(&a), moments(&b), out.cross.moments());
        if !rel_close(out.moments.m0 + mc.m0, ma.m0 + mb.m0, 1e-9) {
            return Ok(Err(format!("pair {i}: zeroth moment not conserved")));
        }
        let lhs = out.moments.m1 + mc.m1;
        let rhs = ma.m1 + mb.m1;
        if (lhs - rhs).norm() > 1e-9 * rhs.norm().max(ma.m1.norm() + mb.m1.norm()) {
            return Ok(Err(format!("pair {i}: first moment not conserved")));
        }
    }
    Ok(Ok(()))
}

pub fn simplify_equivalence(seed: u64, sets: usize, n: usize) -> Result<std::result::Result<(), String>> {
    for k in 0..sets {
        let set = fixtures::random_clusters(seed.wrapping_add(k as u64), n, 3 + k);
        let beta = if k % 2 == 0 { 0.0 } else { 0.5 };
        let fast = simplify(&set, 1, &SimplifyConfig { beta, search: NeighborSearch::Accelerated })?;
        let slow = simplify(&set, 1, &SimplifyConfig { beta, search: NeighborSearch::ReferenceScan })?;
        if !fast.bits_eq(&slow) {
            return Ok(Err(format!("set {k}: accelerated and reference sequences differ")));
        }
    }
    Ok(Ok(()))
}

pub fn reversibility(seed: u64) -> Result<std::result::Result<(), String>> {
    for (k, n) in [2usize, 10, 200].into_iter().enumerate() {
        let set = fixtures::random_clusters(seed.wrapping_add(100 + k as u64), n, 4);
        let seq = simplify(&set, 1, &SimplifyConfig::default())?;
        let roots = replay(&set, &seq, seq.len())?;
        let back = expand(&roots, &seq, seq.len())?;
        if !back.bits_eq(&set) {
            return Ok(Err(format!("n = {n}: expansion does not restore the input")));
        }
    }
    Ok(Ok(()))
}

pub fn hierarchy_leaves(seed: u64) -> Result<std::result::Result<(), String>> {
    for (k, n) in [2usize, 33, 256].into_iter().enumerate() {
        let set = fixtures::random_clusters(seed.wrapping_add(200 + k as u64), n, 5);
        let seq = simplify(&set, 1, &SimplifyConfig::default())?;
        let tree = build_tree(&seq)?;
        let mut leaves: Vec<_> = tree.leaves().map(|(id, n)| (id, n.payload.clone())).collect();
        leaves.sort_by_key(|(id, _)| *id);
        if leaves.len() != set.len()
            || leaves
                .iter()
                .zip(set.ids.iter().zip(&set.gaussians))
                .any(|((a, ga), (b, gb))| a != b || !ga.bits_eq(gb))
        {
            return Ok(Err(format!("n = {n}: leaves differ from the input set")));
        }
        let sizes = level_sets(&tree).sizes();
        if sizes.windows(2).any(|w| !(w[1] > w[0] && w[1] <= 2 * w[0])) {
            return Ok(Err(format!("n = {n}: level sizes {sizes:?} not strictly growing")));
        }
    }
    Ok(Ok(()))
}

/// Frontier and ancestor sets recomputed by walking parent links and
/// explicit per-level membership lists.
fn oracle_rows(tree: &HierarchyTree, order: &[u32]) -> (Vec<BTreeSet<u32>>, Vec<BTreeSet<u32>>) {
    let levels = level_sets(tree).levels;
    let depth_of = |id: u32| {
        let mut d = 0;
        let mut at = tree.nodes[&id].parent;
        while let Some(p) = at {
            d += 1;
            at = tree.nodes[&p].parent;
        }
        d
    };
    let mut lw = Vec::new();
    let mut tr = Vec::new();
    for &id in order {
        let d = depth_of(id);
        let mut row: BTreeSet<u32> = BTreeSet::from([id]);
        if d > 0 {
            row.extend(levels[d - 1].iter().copied());
        }
        let mut anc = row.clone();
        let mut at = tree.nodes[&id].parent;
        while let Some(p) = at {
            anc.insert(p);
            at = tree.nodes[&p].parent;
        }
        lw.push(row);
        tr.push(anc);
    }
    (lw, tr)
}

pub fn mask_oracles(seed: u64, trees: usize) -> Result<std::result::Result<(), String>> {
    let mut rng = fixtures::rng(seed ^ 0x6d61_736b);
    for t in 0..trees {
        let n = rng.gen_range(1..=32usize);
        let set = fixtures::random_set(rng.gen(), n);
        let tree = if n == 1 {
            HierarchyTree::single(0, set.gaussians[0].clone())
        } else {
            build_tree(&simplify(&set, 1, &SimplifyConfig::default())?)?
        };
        let spec = fit_quant_spec_trees([&tree])?;
        let tokens = tokenize_tree(&tree, &spec);
        let order: Vec<u32> = tokens.iter().map(|t| t.node_id).collect();
        let (lw_rows, tr_rows) = oracle_rows(&tree, &order);
        let lw = levelwise_mask(&tokens, &tree)?;
        let tr = tree_mask(&tokens, &tree)?;
        let causal = causal_mask(tokens.len());
        for q in 0..tokens.len() {
            for (k, id) in order.iter().enumerate() {
                if lw.get(q, k) != lw_rows[q].contains(id) || tr.get(q, k) != tr_rows[q].contains(id) {
                    return Ok(Err(format!("tree {t}: mask cell ({q}, {k}) disagrees with oracle")));
                }
            }
        }
        if !lw.is_subset_of(&tr) || !tr.is_subset_of(&causal) {
            return Ok(Err(format!("tree {t}: subset chain broken")));
        }
    }
    Ok(Ok(()))
}

pub fn quantization_roundtrip(seed: u64, samples: usize) -> Result<std::result::Result<(), String>> {
    let set = fixtures::random_set(seed ^ 0x7175_616e, samples);
    let spec = fit_quant_spec(&set.gaussians)?;
    for (i, g) in set.gaussians.iter().enumerate() {
        let bins = quantize(g, &spec);
        let back = dequantize(&bins, &spec);
        let pairs = [
            (g.center.x, back.center.x, 0),
            (g.center.y, back.center.y, 1),
            (g.center.z, back.center.z, 2),
            (g.scale.x.ln(), back.scale.x.ln(), 3),
            (g.scale.y.ln(), back.scale.y.ln(), 4),
            (g.scale.z.ln(), back.scale.z.ln(), 5),
            (g.opacity, back.opacity, 10),
            (g.sh_dc[0], back.sh_dc[0], 11),
            (g.sh_dc[1], back.sh_dc[1], 12),
            (g.sh_dc[2], back.sh_dc[2], 13),
        ];
        for (v, w, a) in pairs {
            let half = 0.5 * spec.bin_width(a);
            if (v - w).abs() > half * (1.0 + 1e-9) {
                return Ok(Err(format!("sample {i} attribute {a}: error exceeds half a bin")));
            }
        }
        for a in 0..ATTRIBUTES {
            let c = bin_center(bins[a], spec.min[a], spec.max[a]);
            if !(c > spec.min[a] && c < spec.max[a]) {
                return Ok(Err(format!("sample {i} attribute {a}: bin center out of range")));
            }
        }
    }
    Ok(Ok(()))
}

/// Direct 2D sliding-window SSIM, one window at a time.
pub fn naive_ssim(a: &Image, b: &Image) -> f64 {
    let taps = gaussian_taps();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let (w, h) = (a.width, a.height);
    let mut total = 0.0;
    for c in 0..3 {
        let mut acc = 0.0;
        let mut count = 0usize;
        for y0 in 0..=h - SSIM_WINDOW {
            for x0 in 0..=w - SSIM_WINDOW {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..SSIM_WINDOW {
                    for dx in 0..SSIM_WINDOW {
                        let wt = taps[dy] * taps[dx];
                        let i = ((y0 + dy) * w + x0 + dx) * 3 + c;
                        let (p, q) = (a.data[i] as f64, b.data[i] as f64);
                        mx += wt * p;
                        my += wt * q;
                        sxx += wt * p * p;
                        syy += wt * q * q;
                        sxy += wt * p * q;
                    }
                }
                let vx = sxx - mx * mx;
                let vy = syy - my * my;
                let cov = sxy - mx * my;
                acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        total += acc / count as f64;
    }
    total / 3.0
}

pub fn ssim_reference(seed: u64, pairs: usize) -> Result<std::result::Result<(), String>> {
    let mut rng = fixtures::rng(seed ^ 0x7373_696d);
    for p in 0..pairs {
        let (w, h) = (rng.gen_range(11..40), rng.gen_range(11..40));
        let a: Vec<f32> = (0..w * h * 3).map(|_| rng.gen()).collect();
        let b: Vec<f32> = a.iter().map(|v| (v + rng.gen_range(-0.2f32..0.2)).clamp(0.0, 1.0)).collect();
        let a = Image::from_data(w, h, a)?;
        let b = Image::from_data(w, h, b)?;
        let fast = ssim(&a, &b)?;
        let slow = naive_ssim(&a, &b);
        if (fast - slow).abs() > 1e-6 {
            return Ok(Err(format!("pair {p}: ssim {fast} vs reference {slow}")));
        }
    }
    Ok(Ok(()))
}

pub fn render_partitions(seed: u64) -> Result<std::result::Result<(), String>> {
    for k in 0..2u64 {
        let set = fixtures::random_clusters(seed.wrapping_add(300 + k), 150, 4);
        let cam = &orbit_cameras(&set, 8, 40, 32)[k as usize * 3];
        let one = render_with_workers(&set, cam, 1);
        for workers in [2, 8] {
            if !render_with_workers(&set, cam, workers).bits_eq(&one) {
                return Ok(Err(format!("object {k}: {workers} workers change the image")));
            }
        }
    }
    Ok(Ok(()))
}
