//! Browser demo bindings: one synthetic object, simplified once, explored
//! by retained fraction, attention mask variant and hierarchy level.

use wasm_bindgen::prelude::*;

use splat_lod::hierarchy::{build_tree, level_sets, HierarchyTree};
use splat_lod::masks::{build_mask, MaskVariant};
use splat_lod::metrics::psnr;
use splat_lod::render::{orbit_cameras, render, Camera};
use splat_lod::simplify::{replay, simplify, SimplifyConfig};
use splat_lod::tokenize::{fit_quant_spec_trees, tokenize_tree, TokenRecord};
use splat_lod::{fixtures, GaussianSet, MergeSequence};

const MAX_GAUSSIANS: usize = 4096;
const VIEWS: usize = 8;

#[wasm_bindgen]
pub struct Demo {
    set: GaussianSet,
    seq: MergeSequence,
    tree: Option<HierarchyTree>,
    tokens: Vec<TokenRecord>,
}

#[wasm_bindgen]
impl Demo {
    /// A clustered object of `n` Gaussians (clamped to 1..=4096).
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, n: u32, clusters: u32) -> Demo {
        let n = (n as usize).clamp(1, MAX_GAUSSIANS);
        let set = fixtures::random_clusters(seed as u64, n, clusters.max(1) as usize);
        let seq = simplify(&set, 1, &SimplifyConfig::default()).expect("fixture sets simplify");
        let tree = (!seq.is_empty()).then(|| build_tree(&seq).expect("complete sequence"));
        let tokens = match &tree {
            Some(t) => {
                let spec = fit_quant_spec_trees([t]).expect("non-empty tree");
                tokenize_tree(t, &spec)
            }
            None => Vec::new(),
        };
        Demo {
            set,
            seq,
            tree,
            tokens,
        }
    }

    pub fn gaussians(&self) -> u32 {
        self.set.len() as u32
    }

    pub fn token_count(&self) -> u32 {
        self.tokens.len() as u32
    }

    fn camera(&self, view: u32, width: u32, height: u32) -> Camera {
        let cams = orbit_cameras(&self.set, VIEWS, width.max(1) as usize, height.max(1) as usize);
        cams[view as usize % VIEWS].clone()
    }

    fn retained(&self, percent: f64) -> GaussianSet {
        let n = self.set.len();
        let keep = ((n as f64 * percent.clamp(0.0, 100.0) / 100.0).ceil() as usize).clamp(1, n);
        replay(&self.set, &self.seq, n - keep).expect("steps within the sequence")
    }

    /// RGBA pixels of `view` (0..8) with `percent` of the Gaussians kept.
    pub fn render_rgba(&self, percent: f64, view: u32, width: u32, height: u32) -> Vec<u8> {
        let cam = self.camera(view, width, height);
        render(&self.retained(percent), &cam).to_rgba8()
    }

    /// PSNR of the reduced render against the full one.
    pub fn psnr(&self, percent: f64, view: u32, width: u32, height: u32) -> f64 {
        let cam = self.camera(view, width, height);
        let full = render(&self.set, &cam);
        psnr(&full, &render(&self.retained(percent), &cam)).unwrap_or(f64::NAN)
    }

    /// Frontier sizes |N_0|, |N_1|, ... of the merge tree.
    pub fn level_sizes(&self) -> Vec<u32> {
        match &self.tree {
            Some(t) => level_sets(t).sizes().into_iter().map(|s| s as u32).collect(),
            None => vec![1],
        }
    }

    /// Row-major 0/1 mask cells over `token_count()²` for `causal`,
    /// `levelwise`, `tree` or `tree-all-internal`.
    pub fn mask(&self, variant: &str) -> Result<Vec<u8>, String> {
        let variant: MaskVariant = variant.parse().map_err(|e| format!("{e}"))?;
        let Some(tree) = &self.tree else {
            return Ok(vec![1]);
        };
        let m = build_mask(variant, &self.tokens, tree).map_err(|e| e.to_string())?;
        Ok(m.cells().iter().map(|c| *c as u8).collect())
    }

    /// Creation level of every token, in token order.
    pub fn token_levels(&self) -> Vec<u16> {
        if self.tokens.is_empty() {
            return vec![0];
        }
        self.tokens.iter().map(|t| t.level).collect()
    }
}
