//! 14-attribute, 256-bin quantization of Gaussians and tree-ordered token
//! lists.
//!
//! Attribute order: center x, y, z; scale x, y, z (log space);
//! quaternion w, x, y, z; opacity; DC color r, g, b.

use nalgebra::{Quaternion, Vector3};

use crate::error::{Error, Result};
use crate::gaussian::{canonical_quaternion, Gaussian3D};
use crate::hierarchy::{level_sets, HierarchyTree};

pub const ATTRIBUTES: usize = 14;
pub const BINS: usize = 256;

pub const ATTRIBUTE_NAMES: [&str; ATTRIBUTES] = [
    "center_x", "center_y", "center_z", "scale_x", "scale_y", "scale_z", "rot_w", "rot_x",
    "rot_y", "rot_z", "opacity", "dc_r", "dc_g", "dc_b",
];

const SCALE_ATTRS: std::ops::Range<usize> = 3..6;
const QUAT_ATTRS: std::ops::Range<usize> = 6..10;
const OPACITY_ATTR: usize = 10;

/// Set in token files: the first child of every split is the one with the
/// smaller covariance determinant (ties by smaller id).
pub const CHILD_ORDER_FLAG: u32 = 1 << 31;

/// Width added to a degenerate (`max == min`) range.
pub const DEGENERATE_WIDEN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantSpec {
    pub min: [f64; ATTRIBUTES],
    pub max: [f64; ATTRIBUTES],
    /// Attributes quantized in log space.
    pub log_scale: [bool; ATTRIBUTES],
    /// Attributes whose fitted range was degenerate and got widened.
    pub widened: [bool; ATTRIBUTES],
}

impl QuantSpec {
    pub fn bin_width(&self, attr: usize) -> f64 {
        (self.max[attr] - self.min[attr]) / BINS as f64
    }

    /// Packs the per-attribute flags: bits 0..14 log space, bits 16..30
    /// widened, bit 31 [`CHILD_ORDER_FLAG`].
    pub fn flag_bits(&self) -> u32 {
        let mut bits = CHILD_ORDER_FLAG;
        for a in 0..ATTRIBUTES {
            if self.log_scale[a] {
                bits |= 1 << a;
            }
            if self.widened[a] {
                bits |= 1 << (16 + a);
            }
        }
        bits
    }

    pub fn from_parts(min: [f64; ATTRIBUTES], max: [f64; ATTRIBUTES], flags: u32) -> Result<Self> {
        let mut log_scale = [false; ATTRIBUTES];
        let mut widened = [false; ATTRIBUTES];
        for a in 0..ATTRIBUTES {
            log_scale[a] = flags & (1 << a) != 0;
            widened[a] = flags & (1 << (16 + a)) != 0;
            if !(max[a] > min[a]) {
                return Err(Error::Format(format!(
                    "quantization range for {} is empty",
                    ATTRIBUTE_NAMES[a]
                )));
            }
        }
        Ok(Self {
            min,
            max,
            log_scale,
            widened,
        })
    }
}

/// Raw attribute vector in quantization space (log scales, canonical
/// quaternion).
pub fn attributes(g: &Gaussian3D) -> [f64; ATTRIBUTES] {
    let q = canonical_quaternion(g.rotation);
    [
        g.center.x,
        g.center.y,
        g.center.z,
        g.scale.x.ln(),
        g.scale.y.ln(),
        g.scale.z.ln(),
        q.w,
        q.i,
        q.j,
        q.k,
        g.opacity,
        g.sh_dc[0],
        g.sh_dc[1],
        g.sh_dc[2],
    ]
}

/// Per-attribute ranges over every Gaussian yielded by `gaussians`.
/// Quaternion components use `[-1, 1]` and opacity `[0, 1]` regardless of
/// the data.
pub fn fit_quant_spec<'a, I>(gaussians: I) -> Result<QuantSpec>
where
    I: IntoIterator<Item = &'a Gaussian3D>,
{
    let mut min = [f64::INFINITY; ATTRIBUTES];
    let mut max = [f64::NEG_INFINITY; ATTRIBUTES];
    let mut count = 0usize;
    for g in gaussians {
        count += 1;
        for (a, v) in attributes(g).into_iter().enumerate() {
            min[a] = min[a].min(v);
            max[a] = max[a].max(v);
        }
    }
    if count == 0 {
        return Err(Error::InvalidParameter(
            "cannot fit a quantization spec to an empty corpus".into(),
        ));
    }
    for a in QUAT_ATTRS {
        min[a] = -1.0;
        max[a] = 1.0;
    }
    min[OPACITY_ATTR] = 0.0;
    max[OPACITY_ATTR] = 1.0;

    let mut widened = [false; ATTRIBUTES];
    for a in 0..ATTRIBUTES {
        if !(max[a] > min[a]) {
            min[a] -= DEGENERATE_WIDEN / 2.0;
            max[a] += DEGENERATE_WIDEN / 2.0;
            widened[a] = true;
        }
    }
    let mut log_scale = [false; ATTRIBUTES];
    for a in SCALE_ATTRS {
        log_scale[a] = true;
    }
    Ok(QuantSpec {
        min,
        max,
        log_scale,
        widened,
    })
}

/// Fits over every node (internal and leaf) of each tree.
pub fn fit_quant_spec_trees<'a, I>(trees: I) -> Result<QuantSpec>
where
    I: IntoIterator<Item = &'a HierarchyTree>,
{
    fit_quant_spec(
        trees
            .into_iter()
            .flat_map(|t| t.nodes.values().map(|n| &n.payload)),
    )
}

#[inline]
fn bin_of(v: f64, min: f64, max: f64) -> (u8, bool) {
    let t = ((v - min) / (max - min) * BINS as f64).floor();
    if t < 0.0 || t.is_nan() {
        (0, v < min)
    } else if t > (BINS - 1) as f64 {
        (u8::MAX, v > max)
    } else {
        (t as u8, false)
    }
}

pub fn quantize(g: &Gaussian3D, spec: &QuantSpec) -> [u8; ATTRIBUTES] {
    quantize_counted(g, spec).0
}

/// Like [`quantize`], also returning how many attributes fell outside the
/// spec's range and were clamped.
pub fn quantize_counted(g: &Gaussian3D, spec: &QuantSpec) -> ([u8; ATTRIBUTES], usize) {
    let mut bins = [0u8; ATTRIBUTES];
    let mut clamps = 0;
    for (a, v) in attributes(g).into_iter().enumerate() {
        let (b, clamped) = bin_of(v, spec.min[a], spec.max[a]);
        bins[a] = b;
        clamps += clamped as usize;
    }
    (bins, clamps)
}

#[inline]
pub fn bin_center(bin: u8, min: f64, max: f64) -> f64 {
    min + (bin as f64 + 0.5) * (max - min) / BINS as f64
}

pub fn dequantize(bins: &[u8; ATTRIBUTES], spec: &QuantSpec) -> Gaussian3D {
    let v: [f64; ATTRIBUTES] =
        std::array::from_fn(|a| bin_center(bins[a], spec.min[a], spec.max[a]));
    let scale = Vector3::new(v[3], v[4], v[5]).map(f64::exp);
    let q = Quaternion::new(v[6], v[7], v[8], v[9]);
    let q = canonical_quaternion(q / q.norm());
    Gaussian3D {
        center: Vector3::new(v[0], v[1], v[2]),
        opacity: v[10].clamp(f64::MIN_POSITIVE, 1.0),
        scale,
        rotation: q,
        sh_dc: [v[11], v[12], v[13]],
        sh_rest: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenRecord {
    pub node_id: u32,
    pub parent_id: Option<u32>,
    pub level: u16,
    pub splittable: bool,
    pub bins: [u8; ATTRIBUTES],
}

/// One token per node, ordered by creation level, then by the position of
/// the parent token, then child index. The root comes first.
pub fn tokenize_tree(tree: &HierarchyTree, spec: &QuantSpec) -> Vec<TokenRecord> {
    let levels = level_sets(tree);
    let token = |id: u32| {
        let node = &tree.nodes[&id];
        TokenRecord {
            node_id: id,
            parent_id: node.parent,
            level: node.created_level as u16,
            splittable: node.children.is_some(),
            bins: quantize(&node.payload, spec),
        }
    };
    let mut out = Vec::with_capacity(tree.len());
    out.push(token(tree.root_id));
    // Walking each frontier in order and emitting the children of its
    // splittable members yields exactly the (level, parent position, child
    // index) order: the frontier lists parents in their token order.
    for level in &levels.levels {
        for id in level {
            if let Some((a, b)) = tree.nodes[id].children {
                out.push(token(a));
                out.push(token(b));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn single_gaussian_corpus_widens() {
        let g = Gaussian3D::isotropic(Vector3::new(0.2, 0.3, 0.4), 0.5, 0.1);
        let spec = fit_quant_spec([&g]).unwrap();
        for a in (0..3).chain(3..6).chain(11..14) {
            assert!(spec.widened[a], "{}", ATTRIBUTE_NAMES[a]);
            assert!(spec.max[a] > spec.min[a]);
        }
        assert!(!spec.widened[6] && !spec.widened[10]);
    }

    #[test]
    fn center_range() {
        let a = Gaussian3D::isotropic(Vector3::zeros(), 0.5, 0.1);
        let b = Gaussian3D::isotropic(Vector3::new(1.0, 1.0, 1.0), 0.5, 0.1);
        let spec = fit_quant_spec([&a, &b]).unwrap();
        assert_eq!((spec.min[0], spec.max[0]), (0.0, 1.0));
        assert_eq!(quantize(&a, &spec)[0], 0);
        assert_eq!(quantize(&b, &spec)[0], 255);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(fit_quant_spec(std::iter::empty()).is_err());
    }

    #[test]
    fn bin_centers() {
        assert_eq!(bin_center(0, 0.0, 256.0), 0.5);
        assert_eq!(bin_of(256.0, 0.0, 256.0), (255, false));
        assert_eq!(bin_of(300.0, 0.0, 256.0), (255, true));
        assert_eq!(bin_of(-1.0, 0.0, 256.0), (0, true));
    }

    #[test]
    fn dequantize_is_fixed_point_on_bins() {
        let set = fixtures::random_set(5, 50);
        let spec = fit_quant_spec(&set.gaussians).unwrap();
        let mut rng = fixtures::rng(9);
        for _ in 0..500 {
            let bins: [u8; ATTRIBUTES] = std::array::from_fn(|_| rand::Rng::gen(&mut rng));
            let g = dequantize(&bins, &spec);
            assert!((g.rotation.norm() - 1.0).abs() < 1e-9);
            let back = quantize(&g, &spec);
            // Quaternion renormalization moves values off bin centers; all
            // other attributes are exact fixed points.
            for a in (0..6).chain(10..14) {
                assert_eq!(back[a], bins[a], "{}", ATTRIBUTE_NAMES[a]);
            }
        }
    }

    #[test]
    fn quaternion_sign_does_not_matter() {
        let set = fixtures::random_set(6, 20);
        let spec = fit_quant_spec(&set.gaussians).unwrap();
        for g in &set.gaussians {
            let mut h = g.clone();
            h.rotation = -h.rotation;
            assert_eq!(quantize(g, &spec), quantize(&h, &spec));
        }
    }
}
