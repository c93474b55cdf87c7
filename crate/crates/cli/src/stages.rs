//! One function per pipeline stage. Every stage reads its inputs from
//! explicit paths and writes only inside the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use splat_lod::hierarchy::{build_tree, stats, HierarchyTree};
use splat_lod::io::{self, image::encode_ppm, TokenFile};
use splat_lod::masks::{build_mask, decode_cost, decode_cost_text, MaskVariant};
use splat_lod::metrics::{psnr, ssim};
use splat_lod::render::{orbit_cameras, render_with_workers, worker_count, Camera, Image};
use splat_lod::simplify::{expand, replay, simplify_with_stats, NeighborSearch, SimplifyConfig};
use splat_lod::tokenize::{fit_quant_spec_trees, tokenize_tree};
use splat_lod::{fixtures, verify, GaussianSet, MergeSequence};

use crate::UsageError;

pub const SET: &str = "set.ply";
pub const MERGES: &str = "merges.args";
pub const EXPANDED: &str = "expanded.ply";
pub const TREE: &str = "tree.txt";
pub const STATS: &str = "stats.json";
pub const TOKENS: &str = "tokens.argt";
pub const DECODE_COST: &str = "decode_cost.csv";
pub const METRICS: &str = "metrics.csv";
pub const VERIFY: &str = "verify.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecFrom {
    Corpus,
    Object,
}

impl std::str::FromStr for SpecFrom {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "corpus" => Ok(SpecFrom::Corpus),
            "object" => Ok(SpecFrom::Object),
            other => Err(format!("`{other}` is not corpus or object")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Size {
    pub width: usize,
    pub height: usize,
}

impl std::str::FromStr for Size {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("`{s}` is not WxH"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{s}`: {e}"));
        Ok(Size {
            width: parse(w)?,
            height: parse(h)?,
        })
    }
}

/// Comma-separated retained percentages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Levels(pub Vec<u32>);

impl std::str::FromStr for Levels {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = Vec::new();
        for part in s.split(',') {
            let v: u32 = part
                .trim()
                .parse()
                .map_err(|e| format!("level `{part}`: {e}"))?;
            if !(1..=100).contains(&v) {
                return Err(format!("level {v} is not a percentage in 1..=100"));
            }
            out.push(v);
        }
        Ok(Levels(out))
    }
}

impl Default for Levels {
    fn default() -> Self {
        Levels(vec![100, 75, 50, 25, 10])
    }
}

/// Mask selection: one variant or the three main ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantChoice {
    One(MaskVariant),
    All,
}

impl std::str::FromStr for VariantChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(VariantChoice::All);
        }
        s.parse::<MaskVariant>()
            .map(VariantChoice::One)
            .map_err(|e| e.to_string())
    }
}

impl VariantChoice {
    pub fn variants(self) -> Vec<MaskVariant> {
        match self {
            VariantChoice::One(v) => vec![v],
            VariantChoice::All => vec![MaskVariant::Causal, MaskVariant::Levelwise, MaskVariant::Tree],
        }
    }
}

fn write(out: &Path, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
    let path = out.join(name);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn ingest(out: &Path, input: Option<&Path>, synthetic: Option<(usize, usize)>, seed: u64) -> Result<GaussianSet> {
    let set = match (input, synthetic) {
        (Some(path), None) => io::load_ply(path).with_context(|| format!("loading {}", path.display()))?,
        (None, Some((n, clusters))) => {
            if n == 0 {
                return Err(UsageError("--synthetic needs at least one Gaussian".into()).into());
            }
            fixtures::random_clusters(seed, n, clusters)
        }
        (Some(_), Some(_)) => {
            return Err(UsageError("give either --input or --synthetic, not both".into()).into())
        }
        (None, None) => return Err(UsageError("ingest needs --input or --synthetic".into()).into()),
    };
    fs::create_dir_all(out)?;
    io::save_ply(&set, out.join(SET))?;
    eprintln!("ingest: {} gaussians -> {}", set.len(), out.join(SET).display());
    Ok(set)
}

pub fn simplify(out: &Path, set_path: &Path, target: usize, beta: f64, reference_scan: bool) -> Result<MergeSequence> {
    let set = io::load_ply(set_path).with_context(|| format!("loading {}", set_path.display()))?;
    let config = SimplifyConfig {
        beta,
        search: if reference_scan {
            NeighborSearch::ReferenceScan
        } else {
            NeighborSearch::Accelerated
        },
    };
    let (seq, st) = simplify_with_stats(&set, target, &config)?;
    fs::create_dir_all(out)?;
    io::save_sequence(&seq, out.join(MERGES))?;
    eprintln!(
        "simplify: {} -> {} gaussians in {} merges ({} opacity clamps)",
        set.len(),
        target,
        seq.len(),
        st.opacity_clamps
    );
    Ok(seq)
}

pub fn expand_stage(out: &Path, set_path: &Path, merges_path: &Path, steps: Option<usize>) -> Result<()> {
    let set = io::load_ply(set_path)?;
    let seq = io::load_sequence(merges_path)?;
    check_sources(&set, &seq)?;
    let roots = replay(&set, &seq, seq.len())?;
    let steps = steps.unwrap_or(seq.len());
    let expanded = expand(&roots, &seq, steps)?;
    fs::create_dir_all(out)?;
    io::save_ply(&expanded, out.join(EXPANDED))?;
    eprintln!("expand: {} roots + {steps} steps -> {} gaussians", roots.len(), expanded.len());
    Ok(())
}

fn check_sources(set: &GaussianSet, seq: &MergeSequence) -> Result<()> {
    if set.len() != seq.source_count as usize {
        return Err(UsageError(format!(
            "merge file was made from {} gaussians but the set has {}",
            seq.source_count,
            set.len()
        ))
        .into());
    }
    Ok(())
}

/// The merge tree; a one-Gaussian set has no records and becomes a lone leaf.
pub fn load_tree(set_path: &Path, merges_path: &Path) -> Result<HierarchyTree> {
    let seq = io::load_sequence(merges_path)?;
    if seq.is_empty() && seq.source_count == 1 {
        let set = io::load_ply(set_path)?;
        check_sources(&set, &seq)?;
        let (id, g) = set.iter_active().next().expect("one member");
        return Ok(HierarchyTree::single(id, g.clone()));
    }
    Ok(build_tree(&seq)?)
}

pub fn hierarchy(out: &Path, set_path: &Path, merges_path: &Path) -> Result<()> {
    let tree = load_tree(set_path, merges_path)?;
    let st = stats(&tree);
    write(out, TREE, tree.to_text())?;
    write(out, STATS, serde_json::to_string_pretty(&st)? + "\n")?;
    eprintln!("hierarchy: {} nodes, depth {}", tree.len(), st.depth);
    Ok(())
}

pub fn tokenize(
    out: &Path,
    set_path: &Path,
    merges_path: &Path,
    spec_from: SpecFrom,
    corpus: &[PathBuf],
) -> Result<()> {
    let tree = load_tree(set_path, merges_path)?;
    if spec_from == SpecFrom::Object && !corpus.is_empty() {
        return Err(UsageError("--corpus files need --spec-from corpus".into()).into());
    }
    let mut others = Vec::with_capacity(corpus.len());
    for path in corpus {
        let seq = io::load_sequence(path).with_context(|| format!("loading {}", path.display()))?;
        others.push(build_tree(&seq)?);
    }
    let spec = fit_quant_spec_trees(std::iter::once(&tree).chain(&others))?;
    let tokens = tokenize_tree(&tree, &spec);
    let depth = tokens.iter().map(|t| t.level).max().unwrap_or(0);
    let file = TokenFile { spec, depth, tokens };
    fs::create_dir_all(out)?;
    io::save_tokens(&file, out.join(TOKENS))?;
    eprintln!(
        "tokenize: {} tokens over {} levels (spec from {} tree(s))",
        file.tokens.len(),
        depth as usize + 1,
        1 + others.len()
    );
    Ok(())
}

pub fn masks(out: &Path, set_path: &Path, merges_path: &Path, tokens_path: &Path, choice: VariantChoice) -> Result<()> {
    let tree = load_tree(set_path, merges_path)?;
    let file = io::load_tokens(tokens_path)?;
    fs::create_dir_all(out)?;
    for variant in choice.variants() {
        let mask = build_mask(variant, &file.tokens, &tree)?;
        io::save_mask(&mask, out.join(format!("mask_{}.argm", variant.name())))?;
        write(out, &format!("mask_{}.txt", variant.name()), mask.to_text())?;
    }
    let mut costs = Vec::new();
    for variant in [MaskVariant::Causal, MaskVariant::Levelwise, MaskVariant::Tree] {
        costs.push((variant, decode_cost(&file.tokens, &tree, variant)?));
    }
    write(out, DECODE_COST, decode_cost_text(&costs))?;
    eprintln!("masks: {} tokens, variants {:?}", file.tokens.len(), choice.variants());
    Ok(())
}

fn check_size(size: Size, views: usize) -> Result<()> {
    if size.width == 0 || size.height == 0 || views == 0 {
        return Err(UsageError("views and image size must be positive".into()).into());
    }
    Ok(())
}

fn render_all(set: &GaussianSet, cams: &[Camera]) -> Vec<Image> {
    let workers = worker_count();
    cams.iter().map(|c| render_with_workers(set, c, workers)).collect()
}

pub fn render(out: &Path, set_path: &Path, views: usize, size: Size) -> Result<()> {
    check_size(size, views)?;
    let set = io::load_ply(set_path)?;
    let cams = orbit_cameras(&set, views, size.width, size.height);
    for (i, img) in render_all(&set, &cams).iter().enumerate() {
        write(out, &format!("views/view_{i:02}.ppm"), encode_ppm(img))?;
    }
    eprintln!("render: {views} views at {}x{}", size.width, size.height);
    Ok(())
}

/// One object's rows: every retained fraction rendered from the cameras of
/// the full set and compared with the full render, averaged over views.
fn object_rows(
    name: &str,
    set: &GaussianSet,
    seq: &MergeSequence,
    levels: &Levels,
    views: usize,
    size: Size,
    out: &Path,
    csv: &mut String,
) -> Result<()> {
    let n = set.active_count();
    let cams = orbit_cameras(set, views, size.width, size.height);
    let refs = render_all(set, &cams);
    for &level in &levels.0 {
        let keep = (n * level as usize).div_ceil(100).max(1);
        if n - keep > seq.len() {
            return Err(UsageError(format!(
                "level {level}% keeps {keep} of {n} gaussians but only {} merges were recorded",
                seq.len()
            ))
            .into());
        }
        let lod = replay(set, seq, n - keep)?;
        let imgs = render_all(&lod, &cams);
        let (mut p, mut s) = (0.0, 0.0);
        for (a, b) in refs.iter().zip(&imgs) {
            p += psnr(a, b)?;
            s += ssim(a, b)?;
        }
        writeln!(csv, "{name},{level},{:.6},{:.6}", p / views as f64, s / views as f64)?;
        write(out, &format!("previews/{name}_{level:03}.ppm"), encode_ppm(&imgs[0]))?;
    }
    Ok(())
}

pub enum MetricsSource<'a> {
    Files { set: &'a Path, merges: &'a Path },
    Synthetic { objects: usize, n: usize, clusters: usize, seed: u64 },
}

pub fn metrics(out: &Path, source: MetricsSource<'_>, levels: &Levels, views: usize, size: Size) -> Result<()> {
    check_size(size, views)?;
    if size.width < 11 || size.height < 11 {
        return Err(UsageError("SSIM needs images of at least 11x11".into()).into());
    }
    let mut csv = String::from("object,level,psnr,ssim\n");
    match source {
        MetricsSource::Files { set, merges } => {
            let name = set
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("object")
                .to_string();
            let set = io::load_ply(set)?;
            let seq = io::load_sequence(merges)?;
            check_sources(&set, &seq)?;
            object_rows(&name, &set, &seq, levels, views, size, out, &mut csv)?;
        }
        MetricsSource::Synthetic { objects, n, clusters, seed } => {
            for i in 0..objects {
                let set = fixtures::random_clusters(seed.wrapping_add(i as u64), n, clusters);
                let (seq, _) = simplify_with_stats(&set, 1, &SimplifyConfig::default())?;
                object_rows(&format!("synthetic_{i:03}"), &set, &seq, levels, views, size, out, &mut csv)?;
            }
        }
    }
    write(out, METRICS, &csv)?;
    eprintln!("metrics: {} rows -> {}", csv.lines().count() - 1, out.join(METRICS).display());
    Ok(())
}

/// Returns whether every suite passed.
pub fn verify_stage(out: &Path, seed: u64) -> Result<bool> {
    let report = verify::run_all(seed);
    write(out, VERIFY, serde_json::to_string_pretty(&report)? + "\n")?;
    for s in &report.suites {
        eprintln!("{} {}: {}", if s.passed { "ok  " } else { "FAIL" }, s.name, s.detail);
    }
    Ok(report.passed())
}
