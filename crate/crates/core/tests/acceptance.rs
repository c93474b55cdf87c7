//! Acceptance suite. Each criterion runs at its stated tolerance and time
//! budget and prints one PASS/FAIL line; the process exits nonzero if any
//! criterion fails.
//!
//! Run alone with `cargo test -p splat-lod --test acceptance`.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rand::Rng;

use common::oracle::{ancestors, naive_ssim, random_image, random_tree, recursive_levels};
use splat_lod::fixtures;
use splat_lod::gaussian::{merge, merge_detailed, moments, Gaussian3D};
use splat_lod::hierarchy::{build_tree, level_sets};
use splat_lod::io::formats::{decode_tokens, encode_tokens};
use splat_lod::io::TokenFile;
use splat_lod::masks::{build_mask, MaskVariant};
use splat_lod::metrics::{psnr, ssim};
use splat_lod::render::{orbit_cameras, render, render_with_workers};
use splat_lod::simplify::{expand, replay, simplify, SimplifyConfig};
use splat_lod::tokenize::{
    attributes, bin_center, fit_quant_spec, fit_quant_spec_trees, quantize, tokenize_tree,
    ATTRIBUTES,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn moment_formula() -> Outcome {
    let unit = Gaussian3D::isotropic(Vector3::zeros(), 1.0, 1.0);
    let want = (2.0 * std::f64::consts::PI).powf(1.5);
    let err = (moments(&unit).m0 - want).abs();
    check(err <= 1e-9, || format!("unit m0 off by {err:e}"))?;

    let mut rng = fixtures::rng(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut g = fixtures::random_gaussian(&mut rng);
        g.scale = Vector3::from_fn(|_, _| rng.gen_range(0.3..1.0));
        let grid = grid_mass(&g, 48);
        worst = worst.max((moments(&g).m0 - grid).abs() / grid);
    }
    check(worst <= 1e-3, || format!("grid relative error {worst:e}"))?;
    Ok(format!("unit error {err:.1e}, worst grid error {worst:.1e}"))
}

fn grid_mass(g: &Gaussian3D, n: usize) -> f64 {
    let cov = g.covariance();
    let inv = cov.try_inverse().expect("positive definite");
    let half = Vector3::from_fn(|i, _| 6.0 * cov[(i, i)].sqrt());
    let h = half * 2.0 / n as f64;
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let d = Vector3::new(
                    -half.x + (i as f64 + 0.5) * h.x,
                    -half.y + (j as f64 + 0.5) * h.y,
                    -half.z + (k as f64 + 0.5) * h.z,
                );
                sum += (-0.5 * d.dot(&(inv * d))).exp();
            }
        }
    }
    g.opacity * sum * h.x * h.y * h.z
}

fn merge_bookkeeping() -> Outcome {
    let mut rng = fixtures::rng(102);
    let (mut worst0, mut worst1) = (0.0f64, 0.0f64);
    for i in 0..1000 {
        let a = fixtures::random_gaussian(&mut rng);
        let b = fixtures::random_gaussian(&mut rng);
        let out = merge_detailed(&a, &b).map_err(|e| format!("pair {i}: {e}"))?;
        let (ma, mb, mc) = (moments(&a), moments(&b), out.cross.moments());
        let r0 = ma.m0 + mb.m0;
        worst0 = worst0.max((out.moments.m0 + mc.m0 - r0).abs() / r0);
        let r1 = ma.m1 + mb.m1;
        let scale = ma.m1.norm() + mb.m1.norm();
        worst1 = worst1.max((out.moments.m1 + mc.m1 - r1).norm() / scale);
        let (ba, _) = merge(&b, &a).map_err(|e| e.to_string())?;
        check(out.gaussian.bits_eq(&ba), || format!("pair {i} is not symmetric"))?;
    }
    check(worst0 <= 1e-9 && worst1 <= 1e-9, || {
        format!("m0 error {worst0:e}, m1 error {worst1:e}")
    })?;
    Ok(format!("m0 {worst0:.1e}, m1 {worst1:.1e}, 1000/1000 symmetric"))
}

fn oracle_equivalence() -> Outcome {
    for seed in 0..20 {
        let set = fixtures::random_set(1000 + seed, 1000);
        let fast = simplify(&set, 1, &SimplifyConfig::default()).map_err(|e| e.to_string())?;
        let slow = simplify(&set, 1, &SimplifyConfig::reference()).map_err(|e| e.to_string())?;
        check(fast.bits_eq(&slow), || format!("set {seed} differs"))?;
        check(fast.len() == 999, || format!("set {seed}: {} records", fast.len()))?;
    }
    Ok("20 sets of 1000, sequences bitwise equal".into())
}

fn reversibility() -> Outcome {
    for n in [2usize, 10, 100, 1000] {
        let set = fixtures::random_set(200 + n as u64, n);
        let seq = simplify(&set, 1, &SimplifyConfig::default()).map_err(|e| e.to_string())?;
        let root = replay(&set, &seq, seq.len()).map_err(|e| e.to_string())?;
        check(root.len() == 1, || format!("n={n}: {} roots", root.len()))?;
        let back = expand(&root, &seq, seq.len()).map_err(|e| e.to_string())?;
        check(back.bits_eq(&set), || format!("n={n} did not round trip"))?;
    }
    Ok("n = 2, 10, 100, 1000 bitwise".into())
}

fn hierarchy() -> Outcome {
    let mut depths = Vec::new();
    for seed in 0..10 {
        let set = fixtures::random_clusters(300 + seed, 1024, 8);
        let seq = simplify(&set, 1, &SimplifyConfig::default()).map_err(|e| e.to_string())?;
        let tree = build_tree(&seq).map_err(|e| e.to_string())?;
        let leaves: BTreeSet<u32> = tree.leaves().map(|(id, _)| id).collect();
        let ids: BTreeSet<u32> = set.ids.iter().copied().collect();
        check(leaves == ids, || format!("seed {seed}: leaf ids differ"))?;
        for (id, node) in tree.leaves() {
            check(node.payload.bits_eq(set.get(id).unwrap()), || {
                format!("seed {seed}: leaf {id} payload differs")
            })?;
        }
        let levels = level_sets(&tree);
        check(levels.levels == recursive_levels(&tree), || {
            format!("seed {seed}: level sets differ from recursion")
        })?;
        let sizes = levels.sizes();
        for w in sizes.windows(2) {
            check(w[1] > w[0] && w[1] <= 2 * w[0], || {
                format!("seed {seed}: level sizes {sizes:?}")
            })?;
        }
        depths.push(levels.depth());
    }
    let max = *depths.iter().max().unwrap();
    check(max <= 40, || format!("depth {max} exceeds 40"))?;
    Ok(format!("depths {depths:?} (bound 40)"))
}

fn masks() -> Outcome {
    let mut rng = fixtures::rng(104);
    let mut cells = 0usize;
    for t in 0..100 {
        let leaves = rng.gen_range(1..=32);
        let tree = random_tree(&mut rng, leaves);
        let spec = fit_quant_spec_trees([&tree]).map_err(|e| e.to_string())?;
        let tokens = tokenize_tree(&tree, &spec);
        let n = tokens.len();
        let frontiers: Vec<BTreeSet<u32>> = recursive_levels(&tree)
            .into_iter()
            .map(|l| l.into_iter().collect())
            .collect();
        let lw = build_mask(MaskVariant::Levelwise, &tokens, &tree).map_err(|e| e.to_string())?;
        let tr = build_mask(MaskVariant::Tree, &tokens, &tree).map_err(|e| e.to_string())?;
        let causal = build_mask(MaskVariant::Causal, &tokens, &tree).map_err(|e| e.to_string())?;
        for q in 0..n {
            let l = tokens[q].level as usize;
            let anc = ancestors(&tree, tokens[q].node_id);
            for k in 0..n {
                let key = tokens[k].node_id;
                let want_lw = q == k || (l > 0 && frontiers[l - 1].contains(&key));
                let want_tr = want_lw || anc.contains(&key);
                check(lw.get(q, k) == want_lw && tr.get(q, k) == want_tr, || {
                    format!("tree {t}: cell ({q}, {k}) differs")
                })?;
                check(!lw.get(q, k) || tr.get(q, k), || format!("tree {t}: levelwise ⊄ tree"))?;
                check(!tr.get(q, k) || causal.get(q, k), || format!("tree {t}: tree ⊄ causal"))?;
                cells += 1;
            }
        }
    }
    Ok(format!("100 trees, {cells} cells exact"))
}

fn quantization() -> Outcome {
    let set = fixtures::random_set(105, 7143);
    let spec = fit_quant_spec(&set.gaussians).map_err(|e| e.to_string())?;
    let mut values = 0usize;
    let mut worst = 0.0f64;
    for g in &set.gaussians {
        let raw = attributes(g);
        let bins = quantize(g, &spec);
        for a in 0..ATTRIBUTES {
            let back = bin_center(bins[a], spec.min[a], spec.max[a]);
            let ratio = (back - raw[a]).abs() / (spec.bin_width(a) / 2.0);
            worst = worst.max(ratio);
            values += 1;
        }
    }
    check(values >= 100_000, || format!("only {values} values"))?;
    check(worst <= 1.0 + 1e-9, || format!("error reaches {worst} half-bins"))?;

    let tree_set = fixtures::random_clusters(106, 600, 6);
    let seq = simplify(&tree_set, 1, &SimplifyConfig::default()).map_err(|e| e.to_string())?;
    let tree = build_tree(&seq).map_err(|e| e.to_string())?;
    let tspec = fit_quant_spec_trees([&tree]).map_err(|e| e.to_string())?;
    let tokens = tokenize_tree(&tree, &tspec);
    let depth = tokens.iter().map(|t| t.level).max().unwrap_or(0);
    let file = TokenFile {
        spec: tspec,
        depth,
        tokens,
    };
    let bytes = encode_tokens(&file);
    let back = decode_tokens(&bytes).map_err(|e| e.to_string())?;
    check(back == file && encode_tokens(&back) == bytes, || {
        "token file does not round trip".into()
    })?;
    Ok(format!(
        "{values} values, worst {worst:.3} half-bins; {} tokens bitwise",
        file.tokens.len()
    ))
}

fn renderer_metrics() -> Outcome {
    let mut rng = fixtures::rng(107);
    let mut worst = 0.0f64;
    for i in 0..10 {
        let a = random_image(&mut rng, 32, 24);
        let mut b = a.clone();
        let shift: f32 = rng.gen_range(0.0..0.3);
        for v in b.data.iter_mut().step_by(i + 2) {
            *v = (*v + shift).min(1.0);
        }
        let p = psnr(&a, &a).map_err(|e| e.to_string())?;
        check(p == 100.0, || format!("psnr(a, a) = {p}"))?;
        let s = ssim(&a, &a).map_err(|e| e.to_string())?;
        check((s - 1.0).abs() < 1e-12, || format!("ssim(a, a) = {s}"))?;
        let fast = ssim(&a, &b).map_err(|e| e.to_string())?;
        worst = worst.max((fast - naive_ssim(&a, &b)).abs());
    }
    check(worst <= 1e-6, || format!("ssim differs by {worst:e}"))?;

    for seed in 0..3 {
        let set = fixtures::random_clusters(400 + seed, 500, 6);
        for cam in orbit_cameras(&set, 4, 96, 72) {
            let one = render_with_workers(&set, &cam, 1);
            for w in [2, 8] {
                check(render_with_workers(&set, &cam, w).bits_eq(&one), || {
                    format!("object {seed}: {w} workers differ")
                })?;
            }
        }
    }
    Ok(format!("ssim vs direct window {worst:.1e}; workers 1/2/8 bitwise"))
}

fn degradation_trend() -> Outcome {
    const FRACTIONS: [usize; 5] = [100, 75, 50, 25, 10];
    let objects = 20;
    let n = 400;
    let mut sums = [0.0f64; FRACTIONS.len()];
    for obj in 0..objects {
        let set = fixtures::random_clusters(1000 + obj, n, 6);
        let seq = simplify(&set, 1, &SimplifyConfig::default()).map_err(|e| e.to_string())?;
        let cams = orbit_cameras(&set, 8, 64, 64);
        let refs: Vec<_> = cams.iter().map(|c| render(&set, c)).collect();
        for (f, frac) in FRACTIONS.iter().enumerate() {
            let keep = (n * frac).div_ceil(100).max(1);
            let lod = replay(&set, &seq, n - keep).map_err(|e| e.to_string())?;
            for (cam, reference) in cams.iter().zip(&refs) {
                sums[f] += psnr(reference, &render(&lod, cam)).map_err(|e| e.to_string())?;
            }
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / (objects * 8) as f64).collect();
    for w in means.windows(2) {
        check(w[1] <= w[0], || format!("mean PSNR not monotone: {means:.2?}"))?;
    }
    Ok(format!("{objects} objects x 8 views, mean PSNR {means:.2?} dB"))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("moment formula", Duration::from_secs(10), moment_formula),
        ("merge bookkeeping", Duration::from_secs(5), merge_bookkeeping),
        ("oracle equivalence", Duration::from_secs(120), oracle_equivalence),
        ("reversibility", Duration::from_secs(60), reversibility),
        ("hierarchy", Duration::from_secs(60), hierarchy),
        ("masks", Duration::from_secs(30), masks),
        ("quantization", Duration::from_secs(10), quantization),
        ("renderer/metrics", Duration::from_secs(60), renderer_metrics),
        ("degradation trend", Duration::from_secs(300), degradation_trend),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget")),
            Err(e) => (false, e),
        };
        failed += !ok as usize;
        println!(
            "{} {name:<20} {:>8.2}s / {:>3}s  {detail}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
