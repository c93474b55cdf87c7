//! `splat-lod` command-line driver.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage, 3 format,
//! 4 numerical degeneracy, 5 I/O.

mod config;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use splat_lod::ErrorKind;

use config::Config;
use stages::{Levels, MetricsSource, Size, SpecFrom, VariantChoice};

const EXIT_VERIFY: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_FORMAT: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;
const EXIT_IO: u8 = 5;

const DEFAULT_CLUSTERS: usize = 8;
const DEFAULT_VIEWS: usize = 8;
const DEFAULT_SIZE: Size = Size {
    width: 64,
    height: 64,
};
const DEFAULT_OBJECT_SIZE: usize = 400;

/// Invalid flags, flag combinations or config values.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "splat-lod", version, about = "Gaussian splat LoD hierarchies, tokens and masks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory [default: out]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for synthetic fixtures [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// key=value file; flags override it, it overrides defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct SourceArgs {
    /// Splat PLY to ingest
    #[arg(long)]
    input: Option<PathBuf>,
    /// Generate N clustered synthetic Gaussians instead
    #[arg(long, value_name = "N")]
    synthetic: Option<usize>,
    /// Blob count for --synthetic [default: 8]
    #[arg(long)]
    clusters: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct SimplifyArgs {
    /// Gaussians left at the end [default: 1]
    #[arg(long)]
    target: Option<usize>,
    /// Partner distance is divided by m0^beta [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    /// Use the exhaustive scan instead of the kd-tree
    #[arg(long)]
    reference_scan: bool,
}

#[derive(Args, Clone, Default)]
struct RenderArgs {
    /// Number of orbit views [default: 8]
    #[arg(long)]
    views: Option<usize>,
    /// Image size as WxH [default: 64x64]
    #[arg(long)]
    size: Option<Size>,
}

#[derive(Subcommand)]
enum Command {
    /// Load a splat PLY (or make a synthetic set) and write set.ply
    Ingest(SourceArgs),
    /// Simplify set.ply and write the merge log merges.args
    Simplify {
        /// Set to simplify [default: <out>/set.ply]
        #[arg(long)]
        set: Option<PathBuf>,
        #[command(flatten)]
        args: SimplifyArgs,
    },
    /// Undo the last merges of a merge log and write expanded.ply
    Expand {
        #[arg(long)]
        set: Option<PathBuf>,
        #[arg(long)]
        merges: Option<PathBuf>,
        /// Merges to undo, newest first [default: all]
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Build the merge tree; writes tree.txt and stats.json
    Hierarchy {
        #[arg(long)]
        set: Option<PathBuf>,
        #[arg(long)]
        merges: Option<PathBuf>,
    },
    /// Quantize the tree into tokens.argt
    Tokenize {
        #[arg(long)]
        set: Option<PathBuf>,
        #[arg(long)]
        merges: Option<PathBuf>,
        /// Fit quantization ranges to this object or to a corpus [default: object]
        #[arg(long)]
        spec_from: Option<SpecFrom>,
        /// Extra merge logs in the corpus (with --spec-from corpus)
        #[arg(long, value_delimiter = ',')]
        corpus: Vec<PathBuf>,
    },
    /// Build attention masks (mask_<variant>.argm/.txt) and decode_cost.csv
    Masks {
        #[arg(long)]
        set: Option<PathBuf>,
        #[arg(long)]
        merges: Option<PathBuf>,
        #[arg(long)]
        tokens: Option<PathBuf>,
        /// causal, levelwise, tree, tree-all-internal or all [default: all]
        #[arg(long)]
        variant: Option<VariantChoice>,
    },
    /// Render orbit views of a set to views/view_NN.ppm
    Render {
        #[arg(long)]
        set: Option<PathBuf>,
        #[command(flatten)]
        view: RenderArgs,
    },
    /// PSNR/SSIM of retained fractions against the full set; writes metrics.csv
    Metrics {
        #[arg(long)]
        set: Option<PathBuf>,
        #[arg(long)]
        merges: Option<PathBuf>,
        /// Retained percentages [default: 100,75,50,25,10]
        #[arg(long)]
        levels: Option<Levels>,
        /// Evaluate K synthetic objects instead of the given files
        #[arg(long, value_name = "K")]
        objects: Option<usize>,
        #[command(flatten)]
        view: RenderArgs,
    },
    /// ingest, simplify, hierarchy, tokenize, masks, render and metrics
    Pipeline {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        simplify: SimplifyArgs,
        #[arg(long)]
        spec_from: Option<SpecFrom>,
        #[arg(long)]
        variant: Option<VariantChoice>,
        #[arg(long)]
        levels: Option<Levels>,
        #[command(flatten)]
        view: RenderArgs,
    },
    /// Run the oracle-equivalence suites; writes verify.json
    Verify,
}

struct Ctx {
    cfg: Config,
    out: PathBuf,
    seed: u64,
}

impl Ctx {
    fn path(&self, flag: Option<PathBuf>, name: &str) -> PathBuf {
        flag.unwrap_or_else(|| self.out.join(name))
    }

    fn source(&self, a: SourceArgs) -> anyhow::Result<(Option<PathBuf>, Option<(usize, usize)>)> {
        let input = self.cfg.pick_opt(a.input, "input")?;
        let synthetic = self.cfg.pick_opt(a.synthetic, "synthetic")?;
        let clusters = self.cfg.pick(a.clusters, "clusters", DEFAULT_CLUSTERS)?;
        Ok((input, synthetic.map(|n| (n, clusters))))
    }

    fn view(&self, v: RenderArgs) -> anyhow::Result<(usize, Size)> {
        Ok((
            self.cfg.pick(v.views, "views", DEFAULT_VIEWS)?,
            self.cfg.pick(v.size, "size", DEFAULT_SIZE)?,
        ))
    }

    fn simplify(&self, s: SimplifyArgs) -> anyhow::Result<(usize, f64, bool)> {
        Ok((
            self.cfg.pick(s.target, "target", 1)?,
            self.cfg.pick(s.beta, "beta", 0.0)?,
            self.cfg.switch(s.reference_scan, "reference_scan")?,
        ))
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let cfg = match &cli.common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let out = cfg.pick(cli.common.out, "out", PathBuf::from("out"))?;
    let seed = cfg.pick(cli.common.seed, "seed", 0)?;
    let ctx = Ctx { cfg, out, seed };
    let out: &Path = &ctx.out;

    match cli.command {
        Command::Ingest(a) => {
            let (input, synthetic) = ctx.source(a)?;
            stages::ingest(out, input.as_deref(), synthetic, ctx.seed)?;
        }
        Command::Simplify { set, args } => {
            let (target, beta, scan) = ctx.simplify(args)?;
            stages::simplify(out, &ctx.path(set, stages::SET), target, beta, scan)?;
        }
        Command::Expand { set, merges, steps } => {
            let steps = ctx.cfg.pick_opt(steps, "steps")?;
            stages::expand_stage(
                out,
                &ctx.path(set, stages::SET),
                &ctx.path(merges, stages::MERGES),
                steps,
            )?;
        }
        Command::Hierarchy { set, merges } => {
            stages::hierarchy(out, &ctx.path(set, stages::SET), &ctx.path(merges, stages::MERGES))?;
        }
        Command::Tokenize {
            set,
            merges,
            spec_from,
            corpus,
        } => {
            let spec_from = ctx.cfg.pick(spec_from, "spec_from", SpecFrom::Object)?;
            stages::tokenize(
                out,
                &ctx.path(set, stages::SET),
                &ctx.path(merges, stages::MERGES),
                spec_from,
                &corpus,
            )?;
        }
        Command::Masks {
            set,
            merges,
            tokens,
            variant,
        } => {
            let choice = ctx.cfg.pick(variant, "variant", VariantChoice::All)?;
            stages::masks(
                out,
                &ctx.path(set, stages::SET),
                &ctx.path(merges, stages::MERGES),
                &ctx.path(tokens, stages::TOKENS),
                choice,
            )?;
        }
        Command::Render { set, view } => {
            let (views, size) = ctx.view(view)?;
            stages::render(out, &ctx.path(set, stages::SET), views, size)?;
        }
        Command::Metrics {
            set,
            merges,
            levels,
            objects,
            view,
        } => {
            let (views, size) = ctx.view(view)?;
            let levels = ctx.cfg.pick(levels, "levels", Levels::default())?;
            let objects = ctx.cfg.pick_opt(objects, "objects")?;
            let set = ctx.path(set, stages::SET);
            let merges = ctx.path(merges, stages::MERGES);
            let source = match objects {
                Some(objects) => MetricsSource::Synthetic {
                    objects,
                    n: ctx.cfg.pick(None, "synthetic", DEFAULT_OBJECT_SIZE)?,
                    clusters: ctx.cfg.pick(None, "clusters", DEFAULT_CLUSTERS)?,
                    seed: ctx.seed,
                },
                None => MetricsSource::Files {
                    set: &set,
                    merges: &merges,
                },
            };
            stages::metrics(out, source, &levels, views, size)?;
        }
        Command::Pipeline {
            source,
            simplify,
            spec_from,
            variant,
            levels,
            view,
        } => {
            let (input, synthetic) = ctx.source(source)?;
            let (target, beta, scan) = ctx.simplify(simplify)?;
            let spec_from = ctx.cfg.pick(spec_from, "spec_from", SpecFrom::Object)?;
            let choice = ctx.cfg.pick(variant, "variant", VariantChoice::All)?;
            let levels = ctx.cfg.pick(levels, "levels", Levels::default())?;
            let (views, size) = ctx.view(view)?;
            let set = out.join(stages::SET);
            let merges = out.join(stages::MERGES);
            stages::ingest(out, input.as_deref(), synthetic, ctx.seed)?;
            stages::simplify(out, &set, target, beta, scan)?;
            stages::hierarchy(out, &set, &merges)?;
            stages::tokenize(out, &set, &merges, spec_from, &[])?;
            stages::masks(out, &set, &merges, &out.join(stages::TOKENS), choice)?;
            stages::render(out, &set, views, size)?;
            stages::metrics(
                out,
                MetricsSource::Files {
                    set: &set,
                    merges: &merges,
                },
                &levels,
                views,
                size,
            )?;
        }
        Command::Verify => {
            if !stages::verify_stage(out, ctx.seed)? {
                return Ok(EXIT_VERIFY);
            }
        }
    }
    Ok(0)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<splat_lod::Error>() {
            return match e.kind() {
                ErrorKind::Usage => EXIT_USAGE,
                ErrorKind::Format => EXIT_FORMAT,
                ErrorKind::Numerical => EXIT_NUMERICAL,
                ErrorKind::Io => EXIT_IO,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_IO
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
