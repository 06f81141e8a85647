//! Command-line front end. Every subcommand maps onto a library call; all
//! failures surface as one `error: ...` line on stderr and exit status 1.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::InferenceConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate_iou, grid_search_weights, ValidationSample};
use crate::grid::{ImageGrid, LabelSet};
use crate::inference::{Engine, Problem};
use crate::io;
use crate::oracle::verify_messages;
use crate::potentials::TermRegistry;
use crate::relations::{learn_relations, RelationTable};
use crate::superpixels::{generate_superpixels, SuperpixelMap};
use crate::synthetic::{attachment_scene, part_scene, FigureParams, PartSceneParams, Scene};
use crate::visualize::{save_visualization, Palette};

/// Tolerance of the `verify` subcommand.
pub const VERIFY_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "partcrf", version, about = "Dense CRF part segmentation with pattern potentials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run mean-field inference on one image.
    Infer {
        #[arg(long)]
        unary: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        relations: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Output label map (PNG).
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration trace (text).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Precomputed superpixels; generated from the image otherwise.
        #[arg(long)]
        superpixels: Option<PathBuf>,
        /// Label names used by the relations file; numeric `label<k>`
        /// names otherwise.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Learn a relation table from ground-truth label maps.
    LearnRelations {
        /// Directory of ground-truth PNG label maps. A `<stem>.sp` file next
        /// to a map supplies its superpixels.
        #[arg(long)]
        gt_dir: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = crate::relations::DEFAULT_PROPORTION_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
        /// Attachment distance; the mean superpixel width otherwise.
        #[arg(long)]
        distance: Option<f64>,
        /// Superpixel target when no `.sp` file is present; N/256 otherwise.
        #[arg(long)]
        superpixel_count: Option<usize>,
    },
    /// Per-label and mean IoU of a prediction.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Grid search over config overrides on a validation directory.
    Sweep {
        /// One candidate per line, as whitespace-separated `key=value`
        /// overrides of the base config.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        val_dir: PathBuf,
        /// Base config.
        #[arg(long)]
        config: PathBuf,
        /// Where to write the winning config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the pattern messages against brute-force enumeration.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        cases: usize,
    },
    /// Render a label map with a palette.
    Visualize {
        #[arg(long)]
        labels: PathBuf,
        /// Palette file (`id r g b` per line) or `standard`.
        #[arg(long)]
        palette: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic validation directory.
    Synth {
        #[arg(long, value_enum, default_value_t = SceneKind::Parts)]
        kind: SceneKind,
        #[arg(long, default_value_t = 4)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Head plus inner parts (parts scenes only).
        #[arg(long, default_value_t = 3)]
        parts: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SceneKind {
    Parts,
    Figure,
}

/// Parses arguments, runs, and maps errors to exit status 1. Help and
/// version requests print as usual and exit 0.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("bad arguments");
            eprintln!("{}", first.trim());
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

/// Runs one subcommand and returns what it prints on stdout.
pub fn run(cmd: Command) -> Result<String> {
    match cmd {
        Command::Infer {
            unary,
            image,
            relations,
            config,
            out,
            trace,
            superpixels,
            labels,
        } => infer(&InferArgs {
            unary,
            image,
            relations,
            config,
            out,
            trace,
            superpixels,
            labels,
        }),
        Command::LearnRelations {
            gt_dir,
            labels,
            threshold,
            out,
            distance,
            superpixel_count,
        } => learn(&gt_dir, &labels, threshold, &out, distance, superpixel_count),
        Command::Eval { pred, gt, labels } => eval(&pred, &gt, &labels),
        Command::Sweep {
            grid,
            val_dir,
            config,
            out,
        } => sweep(&grid, &val_dir, &config, out.as_deref()),
        Command::Verify { seed, cases } => verify(seed, cases),
        Command::Visualize { labels, palette, out } => visualize(&labels, &palette, &out),
        Command::Synth {
            kind,
            count,
            seed,
            parts,
            out_dir,
        } => synth(kind, count, seed, parts, &out_dir),
    }
}

struct InferArgs {
    unary: PathBuf,
    image: PathBuf,
    relations: PathBuf,
    config: PathBuf,
    out: PathBuf,
    trace: Option<PathBuf>,
    superpixels: Option<PathBuf>,
    labels: Option<PathBuf>,
}

fn load_config(path: &Path) -> Result<InferenceConfig> {
    let text = io::read_text(path)?;
    InferenceConfig::from_text(&text, &TermRegistry::builtin()).map_err(|e| with_file(path, e))
}

fn load_relations(path: &Path, labels: &LabelSet) -> Result<RelationTable> {
    RelationTable::from_text(&io::read_text(path)?, labels).map_err(|e| with_file(path, e))
}

fn load_superpixels(path: &Path) -> Result<SuperpixelMap> {
    SuperpixelMap::from_text(&io::read_text(path)?).map_err(|e| with_file(path, e))
}

fn with_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { line, message, .. } => Error::Parse {
            context: path.display().to_string(),
            line,
            message,
        },
        other => other,
    }
}

fn superpixels_for(image: &ImageGrid, cfg: &InferenceConfig, path: Option<&Path>) -> Result<SuperpixelMap> {
    let sp = match path {
        Some(p) => load_superpixels(p)?,
        None => generate_superpixels(image, cfg.superpixel_target(image.len()), cfg.compactness)?,
    };
    if sp.width() != image.width() || sp.height() != image.height() {
        return Err(Error::ShapeMismatch(format!(
            "superpixels are {}x{}, image is {}x{}",
            sp.width(),
            sp.height(),
            image.width(),
            image.height()
        )));
    }
    Ok(sp)
}

fn check_shape(name: &str, w: usize, h: usize, image: &ImageGrid) -> Result<()> {
    if (w, h) != (image.width(), image.height()) {
        return Err(Error::ShapeMismatch(format!(
            "{name} is {w}x{h}, image is {}x{}",
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

fn infer(a: &InferArgs) -> Result<String> {
    let cfg = load_config(&a.config)?;
    let tensor = io::load_unary(&a.unary)?;
    let image = io::load_image(&a.image)?;
    check_shape("unary", tensor.width, tensor.height, &image)?;
    let labels = match &a.labels {
        Some(p) => io::load_labels(p)?,
        None => LabelSet::anonymous(tensor.field.num_labels())?,
    };
    if labels.len() != tensor.field.num_labels() {
        return Err(Error::ShapeMismatch(format!(
            "{} label names but the unary has {} labels",
            labels.len(),
            tensor.field.num_labels()
        )));
    }
    let table = load_relations(&a.relations, &labels)?;
    let sp = superpixels_for(&image, &cfg, a.superpixels.as_deref())?;
    let problem = Problem::new(&tensor.field, &image, &table)?;
    let out = Engine::new(cfg)?.run(&problem, &sp)?;
    io::save_labelmap(&out.labels, &a.out)?;
    if let Some(t) = &a.trace {
        io::write_bytes(t, out.trace.to_text().as_bytes())?;
    }
    let last = out.trace.records.last();
    Ok(format!(
        "iterations {} energy {}\n",
        out.trace.len(),
        last.map_or(f64::NAN, |r| r.energy)
    ))
}

/// Sorted `.png` files of a directory.
fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "png") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn learn(
    gt_dir: &Path,
    labels_path: &Path,
    threshold: f64,
    out: &Path,
    distance: Option<f64>,
    superpixel_count: Option<usize>,
) -> Result<String> {
    let labels = io::load_labels(labels_path)?;
    let files = png_files(gt_dir)?;
    if files.is_empty() {
        return Err(Error::invalid(format!("no PNG label maps in {}", gt_dir.display())));
    }
    let palette = Palette::standard(labels.len());
    let mut dataset = Vec::with_capacity(files.len());
    for f in &files {
        let gt = io::load_labelmap(f)?;
        gt.validate(labels.len()).map_err(|e| Error::invalid(format!("{}: {e}", f.display())))?;
        let sp_path = f.with_extension("sp");
        let sp = if sp_path.exists() {
            load_superpixels(&sp_path)?
        } else {
            // no superpixels on disk: segment the rendered ground truth
            let colors = gt
                .labels()
                .iter()
                .map(|&l| palette.get(l).map(|c| c.map(f64::from)).ok_or(Error::MissingPalette(l)))
                .collect::<Result<Vec<_>>>()?;
            let image = ImageGrid::new(gt.width(), gt.height(), colors)?;
            let target = superpixel_count.unwrap_or(gt.len() / 256).clamp(1, gt.len());
            generate_superpixels(&image, target, 10.0)?
        };
        dataset.push((gt, sp));
    }
    let d = match distance {
        Some(d) => d,
        None => dataset.iter().map(|(_, sp)| sp.attachment_threshold()).sum::<f64>() / dataset.len() as f64,
    };
    let table = learn_relations(&dataset, &labels, threshold, d)?;
    io::write_bytes(out, table.to_text(&labels)?.as_bytes())?;
    Ok(format!(
        "images {} containment {} attachment {}\n",
        dataset.len(),
        table.containment_pairs().count(),
        table.attachment_pairs().count()
    ))
}

fn eval(pred: &Path, gt: &Path, labels_path: &Path) -> Result<String> {
    let labels = io::load_labels(labels_path)?;
    let report = evaluate_iou(&io::load_labelmap(pred)?, &io::load_labelmap(gt)?, labels.len())?;
    let mut out = String::new();
    for (l, name) in labels.names().iter().enumerate() {
        match report.iou(l) {
            Some(v) => writeln!(out, "{name} {v:.6}").unwrap(),
            None => writeln!(out, "{name} n/a").unwrap(),
        }
    }
    writeln!(out, "mean_iou {:.6}", report.mean_iou()).unwrap();
    Ok(out)
}

/// Reads a validation directory: `labels.txt`, `relations.txt`, and per
/// sample `<stem>.unary`, `<stem>.image.png`, `gt/<stem>.png` and an
/// optional `<stem>.sp`.
pub fn load_validation_dir(dir: &Path, cfg: &InferenceConfig) -> Result<(LabelSet, RelationTable, Vec<ValidationSample>)> {
    let labels = io::load_labels(&dir.join("labels.txt"))?;
    let table = load_relations(&dir.join("relations.txt"), &labels)?;
    let gt_files = png_files(&dir.join("gt"))?;
    let mut samples = Vec::with_capacity(gt_files.len());
    for g in &gt_files {
        let stem = g.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let tensor = io::load_unary(&dir.join(format!("{stem}.unary")))?;
        let image = io::load_image(&dir.join(format!("{stem}.image.png")))?;
        check_shape("unary", tensor.width, tensor.height, &image)?;
        let gt = io::load_labelmap(g)?;
        check_shape("ground truth", gt.width(), gt.height(), &image)?;
        let sp_path = dir.join(format!("{stem}.sp"));
        let sp = superpixels_for(&image, cfg, sp_path.exists().then_some(sp_path.as_path()))?;
        samples.push(ValidationSample {
            unary: tensor.field,
            image,
            superpixels: sp,
            gt,
        });
    }
    if samples.is_empty() {
        return Err(Error::invalid(format!("no samples under {}", dir.join("gt").display())));
    }
    Ok((labels, table, samples))
}

/// Candidates of a grid file, each the base config with one line's
/// overrides applied.
pub fn parse_grid(text: &str, base: &InferenceConfig) -> Result<Vec<InferenceConfig>> {
    let reg = TermRegistry::builtin();
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            context: "grid".into(),
            line: n + 1,
            message,
        };
        let mut cfg = base.clone();
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key=value, got {tok:?}")))?;
            cfg.set(k, v, &reg).map_err(|e| parse_err(e.to_string()))?;
        }
        cfg.validate().map_err(|e| parse_err(e.to_string()))?;
        out.push(cfg);
    }
    Ok(out)
}

fn sweep(grid: &Path, val_dir: &Path, config: &Path, out: Option<&Path>) -> Result<String> {
    let base = load_config(config)?;
    let candidates = parse_grid(&io::read_text(grid)?, &base).map_err(|e| with_file(grid, e))?;
    let (_, table, samples) = load_validation_dir(val_dir, &base)?;
    let result = grid_search_weights(&candidates, &samples, &table)?;
    let mut text = String::new();
    for (k, s) in result.scores.iter().enumerate() {
        writeln!(text, "candidate {k} mean_iou {s:.6}").unwrap();
    }
    writeln!(text, "best {}", result.best_index).unwrap();
    if let Some(p) = out {
        io::write_bytes(p, result.best.to_text().as_bytes())?;
    }
    Ok(text)
}

fn verify(seed: u64, cases: usize) -> Result<String> {
    let reports = verify_messages(seed, cases)?;
    let mut out = String::new();
    let mut ok = true;
    for r in &reports {
        let pass = r.passed(VERIFY_TOL);
        ok &= pass;
        writeln!(
            out,
            "{} cases {} max_error {:.3e} max_batched_error {:.3e} {}",
            r.kind,
            r.cases,
            r.max_error,
            r.max_batched_error,
            if pass { "ok" } else { "FAILED" }
        )
        .unwrap();
    }
    if !ok {
        return Err(Error::invalid(format!(
            "message check exceeded tolerance {VERIFY_TOL:e}: {}",
            out.trim().replace('\n', "; ")
        )));
    }
    Ok(out)
}

fn visualize(labels: &Path, palette: &str, out: &Path) -> Result<String> {
    let map = io::load_labelmap(labels)?;
    let palette = if palette == "standard" {
        let max = map.labels().iter().copied().max().unwrap_or(0);
        Palette::standard(max + 1)
    } else {
        let p = Path::new(palette);
        Palette::from_text(&io::read_text(p)?).map_err(|e| with_file(p, e))?
    };
    save_visualization(&map, &palette, out)?;
    Ok(String::new())
}

/// Config matching the synthetic scenes' scale.
pub fn synthetic_config(kind: SceneKind) -> InferenceConfig {
    let mut cfg = InferenceConfig::default();
    cfg.pairwise.appearance_weight = 0.02;
    cfg.pairwise.bilateral_spatial_sigma = 4.0;
    cfg.pairwise.smoothness_weight = 0.3;
    cfg.pairwise.spatial_sigma = 1.0;
    match kind {
        SceneKind::Parts => {
            cfg.superpixel_count = Some(PartSceneParams::default().superpixels);
            cfg.term_weights.set("containment", 3.0).expect("valid weight");
        }
        SceneKind::Figure => {
            // smoothing strong enough to swallow the thin neck
            cfg.pairwise.smoothness_weight = 3.0;
            cfg.pairwise.spatial_sigma = 2.0;
            cfg.term_weights.set("attachment", 30.0).expect("valid weight");
            cfg.attachment_distance = Some(4.5);
        }
    }
    cfg
}

fn synth(kind: SceneKind, count: usize, seed: u64, parts: usize, dir: &Path) -> Result<String> {
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    let gt_dir = dir.join("gt");
    std::fs::create_dir_all(&gt_dir).map_err(|e| Error::io(&gt_dir, e))?;
    let mut labels = None;
    let mut table = None;
    for k in 0..count {
        let s = seed.wrapping_add(k as u64);
        let scene: Scene = match kind {
            SceneKind::Parts => part_scene(&PartSceneParams {
                parts,
                seed: s,
                ..Default::default()
            })?,
            SceneKind::Figure => attachment_scene(&FigureParams {
                seed: s,
                ..Default::default()
            })?,
        };
        let stem = format!("{k:04}");
        let (w, h) = (scene.image.width(), scene.image.height());
        io::save_unary(&scene.unary, w, h, &dir.join(format!("{stem}.unary")))?;
        io::save_image(&scene.image, &dir.join(format!("{stem}.image.png")))?;
        io::save_labelmap(&scene.gt, &gt_dir.join(format!("{stem}.png")))?;
        let sp = scene.superpixels.to_text();
        io::write_bytes(&dir.join(format!("{stem}.sp")), sp.as_bytes())?;
        io::write_bytes(&gt_dir.join(format!("{stem}.sp")), sp.as_bytes())?;
        labels.get_or_insert(scene.labels);
        table.get_or_insert(scene.table);
    }
    let labels = labels.expect("count >= 1");
    let table = table.expect("count >= 1");
    io::write_bytes(&dir.join("labels.txt"), io::labels_to_text(&labels).as_bytes())?;
    io::write_bytes(&dir.join("relations.txt"), table.to_text(&labels)?.as_bytes())?;
    io::write_bytes(&dir.join("config.txt"), synthetic_config(kind).to_text().as_bytes())?;
    Ok(format!("wrote {count} scenes to {}\n", dir.display()))
}
