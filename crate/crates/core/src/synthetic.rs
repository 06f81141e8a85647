//! Seeded synthetic scenes with known ground truth: a head holding small
//! inner parts whose rims the unary field gets wrong, and a
//! head/neck/torso figure whose thin neck is only weakly supported by the
//! unary field, so that strong smoothing erases it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, Label, LabelMap, LabelSet, UnaryField};
use crate::relations::RelationTable;
use crate::superpixels::{generate_superpixels, SuperpixelMap};

#[derive(Debug, Clone)]
pub struct Scene {
    pub labels: LabelSet,
    pub image: ImageGrid,
    pub gt: LabelMap,
    pub unary: UnaryField,
    pub superpixels: SuperpixelMap,
    pub table: RelationTable,
}

const INNER_NAMES: [&str; 11] = [
    "eye", "nose", "mouth", "ear", "brow", "cheek", "chin", "lip", "iris", "lash", "lid",
];

/// Which wrong label a corrupted rim prefers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Confuser {
    /// Background, which no containment relation allows inside the head.
    Background,
    /// The next inner part (or the head, with a single part): a label the
    /// head may also contain, so containment alone cannot rule it out.
    NextPart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartSceneParams {
    pub size: usize,
    /// Head plus inner parts, so `parts - 1` inner parts; background is
    /// not counted.
    pub parts: usize,
    /// Width of each inner part's corrupted rim, as a fraction of the part
    /// radius.
    pub band: f64,
    /// How strongly the rim prefers the wrong label.
    pub corruption: f64,
    pub confuser: Confuser,
    /// Unary energy gap between the true label and the others.
    pub margin: f64,
    /// Amplitude of the uniform unary noise.
    pub noise: f64,
    pub superpixels: usize,
    pub seed: u64,
}

impl Default for PartSceneParams {
    fn default() -> Self {
        Self {
            size: 64,
            parts: 3,
            band: 0.3,
            corruption: 0.5,
            confuser: Confuser::Background,
            margin: 8.0,
            noise: 0.5,
            superpixels: 256,
            seed: 0,
        }
    }
}

fn part_color(k: usize) -> [f64; 3] {
    // spread hues well away from the skin tone of the head
    let palette = [
        [40.0, 30.0, 30.0],
        [150.0, 60.0, 60.0],
        [90.0, 20.0, 60.0],
        [60.0, 120.0, 60.0],
        [30.0, 60.0, 130.0],
        [200.0, 90.0, 40.0],
        [120.0, 120.0, 20.0],
        [170.0, 30.0, 120.0],
        [20.0, 140.0, 140.0],
        [100.0, 70.0, 30.0],
        [70.0, 70.0, 90.0],
    ];
    palette[k % palette.len()]
}

const BG_COLOR: [f64; 3] = [40.0, 90.0, 170.0];
const SKIN: [f64; 3] = [225.0, 185.0, 150.0];

fn noisy_image(colors: &[[f64; 3]], width: usize, height: usize, rng: &mut ChaCha8Rng) -> Result<ImageGrid> {
    let pixels = colors
        .iter()
        .map(|c| c.map(|v| (v + rng.gen_range(-8.0..8.0)).clamp(0.0, 255.0)))
        .collect();
    ImageGrid::new(width, height, pixels)
}

/// Unary field that prefers `gt` by `margin`, plus uniform noise in
/// `[0, noise)` on every entry.
fn base_unary(gt: &LabelMap, num_labels: usize, margin: f64, noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut u = Vec::with_capacity(gt.len() * num_labels);
    for &g in gt.labels() {
        for l in 0..num_labels {
            let n = if noise > 0.0 { rng.gen_range(0.0..noise) } else { 0.0 };
            u.push(if l == g { n } else { margin + n });
        }
    }
    u
}

/// A round head on background with `parts - 1` small round parts inside
/// it. Every inner part's rim is corrupted towards the `confuser` label. The relation table holds
/// `(part, head)` containment for every inner part.
pub fn part_scene(p: &PartSceneParams) -> Result<Scene> {
    let inner = p
        .parts
        .checked_sub(1)
        .filter(|&k| (1..=INNER_NAMES.len()).contains(&k))
        .ok_or_else(|| Error::invalid(format!("parts must lie in 2..={}", INNER_NAMES.len() + 1)))?;
    if p.size < 32 {
        return Err(Error::invalid("scene size must be at least 32"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let names: Vec<&str> = ["bg", "head"]
        .into_iter()
        .chain(INNER_NAMES[..inner].iter().copied())
        .collect();
    let labels = LabelSet::new(names)?;
    let nl = labels.len();
    const HEAD: Label = 1;

    let s = p.size as f64;
    let (cy, cx) = (s / 2.0 - 0.5, s / 2.0 - 0.5);
    let head_r = 0.44 * s;
    // inner parts on a grid inside the head's inscribed square
    let cols = (inner as f64).sqrt().ceil() as usize;
    let rows = inner.div_ceil(cols);
    let side = head_r * std::f64::consts::SQRT_2 * 0.9;
    let cell = side / cols.max(rows) as f64;
    let part_r = (cell / 2.0 - 1.0).min(0.12 * s);
    let centers: Vec<(f64, f64)> = (0..inner)
        .map(|k| {
            let (r, c) = (k / cols, k % cols);
            let jitter = |rng: &mut ChaCha8Rng| rng.gen_range(-0.5..0.5);
            (
                cy - rows as f64 * cell / 2.0 + (r as f64 + 0.5) * cell + jitter(&mut rng),
                cx - cols as f64 * cell / 2.0 + (c as f64 + 0.5) * cell + jitter(&mut rng),
            )
        })
        .collect();

    let n = p.size * p.size;
    let mut gt = vec![0; n];
    let mut colors = vec![BG_COLOR; n];
    let mut rim: Vec<Option<Label>> = vec![None; n];
    for i in 0..n {
        let (y, x) = ((i / p.size) as f64, (i % p.size) as f64);
        if (y - cy).hypot(x - cx) <= head_r {
            gt[i] = HEAD;
            colors[i] = SKIN;
        }
        for (k, &(py, px)) in centers.iter().enumerate() {
            let d = (y - py).hypot(x - px);
            if d <= part_r {
                gt[i] = 2 + k;
                colors[i] = part_color(k);
                if d > part_r * (1.0 - p.band) {
                    rim[i] = Some(match p.confuser {
                        Confuser::Background => 0,
                        Confuser::NextPart if inner == 1 => HEAD,
                        Confuser::NextPart => 2 + (k + 1) % inner,
                    });
                }
            }
        }
    }
    let gt = LabelMap::new(p.size, p.size, gt)?;
    let image = noisy_image(&colors, p.size, p.size, &mut rng)?;
    let mut u = base_unary(&gt, nl, p.margin, p.noise, &mut rng);
    for (i, r) in rim.iter().enumerate() {
        if let Some(c) = *r {
            let g = gt.get(i);
            u[i * nl + c] = u[i * nl + g] - p.corruption;
        }
    }
    let unary = UnaryField::new(n, nl, u)?;
    let superpixels = generate_superpixels(&image, p.superpixels, 10.0)?;
    let mut table = RelationTable::new(nl, 1.0)?;
    for k in 0..inner {
        table.add_containment(2 + k, HEAD)?;
    }
    Ok(Scene {
        labels,
        image,
        gt,
        unary,
        superpixels,
        table,
    })
}

/// Block size of [`attachment_scene`]'s superpixels.
pub const FIGURE_BLOCK: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct FigureParams {
    /// Fraction of neck pixels whose unary prefers head or torso instead.
    pub neck_loss: f64,
    /// Unary gap by which neck pixels prefer the neck (or, when lost, the
    /// wrong label). Small compared to `margin`, so smoothing can erase it.
    pub neck_margin: f64,
    pub margin: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for FigureParams {
    fn default() -> Self {
        Self {
            neck_loss: 0.0,
            neck_margin: 3.0,
            margin: 8.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

/// Labels of the fixed 24x32 figure, in 4x4 blocks (6 columns, 8 rows):
/// head in block rows 0..3, columns 1..5; neck in block row 3, columns
/// 2..4; torso in block rows 4..8, all columns; background elsewhere.
pub fn figure_layout() -> LabelMap {
    const BG: Label = 0;
    const HEAD: Label = 1;
    const NECK: Label = 2;
    const TORSO: Label = 3;
    let (w, h) = (24, 32);
    let labels = (0..w * h)
        .map(|i| {
            let (br, bc) = (i / w / FIGURE_BLOCK, i % w / FIGURE_BLOCK);
            match br {
                0..=2 if (1..5).contains(&bc) => HEAD,
                3 if (2..4).contains(&bc) => NECK,
                4.. => TORSO,
                _ => BG,
            }
        })
        .collect();
    LabelMap::new(w, h, labels).expect("fixed layout")
}

/// Head, neck and torso on block superpixels. Neck pixels prefer the neck
/// over the nearer of head (upper half) and torso (lower half) by only
/// `neck_margin`; a `neck_loss` fraction prefer that neighbour instead.
/// Relations: `(head, neck)` and `(neck, torso)` attachment, nothing
/// between head and torso.
pub fn attachment_scene(p: &FigureParams) -> Result<Scene> {
    if !(0.0..=1.0).contains(&p.neck_loss) {
        return Err(Error::invalid("neck_loss must lie in [0, 1]"));
    }
    if !(p.neck_margin >= 0.0 && p.margin >= p.neck_margin) {
        return Err(Error::invalid("need 0 <= neck_margin <= margin"));
    }
    let labels = LabelSet::new(["bg", "head", "neck", "torso"])?;
    let (head, neck, torso) = (1, 2, 3);
    let gt = figure_layout();
    let (w, h) = (gt.width(), gt.height());
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let colors: Vec<[f64; 3]> = gt
        .labels()
        .iter()
        .map(|&l| match l {
            0 => BG_COLOR,
            1 => SKIN,
            2 => [210.0, 170.0, 140.0],
            _ => [60.0, 140.0, 70.0],
        })
        .collect();
    let image = noisy_image(&colors, w, h, &mut rng)?;
    let mut u = base_unary(&gt, 4, p.margin, p.noise, &mut rng);
    for i in 0..gt.len() {
        if gt.get(i) != neck {
            continue;
        }
        let row_in_neck = i / w - 3 * FIGURE_BLOCK;
        let near = if row_in_neck < FIGURE_BLOCK / 2 { head } else { torso };
        u[i * 4 + near] = u[i * 4 + neck] + p.neck_margin;
        if rng.gen_bool(p.neck_loss) {
            u[i * 4 + near] = u[i * 4 + neck] - p.neck_margin;
        }
    }
    let unary = UnaryField::new(gt.len(), 4, u)?;
    let superpixels = SuperpixelMap::blocks(w, h, FIGURE_BLOCK, FIGURE_BLOCK)?;
    let mut table = RelationTable::new(4, 1.0)?;
    table.add_attachment(head, neck, 0.0)?;
    table.add_attachment(neck, torso, 0.0)?;
    Ok(Scene {
        labels,
        image,
        gt,
        unary,
        superpixels,
        table,
    })
}
