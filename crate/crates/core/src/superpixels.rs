//! Compact, 4-connected superpixels and the per-superpixel geometry the
//! higher-order terms are built on: boundary cliques, centroids and the
//! attachment distance threshold.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{for_each_neighbor4, pixel_coords, ImageGrid, Label, LabelMap};

/// Default number of SLIC iterations.
pub const SLIC_ITERATIONS: usize = 10;

/// Pixel to superpixel assignment with cached member lists and centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelMap {
    width: usize,
    height: usize,
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
    /// (row, col) mean coordinate of each superpixel.
    centroids: Vec<(f64, f64)>,
}

/// Member pixels of one superpixel that touch the outside of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryClique {
    pub superpixel_id: usize,
    pub pixels: Vec<usize>,
}

impl SuperpixelMap {
    /// Builds a map from a dense assignment, checking that ids are `0..S`,
    /// every superpixel is non-empty and every superpixel is 4-connected.
    pub fn from_assignment(width: usize, height: usize, assignment: Vec<usize>) -> Result<Self> {
        if width == 0 || height == 0 || assignment.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} superpixel ids for a {width}x{height} grid",
                assignment.len()
            )));
        }
        let count = assignment.iter().max().map_or(0, |m| m + 1);
        let mut members = vec![Vec::new(); count];
        for (i, &s) in assignment.iter().enumerate() {
            members[s].push(i);
        }
        if let Some(empty) = members.iter().position(Vec::is_empty) {
            return Err(Error::invalid(format!("superpixel {empty} has no pixels")));
        }
        let centroids = members
            .iter()
            .map(|m| {
                let (sr, sc) = m.iter().fold((0.0, 0.0), |(sr, sc), &i| {
                    let (r, c) = pixel_coords(width, i);
                    (sr + r as f64, sc + c as f64)
                });
                (sr / m.len() as f64, sc / m.len() as f64)
            })
            .collect();
        let map = Self {
            width,
            height,
            assignment,
            members,
            centroids,
        };
        if let Some(bad) = (0..map.count()).find(|&s| !map.is_connected(s)) {
            return Err(Error::invalid(format!("superpixel {bad} is not 4-connected")));
        }
        Ok(map)
    }

    /// Rectangular blocks of `block_h x block_w` pixels (the last row/column
    /// of blocks may be smaller).
    pub fn blocks(width: usize, height: usize, block_w: usize, block_h: usize) -> Result<Self> {
        if block_w == 0 || block_h == 0 {
            return Err(Error::invalid("block size must be positive"));
        }
        let per_row = width.div_ceil(block_w);
        let assignment = (0..width * height)
            .map(|i| {
                let (r, c) = pixel_coords(width, i);
                (r / block_h) * per_row + c / block_w
            })
            .collect();
        Self::from_assignment(width, height, assignment)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_pixels(&self) -> usize {
        self.assignment.len()
    }

    /// Number of superpixels `S`.
    pub fn count(&self) -> usize {
        self.members.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn superpixel_of(&self, pixel: usize) -> usize {
        self.assignment[pixel]
    }

    pub fn members(&self, id: usize) -> &[usize] {
        &self.members[id]
    }

    pub fn size(&self, id: usize) -> usize {
        self.members[id].len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn centroid(&self, id: usize) -> (f64, f64) {
        self.centroids[id]
    }

    pub fn centroids(&self) -> &[(f64, f64)] {
        &self.centroids
    }

    fn check_id(&self, id: usize) -> Result<()> {
        if id < self.count() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "superpixel id {id} out of range (S = {})",
                self.count()
            )))
        }
    }

    /// Flood-fill connectivity check over 4-neighbors.
    pub fn is_connected(&self, id: usize) -> bool {
        let Some(members) = self.members.get(id) else {
            return false;
        };
        let Some(&start) = members.first() else {
            return false;
        };
        let mut seen = vec![false; self.num_pixels()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut reached = 1;
        while let Some(p) = queue.pop_front() {
            for_each_neighbor4(self.width, self.height, p, |q| {
                if !seen[q] && self.assignment[q] == id {
                    seen[q] = true;
                    reached += 1;
                    queue.push_back(q);
                }
            });
        }
        reached == members.len()
    }

    /// Whether `pixel` has a 4-neighbor outside its superpixel. The image
    /// border counts as outside.
    pub fn is_boundary_pixel(&self, pixel: usize) -> bool {
        let (r, c) = pixel_coords(self.width, pixel);
        if r == 0 || c == 0 || r + 1 == self.height || c + 1 == self.width {
            return true;
        }
        let own = self.assignment[pixel];
        let mut outside = false;
        for_each_neighbor4(self.width, self.height, pixel, |q| {
            outside |= self.assignment[q] != own;
        });
        outside
    }

    pub fn boundary_clique(&self, id: usize) -> Result<BoundaryClique> {
        self.check_id(id)?;
        let pixels = self.members[id]
            .iter()
            .copied()
            .filter(|&p| self.is_boundary_pixel(p))
            .collect();
        Ok(BoundaryClique {
            superpixel_id: id,
            pixels,
        })
    }

    /// Euclidean distance between two centroids in pixel units.
    pub fn centroid_distance(&self, a: usize, b: usize) -> Result<f64> {
        self.check_id(a)?;
        self.check_id(b)?;
        let (ra, ca) = self.centroids[a];
        let (rb, cb) = self.centroids[b];
        Ok((ra - rb).hypot(ca - cb))
    }

    /// Column span of a superpixel, `max col - min col + 1`.
    pub fn width_of(&self, id: usize) -> usize {
        let (lo, hi) = self.members[id]
            .iter()
            .map(|&p| p % self.width)
            .fold((usize::MAX, 0), |(lo, hi), c| (lo.min(c), hi.max(c)));
        hi - lo + 1
    }

    /// Attachment distance threshold `d`: the mean superpixel width.
    pub fn attachment_threshold(&self) -> f64 {
        let total: usize = (0..self.count()).map(|s| self.width_of(s)).sum();
        total as f64 / self.count() as f64
    }

    /// Most frequent label among the superpixel's pixels, ties toward the
    /// smaller label id.
    pub fn majority_label(&self, labels: &LabelMap, id: usize) -> Label {
        mode(self.members[id].iter().map(|&p| labels.get(p)))
    }

    /// Whether every pixel of the superpixel carries `label`.
    pub fn is_pure(&self, labels: &LabelMap, id: usize, label: Label) -> bool {
        self.members[id].iter().all(|&p| labels.get(p) == label)
    }

    /// Text form: a `S H W` header line, then one line of ids per image row.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.count(), self.height, self.width);
        for row in self.assignment.chunks(self.width) {
            let line: Vec<String> = row.iter().map(usize::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            context: "superpixel map".into(),
            line,
            message,
        };
        let mut tokens = text
            .lines()
            .enumerate()
            .flat_map(|(n, l)| l.split_whitespace().map(move |t| (n + 1, t)));
        let mut header = [0usize; 3];
        for h in &mut header {
            let (line, tok) = tokens.next().ok_or_else(|| err(1, "truncated header".into()))?;
            *h = tok
                .parse()
                .map_err(|e| err(line, format!("bad header value {tok:?}: {e}")))?;
        }
        let [count, height, width] = header;
        let mut assignment = Vec::with_capacity(width * height);
        for (line, tok) in tokens {
            let id: usize = tok
                .parse()
                .map_err(|e| err(line, format!("bad superpixel id {tok:?}: {e}")))?;
            if id >= count {
                return Err(err(line, format!("superpixel id {id} >= S = {count}")));
            }
            assignment.push(id);
        }
        if assignment.len() != width * height {
            return Err(err(
                text.lines().count(),
                format!("expected {} ids, found {}", width * height, assignment.len()),
            ));
        }
        let map = Self::from_assignment(width, height, assignment)?;
        if map.count() != count {
            return Err(err(1, format!("header says S = {count}, found {}", map.count())));
        }
        Ok(map)
    }
}

pub(crate) fn mode(labels: impl Iterator<Item = Label>) -> Label {
    let mut counts: Vec<usize> = Vec::new();
    for l in labels {
        if l >= counts.len() {
            counts.resize(l + 1, 0);
        }
        counts[l] += 1;
    }
    let mut best = 0;
    for (l, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = l;
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
struct Center {
    color: [f64; 3],
    row: f64,
    col: f64,
}

/// SLIC-style superpixels: k-means over (color, scaled position) seeded on a
/// regular grid, followed by a connectivity pass that gives every 4-connected
/// piece its own id and folds undersized pieces into an adjacent one.
///
/// There is no randomness; identical inputs give identical maps.
pub fn generate_superpixels(
    image: &ImageGrid,
    target_count: usize,
    compactness: f64,
) -> Result<SuperpixelMap> {
    let (width, height) = (image.width(), image.height());
    let n = image.len();
    if target_count == 0 {
        return Err(Error::invalid("target_count must be at least 1"));
    }
    if target_count > n {
        return Err(Error::invalid(format!(
            "target_count {target_count} exceeds pixel count {n}"
        )));
    }
    if !(compactness > 0.0) {
        return Err(Error::invalid("compactness must be positive"));
    }

    let (grid_rows, grid_cols) = seed_grid(width, height, target_count);
    let step_r = height as f64 / grid_rows as f64;
    let step_c = width as f64 / grid_cols as f64;
    let step = (step_r * step_c).sqrt();
    let spatial_scale = (compactness / step).powi(2);

    let mut centers: Vec<Center> = Vec::with_capacity(grid_rows * grid_cols);
    for gr in 0..grid_rows {
        for gc in 0..grid_cols {
            let row = ((gr as f64 + 0.5) * step_r).floor().min((height - 1) as f64);
            let col = ((gc as f64 + 0.5) * step_c).floor().min((width - 1) as f64);
            let color = image.color(image.index(row as usize, col as usize));
            centers.push(Center { color, row, col });
        }
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..SLIC_ITERATIONS {
        assignment
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, slot)| {
                let (r, c) = pixel_coords(width, i);
                let (r, c) = (r as f64, c as f64);
                let color = image.color(i);
                let dist = |k: &Center| {
                    let dc: f64 = (0..3).map(|ch| (color[ch] - k.color[ch]).powi(2)).sum();
                    let ds = (r - k.row).powi(2) + (c - k.col).powi(2);
                    dc + ds * spatial_scale
                };
                let mut best = None::<(usize, f64)>;
                for (k, center) in centers.iter().enumerate() {
                    if (r - center.row).abs() > 2.0 * step_r || (c - center.col).abs() > 2.0 * step_c
                    {
                        continue;
                    }
                    let d = dist(center);
                    if best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((k, d));
                    }
                }
                // a center can drift away from every pixel window; fall back to a full search
                let (k, _) = best.unwrap_or_else(|| {
                    centers
                        .iter()
                        .enumerate()
                        .map(|(k, center)| (k, dist(center)))
                        .fold((0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b })
                });
                *slot = k;
            });

        let mut sums = vec![([0.0f64; 3], 0.0f64, 0.0f64, 0usize); centers.len()];
        for (i, &k) in assignment.iter().enumerate() {
            let (r, c) = pixel_coords(width, i);
            let color = image.color(i);
            let s = &mut sums[k];
            for ch in 0..3 {
                s.0[ch] += color[ch];
            }
            s.1 += r as f64;
            s.2 += c as f64;
            s.3 += 1;
        }
        for (center, (color, r, c, count)) in centers.iter_mut().zip(sums) {
            if count > 0 {
                let inv = 1.0 / count as f64;
                center.color = color.map(|v| v * inv);
                center.row = r * inv;
                center.col = c * inv;
            }
        }
    }

    let min_size = (n / centers.len() / 4).max(1);
    let assignment = enforce_connectivity(width, height, &assignment, min_size);
    SuperpixelMap::from_assignment(width, height, assignment)
}

/// Seed lattice dimensions with `rows * cols` close to `target`.
fn seed_grid(width: usize, height: usize, target: usize) -> (usize, usize) {
    let cols = ((target as f64 * width as f64 / height as f64).sqrt().round() as usize)
        .clamp(1, width.min(target));
    let rows = ((target as f64 / cols as f64).round() as usize).clamp(1, height);
    (rows, cols)
}

/// Relabels every 4-connected component with a fresh dense id; components
/// smaller than `min_size` take the id of an already-labeled neighbor.
fn enforce_connectivity(
    width: usize,
    height: usize,
    raw: &[usize],
    min_size: usize,
) -> Vec<usize> {
    const UNSET: usize = usize::MAX;
    let n = raw.len();
    let mut out = vec![UNSET; n];
    let mut next = 0usize;
    let mut component = Vec::new();
    for start in 0..n {
        if out[start] != UNSET {
            continue;
        }
        // neighbor label from an earlier component, used if this one is too small
        let mut adjacent = None;
        for_each_neighbor4(width, height, start, |q| {
            if out[q] != UNSET && adjacent.is_none() {
                adjacent = Some(out[q]);
            }
        });
        component.clear();
        component.push(start);
        out[start] = next;
        let mut head = 0;
        while head < component.len() {
            let p = component[head];
            head += 1;
            for_each_neighbor4(width, height, p, |q| {
                if out[q] == UNSET && raw[q] == raw[start] {
                    out[q] = next;
                    component.push(q);
                }
            });
        }
        match adjacent {
            Some(adj) if component.len() < min_size => {
                for &p in &component {
                    out[p] = adj;
                }
            }
            _ => next += 1,
        }
    }
    out
}
