//! Brute-force references: clique messages by enumerating every joint
//! configuration, and exact posterior marginals on tiny instances.
//!
//! Nothing here shares code with the closed-form messages or the engine's
//! energy evaluation; agreement between the two is the point.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::TermWeights;
use crate::error::{Error, Result};
use crate::grid::{normalize_rows, ImageGrid, Label, MarginalField, UnaryField};
use crate::potentials::{
    attachment_message, containment_message, superpixel_message, AttachmentClique, CliqueSet,
    ContainmentClique, MessageField, PairwiseParams, PatternWeights, TermContext, TermRegistry, UNARY,
};
use crate::relations::RelationTable;
use crate::superpixels::BoundaryClique;

pub const MAX_CLIQUE_SIZE: usize = 12;
pub const MAX_LABELS: usize = 4;
pub const MAX_PIXELS: usize = 12;

/// The potential evaluated over a clique's joint configuration.
#[derive(Debug, Clone, Copy)]
pub enum PatternKind<'a> {
    /// Low weight `w_low[l]` when every pixel takes the same label `l`.
    Superpixel { w_low: &'a [f64], w_high: f64 },
    /// Seen from the query pixel with label `l`: low weight
    /// `lookup_containment(l, l_prime)` when every pixel is `l` or `l_prime`.
    Containment { l_prime: Label, table: &'a RelationTable },
    /// The first `first_len` clique pixels form one side, the rest the other;
    /// low weight when the sides are purely `l1` and `l2`.
    Attachment {
        first_len: usize,
        l1: Label,
        l2: Label,
        table: &'a RelationTable,
    },
}

impl PatternKind<'_> {
    /// Potential of the configuration `x`, where `x[query]` is the query pixel.
    fn psi(&self, x: &[Label], query: usize) -> f64 {
        match *self {
            PatternKind::Superpixel { w_low, w_high } => {
                let first = x[0];
                if x.iter().all(|&v| v == first) {
                    w_low[first]
                } else {
                    w_high
                }
            }
            PatternKind::Containment { l_prime, table } => {
                let l = x[query];
                if x.iter().all(|&v| v == l || v == l_prime) {
                    table.lookup_containment(l, l_prime)
                } else {
                    table.w_high()
                }
            }
            PatternKind::Attachment {
                first_len,
                l1,
                l2,
                table,
            } => {
                let (a, b) = x.split_at(first_len);
                if a.iter().all(|&v| v == l1) && b.iter().all(|&v| v == l2) {
                    table.lookup_attachment(l1, l2)
                } else {
                    table.w_high()
                }
            }
        }
    }
}

/// Compensated (Neumaier) running sum.
#[derive(Default)]
struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    fn add(&mut self, v: f64) {
        let t = self.s + v;
        if self.s.abs() >= v.abs() {
            self.c += (self.s - t) + v;
        } else {
            self.c += (v - t) + self.s;
        }
        self.s = t;
    }

    fn value(&self) -> f64 {
        self.s + self.c
    }
}

/// Advances a base-`radix` odometer; false once it wraps to all zeros.
fn next_config(digits: &mut [Label], radix: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < radix {
            return true;
        }
        *d = 0;
    }
    false
}

/// `sum over x_c with x_i = l of Q_{c-i}(x_{c-i}) * psi(x_c)`, enumerated
/// literally.
pub fn exact_clique_message(
    q: &MarginalField,
    clique: &[usize],
    kind: PatternKind<'_>,
    i: usize,
    l: Label,
) -> Result<f64> {
    let nl = q.num_labels();
    if clique.len() > MAX_CLIQUE_SIZE || nl > MAX_LABELS {
        return Err(Error::TooLarge(format!(
            "clique of {} pixels with {nl} labels (limit {MAX_CLIQUE_SIZE} pixels, {MAX_LABELS} labels)",
            clique.len()
        )));
    }
    if l >= nl || clique.iter().any(|&j| j >= q.num_pixels()) {
        return Err(Error::invalid("label or clique pixel out of range"));
    }
    let query = clique
        .iter()
        .position(|&j| j == i)
        .ok_or_else(|| Error::invalid(format!("pixel {i} is not in the clique")))?;
    if let PatternKind::Attachment { first_len, .. } = kind {
        if first_len > clique.len() {
            return Err(Error::invalid("attachment split beyond the clique"));
        }
    }
    let others: Vec<usize> = (0..clique.len()).filter(|&k| k != query).collect();
    let mut digits = vec![0; others.len()];
    let mut x = vec![0; clique.len()];
    x[query] = l;
    let mut total = Sum::default();
    loop {
        let mut prob = 1.0;
        for (&pos, &d) in others.iter().zip(&digits) {
            x[pos] = d;
            prob *= q.get(clique[pos], d);
        }
        total.add(prob * kind.psi(&x, query));
        if !next_config(&mut digits, nl) {
            break;
        }
    }
    Ok(total.value())
}

/// A fully specified energy over at most [`MAX_PIXELS`] pixels and
/// [`MAX_LABELS`] labels, with fixed cliques.
#[derive(Debug, Clone)]
pub struct TinyInstance {
    pub image: ImageGrid,
    pub unary: UnaryField,
    pub table: RelationTable,
    pub cliques: CliqueSet,
    pub weights: TermWeights,
    pub pairwise: PairwiseParams,
    pub superpixel: PatternWeights,
}

fn gaussian(d2: f64, sigma: f64) -> f64 {
    (-d2 / (2.0 * sigma * sigma)).exp()
}

impl TinyInstance {
    pub fn num_pixels(&self) -> usize {
        self.image.len()
    }

    pub fn num_labels(&self) -> usize {
        self.unary.num_labels()
    }

    fn check(&self) -> Result<()> {
        let (n, nl) = (self.num_pixels(), self.num_labels());
        if n > MAX_PIXELS || nl > MAX_LABELS {
            return Err(Error::TooLarge(format!(
                "{n} pixels with {nl} labels (limit {MAX_PIXELS} pixels, {MAX_LABELS} labels)"
            )));
        }
        if self.unary.num_pixels() != n || self.table.num_labels() != nl {
            return Err(Error::ShapeMismatch("tiny instance parts disagree".into()));
        }
        Ok(())
    }

    fn kernel(&self, i: usize, j: usize) -> f64 {
        let p = &self.pairwise;
        let w = self.image.width();
        let (yi, xi) = ((i / w) as f64, (i % w) as f64);
        let (yj, xj) = ((j / w) as f64, (j % w) as f64);
        let d2 = (yi - yj).powi(2) + (xi - xj).powi(2);
        let (a, b) = (self.image.color(i), self.image.color(j));
        let c2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
        p.appearance_weight * gaussian(d2, p.bilateral_spatial_sigma) * gaussian(c2, p.color_sigma)
            + p.smoothness_weight * gaussian(d2, p.spatial_sigma)
    }

    /// Full energy of the configuration `x`.
    pub fn energy(&self, x: &[Label]) -> f64 {
        let w = &self.weights;
        let t = &self.table;
        let mut e = 0.0;
        for (i, &l) in x.iter().enumerate() {
            e += w.get(UNARY) * self.unary.get(i, l);
        }
        let wp = w.get("pairwise");
        if wp != 0.0 {
            for i in 0..x.len() {
                for j in i + 1..x.len() {
                    if x[i] != x[j] {
                        e += wp * self.kernel(i, j);
                    }
                }
            }
        }
        for c in &self.cliques.superpixel {
            let l = x[c[0]];
            let same = c.iter().all(|&j| x[j] == l);
            let sp = &self.superpixel;
            e += w.get("superpixel") * if same { sp.w_low } else { sp.w_high };
        }
        for c in &self.cliques.containment {
            let lp = c.l_prime;
            let mut other: Option<Label> = None;
            let mut mixed = false;
            for &j in &c.boundary.pixels {
                match (x[j], other) {
                    (v, _) if v == lp => {}
                    (v, None) => other = Some(v),
                    (v, Some(o)) if v != o => mixed = true,
                    _ => {}
                }
            }
            let v = if mixed {
                t.w_high()
            } else {
                t.lookup_containment(other.unwrap_or(lp), lp)
            };
            e += w.get("containment") * v;
        }
        for c in &self.cliques.attachment {
            let pure = c.first.iter().all(|&j| x[j] == c.l1) && c.second.iter().all(|&j| x[j] == c.l2);
            let v = if pure {
                t.lookup_attachment(c.l1, c.l2)
            } else {
                t.w_high()
            };
            e += w.get("attachment") * v;
        }
        e
    }

    fn decode(&self, mut index: u64, x: &mut [Label]) {
        let nl = self.num_labels() as u64;
        for v in x.iter_mut() {
            *v = (index % nl) as Label;
            index /= nl;
        }
    }

    /// Random instance with `num_pixels` pixels in one or two rows, every
    /// term enabled, scaled so that [`coupling`](Self::coupling) equals
    /// `max_coupling`. Pattern potentials use `w_low = 0`, `w_high = 1`.
    pub fn random(rng: &mut impl Rng, num_pixels: usize, num_labels: usize, max_coupling: f64) -> Result<Self> {
        if num_pixels < 2 || num_labels < 2 {
            return Err(Error::invalid("tiny instance needs at least 2 pixels and 2 labels"));
        }
        let (width, height) = if num_pixels.is_multiple_of(2) && num_pixels > 2 {
            (num_pixels / 2, 2)
        } else {
            (num_pixels, 1)
        };
        let pixels = (0..num_pixels)
            .map(|_| [rng.gen_range(0.0..60.0), rng.gen_range(0.0..60.0), rng.gen_range(0.0..60.0)])
            .collect();
        let image = ImageGrid::new(width, height, pixels)?;
        let unary = UnaryField::new(
            num_pixels,
            num_labels,
            (0..num_pixels * num_labels).map(|_| rng.gen_range(0.0..2.0)).collect(),
        )?;

        let mut table = RelationTable::new(num_labels, 1.0)?;
        table.add_containment(1, 0)?;
        table.add_attachment(0, 1, 0.0)?;

        let mut ids: Vec<usize> = (0..num_pixels).collect();
        ids.shuffle(rng);
        let split = rng.gen_range(1..num_pixels);
        let (a, b) = ids.split_at(split);
        let cliques = CliqueSet {
            superpixel: vec![a.to_vec(), b.to_vec()],
            containment: vec![ContainmentClique {
                boundary: BoundaryClique {
                    superpixel_id: 0,
                    pixels: a.to_vec(),
                },
                l_prime: rng.gen_range(0..num_labels),
            }],
            attachment: vec![AttachmentClique {
                first: a.to_vec(),
                second: b.to_vec(),
                l1: 0,
                l2: 1,
            }],
        };
        let share = rng.gen_range(0.0..=1.0);
        let pairwise = PairwiseParams {
            appearance_weight: share,
            smoothness_weight: 1.0 - share,
            bilateral_spatial_sigma: rng.gen_range(1.0..4.0),
            color_sigma: rng.gen_range(5.0..30.0),
            spatial_sigma: rng.gen_range(0.5..2.0),
            truncate_radius: None,
        };
        let weights = TermWeights::default()
            .with("pairwise", rng.gen_range(0.05..1.0))
            .with("superpixel", rng.gen_range(0.05..1.0))
            .with("containment", rng.gen_range(0.05..1.0))
            .with("attachment", rng.gen_range(0.05..1.0));
        let mut inst = Self {
            image,
            unary,
            table,
            cliques,
            weights,
            pairwise,
            superpixel: PatternWeights::default(),
        };
        let scale = max_coupling / inst.coupling();
        for term in ["pairwise", "superpixel", "containment", "attachment"] {
            let w = inst.weights.get(term);
            inst.weights.set(term, w * scale)?;
        }
        Ok(inst)
    }

    /// Largest total interaction strength on one pixel: its weighted kernel
    /// mass to every other pixel plus, for each clique containing it, the
    /// term weight times the spread between the potential's values.
    pub fn coupling(&self) -> f64 {
        let w = &self.weights;
        let t = &self.table;
        let n = self.num_pixels();
        let spread = |lows: &mut dyn Iterator<Item = f64>| {
            lows.map(|low| (t.w_high() - low).abs()).fold(0.0, f64::max)
        };
        let nl = self.num_labels();
        let contain_spread = spread(&mut (0..nl).flat_map(|a| (0..nl).map(move |b| (a, b))).map(|(a, b)| t.lookup_containment(a, b)));
        let attach_spread = spread(&mut (0..nl).flat_map(|a| (0..nl).map(move |b| (a, b))).map(|(a, b)| t.lookup_attachment(a, b)));
        let sp_spread = (self.superpixel.w_high - self.superpixel.w_low).abs();
        (0..n)
            .map(|i| {
                let mut c: f64 = (0..n).filter(|&j| j != i).map(|j| w.get("pairwise") * self.kernel(i, j)).sum();
                c += self.cliques.superpixel.iter().filter(|cl| cl.contains(&i)).count() as f64
                    * w.get("superpixel")
                    * sp_spread;
                c += self.cliques.containment.iter().filter(|cl| cl.boundary.pixels.contains(&i)).count() as f64
                    * w.get("containment")
                    * contain_spread;
                c += self.cliques.attachment.iter().filter(|cl| cl.first.contains(&i) || cl.second.contains(&i)).count()
                    as f64
                    * w.get("attachment")
                    * attach_spread;
                c
            })
            .fold(0.0, f64::max)
    }
}

/// `P(x_i = l)` under `exp(-E(x))`, summed over every configuration.
pub fn exact_marginals(inst: &TinyInstance) -> Result<MarginalField> {
    inst.check()?;
    let (n, nl) = (inst.num_pixels(), inst.num_labels());
    let total = (nl as u64).pow(n as u32);
    const CHUNK: u64 = 4096;
    let chunks: Vec<u64> = (0..total.div_ceil(CHUNK)).collect();
    let range = |c: u64| c * CHUNK..((c + 1) * CHUNK).min(total);

    let min_energy = chunks
        .par_iter()
        .map(|&c| {
            let mut x = vec![0; n];
            range(c).fold(f64::INFINITY, |m, idx| {
                inst.decode(idx, &mut x);
                m.min(inst.energy(&x))
            })
        })
        .reduce(|| f64::INFINITY, f64::min);

    // per-chunk partial sums, combined in chunk order
    let partials: Vec<Vec<f64>> = chunks
        .par_iter()
        .map(|&c| {
            let mut x = vec![0; n];
            let mut acc = vec![0.0; n * nl];
            for idx in range(c) {
                inst.decode(idx, &mut x);
                let p = (min_energy - inst.energy(&x)).exp();
                for (i, &l) in x.iter().enumerate() {
                    acc[i * nl + l] += p;
                }
            }
            acc
        })
        .collect();
    let mut sums = vec![0.0; n * nl];
    for part in &partials {
        for (s, v) in sums.iter_mut().zip(part) {
            *s += v;
        }
    }
    normalize_rows(sums, nl)
}

/// Per-pixel total variation distance `0.5 * sum_l |p - q|`.
pub fn total_variation(p: &MarginalField, q: &MarginalField, i: usize) -> f64 {
    0.5 * p.row(i).iter().zip(q.row(i)).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Outcome of comparing one message kind against the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct KindReport {
    pub kind: &'static str,
    pub cases: usize,
    /// Largest error of the single-pixel message function.
    pub max_error: f64,
    /// Largest error of the batched per-clique accumulation.
    pub max_batched_error: f64,
}

impl KindReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_error <= tol && self.max_batched_error <= tol
    }
}

fn random_marginals(rng: &mut impl Rng, n: usize, nl: usize) -> MarginalField {
    // occasionally exact zeros, to exercise degenerate factors
    let raw = (0..n * nl)
        .map(|_| if rng.gen_bool(0.05) { 0.0 } else { rng.gen_range(0.01..1.0) })
        .collect::<Vec<_>>();
    let rows: Vec<f64> = raw
        .chunks(nl)
        .flat_map(|r| {
            if r.iter().all(|&v| v == 0.0) {
                vec![1.0; nl]
            } else {
                r.to_vec()
            }
        })
        .collect();
    normalize_rows(rows, nl).expect("positive rows")
}

struct Case {
    q: MarginalField,
    clique: Vec<usize>,
    i: usize,
    l: Label,
    w_low: Vec<f64>,
    w_high: f64,
    table: RelationTable,
    l_prime: Label,
    first_len: usize,
    l1: Label,
    l2: Label,
}

fn random_case(rng: &mut impl Rng) -> Case {
    let size = rng.gen_range(2..=MAX_CLIQUE_SIZE);
    let nl = rng.gen_range(2..=MAX_LABELS);
    // embed the clique in a slightly larger field, in scrambled order
    let total = size + rng.gen_range(0..3);
    let q = random_marginals(rng, total, nl);
    let mut clique: Vec<usize> = (0..total).collect();
    clique.shuffle(rng);
    clique.truncate(size);
    let i = clique[rng.gen_range(0..size)];
    let l = rng.gen_range(0..nl);
    let w_high = rng.gen_range(0.01..2.0);
    let w_low = (0..nl).map(|_| rng.gen_range(0.0..=w_high)).collect();
    let mut table = RelationTable::new(nl, w_high).unwrap();
    for a in 0..nl {
        table.set_containment_weight(a, rng.gen_range(0.0..=w_high)).unwrap();
        for b in 0..nl {
            if a != b && rng.gen_bool(0.4) {
                table.add_containment(a, b).unwrap();
            }
            if a < b && rng.gen_bool(0.5) {
                table.add_attachment(a, b, rng.gen_range(0.0..=w_high)).unwrap();
            }
        }
    }
    let l1 = rng.gen_range(0..nl);
    let l2 = (l1 + rng.gen_range(1..nl)) % nl;
    Case {
        q,
        clique,
        i,
        l,
        w_low,
        w_high,
        table,
        l_prime: rng.gen_range(0..nl),
        first_len: rng.gen_range(1..size),
        l1,
        l2,
    }
}

fn batched_entry(case: &Case, cliques: CliqueSet, term: &str, superpixel: PatternWeights) -> f64 {
    let registry = TermRegistry::builtin();
    let image = ImageGrid::filled(case.q.num_pixels(), 1, [0.0; 3]).unwrap();
    let pairwise = PairwiseParams::default();
    let ctx = TermContext {
        image: &image,
        cliques: &cliques,
        table: &case.table,
        pairwise: &pairwise,
        superpixel: &superpixel,
    };
    let mut out = MessageField::zeros(case.q.num_pixels(), case.q.num_labels());
    registry.get(term).unwrap().accumulate(&ctx, &case.q, 1.0, &mut out);
    out.get(case.i, case.l)
}

fn check_case(kind: &'static str, case: &Case) -> Result<(f64, f64)> {
    let (q, c, i, l) = (&case.q, &case.clique, case.i, case.l);
    let (closed, batched, exact) = match kind {
        "superpixel" => {
            let exact = exact_clique_message(
                q,
                c,
                PatternKind::Superpixel {
                    w_low: &case.w_low,
                    w_high: case.w_high,
                },
                i,
                l,
            )?;
            let closed = superpixel_message(q, c, i, l, |x| case.w_low[x], case.w_high);
            // the batched term uses one w_low for all labels; only label l matters here
            let weights = PatternWeights {
                w_low: case.w_low[l],
                w_high: case.w_high,
            };
            let cliques = CliqueSet {
                superpixel: vec![c.clone()],
                ..Default::default()
            };
            (closed, batched_entry(case, cliques, kind, weights), exact)
        }
        "containment" => {
            let kind_ = PatternKind::Containment {
                l_prime: case.l_prime,
                table: &case.table,
            };
            let exact = exact_clique_message(q, c, kind_, i, l)?;
            let boundary = BoundaryClique {
                superpixel_id: 0,
                pixels: c.clone(),
            };
            let closed = containment_message(q, &boundary, case.l_prime, i, l, &case.table);
            let cliques = CliqueSet {
                containment: vec![ContainmentClique {
                    boundary,
                    l_prime: case.l_prime,
                }],
                ..Default::default()
            };
            (closed, batched_entry(case, cliques, kind, PatternWeights::default()), exact)
        }
        _ => {
            let kind_ = PatternKind::Attachment {
                first_len: case.first_len,
                l1: case.l1,
                l2: case.l2,
                table: &case.table,
            };
            let exact = exact_clique_message(q, c, kind_, i, l)?;
            let (first, second) = c.split_at(case.first_len);
            let clique = AttachmentClique {
                first: first.to_vec(),
                second: second.to_vec(),
                l1: case.l1,
                l2: case.l2,
            };
            let closed = attachment_message(q, &clique, i, l, &case.table);
            let cliques = CliqueSet {
                attachment: vec![clique],
                ..Default::default()
            };
            (closed, batched_entry(case, cliques, kind, PatternWeights::default()), exact)
        }
    };
    Ok(((closed - exact).abs(), (batched - exact).abs()))
}

/// Compares every pattern message, single-pixel and batched, against
/// [`exact_clique_message`] on `cases` random cliques per kind.
pub fn verify_messages(seed: u64, cases: usize) -> Result<Vec<KindReport>> {
    ["superpixel", "containment", "attachment"]
        .iter()
        .enumerate()
        .map(|(k, &kind)| {
            let errors = (0..cases)
                .into_par_iter()
                .map(|n| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((k as u64) << 40) ^ n as u64);
                    check_case(kind, &random_case(&mut rng))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(KindReport {
                kind,
                cases,
                max_error: errors.iter().map(|e| e.0).fold(0.0, f64::max),
                max_batched_error: errors.iter().map(|e| e.1).fold(0.0, f64::max),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(nl: usize) -> RelationTable {
        let mut t = RelationTable::new(nl, 1.0).unwrap();
        t.add_containment(1, 0).unwrap();
        t.add_attachment(0, 1, 0.2).unwrap();
        t
    }

    #[test]
    fn deterministic_pattern_gives_w_low() {
        let q = MarginalField::new(3, 2, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let m = exact_clique_message(
            &q,
            &[0, 1, 2],
            PatternKind::Superpixel {
                w_low: &[0.3, 0.4],
                w_high: 1.0,
            },
            1,
            0,
        )
        .unwrap();
        assert!((m - 0.3).abs() < 1e-15);
    }

    #[test]
    fn singleton_clique_evaluates_psi_directly() {
        let q = MarginalField::uniform(1, 2).unwrap();
        let t = table(2);
        let kind = PatternKind::Containment { l_prime: 0, table: &t };
        assert_eq!(exact_clique_message(&q, &[0], kind, 0, 1).unwrap(), 0.0);
        let kind = PatternKind::Attachment {
            first_len: 1,
            l1: 0,
            l2: 1,
            table: &t,
        };
        assert_eq!(exact_clique_message(&q, &[0], kind, 0, 0).unwrap(), 0.2);
        assert_eq!(exact_clique_message(&q, &[0], kind, 0, 1).unwrap(), 1.0);
    }

    #[test]
    fn rejects_oversized_input() {
        let q = MarginalField::uniform(13, 2).unwrap();
        let kind = PatternKind::Superpixel {
            w_low: &[0.0, 0.0],
            w_high: 1.0,
        };
        let clique: Vec<usize> = (0..13).collect();
        assert!(matches!(
            exact_clique_message(&q, &clique, kind, 0, 0),
            Err(Error::TooLarge(_))
        ));
        let q5 = MarginalField::uniform(2, 5).unwrap();
        let kind = PatternKind::Superpixel {
            w_low: &[0.0; 5],
            w_high: 1.0,
        };
        assert!(matches!(
            exact_clique_message(&q5, &[0, 1], kind, 0, 0),
            Err(Error::TooLarge(_))
        ));
        assert!(exact_clique_message(&q, &[1, 2], kind, 0, 0).is_err());
    }

    fn plain_instance(unary: Vec<f64>, width: usize, nl: usize) -> TinyInstance {
        let n = unary.len() / nl;
        TinyInstance {
            image: ImageGrid::filled(width, n / width, [0.0; 3]).unwrap(),
            unary: UnaryField::new(n, nl, unary).unwrap(),
            table: RelationTable::new(nl, 1.0).unwrap(),
            cliques: CliqueSet::default(),
            weights: TermWeights::unary_only(),
            pairwise: PairwiseParams::default(),
            superpixel: PatternWeights::default(),
        }
    }

    #[test]
    fn single_pixel_is_softmax() {
        let inst = plain_instance(vec![0.0, 3f64.ln()], 1, 2);
        let p = exact_marginals(&inst).unwrap();
        assert!((p.get(0, 0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn independent_pixels_factorize() {
        let inst = plain_instance(vec![0.1, 0.7, 1.3, 0.4, 0.0, 2.0], 2, 3);
        let p = exact_marginals(&inst).unwrap();
        for i in 0..2 {
            let z: f64 = inst.unary.row(i).iter().map(|u| (-u).exp()).sum();
            for l in 0..3 {
                assert!((p.get(i, l) - (-inst.unary.get(i, l)).exp() / z).abs() < 1e-14);
            }
        }
        assert!(p.max_row_sum_error() < 1e-12);
    }

    #[test]
    fn two_pixel_potts_chain() {
        let mut inst = plain_instance(vec![0.0; 4], 2, 2);
        inst.weights = TermWeights::unary_only().with("pairwise", 1.0);
        inst.pairwise.appearance_weight = 0.0;
        inst.pairwise.smoothness_weight = 1.0;
        inst.pairwise.spatial_sigma = 1.0;
        let w = (-0.5f64).exp();
        // the joint puts weight 1 on agreeing pairs and e^-w on disagreeing ones
        let p = exact_marginals(&inst).unwrap();
        assert!((p.get(0, 0) - 0.5).abs() < 1e-15);
        let z = 2.0 + 2.0 * (-w).exp();
        let configs: Vec<f64> = (0..4u64)
            .map(|idx| {
                let mut x = [0; 2];
                inst.decode(idx, &mut x);
                (-inst.energy(&x)).exp() / z
            })
            .collect();
        assert!((configs[0] + configs[3] - 2.0 / z).abs() < 1e-15);
    }

    #[test]
    fn label_swap_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut inst = TinyInstance::random(&mut rng, 5, 2, 0.5).unwrap();
        inst.weights = inst.weights.clone().with("containment", 0.0).with("attachment", 0.0);
        let p = exact_marginals(&inst).unwrap();
        let swapped: Vec<f64> = inst
            .unary
            .as_slice()
            .chunks(2)
            .flat_map(|r| [r[1], r[0]])
            .collect();
        inst.unary = UnaryField::new(5, 2, swapped).unwrap();
        let ps = exact_marginals(&inst).unwrap();
        for i in 0..5 {
            assert!((p.get(i, 0) - ps.get(i, 1)).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_rejects_large_instances() {
        let inst = plain_instance(vec![0.0; 26], 13, 2);
        assert!(matches!(exact_marginals(&inst), Err(Error::TooLarge(_))));
    }

    #[test]
    fn messages_match_on_a_small_sample() {
        for r in verify_messages(11, 60).unwrap() {
            assert!(r.passed(1e-10), "{r:?}");
        }
    }
}
