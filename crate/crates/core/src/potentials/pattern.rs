//! Pattern potentials: a clique pays `w_low` when its pixels follow a pattern
//! and `w_high` otherwise. Under the factorized `Q` the probability of the
//! pattern, given `x_i = l`, is a product over the other clique pixels, so
//! each message is `P * w_low + (1 - P) * w_high`.

use std::collections::BTreeSet;

use super::{AttachmentClique, ContainmentClique, EnergyTerm, MessageField, TermContext};
use crate::grid::{Label, LabelMap, MarginalField};
use crate::relations::RelationTable;
use crate::superpixels::BoundaryClique;

/// Low and high weights of the superpixel consistency term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternWeights {
    pub w_low: f64,
    pub w_high: f64,
}

impl Default for PatternWeights {
    fn default() -> Self {
        Self {
            w_low: 0.0,
            w_high: 1.0,
        }
    }
}

#[inline]
fn blend(p: f64, w_low: f64, w_high: f64) -> f64 {
    p * w_low + (1.0 - p) * w_high
}

/// Superpixel consistency message for pixel `i` taking label `l`.
pub fn superpixel_message(
    q: &MarginalField,
    clique: &[usize],
    i: usize,
    l: Label,
    w_low: impl Fn(Label) -> f64,
    w_high: f64,
) -> f64 {
    let p: f64 = clique
        .iter()
        .filter(|&&j| j != i)
        .map(|&j| q.get(j, l))
        .product();
    blend(p, w_low(l), w_high)
}

#[inline]
fn either(q: &MarginalField, j: usize, l: Label, l_prime: Label) -> f64 {
    if l == l_prime {
        q.get(j, l)
    } else {
        q.get(j, l) + q.get(j, l_prime)
    }
}

/// Containment message for boundary pixel `i` taking label `l`, where `l_prime`
/// is the dominant label of the superpixel owning the boundary.
pub fn containment_message(
    q: &MarginalField,
    clique: &BoundaryClique,
    l_prime: Label,
    i: usize,
    l: Label,
    table: &RelationTable,
) -> f64 {
    let p: f64 = clique
        .pixels
        .iter()
        .filter(|&&j| j != i)
        .map(|&j| either(q, j, l, l_prime))
        .product();
    blend(p, table.lookup_containment(l, l_prime), table.w_high())
}

/// Attachment message for pixel `i` in either half of the clique.
pub fn attachment_message(
    q: &MarginalField,
    clique: &AttachmentClique,
    i: usize,
    l: Label,
    table: &RelationTable,
) -> f64 {
    let side = |pixels: &[usize], label: Label| -> f64 {
        pixels
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| q.get(j, label))
            .product()
    };
    let mut gamma = 0.0;
    if l == clique.l1 && clique.first.contains(&i) {
        gamma += side(&clique.first, clique.l1) * side(&clique.second, clique.l2);
    }
    if l == clique.l2 && clique.second.contains(&i) {
        gamma += side(&clique.first, clique.l1) * side(&clique.second, clique.l2);
    }
    blend(gamma, table.lookup_attachment(clique.l1, clique.l2), table.w_high())
}

/// `out[k] = prod_{j != k} factors[j]` without division.
fn leave_one_out(factors: &[f64], out: &mut Vec<f64>) {
    let n = factors.len();
    out.clear();
    out.resize(n, 1.0);
    let mut prefix = 1.0;
    for k in 0..n {
        out[k] = prefix;
        prefix *= factors[k];
    }
    let mut suffix = 1.0;
    for k in (0..n).rev() {
        out[k] *= suffix;
        suffix *= factors[k];
    }
}

/// Superpixel consistency over whole superpixels.
#[derive(Debug, Clone, Copy, Default)]
pub struct SuperpixelTerm;

impl EnergyTerm for SuperpixelTerm {
    fn name(&self) -> &'static str {
        "superpixel"
    }

    fn accumulate(&self, ctx: &TermContext<'_>, q: &MarginalField, scale: f64, out: &mut MessageField) {
        let w = ctx.superpixel;
        let mut factors = Vec::new();
        let mut loo = Vec::new();
        for clique in &ctx.cliques.superpixel {
            for l in 0..q.num_labels() {
                factors.clear();
                factors.extend(clique.iter().map(|&j| q.get(j, l)));
                leave_one_out(&factors, &mut loo);
                for (&j, &p) in clique.iter().zip(&loo) {
                    out.add(j, l, scale * blend(p, w.w_low, w.w_high));
                }
            }
        }
    }

    fn energy(&self, ctx: &TermContext<'_>, labels: &LabelMap) -> f64 {
        let w = ctx.superpixel;
        ctx.cliques
            .superpixel
            .iter()
            .map(|c| {
                let first = labels.get(c[0]);
                if c.iter().all(|&j| labels.get(j) == first) {
                    w.w_low
                } else {
                    w.w_high
                }
            })
            .sum()
    }

    fn clique_count(&self, ctx: &TermContext<'_>) -> usize {
        ctx.cliques.superpixel.len()
    }
}

/// Containment over superpixel boundaries.
#[derive(Debug, Clone, Copy, Default)]
pub struct ContainmentTerm;

/// Energy of one containment clique at a hard labeling: the boundary may
/// carry `l'` plus at most one other label.
pub(crate) fn containment_clique_energy(
    clique: &ContainmentClique,
    labels: &LabelMap,
    table: &RelationTable,
) -> f64 {
    let others: BTreeSet<Label> = clique
        .boundary
        .pixels
        .iter()
        .map(|&j| labels.get(j))
        .filter(|&x| x != clique.l_prime)
        .collect();
    match others.len() {
        0 => table.lookup_containment(clique.l_prime, clique.l_prime),
        1 => table.lookup_containment(*others.first().unwrap(), clique.l_prime),
        _ => table.w_high(),
    }
}

impl EnergyTerm for ContainmentTerm {
    fn name(&self) -> &'static str {
        "containment"
    }

    fn accumulate(&self, ctx: &TermContext<'_>, q: &MarginalField, scale: f64, out: &mut MessageField) {
        let table = ctx.table;
        let mut factors = Vec::new();
        let mut loo = Vec::new();
        for clique in &ctx.cliques.containment {
            let pixels = &clique.boundary.pixels;
            let lp = clique.l_prime;
            for l in 0..q.num_labels() {
                let w = table.lookup_containment(l, lp);
                factors.clear();
                factors.extend(pixels.iter().map(|&j| either(q, j, l, lp)));
                leave_one_out(&factors, &mut loo);
                for (&j, &p) in pixels.iter().zip(&loo) {
                    out.add(j, l, scale * blend(p, w, table.w_high()));
                }
            }
        }
    }

    fn energy(&self, ctx: &TermContext<'_>, labels: &LabelMap) -> f64 {
        ctx.cliques
            .containment
            .iter()
            .map(|c| containment_clique_energy(c, labels, ctx.table))
            .sum()
    }

    fn clique_count(&self, ctx: &TermContext<'_>) -> usize {
        ctx.cliques.containment.len()
    }
}

/// Attachment between nearby superpixels with related dominant labels.
#[derive(Debug, Clone, Copy, Default)]
pub struct AttachmentTerm;

pub(crate) fn attachment_clique_energy(
    clique: &AttachmentClique,
    labels: &LabelMap,
    table: &RelationTable,
) -> f64 {
    let pure = clique.first.iter().all(|&j| labels.get(j) == clique.l1)
        && clique.second.iter().all(|&k| labels.get(k) == clique.l2);
    if pure {
        table.lookup_attachment(clique.l1, clique.l2)
    } else {
        table.w_high()
    }
}

impl EnergyTerm for AttachmentTerm {
    fn name(&self) -> &'static str {
        "attachment"
    }

    fn accumulate(&self, ctx: &TermContext<'_>, q: &MarginalField, scale: f64, out: &mut MessageField) {
        let table = ctx.table;
        let w_high = table.w_high();
        let mut f1 = Vec::new();
        let mut f2 = Vec::new();
        let mut loo = Vec::new();
        for clique in &ctx.cliques.attachment {
            let w_low = table.lookup_attachment(clique.l1, clique.l2);
            f1.clear();
            f1.extend(clique.first.iter().map(|&j| q.get(j, clique.l1)));
            f2.clear();
            f2.extend(clique.second.iter().map(|&k| q.get(k, clique.l2)));
            let all1: f64 = f1.iter().product();
            let all2: f64 = f2.iter().product();

            // every label other than the pixel's own side label sees gamma = 0
            for (pixels, side_label) in [(&clique.first, clique.l1), (&clique.second, clique.l2)] {
                for &j in pixels.iter() {
                    for l in 0..q.num_labels() {
                        if l != side_label {
                            out.add(j, l, scale * w_high);
                        }
                    }
                }
            }
            leave_one_out(&f1, &mut loo);
            for (&j, &p) in clique.first.iter().zip(&loo) {
                out.add(j, clique.l1, scale * blend(p * all2, w_low, w_high));
            }
            leave_one_out(&f2, &mut loo);
            for (&k, &p) in clique.second.iter().zip(&loo) {
                out.add(k, clique.l2, scale * blend(all1 * p, w_low, w_high));
            }
        }
    }

    fn energy(&self, ctx: &TermContext<'_>, labels: &LabelMap) -> f64 {
        ctx.cliques
            .attachment
            .iter()
            .map(|c| attachment_clique_energy(c, labels, ctx.table))
            .sum()
    }

    fn clique_count(&self, ctx: &TermContext<'_>) -> usize {
        ctx.cliques.attachment.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{normalize_rows, ImageGrid};
    use crate::potentials::{CliqueSet, PairwiseParams};

    fn q_from(rows: &[&[f64]]) -> MarginalField {
        let l = rows[0].len();
        MarginalField::new(rows.len(), l, rows.iter().flat_map(|r| r.iter().copied()).collect())
            .unwrap()
    }

    fn table(w_low: f64, w_high: f64) -> RelationTable {
        let mut t = RelationTable::new(3, w_high).unwrap();
        t.add_containment(1, 0).unwrap();
        for l in 0..3 {
            t.set_containment_weight(l, w_low).unwrap();
        }
        t.add_attachment(0, 1, w_low).unwrap();
        t
    }

    #[test]
    fn superpixel_examples() {
        let q = q_from(&[&[1.0, 0.0], &[1.0, 0.0], &[0.5, 0.5]]);
        let c = [0, 1, 2];
        assert_eq!(superpixel_message(&q, &c, 2, 0, |_| 0.2, 3.0), 0.2);
        assert_eq!(superpixel_message(&q, &c, 2, 1, |_| 0.2, 3.0), 3.0);
        // oracle: enumerate the 4 joint labelings of pixels 1 and 2 with
        // q = 0.5 each; only (0, 0) with x_0 = 0 is uniform
        let q = q_from(&[&[0.5, 0.5], &[0.5, 0.5], &[0.5, 0.5]]);
        let (wl, wh) = (0.3, 2.0);
        let mut oracle = 0.0;
        for x1 in 0..2 {
            for x2 in 0..2 {
                let uniform = x1 == 0 && x2 == 0;
                oracle += 0.25 * if uniform { wl } else { wh };
            }
        }
        let m = superpixel_message(&q, &c, 0, 0, |_| wl, wh);
        assert!((m - oracle).abs() < 1e-15);
        assert!((m - (0.25 * wl + 0.75 * wh)).abs() < 1e-15);
    }

    #[test]
    fn containment_examples() {
        let t = table(0.1, 1.0);
        let boundary = BoundaryClique {
            superpixel_id: 0,
            pixels: vec![0, 1, 2],
        };
        // l = 1 inner, l' = 0 outer; other pixels fully on 0 or 1
        let q = q_from(&[&[0.2, 0.5, 0.3], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        assert_eq!(containment_message(&q, &boundary, 0, 0, 1, &t), 0.1);
        // label 2 unrelated to 0
        for probe in [0.0, 0.5, 1.0] {
            let q = q_from(&[&[1.0, 0.0, 0.0], &[probe, 1.0 - probe, 0.0], &[0.5, 0.0, 0.5]]);
            assert_eq!(containment_message(&q, &boundary, 0, 0, 2, &t), 1.0);
        }
        // oracle: enumerate the 9 configurations of two free pixels, each
        // (0.6 on l=1, 0.3 on l'=0, 0.1 on 2)
        let q = q_from(&[&[0.3, 0.6, 0.1], &[0.3, 0.6, 0.1], &[0.3, 0.6, 0.1]]);
        let mut oracle = 0.0;
        for x1 in 0..3 {
            for x2 in 0..3 {
                let ok = x1 != 2 && x2 != 2;
                oracle += q.get(1, x1) * q.get(2, x2) * if ok { 0.1 } else { 1.0 };
            }
        }
        let m = containment_message(&q, &boundary, 0, 0, 1, &t);
        assert!((m - oracle).abs() < 1e-15);
        assert!((m - (0.81 * 0.1 + 0.19 * 1.0)).abs() < 1e-15);
    }

    #[test]
    fn containment_degenerates_to_superpixel_without_l_prime_mass() {
        let t = table(0.25, 1.5);
        let boundary = BoundaryClique {
            superpixel_id: 0,
            pixels: vec![0, 1, 2, 3],
        };
        let q = normalize_rows(
            vec![0.0, 0.3, 0.7, 0.0, 0.9, 0.1, 0.0, 0.5, 0.5, 0.0, 0.2, 0.8],
            3,
        )
        .unwrap();
        for i in 0..4 {
            for l in 1..3 {
                let c = containment_message(&q, &boundary, 0, i, l, &t);
                let s = superpixel_message(&q, &boundary.pixels, i, l, |_| t.lookup_containment(l, 0), 1.5);
                assert!((c - s).abs() < 1e-15);
            }
        }
    }

    fn attach() -> AttachmentClique {
        AttachmentClique {
            first: vec![0, 1],
            second: vec![2, 3],
            l1: 0,
            l2: 1,
        }
    }

    #[test]
    fn attachment_examples() {
        let t = table(0.2, 1.0);
        let q = q_from(&[&[0.3, 0.3, 0.4], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]]);
        assert_eq!(attachment_message(&q, &attach(), 0, 0, &t), 0.2);
        assert_eq!(attachment_message(&q, &attach(), 0, 2, &t), 1.0);
        // i in first half asking for the second half's label
        assert_eq!(attachment_message(&q, &attach(), 0, 1, &t), 1.0);
        // oracle: all marginals 0.5 on their side's label, enumerate the 8
        // configurations of pixels 1, 2, 3 over {side label, other}
        let q = q_from(&[&[0.5, 0.5, 0.0][..]; 4]);
        let mut oracle = 0.0;
        for mask in 0..8u32 {
            let pure = mask == 0b111;
            oracle += 0.125 * if pure { 0.2 } else { 1.0 };
        }
        let m = attachment_message(&q, &attach(), 0, 0, &t);
        assert!((m - oracle).abs() < 1e-15);
        assert!((m - (0.125 * 0.2 + 0.875)).abs() < 1e-15);
    }

    fn ctx_parts() -> (ImageGrid, PairwiseParams, PatternWeights) {
        (
            ImageGrid::filled(3, 2, [0.0; 3]).unwrap(),
            PairwiseParams::default(),
            PatternWeights {
                w_low: 0.1,
                w_high: 0.9,
            },
        )
    }

    #[test]
    fn batched_terms_match_single_pixel_messages() {
        let (img, pp, sw) = ctx_parts();
        let t = table(0.05, 1.2);
        let cliques = CliqueSet {
            superpixel: vec![vec![0, 1, 2], vec![3, 4, 5]],
            containment: vec![ContainmentClique {
                boundary: BoundaryClique {
                    superpixel_id: 0,
                    pixels: vec![0, 1, 4, 5],
                },
                l_prime: 0,
            }],
            attachment: vec![AttachmentClique {
                first: vec![0, 1, 2],
                second: vec![4, 5],
                l1: 1,
                l2: 0,
            }],
        };
        let raw: Vec<f64> = (0..18).map(|k| 0.1 + ((k * 7919) % 13) as f64).collect();
        let q = normalize_rows(raw, 3).unwrap();
        let ctx = TermContext {
            image: &img,
            cliques: &cliques,
            table: &t,
            pairwise: &pp,
            superpixel: &sw,
        };
        let mut m = MessageField::zeros(6, 3);
        SuperpixelTerm.accumulate(&ctx, &q, 2.0, &mut m);
        ContainmentTerm.accumulate(&ctx, &q, 3.0, &mut m);
        AttachmentTerm.accumulate(&ctx, &q, 0.5, &mut m);
        for i in 0..6 {
            for l in 0..3 {
                let mut expect = 0.0;
                for c in &cliques.superpixel {
                    if c.contains(&i) {
                        expect += 2.0 * superpixel_message(&q, c, i, l, |_| 0.1, 0.9);
                    }
                }
                for c in &cliques.containment {
                    if c.boundary.pixels.contains(&i) {
                        expect += 3.0 * containment_message(&q, &c.boundary, c.l_prime, i, l, &t);
                    }
                }
                for c in &cliques.attachment {
                    if c.first.contains(&i) || c.second.contains(&i) {
                        expect += 0.5 * attachment_message(&q, c, i, l, &t);
                    }
                }
                assert!((m.get(i, l) - expect).abs() < 1e-12, "pixel {i} label {l}");
            }
        }
    }

    #[test]
    fn hard_labeling_energies() {
        let (img, pp, sw) = ctx_parts();
        let t = table(0.05, 1.2);
        let cliques = CliqueSet {
            superpixel: vec![vec![0, 1, 2]],
            containment: vec![ContainmentClique {
                boundary: BoundaryClique {
                    superpixel_id: 0,
                    pixels: vec![0, 1, 2],
                },
                l_prime: 0,
            }],
            attachment: vec![AttachmentClique {
                first: vec![0, 1],
                second: vec![3, 4],
                l1: 0,
                l2: 1,
            }],
        };
        let ctx = TermContext {
            image: &img,
            cliques: &cliques,
            table: &t,
            pairwise: &pp,
            superpixel: &sw,
        };
        let uniform = LabelMap::new(3, 2, vec![0, 0, 0, 1, 1, 1]).unwrap();
        assert_eq!(SuperpixelTerm.energy(&ctx, &uniform), 0.1);
        assert_eq!(ContainmentTerm.energy(&ctx, &uniform), 0.05);
        assert_eq!(AttachmentTerm.energy(&ctx, &uniform), 0.05);
        let mixed = LabelMap::new(3, 2, vec![0, 1, 2, 1, 1, 1]).unwrap();
        assert_eq!(SuperpixelTerm.energy(&ctx, &mixed), 0.9);
        assert_eq!(ContainmentTerm.energy(&ctx, &mixed), 1.2);
        assert_eq!(AttachmentTerm.energy(&ctx, &mixed), 1.2);
        let related = LabelMap::new(3, 2, vec![0, 1, 1, 1, 1, 1]).unwrap();
        assert_eq!(ContainmentTerm.energy(&ctx, &related), 0.05);
    }
}
