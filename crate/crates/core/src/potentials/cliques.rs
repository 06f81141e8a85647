use crate::grid::{Label, LabelMap};
use crate::relations::RelationTable;
use crate::superpixels::{BoundaryClique, SuperpixelMap};

/// Boundary of a superpixel together with its dominant label `l'`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContainmentClique {
    pub boundary: BoundaryClique,
    pub l_prime: Label,
}

/// Two nearby superpixels whose dominant labels are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct AttachmentClique {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    pub l1: Label,
    pub l2: Label,
}

impl AttachmentClique {
    pub fn len(&self) -> usize {
        self.first.len() + self.second.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Materialized higher-order cliques.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CliqueSet {
    pub superpixel: Vec<Vec<usize>>,
    pub containment: Vec<ContainmentClique>,
    pub attachment: Vec<AttachmentClique>,
}

impl CliqueSet {
    /// All three clique families for the given labeling.
    pub fn build(sp: &SuperpixelMap, current: &LabelMap, table: &RelationTable, d: f64) -> Self {
        Self {
            superpixel: build_superpixel_cliques(sp),
            containment: build_containment_cliques(sp, current),
            attachment: build_attachment_cliques(sp, current, table, d),
        }
    }
}

pub fn build_superpixel_cliques(sp: &SuperpixelMap) -> Vec<Vec<usize>> {
    (0..sp.count()).map(|s| sp.members(s).to_vec()).collect()
}

/// One boundary clique per superpixel, with `l'` the dominant label of the
/// whole superpixel under `current`.
pub fn build_containment_cliques(sp: &SuperpixelMap, current: &LabelMap) -> Vec<ContainmentClique> {
    (0..sp.count())
        .map(|s| ContainmentClique {
            boundary: sp.boundary_clique(s).expect("id in range"),
            l_prime: sp.majority_label(current, s),
        })
        .collect()
}

/// Pairs of superpixels with attached, distinct dominant labels and
/// centroids closer than `d`.
pub fn build_attachment_cliques(
    sp: &SuperpixelMap,
    current: &LabelMap,
    table: &RelationTable,
    d: f64,
) -> Vec<AttachmentClique> {
    let major: Vec<Label> = (0..sp.count()).map(|s| sp.majority_label(current, s)).collect();
    let mut out = Vec::new();
    for a in 0..sp.count() {
        for b in a + 1..sp.count() {
            let (la, lb) = (major[a], major[b]);
            if la == lb || !table.attached(la, lb) {
                continue;
            }
            if sp.centroid_distance(a, b).expect("ids in range") < d {
                out.push(AttachmentClique {
                    first: sp.members(a).to_vec(),
                    second: sp.members(b).to_vec(),
                    l1: la,
                    l2: lb,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: Label = 1;
    const NECK: Label = 2;
    const TORSO: Label = 3;

    /// Column of three 4x4 blocks; centroids are 4 px apart vertically.
    fn column(labels: [Label; 3]) -> (SuperpixelMap, LabelMap) {
        let sp = SuperpixelMap::blocks(4, 12, 4, 4).unwrap();
        let lm = LabelMap::new(4, 12, (0..48).map(|i| labels[i / 16]).collect()).unwrap();
        (sp, lm)
    }

    fn table() -> RelationTable {
        let mut t = RelationTable::new(4, 1.0).unwrap();
        t.add_attachment(HEAD, NECK, 0.0).unwrap();
        t.add_attachment(NECK, TORSO, 0.0).unwrap();
        t
    }

    #[test]
    fn close_related_pair_forms_clique() {
        let (sp, lm) = column([HEAD, NECK, TORSO]);
        let cl = build_attachment_cliques(&sp, &lm, &table(), 6.0);
        assert_eq!(cl.len(), 2);
        assert_eq!((cl[0].l1, cl[0].l2), (HEAD, NECK));
        assert_eq!((cl[1].l1, cl[1].l2), (NECK, TORSO));
        assert_eq!(cl[0].first, sp.members(0));
    }

    #[test]
    fn distant_pair_is_skipped() {
        // head and neck blocks 8 px apart
        let (sp, lm) = column([HEAD, TORSO, NECK]);
        let cl = build_attachment_cliques(&sp, &lm, &table(), 6.0);
        // only neck-torso, which are adjacent
        assert_eq!(cl.len(), 1);
        assert_eq!((cl[0].l1, cl[0].l2), (TORSO, NECK));
        assert!(build_attachment_cliques(&sp, &lm, &table(), 9.0).len() == 2);
    }

    #[test]
    fn unrelated_pair_is_skipped() {
        let (sp, lm) = column([HEAD, TORSO, TORSO]);
        assert!(build_attachment_cliques(&sp, &lm, &table(), 100.0).is_empty());
    }

    #[test]
    fn containment_uses_majority() {
        let (sp, mut lm) = column([HEAD, NECK, TORSO]);
        lm.set(16, HEAD);
        let cl = build_containment_cliques(&sp, &lm);
        assert_eq!(cl.iter().map(|c| c.l_prime).collect::<Vec<_>>(), vec![HEAD, NECK, TORSO]);
    }
}
