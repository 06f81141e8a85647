//! Label-pair relation look-up tables for the containment and attachment
//! terms, and learning them from ground-truth label maps.
//!
//! A relation is measured per image as a yes/no event and aggregated as the
//! proportion of images, among those where both labels occur, in which it
//! holds. Pairs at or above the proportion threshold go into the table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Label, LabelMap, LabelSet};
use crate::superpixels::SuperpixelMap;

pub const DEFAULT_W_HIGH: f64 = 1.0;
pub const DEFAULT_PROPORTION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct RelationTable {
    num_labels: usize,
    /// (inner, outer)
    containment: BTreeSet<(Label, Label)>,
    /// stored with the smaller id first
    attachment: BTreeSet<(Label, Label)>,
    w_low_containment: Vec<f64>,
    w_low_attachment: BTreeMap<(Label, Label), f64>,
    w_high: f64,
}

fn unordered(a: Label, b: Label) -> (Label, Label) {
    (a.min(b), a.max(b))
}

impl RelationTable {
    /// Empty table; every per-label containment weight starts at 0.
    pub fn new(num_labels: usize, w_high: f64) -> Result<Self> {
        if num_labels == 0 {
            return Err(Error::invalid("relation table needs at least one label"));
        }
        if !w_high.is_finite() || w_high < 0.0 {
            return Err(Error::invalid(format!("w_high must be finite and >= 0, got {w_high}")));
        }
        Ok(Self {
            num_labels,
            containment: BTreeSet::new(),
            attachment: BTreeSet::new(),
            w_low_containment: vec![0.0; num_labels],
            w_low_attachment: BTreeMap::new(),
            w_high,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn w_high(&self) -> f64 {
        self.w_high
    }

    fn check_label(&self, l: Label) -> Result<()> {
        if l < self.num_labels {
            Ok(())
        } else {
            Err(Error::invalid(format!("label {l} out of range (L = {})", self.num_labels)))
        }
    }

    fn check_w_low(&self, w: f64) -> Result<()> {
        if !w.is_finite() || w > self.w_high {
            return Err(Error::invalid(format!(
                "w_low {w} must be finite and not exceed w_high {}",
                self.w_high
            )));
        }
        Ok(())
    }

    pub fn set_w_high(&mut self, w_high: f64) -> Result<()> {
        let max_low = self
            .w_low_containment
            .iter()
            .chain(self.w_low_attachment.values())
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if !w_high.is_finite() || w_high < max_low {
            return Err(Error::invalid(format!(
                "w_high {w_high} is below a stored w_low ({max_low})"
            )));
        }
        self.w_high = w_high;
        Ok(())
    }

    /// Sets the per-label containment weight `w_low(l)`.
    pub fn set_containment_weight(&mut self, l: Label, w_low: f64) -> Result<()> {
        self.check_label(l)?;
        self.check_w_low(w_low)?;
        self.w_low_containment[l] = w_low;
        Ok(())
    }

    pub fn add_containment(&mut self, inner: Label, outer: Label) -> Result<()> {
        self.check_label(inner)?;
        self.check_label(outer)?;
        if inner == outer {
            return Err(Error::invalid(format!("label {inner} cannot contain itself")));
        }
        self.containment.insert((inner, outer));
        Ok(())
    }

    pub fn add_attachment(&mut self, a: Label, b: Label, w_low: f64) -> Result<()> {
        self.check_label(a)?;
        self.check_label(b)?;
        self.check_w_low(w_low)?;
        if a == b {
            return Err(Error::invalid(format!("label {a} cannot attach to itself")));
        }
        let key = unordered(a, b);
        self.attachment.insert(key);
        self.w_low_attachment.insert(key, w_low);
        Ok(())
    }

    pub fn contains(&self, inner: Label, outer: Label) -> bool {
        self.containment.contains(&(inner, outer))
    }

    pub fn attached(&self, a: Label, b: Label) -> bool {
        self.attachment.contains(&unordered(a, b))
    }

    pub fn containment_pairs(&self) -> impl Iterator<Item = (Label, Label)> + '_ {
        self.containment.iter().copied()
    }

    pub fn attachment_pairs(&self) -> impl Iterator<Item = (Label, Label)> + '_ {
        self.attachment.iter().copied()
    }

    pub fn containment_weight(&self, l: Label) -> f64 {
        self.w_low_containment[l]
    }

    /// Containment weight for a boundary pixel labeled `l` on a superpixel
    /// whose dominant label is `l_prime`.
    ///
    /// Low (`w_low(l)`) when `l == l_prime` or when `l` may sit inside
    /// `l_prime`; `w_high` otherwise.
    pub fn lookup_containment(&self, l: Label, l_prime: Label) -> f64 {
        if l == l_prime || self.contains(l, l_prime) {
            self.w_low_containment[l]
        } else {
            self.w_high
        }
    }

    /// `w_low(l1, l2)` for attached pairs, `w_high` otherwise.
    pub fn lookup_attachment(&self, l1: Label, l2: Label) -> f64 {
        self.w_low_attachment
            .get(&unordered(l1, l2))
            .copied()
            .unwrap_or(self.w_high)
    }

    /// Line-oriented text form:
    ///
    /// ```text
    /// H <w_high>
    /// C <inner_name> <outer_name> <w_low>
    /// A <name1> <name2> <w_low>
    /// ```
    pub fn to_text(&self, labels: &LabelSet) -> Result<String> {
        if labels.len() != self.num_labels {
            return Err(Error::ShapeMismatch(format!(
                "relation table has {} labels, label set has {}",
                self.num_labels,
                labels.len()
            )));
        }
        let name = |l: Label| labels.name(l).unwrap_or_default();
        let mut out = String::new();
        writeln!(out, "H {}", self.w_high).unwrap();
        for &(inner, outer) in &self.containment {
            writeln!(
                out,
                "C {} {} {}",
                name(inner),
                name(outer),
                self.w_low_containment[inner]
            )
            .unwrap();
        }
        for (&(a, b), w) in &self.w_low_attachment {
            writeln!(out, "A {} {} {}", name(a), name(b), w).unwrap();
        }
        Ok(out)
    }

    pub fn from_text(text: &str, labels: &LabelSet) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            context: "relation table".into(),
            line,
            message,
        };
        let mut w_high = None;
        let mut contain_rows = Vec::new();
        let mut attach_rows = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let label = |name: &str| {
                labels
                    .id(name)
                    .ok_or_else(|| err(line_no, format!("unknown label name {name:?}")))
            };
            let weight = |tok: &str| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|w| w.is_finite())
                    .ok_or_else(|| err(line_no, format!("bad weight {tok:?}")))
            };
            match fields.as_slice() {
                ["H", w] => {
                    if w_high.replace(weight(w)?).is_some() {
                        return Err(err(line_no, "H row given more than once".into()));
                    }
                }
                ["C", inner, outer, w] => {
                    contain_rows.push((line_no, label(inner)?, label(outer)?, weight(w)?))
                }
                ["A", a, b, w] => attach_rows.push((line_no, label(a)?, label(b)?, weight(w)?)),
                _ => return Err(err(line_no, format!("unrecognized row {line:?}"))),
            }
        }
        let w_high = w_high.ok_or_else(|| err(text.lines().count().max(1), "missing H row".into()))?;
        let mut table =
            Self::new(labels.len(), w_high).map_err(|e| err(1, e.to_string()))?;
        let mut seen_weight: BTreeMap<Label, f64> = BTreeMap::new();
        for (line_no, inner, outer, w) in contain_rows {
            if let Some(&prev) = seen_weight.get(&inner) {
                if prev != w {
                    return Err(err(
                        line_no,
                        format!("conflicting w_low for label {:?}", labels.name(inner).unwrap()),
                    ));
                }
            }
            seen_weight.insert(inner, w);
            table
                .add_containment(inner, outer)
                .and_then(|_| table.set_containment_weight(inner, w))
                .map_err(|e| err(line_no, e.to_string()))?;
        }
        for (line_no, a, b, w) in attach_rows {
            table
                .add_attachment(a, b, w)
                .map_err(|e| err(line_no, e.to_string()))?;
        }
        Ok(table)
    }
}

/// Co-occurrence and satisfaction counts for one label pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RelationStats {
    pub images_with_both: usize,
    pub images_satisfying_relation: usize,
}

impl RelationStats {
    pub fn proportion(&self) -> f64 {
        if self.images_with_both == 0 {
            0.0
        } else {
            self.images_satisfying_relation as f64 / self.images_with_both as f64
        }
    }
}

/// Whether some superpixel dominated by `inner` has a boundary made only of
/// `inner` and `outer` pixels, with at least one `outer` pixel.
pub fn measure_containment(gt: &LabelMap, sp: &SuperpixelMap, inner: Label, outer: Label) -> bool {
    if inner == outer || gt.len() != sp.num_pixels() {
        return false;
    }
    (0..sp.count()).any(|s| {
        if sp.majority_label(gt, s) != inner {
            return false;
        }
        let boundary = sp.boundary_clique(s).expect("id in range");
        let labels = boundary.pixels.iter().map(|&p| gt.get(p));
        labels.clone().all(|l| l == inner || l == outer) && labels.into_iter().any(|l| l == outer)
    })
}

/// Whether a pure `l1` superpixel and a pure `l2` superpixel have centroids
/// closer than `d`.
pub fn measure_attachment(gt: &LabelMap, sp: &SuperpixelMap, d: f64, l1: Label, l2: Label) -> bool {
    if l1 == l2 || gt.len() != sp.num_pixels() {
        return false;
    }
    let pure_with = |label: Label| -> Vec<usize> {
        (0..sp.count())
            .filter(|&s| sp.is_pure(gt, s, label))
            .collect()
    };
    let first = pure_with(l1);
    let second = pure_with(l2);
    first.iter().any(|&a| {
        second
            .iter()
            .any(|&b| sp.centroid_distance(a, b).expect("ids in range") < d)
    })
}

/// Relations observed in a single image, computed in one pass.
#[derive(Debug, Default)]
struct ImageRelations {
    present: BTreeSet<Label>,
    containment: BTreeSet<(Label, Label)>,
    attachment: BTreeSet<(Label, Label)>,
}

fn observe_image(gt: &LabelMap, sp: &SuperpixelMap, d: f64) -> ImageRelations {
    let mut obs = ImageRelations {
        present: gt.labels().iter().copied().collect(),
        ..Default::default()
    };
    let mut pure = Vec::new();
    for s in 0..sp.count() {
        let major = sp.majority_label(gt, s);
        let boundary = sp.boundary_clique(s).expect("id in range");
        let others: BTreeSet<Label> = boundary
            .pixels
            .iter()
            .map(|&p| gt.get(p))
            .filter(|&l| l != major)
            .collect();
        if others.len() == 1 {
            obs.containment.insert((major, *others.first().unwrap()));
        }
        if sp.is_pure(gt, s, major) {
            pure.push((s, major));
        }
    }
    for (i, &(a, la)) in pure.iter().enumerate() {
        for &(b, lb) in &pure[i + 1..] {
            if la != lb && sp.centroid_distance(a, b).expect("ids in range") < d {
                obs.attachment.insert(unordered(la, lb));
            }
        }
    }
    obs
}

/// Per-pair statistics over a dataset of (ground truth, superpixels) pairs.
#[derive(Debug, Clone, Default)]
pub struct DatasetStats {
    pub containment: BTreeMap<(Label, Label), RelationStats>,
    pub attachment: BTreeMap<(Label, Label), RelationStats>,
}

pub fn relation_stats(
    dataset: &[(LabelMap, SuperpixelMap)],
    num_labels: usize,
    d: f64,
) -> Result<DatasetStats> {
    if dataset.is_empty() {
        return Err(Error::invalid("relation learning needs at least one image"));
    }
    if !(d > 0.0) {
        return Err(Error::invalid("attachment threshold d must be positive"));
    }
    for (idx, (gt, sp)) in dataset.iter().enumerate() {
        if gt.width() != sp.width() || gt.height() != sp.height() {
            return Err(Error::ShapeMismatch(format!(
                "image {idx}: label map and superpixels differ in shape"
            )));
        }
        gt.validate(num_labels)?;
    }
    let observations: Vec<ImageRelations> = dataset
        .par_iter()
        .map(|(gt, sp)| observe_image(gt, sp, d))
        .collect();

    let mut stats = DatasetStats::default();
    for a in 0..num_labels {
        for b in 0..num_labels {
            if a == b {
                continue;
            }
            let mut c = RelationStats::default();
            for obs in &observations {
                if obs.present.contains(&a) && obs.present.contains(&b) {
                    c.images_with_both += 1;
                    c.images_satisfying_relation += usize::from(obs.containment.contains(&(a, b)));
                }
            }
            stats.containment.insert((a, b), c);
            if a < b {
                let mut s = RelationStats::default();
                for obs in &observations {
                    if obs.present.contains(&a) && obs.present.contains(&b) {
                        s.images_with_both += 1;
                        s.images_satisfying_relation += usize::from(obs.attachment.contains(&(a, b)));
                    }
                }
                stats.attachment.insert((a, b), s);
            }
        }
    }
    Ok(stats)
}

/// Learns a relation table. All `w_low` entries start at 0 and `w_high` at
/// [`DEFAULT_W_HIGH`]; weights are tuned separately.
pub fn learn_relations(
    dataset: &[(LabelMap, SuperpixelMap)],
    labels: &LabelSet,
    proportion_threshold: f64,
    d: f64,
) -> Result<RelationTable> {
    if !(proportion_threshold > 0.0 && proportion_threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "proportion threshold must lie in (0, 1], got {proportion_threshold}"
        )));
    }
    let stats = relation_stats(dataset, labels.len(), d)?;
    let mut table = RelationTable::new(labels.len(), DEFAULT_W_HIGH)?;
    for (&(inner, outer), s) in &stats.containment {
        if s.images_with_both > 0 && s.proportion() >= proportion_threshold {
            table.add_containment(inner, outer)?;
        }
    }
    for (&(a, b), s) in &stats.attachment {
        if s.images_with_both > 0 && s.proportion() >= proportion_threshold {
            table.add_attachment(a, b, 0.0)?;
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::pixel_coords;
    use proptest::prelude::*;

    const HEAD: Label = 1;
    const EYE: Label = 2;
    const TORSO: Label = 3;
    const NECK: Label = 4;

    fn labels() -> LabelSet {
        LabelSet::new(["bg", "head", "eye", "torso", "neck"]).unwrap()
    }

    /// 6x6 image of head with a 2x2 eye at rows/cols 2..4; superpixels are a
    /// 4x4 block (rows/cols 1..5) around the eye plus the surrounding frame.
    fn eye_in_head(boundary_label: Label) -> (LabelMap, SuperpixelMap) {
        let mut gt = LabelMap::filled(6, 6, HEAD).unwrap();
        let assignment: Vec<usize> = (0..36)
            .map(|i| {
                let (r, c) = pixel_coords(6, i);
                usize::from((1..5).contains(&r) && (1..5).contains(&c))
            })
            .collect();
        for i in 0..36 {
            let (r, c) = pixel_coords(6, i);
            if (1..5).contains(&r) && (1..5).contains(&c) {
                gt.set(i, EYE);
            }
        }
        // the block boundary ring: keep most eye, two pixels carry `boundary_label`
        gt.set(6 + 1, boundary_label);
        gt.set(6 + 2, boundary_label);
        let sp = SuperpixelMap::from_assignment(6, 6, assignment).unwrap();
        (gt, sp)
    }

    #[test]
    fn containment_measurement() {
        let (gt, sp) = eye_in_head(HEAD);
        assert_eq!(sp.majority_label(&gt, 1), EYE);
        assert!(measure_containment(&gt, &sp, EYE, HEAD));
        assert!(!measure_containment(&gt, &sp, NECK, HEAD));
        let (gt, sp) = eye_in_head(TORSO);
        assert!(!measure_containment(&gt, &sp, EYE, HEAD));
        assert!(!measure_containment(&gt, &sp, EYE, EYE));
    }

    /// Head block above a neck block, each 4x4 and pure.
    fn head_over_neck() -> (LabelMap, SuperpixelMap) {
        let sp = SuperpixelMap::blocks(4, 8, 4, 4).unwrap();
        let gt = LabelMap::new(4, 8, (0..32).map(|i| if i < 16 { HEAD } else { NECK }).collect())
            .unwrap();
        (gt, sp)
    }

    #[test]
    fn attachment_measurement() {
        let (gt, sp) = head_over_neck();
        // centroids (1.5,1.5) and (5.5,1.5): 4 px apart
        assert!(measure_attachment(&gt, &sp, 8.0, HEAD, NECK));
        assert!(measure_attachment(&gt, &sp, 8.0, NECK, HEAD));
        assert!(!measure_attachment(&gt, &sp, 3.0, HEAD, NECK));
        assert!(!measure_attachment(&gt, &sp, 8.0, HEAD, HEAD));
        let mut impure = gt.clone();
        impure.set(20, TORSO);
        assert!(!measure_attachment(&impure, &sp, 8.0, HEAD, NECK));
    }

    #[test]
    fn lookup_rules() {
        let mut t = RelationTable::new(5, 1.0).unwrap();
        t.add_containment(EYE, HEAD).unwrap();
        t.set_containment_weight(EYE, 0.05).unwrap();
        assert_eq!(t.lookup_containment(EYE, HEAD), 0.05);
        // direction matters: head is not inside eye
        assert_eq!(t.lookup_containment(HEAD, EYE), 1.0);
        assert_eq!(t.lookup_containment(TORSO, EYE), 1.0);
        assert_eq!(t.lookup_containment(EYE, EYE), 0.05);
        assert_eq!(t.lookup_attachment(HEAD, NECK), 1.0);
        t.add_attachment(NECK, HEAD, 0.2).unwrap();
        assert_eq!(t.lookup_attachment(HEAD, NECK), 0.2);
        assert!(t.attached(HEAD, NECK) && t.attached(NECK, HEAD));
        assert!(t.add_containment(EYE, EYE).is_err());
        assert!(t.set_containment_weight(EYE, 2.0).is_err());
        assert!(t.set_w_high(0.1).is_err());
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(learn_relations(&[], &labels(), 0.5, 4.0).is_err());
    }

    #[test]
    fn learned_pairs_and_empty_denominator() {
        let data = vec![eye_in_head(HEAD)];
        let t = learn_relations(&data, &labels(), 1.0, 4.0).unwrap();
        assert!(t.contains(EYE, HEAD));
        let stats = relation_stats(&data, 5, 4.0).unwrap();
        let none = stats.containment[&(TORSO, NECK)];
        assert_eq!(none.images_with_both, 0);
        assert_eq!(none.proportion(), 0.0);
        assert!(!t.contains(TORSO, NECK));
    }

    #[test]
    fn threshold_six_of_ten() {
        // oracle: 6 images satisfy (eye, head), 4 have eye and head but the
        // eye boundary touches torso, so the proportion is 6/10
        let mut data: Vec<_> = (0..6).map(|_| eye_in_head(HEAD)).collect();
        data.extend((0..4).map(|_| eye_in_head(TORSO)));
        let stats = relation_stats(&data, 5, 4.0).unwrap();
        let s = stats.containment[&(EYE, HEAD)];
        assert_eq!((s.images_satisfying_relation, s.images_with_both), (6, 10));
        assert!(learn_relations(&data, &labels(), 0.5, 4.0).unwrap().contains(EYE, HEAD));
        assert!(!learn_relations(&data, &labels(), 0.7, 4.0).unwrap().contains(EYE, HEAD));
    }

    #[test]
    fn text_format() {
        let ls = labels();
        let text = "# hand written\nH 2\nC eye head 0.1\nA head neck 0.5\n";
        let t = RelationTable::from_text(text, &ls).unwrap();
        assert_eq!(t.w_high(), 2.0);
        assert_eq!(t.lookup_containment(EYE, HEAD), 0.1);
        assert_eq!(t.lookup_attachment(NECK, HEAD), 0.5);
        let out = t.to_text(&ls).unwrap();
        assert_eq!(out, "H 2\nC eye head 0.1\nA head neck 0.5\n");
        assert_eq!(RelationTable::from_text(&out, &ls).unwrap(), t);

        assert!(RelationTable::from_text("C eye head 0\n", &ls).is_err());
        assert!(RelationTable::from_text("H 1\nH 1\n", &ls).is_err());
        assert!(RelationTable::from_text("H 1\nC eye nose 0\n", &ls).is_err());
        assert!(RelationTable::from_text("H 1\nC eye head 0\nC eye neck 0.5\n", &ls).is_err());
        assert!(RelationTable::from_text("H 1\nA head neck 3\n", &ls).is_err());
        assert!(RelationTable::from_text("H 1\nX a b\n", &ls).is_err());
    }

    fn random_image(seed: u64, w: usize, h: usize, nl: usize) -> (LabelMap, SuperpixelMap) {
        // blocky label map so that pure and mixed superpixels both occur
        let labels = (0..w * h)
            .map(|i| {
                let (r, c) = pixel_coords(w, i);
                ((r / 3 * 7 + c / 2 * 3 + seed as usize) % nl) as Label
            })
            .collect();
        let gt = LabelMap::new(w, h, labels).unwrap();
        let sp = SuperpixelMap::blocks(w, h, 2 + (seed % 3) as usize, 3).unwrap();
        (gt, sp)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn fast_path_matches_direct_measurement(seed in 0u64..500, d in 1.0f64..8.0) {
            let (gt, sp) = random_image(seed, 9, 9, 4);
            let obs = observe_image(&gt, &sp, d);
            for a in 0..4 {
                for b in 0..4 {
                    prop_assert_eq!(
                        obs.containment.contains(&(a, b)),
                        measure_containment(&gt, &sp, a, b)
                    );
                    prop_assert_eq!(
                        obs.attachment.contains(&unordered(a, b)) && a != b,
                        measure_attachment(&gt, &sp, d, a, b)
                    );
                }
            }
        }

        #[test]
        fn threshold_monotone_and_attachment_symmetric(
            seeds in prop::collection::vec(0u64..500, 1..6),
            t1 in 0.05f64..1.0,
            t2 in 0.05f64..1.0,
        ) {
            let ls = LabelSet::anonymous(4).unwrap();
            let data: Vec<_> = seeds.iter().map(|&s| random_image(s, 9, 9, 4)).collect();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let loose = learn_relations(&data, &ls, lo, 4.0).unwrap();
            let strict = learn_relations(&data, &ls, hi, 4.0).unwrap();
            for p in strict.containment_pairs() {
                prop_assert!(loose.contains(p.0, p.1));
            }
            for (a, b) in strict.attachment_pairs() {
                prop_assert!(loose.attached(a, b));
                prop_assert!(strict.attached(b, a));
            }
            for a in 0..4 {
                for b in 0..4 {
                    prop_assert!(loose.lookup_containment(a, b) <= loose.w_high());
                }
            }
        }
    }
}
