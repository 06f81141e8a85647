//! IoU evaluation and the weight grid search.

use rayon::prelude::*;

use crate::config::InferenceConfig;
use crate::error::{Error, Result};
use crate::grid::{ImageGrid, LabelMap, UnaryField};
use crate::inference::{Engine, Problem};
use crate::relations::RelationTable;
use crate::superpixels::SuperpixelMap;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LabelIoU {
    pub intersection: usize,
    pub union: usize,
}

impl LabelIoU {
    /// `None` when the label appears in neither map.
    pub fn iou(&self) -> Option<f64> {
        (self.union > 0).then(|| self.intersection as f64 / self.union as f64)
    }
}

/// Per-label counts, accumulated globally over any number of image pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct IoUReport {
    pub per_label: Vec<LabelIoU>,
}

impl IoUReport {
    pub fn new(num_labels: usize) -> Self {
        Self {
            per_label: vec![LabelIoU::default(); num_labels],
        }
    }

    pub fn add(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        if !pred.same_shape(gt) {
            return Err(Error::ShapeMismatch(format!(
                "prediction is {}x{}, ground truth is {}x{}",
                pred.width(),
                pred.height(),
                gt.width(),
                gt.height()
            )));
        }
        let n = self.per_label.len();
        pred.validate(n)?;
        gt.validate(n)?;
        for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
            if p == g {
                self.per_label[p].intersection += 1;
                self.per_label[p].union += 1;
            } else {
                self.per_label[p].union += 1;
                self.per_label[g].union += 1;
            }
        }
        Ok(())
    }

    pub fn iou(&self, label: usize) -> Option<f64> {
        self.per_label.get(label).and_then(LabelIoU::iou)
    }

    /// Mean over labels with a nonzero union; 0 if there are none.
    pub fn mean_iou(&self) -> f64 {
        let scores: Vec<f64> = self.per_label.iter().filter_map(LabelIoU::iou).collect();
        if scores.is_empty() {
            0.0
        } else {
            scores.iter().sum::<f64>() / scores.len() as f64
        }
    }
}

pub fn evaluate_iou(pred: &LabelMap, gt: &LabelMap, num_labels: usize) -> Result<IoUReport> {
    let mut r = IoUReport::new(num_labels);
    r.add(pred, gt)?;
    Ok(r)
}

/// One validation image with everything inference needs.
#[derive(Debug, Clone)]
pub struct ValidationSample {
    pub unary: UnaryField,
    pub image: ImageGrid,
    pub superpixels: SuperpixelMap,
    pub gt: LabelMap,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best_index: usize,
    pub best: InferenceConfig,
    /// Global-count mean IoU per candidate, in grid order.
    pub scores: Vec<f64>,
}

/// Mean IoU of one config over the validation set.
pub fn score_config(config: &InferenceConfig, samples: &[ValidationSample], table: &RelationTable) -> Result<f64> {
    let engine = Engine::new(config.clone())?;
    let mut report = IoUReport::new(table.num_labels());
    for s in samples {
        let problem = Problem::new(&s.unary, &s.image, table)?;
        let out = engine.run(&problem, &s.superpixels)?;
        report.add(&out.labels, &s.gt)?;
    }
    Ok(report.mean_iou())
}

/// Picks the candidate with the best mean IoU; ties go to the earliest.
pub fn grid_search_weights(
    candidates: &[InferenceConfig],
    samples: &[ValidationSample],
    table: &RelationTable,
) -> Result<GridSearchResult> {
    if candidates.is_empty() {
        return Err(Error::invalid("grid search needs at least one candidate"));
    }
    if samples.is_empty() {
        return Err(Error::invalid("grid search needs at least one validation sample"));
    }
    let scores = candidates
        .par_iter()
        .map(|c| score_config(c, samples, table))
        .collect::<Result<Vec<f64>>>()?;
    let mut best_index = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[best_index] {
            best_index = k;
        }
    }
    Ok(GridSearchResult {
        best_index,
        best: candidates[best_index].clone(),
        scores,
    })
}
