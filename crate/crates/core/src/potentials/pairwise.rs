use rayon::prelude::*;

use super::{EnergyTerm, MessageField, TermContext};
use crate::error::{Error, Result};
use crate::grid::{pixel_coords, ImageGrid, LabelMap, MarginalField};

/// Two-kernel Gaussian pairwise potential with Potts compatibility:
///
/// `k(i, j) = w_app * exp(-|p_i - p_j|^2 / 2a^2 - |I_i - I_j|^2 / 2b^2)
///          + w_sm  * exp(-|p_i - p_j|^2 / 2g^2)`
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseParams {
    pub appearance_weight: f64,
    pub smoothness_weight: f64,
    pub bilateral_spatial_sigma: f64,
    pub color_sigma: f64,
    pub spatial_sigma: f64,
    /// Ignore pairs further apart than this many pixels along either axis.
    /// Any value makes the message approximate.
    pub truncate_radius: Option<usize>,
}

impl Default for PairwiseParams {
    fn default() -> Self {
        Self {
            appearance_weight: 4.0,
            smoothness_weight: 3.0,
            bilateral_spatial_sigma: 30.0,
            color_sigma: 13.0,
            spatial_sigma: 3.0,
            truncate_radius: None,
        }
    }
}

impl PairwiseParams {
    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            self.bilateral_spatial_sigma,
            self.color_sigma,
            self.spatial_sigma,
        ];
        if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("pairwise sigmas must be positive"));
        }
        if [self.appearance_weight, self.smoothness_weight]
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(Error::invalid("pairwise weights must be non-negative"));
        }
        Ok(())
    }

    pub fn is_exact(&self) -> bool {
        self.truncate_radius.is_none()
    }

    /// Kernel value for one pixel pair, evaluated directly.
    pub fn kernel(&self, image: &ImageGrid, i: usize, j: usize) -> f64 {
        let (ri, ci) = image.coords(i);
        let (rj, cj) = image.coords(j);
        let dp = (ri as f64 - rj as f64).powi(2) + (ci as f64 - cj as f64).powi(2);
        let (a, b) = (image.color(i), image.color(j));
        let di: f64 = (0..3).map(|ch| (a[ch] - b[ch]).powi(2)).sum();
        self.appearance_weight
            * (-dp / (2.0 * self.bilateral_spatial_sigma.powi(2))
                - di / (2.0 * self.color_sigma.powi(2)))
            .exp()
            + self.smoothness_weight * (-dp / (2.0 * self.spatial_sigma.powi(2))).exp()
    }
}

/// Per-axis lookup tables for the separable spatial Gaussians.
struct KernelTables {
    app_row: Vec<f64>,
    app_col: Vec<f64>,
    sm_row: Vec<f64>,
    sm_col: Vec<f64>,
    inv_two_color_var: f64,
}

impl KernelTables {
    fn new(params: &PairwiseParams, width: usize, height: usize) -> Self {
        let axis = |len: usize, sigma: f64| -> Vec<f64> {
            (0..len)
                .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
                .collect()
        };
        Self {
            app_row: axis(height, params.bilateral_spatial_sigma),
            app_col: axis(width, params.bilateral_spatial_sigma),
            sm_row: axis(height, params.spatial_sigma),
            sm_col: axis(width, params.spatial_sigma),
            inv_two_color_var: 1.0 / (2.0 * params.color_sigma * params.color_sigma),
        }
    }
}

/// Iterates `(j, k(i, j))` over every `j != i` inside the truncation window.
fn for_each_pair(
    image: &ImageGrid,
    params: &PairwiseParams,
    tables: &KernelTables,
    i: usize,
    mut f: impl FnMut(usize, f64),
) {
    let (w, h) = (image.width(), image.height());
    let (ri, ci) = pixel_coords(w, i);
    let (r0, r1, c0, c1) = match params.truncate_radius {
        Some(rad) => (
            ri.saturating_sub(rad),
            (ri + rad + 1).min(h),
            ci.saturating_sub(rad),
            (ci + rad + 1).min(w),
        ),
        None => (0, h, 0, w),
    };
    let color_i = image.color(i);
    for rj in r0..r1 {
        let dr = ri.abs_diff(rj);
        let (ar, sr) = (tables.app_row[dr], tables.sm_row[dr]);
        for cj in c0..c1 {
            let j = rj * w + cj;
            if j == i {
                continue;
            }
            let dc = ci.abs_diff(cj);
            let color_j = image.color(j);
            let di = (color_i[0] - color_j[0]).powi(2)
                + (color_i[1] - color_j[1]).powi(2)
                + (color_i[2] - color_j[2]).powi(2);
            let k = params.appearance_weight
                * ar
                * tables.app_col[dc]
                * (-di * tables.inv_two_color_var).exp()
                + params.smoothness_weight * sr * tables.sm_col[dc];
            f(j, k);
        }
    }
}

/// `m[i][l] = sum_{j != i} k(i, j) * sum_{l' != l} q[j][l']`, by direct
/// summation over all pairs.
pub fn pairwise_message(q: &MarginalField, image: &ImageGrid, params: &PairwiseParams) -> MessageField {
    let mut out = MessageField::zeros(q.num_pixels(), q.num_labels());
    accumulate_pairwise(q, image, params, 1.0, &mut out);
    out
}

fn accumulate_pairwise(
    q: &MarginalField,
    image: &ImageGrid,
    params: &PairwiseParams,
    scale: f64,
    out: &mut MessageField,
) {
    if params.appearance_weight == 0.0 && params.smoothness_weight == 0.0 {
        return;
    }
    let nl = q.num_labels();
    let tables = KernelTables::new(params, image.width(), image.height());
    let totals: Vec<f64> = (0..q.num_pixels()).map(|j| q.row(j).iter().sum()).collect();
    out.as_mut_slice()
        .par_chunks_mut(nl)
        .enumerate()
        .for_each_init(
            || vec![0.0; nl],
            |acc, (i, row)| {
                acc.iter_mut().for_each(|a| *a = 0.0);
                let mut mass = 0.0;
                for_each_pair(image, params, &tables, i, |j, k| {
                    mass += k * totals[j];
                    for (a, &qj) in acc.iter_mut().zip(q.row(j)) {
                        *a += k * qj;
                    }
                });
                for (m, a) in row.iter_mut().zip(acc.iter()) {
                    *m += scale * (mass - a);
                }
            },
        );
}

/// Sum of `k(i, j)` over unordered pairs with different labels.
pub fn pairwise_energy(labels: &LabelMap, image: &ImageGrid, params: &PairwiseParams) -> f64 {
    let tables = KernelTables::new(params, image.width(), image.height());
    let partial: Vec<f64> = (0..labels.len())
        .into_par_iter()
        .map(|i| {
            let mut e = 0.0;
            let li = labels.get(i);
            for_each_pair(image, params, &tables, i, |j, k| {
                if j > i && labels.get(j) != li {
                    e += k;
                }
            });
            e
        })
        .collect();
    partial.iter().sum()
}

/// Dense Gaussian pairwise term.
#[derive(Debug, Clone, Copy, Default)]
pub struct PairwiseTerm;

impl EnergyTerm for PairwiseTerm {
    fn name(&self) -> &'static str {
        "pairwise"
    }

    fn accumulate(&self, ctx: &TermContext<'_>, q: &MarginalField, scale: f64, out: &mut MessageField) {
        accumulate_pairwise(q, ctx.image, ctx.pairwise, scale, out);
    }

    fn energy(&self, ctx: &TermContext<'_>, labels: &LabelMap) -> f64 {
        pairwise_energy(labels, ctx.image, ctx.pairwise)
    }
}
