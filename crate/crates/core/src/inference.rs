//! Synchronous mean-field inference over the full energy: unary plus every
//! registered term, with convergence control and energy evaluation.

use std::fmt::Write as _;

use crate::config::InferenceConfig;
use crate::error::{Error, Result};
use crate::grid::{argmax_labeling, softmax_rows, ImageGrid, LabelMap, MarginalField, UnaryField};
use crate::potentials::{CliqueSet, MessageField, TermContext, TermRegistry, UNARY};
use crate::relations::RelationTable;
use crate::superpixels::SuperpixelMap;

/// Inputs that stay fixed for the whole run.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub unary: &'a UnaryField,
    pub image: &'a ImageGrid,
    pub table: &'a RelationTable,
}

impl<'a> Problem<'a> {
    pub fn new(unary: &'a UnaryField, image: &'a ImageGrid, table: &'a RelationTable) -> Result<Self> {
        if unary.num_pixels() != image.len() {
            return Err(Error::ShapeMismatch(format!(
                "unary has {} pixels, image has {}",
                unary.num_pixels(),
                image.len()
            )));
        }
        if unary.num_labels() != table.num_labels() {
            return Err(Error::ShapeMismatch(format!(
                "unary has {} labels, relation table has {}",
                unary.num_labels(),
                table.num_labels()
            )));
        }
        Ok(Self { unary, image, table })
    }

    fn num_labels(&self) -> usize {
        self.unary.num_labels()
    }

    fn argmax(&self, q: &MarginalField) -> Result<LabelMap> {
        argmax_labeling(q, self.image.width(), self.image.height())
    }
}

/// Diagnostics for one completed iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub max_delta: f64,
    /// Energy of the argmax labeling after the update.
    pub energy: f64,
    pub superpixel_cliques: usize,
    pub containment_cliques: usize,
    pub attachment_cliques: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InferenceTrace {
    pub records: Vec<IterationRecord>,
}

impl InferenceTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(
            "iteration max_delta energy superpixel_cliques containment_cliques attachment_cliques\n",
        );
        for r in &self.records {
            writeln!(
                out,
                "{} {} {} {} {} {}",
                r.iteration,
                r.max_delta,
                r.energy,
                r.superpixel_cliques,
                r.containment_cliques,
                r.attachment_cliques
            )
            .unwrap();
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct InferenceOutput {
    pub marginals: MarginalField,
    pub labels: LabelMap,
    pub trace: InferenceTrace,
}

/// `q[i][l] = softmax_l(-unary[i][l])`.
pub fn init_marginals(unary: &UnaryField) -> Result<MarginalField> {
    softmax_rows(unary.as_slice().iter().map(|u| -u).collect(), unary.num_labels())
}

/// Mean-field engine: a term registry plus a configuration.
pub struct Engine {
    registry: TermRegistry,
    config: InferenceConfig,
}

enum Cliques<'a> {
    Rebuild(&'a SuperpixelMap),
    Fixed(&'a CliqueSet),
}

impl Engine {
    pub fn new(config: InferenceConfig) -> Result<Self> {
        Self::with_registry(TermRegistry::builtin(), config)
    }

    pub fn with_registry(registry: TermRegistry, config: InferenceConfig) -> Result<Self> {
        config.validate()?;
        for (name, _) in config.term_weights.iter() {
            if name != UNARY && registry.get(name).is_none() {
                return Err(Error::UnknownTerm(name.to_string()));
            }
        }
        Ok(Self { registry, config })
    }

    pub fn config(&self) -> &InferenceConfig {
        &self.config
    }

    pub fn registry(&self) -> &TermRegistry {
        &self.registry
    }

    fn attachment_distance(&self, sp: &SuperpixelMap) -> f64 {
        self.config
            .attachment_distance
            .unwrap_or_else(|| sp.attachment_threshold())
    }

    /// Cliques for a labeling: superpixel interiors and boundaries, and the
    /// attachment pairs gated by the configured distance.
    pub fn build_cliques(&self, problem: &Problem<'_>, sp: &SuperpixelMap, labels: &LabelMap) -> CliqueSet {
        CliqueSet::build(sp, labels, problem.table, self.attachment_distance(sp))
    }

    fn context<'a>(&'a self, problem: &Problem<'a>, cliques: &'a CliqueSet) -> TermContext<'a> {
        TermContext {
            image: problem.image,
            cliques,
            table: problem.table,
            pairwise: &self.config.pairwise,
            superpixel: &self.config.superpixel,
        }
    }

    /// Weighted sum of the messages of every enabled term.
    pub fn messages(&self, problem: &Problem<'_>, cliques: &CliqueSet, q: &MarginalField) -> MessageField {
        let ctx = self.context(problem, cliques);
        let mut m = MessageField::zeros(q.num_pixels(), q.num_labels());
        for term in self.registry.iter() {
            let w = self.config.weight(term.name());
            if w != 0.0 {
                term.accumulate(&ctx, q, w, &mut m);
            }
        }
        m
    }

    /// One synchronous update: `q_next = normalize(exp(-w_u * unary - m))`
    /// with every pixel computed from the same `q_prev`.
    pub fn mean_field_step(
        &self,
        problem: &Problem<'_>,
        cliques: &CliqueSet,
        q_prev: &MarginalField,
    ) -> Result<MarginalField> {
        if q_prev.num_pixels() != problem.unary.num_pixels()
            || q_prev.num_labels() != problem.num_labels()
        {
            return Err(Error::ShapeMismatch("marginals do not match the unary field".into()));
        }
        let m = self.messages(problem, cliques, q_prev);
        let wu = self.config.weight(UNARY);
        let logits = problem
            .unary
            .as_slice()
            .iter()
            .zip(m.as_slice())
            .map(|(u, m)| -wu * u - m)
            .collect();
        softmax_rows(logits, problem.num_labels())
    }

    /// Full run with cliques derived from the current argmax labeling.
    pub fn run(&self, problem: &Problem<'_>, sp: &SuperpixelMap) -> Result<InferenceOutput> {
        if sp.num_pixels() != problem.image.len() || sp.width() != problem.image.width() {
            return Err(Error::ShapeMismatch("superpixels do not match the image".into()));
        }
        self.run_inner(problem, Cliques::Rebuild(sp))
    }

    /// Full run over a fixed clique set.
    pub fn run_with_cliques(&self, problem: &Problem<'_>, cliques: &CliqueSet) -> Result<InferenceOutput> {
        self.run_inner(problem, Cliques::Fixed(cliques))
    }

    fn run_inner(&self, problem: &Problem<'_>, source: Cliques<'_>) -> Result<InferenceOutput> {
        let mut q = init_marginals(problem.unary)?;
        let mut labels = problem.argmax(&q)?;
        let mut owned = None;
        let mut trace = InferenceTrace::default();
        for iteration in 1..=self.config.max_iterations {
            let cliques = match source {
                Cliques::Fixed(c) => c,
                Cliques::Rebuild(sp) => {
                    if owned.is_none() || self.config.rebuild_cliques_each_iter {
                        owned = Some(self.build_cliques(problem, sp, &labels));
                    }
                    owned.as_ref().unwrap()
                }
            };
            let next = self.mean_field_step(problem, cliques, &q)?;
            let max_delta = next.max_abs_diff(&q);
            q = next;
            labels = problem.argmax(&q)?;
            let energy = match source {
                Cliques::Fixed(c) => self.energy_with_cliques(problem, c, &labels),
                Cliques::Rebuild(sp) => self.total_energy(problem, sp, &labels),
            };
            trace.records.push(IterationRecord {
                iteration,
                max_delta,
                energy,
                superpixel_cliques: cliques.superpixel.len(),
                containment_cliques: cliques.containment.len(),
                attachment_cliques: cliques.attachment.len(),
            });
            if max_delta < self.config.convergence_tol {
                break;
            }
        }
        Ok(InferenceOutput {
            marginals: q,
            labels,
            trace,
        })
    }

    /// Energy of a hard labeling, with cliques (and `l'`, attachment pairs)
    /// derived from that same labeling.
    pub fn total_energy(&self, problem: &Problem<'_>, sp: &SuperpixelMap, labels: &LabelMap) -> f64 {
        let cliques = self.build_cliques(problem, sp, labels);
        self.energy_with_cliques(problem, &cliques, labels)
    }

    pub fn energy_with_cliques(&self, problem: &Problem<'_>, cliques: &CliqueSet, labels: &LabelMap) -> f64 {
        let wu = self.config.weight(UNARY);
        let unary: f64 = labels
            .labels()
            .iter()
            .enumerate()
            .map(|(i, &l)| problem.unary.get(i, l))
            .sum();
        let ctx = self.context(problem, cliques);
        let mut e = wu * unary;
        for term in self.registry.iter() {
            let w = self.config.weight(term.name());
            if w != 0.0 {
                e += w * term.energy(&ctx, labels);
            }
        }
        e
    }
}

/// Runs inference with the built-in terms.
pub fn run_inference(
    unary: &UnaryField,
    image: &ImageGrid,
    sp: &SuperpixelMap,
    table: &RelationTable,
    config: &InferenceConfig,
) -> Result<InferenceOutput> {
    let problem = Problem::new(unary, image, table)?;
    Engine::new(config.clone())?.run(&problem, sp)
}

/// Energy of `labels` under the built-in terms.
pub fn total_energy(
    labels: &LabelMap,
    unary: &UnaryField,
    image: &ImageGrid,
    sp: &SuperpixelMap,
    table: &RelationTable,
    config: &InferenceConfig,
) -> Result<f64> {
    labels.validate(unary.num_labels())?;
    let problem = Problem::new(unary, image, table)?;
    Ok(Engine::new(config.clone())?.total_energy(&problem, sp, labels))
}
