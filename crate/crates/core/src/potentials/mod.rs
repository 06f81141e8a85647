//! Energy terms and their mean-field messages.
//!
//! Every term besides the unary implements [`EnergyTerm`] and is looked up by
//! name in a [`TermRegistry`]. The inference loop asks each enabled term to
//! add its weighted message into a shared [`MessageField`], so the messages of
//! all terms are summed before the single exponentiation of the update.

mod cliques;
mod pairwise;
mod pattern;

pub use cliques::{
    build_attachment_cliques, build_containment_cliques, build_superpixel_cliques,
    AttachmentClique, CliqueSet, ContainmentClique,
};
pub use pairwise::{pairwise_energy, pairwise_message, PairwiseParams, PairwiseTerm};
pub use pattern::{
    attachment_message, containment_message, superpixel_message, AttachmentTerm,
    ContainmentTerm, PatternWeights, SuperpixelTerm,
};

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, Label, LabelMap, MarginalField};
use crate::relations::RelationTable;

/// Accumulated message values `m[i][l]`, the exponent of the update before
/// negation.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageField {
    num_pixels: usize,
    num_labels: usize,
    values: Vec<f64>,
}

impl MessageField {
    pub fn zeros(num_pixels: usize, num_labels: usize) -> Self {
        Self {
            num_pixels,
            num_labels,
            values: vec![0.0; num_pixels * num_labels],
        }
    }

    pub fn num_pixels(&self) -> usize {
        self.num_pixels
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    #[inline]
    pub fn get(&self, i: usize, l: Label) -> f64 {
        self.values[i * self.num_labels + l]
    }

    #[inline]
    pub fn add(&mut self, i: usize, l: Label, v: f64) {
        self.values[i * self.num_labels + l] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_labels..(i + 1) * self.num_labels]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.num_labels..(i + 1) * self.num_labels]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Everything a term may read while computing messages or energies.
#[derive(Debug, Clone, Copy)]
pub struct TermContext<'a> {
    pub image: &'a ImageGrid,
    pub cliques: &'a CliqueSet,
    pub table: &'a RelationTable,
    pub pairwise: &'a PairwiseParams,
    pub superpixel: &'a PatternWeights,
}

/// One additive term of the energy.
pub trait EnergyTerm: Send + Sync {
    /// Registry key; also the config key suffix of the term's weight.
    fn name(&self) -> &'static str;

    /// Adds `scale` times this term's message for every pixel and label.
    fn accumulate(&self, ctx: &TermContext<'_>, q: &MarginalField, scale: f64, out: &mut MessageField);

    /// Unweighted value of the term at a hard labeling.
    fn energy(&self, ctx: &TermContext<'_>, labels: &LabelMap) -> f64;

    /// Number of cliques the term currently acts on.
    fn clique_count(&self, _ctx: &TermContext<'_>) -> usize {
        0
    }
}

/// Energy terms keyed by name, iterated in registration order.
pub struct TermRegistry {
    terms: Vec<Box<dyn EnergyTerm>>,
}

impl std::fmt::Debug for TermRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

impl Default for TermRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TermRegistry {
    pub fn empty() -> Self {
        Self { terms: Vec::new() }
    }

    /// pairwise, superpixel, containment, attachment
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(PairwiseTerm)).unwrap();
        reg.register(Box::new(SuperpixelTerm)).unwrap();
        reg.register(Box::new(ContainmentTerm)).unwrap();
        reg.register(Box::new(AttachmentTerm)).unwrap();
        reg
    }

    pub fn register(&mut self, term: Box<dyn EnergyTerm>) -> Result<()> {
        let name = term.name();
        if name == UNARY || self.get(name).is_some() {
            return Err(Error::invalid(format!("energy term `{name}` already registered")));
        }
        self.terms.push(term);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&dyn EnergyTerm> {
        self.terms.iter().find(|t| t.name() == name).map(|t| t.as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.terms.iter().map(|t| t.name())
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn EnergyTerm> {
        self.terms.iter().map(|t| t.as_ref())
    }
}

/// Name reserved for the unary weight.
pub const UNARY: &str = "unary";
