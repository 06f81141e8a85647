//! Inference configuration and its `key = value` text form.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::potentials::{PairwiseParams, PatternWeights, TermRegistry, UNARY};

/// Multiplier per energy term, keyed by term name.
#[derive(Debug, Clone, PartialEq)]
pub struct TermWeights(BTreeMap<String, f64>);

impl Default for TermWeights {
    fn default() -> Self {
        let mut w = BTreeMap::new();
        w.insert(UNARY.to_string(), 1.0);
        w.insert("pairwise".to_string(), 1.0);
        w.insert("superpixel".to_string(), 0.0);
        w.insert("containment".to_string(), 0.0);
        w.insert("attachment".to_string(), 0.0);
        Self(w)
    }
}

impl TermWeights {
    /// Only the unary term enabled.
    pub fn unary_only() -> Self {
        let mut w = Self::default();
        for v in w.0.values_mut() {
            *v = 0.0;
        }
        w.0.insert(UNARY.to_string(), 1.0);
        w
    }

    /// Weight of a term; unknown names read as 0.
    pub fn get(&self, name: &str) -> f64 {
        self.0.get(name).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, name: &str, weight: f64) -> Result<()> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::invalid(format!("weight of `{name}` must be finite and >= 0")));
        }
        self.0.insert(name.to_string(), weight);
        Ok(())
    }

    pub fn with(mut self, name: &str, weight: f64) -> Self {
        self.set(name, weight).expect("valid weight");
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    pub max_iterations: usize,
    /// Stop once the largest per-entry change of `Q` falls below this.
    pub convergence_tol: f64,
    pub term_weights: TermWeights,
    pub pairwise: PairwiseParams,
    pub superpixel: PatternWeights,
    pub rebuild_cliques_each_iter: bool,
    /// Target superpixel count; `None` uses `N / 256`.
    pub superpixel_count: Option<usize>,
    pub compactness: f64,
    /// Attachment centroid distance threshold; `None` uses the mean
    /// superpixel width.
    pub attachment_distance: Option<f64>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            convergence_tol: 1e-4,
            term_weights: TermWeights::default(),
            pairwise: PairwiseParams::default(),
            superpixel: PatternWeights::default(),
            rebuild_cliques_each_iter: true,
            superpixel_count: None,
            compactness: 10.0,
            attachment_distance: None,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::invalid(format!("`{key}` expects a number, got {value:?}")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("`{key}` expects a non-negative integer, got {value:?}")))
}

fn parse_auto<T>(value: &str, parse: impl FnOnce(&str) -> Result<T>) -> Result<Option<T>> {
    match value {
        "auto" | "none" => Ok(None),
        v => parse(v).map(Some),
    }
}

fn show_opt<T: std::fmt::Display>(v: &Option<T>, none: &str) -> String {
    v.as_ref().map_or_else(|| none.to_string(), T::to_string)
}

impl InferenceConfig {
    pub fn weight(&self, term: &str) -> f64 {
        self.term_weights.get(term)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::invalid("convergence_tol must be positive"));
        }
        if let Some((name, w)) = self.term_weights.iter().find(|(_, w)| !(*w >= 0.0)) {
            return Err(Error::invalid(format!("weight of `{name}` is negative: {w}")));
        }
        self.pairwise.validate()?;
        if !(self.superpixel.w_low <= self.superpixel.w_high) {
            return Err(Error::invalid("superpixel w_low must not exceed w_high"));
        }
        if !(self.compactness > 0.0) {
            return Err(Error::invalid("compactness must be positive"));
        }
        if matches!(self.superpixel_count, Some(0)) {
            return Err(Error::invalid("superpixels.target_count must be at least 1"));
        }
        if let Some(d) = self.attachment_distance {
            if !(d > 0.0) {
                return Err(Error::invalid("attachment.distance must be positive"));
            }
        }
        Ok(())
    }

    /// Applies one `key = value` setting. Term weights use `weight.<term>`,
    /// where `<term>` must be `unary` or a name in `registry`.
    pub fn set(&mut self, key: &str, value: &str, registry: &TermRegistry) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "max_iterations" => self.max_iterations = parse_usize(key, value)?,
            "convergence_tol" => self.convergence_tol = parse_f64(key, value)?,
            "rebuild_cliques_each_iter" => {
                self.rebuild_cliques_each_iter = value
                    .parse()
                    .map_err(|_| Error::invalid(format!("`{key}` expects true or false")))?
            }
            "pairwise.appearance_weight" => self.pairwise.appearance_weight = parse_f64(key, value)?,
            "pairwise.smoothness_weight" => self.pairwise.smoothness_weight = parse_f64(key, value)?,
            "pairwise.bilateral_spatial_sigma" => {
                self.pairwise.bilateral_spatial_sigma = parse_f64(key, value)?
            }
            "pairwise.color_sigma" => self.pairwise.color_sigma = parse_f64(key, value)?,
            "pairwise.spatial_sigma" => self.pairwise.spatial_sigma = parse_f64(key, value)?,
            "pairwise.truncate_radius" => {
                self.pairwise.truncate_radius = parse_auto(value, |v| parse_usize(key, v))?
            }
            "superpixel.w_low" => self.superpixel.w_low = parse_f64(key, value)?,
            "superpixel.w_high" => self.superpixel.w_high = parse_f64(key, value)?,
            "superpixels.target_count" => {
                self.superpixel_count = parse_auto(value, |v| parse_usize(key, v))?
            }
            "superpixels.compactness" => self.compactness = parse_f64(key, value)?,
            "attachment.distance" => {
                self.attachment_distance = parse_auto(value, |v| parse_f64(key, v))?
            }
            k => match k.strip_prefix("weight.") {
                Some(term) if term == UNARY || registry.get(term).is_some() => {
                    self.term_weights.set(term, parse_f64(key, value)?)?
                }
                Some(term) => return Err(Error::UnknownTerm(term.to_string())),
                None => return Err(Error::invalid(format!("unknown config key `{k}`"))),
            },
        }
        Ok(())
    }

    pub fn from_text(text: &str, registry: &TermRegistry) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                context: "config".into(),
                line: n + 1,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            cfg.set(key, value, registry).map_err(|e| Error::Parse {
                context: "config".into(),
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every field, one `key = value` line each, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        kv("max_iterations", self.max_iterations.to_string());
        kv("convergence_tol", self.convergence_tol.to_string());
        for (name, w) in self.term_weights.iter() {
            kv(&format!("weight.{name}"), w.to_string());
        }
        let p = &self.pairwise;
        kv("pairwise.appearance_weight", p.appearance_weight.to_string());
        kv("pairwise.smoothness_weight", p.smoothness_weight.to_string());
        kv("pairwise.bilateral_spatial_sigma", p.bilateral_spatial_sigma.to_string());
        kv("pairwise.color_sigma", p.color_sigma.to_string());
        kv("pairwise.spatial_sigma", p.spatial_sigma.to_string());
        kv("pairwise.truncate_radius", show_opt(&p.truncate_radius, "none"));
        kv("superpixel.w_low", self.superpixel.w_low.to_string());
        kv("superpixel.w_high", self.superpixel.w_high.to_string());
        kv("rebuild_cliques_each_iter", self.rebuild_cliques_each_iter.to_string());
        kv("superpixels.target_count", show_opt(&self.superpixel_count, "auto"));
        kv("superpixels.compactness", self.compactness.to_string());
        kv("attachment.distance", show_opt(&self.attachment_distance, "auto"));
        out
    }

    /// Target superpixel count for an image of `num_pixels` pixels.
    pub fn superpixel_target(&self, num_pixels: usize) -> usize {
        self.superpixel_count
            .unwrap_or(num_pixels / 256)
            .clamp(1, num_pixels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let reg = TermRegistry::builtin();
        let mut cfg = InferenceConfig::default();
        cfg.term_weights.set("containment", 2.5).unwrap();
        cfg.pairwise.truncate_radius = Some(8);
        cfg.attachment_distance = Some(6.5);
        cfg.rebuild_cliques_each_iter = false;
        let text = cfg.to_text();
        assert_eq!(InferenceConfig::from_text(&text, &reg).unwrap(), cfg);
        assert!(text.contains("weight.containment = 2.5\n"));
    }

    #[test]
    fn rejects_bad_input() {
        let reg = TermRegistry::builtin();
        assert!(matches!(
            InferenceConfig::from_text("weight.bogus = 1", &reg),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(InferenceConfig::from_text("nonsense", &reg).is_err());
        assert!(InferenceConfig::from_text("max_iterations = 0", &reg).is_err());
        assert!(InferenceConfig::from_text("convergence_tol = -1", &reg).is_err());
        assert!(InferenceConfig::from_text("weight.pairwise = -1", &reg).is_err());
        assert!(InferenceConfig::from_text("what = 1", &reg).is_err());
        let cfg = InferenceConfig::from_text("# c\n\nweight.attachment = 3\n", &reg).unwrap();
        assert_eq!(cfg.weight("attachment"), 3.0);
    }

    #[test]
    fn superpixel_target_default() {
        let cfg = InferenceConfig::default();
        assert_eq!(cfg.superpixel_target(64 * 64), 16);
        assert_eq!(cfg.superpixel_target(10), 1);
    }
}
