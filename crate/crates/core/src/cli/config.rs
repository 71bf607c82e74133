//! JSON configuration records for each subcommand. Every record rejects
//! unknown keys, and resolving one fills in all defaults so that the echoed
//! manifest is self-sufficient.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cohomology::RelationLoopSet;
use crate::error::{Error, Result};
use crate::model::{Alphabet, LetterDistribution, Window};
use crate::popa::DisconnectionMode;
use crate::presentation::{builtin_presentation, BuiltinFamily, GroupPresentation};
use crate::sofic::{builtin_quotient, QuotientSpec, SchreierGraph};
use crate::walk::WalkConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresentationSource {
    Builtin(BuiltinFamily),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub presentation: PresentationSource,
    pub quotient: QuotientSpec,
}

impl GraphConfig {
    pub fn presentation(&self) -> Result<GroupPresentation> {
        match &self.presentation {
            PresentationSource::Builtin(f) => builtin_presentation(*f),
            PresentationSource::File(path) => GroupPresentation::from_file(path),
        }
    }

    pub fn build(&self) -> Result<(GroupPresentation, SchreierGraph)> {
        let p = self.presentation()?;
        let sigma = builtin_quotient(&self.quotient, p.generator_count())?;
        Ok((p, SchreierGraph::new(sigma)))
    }
}

/// Which relation loops define the cocycle constraints.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationChoice {
    /// The presentation's relations plus every `s s⁻¹`.
    #[default]
    Presentation,
    /// Only `s s⁻¹`.
    Trivial,
    /// `s s⁻¹` plus the listed words.
    Words(Vec<String>),
}

impl RelationChoice {
    pub fn build(&self, p: &GroupPresentation) -> Result<RelationLoopSet> {
        match self {
            RelationChoice::Presentation => Ok(RelationLoopSet::for_presentation(p)),
            RelationChoice::Trivial => Ok(RelationLoopSet::trivial(p)),
            RelationChoice::Words(ws) => {
                let mut rels = p.trivial_relations();
                for w in ws {
                    rels.push(p.parse_word(w)?);
                }
                RelationLoopSet::new(rels)
            }
        }
    }
}

fn default_radius() -> usize {
    1
}

fn default_ball_radius() -> usize {
    2
}

fn default_trials() -> usize {
    20
}

fn default_samples() -> usize {
    1000
}

fn default_identity_window() -> Vec<String> {
    vec!["e".into()]
}

fn default_delta_grid() -> Vec<f64> {
    vec![0.1]
}

pub fn letter_distribution(nu: &Option<Vec<f64>>, alphabet: Alphabet) -> Result<LetterDistribution> {
    let d = match nu {
        Some(p) => LetterDistribution::new(p.clone())?,
        None => LetterDistribution::uniform(alphabet.size()),
    };
    if d.size() != alphabet.size() {
        return Err(Error::InvalidConfig(format!("nu has {} letters, alphabet has {}", d.size(), alphabet.size())));
    }
    Ok(d)
}

pub fn parse_window(p: &GroupPresentation, words: &[String]) -> Result<Window> {
    Window::new(words.iter().map(|w| p.parse_word(w)).collect::<Result<_>>()?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSoficConfig {
    pub graph: GraphConfig,
    /// Radius of the word ball whose freeness is tabulated.
    #[serde(default = "default_ball_radius")]
    pub radius: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmpiricalConfig {
    pub graph: GraphConfig,
    pub alphabet: Alphabet,
    #[serde(default = "default_radius")]
    pub window_radius: usize,
    /// Microstate file; drawn from `nu` when absent.
    #[serde(default)]
    pub microstate: Option<PathBuf>,
    #[serde(default)]
    pub nu: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectConfig {
    pub graph: GraphConfig,
    pub alphabet: Alphabet,
    #[serde(default)]
    pub nu: Option<Vec<f64>>,
    pub delta: f64,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub retry_budget: Option<usize>,
    #[serde(default = "default_radius")]
    pub window_radius: usize,
    pub epsilon: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

impl ConnectConfig {
    pub fn walk(&self, seed: u64) -> Result<WalkConfig> {
        let base = WalkConfig::with_defaults(self.delta, seed)?;
        let kappa = self.kappa.unwrap_or(base.kappa);
        let steps = self.steps.unwrap_or_else(|| WalkConfig::default_steps(kappa, self.delta));
        let cfg = WalkConfig { kappa, steps, retry_budget: self.retry_budget.unwrap_or(base.retry_budget), ..base };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(mut self, seed: u64) -> Result<Self> {
        self.nu = Some(letter_distribution(&self.nu, self.alphabet)?.probs().to_vec());
        let w = self.walk(seed)?;
        self.kappa = Some(w.kappa);
        self.steps = Some(w.steps);
        self.retry_budget = Some(w.retry_budget);
        Ok(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohomologyConfig {
    pub graph: GraphConfig,
    pub modulus: u32,
    #[serde(default)]
    pub relations: RelationChoice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosetScanConfig {
    pub graph: GraphConfig,
    pub modulus: u32,
    #[serde(default)]
    pub relations: RelationChoice,
    pub epsilon: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopaWalkConfig {
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub retry_budget: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopaConfig {
    pub graph: GraphConfig,
    pub modulus: u32,
    #[serde(default)]
    pub relations: RelationChoice,
    #[serde(default = "default_identity_window")]
    pub window: Vec<String>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Index into the H¹ classes, zero first; selects the sampled coset.
    #[serde(default)]
    pub class: usize,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_delta_grid")]
    pub delta_grid: Vec<f64>,
    #[serde(default = "default_mode")]
    pub mode: DisconnectionMode,
    #[serde(default)]
    pub walk: Option<PopaWalkConfig>,
}

fn default_mode() -> DisconnectionMode {
    DisconnectionMode::Exhaustive
}

impl PopaConfig {
    /// Walk parameters valid for every `δ` in the grid: defaults are taken
    /// at the smallest `δ`.
    pub fn walk_config(&self, seed: u64) -> Result<Option<WalkConfig>> {
        if self.mode != DisconnectionMode::Sampling {
            return Ok(None);
        }
        let delta = self.delta_grid.iter().copied().fold(f64::INFINITY, f64::min);
        let base = WalkConfig::with_defaults(delta, seed)?;
        let w = self.walk.clone().unwrap_or_default();
        let kappa = w.kappa.unwrap_or(base.kappa);
        let steps = w.steps.unwrap_or_else(|| WalkConfig::default_steps(kappa, delta));
        let cfg = WalkConfig { kappa, steps, retry_budget: w.retry_budget.unwrap_or(base.retry_budget), ..base };
        for &d in &self.delta_grid {
            WalkConfig { delta: d, ..cfg }.validate()?;
        }
        Ok(Some(cfg))
    }

    pub fn resolve(mut self, seed: u64) -> Result<Self> {
        if self.delta_grid.is_empty() {
            return Err(Error::InvalidConfig("delta_grid must be nonempty".into()));
        }
        if let Some(w) = self.walk_config(seed)? {
            self.walk = Some(PopaWalkConfig { kappa: Some(w.kappa), steps: Some(w.steps), retry_budget: Some(w.retry_budget) });
        }
        Ok(self)
    }
}

fn default_sizes() -> Vec<usize> {
    vec![16, 1000]
}

fn default_pairs() -> usize {
    20
}

fn default_tables() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityChecksConfig {
    /// Cycle lengths on which the pair-distance identity is checked.
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    /// Random local functions per conditional-expectation check.
    #[serde(default = "default_tables")]
    pub tables: usize,
}

impl Default for IdentityChecksConfig {
    fn default() -> Self {
        Self { sizes: default_sizes(), pairs: default_pairs(), tables: default_tables() }
    }
}

/// Deserializes with the JSON path of the first offending key in the message.
pub fn from_value<T: DeserializeOwned>(value: serde_json::Value) -> std::result::Result<T, String> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            e.inner().to_string()
        } else {
            format!("at `{path}`: {}", e.inner())
        }
    })
}
