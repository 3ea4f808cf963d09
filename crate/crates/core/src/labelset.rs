//! In-domain / OOD label sets, prompt ensembles, and seen/unseen split tags.
//!
//! A label-config file looks like:
//!
//! ```json
//! {"name": "dog-vs-rest",
//!  "in":  [{"name": "beagle", "prompts": ["a photo of a {}."], "tier": "seen"}],
//!  "out": [{"name": "cat", "prompts": [], "tier": "near"}]}
//! ```
//!
//! Only `seen` in-classes and `seen`/`near` out-classes take part in scoring.
//! `unseen` classes exist so that evaluation can tag records with their split.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{normalize, EmbeddingError, EmbeddingVector};
use crate::oceb::EmbeddingStore;

pub const SPLIT_SEEN_IN: &str = "seen_in";
pub const SPLIT_UNSEEN_IN: &str = "unseen_in";
pub const SPLIT_SEEN_OUT: &str = "seen_out";
pub const SPLIT_UNSEEN_OUT: &str = "unseen_out";
pub const SPLIT_NEAR_OUT: &str = "near_out";

#[derive(Debug, Error)]
pub enum LabelSetError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("class {class:?}: no text embedding for prompt {prompt:?}")]
    MissingTextEmbedding { class: String, prompt: String },
    #[error("class {class:?}: {source}")]
    BadClassEmbedding {
        class: String,
        #[source]
        source: EmbeddingError,
    },
    #[error("class {class:?}: prompt embeddings have dim {actual}, expected {expected}")]
    DimensionMismatch {
        class: String,
        expected: usize,
        actual: usize,
    },
    #[error("invalid label set: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    #[default]
    Seen,
    Unseen,
    Near,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    #[serde(default)]
    pub prompts: Vec<String>,
    #[serde(default)]
    pub tier: Tier,
}

impl ClassSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            prompts: Vec::new(),
            tier: Tier::Seen,
        }
    }

    pub fn with_tier(mut self, tier: Tier) -> Self {
        self.tier = tier;
        self
    }

    pub fn with_prompts<S: Into<String>>(mut self, prompts: impl IntoIterator<Item = S>) -> Self {
        self.prompts = prompts.into_iter().map(Into::into).collect();
        self
    }

    /// The exact strings whose text embeddings make up this class.
    ///
    /// With no templates the bare class name is used. Each `{}` placeholder is
    /// replaced by the class name; a template without one is used verbatim.
    pub fn expanded_prompts(&self) -> Vec<String> {
        if self.prompts.is_empty() {
            return vec![self.name.clone()];
        }
        self.prompts
            .iter()
            .map(|t| t.replacen("{}", &self.name, 1))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyIn,
    EmptyOut,
    DuplicateName { side: &'static str, name: String },
    Overlap(String),
    NearOnInSide(String),
    BadPrompt { class: String, prompt: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyIn => f.write_str("no seen in-domain classes"),
            Violation::EmptyOut => f.write_str("no seen or near OOD classes"),
            Violation::DuplicateName { side, name } => {
                write!(f, "class {name:?} listed more than once on the {side} side")
            }
            Violation::Overlap(name) => write!(f, "class {name:?} is both in-domain and OOD"),
            Violation::NearOnInSide(name) => {
                write!(f, "in-domain class {name:?} cannot have tier \"near\"")
            }
            Violation::BadPrompt { class, prompt } => {
                write!(
                    f,
                    "class {class:?}: prompt {prompt:?} has more than one {{}} placeholder"
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub name: String,
    #[serde(rename = "in")]
    pub in_classes: Vec<ClassSpec>,
    #[serde(rename = "out")]
    pub out_classes: Vec<ClassSpec>,
}

/// Seen/unseen/near class-name partitions derived from a [`LabelSet`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitSpec {
    pub seen_in: Vec<String>,
    pub unseen_in: Vec<String>,
    pub seen_out: Vec<String>,
    pub unseen_out: Vec<String>,
    pub near_out: Vec<String>,
}

impl SplitSpec {
    pub fn is_consistent(&self) -> bool {
        let ins: HashSet<&String> = self.seen_in.iter().chain(&self.unseen_in).collect();
        let outs: Vec<&String> = self
            .seen_out
            .iter()
            .chain(&self.unseen_out)
            .chain(&self.near_out)
            .collect();
        let disjoint = |a: &[String], b: &[String]| a.iter().all(|x| !b.contains(x));
        disjoint(&self.seen_in, &self.unseen_in)
            && disjoint(&self.seen_out, &self.unseen_out)
            && outs.iter().all(|o| !ins.contains(o))
    }

    /// Class name → split tag.
    pub fn tags(&self) -> BTreeMap<String, &'static str> {
        let mut m = BTreeMap::new();
        for (names, tag) in [
            (&self.seen_in, SPLIT_SEEN_IN),
            (&self.unseen_in, SPLIT_UNSEEN_IN),
            (&self.seen_out, SPLIT_SEEN_OUT),
            (&self.unseen_out, SPLIT_UNSEEN_OUT),
            (&self.near_out, SPLIT_NEAR_OUT),
        ] {
            for n in names {
                m.insert(n.clone(), tag);
            }
        }
        m
    }
}

/// Splits at index ⌈n/2⌉, so odd lengths put the extra element first.
pub fn halves_split<T: Clone>(items: &[T]) -> (Vec<T>, Vec<T>) {
    let mid = items.len().div_ceil(2);
    (items[..mid].to_vec(), items[mid..].to_vec())
}

/// Mean of the prompt embeddings, rescaled to unit norm.
pub fn class_embedding<F>(spec: &ClassSpec, lookup: F) -> Result<EmbeddingVector, LabelSetError>
where
    F: Fn(&str) -> Option<EmbeddingVector>,
{
    let mut acc: Vec<f64> = Vec::new();
    let prompts = spec.expanded_prompts();
    for prompt in &prompts {
        let v = lookup(prompt).ok_or_else(|| LabelSetError::MissingTextEmbedding {
            class: spec.name.clone(),
            prompt: prompt.clone(),
        })?;
        if acc.is_empty() {
            acc = vec![0.0; v.dim()];
        } else if acc.len() != v.dim() {
            return Err(LabelSetError::DimensionMismatch {
                class: spec.name.clone(),
                expected: acc.len(),
                actual: v.dim(),
            });
        }
        for (a, x) in acc.iter_mut().zip(v.as_slice()) {
            *a += x;
        }
    }
    let n = prompts.len() as f64;
    let mean: Vec<f64> = acc.iter().map(|a| a / n).collect();
    normalize(&mean).map_err(|source| LabelSetError::BadClassEmbedding {
        class: spec.name.clone(),
        source,
    })
}

/// Class embeddings for the scoring classes of a label set, in config order.
#[derive(Debug, Clone)]
pub struct LabelEmbeddings {
    pub in_names: Vec<String>,
    pub in_vecs: Vec<EmbeddingVector>,
    pub out_names: Vec<String>,
    pub out_vecs: Vec<EmbeddingVector>,
}

impl LabelEmbeddings {
    pub fn dim(&self) -> Option<usize> {
        self.in_vecs
            .first()
            .or(self.out_vecs.first())
            .map(|v| v.dim())
    }
}

impl LabelSet {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, LabelSetError> {
        let read_err = |message: String| LabelSetError::Read {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        Self::from_json(&text).map_err(|e| read_err(e.to_string()))
    }

    /// In-domain classes used to compute scores.
    pub fn scoring_in(&self) -> impl Iterator<Item = &ClassSpec> {
        self.in_classes.iter().filter(|c| c.tier != Tier::Unseen)
    }

    /// OOD classes used to compute scores, near-OOD included.
    pub fn scoring_out(&self) -> impl Iterator<Item = &ClassSpec> {
        self.out_classes.iter().filter(|c| c.tier != Tier::Unseen)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.scoring_in().next().is_none() {
            out.push(Violation::EmptyIn);
        }
        if self.scoring_out().next().is_none() {
            out.push(Violation::EmptyOut);
        }
        for (side, classes) in [("in", &self.in_classes), ("out", &self.out_classes)] {
            let mut seen = HashSet::new();
            for c in classes {
                if !seen.insert(c.name.as_str()) {
                    out.push(Violation::DuplicateName {
                        side,
                        name: c.name.clone(),
                    });
                }
                for p in &c.prompts {
                    if p.matches("{}").count() > 1 {
                        out.push(Violation::BadPrompt {
                            class: c.name.clone(),
                            prompt: p.clone(),
                        });
                    }
                }
            }
        }
        let in_names: HashSet<&str> = self.in_classes.iter().map(|c| c.name.as_str()).collect();
        let mut reported = HashSet::new();
        for c in &self.out_classes {
            if in_names.contains(c.name.as_str()) && reported.insert(c.name.as_str()) {
                out.push(Violation::Overlap(c.name.clone()));
            }
        }
        for c in &self.in_classes {
            if c.tier == Tier::Near {
                out.push(Violation::NearOnInSide(c.name.clone()));
            }
        }
        out
    }

    /// Validation that tolerates an empty OOD side when no method needs it.
    pub fn check(&self, needs_out: bool) -> Result<(), LabelSetError> {
        let v: Vec<Violation> = self
            .validate()
            .into_iter()
            .filter(|v| needs_out || *v != Violation::EmptyOut)
            .collect();
        if v.is_empty() {
            Ok(())
        } else {
            Err(LabelSetError::Invalid(v))
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        let names = |classes: &[ClassSpec], tier: Tier| -> Vec<String> {
            classes
                .iter()
                .filter(|c| c.tier == tier)
                .map(|c| c.name.clone())
                .collect()
        };
        SplitSpec {
            seen_in: names(&self.in_classes, Tier::Seen),
            unseen_in: names(&self.in_classes, Tier::Unseen),
            seen_out: names(&self.out_classes, Tier::Seen),
            unseen_out: names(&self.out_classes, Tier::Unseen),
            near_out: names(&self.out_classes, Tier::Near),
        }
    }

    /// Builds a label set whose first halves are seen and second halves unseen.
    pub fn from_halves(name: impl Into<String>, in_names: &[String], out_names: &[String]) -> Self {
        let tiered = |names: &[String]| -> Vec<ClassSpec> {
            let (seen, unseen) = halves_split(names);
            seen.into_iter()
                .map(ClassSpec::new)
                .chain(
                    unseen
                        .into_iter()
                        .map(|n| ClassSpec::new(n).with_tier(Tier::Unseen)),
                )
                .collect()
        };
        Self {
            name: name.into(),
            in_classes: tiered(in_names),
            out_classes: tiered(out_names),
        }
    }

    /// Resolves every scoring class against a store of text embeddings keyed by prompt string.
    pub fn embed(&self, texts: &EmbeddingStore) -> Result<LabelEmbeddings, LabelSetError> {
        let lookup = |s: &str| texts.get(s);
        let embed_side = |classes: Vec<&ClassSpec>| -> Result<(Vec<String>, Vec<EmbeddingVector>), LabelSetError> {
            let mut names = Vec::with_capacity(classes.len());
            let mut vecs = Vec::with_capacity(classes.len());
            for c in classes {
                names.push(c.name.clone());
                vecs.push(class_embedding(c, lookup)?);
            }
            Ok((names, vecs))
        };
        let (in_names, in_vecs) = embed_side(self.scoring_in().collect())?;
        let (out_names, out_vecs) = embed_side(self.scoring_out().collect())?;
        Ok(LabelEmbeddings {
            in_names,
            in_vecs,
            out_names,
            out_vecs,
        })
    }
}
