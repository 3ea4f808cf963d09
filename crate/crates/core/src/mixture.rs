//! Per-box OOD scoring and the mixture score for multi-object images.
//!
//! A detector's per-box, per-label confidences are used directly as logits.
//! The mixture score of an image is `max_b S_b - min_b S_b` over its boxes; it
//! is large when one box looks in-domain and another looks OOD.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::{f17, push_f17_array, push_json_str};
use crate::labelset::LabelSet;
use crate::scoring::{score, JointLogits, Method, ScoreConfig, ScoreError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixtureError {
    #[error("mixture score needs at least 2 boxes, got {0}")]
    TooFewBoxes(usize),
    #[error("image {image_id:?}: label order does not match the label set: {detail}")]
    LabelOrderMismatch { image_id: String, detail: String },
    #[error("image {image_id:?} box {index}: {detail}")]
    BadBox {
        image_id: String,
        index: usize,
        detail: String,
    },
    #[error("image {image_id:?}: {source}")]
    Score {
        image_id: String,
        #[source]
        source: ScoreError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedBox {
    /// `[x0, y0, x1, y1]` in pixels.
    pub bbox: [f64; 4],
    pub scores: Vec<f64>,
}

/// One image's detections, as read from box-score NDJSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxScoreSet {
    pub image_id: String,
    pub label_order: Vec<String>,
    pub boxes: Vec<DetectedBox>,
    /// Optional whole-image logits over `label_order`, for single-score baselines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_scores: Option<Vec<f64>>,
}

impl BoxScoreSet {
    pub fn validate(&self) -> Result<(), MixtureError> {
        let bad = |index: usize, detail: String| MixtureError::BadBox {
            image_id: self.image_id.clone(),
            index,
            detail,
        };
        for (i, b) in self.boxes.iter().enumerate() {
            let [x0, y0, x1, y1] = b.bbox;
            if !(x0 < x1 && y0 < y1) {
                return Err(bad(i, format!("degenerate bbox {:?}", b.bbox)));
            }
            if b.scores.len() != self.label_order.len() {
                return Err(bad(
                    i,
                    format!(
                        "{} scores for {} labels",
                        b.scores.len(),
                        self.label_order.len()
                    ),
                ));
            }
            if b.scores.iter().any(|s| !s.is_finite()) {
                return Err(bad(i, "non-finite score".into()));
            }
        }
        if let Some(s) = &self.image_scores {
            if s.len() != self.label_order.len() || s.iter().any(|x| !x.is_finite()) {
                return Err(MixtureError::BadBox {
                    image_id: self.image_id.clone(),
                    index: usize::MAX,
                    detail: "image_scores must be finite and match label_order".into(),
                });
            }
        }
        Ok(())
    }

    pub fn to_ndjson_line(&self) -> String {
        let mut s = String::new();
        s.push_str("{\"image_id\":");
        push_json_str(&mut s, &self.image_id);
        s.push_str(",\"label_order\":");
        s.push_str(&serde_json::to_string(&self.label_order).expect("labels"));
        s.push_str(",\"boxes\":[");
        for (i, b) in self.boxes.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str("{\"bbox\":");
            push_f17_array(&mut s, &b.bbox);
            s.push_str(",\"scores\":");
            push_f17_array(&mut s, &b.scores);
            s.push('}');
        }
        s.push(']');
        if let Some(img) = &self.image_scores {
            s.push_str(",\"image_scores\":");
            push_f17_array(&mut s, img);
        }
        s.push('}');
        s
    }
}

/// Index map from a detector's label order onto the scoring in/out classes.
#[derive(Debug, Clone)]
pub struct LabelPartition {
    in_idx: Vec<usize>,
    out_idx: Vec<usize>,
}

impl LabelPartition {
    /// `label_order` must contain every scoring class exactly once and nothing else.
    pub fn new(label_order: &[String], labels: &LabelSet) -> Result<Self, String> {
        let pos: HashMap<&str, usize> = label_order
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        if pos.len() != label_order.len() {
            return Err("duplicate label in label_order".into());
        }
        let mut used = HashSet::new();
        let mut side = |names: Vec<&str>| -> Result<Vec<usize>, String> {
            names
                .into_iter()
                .map(|n| {
                    let i = *pos.get(n).ok_or_else(|| format!("missing label {n:?}"))?;
                    used.insert(i);
                    Ok(i)
                })
                .collect()
        };
        let in_idx = side(labels.scoring_in().map(|c| c.name.as_str()).collect())?;
        let out_idx = side(labels.scoring_out().map(|c| c.name.as_str()).collect())?;
        if let Some((_, extra)) = label_order
            .iter()
            .enumerate()
            .find(|(i, _)| !used.contains(i))
        {
            return Err(format!("label {extra:?} is not a scoring class"));
        }
        Ok(Self { in_idx, out_idx })
    }

    pub fn joint(&self, scores: &[f64]) -> Result<JointLogits, ScoreError> {
        JointLogits::new(
            self.in_idx.iter().map(|&i| scores[i]).collect(),
            self.out_idx.iter().map(|&i| scores[i]).collect(),
        )
    }
}

pub fn box_scores(
    set: &BoxScoreSet,
    labels: &LabelSet,
    cfg: &ScoreConfig,
) -> Result<Vec<f64>, MixtureError> {
    let part = LabelPartition::new(&set.label_order, labels).map_err(|detail| {
        MixtureError::LabelOrderMismatch {
            image_id: set.image_id.clone(),
            detail,
        }
    })?;
    box_scores_with(set, &part, cfg)
}

fn box_scores_with(
    set: &BoxScoreSet,
    part: &LabelPartition,
    cfg: &ScoreConfig,
) -> Result<Vec<f64>, MixtureError> {
    set.validate()?;
    let wrap = |source| MixtureError::Score {
        image_id: set.image_id.clone(),
        source,
    };
    set.boxes
        .iter()
        .map(|b| {
            part.joint(&b.scores)
                .and_then(|jl| score(&jl, cfg))
                .map_err(wrap)
        })
        .collect()
}

/// `max - min` of the per-box scores.
pub fn mixture_score(per_box: &[f64]) -> Result<f64, MixtureError> {
    if per_box.len() < 2 {
        return Err(MixtureError::TooFewBoxes(per_box.len()));
    }
    let (lo, hi) = per_box
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    Ok(hi - lo)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureResult {
    pub image_id: String,
    pub method: Method,
    pub per_box: Vec<f64>,
    /// Absent for images with fewer than two boxes.
    pub g: Option<f64>,
    /// Whole-image score, when the input carried whole-image logits.
    #[serde(default)]
    pub image_score: Option<f64>,
}

impl MixtureResult {
    pub fn to_ndjson_line(&self) -> String {
        let mut s = String::new();
        s.push_str("{\"image_id\":");
        push_json_str(&mut s, &self.image_id);
        s.push_str(",\"method\":\"");
        s.push_str(self.method.as_str());
        s.push_str("\",\"per_box\":");
        push_f17_array(&mut s, &self.per_box);
        let opt = |x: Option<f64>| x.map(f17).unwrap_or_else(|| "null".into());
        s.push_str(",\"g\":");
        s.push_str(&opt(self.g));
        s.push_str(",\"image_score\":");
        s.push_str(&opt(self.image_score));
        s.push('}');
        s
    }
}

pub fn score_image(
    set: &BoxScoreSet,
    labels: &LabelSet,
    cfg: &ScoreConfig,
) -> Result<MixtureResult, MixtureError> {
    let part = LabelPartition::new(&set.label_order, labels).map_err(|detail| {
        MixtureError::LabelOrderMismatch {
            image_id: set.image_id.clone(),
            detail,
        }
    })?;
    let per_box = box_scores_with(set, &part, cfg)?;
    let g = mixture_score(&per_box).ok();
    let image_score = match &set.image_scores {
        Some(s) => Some(
            part.joint(s)
                .and_then(|jl| score(&jl, cfg))
                .map_err(|source| MixtureError::Score {
                    image_id: set.image_id.clone(),
                    source,
                })?,
        ),
        None => None,
    };
    Ok(MixtureResult {
        image_id: set.image_id.clone(),
        method: cfg.method,
        per_box,
        g,
        image_score,
    })
}
