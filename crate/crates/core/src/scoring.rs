//! Logit- and softmax-based OOD scores.
//!
//! Given logits `w` over an in-domain label set and an OOD label set, each
//! divided by the configured temperature, the five scores are:
//!
//! | method            | needs OOD labels | definition                                   |
//! |-------------------|------------------|----------------------------------------------|
//! | `neg_max_prob`    | no               | `-max_{c in IN} softmax(IN)[c]`              |
//! | `sum_out_prob`    | yes              | `sum_{c in OUT} softmax(IN ∪ OUT)[c]`        |
//! | `max_out_prob`    | yes              | `max_{c in OUT} softmax(IN ∪ OUT)[c]`        |
//! | `neg_max_in_prob` | yes              | `-max_{c in IN} softmax(IN ∪ OUT)[c]`        |
//! | `max_logit_diff`  | yes              | `max_{d in OUT} w_d - max_{c in IN} w_c`     |
//!
//! Higher always means more out-of-distribution. Softmax uses max-subtraction
//! and all arithmetic is `f64`. Ties in an argmax resolve to the lowest index.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{logits, EmbeddingError, EmbeddingVector};
use crate::fmt::{f17, push_json_str};
use crate::labelset::LabelEmbeddings;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("in-domain logits are empty")]
    EmptyInSet,
    #[error("method {0} needs OOD labels but the OOD logits are empty")]
    EmptyOutSet(Method),
    #[error("non-finite logit at position {0}")]
    NonFinite(usize),
    #[error("temperature must be finite and > 0, got {0}")]
    BadTemperature(f64),
    #[error("unknown scoring method {0:?}")]
    UnknownMethod(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("record {id:?}: {source}")]
    InRecord {
        id: String,
        #[source]
        source: Box<ScoreError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NegMaxProb,
    SumOutProb,
    MaxOutProb,
    NegMaxInProb,
    MaxLogitDiff,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::NegMaxProb,
        Method::SumOutProb,
        Method::MaxOutProb,
        Method::NegMaxInProb,
        Method::MaxLogitDiff,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::NegMaxProb => "neg_max_prob",
            Method::SumOutProb => "sum_out_prob",
            Method::MaxOutProb => "max_out_prob",
            Method::NegMaxInProb => "neg_max_in_prob",
            Method::MaxLogitDiff => "max_logit_diff",
        }
    }

    pub fn needs_out(self) -> bool {
        self != Method::NegMaxProb
    }

    /// Parses a comma-separated list; `all` expands to every method.
    pub fn parse_list(s: &str) -> Result<Vec<Method>, ScoreError> {
        let mut out: Vec<Method> = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part == "all" {
                out.extend(Method::ALL);
            } else {
                out.push(part.parse()?);
            }
        }
        let mut seen = Vec::new();
        out.retain(|m| {
            let fresh = !seen.contains(m);
            seen.push(*m);
            fresh
        });
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ScoreError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreConfig {
    pub method: Method,
    pub temperature: f64,
}

impl ScoreConfig {
    pub fn new(method: Method, temperature: f64) -> Result<Self, ScoreError> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(ScoreError::BadTemperature(temperature));
        }
        Ok(Self {
            method,
            temperature,
        })
    }
}

impl From<Method> for ScoreConfig {
    fn from(method: Method) -> Self {
        Self {
            method,
            temperature: 1.0,
        }
    }
}

/// Logits over `IN` followed by logits over `OUT`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLogits {
    pub in_logits: Vec<f64>,
    pub out_logits: Vec<f64>,
}

impl JointLogits {
    pub fn new(in_logits: Vec<f64>, out_logits: Vec<f64>) -> Result<Self, ScoreError> {
        if in_logits.is_empty() {
            return Err(ScoreError::EmptyInSet);
        }
        if let Some(i) = in_logits
            .iter()
            .chain(&out_logits)
            .position(|x| !x.is_finite())
        {
            return Err(ScoreError::NonFinite(i));
        }
        Ok(Self {
            in_logits,
            out_logits,
        })
    }

    fn check(&self, method: Method) -> Result<(), ScoreError> {
        if self.in_logits.is_empty() {
            return Err(ScoreError::EmptyInSet);
        }
        if method.needs_out() && self.out_logits.is_empty() {
            return Err(ScoreError::EmptyOutSet(method));
        }
        Ok(())
    }
}

/// First maximum (lowest index on ties).
pub(crate) fn argmax(xs: &[f64]) -> (usize, f64) {
    let mut best = (0, xs[0]);
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

fn scaled(xs: &[f64], t: f64) -> Vec<f64> {
    xs.iter().map(|x| x / t).collect()
}

/// Temperature-scaled logits with the shared softmax normaliser over `IN ∪ OUT`.
struct Joint {
    w_in: Vec<f64>,
    w_out: Vec<f64>,
    shift: f64,
    z: f64,
}

impl Joint {
    fn new(jl: &JointLogits, t: f64) -> Self {
        let w_in = scaled(&jl.in_logits, t);
        let w_out = scaled(&jl.out_logits, t);
        let shift = w_in
            .iter()
            .chain(&w_out)
            .fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let z = w_in.iter().chain(&w_out).map(|x| (x - shift).exp()).sum();
        Self {
            w_in,
            w_out,
            shift,
            z,
        }
    }

    fn prob(&self, w: f64) -> f64 {
        (w - self.shift).exp() / self.z
    }
}

pub fn score_neg_max_prob(jl: &JointLogits, cfg: &ScoreConfig) -> Result<f64, ScoreError> {
    jl.check(Method::NegMaxProb)?;
    let w = scaled(&jl.in_logits, cfg.temperature);
    let (_, m) = argmax(&w);
    let z: f64 = w.iter().map(|x| (x - m).exp()).sum();
    Ok(-1.0 / z)
}

pub fn score_sum_out_prob(jl: &JointLogits, cfg: &ScoreConfig) -> Result<f64, ScoreError> {
    jl.check(Method::SumOutProb)?;
    let j = Joint::new(jl, cfg.temperature);
    Ok(j.w_out.iter().map(|x| (x - j.shift).exp()).sum::<f64>() / j.z)
}

pub fn score_max_out_prob(jl: &JointLogits, cfg: &ScoreConfig) -> Result<f64, ScoreError> {
    jl.check(Method::MaxOutProb)?;
    let j = Joint::new(jl, cfg.temperature);
    Ok(j.prob(argmax(&j.w_out).1))
}

pub fn score_neg_max_in_prob(jl: &JointLogits, cfg: &ScoreConfig) -> Result<f64, ScoreError> {
    jl.check(Method::NegMaxInProb)?;
    let j = Joint::new(jl, cfg.temperature);
    Ok(-j.prob(argmax(&j.w_in).1))
}

pub fn score_max_logit_diff(jl: &JointLogits, cfg: &ScoreConfig) -> Result<f64, ScoreError> {
    jl.check(Method::MaxLogitDiff)?;
    let max_out = argmax(&scaled(&jl.out_logits, cfg.temperature)).1;
    let max_in = argmax(&scaled(&jl.in_logits, cfg.temperature)).1;
    Ok(max_out - max_in)
}

pub fn score(jl: &JointLogits, cfg: &ScoreConfig) -> Result<f64, ScoreError> {
    match cfg.method {
        Method::NegMaxProb => score_neg_max_prob(jl, cfg),
        Method::SumOutProb => score_sum_out_prob(jl, cfg),
        Method::MaxOutProb => score_max_out_prob(jl, cfg),
        Method::NegMaxInProb => score_neg_max_in_prob(jl, cfg),
        Method::MaxLogitDiff => score_max_logit_diff(jl, cfg),
    }
}

/// Both sides of `-log max_IN p(c | IN ∪ OUT) = max_logit_diff + log(1 + r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResidual {
    pub lhs: f64,
    pub rhs: f64,
    /// `sum_{l != q} e^{w_l} / e^{w_q}`, `q` the first argmax over `OUT`.
    pub r: f64,
}

impl IdentityResidual {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

pub fn identity_residual(
    jl: &JointLogits,
    cfg: &ScoreConfig,
) -> Result<IdentityResidual, ScoreError> {
    jl.check(Method::NegMaxInProb)?;
    let lhs = -(-score_neg_max_in_prob(jl, cfg)?).ln();
    let diff = score_max_logit_diff(jl, cfg)?;

    let w_in = scaled(&jl.in_logits, cfg.temperature);
    let w_out = scaled(&jl.out_logits, cfg.temperature);
    let (q, w_q) = argmax(&w_out);
    let rel: Vec<f64> = w_in
        .iter()
        .chain(
            w_out
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != q)
                .map(|(_, w)| w),
        )
        .map(|w| w - w_q)
        .collect();
    let r: f64 = rel.iter().map(|d| d.exp()).sum();
    // log(1 + r) = log(e^0 + sum e^d), evaluated without overflow
    let top = rel.iter().fold(0.0f64, |m, &d| m.max(d));
    let log1p_r = if top == 0.0 {
        r.ln_1p()
    } else {
        top + ((-top).exp() + rel.iter().map(|d| (d - top).exp()).sum::<f64>()).ln()
    };
    Ok(IdentityResidual {
        lhs,
        rhs: diff + log1p_r,
        r,
    })
}

/// One image's scores, keyed by method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub id: String,
    pub split: String,
    pub scores: BTreeMap<Method, f64>,
}

impl ScoredRecord {
    /// `{"id":…,"split":…,"scores":{…}}` with methods in canonical order and
    /// 17 significant digits per float.
    pub fn to_ndjson_line(&self) -> String {
        let mut s = String::with_capacity(64 + 32 * self.scores.len());
        s.push_str("{\"id\":");
        push_json_str(&mut s, &self.id);
        s.push_str(",\"split\":");
        push_json_str(&mut s, &self.split);
        s.push_str(",\"scores\":{");
        for (i, (m, v)) in self.scores.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push('"');
            s.push_str(m.as_str());
            s.push_str("\":");
            s.push_str(&f17(*v));
        }
        s.push_str("}}");
        s
    }

    pub fn from_ndjson_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

/// Logits of `img` against the scoring classes, split into in/out.
pub fn joint_logits(
    img: &EmbeddingVector,
    labels: &LabelEmbeddings,
) -> Result<JointLogits, ScoreError> {
    let in_row = logits(img, &labels.in_vecs, &labels.in_names)?;
    let out_row = logits(img, &labels.out_vecs, &labels.out_names)?;
    JointLogits::new(in_row.values, out_row.values)
}

pub fn score_record(
    id: &str,
    split: &str,
    img: &EmbeddingVector,
    labels: &LabelEmbeddings,
    configs: &[ScoreConfig],
) -> Result<ScoredRecord, ScoreError> {
    let wrap = |source: ScoreError| ScoreError::InRecord {
        id: id.to_string(),
        source: Box::new(source),
    };
    let jl = joint_logits(img, labels).map_err(wrap)?;
    let mut scores = BTreeMap::new();
    for cfg in configs {
        let v = score(&jl, cfg).map_err(wrap)?;
        if !v.is_finite() {
            return Err(wrap(ScoreError::NonFinite(0)));
        }
        scores.insert(cfg.method, v);
    }
    Ok(ScoredRecord {
        id: id.to_string(),
        split: split.to_string(),
        scores,
    })
}
