//! Seeded synthetic embeddings and detector box corpora.
//!
//! # Random stream
//!
//! All randomness comes from one xoshiro256++ generator whose four state words
//! are the first four outputs of SplitMix64 seeded with the config seed.
//!
//! - uniform `[0, 1)`: `(next_u64 >> 11) * 2^-53`
//! - standard normal: Box–Muller on `u1 = 1 - uniform`, `u2 = uniform`, giving
//!   `sqrt(-2 ln u1) * cos(2π u2)` then `sqrt(-2 ln u1) * sin(2π u2)` on the next call
//!
//! # Embedding generation order
//!
//! 1. For each class in config order with `anchor_mode = "random_unit"`, draw
//!    `dim` normals and normalize (redrawing on a zero vector).
//!    `{"specified": [...]}` anchors are normalized and draw nothing.
//! 2. For each class in config order, for each of its `count` images, draw
//!    `dim` normals `e` and emit `normalize(anchor + e / sqrt(noise_kappa))`.
//!
//! Larger `noise_kappa` concentrates images around their anchor.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{normalize, EmbeddingVector};
use crate::eval::{Truth, TruthRecord};
use crate::labelset::{
    ClassSpec, LabelSet, Tier, SPLIT_NEAR_OUT, SPLIT_SEEN_IN, SPLIT_SEEN_OUT, SPLIT_UNSEEN_IN,
    SPLIT_UNSEEN_OUT,
};
use crate::mixture::{BoxScoreSet, DetectedBox};
use crate::oceb::{EmbeddingStore, RecordMeta};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("bad synth config: {0}")]
pub struct BadConfig(pub String);

/// SplitMix64, used only to expand a `u64` seed into xoshiro state.
#[derive(Debug, Clone)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

/// xoshiro256++ with a Box–Muller normal cache.
#[derive(Debug, Clone)]
pub struct SynthRng {
    s: [u64; 4],
    spare: Option<f64>,
}

impl SynthRng {
    pub fn seed_from_u64(seed: u64) -> Self {
        let mut sm = SplitMix64::new(seed);
        let s = [sm.next_u64(), sm.next_u64(), sm.next_u64(), sm.next_u64()];
        Self { s, spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        let span = (hi - lo + 1) as u64;
        lo + (self.next_u64() % span) as usize
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    pub fn unit_vector(&mut self, dim: usize) -> EmbeddingVector {
        loop {
            if let Ok(v) = normalize(&self.normals(dim)) {
                return v;
            }
        }
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.int_inclusive(0, i);
            xs.swap(i, j);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMode {
    #[default]
    RandomUnit,
    Specified(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthClass {
    pub name: String,
    #[serde(default)]
    pub anchor_mode: AnchorMode,
    pub noise_kappa: f64,
    pub count: usize,
    pub split: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Dominant {
    #[default]
    In,
    Out,
}

/// Box corpus settings. Logits are `±margin/2` plus uniform jitter in `[-jitter, jitter]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSynthConfig {
    /// Defaults to the top-level seed.
    #[serde(default)]
    pub seed: Option<u64>,
    pub in_labels: Vec<String>,
    pub out_labels: Vec<String>,
    pub n_pure_in: usize,
    pub n_pure_out: usize,
    pub n_mixed: usize,
    #[serde(default = "default_min_boxes")]
    pub min_boxes: usize,
    #[serde(default = "default_max_boxes")]
    pub max_boxes: usize,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    /// Which object's pattern the whole-image logits of a mixed image follow.
    #[serde(default)]
    pub mixed_dominant: Dominant,
    #[serde(default = "default_image_size")]
    pub image_size: [f64; 2],
}

fn default_min_boxes() -> usize {
    2
}
fn default_max_boxes() -> usize {
    4
}
fn default_margin() -> f64 {
    2.0
}
fn default_jitter() -> f64 {
    0.1
}
fn default_image_size() -> [f64; 2] {
    [640.0, 480.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub dim: usize,
    pub seed: u64,
    #[serde(default)]
    pub classes: Vec<SynthClass>,
    #[serde(default)]
    pub boxes: Option<BoxSynthConfig>,
    /// Label-set name written alongside the stores.
    #[serde(default = "default_name")]
    pub name: String,
}

fn default_name() -> String {
    "synthetic".into()
}

fn is_in_split(split: &str) -> Option<(bool, Tier)> {
    match split {
        SPLIT_SEEN_IN => Some((true, Tier::Seen)),
        SPLIT_UNSEEN_IN => Some((true, Tier::Unseen)),
        SPLIT_SEEN_OUT => Some((false, Tier::Seen)),
        SPLIT_UNSEEN_OUT => Some((false, Tier::Unseen)),
        SPLIT_NEAR_OUT => Some((false, Tier::Near)),
        _ => None,
    }
}

impl SynthConfig {
    pub fn from_json(text: &str) -> Result<Self, BadConfig> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| BadConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BadConfig> {
        let bad = |m: String| Err(BadConfig(m));
        if self.dim < 2 {
            return bad(format!("dim must be >= 2, got {}", self.dim));
        }
        let mut names = HashSet::new();
        for c in &self.classes {
            if !names.insert(c.name.as_str()) {
                return bad(format!("duplicate class {:?}", c.name));
            }
            if c.count == 0 {
                return bad(format!("class {:?}: count must be >= 1", c.name));
            }
            if !(c.noise_kappa.is_finite() && c.noise_kappa > 0.0) {
                return bad(format!("class {:?}: noise_kappa must be > 0", c.name));
            }
            if is_in_split(&c.split).is_none() {
                return bad(format!("class {:?}: unknown split {:?}", c.name, c.split));
            }
            if let AnchorMode::Specified(v) = &c.anchor_mode {
                if v.len() != self.dim {
                    return bad(format!(
                        "class {:?}: anchor has {} components, dim is {}",
                        c.name,
                        v.len(),
                        self.dim
                    ));
                }
                if normalize(v).is_err() {
                    return bad(format!("class {:?}: anchor is zero or non-finite", c.name));
                }
            }
        }
        if let Some(b) = &self.boxes {
            b.validate()?;
        }
        Ok(())
    }

    /// Label set over the classes, tiered by split tag.
    pub fn labelset(&self) -> LabelSet {
        let mut l = LabelSet {
            name: self.name.clone(),
            in_classes: Vec::new(),
            out_classes: Vec::new(),
        };
        for c in &self.classes {
            if let Some((is_in, tier)) = is_in_split(&c.split) {
                let spec = ClassSpec::new(c.name.clone()).with_tier(tier);
                if is_in {
                    l.in_classes.push(spec);
                } else {
                    l.out_classes.push(spec);
                }
            }
        }
        l
    }
}

impl BoxSynthConfig {
    pub fn validate(&self) -> Result<(), BadConfig> {
        let bad = |m: &str| Err(BadConfig(format!("boxes: {m}")));
        if self.in_labels.is_empty() || self.out_labels.is_empty() {
            return bad("in_labels and out_labels must be non-empty");
        }
        let all: HashSet<&String> = self.in_labels.iter().chain(&self.out_labels).collect();
        if all.len() != self.in_labels.len() + self.out_labels.len() {
            return bad("labels must be unique and disjoint");
        }
        if self.min_boxes == 0 || self.min_boxes > self.max_boxes {
            return bad("need 1 <= min_boxes <= max_boxes");
        }
        if self.n_mixed > 0 && self.max_boxes < 2 {
            return bad("mixed images need max_boxes >= 2");
        }
        if !(self.margin.is_finite() && self.margin >= 0.0)
            || !(self.jitter.is_finite() && self.jitter >= 0.0)
        {
            return bad("margin and jitter must be finite and >= 0");
        }
        if !(self.image_size[0] > 1.0 && self.image_size[1] > 1.0) {
            return bad("image_size must exceed 1x1");
        }
        Ok(())
    }

    pub fn labelset(&self, name: &str) -> LabelSet {
        LabelSet {
            name: name.to_string(),
            in_classes: self
                .in_labels
                .iter()
                .map(|n| ClassSpec::new(n.clone()))
                .collect(),
            out_classes: self
                .out_labels
                .iter()
                .map(|n| ClassSpec::new(n.clone()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub images: EmbeddingStore,
    pub texts: EmbeddingStore,
    pub labels: LabelSet,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput, BadConfig> {
    cfg.validate()?;
    let store_err = |e: crate::oceb::OcebError| BadConfig(e.to_string());
    let mut rng = SynthRng::seed_from_u64(cfg.seed);
    let anchors: Vec<EmbeddingVector> = cfg
        .classes
        .iter()
        .map(|c| match &c.anchor_mode {
            AnchorMode::RandomUnit => rng.unit_vector(cfg.dim),
            AnchorMode::Specified(v) => normalize(v).expect("validated anchor"),
        })
        .collect();

    let mut texts = EmbeddingStore::new(cfg.dim, true).map_err(store_err)?;
    let mut images = EmbeddingStore::new(cfg.dim, true).map_err(store_err)?;
    for (c, anchor) in cfg.classes.iter().zip(&anchors) {
        texts
            .push_vector(
                RecordMeta::new(c.name.clone(), c.name.clone(), Some(c.split.clone())),
                anchor,
            )
            .map_err(store_err)?;
        let sigma = 1.0 / c.noise_kappa.sqrt();
        for i in 0..c.count {
            let raw: Vec<f64> = anchor
                .as_slice()
                .iter()
                .map(|a| a + sigma * rng.normal())
                .collect();
            let v = match normalize(&raw) {
                Ok(v) => v,
                Err(_) => anchor.clone(),
            };
            let meta = RecordMeta::new(
                format!("{}/{i:04}", c.name),
                c.name.clone(),
                Some(c.split.clone()),
            );
            images.push_vector(meta, &v).map_err(store_err)?;
        }
    }
    Ok(SynthOutput {
        images,
        texts,
        labels: cfg.labelset(),
    })
}

fn pattern(rng: &mut SynthRng, b: &BoxSynthConfig, in_like: bool) -> Vec<f64> {
    let half = b.margin / 2.0;
    let (hi_in, hi_out) = if in_like {
        (half, -half)
    } else {
        (-half, half)
    };
    let mut out = Vec::with_capacity(b.in_labels.len() + b.out_labels.len());
    for _ in &b.in_labels {
        out.push(hi_in + rng.range(-b.jitter, b.jitter));
    }
    for _ in &b.out_labels {
        out.push(hi_out + rng.range(-b.jitter, b.jitter));
    }
    out
}

fn bbox(rng: &mut SynthRng, size: [f64; 2]) -> [f64; 4] {
    let [w, h] = size;
    let x0 = rng.range(0.0, w * 0.5);
    let y0 = rng.range(0.0, h * 0.5);
    let x1 = x0 + rng.range(1.0, w - x0).max(1.0);
    let y1 = y0 + rng.range(1.0, h - y0).max(1.0);
    [x0, y0, x1.min(w).max(x0 + 1.0), y1.min(h).max(y0 + 1.0)]
}

/// Box corpus with ground truth.
///
/// Images are emitted as `img_00000…` in blocks: pure-in, pure-out, mixed.
/// Pure images get `min_boxes..=max_boxes` boxes of one pattern. Mixed images
/// get at least one box of each pattern, the rest random, in shuffled order.
/// Whole-image logits follow the image's pattern, and for mixed images the
/// pattern named by `mixed_dominant`.
pub fn generate_boxes(
    cfg: &SynthConfig,
) -> Result<(Vec<BoxScoreSet>, Vec<TruthRecord>), BadConfig> {
    cfg.validate()?;
    let b = cfg
        .boxes
        .as_ref()
        .ok_or_else(|| BadConfig("no \"boxes\" section".into()))?;
    let mut rng = SynthRng::seed_from_u64(b.seed.unwrap_or(cfg.seed));
    let label_order: Vec<String> = b.in_labels.iter().chain(&b.out_labels).cloned().collect();
    let plan = std::iter::repeat_n(Truth::PureIn, b.n_pure_in)
        .chain(std::iter::repeat_n(Truth::PureOut, b.n_pure_out))
        .chain(std::iter::repeat_n(Truth::Mixed, b.n_mixed));

    let mut sets = Vec::new();
    let mut truth = Vec::new();
    for (idx, t) in plan.enumerate() {
        let image_id = format!("img_{idx:05}");
        let mut kinds: Vec<bool> = match t {
            Truth::PureIn => vec![true; rng.int_inclusive(b.min_boxes, b.max_boxes)],
            Truth::PureOut => vec![false; rng.int_inclusive(b.min_boxes, b.max_boxes)],
            Truth::Mixed => {
                let k = rng.int_inclusive(b.min_boxes.max(2), b.max_boxes);
                let mut v = vec![true, false];
                for _ in 2..k {
                    v.push(rng.uniform() < 0.5);
                }
                rng.shuffle(&mut v);
                v
            }
        };
        let boxes = kinds
            .drain(..)
            .map(|in_like| DetectedBox {
                bbox: bbox(&mut rng, b.image_size),
                scores: pattern(&mut rng, b, in_like),
            })
            .collect();
        let whole_in_like = match t {
            Truth::PureIn => true,
            Truth::PureOut => false,
            Truth::Mixed => b.mixed_dominant == Dominant::In,
        };
        let image_scores = Some(pattern(&mut rng, b, whole_in_like));
        sets.push(BoxScoreSet {
            image_id: image_id.clone(),
            label_order: label_order.clone(),
            boxes,
            image_scores,
        });
        truth.push(TruthRecord { image_id, truth: t });
    }
    Ok((sets, truth))
}
