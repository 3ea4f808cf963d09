//! AUROC and split-conditioned evaluation.
//!
//! OOD records are the positive (score-high) class throughout. AUROC is the
//! Mann–Whitney statistic with ties credited one half.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mixture::MixtureResult;
use crate::scoring::{Method, ScoredRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("cannot compute AUROC with an empty {0} list")]
    EmptyList(&'static str),
    #[error("non-finite score in {0} list")]
    NonFinite(&'static str),
    #[error("task {task:?}: no records with split {split:?}")]
    UnknownSplit { task: String, split: String },
    #[error("task {task:?}: positive and negative split are both {split:?}")]
    SameSplit { task: String, split: String },
    #[error("record {id:?} has no {method} score")]
    MissingScore { id: String, method: Method },
    #[error("image {0:?} has no ground-truth label")]
    UnlabeledImage(String),
    #[error("task {task:?}: {source}")]
    InTask {
        task: String,
        #[source]
        source: Box<EvalError>,
    },
}

/// Probability that a random OOD score exceeds a random in-domain score,
/// ties counting one half. Runs in `O((n + m) log(n + m))` via mid-ranks.
pub fn auroc(ood_scores: &[f64], in_scores: &[f64]) -> Result<f64, EvalError> {
    if ood_scores.is_empty() {
        return Err(EvalError::EmptyList("OOD"));
    }
    if in_scores.is_empty() {
        return Err(EvalError::EmptyList("in-domain"));
    }
    if ood_scores.iter().any(|x| !x.is_finite()) {
        return Err(EvalError::NonFinite("OOD"));
    }
    if in_scores.iter().any(|x| !x.is_finite()) {
        return Err(EvalError::NonFinite("in-domain"));
    }
    // `+ 0.0` folds -0.0 into 0.0 so total_cmp agrees with `==`
    let mut all: Vec<(f64, bool)> = ood_scores
        .iter()
        .map(|&x| (x + 0.0, true))
        .chain(in_scores.iter().map(|&x| (x + 0.0, false)))
        .collect();
    all.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    // Twice the rank sum of the OOD scores, exact in integers.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i + 1;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j share the mid-rank (i + 1 + j) / 2
        let pos = all[i..j].iter().filter(|e| e.1).count() as u128;
        twice_rank_sum += pos * (i + 1 + j) as u128;
        i = j;
    }
    let n = ood_scores.len() as u128;
    let m = in_scores.len() as u128;
    let twice_u = twice_rank_sum - n * (n + 1);
    Ok((twice_u as f64 / 2.0) / (n * m) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTask {
    pub name: String,
    /// Split whose records are OOD.
    pub positive_split: String,
    /// Split whose records are in-domain.
    pub negative_split: String,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFile {
    pub tasks: Vec<EvalTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub name: String,
    pub method: String,
    pub auroc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub methods: Vec<String>,
    pub temperature: Option<f64>,
    pub labelset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tasks: Vec<TaskResult>,
    pub config: ConfigEcho,
    pub split_counts: BTreeMap<String, usize>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    pub fn auroc_of(&self, name: &str, method: &str) -> Option<f64> {
        self.tasks
            .iter()
            .find(|t| t.name == name && t.method == method)
            .map(|t| t.auroc)
    }

    /// Methods as rows, task names as columns, four decimals per cell.
    pub fn to_markdown(&self) -> String {
        let mut cols: Vec<&str> = Vec::new();
        let mut rows: Vec<&str> = Vec::new();
        for t in &self.tasks {
            if !cols.contains(&t.name.as_str()) {
                cols.push(&t.name);
            }
            if !rows.contains(&t.method.as_str()) {
                rows.push(&t.method);
            }
        }
        let mut out = String::from("| score |");
        for c in &cols {
            let _ = write!(out, " {c} |");
        }
        out.push_str("\n|---|");
        for _ in &cols {
            out.push_str("---|");
        }
        out.push('\n');
        for r in rows {
            let _ = write!(out, "| {r} |");
            for c in &cols {
                match self.auroc_of(c, r) {
                    Some(a) => {
                        let _ = write!(out, " {a:.4} |");
                    }
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn split_counts<'a>(splits: impl Iterator<Item = &'a str>) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for s in splits {
        *m.entry(s.to_string()).or_insert(0) += 1;
    }
    m
}

fn run_task(records: &[ScoredRecord], task: &EvalTask) -> Result<TaskResult, EvalError> {
    if task.positive_split == task.negative_split {
        return Err(EvalError::SameSplit {
            task: task.name.clone(),
            split: task.positive_split.clone(),
        });
    }
    let collect = |split: &str| -> Result<Vec<f64>, EvalError> {
        let scores = records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| {
                r.scores
                    .get(&task.method)
                    .copied()
                    .ok_or_else(|| EvalError::MissingScore {
                        id: r.id.clone(),
                        method: task.method,
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if scores.is_empty() {
            return Err(EvalError::UnknownSplit {
                task: task.name.clone(),
                split: split.to_string(),
            });
        }
        Ok(scores)
    };
    let pos = collect(&task.positive_split)?;
    let neg = collect(&task.negative_split)?;
    let a = auroc(&pos, &neg).map_err(|e| EvalError::InTask {
        task: task.name.clone(),
        source: Box::new(e),
    })?;
    Ok(TaskResult {
        name: task.name.clone(),
        method: task.method.to_string(),
        auroc: a,
        n_pos: pos.len(),
        n_neg: neg.len(),
    })
}

/// Evaluates each task independently; report order follows `tasks`.
pub fn run_tasks(
    records: &[ScoredRecord],
    tasks: &[EvalTask],
    mut config: ConfigEcho,
) -> Result<EvalReport, EvalError> {
    let results = tasks
        .par_iter()
        .map(|t| run_task(records, t))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    if config.methods.is_empty() {
        for t in tasks {
            let m = t.method.to_string();
            if !config.methods.contains(&m) {
                config.methods.push(m);
            }
        }
    }
    Ok(EvalReport {
        tasks: results,
        config,
        split_counts: split_counts(records.iter().map(|r| r.split.as_str())),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    PureIn,
    PureOut,
    Mixed,
}

impl Truth {
    pub fn as_str(self) -> &'static str {
        match self {
            Truth::PureIn => "pure_in",
            Truth::PureOut => "pure_out",
            Truth::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub image_id: String,
    pub truth: Truth,
}

pub const TASK_PURE_IN_VS_MIX: &str = "pure_in vs mixed";
pub const TASK_PURE_OUT_VS_MIX: &str = "pure_out vs mixed";
pub const NO_MIXTURE_SCORE: &str = "no_mixture_score";

/// Mixed images are the positive class against pure-in and against pure-out.
///
/// Only images with a mixture score (two or more boxes) take part. For every
/// method this yields `g(method)` rows, plus plain `method` rows for the
/// whole-image score when every candidate carries one.
pub fn mixture_eval(
    results: &[MixtureResult],
    truth: &HashMap<String, Truth>,
    mut config: ConfigEcho,
) -> Result<EvalReport, EvalError> {
    let mut methods: Vec<Method> = Vec::new();
    for r in results {
        if !truth.contains_key(&r.image_id) {
            return Err(EvalError::UnlabeledImage(r.image_id.clone()));
        }
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let mut tasks = Vec::new();
    for &m in &methods {
        let candidates: Vec<(&MixtureResult, Truth)> = results
            .iter()
            .filter(|r| r.method == m && r.g.is_some())
            .map(|r| (r, truth[&r.image_id]))
            .collect();
        let pick = |t: Truth, f: &dyn Fn(&MixtureResult) -> Option<f64>| -> Vec<f64> {
            candidates
                .iter()
                .filter(|(_, tt)| *tt == t)
                .filter_map(|(r, _)| f(r))
                .collect()
        };
        let g = |r: &MixtureResult| r.g;
        let single = |r: &MixtureResult| r.image_score;
        let mut push =
            |label: String, f: &dyn Fn(&MixtureResult) -> Option<f64>| -> Result<(), EvalError> {
                let mixed = pick(Truth::Mixed, f);
                for (name, other) in [
                    (TASK_PURE_IN_VS_MIX, Truth::PureIn),
                    (TASK_PURE_OUT_VS_MIX, Truth::PureOut),
                ] {
                    let neg = pick(other, f);
                    let a = auroc(&mixed, &neg).map_err(|e| EvalError::InTask {
                        task: name.to_string(),
                        source: Box::new(e),
                    })?;
                    tasks.push(TaskResult {
                        name: name.to_string(),
                        method: label.clone(),
                        auroc: a,
                        n_pos: mixed.len(),
                        n_neg: neg.len(),
                    });
                }
                Ok(())
            };
        push(format!("g({m})"), &g)?;
        if !candidates.is_empty() && candidates.iter().all(|(r, _)| r.image_score.is_some()) {
            push(m.to_string(), &single)?;
        }
        if !config.methods.contains(&m.to_string()) {
            config.methods.push(m.to_string());
        }
    }
    // g rows first, then single-score rows
    tasks.sort_by_key(|t| !t.method.starts_with("g("));

    let first = methods.first().copied();
    let mut counts = split_counts(
        results
            .iter()
            .filter(|r| Some(r.method) == first && r.g.is_some())
            .map(|r| truth[&r.image_id].as_str()),
    );
    let skipped = results
        .iter()
        .filter(|r| Some(r.method) == first && r.g.is_none())
        .count();
    counts.insert(NO_MIXTURE_SCORE.to_string(), skipped);
    Ok(EvalReport {
        tasks,
        config,
        split_counts: counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// O(n·m) pairwise counting.
    fn pairwise(ood: &[f64], ind: &[f64]) -> f64 {
        let mut c = 0.0;
        for &a in ood {
            for &b in ind {
                if a > b {
                    c += 1.0;
                } else if a == b {
                    c += 0.5;
                }
            }
        }
        c / (ood.len() * ind.len()) as f64
    }

    #[test]
    fn perfect_and_tied() {
        assert_eq!(auroc(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.1, 0.2], &[0.9, 0.8]).unwrap(), 0.0);
        assert_eq!(auroc(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn small_ties_match_pairwise() {
        let ood = [0.3, 0.7, 0.7];
        let ind = [0.1, 0.7, 0.9];
        // 0.3 beats 0.1; each 0.7 beats 0.1 and ties 0.7: 1 + 2*1.5 = 4 of 9
        assert_eq!(pairwise(&ood, &ind), 4.0 / 9.0);
        assert_eq!(auroc(&ood, &ind).unwrap(), 4.0 / 9.0);
    }

    #[test]
    fn signed_zero_ties() {
        assert_eq!(auroc(&[-0.0], &[0.0]).unwrap(), 0.5);
    }

    #[test]
    fn empty_and_nan() {
        assert_eq!(auroc(&[], &[1.0]), Err(EvalError::EmptyList("OOD")));
        assert_eq!(auroc(&[1.0], &[]), Err(EvalError::EmptyList("in-domain")));
        assert_eq!(auroc(&[f64::NAN], &[1.0]), Err(EvalError::NonFinite("OOD")));
    }

    fn rec(id: &str, split: &str, v: f64) -> ScoredRecord {
        ScoredRecord {
            id: id.into(),
            split: split.into(),
            scores: [(Method::MaxLogitDiff, v)].into_iter().collect(),
        }
    }

    fn task(pos: &str, neg: &str) -> EvalTask {
        EvalTask {
            name: format!("{neg} vs {pos}"),
            positive_split: pos.into(),
            negative_split: neg.into(),
            method: Method::MaxLogitDiff,
        }
    }

    #[test]
    fn one_record_per_split() {
        for (a, b, want) in [(1.0, 0.0, 1.0), (0.0, 1.0, 0.0), (0.5, 0.5, 0.5)] {
            let recs = vec![rec("o", "seen_out", a), rec("i", "seen_in", b)];
            let r =
                run_tasks(&recs, &[task("seen_out", "seen_in")], ConfigEcho::default()).unwrap();
            assert_eq!(r.tasks[0].auroc, want);
            assert_eq!((r.tasks[0].n_pos, r.tasks[0].n_neg), (1, 1));
            assert_eq!(r.config.methods, vec!["max_logit_diff"]);
        }
    }

    #[test]
    fn task_errors() {
        let recs = vec![rec("o", "seen_out", 1.0), rec("i", "seen_in", 0.0)];
        assert!(matches!(
            run_tasks(&recs, &[task("unseen_out", "seen_in")], ConfigEcho::default()),
            Err(EvalError::UnknownSplit { split, .. }) if split == "unseen_out"
        ));
        assert!(matches!(
            run_tasks(&recs, &[task("seen_in", "seen_in")], ConfigEcho::default()),
            Err(EvalError::SameSplit { .. })
        ));
        let mut t = task("seen_out", "seen_in");
        t.method = Method::NegMaxProb;
        assert!(matches!(
            run_tasks(&recs, &[t], ConfigEcho::default()),
            Err(EvalError::MissingScore {
                method: Method::NegMaxProb,
                ..
            })
        ));
    }

    #[test]
    fn markdown_grid() {
        let recs = vec![rec("o", "seen_out", 1.0), rec("i", "seen_in", 0.0)];
        let r = run_tasks(&recs, &[task("seen_out", "seen_in")], ConfigEcho::default()).unwrap();
        assert_eq!(
            r.to_markdown(),
            "| score | seen_in vs seen_out |\n|---|---|\n| max_logit_diff | 1.0000 |\n"
        );
    }

    fn mres(id: &str, g: Option<f64>, single: Option<f64>) -> MixtureResult {
        MixtureResult {
            image_id: id.into(),
            method: Method::MaxLogitDiff,
            per_box: vec![],
            g,
            image_score: single,
        }
    }

    #[test]
    fn mixture_eval_separates_and_skips() {
        let results = vec![
            mres("a", Some(4.0), Some(-1.0)),
            mres("b", Some(0.1), Some(-1.0)),
            mres("c", Some(0.2), Some(1.0)),
            mres("d", None, Some(0.0)),
        ];
        let truth: HashMap<String, Truth> = [
            ("a", Truth::Mixed),
            ("b", Truth::PureIn),
            ("c", Truth::PureOut),
            ("d", Truth::Mixed),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let rep = mixture_eval(&results, &truth, ConfigEcho::default()).unwrap();
        assert_eq!(
            rep.auroc_of(TASK_PURE_IN_VS_MIX, "g(max_logit_diff)"),
            Some(1.0)
        );
        assert_eq!(
            rep.auroc_of(TASK_PURE_OUT_VS_MIX, "g(max_logit_diff)"),
            Some(1.0)
        );
        assert_eq!(
            rep.auroc_of(TASK_PURE_IN_VS_MIX, "max_logit_diff"),
            Some(0.5)
        );
        assert_eq!(
            rep.auroc_of(TASK_PURE_OUT_VS_MIX, "max_logit_diff"),
            Some(0.0)
        );
        assert_eq!(rep.split_counts[NO_MIXTURE_SCORE], 1);
        assert_eq!(rep.split_counts["mixed"], 1);
    }

    #[test]
    fn mixture_eval_all_zero_g() {
        let results = vec![
            mres("a", Some(0.0), None),
            mres("b", Some(0.0), None),
            mres("c", Some(0.0), None),
        ];
        let truth: HashMap<String, Truth> = [
            ("a", Truth::Mixed),
            ("b", Truth::PureIn),
            ("c", Truth::PureOut),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let rep = mixture_eval(&results, &truth, ConfigEcho::default()).unwrap();
        assert_eq!(rep.tasks.len(), 2);
        assert!(rep.tasks.iter().all(|t| t.auroc == 0.5));
    }

    #[test]
    fn mixture_eval_unlabeled() {
        let results = vec![mres("zz", Some(1.0), None)];
        assert_eq!(
            mixture_eval(&results, &HashMap::new(), ConfigEcho::default()),
            Err(EvalError::UnlabeledImage("zz".into()))
        );
    }
}
