//! Accuracy, average precision and precision/recall curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredSample {
    pub score: f64,
    /// `true` for the positive (generated) class.
    pub label: bool,
    /// Original position; breaks ties among equal scores.
    pub index: usize,
}

impl ScoredSample {
    pub fn new(score: f64, label: bool, index: usize) -> Self {
        Self {
            score,
            label,
            index,
        }
    }
}

/// Builds samples from parallel score and label slices, indexed by position.
pub fn scored(scores: &[f64], labels: &[bool]) -> Vec<ScoredSample> {
    scores
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (&s, &l))| ScoredSample::new(s, l, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: f64,
    pub ap: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub pr_points: Vec<(f64, f64)>,
}

impl EvalReport {
    pub fn from_samples(samples: &[ScoredSample], threshold: f64) -> Result<Self> {
        let n_pos = samples.iter().filter(|s| s.label).count();
        Ok(Self {
            acc: accuracy(samples, threshold)?,
            ap: average_precision(samples)?,
            n_pos,
            n_neg: samples.len() - n_pos,
            pr_points: pr_curve(samples)?,
        })
    }
}

/// Fraction of samples where `score > threshold` agrees with the label.
pub fn accuracy(samples: &[ScoredSample], threshold: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain("accuracy of an empty sample set".into()));
    }
    let correct = samples
        .iter()
        .filter(|s| (s.score > threshold) == s.label)
        .count();
    Ok(correct as f64 / samples.len() as f64)
}

/// Score-descending order, ties broken by ascending original index.
fn ranked(samples: &[ScoredSample]) -> Vec<ScoredSample> {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    v
}

fn require_positive(samples: &[ScoredSample]) -> Result<usize> {
    match samples.iter().filter(|s| s.label).count() {
        0 => Err(Error::Domain("no positive samples".into())),
        n => Ok(n),
    }
}

/// Mean of precision@k over the ranks k of the positive samples.
pub fn average_precision(samples: &[ScoredSample]) -> Result<f64> {
    let n_pos = require_positive(samples)?;
    let mut tp = 0usize;
    let mut total = 0.0;
    for (k, s) in ranked(samples).iter().enumerate() {
        if s.label {
            tp += 1;
            total += tp as f64 / (k + 1) as f64;
        }
    }
    Ok(total / n_pos as f64)
}

/// `(recall, precision)` after each distinct score, walking scores downward.
pub fn pr_curve(samples: &[ScoredSample]) -> Result<Vec<(f64, f64)>> {
    let n_pos = require_positive(samples)? as f64;
    let order = ranked(samples);
    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    for (i, s) in order.iter().enumerate() {
        seen += 1;
        if s.label {
            tp += 1;
        }
        let last_of_group = order.get(i + 1).map_or(true, |n| n.score != s.score);
        if last_of_group {
            points.push((tp as f64 / n_pos, tp as f64 / seen as f64));
        }
    }
    Ok(points)
}
