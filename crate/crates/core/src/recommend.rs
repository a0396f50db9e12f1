//! Cosine ranking of test panels for each user and label-conditioned
//! Precision@K.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GemiError, Result};
use crate::graph::top_k_by_score;
use crate::ingest::{write_file, LabelMatrix, LABEL_NAMES};
use crate::numerics::cosine;
use crate::users::UserProfile;
use crate::Matrix;

/// Preferences strictly above this count as "prefers the label".
pub const PREFERENCE_CUTOFF: f64 = 0.5;

pub fn prefers(p: f64) -> bool {
    p > PREFERENCE_CUTOFF
}

/// Which node representation the ranking uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepresentationSource {
    /// The fused input features.
    Features,
    /// GCN hidden layer, GAE `Z`, or VGAE `μ`.
    Latent,
    /// Label logits.
    Logits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub user_id: String,
    /// Panel indices, best first.
    pub items: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Mean representation of the user's items.
pub fn user_embedding(profile: &UserProfile, reps: &Matrix) -> Result<Vec<f64>> {
    if profile.items.is_empty() {
        return Err(GemiError::InvalidArgument(format!("user {} has an empty profile", profile.user_id)));
    }
    if let Some(&i) = profile.items.iter().find(|&&i| i >= reps.rows()) {
        return Err(GemiError::InvalidArgument(format!("user {} references panel {i} out of range", profile.user_id)));
    }
    reps.mean_of_rows(&profile.items)
}

/// Cosine similarity of `user` with each candidate row.
pub fn score(user: &[f64], reps: &Matrix, candidates: &[usize]) -> Result<Vec<f64>> {
    if user.len() != reps.cols() {
        return Err(GemiError::shape("score", reps.cols(), user.len()));
    }
    Ok(candidates.iter().map(|&c| cosine(user, reps.row(c))).collect())
}

/// Positions of the `k` largest scores, descending, ties by ascending
/// position; `k` is capped at the number of scores.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
    top_k_by_score(&mut scored, k)
}

/// Top-`k_rec` test panels for one user.
pub fn recommend(profile: &UserProfile, reps: &Matrix, test: &[usize], k_rec: usize) -> Result<Recommendation> {
    let u = user_embedding(profile, reps)?;
    let s = score(&u, reps, test)?;
    let order = top_k(&s, k_rec);
    Ok(Recommendation {
        user_id: profile.user_id.clone(),
        items: order.iter().map(|&p| test[p]).collect(),
        scores: order.iter().map(|&p| s[p]).collect(),
    })
}

/// Per label, the recommended panels that carry the label when the user
/// prefers it (empty otherwise).
pub fn label_relevance(recs: &[usize], prefs: &[f64], labels: &LabelMatrix) -> Vec<Vec<usize>> {
    (0..labels.cols())
        .map(|l| {
            if prefs.get(l).copied().is_some_and(prefers) {
                recs.iter().copied().filter(|&t| labels.get(t, l)).collect()
            } else {
                Vec::new()
            }
        })
        .collect()
}

/// `|relevant ∩ recs| / k_rec`.
pub fn precision_at_k(recs: &[usize], relevant: &[usize], k_rec: usize) -> Result<f64> {
    if k_rec == 0 {
        return Err(GemiError::InvalidArgument("K_rec must be >= 1".into()));
    }
    if recs.len() > k_rec {
        return Err(GemiError::InvalidArgument(format!("{} recommendations exceed K_rec = {k_rec}", recs.len())));
    }
    let hits = recs.iter().filter(|r| relevant.contains(r)).count();
    Ok(hits as f64 / k_rec as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: String,
    pub mean: f64,
    /// Population standard deviation over users.
    pub std: f64,
}

/// Mean and population standard deviation of each column of `per_user`.
pub fn aggregate(per_user: &[Vec<f64>]) -> Result<Vec<LabelMetrics>> {
    let Some(first) = per_user.first() else {
        return Err(GemiError::InvalidArgument("aggregate needs at least one user".into()));
    };
    let u = per_user.len() as f64;
    Ok((0..first.len())
        .map(|l| {
            let mean = per_user.iter().map(|r| r[l]).sum::<f64>() / u;
            let var = per_user.iter().map(|r| (r[l] - mean).powi(2)).sum::<f64>() / u;
            LabelMetrics {
                label: LABEL_NAMES.get(l).map_or_else(|| format!("label{l}"), |s| s.to_string()),
                mean,
                std: var.sqrt(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub source: RepresentationSource,
    pub seed: u64,
    pub k_rec: usize,
    pub num_users: usize,
    pub labels: Vec<LabelMetrics>,
    /// Mean Precision@K of a uniformly random ranking, per label.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random_baseline: Option<Vec<f64>>,
    pub user_ids: Vec<String>,
    /// `U × |labels|` per-user precisions.
    pub per_user: Vec<Vec<f64>>,
}

impl MetricsReport {
    pub fn mean(&self, label: &str) -> Option<f64> {
        self.labels.iter().find(|m| m.label == label).map(|m| m.mean)
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn csv_header() -> &'static str {
        "model,label,mean,std,U,K_rec,seed\n"
    }

    /// One CSV row per label, without header.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for m in &self.labels {
            let _ = writeln!(out, "{},{},{},{},{},{},{}", self.model, m.label, m.mean, m.std, self.num_users, self.k_rec, self.seed);
        }
        out
    }

    pub fn write(&self, json: impl AsRef<Path>, csv: impl AsRef<Path>) -> Result<()> {
        write_file(json.as_ref(), &self.to_json()?)?;
        write_file(csv.as_ref(), &format!("{}{}", Self::csv_header(), self.csv_rows()))
    }
}

/// Evaluation inputs shared by every ranking source.
#[derive(Debug, Clone, Copy)]
pub struct EvalInputs<'a> {
    pub labels: &'a LabelMatrix,
    pub test: &'a [usize],
    pub profiles: &'a [UserProfile],
    pub k_rec: usize,
}

/// Per-user, per-label Precision@K for `reps` (rows in panel order).
pub fn per_user_precision(reps: &Matrix, inputs: &EvalInputs<'_>) -> Result<Vec<Vec<f64>>> {
    if inputs.test.is_empty() {
        return Err(GemiError::Validation("no test panels to recommend".into()));
    }
    if inputs.profiles.is_empty() {
        return Err(GemiError::Validation("no users to evaluate".into()));
    }
    inputs
        .profiles
        .par_iter()
        .map(|p| {
            let rec = recommend(p, reps, inputs.test, inputs.k_rec)?;
            label_relevance(&rec.items, &p.preferences, inputs.labels)
                .iter()
                .map(|rel| precision_at_k(&rec.items, rel, inputs.k_rec))
                .collect()
        })
        .collect()
}

/// Scores, ranks and aggregates.
pub fn evaluate(model: &str, source: RepresentationSource, seed: u64, reps: &Matrix, inputs: &EvalInputs<'_>) -> Result<MetricsReport> {
    let per_user = per_user_precision(reps, inputs)?;
    Ok(MetricsReport {
        model: model.to_string(),
        source,
        seed,
        k_rec: inputs.k_rec,
        num_users: inputs.profiles.len(),
        labels: aggregate(&per_user)?,
        random_baseline: None,
        user_ids: inputs.profiles.iter().map(|p| p.user_id.clone()).collect(),
        per_user,
    })
}

/// Monte-Carlo mean Precision@K per label for rankings drawn uniformly at
/// random: each draw gives every user `min(K_rec, |test|)` distinct test
/// panels.
pub fn random_baseline(inputs: &EvalInputs<'_>, draws: usize, rng: &mut impl RngCore) -> Result<Vec<f64>> {
    if draws == 0 || inputs.test.is_empty() || inputs.profiles.is_empty() || inputs.k_rec == 0 {
        return Err(GemiError::InvalidArgument("random baseline needs draws, test panels, users and K_rec >= 1".into()));
    }
    let take = inputs.k_rec.min(inputs.test.len());
    let nl = inputs.labels.cols();
    let mut sums = vec![0.0; nl];
    for _ in 0..draws {
        for p in inputs.profiles {
            let recs: Vec<usize> = sample(rng, inputs.test.len(), take).into_iter().map(|i| inputs.test[i]).collect();
            for (l, rel) in label_relevance(&recs, &p.preferences, inputs.labels).iter().enumerate() {
                sums[l] += rel.len() as f64 / inputs.k_rec as f64;
            }
        }
    }
    let denom = (draws * inputs.profiles.len()) as f64;
    Ok(sums.into_iter().map(|s| s / denom).collect())
}

/// Closed form of [`random_baseline`]: the share of users preferring each
/// label times its prevalence among test panels, scaled by
/// `min(K_rec, |test|) / K_rec`.
pub fn expected_random_precision(inputs: &EvalInputs<'_>) -> Vec<f64> {
    let take = inputs.k_rec.min(inputs.test.len()) as f64 / inputs.k_rec as f64;
    let u = inputs.profiles.len() as f64;
    (0..inputs.labels.cols())
        .map(|l| {
            let prevalence = inputs.labels.positives(inputs.test, l) as f64 / inputs.test.len() as f64;
            let share = inputs.profiles.iter().filter(|p| p.preferences.get(l).copied().is_some_and(prefers)).count() as f64 / u;
            share * prevalence * take
        })
        .collect()
}
