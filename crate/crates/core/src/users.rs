//! User-preference profiles.
//!
//! Two sources: synthetic users drawn as uniform K-subsets of the training
//! items with a frequency threshold, and real ratings turned into
//! per-label preferences through lift, shrinkage towards a population prior
//! and a sigmoid, optionally bootstrapped into a larger population.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{GemiError, Result};
use crate::fusion::sigmoid;
use crate::ingest::{write_file, Interaction, InteractionTable, LabelMatrix, LABEL_NAMES, NUM_LABELS};
use crate::numerics::rng::standard_normal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    /// Panel row indices the user interacted with, without repeats.
    pub items: Vec<usize>,
    /// One value in `[0, 1]` per label.
    pub preferences: Vec<f64>,
}

impl UserProfile {
    pub fn new(user_id: impl Into<String>, items: Vec<usize>, preferences: Vec<f64>) -> Self {
        Self {
            user_id: user_id.into(),
            items,
            preferences,
        }
    }
}

/// `U × |labels|` matrix of preference rows, one per profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceMatrix {
    pub user_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PreferenceMatrix {
    pub fn from_profiles(profiles: &[UserProfile]) -> Self {
        Self {
            user_ids: profiles.iter().map(|p| p.user_id.clone()).collect(),
            rows: profiles.iter().map(|p| p.preferences.clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `user_id,animal,mythology,tree`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = format!("user_id,{}\n", LABEL_NAMES.join(","));
        for (id, row) in self.user_ids.iter().zip(&self.rows) {
            out.push_str(id);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        write_file(path.as_ref(), &out)
    }
}

/// Interaction rows (`rating = 1`) for the items of each profile.
pub fn profiles_to_interactions(profiles: &[UserProfile]) -> InteractionTable {
    InteractionTable {
        rows: profiles
            .iter()
            .flat_map(|p| {
                p.items.iter().map(|&panel| Interaction {
                    user_id: p.user_id.clone(),
                    panel,
                    rating: 1.0,
                })
            })
            .collect(),
        dropped_unknown: 0,
    }
}

/// Fraction of the profile's items carrying each label.
pub fn empirical_label_frequency(items: &[usize], labels: &LabelMatrix) -> Result<Vec<f64>> {
    if items.is_empty() {
        return Err(GemiError::InvalidArgument("empty profile".into()));
    }
    let k = items.len() as f64;
    Ok((0..labels.cols()).map(|l| labels.positives(items, l) as f64 / k).collect())
}

/// `1` where `f ≥ tau`, else `0`.
pub fn threshold_preferences(f: &[f64], tau: f64) -> Vec<f64> {
    f.iter().map(|&v| if v >= tau { 1.0 } else { 0.0 }).collect()
}

/// Synthetic users: each draws `min(K, |train|)` distinct training items
/// uniformly among all subsets of that size and prefers the labels present
/// in at least a `tau` fraction of them.
pub fn sample_synthetic_users(
    train: &[usize],
    labels: &LabelMatrix,
    num_users: usize,
    k: usize,
    tau: f64,
    rng: &mut impl RngCore,
) -> Result<Vec<UserProfile>> {
    if train.is_empty() {
        return Err(GemiError::InvalidArgument("no training items to sample from".into()));
    }
    if k == 0 || num_users == 0 {
        return Err(GemiError::InvalidArgument("need K >= 1 and U >= 1".into()));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(GemiError::InvalidArgument(format!("tau must be in (0, 1], got {tau}")));
    }
    let k = k.min(train.len());
    (0..num_users)
        .map(|u| {
            let mut items: Vec<usize> = sample(rng, train.len(), k).into_iter().map(|p| train[p]).collect();
            items.sort_unstable();
            let f = empirical_label_frequency(&items, labels)?;
            Ok(UserProfile::new(format!("u{u}"), items, threshold_preferences(&f, tau)))
        })
        .collect()
}

/// Global min-max scaling of ratings into `[0, 1]`; a constant rating
/// column maps to 0.
pub fn minmax_normalize_ratings(table: &InteractionTable) -> InteractionTable {
    let (lo, hi) = table
        .rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.rating), hi.max(r.rating)));
    let range = hi - lo;
    let mut out = table.clone();
    for r in &mut out.rows {
        r.rating = if range > 0.0 { (r.rating - lo) / range } else { 0.0 };
    }
    out
}

/// Per-user label lift.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftStats {
    /// Label mean rating minus `baseline`; 0 where support is 0.
    pub lift: Vec<f64>,
    /// Number of rated items carrying each label.
    pub support: Vec<usize>,
    /// Mean rating over all the user's items.
    pub baseline: f64,
}

/// Lift for one user's `(panel, rating)` pairs.
pub fn compute_lift(ratings: &[(usize, f64)], labels: &LabelMatrix) -> Result<LiftStats> {
    if ratings.is_empty() {
        return Err(GemiError::InvalidArgument("user has no interactions".into()));
    }
    let baseline = ratings.iter().map(|r| r.1).sum::<f64>() / ratings.len() as f64;
    let mut lift = vec![0.0; labels.cols()];
    let mut support = vec![0; labels.cols()];
    for l in 0..labels.cols() {
        let rated: Vec<f64> = ratings.iter().filter(|r| labels.get(r.0, l)).map(|r| r.1).collect();
        support[l] = rated.len();
        if !rated.is_empty() {
            lift[l] = rated.iter().sum::<f64>() / rated.len() as f64 - baseline;
        }
    }
    Ok(LiftStats { lift, support, baseline })
}

/// Support-weighted mean lift across users, per label.
pub fn prior_lift(stats: &[LiftStats]) -> Vec<f64> {
    (0..NUM_LABELS)
        .map(|l| {
            let n: usize = stats.iter().map(|s| s.support[l]).sum();
            if n == 0 {
                0.0
            } else {
                stats.iter().map(|s| s.support[l] as f64 * s.lift[l]).sum::<f64>() / n as f64
            }
        })
        .collect()
}

/// Pseudo-count shrinkage `(n·lift + m·prior) / (n + m)`.
pub fn smooth_lift(lift: f64, support: usize, prior: f64, pseudo_count: f64) -> Result<f64> {
    let n = support as f64;
    if pseudo_count < 0.0 || n + pseudo_count <= 0.0 {
        return Err(GemiError::InvalidArgument(format!(
            "smoothing needs support + pseudo-count > 0 (support {support}, m {pseudo_count})"
        )));
    }
    Ok((n * lift + pseudo_count * prior) / (n + pseudo_count))
}

pub fn sigmoid_preference(lift: f64, gain: f64) -> f64 {
    sigmoid(gain * lift)
}

/// The `k` highest-rated panels, ties by ascending panel index.
pub fn top_k_panels(ratings: &[(usize, f64)], k: usize) -> Vec<usize> {
    let mut sorted = ratings.to_vec();
    sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    sorted.into_iter().take(k).map(|r| r.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RealUserConfig {
    pub gain: f64,
    pub pseudo_count: f64,
    pub top_k: usize,
}

impl Default for RealUserConfig {
    fn default() -> Self {
        Self {
            gain: 5.0,
            pseudo_count: 5.0,
            top_k: 5,
        }
    }
}

/// Full real-rating pipeline: normalise ratings, compute and smooth lifts,
/// map through the sigmoid and keep each user's top-k panels. Users appear
/// in first-interaction order.
pub fn real_user_profiles(table: &InteractionTable, labels: &LabelMatrix, cfg: &RealUserConfig) -> Result<Vec<UserProfile>> {
    if cfg.top_k == 0 {
        return Err(GemiError::InvalidArgument("top_k must be >= 1".into()));
    }
    let norm = minmax_normalize_ratings(table);
    let users = norm.by_user();
    let per_user: Vec<Vec<(usize, f64)>> = users
        .iter()
        .map(|(_, rows)| rows.iter().map(|&r| (norm.rows[r].panel, norm.rows[r].rating)).collect())
        .collect();
    let stats = per_user
        .iter()
        .map(|r| compute_lift(r, labels))
        .collect::<Result<Vec<_>>>()?;
    let prior = prior_lift(&stats);
    users
        .iter()
        .zip(&per_user)
        .zip(&stats)
        .map(|(((id, _), ratings), s)| {
            let prefs = (0..NUM_LABELS)
                .map(|l| Ok(sigmoid_preference(smooth_lift(s.lift[l], s.support[l], prior[l], cfg.pseudo_count)?, cfg.gain)))
                .collect::<Result<Vec<_>>>()?;
            Ok(UserProfile::new(id.clone(), top_k_panels(ratings, cfg.top_k), prefs))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub target: usize,
    /// Interactions drawn per synthetic user.
    pub k: usize,
    pub p_replace: f64,
    /// Range of the multiplicative preference scale.
    pub gain_range: (f64, f64),
    pub bias_sigma: f64,
    pub noise_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            target: 10_000,
            k: 5,
            p_replace: 0.3,
            gain_range: (0.8, 1.2),
            bias_sigma: 0.05,
            noise_sigma: 0.05,
        }
    }
}

/// Bootstrap a larger population from real profiles.
///
/// Per synthetic user: pick a base uniformly, draw `k` items with replacement
/// from its top-k list, replace each drawn slot by a uniformly chosen
/// observed panel with probability `p_replace`, drop repeats, and set
/// preferences to `clip(scale · base + bias + noise, 0, 1)` with one scale
/// and bias per user and independent noise per label.
pub fn bootstrap_augment(
    base: &[UserProfile],
    observed: &[usize],
    cfg: &AugmentConfig,
    rng: &mut impl RngCore,
) -> Result<Vec<UserProfile>> {
    let pool: Vec<&UserProfile> = base.iter().filter(|p| !p.items.is_empty()).collect();
    if pool.is_empty() {
        return Err(GemiError::InvalidArgument("no base profiles with interactions".into()));
    }
    if cfg.target == 0 || cfg.k == 0 {
        return Err(GemiError::InvalidArgument("augmentation target and k must be >= 1".into()));
    }
    if observed.is_empty() && cfg.p_replace > 0.0 {
        return Err(GemiError::InvalidArgument("no observed panels for replacement".into()));
    }
    let (glo, ghi) = cfg.gain_range;
    let mut out = Vec::with_capacity(cfg.target);
    for u in 0..cfg.target {
        let b = pool[rng.random_range(0..pool.len())];
        let mut items = Vec::with_capacity(cfg.k);
        let mut seen = HashSet::new();
        for _ in 0..cfg.k {
            let mut item = b.items[rng.random_range(0..b.items.len())];
            if cfg.p_replace > 0.0 && rng.random_bool(cfg.p_replace.min(1.0)) {
                item = observed[rng.random_range(0..observed.len())];
            }
            if seen.insert(item) {
                items.push(item);
            }
        }
        let scale = if ghi > glo { rng.random_range(glo..ghi) } else { glo };
        let bias = cfg.bias_sigma * standard_normal::<f64>(rng);
        let prefs = b
            .preferences
            .iter()
            .map(|&p| {
                let noise = cfg.noise_sigma * standard_normal::<f64>(rng);
                (scale * p + bias + noise).clamp(0.0, 1.0)
            })
            .collect();
        out.push(UserProfile::new(format!("aug{u}"), items, prefs));
    }
    Ok(out)
}

/// Panels that appear in at least one interaction, ascending.
pub fn observed_panels(table: &InteractionTable) -> Vec<usize> {
    let mut v: Vec<usize> = table.rows.iter().map(|r| r.panel).collect::<HashSet<_>>().into_iter().collect();
    v.sort_unstable();
    v
}

/// Keeps only profile items in `allowed`, dropping profiles left empty.
pub fn restrict_items(profiles: &[UserProfile], allowed: &[usize]) -> Vec<UserProfile> {
    let set: HashSet<usize> = allowed.iter().copied().collect();
    profiles
        .iter()
        .filter_map(|p| {
            let items: Vec<usize> = p.items.iter().copied().filter(|i| set.contains(i)).collect();
            (!items.is_empty()).then(|| UserProfile::new(p.user_id.clone(), items, p.preferences.clone()))
        })
        .collect()
}

/// Per-user `(panel, rating)` lists keyed by user id.
pub fn ratings_by_user(table: &InteractionTable) -> HashMap<String, Vec<(usize, f64)>> {
    let mut m: HashMap<String, Vec<(usize, f64)>> = HashMap::new();
    for r in &table.rows {
        m.entry(r.user_id.clone()).or_default().push((r.panel, r.rating));
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn labels(rows: &[[u8; 3]]) -> LabelMatrix {
        LabelMatrix::new(rows.iter().map(|r| [r[0] == 1, r[1] == 1, r[2] == 1]).collect())
    }

    #[test]
    fn frequency_examples() {
        let y = labels(&[[1, 0, 0], [1, 0, 0], [0, 1, 0], [1, 0, 1], [0, 0, 0]]);
        let f = empirical_label_frequency(&[0, 1, 2, 3, 4], &y).unwrap();
        assert_eq!(f[0], 0.6);
        assert_eq!(empirical_label_frequency(&[4], &y).unwrap(), vec![0.0; 3]);
        assert_eq!(empirical_label_frequency(&[3], &y).unwrap(), vec![1.0, 0.0, 1.0]);
        assert!(empirical_label_frequency(&[], &y).is_err());
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(threshold_preferences(&[0.6], 0.2), vec![1.0]);
        assert_eq!(threshold_preferences(&[0.2], 0.2), vec![1.0]);
        assert_eq!(threshold_preferences(&[0.8, 1.0], 1.0), vec![0.0, 1.0]);
    }

    #[test]
    fn synthetic_profile_sizes() {
        let y = labels(&[[1, 0, 0]; 10]);
        let train: Vec<usize> = (0..10).collect();
        let mut rng = SeededRng::new(1).substream("users");
        let full = sample_synthetic_users(&train, &y, 3, 10, 0.2, &mut rng).unwrap();
        assert!(full.iter().all(|p| p.items == train));
        let capped = sample_synthetic_users(&train, &y, 3, 50, 0.2, &mut rng).unwrap();
        assert!(capped.iter().all(|p| p.items.len() == 10));
        let small = sample_synthetic_users(&train, &y, 20, 4, 0.2, &mut rng).unwrap();
        for p in &small {
            let mut d = p.items.clone();
            d.dedup();
            assert_eq!(d.len(), 4);
            assert_eq!(p.preferences, vec![1.0, 0.0, 0.0]);
        }
        assert!(sample_synthetic_users(&[], &y, 3, 2, 0.2, &mut rng).is_err());
    }

    #[test]
    fn minmax_examples() {
        let t = |rs: &[f64]| InteractionTable {
            rows: rs
                .iter()
                .enumerate()
                .map(|(i, &r)| Interaction { user_id: "u".into(), panel: i, rating: r })
                .collect(),
            dropped_unknown: 0,
        };
        let ratings = |t: &InteractionTable| t.rows.iter().map(|r| r.rating).collect::<Vec<_>>();
        assert_eq!(ratings(&minmax_normalize_ratings(&t(&[1.0, 3.0, 5.0]))), vec![0.0, 0.5, 1.0]);
        assert_eq!(ratings(&minmax_normalize_ratings(&t(&[4.0, 4.0]))), vec![0.0, 0.0]);
        assert_eq!(ratings(&minmax_normalize_ratings(&t(&[0.0, 0.25, 1.0]))), vec![0.0, 0.25, 1.0]);
    }

    #[test]
    fn lift_examples() {
        let y = labels(&[[1, 0, 0], [0, 0, 0], [1, 0, 0], [0, 0, 0]]);
        // animal items rated 0.8 on average, overall baseline 0.5.
        let s = compute_lift(&[(0, 0.9), (1, 0.2), (2, 0.7), (3, 0.2)], &y).unwrap();
        assert!((s.baseline - 0.5).abs() < 1e-15);
        assert!((s.lift[0] - 0.3).abs() < 1e-12);
        assert_eq!(s.support, vec![2, 0, 0]);
        assert_eq!(s.lift[1], 0.0);

        let only = compute_lift(&[(0, 0.9), (2, 0.3)], &y).unwrap();
        assert!(only.lift[0].abs() < 1e-15);
    }

    #[test]
    fn smoothing_examples() {
        assert_eq!(smooth_lift(0.4, 0, -0.1, 5.0).unwrap(), -0.1);
        assert!((smooth_lift(0.4, 5, -0.2, 5.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((smooth_lift(0.4, 1_000_000_000, -0.2, 5.0).unwrap() - 0.4).abs() < 1e-8);
        assert!(smooth_lift(0.4, 0, 0.0, 0.0).is_err());
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid_preference(0.0, 5.0), 0.5);
        assert!((sigmoid_preference(0.3, 5.0) - 0.817_574_476_193_643_7).abs() < 1e-12);
        assert_eq!(sigmoid_preference(1e6, 5.0), 1.0);
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(top_k_panels(&[(4, 0.1), (2, 0.9), (7, 0.5)], 5), vec![2, 7, 4]);
        assert_eq!(top_k_panels(&[(4, 0.5), (2, 0.5), (7, 0.9)], 2), vec![7, 2]);
    }

    #[test]
    fn augmentation_contracts() {
        let base = vec![
            UserProfile::new("a", vec![0, 1, 2], vec![0.9, 0.2, 0.5]),
            UserProfile::new("b", vec![3], vec![0.1, 0.7, 0.4]),
        ];
        let mut rng = SeededRng::new(9).substream("augment");
        let cfg = AugmentConfig { target: 200, ..Default::default() };
        let out = bootstrap_augment(&base, &[0, 1, 2, 3, 4], &cfg, &mut rng).unwrap();
        assert_eq!(out.len(), 200);
        assert!(out.iter().all(|p| p.preferences.iter().all(|v| (0.0..=1.0).contains(v))));

        let plain = AugmentConfig {
            target: 50,
            p_replace: 0.0,
            gain_range: (1.0, 1.0),
            bias_sigma: 0.0,
            noise_sigma: 0.0,
            ..Default::default()
        };
        let out = bootstrap_augment(&base, &[], &plain, &mut rng).unwrap();
        for p in &out {
            let src = base.iter().find(|b| p.items.iter().all(|i| b.items.contains(i))).unwrap();
            assert_eq!(p.preferences, src.preferences);
        }
        assert!(bootstrap_augment(&[], &[0], &cfg, &mut rng).is_err());
    }

    #[test]
    fn real_pipeline_orders_users_and_keeps_top_k() {
        let y = labels(&[[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 0]]);
        let rows = [("u2", 0, 5.0), ("u2", 1, 1.0), ("u1", 2, 3.0), ("u1", 3, 4.0), ("u2", 3, 2.0)];
        let table = InteractionTable {
            rows: rows
                .iter()
                .map(|&(u, p, r)| Interaction { user_id: u.into(), panel: p, rating: r })
                .collect(),
            dropped_unknown: 0,
        };
        let profiles = real_user_profiles(&table, &y, &RealUserConfig { top_k: 2, ..Default::default() }).unwrap();
        assert_eq!(profiles[0].user_id, "u2");
        assert_eq!(profiles[0].items, vec![0, 3]);
        assert_eq!(profiles[1].items, vec![3, 2]);
        assert!(profiles.iter().all(|p| p.preferences.iter().all(|v| *v > 0.0 && *v < 1.0)));
    }
}
