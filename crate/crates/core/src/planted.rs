//! Synthetic panels with a planted label signal.
//!
//! Each label owns a blob centre; centres are mutually orthogonal and
//! `separation · σ` apart. A panel's embedding is the sum of the centres of
//! its labels plus isotropic Gaussian noise of scale `σ`. Every panel carries
//! at least one label.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GemiError, Result};
use crate::ingest::{assign_split, LabelMatrix, PanelTable, Split, NUM_LABELS};
use crate::numerics::rng::standard_normal;
use crate::numerics::{DenseMatrix, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantedConfig {
    pub items: usize,
    pub dim: usize,
    /// Distance between blob centres in units of `sigma`.
    pub separation: f64,
    pub sigma: f64,
    /// Per-label probability before conditioning on a non-empty label set.
    pub prevalence: [f64; NUM_LABELS],
    pub test_fraction: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            items: 150,
            dim: 32,
            separation: 4.0,
            sigma: 1.0,
            prevalence: [0.5, 0.5, 0.5],
            test_fraction: 0.2,
        }
    }
}

impl PlantedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.items < 2 || self.dim < NUM_LABELS {
            return Err(GemiError::Validation("planted data needs >= 2 items and dim >= 3".into()));
        }
        if !(self.sigma > 0.0 && self.separation >= 0.0) {
            return Err(GemiError::Validation("planted sigma must be > 0 and separation >= 0".into()));
        }
        if self.prevalence.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(GemiError::Validation("planted prevalence must be in (0, 1]".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(GemiError::Validation("planted test_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Panels `p0..`, stratified train/test split already assigned.
pub fn planted_panels(cfg: &PlantedConfig, seed: u64) -> Result<PanelTable> {
    cfg.validate()?;
    let root = SeededRng::new(seed);
    let mut label_rng = root.substream("planted_labels");
    let rows: Vec<[bool; NUM_LABELS]> = (0..cfg.items)
        .map(|_| loop {
            let r: [bool; NUM_LABELS] = std::array::from_fn(|l| label_rng.random_bool(cfg.prevalence[l]));
            if r.iter().any(|&b| b) {
                break r;
            }
        })
        .collect();
    // Orthogonal centres c_l = (separation·σ/√2)·e_l are pairwise separation·σ apart.
    let scale = cfg.separation * cfg.sigma / std::f64::consts::SQRT_2;
    let mut noise_rng = root.substream("planted_noise");
    let x = DenseMatrix::from_fn(cfg.items, cfg.dim, |i, j| {
        let centre = if j < NUM_LABELS && rows[i][j] { scale } else { 0.0 };
        centre + cfg.sigma * standard_normal::<f64>(&mut noise_rng)
    });
    let table = PanelTable::new(
        (0..cfg.items).map(|i| format!("p{i}")).collect(),
        x,
        LabelMatrix::new(rows),
        vec![Split::Unassigned; cfg.items],
    )?;
    assign_split(&table, cfg.test_fraction, &mut root.substream("planted_split"))
}
