//! Training objectives and their gradients with respect to logits or
//! posterior parameters.

use serde::{Deserialize, Serialize};

use crate::error::{GemiError, Result};
use crate::fusion::{sigmoid, softplus};
use crate::graph::ItemGraph;
use crate::ingest::LabelMatrix;
use crate::models::ModelKind;
use crate::numerics::DenseMatrix;
use crate::real::Real;

/// Bounds applied to per-label positive weights.
pub const POS_WEIGHT_MIN: f64 = 1e-3;
pub const POS_WEIGHT_MAX: f64 = 1e3;

/// A scalar loss together with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T: Real> {
    pub value: T,
    pub grad: DenseMatrix<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupervisedLoss {
    Wbce,
    Focal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub kind: SupervisedLoss,
    pub alpha: f64,
    pub gamma: f64,
    /// Explicit per-label weights; computed from the training labels when absent.
    pub pos_weights: Option<Vec<f64>>,
    pub lambda_sup: f64,
    pub lambda_ssl: f64,
    pub beta_max: f64,
    /// Fraction of the epochs over which the KL weight ramps up.
    pub kl_ramp_fraction: f64,
    pub clip_norm: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: SupervisedLoss::Focal,
            alpha: 0.25,
            gamma: 2.0,
            pos_weights: None,
            lambda_sup: 0.6,
            lambda_ssl: 0.6,
            beta_max: 1.0,
            kl_ramp_fraction: 0.5,
            clip_norm: 2.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(GemiError::Validation(format!("loss.alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !(self.gamma >= 0.0) {
            return Err(GemiError::Validation(format!("loss.gamma must be >= 0, got {}", self.gamma)));
        }
        if let Some(w) = &self.pos_weights {
            if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(GemiError::Validation("loss.pos_weights must be positive".into()));
            }
        }
        if !(self.clip_norm > 0.0) {
            return Err(GemiError::Validation("loss.clip_norm must be > 0".into()));
        }
        if !(self.kl_ramp_fraction > 0.0 && self.kl_ramp_fraction <= 1.0) {
            return Err(GemiError::Validation("loss.kl_ramp_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// `N_ℓ / P_ℓ` over `rows`, clamped to `[POS_WEIGHT_MIN, POS_WEIGHT_MAX]`.
pub fn positive_weights<T: Real>(labels: &LabelMatrix, rows: &[usize]) -> Vec<T> {
    (0..labels.cols())
        .map(|l| {
            let p = labels.positives(rows, l);
            let n = rows.len() - p;
            let w = if p == 0 {
                POS_WEIGHT_MAX
            } else {
                (n as f64 / p as f64).clamp(POS_WEIGHT_MIN, POS_WEIGHT_MAX)
            };
            T::lit(w)
        })
        .collect()
}

fn check_supervised<T: Real>(logits: &DenseMatrix<T>, labels: &LabelMatrix, w: &[T], mask: &[usize]) -> Result<()> {
    if mask.is_empty() {
        return Err(GemiError::InvalidArgument("loss mask selects no rows".into()));
    }
    if logits.rows() != labels.rows() || logits.cols() != labels.cols() {
        return Err(GemiError::shape("supervised loss", labels.rows() * labels.cols(), logits.rows() * logits.cols()));
    }
    if w.len() != labels.cols() {
        return Err(GemiError::shape("supervised loss weights", labels.cols(), w.len()));
    }
    if let Some(&r) = mask.iter().find(|&&r| r >= logits.rows()) {
        return Err(GemiError::InvalidArgument(format!("mask row {r} out of range")));
    }
    Ok(())
}

/// `w·y·softplus(−z) + (1−y)·softplus(z)` and its derivative in `z`.
#[inline]
fn bce_term<T: Real>(z: T, y: bool, w: T) -> (T, T) {
    let s = sigmoid(z);
    if y {
        (w * softplus(-z), w * (s - T::one()))
    } else {
        (softplus(z), s)
    }
}

/// Mean over masked rows of the summed per-label weighted BCE-with-logits.
pub fn weighted_bce<T: Real>(logits: &DenseMatrix<T>, labels: &LabelMatrix, w: &[T], mask: &[usize]) -> Result<LossGrad<T>> {
    check_supervised(logits, labels, w, mask)?;
    let scale = T::count(mask.len()).recip();
    let mut grad = DenseMatrix::zeros(logits.rows(), logits.cols());
    let mut total = T::zero();
    for &i in mask {
        for l in 0..logits.cols() {
            let (v, g) = bce_term(logits.get(i, l), labels.get(i, l), w[l]);
            total += v;
            grad.set(i, l, g * scale);
        }
    }
    Ok(LossGrad { value: total * scale, grad })
}

/// Focal term `α_t (1 − p_t)^γ · BCE(z, y; w)` and its derivative in `z`.
fn focal_term<T: Real>(z: T, y: bool, w: T, alpha: T, gamma: T) -> (T, T) {
    let s = sigmoid(z);
    let sc = sigmoid(-z);
    let (bce, dbce) = bce_term(z, y, w);
    // m = (1 - p_t)^γ with dm/dz written without a γ−1 power.
    let (a, m, dm) = if y {
        (alpha, sc.powf(gamma), -gamma * s * sc.powf(gamma))
    } else {
        (T::one() - alpha, s.powf(gamma), gamma * s.powf(gamma) * sc)
    };
    (a * m * bce, a * (dm * bce + m * dbce))
}

pub fn focal_bce<T: Real>(
    logits: &DenseMatrix<T>,
    labels: &LabelMatrix,
    w: &[T],
    alpha: T,
    gamma: T,
    mask: &[usize],
) -> Result<LossGrad<T>> {
    check_supervised(logits, labels, w, mask)?;
    let scale = T::count(mask.len()).recip();
    let mut grad = DenseMatrix::zeros(logits.rows(), logits.cols());
    let mut total = T::zero();
    for &i in mask {
        for l in 0..logits.cols() {
            let (v, g) = focal_term(logits.get(i, l), labels.get(i, l), w[l], alpha, gamma);
            total += v;
            grad.set(i, l, g * scale);
        }
    }
    Ok(LossGrad { value: total * scale, grad })
}

/// Dispatches on the configured supervised loss.
pub fn supervised_loss<T: Real>(
    cfg: &LossConfig,
    logits: &DenseMatrix<T>,
    labels: &LabelMatrix,
    w: &[T],
    mask: &[usize],
) -> Result<LossGrad<T>> {
    match cfg.kind {
        SupervisedLoss::Wbce => weighted_bce(logits, labels, w, mask),
        SupervisedLoss::Focal => focal_bce(logits, labels, w, T::lit(cfg.alpha), T::lit(cfg.gamma), mask),
    }
}

/// Reconstruction targets `A + I` in adjacency-list form.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconTargets {
    neighbors: Vec<Vec<usize>>,
    positives: usize,
}

impl ReconTargets {
    pub fn from_graph(g: &ItemGraph) -> Self {
        let mut neighbors: Vec<Vec<usize>> = (0..g.n()).map(|i| g.neighbors(i)).collect();
        for (i, nb) in neighbors.iter_mut().enumerate() {
            nb.push(i);
            nb.sort_unstable();
        }
        let positives = neighbors.iter().map(Vec::len).sum();
        Self { neighbors, positives }
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    /// `|E⁺|`, counting both directions and the diagonal.
    pub fn positives(&self) -> usize {
        self.positives
    }

    /// `(n² − |E⁺|) / |E⁺|`.
    pub fn pos_weight<T: Real>(&self) -> Result<T> {
        if self.positives == 0 {
            return Err(GemiError::InvalidArgument("reconstruction targets have no positive entries".into()));
        }
        let n2 = self.n() * self.n();
        Ok(T::count(n2 - self.positives) / T::count(self.positives))
    }

    fn dense_row<T: Real>(&self, i: usize, out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
        for &j in &self.neighbors[i] {
            out[j] = T::one();
        }
    }
}

/// Mean weighted BCE over all `n²` entries given probabilities; positives are
/// weighted by `pos_weight`. Probabilities are clamped away from 0 and 1 by
/// the smallest positive normal value before taking logs.
pub fn recon_loss<T: Real>(targets: &DenseMatrix<T>, probs: &DenseMatrix<T>, pos_weight: T) -> Result<T> {
    if targets.shape() != probs.shape() {
        return Err(GemiError::shape("recon_loss", targets.rows() * targets.cols(), probs.rows() * probs.cols()));
    }
    if !targets.as_slice().iter().any(|t| *t > T::zero()) {
        return Err(GemiError::InvalidArgument("reconstruction targets have no positive entries".into()));
    }
    let tiny = T::min_positive_value();
    let mut total = T::zero();
    for (&t, &p) in targets.as_slice().iter().zip(probs.as_slice()) {
        let p = p.max(tiny).min(T::one() - T::epsilon() * T::lit(0.5));
        let q = (T::one() - p).max(tiny);
        total -= pos_weight * t * p.ln() + (T::one() - t) * q.ln();
    }
    Ok(total / T::count(targets.as_slice().len()))
}

/// Reconstruction loss from latents, `σ(ZZᵀ)` decoded implicitly, with the
/// gradient with respect to `Z`.
pub fn recon_loss_latent<T: Real>(z: &DenseMatrix<T>, targets: &ReconTargets) -> Result<LossGrad<T>> {
    let n = z.rows();
    if targets.n() != n {
        return Err(GemiError::shape("recon_loss_latent", targets.n(), n));
    }
    let pw = targets.pos_weight::<T>()?;
    let inv_n2 = T::count(n * n).recip();
    let mut total = T::zero();
    let mut g = DenseMatrix::zeros(n, n);
    let mut t = vec![T::zero(); n];
    for i in 0..n {
        targets.dense_row(i, &mut t);
        let zi = z.row(i);
        for j in 0..n {
            let s: T = zi.iter().zip(z.row(j)).map(|(&a, &b)| a * b).sum();
            let (v, d) = bce_term(s, t[j] > T::zero(), pw);
            total += v;
            g.set(i, j, d * inv_n2);
        }
    }
    // d/dZ of Σ f(zᵢ·zⱼ) is (G + Gᵀ) Z; G is symmetric here.
    let mut grad = g.matmul(z)?;
    grad.scale_in_place(T::lit(2.0));
    Ok(LossGrad { value: total * inv_n2, grad })
}

/// KL divergence of each node posterior from `N(0, I)`, averaged over nodes.
/// Gradients are returned for `mu` and `log_sigma`.
pub fn kl_standard_normal<T: Real>(mu: &DenseMatrix<T>, log_sigma: &DenseMatrix<T>) -> Result<(T, DenseMatrix<T>, DenseMatrix<T>)> {
    if mu.shape() != log_sigma.shape() {
        return Err(GemiError::shape("kl_standard_normal", mu.rows() * mu.cols(), log_sigma.rows() * log_sigma.cols()));
    }
    if mu.rows() == 0 {
        return Ok((T::zero(), mu.clone(), log_sigma.clone()));
    }
    let inv_n = T::count(mu.rows()).recip();
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let mut total = T::zero();
    for (&m, &ls) in mu.as_slice().iter().zip(log_sigma.as_slice()) {
        total += half * (m * m + (two * ls).exp() - T::one() - two * ls);
    }
    let d_mu = mu.map(|m| m * inv_n);
    let d_ls = log_sigma.map(|ls| ((two * ls).exp() - T::one()) * inv_n);
    Ok((total * inv_n, d_mu, d_ls))
}

/// `β = β_max · min(1, epoch / ramp_epochs)`.
pub fn kl_anneal(epoch: usize, ramp_epochs: usize, beta_max: f64) -> Result<f64> {
    if ramp_epochs == 0 {
        return Err(GemiError::InvalidArgument("KL ramp needs at least one epoch".into()));
    }
    Ok(beta_max * (epoch as f64 / ramp_epochs as f64).min(1.0))
}

/// Component losses for one objective evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub sup: Option<f64>,
    pub rec: Option<f64>,
    pub kl: Option<f64>,
}

/// Weights multiplying each part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub lambda_sup: f64,
    pub lambda_ssl: f64,
    pub beta: f64,
}

impl ObjectiveWeights {
    pub fn from_config(cfg: &LossConfig, beta: f64) -> Self {
        Self {
            lambda_sup: cfg.lambda_sup,
            lambda_ssl: cfg.lambda_ssl,
            beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    pub total: f64,
    pub sup: f64,
    pub rec: Option<f64>,
    pub kl: Option<f64>,
    pub beta: Option<f64>,
}

/// Combines parts per backbone: `L_sup`; `L_rec + λ_sup L_sup`; or
/// `L_rec + β L_KL + λ_ssl L_sup`.
pub fn joint_objective(kind: ModelKind, parts: LossParts, w: ObjectiveWeights) -> Result<ObjectiveReport> {
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| GemiError::InvalidArgument(format!("{kind} objective is missing the {name} term")));
    let sup = need(parts.sup, "supervised")?;
    Ok(match kind {
        ModelKind::Gcn => ObjectiveReport { total: sup, sup, rec: None, kl: None, beta: None },
        ModelKind::Gae => {
            let rec = need(parts.rec, "reconstruction")?;
            ObjectiveReport { total: rec + w.lambda_sup * sup, sup, rec: Some(rec), kl: None, beta: None }
        }
        ModelKind::Vgae => {
            let rec = need(parts.rec, "reconstruction")?;
            let kl = need(parts.kl, "KL")?;
            ObjectiveReport {
                total: (rec + w.beta * kl) + w.lambda_ssl * sup,
                sup,
                rec: Some(rec),
                kl: Some(kl),
                beta: Some(w.beta),
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeKind;
    use crate::numerics::finite_difference_gradient;
    use std::f64::consts::LN_2;

    fn labels(rows: &[[u8; 3]]) -> LabelMatrix {
        LabelMatrix::new(rows.iter().map(|r| [r[0] == 1, r[1] == 1, r[2] == 1]).collect())
    }

    fn m(rows: &[[f64; 3]]) -> DenseMatrix<f64> {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn positive_weight_examples() {
        let mut rows = vec![[1, 1, 0]; 2];
        rows.extend(vec![[0, 1, 0]; 3]);
        rows.extend(vec![[0, 0, 0]; 5]);
        let y = labels(&rows);
        let w: Vec<f64> = positive_weights(&y, &(0..10).collect::<Vec<_>>());
        assert_eq!(w, vec![4.0, 1.0, 1e3]);
        let all: Vec<f64> = positive_weights(&labels(&[[1, 1, 1]; 4]), &[0, 1, 2, 3]);
        assert_eq!(all, vec![1e-3; 3]);
    }

    #[test]
    fn wbce_examples() {
        let y = labels(&[[1, 0, 0]]);
        let z = m(&[[0.0, -800.0, -800.0]]);
        let r = weighted_bce(&z, &y, &[1.0, 1.0, 1.0], &[0]).unwrap();
        assert!((r.value - LN_2).abs() < 1e-15);
        let r = weighted_bce(&z, &y, &[4.0, 1.0, 1.0], &[0]).unwrap();
        assert!((r.value - 4.0 * LN_2).abs() < 1e-15);
        assert!(weighted_bce(&z, &y, &[1.0; 3], &[]).is_err());
    }

    #[test]
    fn focal_examples() {
        let y = labels(&[[1, 0, 0]]);
        let z = m(&[[0.0, -800.0, -800.0]]);
        let r = focal_bce(&z, &y, &[1.0; 3], 0.25, 2.0, &[0]).unwrap();
        assert!((r.value - 0.25 * 0.25 * LN_2).abs() < 1e-15);
        let sure = m(&[[800.0, -800.0, -800.0]]);
        let r = focal_bce(&sure, &y, &[1e3; 3], 0.25, 2.0, &[0]).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn focal_degenerates_to_half_wbce() {
        let y = labels(&[[1, 0, 1], [0, 1, 0]]);
        let z = m(&[[0.3, -1.2, 2.5], [-0.7, 0.1, 4.0]]);
        let w = [2.0, 0.5, 3.0];
        let f = focal_bce(&z, &y, &w, 0.5, 0.0, &[0, 1]).unwrap();
        let b = weighted_bce(&z, &y, &w, &[0, 1]).unwrap();
        assert!((f.value - 0.5 * b.value).abs() < 1e-12);
    }

    #[test]
    fn supervised_gradients_match_differences() {
        let y = labels(&[[1, 0, 1], [0, 1, 0], [1, 1, 0]]);
        let z = m(&[[0.3, -1.2, 2.5], [-0.7, 0.1, 4.0], [1.1, -2.2, 0.05]]);
        let w = [2.0, 0.5, 3.0];
        let mask = [0, 2];
        let check = |f: &dyn Fn(&DenseMatrix<f64>) -> LossGrad<f64>| {
            let analytic = f(&z).grad;
            let fd = finite_difference_gradient(
                |v| f(&DenseMatrix::new(3, 3, v.to_vec()).unwrap()).value,
                z.as_slice(),
                1e-6,
            )
            .unwrap();
            for (a, n) in analytic.as_slice().iter().zip(&fd) {
                assert!((a - n).abs() < 1e-8, "{a} vs {n}");
            }
        };
        check(&|z| weighted_bce(z, &y, &w, &mask).unwrap());
        check(&|z| focal_bce(z, &y, &w, 0.25, 2.0, &mask).unwrap());
        check(&|z| focal_bce(z, &y, &w, 0.7, 0.5, &mask).unwrap());
    }

    #[test]
    fn masked_rows_do_not_matter() {
        let y = labels(&[[1, 0, 1], [0, 1, 0]]);
        let flipped = labels(&[[1, 0, 1], [1, 0, 1]]);
        let z = m(&[[0.3, -1.2, 2.5], [-0.7, 0.1, 4.0]]);
        let a = focal_bce(&z, &y, &[1.0; 3], 0.25, 2.0, &[0]).unwrap();
        let b = focal_bce(&z, &flipped, &[1.0; 3], 0.25, 2.0, &[0]).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn recon_prob_examples() {
        let t = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(recon_loss(&t, &t, 1.0).unwrap() < 1e-12);
        let half = DenseMatrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap();
        assert!((recon_loss(&t, &half, 1.0).unwrap() - LN_2).abs() < 1e-15);
        let only_pos = |w: f64| recon_loss(&t, &half, w).unwrap() - 0.5 * LN_2;
        assert!((only_pos(2.0) - 2.0 * only_pos(1.0)).abs() < 1e-15);
        assert!(recon_loss(&DenseMatrix::zeros(2, 2), &half, 1.0).is_err());
    }

    #[test]
    fn recon_latent_matches_dense_form_and_differences() {
        let mut g = ItemGraph::empty(4);
        g.add_edge(0, 1, EdgeKind::Knn);
        g.add_edge(2, 3, EdgeKind::Knn);
        let tg = ReconTargets::from_graph(&g);
        assert_eq!(tg.positives(), 8);
        assert_eq!(tg.pos_weight::<f64>().unwrap(), 1.0);
        let z: DenseMatrix<f64> = DenseMatrix::from_rows(&[[0.2, -0.4], [0.9, 0.1], [-0.3, 0.5], [0.0, 0.7]]).unwrap();
        let r = recon_loss_latent(&z, &tg).unwrap();

        let probs = z.matmul_nt(&z).unwrap().map(sigmoid);
        let mut dense = DenseMatrix::identity(4);
        for (i, j, _) in g.edges() {
            dense.set(i, j, 1.0);
            dense.set(j, i, 1.0);
        }
        assert!((recon_loss(&dense, &probs, 1.0).unwrap() - r.value).abs() < 1e-12);

        let fd = finite_difference_gradient(
            |v: &[f64]| recon_loss_latent(&DenseMatrix::new(4, 2, v.to_vec()).unwrap(), &tg).unwrap().value,
            z.as_slice(),
            1e-6,
        )
        .unwrap();
        for (a, n) in r.grad.as_slice().iter().zip(&fd) {
            assert!((a - n).abs() < 1e-9);
        }
    }

    #[test]
    fn kl_examples() {
        let zero = DenseMatrix::<f64>::zeros(3, 2);
        assert_eq!(kl_standard_normal(&zero, &zero).unwrap().0, 0.0);
        let one = DenseMatrix::from_rows(&[[1.0]]).unwrap();
        assert_eq!(kl_standard_normal(&one, &DenseMatrix::zeros(1, 1)).unwrap().0, 0.5);
    }

    #[test]
    fn anneal_examples() {
        assert_eq!(kl_anneal(0, 10, 1.0).unwrap(), 0.0);
        assert_eq!(kl_anneal(10, 10, 1.0).unwrap(), 1.0);
        assert_eq!(kl_anneal(5, 10, 2.0).unwrap(), 1.0);
        assert_eq!(kl_anneal(50, 10, 1.0).unwrap(), 1.0);
        assert!(kl_anneal(1, 0, 1.0).is_err());
    }

    #[test]
    fn joint_examples() {
        let w = ObjectiveWeights { lambda_sup: 0.6, lambda_ssl: 0.6, beta: 0.0 };
        let gae = joint_objective(ModelKind::Gae, LossParts { sup: Some(0.5), rec: Some(0.4), kl: None }, w).unwrap();
        assert!((gae.total - 0.7).abs() < 1e-15);
        let only_rec = joint_objective(
            ModelKind::Gae,
            LossParts { sup: Some(0.5), rec: Some(0.4), kl: None },
            ObjectiveWeights { lambda_sup: 0.0, ..w },
        )
        .unwrap();
        assert_eq!(only_rec.total, 0.4);
        let vgae = joint_objective(ModelKind::Vgae, LossParts { sup: Some(0.5), rec: Some(0.4), kl: Some(3.0) }, w).unwrap();
        assert!((vgae.total - gae.total).abs() < 1e-12);
        assert!(joint_objective(ModelKind::Vgae, LossParts { sup: Some(0.5), rec: Some(0.4), kl: None }, w).is_err());
        assert_eq!(
            joint_objective(ModelKind::Gcn, LossParts { sup: Some(0.3), ..Default::default() }, w).unwrap().total,
            0.3
        );
    }
}
