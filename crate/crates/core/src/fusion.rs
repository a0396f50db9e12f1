//! Multimodal panel representations: mean fusion of normalised image/text
//! vectors, chunk averaging, product-of-experts Gaussian fusion, and the two
//! contrastive objectives used to align image and text encoders.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{GemiError, Result};
use crate::ingest::{self, GaussianTable};
use crate::numerics::{dot, l2_normalize, l2_normalize_rows, DenseMatrix, NORMALIZE_EPS};
use crate::real::Real;
use crate::Matrix;

/// Variance bounds applied when converting log-variances.
pub const MIN_VARIANCE: f64 = 1e-10;
pub const MAX_VARIANCE: f64 = 1e10;

/// Diagonal Gaussian `N(mean, diag(variance))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior<T> {
    mean: Vec<T>,
    variance: Vec<T>,
}

impl<T: Real> GaussianPosterior<T> {
    pub fn new(mean: Vec<T>, variance: Vec<T>) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(GemiError::shape("GaussianPosterior::new", mean.len(), variance.len()));
        }
        if let Some(v) = variance.iter().find(|v| !(v.is_finite() && **v > T::zero())) {
            return Err(GemiError::Numeric(format!("variance must be positive and finite, got {v}")));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(GemiError::Numeric("non-finite mean".into()));
        }
        Ok(Self { mean, variance })
    }

    /// From a log-variance vector; variances are clamped to
    /// `[MIN_VARIANCE, MAX_VARIANCE]`.
    pub fn from_log_variance(mean: Vec<T>, log_var: &[T]) -> Result<Self> {
        let lo = T::lit(MIN_VARIANCE);
        let hi = T::lit(MAX_VARIANCE);
        let variance = log_var.iter().map(|&lv| lv.exp().max(lo).min(hi)).collect();
        Self::new(mean, variance)
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn variance(&self) -> &[T] {
        &self.variance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn check_dims<T>(a: &[T], b: &[T], op: &'static str) -> Result<()> {
    if a.len() != b.len() {
        return Err(GemiError::shape(op, a.len(), b.len()));
    }
    Ok(())
}

/// `½(x̂ + ŷ)` with both inputs ℓ2-normalised first.
pub fn mean_fuse<T: Real>(x: &[T], y: &[T]) -> Result<Vec<T>> {
    check_dims(x, y, "mean_fuse")?;
    let eps = T::lit(NORMALIZE_EPS);
    let half = T::lit(0.5);
    Ok(l2_normalize(x, eps)
        .into_iter()
        .zip(l2_normalize(y, eps))
        .map(|(a, b)| half * (a + b))
        .collect())
}

/// Arithmetic mean of chunk embeddings.
pub fn chunk_average<T: Real>(chunks: &[Vec<T>]) -> Result<Vec<T>> {
    let first = chunks
        .first()
        .ok_or_else(|| GemiError::InvalidArgument("chunk_average needs at least one chunk".into()))?;
    let mut acc = vec![T::zero(); first.len()];
    for c in chunks {
        check_dims(first, c, "chunk_average")?;
        acc.iter_mut().zip(c).for_each(|(a, &v)| *a += v);
    }
    let n = T::count(chunks.len());
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Product of diagonal Gaussian experts: precisions add, and the mean is the
/// precision-weighted average of the expert means.
pub fn poe_fuse<T: Real>(experts: &[GaussianPosterior<T>]) -> Result<GaussianPosterior<T>> {
    let first = experts
        .first()
        .ok_or_else(|| GemiError::InvalidArgument("poe_fuse needs at least one expert".into()))?;
    let d = first.dim();
    let mut precision = vec![T::zero(); d];
    let mut weighted = vec![T::zero(); d];
    for e in experts {
        if e.dim() != d {
            return Err(GemiError::shape("poe_fuse", d, e.dim()));
        }
        for k in 0..d {
            let lam = e.variance[k].recip();
            precision[k] += lam;
            weighted[k] += lam * e.mean[k];
        }
    }
    let variance: Vec<T> = precision.iter().map(|p| p.recip()).collect();
    let mean = weighted.iter().zip(&variance).map(|(&w, &v)| w * v).collect();
    GaussianPosterior::new(mean, variance)
}

/// Row-aligned image/text embedding batch. Rows are ℓ2-normalised on
/// construction.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch<T: Real> {
    pub image: DenseMatrix<T>,
    pub text: DenseMatrix<T>,
    pub temperature: T,
    pub bias: T,
}

impl<T: Real> ContrastiveBatch<T> {
    pub fn new(image: &DenseMatrix<T>, text: &DenseMatrix<T>, temperature: T, bias: T) -> Result<Self> {
        if image.shape() != text.shape() {
            return Err(GemiError::shape(
                "ContrastiveBatch::new",
                format!("{:?}", image.shape()),
                format!("{:?}", text.shape()),
            ));
        }
        if image.rows() == 0 {
            return Err(GemiError::InvalidArgument("empty contrastive batch".into()));
        }
        if !(temperature > T::zero()) {
            return Err(GemiError::InvalidArgument("temperature must be > 0".into()));
        }
        let eps = T::lit(NORMALIZE_EPS);
        Ok(Self {
            image: l2_normalize_rows(image, eps),
            text: l2_normalize_rows(text, eps),
            temperature,
            bias,
        })
    }

    pub fn len(&self) -> usize {
        self.image.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `t · xᵢᵀyⱼ`, without bias.
    fn scaled_similarities(&self) -> DenseMatrix<T> {
        let b = self.len();
        DenseMatrix::from_fn(b, b, |i, j| self.temperature * dot(self.image.row(i), self.text.row(j)))
    }
}

fn log_sum_exp<T: Real>(vals: impl Iterator<Item = T> + Clone) -> T {
    let m = vals.clone().fold(T::neg_infinity(), T::max);
    m + vals.map(|v| (v - m).exp()).sum::<T>().ln()
}

/// Symmetric softmax contrastive loss:
/// `−(1/2B) Σᵢ (log p^{I→T}_{ii} + log p^{T→I}_{ii})`.
pub fn clip_softmax_loss<T: Real>(batch: &ContrastiveBatch<T>) -> T {
    let logits = batch.scaled_similarities();
    let b = batch.len();
    let mut total = T::zero();
    for i in 0..b {
        let row_lse = log_sum_exp((0..b).map(|k| logits.get(i, k)));
        let col_lse = log_sum_exp((0..b).map(|k| logits.get(k, i)));
        total += (row_lse - logits.get(i, i)) + (col_lse - logits.get(i, i));
    }
    total / T::count(2 * b)
}

/// `−log σ(x)` computed without overflow.
#[inline]
pub(crate) fn neg_log_sigmoid<T: Real>(x: T) -> T {
    softplus(-x)
}

/// `log(1 + eˣ)` computed without overflow.
#[inline]
pub(crate) fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        (T::one() + (-x).exp()).recip()
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Pairwise sigmoid contrastive loss:
/// `−(1/B) Σᵢ Σⱼ log σ(zᵢⱼ (t·xᵢᵀyⱼ + b))`, `zᵢⱼ = +1` iff `i = j`.
pub fn sigclip_loss<T: Real>(batch: &ContrastiveBatch<T>) -> T {
    let logits = batch.scaled_similarities();
    let b = batch.len();
    let mut total = T::zero();
    for i in 0..b {
        for j in 0..b {
            let l = logits.get(i, j) + batch.bias;
            let z = if i == j { l } else { -l };
            total += neg_log_sigmoid(z);
        }
    }
    total / T::count(b)
}

/// How the per-panel representation is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// Rows of the embeddings file, unchanged.
    #[default]
    Precomputed,
    /// `mean_fuse` of separate image and text embedding files.
    Mean,
    /// `chunk_average` over several embedding files, one per text chunk.
    Chunks,
    /// Posterior mean of the product of image and text Gaussian experts.
    Poe,
}

/// File locations for the non-default feature modes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub mode: FeatureMode,
    pub image: Option<PathBuf>,
    pub text: Option<PathBuf>,
    pub chunks: Vec<PathBuf>,
    pub gaussians_image: Option<PathBuf>,
    pub gaussians_text: Option<PathBuf>,
}

/// Per-modality inputs already aligned to the panel order.
#[derive(Debug, Clone, Default)]
pub struct FeatureSources {
    pub precomputed: Option<Matrix>,
    pub image: Option<Matrix>,
    pub text: Option<Matrix>,
    pub chunks: Vec<Matrix>,
    pub gaussians_image: Option<GaussianTable>,
    pub gaussians_text: Option<GaussianTable>,
}

impl FeatureSources {
    /// Loads whatever `config` needs for its mode, aligned to `ids`.
    pub fn load(config: &FeatureConfig, ids: &[String], precomputed: Option<Matrix>) -> Result<Self> {
        let need = |p: &Option<PathBuf>, what: &str| {
            p.clone().ok_or_else(|| GemiError::Config {
                path: format!("features.{what}"),
                msg: format!("required for features.mode = {:?}", config.mode).to_lowercase(),
            })
        };
        let mut s = FeatureSources {
            precomputed,
            ..Default::default()
        };
        match config.mode {
            FeatureMode::Precomputed => {}
            FeatureMode::Mean => {
                s.image = Some(ingest::load_aligned_embeddings(need(&config.image, "image")?, ids)?);
                s.text = Some(ingest::load_aligned_embeddings(need(&config.text, "text")?, ids)?);
            }
            FeatureMode::Chunks => {
                for p in &config.chunks {
                    s.chunks.push(ingest::load_aligned_embeddings(p, ids)?);
                }
            }
            FeatureMode::Poe => {
                s.gaussians_image = Some(ingest::load_gaussians(need(&config.gaussians_image, "gaussians_image")?, ids)?);
                s.gaussians_text = Some(ingest::load_gaussians(need(&config.gaussians_text, "gaussians_text")?, ids)?);
            }
        }
        Ok(s)
    }
}

/// Builds one representation row per panel for the selected mode.
pub fn build_panel_features(mode: FeatureMode, sources: &FeatureSources) -> Result<Matrix> {
    let missing = |what: &str| GemiError::Config {
        path: format!("features.{what}"),
        msg: "modality file missing for the selected mode".into(),
    };
    match mode {
        FeatureMode::Precomputed => sources.precomputed.clone().ok_or_else(|| missing("embeddings")),
        FeatureMode::Mean => {
            let img = sources.image.as_ref().ok_or_else(|| missing("image"))?;
            let txt = sources.text.as_ref().ok_or_else(|| missing("text"))?;
            if img.shape() != txt.shape() {
                return Err(GemiError::shape(
                    "build_panel_features",
                    format!("{:?}", img.shape()),
                    format!("{:?}", txt.shape()),
                ));
            }
            let rows = (0..img.rows())
                .map(|i| mean_fuse(img.row(i), txt.row(i)))
                .collect::<Result<Vec<_>>>()?;
            DenseMatrix::from_rows(&rows)
        }
        FeatureMode::Chunks => {
            if sources.chunks.is_empty() {
                return Err(missing("chunks"));
            }
            let n = sources.chunks[0].rows();
            let rows = (0..n)
                .map(|i| {
                    let parts: Vec<Vec<f64>> = sources
                        .chunks
                        .iter()
                        .map(|c| {
                            if c.rows() != n {
                                Err(GemiError::shape("build_panel_features", n, c.rows()))
                            } else {
                                Ok(c.row(i).to_vec())
                            }
                        })
                        .collect::<Result<_>>()?;
                    chunk_average(&parts)
                })
                .collect::<Result<Vec<_>>>()?;
            DenseMatrix::from_rows(&rows)
        }
        FeatureMode::Poe => {
            let img = sources.gaussians_image.as_ref().ok_or_else(|| missing("gaussians_image"))?;
            let txt = sources.gaussians_text.as_ref().ok_or_else(|| missing("gaussians_text"))?;
            if img.means.shape() != txt.means.shape() {
                return Err(GemiError::shape(
                    "build_panel_features",
                    format!("{:?}", img.means.shape()),
                    format!("{:?}", txt.means.shape()),
                ));
            }
            let rows = (0..img.means.rows())
                .map(|i| {
                    let a = GaussianPosterior::from_log_variance(img.means.row(i).to_vec(), img.log_vars.row(i))?;
                    let b = GaussianPosterior::from_log_variance(txt.means.row(i).to_vec(), txt.log_vars.row(i))?;
                    Ok(poe_fuse(&[a, b])?.mean)
                })
                .collect::<Result<Vec<_>>>()?;
            DenseMatrix::from_rows(&rows)
        }
    }
}
