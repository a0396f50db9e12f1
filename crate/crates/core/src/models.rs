//! The three graph backbones and their analytic gradients.
//!
//! All share a first GCN layer `H = ReLU(P · X̃ · W0)` where `P` is the
//! propagation operator (usually the normalised adjacency) and `X̃` the
//! input after dropout. The backbones differ in what sits on top of `P·H̃`:
//!
//! * GCN: class logits `P H̃ W1`.
//! * GAE: latents `Z = P H̃ W1`, label logits `Z · head`.
//! * VGAE: `μ = P H̃ W_μ`, `log σ = clamp(P H̃ W_σ)`, `Z = μ + σ ⊙ ε`,
//!   label logits `Z · head`.

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{GemiError, Result};
use crate::fusion::sigmoid;
use crate::numerics::rng::{bernoulli, standard_normal, uniform};
use crate::numerics::{DenseMatrix, SparseMatrix};
use crate::real::Real;

/// Bounds on the VGAE log standard deviation.
pub const LOG_SIGMA_BOUNDS: (f64, f64) = (-10.0, 10.0);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Gcn,
    Gae,
    Vgae,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Gcn => "gcn",
            ModelKind::Gae => "gae",
            ModelKind::Vgae => "vgae",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub input: usize,
    pub hidden: usize,
    /// Ignored by the GCN.
    pub latent: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct GcnParams<T: Real> {
    pub w0: DenseMatrix<T>,
    pub w1: DenseMatrix<T>,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct GaeParams<T: Real> {
    pub w0: DenseMatrix<T>,
    pub w1: DenseMatrix<T>,
    pub head: DenseMatrix<T>,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct VgaeParams<T: Real> {
    pub w0: DenseMatrix<T>,
    pub w_mu: DenseMatrix<T>,
    pub w_sigma: DenseMatrix<T>,
    pub head: DenseMatrix<T>,
    pub dropout: f64,
    pub log_sigma_bounds: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub enum ModelParams<T: Real> {
    Gcn(GcnParams<T>),
    Gae(GaeParams<T>),
    Vgae(VgaeParams<T>),
}

/// Glorot-uniform `rows × cols` matrix.
pub fn glorot_uniform<T: Real>(rows: usize, cols: usize, rng: &mut impl RngCore) -> DenseMatrix<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| uniform(rng, -limit, limit))
}

fn check_dropout(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(GemiError::InvalidArgument(format!("dropout must be in [0, 1), got {p}")));
    }
    Ok(())
}

impl<T: Real> ModelParams<T> {
    pub fn init(kind: ModelKind, dims: ModelDims, dropout: f64, rng: &mut impl RngCore) -> Result<Self> {
        check_dropout(dropout)?;
        if dims.input == 0 || dims.hidden == 0 || dims.classes == 0 || (kind != ModelKind::Gcn && dims.latent == 0) {
            return Err(GemiError::InvalidArgument(format!("model dimensions must be positive: {dims:?}")));
        }
        let ModelDims { input: d, hidden: h, latent: z, classes: c } = dims;
        Ok(match kind {
            ModelKind::Gcn => ModelParams::Gcn(GcnParams {
                w0: glorot_uniform(d, h, rng),
                w1: glorot_uniform(h, c, rng),
                dropout,
            }),
            ModelKind::Gae => ModelParams::Gae(GaeParams {
                w0: glorot_uniform(d, h, rng),
                w1: glorot_uniform(h, z, rng),
                head: glorot_uniform(z, c, rng),
                dropout,
            }),
            ModelKind::Vgae => ModelParams::Vgae(VgaeParams {
                w0: glorot_uniform(d, h, rng),
                w_mu: glorot_uniform(h, z, rng),
                w_sigma: glorot_uniform(h, z, rng),
                head: glorot_uniform(z, c, rng),
                dropout,
                log_sigma_bounds: LOG_SIGMA_BOUNDS,
            }),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Gcn(_) => ModelKind::Gcn,
            ModelParams::Gae(_) => ModelKind::Gae,
            ModelParams::Vgae(_) => ModelKind::Vgae,
        }
    }

    pub fn dropout(&self) -> f64 {
        match self {
            ModelParams::Gcn(p) => p.dropout,
            ModelParams::Gae(p) => p.dropout,
            ModelParams::Vgae(p) => p.dropout,
        }
    }

    fn w0(&self) -> &DenseMatrix<T> {
        match self {
            ModelParams::Gcn(p) => &p.w0,
            ModelParams::Gae(p) => &p.w0,
            ModelParams::Vgae(p) => &p.w0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w0().rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w0().cols()
    }

    /// Width of the second-layer output (`c` for the GCN, `d_z` otherwise).
    pub fn output_dim(&self) -> usize {
        match self {
            ModelParams::Gcn(p) => p.w1.cols(),
            ModelParams::Gae(p) => p.w1.cols(),
            ModelParams::Vgae(p) => p.w_mu.cols(),
        }
    }

    /// Parameter tensors in a fixed order, matching [`Self::tensors_mut`]
    /// and the gradients from [`backward`].
    pub fn tensors(&self) -> Vec<&DenseMatrix<T>> {
        match self {
            ModelParams::Gcn(p) => vec![&p.w0, &p.w1],
            ModelParams::Gae(p) => vec![&p.w0, &p.w1, &p.head],
            ModelParams::Vgae(p) => vec![&p.w0, &p.w_mu, &p.w_sigma, &p.head],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix<T>> {
        match self {
            ModelParams::Gcn(p) => vec![&mut p.w0, &mut p.w1],
            ModelParams::Gae(p) => vec![&mut p.w0, &mut p.w1, &mut p.head],
            ModelParams::Vgae(p) => vec![&mut p.w0, &mut p.w_mu, &mut p.w_sigma, &mut p.head],
        }
    }

    pub fn tensor_names(&self) -> &'static [&'static str] {
        match self {
            ModelParams::Gcn(_) => &["w0", "w1"],
            ModelParams::Gae(_) => &["w0", "w1", "head"],
            ModelParams::Vgae(_) => &["w0", "w_mu", "w_sigma", "head"],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

/// Random quantities of one forward pass. Fixing them makes the forward
/// pass a deterministic, differentiable function of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardNoise<T: Real> {
    /// Inverted-dropout multipliers (`0` or `1 / (1 − p)`) for the input.
    pub input_mask: Option<DenseMatrix<T>>,
    /// Same for the hidden activations.
    pub hidden_mask: Option<DenseMatrix<T>>,
    /// Standard normal draws for the VGAE reparameterisation. Without
    /// them the VGAE uses `Z = μ`.
    pub eps: Option<DenseMatrix<T>>,
}

impl<T: Real> ForwardNoise<T> {
    /// Evaluation mode: no dropout, `Z = μ`.
    pub fn none() -> Self {
        Self {
            input_mask: None,
            hidden_mask: None,
            eps: None,
        }
    }

    /// Training-mode noise for `n` nodes.
    pub fn sample(params: &ModelParams<T>, n: usize, rng: &mut impl RngCore) -> Self {
        let p = params.dropout();
        let mask = |cols: usize, rng: &mut dyn RngCore| {
            (p > 0.0).then(|| dropout_mask(n, cols, p, rng))
        };
        let input_mask = mask(params.input_dim(), rng);
        let hidden_mask = mask(params.hidden_dim(), rng);
        let eps = (params.kind() == ModelKind::Vgae).then(|| gaussian_noise(n, params.output_dim(), rng));
        Self { input_mask, hidden_mask, eps }
    }
}

/// Inverted-dropout mask: each entry is `1 / (1 − p)` with probability
/// `1 − p`, else `0`.
pub fn dropout_mask<T: Real>(rows: usize, cols: usize, p: f64, mut rng: &mut dyn RngCore) -> DenseMatrix<T> {
    let keep = T::lit(1.0 / (1.0 - p));
    DenseMatrix::from_fn(rows, cols, |_, _| if bernoulli(&mut rng, p) { T::zero() } else { keep })
}

pub fn gaussian_noise<T: Real>(rows: usize, cols: usize, mut rng: &mut dyn RngCore) -> DenseMatrix<T> {
    DenseMatrix::from_fn(rows, cols, |_, _| standard_normal(&mut rng))
}

fn apply_mask<T: Real>(x: &DenseMatrix<T>, mask: Option<&DenseMatrix<T>>) -> Result<DenseMatrix<T>> {
    match mask {
        Some(m) => x.hadamard(m),
        None => Ok(x.clone()),
    }
}

/// Intermediate values of the shared first layer.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenCache<T: Real> {
    /// `P X̃`.
    pub ax: DenseMatrix<T>,
    /// `P X̃ W0` before the ReLU.
    pub pre: DenseMatrix<T>,
    /// `ReLU(pre)` before dropout.
    pub hidden: DenseMatrix<T>,
    /// `P H̃`.
    pub ah: DenseMatrix<T>,
}

fn hidden_forward<T: Real>(
    w0: &DenseMatrix<T>,
    prop: &SparseMatrix<T>,
    x: &DenseMatrix<T>,
    noise: &ForwardNoise<T>,
) -> Result<HiddenCache<T>> {
    if x.cols() != w0.rows() {
        return Err(GemiError::shape("first layer", w0.rows(), x.cols()));
    }
    if prop.n() != x.rows() {
        return Err(GemiError::shape("propagation", x.rows(), prop.n()));
    }
    let ax = prop.spmm(&apply_mask(x, noise.input_mask.as_ref())?)?;
    let pre = ax.matmul(w0)?;
    let hidden = pre.map(|v| v.max(T::zero()));
    let ah = prop.spmm(&apply_mask(&hidden, noise.hidden_mask.as_ref())?)?;
    Ok(HiddenCache { ax, pre, hidden, ah })
}

fn hidden_backward<T: Real>(
    prop: &SparseMatrix<T>,
    cache: &HiddenCache<T>,
    noise: &ForwardNoise<T>,
    d_ah: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    let d_hdrop = prop.spmm_transpose(d_ah)?;
    let d_hidden = apply_mask(&d_hdrop, noise.hidden_mask.as_ref())?;
    let d_pre = d_hidden.zip_map(&cache.pre, |g, p| if p > T::zero() { g } else { T::zero() })?;
    cache.ax.matmul_tn(&d_pre)
}

/// Two-layer GCN cache.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnCache<T: Real> {
    pub hidden: HiddenCache<T>,
}

/// `P · ReLU(P X̃ W0)~ · W1`.
pub fn gcn_forward<T: Real>(
    params: &GcnParams<T>,
    prop: &SparseMatrix<T>,
    x: &DenseMatrix<T>,
    noise: &ForwardNoise<T>,
) -> Result<(DenseMatrix<T>, GcnCache<T>)> {
    encode_gcn2(&params.w0, &params.w1, prop, x, noise)
}

/// Two-layer GCN encoder with output width `w_out.cols()`.
pub fn encode_gcn2<T: Real>(
    w0: &DenseMatrix<T>,
    w_out: &DenseMatrix<T>,
    prop: &SparseMatrix<T>,
    x: &DenseMatrix<T>,
    noise: &ForwardNoise<T>,
) -> Result<(DenseMatrix<T>, GcnCache<T>)> {
    let hidden = hidden_forward(w0, prop, x, noise)?;
    let out = hidden.ah.matmul(w_out)?;
    Ok((out, GcnCache { hidden }))
}

/// `σ(Z Zᵀ)`.
pub fn decode_adjacency<T: Real>(z: &DenseMatrix<T>) -> DenseMatrix<T> {
    z.matmul_nt(z).expect("Z Zᵀ is always conformable").map(sigmoid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VgaeCache<T: Real> {
    pub hidden: HiddenCache<T>,
    /// `P H̃ W_σ` before clamping.
    pub log_sigma_pre: DenseMatrix<T>,
}

/// Returns `(μ, log σ)` with the shared first layer.
pub fn vgae_encode<T: Real>(
    params: &VgaeParams<T>,
    prop: &SparseMatrix<T>,
    x: &DenseMatrix<T>,
    noise: &ForwardNoise<T>,
) -> Result<(DenseMatrix<T>, DenseMatrix<T>, VgaeCache<T>)> {
    let hidden = hidden_forward(&params.w0, prop, x, noise)?;
    let mu = hidden.ah.matmul(&params.w_mu)?;
    let log_sigma_pre = hidden.ah.matmul(&params.w_sigma)?;
    let (lo, hi) = (T::lit(params.log_sigma_bounds.0), T::lit(params.log_sigma_bounds.1));
    let log_sigma = log_sigma_pre.map(|v| v.max(lo).min(hi));
    Ok((mu, log_sigma, VgaeCache { hidden, log_sigma_pre }))
}

/// `Z = μ + exp(log σ) ⊙ ε` for given noise.
pub fn reparameterize_with<T: Real>(mu: &DenseMatrix<T>, log_sigma: &DenseMatrix<T>, eps: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let spread = log_sigma.zip_map(eps, |ls, e| ls.exp() * e)?;
    mu.add(&spread)
}

/// Draws `ε ~ N(0, I)` and reparameterises; returns `(Z, ε)`.
pub fn reparameterize<T: Real>(
    mu: &DenseMatrix<T>,
    log_sigma: &DenseMatrix<T>,
    rng: &mut impl RngCore,
) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
    let eps = gaussian_noise(mu.rows(), mu.cols(), rng);
    Ok((reparameterize_with(mu, log_sigma, &eps)?, eps))
}

/// Linear label head `Z · head`.
pub fn classify_head<T: Real>(z: &DenseMatrix<T>, head: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    z.matmul(head)
}

/// Output of a full forward pass, kept for [`backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Forward<T: Real> {
    pub kind: ModelKind,
    /// `n × c` label logits.
    pub logits: DenseMatrix<T>,
    /// Decoder input: `Z` for GAE/VGAE.
    pub z: Option<DenseMatrix<T>>,
    pub mu: Option<DenseMatrix<T>>,
    pub log_sigma: Option<DenseMatrix<T>>,
    pub hidden: HiddenCache<T>,
    log_sigma_pre: Option<DenseMatrix<T>>,
    noise: ForwardNoise<T>,
    fingerprint: u64,
}

impl<T: Real> Forward<T> {
    /// Node representation used for ranking: the hidden layer for the GCN,
    /// `Z` for the GAE and `μ` for the VGAE.
    pub fn latent(&self) -> &DenseMatrix<T> {
        match self.kind {
            ModelKind::Gcn => &self.hidden.hidden,
            ModelKind::Gae => self.z.as_ref().expect("GAE forward has Z"),
            ModelKind::Vgae => self.mu.as_ref().expect("VGAE forward has μ"),
        }
    }
}

/// Cheap content hash of the parameters, used to detect stale caches.
fn fingerprint<T: Real>(params: &ModelParams<T>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for t in params.tensors() {
        for v in t.as_slice() {
            h ^= v.to_f64_lossy().to_bits();
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

pub fn forward<T: Real>(
    params: &ModelParams<T>,
    prop: &SparseMatrix<T>,
    x: &DenseMatrix<T>,
    noise: ForwardNoise<T>,
) -> Result<Forward<T>> {
    let fp = fingerprint(params);
    match params {
        ModelParams::Gcn(p) => {
            let (logits, cache) = gcn_forward(p, prop, x, &noise)?;
            Ok(Forward {
                kind: ModelKind::Gcn,
                logits,
                z: None,
                mu: None,
                log_sigma: None,
                hidden: cache.hidden,
                log_sigma_pre: None,
                noise,
                fingerprint: fp,
            })
        }
        ModelParams::Gae(p) => {
            let (z, cache) = encode_gcn2(&p.w0, &p.w1, prop, x, &noise)?;
            let logits = classify_head(&z, &p.head)?;
            Ok(Forward {
                kind: ModelKind::Gae,
                logits,
                z: Some(z),
                mu: None,
                log_sigma: None,
                hidden: cache.hidden,
                log_sigma_pre: None,
                noise,
                fingerprint: fp,
            })
        }
        ModelParams::Vgae(p) => {
            let (mu, log_sigma, cache) = vgae_encode(p, prop, x, &noise)?;
            let z = match &noise.eps {
                Some(eps) => reparameterize_with(&mu, &log_sigma, eps)?,
                None => mu.clone(),
            };
            let logits = classify_head(&z, &p.head)?;
            Ok(Forward {
                kind: ModelKind::Vgae,
                logits,
                z: Some(z),
                mu: Some(mu),
                log_sigma: Some(log_sigma),
                hidden: cache.hidden,
                log_sigma_pre: Some(cache.log_sigma_pre),
                noise,
                fingerprint: fp,
            })
        }
    }
}

/// Loss gradients flowing into a forward pass. Absent terms are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Upstream<T: Real> {
    pub d_logits: DenseMatrix<T>,
    pub d_z: Option<DenseMatrix<T>>,
    pub d_mu: Option<DenseMatrix<T>>,
    pub d_log_sigma: Option<DenseMatrix<T>>,
}

impl<T: Real> Upstream<T> {
    pub fn logits_only(d_logits: DenseMatrix<T>) -> Self {
        Self { d_logits, d_z: None, d_mu: None, d_log_sigma: None }
    }
}

fn add_opt<T: Real>(base: &mut DenseMatrix<T>, extra: Option<&DenseMatrix<T>>) -> Result<()> {
    if let Some(e) = extra {
        base.add_assign(e)?;
    }
    Ok(())
}

/// Parameter gradients in [`ModelParams::tensors`] order.
pub fn backward<T: Real>(
    params: &ModelParams<T>,
    prop: &SparseMatrix<T>,
    fwd: &Forward<T>,
    up: &Upstream<T>,
) -> Result<Vec<DenseMatrix<T>>> {
    if fwd.kind != params.kind() || fwd.fingerprint != fingerprint(params) {
        return Err(GemiError::Validation("forward cache is stale: parameters changed since the forward pass".into()));
    }
    if up.d_logits.shape() != fwd.logits.shape() {
        return Err(GemiError::shape("backward logits", format!("{:?}", fwd.logits.shape()), format!("{:?}", up.d_logits.shape())));
    }
    let ah = &fwd.hidden.ah;
    match params {
        ModelParams::Gcn(p) => {
            let d_w1 = ah.matmul_tn(&up.d_logits)?;
            let d_ah = up.d_logits.matmul_nt(&p.w1)?;
            let d_w0 = hidden_backward(prop, &fwd.hidden, &fwd.noise, &d_ah)?;
            Ok(vec![d_w0, d_w1])
        }
        ModelParams::Gae(p) => {
            let z = fwd.z.as_ref().expect("GAE forward has Z");
            let d_head = z.matmul_tn(&up.d_logits)?;
            let mut d_z = up.d_logits.matmul_nt(&p.head)?;
            add_opt(&mut d_z, up.d_z.as_ref())?;
            let d_w1 = ah.matmul_tn(&d_z)?;
            let d_ah = d_z.matmul_nt(&p.w1)?;
            let d_w0 = hidden_backward(prop, &fwd.hidden, &fwd.noise, &d_ah)?;
            Ok(vec![d_w0, d_w1, d_head])
        }
        ModelParams::Vgae(p) => {
            let z = fwd.z.as_ref().expect("VGAE forward has Z");
            let log_sigma = fwd.log_sigma.as_ref().expect("VGAE forward has log σ");
            let pre = fwd.log_sigma_pre.as_ref().expect("VGAE forward has pre-clamp log σ");
            let d_head = z.matmul_tn(&up.d_logits)?;
            let mut d_z = up.d_logits.matmul_nt(&p.head)?;
            add_opt(&mut d_z, up.d_z.as_ref())?;

            let mut d_mu = d_z.clone();
            add_opt(&mut d_mu, up.d_mu.as_ref())?;
            let mut d_ls = match &fwd.noise.eps {
                Some(eps) => d_z.zip_map(&log_sigma.zip_map(eps, |ls, e| ls.exp() * e)?, |g, s| g * s)?,
                None => DenseMatrix::zeros(d_z.rows(), d_z.cols()),
            };
            add_opt(&mut d_ls, up.d_log_sigma.as_ref())?;
            let (lo, hi) = (T::lit(p.log_sigma_bounds.0), T::lit(p.log_sigma_bounds.1));
            let d_pre = d_ls.zip_map(pre, |g, v| if v > lo && v < hi { g } else { T::zero() })?;

            let d_w_mu = ah.matmul_tn(&d_mu)?;
            let d_w_sigma = ah.matmul_tn(&d_pre)?;
            let mut d_ah = d_mu.matmul_nt(&p.w_mu)?;
            d_ah.add_assign(&d_pre.matmul_nt(&p.w_sigma)?)?;
            let d_w0 = hidden_backward(prop, &fwd.hidden, &fwd.noise, &d_ah)?;
            Ok(vec![d_w0, d_w_mu, d_w_sigma, d_head])
        }
    }
}
