//! Optimisation loop, the transductive and inductive protocols, and the
//! finite-difference gradient check.

use std::fmt;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GemiError, Result};
use crate::graph::{
    attach_test_items, augment_label_edges, edge_dropout, epsilon_graph, inductive_propagation, knn_graph_symmetric,
    normalize_adjacency, EdgeKind, ItemGraph,
};
use crate::ingest::{LabelMatrix, PanelTable, LABEL_NAMES};
use crate::losses::{
    joint_objective, kl_anneal, kl_standard_normal, positive_weights, recon_loss_latent, supervised_loss, LossConfig,
    LossParts, ObjectiveReport, ObjectiveWeights, ReconTargets, SupervisedLoss,
};
use crate::models::{backward, forward, gaussian_noise, Forward, ForwardNoise, ModelDims, ModelKind, ModelParams, Upstream};
use crate::numerics::{finite_difference_gradient, DenseMatrix, SeededRng, SparseMatrix};
use crate::real::Real;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Transductive,
    Inductive,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Transductive => "transductive",
            Protocol::Inductive => "inductive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Knn,
    Epsilon,
}

/// Extra edges among training positives of one label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSpec {
    pub label: String,
    pub k: usize,
    pub max_nodes: usize,
}

impl AugmentSpec {
    pub fn new(label: &str, k: usize) -> Self {
        Self {
            label: label.to_string(),
            k,
            max_nodes: 2500,
        }
    }

    fn label_index(&self) -> Result<usize> {
        LABEL_NAMES
            .iter()
            .position(|n| *n == self.label)
            .ok_or_else(|| GemiError::Validation(format!("unknown augmentation label {:?}", self.label)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub kind: GraphKind,
    pub k: usize,
    pub epsilon: f64,
    pub similarity_floor: f64,
    pub edge_dropout: f64,
    pub augment: Vec<AugmentSpec>,
    /// Keep augmentation edges out of edge dropout.
    pub exempt_augmented: bool,
    /// Neighbours per test item in the inductive protocol; defaults to `k`.
    pub attach_k: Option<usize>,
}

impl GraphConfig {
    pub fn defaults(kind: ModelKind) -> Self {
        let (k, augment) = match kind {
            ModelKind::Gcn => (30, vec![AugmentSpec::new("tree", 25)]),
            ModelKind::Gae => (
                30,
                vec![AugmentSpec::new("animal", 18), AugmentSpec::new("mythology", 18), AugmentSpec::new("tree", 35)],
            ),
            ModelKind::Vgae => (25, vec![AugmentSpec::new("tree", 25)]),
        };
        Self {
            kind: GraphKind::Knn,
            k,
            epsilon: 0.5,
            similarity_floor: 0.0,
            edge_dropout: 0.1,
            augment,
            exempt_augmented: false,
            attach_k: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == GraphKind::Knn && self.k == 0 {
            return Err(GemiError::Validation("graph.k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.edge_dropout) {
            return Err(GemiError::Validation(format!("graph.edge_dropout must be in [0, 1], got {}", self.edge_dropout)));
        }
        for a in &self.augment {
            a.label_index()?;
            if a.k == 0 {
                return Err(GemiError::Validation(format!("graph.augment[{}].k must be >= 1", a.label)));
            }
        }
        if self.attach_k == Some(0) {
            return Err(GemiError::Validation("graph.attach_k must be >= 1".into()));
        }
        Ok(())
    }

    fn exempt(&self) -> &'static [EdgeKind] {
        if self.exempt_augmented {
            &[EdgeKind::LabelAugment]
        } else {
            &[]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Set from the enclosing experiment config, not serialised here.
    #[serde(skip)]
    pub model: ModelKind,
    pub hidden: usize,
    /// Latent width for the GAE and VGAE.
    pub latent: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub protocol: Protocol,
    pub graph: GraphConfig,
    pub loss: LossConfig,
    #[serde(skip)]
    pub seed: u64,
}

impl TrainConfig {
    /// Published defaults for each backbone.
    pub fn defaults(kind: ModelKind) -> Self {
        let (hidden, latent, epochs, lr, weight_decay) = match kind {
            ModelKind::Gcn => (128, 64, 450, 3e-4, 2e-3),
            ModelKind::Gae => (128, 64, 400, 2e-3, 2e-4),
            ModelKind::Vgae => (256, 128, 500, 3e-3, 5e-4),
        };
        Self {
            model: kind,
            hidden,
            latent,
            dropout: 0.2,
            epochs,
            lr,
            weight_decay,
            protocol: Protocol::Transductive,
            graph: GraphConfig::defaults(kind),
            loss: LossConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(GemiError::Validation("epochs must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(GemiError::Validation(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(GemiError::Validation("weight_decay must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(GemiError::Validation(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.hidden == 0 || (self.model != ModelKind::Gcn && self.latent == 0) {
            return Err(GemiError::Validation("hidden and latent widths must be >= 1".into()));
        }
        self.graph.validate()?;
        self.loss.validate()
    }

    fn kl_ramp_epochs(&self) -> usize {
        ((self.epochs as f64 * self.loss.kl_ramp_fraction).round() as usize).max(1)
    }
}

/// Scales all gradients by `tau / ‖g‖₂` when the global norm exceeds `tau`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut [DenseMatrix<T>], tau: T) -> Result<T> {
    if !(tau > T::zero()) {
        return Err(GemiError::InvalidArgument("clip norm must be > 0".into()));
    }
    let norm = grads.iter().map(|g| g.sum_squares()).sum::<T>().sqrt();
    if norm > tau {
        let s = tau / norm;
        grads.iter_mut().for_each(|g| g.scale_in_place(s));
    }
    Ok(norm)
}

/// Adam moments for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Real> {
    m: Vec<DenseMatrix<T>>,
    v: Vec<DenseMatrix<T>>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| DenseMatrix::zeros(r, c)).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }

    pub fn for_params(params: &ModelParams<T>) -> Self {
        Self::new(&params.tensors().iter().map(|t| t.shape()).collect::<Vec<_>>())
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update with weight decay added to the gradient.
pub fn adam_step<T: Real>(
    state: &mut AdamState<T>,
    params: Vec<&mut DenseMatrix<T>>,
    grads: &[DenseMatrix<T>],
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(GemiError::shape("adam_step", state.m.len(), format!("{}/{}", params.len(), grads.len())));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(GemiError::shape("adam_step", format!("{:?}", m.shape()), format!("{:?}/{:?}", p.shape(), g.shape())));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(state.beta1), T::lit(state.beta2));
    let c1 = T::one() - T::lit(state.beta1.powi(t));
    let c2 = T::one() - T::lit(state.beta2.powi(t));
    let (lr, wd, eps) = (T::lit(lr), T::lit(weight_decay), T::lit(state.eps));
    for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        let ps = p.as_mut_slice();
        for (i, ((mi, vi), &gi)) in m.as_mut_slice().iter_mut().zip(v.as_mut_slice()).zip(g.as_slice()).enumerate() {
            let gi = gi + wd * ps[i];
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            ps[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Everything the objective needs besides parameters and graph.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveInputs<'a, T: Real> {
    pub labels: &'a LabelMatrix,
    pub mask: &'a [usize],
    pub pos_weights: &'a [T],
    pub recon: Option<&'a ReconTargets>,
    pub loss: &'a LossConfig,
    pub beta: f64,
}

/// Joint objective and its parameter gradients for one forward pass.
pub fn objective_and_gradients<T: Real>(
    params: &ModelParams<T>,
    prop: &SparseMatrix<T>,
    x: &DenseMatrix<T>,
    inputs: &ObjectiveInputs<'_, T>,
    noise: ForwardNoise<T>,
) -> Result<(ObjectiveReport, Vec<DenseMatrix<T>>, Forward<T>)> {
    let fwd = forward(params, prop, x, noise)?;
    let sup = supervised_loss(inputs.loss, &fwd.logits, inputs.labels, inputs.pos_weights, inputs.mask)?;
    let weights = ObjectiveWeights::from_config(inputs.loss, inputs.beta);
    let recon = || inputs.recon.ok_or_else(|| GemiError::InvalidArgument("reconstruction targets required".into()));
    let (parts, up) = match params.kind() {
        ModelKind::Gcn => (
            LossParts { sup: Some(sup.value.to_f64_lossy()), ..Default::default() },
            Upstream::logits_only(sup.grad),
        ),
        ModelKind::Gae => {
            let rec = recon_loss_latent(fwd.z.as_ref().expect("GAE forward has Z"), recon()?)?;
            let parts = LossParts { sup: Some(sup.value.to_f64_lossy()), rec: Some(rec.value.to_f64_lossy()), kl: None };
            let up = Upstream {
                d_logits: sup.grad.scale(T::lit(weights.lambda_sup)),
                d_z: Some(rec.grad),
                d_mu: None,
                d_log_sigma: None,
            };
            (parts, up)
        }
        ModelKind::Vgae => {
            let rec = recon_loss_latent(fwd.z.as_ref().expect("VGAE forward has Z"), recon()?)?;
            let (kl, d_mu, d_ls) = kl_standard_normal(
                fwd.mu.as_ref().expect("VGAE forward has μ"),
                fwd.log_sigma.as_ref().expect("VGAE forward has log σ"),
            )?;
            let beta = T::lit(weights.beta);
            let parts = LossParts {
                sup: Some(sup.value.to_f64_lossy()),
                rec: Some(rec.value.to_f64_lossy()),
                kl: Some(kl.to_f64_lossy()),
            };
            let up = Upstream {
                d_logits: sup.grad.scale(T::lit(weights.lambda_ssl)),
                d_z: Some(rec.grad),
                d_mu: Some(d_mu.scale(beta)),
                d_log_sigma: Some(d_ls.scale(beta)),
            };
            (parts, up)
        }
    };
    let report = joint_objective(params.kind(), parts, weights)?;
    let grads = backward(params, prop, &fwd, &up)?;
    Ok((report, grads, fwd))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub sup: f64,
    pub rec: Option<f64>,
    pub kl: Option<f64>,
    pub beta: Option<f64>,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: ModelKind,
    pub protocol: Protocol,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub graph_edges: usize,
    pub train_nodes: usize,
    pub test_nodes: usize,
    pub pos_weights: Vec<f64>,
    /// Excluded from determinism comparisons.
    pub wall_time_secs: f64,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.total)
    }
}

/// A trained model together with the graph used for inference.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Real> {
    pub report: TrainReport,
    pub params: ModelParams<T>,
    /// Graph the model was trained on (over the training nodes only in the
    /// inductive protocol).
    pub train_graph: ItemGraph,
    /// Propagation operator and features for evaluation-mode inference.
    pub inference_prop: SparseMatrix<T>,
    pub inference_x: DenseMatrix<T>,
    /// Panel index of each inference node.
    pub node_panels: Vec<usize>,
}

impl<T: Real> TrainOutcome<T> {
    /// Evaluation-mode forward pass over the inference nodes.
    pub fn infer(&self) -> Result<Forward<T>> {
        forward(&self.params, &self.inference_prop, &self.inference_x, ForwardNoise::none())
    }

    /// Scatters inference-node rows back into panel order; panels that were
    /// not inference nodes get zero rows.
    pub fn to_panel_rows(&self, rows: &DenseMatrix<T>, num_panels: usize) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(num_panels, rows.cols());
        for (node, &panel) in self.node_panels.iter().enumerate() {
            out.row_mut(panel).copy_from_slice(rows.row(node));
        }
        out
    }
}

/// Base graph plus label augmentation over `x`.
fn build_graph<T: Real>(
    x: &DenseMatrix<T>,
    labels: &LabelMatrix,
    train_mask: &[bool],
    subset: Option<&[usize]>,
    cfg: &GraphConfig,
    root: &SeededRng,
) -> Result<ItemGraph> {
    let mut g = match cfg.kind {
        GraphKind::Knn => knn_graph_symmetric(x, cfg.k, T::lit(cfg.similarity_floor), subset)?,
        GraphKind::Epsilon => epsilon_graph(x, T::lit(cfg.epsilon)),
    };
    let mut rng = root.substream("label_augment");
    for a in &cfg.augment {
        g = augment_label_edges(&g, x, labels, a.label_index()?, a.k, a.max_nodes, train_mask, &mut rng)?;
    }
    Ok(g)
}

fn loss_weights<T: Real>(cfg: &LossConfig, labels: &LabelMatrix, train: &[usize]) -> Result<Vec<T>> {
    match &cfg.pos_weights {
        Some(w) if w.len() != labels.cols() => Err(GemiError::Validation(format!(
            "loss.pos_weights needs {} entries, got {}",
            labels.cols(),
            w.len()
        ))),
        Some(w) => Ok(w.iter().map(|&v| T::lit(v)).collect()),
        None => Ok(positive_weights(labels, train)),
    }
}

/// Full-graph training on `graph`; `mask` rows of `labels` enter the loss.
fn fit<T: Real>(
    cfg: &TrainConfig,
    graph: &ItemGraph,
    x: &DenseMatrix<T>,
    labels: &LabelMatrix,
    mask: &[usize],
    pos_weights: &[T],
    root: &SeededRng,
) -> Result<(ModelParams<T>, Vec<EpochRecord>)> {
    let dims = ModelDims { input: x.cols(), hidden: cfg.hidden, latent: cfg.latent, classes: labels.cols() };
    let mut params = ModelParams::init(cfg.model, dims, cfg.dropout, &mut root.substream("init"))?;
    let mut adam = AdamState::for_params(&params);
    let recon = (cfg.model != ModelKind::Gcn).then(|| ReconTargets::from_graph(graph));
    let ramp = cfg.kl_ramp_epochs();
    let n = x.rows();
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let dropped = edge_dropout(graph, cfg.graph.edge_dropout, cfg.graph.exempt(), &mut root.indexed_substream("edge_dropout", epoch as u64))?;
        let prop = normalize_adjacency::<T>(&dropped).into_matrix();
        let noise = ForwardNoise::sample(&params, n, &mut root.indexed_substream("forward_noise", epoch as u64));
        let beta = kl_anneal(epoch, ramp, cfg.loss.beta_max)?;
        let inputs = ObjectiveInputs { labels, mask, pos_weights, recon: recon.as_ref(), loss: &cfg.loss, beta };
        let (report, mut grads, _) = objective_and_gradients(&params, &prop, x, &inputs, noise)?;
        if !report.total.is_finite() {
            return Err(GemiError::Numeric(format!("non-finite loss at epoch {epoch}")));
        }
        let norm = clip_global_norm(&mut grads, T::lit(cfg.loss.clip_norm))?;
        adam_step(&mut adam, params.tensors_mut(), &grads, cfg.lr, cfg.weight_decay)?;
        log::debug!("epoch {epoch}: loss {:.6}", report.total);
        records.push(EpochRecord {
            epoch,
            total: report.total,
            sup: report.sup,
            rec: report.rec,
            kl: report.kl,
            beta: report.beta,
            grad_norm: norm.to_f64_lossy(),
            edges: dropped.num_edges(),
        });
    }
    if !params.is_finite() {
        return Err(GemiError::Numeric("parameters diverged".into()));
    }
    Ok((params, records))
}

fn check_split(panels: &PanelTable) -> Result<(Vec<usize>, Vec<usize>)> {
    let train = panels.train_indices();
    if train.is_empty() {
        return Err(GemiError::Validation("no training panels: assign a split first".into()));
    }
    Ok((train, panels.test_indices()))
}

/// Transductive protocol: the graph spans every panel, only training labels
/// enter the loss.
pub fn train_transductive<T: Real>(panels: &PanelTable, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let (train, test) = check_split(panels)?;
    let start = Instant::now();
    let root = SeededRng::new(cfg.seed);
    let x: DenseMatrix<T> = panels.embeddings.cast();
    let mut train_mask = vec![false; panels.len()];
    train.iter().for_each(|&i| train_mask[i] = true);
    let graph = build_graph(&x, &panels.labels, &train_mask, None, &cfg.graph, &root)?;
    let pos_weights = loss_weights::<T>(&cfg.loss, &panels.labels, &train)?;
    let (params, epochs) = fit(cfg, &graph, &x, &panels.labels, &train, &pos_weights, &root)?;
    let report = TrainReport {
        model: cfg.model,
        protocol: Protocol::Transductive,
        seed: cfg.seed,
        epochs,
        graph_edges: graph.num_edges(),
        train_nodes: train.len(),
        test_nodes: test.len(),
        pos_weights: pos_weights.iter().map(|w| w.to_f64_lossy()).collect(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        report,
        params,
        inference_prop: normalize_adjacency::<T>(&graph).into_matrix(),
        inference_x: x,
        node_panels: (0..panels.len()).collect(),
        train_graph: graph,
    })
}

/// Inductive protocol: training sees the training panels only; test panels
/// are attached afterwards and only ever read from training nodes.
pub fn train_inductive<T: Real>(panels: &PanelTable, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let (train, test) = check_split(panels)?;
    let start = Instant::now();
    let root = SeededRng::new(cfg.seed);
    let x_train: DenseMatrix<T> = panels.embeddings.select_rows(&train).cast();
    let labels_train = panels.labels.select_rows(&train);
    let all_train = vec![true; train.len()];
    let graph = build_graph(&x_train, &labels_train, &all_train, None, &cfg.graph, &root)?;
    let local: Vec<usize> = (0..train.len()).collect();
    let pos_weights = loss_weights::<T>(&cfg.loss, &labels_train, &local)?;
    let (params, epochs) = fit(cfg, &graph, &x_train, &labels_train, &local, &pos_weights, &root)?;

    let x_test: DenseMatrix<T> = panels.embeddings.select_rows(&test).cast();
    let attach_k = cfg.graph.attach_k.unwrap_or(cfg.graph.k).min(train.len());
    let (inference_prop, inference_x) = if test.is_empty() {
        (normalize_adjacency::<T>(&graph).into_matrix(), x_train)
    } else {
        let attached = attach_test_items(&graph, &x_train, &x_test, attach_k)?;
        (inductive_propagation::<T>(&attached, train.len())?, x_train.vstack(&x_test)?)
    };
    let report = TrainReport {
        model: cfg.model,
        protocol: Protocol::Inductive,
        seed: cfg.seed,
        epochs,
        graph_edges: graph.num_edges(),
        train_nodes: train.len(),
        test_nodes: test.len(),
        pos_weights: pos_weights.iter().map(|w| w.to_f64_lossy()).collect(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        report,
        params,
        inference_prop,
        inference_x,
        node_panels: train.iter().chain(&test).copied().collect(),
        train_graph: graph,
    })
}

/// Dispatches on `cfg.protocol`.
pub fn train<T: Real>(panels: &PanelTable, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    match cfg.protocol {
        Protocol::Transductive => train_transductive(panels, cfg),
        Protocol::Inductive => train_inductive(panels, cfg),
    }
}

/// Small random problem for gradient verification.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckInstance {
    pub x: DenseMatrix<f64>,
    pub graph: ItemGraph,
    pub labels: LabelMatrix,
    pub mask: Vec<usize>,
}

impl CheckInstance {
    /// `n` nodes with `d` Gaussian features, a symmetric 2-NN graph, random
    /// labels and roughly two thirds of the nodes in the loss mask.
    pub fn random(n: usize, d: usize, seed: u64) -> Result<Self> {
        if n < 4 {
            return Err(GemiError::InvalidArgument("gradient-check instances need at least 4 nodes".into()));
        }
        let root = SeededRng::new(seed);
        let mut rng = root.substream("check_instance");
        let x = gaussian_noise(n, d, &mut rng);
        let graph = knn_graph_symmetric(&x, 2, 0.0, None)?;
        let labels = LabelMatrix::new((0..n).map(|_| [rng.random_bool(0.5), rng.random_bool(0.4), rng.random_bool(0.3)]).collect());
        let mask = (0..n).filter(|i| i % 3 != 2).collect();
        Ok(Self { x, graph, labels, mask })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckSettings {
    pub hidden: usize,
    pub latent: usize,
    pub dropout: f64,
    pub loss: SupervisedLoss,
    pub beta: f64,
    /// Central-difference step.
    pub step: f64,
    /// Denominator floor for the relative error.
    pub floor: f64,
    pub tolerance: f64,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        Self {
            hidden: 6,
            latent: 4,
            dropout: 0.2,
            loss: SupervisedLoss::Focal,
            beta: 0.7,
            step: 1e-5,
            floor: 1e-6,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub model: ModelKind,
    pub loss: SupervisedLoss,
    pub seeds: Vec<u64>,
    /// Worst relative error per seed.
    pub per_seed: Vec<f64>,
    pub max_rel_error: f64,
    /// `(seed, tensor, flat index)` of the worst entry.
    pub worst: Option<(u64, String, usize)>,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Compares analytic gradients with central differences of the full joint
/// objective, for every parameter entry, with dropout masks and
/// reparameterisation noise frozen per seed. Instances have 8 to 12 nodes.
pub fn gradient_check(kind: ModelKind, seeds: &[u64], settings: &GradCheckSettings) -> Result<GradCheckReport> {
    let mut per_seed = Vec::with_capacity(seeds.len());
    let mut worst: Option<(u64, String, usize)> = None;
    let mut max_err = 0.0f64;
    for &seed in seeds {
        let root = SeededRng::new(seed);
        let n = root.substream("check_size").random_range(8..=12);
        let inst = CheckInstance::random(n, 5, seed)?;
        let dims = ModelDims { input: inst.x.cols(), hidden: settings.hidden, latent: settings.latent, classes: inst.labels.cols() };
        let params = ModelParams::<f64>::init(kind, dims, settings.dropout, &mut root.substream("init"))?;
        let noise = ForwardNoise::sample(&params, n, &mut root.substream("noise"));
        let prop = normalize_adjacency::<f64>(&inst.graph).into_matrix();
        let recon = ReconTargets::from_graph(&inst.graph);
        let pos_weights: Vec<f64> = positive_weights(&inst.labels, &inst.mask);
        let loss = LossConfig { kind: settings.loss, ..LossConfig::default() };
        let inputs = ObjectiveInputs {
            labels: &inst.labels,
            mask: &inst.mask,
            pos_weights: &pos_weights,
            recon: Some(&recon),
            loss: &loss,
            beta: settings.beta,
        };
        let (_, analytic, _) = objective_and_gradients(&params, &prop, &inst.x, &inputs, noise.clone())?;
        let mut seed_max = 0.0f64;
        for (t, name) in params.tensor_names().iter().enumerate() {
            let base = params.tensors()[t].clone();
            let objective = |v: &[f64]| {
                let mut p = params.clone();
                *p.tensors_mut()[t] = DenseMatrix::new(base.rows(), base.cols(), v.to_vec()).expect("same shape");
                objective_and_gradients(&p, &prop, &inst.x, &inputs, noise.clone())
                    .map(|r| r.0.total)
                    .unwrap_or(f64::NAN)
            };
            let numeric = finite_difference_gradient(objective, base.as_slice(), settings.step)?;
            for (i, (&a, &b)) in analytic[t].as_slice().iter().zip(&numeric).enumerate() {
                let e = relative_error(a, b, settings.floor);
                seed_max = seed_max.max(e);
                if e > max_err || worst.is_none() {
                    max_err = max_err.max(e);
                    worst = Some((seed, name.to_string(), i));
                }
            }
        }
        per_seed.push(seed_max);
    }
    Ok(GradCheckReport {
        model: kind,
        loss: settings.loss,
        seeds: seeds.to_vec(),
        per_seed,
        max_rel_error: max_err,
        worst,
        tolerance: settings.tolerance,
        passed: max_err <= settings.tolerance,
    })
}
