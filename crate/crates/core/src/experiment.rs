//! Config-driven runs: resolution of JSON configs against model defaults,
//! the end-to-end experiment, parameter sweeps, user-matrix generation and
//! the built-in self checks.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{GemiError, Result};
use crate::fusion::{build_panel_features, FeatureConfig, FeatureMode, FeatureSources};
use crate::ingest::{self, load_interactions, load_labels, read_ids, write_interactions, PanelTable, Split};
use crate::losses::{focal_bce, kl_standard_normal, weighted_bce, SupervisedLoss};
use crate::models::ModelKind;
use crate::numerics::rng::fnv1a64;
use crate::numerics::{DenseMatrix, SeededRng};
use crate::planted::{planted_panels, PlantedConfig};
use crate::recommend::{evaluate, random_baseline, EvalInputs, MetricsReport, RepresentationSource};
use crate::train::{gradient_check, train, GradCheckSettings, TrainConfig, TrainReport};
use crate::users::{
    bootstrap_augment, observed_panels, profiles_to_interactions, real_user_profiles, restrict_items,
    sample_synthetic_users, AugmentConfig, PreferenceMatrix, RealUserConfig, UserProfile,
};
use crate::Matrix;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "GEMI_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Panel embeddings CSV, used by the `precomputed` feature mode.
    pub embeddings: Option<PathBuf>,
    /// Labels CSV with an optional split column.
    pub labels: Option<PathBuf>,
    /// `user_id,panel_id,rating` CSV for real or augmented users.
    pub interactions: Option<PathBuf>,
    pub test_fraction: f64,
    /// Generate planted panels instead of reading files.
    pub planted: Option<PlantedConfig>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            embeddings: None,
            labels: None,
            interactions: None,
            test_fraction: 0.2,
            planted: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserSource {
    Synthetic,
    Real,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsersConfig {
    pub source: UserSource,
    pub num: usize,
    /// Items per synthetic user.
    pub k: usize,
    pub tau: f64,
    pub real: RealUserConfig,
    pub augment: AugmentConfig,
}

impl Default for UsersConfig {
    fn default() -> Self {
        Self {
            source: UserSource::Synthetic,
            num: 50,
            k: 5,
            tau: 0.2,
            real: RealUserConfig::default(),
            augment: AugmentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub k_rec: usize,
    pub source: RepresentationSource,
    /// Monte-Carlo draws for the random-ranking baseline; 0 disables it.
    pub baseline_draws: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k_rec: 5,
            source: RepresentationSource::Latent,
            baseline_draws: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ModelKind,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub users: UsersConfig,
    pub eval: EvalConfig,
}

fn config_err(path: &str, msg: impl ToString) -> GemiError {
    GemiError::Config {
        path: path.to_string(),
        msg: msg.to_string(),
    }
}

impl ExperimentConfig {
    pub fn defaults(model: ModelKind) -> Self {
        Self {
            seed: 0,
            model,
            output_dir: PathBuf::from("gemi-out"),
            data: DataConfig::default(),
            features: FeatureConfig::default(),
            train: TrainConfig::defaults(model),
            users: UsersConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    /// Parses `text`, fills every omitted field from the defaults of the
    /// selected model and resolves relative paths against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let user: Value = serde_json::from_str(text).map_err(|e| config_err("<root>", e))?;
        if !user.is_object() {
            return Err(config_err("<root>", "expected a JSON object"));
        }
        let model = match user.get("model") {
            Some(v) => serde_json::from_value::<ModelKind>(v.clone()).map_err(|e| config_err("model", e))?,
            None => ModelKind::Gcn,
        };
        let mut merged = serde_json::to_value(Self::defaults(model))?;
        merge(&mut merged, user);
        let mut cfg = Self::from_value(merged)?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    /// Reads and resolves a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(GemiError::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| GemiError::io(path, e))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Deserialises a fully populated value with field-path diagnostics.
    fn from_value(v: Value) -> Result<Self> {
        let mut cfg: Self = serde_path_to_error::deserialize(v).map_err(|e| config_err(&e.path().to_string(), e.inner()))?;
        cfg.sync();
        cfg.validate()?;
        Ok(cfg)
    }

    fn sync(&mut self) {
        self.train.model = self.model;
        self.train.seed = self.seed;
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sync();
        self
    }

    /// Applies `GEMI_SEED` when set.
    pub fn with_env_seed(self) -> Result<Self> {
        match std::env::var(SEED_ENV) {
            Ok(s) => {
                let seed = s.trim().parse().map_err(|_| config_err(SEED_ENV, format!("not an unsigned integer: {s:?}")))?;
                Ok(self.with_seed(seed))
            }
            Err(_) => Ok(self),
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                fix(p);
            }
        };
        fix(&mut self.output_dir);
        fix_opt(&mut self.data.embeddings);
        fix_opt(&mut self.data.labels);
        fix_opt(&mut self.data.interactions);
        fix_opt(&mut self.features.image);
        fix_opt(&mut self.features.text);
        fix_opt(&mut self.features.gaussians_image);
        fix_opt(&mut self.features.gaussians_text);
        self.features.chunks.iter_mut().for_each(fix);
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate().map_err(|e| config_err("train", e))?;
        if let Some(p) = &self.data.planted {
            p.validate().map_err(|e| config_err("data.planted", e))?;
        } else if self.data.labels.is_none() {
            return Err(config_err("data.labels", "required unless data.planted is set"));
        }
        if !(self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0) {
            return Err(config_err("data.test_fraction", "must be in (0, 1)"));
        }
        if self.users.source != UserSource::Synthetic && self.data.interactions.is_none() {
            return Err(config_err("data.interactions", "required for real or augmented users"));
        }
        if self.users.num == 0 || self.users.k == 0 {
            return Err(config_err("users", "num and k must be >= 1"));
        }
        if !(self.users.tau > 0.0 && self.users.tau <= 1.0) {
            return Err(config_err("users.tau", "must be in (0, 1]"));
        }
        if self.eval.k_rec == 0 {
            return Err(config_err("eval.k_rec", "must be >= 1"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Recursive object merge; non-object values in `patch` replace `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn require<'a>(p: &'a Option<PathBuf>, field: &str) -> Result<&'a PathBuf> {
    let p = p.as_ref().ok_or_else(|| config_err(field, "missing"))?;
    if !p.exists() {
        return Err(GemiError::MissingFile(p.clone()));
    }
    Ok(p)
}

/// Panels with features for the configured mode and a complete split.
pub fn load_panels(cfg: &ExperimentConfig) -> Result<PanelTable> {
    let root = SeededRng::new(cfg.seed);
    let table = if let Some(p) = &cfg.data.planted {
        planted_panels(p, cfg.seed)?
    } else {
        let labels_path = require(&cfg.data.labels, "data.labels")?;
        let ids = read_ids(labels_path)?;
        let precomputed = match cfg.features.mode {
            FeatureMode::Precomputed => {
                Some(ingest::load_aligned_embeddings(require(&cfg.data.embeddings, "data.embeddings")?, &ids)?)
            }
            _ => None,
        };
        for p in [&cfg.features.image, &cfg.features.text, &cfg.features.gaussians_image, &cfg.features.gaussians_text]
            .into_iter()
            .flatten()
            .chain(&cfg.features.chunks)
        {
            if !p.exists() {
                return Err(GemiError::MissingFile(p.clone()));
            }
        }
        let sources = FeatureSources::load(&cfg.features, &ids, precomputed)?;
        let x = build_panel_features(cfg.features.mode, &sources)?;
        let (labels, split) = load_labels(labels_path, &ids)?;
        PanelTable::new(ids, x, labels, split)?
    };
    if table.split.contains(&Split::Unassigned) {
        ingest::assign_split(&table, cfg.data.test_fraction, &mut root.substream("split"))
    } else {
        Ok(table)
    }
}

/// User profiles over training panels.
pub fn build_users(cfg: &ExperimentConfig, panels: &PanelTable) -> Result<Vec<UserProfile>> {
    let root = SeededRng::new(cfg.seed);
    let train = panels.train_indices();
    let u = &cfg.users;
    match u.source {
        UserSource::Synthetic => {
            sample_synthetic_users(&train, &panels.labels, u.num, u.k, u.tau, &mut root.substream("users"))
        }
        UserSource::Real | UserSource::Augmented => {
            let table = load_interactions(require(&cfg.data.interactions, "data.interactions")?, &panels.ids)?;
            let mut profiles = real_user_profiles(&table, &panels.labels, &u.real)?;
            if u.source == UserSource::Augmented {
                profiles = bootstrap_augment(&profiles, &observed_panels(&table), &u.augment, &mut root.substream("augment"))?;
            }
            let kept = restrict_items(&profiles, &train);
            if kept.is_empty() {
                return Err(GemiError::Validation("no user interacted with a training panel".into()));
            }
            Ok(kept)
        }
    }
}

/// Artifacts of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub train: TrainReport,
    pub metrics: MetricsReport,
}

/// Runs one experiment and writes `config.resolved.json`,
/// `train_report.json`, `metrics.json` and `metrics.csv` into the output
/// directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    ingest::write_file(&out.join("config.resolved.json"), &cfg.to_json()?)?;

    let panels = load_panels(cfg)?;
    let profiles = build_users(cfg, &panels)?;
    let outcome = train::<f64>(&panels, &cfg.train)?;
    let reps: Matrix = match cfg.eval.source {
        RepresentationSource::Features => panels.embeddings.clone(),
        RepresentationSource::Latent => {
            let fwd = outcome.infer()?;
            outcome.to_panel_rows(fwd.latent(), panels.len())
        }
        RepresentationSource::Logits => {
            let fwd = outcome.infer()?;
            outcome.to_panel_rows(&fwd.logits, panels.len())
        }
    };
    let test = panels.test_indices();
    let inputs = EvalInputs {
        labels: &panels.labels,
        test: &test,
        profiles: &profiles,
        k_rec: cfg.eval.k_rec,
    };
    let mut metrics = evaluate(&cfg.model.to_string(), cfg.eval.source, cfg.seed, &reps, &inputs)?;
    if cfg.eval.baseline_draws > 0 {
        let mut rng = SeededRng::new(cfg.seed).substream("random_baseline");
        metrics.random_baseline = Some(random_baseline(&inputs, cfg.eval.baseline_draws, &mut rng)?);
    }

    ingest::write_file(&out.join("train_report.json"), &(serde_json::to_string_pretty(&outcome.report)? + "\n"))?;
    metrics.write(out.join("metrics.json"), out.join("metrics.csv"))?;
    Ok(RunOutput {
        config: cfg.clone(),
        train: outcome.report,
        metrics,
    })
}

/// Short names accepted by [`run_sweep`] in place of full dotted paths.
pub fn sweep_alias(name: &str) -> &str {
    match name {
        "gamma" => "train.loss.gamma",
        "alpha" => "train.loss.alpha",
        "edge_dropout" => "train.graph.edge_dropout",
        "k" => "train.graph.k",
        "k_rec" => "eval.k_rec",
        "tau" => "users.tau",
        "epochs" => "train.epochs",
        "lr" => "train.lr",
        other => other,
    }
}

/// Splits a comma-separated value list; each entry is read as JSON when it
/// parses and as a plain string otherwise.
pub fn parse_sweep_values(list: &str) -> Vec<Value> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string())))
        .collect()
}

/// One `sweep.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: String,
    pub value: String,
    pub label: String,
    pub mean: f64,
    pub std: f64,
    pub seed: u64,
}

fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// One run per value of the scalar field at `param` (a dotted path or an
/// alias). Each run gets seed `seed ^ fnv1a64(value)` and its own
/// subdirectory; `sweep.csv` collects every label's mean and std. `jobs`
/// bounds how many runs execute at once.
pub fn run_sweep(base: &ExperimentConfig, param: &str, values: &[Value], jobs: usize) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(config_err(param, "sweep needs at least one value"));
    }
    let path = sweep_alias(param);
    let pointer = format!("/{}", path.replace('.', "/"));
    let template = serde_json::to_value(base)?;
    match template.pointer(&pointer) {
        None => return Err(config_err(path, "no such config field")),
        Some(Value::Object(_) | Value::Array(_)) => return Err(config_err(path, "sweep target must be a scalar field")),
        Some(_) => {}
    }

    let configs = values
        .iter()
        .map(|v| {
            let label = value_label(v);
            let mut doc = template.clone();
            *doc.pointer_mut(&pointer).expect("checked above") = v.clone();
            let seed = base.seed ^ fnv1a64(label.as_bytes());
            doc["seed"] = Value::from(seed);
            doc["output_dir"] = serde_json::to_value(base.output_dir.join(format!("{path}={label}")))?;
            Ok((label, ExperimentConfig::from_value(doc)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| GemiError::InvalidArgument(e.to_string()))?;
    let runs = pool.install(|| configs.par_iter().map(|(_, c)| run_experiment(c)).collect::<Vec<_>>());

    let mut rows = Vec::new();
    for ((label, cfg), run) in configs.iter().zip(runs) {
        for m in &run?.metrics.labels {
            rows.push(SweepRow {
                param: path.to_string(),
                value: label.clone(),
                label: m.label.clone(),
                mean: m.mean,
                std: m.std,
                seed: cfg.seed,
            });
        }
    }
    let mut csv = String::from("param,value,label,mean,std,seed\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{},{},{}", r.param, r.value, r.label, r.mean, r.std, r.seed);
    }
    ingest::write_file(&base.output_dir.join("sweep.csv"), &csv)?;
    Ok(rows)
}

/// Writes `preferences.csv` and `interactions.csv` for `profiles`.
pub fn write_user_files(profiles: &[UserProfile], ids: &[String], out_dir: &Path) -> Result<()> {
    PreferenceMatrix::from_profiles(profiles).write_csv(out_dir.join("preferences.csv"))?;
    write_interactions(out_dir.join("interactions.csv"), ids, &profiles_to_interactions(profiles))
}

/// Synthetic users drawn from the training panels of a labels file.
pub fn synth_users_from_files(labels: &Path, num: usize, k: usize, tau: f64, test_fraction: f64, seed: u64) -> Result<(Vec<String>, Vec<UserProfile>)> {
    if !labels.exists() {
        return Err(GemiError::MissingFile(labels.to_path_buf()));
    }
    let ids = read_ids(labels)?;
    let (lab, split) = load_labels(labels, &ids)?;
    let table = PanelTable::new(ids.clone(), DenseMatrix::zeros(ids.len(), 1), lab, split)?;
    let root = SeededRng::new(seed);
    let table = if table.split.contains(&Split::Unassigned) {
        ingest::assign_split(&table, test_fraction, &mut root.substream("split"))?
    } else {
        table
    };
    let users = sample_synthetic_users(&table.train_indices(), &table.labels, num, k, tau, &mut root.substream("users"))?;
    Ok((ids, users))
}

/// Real-rating users, optionally bootstrapped up to `augment` profiles.
pub fn real_users_from_files(
    interactions: &Path,
    labels: &Path,
    cfg: &RealUserConfig,
    augment: Option<AugmentConfig>,
    seed: u64,
) -> Result<(Vec<String>, Vec<UserProfile>)> {
    for p in [interactions, labels] {
        if !p.exists() {
            return Err(GemiError::MissingFile(p.to_path_buf()));
        }
    }
    let ids = read_ids(labels)?;
    let (lab, _) = load_labels(labels, &ids)?;
    let table = load_interactions(interactions, &ids)?;
    let mut users = real_user_profiles(&table, &lab, cfg)?;
    if let Some(a) = augment {
        users = bootstrap_augment(&users, &observed_panels(&table), &a, &mut SeededRng::new(seed).substream("augment"))?;
    }
    Ok((ids, users))
}

/// Outcome of one self check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Gradient checks for every backbone and loss over `seeds` seeds, plus the
/// closed-form loss identities.
pub fn run_checks(seeds: u64) -> Result<Vec<CheckResult>> {
    let seed_list: Vec<u64> = (0..seeds).collect();
    let mut out = Vec::new();
    for kind in [ModelKind::Gcn, ModelKind::Gae, ModelKind::Vgae] {
        for loss in [SupervisedLoss::Focal, SupervisedLoss::Wbce] {
            let settings = GradCheckSettings { loss, ..GradCheckSettings::default() };
            let r = gradient_check(kind, &seed_list, &settings)?;
            out.push(CheckResult {
                name: format!("gradient {kind} {loss:?}").to_lowercase(),
                passed: r.passed,
                detail: format!("max relative error {:.3e} (tolerance {:.0e})", r.max_rel_error, r.tolerance),
            });
        }
    }

    let root = SeededRng::new(seeds);
    let mut rng = root.substream("identities");
    let n = 16;
    let logits: DenseMatrix<f64> = DenseMatrix::from_fn(n, 3, |_, _| 4.0 * crate::numerics::rng::standard_normal::<f64>(&mut rng));
    let labels = crate::ingest::LabelMatrix::new((0..n).map(|i| [i % 2 == 0, i % 3 == 0, i % 5 == 0]).collect());
    let mask: Vec<usize> = (0..n).collect();
    let w = [1.7, 0.4, 3.0];
    let focal = focal_bce(&logits, &labels, &w, 0.5, 0.0, &mask)?;
    let bce = weighted_bce(&logits, &labels, &w, &mask)?;
    let diff = (focal.value - 0.5 * bce.value).abs();
    out.push(CheckResult {
        name: "focal(gamma=0, alpha=0.5) = bce / 2".into(),
        passed: diff <= 1e-12,
        detail: format!("difference {diff:.3e}"),
    });
    let zeros: DenseMatrix<f64> = DenseMatrix::zeros(n, 4);
    let (kl, _, _) = kl_standard_normal(&zeros, &zeros)?;
    out.push(CheckResult {
        name: "kl(mu=0, sigma=1) = 0".into(),
        passed: kl == 0.0,
        detail: format!("value {kl:e}"),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_omitted_fields() {
        let cfg = ExperimentConfig::from_json(r#"{"data": {"planted": {}}}"#, Path::new("/tmp")).unwrap();
        assert_eq!(cfg.model, ModelKind::Gcn);
        assert_eq!(cfg.train.epochs, 450);
        assert_eq!(cfg.train.lr, 3e-4);
        assert_eq!(cfg.train.graph.k, 30);
        assert_eq!(cfg.output_dir, PathBuf::from("/tmp/gemi-out"));

        let v = ExperimentConfig::from_json(r#"{"model": "vgae", "seed": 9, "data": {"planted": {}}}"#, Path::new(".")).unwrap();
        assert_eq!(v.train.model, ModelKind::Vgae);
        assert_eq!(v.train.seed, 9);
        assert_eq!(v.train.hidden, 256);
    }

    #[test]
    fn unknown_field_reports_its_path() {
        let err = ExperimentConfig::from_json(r#"{"data": {"planted": {}}, "train": {"loss": {"gama": 1}}}"#, Path::new(".")).unwrap_err();
        match err {
            GemiError::Config { path, .. } => assert!(path.starts_with("train.loss"), "{path}"),
            other => panic!("unexpected {other:?}"),
        }
        let err = ExperimentConfig::from_json(r#"{"data": {"planted": {}}, "train": {"epochs": "many"}}"#, Path::new(".")).unwrap_err();
        assert!(matches!(err, GemiError::Config { ref path, .. } if path == "train.epochs"));
    }

    #[test]
    fn data_source_is_required() {
        assert!(matches!(
            ExperimentConfig::from_json("{}", Path::new(".")).unwrap_err(),
            GemiError::Config { ref path, .. } if path == "data.labels"
        ));
    }

    #[test]
    fn merge_replaces_leaves_and_recurses_into_objects() {
        let mut a = serde_json::json!({"x": {"y": 1, "z": [1, 2]}, "w": 3});
        merge(&mut a, serde_json::json!({"x": {"z": [5]}, "v": 0}));
        assert_eq!(a, serde_json::json!({"x": {"y": 1, "z": [5]}, "w": 3, "v": 0}));
    }

    #[test]
    fn sweep_rejects_bad_targets() {
        let cfg = ExperimentConfig::from_json(r#"{"data": {"planted": {}}}"#, Path::new("/tmp")).unwrap();
        assert!(run_sweep(&cfg, "gamma", &[], 1).is_err());
        assert!(run_sweep(&cfg, "train.graph", &[Value::from(1)], 1).is_err());
        assert!(run_sweep(&cfg, "train.nope", &[Value::from(1)], 1).is_err());
    }

    #[test]
    fn sweep_values_parse_as_json_or_strings() {
        assert_eq!(parse_sweep_values("0, 0.5,true,focal,"), vec![Value::from(0), Value::from(0.5), Value::from(true), Value::from("focal")]);
        assert!(parse_sweep_values("").is_empty());
    }

    #[test]
    fn aliases_resolve() {
        assert_eq!(sweep_alias("gamma"), "train.loss.gamma");
        assert_eq!(sweep_alias("users.k"), "users.k");
    }
}
