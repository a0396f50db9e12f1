//! Acceptance suite: one PASS/FAIL line per criterion. Criterion 8 is
//! informational, tagged INFO, and never fails the run.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use gemi::experiment::{run_experiment, ExperimentConfig};
use gemi::fusion::{poe_fuse, GaussianPosterior};
use gemi::graph::{attach_test_items, epsilon_graph, knn_graph_symmetric, top_k_by_score, ItemGraph};
use gemi::ingest::{LabelMatrix, PanelTable, Split};
use gemi::losses::{focal_bce, joint_objective, kl_standard_normal, weighted_bce, LossParts, ObjectiveWeights, SupervisedLoss};
use gemi::models::ModelKind;
use gemi::numerics::rng::standard_normal;
use gemi::numerics::{DenseMatrix, SeededRng};
use gemi::planted::{planted_panels, PlantedConfig};
use gemi::recommend::{aggregate, evaluate, EvalInputs, RepresentationSource};
use gemi::train::{gradient_check, train, GradCheckSettings, Protocol, TrainConfig};
use gemi::users::UserProfile;
use rand::seq::SliceRandom;
use rand::Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn scratch_dir(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("gemi-acceptance-{}-{tag}", std::process::id()))
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..20).collect();
    let mut worst = 0.0f64;
    let mut all = true;
    let mut parts = Vec::new();
    for kind in [ModelKind::Gcn, ModelKind::Gae, ModelKind::Vgae] {
        let r = gradient_check(kind, &seeds, &GradCheckSettings::default()).expect("gradient check runs");
        all &= r.passed;
        worst = worst.max(r.max_rel_error);
        parts.push(format!("{kind} {:.2e}", r.max_rel_error));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(all && worst <= 1e-4 && secs < 30.0, format!("{} (max {worst:.2e} <= 1e-4, {secs:.1}s < 30s)", parts.join(", ")))
}

fn loss_identities() -> Outcome {
    let mut rng = SeededRng::new(2).substream("identities");
    let n = 40;
    let logits: DenseMatrix<f64> = DenseMatrix::from_fn(n, 3, |_, _| 5.0 * standard_normal::<f64>(&mut rng));
    let labels = LabelMatrix::new((0..n).map(|_| [rng.random_bool(0.5), rng.random_bool(0.3), rng.random_bool(0.1)]).collect());
    let mask: Vec<usize> = (0..n).filter(|i| i % 4 != 0).collect();
    let w = [1.0, 2.3, 9.0];
    let focal = focal_bce(&logits, &labels, &w, 0.5, 0.0, &mask).unwrap().value;
    let bce = weighted_bce(&logits, &labels, &w, &mask).unwrap().value;
    let d_focal = (focal - 0.5 * bce).abs();

    let zeros: DenseMatrix<f64> = DenseMatrix::zeros(n, 8);
    let (kl, _, _) = kl_standard_normal(&zeros, &zeros).unwrap();

    let mut d_joint = 0.0f64;
    for _ in 0..100 {
        let parts = LossParts {
            sup: Some(rng.random_range(0.0..3.0)),
            rec: Some(rng.random_range(0.0..3.0)),
            kl: Some(rng.random_range(0.0..50.0)),
        };
        let lambda = rng.random_range(0.0..2.0);
        let vgae = joint_objective(ModelKind::Vgae, parts, ObjectiveWeights { lambda_sup: 0.0, lambda_ssl: lambda, beta: 0.0 }).unwrap();
        let gae = joint_objective(ModelKind::Gae, parts, ObjectiveWeights { lambda_sup: lambda, lambda_ssl: 0.0, beta: 0.0 }).unwrap();
        d_joint = d_joint.max((vgae.total - gae.total).abs());
    }
    outcome(
        d_focal <= 1e-12 && kl == 0.0 && d_joint <= 1e-12,
        format!("|focal - bce/2| = {d_focal:.1e}, KL = {kl:e}, |vgae(beta=0) - gae| = {d_joint:.1e}"),
    )
}

fn normal_pdf(x: f64, mu: f64, var: f64) -> f64 {
    (-(x - mu) * (x - mu) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn poe_oracle() -> Outcome {
    let mut rng = SeededRng::new(3).substream("poe");
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let experts: Vec<(f64, f64)> = (0..2).map(|_| (rng.random_range(-3.0..3.0), rng.random_range(0.3f64..2.0).powi(2))).collect();
        let fused = poe_fuse(&experts.iter().map(|&(m, v)| GaussianPosterior::new(vec![m], vec![v]).unwrap()).collect::<Vec<_>>()).unwrap();
        let lo = experts.iter().map(|&(m, v)| m - 8.0 * v.sqrt()).fold(f64::INFINITY, f64::min);
        let hi = experts.iter().map(|&(m, v)| m + 8.0 * v.sqrt()).fold(f64::NEG_INFINITY, f64::max);
        let points = 2001;
        let h = (hi - lo) / (points - 1) as f64;
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for i in 0..points {
            let x = lo + h * i as f64;
            let wt = if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
            let p = wt * experts.iter().map(|&(m, v)| normal_pdf(x, m, v)).product::<f64>();
            z += p;
            m1 += p * x;
            m2 += p * x * x;
        }
        let mean = m1 / z;
        let var = m2 / z - mean * mean;
        worst = worst.max((mean - fused.mean()[0]).abs()).max((var - fused.variance()[0]).abs());
    }
    outcome(worst <= 1e-3, format!("max |closed form - grid| = {worst:.2e} over 50 pairs"))
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / (na * nb)
}

/// Indices ordered by descending score, ties by ascending index, via a full sort.
fn ranked(scores: &[(usize, f64)]) -> Vec<usize> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|p| p.0).collect()
}

fn edge_set(g: &ItemGraph) -> BTreeSet<(usize, usize)> {
    g.edges().map(|(i, j, _)| (i, j)).collect()
}

fn graph_oracles() -> Outcome {
    let mut rng = SeededRng::new(4).substream("graphs");
    let mut failures = Vec::new();
    for inst in 0..100 {
        let n = rng.random_range(6..=30);
        let d = rng.random_range(2..=6);
        let x: DenseMatrix<f64> = DenseMatrix::from_fn(n, d, |_, _| standard_normal::<f64>(&mut rng));
        let k = rng.random_range(1..n.min(8));

        let mut expect = BTreeSet::new();
        for i in 0..n {
            let scored: Vec<(usize, f64)> = (0..n).filter(|&j| j != i).map(|j| (j, cos(x.row(i), x.row(j)).max(0.0))).collect();
            for j in ranked(&scored).into_iter().take(k) {
                expect.insert((i.min(j), i.max(j)));
            }
        }
        let g = knn_graph_symmetric(&x, k, 0.0, None).unwrap();
        if edge_set(&g) != expect {
            failures.push(format!("knn#{inst}"));
        }
        if g.degrees().iter().any(|&deg| deg < k) {
            failures.push(format!("knn-degree#{inst}"));
        }

        let eps = rng.random_range(0.0..0.9);
        let expect_eps: BTreeSet<(usize, usize)> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| {
                let s = cos(x.row(i), x.row(j)).max(0.0);
                s > 0.0 && s >= eps
            })
            .collect();
        if edge_set(&epsilon_graph(&x, eps)) != expect_eps {
            failures.push(format!("eps#{inst}"));
        }

        let n_test = rng.random_range(1..=6);
        let x_test: DenseMatrix<f64> = DenseMatrix::from_fn(n_test, d, |_, _| standard_normal::<f64>(&mut rng));
        let ka = rng.random_range(1..=n.min(5));
        let attached = attach_test_items(&g, &x, &x_test, ka).unwrap();
        let mut expect_att = expect.clone();
        for t in 0..n_test {
            let scored: Vec<(usize, f64)> = (0..n).map(|s| (s, cos(x_test.row(t), x.row(s)).max(0.0))).collect();
            for s in ranked(&scored).into_iter().take(ka) {
                expect_att.insert((s, n + t));
            }
        }
        if edge_set(&attached) != expect_att {
            failures.push(format!("attach#{inst}"));
        }
        if attached.edges().any(|(i, j, _)| i >= n && j >= n) {
            failures.push(format!("attach-test-test#{inst}"));
        }

        let mut scored: Vec<(usize, f64)> = (0..n).map(|i| (i, (rng.random_range(0..6) as f64) / 5.0)).collect();
        scored.shuffle(&mut rng);
        let kk = rng.random_range(1..=n);
        if top_k_by_score(&mut scored.clone(), kk) != ranked(&scored).into_iter().take(kk).collect::<Vec<_>>() {
            failures.push(format!("topk#{inst}"));
        }
    }
    outcome(failures.is_empty(), if failures.is_empty() { "kNN, epsilon, attachment and top-K match brute force on 100 instances".to_string() } else { format!("mismatches: {}", failures.join(" ")) })
}

fn with_split(mut t: PanelTable, frac: f64) -> PanelTable {
    if t.split.contains(&Split::Unassigned) {
        t = gemi::ingest::assign_split(&t, frac, &mut SeededRng::new(0).substream("split")).unwrap();
    }
    t
}

fn short_config(kind: ModelKind, protocol: Protocol, seed: u64) -> TrainConfig {
    let mut c = TrainConfig::defaults(kind);
    c.model = kind;
    c.seed = seed;
    c.epochs = 30;
    c.protocol = protocol;
    c.hidden = 32;
    c.latent = 16;
    c
}

fn leakage() -> Outcome {
    let panels = with_split(planted_panels(&PlantedConfig::default(), 5).unwrap(), 0.2);
    let test = panels.test_indices();
    let mut problems = Vec::new();

    for kind in [ModelKind::Gcn, ModelKind::Gae, ModelKind::Vgae] {
        let cfg = short_config(kind, Protocol::Transductive, 11);
        let mut flipped = panels.clone();
        for &t in &test {
            for l in 0..3 {
                flipped.labels.set(t, l, !panels.labels.get(t, l));
            }
        }
        let a = train::<f64>(&panels, &cfg).unwrap();
        let b = train::<f64>(&flipped, &cfg).unwrap();
        let same = a.report.epochs.len() == b.report.epochs.len()
            && a.report.epochs.iter().zip(&b.report.epochs).all(|(x, y)| x.total.to_bits() == y.total.to_bits());
        if !same {
            problems.push(format!("{kind} transductive loss moved"));
        }
    }

    for kind in [ModelKind::Gcn, ModelKind::Gae, ModelKind::Vgae] {
        let cfg = short_config(kind, Protocol::Inductive, 12);
        let a = train::<f64>(&panels, &cfg).unwrap();
        let target = test[0];
        let mut perturbed = panels.clone();
        for j in 0..perturbed.embeddings.cols() {
            let v = perturbed.embeddings.get(target, j);
            perturbed.embeddings.set(target, j, -2.0 * v + 0.5);
        }
        let b = train::<f64>(&perturbed, &cfg).unwrap();
        let weights_same = a.params.tensors().iter().zip(b.params.tensors()).all(|(p, q)| {
            p.as_slice().iter().zip(q.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits())
        });
        let fa = a.infer().unwrap();
        let fb = b.infer().unwrap();
        let la = a.to_panel_rows(&fa.logits, panels.len());
        let lb = b.to_panel_rows(&fb.logits, panels.len());
        let others_same = test
            .iter()
            .filter(|&&t| t != target)
            .all(|&t| la.row(t).iter().zip(lb.row(t)).all(|(x, y)| x.to_bits() == y.to_bits()));
        let own_changed = la.row(target) != lb.row(target);
        if !weights_same {
            problems.push(format!("{kind} inductive weights moved"));
        }
        if !others_same {
            problems.push(format!("{kind} other test predictions moved"));
        }
        if !own_changed {
            problems.push(format!("{kind} perturbation had no effect on its own item"));
        }
    }
    outcome(problems.is_empty(), if problems.is_empty() { "test labels and test features never reach training (3 backbones x 2 protocols)".to_string() } else { problems.join("; ") })
}

/// End-to-end brute force: mean rows, cosine against every test row, full
/// sort, explicit counting.
fn brute_force_precision(reps: &DenseMatrix<f64>, labels: &LabelMatrix, test: &[usize], users: &[UserProfile], k_rec: usize) -> Vec<Vec<f64>> {
    users
        .iter()
        .map(|u| {
            let d = reps.cols();
            let mut mean = vec![0.0; d];
            for &i in &u.items {
                for j in 0..d {
                    mean[j] += reps.get(i, j);
                }
            }
            mean.iter_mut().for_each(|v| *v /= u.items.len() as f64);
            let scored: Vec<(usize, f64)> = test.iter().enumerate().map(|(p, &t)| (p, cos(&mean, reps.row(t)))).collect();
            let recs: Vec<usize> = ranked(&scored).into_iter().take(k_rec).map(|p| test[p]).collect();
            (0..3)
                .map(|l| {
                    let mut hits = 0;
                    for &r in &recs {
                        if u.preferences[l] > 0.5 && labels.get(r, l) {
                            hits += 1;
                        }
                    }
                    hits as f64 / k_rec as f64
                })
                .collect()
        })
        .collect()
}

fn evaluation_oracle() -> Outcome {
    let mut rng = SeededRng::new(6).substream("eval");
    let mut mismatches = 0;
    let mut instances = 0;
    for _ in 0..60 {
        let n_train = rng.random_range(5..=40);
        let n_test = rng.random_range(1..=30);
        let n = n_train + n_test;
        let d = rng.random_range(2..=8);
        let reps: DenseMatrix<f64> = DenseMatrix::from_fn(n, d, |_, _| standard_normal::<f64>(&mut rng));
        let labels = LabelMatrix::new((0..n).map(|_| [rng.random_bool(0.4), rng.random_bool(0.5), rng.random_bool(0.2)]).collect());
        let test: Vec<usize> = (n_train..n).collect();
        let num_users = rng.random_range(1..=50);
        let users: Vec<UserProfile> = (0..num_users)
            .map(|u| {
                let m = rng.random_range(1..=n_train.min(5));
                let mut items: Vec<usize> = rand::seq::index::sample(&mut rng, n_train, m).into_vec();
                items.sort_unstable();
                let prefs = (0..3).map(|_| if rng.random_bool(0.6) { 1.0 } else { 0.0 }).collect();
                UserProfile::new(format!("u{u}"), items, prefs)
            })
            .collect();
        let k_rec = rng.random_range(1..=8);
        let inputs = EvalInputs { labels: &labels, test: &test, profiles: &users, k_rec };
        let report = evaluate("oracle", RepresentationSource::Features, 0, &reps, &inputs).unwrap();
        let expect = brute_force_precision(&reps, &labels, &test, &users, k_rec);
        instances += 1;
        let means_match = (0..3).all(|l| {
            let m: f64 = expect.iter().map(|r| r[l]).sum::<f64>() / num_users as f64;
            m == report.labels[l].mean
        });
        if report.per_user != expect || !means_match {
            mismatches += 1;
        }
    }
    let std = aggregate(&[vec![0.4], vec![0.6]]).unwrap()[0].std;
    outcome(
        mismatches == 0 && (std - 0.1).abs() <= 1e-15,
        format!("{mismatches} mismatches over {instances} instances; std{{0.4, 0.6}} = {std}"),
    )
}

fn planted_config(seed: u64, prevalence: [f64; 3], tag: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(ModelKind::Gcn).with_seed(seed);
    cfg.data.planted = Some(PlantedConfig { prevalence, ..PlantedConfig::default() });
    cfg.output_dir = scratch_dir(&format!("{tag}-{seed}"));
    cfg
}

fn planted_signal() -> Outcome {
    let start = Instant::now();
    let mut model = [0.0; 3];
    let mut random = [0.0; 3];
    let seeds = 5;
    for seed in 0..seeds {
        let cfg = planted_config(seed, PlantedConfig::default().prevalence, "planted");
        assert_eq!(cfg.train.epochs, 450);
        let run = run_experiment(&cfg).unwrap();
        let base = run.metrics.random_baseline.expect("baseline enabled");
        for l in 0..3 {
            model[l] += run.metrics.labels[l].mean / seeds as f64;
            random[l] += base[l] / seeds as f64;
        }
        let _ = std::fs::remove_dir_all(&cfg.output_dir);
    }
    let secs = start.elapsed().as_secs_f64();
    let margins: Vec<f64> = (0..3).map(|l| model[l] - random[l]).collect();
    outcome(
        margins.iter().all(|&m| m >= 0.20) && secs < 120.0,
        format!(
            "P@5 {:.3}/{:.3}/{:.3} vs random {:.3}/{:.3}/{:.3}, margins {:.3}/{:.3}/{:.3} (need >= 0.20), {secs:.1}s",
            model[0], model[1], model[2], random[0], random[1], random[2], margins[0], margins[1], margins[2]
        ),
    )
}

/// Runs only when the released panel embeddings and labels are supplied via
/// `GEMI_REFERENCE_EMBEDDINGS` and `GEMI_REFERENCE_LABELS`.
fn conditional_reproduction() -> Outcome {
    let (Ok(emb), Ok(lab)) = (std::env::var("GEMI_REFERENCE_EMBEDDINGS"), std::env::var("GEMI_REFERENCE_LABELS")) else {
        return outcome(true, "skipped: GEMI_REFERENCE_EMBEDDINGS / GEMI_REFERENCE_LABELS not set");
    };
    let mut cfg = ExperimentConfig::defaults(ModelKind::Gcn);
    cfg.data.embeddings = Some(emb.into());
    cfg.data.labels = Some(lab.into());
    cfg.output_dir = scratch_dir("reference");
    match run_experiment(&cfg) {
        Ok(run) => {
            let myth = run.metrics.mean("mythology").unwrap_or(f64::NAN);
            let tree = run.metrics.mean("tree").unwrap_or(f64::NAN);
            let ok = (myth - 0.61).abs() <= 0.15 && (tree - 0.62).abs() <= 0.15;
            outcome(ok, format!("mythology {myth:.3} (ref 0.61), tree {tree:.3} (ref 0.62), tolerance 0.15"))
        }
        Err(e) => outcome(false, format!("run failed: {e}")),
    }
}

fn determinism() -> Outcome {
    let mut problems = Vec::new();
    for kind in [ModelKind::Gcn, ModelKind::Gae, ModelKind::Vgae] {
        let mut bytes = Vec::new();
        for rep in 0..2 {
            let mut cfg = ExperimentConfig::defaults(kind).with_seed(21);
            cfg.data.planted = Some(PlantedConfig::default());
            cfg.train.epochs = 60;
            cfg.eval.baseline_draws = 500;
            cfg.output_dir = scratch_dir(&format!("determinism-{kind}-{rep}"));
            run_experiment(&cfg).unwrap();
            bytes.push(std::fs::read(cfg.output_dir.join("metrics.json")).unwrap());
            let _ = std::fs::remove_dir_all(&cfg.output_dir);
        }
        if bytes[0] != bytes[1] {
            problems.push(kind.to_string());
        }
    }
    outcome(problems.is_empty(), if problems.is_empty() { "metrics.json byte-identical across repeated runs (gcn, gae, vgae)".to_string() } else { format!("differs for {}", problems.join(", ")) })
}

fn imbalance() -> Outcome {
    let prevalence = [0.5, 0.5, 0.1];
    let seeds = 5;
    let (mut with, mut without) = (0.0, 0.0);
    for seed in 0..seeds {
        let cfg = planted_config(seed, prevalence, "imbalance-on");
        assert_eq!(cfg.train.loss.kind, SupervisedLoss::Focal);
        assert!(cfg.train.graph.augment.iter().any(|a| a.label == "tree" && a.k == 25));
        let on = run_experiment(&cfg).unwrap();

        let mut plain = planted_config(seed, prevalence, "imbalance-off");
        plain.train.loss.kind = SupervisedLoss::Wbce;
        plain.train.graph.augment.clear();
        let off = run_experiment(&plain).unwrap();

        with += on.metrics.mean("tree").unwrap() / seeds as f64;
        without += off.metrics.mean("tree").unwrap() / seeds as f64;
        let _ = std::fs::remove_dir_all(&cfg.output_dir);
        let _ = std::fs::remove_dir_all(&plain.output_dir);
    }
    outcome(with - without > 0.0, format!("tree P@5 {with:.3} (augment + focal) vs {without:.3} (plain BCE), margin {:+.3}", with - without))
}

fn main() -> ExitCode {
    let criteria: Vec<(u8, &str, bool, fn() -> Outcome)> = vec![
        (1, "gradient correctness", true, gradients),
        (2, "loss identities", true, loss_identities),
        (3, "product-of-experts oracle", true, poe_oracle),
        (4, "graph oracles", true, graph_oracles),
        (5, "leakage invariants", true, leakage),
        (6, "evaluation oracle", true, evaluation_oracle),
        (7, "planted-signal end to end", true, planted_signal),
        (8, "conditional reproduction", false, conditional_reproduction),
        (9, "determinism", true, determinism),
        (10, "imbalance machinery", true, imbalance),
    ];
    let mut failed = 0;
    for (id, name, gating, run) in criteria {
        let r = run();
        let tag = match (r.passed, gating) {
            (_, false) => "INFO",
            (true, true) => "PASS",
            (false, true) => "FAIL",
        };
        if !r.passed && gating {
            failed += 1;
        }
        println!("criterion {id:>2} [{tag}] {name}: {}", r.detail);
    }
    if failed > 0 {
        println!("{failed} gating criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
