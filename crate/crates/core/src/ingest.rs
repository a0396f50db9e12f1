//! CSV loaders and writers for panel embeddings, labels, user interactions
//! and per-modality Gaussian posteriors.
//!
//! Formats (UTF-8, header row required):
//!
//! * embeddings: `id,f0,f1,...,f{d-1}`
//! * labels: `id,animal,mythology,tree[,split]` with split in `{train,test}`
//! * interactions: `user_id,panel_id,rating`
//! * gaussians: `id,mu_0..mu_{d-1},logvar_0..logvar_{d-1}`
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/load cycle reproduces every value exactly.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{GemiError, Result};
use crate::numerics::DenseMatrix;
use crate::Matrix;

/// Label columns, in file and matrix order.
pub const LABEL_NAMES: [&str; 3] = ["animal", "mythology", "tree"];
pub const NUM_LABELS: usize = LABEL_NAMES.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Unassigned,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        })
    }
}

/// Binary `n × 3` label matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    rows: usize,
    data: Vec<bool>,
}

impl LabelMatrix {
    pub fn new(rows: Vec<[bool; NUM_LABELS]>) -> Self {
        Self {
            rows: rows.len(),
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn zeros(rows: usize) -> Self {
        Self {
            rows,
            data: vec![false; rows * NUM_LABELS],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        NUM_LABELS
    }

    #[inline]
    pub fn get(&self, i: usize, l: usize) -> bool {
        self.data[i * NUM_LABELS + l]
    }

    #[inline]
    pub fn set(&mut self, i: usize, l: usize, v: bool) {
        self.data[i * NUM_LABELS + l] = v;
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.data[i * NUM_LABELS..(i + 1) * NUM_LABELS]
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            rows: idx.len(),
            data: idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
        }
    }

    /// Number of rows in `idx` positive for label `l`.
    pub fn positives(&self, idx: &[usize], l: usize) -> usize {
        idx.iter().filter(|&&i| self.get(i, l)).count()
    }
}

/// Panels with features, labels and split tags, all row-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelTable {
    pub ids: Vec<String>,
    pub embeddings: Matrix,
    pub labels: LabelMatrix,
    pub split: Vec<Split>,
}

impl PanelTable {
    pub fn new(ids: Vec<String>, embeddings: Matrix, labels: LabelMatrix, split: Vec<Split>) -> Result<Self> {
        let n = ids.len();
        if embeddings.rows() != n || labels.rows() != n || split.len() != n {
            return Err(GemiError::Validation(format!(
                "panel table misaligned: {n} ids, {} embedding rows, {} label rows, {} split tags",
                embeddings.rows(),
                labels.rows(),
                split.len()
            )));
        }
        check_unique(&ids)?;
        Ok(Self {
            ids,
            embeddings,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn indices_with(&self, tag: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == tag).collect()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        self.indices_with(Split::Train)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.indices_with(Split::Test)
    }

    /// Concatenates tables (e.g. several collection phases) in order.
    pub fn concat(tables: Vec<PanelTable>) -> Result<Self> {
        let mut it = tables.into_iter();
        let Some(mut acc) = it.next() else {
            return Err(GemiError::InvalidArgument("no tables to concatenate".into()));
        };
        for t in it {
            acc.embeddings = acc.embeddings.vstack(&t.embeddings)?;
            acc.ids.extend(t.ids);
            acc.labels.data.extend(t.labels.data);
            acc.labels.rows += t.labels.rows;
            acc.split.extend(t.split);
        }
        check_unique(&acc.ids)?;
        Ok(acc)
    }

    pub fn id_index(&self) -> HashMap<String, usize> {
        self.ids.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: String,
    /// Row index into the panel table.
    pub panel: usize,
    pub rating: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionTable {
    pub rows: Vec<Interaction>,
    /// Rows referencing unknown panels that were discarded while loading.
    pub dropped_unknown: usize,
}

impl InteractionTable {
    /// Users in first-appearance order with the row indices of their ratings.
    pub fn by_user(&self) -> Vec<(String, Vec<usize>)> {
        let mut order: Vec<(String, Vec<usize>)> = Vec::new();
        let mut pos: HashMap<&str, usize> = HashMap::new();
        for (r, row) in self.rows.iter().enumerate() {
            let k = *pos.entry(row.user_id.as_str()).or_insert_with(|| {
                order.push((row.user_id.clone(), Vec::new()));
                order.len() - 1
            });
            order[k].1.push(r);
        }
        order
    }
}

/// Per-panel diagonal Gaussian for one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTable {
    pub means: Matrix,
    pub log_vars: Matrix,
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(GemiError::Validation(format!("duplicate panel id `{id}`")));
        }
    }
    Ok(())
}

struct CsvRows {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn read_csv(path: &Path) -> Result<CsvRows> {
    if !path.exists() {
        return Err(GemiError::MissingFile(path.to_path_buf()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut header = None;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let cells: Vec<String> = rec.iter().map(str::to_owned).collect();
        if cells.iter().all(|c| c.is_empty()) {
            continue;
        }
        if header.is_none() {
            header = Some(cells);
        } else {
            rows.push((line, cells));
        }
    }
    Ok(CsvRows {
        path: path.to_path_buf(),
        header: header.unwrap_or_default(),
        rows,
    })
}

fn csv_err(path: &Path, e: csv::Error) -> GemiError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => GemiError::io(path, io),
        other => GemiError::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("{other:?}"),
        },
    }
}

impl CsvRows {
    fn err(&self, line: u64, msg: impl Into<String>) -> GemiError {
        GemiError::Parse {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn expect_header(&self, expected: &[String]) -> Result<()> {
        if self.header != expected {
            return Err(self.err(1, format!("expected header `{}`, found `{}`", expected.join(","), self.header.join(","))));
        }
        Ok(())
    }

    fn parse_f64(&self, line: u64, cell: &str) -> Result<f64> {
        let v: f64 = cell
            .parse()
            .map_err(|_| self.err(line, format!("non-numeric value `{cell}`")))?;
        if !v.is_finite() {
            return Err(self.err(line, format!("non-finite value `{cell}`")));
        }
        Ok(v)
    }

    /// `id` followed by `width` numeric cells per row.
    fn numeric_rows(&self, width: usize) -> Result<(Vec<String>, Matrix)> {
        if self.rows.is_empty() {
            return Err(self.err(1, "no rows"));
        }
        let mut ids = Vec::with_capacity(self.rows.len());
        let mut seen = HashSet::new();
        let mut data = Vec::with_capacity(self.rows.len() * width);
        for (line, cells) in &self.rows {
            if cells.len() != width + 1 {
                return Err(self.err(*line, format!("expected {} cells, found {}", width + 1, cells.len())));
            }
            if !seen.insert(cells[0].clone()) {
                return Err(self.err(*line, format!("duplicate id `{}`", cells[0])));
            }
            ids.push(cells[0].clone());
            for c in &cells[1..] {
                data.push(self.parse_f64(*line, c)?);
            }
        }
        let m = DenseMatrix::new(ids.len(), width, data)?;
        Ok((ids, m))
    }
}

/// Loads an embeddings file; row order follows the file.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<(Vec<String>, Matrix)> {
    let csv = read_csv(path.as_ref())?;
    if csv.header.first().map(String::as_str) != Some("id") {
        return Err(csv.err(1, "header must start with `id`"));
    }
    let d = csv.header.len() - 1;
    let expected: Vec<String> = std::iter::once("id".to_string())
        .chain((0..d).map(|j| format!("f{j}")))
        .collect();
    csv.expect_header(&expected)?;
    csv.numeric_rows(d)
}

pub fn write_embeddings(path: impl AsRef<Path>, ids: &[String], m: &Matrix) -> Result<()> {
    let mut out = String::from("id");
    for j in 0..m.cols() {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for (i, id) in ids.iter().enumerate() {
        out.push_str(id);
        for v in m.row(i) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    write_file(path.as_ref(), &out)
}

/// Loads labels and aligns them to `ids`. A missing split column leaves
/// every row unassigned.
pub fn load_labels(path: impl AsRef<Path>, ids: &[String]) -> Result<(LabelMatrix, Vec<Split>)> {
    let csv = read_csv(path.as_ref())?;
    let base: Vec<String> = std::iter::once("id")
        .chain(LABEL_NAMES)
        .map(str::to_owned)
        .collect();
    let has_split = csv.header.len() == base.len() + 1;
    let mut expected = base.clone();
    if has_split {
        expected.push("split".into());
    }
    csv.expect_header(&expected)?;
    if csv.rows.is_empty() {
        return Err(csv.err(1, "no rows"));
    }
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut labels = LabelMatrix::zeros(ids.len());
    let mut split = vec![Split::Unassigned; ids.len()];
    let mut seen = vec![false; ids.len()];
    for (line, cells) in &csv.rows {
        if cells.len() != expected.len() {
            return Err(csv.err(*line, format!("expected {} cells, found {}", expected.len(), cells.len())));
        }
        let Some(&i) = index.get(cells[0].as_str()) else {
            return Err(csv.err(*line, format!("unknown panel id `{}`", cells[0])));
        };
        if std::mem::replace(&mut seen[i], true) {
            return Err(csv.err(*line, format!("duplicate id `{}`", cells[0])));
        }
        for l in 0..NUM_LABELS {
            let v = match cells[l + 1].as_str() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(csv.err(*line, format!("label `{}` must be 0 or 1, found `{other}`", LABEL_NAMES[l])))
                }
            };
            labels.set(i, l, v);
        }
        if has_split {
            split[i] = match cells[NUM_LABELS + 1].as_str() {
                "train" => Split::Train,
                "test" => Split::Test,
                "" | "unassigned" => Split::Unassigned,
                other => return Err(csv.err(*line, format!("split must be train or test, found `{other}`"))),
            };
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(GemiError::Validation(format!(
            "{}: no labels for panel `{}`",
            csv.path.display(),
            ids[i]
        )));
    }
    Ok((labels, split))
}

pub fn write_labels(path: impl AsRef<Path>, ids: &[String], labels: &LabelMatrix, split: Option<&[Split]>) -> Result<()> {
    let mut out = format!("id,{}", LABEL_NAMES.join(","));
    if split.is_some() {
        out.push_str(",split");
    }
    out.push('\n');
    for (i, id) in ids.iter().enumerate() {
        out.push_str(id);
        for l in 0..NUM_LABELS {
            out.push_str(if labels.get(i, l) { ",1" } else { ",0" });
        }
        if let Some(s) = split {
            match s[i] {
                Split::Unassigned => out.push(','),
                tag => out.push_str(&format!(",{tag}")),
            }
        }
        out.push('\n');
    }
    write_file(path.as_ref(), &out)
}

/// Embeddings plus labels from paired files.
pub fn load_panel_table(embeddings: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<PanelTable> {
    let (ids, emb) = load_embeddings(embeddings)?;
    let (lab, split) = load_labels(labels, &ids)?;
    PanelTable::new(ids, emb, lab, split)
}

/// First-column ids of any of the CSV formats above, in file order.
pub fn read_ids(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let csv = read_csv(path.as_ref())?;
    if csv.rows.is_empty() {
        return Err(csv.err(1, "no rows"));
    }
    Ok(csv.rows.iter().map(|(_, cells)| cells[0].clone()).collect())
}

/// Loads interactions. Duplicate `(user, panel)` pairs keep the last rating
/// (at the position of their first appearance); rows naming unknown panels
/// are dropped and counted.
pub fn load_interactions(path: impl AsRef<Path>, ids: &[String]) -> Result<InteractionTable> {
    let path = path.as_ref();
    let csv = read_csv(path)?;
    if csv.header.is_empty() && csv.rows.is_empty() {
        log::warn!("{}: empty interactions file", path.display());
        return Ok(InteractionTable::default());
    }
    csv.expect_header(&["user_id".into(), "panel_id".into(), "rating".into()])?;
    if csv.rows.is_empty() {
        log::warn!("{}: no interactions", path.display());
    }
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut rows: Vec<Interaction> = Vec::new();
    let mut slot: HashMap<(String, usize), usize> = HashMap::new();
    let mut dropped = 0;
    for (line, cells) in &csv.rows {
        if cells.len() != 3 {
            return Err(csv.err(*line, format!("expected 3 cells, found {}", cells.len())));
        }
        let rating = csv.parse_f64(*line, &cells[2])?;
        let Some(&panel) = index.get(cells[1].as_str()) else {
            dropped += 1;
            continue;
        };
        match slot.get(&(cells[0].clone(), panel)) {
            Some(&k) => rows[k].rating = rating,
            None => {
                slot.insert((cells[0].clone(), panel), rows.len());
                rows.push(Interaction {
                    user_id: cells[0].clone(),
                    panel,
                    rating,
                });
            }
        }
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} interactions with unknown panels", path.display());
    }
    Ok(InteractionTable {
        rows,
        dropped_unknown: dropped,
    })
}

pub fn write_interactions(path: impl AsRef<Path>, ids: &[String], table: &InteractionTable) -> Result<()> {
    let mut out = String::from("user_id,panel_id,rating\n");
    for r in &table.rows {
        out.push_str(&format!("{},{},{}\n", r.user_id, ids[r.panel], r.rating));
    }
    write_file(path.as_ref(), &out)
}

/// Loads one modality's Gaussian parameters aligned to `ids`.
pub fn load_gaussians(path: impl AsRef<Path>, ids: &[String]) -> Result<GaussianTable> {
    let csv = read_csv(path.as_ref())?;
    let width = csv.header.len().saturating_sub(1);
    if width == 0 || width % 2 != 0 {
        return Err(csv.err(1, "header must be `id,mu_0..mu_{d-1},logvar_0..logvar_{d-1}`"));
    }
    let d = width / 2;
    let expected: Vec<String> = std::iter::once("id".to_string())
        .chain((0..d).map(|j| format!("mu_{j}")))
        .chain((0..d).map(|j| format!("logvar_{j}")))
        .collect();
    csv.expect_header(&expected)?;
    let (file_ids, m) = csv.numeric_rows(width)?;
    let order = align(&csv, &file_ids, ids)?;
    let means = DenseMatrix::from_fn(ids.len(), d, |i, j| m.get(order[i], j));
    let log_vars = DenseMatrix::from_fn(ids.len(), d, |i, j| m.get(order[i], d + j));
    Ok(GaussianTable { means, log_vars })
}

pub fn write_gaussians(path: impl AsRef<Path>, ids: &[String], g: &GaussianTable) -> Result<()> {
    let d = g.means.cols();
    let mut out = String::from("id");
    for j in 0..d {
        out.push_str(&format!(",mu_{j}"));
    }
    for j in 0..d {
        out.push_str(&format!(",logvar_{j}"));
    }
    out.push('\n');
    for (i, id) in ids.iter().enumerate() {
        out.push_str(id);
        for v in g.means.row(i).iter().chain(g.log_vars.row(i)) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    write_file(path.as_ref(), &out)
}

/// Re-orders a secondary file (same id set) to the primary id order.
pub fn load_aligned_embeddings(path: impl AsRef<Path>, ids: &[String]) -> Result<Matrix> {
    let (file_ids, m) = load_embeddings(path.as_ref())?;
    let csv_path = path.as_ref().to_path_buf();
    let index: HashMap<&str, usize> = file_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut order = Vec::with_capacity(ids.len());
    for id in ids {
        match index.get(id.as_str()) {
            Some(&k) => order.push(k),
            None => {
                return Err(GemiError::Validation(format!(
                    "{}: missing panel `{id}`",
                    csv_path.display()
                )))
            }
        }
    }
    if file_ids.len() != ids.len() {
        return Err(GemiError::Validation(format!(
            "{}: {} rows but {} panels",
            csv_path.display(),
            file_ids.len(),
            ids.len()
        )));
    }
    Ok(m.select_rows(&order))
}

fn align(csv: &CsvRows, file_ids: &[String], ids: &[String]) -> Result<Vec<usize>> {
    let index: HashMap<&str, usize> = file_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let known: HashSet<&str> = ids.iter().map(String::as_str).collect();
    if let Some((k, id)) = file_ids.iter().enumerate().find(|(_, id)| !known.contains(id.as_str())) {
        return Err(csv.err(csv.rows[k].0, format!("unknown panel id `{id}`")));
    }
    ids.iter()
        .map(|id| {
            index.get(id.as_str()).copied().ok_or_else(|| {
                GemiError::Validation(format!("{}: missing panel `{id}`", csv.path.display()))
            })
        })
        .collect()
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| GemiError::io(parent, e))?;
    }
    let mut f = File::create(path).map_err(|e| GemiError::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| GemiError::io(path, e))
}

/// Label-combination key of a row.
fn stratum(labels: &LabelMatrix, i: usize) -> usize {
    (0..NUM_LABELS).fold(0, |k, l| k | ((labels.get(i, l) as usize) << l))
}

/// Assigns unassigned panels to train/test.
///
/// Panels are grouped by label combination and the per-group test counts are
/// chosen so that each label's test positives sit as close as possible to
/// `test_fraction` of its positives, with the total fixed at
/// `round(test_fraction · unassigned)`. Pre-assigned tags are kept. If some
/// label has fewer than two positives among the unassigned panels, a plain
/// random split is used instead.
pub fn assign_split(table: &PanelTable, test_fraction: f64, rng: &mut impl RngCore) -> Result<PanelTable> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(GemiError::InvalidArgument(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut out = table.clone();
    let pool = table.indices_with(Split::Unassigned);
    if pool.is_empty() {
        return Ok(out);
    }
    let total = (test_fraction * pool.len() as f64).round() as usize;
    let stratifiable = (0..NUM_LABELS).all(|l| table.labels.positives(&pool, l) >= 2);

    let mut chosen: Vec<usize> = Vec::with_capacity(total);
    if stratifiable {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in &pool {
            groups.entry(stratum(&table.labels, i)).or_default().push(i);
        }
        let keys: Vec<usize> = groups.keys().copied().collect();
        let sizes: Vec<usize> = keys.iter().map(|k| groups[k].len()).collect();
        let counts = allocate_strata(&keys, &sizes, total, test_fraction);
        for (members, &c) in groups.values_mut().zip(&counts) {
            members.shuffle(rng);
            chosen.extend_from_slice(&members[..c]);
        }
    } else {
        log::warn!("a label has fewer than 2 positives; falling back to a random split");
        let mut shuffled = pool.clone();
        shuffled.shuffle(rng);
        chosen.extend_from_slice(&shuffled[..total]);
    }
    let test: HashSet<usize> = chosen.into_iter().collect();
    for &i in &pool {
        out.split[i] = if test.contains(&i) { Split::Test } else { Split::Train };
    }
    Ok(out)
}

/// Integer test counts per label-combination group, summing to `total`,
/// minimising the squared deviation of per-label test positives from their
/// fractional targets. Starts from a largest-remainder allocation and applies
/// single-unit moves between groups while they improve the objective.
fn allocate_strata(keys: &[usize], sizes: &[usize], total: usize, frac: f64) -> Vec<usize> {
    let g = keys.len();
    let target: Vec<f64> = (0..NUM_LABELS)
        .map(|l| {
            frac * keys
                .iter()
                .zip(sizes)
                .filter(|(k, _)| (*k >> l) & 1 == 1)
                .map(|(_, &s)| s as f64)
                .sum::<f64>()
        })
        .collect();
    let cost = |c: &[usize]| -> f64 {
        (0..NUM_LABELS)
            .map(|l| {
                let got: usize = keys
                    .iter()
                    .zip(c)
                    .filter(|(k, _)| (*k >> l) & 1 == 1)
                    .map(|(_, &n)| n)
                    .sum();
                (got as f64 - target[l]).powi(2)
            })
            .sum()
    };

    let ideal: Vec<f64> = sizes.iter().map(|&s| frac * s as f64).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut assigned: usize = counts.iter().sum();
    for &k in order.iter().cycle().take(4 * g.max(1)) {
        if assigned >= total {
            break;
        }
        if counts[k] < sizes[k] {
            counts[k] += 1;
            assigned += 1;
        }
    }
    // Degenerate leftovers: fill anywhere with room.
    for k in 0..g {
        while assigned < total && counts[k] < sizes[k] {
            counts[k] += 1;
            assigned += 1;
        }
    }
    for k in 0..g {
        while assigned > total && counts[k] > 0 {
            counts[k] -= 1;
            assigned -= 1;
        }
    }

    let mut best = cost(&counts);
    loop {
        let mut improved = false;
        for from in 0..g {
            for to in 0..g {
                if from == to || counts[from] == 0 || counts[to] >= sizes[to] {
                    continue;
                }
                counts[from] -= 1;
                counts[to] += 1;
                let c = cost(&counts);
                if c + 1e-12 < best {
                    best = c;
                    improved = true;
                } else {
                    counts[from] += 1;
                    counts[to] -= 1;
                }
            }
        }
        if !improved {
            break;
        }
    }
    counts
}
