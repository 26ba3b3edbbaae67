// SPDX-License-Identifier: Apache-2.0

//! Embedding datasets: the in-memory model, the CSV format and a synthetic
//! generator with a planted sensitive direction.
//!
//! CSV layout: header `node_id,s,y,split,e0,e1,...,e{p-1}`, one row per node,
//! UTF-8 with LF line endings. Floats are written with 17 significant digits
//! so a save/load cycle reproduces every bit.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split tag `{other}`")),
        }
    }
}

/// Which nodes an operation looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    All,
    Train,
    Val,
    Test,
}

impl Scope {
    pub fn admits(self, split: Split) -> bool {
        match self {
            Scope::All => true,
            Scope::Train => split == Split::Train,
            Scope::Val => split == Split::Val,
            Scope::Test => split == Split::Test,
        }
    }
}

/// Node embeddings with a binary sensitive attribute, a task label and a split
/// tag per node. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    dim: usize,
    num_classes: usize,
    node_ids: Vec<u64>,
    embeddings: Vec<f64>,
    sensitive: Vec<u8>,
    labels: Vec<usize>,
    splits: Vec<Split>,
}

impl EmbeddingDataset {
    /// Builds a dataset from row-major embeddings, checking every invariant.
    pub fn new(
        dim: usize,
        num_classes: usize,
        node_ids: Vec<u64>,
        embeddings: Vec<f64>,
        sensitive: Vec<u8>,
        labels: Vec<usize>,
        splits: Vec<Split>,
    ) -> Result<Self> {
        let n = node_ids.len();
        if n == 0 {
            return Err(Error::InvalidDataset("no nodes".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidDataset("embedding dimension is zero".into()));
        }
        if num_classes < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if embeddings.len() != n * dim {
            return Err(Error::DimensionMismatch {
                expected: n * dim,
                got: embeddings.len(),
            });
        }
        for (name, len) in [
            ("sensitive", sensitive.len()),
            ("labels", labels.len()),
            ("splits", splits.len()),
        ] {
            if len != n {
                return Err(Error::InvalidDataset(format!(
                    "{name} has {len} entries for {n} nodes"
                )));
            }
        }
        if let Some(i) = sensitive.iter().position(|&s| s > 1) {
            return Err(Error::InvalidDataset(format!(
                "node {i}: sensitive value {} is not binary",
                sensitive[i]
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label: labels[i],
                classes: num_classes,
            });
        }
        if embeddings.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embeddings"));
        }
        Ok(Self {
            dim,
            num_classes,
            node_ids,
            embeddings,
            sensitive,
            labels,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    pub fn embeddings(&self) -> &[f64] {
        &self.embeddings
    }

    pub fn node_id(&self, i: usize) -> u64 {
        self.node_ids[i]
    }

    pub fn sensitive(&self) -> &[u8] {
        &self.sensitive
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    /// Indices of nodes admitted by `scope`, in row order.
    pub fn indices(&self, scope: Scope) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| scope.admits(self.splits[i]))
            .collect()
    }
}

fn parse_err(row: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        row,
        msg: msg.into(),
    }
}

/// Parses the dataset CSV format from a string. The class count is inferred
/// as `max(label) + 1`, floored at 2.
pub fn parse_dataset(text: &str) -> Result<EmbeddingDataset> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(0, "missing header"))?;
    let cols: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if cols.len() < 5 || cols[..4] != ["node_id", "s", "y", "split"] {
        return Err(parse_err(
            0,
            "header must start with `node_id,s,y,split` followed by e0..e{p-1}",
        ));
    }
    for (j, c) in cols[4..].iter().enumerate() {
        if *c != format!("e{j}") {
            return Err(parse_err(0, format!("expected column `e{j}`, found `{c}`")));
        }
    }
    let dim = cols.len() - 4;

    let mut node_ids = Vec::new();
    let mut embeddings = Vec::new();
    let mut sensitive = Vec::new();
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    for (k, line) in lines.enumerate() {
        let row = k + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(parse_err(
                row,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| parse_err(row, format!("bad node_id `{}`", fields[0])))?;
        let s: u8 = match fields[1] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(parse_err(
                    row,
                    format!("sensitive value `{other}` is not 0 or 1"),
                ))
            }
        };
        let y: usize = fields[2]
            .parse()
            .map_err(|_| parse_err(row, format!("bad label `{}`", fields[2])))?;
        let split: Split = fields[3].parse().map_err(|e: String| parse_err(row, e))?;
        for (j, f) in fields[4..].iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(row, format!("bad float `{f}` in e{j}")))?;
            if !v.is_finite() {
                return Err(parse_err(row, format!("non-finite value in e{j}")));
            }
            embeddings.push(v);
        }
        node_ids.push(id);
        sensitive.push(s);
        labels.push(y);
        splits.push(split);
    }
    if node_ids.is_empty() {
        return Err(parse_err(0, "no data rows"));
    }
    let num_classes = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    EmbeddingDataset::new(
        dim,
        num_classes,
        node_ids,
        embeddings,
        sensitive,
        labels,
        splits,
    )
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

/// Renders the dataset in CSV form.
pub fn format_dataset(ds: &EmbeddingDataset) -> String {
    let mut out = String::from("node_id,s,y,split");
    for j in 0..ds.dim() {
        write!(out, ",e{j}").unwrap();
    }
    out.push('\n');
    for i in 0..ds.len() {
        write!(
            out,
            "{},{},{},{}",
            ds.node_ids[i],
            ds.sensitive[i],
            ds.labels[i],
            ds.splits[i].as_str()
        )
        .unwrap();
        for v in ds.row(i) {
            write!(out, ",{v:.16e}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn save_dataset(ds: &EmbeddingDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_dataset(ds)).map_err(|e| Error::io(path, e))
}

fn unit_vector(dim: usize, axis: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[axis.min(dim - 1)] = 1.0;
    v
}

/// Parameters of the synthetic embedding generator.
///
/// Node `i` gets `h_i = (s_i - 1/2) * group_gap * planted_direction
/// + (c_i - (C-1)/2) * task_gap * task_signal + noise_std * N(0, I)`, where
/// `c_i` is the clean class. The observed label equals `s_i` with probability
/// `label_leak` and `c_i` otherwise, which plants a label/sensitive
/// correlation that the embedding geometry alone does not explain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    #[serde(default = "default_classes")]
    pub num_classes: usize,
    /// Unit vector; defaults to the first axis.
    #[serde(default)]
    pub planted_direction: Option<Vec<f64>>,
    pub group_gap: f64,
    /// Unit vector; defaults to the second axis.
    #[serde(default)]
    pub task_signal: Option<Vec<f64>>,
    pub task_gap: f64,
    pub noise_std: f64,
    pub label_leak: f64,
}

fn default_classes() -> usize {
    2
}

impl Default for SyntheticSpec {
    /// The biased reference setup used for end-to-end checks.
    fn default() -> Self {
        Self {
            n: 1000,
            p: 16,
            num_classes: 2,
            planted_direction: None,
            group_gap: 0.8,
            task_signal: None,
            task_gap: 2.0,
            noise_std: 0.25,
            label_leak: 0.2,
        }
    }
}

impl SyntheticSpec {
    pub fn planted(&self) -> Vec<f64> {
        self.planted_direction
            .clone()
            .unwrap_or_else(|| unit_vector(self.p, 0))
    }

    pub fn task(&self) -> Vec<f64> {
        self.task_signal
            .clone()
            .unwrap_or_else(|| unit_vector(self.p, 1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n < 4 {
            return bad(format!("n = {} cannot populate all three splits", self.n));
        }
        if self.p == 0 {
            return bad("p must be at least 1".into());
        }
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2".into());
        }
        for (name, v) in [("planted_direction", self.planted()), ("task_signal", self.task())] {
            if v.len() != self.p {
                return bad(format!("{name} has length {}, expected {}", v.len(), self.p));
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return bad(format!("{name} must have unit norm, got {norm}"));
            }
        }
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be positive".into());
        }
        if !(self.group_gap >= 0.0 && self.group_gap.is_finite()) {
            return bad("group_gap must be non-negative".into());
        }
        if !self.task_gap.is_finite() {
            return bad("task_gap must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.label_leak) {
            return bad("label_leak must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Draws a dataset from `spec`. Pure in `(spec, seed)`. Splits are assigned
/// 50/25/25 (train/val/test) over a seeded shuffle.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<EmbeddingDataset> {
    spec.validate()?;
    let (n, p, c) = (spec.n, spec.p, spec.num_classes);
    let planted = spec.planted();
    let task = spec.task();
    let mut rng = rng::stream(seed, Domain::Synthetic, 0);

    let mut embeddings = Vec::with_capacity(n * p);
    let mut sensitive = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let center = (c as f64 - 1.0) / 2.0;
    for _ in 0..n {
        let s: u8 = rng.random_range(0..2);
        let clean: usize = rng.random_range(0..c);
        let leak = rng.random::<f64>() < spec.label_leak;
        let group = (s as f64 - 0.5) * spec.group_gap;
        let shift = (clean as f64 - center) * spec.task_gap;
        for j in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            embeddings.push(group * planted[j] + shift * task[j] + spec.noise_std * z);
        }
        sensitive.push(s);
        labels.push(if leak { s as usize } else { clean });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = n / 2;
    let n_val = n / 4;
    let mut splits = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    EmbeddingDataset::new(
        p,
        c,
        (0..n as u64).collect(),
        embeddings,
        sensitive,
        labels,
        splits,
    )
}
