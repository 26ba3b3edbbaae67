// SPDX-License-Identifier: Apache-2.0

//! End-to-end orchestration: data, sensitive direction, adapter training,
//! classifier hardening, per-node certification and the fairness report.

pub mod metrics;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augmenter::{compute_direction, ProbeConfig, SensitiveDirection};
use crate::data::{generate_synthetic, load_dataset, EmbeddingDataset, Scope, SyntheticSpec};
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, Model};
use crate::rng::{self, Domain};
use crate::smoothing::{certify_nodes, CertificateRecord, NodeCertificate, SmoothingConfig};
use crate::training::{format_history_csv, harden_classifier, predict_rows, train, EpochRecord, Scheme, TrainConfig};

use metrics::{metric_acc_f1, metric_dp, metric_eo};

pub const CONFIG_VERSION: &str = "fairpar-config-1";

/// Where the embeddings come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    Path(PathBuf),
    Synthetic(SyntheticSpec),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SyntheticSpec::default())
    }
}

/// Which nodes get certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeSelection {
    #[default]
    Test,
    All,
}

impl NodeSelection {
    pub fn scope(self) -> Scope {
        match self {
            NodeSelection::Test => Scope::Test,
            NodeSelection::All => Scope::All,
        }
    }
}

impl std::str::FromStr for NodeSelection {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "test" => Ok(NodeSelection::Test),
            "all" => Ok(NodeSelection::All),
            other => Err(format!("unknown node selection `{other}`")),
        }
    }
}

/// Complete configuration of a run. Every section has defaults, so a config
/// file only needs `version` plus whatever it overrides. The master seed
/// drives data generation, training, hardening and certification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: String,
    pub dataset: DatasetSource,
    pub train: TrainConfig,
    pub smoothing: SmoothingConfig,
    pub probe: ProbeConfig,
    pub nodes: NodeSelection,
    pub seed: u64,
    /// Cap on the number of certified nodes (first ones in row order).
    pub max_certified: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION.to_string(),
            dataset: DatasetSource::default(),
            train: TrainConfig::default(),
            smoothing: SmoothingConfig::default(),
            probe: ProbeConfig::default(),
            nodes: NodeSelection::default(),
            seed: 0,
            max_certified: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported config version `{}` (expected `{CONFIG_VERSION}`)",
                self.version
            )));
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate()?;
        }
        self.train.validate()?;
        self.smoothing.validate()
    }

    /// Training config with the master seed applied.
    pub fn effective_train(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn load_data(&self) -> Result<EmbeddingDataset> {
        match &self.dataset {
            DatasetSource::Path(p) => load_dataset(p),
            DatasetSource::Synthetic(spec) => generate_synthetic(spec, self.seed),
        }
    }
}

/// Adapter/classifier fitted by [`fit`], with its training history.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: Model,
    pub direction: SensitiveDirection,
    pub history: Vec<EpochRecord>,
}

/// Direction estimation, scheme training and classifier hardening.
pub fn fit(ds: &EmbeddingDataset, cfg: &RunConfig) -> Result<Fitted> {
    let direction = compute_direction(ds, Scope::Train).map_err(|e| e.in_stage("direction"))?;
    let tcfg = cfg.effective_train();
    let outcome = train(ds, &tcfg, Some(&direction)).map_err(|e| e.in_stage("train"))?;
    let mut model = outcome.model;
    let mut rng = rng::stream(cfg.seed, Domain::Hardening, 0);
    model.classifier = harden_classifier(
        &model.adapter,
        &model.classifier,
        ds,
        tcfg.hardening_rounds,
        tcfg.hardening_std,
        tcfg.lr,
        &mut rng,
    )
    .map_err(|e| e.in_stage("harden"))?;
    Ok(Fitted {
        model,
        direction,
        history: outcome.history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub scheme: Scheme,
    pub acc: f64,
    pub macro_f1: f64,
    pub dp: f64,
    pub eo: f64,
    pub certified: usize,
    pub provable: usize,
    pub abstain_cs: usize,
    pub abstain_rs: usize,
    pub provable_fair_rate: f64,
    pub eps1: f64,
    pub confidence: f64,
    pub config: RunConfig,
    pub certificates: Vec<CertificateRecord>,
    /// Kept out of the JSON report so reports are byte-reproducible; written
    /// to `timing.json` instead.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl FairnessReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Aligned plain-text summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let rows: [(&str, String); 10] = [
            ("scheme", self.scheme.as_str().to_string()),
            ("acc", format!("{:.4}", self.acc)),
            ("macro_f1", format!("{:.4}", self.macro_f1)),
            ("dp", format!("{:.4}", self.dp)),
            ("eo", format!("{:.4}", self.eo)),
            ("eps1", format!("{:.4}", self.eps1)),
            ("certified", self.certified.to_string()),
            ("abstain (cs/rs)", format!("{}/{}", self.abstain_cs, self.abstain_rs)),
            (
                "provable_fair_rate",
                format!("{:.4} ({}/{})", self.provable_fair_rate, self.provable, self.certified),
            ),
            ("confidence", format!("{:.4}", self.confidence)),
        ];
        for (k, v) in rows {
            writeln!(s, "{k:<20} {v}").unwrap();
        }
        s
    }
}

/// Test-split metrics plus certification of the selected nodes.
pub fn evaluate(
    ds: &EmbeddingDataset,
    model: &Model,
    direction: &SensitiveDirection,
    cfg: &RunConfig,
) -> Result<(FairnessReport, Vec<NodeCertificate>)> {
    let start = Instant::now();
    let test = ds.indices(Scope::Test);
    if test.is_empty() {
        return Err(Error::InvalidDataset("no test nodes".into()).in_stage("metrics"));
    }
    let preds = predict_rows(model, ds, &test).map_err(|e| e.in_stage("metrics"))?;
    let labels: Vec<usize> = test.iter().map(|&i| ds.labels()[i]).collect();
    let sens: Vec<u8> = test.iter().map(|&i| ds.sensitive()[i]).collect();
    let (acc, macro_f1) = metric_acc_f1(&preds, &labels).map_err(|e| e.in_stage("metrics"))?;
    let dp = metric_dp(&preds, &sens).map_err(|e| e.in_stage("metrics"))?;
    let eo = metric_eo(&preds, &labels, &sens).map_err(|e| e.in_stage("metrics"))?;

    let mut nodes = ds.indices(cfg.nodes.scope());
    if let Some(cap) = cfg.max_certified {
        nodes.truncate(cap);
    }
    let certs = certify_nodes(
        model,
        ds,
        &nodes,
        direction,
        cfg.train.eps,
        &cfg.smoothing,
        cfg.seed,
    )
    .map_err(|e| e.in_stage("certify"))?;
    let provable = certs.iter().filter(|c| c.provable).count();
    let certified = certs.len();
    let report = FairnessReport {
        scheme: cfg.train.scheme,
        acc,
        macro_f1,
        dp,
        eo,
        certified,
        provable,
        abstain_cs: certs.iter().filter(|c| c.d_cs.is_none()).count(),
        abstain_rs: certs.iter().filter(|c| c.d_rs.is_none()).count(),
        provable_fair_rate: if certified == 0 {
            0.0
        } else {
            provable as f64 / certified as f64
        },
        eps1: crate::smoothing::eps1_from(direction, cfg.train.eps),
        confidence: cfg.smoothing.confidence(),
        config: cfg.clone(),
        certificates: certs.iter().map(CertificateRecord::from).collect(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((report, certs))
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: FairnessReport,
    pub fitted: Fitted,
    pub certificates: Vec<NodeCertificate>,
}

/// Runs the whole pipeline. Deterministic in the config (including its
/// master seed) and independent of the rayon thread count.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let start = Instant::now();
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let ds = cfg.load_data().map_err(|e| e.in_stage("data"))?;
    let fitted = fit(&ds, cfg)?;
    let (mut report, certificates) = evaluate(&ds, &fitted.model, &fitted.direction, cfg)?;
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(RunOutput {
        report,
        fitted,
        certificates,
    })
}

/// Certificates as JSON lines.
pub fn format_certificates(records: &[CertificateRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("certificate serializes"));
        s.push('\n');
    }
    s
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `report.json`, `summary.txt`, `certificates.jsonl` and
/// `timing.json` into `dir`.
pub fn write_report(report: &FairnessReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(dir, "report.json", &report.to_json())?;
    write(dir, "summary.txt", &report.summary())?;
    write(dir, "certificates.jsonl", &format_certificates(&report.certificates))?;
    write(
        dir,
        "timing.json",
        &format!("{{\"wall_clock_seconds\": {}}}\n", report.wall_clock_seconds),
    )
}

/// Writes `checkpoint.json` and `history.csv` into `dir`.
pub fn write_fitted(fitted: &Fitted, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Checkpoint::new(fitted.model.clone(), Some(fitted.direction.alpha.clone()))
        .save(dir.join("checkpoint.json"))?;
    write(dir, "history.csv", &format_history_csv(&fitted.history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_from_minimal_json() {
        let cfg = RunConfig::from_json(r#"{"version": "fairpar-config-1"}"#).unwrap();
        assert_eq!(cfg, RunConfig::default());
        let cfg = RunConfig::from_json(
            r#"{"version": "fairpar-config-1", "seed": 4, "nodes": "all",
                "train": {"scheme": "randat", "epochs": 5},
                "dataset": {"synthetic": {"n": 40, "p": 4, "group_gap": 1.0,
                            "task_gap": 1.0, "noise_std": 0.5, "label_leak": 0.1}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.train.scheme, Scheme::RandAt);
        assert_eq!(cfg.train.k, 20);
        assert_eq!(cfg.nodes, NodeSelection::All);
    }

    #[test]
    fn config_rejects_bad_version_and_unknown_fields() {
        assert!(RunConfig::from_json(r#"{"version": "v0"}"#).is_err());
        assert!(RunConfig::from_json(r#"{"version": "fairpar-config-1", "sede": 1}"#).is_err());
    }

    #[test]
    fn missing_dataset_is_an_io_error() {
        let cfg = RunConfig::from_json(
            r#"{"version": "fairpar-config-1", "dataset": {"path": "/no/such/file.csv"}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.load_data(), Err(Error::Io { .. })));
    }

    #[test]
    fn small_run_is_consistent() {
        let cfg = RunConfig {
            dataset: DatasetSource::Synthetic(SyntheticSpec {
                n: 80,
                ..Default::default()
            }),
            train: TrainConfig {
                epochs: 20,
                k: 3,
                hardening_rounds: 5,
                ..Default::default()
            },
            smoothing: SmoothingConfig {
                n_center: 200,
                n_radius: 200,
                n_select: 50,
                n_cert: 200,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = run(&cfg).unwrap();
        let r = &out.report;
        assert_eq!(r.certified, r.certificates.len());
        assert_eq!(r.provable, r.certificates.iter().filter(|c| c.provable).count());
        assert_eq!(r.provable_fair_rate, r.provable as f64 / r.certified as f64);
        for v in [r.acc, r.macro_f1, r.dp, r.eo, r.provable_fair_rate] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert!(r.summary().contains("provable_fair_rate"));
        let again = run(&cfg).unwrap();
        assert_eq!(r.to_json(), again.report.to_json());
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let cfg = RunConfig {
            dataset: DatasetSource::Synthetic(SyntheticSpec {
                n: 80,
                label_leak: 0.0,
                ..Default::default()
            }),
            train: TrainConfig {
                epochs: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let ds = cfg.load_data().unwrap();
        // Drop all s = 1 rows so the direction has an empty group.
        let keep: Vec<usize> = (0..ds.len()).filter(|&i| ds.sensitive()[i] == 0).collect();
        let sub = EmbeddingDataset::new(
            ds.dim(),
            2,
            keep.iter().map(|&i| ds.node_id(i)).collect(),
            keep.iter().flat_map(|&i| ds.row(i).to_vec()).collect(),
            keep.iter().map(|_| 0).collect(),
            keep.iter().map(|&i| ds.labels()[i]).collect(),
            keep.iter().map(|&i| ds.splits()[i]).collect(),
        )
        .unwrap();
        match fit(&sub, &cfg) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "direction"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
