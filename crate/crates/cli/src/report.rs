//! Machine-readable run reports.
//!
//! Reports are JSON with a fixed field order (struct order) and cells sorted
//! by cell id, so identical configs produce byte-identical files apart from
//! the `created_unix` timestamp. `schema/report.schema.json` describes the
//! format; [`schema::validate`] checks documents against it.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    PureGcnn,
    Transfer,
    RandomForest,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::PureGcnn => "pure_gcnn",
            ModelKind::Transfer => "transfer",
            ModelKind::RandomForest => "random_forest",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// One (train size, split property, seed, model kind) measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricCell {
    pub cell_id: String,
    pub train_size: usize,
    pub split_property: String,
    pub seed: u64,
    pub model_kind: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub donor_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub n_test: usize,
    /// Digest of the train id list; equal digests across the three model
    /// kinds of a cell certify they saw the identical split.
    pub train_ids_digest: String,
    pub status: CellStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Applicability-domain coverage for one cell's test set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdRecord {
    pub cell_id: String,
    pub train_size: usize,
    pub split_property: String,
    pub seed: u64,
    pub acceptor_coverage: f64,
    pub acceptor_d_train: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub donor_coverage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub donor_d_train: Option<f64>,
    /// Coverage under the union rule (inside either domain).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub union_coverage: Option<f64>,
    /// union_coverage − acceptor_coverage.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_coverage: Option<f64>,
}

/// Sum-of-places table for one train size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankTable {
    pub train_size: usize,
    pub metric_name: String,
    pub properties: Vec<String>,
    pub rank_sums: Vec<f64>,
    pub n_seeds: usize,
}

/// Donor-training summary attached by `train-donor` and the size sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DonorTrainingRecord {
    pub donor_size: usize,
    pub epochs: usize,
    pub final_train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holdout_r2: Option<f64>,
    pub archive_path: String,
}

/// A file the command wrote.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub kind: String,
    pub path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaSummary {
    pub explained_variance: [f64; 2],
    pub n_points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub command: String,
    /// Wall-clock stamp; the one field excluded from reproducibility
    /// comparisons.
    pub created_unix: Option<u64>,
    pub master_seed: u64,
    pub config_echo: serde_json::Value,
    pub metric_cells: Vec<MetricCell>,
    pub ad_records: Vec<AdRecord>,
    pub rank_tables: Vec<RankTable>,
    pub donor_training: Vec<DonorTrainingRecord>,
    pub artifacts: Vec<ArtifactRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pca: Option<PcaSummary>,
    pub failed_cells: usize,
}

impl RunReport {
    pub fn new(command: &str, master_seed: u64, config_echo: serde_json::Value) -> Self {
        RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            created_unix: Some(now_unix()),
            master_seed,
            config_echo,
            metric_cells: Vec::new(),
            ad_records: Vec::new(),
            rank_tables: Vec::new(),
            donor_training: Vec::new(),
            artifacts: Vec::new(),
            pca: None,
            failed_cells: 0,
        }
    }

    /// Sorts cells into canonical order and recounts failures. Call before
    /// writing.
    pub fn finalize(&mut self) {
        self.metric_cells
            .sort_by(|a, b| a.cell_id.cmp(&b.cell_id).then(a.model_kind.cmp(&b.model_kind)));
        self.ad_records.sort_by(|a, b| a.cell_id.cmp(&b.cell_id));
        self.rank_tables.sort_by_key(|t| t.train_size);
        self.donor_training.sort_by_key(|d| d.donor_size);
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        self.failed_cells = self
            .metric_cells
            .iter()
            .filter(|c| c.status == CellStatus::Failed)
            .count();
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
        std::fs::write(path, self.to_json()? + "\n")
            .with_context(|| format!("writing report {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading report {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Report path for a command under an output directory.
    pub fn default_path(out_dir: &Path, command: &str) -> PathBuf {
        out_dir.join(format!("{command}_report.json"))
    }
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Short stable digest of an id list, for the shared-split contract.
pub fn ids_digest(ids: &[String]) -> String {
    let mut state = 0xfeed_face_cafe_beefu64;
    for id in ids {
        for &b in id.as_bytes() {
            state = transmol::hash::fold(state, u64::from(b));
        }
        state = transmol::hash::fold(state, 0x1f);
    }
    format!("{:016x}", transmol::hash::mix64(state ^ ids.len() as u64))
}

pub mod schema {
    //! A small JSON-Schema subset validator: enough for the published report
    //! schema (type, required, properties, items, enum, const).

    use anyhow::{bail, Result};
    use serde_json::Value;

    pub fn validate(doc: &Value, schema: &Value) -> Result<()> {
        validate_at(doc, schema, "$")
    }

    fn validate_at(doc: &Value, schema: &Value, path: &str) -> Result<()> {
        let obj = match schema.as_object() {
            Some(o) => o,
            None => bail!("schema node at {path} is not an object"),
        };
        if let Some(expected) = obj.get("const") {
            if doc != expected {
                bail!("{path}: expected const {expected}, got {doc}");
            }
        }
        if let Some(options) = obj.get("enum").and_then(Value::as_array) {
            if !options.contains(doc) {
                bail!("{path}: {doc} not in enum {options:?}");
            }
        }
        if let Some(ty) = obj.get("type") {
            check_type(doc, ty, path)?;
        }
        if let Some(required) = obj.get("required").and_then(Value::as_array) {
            let map = doc
                .as_object()
                .ok_or_else(|| anyhow::anyhow!("{path}: expected object"))?;
            for key in required {
                let key = key.as_str().unwrap_or_default();
                if !map.contains_key(key) {
                    bail!("{path}: missing required field {key:?}");
                }
            }
        }
        if let Some(props) = obj.get("properties").and_then(Value::as_object) {
            if let Some(map) = doc.as_object() {
                for (key, sub) in props {
                    if let Some(value) = map.get(key) {
                        validate_at(value, sub, &format!("{path}.{key}"))?;
                    }
                }
            }
        }
        if let Some(items) = obj.get("items") {
            if let Some(arr) = doc.as_array() {
                for (i, value) in arr.iter().enumerate() {
                    validate_at(value, items, &format!("{path}[{i}]"))?;
                }
            }
        }
        Ok(())
    }

    fn check_type(doc: &Value, ty: &Value, path: &str) -> Result<()> {
        let matches_one = |name: &str| -> bool {
            match name {
                "object" => doc.is_object(),
                "array" => doc.is_array(),
                "string" => doc.is_string(),
                "number" => doc.is_number(),
                "integer" => doc.is_i64() || doc.is_u64(),
                "boolean" => doc.is_boolean(),
                "null" => doc.is_null(),
                _ => false,
            }
        };
        let ok = match ty {
            Value::String(name) => matches_one(name),
            Value::Array(names) => names
                .iter()
                .filter_map(Value::as_str)
                .any(matches_one),
            _ => false,
        };
        if !ok {
            bail!("{path}: value {doc} does not match type {ty}");
        }
        Ok(())
    }
}
