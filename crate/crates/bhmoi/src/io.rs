//! CSV ingestion and serializable result reports.
//!
//! Every JSON artifact carries a `schema_version` so downstream consumers
//! (and golden-file tests) can reject files written by an incompatible
//! build instead of misreading them. All writes go through [`atomic_write`]:
//! a temp file next to the target, then a rename, so readers never observe
//! a half-written file.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bhm::{BhmoiResult, BinaryTrialData, NormalTrialData, PosteriorSummary};
use crate::bhm::{HierPriorConfig, McmcConfig};
use crate::borrowing::SlopeVariant;
use crate::clustering::{ClusteringConfig, ClusteringResult};
use crate::density::{GriddedDensity, SampleSet};
use crate::error::{Error, Result};
use crate::sim::{ComparatorMethod, DecisionRule, ScenarioSpec, StudyConfig, StudyResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Writes `bytes` to `path` via a sibling temp file and rename. Creates
/// missing parent directories.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    fs::write(tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

fn read_versioned<T: DeserializeOwned>(path: &Path, version_of: fn(&T) -> u32) -> Result<T> {
    let bytes = fs::read(path)?;
    let value: T = serde_json::from_slice(&bytes)?;
    let found = version_of(&value);
    if found != SCHEMA_VERSION {
        return Err(Error::SchemaVersion { found, expected: SCHEMA_VERSION });
    }
    Ok(value)
}

/// Clustering-only result: the partition, its scores, and the per-K scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringReport {
    pub schema_version: u32,
    pub labels: Vec<String>,
    /// Cluster index per subgroup, clusters numbered by first appearance.
    pub assignments: Vec<usize>,
    pub k: usize,
    pub oci: f64,
    pub wkm_objective: f64,
    pub oci_by_k: Vec<(usize, f64)>,
    pub obi: Vec<f64>,
    pub config: ClusteringConfig,
}

impl ClusteringReport {
    pub fn from_result(labels: &[String], result: &ClusteringResult) -> Self {
        ClusteringReport {
            schema_version: SCHEMA_VERSION,
            labels: labels.to_vec(),
            assignments: result.partition.assignments().to_vec(),
            k: result.k,
            oci: result.oci,
            wkm_objective: result.wkm_objective,
            oci_by_k: result.oci_by_k.clone(),
            obi: result.obi.clone(),
            config: result.config.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_versioned(path, |r: &Self| r.schema_version)
    }
}

/// Full pipeline result: clustering plus borrowing strengths and posterior
/// summaries. Raw draws stay out of the report; they are reproducible from
/// the recorded configs and seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BhmoiReport {
    pub schema_version: u32,
    pub labels: Vec<String>,
    pub assignments: Vec<usize>,
    pub k: usize,
    pub oci: f64,
    pub oci_by_k: Vec<(usize, f64)>,
    /// Homogeneity score per cluster, parallel to `alphas`.
    pub obi: Vec<f64>,
    pub alphas: Vec<f64>,
    pub summaries: Vec<PosteriorSummary>,
    pub clustering: ClusteringConfig,
    pub prior: HierPriorConfig,
    pub mcmc: McmcConfig,
    pub slope: SlopeVariant,
    /// Null rate and credible level the summaries were computed at.
    pub p_null: f64,
    pub credible_level: f64,
}

impl BhmoiReport {
    pub fn from_result(result: &BhmoiResult, p_null: f64, credible_level: f64) -> Self {
        BhmoiReport {
            schema_version: SCHEMA_VERSION,
            labels: result.posteriors.labels().to_vec(),
            assignments: result.clustering.partition.assignments().to_vec(),
            k: result.clustering.k,
            oci: result.clustering.oci,
            oci_by_k: result.clustering.oci_by_k.clone(),
            obi: result.clustering.obi.clone(),
            alphas: result.alphas.clone(),
            summaries: result.posteriors.summarize(p_null, credible_level),
            clustering: result.clustering.config.clone(),
            prior: result.prior,
            mcmc: result.mcmc,
            slope: result.slope,
            p_null,
            credible_level,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_versioned(path, |r: &Self| r.schema_version)
    }
}

/// Everything needed to rerun a simulation study byte-for-byte, plus the
/// list of files the run produced. Deliberately no timestamps: two runs of
/// the same study must produce identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub reps: usize,
    pub rule: DecisionRule,
    pub methods: Vec<ComparatorMethod>,
    pub scenarios: Vec<ScenarioSpec>,
    pub prior: HierPriorConfig,
    pub mcmc: McmcConfig,
    pub clustering: ClusteringConfig,
    pub slope: SlopeVariant,
    pub max_failure_fraction: f64,
    pub outputs: Vec<String>,
}

impl StudyManifest {
    pub fn new(config: &StudyConfig, scenarios: &[ScenarioSpec], outputs: Vec<String>) -> Self {
        StudyManifest {
            schema_version: SCHEMA_VERSION,
            seed: config.seed,
            reps: config.reps,
            rule: config.rule,
            methods: config.methods.clone(),
            scenarios: scenarios.to_vec(),
            prior: config.prior,
            mcmc: config.mcmc,
            clustering: config.clustering.clone(),
            slope: config.slope,
            max_failure_fraction: config.max_failure_fraction,
            outputs,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_versioned(path, |r: &Self| r.schema_version)
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

struct CsvTable {
    header: Vec<String>,
    /// (1-based file line, cells) per data row.
    rows: Vec<(usize, Vec<String>)>,
}

impl CsvTable {
    fn read(path: &Path, required: &[&str]) -> Result<(Self, Vec<usize>)> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_path(path)
            .map_err(|e| parse_err(path, 1, e.to_string()))?;
        let header: Vec<String> =
            reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?
                .iter().map(str::to_owned).collect();
        let mut columns = Vec::with_capacity(required.len());
        for name in required {
            match header.iter().position(|h| h == name) {
                Some(i) => columns.push(i),
                None => return Err(parse_err(path, 1, format!("missing column `{name}`"))),
            }
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| parse_err(path, 0, e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.iter().all(str::is_empty) {
                continue;
            }
            if record.len() < header.len() {
                return Err(parse_err(
                    path,
                    line,
                    format!("expected {} fields, got {}", header.len(), record.len()),
                ));
            }
            rows.push((line, record.iter().map(str::to_owned).collect()));
        }
        if rows.is_empty() {
            return Err(parse_err(path, 1, "no data rows"));
        }
        Ok((CsvTable { header, rows }, columns))
    }
}

fn parse_cell<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    column: &str,
    raw: &str,
) -> Result<T> {
    raw.parse().map_err(|_| {
        parse_err(path, line, format!("invalid value for `{column}`: `{raw}`"))
    })
}

/// Reads posterior draws in long format (`subgroup_id,draw`), one sample
/// set per subgroup in first-appearance order.
pub fn read_samples_csv(path: &Path) -> Result<Vec<SampleSet>> {
    let (table, cols) = CsvTable::read(path, &["subgroup_id", "draw"])?;
    let (id_col, draw_col) = (cols[0], cols[1]);
    let mut order: Vec<String> = Vec::new();
    let mut draws: Vec<Vec<f64>> = Vec::new();
    for (line, cells) in &table.rows {
        let id = &cells[id_col];
        let value: f64 = parse_cell(path, *line, &table.header[draw_col], &cells[draw_col])?;
        match order.iter().position(|known| known == id) {
            Some(i) => draws[i].push(value),
            None => {
                order.push(id.clone());
                draws.push(vec![value]);
            }
        }
    }
    order
        .into_iter()
        .zip(draws)
        .map(|(label, values)| SampleSet::new(label, values))
        .collect()
}

/// Reads one-row-per-subgroup binary counts (`subgroup_id,responses,size`).
pub fn read_binary_trial_csv(path: &Path) -> Result<BinaryTrialData> {
    let (table, cols) = CsvTable::read(path, &["subgroup_id", "responses", "size"])?;
    let (id_col, resp_col, size_col) = (cols[0], cols[1], cols[2]);
    let mut labels: Vec<String> = Vec::new();
    let mut responses = Vec::new();
    let mut sizes = Vec::new();
    for (line, cells) in &table.rows {
        let id = &cells[id_col];
        if labels.contains(id) {
            return Err(parse_err(path, *line, format!("duplicate subgroup_id `{id}`")));
        }
        labels.push(id.clone());
        responses.push(parse_cell(path, *line, &table.header[resp_col], &cells[resp_col])?);
        sizes.push(parse_cell(path, *line, &table.header[size_col], &cells[size_col])?);
    }
    BinaryTrialData::new(labels, responses, sizes)
}

/// Reads per-patient continuous outcomes in long format
/// (`subgroup_id,outcome`), grouped in first-appearance order.
pub fn read_normal_trial_csv(path: &Path) -> Result<NormalTrialData> {
    let (table, cols) = CsvTable::read(path, &["subgroup_id", "outcome"])?;
    let (id_col, out_col) = (cols[0], cols[1]);
    let mut labels: Vec<String> = Vec::new();
    let mut outcomes: Vec<Vec<f64>> = Vec::new();
    for (line, cells) in &table.rows {
        let id = &cells[id_col];
        let value: f64 = parse_cell(path, *line, &table.header[out_col], &cells[out_col])?;
        match labels.iter().position(|known| known == id) {
            Some(i) => outcomes[i].push(value),
            None => {
                labels.push(id.clone());
                outcomes.push(vec![value]);
            }
        }
    }
    NormalTrialData::new(labels, outcomes)
}

/// Writes binary counts in the same layout `read_binary_trial_csv` accepts.
pub fn write_binary_trial_csv(path: &Path, trial: &BinaryTrialData) -> Result<()> {
    let mut out = String::from("subgroup_id,responses,size\n");
    for ((label, y), n) in trial.labels().iter().zip(trial.responses()).zip(trial.sizes()) {
        out.push_str(&format!("{label},{y},{n}\n"));
    }
    atomic_write(path, out.as_bytes())
}

/// Writes a density as `t,value` rows. Float formatting is shortest
/// round-trip, so output is deterministic and exact.
pub fn write_density_csv(path: &Path, density: &GriddedDensity) -> Result<()> {
    let mut out = String::from("t,value\n");
    for (t, v) in density.grid().positions().zip(density.values()) {
        out.push_str(&format!("{t},{v}\n"));
    }
    atomic_write(path, out.as_bytes())
}

/// Rejection-rate table: one row per (scenario, method), one column per
/// subgroup. Rows for scenarios with fewer subgroups leave the tail empty.
pub fn write_och_csv(path: &Path, study: &StudyResult) -> Result<()> {
    let width = study.results.iter().map(|r| r.rejection_rate.len()).max().unwrap_or(0);
    let mut out = String::from("scenario,method");
    for i in 1..=width {
        out.push_str(&format!(",g{i}"));
    }
    out.push('\n');
    for oc in &study.results {
        out.push_str(&format!("{},{}", oc.scenario, oc.method));
        for i in 0..width {
            match oc.rejection_rate.get(i) {
                Some(rate) => out.push_str(&format!(",{rate}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Estimation table in long format: scenario, method, subgroup, mse, bias.
pub fn write_oce_csv(path: &Path, study: &StudyResult) -> Result<()> {
    let mut out = String::from("scenario,method,subgroup,mse,bias\n");
    for oc in &study.results {
        for (i, (mse, bias)) in oc.mse.iter().zip(&oc.bias).enumerate() {
            out.push_str(&format!(
                "{},{},g{},{mse},{bias}\n",
                oc.scenario,
                oc.method,
                i + 1,
            ));
        }
    }
    atomic_write(path, out.as_bytes())
}
