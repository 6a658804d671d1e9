//! End-to-end runs: load, split, train, evaluate, write reports.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use aucns_core::dataset::{popularity_profile, to_implicit_and_split, InteractionDataset, PopularityProfile, RatingTable, SplitReport};
use aucns_core::metrics::{evaluate, EvalOptions, EvalReport, REPORT_SCHEMA_VERSION};
use aucns_core::model::FactorModel;
use aucns_core::train::{train_with, EpochLog, SamplerTelemetry};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::config::{hex, ExperimentConfig};
use crate::error::{Error, Result, StageExt};
use crate::ingest::load_ratings;

/// The loaded and split data a run trains on.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub table: RatingTable,
    pub dataset: InteractionDataset,
    pub split: SplitReport,
    pub profile: PopularityProfile,
    /// Git-style SHA-256 blob hash of the rating file.
    pub input_hash: String,
}

/// SHA-256 over `"blob <len>\0"` followed by the bytes, as git computes
/// object ids in its SHA-256 mode.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

pub fn prepare(config: &ExperimentConfig) -> Result<PreparedData> {
    let path = &config.dataset.path;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e)).stage("load")?;
    let table = load_ratings(path, config.dataset.format).stage("load")?;
    let (dataset, split) = to_implicit_and_split(
        &table.records,
        table.ids.num_users(),
        table.ids.num_items(),
        config.split_ratio,
        config.seed,
    )
    .stage("split")?;
    let profile = popularity_profile(&dataset, config.hot_quantile).stage("popularity")?;
    Ok(PreparedData { table, dataset, split, profile, input_hash: blob_hash(&bytes) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub users: usize,
    pub items: usize,
    pub train_interactions: usize,
    pub test_interactions: usize,
    pub hot_items: usize,
    pub split: SplitReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySummary {
    pub sampled: u64,
    pub sampled_popular_rate: f64,
    pub sampled_false_negative_rate: f64,
}

impl From<SamplerTelemetry> for TelemetrySummary {
    fn from(t: SamplerTelemetry) -> Self {
        TelemetrySummary {
            sampled: t.sampled,
            sampled_popular_rate: t.popular_rate(),
            sampled_false_negative_rate: t.false_negative_rate(),
        }
    }
}

/// Contents of `report.json`. Holds nothing time-dependent, so identical
/// inputs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub sampler: String,
    pub seed: u64,
    pub config_hash: String,
    pub data: DataSummary,
    pub telemetry: TelemetrySummary,
    pub metrics: Vec<EvalReport>,
}

impl RunReport {
    pub fn at_k(&self, k: usize) -> Option<&EvalReport> {
        self.metrics.iter().find(|r| r.k == k)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub model: FactorModel,
    pub log: Vec<EpochLog>,
}

fn data_summary(p: &PreparedData) -> DataSummary {
    DataSummary {
        users: p.dataset.num_users(),
        items: p.dataset.num_items(),
        train_interactions: p.dataset.num_train(),
        test_interactions: p.dataset.num_test(),
        hot_items: p.profile.hot_items.len(),
        split: p.split,
    }
}

fn eval_options(config: &ExperimentConfig) -> EvalOptions {
    EvalOptions { pauc_gamma: config.pauc_gamma, seed: config.seed }
}

/// Trains and evaluates on already prepared data without touching the disk.
pub fn run_prepared(config: &ExperimentConfig, data: &PreparedData, mut on_epoch: impl FnMut(&EpochLog)) -> Result<RunOutput> {
    config.validate()?;
    let train_cfg = config.train_config();
    let mut log = Vec::with_capacity(train_cfg.epochs);
    let outcome = train_with(&data.dataset, &data.profile, &train_cfg, |e| {
        on_epoch(e);
        log.push(*e);
    })
    .stage("train")?;
    let metrics = evaluate(&outcome.model, &data.dataset, &data.profile, &config.k, &eval_options(config)).stage("evaluate")?;
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        sampler: train_cfg.sampler.name().to_string(),
        seed: config.seed,
        config_hash: hex(&config.hash()),
        data: data_summary(data),
        telemetry: outcome.telemetry.into(),
        metrics,
    };
    Ok(RunOutput { report, model: outcome.model, log })
}

/// Loads, trains and evaluates without writing files.
pub fn execute(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate().stage("config")?;
    let data = prepare(config)?;
    run_prepared(config, &data, |_| {})
}

/// Runs an experiment and writes `report.json`, `metrics_k{K}.csv`,
/// `training_log.csv`, `model.bin` and `manifest.json` into `out_dir`.
/// Nothing is left behind when a stage fails.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    run_experiment_with(config, out_dir, |_| {})
}

pub fn run_experiment_with(config: &ExperimentConfig, out_dir: &Path, on_epoch: impl FnMut(&EpochLog)) -> Result<RunOutput> {
    config.validate().stage("config")?;
    let data = prepare(config)?;
    let out = run_prepared(config, &data, on_epoch)?;
    write_outputs(config, &data, &out, out_dir).stage("write")?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub sampler: String,
    pub input_path: PathBuf,
    pub input_hash: String,
    /// File name and SHA-256 of every output, in write order.
    pub outputs: Vec<(String, String)>,
    pub version: String,
}

/// Flat CSV form of an [`EvalReport`].
#[derive(Debug, Serialize)]
struct MetricsRow<'a> {
    sampler: &'a str,
    seed: u64,
    k: usize,
    precision: f64,
    recall: f64,
    f1: f64,
    ndcg: f64,
    ohr: f64,
    ocr: f64,
    uhr: f64,
    ucr: f64,
    uhr_alt: f64,
    ucr_alt: f64,
    fpr: f64,
    fnr: f64,
    mse: f64,
    pauc: Option<f64>,
    evaluated_users: usize,
    zero_denominators: String,
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::io("<csv>", e.into()))?;
    }
    w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))
}

/// Writes files one by one and deletes them again unless committed.
struct OutputSet {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<(String, String)>,
    committed: bool,
}

impl OutputSet {
    fn new(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(OutputSet { dir: dir.to_path_buf(), created_dir, written: Vec::new(), committed: false })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.written.push((name.to_string(), hex(&Sha256::digest(bytes))));
        Ok(())
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for (name, _) in &self.written {
            let _ = fs::remove_file(self.dir.join(name));
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

fn write_outputs(config: &ExperimentConfig, data: &PreparedData, out: &RunOutput, dir: &Path) -> Result<()> {
    let mut set = OutputSet::new(dir)?;
    let report = &out.report;
    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    set.write("report.json", &json)?;
    for m in &report.metrics {
        let row = MetricsRow {
            sampler: &report.sampler,
            seed: report.seed,
            k: m.k,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            ndcg: m.ndcg,
            ohr: m.ohr,
            ocr: m.ocr,
            uhr: m.uhr,
            ucr: m.ucr,
            uhr_alt: m.uhr_alt,
            ucr_alt: m.ucr_alt,
            fpr: m.fpr,
            fnr: m.fnr,
            mse: m.mse,
            pauc: m.pauc,
            evaluated_users: m.evaluated_users,
            zero_denominators: m.zero_denominators.join(";"),
        };
        set.write(&format!("metrics_k{}.csv", m.k), &csv_bytes([row])?)?;
    }
    set.write("training_log.csv", &csv_bytes(&out.log)?)?;
    let ckpt = Checkpoint { seed: config.seed, config_hash: config.hash(), model: out.model.clone() };
    set.write("model.bin", &ckpt.to_bytes())?;
    let manifest = Manifest {
        config_hash: report.config_hash.clone(),
        seed: config.seed,
        sampler: report.sampler.clone(),
        input_path: config.dataset.path.clone(),
        input_hash: data.input_hash.clone(),
        outputs: set.written.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    set.write("manifest.json", &json)?;
    set.committed = true;
    Ok(())
}

/// Evaluates a saved model against the split that `config` produces.
pub fn evaluate_checkpoint(config: &ExperimentConfig, checkpoint: &Checkpoint) -> Result<Vec<EvalReport>> {
    config.validate().stage("config")?;
    let data = prepare(config)?;
    let m = &checkpoint.model;
    if m.num_users() != data.dataset.num_users() || m.num_items() != data.dataset.num_items() {
        return Err(aucns_core::Error::config(
            "model",
            format!(
                "checkpoint is {}x{} but the dataset has {} users and {} items",
                m.num_users(),
                m.num_items(),
                data.dataset.num_users(),
                data.dataset.num_items()
            ),
        ))
        .stage("evaluate");
    }
    evaluate(m, &data.dataset, &data.profile, &config.k, &eval_options(config)).stage("evaluate")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Alpha,
    Beta,
    Gamma,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Beta => "beta",
            SweepParam::Gamma => "gamma",
        }
    }

    pub fn apply(self, config: &mut ExperimentConfig, value: f64) {
        let s = &mut config.train.aucns;
        match self {
            SweepParam::Alpha => s.alpha = value,
            SweepParam::Beta => s.beta = value,
            SweepParam::Gamma => s.gamma = value,
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "beta" => Ok(SweepParam::Beta),
            "gamma" => Ok(SweepParam::Gamma),
            _ => Err(format!("unknown sweep parameter `{s}` (expected alpha, beta or gamma)")),
        }
    }
}

/// One row of a sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub k: usize,
    pub precision: f64,
    pub ndcg: f64,
    pub ohr: f64,
    pub sampled_popular_rate: f64,
    pub sampled_false_negative_rate: f64,
}

impl SweepRow {
    /// Uses k = 5 when it was evaluated, otherwise the first cut-off.
    pub fn from_report(value: f64, report: &RunReport) -> Self {
        let m = report.at_k(5).unwrap_or(&report.metrics[0]);
        SweepRow {
            value,
            k: m.k,
            precision: m.precision,
            ndcg: m.ndcg,
            ohr: m.ohr,
            sampled_popular_rate: report.telemetry.sampled_popular_rate,
            sampled_false_negative_rate: report.telemetry.sampled_false_negative_rate,
        }
    }
}

/// One run per value with the seed held fixed. When the config names an
/// output directory each point is written to `<dir>/<param>_<value>/` and
/// the table to `<dir>/sweep_<param>.csv`.
pub fn sweep(config: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<Vec<(SweepRow, RunOutput)>> {
    if values.is_empty() {
        return Err(aucns_core::Error::config("values", "sweep needs at least one value").into());
    }
    let mut configs = Vec::with_capacity(values.len());
    for &v in values {
        let mut c = config.clone();
        param.apply(&mut c, v);
        c.validate().stage("config")?;
        configs.push(c);
    }
    let data = prepare(config)?;
    let mut rows = Vec::with_capacity(values.len());
    for (c, &v) in configs.iter().zip(values) {
        let out = match &config.output_dir {
            Some(dir) => {
                let out = run_prepared(c, &data, |_| {})?;
                write_outputs(c, &data, &out, &dir.join(format!("{param}_{v}"))).stage("write")?;
                out
            }
            None => run_prepared(c, &data, |_| {})?,
        };
        rows.push((SweepRow::from_report(v, &out.report), out));
    }
    if let Some(dir) = &config.output_dir {
        let table: Vec<SweepRow> = rows.iter().map(|(r, _)| *r).collect();
        let path = dir.join(format!("sweep_{param}.csv"));
        fs::write(&path, sweep_csv(param, &table)?).map_err(|e| Error::io(&path, e)).stage("write")?;
    }
    Ok(rows)
}

/// The sweep table with the swept parameter as the first column.
pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let k = rows.first().map_or(5, |r| r.k);
    let header = [
        param.name().to_string(),
        format!("precision_at_{k}"),
        format!("ndcg_at_{k}"),
        format!("ohr_at_{k}"),
        "sampled_popular_rate".into(),
        "sampled_false_negative_rate".into(),
    ];
    let io = |e: csv::Error| Error::io("<csv>", e.into());
    w.write_record(&header).map_err(io)?;
    for r in rows {
        w.write_record([r.value, r.precision, r.ndcg, r.ohr, r.sampled_popular_rate, r.sampled_false_negative_rate].map(|v| v.to_string()))
            .map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))
}
