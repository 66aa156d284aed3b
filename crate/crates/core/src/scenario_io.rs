//! Response-time matrices, scenario generation, and the file formats used by
//! the command-line tool.
//!
//! Files use 1-based ids throughout; everything in memory is 0-based.

use std::collections::BTreeSet;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    payment_vector, saturating_matching, AssignmentPlan, ModelError, Provider, Request, Scenario,
    ServiceRef,
};

pub const FORMAT_VERSION: u32 = 1;
/// Constraint-set redraws allowed before generation gives up.
pub const MAX_GENERATION_RETRIES: usize = 1000;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("ragged row {0}")]
    RaggedRow(usize),
    #[error("row {row}: invalid entry {token:?}")]
    InvalidEntry { row: usize, token: String },
    #[error("matrix too small: {0}")]
    MatrixTooSmall(String),
    #[error("no feasible constraint sets after {0} draws")]
    RetriesExhausted(usize),
    #[error("invalid generation parameter: {0}")]
    InvalidParameter(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn file_error(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

/// Rectangular response-time matrix: rows are observation points, columns
/// are service types. `None` marks a missing measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct QosMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Option<f64>>,
}

impl QosMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Option<f64>>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.data[row * self.cols + col]
    }

    pub fn missing_count(&self) -> usize {
        self.data.iter().filter(|v| v.is_none()).count()
    }

    /// `(row, value)` of every present entry in `col`.
    pub fn column(&self, col: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.rows).filter_map(move |r| self.get(r, col).map(|v| (r, v)))
    }

    /// Whitespace text with `-1` for missing entries; parses back unchanged.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let line: Vec<String> = (0..self.cols)
                .map(|c| match self.get(r, c) {
                    Some(v) => v.to_string(),
                    None => "-1".to_string(),
                })
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Parses whitespace-separated rows. `-1` is a missing entry; any other
/// value must be positive and finite. Blank lines are skipped.
pub fn parse_qos_matrix(text: &str) -> Result<QosMatrix, IoError> {
    let mut cols = None;
    let mut data = Vec::new();
    let mut rows = 0;
    for line in text.lines() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        rows += 1;
        match cols {
            None => cols = Some(tokens.len()),
            Some(c) if c != tokens.len() => return Err(IoError::RaggedRow(rows)),
            _ => {}
        }
        for token in tokens {
            let invalid = || IoError::InvalidEntry {
                row: rows,
                token: token.to_string(),
            };
            let v: f64 = token.parse().map_err(|_| invalid())?;
            if v == -1.0 {
                data.push(None);
            } else if v > 0.0 && v.is_finite() {
                data.push(Some(v));
            } else {
                return Err(invalid());
            }
        }
    }
    Ok(QosMatrix::new(rows, cols.unwrap_or(0), data))
}

pub fn load_qos_matrix(path: &Path) -> Result<QosMatrix, IoError> {
    let text = fs::read_to_string(path).map_err(file_error(path))?;
    parse_qos_matrix(&text)
}

/// A stand-in for a measured response-time matrix. Each column gets its own
/// log-normal typical latency; entries scatter log-normally around it and
/// `missing_rate` of them are dropped.
pub fn synthetic_qos_matrix(rows: usize, cols: usize, missing_rate: f64, seed: u64) -> QosMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let typical = LogNormal::new(-0.3, 0.9).expect("valid parameters");
    let noise = Normal::new(0.0_f64, 0.5).expect("valid parameters");
    let medians: Vec<f64> = (0..cols).map(|_| typical.sample(&mut rng)).collect();
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        for &median in &medians {
            if rng.gen_bool(missing_rate) {
                data.push(None);
            } else {
                let z: f64 = noise.sample(&mut rng);
                let v = median * z.exp();
                // three decimals like published measurements, never zero
                data.push(Some(((v * 1000.0).round() / 1000.0).max(0.001)));
            }
        }
    }
    QosMatrix::new(rows, cols, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub requests: usize,
    pub providers: usize,
    pub pool_size: usize,
    /// Probability that a provider enters a request's constraint set.
    pub density: f64,
    pub pricing_level: f64,
    /// Share of the price level paid as base payment; the rest is bonus.
    pub base_share: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            requests: 10,
            providers: 9,
            pool_size: 10,
            density: 0.5,
            pricing_level: 1.0,
            base_share: 0.6,
            seed: 0,
        }
    }
}

/// Provenance stored next to a generated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub seed: u64,
    pub pricing_level: f64,
    /// 1-based matrix columns backing each provider.
    pub columns: Vec<usize>,
    /// Constraint-set draws needed to reach a feasible instance.
    pub draws: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        (values[k / 2 - 1] + values[k / 2]) / 2.0
    }
}

/// Builds a scenario from `matrix`: each provider is one randomly chosen
/// column and its services are `pool_size` present entries of that column
/// from distinct rows. Constraint sets are redrawn until every request can
/// get a distinct authorized service.
pub fn generate_scenario(
    matrix: &QosMatrix,
    params: &GenParams,
) -> Result<(Scenario, GenerationMeta), IoError> {
    if !(0.0..=1.0).contains(&params.density) {
        return Err(IoError::InvalidParameter(format!("density {}", params.density)));
    }
    if !(0.0..=1.0).contains(&params.base_share) {
        return Err(IoError::InvalidParameter(format!("base share {}", params.base_share)));
    }
    if params.providers == 0 || params.pool_size == 0 {
        return Err(IoError::InvalidParameter("providers and pool size must be positive".into()));
    }
    if !(params.pricing_level >= 0.0 && params.pricing_level.is_finite()) {
        return Err(IoError::InvalidParameter(format!("pricing level {}", params.pricing_level)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let eligible: Vec<usize> = (0..matrix.cols())
        .filter(|&c| matrix.column(c).count() >= params.pool_size)
        .collect();
    if eligible.len() < params.providers {
        return Err(IoError::MatrixTooSmall(format!(
            "{} columns have {} present entries, {} needed",
            eligible.len(),
            params.pool_size,
            params.providers
        )));
    }
    let picked: Vec<usize> = sample(&mut rng, eligible.len(), params.providers)
        .into_iter()
        .map(|k| eligible[k])
        .collect();
    let providers: Vec<Provider> = picked
        .iter()
        .enumerate()
        .map(|(i, &col)| {
            let present: Vec<f64> = matrix.column(col).map(|(_, v)| v).collect();
            let qos: Vec<f64> = sample(&mut rng, present.len(), params.pool_size)
                .into_iter()
                .map(|k| present[k])
                .collect();
            Provider::from_qos(i, &qos)
        })
        .collect();

    let a = params.base_share * params.pricing_level;
    let b = (1.0 - params.base_share) * params.pricing_level;
    for draw in 1..=MAX_GENERATION_RETRIES {
        let requests: Vec<Request> = (0..params.requests)
            .map(|n| {
                let mut allowed: Vec<usize> = (0..params.providers)
                    .filter(|_| rng.gen_bool(params.density))
                    .collect();
                if allowed.is_empty() {
                    allowed.push(rng.gen_range(0..params.providers));
                }
                let mut pool: Vec<f64> = allowed
                    .iter()
                    .flat_map(|&i| providers[i].services.iter().map(|s| s.qos))
                    .collect();
                Request::new(n, allowed, a, b, median(&mut pool))
            })
            .collect();
        let scenario = Scenario::new(providers.clone(), requests)?;
        if saturating_matching(&scenario).is_some() {
            if draw > 1 {
                log::info!("seed {}: feasible constraint sets after {draw} draws", params.seed);
            }
            return Ok((
                scenario,
                GenerationMeta {
                    seed: params.seed,
                    pricing_level: params.pricing_level,
                    columns: picked.iter().map(|c| c + 1).collect(),
                    draws: draw,
                    source: None,
                },
            ));
        }
    }
    Err(IoError::RetriesExhausted(MAX_GENERATION_RETRIES))
}

// ---------------------------------------------------------------------------
// scenario files

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServiceRecord {
    id: usize,
    qos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProviderRecord {
    id: usize,
    services: Vec<ServiceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestRecord {
    id: usize,
    allowed_providers: Vec<usize>,
    a: f64,
    b: f64,
    q_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRecord {
    format_version: u32,
    providers: Vec<ProviderRecord>,
    requests: Vec<RequestRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<GenerationMeta>,
}

/// A scenario plus optional generation metadata, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub scenario: Scenario,
    pub metadata: Option<GenerationMeta>,
}

impl ScenarioFile {
    pub fn to_json(&self) -> String {
        let record = ScenarioRecord {
            format_version: FORMAT_VERSION,
            providers: self
                .scenario
                .providers()
                .iter()
                .map(|p| ProviderRecord {
                    id: p.id + 1,
                    services: p
                        .services
                        .iter()
                        .map(|s| ServiceRecord {
                            id: s.service_id + 1,
                            qos: s.qos,
                        })
                        .collect(),
                })
                .collect(),
            requests: self
                .scenario
                .requests()
                .iter()
                .map(|r| RequestRecord {
                    id: r.request_id + 1,
                    allowed_providers: r.allowed_providers.iter().map(|i| i + 1).collect(),
                    a: r.base_payment,
                    b: r.max_bonus,
                    q_ref: r.qos_baseline,
                })
                .collect(),
            metadata: self.metadata.clone(),
        };
        let mut text = serde_json::to_string_pretty(&record).expect("plain data serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        let record: ScenarioRecord = serde_json::from_str(text)?;
        if record.format_version != FORMAT_VERSION {
            return Err(IoError::Format(format!(
                "unsupported format_version {}",
                record.format_version
            )));
        }
        let mut providers = Vec::with_capacity(record.providers.len());
        for (i, p) in record.providers.iter().enumerate() {
            if p.id != i + 1 {
                return Err(IoError::Format(format!(
                    "provider #{} has id {}, expected {}",
                    i + 1,
                    p.id,
                    i + 1
                )));
            }
            for (j, s) in p.services.iter().enumerate() {
                if s.id != j + 1 {
                    return Err(IoError::Format(format!(
                        "provider {} service #{} has id {}",
                        p.id,
                        j + 1,
                        s.id
                    )));
                }
            }
            let qos: Vec<f64> = p.services.iter().map(|s| s.qos).collect();
            providers.push(Provider::from_qos(i, &qos));
        }
        let mut requests = Vec::with_capacity(record.requests.len());
        for (n, r) in record.requests.iter().enumerate() {
            if r.id != n + 1 {
                return Err(IoError::Format(format!(
                    "request #{} has id {}",
                    n + 1,
                    r.id
                )));
            }
            let distinct: BTreeSet<usize> = r.allowed_providers.iter().copied().collect();
            if distinct.len() != r.allowed_providers.len() || distinct.contains(&0) {
                return Err(IoError::Format(format!(
                    "request {}: allowed_providers must be distinct 1-based ids",
                    r.id
                )));
            }
            requests.push(Request::new(
                n,
                r.allowed_providers.iter().map(|i| i - 1),
                r.a,
                r.b,
                r.q_ref,
            ));
        }
        let scenario = Scenario::new(providers, requests)?;
        Ok(Self {
            scenario,
            metadata: record.metadata,
        })
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioFile, IoError> {
    let text = fs::read_to_string(path).map_err(file_error(path))?;
    ScenarioFile::from_json(&text)
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| IoError::Format(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(file_error(path))
}

// ---------------------------------------------------------------------------
// plan files

/// Plan CSV with one row per request:
/// `request_id,provider_id,service_id,qos,payment` (1-based ids).
pub fn plan_to_csv(plan: &AssignmentPlan, scenario: &Scenario) -> Result<String, IoError> {
    let payments = payment_vector(plan, scenario)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["request_id", "provider_id", "service_id", "qos", "payment"])?;
    for n in 0..scenario.num_requests() {
        let s = plan.choice(n)?;
        w.write_record([
            (n + 1).to_string(),
            (s.provider + 1).to_string(),
            (s.service + 1).to_string(),
            scenario.service(s)?.qos.to_string(),
            payments.per_request[n].to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Deserialize)]
struct PlanRow {
    request_id: usize,
    provider_id: usize,
    service_id: usize,
}

/// Reads the selections of a plan CSV. Extra columns are ignored.
pub fn plan_from_csv(reader: impl Read) -> Result<AssignmentPlan, IoError> {
    let mut plan = AssignmentPlan::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: PlanRow = row?;
        if row.request_id == 0 || row.provider_id == 0 || row.service_id == 0 {
            return Err(IoError::Format("plan ids are 1-based".into()));
        }
        plan.select(
            row.request_id - 1,
            ServiceRef::new(row.provider_id - 1, row.service_id - 1),
        );
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::check_feasible;

    #[test]
    fn parse_examples() {
        let m = parse_qos_matrix("1.2 0.5\n-1 3.0").unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 2));
        assert_eq!(m.get(1, 0), None);
        assert_eq!(m.get(1, 1), Some(3.0));
        assert_eq!(m.missing_count(), 1);

        let empty = parse_qos_matrix("").unwrap();
        assert_eq!(empty.rows(), 0);

        let err = parse_qos_matrix("1.2 0.5\n0.1").unwrap_err();
        assert_eq!(err.to_string(), "ragged row 2");

        assert!(matches!(
            parse_qos_matrix("1.0 abc"),
            Err(IoError::InvalidEntry { row: 1, .. })
        ));
        assert!(matches!(
            parse_qos_matrix("0 1"),
            Err(IoError::InvalidEntry { .. })
        ));
    }

    #[test]
    fn matrix_text_round_trip() {
        let m = synthetic_qos_matrix(20, 7, 0.05, 3);
        assert_eq!(parse_qos_matrix(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn synthetic_matrix_is_seeded() {
        assert_eq!(
            synthetic_qos_matrix(10, 10, 0.05, 1),
            synthetic_qos_matrix(10, 10, 0.05, 1)
        );
        assert_ne!(
            synthetic_qos_matrix(10, 10, 0.05, 1),
            synthetic_qos_matrix(10, 10, 0.05, 2)
        );
        let m = synthetic_qos_matrix(200, 100, 0.05, 9);
        let rate = m.missing_count() as f64 / 20_000.0;
        assert!((0.03..0.07).contains(&rate), "missing rate {rate}");
    }

    #[test]
    fn generation_examples() {
        let m = synthetic_qos_matrix(60, 30, 0.05, 5);
        let params = GenParams {
            density: 1.0,
            ..GenParams::default()
        };
        let (s, meta) = generate_scenario(&m, &params).unwrap();
        assert_eq!(s.num_requests(), 10);
        assert_eq!(s.num_providers(), 9);
        assert!(s.requests().iter().all(|r| r.allowed_providers.len() == 9));
        assert_eq!(meta.columns.len(), 9);
        assert!(saturating_matching(&s).is_some());
        let (again, _) = generate_scenario(&m, &params).unwrap();
        assert_eq!(s, again);

        let r = &s.requests()[0];
        assert!((r.base_payment - 0.6).abs() < 1e-12);
        assert!((r.max_bonus - 0.4).abs() < 1e-12);
    }

    #[test]
    fn generation_rejects_small_matrix() {
        let m = synthetic_qos_matrix(3, 4, 0.0, 5);
        assert!(matches!(
            generate_scenario(&m, &GenParams::default()),
            Err(IoError::MatrixTooSmall(_))
        ));
    }

    #[test]
    fn scenario_json_round_trip() {
        let m = synthetic_qos_matrix(40, 20, 0.05, 8);
        let (scenario, meta) = generate_scenario(&m, &GenParams::default()).unwrap();
        let file = ScenarioFile {
            scenario,
            metadata: Some(meta),
        };
        let text = file.to_json();
        assert_eq!(ScenarioFile::from_json(&text).unwrap(), file);
        assert!(text.contains("\"format_version\": 1"));
    }

    #[test]
    fn scenario_json_rejects_bad_ids() {
        let text = r#"{"format_version":1,"providers":[{"id":2,"services":[]}],"requests":[]}"#;
        assert!(matches!(ScenarioFile::from_json(text), Err(IoError::Format(_))));
        let text = r#"{"format_version":9,"providers":[],"requests":[]}"#;
        assert!(matches!(ScenarioFile::from_json(text), Err(IoError::Format(_))));
        let text = r#"{"format_version":1,"providers":[],"requests":[],"extra":1}"#;
        assert!(matches!(ScenarioFile::from_json(text), Err(IoError::Json(_))));
    }

    #[test]
    fn plan_csv_round_trip() {
        let m = synthetic_qos_matrix(40, 20, 0.05, 8);
        let (s, _) = generate_scenario(&m, &GenParams::default()).unwrap();
        let plan = saturating_matching(&s).unwrap();
        let text = plan_to_csv(&plan, &s).unwrap();
        assert!(text.starts_with("request_id,provider_id,service_id,qos,payment\n"));
        let back = plan_from_csv(text.as_bytes()).unwrap();
        assert_eq!(back, plan);
        assert!(check_feasible(&back, &s).is_feasible());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
