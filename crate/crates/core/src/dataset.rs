//! CSV persistence, summary tables and import of external study data.
//!
//! Record CSV columns, in order:
//!
//! | column               | content                                               |
//! |----------------------|-------------------------------------------------------|
//! | `subject_id`         | opaque text                                           |
//! | `gender`             | `F`, `M` or empty                                     |
//! | `arm`                | `SS`, `LL_costly_commitment`, `LL_costless_commitment`, `LL_flexibility` |
//! | `d_star`             | days, empty when unset                                |
//! | `fd_star`            | days, empty when unset                                |
//! | `wtp_kind`           | `commitment_paid`, `flexibility_paid`, `costless_commitment`, `none_refused` |
//! | `wtp_amount`         | M or N                                                |
//! | `v_f`                | assumed flexibility value                             |
//! | `ss_amount`          |                                                       |
//! | `ll_amount`          |                                                       |
//! | `beta_assumed`       |                                                       |
//! | `currency_label`     |                                                       |
//! | `epsilon_days`       |                                                       |
//! | `initial_delay_days` |                                                       |
//! | `step_days`          |                                                       |
//! | `max_delay_days`     |                                                       |
//! | `cap_reached`        | `one`, `two` or empty                                 |
//! | `created_at`         | RFC 3339, may be empty                                |
//! | `completed_at`       | RFC 3339, may be empty                                |
//! | `transcript`         | space-separated answers (`LL LL SS yes 5000 LL`), may be empty |
//!
//! A non-empty transcript is replayed through the elicitation engine on load
//! and must reproduce the row's outcome columns.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elicitation::{Answer, Arm, Gender, SessionConfig, SessionRecord, SessionState, Stage};
use crate::estimation::{estimate_record, Flag, RecordEstimate, WtpKind, WtpObservation};

pub const COLUMNS: [&str; 20] = [
    "subject_id",
    "gender",
    "arm",
    "d_star",
    "fd_star",
    "wtp_kind",
    "wtp_amount",
    "v_f",
    "ss_amount",
    "ll_amount",
    "beta_assumed",
    "currency_label",
    "epsilon_days",
    "initial_delay_days",
    "step_days",
    "max_delay_days",
    "cap_reached",
    "created_at",
    "completed_at",
    "transcript",
];

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing header column `{0}`")]
    MissingColumn(String),
    #[error(transparent)]
    Model(#[from] crate::Error),
}

/// A row that failed validation; `line` is 1-based and counts the header.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub records: Vec<SessionRecord>,
    pub row_errors: Vec<RowError>,
    pub warnings: Vec<String>,
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn gender_str(g: Option<Gender>) -> &'static str {
    match g {
        Some(Gender::F) => "F",
        Some(Gender::M) => "M",
        None => "",
    }
}

fn stage_str(s: Option<Stage>) -> &'static str {
    match s {
        Some(Stage::One) => "one",
        Some(Stage::Two) => "two",
        None => "",
    }
}

fn record_fields(r: &SessionRecord) -> [String; 20] {
    let c = &r.config;
    let transcript: Vec<String> = r.transcript.iter().map(|e| e.answer.token()).collect();
    [
        r.subject_id.clone(),
        gender_str(r.gender).into(),
        r.arm.as_str().into(),
        fmt_opt(r.d_star),
        fmt_opt(r.fd_star),
        r.wtp.kind.as_str().into(),
        r.wtp.amount.to_string(),
        r.wtp.v_f.to_string(),
        c.ss_amount.to_string(),
        c.ll_amount.to_string(),
        c.beta_assumed.to_string(),
        c.currency_label.clone(),
        c.epsilon_days.to_string(),
        c.initial_delay_days.to_string(),
        c.step_days.to_string(),
        c.max_delay_days.to_string(),
        stage_str(r.cap_reached).into(),
        fmt_opt(r.created_at.map(|t| t.to_rfc3339())),
        fmt_opt(r.completed_at.map(|t| t.to_rfc3339())),
        transcript.join(" "),
    ]
}

pub fn write_records<W: Write>(out: W, records: &[SessionRecord]) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record(record_fields(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn records_to_csv(records: &[SessionRecord]) -> Result<String, DatasetError> {
    let mut buf = Vec::new();
    write_records(&mut buf, records)?;
    Ok(String::from_utf8(buf).expect("csv writer emits utf-8"))
}

/// Writes to a temporary file beside `path` and renames it into place.
pub fn save_records(path: &Path, records: &[SessionRecord]) -> Result<(), DatasetError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    write_records(&mut tmp, records)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| DatasetError::Io(e.error))?;
    Ok(())
}

struct Row<'a> {
    rec: &'a csv::StringRecord,
    index: &'a HashMap<String, usize>,
}

impl Row<'_> {
    fn get(&self, col: &str) -> &str {
        self.index
            .get(col)
            .and_then(|&i| self.rec.get(i))
            .unwrap_or("")
    }

    fn num<T: std::str::FromStr>(&self, col: &str) -> Result<T, String> {
        let raw = self.get(col);
        raw.parse()
            .map_err(|_| format!("`{col}`: cannot parse `{raw}`"))
    }

    fn opt_num<T: std::str::FromStr>(&self, col: &str) -> Result<Option<T>, String> {
        if self.get(col).is_empty() {
            Ok(None)
        } else {
            self.num(col).map(Some)
        }
    }

    fn time(&self, col: &str) -> Result<Option<DateTime<Utc>>, String> {
        let raw = self.get(col);
        if raw.is_empty() {
            return Ok(None);
        }
        DateTime::parse_from_rfc3339(raw)
            .map(|t| Some(t.with_timezone(&Utc)))
            .map_err(|e| format!("`{col}`: {e}"))
    }
}

fn parse_row(row: &Row) -> Result<SessionRecord, String> {
    let gender = match row.get("gender") {
        "" => None,
        "F" | "f" => Some(Gender::F),
        "M" | "m" => Some(Gender::M),
        other => return Err(format!("`gender`: unknown value `{other}`")),
    };
    let arm = Arm::parse(row.get("arm"))
        .ok_or_else(|| format!("`arm`: unknown value `{}`", row.get("arm")))?;
    let kind = WtpKind::parse(row.get("wtp_kind"))
        .ok_or_else(|| format!("`wtp_kind`: unknown value `{}`", row.get("wtp_kind")))?;
    let wtp = WtpObservation::new(kind, row.num("wtp_amount")?, row.num("v_f")?)
        .map_err(|e| e.to_string())?;
    let cap_reached = match row.get("cap_reached") {
        "" => None,
        "one" => Some(Stage::One),
        "two" => Some(Stage::Two),
        other => return Err(format!("`cap_reached`: unknown value `{other}`")),
    };
    let defaults = SessionConfig::default();
    let config = SessionConfig {
        ss_amount: row.num("ss_amount")?,
        ll_amount: row.num("ll_amount")?,
        epsilon_days: row
            .opt_num("epsilon_days")?
            .unwrap_or(defaults.epsilon_days),
        initial_delay_days: row
            .opt_num("initial_delay_days")?
            .unwrap_or(defaults.initial_delay_days),
        step_days: row.opt_num("step_days")?.unwrap_or(defaults.step_days),
        max_delay_days: row
            .opt_num("max_delay_days")?
            .unwrap_or(defaults.max_delay_days),
        currency_label: row.get("currency_label").to_string(),
        beta_assumed: row.num("beta_assumed")?,
        prompts: defaults.prompts,
    };
    let mut record = SessionRecord {
        subject_id: row.get("subject_id").to_string(),
        gender,
        arm,
        d_star: row.opt_num("d_star")?,
        fd_star: row.opt_num("fd_star")?,
        wtp,
        cap_reached,
        config,
        transcript: Vec::new(),
        created_at: row.time("created_at")?,
        completed_at: row.time("completed_at")?,
    };
    record.validate().map_err(|e| e.to_string())?;

    let tokens = row.get("transcript");
    if !tokens.trim().is_empty() {
        let answers = tokens
            .split_whitespace()
            .map(Answer::parse_token)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let state = SessionState::replay(record.config.clone(), answers)
            .map_err(|e| format!("transcript: {e}"))?;
        let replayed = state
            .finalize(record.subject_id.clone())
            .map_err(|e| format!("transcript: {e}"))?;
        let same = replayed.arm == record.arm
            && replayed.d_star == record.d_star
            && replayed.fd_star == record.fd_star
            && replayed.cap_reached == record.cap_reached
            && replayed.wtp.kind == record.wtp.kind
            && replayed.wtp.amount == record.wtp.amount;
        if !same {
            return Err("transcript does not reproduce the row's outcome columns".into());
        }
        record.transcript = replayed.transcript;
    }
    Ok(record)
}

/// Parses a record CSV. Bad rows are reported with their line number and
/// skipped; the remaining rows are still returned.
pub fn load_records<R: Read>(input: R) -> Result<LoadReport, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let index: HashMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect();
    for required in [
        "subject_id",
        "arm",
        "d_star",
        "fd_star",
        "wtp_kind",
        "wtp_amount",
        "v_f",
        "ss_amount",
        "ll_amount",
        "beta_assumed",
        "currency_label",
    ] {
        if !index.contains_key(required) {
            return Err(DatasetError::MissingColumn(required.into()));
        }
    }

    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    for result in reader.records() {
        let rec = match result {
            Ok(rec) => rec,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                report.row_errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&Row {
            rec: &rec,
            index: &index,
        }) {
            Ok(record) => {
                if !seen.insert(record.subject_id.clone()) {
                    report.warnings.push(format!(
                        "line {line}: duplicate subject_id `{}`",
                        record.subject_id
                    ));
                }
                report.records.push(record);
            }
            Err(message) => report.row_errors.push(RowError { line, message }),
        }
    }
    Ok(report)
}

pub fn load_records_from_path(path: &Path) -> Result<LoadReport, DatasetError> {
    load_records(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentralTendency {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SummaryOptions {
    /// Applied to the D* and FD* columns only.
    pub day_columns: CentralTendency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub label: String,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub n: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub center: Option<f64>,
    pub center_kind: CentralTendency,
    /// Sample (n − 1) standard deviation; unset below two observations.
    pub std: Option<f64>,
}

impl ColumnStats {
    pub fn from_values(name: &str, values: &[f64], center_kind: CentralTendency) -> Self {
        let n = values.len();
        let min = values.iter().copied().reduce(f64::min);
        let max = values.iter().copied().reduce(f64::max);
        let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
        let center = match center_kind {
            CentralTendency::Mean => mean,
            CentralTendency::Median => median(values),
        };
        let std = mean.filter(|_| n > 1).map(|m| {
            let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Self {
            name: name.into(),
            n,
            min,
            max,
            center,
            center_kind,
            std,
        }
    }
}

fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEstimate {
    pub subject_id: String,
    pub arm: Arm,
    pub d_star: Option<u32>,
    pub fd_star: Option<u32>,
    pub estimate: RecordEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub schema_version: u32,
    pub beta_assumed: f64,
    pub std_convention: String,
    pub n_records: usize,
    pub arms: Vec<Share>,
    pub genders: Vec<Share>,
    /// D*, FD*, commitment cost, flexibility cost.
    pub columns: Vec<ColumnStats>,
    /// `[0, 0.5)`, `[0.5, 1)`, `{1}` over records with a point p̂.
    pub p_hat_bands: Vec<Share>,
    pub undefined_p_hat: usize,
    /// p̂, δ, WI.
    pub estimates: Vec<ColumnStats>,
    pub flag_counts: BTreeMap<String, usize>,
    pub subjects: Vec<SubjectEstimate>,
}

fn shares(labels: &[&str], counts: &[usize], total: usize) -> Vec<Share> {
    labels
        .iter()
        .zip(counts)
        .map(|(label, &count)| Share {
            label: (*label).into(),
            count,
            percent: if total == 0 {
                0.0
            } else {
                100.0 * count as f64 / total as f64
            },
        })
        .collect()
}

/// Runs the estimators on every record (using `beta_assumed` for all of them)
/// and tabulates the results.
pub fn summarize(
    records: &[SessionRecord],
    beta_assumed: f64,
    options: SummaryOptions,
) -> Result<SummaryReport, DatasetError> {
    if records.is_empty() {
        return Err(crate::Error::Empty("records").into());
    }
    let n = records.len();

    let arm_counts: Vec<usize> = Arm::ALL
        .iter()
        .map(|a| records.iter().filter(|r| r.arm == *a).count())
        .collect();
    let arm_labels: Vec<&str> = Arm::ALL.iter().map(|a| a.as_str()).collect();
    let gender_counts = [Some(Gender::F), Some(Gender::M), None]
        .map(|g| records.iter().filter(|r| r.gender == g).count());

    let days = |f: fn(&SessionRecord) -> Option<u32>| -> Vec<f64> {
        records.iter().filter_map(f).map(f64::from).collect()
    };
    let paid = |kind: WtpKind| -> Vec<f64> {
        records
            .iter()
            .filter(|r| r.wtp.kind == kind && r.wtp.amount > 0.0)
            .map(|r| r.wtp.amount)
            .collect()
    };
    let columns = vec![
        ColumnStats::from_values(
            "D*",
            &days(|r| r.d_star.filter(|_| !r.stage1_censored())),
            options.day_columns,
        ),
        ColumnStats::from_values("FD*", &days(|r| r.fd_star), options.day_columns),
        ColumnStats::from_values(
            "commitment_cost",
            &paid(WtpKind::CommitmentPaid),
            CentralTendency::Mean,
        ),
        ColumnStats::from_values(
            "flexibility_cost",
            &paid(WtpKind::FlexibilityPaid),
            CentralTendency::Mean,
        ),
    ];

    let mut subjects = Vec::with_capacity(n);
    let mut flag_counts = BTreeMap::new();
    for r in records {
        let estimate = estimate_record(r, beta_assumed)?;
        if let Some(res) = estimate.result() {
            for f in &res.flags {
                *flag_counts.entry(format!("{f:?}")).or_insert(0) += 1;
            }
        }
        subjects.push(SubjectEstimate {
            subject_id: r.subject_id.clone(),
            arm: r.arm,
            d_star: r.d_star,
            fd_star: r.fd_star,
            estimate,
        });
    }

    let p_hats: Vec<f64> = subjects.iter().filter_map(|s| s.estimate.p_hat()).collect();
    let deltas: Vec<f64> = subjects
        .iter()
        .filter_map(|s| s.estimate.result())
        .map(|r| r.delta_used)
        .collect();
    let wis: Vec<f64> = subjects
        .iter()
        .filter_map(|s| s.estimate.result().and_then(|r| r.wi))
        .collect();

    let band_counts = [
        p_hats.iter().filter(|p| **p < 0.5).count(),
        p_hats.iter().filter(|p| (0.5..1.0).contains(*p)).count(),
        p_hats.iter().filter(|p| **p == 1.0).count(),
    ];

    Ok(SummaryReport {
        schema_version: SUMMARY_SCHEMA_VERSION,
        beta_assumed,
        std_convention: "sample (n-1)".into(),
        n_records: n,
        arms: shares(&arm_labels, &arm_counts, n),
        genders: shares(&["F", "M", "unspecified"], &gender_counts, n),
        columns,
        p_hat_bands: shares(
            &["0 <= p_hat < 0.5", "0.5 <= p_hat < 1", "p_hat = 1"],
            &band_counts,
            p_hats.len(),
        ),
        undefined_p_hat: n - p_hats.len(),
        estimates: vec![
            ColumnStats::from_values("p_hat", &p_hats, CentralTendency::Mean),
            ColumnStats::from_values("delta", &deltas, CentralTendency::Mean),
            ColumnStats::from_values("WI", &wis, CentralTendency::Mean),
        ],
        flag_counts,
        subjects,
    })
}

impl SummaryReport {
    pub fn flagged(&self, flag: Flag) -> usize {
        self.flag_counts
            .get(&format!("{flag:?}"))
            .copied()
            .unwrap_or(0)
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

impl fmt::Display for SummaryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "records: {}   beta: {}   std: {}",
            self.n_records, self.beta_assumed, self.std_convention
        )?;
        writeln!(f)?;
        writeln!(f, "{:<26} {:>6} {:>8}", "arm", "N", "%")?;
        for s in self.arms.iter().chain(&self.genders) {
            writeln!(f, "{:<26} {:>6} {:>7.2}%", s.label, s.count, s.percent)?;
        }
        writeln!(f)?;
        let table = |f: &mut fmt::Formatter<'_>, rows: &[ColumnStats]| -> fmt::Result {
            writeln!(
                f,
                "{:<18} {:>5} {:>12} {:>12} {:>12} {:>12}",
                "variable", "n", "min", "max", "center", "std"
            )?;
            for c in rows {
                let center = match c.center_kind {
                    CentralTendency::Mean => cell(c.center),
                    CentralTendency::Median => format!("{} (med)", cell(c.center)),
                };
                writeln!(
                    f,
                    "{:<18} {:>5} {:>12} {:>12} {:>12} {:>12}",
                    c.name,
                    c.n,
                    cell(c.min),
                    cell(c.max),
                    center,
                    cell(c.std)
                )?;
            }
            Ok(())
        };
        table(f, &self.columns)?;
        writeln!(f)?;
        writeln!(f, "{:<26} {:>6} {:>8}", "p_hat band", "N", "%")?;
        for s in &self.p_hat_bands {
            writeln!(f, "{:<26} {:>6} {:>7.2}%", s.label, s.count, s.percent)?;
        }
        writeln!(f, "{:<26} {:>6}", "p_hat undefined", self.undefined_p_hat)?;
        writeln!(f)?;
        table(f, &self.estimates)?;
        if !self.flag_counts.is_empty() {
            writeln!(f)?;
            for (flag, count) in &self.flag_counts {
                writeln!(f, "flag {flag}: {count}")?;
            }
        }
        Ok(())
    }
}

/// One subject from an external study, in that study's own currency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalRow {
    pub subject_id: String,
    #[serde(default)]
    pub gender: Option<String>,
    /// `ss`, `strict commitment`, `costly commitment`, `costless commitment`,
    /// `flexibility` or `none`.
    pub choice: String,
    pub delay_days: u32,
    #[serde(default)]
    pub front_end_delay_days: Option<u32>,
    /// Overrides the mapping's fixed cost for this row.
    #[serde(default)]
    pub cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalMapping {
    pub fx_rate: f64,
    pub ss_bucket_max_days: u32,
    pub ss_amount: f64,
    pub ll_amount: f64,
    pub commitment_cost: f64,
    pub flexibility_cost: f64,
    pub beta_assumed: f64,
    pub currency_label: String,
}

impl Default for ExternalMapping {
    fn default() -> Self {
        Self {
            fx_rate: 20_000.0,
            ss_bucket_max_days: 4,
            ss_amount: 100.0,
            ll_amount: 110.0,
            commitment_cost: 2.0,
            flexibility_cost: 2.0,
            beta_assumed: 0.88,
            currency_label: "Rials".into(),
        }
    }
}

pub fn load_external<R: Read>(input: R) -> Result<Vec<ExternalRow>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    Ok(reader
        .deserialize()
        .collect::<Result<Vec<ExternalRow>, _>>()?)
}

/// Converts external rows to session records. Rows whose delay falls in the
/// SS bucket become SS records whatever their choice label; unknown labels are
/// reported per row.
pub fn map_external(
    rows: &[ExternalRow],
    mapping: &ExternalMapping,
) -> Result<(Vec<SessionRecord>, Vec<RowError>), DatasetError> {
    if !(mapping.fx_rate.is_finite() && mapping.fx_rate > 0.0) {
        return Err(crate::Error::InvalidParameter {
            field: "fx_rate".into(),
            reason: format!("must be finite and > 0, got {}", mapping.fx_rate),
        }
        .into());
    }
    let config = SessionConfig {
        ss_amount: mapping.ss_amount * mapping.fx_rate,
        ll_amount: mapping.ll_amount * mapping.fx_rate,
        currency_label: mapping.currency_label.clone(),
        beta_assumed: mapping.beta_assumed,
        ..SessionConfig::default()
    };
    config.validate()?;

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let line = i as u64 + 2;
        match map_row(row, mapping, &config) {
            Ok(r) => records.push(r),
            Err(message) => errors.push(RowError { line, message }),
        }
    }
    Ok((records, errors))
}

fn map_row(
    row: &ExternalRow,
    mapping: &ExternalMapping,
    config: &SessionConfig,
) -> Result<SessionRecord, String> {
    let gender = match row.gender.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(g) if g.eq_ignore_ascii_case("f") || g.eq_ignore_ascii_case("female") => {
            Some(Gender::F)
        }
        Some(g) if g.eq_ignore_ascii_case("m") || g.eq_ignore_ascii_case("male") => Some(Gender::M),
        Some(other) => return Err(format!("unknown gender `{other}`")),
    };
    let label = row.choice.trim().to_ascii_lowercase();
    let cost = |default: f64| -> Result<f64, String> {
        let c = row.cost.unwrap_or(default) * mapping.fx_rate;
        if c.is_finite() && c >= 0.0 {
            Ok(c)
        } else {
            Err(format!("invalid cost {c}"))
        }
    };
    let base = SessionRecord {
        subject_id: row.subject_id.clone(),
        gender,
        arm: Arm::SS,
        d_star: None,
        fd_star: None,
        wtp: WtpObservation::none_refused(),
        cap_reached: None,
        config: config.clone(),
        transcript: Vec::new(),
        created_at: None,
        completed_at: None,
    };
    if label == "ss" || label == "sooner" || row.delay_days <= mapping.ss_bucket_max_days {
        return Ok(base);
    }
    let wtp = match label.as_str() {
        "strict commitment" | "costly commitment" | "commitment" => {
            let m = cost(mapping.commitment_cost)?;
            if m > 0.0 {
                WtpObservation::commitment(m).map_err(|e| e.to_string())?
            } else {
                WtpObservation::costless_commitment()
            }
        }
        "costless commitment" | "free commitment" => WtpObservation::costless_commitment(),
        "flexibility" | "costly flexibility" => {
            WtpObservation::flexibility(cost(mapping.flexibility_cost)?)
                .map_err(|e| e.to_string())?
        }
        "none" | "no commitment" => WtpObservation::none_refused(),
        other => return Err(format!("unknown choice label `{other}`")),
    };
    let record = SessionRecord {
        arm: Arm::from_wtp(wtp.kind),
        d_star: Some(row.delay_days),
        fd_star: row.front_end_delay_days,
        wtp,
        ..base
    };
    record.validate().map_err(|e| e.to_string())?;
    Ok(record)
}
