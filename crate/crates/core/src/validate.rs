//! Crosschecks of pipeline output against external reference records:
//! per-validator income detail for single epochs and daily total income.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::DailyCategoryTotals;
use crate::beacon_client::wire::quoted;
use crate::beacon_client::Stream;
use crate::chain_time::{ChainSpec, Epoch};
use crate::reward_model::{
    AttestationRewardRecord, EpochValidatorReward, Gwei, ProposerRewardRecord, GWEI_PER_ETHER,
};
use crate::table::{self, TableError};

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("{}: {message}", path.display())]
    Reference { path: PathBuf, message: String },
    #[error("no dates in common between our totals and the reference series")]
    NoOverlap,
}

impl ValidateError {
    pub fn is_io(&self) -> bool {
        matches!(self, ValidateError::Table(t) if t.is_io())
    }
}

/// Income breakdown of one validator in one epoch, as published by an
/// explorer's income-detail endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceIncomeRecord {
    pub epoch: Epoch,
    pub validator_index: u64,
    pub attestation_source: Gwei,
    pub attestation_target: Gwei,
    pub attestation_head: Gwei,
    pub proposer_attestation_inclusion: Gwei,
    pub proposer_sync_inclusion: Gwei,
    /// Execution-layer fee; carried along but never compared.
    #[serde(default)]
    pub transaction_fee_wei: Option<String>,
}

impl ReferenceIncomeRecord {
    pub fn components(&self) -> IncomeComponents {
        IncomeComponents {
            attestation_source: self.attestation_source,
            attestation_target: self.attestation_target,
            attestation_head: self.attestation_head,
            proposer_attestation_inclusion: self.proposer_attestation_inclusion,
            proposer_sync_inclusion: self.proposer_sync_inclusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDailyTotal {
    pub date: NaiveDate,
    pub total_income_ether: f64,
}

/// The compared beacon-chain income fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IncomeComponents {
    pub attestation_source: Gwei,
    pub attestation_target: Gwei,
    pub attestation_head: Gwei,
    pub proposer_attestation_inclusion: Gwei,
    pub proposer_sync_inclusion: Gwei,
}

impl IncomeComponents {
    fn fields(&self) -> [(&'static str, Gwei); 5] {
        [
            ("attestation_source", self.attestation_source),
            ("attestation_target", self.attestation_target),
            ("attestation_head", self.attestation_head),
            (
                "proposer_attestation_inclusion",
                self.proposer_attestation_inclusion,
            ),
            ("proposer_sync_inclusion", self.proposer_sync_inclusion),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldCheck {
    pub field: String,
    pub ours: Gwei,
    pub reference: Gwei,
    /// `ours - reference`.
    pub delta: i128,
    pub pass: bool,
}

/// Field-by-field comparison; `tolerance_gwei` bounds `|delta|`.
pub fn compare_components(
    ours: &IncomeComponents,
    reference: &IncomeComponents,
    tolerance_gwei: Gwei,
) -> Vec<FieldCheck> {
    ours.fields()
        .into_iter()
        .zip(reference.fields())
        .map(|((field, o), (_, r))| {
            let delta = o as i128 - r as i128;
            FieldCheck {
                field: field.to_string(),
                ours: o,
                reference: r,
                delta,
                pass: delta.abs() <= tolerance_gwei.unsigned_abs() as i128,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Uncovered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorEpochCheck {
    pub epoch: Epoch,
    pub validator_index: u64,
    pub status: CheckStatus,
    pub fields: Vec<FieldCheck>,
}

/// Our raw records for the keys under test.
#[derive(Debug, Clone, Default)]
pub struct RawIncomeIndex {
    attestation: BTreeMap<(Epoch, u64), AttestationRewardRecord>,
    proposer: BTreeMap<(Epoch, u64), (Gwei, Gwei)>,
}

impl RawIncomeIndex {
    /// Scans `attestation.csv` and `proposer.csv` in `raw_dir`, keeping only
    /// records whose (epoch, validator) appears in `keys`. A missing file
    /// is read as an empty stream.
    pub fn load(raw_dir: &Path, keys: &BTreeSet<(Epoch, u64)>) -> Result<Self, ValidateError> {
        let mut index = Self::default();
        let att = raw_dir.join(format!("{}.csv", Stream::Attestation));
        if att.exists() {
            for r in table::read_records::<AttestationRewardRecord>(&att)? {
                index.add_attestation(r?, keys);
            }
        }
        let prop = raw_dir.join(format!("{}.csv", Stream::Proposer));
        if prop.exists() {
            for r in table::read_records::<ProposerRewardRecord>(&prop)? {
                index.add_proposer(&r?, keys);
            }
        }
        Ok(index)
    }

    pub fn from_records(
        attestation: &[AttestationRewardRecord],
        proposer: &[ProposerRewardRecord],
    ) -> Self {
        let mut index = Self::default();
        let keys: BTreeSet<_> = attestation
            .iter()
            .map(|r| (r.epoch, r.validator_index))
            .chain(proposer.iter().map(|r| (r.epoch, r.validator_index)))
            .collect();
        for r in attestation {
            index.add_attestation(*r, &keys);
        }
        for r in proposer {
            index.add_proposer(r, &keys);
        }
        index
    }

    fn add_attestation(&mut self, r: AttestationRewardRecord, keys: &BTreeSet<(Epoch, u64)>) {
        let key = (r.epoch, r.validator_index);
        if keys.contains(&key) {
            self.attestation.insert(key, r);
        }
    }

    fn add_proposer(&mut self, r: &ProposerRewardRecord, keys: &BTreeSet<(Epoch, u64)>) {
        let key = (r.epoch, r.validator_index);
        if keys.contains(&key) {
            let e = self.proposer.entry(key).or_insert((0, 0));
            e.0 = e.0.saturating_add(r.attestations);
            e.1 = e.1.saturating_add(r.sync_aggregate);
        }
    }

    /// `None` when we hold no attestation record for the key.
    pub fn components(&self, epoch: Epoch, validator_index: u64) -> Option<IncomeComponents> {
        let a = self.attestation.get(&(epoch, validator_index))?;
        let (inclusion, sync) = self
            .proposer
            .get(&(epoch, validator_index))
            .copied()
            .unwrap_or((0, 0));
        Some(IncomeComponents {
            attestation_source: a.source,
            attestation_target: a.target,
            attestation_head: a.head,
            proposer_attestation_inclusion: inclusion,
            proposer_sync_inclusion: sync,
        })
    }
}

pub fn crosscheck_validator_epoch(
    ours: &RawIncomeIndex,
    reference: &ReferenceIncomeRecord,
    tolerance_gwei: Gwei,
) -> ValidatorEpochCheck {
    let (status, fields) = match ours.components(reference.epoch, reference.validator_index) {
        None => (CheckStatus::Uncovered, Vec::new()),
        Some(c) => {
            let fields = compare_components(&c, &reference.components(), tolerance_gwei);
            let status = if fields.iter().all(|f| f.pass) {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            };
            (status, fields)
        }
    };
    ValidatorEpochCheck {
        epoch: reference.epoch,
        validator_index: reference.validator_index,
        status,
        fields,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorSummary {
    pub checked: u64,
    pub passed: u64,
    pub failed: u64,
    pub uncovered: u64,
    pub tolerance_gwei: Gwei,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<S, F> {
    pub summary: S,
    pub failures: Vec<F>,
}

pub type ValidatorReport = Report<ValidatorSummary, ValidatorEpochCheck>;

impl ValidatorReport {
    pub fn all_passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn to_text(&self) -> String {
        let s = &self.summary;
        let mut out = format!(
            "validator income crosscheck (tolerance {} gwei): {} checked, {} passed, {} failed, {} uncovered\n",
            s.tolerance_gwei, s.checked, s.passed, s.failed, s.uncovered
        );
        for f in &self.failures {
            match f.status {
                CheckStatus::Uncovered => {
                    let _ = writeln!(
                        out,
                        "  epoch {} validator {}: uncovered",
                        f.epoch, f.validator_index
                    );
                }
                _ => {
                    for c in f.fields.iter().filter(|c| !c.pass) {
                        let _ = writeln!(
                            out,
                            "  epoch {} validator {} {}: ours {} reference {} delta {:+}",
                            f.epoch, f.validator_index, c.field, c.ours, c.reference, c.delta
                        );
                    }
                }
            }
        }
        out
    }
}

pub fn crosscheck_validators(
    ours: &RawIncomeIndex,
    references: &[ReferenceIncomeRecord],
    tolerance_gwei: Gwei,
) -> ValidatorReport {
    let mut summary = ValidatorSummary {
        checked: 0,
        passed: 0,
        failed: 0,
        uncovered: 0,
        tolerance_gwei,
    };
    let mut failures = Vec::new();
    for r in references {
        let check = crosscheck_validator_epoch(ours, r, tolerance_gwei);
        summary.checked += 1;
        match check.status {
            CheckStatus::Pass => summary.passed += 1,
            CheckStatus::Fail => summary.failed += 1,
            CheckStatus::Uncovered => summary.uncovered += 1,
        }
        if check.status != CheckStatus::Pass {
            failures.push(check);
        }
    }
    Report { summary, failures }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyCheck {
    pub date: NaiveDate,
    pub ours_ether: f64,
    pub reference_ether: f64,
    /// `ours - reference` in Ether.
    pub delta_ether: f64,
    /// `delta / |reference|`; infinite when the reference is zero and
    /// ours is not.
    pub relative_difference: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySummary {
    pub compared: u64,
    pub passed: u64,
    pub pass_rate: f64,
    pub rel_tolerance: f64,
    pub only_ours: u64,
    pub only_reference: u64,
}

pub type DailyReport = Report<DailySummary, DailyCheck>;

impl DailyReport {
    pub fn all_passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn to_text(&self) -> String {
        let s = &self.summary;
        let mut out = format!(
            "daily total crosscheck (relative tolerance {}): {}/{} dates pass ({:.2}%), {} only ours, {} only reference\n",
            s.rel_tolerance,
            s.passed,
            s.compared,
            s.pass_rate * 100.0,
            s.only_ours,
            s.only_reference
        );
        for f in &self.failures {
            let _ = writeln!(
                out,
                "  {}: ours {} reference {} relative difference {}",
                f.date, f.ours_ether, f.reference_ether, f.relative_difference
            );
        }
        out
    }
}

fn gwei_as_ether(g: Gwei) -> f64 {
    g as f64 / GWEI_PER_ETHER as f64
}

/// Relative comparison of daily totals on the dates both series cover.
pub fn crosscheck_daily_totals(
    ours: &[DailyCategoryTotals],
    references: &[ReferenceDailyTotal],
    rel_tolerance: f64,
) -> Result<DailyReport, ValidateError> {
    let ours_by_date: BTreeMap<NaiveDate, f64> = ours
        .iter()
        .map(|t| (t.date, gwei_as_ether(t.total)))
        .collect();
    let refs_by_date: BTreeMap<NaiveDate, f64> = references
        .iter()
        .map(|r| (r.date, r.total_income_ether))
        .collect();
    let mut checks = Vec::new();
    for (date, &reference) in &refs_by_date {
        let Some(&ours) = ours_by_date.get(date) else {
            continue;
        };
        let delta = ours - reference;
        let relative = if delta == 0.0 {
            0.0
        } else if reference == 0.0 {
            f64::INFINITY
        } else {
            delta / reference.abs()
        };
        checks.push(DailyCheck {
            date: *date,
            ours_ether: ours,
            reference_ether: reference,
            delta_ether: delta,
            relative_difference: relative,
            pass: relative.abs() <= rel_tolerance,
        });
    }
    if checks.is_empty() {
        return Err(ValidateError::NoOverlap);
    }
    let compared = checks.len() as u64;
    let passed = checks.iter().filter(|c| c.pass).count() as u64;
    Ok(Report {
        summary: DailySummary {
            compared,
            passed,
            pass_rate: passed as f64 / compared as f64,
            rel_tolerance,
            only_ours: ours_by_date
                .keys()
                .filter(|d| !refs_by_date.contains_key(d))
                .count() as u64,
            only_reference: refs_by_date
                .keys()
                .filter(|d| !ours_by_date.contains_key(d))
                .count() as u64,
        },
        failures: checks.into_iter().filter(|c| !c.pass).collect(),
    })
}

/// Daily totals implied by a per-epoch ledger, in the reference format.
pub fn daily_totals_from_ledger(
    ledger: &[EpochValidatorReward],
    spec: &ChainSpec,
) -> Result<Vec<ReferenceDailyTotal>, ValidateError> {
    let mut by_date: BTreeMap<NaiveDate, i128> = BTreeMap::new();
    for r in ledger {
        let date = spec
            .epoch_to_utc_date(r.epoch)
            .map_err(|e| ValidateError::Reference {
                path: PathBuf::from("ledger"),
                message: e.to_string(),
            })?;
        *by_date.entry(date).or_insert(0) += r.total as i128;
    }
    Ok(by_date
        .into_iter()
        .map(|(date, g)| ReferenceDailyTotal {
            date,
            total_income_ether: g as f64 / GWEI_PER_ETHER as f64,
        })
        .collect())
}

// Reference file adapters.

#[derive(Deserialize)]
struct ApiIncome {
    #[serde(default, with = "quoted")]
    attestation_source_reward: Gwei,
    #[serde(default, with = "quoted")]
    attestation_source_penalty: Gwei,
    #[serde(default, with = "quoted")]
    attestation_target_reward: Gwei,
    #[serde(default, with = "quoted")]
    attestation_target_penalty: Gwei,
    #[serde(default, with = "quoted")]
    attestation_head_reward: Gwei,
    #[serde(default, with = "quoted")]
    proposer_attestation_inclusion_reward: Gwei,
    #[serde(default, with = "quoted")]
    proposer_sync_inclusion_reward: Gwei,
    #[serde(default)]
    tx_fee_reward_wei: Option<serde_json::Value>,
}

#[derive(Deserialize)]
struct ApiEntry {
    #[serde(with = "quoted")]
    epoch: u64,
    #[serde(with = "quoted", alias = "validator_index")]
    validatorindex: u64,
    income: ApiIncome,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ApiData {
    Many(Vec<ApiEntry>),
    One(ApiEntry),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ApiBody {
    Wrapped { data: ApiData },
    Bare(ApiData),
}

impl From<ApiEntry> for ReferenceIncomeRecord {
    fn from(e: ApiEntry) -> Self {
        let i = e.income;
        ReferenceIncomeRecord {
            epoch: Epoch(e.epoch),
            validator_index: e.validatorindex,
            attestation_source: i.attestation_source_reward - i.attestation_source_penalty,
            attestation_target: i.attestation_target_reward - i.attestation_target_penalty,
            attestation_head: i.attestation_head_reward,
            proposer_attestation_inclusion: i.proposer_attestation_inclusion_reward,
            proposer_sync_inclusion: i.proposer_sync_inclusion_reward,
            transaction_fee_wei: i.tx_fee_reward_wei.map(|v| match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            }),
        }
    }
}

/// Parses an income-detail-history API response body. Penalties reported
/// as separate positive amounts are netted against their rewards.
pub fn parse_income_detail_json(text: &str) -> Result<Vec<ReferenceIncomeRecord>, String> {
    let body: ApiBody = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let data = match body {
        ApiBody::Wrapped { data } | ApiBody::Bare(data) => data,
    };
    Ok(match data {
        ApiData::Many(v) => v.into_iter().map(Into::into).collect(),
        ApiData::One(e) => vec![e.into()],
    })
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

/// Reads reference income records from an API-shaped JSON file or a CSV
/// with one column per [`ReferenceIncomeRecord`] field.
pub fn load_income_reference(path: &Path) -> Result<Vec<ReferenceIncomeRecord>, ValidateError> {
    if is_json(path) {
        let text = fs::read_to_string(path).map_err(|e| TableError::io(path, e))?;
        parse_income_detail_json(&text).map_err(|message| ValidateError::Reference {
            path: path.to_path_buf(),
            message,
        })
    } else {
        Ok(table::read_all(path)?)
    }
}

/// Reads `date,total_income_ether` rows from CSV, or a JSON array of
/// objects with those keys.
pub fn load_daily_reference(path: &Path) -> Result<Vec<ReferenceDailyTotal>, ValidateError> {
    if is_json(path) {
        let text = fs::read_to_string(path).map_err(|e| TableError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| ValidateError::Reference {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    } else {
        Ok(table::read_all(path)?)
    }
}

/// Writes `<stem>.json` and `<stem>.txt` into `dir`.
pub fn write_report<S: Serialize, F: Serialize>(
    dir: &Path,
    stem: &str,
    report: &Report<S, F>,
    text: &str,
) -> Result<Vec<PathBuf>, ValidateError> {
    fs::create_dir_all(dir).map_err(|e| TableError::io(dir, e))?;
    let json_path = dir.join(format!("{stem}.json"));
    let mut json = serde_json::to_string_pretty(report).map_err(|e| ValidateError::Reference {
        path: json_path.clone(),
        message: e.to_string(),
    })?;
    json.push('\n');
    fs::write(&json_path, json).map_err(|e| TableError::io(&json_path, e))?;
    let text_path = dir.join(format!("{stem}.txt"));
    fs::write(&text_path, text).map_err(|e| TableError::io(&text_path, e))?;
    Ok(vec![json_path, text_path])
}
