//! Raw files in, partitioned tables and a manifest out.
//!
//! Layout under the tables directory:
//!
//! ```text
//! epoch_rewards/date=YYYY-MM-DD.csv
//! daily_rewards/date=YYYY-MM-DD.csv
//! daily_category_totals.csv
//! validator_lifetime_totals.csv
//! validator_growth.csv
//! manifest.json
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::extsort::ExternalSorter;
use super::merge::{merge_rewards_by_epoch, Keyed};
use super::rollup::{
    validator_growth_series, CategoryTotalsAccumulator, DailyCategoryTotals, DailyRollup,
    LifetimeAccumulator,
};
use super::AggregateError;
use crate::beacon_client::Stream;
use crate::chain_time::ChainSpec;
use crate::reward_model::{
    AttestationRewardRecord, DailyValidatorReward, EpochValidatorReward, Gwei,
    ProposerRewardRecord, RewardAmount, SyncCommitteeRewardRecord, ValidateRecord,
};
use crate::table::{self, CsvSchema, TableError, TableWriter};

pub const EPOCH_TABLE: &str = "epoch_rewards";
pub const DAILY_TABLE: &str = "daily_rewards";
pub const CATEGORY_TOTALS_FILE: &str = "daily_category_totals.csv";
pub const LIFETIME_FILE: &str = "validator_lifetime_totals.csv";
pub const GROWTH_FILE: &str = "validator_growth.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default)]
pub struct AggregateOptions {
    pub sorter: ExternalSorter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub table: String,
    /// Relative to the tables directory.
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
    pub rows: u64,
    /// Sum of the `total` column in Gwei.
    pub gwei_checksum: i128,
}

/// Sum of all rewards in Gwei at each stage; all five must agree.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSums {
    pub raw: i128,
    pub epoch: i128,
    pub daily: i128,
    pub category: i128,
    pub lifetime: i128,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub proposer: u64,
    pub attestation: u64,
    pub sync_committee: u64,
    /// Attestation records whose total differs from head+target+source.
    /// They are kept with their reported total.
    pub attestation_total_mismatch: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub sums: StageSums,
    pub raw_records: u64,
    pub violations: ViolationCounts,
}

impl Manifest {
    pub fn load(tables_dir: &Path) -> Result<Self, TableError> {
        let path = tables_dir.join(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|e| TableError::io(&path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| TableError::Parse {
            path,
            line: e.line() as u64,
            message: e.to_string(),
        })
    }

    pub fn partitions<'a>(&'a self, table: &'a str) -> impl Iterator<Item = &'a ManifestEntry> {
        self.entries
            .iter()
            .filter(move |e| e.table == table && e.date.is_some())
    }
}

#[derive(Debug, Clone)]
pub struct AggregateReport {
    pub manifest: Manifest,
    pub epoch_rows: u64,
    pub daily_rows: u64,
    pub dates: Vec<NaiveDate>,
    pub warnings: Vec<String>,
}

struct PartitionWriter<T: Serialize + CsvSchema> {
    table: &'static str,
    root: PathBuf,
    current: Option<(NaiveDate, TableWriter<T>, i128)>,
    entries: Vec<ManifestEntry>,
}

impl<T: Serialize + CsvSchema> PartitionWriter<T> {
    fn new(root: &Path, table: &'static str) -> Result<Self, TableError> {
        let dir = root.join(table);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| TableError::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| TableError::io(&dir, e))?;
        Ok(Self {
            table,
            root: root.to_path_buf(),
            current: None,
            entries: Vec::new(),
        })
    }

    fn relative(&self, date: NaiveDate) -> String {
        format!("{}/date={}.csv", self.table, date.format("%Y-%m-%d"))
    }

    fn write(&mut self, date: NaiveDate, row: &T, gwei: Gwei) -> Result<(), TableError> {
        if self.current.as_ref().map(|c| c.0) != Some(date) {
            self.close()?;
            let path = self.root.join(self.relative(date));
            self.current = Some((date, TableWriter::create(&path)?, 0));
        }
        let (_, w, sum) = self.current.as_mut().expect("opened above");
        *sum += gwei as i128;
        w.write(row)
    }

    fn close(&mut self) -> Result<(), TableError> {
        if let Some((date, mut w, sum)) = self.current.take() {
            w.flush()?;
            self.entries.push(ManifestEntry {
                table: self.table.to_string(),
                path: self.relative(date),
                date: Some(date),
                rows: w.rows(),
                gwei_checksum: sum,
            });
        }
        Ok(())
    }

    fn finish(mut self) -> Result<Vec<ManifestEntry>, TableError> {
        self.close()?;
        Ok(self.entries)
    }
}

struct DailySink {
    parts: PartitionWriter<DailyValidatorReward>,
    categories: CategoryTotalsAccumulator,
    lifetime: LifetimeAccumulator,
    category_rows: Vec<DailyCategoryTotals>,
    buf: Vec<DailyValidatorReward>,
    rows: u64,
    sum: i128,
}

impl DailySink {
    fn drain(&mut self) -> Result<(), AggregateError> {
        for d in self.buf.drain(..) {
            self.sum += d.total as i128;
            self.rows += 1;
            self.parts.write(d.date, &d, d.total)?;
            self.categories.push(&d, &mut self.category_rows)?;
            self.lifetime.push(&d)?;
        }
        Ok(())
    }
}

/// Reads a partitioned table back in date order.
pub fn read_partitioned<T: DeserializeOwned + 'static>(
    tables_dir: &Path,
    table: &str,
) -> Result<Box<dyn Iterator<Item = Result<T, TableError>>>, TableError> {
    let dir = tables_dir.join(table);
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| TableError::io(&dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| TableError::io(&dir, err)))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| {
        p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("date=") && n.ends_with(".csv"))
    });
    paths.sort();
    Ok(Box::new(paths.into_iter().flat_map(
        |p| match table::read_records::<T>(&p) {
            Ok(it) => Box::new(it) as Box<dyn Iterator<Item = _>>,
            Err(e) => Box::new(std::iter::once(Err(e))),
        },
    )))
}

#[derive(Default)]
struct RawTally {
    records: u64,
    sum: i128,
    violations: u64,
    total_mismatch: u64,
}

fn raw_input<'a, T>(
    raw_dir: &Path,
    stream: Stream,
    spec: ChainSpec,
    tally: &'a mut RawTally,
    warnings: &mut Vec<String>,
) -> Result<Box<dyn Iterator<Item = Result<T, TableError>> + 'a>, TableError>
where
    T: DeserializeOwned + ValidateRecord + RewardAmount + 'static,
{
    let path = raw_dir.join(format!("{stream}.csv"));
    if !path.exists() {
        warnings.push(format!(
            "{} not found; treating {stream} stream as empty",
            path.display()
        ));
        return Ok(Box::new(std::iter::empty()));
    }
    let records = table::read_records::<T>(&path)?;
    Ok(Box::new(records.inspect(move |r| {
        if let Ok(rec) = r {
            tally.records += 1;
            tally.sum += rec.reward() as i128;
            let v = rec.violations(&spec);
            if !v.is_empty() {
                tally.violations += 1;
                if v.iter().any(|v| v.field == "total_attestation_reward") {
                    tally.total_mismatch += 1;
                }
                log::debug!("{stream} record violates schema: {:?}", v);
            }
        }
    })))
}

fn key_of<T: Keyed>(r: &T) -> (crate::chain_time::Epoch, u64) {
    r.key()
}

/// Runs the whole aggregation stage and enforces Gwei conservation.
pub fn run_aggregate(
    raw_dir: &Path,
    tables_dir: &Path,
    spec: &ChainSpec,
    options: &AggregateOptions,
) -> Result<AggregateReport, AggregateError> {
    let spec = *spec;
    fs::create_dir_all(tables_dir).map_err(|e| TableError::io(tables_dir, e))?;
    let mut warnings = Vec::new();
    let (mut pt, mut at, mut st) = (
        RawTally::default(),
        RawTally::default(),
        RawTally::default(),
    );

    let sorter = &options.sorter;
    let proposer = sorter.sort_by_key(
        raw_input::<ProposerRewardRecord>(raw_dir, Stream::Proposer, spec, &mut pt, &mut warnings)?,
        key_of::<ProposerRewardRecord>,
    )?;
    let attestation = sorter.sort_by_key(
        raw_input::<AttestationRewardRecord>(
            raw_dir,
            Stream::Attestation,
            spec,
            &mut at,
            &mut warnings,
        )?,
        key_of::<AttestationRewardRecord>,
    )?;
    let sync = sorter.sort_by_key(
        raw_input::<SyncCommitteeRewardRecord>(
            raw_dir,
            Stream::SyncCommittee,
            spec,
            &mut st,
            &mut warnings,
        )?,
        key_of::<SyncCommitteeRewardRecord>,
    )?;

    let raw_records = pt.records + at.records + st.records;
    if raw_records == 0 {
        warnings.push("no raw reward records; writing empty tables".to_string());
    }
    let violations = ViolationCounts {
        proposer: pt.violations,
        attestation: at.violations,
        sync_committee: st.violations,
        attestation_total_mismatch: at.total_mismatch,
    };
    if violations.attestation_total_mismatch > 0 {
        warnings.push(format!(
            "{} attestation records report a total different from head+target+source",
            violations.attestation_total_mismatch
        ));
    }

    let mut sums = StageSums {
        raw: pt.sum + at.sum + st.sum,
        ..StageSums::default()
    };
    let mut component_epoch = [0i128; 3];
    let mut component_category = [0i128; 3];

    let mut epoch_parts = PartitionWriter::<EpochValidatorReward>::new(tables_dir, EPOCH_TABLE)?;
    let mut rollup = DailyRollup::new(spec);
    let mut daily = DailySink {
        parts: PartitionWriter::new(tables_dir, DAILY_TABLE)?,
        categories: CategoryTotalsAccumulator::new(),
        lifetime: LifetimeAccumulator::new(),
        category_rows: Vec::new(),
        buf: Vec::new(),
        rows: 0,
        sum: 0,
    };
    let mut epoch_rows = 0u64;

    for row in merge_rewards_by_epoch(proposer, attestation, sync) {
        let row = row?;
        epoch_rows += 1;
        sums.epoch += row.total as i128;
        component_epoch[0] += row.attestation as i128;
        component_epoch[1] += row.sync_committee as i128;
        component_epoch[2] += row.proposer as i128;
        let date = spec.epoch_to_utc_date(row.epoch)?;
        epoch_parts.write(date, &row, row.total)?;
        rollup.push(&row, &mut daily.buf)?;
        daily.drain()?;
    }
    rollup.finish(&mut daily.buf)?;
    daily.drain()?;
    let DailySink {
        parts: daily_parts,
        mut categories,
        lifetime,
        mut category_rows,
        rows: daily_rows,
        sum,
        ..
    } = daily;
    sums.daily = sum;
    categories.finish(&mut category_rows);

    let lifetime_rows = lifetime.finish()?;
    for c in &category_rows {
        sums.category += c.total as i128;
        component_category[0] += c.attestation as i128;
        component_category[1] += c.sync_committee as i128;
        component_category[2] += c.proposer as i128;
    }
    sums.lifetime = lifetime_rows.iter().map(|l| l.total as i128).sum();

    let stages = [
        sums.raw,
        sums.epoch,
        sums.daily,
        sums.category,
        sums.lifetime,
    ];
    if stages.iter().any(|&s| s != sums.raw) || component_epoch != component_category {
        return Err(AggregateError::Conservation {
            detail: format!(
                "raw {} / epoch {} / daily {} / category {} / lifetime {} Gwei; components {:?} vs {:?}",
                sums.raw, sums.epoch, sums.daily, sums.category, sums.lifetime,
                component_epoch, component_category
            ),
        });
    }

    let mut entries = epoch_parts.finish()?;
    entries.extend(daily_parts.finish()?);

    let cat_path = tables_dir.join(CATEGORY_TOTALS_FILE);
    let rows = table::write_all(&cat_path, category_rows.iter().copied())?;
    entries.push(ManifestEntry {
        table: "daily_category_totals".into(),
        path: CATEGORY_TOTALS_FILE.into(),
        date: None,
        rows,
        gwei_checksum: sums.category,
    });

    let life_path = tables_dir.join(LIFETIME_FILE);
    let rows = table::write_all(&life_path, lifetime_rows.iter().copied())?;
    entries.push(ManifestEntry {
        table: "validator_lifetime_totals".into(),
        path: LIFETIME_FILE.into(),
        date: None,
        rows,
        gwei_checksum: sums.lifetime,
    });

    let growth = validator_growth_series(&category_rows);
    let growth_path = tables_dir.join(GROWTH_FILE);
    let mut text = String::from("date,active_validators,mean_total_per_validator\n");
    for g in &growth {
        let mean = g
            .mean_total_per_validator
            .map_or_else(|| "null".to_string(), |m| m.to_string());
        text.push_str(&format!("{},{},{}\n", g.date, g.active_validators, mean));
    }
    fs::write(&growth_path, text).map_err(|e| TableError::io(&growth_path, e))?;
    entries.push(ManifestEntry {
        table: "validator_growth".into(),
        path: GROWTH_FILE.into(),
        date: None,
        rows: growth.len() as u64,
        gwei_checksum: sums.category,
    });

    let manifest = Manifest {
        entries,
        sums,
        raw_records,
        violations,
    };
    let manifest_path = tables_dir.join(MANIFEST_FILE);
    let mut f = fs::File::create(&manifest_path).map_err(|e| TableError::io(&manifest_path, e))?;
    serde_json::to_writer_pretty(&mut f, &manifest)
        .map_err(|e| TableError::io(&manifest_path, e.into()))?;
    f.write_all(b"\n")
        .map_err(|e| TableError::io(&manifest_path, e))?;

    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(AggregateReport {
        dates: category_rows.iter().map(|c| c.date).collect(),
        manifest,
        epoch_rows,
        daily_rows,
        warnings,
    })
}
