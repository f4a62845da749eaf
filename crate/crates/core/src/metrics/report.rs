use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{metric_series, Category, ClampMode, MetricPoint};
use crate::aggregate::{
    read_partitioned, validator_growth_series, AggregateError, DailyCategoryTotals,
    ValidatorLifetimeTotals, CATEGORY_TOTALS_FILE, DAILY_TABLE, LIFETIME_FILE,
};
use crate::reward_model::{gwei_to_ether, DailyValidatorReward};
use crate::table::{self, TableError};

pub const INDICES_FILE: &str = "indices_daily.csv";
pub const PLOT_DAILY_REWARDS_FILE: &str = "plot_daily_rewards.csv";
pub const PLOT_VALIDATOR_REWARDS_FILE: &str = "plot_validator_rewards.csv";
pub const PLOT_VALIDATOR_GROWTH_FILE: &str = "plot_validator_growth.csv";
pub const PLOT_INDICES_FILE: &str = "plot_indices.csv";

const NULL: &str = "null";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Table(#[from] TableError),
}

impl MetricsError {
    pub fn is_io(&self) -> bool {
        match self {
            MetricsError::Aggregate(a) => a.is_io(),
            MetricsError::Table(t) => t.is_io(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MetricsOptions {
    pub clamp: ClampMode,
    pub categories: Vec<Category>,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            clamp: ClampMode::Uniform,
            categories: Category::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub points: Vec<MetricPoint>,
    pub files: Vec<PathBuf>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| NULL.to_string(), |x| x.to_string())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, TableError> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> TableError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => TableError::io(path, io),
        other => TableError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

fn write_rows<const N: usize>(
    path: &Path,
    header: [&str; N],
    rows: impl IntoIterator<Item = [String; N]>,
) -> Result<(), TableError> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| TableError::io(path, e))
}

/// `indices_daily.csv`; undefined indices are written as `null`.
pub fn write_indices_csv(path: &Path, points: &[MetricPoint]) -> Result<(), TableError> {
    write_rows(
        path,
        [
            "date",
            "category",
            "gini",
            "shannon_entropy",
            "hhi",
            "nakamoto_count",
            "nakamoto_fraction",
            "participants",
        ],
        points.iter().map(|p| {
            let ix = &p.indices;
            [
                p.date.to_string(),
                p.category.to_string(),
                opt(ix.gini),
                opt(ix.shannon_entropy),
                opt(ix.hhi),
                opt(ix.nakamoto_count),
                opt(ix.nakamoto_fraction),
                ix.participants.to_string(),
            ]
        }),
    )
}

/// Computes the daily index series from an aggregated tables directory and
/// writes it, plus long-format plot tables, into `out_dir`.
pub fn run_metrics(
    tables_dir: &Path,
    out_dir: &Path,
    options: &MetricsOptions,
) -> Result<MetricsReport, MetricsError> {
    fs::create_dir_all(out_dir).map_err(|e| TableError::io(out_dir, e))?;
    let daily = read_partitioned::<DailyValidatorReward>(tables_dir, DAILY_TABLE)?;
    let points = metric_series(daily, &options.categories, options.clamp)?;
    let mut files = Vec::new();

    let path = out_dir.join(INDICES_FILE);
    write_indices_csv(&path, &points)?;
    files.push(path);

    let totals: Vec<DailyCategoryTotals> = table::read_all(&tables_dir.join(CATEGORY_TOTALS_FILE))?;
    let path = out_dir.join(PLOT_DAILY_REWARDS_FILE);
    write_rows(
        &path,
        ["date", "category", "reward_ether"],
        totals.iter().flat_map(|t| {
            [
                (Category::Attestation, t.attestation),
                (Category::Proposer, t.proposer),
                (Category::SyncCommittee, t.sync_committee),
                (Category::Total, t.total),
            ]
            .map(|(c, g)| {
                [
                    t.date.to_string(),
                    c.to_string(),
                    gwei_to_ether(g).to_string(),
                ]
            })
        }),
    )?;
    files.push(path);

    let lifetime: Vec<ValidatorLifetimeTotals> = table::read_all(&tables_dir.join(LIFETIME_FILE))?;
    let path = out_dir.join(PLOT_VALIDATOR_REWARDS_FILE);
    write_rows(
        &path,
        ["validator_index", "category", "reward_ether"],
        lifetime.iter().flat_map(|l| {
            [
                (Category::Attestation, l.attestation),
                (Category::Proposer, l.proposer),
                (Category::SyncCommittee, l.sync_committee),
                (Category::Total, l.total),
            ]
            .map(|(c, g)| {
                [
                    l.validator_index.to_string(),
                    c.to_string(),
                    gwei_to_ether(g).to_string(),
                ]
            })
        }),
    )?;
    files.push(path);

    let path = out_dir.join(PLOT_VALIDATOR_GROWTH_FILE);
    write_rows(
        &path,
        ["date", "series", "value"],
        validator_growth_series(&totals).into_iter().flat_map(|g| {
            [
                [
                    g.date.to_string(),
                    "active_validators".to_string(),
                    g.active_validators.to_string(),
                ],
                [
                    g.date.to_string(),
                    "mean_total_per_validator_ether".to_string(),
                    opt(g.mean_total_per_validator),
                ],
            ]
        }),
    )?;
    files.push(path);

    let path = out_dir.join(PLOT_INDICES_FILE);
    write_rows(
        &path,
        ["date", "category", "metric", "value"],
        points.iter().flat_map(|p| {
            let ix = &p.indices;
            [
                ("gini", opt(ix.gini)),
                ("shannon_entropy", opt(ix.shannon_entropy)),
                ("hhi", opt(ix.hhi)),
                ("nakamoto_count", opt(ix.nakamoto_count)),
                ("nakamoto_fraction", opt(ix.nakamoto_fraction)),
            ]
            .map(|(m, v)| [p.date.to_string(), p.category.to_string(), m.to_string(), v])
        }),
    )?;
    files.push(path);

    Ok(MetricsReport { points, files })
}
