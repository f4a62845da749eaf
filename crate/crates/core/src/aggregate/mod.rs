//! Streaming joins and roll-ups from raw reward streams to the per-epoch,
//! per-day, per-category and per-validator tables.

mod extsort;
mod merge;
mod pipeline;
mod rollup;

use std::convert::Infallible;

use thiserror::Error;

use crate::chain_time::ChainTimeError;
use crate::table::TableError;

pub use extsort::{ExternalSorter, SortedRecords, DEFAULT_CHUNK_RECORDS};
pub use merge::{merge_rewards_by_epoch, EpochKey, Keyed, MergeByEpoch};
pub use pipeline::{
    read_partitioned, run_aggregate, AggregateOptions, AggregateReport, Manifest, ManifestEntry,
    ViolationCounts, CATEGORY_TOTALS_FILE, DAILY_TABLE, EPOCH_TABLE, GROWTH_FILE, LIFETIME_FILE,
    MANIFEST_FILE,
};
pub use rollup::{
    daily_category_totals, rollup_daily, validator_growth_series, validator_lifetime_totals,
    CategoryTotalsAccumulator, DailyCategoryTotals, DailyRollup, GrowthPoint, LifetimeAccumulator,
    RollupDaily, ValidatorLifetimeTotals,
};

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("{stream} input is not sorted at record {position}: {detail}")]
    Unsorted {
        stream: &'static str,
        position: u64,
        detail: String,
    },
    #[error("integer overflow in {what}")]
    Overflow { what: &'static str },
    #[error("conservation check failed: {detail}")]
    Conservation { detail: String },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    ChainTime(#[from] ChainTimeError),
}

impl From<Infallible> for AggregateError {
    fn from(e: Infallible) -> Self {
        match e {}
    }
}

impl AggregateError {
    pub fn is_io(&self) -> bool {
        matches!(self, AggregateError::Table(t) if t.is_io())
    }
}
