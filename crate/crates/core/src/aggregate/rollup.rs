use std::collections::{BTreeMap, HashSet, VecDeque};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::AggregateError;
use crate::chain_time::{ChainSpec, Epoch};
use crate::reward_model::{DailyValidatorReward, EpochValidatorReward, Gwei, GWEI_PER_ETHER};
use crate::table::CsvSchema;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Components {
    attestation: Gwei,
    sync_committee: Gwei,
    proposer: Gwei,
}

impl Components {
    fn add(
        &mut self,
        attestation: Gwei,
        sync_committee: Gwei,
        proposer: Gwei,
    ) -> Result<(), AggregateError> {
        let overflow = || AggregateError::Overflow {
            what: "daily component",
        };
        self.attestation = self
            .attestation
            .checked_add(attestation)
            .ok_or_else(overflow)?;
        self.sync_committee = self
            .sync_committee
            .checked_add(sync_committee)
            .ok_or_else(overflow)?;
        self.proposer = self.proposer.checked_add(proposer).ok_or_else(overflow)?;
        Ok(())
    }

    fn total(&self) -> Result<Gwei, AggregateError> {
        self.attestation
            .checked_add(self.sync_committee)
            .and_then(|t| t.checked_add(self.proposer))
            .ok_or(AggregateError::Overflow {
                what: "daily total",
            })
    }
}

/// Push-based reducer from per-epoch rows to per-day rows.
///
/// Keeps one day's per-validator sums in memory and emits them, sorted by
/// validator, as soon as the input moves on to the next UTC date.
pub struct DailyRollup {
    spec: ChainSpec,
    current: Option<NaiveDate>,
    last_epoch: Option<Epoch>,
    position: u64,
    sums: BTreeMap<u64, Components>,
}

impl DailyRollup {
    pub fn new(spec: ChainSpec) -> Self {
        Self {
            spec,
            current: None,
            last_epoch: None,
            position: 0,
            sums: BTreeMap::new(),
        }
    }

    pub fn push(
        &mut self,
        row: &EpochValidatorReward,
        out: &mut Vec<DailyValidatorReward>,
    ) -> Result<(), AggregateError> {
        self.position += 1;
        if self.last_epoch.is_some_and(|e| row.epoch < e) {
            return Err(AggregateError::Unsorted {
                stream: "epoch_rewards",
                position: self.position,
                detail: format!(
                    "epoch {} after epoch {}",
                    row.epoch,
                    self.last_epoch.unwrap()
                ),
            });
        }
        self.last_epoch = Some(row.epoch);
        let date = self.spec.epoch_to_utc_date(row.epoch)?;
        if self.current != Some(date) {
            self.flush(out)?;
            self.current = Some(date);
        }
        self.sums.entry(row.validator_index).or_default().add(
            row.attestation,
            row.sync_committee,
            row.proposer,
        )
    }

    pub fn finish(&mut self, out: &mut Vec<DailyValidatorReward>) -> Result<(), AggregateError> {
        self.flush(out)
    }

    fn flush(&mut self, out: &mut Vec<DailyValidatorReward>) -> Result<(), AggregateError> {
        let Some(date) = self.current else {
            return Ok(());
        };
        for (validator_index, c) in std::mem::take(&mut self.sums) {
            out.push(DailyValidatorReward {
                validator_index,
                total: c.total()?,
                attestation: c.attestation,
                sync_committee: c.sync_committee,
                proposer: c.proposer,
                date,
            });
        }
        Ok(())
    }
}

/// Groups per-epoch rows into per-day rows keyed by (UTC date, validator).
pub struct RollupDaily<I> {
    input: I,
    rollup: DailyRollup,
    pending: VecDeque<DailyValidatorReward>,
    buf: Vec<DailyValidatorReward>,
    done: bool,
}

pub fn rollup_daily<I, E>(input: I, spec: ChainSpec) -> RollupDaily<I::IntoIter>
where
    I: IntoIterator<Item = Result<EpochValidatorReward, E>>,
    E: Into<AggregateError>,
{
    RollupDaily {
        input: input.into_iter(),
        rollup: DailyRollup::new(spec),
        pending: VecDeque::new(),
        buf: Vec::new(),
        done: false,
    }
}

impl<I, E> Iterator for RollupDaily<I>
where
    I: Iterator<Item = Result<EpochValidatorReward, E>>,
    E: Into<AggregateError>,
{
    type Item = Result<DailyValidatorReward, AggregateError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(row) = self.pending.pop_front() {
                return Some(Ok(row));
            }
            if self.done {
                return None;
            }
            let step = match self.input.next() {
                Some(Ok(row)) => self.rollup.push(&row, &mut self.buf),
                Some(Err(e)) => Err(e.into()),
                None => {
                    self.done = true;
                    self.rollup.finish(&mut self.buf)
                }
            };
            if let Err(e) = step {
                self.done = true;
                self.pending.clear();
                return Some(Err(e));
            }
            self.pending.extend(self.buf.drain(..));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyCategoryTotals {
    pub date: NaiveDate,
    pub total: Gwei,
    pub attestation: Gwei,
    pub proposer: Gwei,
    pub sync_committee: Gwei,
    pub active_validators: u64,
}

impl CsvSchema for DailyCategoryTotals {
    const HEADER: &'static [&'static str] = &[
        "date",
        "total",
        "attestation",
        "proposer",
        "sync_committee",
        "active_validators",
    ];
}

/// Push-based per-date sums across validators.
#[derive(Default)]
pub struct CategoryTotalsAccumulator {
    current: Option<DailyCategoryTotals>,
    seen: HashSet<u64>,
    position: u64,
}

impl CategoryTotalsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        row: &DailyValidatorReward,
        out: &mut Vec<DailyCategoryTotals>,
    ) -> Result<(), AggregateError> {
        self.position += 1;
        match &self.current {
            Some(cur) if cur.date == row.date => {}
            Some(cur) if row.date < cur.date => {
                return Err(AggregateError::Unsorted {
                    stream: "daily_rewards",
                    position: self.position,
                    detail: format!("date {} after date {}", row.date, cur.date),
                })
            }
            _ => {
                self.finish(out);
                self.current = Some(DailyCategoryTotals {
                    date: row.date,
                    total: 0,
                    attestation: 0,
                    proposer: 0,
                    sync_committee: 0,
                    active_validators: 0,
                });
            }
        }
        let cur = self.current.as_mut().expect("set above");
        let overflow = || AggregateError::Overflow {
            what: "daily category total",
        };
        cur.total = cur.total.checked_add(row.total).ok_or_else(overflow)?;
        cur.attestation = cur
            .attestation
            .checked_add(row.attestation)
            .ok_or_else(overflow)?;
        cur.proposer = cur
            .proposer
            .checked_add(row.proposer)
            .ok_or_else(overflow)?;
        cur.sync_committee = cur
            .sync_committee
            .checked_add(row.sync_committee)
            .ok_or_else(overflow)?;
        if self.seen.insert(row.validator_index) {
            cur.active_validators += 1;
        }
        Ok(())
    }

    pub fn finish(&mut self, out: &mut Vec<DailyCategoryTotals>) {
        if let Some(cur) = self.current.take() {
            out.push(cur);
        }
        self.seen.clear();
    }
}

/// Per-date componentwise sums; input must be sorted by date.
pub fn daily_category_totals<I, E>(input: I) -> Result<Vec<DailyCategoryTotals>, AggregateError>
where
    I: IntoIterator<Item = Result<DailyValidatorReward, E>>,
    E: Into<AggregateError>,
{
    let mut acc = CategoryTotalsAccumulator::new();
    let mut out = Vec::new();
    for row in input {
        acc.push(&row.map_err(Into::into)?, &mut out)?;
    }
    acc.finish(&mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorLifetimeTotals {
    pub validator_index: u64,
    pub total: Gwei,
    pub attestation: Gwei,
    pub proposer: Gwei,
    pub sync_committee: Gwei,
}

impl CsvSchema for ValidatorLifetimeTotals {
    const HEADER: &'static [&'static str] = &[
        "validator_index",
        "total",
        "attestation",
        "proposer",
        "sync_committee",
    ];
}

#[derive(Default)]
pub struct LifetimeAccumulator {
    sums: BTreeMap<u64, Components>,
}

impl LifetimeAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: &DailyValidatorReward) -> Result<(), AggregateError> {
        self.sums.entry(row.validator_index).or_default().add(
            row.attestation,
            row.sync_committee,
            row.proposer,
        )
    }

    pub fn finish(self) -> Result<Vec<ValidatorLifetimeTotals>, AggregateError> {
        self.sums
            .into_iter()
            .map(|(validator_index, c)| {
                Ok(ValidatorLifetimeTotals {
                    validator_index,
                    total: c.total()?,
                    attestation: c.attestation,
                    proposer: c.proposer,
                    sync_committee: c.sync_committee,
                })
            })
            .collect()
    }
}

/// Whole-period totals per validator, sorted by validator index.
pub fn validator_lifetime_totals<I, E>(
    input: I,
) -> Result<Vec<ValidatorLifetimeTotals>, AggregateError>
where
    I: IntoIterator<Item = Result<DailyValidatorReward, E>>,
    E: Into<AggregateError>,
{
    let mut acc = LifetimeAccumulator::new();
    for row in input {
        acc.push(&row.map_err(Into::into)?)?;
    }
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthPoint {
    pub date: NaiveDate,
    pub active_validators: u64,
    /// Mean daily total per active validator in Ether; `None` when the day
    /// has no active validators.
    pub mean_total_per_validator: Option<f64>,
}

pub fn validator_growth_series(totals: &[DailyCategoryTotals]) -> Vec<GrowthPoint> {
    totals
        .iter()
        .map(|t| GrowthPoint {
            date: t.date,
            active_validators: t.active_validators,
            mean_total_per_validator: (t.active_validators > 0)
                .then(|| t.total as f64 / t.active_validators as f64 / GWEI_PER_ETHER as f64),
        })
        .collect()
}
