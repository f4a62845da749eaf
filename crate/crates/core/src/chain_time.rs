//! Slot, epoch, timestamp and calendar-date arithmetic for the Beacon chain.
//!
//! All conversions are integer-exact. An epoch's time is the time of its
//! first slot, and an epoch belongs entirely to the UTC date of that instant.

use std::fmt;

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mainnet genesis: the start time of slot 0.
pub const MAINNET_GENESIS_TIMESTAMP: i64 = 1_606_824_023;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainTimeError {
    #[error("chain spec field `{0}` must be strictly positive")]
    NonPositive(&'static str),
    #[error("timestamp overflow for {unit} {value}")]
    Overflow { unit: &'static str, value: u64 },
    #[error("timestamp {0} is outside the representable calendar range")]
    OutOfCalendarRange(i64),
}

/// Protocol constants that drive the time arithmetic and committee cadence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSpec {
    pub genesis_timestamp: i64,
    pub seconds_per_slot: u64,
    pub slots_per_epoch: u64,
    pub sync_committee_size: u64,
    pub sync_committee_period_epochs: u64,
}

impl Default for ChainSpec {
    fn default() -> Self {
        Self::mainnet()
    }
}

impl ChainSpec {
    pub const fn mainnet() -> Self {
        Self {
            genesis_timestamp: MAINNET_GENESIS_TIMESTAMP,
            seconds_per_slot: 12,
            slots_per_epoch: 32,
            sync_committee_size: 512,
            sync_committee_period_epochs: 256,
        }
    }

    pub fn validate(&self) -> Result<(), ChainTimeError> {
        if self.genesis_timestamp <= 0 {
            return Err(ChainTimeError::NonPositive("genesis_timestamp"));
        }
        let counts = [
            ("seconds_per_slot", self.seconds_per_slot),
            ("slots_per_epoch", self.slots_per_epoch),
            ("sync_committee_size", self.sync_committee_size),
            (
                "sync_committee_period_epochs",
                self.sync_committee_period_epochs,
            ),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(ChainTimeError::NonPositive(name));
            }
        }
        Ok(())
    }

    pub fn seconds_per_epoch(&self) -> u64 {
        self.seconds_per_slot * self.slots_per_epoch
    }

    pub fn slot_to_timestamp(&self, slot: Slot) -> Result<i64, ChainTimeError> {
        let overflow = || ChainTimeError::Overflow {
            unit: "slot",
            value: slot.0,
        };
        let offset = slot
            .0
            .checked_mul(self.seconds_per_slot)
            .and_then(|s| i64::try_from(s).ok())
            .ok_or_else(overflow)?;
        self.genesis_timestamp
            .checked_add(offset)
            .ok_or_else(overflow)
    }

    pub fn epoch_to_timestamp(&self, epoch: Epoch) -> Result<i64, ChainTimeError> {
        let first_slot = self
            .epoch_start_slot(epoch)
            .ok_or(ChainTimeError::Overflow {
                unit: "epoch",
                value: epoch.0,
            })?;
        self.slot_to_timestamp(first_slot)
            .map_err(|_| ChainTimeError::Overflow {
                unit: "epoch",
                value: epoch.0,
            })
    }

    pub fn slot_to_epoch(&self, slot: Slot) -> Epoch {
        Epoch(slot.0 / self.slots_per_epoch)
    }

    /// First slot of `epoch`, or `None` if it does not fit in a `u64`.
    pub fn epoch_start_slot(&self, epoch: Epoch) -> Option<Slot> {
        epoch.0.checked_mul(self.slots_per_epoch).map(Slot)
    }

    /// UTC calendar date of the epoch's first slot.
    pub fn epoch_to_utc_date(&self, epoch: Epoch) -> Result<NaiveDate, ChainTimeError> {
        let ts = self.epoch_to_timestamp(epoch)?;
        DateTime::from_timestamp(ts, 0)
            .map(|dt| dt.date_naive())
            .ok_or(ChainTimeError::OutOfCalendarRange(ts))
    }

    /// Sync-committee period that contains `epoch`.
    pub fn sync_committee_period(&self, epoch: Epoch) -> u64 {
        epoch.0 / self.sync_committee_period_epochs
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Slot(pub u64);

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Epoch(pub u64);

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for Epoch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}
