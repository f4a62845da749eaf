//! Raw reward streams and their joined per-epoch / per-day forms.
//!
//! Rewards are integer Gwei everywhere inside the pipeline. Ether only
//! appears at export and analysis boundaries, through [`Ether`].

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::chain_time::{ChainSpec, Epoch, Slot};

/// Signed reward amount in Gwei (10^-9 Ether).
pub type Gwei = i64;

pub const GWEI_PER_ETHER: i64 = 1_000_000_000;

/// An exact Ether amount backed by integer Gwei.
///
/// `Display` prints the exact decimal expansion, e.g. `0.035844119`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Ether(pub Gwei);

pub fn gwei_to_ether(v: Gwei) -> Ether {
    Ether(v)
}

impl Ether {
    pub fn gwei(self) -> Gwei {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / GWEI_PER_ETHER as f64
    }
}

impl fmt::Display for Ether {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let whole = abs / GWEI_PER_ETHER as u64;
        let frac = abs % GWEI_PER_ETHER as u64;
        let digits = format!("{frac:09}");
        let digits = digits.trim_end_matches('0');
        let digits = if digits.is_empty() { "0" } else { digits };
        write!(f, "{sign}{whole}.{digits}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposerRewardRecord {
    pub validator_index: u64,
    pub total: Gwei,
    pub attestations: Gwei,
    pub sync_aggregate: Gwei,
    pub proposer_slashings: Gwei,
    pub attester_slashings: Gwei,
    pub slot: Slot,
    pub epoch: Epoch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncCommitteeRewardRecord {
    pub validator_index: u64,
    pub sync_reward: Gwei,
    pub slot: Slot,
    pub epoch: Epoch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationRewardRecord {
    pub validator_index: u64,
    pub head: Gwei,
    pub target: Gwei,
    pub source: Gwei,
    pub total_attestation_reward: Gwei,
    pub epoch: Epoch,
}

/// Joined per-epoch row: one per (epoch, validator) with any reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochValidatorReward {
    pub validator_index: u64,
    pub total: Gwei,
    pub attestation: Gwei,
    pub sync_committee: Gwei,
    pub proposer: Gwei,
    pub epoch: Epoch,
}

/// Joined per-day row: one per (UTC date, validator).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyValidatorReward {
    pub validator_index: u64,
    pub total: Gwei,
    pub attestation: Gwei,
    pub sync_committee: Gwei,
    pub proposer: Gwei,
    pub date: NaiveDate,
}

/// A broken record invariant. Violations are reported, never fatal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

pub trait ValidateRecord {
    /// Empty iff every schema invariant holds.
    fn violations(&self, spec: &ChainSpec) -> Vec<Violation>;
}

pub fn validate_record<R: ValidateRecord>(record: &R, spec: &ChainSpec) -> Vec<Violation> {
    record.violations(spec)
}

fn check_sum(field: &'static str, reported: Gwei, parts: &[Gwei], out: &mut Vec<Violation>) {
    let sum: i128 = parts.iter().map(|&p| p as i128).sum();
    if sum != reported as i128 {
        out.push(Violation {
            field,
            rule: format!("{reported} != sum of components {sum}"),
        });
    }
}

fn check_epoch(spec: &ChainSpec, slot: Slot, epoch: Epoch, out: &mut Vec<Violation>) {
    let expected = spec.slot_to_epoch(slot);
    if expected != epoch {
        out.push(Violation {
            field: "epoch",
            rule: format!("epoch {epoch} does not contain slot {slot} (expected {expected})"),
        });
    }
}

impl ValidateRecord for ProposerRewardRecord {
    fn violations(&self, spec: &ChainSpec) -> Vec<Violation> {
        let mut out = Vec::new();
        check_sum(
            "total",
            self.total,
            &[
                self.attestations,
                self.sync_aggregate,
                self.proposer_slashings,
                self.attester_slashings,
            ],
            &mut out,
        );
        check_epoch(spec, self.slot, self.epoch, &mut out);
        out
    }
}

impl ValidateRecord for SyncCommitteeRewardRecord {
    fn violations(&self, spec: &ChainSpec) -> Vec<Violation> {
        let mut out = Vec::new();
        check_epoch(spec, self.slot, self.epoch, &mut out);
        out
    }
}

impl ValidateRecord for AttestationRewardRecord {
    fn violations(&self, _spec: &ChainSpec) -> Vec<Violation> {
        let mut out = Vec::new();
        check_sum(
            "total_attestation_reward",
            self.total_attestation_reward,
            &[self.head, self.target, self.source],
            &mut out,
        );
        out
    }
}

impl ValidateRecord for EpochValidatorReward {
    fn violations(&self, _spec: &ChainSpec) -> Vec<Violation> {
        let mut out = Vec::new();
        check_sum(
            "total",
            self.total,
            &[self.attestation, self.sync_committee, self.proposer],
            &mut out,
        );
        out
    }
}

impl ValidateRecord for DailyValidatorReward {
    fn violations(&self, _spec: &ChainSpec) -> Vec<Violation> {
        let mut out = Vec::new();
        check_sum(
            "total",
            self.total,
            &[self.attestation, self.sync_committee, self.proposer],
            &mut out,
        );
        out
    }
}

/// Sum of all reward fields a raw record contributes to the joined tables.
pub trait RewardAmount {
    fn reward(&self) -> Gwei;
}

impl RewardAmount for ProposerRewardRecord {
    fn reward(&self) -> Gwei {
        self.total
    }
}

impl RewardAmount for AttestationRewardRecord {
    fn reward(&self) -> Gwei {
        self.total_attestation_reward
    }
}

impl RewardAmount for SyncCommitteeRewardRecord {
    fn reward(&self) -> Gwei {
        self.sync_reward
    }
}

impl RewardAmount for EpochValidatorReward {
    fn reward(&self) -> Gwei {
        self.total
    }
}

impl RewardAmount for DailyValidatorReward {
    fn reward(&self) -> Gwei {
        self.total
    }
}
