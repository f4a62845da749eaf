//! Collection of the three reward streams from a consensus node, or from a
//! fixture directory with the same response bodies.

mod collect;
mod source;
pub mod wire;

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::chain_time::{ChainSpec, Epoch, Slot};
use crate::reward_model::{
    AttestationRewardRecord, ProposerRewardRecord, SyncCommitteeRewardRecord,
};

pub use collect::{run_collection, Checkpoint, CollectError, CollectionJob, CollectionSummary};
pub use source::{Fetched, FixtureSource, HttpSource, RewardSource, SourceError, Stream};

/// Exponential backoff: `base_delay * factor^(n-1)` before retry `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub base_delay: Duration,
    pub factor: u32,
    /// Total attempts including the first one.
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base_delay: Duration::from_secs(1),
            factor: 2,
            max_attempts: 5,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay() -> Self {
        Self {
            base_delay: Duration::ZERO,
            ..Self::default()
        }
    }

    /// Delay before the `retry`-th retry (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay
            .saturating_mul(self.factor.saturating_pow(retry.saturating_sub(1)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitStatus {
    Ok,
    Missed,
    Error,
}

impl UnitStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            UnitStatus::Ok => "ok",
            UnitStatus::Missed => "missed",
            UnitStatus::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordBatch {
    Proposer(Vec<ProposerRewardRecord>),
    Attestation(Vec<AttestationRewardRecord>),
    SyncCommittee(Vec<SyncCommitteeRewardRecord>),
}

impl RecordBatch {
    pub fn empty(stream: Stream) -> Self {
        match stream {
            Stream::Proposer => RecordBatch::Proposer(Vec::new()),
            Stream::Attestation => RecordBatch::Attestation(Vec::new()),
            Stream::SyncCommittee => RecordBatch::SyncCommittee(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            RecordBatch::Proposer(v) => v.len(),
            RecordBatch::Attestation(v) => v.len(),
            RecordBatch::SyncCommittee(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Terminal result of fetching one unit (slot or epoch).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchOutcome {
    pub unit_id: u64,
    pub status: UnitStatus,
    pub records: RecordBatch,
    pub error_detail: Option<String>,
    /// Non-fatal oddities, e.g. an epoch with no attesters.
    pub warnings: u32,
    pub attempts: u32,
}

enum AttemptError {
    Retryable(String),
    Fatal(String),
}

pub struct BeaconClient {
    source: Box<dyn RewardSource>,
    spec: ChainSpec,
    retry: RetryPolicy,
}

impl BeaconClient {
    pub fn new(source: impl RewardSource + 'static, spec: ChainSpec) -> Self {
        Self {
            source: Box::new(source),
            spec,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    pub fn fetch_proposer_reward(&self, slot: Slot) -> FetchOutcome {
        self.fetch(Stream::Proposer, slot.0)
    }

    pub fn fetch_attestation_rewards(&self, epoch: Epoch) -> FetchOutcome {
        self.fetch(Stream::Attestation, epoch.0)
    }

    pub fn fetch_sync_committee_rewards(&self, slot: Slot) -> FetchOutcome {
        self.fetch(Stream::SyncCommittee, slot.0)
    }

    pub fn fetch(&self, stream: Stream, unit: u64) -> FetchOutcome {
        let mut attempts = 0;
        loop {
            attempts += 1;
            let outcome = match self.try_fetch(stream, unit) {
                Ok(Some(records)) => {
                    let warnings = u32::from(records.is_empty() && stream == Stream::Attestation);
                    if warnings > 0 {
                        log::warn!("{stream} {unit}: response contains no validators");
                    }
                    FetchOutcome {
                        unit_id: unit,
                        status: UnitStatus::Ok,
                        records,
                        error_detail: None,
                        warnings,
                        attempts,
                    }
                }
                Ok(None) => FetchOutcome {
                    unit_id: unit,
                    status: UnitStatus::Missed,
                    records: RecordBatch::empty(stream),
                    error_detail: None,
                    warnings: 0,
                    attempts,
                },
                Err(AttemptError::Retryable(detail)) if attempts < self.retry.max_attempts => {
                    let delay = self.retry.delay(attempts);
                    log::debug!(
                        "{stream} {unit}: attempt {attempts}/{} failed: {detail}; retrying in {delay:?}",
                        self.retry.max_attempts
                    );
                    thread::sleep(delay);
                    continue;
                }
                Err(AttemptError::Retryable(detail)) | Err(AttemptError::Fatal(detail)) => {
                    log::error!("{stream} {unit}: {detail}");
                    FetchOutcome {
                        unit_id: unit,
                        status: UnitStatus::Error,
                        records: RecordBatch::empty(stream),
                        error_detail: Some(detail),
                        warnings: 0,
                        attempts,
                    }
                }
            };
            return outcome;
        }
    }

    fn try_fetch(&self, stream: Stream, unit: u64) -> Result<Option<RecordBatch>, AttemptError> {
        let body = match self.source.fetch(stream, unit) {
            Ok(Fetched::Body(body)) => body,
            Ok(Fetched::NotFound) => return Ok(None),
            Err(SourceError::Transient(d)) => return Err(AttemptError::Retryable(d)),
            Err(SourceError::Permanent(d)) => return Err(AttemptError::Fatal(d)),
        };
        let classify = |e: serde_json::Error| {
            if e.is_io() {
                AttemptError::Retryable(format!("read error: {e}"))
            } else {
                AttemptError::Fatal(format!("parse error: {e}"))
            }
        };
        let batch = match stream {
            Stream::Proposer => {
                let r = wire::decode_block_rewards(body).map_err(classify)?;
                let slot = Slot(unit);
                RecordBatch::Proposer(vec![ProposerRewardRecord {
                    validator_index: r.proposer_index,
                    total: r.total,
                    attestations: r.attestations,
                    sync_aggregate: r.sync_aggregate,
                    proposer_slashings: r.proposer_slashings,
                    attester_slashings: r.attester_slashings,
                    slot,
                    epoch: self.spec.slot_to_epoch(slot),
                }])
            }
            Stream::Attestation => {
                let mut records = Vec::new();
                wire::decode_attestation_rewards(body, Epoch(unit), &mut |r| records.push(r))
                    .map_err(classify)?;
                records.sort_by_key(|r| r.validator_index);
                RecordBatch::Attestation(records)
            }
            Stream::SyncCommittee => {
                let slot = Slot(unit);
                let epoch = self.spec.slot_to_epoch(slot);
                let mut records: Vec<_> = wire::decode_sync_committee_rewards(body)
                    .map_err(classify)?
                    .into_iter()
                    .map(|m| SyncCommitteeRewardRecord {
                        validator_index: m.validator_index,
                        sync_reward: m.reward,
                        slot,
                        epoch,
                    })
                    .collect();
                records.sort_by_key(|r| r.validator_index);
                RecordBatch::SyncCommittee(records)
            }
        };
        Ok(Some(batch))
    }
}
