use super::AggregateError;
use crate::chain_time::Epoch;
use crate::reward_model::{
    AttestationRewardRecord, EpochValidatorReward, Gwei, ProposerRewardRecord,
    SyncCommitteeRewardRecord,
};

/// Join key of the per-epoch table.
pub type EpochKey = (Epoch, u64);

pub trait Keyed {
    fn key(&self) -> EpochKey;
}

impl Keyed for ProposerRewardRecord {
    fn key(&self) -> EpochKey {
        (self.epoch, self.validator_index)
    }
}

impl Keyed for AttestationRewardRecord {
    fn key(&self) -> EpochKey {
        (self.epoch, self.validator_index)
    }
}

impl Keyed for SyncCommitteeRewardRecord {
    fn key(&self) -> EpochKey {
        (self.epoch, self.validator_index)
    }
}

impl Keyed for EpochValidatorReward {
    fn key(&self) -> EpochKey {
        (self.epoch, self.validator_index)
    }
}

/// One sorted input with a one-record lookahead and an order check.
struct SortedInput<I, T> {
    name: &'static str,
    iter: I,
    head: Option<T>,
    last_key: Option<EpochKey>,
    position: u64,
}

impl<I, T, E> SortedInput<I, T>
where
    I: Iterator<Item = Result<T, E>>,
    T: Keyed,
    E: Into<AggregateError>,
{
    fn new(name: &'static str, iter: I) -> Self {
        Self {
            name,
            iter,
            head: None,
            last_key: None,
            position: 0,
        }
    }

    fn peek_key(&mut self) -> Result<Option<EpochKey>, AggregateError> {
        if self.head.is_none() {
            match self.iter.next() {
                None => return Ok(None),
                Some(Err(e)) => return Err(e.into()),
                Some(Ok(rec)) => {
                    self.position += 1;
                    let key = rec.key();
                    if let Some(last) = self.last_key {
                        if key < last {
                            return Err(AggregateError::Unsorted {
                                stream: self.name,
                                position: self.position,
                                detail: format!(
                                    "key (epoch {}, validator {}) follows (epoch {}, validator {})",
                                    key.0, key.1, last.0, last.1
                                ),
                            });
                        }
                    }
                    self.last_key = Some(key);
                    self.head = Some(rec);
                }
            }
        }
        Ok(self.head.as_ref().map(Keyed::key))
    }

    /// Sums `amount` over every record carrying `key`.
    fn drain_key(
        &mut self,
        key: EpochKey,
        amount: impl Fn(&T) -> Gwei,
    ) -> Result<Gwei, AggregateError> {
        let mut sum: Gwei = 0;
        while self.peek_key()? == Some(key) {
            let rec = self.head.take().expect("peeked");
            sum = sum
                .checked_add(amount(&rec))
                .ok_or(AggregateError::Overflow {
                    what: "per-epoch component",
                })?;
        }
        Ok(sum)
    }
}

/// Full outer join of the three raw streams on (epoch, validator_index).
///
/// Every input must be sorted by that key; repeated keys (a sync-committee
/// member rewarded in every slot of the epoch) are summed. Absent
/// components contribute zero.
pub struct MergeByEpoch<P, A, S>
where
    P: Iterator,
    A: Iterator,
    S: Iterator,
{
    proposer: SortedInput<P, ProposerRewardRecord>,
    attestation: SortedInput<A, AttestationRewardRecord>,
    sync: SortedInput<S, SyncCommitteeRewardRecord>,
    failed: bool,
}

pub fn merge_rewards_by_epoch<P, A, S, EP, EA, ES>(
    proposer: P,
    attestation: A,
    sync: S,
) -> MergeByEpoch<P::IntoIter, A::IntoIter, S::IntoIter>
where
    P: IntoIterator<Item = Result<ProposerRewardRecord, EP>>,
    A: IntoIterator<Item = Result<AttestationRewardRecord, EA>>,
    S: IntoIterator<Item = Result<SyncCommitteeRewardRecord, ES>>,
    EP: Into<AggregateError>,
    EA: Into<AggregateError>,
    ES: Into<AggregateError>,
{
    MergeByEpoch {
        proposer: SortedInput::new("proposer", proposer.into_iter()),
        attestation: SortedInput::new("attestation", attestation.into_iter()),
        sync: SortedInput::new("sync_committee", sync.into_iter()),
        failed: false,
    }
}

impl<P, A, S, EP, EA, ES> MergeByEpoch<P, A, S>
where
    P: Iterator<Item = Result<ProposerRewardRecord, EP>>,
    A: Iterator<Item = Result<AttestationRewardRecord, EA>>,
    S: Iterator<Item = Result<SyncCommitteeRewardRecord, ES>>,
    EP: Into<AggregateError>,
    EA: Into<AggregateError>,
    ES: Into<AggregateError>,
{
    fn step(&mut self) -> Result<Option<EpochValidatorReward>, AggregateError> {
        let keys = [
            self.proposer.peek_key()?,
            self.attestation.peek_key()?,
            self.sync.peek_key()?,
        ];
        let Some(key) = keys.into_iter().flatten().min() else {
            return Ok(None);
        };
        let proposer = self.proposer.drain_key(key, |r| r.total)?;
        let attestation = self
            .attestation
            .drain_key(key, |r| r.total_attestation_reward)?;
        let sync_committee = self.sync.drain_key(key, |r| r.sync_reward)?;
        let total = attestation
            .checked_add(sync_committee)
            .and_then(|t| t.checked_add(proposer))
            .ok_or(AggregateError::Overflow {
                what: "per-epoch total",
            })?;
        Ok(Some(EpochValidatorReward {
            validator_index: key.1,
            total,
            attestation,
            sync_committee,
            proposer,
            epoch: key.0,
        }))
    }
}

impl<P, A, S, EP, EA, ES> Iterator for MergeByEpoch<P, A, S>
where
    P: Iterator<Item = Result<ProposerRewardRecord, EP>>,
    A: Iterator<Item = Result<AttestationRewardRecord, EA>>,
    S: Iterator<Item = Result<SyncCommitteeRewardRecord, ES>>,
    EP: Into<AggregateError>,
    EA: Into<AggregateError>,
    ES: Into<AggregateError>,
{
    type Item = Result<EpochValidatorReward, AggregateError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.step() {
            Ok(row) => row.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}
