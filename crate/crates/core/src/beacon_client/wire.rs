//! JSON bodies of the consensus-node reward endpoints.
//!
//! Integers travel as decimal strings on the wire; plain JSON numbers are
//! accepted as well. Attestation rewards are decoded entry by entry straight
//! into records, without materializing the response as a JSON tree.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::de::{self, DeserializeSeed, IgnoredAny, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::chain_time::Epoch;
use crate::reward_model::{AttestationRewardRecord, Gwei};

pub(crate) mod quoted {
    use super::*;

    pub fn serialize<S, T>(v: &T, s: S) -> Result<S::Ok, S::Error>
    where
        S: serde::Serializer,
        T: fmt::Display,
    {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D, T>(d: D) -> Result<T, D::Error>
    where
        D: Deserializer<'de>,
        T: FromStr + TryFrom<i64> + TryFrom<u64>,
        <T as FromStr>::Err: fmt::Display,
    {
        d.deserialize_any(QuotedVisitor(std::marker::PhantomData))
    }

    struct QuotedVisitor<T>(std::marker::PhantomData<T>);

    impl<'de, T> Visitor<'de> for QuotedVisitor<T>
    where
        T: FromStr + TryFrom<i64> + TryFrom<u64>,
        <T as FromStr>::Err: fmt::Display,
    {
        type Value = T;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("an integer or a string-encoded integer")
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<T, E> {
            v.parse()
                .map_err(|e| E::custom(format!("invalid integer {v:?}: {e}")))
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<T, E> {
            T::try_from(v).map_err(|_| E::custom(format!("integer {v} out of range")))
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<T, E> {
            T::try_from(v).map_err(|_| E::custom(format!("integer {v} out of range")))
        }
    }
}

mod quoted_opt {
    use super::*;

    pub fn serialize<S>(v: &Option<Gwei>, s: S) -> Result<S::Ok, S::Error>
    where
        S: serde::Serializer,
    {
        match v {
            Some(v) => s.collect_str(v),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D>(d: D) -> Result<Option<Gwei>, D::Error>
    where
        D: Deserializer<'de>,
    {
        #[derive(Deserialize)]
        struct Wrap(#[serde(with = "quoted")] Gwei);
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

/// Standard response wrapper: `{"execution_optimistic":..,"finalized":..,"data":..}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution_optimistic: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finalized: Option<bool>,
    pub data: T,
}

impl<T> Envelope<T> {
    pub fn finalized(data: T) -> Self {
        Self {
            execution_optimistic: Some(false),
            finalized: Some(true),
            data,
        }
    }
}

/// Body of `GET /eth/v1/beacon/rewards/blocks/{block_id}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRewards {
    #[serde(with = "quoted")]
    pub proposer_index: u64,
    #[serde(with = "quoted")]
    pub total: Gwei,
    #[serde(with = "quoted")]
    pub attestations: Gwei,
    #[serde(with = "quoted")]
    pub sync_aggregate: Gwei,
    #[serde(with = "quoted")]
    pub proposer_slashings: Gwei,
    #[serde(with = "quoted")]
    pub attester_slashings: Gwei,
}

/// One member entry of `POST /eth/v1/beacon/rewards/sync_committee/{block_id}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncCommitteeReward {
    #[serde(with = "quoted")]
    pub validator_index: u64,
    #[serde(with = "quoted")]
    pub reward: Gwei,
}

/// One `total_rewards` entry of `POST /eth/v1/beacon/rewards/attestations/{epoch}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TotalAttestationReward {
    #[serde(with = "quoted")]
    pub validator_index: u64,
    #[serde(with = "quoted")]
    pub head: Gwei,
    #[serde(with = "quoted")]
    pub target: Gwei,
    #[serde(with = "quoted")]
    pub source: Gwei,
    #[serde(default, with = "quoted_opt", skip_serializing_if = "Option::is_none")]
    pub inclusion_delay: Option<Gwei>,
    #[serde(default, with = "quoted_opt", skip_serializing_if = "Option::is_none")]
    pub inactivity: Option<Gwei>,
}

impl TotalAttestationReward {
    /// The reported total includes every component the node returned, so
    /// a non-zero inactivity or inclusion-delay component shows up as a
    /// head+target+source mismatch downstream.
    pub fn to_record(&self, epoch: Epoch) -> Option<AttestationRewardRecord> {
        let total = [
            self.head,
            self.target,
            self.source,
            self.inclusion_delay.unwrap_or(0),
            self.inactivity.unwrap_or(0),
        ]
        .into_iter()
        .try_fold(0i64, |acc, v| acc.checked_add(v))?;
        Some(AttestationRewardRecord {
            validator_index: self.validator_index,
            head: self.head,
            target: self.target,
            source: self.source,
            total_attestation_reward: total,
            epoch,
        })
    }
}

/// `data` object of the attestation rewards response.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AttestationRewards {
    #[serde(default)]
    pub ideal_rewards: Vec<serde_json::Value>,
    pub total_rewards: Vec<TotalAttestationReward>,
}

pub fn decode_block_rewards<R: Read>(reader: R) -> serde_json::Result<BlockRewards> {
    let env: Envelope<BlockRewards> = serde_json::from_reader(reader)?;
    Ok(env.data)
}

pub fn decode_sync_committee_rewards<R: Read>(
    reader: R,
) -> serde_json::Result<Vec<SyncCommitteeReward>> {
    let env: Envelope<Vec<SyncCommitteeReward>> = serde_json::from_reader(reader)?;
    Ok(env.data)
}

/// Decodes an attestation rewards body, handing each record to `sink` as
/// soon as its entry has been parsed.
pub fn decode_attestation_rewards<R: Read>(
    reader: R,
    epoch: Epoch,
    sink: &mut dyn FnMut(AttestationRewardRecord),
) -> serde_json::Result<()> {
    let mut de = serde_json::Deserializer::from_reader(reader);
    EnvelopeSeed(DataSeed(TotalsSeed { epoch, sink })).deserialize(&mut de)?;
    de.end()
}

struct TotalsSeed<'a> {
    epoch: Epoch,
    sink: &'a mut dyn FnMut(AttestationRewardRecord),
}

impl<'de> DeserializeSeed<'de> for TotalsSeed<'_> {
    type Value = ();

    fn deserialize<D: Deserializer<'de>>(self, d: D) -> Result<(), D::Error> {
        d.deserialize_seq(self)
    }
}

impl<'de> Visitor<'de> for TotalsSeed<'_> {
    type Value = ();

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("an array of attestation reward entries")
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<(), A::Error> {
        while let Some(entry) = seq.next_element::<TotalAttestationReward>()? {
            let record = entry.to_record(self.epoch).ok_or_else(|| {
                de::Error::custom(format!(
                    "attestation reward total overflows for validator {}",
                    entry.validator_index
                ))
            })?;
            (self.sink)(record);
        }
        Ok(())
    }
}

struct DataSeed<'a>(TotalsSeed<'a>);

impl<'de> DeserializeSeed<'de> for DataSeed<'_> {
    type Value = ();

    fn deserialize<D: Deserializer<'de>>(self, d: D) -> Result<(), D::Error> {
        d.deserialize_map(self)
    }
}

impl<'de> Visitor<'de> for DataSeed<'_> {
    type Value = ();

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("an attestation rewards object")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<(), A::Error> {
        let mut totals = Some(self.0);
        while let Some(key) = map.next_key::<String>()? {
            match (key.as_str(), totals.take()) {
                ("total_rewards", Some(seed)) => map.next_value_seed(seed)?,
                ("total_rewards", None) => return Err(de::Error::duplicate_field("total_rewards")),
                (_, seed) => {
                    totals = seed;
                    map.next_value::<IgnoredAny>()?;
                }
            }
        }
        match totals {
            None => Ok(()),
            Some(_) => Err(de::Error::missing_field("total_rewards")),
        }
    }
}

struct EnvelopeSeed<'a>(DataSeed<'a>);

impl<'de> DeserializeSeed<'de> for EnvelopeSeed<'_> {
    type Value = ();

    fn deserialize<D: Deserializer<'de>>(self, d: D) -> Result<(), D::Error> {
        d.deserialize_map(self)
    }
}

impl<'de> Visitor<'de> for EnvelopeSeed<'_> {
    type Value = ();

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a response envelope")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<(), A::Error> {
        let mut data = Some(self.0);
        while let Some(key) = map.next_key::<String>()? {
            match (key.as_str(), data.take()) {
                ("data", Some(seed)) => map.next_value_seed(seed)?,
                ("data", None) => return Err(de::Error::duplicate_field("data")),
                (_, seed) => {
                    data = seed;
                    map.next_value::<IgnoredAny>()?;
                }
            }
        }
        match data {
            None => Ok(()),
            Some(_) => Err(de::Error::missing_field("data")),
        }
    }
}
