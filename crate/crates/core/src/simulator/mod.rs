//! Seeded synthetic duty assignment and reward generation.
//!
//! Every random draw comes from ChaCha8 seeded with `rng_seed` and a
//! stream id `(domain << 48) ^ index`, so one unit's draws never depend on
//! how many draws another unit made. Magnitudes are arbitrary knobs; the
//! assignment structure (one attestation per active validator per epoch,
//! one proposer per slot, a committee fixed for a whole period) is what
//! the generator reproduces.

mod output;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain_time::{ChainSpec, Epoch, Slot};
use crate::reward_model::{
    AttestationRewardRecord, EpochValidatorReward, Gwei, ProposerRewardRecord,
    SyncCommitteeRewardRecord,
};
use crate::table::TableError;

pub use output::{simulate_to_dir, MemorySink, SimSummary, SimWriter, WriteOptions, LEDGER_FILE};

const DOMAIN_PROPOSER: u64 = 1;
const DOMAIN_COMMITTEE: u64 = 2;
const DOMAIN_ATTESTATION: u64 = 3;
const DOMAIN_SYNC: u64 = 4;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// How the per-validator attestation base reacts to a growing validator set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssuanceMode {
    /// Network-wide attestation issuance per epoch stays constant, so each
    /// validator's base shrinks as `initial / active`.
    #[default]
    Fixed,
    /// Every validator earns the configured base regardless of set size.
    PerValidator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub spec: ChainSpec,
    pub initial_validators: u64,
    pub validators_added_per_epoch: u64,
    pub epochs: u64,
    pub rng_seed: u64,
    pub base_attestation_reward: Gwei,
    /// Uniform relative noise half-width around the attestation base.
    pub attestation_noise: f64,
    pub proposer_reward_scale: f64,
    pub sync_reward_per_slot: Gwei,
    pub penalty_probability: f64,
    pub penalty_scale: f64,
    pub issuance: IssuanceMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            spec: ChainSpec::mainnet(),
            initial_validators: 1000,
            validators_added_per_epoch: 0,
            epochs: 450,
            rng_seed: 42,
            base_attestation_reward: 12_000,
            attestation_noise: 0.1,
            proposer_reward_scale: 0.15,
            sync_reward_per_slot: 20_000,
            penalty_probability: 0.01,
            penalty_scale: 1.0,
            issuance: IssuanceMode::Fixed,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        self.spec
            .validate()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        if self.initial_validators == 0 {
            return bad("initial_validators must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(0.0..=1.0).contains(&self.penalty_probability) {
            return bad("penalty_probability must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.attestation_noise) {
            return bad("attestation_noise must lie in [0, 1]");
        }
        if !(self.proposer_reward_scale.is_finite() && self.proposer_reward_scale >= 0.0) {
            return bad("proposer_reward_scale must be a non-negative number");
        }
        if !(self.penalty_scale.is_finite() && self.penalty_scale >= 0.0) {
            return bad("penalty_scale must be a non-negative number");
        }
        if self.base_attestation_reward < 0 || self.sync_reward_per_slot < 0 {
            return bad("base rewards must be non-negative");
        }
        self.active_validators(Epoch(self.epochs - 1))?;
        Ok(())
    }

    /// Loads a TOML or JSON config, chosen by file extension.
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| TableError::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        let config: Self =
            parsed.map_err(|e| SimError::InvalidConfig(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Validators `0..n` are active at `epoch`.
    pub fn active_validators(&self, epoch: Epoch) -> Result<u64, SimError> {
        self.validators_added_per_epoch
            .checked_mul(epoch.0)
            .and_then(|a| a.checked_add(self.initial_validators))
            .ok_or_else(|| SimError::InvalidConfig("validator count overflows".into()))
    }

    fn rng(&self, domain: u64, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream((domain << 48) ^ index);
        rng
    }

    fn attestation_base(&self, active: u64) -> f64 {
        let base = self.base_attestation_reward as f64;
        match self.issuance {
            IssuanceMode::Fixed => base * self.initial_validators as f64 / active as f64,
            IssuanceMode::PerValidator => base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DutyAssignment {
    pub epoch: Epoch,
    /// Validators `0..active_validators` attest this epoch.
    pub active_validators: u64,
    /// One proposer per slot of the epoch, in slot order.
    pub proposers: Vec<(Slot, u64)>,
    /// Sorted committee members for the epoch's period.
    pub sync_committee: Vec<u64>,
    /// Fewer active validators than seats: everyone sits on the committee.
    pub degenerate_committee: bool,
}

/// Uniform sample of `k` distinct values from `0..n` by a partial
/// Fisher-Yates shuffle over a sparse swap map. Sorted on return.
fn sample_distinct(rng: &mut ChaCha8Rng, n: u64, k: u64) -> Vec<u64> {
    let mut swapped: HashMap<u64, u64> = HashMap::new();
    let mut out = Vec::with_capacity(k as usize);
    for i in 0..k {
        let j = rng.random_range(i..n);
        let at_i = *swapped.get(&i).unwrap_or(&i);
        let at_j = *swapped.get(&j).unwrap_or(&j);
        swapped.insert(j, at_i);
        out.push(at_j);
    }
    out.sort_unstable();
    out
}

fn committee_for_period(config: &SimConfig, period: u64) -> Result<(Vec<u64>, bool), SimError> {
    let start = Epoch(period * config.spec.sync_committee_period_epochs);
    let active = config.active_validators(start)?;
    let seats = config.spec.sync_committee_size;
    if active <= seats {
        return Ok(((0..active).collect(), active < seats));
    }
    let mut rng = config.rng(DOMAIN_COMMITTEE, period);
    Ok((sample_distinct(&mut rng, active, seats), false))
}

fn proposer_for_slot(config: &SimConfig, slot: Slot, active: u64) -> u64 {
    config.rng(DOMAIN_PROPOSER, slot.0).random_range(0..active)
}

fn start_slot(spec: &ChainSpec, epoch: Epoch) -> Result<u64, SimError> {
    spec.epoch_start_slot(epoch)
        .map(|s| s.0)
        .ok_or_else(|| SimError::InvalidConfig(format!("epoch {epoch} overflows the slot range")))
}

pub fn assign_duties(config: &SimConfig, epoch: Epoch) -> Result<DutyAssignment, SimError> {
    if epoch.0 >= config.epochs {
        return Err(SimError::InvalidConfig(format!(
            "epoch {epoch} is outside the simulated range 0..{}",
            config.epochs
        )));
    }
    let spec = &config.spec;
    let active = config.active_validators(epoch)?;
    let (sync_committee, degenerate_committee) =
        committee_for_period(config, spec.sync_committee_period(epoch))?;
    let first = start_slot(&config.spec, epoch)?;
    let proposers = (first..first + spec.slots_per_epoch)
        .map(|s| (Slot(s), proposer_for_slot(config, Slot(s), active)))
        .collect();
    Ok(DutyAssignment {
        epoch,
        active_validators: active,
        proposers,
        sync_committee,
        degenerate_committee,
    })
}

/// Receives generated records. Per epoch the order is: every attestation
/// record by validator, then for each slot its sync records by validator
/// followed by its proposer record, then the epoch's ledger rows.
pub trait SimSink {
    fn attestation(&mut self, r: &AttestationRewardRecord) -> Result<(), SimError>;
    fn sync_committee(&mut self, r: &SyncCommitteeRewardRecord) -> Result<(), SimError>;
    fn proposer(&mut self, r: &ProposerRewardRecord) -> Result<(), SimError>;
    fn ledger(&mut self, r: &EpochValidatorReward) -> Result<(), SimError>;
    fn finish(&mut self) -> Result<(), SimError> {
        Ok(())
    }
}

#[derive(Default)]
struct LedgerEntry {
    attestation: Gwei,
    sync_committee: Gwei,
    proposer: Gwei,
}

fn split_attestation(value: Gwei) -> (Gwei, Gwei, Gwei) {
    let source = value * 14 / 54;
    let target = value * 26 / 54;
    (value - source - target, target, source)
}

/// Runs the whole simulation into `sink`; returns a warning per degenerate
/// committee period.
pub fn run_simulation(config: &SimConfig, sink: &mut dyn SimSink) -> Result<Vec<String>, SimError> {
    config.validate()?;
    let spec = config.spec;
    let mut warnings = Vec::new();
    let mut committee: Option<(u64, Vec<u64>)> = None;

    for e in 0..config.epochs {
        let epoch = Epoch(e);
        let active = config.active_validators(epoch)?;
        let period = spec.sync_committee_period(epoch);
        if committee.as_ref().is_none_or(|(p, _)| *p != period) {
            let (members, degenerate) = committee_for_period(config, period)?;
            if degenerate {
                warnings.push(format!(
                    "period {period}: only {} active validators for {} committee seats",
                    members.len(),
                    spec.sync_committee_size
                ));
            }
            committee = Some((period, members));
        }
        let members = &committee.as_ref().expect("set above").1;
        let mut ledger: BTreeMap<u64, LedgerEntry> = BTreeMap::new();

        let base = config.attestation_base(active);
        let penalty = -(base * config.penalty_scale).round() as Gwei;
        let mut rng = config.rng(DOMAIN_ATTESTATION, e);
        let mut positive_attestations: i128 = 0;
        for v in 0..active {
            let noise = (2.0 * rng.random::<f64>() - 1.0) * config.attestation_noise;
            let penalised = rng.random::<f64>() < config.penalty_probability;
            let value = if penalised {
                penalty
            } else {
                (base * (1.0 + noise)).round() as Gwei
            };
            let (head, target, source) = split_attestation(value);
            let r = AttestationRewardRecord {
                validator_index: v,
                head,
                target,
                source,
                total_attestation_reward: value,
                epoch,
            };
            sink.attestation(&r)?;
            positive_attestations += value.max(0) as i128;
            ledger.entry(v).or_default().attestation += value;
        }
        let inclusion = (config.proposer_reward_scale * positive_attestations as f64
            / spec.slots_per_epoch as f64)
            .round() as Gwei;

        let mut sync_rng = config.rng(DOMAIN_SYNC, e);
        let first = start_slot(&config.spec, epoch)?;
        for s in first..first + spec.slots_per_epoch {
            let slot = Slot(s);
            let mut slot_sync: i128 = 0;
            for &m in members {
                let noise = (2.0 * sync_rng.random::<f64>() - 1.0) * config.attestation_noise;
                let reward = (config.sync_reward_per_slot as f64 * (1.0 + noise)).round() as Gwei;
                sink.sync_committee(&SyncCommitteeRewardRecord {
                    validator_index: m,
                    sync_reward: reward,
                    slot,
                    epoch,
                })?;
                slot_sync += reward as i128;
                ledger.entry(m).or_default().sync_committee += reward;
            }
            let sync_aggregate = (config.proposer_reward_scale * slot_sync as f64).round() as Gwei;
            let proposer = proposer_for_slot(config, slot, active);
            let r = ProposerRewardRecord {
                validator_index: proposer,
                total: inclusion + sync_aggregate,
                attestations: inclusion,
                sync_aggregate,
                proposer_slashings: 0,
                attester_slashings: 0,
                slot,
                epoch,
            };
            sink.proposer(&r)?;
            ledger.entry(proposer).or_default().proposer += r.total;
        }

        for (v, l) in ledger {
            sink.ledger(&EpochValidatorReward {
                validator_index: v,
                total: l.attestation + l.sync_committee + l.proposer,
                attestation: l.attestation,
                sync_committee: l.sync_committee,
                proposer: l.proposer,
                epoch,
            })?;
        }
    }
    sink.finish()?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(warnings)
}

/// Raw streams and ground-truth ledger held in memory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimOutput {
    pub proposer: Vec<ProposerRewardRecord>,
    pub attestation: Vec<AttestationRewardRecord>,
    pub sync_committee: Vec<SyncCommitteeRewardRecord>,
    /// Per-epoch per-validator totals, sorted by (epoch, validator).
    pub ledger: Vec<EpochValidatorReward>,
    pub warnings: Vec<String>,
}

pub fn emit_rewards(config: &SimConfig) -> Result<SimOutput, SimError> {
    let mut sink = MemorySink::default();
    let warnings = run_simulation(config, &mut sink)?;
    let mut out = sink.into_output();
    out.warnings = warnings;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward_model::validate_record;

    fn small() -> SimConfig {
        SimConfig {
            initial_validators: 600,
            epochs: 3,
            ..SimConfig::default()
        }
    }

    #[test]
    fn committee_is_fixed_within_period() {
        let c = SimConfig {
            epochs: 600,
            ..small()
        };
        let a = assign_duties(&c, Epoch(0)).unwrap();
        let b = assign_duties(&c, Epoch(255)).unwrap();
        let d = assign_duties(&c, Epoch(256)).unwrap();
        assert_eq!(a.sync_committee, b.sync_committee);
        assert_ne!(b.sync_committee, d.sync_committee);
        assert_eq!(a.sync_committee.len(), 512);
        assert!(a.sync_committee.windows(2).all(|w| w[0] < w[1]));
        assert!(a.sync_committee.iter().all(|&m| m < 600));
    }

    #[test]
    fn one_proposer_per_slot() {
        let d = assign_duties(&small(), Epoch(2)).unwrap();
        assert_eq!(d.proposers.len(), 32);
        assert_eq!(d.proposers[0].0, Slot(64));
        assert_eq!(d.proposers[31].0, Slot(95));
        assert!(assign_duties(&small(), Epoch(3)).is_err());
    }

    #[test]
    fn small_set_gets_whole_committee() {
        let c = SimConfig {
            initial_validators: 100,
            epochs: 1,
            ..SimConfig::default()
        };
        let d = assign_duties(&c, Epoch(0)).unwrap();
        assert!(d.degenerate_committee);
        assert_eq!(d.sync_committee, (0..100).collect::<Vec<_>>());
        assert_eq!(emit_rewards(&c).unwrap().warnings.len(), 1);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = emit_rewards(&small()).unwrap();
        let b = emit_rewards(&small()).unwrap();
        assert_eq!(a, b);
        let c = emit_rewards(&SimConfig {
            rng_seed: 7,
            ..small()
        })
        .unwrap();
        assert_ne!(a.attestation, c.attestation);
    }

    #[test]
    fn records_are_valid_and_counted() {
        let c = SimConfig {
            validators_added_per_epoch: 5,
            ..small()
        };
        let out = emit_rewards(&c).unwrap();
        assert_eq!(out.attestation.len(), 600 + 605 + 610);
        assert_eq!(out.proposer.len(), 96);
        assert_eq!(out.sync_committee.len(), 3 * 32 * 512);
        let spec = c.spec;
        assert!(out
            .attestation
            .iter()
            .all(|r| validate_record(r, &spec).is_empty()));
        assert!(out
            .proposer
            .iter()
            .all(|r| validate_record(r, &spec).is_empty()));
        assert!(out
            .sync_committee
            .iter()
            .all(|r| validate_record(r, &spec).is_empty()));
        assert!(out
            .ledger
            .iter()
            .all(|r| validate_record(r, &spec).is_empty()));
    }

    #[test]
    fn zero_penalty_probability_means_no_negatives() {
        let out = emit_rewards(&SimConfig {
            penalty_probability: 0.0,
            ..small()
        })
        .unwrap();
        assert!(out
            .ledger
            .iter()
            .all(|r| r.total >= 0 && r.attestation >= 0));
        let with = emit_rewards(&SimConfig {
            penalty_probability: 0.5,
            ..small()
        })
        .unwrap();
        assert!(with
            .attestation
            .iter()
            .any(|r| r.total_attestation_reward < 0));
    }

    #[test]
    fn ledger_matches_stream_sums() {
        let out = emit_rewards(&small()).unwrap();
        let raw: i128 = out
            .attestation
            .iter()
            .map(|r| r.total_attestation_reward as i128)
            .sum::<i128>()
            + out
                .sync_committee
                .iter()
                .map(|r| r.sync_reward as i128)
                .sum::<i128>()
            + out.proposer.iter().map(|r| r.total as i128).sum::<i128>();
        let ledger: i128 = out.ledger.iter().map(|r| r.total as i128).sum();
        assert_eq!(raw, ledger);
    }

    #[test]
    fn sampling_is_distinct_and_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_distinct(&mut rng, 1000, 512);
        assert_eq!(s.len(), 512);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert!(*s.last().unwrap() < 1000);
        let all = sample_distinct(&mut rng, 5, 5);
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn config_rejects_bad_values() {
        for c in [
            SimConfig {
                initial_validators: 0,
                ..SimConfig::default()
            },
            SimConfig {
                penalty_probability: 1.5,
                ..SimConfig::default()
            },
            SimConfig {
                epochs: 0,
                ..SimConfig::default()
            },
        ] {
            assert!(matches!(c.validate(), Err(SimError::InvalidConfig(_))));
        }
        let parsed: SimConfig =
            toml::from_str("epochs = 10\n[spec]\ngenesis_timestamp = 0\n").unwrap();
        assert_eq!(parsed.epochs, 10);
        assert_eq!(parsed.spec.slots_per_epoch, 32);
        assert!(toml::from_str::<SimConfig>("epoch = 10").is_err());
    }
}
