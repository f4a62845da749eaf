use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{run_simulation, SimConfig, SimError, SimOutput, SimSink};
use crate::beacon_client::wire::{
    AttestationRewards, BlockRewards, Envelope, SyncCommitteeReward, TotalAttestationReward,
};
use crate::beacon_client::{FixtureSource, Stream};
use crate::reward_model::{
    AttestationRewardRecord, EpochValidatorReward, ProposerRewardRecord, SyncCommitteeRewardRecord,
};
use crate::table::{TableError, TableWriter};

pub const LEDGER_FILE: &str = "ledger.csv";

#[derive(Default)]
pub struct MemorySink {
    out: SimOutput,
}

impl MemorySink {
    pub fn into_output(self) -> SimOutput {
        self.out
    }
}

impl SimSink for MemorySink {
    fn attestation(&mut self, r: &AttestationRewardRecord) -> Result<(), SimError> {
        self.out.attestation.push(*r);
        Ok(())
    }
    fn sync_committee(&mut self, r: &SyncCommitteeRewardRecord) -> Result<(), SimError> {
        self.out.sync_committee.push(*r);
        Ok(())
    }
    fn proposer(&mut self, r: &ProposerRewardRecord) -> Result<(), SimError> {
        self.out.proposer.push(*r);
        Ok(())
    }
    fn ledger(&mut self, r: &EpochValidatorReward) -> Result<(), SimError> {
        self.out.ledger.push(*r);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteOptions {
    /// `proposer.csv`, `attestation.csv`, `sync_committee.csv`.
    pub raw: bool,
    /// `<stream>/<unit>.json` in the node's response format, readable by
    /// a fixture source rooted at the output directory.
    pub fixtures: bool,
}

impl Default for WriteOptions {
    fn default() -> Self {
        Self {
            raw: true,
            fixtures: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimSummary {
    pub proposer_records: u64,
    pub attestation_records: u64,
    pub sync_committee_records: u64,
    pub ledger_rows: u64,
    /// Sum of every ledger total in Gwei.
    pub ledger_total: i128,
    pub warnings: Vec<String>,
}

struct RawWriters {
    proposer: TableWriter<ProposerRewardRecord>,
    attestation: TableWriter<AttestationRewardRecord>,
    sync: TableWriter<SyncCommitteeRewardRecord>,
}

/// Streams a simulation to CSV files and fixture bodies.
pub struct SimWriter {
    raw: Option<RawWriters>,
    ledger: TableWriter<EpochValidatorReward>,
    fixtures: Option<PathBuf>,
    pending_attestation: Option<(u64, Vec<TotalAttestationReward>)>,
    pending_sync: Option<(u64, Vec<SyncCommitteeReward>)>,
    summary: SimSummary,
}

fn write_json<T: serde::Serialize>(path: &Path, body: &T) -> Result<(), SimError> {
    let file = File::create(path).map_err(|e| TableError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, body).map_err(|e| TableError::io(path, e.into()))?;
    w.flush().map_err(|e| TableError::io(path, e))?;
    Ok(())
}

impl SimWriter {
    pub fn create(dir: &Path, options: WriteOptions) -> Result<Self, SimError> {
        fs::create_dir_all(dir).map_err(|e| TableError::io(dir, e))?;
        let raw = if options.raw {
            Some(RawWriters {
                proposer: TableWriter::create(&dir.join(format!("{}.csv", Stream::Proposer)))?,
                attestation: TableWriter::create(
                    &dir.join(format!("{}.csv", Stream::Attestation)),
                )?,
                sync: TableWriter::create(&dir.join(format!("{}.csv", Stream::SyncCommittee)))?,
            })
        } else {
            None
        };
        let fixtures = if options.fixtures {
            let root = dir.to_path_buf();
            for s in Stream::ALL {
                let d = root.join(s.as_str());
                if d.exists() {
                    fs::remove_dir_all(&d).map_err(|e| TableError::io(&d, e))?;
                }
                fs::create_dir_all(&d).map_err(|e| TableError::io(&d, e))?;
            }
            Some(root)
        } else {
            None
        };
        Ok(Self {
            raw,
            ledger: TableWriter::create(&dir.join(LEDGER_FILE))?,
            fixtures,
            pending_attestation: None,
            pending_sync: None,
            summary: SimSummary::default(),
        })
    }

    fn flush_attestation(&mut self) -> Result<(), SimError> {
        if let (Some(root), Some((epoch, entries))) =
            (&self.fixtures, self.pending_attestation.take())
        {
            let body = Envelope::finalized(AttestationRewards {
                ideal_rewards: Vec::new(),
                total_rewards: entries,
            });
            write_json(
                &FixtureSource::path_for(root, Stream::Attestation, epoch),
                &body,
            )?;
        }
        Ok(())
    }

    fn flush_sync(&mut self) -> Result<(), SimError> {
        if let (Some(root), Some((slot, entries))) = (&self.fixtures, self.pending_sync.take()) {
            let body = Envelope::finalized(entries);
            write_json(
                &FixtureSource::path_for(root, Stream::SyncCommittee, slot),
                &body,
            )?;
        }
        Ok(())
    }

    pub fn summary(&self) -> &SimSummary {
        &self.summary
    }
}

impl SimSink for SimWriter {
    fn attestation(&mut self, r: &AttestationRewardRecord) -> Result<(), SimError> {
        self.summary.attestation_records += 1;
        if let Some(raw) = &mut self.raw {
            raw.attestation.write(r)?;
        }
        if self.fixtures.is_some() {
            if self
                .pending_attestation
                .as_ref()
                .is_some_and(|p| p.0 != r.epoch.0)
            {
                self.flush_attestation()?;
            }
            self.pending_attestation
                .get_or_insert_with(|| (r.epoch.0, Vec::new()))
                .1
                .push(TotalAttestationReward {
                    validator_index: r.validator_index,
                    head: r.head,
                    target: r.target,
                    source: r.source,
                    inclusion_delay: None,
                    inactivity: None,
                });
        }
        Ok(())
    }

    fn sync_committee(&mut self, r: &SyncCommitteeRewardRecord) -> Result<(), SimError> {
        self.summary.sync_committee_records += 1;
        if let Some(raw) = &mut self.raw {
            raw.sync.write(r)?;
        }
        if self.fixtures.is_some() {
            if self.pending_sync.as_ref().is_some_and(|p| p.0 != r.slot.0) {
                self.flush_sync()?;
            }
            self.pending_sync
                .get_or_insert_with(|| (r.slot.0, Vec::new()))
                .1
                .push(SyncCommitteeReward {
                    validator_index: r.validator_index,
                    reward: r.sync_reward,
                });
        }
        Ok(())
    }

    fn proposer(&mut self, r: &ProposerRewardRecord) -> Result<(), SimError> {
        self.summary.proposer_records += 1;
        if let Some(raw) = &mut self.raw {
            raw.proposer.write(r)?;
        }
        if let Some(root) = &self.fixtures {
            let body = Envelope::finalized(BlockRewards {
                proposer_index: r.validator_index,
                total: r.total,
                attestations: r.attestations,
                sync_aggregate: r.sync_aggregate,
                proposer_slashings: r.proposer_slashings,
                attester_slashings: r.attester_slashings,
            });
            write_json(
                &FixtureSource::path_for(root, Stream::Proposer, r.slot.0),
                &body,
            )?;
        }
        Ok(())
    }

    fn ledger(&mut self, r: &EpochValidatorReward) -> Result<(), SimError> {
        self.summary.ledger_rows += 1;
        self.summary.ledger_total += r.total as i128;
        self.ledger.write(r)?;
        Ok(())
    }

    fn finish(&mut self) -> Result<(), SimError> {
        self.flush_attestation()?;
        self.flush_sync()?;
        if let Some(raw) = &mut self.raw {
            raw.proposer.flush()?;
            raw.attestation.flush()?;
            raw.sync.flush()?;
        }
        self.ledger.flush()?;
        Ok(())
    }
}

/// Simulates into `dir`: raw CSVs, `ledger.csv` and fixture bodies.
pub fn simulate_to_dir(
    config: &SimConfig,
    dir: &Path,
    options: WriteOptions,
) -> Result<SimSummary, SimError> {
    config.validate()?;
    let mut writer = SimWriter::create(dir, options)?;
    let warnings = run_simulation(config, &mut writer)?;
    let mut summary = writer.summary;
    summary.warnings = warnings;
    Ok(summary)
}
