//! Checkpointed, bounded-parallel collection over a unit range.
//!
//! Units are fetched in batches, sequenced by unit id, appended to
//! `<stream>.csv` (records) and `missed_<stream>.csv` (non-ok units), and
//! only then is the checkpoint advanced. The checkpoint stores the byte
//! length of both files, so a resumed run first cuts off anything written
//! after the last checkpoint and output stays byte-identical.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BeaconClient, FetchOutcome, RecordBatch, Stream, UnitStatus};
use crate::reward_model::{
    AttestationRewardRecord, ProposerRewardRecord, SyncCommitteeRewardRecord,
};
use crate::table::CsvSchema;

#[derive(Debug, Error)]
pub enum CollectError {
    #[error("invalid collection job: {0}")]
    InvalidJob(String),
    #[error("checkpoint {} does not match this job: {reason}", path.display())]
    CheckpointMismatch { path: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CollectError + '_ {
    move |source| CollectError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectionJob {
    pub stream: Stream,
    /// First unit (slot or epoch), inclusive.
    pub start: u64,
    /// Last unit, inclusive.
    pub end: u64,
    pub max_parallel: usize,
    pub output_dir: PathBuf,
    pub checkpoint_path: PathBuf,
    /// Stop after this many units in this run (the checkpoint allows resuming).
    pub unit_limit: Option<u64>,
}

impl CollectionJob {
    pub fn new(stream: Stream, start: u64, end: u64, output_dir: impl Into<PathBuf>) -> Self {
        let output_dir = output_dir.into();
        let checkpoint_path = output_dir.join(format!("checkpoint_{stream}.json"));
        Self {
            stream,
            start,
            end,
            max_parallel: 1,
            output_dir,
            checkpoint_path,
            unit_limit: None,
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.output_dir.join(format!("{}.csv", self.stream))
    }

    pub fn sidecar_path(&self) -> PathBuf {
        self.output_dir.join(format!("missed_{}.csv", self.stream))
    }

    fn validate(&self) -> Result<(), CollectError> {
        if self.start > self.end {
            return Err(CollectError::InvalidJob(format!(
                "range end {} is before start {}",
                self.end, self.start
            )));
        }
        if self.max_parallel == 0 {
            return Err(CollectError::InvalidJob(
                "max_parallel must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionSummary {
    pub units_ok: u64,
    pub units_missed: u64,
    pub units_error: u64,
    pub records_written: u64,
    pub warnings: u64,
}

impl CollectionSummary {
    pub fn units_total(&self) -> u64 {
        self.units_ok + self.units_missed + self.units_error
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub stream: Stream,
    pub start: u64,
    pub last_contiguous_unit: Option<u64>,
    pub totals: CollectionSummary,
    pub output_bytes: u64,
    pub sidecar_bytes: u64,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Option<Self>, CollectError> {
        match fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(|e| {
                CollectError::CheckpointMismatch {
                    path: path.to_path_buf(),
                    reason: format!("unreadable checkpoint: {e}"),
                }
            }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(path)(e)),
        }
    }

    /// Write-then-rename so a crash never leaves a torn checkpoint.
    pub fn store(&self, path: &Path) -> Result<(), CollectError> {
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_vec_pretty(self).expect("checkpoint serializes");
        fs::write(&tmp, body).map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    }
}

fn header_line(cols: &[&str]) -> String {
    let mut s = cols.join(",");
    s.push('\n');
    s
}

fn stream_header(stream: Stream) -> String {
    match stream {
        Stream::Proposer => header_line(ProposerRewardRecord::HEADER),
        Stream::Attestation => header_line(AttestationRewardRecord::HEADER),
        Stream::SyncCommittee => header_line(SyncCommitteeRewardRecord::HEADER),
    }
}

const SIDECAR_HEADER: &str = "unit_id,status\n";

/// Opens `path` for appending after cutting it back to `len` bytes.
fn open_truncated(path: &Path, len: u64) -> Result<File, CollectError> {
    let file = OpenOptions::new()
        .read(true)
        .write(true)
        .open(path)
        .map_err(io_err(path))?;
    let actual = file.metadata().map_err(io_err(path))?.len();
    if actual < len {
        return Err(CollectError::CheckpointMismatch {
            path: path.to_path_buf(),
            reason: format!("file holds {actual} bytes but checkpoint recorded {len}"),
        });
    }
    file.set_len(len).map_err(io_err(path))?;
    drop(file);
    OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(io_err(path))
}

fn create_with_header(path: &Path, header: &str) -> Result<(File, u64), CollectError> {
    let mut file = File::create(path).map_err(io_err(path))?;
    file.write_all(header.as_bytes()).map_err(io_err(path))?;
    Ok((file, header.len() as u64))
}

fn write_records(
    w: &mut csv::Writer<&mut BufWriter<File>>,
    batch: &RecordBatch,
) -> Result<(), csv::Error> {
    match batch {
        RecordBatch::Proposer(v) => v.iter().try_for_each(|r| w.serialize(r)),
        RecordBatch::Attestation(v) => v.iter().try_for_each(|r| w.serialize(r)),
        RecordBatch::SyncCommittee(v) => v.iter().try_for_each(|r| w.serialize(r)),
    }
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> CollectError + '_ {
    move |e| {
        let source = match e.into_kind() {
            csv::ErrorKind::Io(e) => e,
            other => io::Error::other(format!("{other:?}")),
        };
        CollectError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Fetches `[first, last]` with at most `max_parallel` requests in flight
/// and returns the outcomes ordered by unit id.
fn fetch_batch(
    client: &BeaconClient,
    stream: Stream,
    first: u64,
    last: u64,
    max_parallel: usize,
) -> Vec<FetchOutcome> {
    let count = (last - first + 1) as usize;
    let workers = max_parallel.min(count);
    if workers <= 1 {
        return (first..=last).map(|u| client.fetch(stream, u)).collect();
    }
    let next = AtomicU64::new(first);
    let mut outcomes: Vec<FetchOutcome> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut out = Vec::new();
                    loop {
                        let unit = next.fetch_add(1, Ordering::Relaxed);
                        if unit > last {
                            break out;
                        }
                        out.push(client.fetch(stream, unit));
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("fetch worker panicked"))
            .collect()
    });
    outcomes.sort_by_key(|o| o.unit_id);
    outcomes
}

/// Collects every unit of `job`, resuming from its checkpoint when present.
///
/// The returned summary covers the whole job so far, including units
/// completed by earlier runs.
pub fn run_collection(
    client: &BeaconClient,
    job: &CollectionJob,
) -> Result<CollectionSummary, CollectError> {
    job.validate()?;
    fs::create_dir_all(&job.output_dir).map_err(io_err(&job.output_dir))?;
    let out_path = job.output_path();
    let side_path = job.sidecar_path();

    let (mut checkpoint, out_file, side_file) = match Checkpoint::load(&job.checkpoint_path)? {
        Some(cp) => {
            if cp.stream != job.stream || cp.start != job.start {
                return Err(CollectError::CheckpointMismatch {
                    path: job.checkpoint_path.clone(),
                    reason: format!(
                        "checkpoint is for {} starting at {}, job is {} starting at {}",
                        cp.stream, cp.start, job.stream, job.start
                    ),
                });
            }
            let out = open_truncated(&out_path, cp.output_bytes)?;
            let side = open_truncated(&side_path, cp.sidecar_bytes)?;
            log::info!(
                "{}: resuming after unit {:?}",
                job.stream,
                cp.last_contiguous_unit
            );
            (cp, out, side)
        }
        None => {
            let (out, output_bytes) = create_with_header(&out_path, &stream_header(job.stream))?;
            let (side, sidecar_bytes) = create_with_header(&side_path, SIDECAR_HEADER)?;
            let cp = Checkpoint {
                stream: job.stream,
                start: job.start,
                last_contiguous_unit: None,
                totals: CollectionSummary::default(),
                output_bytes,
                sidecar_bytes,
            };
            (cp, out, side)
        }
    };

    let mut out = BufWriter::new(out_file);
    let mut side = BufWriter::new(side_file);
    let mut next_unit = checkpoint.last_contiguous_unit.map_or(job.start, |u| u + 1);
    let mut budget = job.unit_limit.unwrap_or(u64::MAX);
    let batch_size = (job.max_parallel as u64).saturating_mul(16).max(64);

    while next_unit <= job.end && budget > 0 {
        let last = job
            .end
            .min(next_unit.saturating_add(batch_size.min(budget) - 1));
        let outcomes = fetch_batch(client, job.stream, next_unit, last, job.max_parallel);

        {
            let mut rec_writer = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(&mut out);
            for o in &outcomes {
                write_records(&mut rec_writer, &o.records).map_err(csv_io(&out_path))?;
            }
            rec_writer.flush().map_err(io_err(&out_path))?;
        }
        for o in &outcomes {
            let t = &mut checkpoint.totals;
            t.records_written += o.records.len() as u64;
            t.warnings += u64::from(o.warnings);
            match o.status {
                UnitStatus::Ok => t.units_ok += 1,
                UnitStatus::Missed => t.units_missed += 1,
                UnitStatus::Error => t.units_error += 1,
            }
            if o.status != UnitStatus::Ok {
                writeln!(side, "{},{}", o.unit_id, o.status.as_str())
                    .map_err(io_err(&side_path))?;
            }
        }
        out.flush().map_err(io_err(&out_path))?;
        side.flush().map_err(io_err(&side_path))?;
        out.get_ref().sync_data().map_err(io_err(&out_path))?;
        side.get_ref().sync_data().map_err(io_err(&side_path))?;

        checkpoint.output_bytes = out.get_ref().metadata().map_err(io_err(&out_path))?.len();
        checkpoint.sidecar_bytes = side.get_ref().metadata().map_err(io_err(&side_path))?.len();
        checkpoint.last_contiguous_unit = Some(last);
        checkpoint.store(&job.checkpoint_path)?;

        budget -= last - next_unit + 1;
        next_unit = last + 1;
    }
    Ok(checkpoint.totals)
}
