//! CSV table reading and writing shared by every stage.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::reward_model::{
    AttestationRewardRecord, DailyValidatorReward, EpochValidatorReward, ProposerRewardRecord,
    SyncCommitteeRewardRecord,
};

#[derive(Debug, Error)]
pub enum TableError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
}

impl TableError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        TableError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, TableError::Io { .. })
    }

    fn from_csv(path: &Path, err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        match err.into_kind() {
            csv::ErrorKind::Io(source) => TableError::io(path, source),
            kind => TableError::Parse {
                path: path.to_path_buf(),
                line,
                message: describe_csv_error(&kind),
            },
        }
    }
}

fn describe_csv_error(kind: &csv::ErrorKind) -> String {
    match kind {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => format!("expected {expected_len} fields, found {len} (truncated row?)"),
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        csv::ErrorKind::Utf8 { err, .. } => err.to_string(),
        other => format!("{other:?}"),
    }
}

/// Column layout of a record type, written even for empty tables.
pub trait CsvSchema {
    const HEADER: &'static [&'static str];
}

impl CsvSchema for ProposerRewardRecord {
    const HEADER: &'static [&'static str] = &[
        "validator_index",
        "total",
        "attestations",
        "sync_aggregate",
        "proposer_slashings",
        "attester_slashings",
        "slot",
        "epoch",
    ];
}

impl CsvSchema for SyncCommitteeRewardRecord {
    const HEADER: &'static [&'static str] = &["validator_index", "sync_reward", "slot", "epoch"];
}

impl CsvSchema for AttestationRewardRecord {
    const HEADER: &'static [&'static str] = &[
        "validator_index",
        "head",
        "target",
        "source",
        "total_attestation_reward",
        "epoch",
    ];
}

impl CsvSchema for EpochValidatorReward {
    const HEADER: &'static [&'static str] = &[
        "validator_index",
        "total",
        "attestation",
        "sync_committee",
        "proposer",
        "epoch",
    ];
}

impl CsvSchema for DailyValidatorReward {
    const HEADER: &'static [&'static str] = &[
        "validator_index",
        "total",
        "attestation",
        "sync_committee",
        "proposer",
        "date",
    ];
}

/// Streaming reader yielding typed records with file/line context on error.
pub struct CsvRecords<T> {
    path: PathBuf,
    inner: csv::DeserializeRecordsIntoIter<File, T>,
}

impl<T: DeserializeOwned> Iterator for CsvRecords<T> {
    type Item = Result<T, TableError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.inner
            .next()
            .map(|r| r.map_err(|e| TableError::from_csv(&self.path, e)))
    }
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<CsvRecords<T>, TableError> {
    let file = File::open(path).map_err(|e| TableError::io(path, e))?;
    let reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    Ok(CsvRecords {
        path: path.to_path_buf(),
        inner: reader.into_deserialize(),
    })
}

pub fn read_all<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, TableError> {
    read_records(path)?.collect()
}

/// Typed CSV writer that always emits the header row.
pub struct TableWriter<T, W: Write = BufWriter<File>> {
    path: PathBuf,
    inner: csv::Writer<W>,
    rows: u64,
    _marker: PhantomData<fn(T)>,
}

impl<T: Serialize + CsvSchema> TableWriter<T> {
    pub fn create(path: &Path) -> Result<Self, TableError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| TableError::io(parent, e))?;
        }
        let file = File::create(path).map_err(|e| TableError::io(path, e))?;
        Self::with_writer(path, BufWriter::new(file), true)
    }
}

impl<T: Serialize + CsvSchema, W: Write> TableWriter<T, W> {
    pub fn with_writer(path: &Path, writer: W, header: bool) -> Result<Self, TableError> {
        let mut inner = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        if header {
            inner
                .write_record(T::HEADER)
                .map_err(|e| TableError::from_csv(path, e))?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            inner,
            rows: 0,
            _marker: PhantomData,
        })
    }

    pub fn write(&mut self, record: &T) -> Result<(), TableError> {
        self.rows += 1;
        self.inner
            .serialize(record)
            .map_err(|e| TableError::from_csv(&self.path, e))
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn flush(&mut self) -> Result<(), TableError> {
        self.inner
            .flush()
            .map_err(|e| TableError::io(&self.path, e))
    }

    pub fn into_inner(self) -> Result<W, TableError> {
        let path = self.path;
        self.inner
            .into_inner()
            .map_err(|e| TableError::io(&path, e.into_error()))
    }
}

pub fn write_all<T: Serialize + CsvSchema>(
    path: &Path,
    records: impl IntoIterator<Item = T>,
) -> Result<u64, TableError> {
    let mut w = TableWriter::create(path)?;
    for r in records {
        w.write(&r)?;
    }
    w.flush()?;
    Ok(w.rows())
}
