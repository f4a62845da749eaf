//! External merge sort for raw files too large to sort in memory.
//!
//! Input is cut into runs of at most `chunk_records` records; each run is
//! stably sorted and spilled to an anonymous temp file, then the runs are
//! merged through a heap. Ties keep input order, so the sort is stable.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Seek, SeekFrom};
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::AggregateError;
use crate::table::TableError;

pub const DEFAULT_CHUNK_RECORDS: usize = 1 << 20;

#[derive(Debug, Clone)]
pub struct ExternalSorter {
    pub chunk_records: usize,
    /// Where runs are spilled; the system temp dir when unset.
    pub temp_dir: Option<PathBuf>,
}

impl Default for ExternalSorter {
    fn default() -> Self {
        Self {
            chunk_records: DEFAULT_CHUNK_RECORDS,
            temp_dir: None,
        }
    }
}

type RunReader<T> = csv::DeserializeRecordsIntoIter<BufReader<File>, T>;

pub enum SortedRecords<T, K> {
    Memory(std::vec::IntoIter<T>),
    Runs(RunMerge<T, K>),
}

pub struct RunMerge<T, K> {
    runs: Vec<RunReader<T>>,
    heads: Vec<Option<T>>,
    heap: BinaryHeap<Reverse<(K, usize)>>,
    key: Box<dyn Fn(&T) -> K>,
    failed: bool,
}

impl ExternalSorter {
    pub fn with_chunk_records(chunk_records: usize) -> Self {
        Self {
            chunk_records: chunk_records.max(1),
            ..Self::default()
        }
    }

    pub fn sort_by_key<T, K, I, E, F>(
        &self,
        input: I,
        key: F,
    ) -> Result<SortedRecords<T, K>, AggregateError>
    where
        T: Serialize + DeserializeOwned,
        K: Ord + Clone,
        I: IntoIterator<Item = Result<T, E>>,
        E: Into<AggregateError>,
        F: Fn(&T) -> K + 'static,
    {
        let mut input = input.into_iter();
        let mut runs = Vec::new();
        loop {
            let mut chunk = Vec::with_capacity(self.chunk_records.min(1 << 16));
            for rec in input.by_ref() {
                chunk.push(rec.map_err(Into::into)?);
                if chunk.len() == self.chunk_records {
                    break;
                }
            }
            let exhausted = chunk.len() < self.chunk_records;
            chunk.sort_by_key(|r| key(r));
            if exhausted && runs.is_empty() {
                return Ok(SortedRecords::Memory(chunk.into_iter()));
            }
            if !chunk.is_empty() {
                runs.push(self.spill(&chunk)?);
            }
            if exhausted {
                break;
            }
        }
        let mut merge = RunMerge {
            heads: (0..runs.len()).map(|_| None).collect(),
            runs,
            heap: BinaryHeap::new(),
            key: Box::new(key),
            failed: false,
        };
        for i in 0..merge.runs.len() {
            merge.refill(i)?;
        }
        Ok(SortedRecords::Runs(merge))
    }

    fn spill<T: Serialize + DeserializeOwned>(
        &self,
        chunk: &[T],
    ) -> Result<RunReader<T>, AggregateError> {
        let dir = self.temp_dir.clone().unwrap_or_else(std::env::temp_dir);
        let file = tempfile::tempfile_in(&dir).map_err(|e| TableError::io(&dir, e))?;
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(BufWriter::new(file));
        for r in chunk {
            w.serialize(r).map_err(|e| csv_to_table(&dir, e))?;
        }
        let mut file = w
            .into_inner()
            .map_err(|e| TableError::io(&dir, e.into_error()))?
            .into_inner()
            .map_err(|e| TableError::io(&dir, e.into_error()))?;
        file.seek(SeekFrom::Start(0))
            .map_err(|e| TableError::io(&dir, e))?;
        Ok(csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(BufReader::new(file))
            .into_deserialize())
    }
}

fn csv_to_table(dir: &std::path::Path, e: csv::Error) -> TableError {
    TableError::Parse {
        path: dir.to_path_buf(),
        line: 0,
        message: format!("spill run: {e}"),
    }
}

impl<T: DeserializeOwned, K: Ord + Clone> RunMerge<T, K> {
    fn refill(&mut self, run: usize) -> Result<(), AggregateError> {
        match self.runs[run].next() {
            None => Ok(()),
            Some(Ok(rec)) => {
                self.heap.push(Reverse(((self.key)(&rec), run)));
                self.heads[run] = Some(rec);
                Ok(())
            }
            Some(Err(e)) => Err(csv_to_table(&std::env::temp_dir(), e).into()),
        }
    }
}

impl<T: DeserializeOwned, K: Ord + Clone> Iterator for SortedRecords<T, K> {
    type Item = Result<T, AggregateError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            SortedRecords::Memory(it) => it.next().map(Ok),
            SortedRecords::Runs(m) => {
                if m.failed {
                    return None;
                }
                let Reverse((_, run)) = m.heap.pop()?;
                let rec = m.heads[run].take().expect("heap entry has a head");
                if let Err(e) = m.refill(run) {
                    m.failed = true;
                    return Some(Err(e));
                }
                Some(Ok(rec))
            }
        }
    }
}
