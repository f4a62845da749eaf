//! Where reward bodies come from: a live consensus node or a fixture tree.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The three reward streams, each with its own unit of collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    /// Keyed by slot.
    Proposer,
    /// Keyed by epoch.
    Attestation,
    /// Keyed by slot.
    SyncCommittee,
}

impl Stream {
    pub const ALL: [Stream; 3] = [Stream::Proposer, Stream::Attestation, Stream::SyncCommittee];

    pub fn as_str(self) -> &'static str {
        match self {
            Stream::Proposer => "proposer",
            Stream::Attestation => "attestation",
            Stream::SyncCommittee => "sync_committee",
        }
    }

    pub fn unit_name(self) -> &'static str {
        match self {
            Stream::Attestation => "epoch",
            Stream::Proposer | Stream::SyncCommittee => "slot",
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stream {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proposer" => Ok(Stream::Proposer),
            "attestation" => Ok(Stream::Attestation),
            "sync_committee" | "sync" => Ok(Stream::SyncCommittee),
            other => Err(format!(
                "unknown stream {other:?} (expected proposer, attestation or sync_committee)"
            )),
        }
    }
}

pub enum Fetched<'a> {
    Body(Box<dyn Read + 'a>),
    /// The node has nothing for this unit (e.g. no block in the slot).
    NotFound,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SourceError {
    /// Worth retrying: transport failures, 5xx, 429.
    #[error("transient: {0}")]
    Transient(String),
    #[error("{0}")]
    Permanent(String),
}

pub trait RewardSource: Send + Sync {
    fn fetch(&self, stream: Stream, unit: u64) -> Result<Fetched<'_>, SourceError>;
}

/// Replays canned bodies from `<root>/<stream>/<unit_id>.json`.
/// A missing file is reported as "not found", i.e. a missed unit.
#[derive(Debug, Clone)]
pub struct FixtureSource {
    root: PathBuf,
}

impl FixtureSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path_for(root: &Path, stream: Stream, unit: u64) -> PathBuf {
        root.join(stream.as_str()).join(format!("{unit}.json"))
    }
}

impl RewardSource for FixtureSource {
    fn fetch(&self, stream: Stream, unit: u64) -> Result<Fetched<'_>, SourceError> {
        let path = Self::path_for(&self.root, stream, unit);
        match File::open(&path) {
            Ok(f) => Ok(Fetched::Body(Box::new(BufReader::new(f)))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Fetched::NotFound),
            Err(e) => Err(SourceError::Transient(format!("{}: {e}", path.display()))),
        }
    }
}

/// Talks to the standard consensus-node reward endpoints.
pub struct HttpSource {
    base: String,
    bearer_token: Option<String>,
    agent: ureq::Agent,
}

impl HttpSource {
    pub fn new(base: &str, bearer_token: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Self {
            base: base.trim_end_matches('/').to_string(),
            bearer_token,
            agent,
        }
    }

    pub fn url_for(&self, stream: Stream, unit: u64) -> String {
        let path = match stream {
            Stream::Proposer => "blocks",
            Stream::Attestation => "attestations",
            Stream::SyncCommittee => "sync_committee",
        };
        format!("{}/eth/v1/beacon/rewards/{path}/{unit}", self.base)
    }
}

impl RewardSource for HttpSource {
    fn fetch(&self, stream: Stream, unit: u64) -> Result<Fetched<'_>, SourceError> {
        let url = self.url_for(stream, unit);
        let auth = self.bearer_token.as_ref().map(|t| format!("Bearer {t}"));
        let result = match stream {
            Stream::Proposer => {
                let mut req = self.agent.get(&url);
                if let Some(auth) = &auth {
                    req = req.header("Authorization", auth);
                }
                req.call()
            }
            // Both POST endpoints take an optional validator filter; an
            // empty array selects everyone.
            Stream::Attestation | Stream::SyncCommittee => {
                let mut req = self.agent.post(&url).content_type("application/json");
                if let Some(auth) = &auth {
                    req = req.header("Authorization", auth);
                }
                req.send("[]")
            }
        };
        let response = result.map_err(|e| SourceError::Transient(format!("{url}: {e}")))?;
        let status = response.status().as_u16();
        match status {
            200..=299 => Ok(Fetched::Body(Box::new(response.into_body().into_reader()))),
            404 => Ok(Fetched::NotFound),
            408 | 429 | 500..=599 => Err(SourceError::Transient(format!("{url}: HTTP {status}"))),
            _ => Err(SourceError::Permanent(format!("{url}: HTTP {status}"))),
        }
    }
}
