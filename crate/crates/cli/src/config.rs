use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use beacon_rewards::metrics::ClampMode;
use beacon_rewards::ChainSpec;
use serde::{Deserialize, Deserializer};

use crate::error::CliError;

pub const ENDPOINT_ENV: &str = "BEACON_REWARDS_ENDPOINT";
pub const TOKEN_ENV: &str = "BEACON_REWARDS_TOKEN";

/// Inclusive unit range written `a..b`, or a single unit `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitRange {
    pub start: u64,
    pub end: u64,
}

impl UnitRange {
    pub fn len(&self) -> u64 {
        self.end - self.start + 1
    }
}

impl FromStr for UnitRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |v: &str| {
            v.trim()
                .parse::<u64>()
                .map_err(|e| format!("invalid unit {v:?} in range {s:?}: {e}"))
        };
        let (start, end) = match s.split_once("..") {
            Some((a, b)) => (parse(a)?, parse(b.strip_prefix('=').unwrap_or(b))?),
            None => {
                let v = parse(s)?;
                (v, v)
            }
        };
        if end < start {
            return Err(format!("range {s:?} ends before it starts"));
        }
        Ok(UnitRange { start, end })
    }
}

impl fmt::Display for UnitRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

impl<'de> Deserialize<'de> for UnitRange {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectConfig {
    pub max_parallel: Option<usize>,
    /// Slots.
    pub proposer: Option<UnitRange>,
    /// Epochs.
    pub attestation: Option<UnitRange>,
    /// Slots.
    pub sync_committee: Option<UnitRange>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirsConfig {
    pub raw: Option<PathBuf>,
    pub tables: Option<PathBuf>,
    pub indices: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub clamp: Option<ClampMode>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorConfig {
    pub config: Option<PathBuf>,
}

/// Pipeline configuration file. The auth token is only ever read from the
/// environment.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub chain: ChainSpec,
    #[serde(default)]
    pub endpoint: EndpointConfig,
    #[serde(default)]
    pub collect: CollectConfig,
    #[serde(default)]
    pub dirs: DirsConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub simulator: SimulatorConfig,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let config = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
        };
        config.check()?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    fn check(&self) -> Result<(), CliError> {
        self.chain
            .validate()
            .map_err(|e| CliError::Config(format!("[chain]: {e}")))?;
        let d = &self.dirs;
        let named = [
            ("raw", &d.raw),
            ("tables", &d.tables),
            ("indices", &d.indices),
            ("fixtures", &d.fixtures),
            ("reports", &d.reports),
        ];
        for (i, (a, pa)) in named.iter().enumerate() {
            for (b, pb) in &named[i + 1..] {
                if let (Some(x), Some(y)) = (pa, pb) {
                    if x == y {
                        return Err(CliError::Config(format!(
                            "[dirs]: {a} and {b} must be different directories (both {})",
                            x.display()
                        )));
                    }
                }
            }
        }
        if self.collect.max_parallel == Some(0) {
            return Err(CliError::Config(
                "[collect]: max_parallel must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn raw_dir(&self) -> PathBuf {
        self.dirs.raw.clone().unwrap_or_else(|| "raw".into())
    }

    pub fn tables_dir(&self) -> PathBuf {
        self.dirs.tables.clone().unwrap_or_else(|| "tables".into())
    }

    pub fn indices_dir(&self) -> PathBuf {
        self.dirs
            .indices
            .clone()
            .unwrap_or_else(|| "indices".into())
    }

    pub fn fixtures_dir(&self) -> PathBuf {
        self.dirs
            .fixtures
            .clone()
            .unwrap_or_else(|| "fixtures".into())
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.dirs
            .reports
            .clone()
            .unwrap_or_else(|| "reports".into())
    }

    /// Endpoint from the environment first, then the file.
    pub fn endpoint(&self) -> Option<String> {
        std::env::var(ENDPOINT_ENV)
            .ok()
            .filter(|s| !s.is_empty())
            .or_else(|| self.endpoint.base_url.clone())
    }

    pub fn token() -> Option<String> {
        std::env::var(TOKEN_ENV).ok().filter(|s| !s.is_empty())
    }
}
