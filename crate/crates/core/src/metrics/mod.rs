//! Daily decentralization indices per reward category.

mod indices;
mod report;
mod series;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::reward_model::{DailyValidatorReward, EpochValidatorReward, Gwei};

pub use indices::{gini, hhi, nakamoto, nakamoto_set, shannon_entropy, CompensatedSum};
pub use report::{
    run_metrics, write_indices_csv, MetricsError, MetricsOptions, MetricsReport, INDICES_FILE,
    PLOT_DAILY_REWARDS_FILE, PLOT_INDICES_FILE, PLOT_VALIDATOR_GROWTH_FILE,
    PLOT_VALIDATOR_REWARDS_FILE,
};
pub use series::{
    autocorrelation, dominant_lag, metric_series, rolling_window_indices, vectors_for_day,
    WindowPoint,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Total,
    Attestation,
    Proposer,
    SyncCommittee,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Total,
        Category::Attestation,
        Category::Proposer,
        Category::SyncCommittee,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Total => "total",
            Category::Attestation => "attestation",
            Category::Proposer => "proposer",
            Category::SyncCommittee => "sync_committee",
        }
    }

    pub fn of_daily(self, r: &DailyValidatorReward) -> Gwei {
        match self {
            Category::Total => r.total,
            Category::Attestation => r.attestation,
            Category::Proposer => r.proposer,
            Category::SyncCommittee => r.sync_committee,
        }
    }

    pub fn of_epoch(self, r: &EpochValidatorReward) -> Gwei {
        match self {
            Category::Total => r.total,
            Category::Attestation => r.attestation,
            Category::Proposer => r.proposer,
            Category::SyncCommittee => r.sync_committee,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

/// How negative rewards enter the indices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClampMode {
    /// Negatives count as zero for every index.
    #[default]
    Uniform,
    /// Negatives count as zero for Gini only; entropy skips them, HHI and
    /// Nakamoto use the raw values.
    GiniOnly,
}

impl ClampMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ClampMode::Uniform => "uniform",
            ClampMode::GiniOnly => "gini-only",
        }
    }
}

impl FromStr for ClampMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(ClampMode::Uniform),
            "gini-only" => Ok(ClampMode::GiniOnly),
            _ => Err(format!(
                "unknown clamp mode {s:?} (expected uniform or gini-only)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Indices {
    pub gini: Option<f64>,
    pub shannon_entropy: Option<f64>,
    pub hhi: Option<f64>,
    pub nakamoto_count: Option<u64>,
    pub nakamoto_fraction: Option<f64>,
    pub participants: u64,
}

/// All four indices of one vector, exact integer Nakamoto.
pub fn compute_indices(values: &[Gwei], mode: ClampMode) -> Indices {
    let raw: Vec<f64> = values.iter().map(|&x| x as f64).collect();
    let prepared: Vec<f64> = match mode {
        ClampMode::Uniform => raw.iter().map(|x| x.max(0.0)).collect(),
        ClampMode::GiniOnly => raw.clone(),
    };
    let entries: Vec<(u64, i64)> = values
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = match mode {
                ClampMode::Uniform => x.max(0),
                ClampMode::GiniOnly => x,
            };
            (i as u64, x)
        })
        .collect();
    let nakamoto_count = nakamoto_set(&entries).map(|s| s.len() as u64);
    let n = values.len() as u64;
    Indices {
        gini: gini(&raw),
        shannon_entropy: shannon_entropy(&prepared),
        hhi: hhi(&prepared),
        nakamoto_count,
        nakamoto_fraction: nakamoto_count.map(|k| k as f64 / n as f64),
        participants: n,
    }
}

/// Per-validator rewards of one category on one day, in Gwei.
///
/// Only validators that earned a nonzero amount in the category are
/// included; the daily table cannot tell an absent duty from a zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardVector {
    pub date: NaiveDate,
    pub category: Category,
    /// `(validator_index, reward)` sorted by validator.
    pub entries: Vec<(u64, Gwei)>,
}

impl RewardVector {
    pub fn participants(&self) -> usize {
        self.entries.len()
    }

    pub fn values(&self) -> Vec<Gwei> {
        self.entries.iter().map(|e| e.1).collect()
    }

    /// Values in Ether, for display.
    pub fn ether_values(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| e.1 as f64 / crate::reward_model::GWEI_PER_ETHER as f64)
            .collect()
    }

    pub fn clamped(&self) -> Vec<Gwei> {
        self.entries.iter().map(|e| e.1.max(0)).collect()
    }

    /// Validators holding a strict majority, largest first, ties by index.
    pub fn nakamoto_members(&self, mode: ClampMode) -> Option<Vec<u64>> {
        let entries: Vec<(u64, i64)> = match mode {
            ClampMode::Uniform => self.entries.iter().map(|&(v, x)| (v, x.max(0))).collect(),
            ClampMode::GiniOnly => self.entries.clone(),
        };
        nakamoto_set(&entries)
    }

    pub fn point(&self, mode: ClampMode) -> MetricPoint {
        MetricPoint {
            date: self.date,
            category: self.category,
            indices: compute_indices(&self.values(), mode),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricPoint {
    pub date: NaiveDate,
    pub category: Category,
    pub indices: Indices,
}
