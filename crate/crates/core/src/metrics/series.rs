use std::collections::{BTreeMap, VecDeque};

use chrono::NaiveDate;

use super::{compute_indices, Category, ClampMode, Indices, MetricPoint, RewardVector};
use crate::aggregate::AggregateError;
use crate::chain_time::Epoch;
use crate::reward_model::{DailyValidatorReward, EpochValidatorReward, Gwei};

/// One vector per requested category from one day's rows.
pub fn vectors_for_day(
    date: NaiveDate,
    rows: &[DailyValidatorReward],
    categories: &[Category],
) -> Vec<RewardVector> {
    categories
        .iter()
        .map(|&category| {
            let mut entries: Vec<(u64, Gwei)> = rows
                .iter()
                .map(|r| (r.validator_index, category.of_daily(r)))
                .filter(|e| e.1 != 0)
                .collect();
            entries.sort_unstable_by_key(|e| e.0);
            RewardVector {
                date,
                category,
                entries,
            }
        })
        .collect()
}

/// One point per (date, category) from a daily table sorted by date.
pub fn metric_series<I, E>(
    daily: I,
    categories: &[Category],
    mode: ClampMode,
) -> Result<Vec<MetricPoint>, AggregateError>
where
    I: IntoIterator<Item = Result<DailyValidatorReward, E>>,
    E: Into<AggregateError>,
{
    let mut out = Vec::new();
    let mut day: Vec<DailyValidatorReward> = Vec::new();
    let flush = |day: &mut Vec<DailyValidatorReward>, out: &mut Vec<MetricPoint>| {
        if let Some(first) = day.first() {
            let date = first.date;
            out.extend(
                vectors_for_day(date, day, categories)
                    .iter()
                    .map(|v| v.point(mode)),
            );
        }
        day.clear();
    };
    for (i, row) in daily.into_iter().enumerate() {
        let row = row.map_err(Into::into)?;
        let position = i as u64 + 1;
        if let Some(last) = day.last() {
            if row.date < last.date {
                return Err(AggregateError::Unsorted {
                    stream: "daily_rewards",
                    position,
                    detail: format!("date {} after date {}", row.date, last.date),
                });
            }
            if row.date != last.date {
                flush(&mut day, &mut out);
            }
        }
        day.push(row);
    }
    flush(&mut day, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowPoint {
    /// First epoch of the window.
    pub start: Epoch,
    pub indices: Indices,
}

/// Indices of one category over sliding windows of `window_epochs`
/// consecutive epochs, one point per window that fits in the input.
///
/// Input must be sorted by epoch. Per-validator sums over the window form
/// the vector; validators whose window sum is zero are left out.
pub fn rolling_window_indices<I, E>(
    epochs: I,
    category: Category,
    window_epochs: u64,
    mode: ClampMode,
) -> Result<Vec<WindowPoint>, AggregateError>
where
    I: IntoIterator<Item = Result<EpochValidatorReward, E>>,
    E: Into<AggregateError>,
{
    assert!(window_epochs > 0, "window must span at least one epoch");
    let mut window: VecDeque<(Epoch, Vec<(u64, Gwei)>)> = VecDeque::new();
    let mut sums: BTreeMap<u64, Gwei> = BTreeMap::new();
    let mut out = Vec::new();
    let mut first: Option<Epoch> = None;
    let mut current: Option<(Epoch, Vec<(u64, Gwei)>)> = None;
    let mut position = 0u64;

    let mut close = |group: (Epoch, Vec<(u64, Gwei)>),
                     window: &mut VecDeque<(Epoch, Vec<(u64, Gwei)>)>,
                     sums: &mut BTreeMap<u64, Gwei>,
                     first: Epoch|
     -> Result<(), AggregateError> {
        let epoch = group.0;
        let overflow = || AggregateError::Overflow { what: "window sum" };
        for &(v, x) in &group.1 {
            let s = sums.entry(v).or_insert(0);
            *s = s.checked_add(x).ok_or_else(overflow)?;
        }
        window.push_back(group);
        while window
            .front()
            .is_some_and(|(e, _)| e.0 + window_epochs <= epoch.0)
        {
            let (_, old) = window.pop_front().expect("non-empty");
            for (v, x) in old {
                let s = sums.get_mut(&v).expect("added earlier");
                *s -= x;
                if *s == 0 {
                    sums.remove(&v);
                }
            }
        }
        let start = epoch.0 + 1;
        if start >= first.0 + window_epochs {
            let values: Vec<Gwei> = sums.values().copied().filter(|&x| x != 0).collect();
            out.push(WindowPoint {
                start: Epoch(start - window_epochs),
                indices: compute_indices(&values, mode),
            });
        }
        Ok(())
    };

    for row in epochs {
        let row = row.map_err(Into::into)?;
        position += 1;
        first.get_or_insert(row.epoch);
        match &mut current {
            Some((e, group)) if *e == row.epoch => {
                group.push((row.validator_index, category.of_epoch(&row)))
            }
            Some((e, _)) if row.epoch < *e => {
                return Err(AggregateError::Unsorted {
                    stream: "epoch_rewards",
                    position,
                    detail: format!("epoch {} after epoch {}", row.epoch, e),
                })
            }
            _ => {
                if let Some(group) = current.take() {
                    close(
                        group,
                        &mut window,
                        &mut sums,
                        first.expect("set with the first row"),
                    )?;
                }
                current = Some((
                    row.epoch,
                    vec![(row.validator_index, category.of_epoch(&row))],
                ));
            }
        }
    }
    if let Some(group) = current.take() {
        close(
            group,
            &mut window,
            &mut sums,
            first.expect("set with the first row"),
        )?;
    }
    Ok(out)
}

/// Sample autocorrelation for lags `0..=max_lag`, normalised by the lag-0
/// value. Empty when the series is constant or shorter than two points.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    if n < 2 {
        return Vec::new();
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0: f64 = centred.iter().map(|x| x * x).sum();
    if c0 <= 0.0 {
        return Vec::new();
    }
    (0..=max_lag.min(n - 1))
        .map(|lag| {
            centred[..n - lag]
                .iter()
                .zip(&centred[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / c0
        })
        .collect()
}

/// Lag of the highest autocorrelation after the first non-positive value;
/// the smallest such lag on ties.
pub fn dominant_lag(acf: &[f64]) -> Option<usize> {
    let crossing = acf.iter().position(|&r| r <= 0.0)?;
    let mut best: Option<(usize, f64)> = None;
    for (lag, &r) in acf.iter().enumerate().skip(crossing) {
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((lag, r));
        }
    }
    best.filter(|&(_, r)| r > 0.0).map(|(lag, _)| lag)
}
