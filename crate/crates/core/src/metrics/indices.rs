//! Inequality and concentration indices over reward vectors.
//!
//! The functions here take values in any unit; every index is scale
//! invariant. Undefined results (no positive mass) come back as `None`.

use std::cmp::Ordering;

/// Neumaier's compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

fn csum(iter: impl IntoIterator<Item = f64>) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Gini coefficient of the vector with negatives clamped to zero.
///
/// Uses the sorted form `sum((2i - n - 1) x_(i)) / (n * S)`, which equals
/// the mean absolute difference over all ordered pairs divided by twice
/// the mean.
pub fn gini(values: &[f64]) -> Option<f64> {
    let mut xs: Vec<f64> = values.iter().map(|&x| x.max(0.0)).collect();
    let n = xs.len();
    let total = csum(xs.iter().copied());
    if n == 0 || total <= 0.0 {
        return None;
    }
    xs.sort_unstable_by(f64::total_cmp);
    let nf = n as f64;
    let weighted = csum(
        xs.iter()
            .enumerate()
            .map(|(i, &x)| (2.0 * (i as f64 + 1.0) - nf - 1.0) * x),
    );
    Some((weighted / (nf * total)).max(0.0))
}

/// Shannon entropy in bits of the shares `x / S`, `S` being the plain sum.
///
/// Non-positive entries contribute nothing; pass a clamped vector to get
/// proper shares.
pub fn shannon_entropy(values: &[f64]) -> Option<f64> {
    let total = csum(values.iter().copied());
    if values.is_empty() || total <= 0.0 {
        return None;
    }
    let positive = csum(values.iter().copied().filter(|&x| x > 0.0));
    let x_log_x = csum(
        values
            .iter()
            .copied()
            .filter(|&x| x > 0.0)
            .map(|x| x * x.log2()),
    );
    Some(((positive * total.log2() - x_log_x) / total).max(0.0))
}

/// Herfindahl-Hirschman index with fractional shares.
pub fn hhi(values: &[f64]) -> Option<f64> {
    let total = csum(values.iter().copied());
    if values.is_empty() || total <= 0.0 {
        return None;
    }
    Some(csum(values.iter().map(|&x| x * x)) / (total * total))
}

/// Smallest number of holders whose combined value is strictly more than
/// half of the total.
pub fn nakamoto(values: &[f64]) -> Option<usize> {
    let total = csum(values.iter().copied());
    if values.is_empty() || total <= 0.0 {
        return None;
    }
    let mut xs = values.to_vec();
    xs.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut prefix = CompensatedSum::new();
    for (k, &x) in xs.iter().enumerate() {
        prefix.add(x);
        if 2.0 * prefix.value() > total {
            return Some(k + 1);
        }
    }
    Some(xs.len())
}

/// Exact integer variant of [`nakamoto`]; entries are `(id, amount)`.
///
/// Returns the ids of the controlling set, largest first with ties broken
/// by ascending id.
pub fn nakamoto_set(entries: &[(u64, i64)]) -> Option<Vec<u64>> {
    let total: i128 = entries.iter().map(|&(_, x)| x as i128).sum();
    if entries.is_empty() || total <= 0 {
        return None;
    }
    let mut sorted = entries.to_vec();
    sorted.sort_unstable_by(|a, b| match b.1.cmp(&a.1) {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    let mut prefix: i128 = 0;
    let mut out = Vec::new();
    for (id, x) in sorted {
        prefix += x as i128;
        out.push(id);
        if 2 * prefix > total {
            break;
        }
    }
    Some(out)
}
