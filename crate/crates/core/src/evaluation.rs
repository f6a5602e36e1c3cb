//! Model-comparison metrics: Poisson deviance, count differences, lifts,
//! Gini index, and lift / double-lift plot data.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default double-lift ratio bucket edges.
pub const DOUBLE_LIFT_EDGES: [f64; 8] = [0.3, 0.5, 0.8, 0.95, 1.05, 1.25, 1.6, 2.0];

fn check_lengths(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Metric(format!(
            "{what}: {a} responses but {b} predictions"
        )));
    }
    Ok(())
}

/// `2 sum [y log(y / yhat) - (y - yhat)]` with `0 log 0 = 0`; returns the
/// sum and the per-observation mean.
pub fn poisson_deviance(y: &[f64], yhat: &[f64]) -> Result<(f64, f64)> {
    check_lengths(y.len(), yhat.len(), "deviance")?;
    if y.is_empty() {
        return Err(Error::Metric("deviance of an empty sample".into()));
    }
    let mut sum = 0.0;
    for (i, (&yi, &mi)) in y.iter().zip(yhat).enumerate() {
        if !(mi > 0.0 && mi.is_finite()) {
            return Err(Error::Metric(format!(
                "prediction {i} is {mi}; deviance needs positive predictions"
            )));
        }
        if !(yi >= 0.0) {
            return Err(Error::Metric(format!("response {i} is negative")));
        }
        let log_term = if yi > 0.0 { yi * (yi / mi).ln() } else { 0.0 };
        sum += 2.0 * (log_term - (yi - mi));
    }
    Ok((sum, sum / y.len() as f64))
}

/// Observed count of `k` minus expected count of `k`, for `k = 0..=k_max`.
/// `pmf[i][k]` is the predicted `P(Y_i = k)`.
pub fn count_diff_table(y: &[u64], pmf: &[Vec<f64>], k_max: usize) -> Result<Vec<f64>> {
    check_lengths(y.len(), pmf.len(), "count difference")?;
    let mut diff = vec![0.0; k_max + 1];
    for (yi, row) in y.iter().zip(pmf) {
        if row.len() <= k_max {
            return Err(Error::Metric(format!(
                "pmf row has {} entries, need {}",
                row.len(),
                k_max + 1
            )));
        }
        if (*yi as usize) <= k_max {
            diff[*yi as usize] += 1.0;
        }
        for (d, p) in diff.iter_mut().zip(row) {
            *d -= p;
        }
    }
    Ok(diff)
}

/// Row order ascending by score; ties keep their original order.
fn score_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    idx
}

/// Ten contiguous bins over `n` sorted rows; the `n mod 10` larger bins sit
/// at the top end.
fn decile_bounds(n: usize) -> Vec<std::ops::Range<usize>> {
    let (q, r) = (n / 10, n % 10);
    let mut start = 0;
    (0..10)
        .map(|b| {
            let size = if b >= 10 - r { q + 1 } else { q };
            let range = start..start + size;
            start += size;
            range
        })
        .collect()
}

fn check_scores(y: &[f64], scores: &[f64], what: &str) -> Result<()> {
    check_lengths(y.len(), scores.len(), what)?;
    if scores.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Metric(format!("{what}: non-finite value")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lifts {
    /// Top-decile mean response over the population mean.
    pub one_way: f64,
    /// Top-decile over bottom-decile mean response; `None` when the bottom
    /// decile has no response.
    pub two_way: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftRow {
    pub decile: usize,
    pub mean_prediction: f64,
    pub mean_response: f64,
}

/// Per-decile mean prediction and mean response, deciles by ascending score.
pub fn lift_plot_data(y: &[f64], scores: &[f64]) -> Result<Vec<LiftRow>> {
    check_scores(y, scores, "lift")?;
    if y.len() < 10 {
        return Err(Error::Metric(format!(
            "lift needs at least 10 rows, got {}",
            y.len()
        )));
    }
    let order = score_order(scores);
    Ok(decile_bounds(y.len())
        .into_iter()
        .enumerate()
        .map(|(b, range)| {
            let size = range.len() as f64;
            let rows = &order[range];
            LiftRow {
                decile: b + 1,
                mean_prediction: rows.iter().map(|&i| scores[i]).sum::<f64>() / size,
                mean_response: rows.iter().map(|&i| y[i]).sum::<f64>() / size,
            }
        })
        .collect())
}

pub fn lifts(y: &[f64], scores: &[f64]) -> Result<Lifts> {
    let rows = lift_plot_data(y, scores)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::Metric("lift needs a positive mean response".into()));
    }
    let top = rows[9].mean_response;
    let bottom = rows[0].mean_response;
    Ok(Lifts {
        one_way: top / mean,
        two_way: (bottom > 0.0).then(|| top / bottom),
    })
}

/// `1 - 2 * area` under the Lorenz curve of responses ordered by ascending
/// score (trapezoid rule over the `n + 1` curve points).
pub fn gini_index(y: &[f64], scores: &[f64]) -> Result<f64> {
    check_scores(y, scores, "gini")?;
    let total: f64 = y.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Metric(
            "gini is undefined when responses sum to 0".into(),
        ));
    }
    let n = y.len() as f64;
    let mut area = 0.0;
    let mut prev = 0.0;
    let mut cum = 0.0;
    for i in score_order(scores) {
        cum += y[i];
        let cur = cum / total;
        area += (prev + cur) / (2.0 * n);
        prev = cur;
    }
    Ok(1.0 - 2.0 * area)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoubleLiftRow {
    /// Bucket `(low, high]` of the ratio `a / b`.
    pub bucket_low: f64,
    pub bucket_high: f64,
    /// `sum y / sum b` in the bucket.
    pub actual_ratio: f64,
    /// `sum a / sum b` in the bucket.
    pub model_ratio: f64,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoubleLift {
    pub rows: Vec<DoubleLiftRow>,
    /// Buckets with no observations, omitted from `rows`.
    pub empty_buckets: Vec<(f64, f64)>,
}

/// Compares model `a` against baseline `b` bucketed by `a_i / b_i` over the
/// half-open intervals `(-inf, e_0], (e_0, e_1], ..., (e_last, inf)`.
pub fn double_lift_data(y: &[f64], a: &[f64], b: &[f64], edges: &[f64]) -> Result<DoubleLift> {
    check_scores(y, a, "double lift")?;
    check_scores(y, b, "double lift")?;
    if let Some(i) = b.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Metric(format!(
            "baseline prediction {i} is not positive"
        )));
    }
    if edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Metric(
            "bucket edges must be strictly increasing".into(),
        ));
    }
    let mut bounds = vec![f64::NEG_INFINITY];
    bounds.extend_from_slice(edges);
    bounds.push(f64::INFINITY);
    let buckets = bounds.len() - 1;
    let mut sums = vec![(0.0, 0.0, 0.0, 0usize); buckets];
    for i in 0..y.len() {
        let r = a[i] / b[i];
        // First edge >= r closes the bucket.
        let k = edges.partition_point(|e| *e < r);
        let s = &mut sums[k];
        s.0 += y[i];
        s.1 += a[i];
        s.2 += b[i];
        s.3 += 1;
    }
    let mut out = DoubleLift {
        rows: Vec::new(),
        empty_buckets: Vec::new(),
    };
    for (k, (sy, sa, sb, count)) in sums.into_iter().enumerate() {
        let (low, high) = (bounds[k], bounds[k + 1]);
        if count == 0 {
            out.empty_buckets.push((low, high));
        } else {
            out.rows.push(DoubleLiftRow {
                bucket_low: low,
                bucket_high: high,
                actual_ratio: sy / sb,
                model_ratio: sa / sb,
                rows: count,
            });
        }
    }
    Ok(out)
}

/// Headline metrics of one model on one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub deviance_sum: f64,
    pub deviance_mean: f64,
    pub one_way_lift: f64,
    pub two_way_lift: Option<f64>,
    pub gini: Option<f64>,
    /// Observed minus expected count of each `k`.
    pub count_diff: BTreeMap<usize, f64>,
}

impl MetricReport {
    pub fn compute(y: &[u64], means: &[f64], pmf: &[Vec<f64>], k_max: usize) -> Result<Self> {
        let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        let (deviance_sum, deviance_mean) = poisson_deviance(&yf, means)?;
        let lifts = lifts(&yf, means)?;
        let gini = gini_index(&yf, means).ok();
        let count_diff = count_diff_table(y, pmf, k_max)?
            .into_iter()
            .enumerate()
            .collect();
        Ok(Self {
            n: y.len(),
            deviance_sum,
            deviance_mean,
            one_way_lift: lifts.one_way,
            two_way_lift: lifts.two_way,
            gini,
            count_diff,
        })
    }

    /// Flat `key = value` text; undefined values are written as `nan`.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| v.to_string());
        let mut s = String::new();
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "deviance_sum = {}", self.deviance_sum);
        let _ = writeln!(s, "deviance_mean = {}", self.deviance_mean);
        let _ = writeln!(s, "one_way_lift = {}", self.one_way_lift);
        let _ = writeln!(s, "two_way_lift = {}", opt(self.two_way_lift));
        let _ = writeln!(s, "gini = {}", opt(self.gini));
        for (k, d) in &self.count_diff {
            let _ = writeln!(s, "count_diff_{k} = {d}");
        }
        s
    }
}
