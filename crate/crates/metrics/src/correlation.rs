//! SRCC, KRCC (tau-b) and PLCC over a validated pair of series.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};

/// Predicted and observed values of equal length, at least two, all finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSeries {
    predicted: Vec<f64>,
    observed: Vec<f64>,
}

impl PairedSeries {
    pub fn new(predicted: Vec<f64>, observed: Vec<f64>) -> Result<Self> {
        if predicted.len() != observed.len() {
            return Err(MetricsError::LengthMismatch {
                predicted: predicted.len(),
                observed: observed.len(),
            });
        }
        if predicted.len() < 2 {
            return Err(MetricsError::TooShort(predicted.len()));
        }
        if predicted.iter().chain(&observed).any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
        if is_constant(&predicted) || is_constant(&observed) {
            return Err(MetricsError::DegenerateSeries);
        }
        Ok(PairedSeries { predicted, observed })
    }

    pub fn predicted(&self) -> &[f64] {
        &self.predicted
    }

    pub fn observed(&self) -> &[f64] {
        &self.observed
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

/// The three coefficients reported side by side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub srcc: f64,
    pub krcc: f64,
    pub plcc: f64,
}

impl Coefficients {
    pub fn of(series: &PairedSeries) -> Self {
        Coefficients {
            srcc: srcc(series),
            krcc: krcc(series),
            plcc: plcc(series),
        }
    }
}

/// Spearman correlation: Pearson correlation of average ranks.
pub fn srcc(series: &PairedSeries) -> f64 {
    pearson(&average_ranks(&series.predicted), &average_ranks(&series.observed))
}

pub fn plcc(series: &PairedSeries) -> f64 {
    pearson(&series.predicted, &series.observed)
}

/// 1-based ranks where tied values share the mean of the positions they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Kendall tau-b in O(n log n): sort by (x, y), then count the swaps a
/// merge sort on y needs (Knight's method).
pub fn krcc(series: &PairedSeries) -> f64 {
    let (x, y) = (&series.predicted, &series.observed);
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let pairs = |run: u64| run * run.saturating_sub(1) / 2;
    let n0 = pairs(n as u64);

    let (mut tied_x, mut tied_xy) = (0u64, 0u64);
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        if x[a] == x[b] {
            run_x += 1;
            if y[a] == y[b] {
                run_xy += 1;
            } else {
                tied_xy += pairs(run_xy);
                run_xy = 1;
            }
        } else {
            tied_x += pairs(run_x);
            tied_xy += pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    tied_x += pairs(run_x);
    tied_xy += pairs(run_xy);

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);

    let mut tied_y = 0u64;
    let mut run_y = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run_y += 1;
        } else {
            tied_y += pairs(run_y);
            run_y = 1;
        }
    }
    tied_y += pairs(run_y);

    // concordant - discordant
    let s = n0 as f64 - tied_x as f64 - tied_y as f64 + tied_xy as f64 - 2.0 * swaps as f64;
    let denom = ((n0 - tied_x) as f64 * (n0 - tied_y) as f64).sqrt();
    (s / denom).clamp(-1.0, 1.0)
}

/// Stable merge sort returning the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j].total_cmp(&v[i]) == Ordering::Less {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}
