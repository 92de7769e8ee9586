//! Deliberately naive reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;

/// Rank of each value built by counting: 1 + smaller values + half the
/// other equal values.
pub fn explicit_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let less = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn pearson_naive(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>().sqrt();
    let sy: f64 = y.iter().map(|b| (b - my).powi(2)).sum::<f64>().sqrt();
    cov / (sx * sy)
}

pub fn srcc_bruteforce(x: &[f64], y: &[f64]) -> f64 {
    pearson_naive(&explicit_ranks(x), &explicit_ranks(y))
}

/// Tau-b by enumerating every pair. Pairs tied in both series count toward
/// neither tie term.
pub fn krcc_bruteforce(x: &[f64], y: &[f64]) -> f64 {
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            match (dx == 0.0, dy == 0.0) {
                (true, true) => {}
                (true, false) => tx += 1,
                (false, true) => ty += 1,
                (false, false) => {
                    if (dx > 0.0) == (dy > 0.0) {
                        c += 1
                    } else {
                        d += 1
                    }
                }
            }
        }
    }
    (c - d) as f64 / (((c + d + tx) * (c + d + ty)) as f64).sqrt()
}

fn draw_values<R: Rng>(rng: &mut R, n: usize, tied: bool) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n)
            .map(|_| {
                if tied {
                    rng.random_range(0..4) as f64 * 12.5
                } else {
                    rng.random::<f64>() * 100.0
                }
            })
            .collect();
        if v.iter().any(|a| *a != v[0]) {
            return v;
        }
    }
}

/// A random non-constant pair of series with 2..=10 points; roughly half
/// draw from a small value set so ties are common.
pub fn random_series<R: Rng>(rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(2..=10);
    let tx = rng.random_bool(0.5);
    let ty = rng.random_bool(0.5);
    (draw_values(rng, n, tx), draw_values(rng, n, ty))
}

/// One annotation as plain fields: (user, method, task, category, sample, score).
pub type Row = (String, String, String, String, String, f64);

/// Table cell means keyed by (task, method, category), computed with
/// nothing but loops over the row list.
pub fn generation_cells_naive(rows: &[Row]) -> BTreeMap<(String, String, String), f64> {
    let mut out = BTreeMap::new();
    for (_, method, task, category, _, _) in rows {
        let key = (task.clone(), method.clone(), category.clone());
        if out.contains_key(&key) {
            continue;
        }
        let mut users: Vec<&String> = rows
            .iter()
            .filter(|r| &r.2 == task && &r.1 == method && &r.3 == category)
            .map(|r| &r.0)
            .collect();
        users.sort();
        users.dedup();
        let mut total = 0.0;
        for user in &users {
            let all: Vec<f64> = rows.iter().filter(|r| &r.0 == *user && &r.2 == task).map(|r| r.5).collect();
            let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let norm = |s: f64| if hi == lo { 50.0 } else { (s - lo) / (hi - lo) * 100.0 };
            let mine: Vec<f64> = rows
                .iter()
                .filter(|r| &r.0 == *user && &r.2 == task && &r.1 == method && &r.3 == category)
                .map(|r| norm(r.5))
                .collect();
            total += mine.iter().sum::<f64>() / mine.len() as f64;
        }
        out.insert(key, total / users.len() as f64);
    }
    out
}
