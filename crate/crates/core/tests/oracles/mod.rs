//! Independent reference implementations used as test oracles. They share no
//! code with the library: plain `Vec` arithmetic, brute-force scans and exact
//! integer moments.
#![allow(dead_code)]

use std::collections::BTreeSet;

use chrono::NaiveDate;

/// Inverse of a square matrix by Gauss-Jordan elimination with partial
/// pivoting. Returns `None` when a pivot vanishes.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        let p = m[col][col];
        m[col].iter_mut().for_each(|v| *v /= p);
        for row in 0..n {
            if row != col {
                let f = m[row][col];
                if f != 0.0 {
                    let pivot_row = m[col].clone();
                    m[row].iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

fn mat_vec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

fn oracle_loglik(rows: &[Vec<f64>], y: &[f64], beta: &[f64]) -> f64 {
    rows.iter()
        .zip(y)
        .map(|(r, yi)| {
            let eta: f64 = r.iter().zip(beta).map(|(a, b)| a * b).sum();
            // log(1 + e^eta) written out separately for each sign
            let lse = if eta > 0.0 { eta + (1.0 + (-eta).exp()).ln() } else { (1.0 + eta.exp()).ln() };
            yi * eta - lse
        })
        .sum()
}

fn grad_hess(rows: &[Vec<f64>], y: &[f64], beta: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = beta.len();
    let mut g = vec![0.0; p];
    let mut h = vec![vec![0.0; p]; p];
    for (r, yi) in rows.iter().zip(y) {
        let eta: f64 = r.iter().zip(beta).map(|(a, b)| a * b).sum();
        let mu = 1.0 / (1.0 + (-eta).exp());
        let w = mu * (1.0 - mu);
        for j in 0..p {
            g[j] += (yi - mu) * r[j];
            for k in 0..p {
                h[j][k] += w * r[j] * r[k];
            }
        }
    }
    (g, h)
}

pub struct ReferenceFit {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub loglik: f64,
    pub max_abs_gradient: f64,
}

/// Maximum-likelihood logistic fit: damped Newton with backtracking on
/// explicit sums, run until the gradient is at round-off level.
pub fn reference_logistic(rows: &[Vec<f64>], y: &[f64]) -> ReferenceFit {
    let p = rows[0].len();
    let mut beta = vec![0.0; p];
    let mut ll = oracle_loglik(rows, y, &beta);
    for _ in 0..100 {
        let (g, h) = grad_hess(rows, y, &beta);
        if g.iter().all(|v| v.abs() < 1e-12) {
            break;
        }
        let step = mat_vec(&gauss_jordan_inverse(&h).expect("information matrix invertible"), &g);
        // near the optimum the likelihood change is below round-off, so
        // only damp steps that promise a visible improvement
        let predicted: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        if predicted < 1e-9 {
            beta.iter_mut().zip(&step).for_each(|(b, s)| *b += s);
            ll = oracle_loglik(rows, y, &beta);
            continue;
        }
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let cll = oracle_loglik(rows, y, &cand);
            if cll >= ll || t < 1e-12 {
                beta = cand;
                ll = cll;
                break;
            }
            t *= 0.5;
        }
    }
    let (g, h) = grad_hess(rows, y, &beta);
    let cov = gauss_jordan_inverse(&h).expect("information matrix invertible");
    ReferenceFit {
        se: (0..p).map(|i| cov[i][i].sqrt()).collect(),
        beta,
        loglik: ll,
        max_abs_gradient: g.iter().fold(0.0, |a, v| a.max(v.abs())),
    }
}

/// VIF of each column of `cols` by ordinary least squares via the normal
/// equations, with an intercept added: 1 / (1 - R^2).
pub fn normal_equations_vif(cols: &[Vec<f64>]) -> Vec<f64> {
    let n = cols[0].len();
    (0..cols.len())
        .map(|j| {
            let mut z: Vec<&[f64]> = Vec::new();
            let ones = vec![1.0; n];
            z.push(&ones);
            z.extend(cols.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, c)| c.as_slice()));
            let ztz: Vec<Vec<f64>> = z
                .iter()
                .map(|a| z.iter().map(|b| a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()).collect())
                .collect();
            let target = &cols[j];
            let zty: Vec<f64> = z.iter().map(|a| a.iter().zip(target).map(|(x, y)| x * y).sum()).collect();
            let b = mat_vec(&gauss_jordan_inverse(&ztz).expect("regressors independent"), &zty);
            let mean = target.iter().sum::<f64>() / n as f64;
            let (mut sse, mut sst) = (0.0, 0.0);
            for i in 0..n {
                let fitted: f64 = z.iter().zip(&b).map(|(c, bk)| c[i] * bk).sum();
                sse += (target[i] - fitted).powi(2);
                sst += (target[i] - mean).powi(2);
            }
            1.0 / (sse / sst)
        })
        .collect()
}

/// Type-1 sample skewness of integer data from exact power sums:
/// g1 = A / B^(3/2), A = n^2 S3 - 3n S1 S2 + 2 S1^3, B = n S2 - S1^2.
pub fn exact_skewness_type1(values: &[i64]) -> f64 {
    let n = values.len() as i128;
    let (s1, s2, s3) = values.iter().fold((0i128, 0i128, 0i128), |(a, b, c), &v| {
        let v = v as i128;
        (a + v, b + v * v, c + v * v * v)
    });
    let a = n * n * s3 - 3 * n * s1 * s2 + 2 * s1 * s1 * s1;
    let b = n * s2 - s1 * s1;
    a as f64 / (b as f64).powf(1.5)
}

/// Type-3 from type-1: b1 = g1 ((n-1)/n)^(3/2).
pub fn exact_skewness_type3(values: &[i64]) -> f64 {
    let n = values.len() as f64;
    exact_skewness_type1(values) * ((n - 1.0) / n).powf(1.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanStatus {
    Sustained,
    NotSustained,
    Censored,
    Excluded,
}

pub struct ScanConfig {
    pub snapshot: NaiveDate,
    pub window_days: i64,
    pub horizon_end: NaiveDate,
    pub data_end: NaiveDate,
    pub censor_days: i64,
    pub gap_days: i64,
    /// `true`: recent means active in the last window before the horizon end.
    pub active_at_horizon: bool,
}

/// Labels by walking the calendar one day at a time.
pub fn scan_label(dates: &[NaiveDate], cfg: &ScanConfig) -> (ScanStatus, Option<bool>, Option<bool>) {
    let set: BTreeSet<NaiveDate> = dates.iter().copied().collect();
    let first = *set.iter().next().expect("non-empty");
    let last = *set.iter().next_back().expect("non-empty");

    let mut idle = 0i64;
    let mut day = first;
    while day <= cfg.snapshot && day <= last {
        if set.contains(&day) {
            if day != first && idle > cfg.gap_days {
                return (ScanStatus::Excluded, None, None);
            }
            idle = 0;
        }
        idle += 1;
        day = day.succ_opt().unwrap();
    }

    let any_between = |lo: NaiveDate, hi: NaiveDate| {
        let mut d = lo.succ_opt().unwrap();
        while d <= hi {
            if set.contains(&d) {
                return true;
            }
            d = d.succ_opt().unwrap();
        }
        false
    };
    let window_end = cfg.snapshot + chrono::Duration::days(cfg.window_days);
    let recent_lo = if cfg.active_at_horizon {
        let lo = cfg.horizon_end - chrono::Duration::days(cfg.window_days);
        lo.max(cfg.snapshot)
    } else {
        cfg.snapshot
    };
    let recent = any_between(recent_lo, cfg.horizon_end);
    if any_between(cfg.snapshot, window_end) {
        return (ScanStatus::Sustained, Some(true), Some(recent));
    }
    if (cfg.data_end - last).num_days() <= cfg.censor_days {
        return (ScanStatus::Censored, None, None);
    }
    (ScanStatus::NotSustained, Some(false), Some(recent))
}

/// Emoji count by trying every window length at every position, longest
/// first, using only set membership.
pub fn window_scan_emoji(text: &str, contains: impl Fn(&str) -> bool, max_len: usize) -> u32 {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut count = 0;
    while i < chars.len() {
        let longest = (1..=max_len.min(chars.len() - i))
            .rev()
            .find(|&len| contains(&chars[i..i + len].iter().collect::<String>()));
        match longest {
            Some(len) => {
                count += 1;
                i += len;
            }
            None => i += 1,
        }
    }
    count
}
