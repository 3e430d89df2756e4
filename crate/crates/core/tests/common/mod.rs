//! Test-only oracles, independent of the library's solver and estimator code.
#![allow(dead_code)]

use exqr::qr::Dataset;
use rand::Rng;

/// Random design with `p` covariates. With `integer` set, values come from a
/// small integer grid so ties and duplicate rows are common.
pub fn random_instance(rng: &mut impl Rng, n: usize, p: usize, integer: bool) -> Dataset {
    let draw = |rng: &mut dyn rand::RngCore, lo: f64, hi: f64| -> f64 {
        if integer {
            rng.gen_range(lo as i64..=hi as i64) as f64
        } else {
            rng.gen_range(lo..hi)
        }
    };
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| draw(rng, 0.0, 4.0)).collect())
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| 1.0 + r.iter().sum::<f64>() + draw(rng, -3.0, 3.0))
        .collect();
    Dataset::new(rows, y).unwrap()
}

fn mean_loss(data: &Dataset, tau: f64, theta: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..data.n() {
        let fitted = theta[0]
            + data
                .row(i)
                .iter()
                .zip(&theta[1..])
                .map(|(x, b)| x * b)
                .sum::<f64>();
        let u = data.response()[i] - fitted;
        total += if u > 0.0 { tau * u } else { (tau - 1.0) * u };
    }
    total / data.n() as f64
}

// Cramer's rule on a (p+1)x(p+1) system; None when singular.
fn solve_cramer(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    fn det(m: &[Vec<f64>]) -> f64 {
        match m.len() {
            1 => m[0][0],
            2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
            _ => (0..m.len())
                .map(|c| {
                    let minor: Vec<Vec<f64>> = m[1..]
                        .iter()
                        .map(|row| row.iter().enumerate().filter(|(j, _)| *j != c).map(|(_, v)| *v).collect())
                        .collect();
                    let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                    sign * m[0][c] * det(&minor)
                })
                .sum(),
        }
    }
    let d = det(a);
    let scale: f64 = a.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).product();
    if d.abs() <= 1e-12 * scale {
        return None;
    }
    Some(
        (0..a.len())
            .map(|c| {
                let replaced: Vec<Vec<f64>> = a
                    .iter()
                    .zip(b)
                    .map(|(row, &bv)| {
                        let mut r = row.clone();
                        r[c] = bv;
                        r
                    })
                    .collect();
                det(&replaced) / d
            })
            .collect(),
    )
}

/// Minimum mean pinball loss over every hyperplane through p + 1 sample points.
/// Infinity when no (p+1)-subset is in general position.
pub fn enumerate_best_objective(data: &Dataset, tau: f64) -> f64 {
    let n = data.n();
    let m = data.p() + 1;
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        let a: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| std::iter::once(1.0).chain(data.row(i).iter().copied()).collect())
            .collect();
        let b: Vec<f64> = idx.iter().map(|&i| data.response()[i]).collect();
        if let Some(theta) = solve_cramer(&a, &b) {
            best = best.min(mean_loss(data, tau, &theta));
        }
        // next combination
        let mut k = m;
        let mut advanced = false;
        while k > 0 {
            k -= 1;
            if idx[k] < n - m + k {
                idx[k] += 1;
                for j in k + 1..m {
                    idx[j] = idx[j - 1] + 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            return best;
        }
    }
}

/// Hill-type statistic on the upper order statistics of a plain sample:
/// `(1/(k - f)) Σ_{j=f}^{k} ln(X_(n-j) / X_(n-k))`, `f = ⌊n^ν⌋`, where
/// `X_(n-j)` is the (j+1)-th largest value. This is the estimator's target
/// behaviour when the q-path equals the empirical order statistics.
pub fn order_statistic_hill(sample: &[f64], k: usize, nu: f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let f = (sample.len() as f64).powf(nu).floor() as usize;
    let base = sorted[k];
    (f..=k).map(|j| (sorted[j] / base).ln()).sum::<f64>() / (k - f) as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
