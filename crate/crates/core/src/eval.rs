//! Tail-oriented evaluation: exceedance counts, log quantile ratios and EVI
//! summaries.
//!
//! Pinball scores are reported only at the moderate level 0.97. At far-tail
//! levels a quantile score cannot discriminate between competing predictions,
//! so the report carries no score field there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ExtremalQRModel;
use crate::qr::{mean_pinball, QuantileLevel};

/// The one level at which a quantile score is computed.
pub const SCORED_LEVEL: f64 = 0.97;

const HIST_BIN_WIDTH: f64 = 0.05;
const HIST_BINS: usize = 20;

/// Count and fraction of steps where `observed > predicted`.
pub fn exceedance_rate(observed: &[f64], predicted: &[f64]) -> Result<(usize, f64)> {
    if observed.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "{} observations but {} predictions",
            observed.len(),
            predicted.len()
        )));
    }
    if observed.is_empty() {
        return Err(Error::InvalidInput("empty series".into()));
    }
    let count = observed
        .iter()
        .zip(predicted)
        .filter(|(o, p)| o > p)
        .count();
    Ok((count, count as f64 / observed.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRatio {
    pub series: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    /// Pairs skipped because one side was not strictly positive.
    pub dropped: usize,
}

/// Elementwise `ln(a / b)` over strictly positive pairs.
pub fn log_quantile_ratio(pred_a: &[f64], pred_b: &[f64]) -> Result<LogRatio> {
    if pred_a.len() != pred_b.len() {
        return Err(Error::InvalidInput(format!(
            "series lengths differ: {} vs {}",
            pred_a.len(),
            pred_b.len()
        )));
    }
    let series: Vec<f64> = pred_a
        .iter()
        .zip(pred_b)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a / b).ln())
        .collect();
    let dropped = pred_a.len() - series.len();
    if series.is_empty() {
        return Err(Error::EmptyComparison { dropped });
    }
    Ok(LogRatio {
        mean: mean(&series),
        median: median(&series),
        series,
        dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EviSummary {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub bin_width: f64,
    /// Counts on `[i·w, (i+1)·w)` for `i = 0..20`; 1.0 itself lands in the last bin.
    pub bins: Vec<usize>,
    /// Values above 1.
    pub overflow: usize,
    /// Values below 0.
    pub underflow: usize,
}

pub fn evi_summary(gammas: &[f64]) -> Result<EviSummary> {
    if gammas.is_empty() {
        return Err(Error::InvalidInput("no EVI values to summarise".into()));
    }
    if gammas.iter().any(|g| !g.is_finite()) {
        return Err(Error::InvalidInput("non-finite EVI value".into()));
    }
    let mut sorted = gammas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut bins = vec![0usize; HIST_BINS];
    let (mut overflow, mut underflow) = (0, 0);
    for &g in &sorted {
        if g < 0.0 {
            underflow += 1;
        } else if g > 1.0 {
            overflow += 1;
        } else {
            let i = ((g / HIST_BIN_WIDTH).floor() as usize).min(HIST_BINS - 1);
            bins[i] += 1;
        }
    }
    Ok(EviSummary {
        count: sorted.len(),
        median: quantile_sorted(&sorted, 0.5),
        q1: quantile_sorted(&sorted, 0.25),
        q3: quantile_sorted(&sorted, 0.75),
        bin_width: HIST_BIN_WIDTH,
        bins,
        overflow,
        underflow,
    })
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, 0.5)
}

// Linear interpolation between order statistics (Hyndman-Fan type 7).
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Conventional,
    Extremal,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Conventional => "conventional",
            Method::Extremal => "extremal",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "conventional" => Ok(Method::Conventional),
            "extremal" => Ok(Method::Extremal),
            other => Err(Error::InvalidInput(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceEntry {
    pub method: Method,
    pub level: f64,
    pub n_test: usize,
    pub exceedance_count: usize,
    pub exceedance_rate: f64,
    /// Nominal rate `1 - level`.
    pub nominal_rate: f64,
    /// Mean pinball loss, present only at the scored moderate level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile_score: Option<f64>,
    /// Extremal predictions served by the conventional fit.
    #[serde(default)]
    pub fallback_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelComparison {
    pub level: f64,
    pub log_ratio_mean: f64,
    pub log_ratio_median: f64,
    pub dropped: usize,
    pub log_ratio_series: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub basin_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSummary>,
    pub exceedance: Vec<ExceedanceEntry>,
    pub comparisons: Vec<LevelComparison>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evi_summary: Option<EviSummary>,
}

/// Tail configuration of the model behind a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub k: usize,
    pub nu: f64,
    pub n_train: usize,
    pub tau_base: f64,
    pub gamma_pool: f64,
    pub excluded_count: usize,
}

impl From<&ExtremalQRModel> for ModelSummary {
    fn from(m: &ExtremalQRModel) -> Self {
        Self {
            k: m.cfg.k,
            nu: m.cfg.nu,
            n_train: m.cfg.n,
            tau_base: m.tau_base().value(),
            gamma_pool: m.gamma_pool,
            excluded_count: m.excluded_count,
        }
    }
}

/// Exceedance entry for one prediction series.
pub fn exceedance_entry(
    method: Method,
    level: QuantileLevel,
    observed: &[f64],
    predicted: &[f64],
    fallback_count: usize,
) -> Result<ExceedanceEntry> {
    let (count, rate) = exceedance_rate(observed, predicted)?;
    let quantile_score = is_scored_level(level).then(|| {
        let residuals: Vec<f64> = observed.iter().zip(predicted).map(|(o, p)| o - p).collect();
        mean_pinball(&residuals, level)
    });
    Ok(ExceedanceEntry {
        method,
        level: level.value(),
        n_test: observed.len(),
        exceedance_count: count,
        exceedance_rate: rate,
        nominal_rate: 1.0 - level.value(),
        quantile_score,
        fallback_count,
    })
}

fn is_scored_level(level: QuantileLevel) -> bool {
    (level.value() - SCORED_LEVEL).abs() < 1e-12
}

pub fn level_comparison(level: QuantileLevel, extremal: &[f64], conventional: &[f64]) -> Result<LevelComparison> {
    let ratio = log_quantile_ratio(extremal, conventional)?;
    Ok(LevelComparison {
        level: level.value(),
        log_ratio_mean: ratio.mean,
        log_ratio_median: ratio.median,
        dropped: ratio.dropped,
        log_ratio_series: ratio.series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exceedance_examples() {
        assert_eq!(exceedance_rate(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), (0, 0.0));
        let mut obs = vec![0.0; 10_000];
        obs[1234] = 5.0;
        let (count, rate) = exceedance_rate(&obs, &vec![1.0; 10_000]).unwrap();
        assert_eq!(count, 1);
        assert_eq!(rate, 1e-4);
        assert_eq!(
            exceedance_rate(&[1.0, 3.0, 1.0, 3.0], &[2.0; 4]).unwrap(),
            (2, 0.5)
        );
        // strict exceedance
        assert_eq!(exceedance_rate(&[2.0], &[2.0]).unwrap(), (0, 0.0));
        assert!(exceedance_rate(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn log_ratio_examples() {
        let b = [1.0, 2.0, 5.0];
        let same = log_quantile_ratio(&b, &b).unwrap();
        assert!(same.series.iter().all(|&v| v == 0.0));
        assert_eq!(same.mean, 0.0);

        let a: Vec<f64> = b.iter().map(|v| v * std::f64::consts::E).collect();
        let r = log_quantile_ratio(&a, &b).unwrap();
        assert!(r.series.iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert!((r.mean - 1.0).abs() < 1e-15);

        let r = log_quantile_ratio(&[1.0, -1.0, 2.0], &[1.0, 1.0, 0.0]).unwrap();
        assert_eq!(r.dropped, 2);
        assert_eq!(r.series, vec![0.0]);
        assert!(matches!(
            log_quantile_ratio(&[-1.0], &[1.0]),
            Err(Error::EmptyComparison { dropped: 1 })
        ));
    }

    #[test]
    fn evi_summary_examples() {
        let s = evi_summary(&[0.1, 0.19, 0.3]).unwrap();
        assert_eq!(s.median, 0.19);
        assert_eq!(s.bins[3], 1);
        let s = evi_summary(&[0.2, 0.2]).unwrap();
        assert_eq!(s.median, 0.2);
        assert_eq!(s.q3 - s.q1, 0.0);
        let s = evi_summary(&[1.0, 1.5, 0.0]).unwrap();
        assert_eq!(s.bins[19], 1);
        assert_eq!(s.bins[0], 1);
        assert_eq!(s.overflow, 1);
        assert!(evi_summary(&[]).is_err());
    }

    #[test]
    fn score_only_at_moderate_level() {
        let obs = [1.0, 2.0, 3.0];
        let pred = [2.0, 2.0, 2.0];
        let moderate = exceedance_entry(
            Method::Extremal,
            QuantileLevel::new(0.97).unwrap(),
            &obs,
            &pred,
            0,
        )
        .unwrap();
        assert!(moderate.quantile_score.is_some());
        for t in [0.999, 0.9999] {
            let e = exceedance_entry(Method::Extremal, QuantileLevel::new(t).unwrap(), &obs, &pred, 0)
                .unwrap();
            assert!(e.quantile_score.is_none());
            let json = serde_json::to_string(&e).unwrap();
            assert!(!json.contains("score") && !json.contains("crps"));
        }
    }

    proptest! {
        #[test]
        fn exceedance_invariant_under_monotone_transform(
            pairs in prop::collection::vec((0.01f64..100.0, 0.01f64..100.0), 1..60)
        ) {
            let (obs, pred): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let f = |v: &f64| v.ln() * 3.0 + v.powi(3);
            let to: Vec<f64> = obs.iter().map(f).collect();
            let tp: Vec<f64> = pred.iter().map(f).collect();
            prop_assert_eq!(exceedance_rate(&obs, &pred).unwrap(), exceedance_rate(&to, &tp).unwrap());
        }

        #[test]
        fn log_ratio_antisymmetric(
            pairs in prop::collection::vec((0.01f64..100.0, 0.01f64..100.0), 1..60)
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let ab = log_quantile_ratio(&a, &b).unwrap();
            let ba = log_quantile_ratio(&b, &a).unwrap();
            for (x, y) in ab.series.iter().zip(&ba.series) {
                prop_assert!((x + y).abs() < 1e-12);
            }
        }

        #[test]
        fn median_permutation_invariant(
            mut values in prop::collection::vec(0.0f64..1.5, 1..40),
            seed in any::<u64>()
        ) {
            let before = evi_summary(&values).unwrap();
            let len = values.len();
            let mut s = seed;
            for i in (1..len).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                values.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(before, evi_summary(&values).unwrap());
        }
    }
}
