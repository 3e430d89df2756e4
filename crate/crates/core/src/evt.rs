//! Tail machinery on top of intermediate quantile regression fits.
//!
//! The intermediate grid is `τ_j = j / (n + 1)` for `j = n - k, …, m` with
//! `m = n - ⌊n^ν⌋`. Predictions of the fitted hyperplanes at a covariate point
//! form a q-path, which after rearrangement plays the role of upper order
//! statistics for a Hill-type estimate of the extreme value index. The pooled
//! index drives Weissman extrapolation from the base level `τ_{n-k}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qr::{Dataset, LinearQuantileFit, QuantileLevel, Solver};

pub const DEFAULT_NU: f64 = 0.1;

/// Smallest admissible `k - ⌊n^ν⌋`.
pub const MIN_TAIL_WIDTH: usize = 5;

/// `⌊n^ν⌋`.
pub fn floor_pow(n: usize, nu: f64) -> usize {
    (n as f64).powf(nu).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailConfig {
    pub k: usize,
    pub nu: f64,
    pub n: usize,
}

impl TailConfig {
    pub fn new(n: usize, k: usize, nu: f64) -> Result<Self> {
        let cfg = Self { k, nu, n };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(Error::InvalidConfig(format!("nu = {} is outside (0, 1)", self.nu)));
        }
        if self.k >= self.n {
            return Err(Error::InvalidConfig(format!(
                "k = {} must be smaller than n = {}",
                self.k, self.n
            )));
        }
        let width = self.k as i64 - self.floor() as i64;
        if width < MIN_TAIL_WIDTH as i64 {
            return Err(Error::InsufficientTailWidth {
                k: self.k,
                n: self.n,
                width,
                min: MIN_TAIL_WIDTH,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn floor(&self) -> usize {
        floor_pow(self.n, self.nu)
    }

    /// `k - ⌊n^ν⌋`, the Hill divisor.
    #[inline]
    pub fn width(&self) -> usize {
        self.k - self.floor()
    }
}

/// Intermediate quantile levels `τ_{n-k} < … < τ_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelGrid {
    pub levels: Vec<QuantileLevel>,
    pub m: usize,
    pub first: usize,
}

impl LevelGrid {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// `τ_{n-k}`.
    pub fn base(&self) -> QuantileLevel {
        self.levels[0]
    }
}

pub fn intermediate_levels(n: usize, cfg: &TailConfig) -> Result<LevelGrid> {
    if cfg.n != n {
        return Err(Error::InvalidConfig(format!(
            "tail configuration refers to n = {}, grid requested for n = {n}",
            cfg.n
        )));
    }
    cfg.validate()?;
    let m = n - cfg.floor();
    let first = n - cfg.k;
    let denom = (n + 1) as f64;
    let levels = (first..=m)
        .map(|j| QuantileLevel::new(j as f64 / denom))
        .collect::<Result<Vec<_>>>()?;
    Ok(LevelGrid { levels, m, first })
}

/// Intermediate predictions at one covariate point.
#[derive(Debug, Clone, PartialEq)]
pub struct QPath {
    pub raw: Vec<f64>,
    pub monotone: Vec<f64>,
    pub base: f64,
    pub positive: bool,
}

impl QPath {
    /// Rearranges `raw` (ordered by increasing level) into a non-decreasing path.
    pub fn from_raw(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidInput("empty q-path".into()));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite q-path entry".into()));
        }
        let mut monotone = raw.clone();
        monotone.sort_by(f64::total_cmp);
        let base = monotone[0];
        Ok(Self {
            raw,
            monotone,
            base,
            positive: base > 0.0,
        })
    }
}

pub fn quantile_path(fits: &[LinearQuantileFit], x: &[f64]) -> Result<QPath> {
    if fits.windows(2).any(|w| w[0].tau >= w[1].tau) {
        return Err(Error::InvalidInput("fits must be ordered by increasing level".into()));
    }
    let raw = fits
        .iter()
        .map(|f| f.predict(x))
        .collect::<Result<Vec<_>>>()?;
    QPath::from_raw(raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EviEstimate {
    pub gamma: Option<f64>,
    pub k_used: usize,
    pub excluded: bool,
}

impl EviEstimate {
    pub fn excluded(k_used: usize) -> Self {
        Self {
            gamma: None,
            k_used,
            excluded: true,
        }
    }
}

/// Hill-type estimate over the rearranged path:
/// `(1/(k - ⌊n^ν⌋)) Σ_{j=⌊n^ν⌋}^{k} ln(q_{n-j} / q_{n-k})`.
pub fn hill_estimate(path: &QPath, cfg: &TailConfig) -> Result<EviEstimate> {
    let width = cfg.width();
    if path.monotone.len() != width + 1 {
        return Err(Error::InvalidInput(format!(
            "q-path has {} entries, tail configuration expects {}",
            path.monotone.len(),
            width + 1
        )));
    }
    if !path.positive {
        return Ok(EviEstimate::excluded(cfg.k));
    }
    Ok(EviEstimate {
        gamma: Some(hill_sum(&path.monotone) / width as f64),
        k_used: cfg.k,
        excluded: false,
    })
}

#[inline]
fn hill_sum(monotone: &[f64]) -> f64 {
    let base = monotone[0];
    monotone[1..].iter().map(|q| (q / base).ln()).sum()
}

/// Mean of the included estimates, summed left to right.
pub fn pooled_evi(estimates: &[EviEstimate]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::InvalidInput("no EVI estimates to pool".into()));
    }
    let excluded = estimates.iter().filter(|e| e.gamma.is_none()).count();
    if 2 * excluded > estimates.len() {
        return Err(Error::TailDegeneracy {
            excluded,
            total: estimates.len(),
        });
    }
    let (sum, count) = estimates
        .iter()
        .filter_map(|e| e.gamma)
        .fold((0.0, 0usize), |(s, c), g| (s + g, c + 1));
    Ok(sum / count as f64)
}

/// `((1 - τ_base) / (1 - τ_target))^γ · q_base`.
pub fn weissman_extrapolate(
    q_base: f64,
    tau_base: QuantileLevel,
    tau_target: QuantileLevel,
    gamma: f64,
) -> Result<f64> {
    if tau_target < tau_base {
        return Err(Error::InvalidDirection {
            base: tau_base.value(),
            target: tau_target.value(),
        });
    }
    if q_base.is_nan() || q_base <= 0.0 || !q_base.is_finite() {
        return Err(Error::InvalidBase(q_base));
    }
    if gamma.is_nan() || gamma < 0.0 || !gamma.is_finite() {
        return Err(Error::InvalidInput(format!("gamma = {gamma} must be finite and >= 0")));
    }
    let ratio = (1.0 - tau_base.value()) / (1.0 - tau_target.value());
    Ok(ratio.powf(gamma) * q_base)
}

/// Intermediate fits for the widest tail among several `k` sharing `n` and `ν`.
///
/// Grids for smaller `k` are suffixes of the widest grid, so one warm-started
/// path serves every candidate.
#[derive(Debug, Clone)]
pub struct TailFits {
    pub n: usize,
    pub nu: f64,
    pub k_max: usize,
    pub fits: Vec<LinearQuantileFit>,
}

impl TailFits {
    pub fn fit(data: &Dataset, k_max: usize, nu: f64) -> Result<Self> {
        let cfg = TailConfig::new(data.n(), k_max, nu)?;
        let grid = intermediate_levels(data.n(), &cfg)?;
        let fits = Solver::default().fit_path(data, &grid.levels)?;
        Ok(Self {
            n: data.n(),
            nu,
            k_max,
            fits,
        })
    }

    /// Fits on the grid of a smaller `k`.
    pub fn for_k(&self, k: usize) -> Result<&[LinearQuantileFit]> {
        TailConfig::new(self.n, k, self.nu)?;
        if k > self.k_max {
            return Err(Error::InvalidConfig(format!(
                "k = {k} exceeds the fitted maximum {}",
                self.k_max
            )));
        }
        Ok(&self.fits[self.k_max - k..])
    }
}

/// Per-row Hill estimates over a set of covariate rows, then pooled.
pub fn pooled_over_rows<'a>(
    fits: &[LinearQuantileFit],
    cfg: &TailConfig,
    rows: impl Iterator<Item = &'a [f64]>,
) -> Result<(f64, usize, Vec<EviEstimate>)> {
    let estimates = rows
        .map(|x| quantile_path(fits, x).and_then(|path| hill_estimate(&path, cfg)))
        .collect::<Result<Vec<_>>>()?;
    let excluded = estimates.iter().filter(|e| e.excluded).count();
    let gamma = pooled_evi(&estimates)?;
    Ok((gamma, excluded, estimates))
}

/// Mean squared gap between Weissman extrapolation from the base level and the
/// directly fitted (rearranged) path over the top quarter of the grid.
pub fn k_criterion(data: &Dataset, fits: &[LinearQuantileFit], cfg: &TailConfig) -> Result<f64> {
    let paths = data
        .rows()
        .map(|x| quantile_path(fits, x))
        .collect::<Result<Vec<_>>>()?;
    let estimates = paths
        .iter()
        .map(|p| hill_estimate(p, cfg))
        .collect::<Result<Vec<_>>>()?;
    let gamma = pooled_evi(&estimates)?;
    let len = fits.len();
    let band = len.div_ceil(4);
    let tau_base = fits[0].tau;
    let mut sum = 0.0;
    let mut count = 0usize;
    for path in paths.iter().filter(|p| p.positive) {
        for j in len - band..len {
            let extrapolated = weissman_extrapolate(path.base, tau_base, fits[j].tau, gamma)?;
            let gap = extrapolated - path.monotone[j];
            sum += gap * gap;
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Picks the candidate `k` with the smallest [`k_criterion`]; ties go to the smaller `k`.
pub fn select_k(data: &Dataset, candidates: &[usize], nu: f64) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidate k values".into()));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for &k in &sorted {
        TailConfig::new(data.n(), k, nu)?;
    }
    if sorted.len() == 1 {
        return Ok(sorted[0]);
    }
    let k_max = *sorted.last().unwrap();
    let tail = TailFits::fit(data, k_max, nu)?;
    let mut best: Option<(f64, usize)> = None;
    let mut last_err = None;
    for &k in &sorted {
        let cfg = TailConfig::new(data.n(), k, nu)?;
        match k_criterion(data, tail.for_k(k)?, &cfg) {
            Ok(score) => {
                if best.is_none_or(|(s, _)| score < s) {
                    best = Some((score, k));
                }
            }
            Err(e @ Error::TailDegeneracy { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    match (best, last_err) {
        (Some((_, k)), _) => Ok(k),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("at least one candidate was scored"),
    }
}

/// Candidates `max(⌊n^ν⌋ + 5, 20), …, ⌊n/4⌋` in steps of 5. When that range is
/// empty the smallest admissible `k` is the single candidate.
pub fn default_k_candidates(n: usize, nu: f64) -> Vec<usize> {
    let start = (floor_pow(n, nu) + MIN_TAIL_WIDTH).max(20);
    let stop = n / 4;
    if start <= stop {
        (start..=stop).step_by(5).collect()
    } else {
        vec![floor_pow(n, nu) + MIN_TAIL_WIDTH]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lvl(t: f64) -> QuantileLevel {
        QuantileLevel::new(t).unwrap()
    }

    #[test]
    fn grid_n100_k10() {
        let cfg = TailConfig::new(100, 10, 0.1).unwrap();
        assert_eq!(cfg.floor(), 1);
        let grid = intermediate_levels(100, &cfg).unwrap();
        assert_eq!(grid.m, 99);
        assert_eq!(grid.len(), 10);
        let expected: Vec<f64> = (90..=99).map(|j| j as f64 / 101.0).collect();
        let got: Vec<f64> = grid.levels.iter().map(|l| l.value()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn grid_n731_k50() {
        let cfg = TailConfig::new(731, 50, 0.1).unwrap();
        let grid = intermediate_levels(731, &cfg).unwrap();
        assert_eq!(grid.m, 730);
        assert_eq!(grid.len(), 50);
        assert_eq!(grid.levels[0].value(), 681.0 / 732.0);
        assert_eq!(grid.levels.last().unwrap().value(), 730.0 / 732.0);
    }

    #[test]
    fn grid_errors() {
        let narrow = TailConfig { k: 1, nu: 0.1, n: 100 };
        assert!(matches!(
            intermediate_levels(100, &narrow),
            Err(Error::InsufficientTailWidth { .. })
        ));
        // k = floor + 4 is still too narrow, floor + 5 is admissible
        assert!(TailConfig::new(100, 5, 0.1).is_err());
        assert!(TailConfig::new(100, 6, 0.1).is_ok());
        let wide = TailConfig { k: 100, nu: 0.1, n: 100 };
        assert!(matches!(intermediate_levels(100, &wide), Err(Error::InvalidConfig(_))));
        assert!(TailConfig::new(100, 10, 1.0).is_err());
    }

    #[test]
    fn grid_is_bit_stable() {
        let cfg = TailConfig::new(5000, 108, 0.1).unwrap();
        assert_eq!(
            intermediate_levels(5000, &cfg).unwrap(),
            intermediate_levels(5000, &cfg).unwrap()
        );
    }

    #[test]
    fn path_rearrangement() {
        let path = QPath::from_raw(vec![5.0, 4.0, 6.0]).unwrap();
        assert_eq!(path.monotone, vec![4.0, 5.0, 6.0]);
        assert_eq!(path.base, 4.0);
        assert!(path.positive);

        let path = QPath::from_raw(vec![-1.0, 2.0, 3.0]).unwrap();
        assert_eq!(path.base, -1.0);
        assert!(!path.positive);

        let path = QPath::from_raw(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(path.monotone, path.raw);
    }

    #[test]
    fn path_from_fits() {
        let fits: Vec<LinearQuantileFit> = [(0.90, 1.0), (0.95, 0.5), (0.99, 2.0)]
            .iter()
            .map(|&(t, b)| LinearQuantileFit {
                tau: lvl(t),
                alpha: 1.0,
                beta: vec![b],
                objective: 0.0,
            })
            .collect();
        let path = quantile_path(&fits, &[2.0]).unwrap();
        assert_eq!(path.raw, vec![3.0, 2.0, 5.0]);
        assert_eq!(path.monotone, vec![2.0, 3.0, 5.0]);
        assert!(quantile_path(&fits, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn hill_flat_path_is_zero() {
        let cfg = TailConfig::new(100, 10, 0.1).unwrap();
        let path = QPath::from_raw(vec![3.0; 10]).unwrap();
        assert_eq!(hill_estimate(&path, &cfg).unwrap().gamma, Some(0.0));
    }

    #[test]
    fn hill_excludes_nonpositive_base() {
        let cfg = TailConfig::new(100, 10, 0.1).unwrap();
        let mut raw = vec![1.0; 10];
        raw[3] = 0.0;
        let est = hill_estimate(&QPath::from_raw(raw).unwrap(), &cfg).unwrap();
        assert!(est.excluded);
        assert_eq!(est.gamma, None);
    }

    #[test]
    fn hill_rejects_wrong_length() {
        let cfg = TailConfig::new(100, 10, 0.1).unwrap();
        assert!(hill_estimate(&QPath::from_raw(vec![1.0; 9]).unwrap(), &cfg).is_err());
    }

    // q_{n-j} = (n+1)/(j+1): closed form (1/9) Σ_{j=1}^{10} ln(11/(j+1)).
    #[test]
    fn hill_on_exact_pareto_quantiles() {
        let n = 100;
        let cfg = TailConfig::new(n, 10, 0.1).unwrap();
        // ordered by increasing level: j = k down to floor
        let raw: Vec<f64> = (1..=10).rev().map(|j| 101.0 / (j as f64 + 1.0)).collect();
        let gamma = hill_estimate(&QPath::from_raw(raw).unwrap(), &cfg)
            .unwrap()
            .gamma
            .unwrap();
        let closed: f64 = (1..=10).map(|j| (11.0 / (j as f64 + 1.0)).ln()).sum::<f64>() / 9.0;
        assert!((gamma - closed).abs() < 1e-14);
        assert!((gamma - 0.7196).abs() < 5e-5);
    }

    #[test]
    fn hill_bias_vanishes_with_wide_tails() {
        let n = 10_000;
        let mut previous = 0.0;
        let mut at_100 = 0.0;
        for k in [10, 30, 100, 1000] {
            let cfg = TailConfig::new(n, k, 0.1).unwrap();
            let floor = cfg.floor();
            let raw: Vec<f64> = (floor..=k)
                .rev()
                .map(|j| (n as f64 + 1.0) / (j as f64 + 1.0))
                .collect();
            let gamma = hill_estimate(&QPath::from_raw(raw).unwrap(), &cfg)
                .unwrap()
                .gamma
                .unwrap();
            assert!(gamma > previous);
            previous = gamma;
            if k == 100 {
                at_100 = gamma;
            }
        }
        assert!(at_100 > 0.9, "{at_100}");
        assert!((previous - 1.0).abs() < 0.02, "{previous}");
    }

    #[test]
    fn pooled_examples() {
        let est = |g: f64| EviEstimate {
            gamma: Some(g),
            k_used: 10,
            excluded: false,
        };
        assert_eq!(pooled_evi(&[est(0.2)]).unwrap(), 0.2);
        assert!((pooled_evi(&[est(0.1), est(0.3)]).unwrap() - 0.2).abs() < 1e-15);
        let mixed = [est(0.1), est(0.3), EviEstimate::excluded(10), est(0.2)];
        assert!((pooled_evi(&mixed).unwrap() - 0.2).abs() < 1e-15);
        let bad = [est(0.1), EviEstimate::excluded(10), EviEstimate::excluded(10)];
        assert!(matches!(
            pooled_evi(&bad),
            Err(Error::TailDegeneracy { excluded: 2, total: 3 })
        ));
        assert!(pooled_evi(&[]).is_err());
    }

    #[test]
    fn weissman_examples() {
        assert_eq!(weissman_extrapolate(3.0, lvl(0.99), lvl(0.99), 0.7).unwrap(), 3.0);
        let v = weissman_extrapolate(3.0, lvl(0.99), lvl(0.9999), 0.5).unwrap();
        assert!((v - 30.0).abs() < 1e-10);
        assert!(matches!(
            weissman_extrapolate(3.0, lvl(0.99), lvl(0.9), 0.5),
            Err(Error::InvalidDirection { .. })
        ));
        assert!(matches!(
            weissman_extrapolate(0.0, lvl(0.9), lvl(0.99), 0.5),
            Err(Error::InvalidBase(_))
        ));
        assert_eq!(weissman_extrapolate(2.5, lvl(0.9), lvl(0.9999), 0.0).unwrap(), 2.5);
    }

    #[test]
    fn default_candidates() {
        let c = default_k_candidates(731, 0.1);
        assert_eq!(c.first(), Some(&20));
        assert_eq!(*c.last().unwrap(), 180);
        assert!(c.windows(2).all(|w| w[1] - w[0] == 5));
        assert_eq!(default_k_candidates(40, 0.1), vec![6]);
    }

    #[test]
    fn select_k_trivial_cases() {
        let x: Vec<f64> = (0..60).map(|i| i as f64 / 60.0).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| 1.0 + v + (i % 7) as f64).collect();
        let data = Dataset::from_single(&x, &y).unwrap();
        assert_eq!(select_k(&data, &[12], 0.1).unwrap(), 12);
        assert!(select_k(&data, &[], 0.1).is_err());
        assert!(select_k(&data, &[3], 0.1).is_err());
    }
}
