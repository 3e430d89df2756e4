//! Linear quantile regression with an intercept.
//!
//! The solver walks the vertices of the piecewise-linear objective
//! `(1/n) Σ ρ_τ(y_i - α - x_iᵀβ)`. A vertex is a hyperplane through `p + 1`
//! sample points. From a vertex it follows the steepest descending edge and
//! performs an exact line search along it (the objective restricted to a ray
//! is convex piecewise linear, so the minimiser is a weighted median of the
//! breakpoints). Every accepted step strictly decreases the objective, so the
//! walk cannot cycle.
//!
//! At a degenerate vertex (more than `p + 1` zero residuals) the edges of a
//! single basis do not generate every direction. The solver then tests the
//! extreme rays of the hyperplane arrangement formed by all zero-residual
//! points, which is exact: if no such ray descends the vertex is optimal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on vertex moves per fit.
pub const DEFAULT_MAX_ITER: usize = 10_000;

const ZERO_RESIDUAL_RTOL: f64 = 1e-11;
const SLOPE_RTOL: f64 = 1e-12;
const PIVOT_RTOL: f64 = 1e-10;
const MAX_DEGENERATE_RAYS: usize = 2_000_000;

/// A quantile level strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_finite() && tau > 0.0 && tau < 1.0 {
            Ok(Self(tau))
        } else {
            Err(Error::InvalidLevel(tau))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for QuantileLevel {
    type Error = Error;

    fn try_from(tau: f64) -> Result<Self> {
        Self::new(tau)
    }
}

impl From<QuantileLevel> for f64 {
    fn from(level: QuantileLevel) -> f64 {
        level.0
    }
}

impl std::fmt::Display for QuantileLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Regression sample: `n` rows of `p` covariates plus a response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    design: Vec<f64>,
    response: Vec<f64>,
    n: usize,
    p: usize,
}

impl Dataset {
    /// Builds a dataset from covariate rows. Every row must have the same length.
    pub fn new(rows: Vec<Vec<f64>>, response: Vec<f64>) -> Result<Self> {
        let n = rows.len();
        if n != response.len() {
            return Err(Error::InvalidInput(format!(
                "{} design rows but {} responses",
                n,
                response.len()
            )));
        }
        let p = rows.first().map_or(0, Vec::len);
        if p == 0 {
            return Err(Error::InvalidInput("design has no covariates".into()));
        }
        let mut design = Vec::with_capacity(n * p);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != p {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} covariates, expected {p}",
                    row.len()
                )));
            }
            design.extend(row);
        }
        Self::from_parts(design, response, p)
    }

    /// Single-covariate dataset.
    pub fn from_single(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidInput(format!(
                "{} covariates but {} responses",
                x.len(),
                y.len()
            )));
        }
        Self::from_parts(x.to_vec(), y.to_vec(), 1)
    }

    fn from_parts(design: Vec<f64>, response: Vec<f64>, p: usize) -> Result<Self> {
        let n = response.len();
        if n < p + 2 {
            return Err(Error::InvalidInput(format!(
                "need at least {} rows for {p} covariates, got {n}",
                p + 2
            )));
        }
        if let Some(i) = design.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite covariate in row {}",
                i / p
            )));
        }
        if let Some(i) = response.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite response in row {i}")));
        }
        Ok(Self {
            design,
            response,
            n,
            p,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.design[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.design.chunks_exact(self.p)
    }

    #[inline]
    pub fn response(&self) -> &[f64] {
        &self.response
    }

    /// Copy with every response multiplied by `c`.
    pub fn with_scaled_response(&self, c: f64) -> Self {
        Self {
            response: self.response.iter().map(|y| c * y).collect(),
            ..self.clone()
        }
    }

    /// Copy with `c` added to every response.
    pub fn with_shifted_response(&self, c: f64) -> Self {
        Self {
            response: self.response.iter().map(|y| y + c).collect(),
            ..self.clone()
        }
    }

    // Row i of the design augmented with a leading 1 for the intercept.
    #[inline]
    fn aug(&self, i: usize, j: usize) -> f64 {
        if j == 0 {
            1.0
        } else {
            self.design[i * self.p + j - 1]
        }
    }

    #[inline]
    fn aug_dot(&self, i: usize, v: &[f64]) -> f64 {
        let row = self.row(i);
        v[0] + row.iter().zip(&v[1..]).map(|(x, b)| x * b).sum::<f64>()
    }
}

/// Fitted linear conditional quantile `alpha + xᵀ beta` at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQuantileFit {
    pub tau: QuantileLevel,
    pub alpha: f64,
    pub beta: Vec<f64>,
    /// Mean pinball loss over the training sample.
    #[serde(default)]
    pub objective: f64,
}

impl LinearQuantileFit {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        predict_linear(self, x)
    }

    /// Residuals `y_i - alpha - x_iᵀ beta` on a dataset.
    pub fn residuals(&self, data: &Dataset) -> Vec<f64> {
        let theta = self.theta();
        (0..data.n())
            .map(|i| data.response()[i] - data.aug_dot(i, &theta))
            .collect()
    }

    fn theta(&self) -> Vec<f64> {
        std::iter::once(self.alpha)
            .chain(self.beta.iter().copied())
            .collect()
    }
}

/// `ρ_τ(u) = u (τ - 1{u ≤ 0})`.
pub fn pinball_loss(u: f64, tau: QuantileLevel) -> Result<f64> {
    if !u.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite residual {u}")));
    }
    Ok(check(u, tau.value()))
}

#[inline]
fn check(u: f64, tau: f64) -> f64 {
    if u > 0.0 {
        u * tau
    } else {
        u * (tau - 1.0)
    }
}

/// Mean pinball loss of residuals.
pub fn mean_pinball(residuals: &[f64], tau: QuantileLevel) -> f64 {
    let t = tau.value();
    residuals.iter().map(|&u| check(u, t)).sum::<f64>() / residuals.len() as f64
}

pub fn predict_linear(fit: &LinearQuantileFit, x: &[f64]) -> Result<f64> {
    if x.len() != fit.beta.len() {
        return Err(Error::InvalidInput(format!(
            "covariate vector has length {}, fit expects {}",
            x.len(),
            fit.beta.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite covariate".into()));
    }
    Ok(fit.alpha + x.iter().zip(&fit.beta).map(|(a, b)| a * b).sum::<f64>())
}

pub fn fit_quantile_regression(data: &Dataset, tau: QuantileLevel) -> Result<LinearQuantileFit> {
    Solver::default().fit(data, tau)
}

pub fn fit_quantile_path(data: &Dataset, levels: &[QuantileLevel]) -> Result<Vec<LinearQuantileFit>> {
    Solver::default().fit_path(data, levels)
}

/// Exact vertex-descent solver for linear quantile regression.
#[derive(Debug, Clone, Copy)]
pub struct Solver {
    pub max_iter: usize,
}

impl Default for Solver {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl Solver {
    pub fn fit(&self, data: &Dataset, tau: QuantileLevel) -> Result<LinearQuantileFit> {
        let basis = initial_basis(data, tau.value())?;
        self.descend(data, tau, basis).map(|(fit, _)| fit)
    }

    /// Fits each level in order, warm-starting from the previous optimal vertex.
    pub fn fit_path(&self, data: &Dataset, levels: &[QuantileLevel]) -> Result<Vec<LinearQuantileFit>> {
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("levels must be strictly increasing".into()));
        }
        let mut fits = Vec::with_capacity(levels.len());
        let mut basis: Option<Vec<usize>> = None;
        for &tau in levels {
            let start = match basis.take() {
                Some(b) => b,
                None => initial_basis(data, tau.value()).map_err(|e| e.at_level(tau.value()))?,
            };
            let (fit, end) = self
                .descend(data, tau, start)
                .map_err(|e| e.at_level(tau.value()))?;
            basis = Some(end);
            fits.push(fit);
        }
        Ok(fits)
    }

    fn descend(
        &self,
        data: &Dataset,
        tau: QuantileLevel,
        mut basis: Vec<usize>,
    ) -> Result<(LinearQuantileFit, Vec<usize>)> {
        let t = tau.value();
        let n = data.n();
        let m = data.p() + 1;
        let y = data.response();
        let scale = y.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let zero_tol = ZERO_RESIDUAL_RTOL * scale;

        let mut theta = basis_solution(data, &basis).ok_or(Error::DegenerateDesign)?;
        let mut resid = vec![0.0; n];
        let mut a = vec![0.0; n];
        let mut best_dir = vec![0.0; m];
        let mut breaks: Vec<(f64, f64, usize)> = Vec::with_capacity(n);

        for iteration in 0..self.max_iter {
            for (i, r) in resid.iter_mut().enumerate() {
                *r = y[i] - data.aug_dot(i, &theta);
            }
            let zero: Vec<usize> = (0..n).filter(|&i| resid[i].abs() <= zero_tol).collect();
            if zero.len() == n {
                break;
            }

            // Candidate rays: one per rank-p subset of the zero-residual rows.
            let rays = candidate_rays(data, &zero, &basis)
                .ok_or(Error::SolverFailure { iterations: iteration })?;
            let mut best: Option<(f64, usize)> = None;
            for (ri, dir) in rays.iter().enumerate() {
                for sign in [1.0, -1.0] {
                    let mut slope = 0.0;
                    let mut mass = 0.0;
                    for i in 0..n {
                        let ai = sign * data.aug_dot(i, &dir.direction);
                        mass += ai.abs();
                        slope += if resid[i].abs() <= zero_tol {
                            ((1.0 - t) * ai).max(-t * ai)
                        } else if resid[i] > 0.0 {
                            -t * ai
                        } else {
                            (1.0 - t) * ai
                        };
                    }
                    if slope < -SLOPE_RTOL * mass && best.is_none_or(|(s, _)| slope < s) {
                        best = Some((slope, 2 * ri + usize::from(sign < 0.0)));
                    }
                }
            }
            let Some((slope0, code)) = best else {
                return Ok((finish(data, tau, &theta), basis));
            };
            let ray = &rays[code / 2];
            let sign = if code % 2 == 0 { 1.0 } else { -1.0 };
            for (d, v) in best_dir.iter_mut().zip(&ray.direction) {
                *d = sign * v;
            }

            // Exact line search: walk breakpoints until the slope turns non-negative.
            breaks.clear();
            for i in 0..n {
                a[i] = data.aug_dot(i, &best_dir);
                if resid[i].abs() > zero_tol && a[i] != 0.0 {
                    let step = resid[i] / a[i];
                    if step > 0.0 {
                        breaks.push((step, a[i].abs(), i));
                    }
                }
            }
            breaks.sort_by(|l, r| l.0.total_cmp(&r.0).then(l.2.cmp(&r.2)));
            let mut slope = slope0;
            let mut stop = None;
            for &(step, weight, i) in &breaks {
                slope += weight;
                if slope >= 0.0 {
                    stop = Some((step, i));
                    break;
                }
            }
            let Some((step, entering)) = stop else {
                return Err(Error::SolverFailure { iterations: iteration });
            };

            let mut next: Vec<usize> = ray.support.clone();
            next.push(entering);
            match basis_solution(data, &next) {
                Some(sol) => theta = sol,
                None => {
                    for (th, d) in theta.iter_mut().zip(&best_dir) {
                        *th += step * d;
                    }
                }
            }
            basis = next;
        }

        // Either the loop ran out or every residual is zero (optimal).
        for (i, r) in resid.iter_mut().enumerate() {
            *r = y[i] - data.aug_dot(i, &theta);
        }
        if resid.iter().all(|r| r.abs() <= zero_tol) {
            return Ok((finish(data, tau, &theta), basis));
        }
        Err(Error::SolverFailure {
            iterations: self.max_iter,
        })
    }
}

struct Ray {
    direction: Vec<f64>,
    support: Vec<usize>,
}

fn candidate_rays(data: &Dataset, zero: &[usize], basis: &[usize]) -> Option<Vec<Ray>> {
    let p = data.p();
    // Nondegenerate vertex: the p+1 basis edges.
    let pool: Vec<usize> = if zero.len() <= p + 1 {
        basis.to_vec()
    } else {
        zero.to_vec()
    };
    let count = binomial(pool.len(), p);
    if count > MAX_DEGENERATE_RAYS {
        return None;
    }
    let mut rays = Vec::new();
    let mut idx: Vec<usize> = (0..p).collect();
    loop {
        let support: Vec<usize> = idx.iter().map(|&k| pool[k]).collect();
        if let Some(direction) = null_direction(data, &support) {
            rays.push(Ray { direction, support });
        }
        if !next_combination(&mut idx, pool.len()) {
            break;
        }
    }
    Some(rays)
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

// Unit vector orthogonal to the augmented rows in `support` (p rows in R^{p+1}),
// via signed cofactors. None when the rows are linearly dependent.
fn null_direction(data: &Dataset, support: &[usize]) -> Option<Vec<f64>> {
    let m = data.p() + 1;
    let k = support.len();
    debug_assert_eq!(k + 1, m);
    let mut dir = vec![0.0; m];
    let mut minor = vec![0.0; k * k];
    for (col, d) in dir.iter_mut().enumerate() {
        for (r, &i) in support.iter().enumerate() {
            let mut c = 0;
            for j in 0..m {
                if j != col {
                    minor[r * k + c] = data.aug(i, j);
                    c += 1;
                }
            }
        }
        let det = determinant(&mut minor, k);
        *d = if col % 2 == 0 { det } else { -det };
    }
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let bound: f64 = support
        .iter()
        .map(|&i| (0..m).map(|j| data.aug(i, j).powi(2)).sum::<f64>().sqrt())
        .product();
    if norm <= PIVOT_RTOL * bound || norm == 0.0 {
        return None;
    }
    dir.iter_mut().for_each(|v| *v /= norm);
    Some(dir)
}

fn determinant(a: &mut [f64], k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut det = 1.0;
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&x, &y| a[x * k + col].abs().total_cmp(&a[y * k + col].abs()))
            .unwrap();
        if a[piv * k + col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            for j in 0..k {
                a.swap(piv * k + j, col * k + j);
            }
            det = -det;
        }
        let d = a[col * k + col];
        det *= d;
        for r in col + 1..k {
            let f = a[r * k + col] / d;
            for j in col..k {
                a[r * k + j] -= f * a[col * k + j];
            }
        }
    }
    det
}

/// Solves `A x = b` in place for a dense `m × m` system; None if singular
/// relative to the row scale.
fn solve_dense(a: &mut [f64], b: &mut [f64], m: usize) -> Option<()> {
    let scale = a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&x, &y| a[x * m + col].abs().total_cmp(&a[y * m + col].abs()))
            .unwrap();
        if a[piv * m + col].abs() <= PIVOT_RTOL * scale {
            return None;
        }
        if piv != col {
            for j in 0..m {
                a.swap(piv * m + j, col * m + j);
            }
            b.swap(piv, col);
        }
        let d = a[col * m + col];
        for r in col + 1..m {
            let f = a[r * m + col] / d;
            if f != 0.0 {
                for j in col..m {
                    a[r * m + j] -= f * a[col * m + j];
                }
                b[r] -= f * b[col];
            }
        }
    }
    for col in (0..m).rev() {
        let mut s = b[col];
        for j in col + 1..m {
            s -= a[col * m + j] * b[j];
        }
        b[col] = s / a[col * m + col];
    }
    Some(())
}

// Hyperplane through the basis rows.
fn basis_solution(data: &Dataset, basis: &[usize]) -> Option<Vec<f64>> {
    let m = data.p() + 1;
    let mut a = vec![0.0; m * m];
    let mut b = vec![0.0; m];
    for (r, &i) in basis.iter().enumerate() {
        for j in 0..m {
            a[r * m + j] = data.aug(i, j);
        }
        b[r] = data.response()[i];
    }
    solve_dense(&mut a, &mut b, m).map(|_| b)
}

// Least squares, intercept shifted to the tau-quantile of the residuals, then
// the p+1 closest linearly independent rows.
fn initial_basis(data: &Dataset, tau: f64) -> Result<Vec<usize>> {
    let n = data.n();
    let m = data.p() + 1;
    let mut gram = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            let xj = data.aug(i, j);
            rhs[j] += xj * data.response()[i];
            for l in 0..m {
                gram[j * m + l] += xj * data.aug(i, l);
            }
        }
    }
    let mut theta = rhs;
    if solve_dense(&mut gram, &mut theta, m).is_none() {
        return Err(Error::DegenerateDesign);
    }
    let resid: Vec<f64> = (0..n)
        .map(|i| data.response()[i] - data.aug_dot(i, &theta))
        .collect();
    let mut sorted = resid.clone();
    sorted.sort_by(f64::total_cmp);
    let shift = sorted[((tau * n as f64).floor() as usize).min(n - 1)];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        (resid[i] - shift)
            .abs()
            .total_cmp(&(resid[j] - shift).abs())
            .then(i.cmp(&j))
    });

    // Greedy selection with Gram-Schmidt on the augmented rows.
    let mut chosen = Vec::with_capacity(m);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(m);
    for i in order {
        let row: Vec<f64> = (0..m).map(|j| data.aug(i, j)).collect();
        let norm0 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = row;
        for q in &ortho {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 * norm0 {
            v.iter_mut().for_each(|x| *x /= norm);
            ortho.push(v);
            chosen.push(i);
            if chosen.len() == m {
                return Ok(chosen);
            }
        }
    }
    Err(Error::DegenerateDesign)
}

fn finish(data: &Dataset, tau: QuantileLevel, theta: &[f64]) -> LinearQuantileFit {
    let t = tau.value();
    let n = data.n();
    let loss: f64 = (0..n)
        .map(|i| check(data.response()[i] - data.aug_dot(i, theta), t))
        .sum();
    LinearQuantileFit {
        tau,
        alpha: theta[0],
        beta: theta[1..].to_vec(),
        objective: loss / n as f64,
    }
}
