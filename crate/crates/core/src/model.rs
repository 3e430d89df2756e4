//! Fitted extremal quantile regression model and its JSON form.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::evt::{
    default_k_candidates, intermediate_levels, pooled_over_rows, quantile_path, select_k,
    weissman_extrapolate, LevelGrid, QPath, TailConfig, TailFits,
};
use crate::qr::{fit_quantile_regression, Dataset, LinearQuantileFit, QuantileLevel, Solver};

pub const SCHEMA_VERSION: u64 = 1;

/// Levels used by the streamflow workflow.
pub const DEFAULT_TARGET_LEVELS: [f64; 3] = [0.97, 0.999, 0.9999];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KChoice {
    Fixed(usize),
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalQRModel {
    pub schema_version: u64,
    pub p: usize,
    pub cfg: TailConfig,
    pub grid: LevelGrid,
    pub fits: Vec<LinearQuantileFit>,
    pub gamma_pool: f64,
    pub excluded_count: usize,
    pub target_levels: Vec<QuantileLevel>,
    /// Direct fits at each target level, used for fallback predictions.
    pub conventional: Vec<LinearQuantileFit>,
}

/// One extreme quantile prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremePrediction {
    pub value: f64,
    /// True when the q-path base was non-positive and the conventional fit was used.
    pub fallback: bool,
}

pub fn fit_extremal(
    train: &Dataset,
    k: KChoice,
    nu: f64,
    target_levels: &[QuantileLevel],
) -> Result<ExtremalQRModel> {
    let n = train.n();
    let k = match k {
        KChoice::Fixed(k) => k,
        KChoice::Auto => select_k(train, &default_k_candidates(n, nu), nu)?,
    };
    let cfg = TailConfig::new(n, k, nu)?;
    let grid = intermediate_levels(n, &cfg)?;
    let fits = TailFits::fit(train, k, nu)?.fits;
    let (gamma_pool, excluded_count, _) = pooled_over_rows(&fits, &cfg, train.rows())?;

    let mut sorted_targets = target_levels.to_vec();
    sorted_targets.sort_by(|a, b| a.value().total_cmp(&b.value()));
    sorted_targets.dedup();
    let conventional = if sorted_targets.is_empty() {
        Vec::new()
    } else {
        Solver::default().fit_path(train, &sorted_targets)?
    };

    Ok(ExtremalQRModel {
        schema_version: SCHEMA_VERSION,
        p: train.p(),
        cfg,
        grid,
        fits,
        gamma_pool,
        excluded_count,
        target_levels: sorted_targets,
        conventional,
    })
}

impl ExtremalQRModel {
    /// `τ_{n-k}`.
    pub fn tau_base(&self) -> QuantileLevel {
        self.grid.base()
    }

    pub fn quantile_path(&self, x: &[f64]) -> Result<QPath> {
        quantile_path(&self.fits, x)
    }

    pub fn predict(&self, x: &[f64], tau: QuantileLevel) -> Result<ExtremePrediction> {
        predict_extreme(self, x, tau)
    }

    /// Stored conventional fit at exactly `tau`, if any.
    pub fn conventional_fit(&self, tau: QuantileLevel) -> Option<&LinearQuantileFit> {
        self.conventional.iter().find(|f| f.tau == tau)
    }

    /// Extremal prediction above the base level, otherwise the stored
    /// conventional fit flagged as a fallback.
    pub fn predict_or_conventional(&self, x: &[f64], tau: QuantileLevel) -> Result<ExtremePrediction> {
        if tau < self.tau_base() {
            return self.conventional_prediction(x, tau);
        }
        predict_extreme(self, x, tau)
    }

    fn conventional_prediction(&self, x: &[f64], tau: QuantileLevel) -> Result<ExtremePrediction> {
        let fit = self
            .conventional_fit(tau)
            .ok_or(Error::NoFallback { tau: tau.value() })?;
        Ok(ExtremePrediction {
            value: fit.predict(x)?,
            fallback: true,
        })
    }
}

/// Weissman extrapolation of the rearranged q-path base with the pooled index.
pub fn predict_extreme(model: &ExtremalQRModel, x: &[f64], tau: QuantileLevel) -> Result<ExtremePrediction> {
    let tau_base = model.tau_base();
    if tau < tau_base {
        return Err(Error::BelowTail {
            tau: tau.value(),
            tau_base: tau_base.value(),
        });
    }
    let path = model.quantile_path(x)?;
    if !path.positive {
        return model.conventional_prediction(x, tau);
    }
    Ok(ExtremePrediction {
        value: weissman_extrapolate(path.base, tau_base, tau, model.gamma_pool)?,
        fallback: false,
    })
}

pub fn predict_conventional(train: &Dataset, x: &[f64], tau: QuantileLevel) -> Result<f64> {
    fit_quantile_regression(train, tau)?.predict(x)
}

#[derive(Serialize, Deserialize)]
struct FitRecord {
    tau: f64,
    alpha: f64,
    beta: Vec<f64>,
    #[serde(default)]
    objective: f64,
}

impl From<&LinearQuantileFit> for FitRecord {
    fn from(f: &LinearQuantileFit) -> Self {
        Self {
            tau: f.tau.value(),
            alpha: f.alpha,
            beta: f.beta.clone(),
            objective: f.objective,
        }
    }
}

impl FitRecord {
    fn into_fit(self, p: usize) -> Result<LinearQuantileFit> {
        if self.beta.len() != p {
            return Err(Error::InvalidInput(format!(
                "fit at level {} has {} coefficients, expected {p}",
                self.tau,
                self.beta.len()
            )));
        }
        Ok(LinearQuantileFit {
            tau: QuantileLevel::new(self.tau)?,
            alpha: self.alpha,
            beta: self.beta,
            objective: self.objective,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u64,
    n: usize,
    p: usize,
    nu: f64,
    k: usize,
    tau_base: f64,
    gamma_pool: f64,
    excluded_count: usize,
    grid: Vec<f64>,
    fits: Vec<FitRecord>,
    target_levels: Vec<f64>,
    #[serde(default)]
    conventional_fits: Vec<FitRecord>,
}

const REQUIRED_FIELDS: [&str; 11] = [
    "schema_version",
    "n",
    "p",
    "nu",
    "k",
    "tau_base",
    "gamma_pool",
    "excluded_count",
    "grid",
    "fits",
    "target_levels",
];

pub fn serialize_model(model: &ExtremalQRModel) -> Vec<u8> {
    let file = ModelFile {
        schema_version: model.schema_version,
        n: model.cfg.n,
        p: model.p,
        nu: model.cfg.nu,
        k: model.cfg.k,
        tau_base: model.tau_base().value(),
        gamma_pool: model.gamma_pool,
        excluded_count: model.excluded_count,
        grid: model.grid.levels.iter().map(|l| l.value()).collect(),
        fits: model.fits.iter().map(FitRecord::from).collect(),
        target_levels: model.target_levels.iter().map(|l| l.value()).collect(),
        conventional_fits: model.conventional.iter().map(FitRecord::from).collect(),
    };
    let mut bytes = serde_json::to_vec_pretty(&file).expect("model serializes");
    bytes.push(b'\n');
    bytes
}

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::InvalidField {
        field: field.to_string(),
        message: message.into(),
    }
}

fn records(fits: Vec<FitRecord>, p: usize, field: &str) -> Result<Vec<LinearQuantileFit>> {
    fits.into_iter()
        .enumerate()
        .map(|(i, f)| f.into_fit(p).map_err(|e| invalid(&format!("{field}[{i}]"), e.to_string())))
        .collect()
}

pub fn deserialize_model(bytes: &[u8]) -> Result<ExtremalQRModel> {
    let value: Value = serde_json::from_slice(bytes)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::InvalidInput("model file is not a JSON object".into()))?;
    let version = obj
        .get("schema_version")
        .ok_or_else(|| Error::MissingField("schema_version".into()))?
        .as_u64()
        .ok_or_else(|| invalid("schema_version", "not an unsigned integer"))?;
    if version != SCHEMA_VERSION {
        return Err(Error::Version(version));
    }
    if let Some(missing) = REQUIRED_FIELDS.iter().find(|f| !obj.contains_key(**f)) {
        return Err(Error::MissingField((*missing).to_string()));
    }
    let file: ModelFile = serde_path_to_error::deserialize(value).map_err(|e| {
        let field = e.path().to_string();
        invalid(&field, e.into_inner().to_string())
    })?;

    let cfg = TailConfig::new(file.n, file.k, file.nu)?;
    let grid = intermediate_levels(file.n, &cfg)?;
    let stored: Vec<f64> = grid.levels.iter().map(|l| l.value()).collect();
    if stored != file.grid {
        return Err(invalid("grid", "does not match n, k and nu"));
    }
    if file.tau_base != grid.base().value() {
        return Err(invalid("tau_base", "does not match the grid"));
    }
    if file.fits.len() != grid.len() {
        return Err(invalid(
            "fits",
            format!("{} fits for a grid of {} levels", file.fits.len(), grid.len()),
        ));
    }
    if !(file.gamma_pool >= 0.0 && file.gamma_pool.is_finite()) {
        return Err(invalid("gamma_pool", format!("{} must be finite and >= 0", file.gamma_pool)));
    }
    let p = file.p;
    let fits = records(file.fits, p, "fits")?;
    if fits.iter().zip(&grid.levels).any(|(f, l)| f.tau != *l) {
        return Err(invalid("fits", "levels do not match the grid"));
    }
    let conventional = records(file.conventional_fits, p, "conventional_fits")?;
    let target_levels = file
        .target_levels
        .into_iter()
        .enumerate()
        .map(|(i, t)| QuantileLevel::new(t).map_err(|e| invalid(&format!("target_levels[{i}]"), e.to_string())))
        .collect::<Result<Vec<_>>>()?;

    Ok(ExtremalQRModel {
        schema_version: version,
        p,
        cfg,
        grid,
        fits,
        gamma_pool: file.gamma_pool,
        excluded_count: file.excluded_count,
        target_levels,
        conventional,
    })
}
