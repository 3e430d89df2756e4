use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::eval::Method;
use crate::evt::DEFAULT_NU;
use crate::model::{KChoice, DEFAULT_TARGET_LEVELS};
use crate::qr::QuantileLevel;

/// Inclusive calendar-day interval, written `YYYY-MM-DD:YYYY-MM-DD`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidInput(format!("date range {start}:{end} is reversed")));
        }
        Ok(Self { start, end })
    }

    #[inline]
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

impl FromStr for DateRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("date range `{s}` must be START:END")))?;
        let parse = |d: &str| {
            NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d")
                .map_err(|e| Error::InvalidInput(format!("bad date `{d}`: {e}")))
        };
        Self::new(parse(a)?, parse(b)?)
    }
}

impl std::fmt::Display for DateRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

impl Serialize for DateRange {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DateRange {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `k` as written in configs: an integer or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KSetting {
    #[default]
    Auto,
    Fixed(usize),
}

impl From<KSetting> for KChoice {
    fn from(k: KSetting) -> Self {
        match k {
            KSetting::Auto => KChoice::Auto,
            KSetting::Fixed(k) => KChoice::Fixed(k),
        }
    }
}

impl FromStr for KSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("auto") {
            return Ok(KSetting::Auto);
        }
        s.trim()
            .parse()
            .map(KSetting::Fixed)
            .map_err(|_| Error::InvalidInput(format!("k must be an integer or `auto`, got `{s}`")))
    }
}

impl Serialize for KSetting {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            KSetting::Auto => s.serialize_str("auto"),
            KSetting::Fixed(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for KSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(usize),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(k) => Ok(KSetting::Fixed(k)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When both ranges are absent the rows are split in half by count.
    pub train: Option<DateRange>,
    pub test: Option<DateRange>,
    pub levels: Vec<QuantileLevel>,
    pub nu: f64,
    pub k: KSetting,
    pub seed: u64,
    pub methods: Vec<Method>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: None,
            test: None,
            levels: DEFAULT_TARGET_LEVELS
                .iter()
                .map(|&t| QuantileLevel::new(t).expect("default levels are valid"))
                .collect(),
            nu: DEFAULT_NU,
            k: KSetting::Auto,
            seed: 0,
            methods: vec![Method::Conventional, Method::Extremal],
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidInput("no quantile levels configured".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidInput("no methods configured".into()));
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(Error::InvalidConfig(format!("nu = {} is outside (0, 1)", self.nu)));
        }
        match (self.train, self.test) {
            (Some(train), Some(test)) => {
                if train.end >= test.start {
                    return Err(Error::InvalidInput(format!(
                        "train range {train} must end before test range {test} starts"
                    )));
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::InvalidInput(
                    "train and test ranges must be given together".into(),
                ))
            }
        }
        Ok(())
    }

    /// Levels sorted ascending without duplicates.
    pub fn sorted_levels(&self) -> Vec<QuantileLevel> {
        let mut levels = self.levels.clone();
        levels.sort_by(|a, b| a.value().total_cmp(&b.value()));
        levels.dedup();
        levels
    }

    pub fn has(&self, method: Method) -> bool {
        self.methods.contains(&method)
    }
}

/// Comma-separated levels, e.g. `0.97,0.999,0.9999`.
pub fn parse_levels(s: &str) -> Result<Vec<QuantileLevel>> {
    s.split(',')
        .map(|t| {
            let v: f64 = t
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad level `{t}`")))?;
            QuantileLevel::new(v)
        })
        .collect()
}

pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    s.split(',').map(str::parse).collect()
}
