//! Predictor screening: sample skewness, log transforms and binary balance.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("skewness undefined: sample has zero variance")]
    ZeroVariance,
    #[error("skewness type {kind} needs at least {needed} values, got {got}")]
    TooFewValues { kind: u8, needed: usize, got: usize },
    #[error("log1p transform needs non-negative values, got {0}")]
    NegativeValue(f64),
    #[error("unknown skewness type {0}; expected 1, 2 or 3")]
    UnknownSkewType(u8),
    #[error("unknown variable kind `{0}`; expected binary or continuous")]
    UnknownKind(String),
    #[error("binary variable `{name}` has non 0/1 value {value}")]
    NotBinary { name: String, value: f64 },
    #[error("variable `{0}` appears more than once")]
    DuplicateVariable(String),
}

/// Sample skewness estimators, numbered as in R's `e1071::skewness`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum SkewType {
    /// g1 = m3 / m2^(3/2)
    Type1,
    /// G1 = g1 * sqrt(n(n-1)) / (n-2)
    Type2,
    /// b1 = g1 * ((n-1)/n)^(3/2)
    #[default]
    Type3,
}

impl TryFrom<u8> for SkewType {
    type Error = DiagnosticsError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(SkewType::Type1),
            2 => Ok(SkewType::Type2),
            3 => Ok(SkewType::Type3),
            other => Err(DiagnosticsError::UnknownSkewType(other)),
        }
    }
}

impl From<SkewType> for u8 {
    fn from(t: SkewType) -> u8 {
        match t {
            SkewType::Type1 => 1,
            SkewType::Type2 => 2,
            SkewType::Type3 => 3,
        }
    }
}

pub fn skewness(values: &[f64], kind: SkewType) -> Result<f64, DiagnosticsError> {
    let n = values.len();
    let needed = match kind {
        SkewType::Type1 => 2,
        SkewType::Type2 | SkewType::Type3 => 3,
    };
    if n < needed {
        return Err(DiagnosticsError::TooFewValues {
            kind: kind.into(),
            needed,
            got: n,
        });
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (mut s2, mut s3) = (0.0, 0.0);
    for &x in values {
        let d = x - mean;
        s2 += d * d;
        s3 += d * d * d;
    }
    let m2 = s2 / nf;
    let m3 = s3 / nf;
    // relative guard: constant samples leave only rounding noise in m2
    let scale = values.iter().fold(0.0_f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    if m2 <= (scale * f64::EPSILON).powi(2) * nf {
        return Err(DiagnosticsError::ZeroVariance);
    }
    let g1 = m3 / m2.powf(1.5);
    Ok(match kind {
        SkewType::Type1 => g1,
        SkewType::Type2 => g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0),
        SkewType::Type3 => g1 * ((nf - 1.0) / nf).powf(1.5),
    })
}

pub fn log1p_transform(values: &[f64]) -> Result<Vec<f64>, DiagnosticsError> {
    values
        .iter()
        .map(|&x| {
            if x < 0.0 || x.is_nan() {
                Err(DiagnosticsError::NegativeValue(x))
            } else {
                Ok(x.ln_1p())
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Binary,
    Continuous,
}

impl FromStr for VariableKind {
    type Err = DiagnosticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "binary" | "b" => Ok(VariableKind::Binary),
            "continuous" | "c" => Ok(VariableKind::Continuous),
            _ => Err(DiagnosticsError::UnknownKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableColumn {
    pub name: String,
    pub kind: VariableKind,
    pub values: Vec<f64>,
}

impl VariableColumn {
    pub fn new(name: &str, kind: VariableKind, values: Vec<f64>) -> Self {
        VariableColumn {
            name: name.to_string(),
            kind,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScreeningConfig {
    pub skew_threshold: f64,
    pub minority_threshold: f64,
    pub skew_type: SkewType,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        ScreeningConfig {
            skew_threshold: 3.0,
            minority_threshold: 0.05,
            skew_type: SkewType::Type3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreeningDecision {
    Retained,
    TransformedRetained,
    Excluded,
}

impl ScreeningDecision {
    pub fn is_retained(self) -> bool {
        self != ScreeningDecision::Excluded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableScreening {
    pub name: String,
    pub kind: VariableKind,
    pub raw_skewness: Option<f64>,
    pub transformed_skewness: Option<f64>,
    pub minority_fraction: Option<f64>,
    pub decision: ScreeningDecision,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub config: ScreeningConfig,
    /// Sorted by variable name.
    pub variables: Vec<VariableScreening>,
}

impl ScreeningReport {
    pub fn get(&self, name: &str) -> Option<&VariableScreening> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn retained(&self) -> impl Iterator<Item = &VariableScreening> {
        self.variables.iter().filter(|v| v.decision.is_retained())
    }

    pub fn render_table(&self) -> String {
        let fmt = |x: Option<f64>| x.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:<10} {:>9} {:>9} {:>9}  {:<20} reason",
            "variable", "kind", "skew", "skew_log", "minority", "decision"
        );
        for v in &self.variables {
            let kind = match v.kind {
                VariableKind::Binary => "binary",
                VariableKind::Continuous => "continuous",
            };
            let decision = match v.decision {
                ScreeningDecision::Retained => "retained",
                ScreeningDecision::TransformedRetained => "transformed+retained",
                ScreeningDecision::Excluded => "excluded",
            };
            let _ = writeln!(
                out,
                "{:<28} {:<10} {:>9} {:>9} {:>9}  {:<20} {}",
                v.name,
                kind,
                fmt(v.raw_skewness),
                fmt(v.transformed_skewness),
                fmt(v.minority_fraction),
                decision,
                v.reason
            );
        }
        out
    }
}

fn screen_one(col: &VariableColumn, config: &ScreeningConfig) -> Result<VariableScreening, DiagnosticsError> {
    let mut s = VariableScreening {
        name: col.name.clone(),
        kind: col.kind,
        raw_skewness: None,
        transformed_skewness: None,
        minority_fraction: None,
        decision: ScreeningDecision::Retained,
        reason: String::new(),
    };
    match col.kind {
        VariableKind::Binary => {
            if let Some(&bad) = col.values.iter().find(|v| **v != 0.0 && **v != 1.0) {
                return Err(DiagnosticsError::NotBinary {
                    name: col.name.clone(),
                    value: bad,
                });
            }
            let ones = col.values.iter().filter(|v| **v == 1.0).count() as f64;
            let n = col.values.len().max(1) as f64;
            let minority = (ones / n).min(1.0 - ones / n);
            s.minority_fraction = Some(minority);
            if minority < config.minority_threshold {
                s.decision = ScreeningDecision::Excluded;
                s.reason = format!(
                    "imbalanced: minority fraction {:.4} below {}",
                    minority, config.minority_threshold
                );
            } else {
                s.reason = "balanced".into();
            }
        }
        VariableKind::Continuous => {
            let raw = match skewness(&col.values, config.skew_type) {
                Ok(v) => v,
                Err(e @ (DiagnosticsError::ZeroVariance | DiagnosticsError::TooFewValues { .. })) => {
                    s.decision = ScreeningDecision::Excluded;
                    s.reason = format!("no usable skewness: {e}");
                    return Ok(s);
                }
                Err(e) => return Err(e),
            };
            s.raw_skewness = Some(raw);
            if raw.abs() <= config.skew_threshold {
                s.reason = format!("|skew| {:.3} within {}", raw.abs(), config.skew_threshold);
                return Ok(s);
            }
            let logged = log1p_transform(&col.values)?;
            let after = skewness(&logged, config.skew_type)?;
            s.transformed_skewness = Some(after);
            if after.abs() > config.skew_threshold {
                s.decision = ScreeningDecision::Excluded;
                s.reason = format!(
                    "still skewed after log1p: |skew| {:.3} above {}",
                    after.abs(),
                    config.skew_threshold
                );
            } else {
                s.decision = ScreeningDecision::TransformedRetained;
                s.reason = format!("log1p reduced |skew| from {:.3} to {:.3}", raw.abs(), after.abs());
            }
        }
    }
    Ok(s)
}

/// Screen every variable. Continuous variables with |skew| above the threshold
/// are log1p-transformed and excluded if still above it; binary variables
/// whose minority share is below the minority threshold are excluded.
pub fn screen_predictors(
    columns: &[VariableColumn],
    config: &ScreeningConfig,
) -> Result<ScreeningReport, DiagnosticsError> {
    let mut by_name: BTreeMap<&str, VariableScreening> = BTreeMap::new();
    for col in columns {
        if by_name.contains_key(col.name.as_str()) {
            return Err(DiagnosticsError::DuplicateVariable(col.name.clone()));
        }
        by_name.insert(&col.name, screen_one(col, config)?);
    }
    Ok(ScreeningReport {
        config: config.clone(),
        variables: by_name.into_values().collect(),
    })
}

/// Apply the screening outcome to a column: log1p when the variable was
/// transformed, `None` when it was excluded.
pub fn apply_screening(report: &ScreeningReport, column: &VariableColumn) -> Option<Vec<f64>> {
    match report.get(&column.name)?.decision {
        ScreeningDecision::Retained => Some(column.values.clone()),
        ScreeningDecision::TransformedRetained => log1p_transform(&column.values).ok(),
        ScreeningDecision::Excluded => None,
    }
}
