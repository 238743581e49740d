//! Binary logistic regression fitted by iteratively reweighted least squares,
//! with Wald inference, design-matrix encoding and variance inflation factors.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

pub const INTERCEPT: &str = "(Intercept)";

/// The control block shared by the canned models.
pub const CONTROL_BLOCK: [&str; 7] = [
    "core_member",
    "contrib_rate_author",
    "followers",
    "num_languages",
    "contrib_follow_integrator",
    "social_strength",
    "repo_size",
];

#[derive(Debug, Error, PartialEq)]
pub enum GlmError {
    #[error("variable `{0}` not found in frame")]
    MissingVariable(String),
    #[error("variable `{0}` is categorical but has no declared levels")]
    UndeclaredLevels(String),
    #[error("variable `{variable}` has level `{level}` outside the declared levels")]
    UnknownLevel { variable: String, level: String },
    #[error("variable `{0}` declared categorical but stored as numeric")]
    NotCategorical(String),
    #[error("outcome `{outcome}` has value {value}; expected 0 or 1")]
    OutcomeNotBinary { outcome: String, value: f64 },
    #[error("predictor column `{0}` is constant")]
    ConstantColumn(String),
    #[error("need more observations ({n}) than parameters ({p})")]
    TooFewRows { n: usize, p: usize },
    #[error("design matrix is rank deficient; linearly dependent columns: {columns:?}")]
    RankDeficient { columns: Vec<String> },
    #[error("complete or quasi-complete separation detected at column `{column}` after {iterations} iterations")]
    Separation { column: String, iterations: usize },
    #[error("VIF needs at least two non-intercept columns, got {0}")]
    TooFewColumns(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl Column {
    fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }
}

/// Named columns of equal length; `None` marks a missing value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Frame {
    columns: BTreeMap<String, Column>,
    nrows: usize,
}

impl Frame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    /// Add or replace a column. Panics if its length differs from existing columns.
    pub fn insert(&mut self, name: &str, column: Column) {
        if self.columns.is_empty() {
            self.nrows = column.len();
        }
        assert_eq!(column.len(), self.nrows, "column `{name}` has wrong length");
        self.columns.insert(name.to_string(), column);
    }

    pub fn insert_numeric(&mut self, name: &str, values: Vec<Option<f64>>) {
        self.insert(name, Column::Numeric(values));
    }

    pub fn insert_categorical(&mut self, name: &str, values: Vec<Option<String>>) {
        self.insert(name, Column::Categorical(values));
    }

    pub fn get(&self, name: &str) -> Option<&Column> {
        self.columns.get(name)
    }

    pub fn numeric(&self, name: &str) -> Option<&[Option<f64>]> {
        match self.columns.get(name)? {
            Column::Numeric(v) => Some(v),
            Column::Categorical(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub outcome: String,
    pub predictors: Vec<String>,
    /// Levels of each categorical predictor, reference level first.
    pub categorical_levels: BTreeMap<String, Vec<String>>,
    /// Transform applied upstream to each predictor, e.g. `log1p`.
    pub transforms: BTreeMap<String, String>,
}

/// Model 1: short-term outcome on repository PS and controls. Model 2: long
/// term outcome on the same predictors. Model 3: Model 2 plus the short-term
/// outcome as a predictor.
pub fn canned_model(number: u8) -> Option<ModelSpec> {
    let (outcome, prior) = match number {
        1 => ("sustainedp_or_not_12", false),
        2 => ("recent_sustainedp_or_not", false),
        3 => ("recent_sustainedp_or_not", true),
        _ => return None,
    };
    let mut predictors = Vec::new();
    if prior {
        predictors.push("sustainedp_or_not_12".to_string());
    }
    predictors.push("PS_index_repository".to_string());
    predictors.extend(CONTROL_BLOCK.iter().map(|s| s.to_string()));
    let levels = ["small", "medium", "large"].iter().map(|s| s.to_string()).collect();
    Some(ModelSpec {
        name: format!("Model {number}"),
        outcome: outcome.to_string(),
        predictors,
        categorical_levels: BTreeMap::from([("repo_size".to_string(), levels)]),
        transforms: BTreeMap::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub column_names: Vec<String>,
    /// Rows dropped for missing values.
    pub dropped_rows: usize,
}

impl DesignMatrix {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, column_names: Vec<String>) -> Self {
        DesignMatrix {
            x,
            y,
            column_names,
            dropped_rows: 0,
        }
    }
}

enum Encoded<'a> {
    Numeric(&'a [Option<f64>]),
    Dummies {
        values: &'a [Option<String>],
        levels: &'a [String],
    },
}

pub fn encode_design(frame: &Frame, spec: &ModelSpec) -> Result<DesignMatrix, GlmError> {
    let outcome = match frame.get(&spec.outcome) {
        Some(Column::Numeric(v)) => v,
        Some(Column::Categorical(_)) => return Err(GlmError::NotCategorical(spec.outcome.clone())),
        None => return Err(GlmError::MissingVariable(spec.outcome.clone())),
    };
    let mut names = vec![INTERCEPT.to_string()];
    let mut encoders = Vec::new();
    for pred in &spec.predictors {
        let column = frame.get(pred).ok_or_else(|| GlmError::MissingVariable(pred.clone()))?;
        match (column, spec.categorical_levels.get(pred)) {
            (Column::Numeric(v), None) => {
                names.push(pred.clone());
                encoders.push(Encoded::Numeric(v));
            }
            (Column::Numeric(_), Some(_)) => return Err(GlmError::NotCategorical(pred.clone())),
            (Column::Categorical(_), None) => return Err(GlmError::UndeclaredLevels(pred.clone())),
            (Column::Categorical(v), Some(levels)) => {
                for level in levels.iter().skip(1) {
                    names.push(format!("{pred} ({level})"));
                }
                encoders.push(Encoded::Dummies { values: v, levels });
            }
        }
    }

    let p = names.len();
    let mut data: Vec<f64> = Vec::with_capacity(frame.nrows() * p);
    let mut y = Vec::with_capacity(frame.nrows());
    let mut dropped = 0;
    let mut row = Vec::with_capacity(p);
    'rows: for i in 0..frame.nrows() {
        let Some(outcome_value) = outcome[i] else {
            dropped += 1;
            continue;
        };
        if outcome_value != 0.0 && outcome_value != 1.0 {
            return Err(GlmError::OutcomeNotBinary {
                outcome: spec.outcome.clone(),
                value: outcome_value,
            });
        }
        row.clear();
        row.push(1.0);
        for (enc, pred) in encoders.iter().zip(&spec.predictors) {
            match enc {
                Encoded::Numeric(v) => match v[i] {
                    Some(x) if x.is_finite() => row.push(x),
                    _ => {
                        dropped += 1;
                        continue 'rows;
                    }
                },
                Encoded::Dummies { values, levels } => {
                    let Some(value) = &values[i] else {
                        dropped += 1;
                        continue 'rows;
                    };
                    let Some(pos) = levels.iter().position(|l| l == value) else {
                        return Err(GlmError::UnknownLevel {
                            variable: pred.clone(),
                            level: value.clone(),
                        });
                    };
                    row.extend((1..levels.len()).map(|k| if k == pos { 1.0 } else { 0.0 }));
                }
            }
        }
        data.extend_from_slice(&row);
        y.push(outcome_value);
    }
    let n = y.len();
    let x = DMatrix::from_row_slice(n, p, &data);
    for (j, name) in names.iter().enumerate().skip(1) {
        let col = x.column(j);
        if n == 0 || col.iter().all(|v| *v == col[0]) {
            return Err(GlmError::ConstantColumn(name.clone()));
        }
    }
    Ok(DesignMatrix {
        x,
        y: DVector::from_vec(y),
        column_names: names,
        dropped_rows: dropped,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal basis grown by modified Gram-Schmidt with one
/// re-orthogonalisation pass.
#[derive(Default)]
struct Basis {
    vectors: Vec<Vec<f64>>,
}

impl Basis {
    fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut r = v.to_vec();
        for _ in 0..2 {
            for q in &self.vectors {
                let c = dot(q, &r);
                r.iter_mut().zip(q).for_each(|(ri, qi)| *ri -= c * qi);
            }
        }
        r
    }

    /// Adds `v` unless it lies (numerically) in the current span.
    fn try_push(&mut self, v: &[f64]) -> bool {
        let norm = dot(v, v).sqrt();
        if norm == 0.0 {
            return false;
        }
        let r = self.residual(v);
        let rn = dot(&r, &r).sqrt();
        if rn <= 1e-9 * norm {
            return false;
        }
        self.vectors.push(r.into_iter().map(|x| x / rn).collect());
        true
    }
}

fn columns_of(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.column_iter().map(|c| c.iter().copied().collect()).collect()
}

/// Names of columns that are linear combinations of earlier columns.
pub fn dependent_columns(design: &DesignMatrix) -> Vec<String> {
    let mut basis = Basis::default();
    columns_of(&design.x)
        .iter()
        .zip(&design.column_names)
        .filter(|(col, _)| !basis.try_push(col))
        .map(|(_, name)| name.clone())
        .collect()
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^eta) without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of `beta`.
pub fn log_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter().zip(y.iter()).map(|(e, yi)| yi * e - softplus(*e)).sum()
}

/// Gradient of the log-likelihood, X'(y - p).
pub fn score(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
    let resid = DVector::from_iterator(y.len(), (x * beta).iter().zip(y.iter()).map(|(e, yi)| yi - sigmoid(*e)));
    x.tr_mul(&resid)
}

/// Fisher information X'WX with W = p(1 - p).
pub fn fisher_information(x: &DMatrix<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
    let eta = x * beta;
    let mut weighted = x.clone();
    for (i, e) in eta.iter().enumerate() {
        let mu = sigmoid(*e);
        weighted.row_mut(i).scale_mut(mu * (1.0 - mu));
    }
    x.tr_mul(&weighted)
}

pub fn predict(x: &DMatrix<f64>, beta: &DVector<f64>) -> DVector<f64> {
    (x * beta).map(sigmoid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Convergence when |change in log-likelihood| falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Any |coefficient| beyond this is treated as separation.
    pub separation_bound: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            tol: 1e-8,
            max_iter: 100,
            separation_bound: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub column_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub z_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub odds_ratios: Vec<f64>,
    pub log_likelihood: f64,
    pub deviance: f64,
    pub aic: f64,
    pub bic: f64,
    pub n_obs: usize,
    pub iterations: usize,
    pub converged: bool,
    pub covariance: Vec<Vec<f64>>,
}

impl ModelFit {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn num_params(&self) -> usize {
        self.coefficients.len()
    }
}

/// Two-sided normal p-value of a z statistic.
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

fn argmax_abs(v: &DVector<f64>) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, x)| if x.abs() > best.1 { (i, x.abs()) } else { best })
        .0
}

/// Maximum-likelihood logistic fit by Newton-Raphson / IRLS with step halving.
pub fn fit_logistic(design: &DesignMatrix, config: &FitConfig) -> Result<ModelFit, GlmError> {
    let (x, y) = (&design.x, &design.y);
    let (n, p) = x.shape();
    if n <= p {
        return Err(GlmError::TooFewRows { n, p });
    }
    let dependent = dependent_columns(design);
    if !dependent.is_empty() {
        return Err(GlmError::RankDeficient { columns: dependent });
    }
    let separation = |beta: &DVector<f64>, iterations| GlmError::Separation {
        column: design.column_names[argmax_abs(beta)].clone(),
        iterations,
    };

    let mut beta = DVector::zeros(p);
    let mut ll = log_likelihood(x, y, &beta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        iterations += 1;
        let grad = score(x, y, &beta);
        let info = fisher_information(x, &beta);
        let Some(chol) = info.cholesky() else {
            return Err(separation(&beta, iterations));
        };
        let mut step = chol.solve(&grad);
        let mut candidate = &beta + &step;
        let mut cand_ll = log_likelihood(x, y, &candidate);
        let mut halvings = 0;
        while !(cand_ll >= ll - 1e-12 * ll.abs()) && halvings < 40 {
            step *= 0.5;
            candidate = &beta + &step;
            cand_ll = log_likelihood(x, y, &candidate);
            halvings += 1;
        }
        let change = (cand_ll - ll).abs();
        beta = candidate;
        ll = cand_ll;
        if beta.iter().any(|b| b.abs() > config.separation_bound || !b.is_finite()) {
            return Err(separation(&beta, iterations));
        }
        if change < config.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(separation(&beta, iterations));
    }

    let info = fisher_information(x, &beta);
    let covariance = info
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| separation(&beta, iterations))?;
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let std_errors: Vec<f64> = (0..p).map(|i| covariance[(i, i)].sqrt()).collect();
    let z_values: Vec<f64> = coefficients.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    let pf = p as f64;
    Ok(ModelFit {
        column_names: design.column_names.clone(),
        odds_ratios: coefficients.iter().map(|b| b.exp()).collect(),
        p_values: z_values.iter().map(|z| two_sided_p(*z)).collect(),
        coefficients,
        std_errors,
        z_values,
        log_likelihood: ll,
        deviance: -2.0 * ll,
        aic: 2.0 * pf - 2.0 * ll,
        bic: pf * (n as f64).ln() - 2.0 * ll,
        n_obs: n,
        iterations,
        converged,
        covariance: covariance.row_iter().map(|r| r.iter().copied().collect()).collect(),
    })
}

/// `***` below 0.001, `**` below 0.01, `*` below 0.05.
pub fn significance_marker(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsRatio {
    pub term: String,
    pub odds_ratio: f64,
    pub p_value: f64,
    pub marker: String,
}

pub fn odds_ratio(beta: f64) -> f64 {
    beta.exp()
}

pub fn odds_ratios(fit: &ModelFit) -> Vec<OddsRatio> {
    fit.column_names
        .iter()
        .zip(fit.coefficients.iter().zip(&fit.p_values))
        .map(|(term, (b, p))| OddsRatio {
            term: term.clone(),
            odds_ratio: odds_ratio(*b),
            p_value: *p,
            marker: significance_marker(*p).to_string(),
        })
        .collect()
}

mod inf_as_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("invalid VIF `{t}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifEntry {
    pub column: String,
    /// Infinite under exact collinearity.
    #[serde(with = "inf_as_string")]
    pub vif: f64,
}

/// VIF of every non-intercept column: SST / SSR of the column regressed on
/// all other columns plus an intercept, i.e. 1 / (1 - R^2).
pub fn vif(design: &DesignMatrix) -> Result<Vec<VifEntry>, GlmError> {
    let cols: Vec<(String, Vec<f64>)> = design
        .column_names
        .iter()
        .zip(columns_of(&design.x))
        .filter(|(name, _)| name.as_str() != INTERCEPT)
        .map(|(name, col)| (name.clone(), col))
        .collect();
    if cols.len() < 2 {
        return Err(GlmError::TooFewColumns(cols.len()));
    }
    let n = design.x.nrows();
    let ones = vec![1.0; n];
    let entries = (0..cols.len())
        .map(|j| {
            let mut basis = Basis::default();
            basis.try_push(&ones);
            for (k, (_, other)) in cols.iter().enumerate() {
                if k != j {
                    basis.try_push(other);
                }
            }
            let target = &cols[j].1;
            let mean = target.iter().sum::<f64>() / n as f64;
            let sst: f64 = target.iter().map(|v| (v - mean).powi(2)).sum();
            let r = basis.residual(target);
            let ssr = dot(&r, &r);
            let value = if sst == 0.0 || ssr <= 1e-12 * sst { f64::INFINITY } else { sst / ssr };
            VifEntry {
                column: cols[j].0.clone(),
                vif: value,
            }
        })
        .collect();
    Ok(entries)
}

/// True when every VIF is strictly below `limit`.
pub fn vif_gate(entries: &[VifEntry], limit: f64) -> bool {
    entries.iter().all(|e| e.vif < limit)
}
