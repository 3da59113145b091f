//! Model specification and design-matrix assembly.
//!
//! A [`ModelSpec`] names the requested terms; resolving it against a
//! person-moment table freezes knots, levels, and column layout into a
//! [`DesignInfo`], which can then build the fitting matrix or evaluate a
//! single design row for prediction.

use crate::basis::{BSplineBasis, TimeBasis};
use crate::data::CovValue;
use crate::error::{Error, Result};
use crate::sampling::PersonMomentTable;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

pub const LOG_TIME_GUARD_SCALE: f64 = 1e-8;

/// Requested spline: `df` columns after the first basis function is dropped,
/// so `df - degree` interior knots are placed at case-series time quantiles
/// unless given explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineTerm {
    pub df: usize,
    pub degree: usize,
    pub interior_knots: Option<Vec<f64>>,
    pub boundary: Option<(f64, f64)>,
}

impl Default for BSplineTerm {
    fn default() -> Self {
        BSplineTerm {
            df: 3,
            degree: 3,
            interior_knots: None,
            boundary: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TimeTerm {
    Constant,
    Linear,
    Log,
    BSpline(BSplineTerm),
}

/// What to fit: a time term, main effects, and covariate-by-time
/// interactions.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub time: TimeTerm,
    pub terms: Vec<String>,
    pub interactions: Vec<String>,
    pub reference_levels: BTreeMap<String, String>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            time: TimeTerm::BSpline(BSplineTerm::default()),
            terms: vec![],
            interactions: vec![],
            reference_levels: BTreeMap::new(),
        }
    }
}

impl ModelSpec {
    /// Parse the compact term language, e.g.
    /// `time=bspline(df=3);terms=trt,age;interactions=trt:time`.
    pub fn parse(s: &str) -> Result<ModelSpec> {
        let mut spec = ModelSpec::default();
        for segment in s.split(';') {
            let segment = segment.trim();
            if segment.is_empty() {
                continue;
            }
            let (key, value) = segment
                .split_once('=')
                .ok_or_else(|| Error::InvalidModelSpec(format!("expected key=value in `{segment}`")))?;
            match key.trim() {
                "time" => spec.time = parse_time_term(value.trim())?,
                "terms" => {
                    spec.terms = value
                        .split(',')
                        .map(|t| t.trim().to_string())
                        .filter(|t| !t.is_empty())
                        .collect();
                }
                "interactions" => {
                    spec.interactions = value
                        .split(',')
                        .filter(|t| !t.trim().is_empty())
                        .map(parse_interaction)
                        .collect::<Result<_>>()?;
                }
                other => {
                    return Err(Error::InvalidModelSpec(format!("unknown key `{other}`")));
                }
            }
        }
        Ok(spec)
    }
}

fn parse_time_term(s: &str) -> Result<TimeTerm> {
    match s {
        "constant" => return Ok(TimeTerm::Constant),
        "linear" => return Ok(TimeTerm::Linear),
        "log" => return Ok(TimeTerm::Log),
        "bspline" => return Ok(TimeTerm::BSpline(BSplineTerm::default())),
        _ => {}
    }
    let inner = s
        .strip_prefix("bspline(")
        .and_then(|rest| rest.strip_suffix(')'))
        .ok_or_else(|| Error::InvalidModelSpec(format!("unknown time term `{s}`")))?;
    let mut term = BSplineTerm::default();
    for part in inner.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidModelSpec(format!("expected key=value in `{part}`")))?;
        let value = value.trim();
        match key.trim() {
            "df" => {
                term.df = value
                    .parse()
                    .map_err(|_| Error::InvalidModelSpec(format!("bad df `{value}`")))?;
            }
            "degree" => {
                term.degree = value
                    .parse()
                    .map_err(|_| Error::InvalidModelSpec(format!("bad degree `{value}`")))?;
            }
            other => {
                return Err(Error::InvalidModelSpec(format!(
                    "unknown bspline option `{other}`"
                )));
            }
        }
    }
    if term.df < term.degree {
        return Err(Error::InvalidModelSpec(format!(
            "df {} below spline degree {}",
            term.df, term.degree
        )));
    }
    Ok(TimeTerm::BSpline(term))
}

fn parse_interaction(s: &str) -> Result<String> {
    let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
    match parts.as_slice() {
        [cov, "time"] => Ok((*cov).to_string()),
        ["time", cov] => Ok((*cov).to_string()),
        _ => Err(Error::InvalidModelSpec(format!(
            "interaction `{s}` must pair a covariate with `time`"
        ))),
    }
}

/// One resolved main effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MainTerm {
    Numeric {
        name: String,
    },
    Categorical {
        name: String,
        levels: Vec<String>,
        reference: String,
    },
}

impl MainTerm {
    pub fn name(&self) -> &str {
        match self {
            MainTerm::Numeric { name } | MainTerm::Categorical { name, .. } => name,
        }
    }

    pub fn n_columns(&self) -> usize {
        match self {
            MainTerm::Numeric { .. } => 1,
            MainTerm::Categorical { levels, .. } => levels.len() - 1,
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        match self {
            MainTerm::Numeric { name } => vec![name.clone()],
            MainTerm::Categorical {
                name,
                levels,
                reference,
            } => levels
                .iter()
                .filter(|l| *l != reference)
                .map(|l| format!("{name}={l}"))
                .collect(),
        }
    }

    fn encode(&self, value: &CovValue, row: usize) -> Result<Vec<f64>> {
        match self {
            MainTerm::Numeric { name } => {
                let v = value.as_num().ok_or_else(|| Error::NonNumericValue {
                    column: name.clone(),
                    row,
                    value: value.as_level(),
                })?;
                Ok(vec![v])
            }
            MainTerm::Categorical {
                name,
                levels,
                reference,
            } => {
                let level = value.as_level();
                if !levels.iter().any(|l| *l == level) {
                    return Err(Error::UnseenLevel {
                        covariate: name.clone(),
                        level,
                        row,
                    });
                }
                Ok(levels
                    .iter()
                    .filter(|l| *l != reference)
                    .map(|l| f64::from(*l == level))
                    .collect())
            }
        }
    }
}

/// Covariate values at which to evaluate the fitted hazard.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Profile {
    pub values: BTreeMap<String, CovValue>,
}

impl Profile {
    pub fn new() -> Self {
        Profile::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.values.insert(name.into(), CovValue::Num(value));
        self
    }

    pub fn with_level(mut self, name: &str, level: &str) -> Self {
        self.values.insert(name.into(), CovValue::Cat(level.into()));
        self
    }

    fn get(&self, name: &str) -> Result<&CovValue> {
        self.values
            .get(name)
            .ok_or_else(|| Error::ProfileMissingCovariate { name: name.into() })
    }
}

/// Frozen design: resolved time basis, covariate encoders, and column
/// layout. Serialized with fitted models so predictions reuse the exact
/// training design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignInfo {
    pub time_basis: TimeBasis,
    pub mains: Vec<MainTerm>,
    /// Names of main terms interacted with the full time basis.
    pub interactions: Vec<String>,
    pub column_names: Vec<String>,
}

/// Fitting inputs: rows follow the person-moment table order.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub offset: Array1<f64>,
    pub column_names: Vec<String>,
    /// Non-intercept columns with zero variance; left in place, flagged for
    /// the caller.
    pub constant_columns: Vec<String>,
}

impl DesignInfo {
    /// Resolve a spec against a sampled table.
    pub fn from_spec(spec: &ModelSpec, table: &PersonMomentTable) -> Result<DesignInfo> {
        if table.rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let case_times: Vec<f64> = table
            .rows
            .iter()
            .filter(|r| r.event_indicator >= 1)
            .map(|r| r.moment_time)
            .collect();
        let time_scale = if case_times.is_empty() {
            table
                .rows
                .iter()
                .map(|r| r.moment_time)
                .fold(0.0f64, f64::max)
        } else {
            case_times.iter().fold(0.0f64, |a, &b| a.max(b))
        };
        if !(time_scale > 0.0) {
            return Err(Error::InvalidArgument(
                "all moment times are zero or negative".into(),
            ));
        }

        let time_basis = resolve_time_basis(&spec.time, time_scale, &case_times)?;

        let mut mains = Vec::new();
        for name in &spec.terms {
            let idx = table
                .covariate_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::UnknownCovariate { name: name.clone() })?;
            let is_cat = spec.reference_levels.contains_key(name)
                || table
                    .rows
                    .iter()
                    .any(|r| matches!(r.covariates[idx], CovValue::Cat(_)));
            if is_cat {
                let mut levels = BTreeSet::new();
                for r in &table.rows {
                    levels.insert(r.covariates[idx].as_level());
                }
                let levels: Vec<String> = levels.into_iter().collect();
                let reference = match spec.reference_levels.get(name) {
                    Some(r) => {
                        if !levels.iter().any(|l| l == r) {
                            return Err(Error::ReferenceLevelMissing {
                                column: name.clone(),
                                level: r.clone(),
                            });
                        }
                        r.clone()
                    }
                    None => levels[0].clone(),
                };
                if levels.len() < 2 {
                    return Err(Error::InvalidModelSpec(format!(
                        "covariate `{name}` has a single level"
                    )));
                }
                mains.push(MainTerm::Categorical {
                    name: name.clone(),
                    levels,
                    reference,
                });
            } else {
                mains.push(MainTerm::Numeric { name: name.clone() });
            }
        }

        for name in &spec.interactions {
            if !mains.iter().any(|m| m.name() == name) {
                return Err(Error::InvalidModelSpec(format!(
                    "interaction covariate `{name}` is not among the model terms"
                )));
            }
            if time_basis.n_columns() == 0 {
                return Err(Error::InvalidModelSpec(
                    "time interaction requires a non-constant time basis".into(),
                ));
            }
        }

        let info = DesignInfo {
            column_names: column_names(&time_basis, &mains, &spec.interactions),
            time_basis,
            mains,
            interactions: spec.interactions.clone(),
        };
        let mut seen = BTreeSet::new();
        for c in &info.column_names {
            if !seen.insert(c) {
                return Err(Error::InvalidModelSpec(format!(
                    "duplicate design column `{c}`"
                )));
            }
        }
        Ok(info)
    }

    pub fn n_columns(&self) -> usize {
        self.column_names.len()
    }

    fn main_index(&self, name: &str) -> usize {
        self.mains.iter().position(|m| m.name() == name).unwrap()
    }

    fn assemble(&self, time_cols: &[f64], main_cols: &[Vec<f64>]) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.n_columns());
        row.push(1.0);
        row.extend_from_slice(time_cols);
        for cols in main_cols {
            row.extend_from_slice(cols);
        }
        for name in &self.interactions {
            for c in &main_cols[self.main_index(name)] {
                for t in time_cols {
                    row.push(c * t);
                }
            }
        }
        row
    }

    /// Design row for a hypothetical person-moment.
    pub fn row(&self, time: f64, profile: &Profile) -> Result<Vec<f64>> {
        let time_cols = self.time_basis.eval(time)?;
        let mut main_cols = Vec::with_capacity(self.mains.len());
        for m in self.mains.iter() {
            main_cols.push(m.encode(profile.get(m.name())?, 0)?);
        }
        Ok(self.assemble(&time_cols, &main_cols))
    }

    /// Full fitting inputs from a sampled table.
    pub fn build_matrix(&self, table: &PersonMomentTable) -> Result<DesignMatrix> {
        let n = table.rows.len();
        let p = self.n_columns();
        let mut cov_idx = Vec::with_capacity(self.mains.len());
        for m in &self.mains {
            let idx = table
                .covariate_names
                .iter()
                .position(|c| c == m.name())
                .ok_or_else(|| Error::UnknownCovariate {
                    name: m.name().into(),
                })?;
            cov_idx.push(idx);
        }
        let mut x = Array2::zeros((n, p));
        let mut y = Vec::with_capacity(n);
        let mut offset = Array1::zeros(n);
        for (i, r) in table.rows.iter().enumerate() {
            let time_cols = self.time_basis.eval(r.moment_time)?;
            let mut main_cols = Vec::with_capacity(self.mains.len());
            for (m, &ci) in self.mains.iter().zip(&cov_idx) {
                main_cols.push(m.encode(&r.covariates[ci], i)?);
            }
            let row = self.assemble(&time_cols, &main_cols);
            for (j, v) in row.into_iter().enumerate() {
                x[[i, j]] = v;
            }
            y.push(r.event_indicator);
            offset[i] = r.offset;
        }

        let mut constant_columns = Vec::new();
        for j in 1..p {
            let col = x.column(j);
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                constant_columns.push(self.column_names[j].clone());
            }
        }

        Ok(DesignMatrix {
            x,
            y,
            offset,
            column_names: self.column_names.clone(),
            constant_columns,
        })
    }
}

fn column_names(basis: &TimeBasis, mains: &[MainTerm], interactions: &[String]) -> Vec<String> {
    let mut names = vec!["intercept".to_string()];
    let time_names = basis.column_names();
    names.extend(time_names.iter().cloned());
    for m in mains {
        names.extend(m.column_names());
    }
    for int_name in interactions {
        let m = mains.iter().find(|m| m.name() == int_name).unwrap();
        for c in m.column_names() {
            for t in &time_names {
                names.push(format!("{c}:{t}"));
            }
        }
    }
    names
}

fn resolve_time_basis(
    term: &TimeTerm,
    time_scale: f64,
    case_times: &[f64],
) -> Result<TimeBasis> {
    Ok(match term {
        TimeTerm::Constant => TimeBasis::Constant,
        TimeTerm::Linear => TimeBasis::Linear,
        TimeTerm::Log => TimeBasis::Log {
            epsilon: LOG_TIME_GUARD_SCALE * time_scale,
        },
        TimeTerm::BSpline(t) => {
            if t.df < t.degree {
                return Err(Error::InvalidModelSpec(format!(
                    "df {} below spline degree {}",
                    t.df, t.degree
                )));
            }
            let boundary = t.boundary.unwrap_or((0.0, time_scale));
            let interior = match &t.interior_knots {
                Some(k) => k.clone(),
                None => {
                    let k = t.df - t.degree;
                    quantile_knots(case_times, k, boundary)?
                }
            };
            TimeBasis::BSpline(BSplineBasis::new(t.degree, interior, boundary)?)
        }
    })
}

/// `k` interior knots at evenly spaced quantiles of the case-series times.
fn quantile_knots(case_times: &[f64], k: usize, boundary: (f64, f64)) -> Result<Vec<f64>> {
    if k == 0 {
        return Ok(vec![]);
    }
    if case_times.is_empty() {
        return Err(Error::DegenerateKnots(
            "interior knots requested but the table has no case series".into(),
        ));
    }
    let mut sorted = case_times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut knots = Vec::with_capacity(k);
    for j in 1..=k {
        let p = j as f64 / (k + 1) as f64;
        knots.push(quantile_type7(&sorted, p));
    }
    knots.dedup();
    for w in knots.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::DegenerateKnots("tied quantile knots".into()));
        }
    }
    if let Some((&lo, &hi)) = knots.first().zip(knots.last()) {
        if lo <= boundary.0 || hi >= boundary.1 {
            return Err(Error::DegenerateKnots(
                "quantile knots fall on or outside the boundary".into(),
            ));
        }
    }
    if knots.len() != k {
        return Err(Error::DegenerateKnots("tied quantile knots".into()));
    }
    Ok(knots)
}

fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Convenience: resolve a spec and build the matrix in one call.
pub fn build_design_matrix(
    table: &PersonMomentTable,
    spec: &ModelSpec,
) -> Result<(DesignInfo, DesignMatrix)> {
    let info = DesignInfo::from_spec(spec, table)?;
    let matrix = info.build_matrix(table)?;
    Ok((info, matrix))
}
