//! Survival datasets: loading, validation, and serialization.

use crate::error::{Error, Result};
use crate::table::{Table, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// A covariate value: numeric, or a categorical level kept as a string until
/// the design module expands it.
#[derive(Debug, Clone, PartialEq)]
pub enum CovValue {
    Num(f64),
    Cat(String),
}

impl CovValue {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            CovValue::Num(v) => Some(*v),
            CovValue::Cat(_) => None,
        }
    }

    /// Level name when the value is used categorically. Integral numerics
    /// become plain integer strings so `0`/`1` codes read naturally.
    pub fn as_level(&self) -> String {
        match self {
            CovValue::Num(v) => canonical_level(*v),
            CovValue::Cat(s) => s.clone(),
        }
    }

    pub fn to_table_value(&self) -> Value {
        match self {
            CovValue::Num(v) => Value::Real(*v),
            CovValue::Cat(s) => Value::Text(s.clone()),
        }
    }
}

pub(crate) fn canonical_level(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Tells the loader which columns mean what.
#[derive(Debug, Clone, Default)]
pub struct ColumnSchema {
    pub time_column: String,
    pub event_column: String,
    pub id_column: Option<String>,
    pub categorical_columns: BTreeSet<String>,
    pub reference_levels: BTreeMap<String, String>,
}

impl ColumnSchema {
    pub fn new(time_column: &str, event_column: &str) -> Self {
        ColumnSchema {
            time_column: time_column.into(),
            event_column: event_column.into(),
            ..Default::default()
        }
    }

    /// Conventional column names `time` and `event`.
    pub fn standard() -> Self {
        ColumnSchema::new("time", "event")
    }

    pub fn with_id(mut self, id_column: &str) -> Self {
        self.id_column = Some(id_column.into());
        self
    }

    pub fn categorical(mut self, name: &str) -> Self {
        self.categorical_columns.insert(name.into());
        self
    }

    pub fn reference_level(mut self, name: &str, level: &str) -> Self {
        self.categorical_columns.insert(name.into());
        self.reference_levels.insert(name.into(), level.into());
        self
    }
}

/// One subject: follow-up time, event code (0 = censored, 1..J = cause), and
/// covariates parallel to `SurvivalDataset::covariate_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub followup_time: f64,
    pub event_type: usize,
    pub covariates: Vec<CovValue>,
}

/// Validated survival data with administrative follow-up limit `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    pub covariate_names: Vec<String>,
    pub records: Vec<SubjectRecord>,
    pub n_causes: usize,
    pub tau: f64,
}

impl SurvivalDataset {
    /// Build from in-memory records. `tau = None` defaults to the maximum
    /// follow-up time. Unlike [`load_dataset`], a dataset without events is
    /// accepted here; the sampler rejects it later.
    pub fn from_records(
        covariate_names: Vec<String>,
        records: Vec<SubjectRecord>,
        tau: Option<f64>,
    ) -> Result<SurvivalDataset> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut max_time = 0.0f64;
        let mut n_causes = 0usize;
        for (i, r) in records.iter().enumerate() {
            if !r.followup_time.is_finite() || r.followup_time <= 0.0 {
                return Err(Error::NonPositiveFollowup {
                    row: i,
                    value: r.followup_time,
                });
            }
            if r.covariates.len() != covariate_names.len() {
                return Err(Error::InconsistentCovariates { row: i });
            }
            max_time = max_time.max(r.followup_time);
            n_causes = n_causes.max(r.event_type);
        }
        let tau = match tau {
            Some(t) if !(t.is_finite() && t > 0.0) => return Err(Error::NonPositiveTau(t)),
            Some(t) => t,
            None => max_time,
        };
        for (i, r) in records.iter().enumerate() {
            if r.followup_time > tau {
                return Err(Error::FollowupExceedsTau {
                    row: i,
                    value: r.followup_time,
                    tau,
                });
            }
        }
        Ok(SurvivalDataset {
            covariate_names,
            records,
            n_causes,
            tau,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.records.len()
    }

    /// Events of any cause.
    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.event_type >= 1).count()
    }

    pub fn n_events_of_cause(&self, cause: usize) -> usize {
        self.records
            .iter()
            .filter(|r| r.event_type == cause)
            .count()
    }

    pub fn covariate_index(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownCovariate { name: name.into() })
    }

    /// Observed levels of a categorical covariate, sorted.
    pub fn levels_of(&self, name: &str) -> Result<Vec<String>> {
        let idx = self.covariate_index(name)?;
        let mut levels = BTreeSet::new();
        for r in &self.records {
            levels.insert(r.covariates[idx].as_level());
        }
        Ok(levels.into_iter().collect())
    }

    pub fn to_table(&self) -> Table {
        let mut columns = vec!["id".to_string(), "time".to_string(), "event".to_string()];
        columns.extend(self.covariate_names.iter().cloned());
        let mut t = Table::new(columns);
        for r in &self.records {
            let mut row = vec![
                Value::Text(r.subject_id.clone()),
                Value::Real(r.followup_time),
                Value::Int(r.event_type as i64),
            ];
            row.extend(r.covariates.iter().map(|c| c.to_table_value()));
            t.push_row(row);
        }
        t
    }
}

fn parse_num(cell: &Value, column: &str, row: usize) -> Result<f64> {
    match cell {
        Value::Real(v) => Ok(*v),
        Value::Int(v) => Ok(*v as f64),
        Value::Text(s) if s.is_empty() => Err(Error::MissingCell {
            column: column.into(),
            row,
        }),
        Value::Text(s) => s.trim().parse().map_err(|_| Error::NonNumericValue {
            column: column.into(),
            row,
            value: s.clone(),
        }),
    }
}

/// Load and validate a delimited survival data file.
pub fn load_dataset(path: &Path, schema: &ColumnSchema) -> Result<SurvivalDataset> {
    load_dataset_with(path, schema, b',', None)
}

pub fn load_dataset_with(
    path: &Path,
    schema: &ColumnSchema,
    delimiter: u8,
    tau: Option<f64>,
) -> Result<SurvivalDataset> {
    let table = Table::read_delimited(path, delimiter)?;
    dataset_from_table(&table, schema, tau)
}

/// Validate an in-memory table against a schema. Requires at least one event.
pub fn dataset_from_table(
    table: &Table,
    schema: &ColumnSchema,
    tau: Option<f64>,
) -> Result<SurvivalDataset> {
    let time_idx = table.column_index(&schema.time_column).ok_or_else(|| {
        Error::MissingColumn {
            name: schema.time_column.clone(),
        }
    })?;
    let event_idx = table.column_index(&schema.event_column).ok_or_else(|| {
        Error::MissingColumn {
            name: schema.event_column.clone(),
        }
    })?;
    let id_idx = match &schema.id_column {
        Some(name) => Some(
            table
                .column_index(name)
                .ok_or_else(|| Error::MissingColumn { name: name.clone() })?,
        ),
        None => table.column_index("id"),
    };
    for name in &schema.categorical_columns {
        if !table.has_column(name) {
            return Err(Error::MissingColumn { name: name.clone() });
        }
    }

    let mut covariate_cols: Vec<(usize, String)> = Vec::new();
    for (i, name) in table.columns.iter().enumerate() {
        if i == time_idx || i == event_idx || Some(i) == id_idx {
            continue;
        }
        covariate_cols.push((i, name.clone()));
    }
    let covariate_names: Vec<String> = covariate_cols.iter().map(|(_, n)| n.clone()).collect();

    if table.rows.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut records = Vec::with_capacity(table.rows.len());
    for (row_i, row) in table.rows.iter().enumerate() {
        let followup_time = parse_num(&row[time_idx], &schema.time_column, row_i)?;
        if !followup_time.is_finite() || followup_time <= 0.0 {
            return Err(Error::NonPositiveFollowup {
                row: row_i,
                value: followup_time,
            });
        }
        let event_raw = parse_num(&row[event_idx], &schema.event_column, row_i)?;
        if !event_raw.is_finite() || event_raw < 0.0 || event_raw.fract() != 0.0 {
            return Err(Error::InvalidEventCode {
                row: row_i,
                value: event_raw.to_string(),
            });
        }
        let event_type = event_raw as usize;
        let subject_id = match id_idx {
            Some(i) => row[i].as_text(),
            None => row_i.to_string(),
        };
        let mut covariates = Vec::with_capacity(covariate_cols.len());
        for (col_i, name) in &covariate_cols {
            let cell = &row[*col_i];
            if schema.categorical_columns.contains(name) {
                let level = match cell {
                    Value::Real(v) => canonical_level(*v),
                    Value::Int(v) => v.to_string(),
                    Value::Text(s) => s.clone(),
                };
                if level.is_empty() {
                    return Err(Error::MissingCell {
                        column: name.clone(),
                        row: row_i,
                    });
                }
                covariates.push(CovValue::Cat(level));
            } else {
                covariates.push(CovValue::Num(parse_num(cell, name, row_i)?));
            }
        }
        records.push(SubjectRecord {
            subject_id,
            followup_time,
            event_type,
            covariates,
        });
    }

    let dataset = SurvivalDataset::from_records(covariate_names, records, tau)?;
    if dataset.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    for (name, level) in &schema.reference_levels {
        let observed = dataset.levels_of(name)?;
        if !observed.iter().any(|l| l == level) {
            return Err(Error::ReferenceLevelMissing {
                column: name.clone(),
                level: level.clone(),
            });
        }
    }
    Ok(dataset)
}
