//! Case-base sampling: the case series collects every observed event moment,
//! the base series draws moments uniformly over total person-time, and every
//! row carries the constant offset log(B/b).

use crate::data::{CovValue, SurvivalDataset};
use crate::error::{Error, Result};
use crate::rng::{self, stream};
use crate::table::{Table, Value};
use rand::Rng;

/// Hard cap on base-series size; guards against a mistyped ratio.
pub const ROW_CAP: usize = 20_000_000;

/// One sampled person-moment. `event_indicator` 0 marks the base series,
/// j >= 1 the case series of cause j.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub subject_id: String,
    pub moment_time: f64,
    pub event_indicator: usize,
    pub offset: f64,
    pub covariates: Vec<CovValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMeta {
    pub total_person_time: f64,
    pub base_size: usize,
    pub ratio: f64,
    pub seed: u64,
}

/// Output of the sampler: base rows first, then case rows in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonMomentTable {
    pub covariate_names: Vec<String>,
    pub rows: Vec<MomentRow>,
    pub meta: SamplingMeta,
}

/// B, the denominator of the sampling intensity.
pub fn total_person_time(dataset: &SurvivalDataset) -> Result<f64> {
    if dataset.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(dataset.records.iter().map(|r| r.followup_time).sum())
}

/// log(B/b), constant across rows.
pub fn compute_offset(b: usize, total_person_time: f64) -> f64 {
    debug_assert!(b >= 1 && total_person_time > 0.0);
    (total_person_time / b as f64).ln()
}

/// Draw the base series and append the case series.
///
/// Base size is b = round(ratio x number of events). Each base moment comes
/// from one uniform draw on the concatenated person-time line [0, B): the
/// draw picks the subject with probability t_i/B and lands uniformly in
/// (0, t_i]. Deterministic given `seed`.
pub fn sample_base_series(
    dataset: &SurvivalDataset,
    ratio: f64,
    seed: u64,
) -> Result<PersonMomentTable> {
    if !(ratio > 0.0) {
        return Err(Error::InvalidArgument("ratio must be positive".into()));
    }
    let n_events = dataset.n_events();
    if n_events == 0 {
        return Err(Error::NoEvents);
    }
    let b = (ratio * n_events as f64).round() as usize;
    if b == 0 {
        return Err(Error::InvalidArgument(
            "ratio too small: base series would be empty".into(),
        ));
    }
    if b > ROW_CAP {
        return Err(Error::RowCapExceeded {
            requested: b as u64,
            cap: ROW_CAP as u64,
        });
    }
    let total = total_person_time(dataset)?;
    let offset = compute_offset(b, total);

    // cum[i] = person-time up to and including subject i.
    let mut cum = Vec::with_capacity(dataset.records.len());
    let mut acc = 0.0;
    for r in &dataset.records {
        acc += r.followup_time;
        cum.push(acc);
    }

    let mut rng = rng::stream_rng(seed, stream::SAMPLE, 0);
    let mut rows = Vec::with_capacity(b + n_events);
    for _ in 0..b {
        let u: f64 = rng.gen_range(0.0..total);
        let idx = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        let rec = &dataset.records[idx];
        // cum sums can round up by an ulp; clamp so a moment never lands
        // beyond the subject's follow-up.
        let moment_time = (cum[idx] - u).min(rec.followup_time);
        debug_assert!(moment_time > 0.0 && moment_time <= rec.followup_time);
        rows.push(MomentRow {
            subject_id: rec.subject_id.clone(),
            moment_time,
            event_indicator: 0,
            offset,
            covariates: rec.covariates.clone(),
        });
    }
    for rec in &dataset.records {
        if rec.event_type >= 1 {
            rows.push(MomentRow {
                subject_id: rec.subject_id.clone(),
                moment_time: rec.followup_time,
                event_indicator: rec.event_type,
                offset,
                covariates: rec.covariates.clone(),
            });
        }
    }

    Ok(PersonMomentTable {
        covariate_names: dataset.covariate_names.clone(),
        rows,
        meta: SamplingMeta {
            total_person_time: total,
            base_size: b,
            ratio,
            seed,
        },
    })
}

impl PersonMomentTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_base(&self) -> usize {
        self.rows.iter().filter(|r| r.event_indicator == 0).count()
    }

    pub fn n_cases(&self) -> usize {
        self.rows.len() - self.n_base()
    }

    /// Highest event code present.
    pub fn n_causes(&self) -> usize {
        self.rows.iter().map(|r| r.event_indicator).max().unwrap_or(0)
    }

    /// Append one derived covariate column; any rule failure aborts with the
    /// offending row index.
    pub fn annotate_moments<F>(&self, name: &str, rule: F) -> Result<PersonMomentTable>
    where
        F: Fn(&MomentRow) -> std::result::Result<CovValue, String>,
    {
        let mut out = self.clone();
        out.covariate_names.push(name.to_string());
        for (i, row) in out.rows.iter_mut().enumerate() {
            let v = rule(&self.rows[i]).map_err(|message| Error::AnnotationFailed {
                row: i,
                message,
            })?;
            row.covariates.push(v);
        }
        Ok(out)
    }

    pub fn to_table(&self) -> Table {
        let mut columns = vec![
            "subject_id".to_string(),
            "moment_time".to_string(),
            "event_indicator".to_string(),
            "offset".to_string(),
        ];
        columns.extend(self.covariate_names.iter().cloned());
        let mut t = Table::new(columns);
        for r in &self.rows {
            let mut row = vec![
                Value::Text(r.subject_id.clone()),
                Value::Real(r.moment_time),
                Value::Int(r.event_indicator as i64),
                Value::Real(r.offset),
            ];
            row.extend(r.covariates.iter().map(|c| c.to_table_value()));
            t.push_row(row);
        }
        t
    }

    /// True when a table has the person-moment column signature.
    pub fn table_has_signature(table: &Table) -> bool {
        ["moment_time", "event_indicator", "offset"]
            .iter()
            .all(|c| table.has_column(c))
    }

    /// Rebuild from a written table. B and b are recovered exactly from the
    /// offset and the base-row count; ratio is approximate and the original
    /// seed is unknown (stored as 0).
    pub fn from_table(table: &Table, categorical: &[String]) -> Result<PersonMomentTable> {
        if !Self::table_has_signature(table) {
            return Err(Error::MissingColumn {
                name: "moment_time".into(),
            });
        }
        let id_idx = table.column_index("subject_id");
        let t_idx = table.column_index("moment_time").unwrap();
        let e_idx = table.column_index("event_indicator").unwrap();
        let o_idx = table.column_index("offset").unwrap();
        let mut cov_cols: Vec<(usize, String)> = Vec::new();
        for (i, name) in table.columns.iter().enumerate() {
            if Some(i) == id_idx || i == t_idx || i == e_idx || i == o_idx {
                continue;
            }
            cov_cols.push((i, name.clone()));
        }
        let mut rows = Vec::with_capacity(table.rows.len());
        for (row_i, row) in table.rows.iter().enumerate() {
            let moment_time = row[t_idx].as_real().ok_or_else(|| Error::NonNumericValue {
                column: "moment_time".into(),
                row: row_i,
                value: row[t_idx].as_text(),
            })?;
            let event_raw = row[e_idx].as_real().ok_or_else(|| Error::NonNumericValue {
                column: "event_indicator".into(),
                row: row_i,
                value: row[e_idx].as_text(),
            })?;
            if event_raw < 0.0 || event_raw.fract() != 0.0 {
                return Err(Error::InvalidEventCode {
                    row: row_i,
                    value: event_raw.to_string(),
                });
            }
            let offset = row[o_idx].as_real().ok_or_else(|| Error::NonNumericValue {
                column: "offset".into(),
                row: row_i,
                value: row[o_idx].as_text(),
            })?;
            let mut covariates = Vec::with_capacity(cov_cols.len());
            for (col_i, name) in &cov_cols {
                let cell = &row[*col_i];
                if categorical.iter().any(|c| c == name) {
                    // Numeric-looking cells get the same canonical level
                    // text the dataset loader produces.
                    let level = match cell {
                        Value::Real(v) => crate::data::canonical_level(*v),
                        Value::Int(v) => v.to_string(),
                        Value::Text(s) => s.clone(),
                    };
                    covariates.push(CovValue::Cat(level));
                } else {
                    let v = cell.as_real().ok_or_else(|| Error::NonNumericValue {
                        column: name.clone(),
                        row: row_i,
                        value: cell.as_text(),
                    })?;
                    covariates.push(CovValue::Num(v));
                }
            }
            rows.push(MomentRow {
                subject_id: match id_idx {
                    Some(i) => row[i].as_text(),
                    None => row_i.to_string(),
                },
                moment_time,
                event_indicator: event_raw as usize,
                offset,
                covariates,
            });
        }
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let offset = rows[0].offset;
        let base_size = rows.iter().filter(|r| r.event_indicator == 0).count();
        let n_cases = rows.len() - base_size;
        let total_person_time = base_size as f64 * offset.exp();
        let ratio = if n_cases > 0 {
            base_size as f64 / n_cases as f64
        } else {
            0.0
        };
        Ok(PersonMomentTable {
            covariate_names: cov_cols.into_iter().map(|(_, n)| n).collect(),
            rows,
            meta: SamplingMeta {
                total_person_time,
                base_size,
                ratio,
                seed: 0,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubjectRecord;
    use approx::assert_relative_eq;

    fn toy_dataset(times: &[f64], events: &[usize]) -> SurvivalDataset {
        let records = times
            .iter()
            .zip(events)
            .enumerate()
            .map(|(i, (&t, &e))| SubjectRecord {
                subject_id: format!("s{i}"),
                followup_time: t,
                event_type: e,
                covariates: vec![],
            })
            .collect();
        SurvivalDataset::from_records(vec![], records, None).unwrap()
    }

    #[test]
    fn person_time_sums() {
        let d = toy_dataset(&[1.0, 2.0, 3.0], &[0, 1, 0]);
        assert_eq!(total_person_time(&d).unwrap(), 6.0);
        let d = toy_dataset(&[5.0], &[1]);
        assert_eq!(total_person_time(&d).unwrap(), 5.0);
    }

    #[test]
    fn person_time_matches_independent_sum() {
        let times: Vec<f64> = (1..=1000).map(|i| 0.25 + (i as f64) * 0.01).collect();
        let events: Vec<usize> = (0..1000).map(|i| i % 2).collect();
        let d = toy_dataset(&times, &events);
        let mut oracle = 0.0;
        for t in &times {
            oracle += t;
        }
        assert_relative_eq!(total_person_time(&d).unwrap(), oracle, max_relative = 1e-14);
    }

    #[test]
    fn offset_formula() {
        assert_relative_eq!(compute_offset(100, 600.0), 6.0f64.ln(), max_relative = 1e-15);
        assert_eq!(compute_offset(250, 250.0), 0.0);
        let b = 1000usize;
        let total = 12345.678;
        assert_relative_eq!(
            compute_offset(b, total),
            total.ln() - (b as f64).ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn base_size_and_case_completeness() {
        let times: Vec<f64> = (1..=40).map(|i| i as f64 / 7.0).collect();
        let events: Vec<usize> = (0..40).map(|i| usize::from(i % 4 == 0)).collect();
        let d = toy_dataset(&times, &events);
        assert_eq!(d.n_events(), 10);
        let t = sample_base_series(&d, 100.0, 7).unwrap();
        assert_eq!(t.n_base(), 1000);
        assert_eq!(t.n_cases(), 10);
        for r in t.rows.iter().filter(|r| r.event_indicator >= 1) {
            let rec = d
                .records
                .iter()
                .find(|x| x.subject_id == r.subject_id)
                .unwrap();
            assert_eq!(r.moment_time, rec.followup_time);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let d = toy_dataset(&[1.0, 2.0, 3.0, 4.0], &[1, 0, 1, 0]);
        let a = sample_base_series(&d, 50.0, 99).unwrap();
        let b = sample_base_series(&d, 50.0, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_base_series(&d, 50.0, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn moments_respect_follow_up_and_offset_is_constant() {
        let d = toy_dataset(&[0.5, 1.5, 2.5, 9.0], &[1, 1, 0, 0]);
        let t = sample_base_series(&d, 200.0, 3).unwrap();
        let expected_offset = compute_offset(t.meta.base_size, t.meta.total_person_time);
        for r in &t.rows {
            assert!(r.moment_time > 0.0);
            let rec = d
                .records
                .iter()
                .find(|x| x.subject_id == r.subject_id)
                .unwrap();
            assert!(r.moment_time <= rec.followup_time);
            assert_eq!(r.offset, expected_offset);
        }
    }

    #[test]
    fn subject_weights_proportional_to_person_time() {
        // Two subjects with 10% / 90% of person-time; binomial 3-SE band.
        let d = toy_dataset(&[1.0, 9.0], &[1, 0]);
        let t = sample_base_series(&d, 2000.0, 11).unwrap();
        let b = t.meta.base_size as f64;
        let from_s1 = t
            .rows
            .iter()
            .filter(|r| r.event_indicator == 0 && r.subject_id == "s1")
            .count() as f64;
        let p = 0.9;
        let se = (p * (1.0 - p) / b).sqrt();
        assert!((from_s1 / b - p).abs() < 3.0 * se);
    }

    #[test]
    fn subject_weights_chi_square() {
        let times: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let mut events = vec![0usize; 20];
        events[0] = 1;
        let d = toy_dataset(&times, &events);
        let t = sample_base_series(&d, 100_000.0, 42).unwrap();
        let b = t.meta.base_size as f64;
        let total = t.meta.total_person_time;
        let mut counts = vec![0.0f64; 20];
        for r in t.rows.iter().filter(|r| r.event_indicator == 0) {
            let idx: usize = r.subject_id[1..].parse().unwrap();
            counts[idx] += 1.0;
        }
        let mut stat = 0.0;
        for (i, c) in counts.iter().enumerate() {
            let expected = b * times[i] / total;
            stat += (c - expected).powi(2) / expected;
        }
        // chi-square(19) 0.001 upper quantile.
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let crit = ChiSquared::new(19.0).unwrap().inverse_cdf(0.999);
        assert!(stat < crit, "stat {stat} >= {crit}");
    }

    #[test]
    fn zero_events_rejected() {
        let d = toy_dataset(&[1.0, 2.0], &[0, 0]);
        assert!(matches!(
            sample_base_series(&d, 100.0, 1),
            Err(Error::NoEvents)
        ));
    }

    #[test]
    fn row_cap_enforced() {
        let d = toy_dataset(&[1.0, 2.0], &[1, 1]);
        let err = sample_base_series(&d, 2e7, 1).unwrap_err();
        assert!(matches!(err, Error::RowCapExceeded { .. }));
    }

    #[test]
    fn annotate_appends_column() {
        let d = toy_dataset(&[2.0, 4.0], &[1, 1]);
        let t = sample_base_series(&d, 10.0, 5).unwrap();
        let exposed = t
            .annotate_moments("exposed", |row| {
                Ok(CovValue::Num(f64::from(row.moment_time > 1.0)))
            })
            .unwrap();
        assert_eq!(exposed.covariate_names, vec!["exposed".to_string()]);
        assert_eq!(exposed.n_rows(), t.n_rows());
        for (orig, ann) in t.rows.iter().zip(&exposed.rows) {
            assert_eq!(ann.covariates.len(), 1);
            assert_eq!(
                ann.covariates[0],
                CovValue::Num(f64::from(orig.moment_time > 1.0))
            );
            assert_eq!(ann.moment_time, orig.moment_time);
        }
    }

    #[test]
    fn annotate_failure_reports_row() {
        let d = toy_dataset(&[2.0, 4.0], &[1, 1]);
        let t = sample_base_series(&d, 1.0, 5).unwrap();
        let err = t
            .annotate_moments("bad", |row| {
                if row.event_indicator == 1 {
                    Err("no rule for cases".to_string())
                } else {
                    Ok(CovValue::Num(0.0))
                }
            })
            .unwrap_err();
        assert!(matches!(err, Error::AnnotationFailed { .. }));
    }

    #[test]
    fn transplant_exposure_rule() {
        let d = toy_dataset(&[30.0], &[1]);
        let mut t = sample_base_series(&d, 1.0, 5).unwrap();
        t.rows[0].moment_time = 5.0;
        t.rows[1].moment_time = 20.0;
        let transplant_day = 10.0;
        let ann = t
            .annotate_moments("exposed", |row| {
                Ok(CovValue::Num(f64::from(transplant_day <= row.moment_time)))
            })
            .unwrap();
        assert_eq!(ann.rows[0].covariates[0], CovValue::Num(0.0));
        assert_eq!(ann.rows[1].covariates[0], CovValue::Num(1.0));
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pm.csv");
        let d = toy_dataset(&[1.0, 2.0, 3.0], &[1, 0, 2]);
        let t = sample_base_series(&d, 25.0, 8).unwrap();
        t.to_table().write_csv(&p).unwrap();
        let raw = Table::read_csv(&p).unwrap();
        assert!(PersonMomentTable::table_has_signature(&raw));
        let back = PersonMomentTable::from_table(&raw, &[]).unwrap();
        assert_eq!(back.n_rows(), t.n_rows());
        assert_eq!(back.meta.base_size, t.meta.base_size);
        assert_relative_eq!(
            back.meta.total_person_time,
            t.meta.total_person_time,
            max_relative = 1e-12
        );
        for (a, b) in t.rows.iter().zip(&back.rows) {
            assert_eq!(a.moment_time.to_bits(), b.moment_time.to_bits());
            assert_eq!(a.event_indicator, b.event_indicator);
            assert_eq!(a.offset.to_bits(), b.offset.to_bits());
        }
    }
}
