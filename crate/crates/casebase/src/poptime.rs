//! Population-time plot layouts and SVG rendering.
//!
//! Person-time is drawn as an area: within each stratum subjects are
//! ranked by follow-up, longest at the bottom, so the subject with the
//! least observation time sits at the top and the at-risk count at time t
//! is the area height. Event moments become points jittered vertically
//! inside the at-risk region; base-series moments sit on their subject's
//! own band.

use crate::data::{CovValue, SurvivalDataset};
use crate::error::{Error, Result};
use crate::rng::{self, stream};
use crate::sampling::PersonMomentTable;
use crate::table::{Table, Value};
use rand::Rng;
use std::collections::HashMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct CasePoint {
    pub t: f64,
    pub y: f64,
    pub cause: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratumLayout {
    pub label: String,
    /// Step polyline (t, height) from (0, n) down to (t_max, 0); the area
    /// below it is the stratum's person-time.
    pub boundary: Vec<(f64, f64)>,
    pub n_subjects: usize,
    pub person_time: f64,
    pub case_points: Vec<CasePoint>,
    pub base_points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopTimeLayout {
    pub strata: Vec<StratumLayout>,
    pub seed: u64,
}

/// One stratum's subjects with ranks; rank 1 has the longest follow-up
/// and occupies the bottom band (y in (0, 1]).
struct Stratum {
    label: String,
    /// (record index, follow-up), sorted descending by follow-up.
    subjects: Vec<(usize, f64)>,
}

fn split_strata(dataset: &SurvivalDataset, exposure: Option<&str>) -> Result<Vec<Stratum>> {
    let groups: Vec<(String, Vec<usize>)> = match exposure {
        None => vec![("all".to_string(), (0..dataset.records.len()).collect())],
        Some(name) => {
            let idx = dataset.covariate_index(name)?;
            if dataset
                .records
                .iter()
                .any(|r| !matches!(r.covariates[idx], CovValue::Cat(_)))
            {
                return Err(Error::InvalidArgument(format!(
                    "exposure column {name} is not categorical"
                )));
            }
            dataset
                .levels_of(name)?
                .into_iter()
                .map(|level| {
                    let members = dataset
                        .records
                        .iter()
                        .enumerate()
                        .filter(|(_, r)| r.covariates[idx].as_level() == level)
                        .map(|(i, _)| i)
                        .collect();
                    (level, members)
                })
                .collect()
        }
    };
    Ok(groups
        .into_iter()
        .map(|(label, members)| {
            let mut subjects: Vec<(usize, f64)> = members
                .iter()
                .map(|&i| (i, dataset.records[i].followup_time))
                .collect();
            subjects.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            Stratum { label, subjects }
        })
        .collect())
}

fn boundary_polyline(subjects: &[(usize, f64)]) -> Vec<(f64, f64)> {
    let n = subjects.len();
    let mut pts = vec![(0.0, n as f64)];
    // Ascending distinct follow-up times; height drops by the tie count.
    let mut height = n;
    let mut k = n;
    while k > 0 {
        let t = subjects[k - 1].1;
        let mut ties = 0;
        while k > 0 && subjects[k - 1].1 == t {
            ties += 1;
            k -= 1;
        }
        pts.push((t, height as f64));
        height -= ties;
        pts.push((t, height as f64));
    }
    pts
}

/// At-risk count at time t: subjects observed to t or beyond.
fn at_risk(subjects: &[(usize, f64)], t: f64) -> usize {
    subjects.iter().take_while(|(_, f)| *f >= t).count()
}

pub fn poptime_layout(
    dataset: &SurvivalDataset,
    exposure: Option<&str>,
    base: Option<&PersonMomentTable>,
    seed: u64,
) -> Result<PopTimeLayout> {
    let strata = split_strata(dataset, exposure)?;
    let mut jitter = rng::stream_rng(seed, stream::POPTIME_JITTER, 0);

    // Subject id -> (stratum index, rank) for base-point placement.
    let mut rank_of: HashMap<&str, (usize, usize)> = HashMap::new();
    for (s, stratum) in strata.iter().enumerate() {
        for (rank0, &(i, _)) in stratum.subjects.iter().enumerate() {
            rank_of.insert(dataset.records[i].subject_id.as_str(), (s, rank0 + 1));
        }
    }

    let mut out: Vec<StratumLayout> = strata
        .iter()
        .map(|stratum| StratumLayout {
            label: stratum.label.clone(),
            boundary: boundary_polyline(&stratum.subjects),
            n_subjects: stratum.subjects.len(),
            person_time: stratum.subjects.iter().map(|(_, f)| f).sum(),
            case_points: Vec::new(),
            base_points: Vec::new(),
        })
        .collect();

    for (s, stratum) in strata.iter().enumerate() {
        for &(i, followup) in &stratum.subjects {
            let rec = &dataset.records[i];
            if rec.event_type >= 1 {
                let k = at_risk(&stratum.subjects, followup);
                out[s].case_points.push(CasePoint {
                    t: followup,
                    y: jitter.gen_range(0.0..k as f64),
                    cause: rec.event_type,
                });
            }
        }
    }

    if let Some(moments) = base {
        for row in &moments.rows {
            if row.event_indicator != 0 {
                continue;
            }
            let Some(&(s, rank)) = rank_of.get(row.subject_id.as_str()) else {
                return Err(Error::InvalidArgument(format!(
                    "base series subject {} is not in the dataset",
                    row.subject_id
                )));
            };
            out[s]
                .base_points
                .push((row.moment_time, rank as f64 - 0.5));
        }
    }

    Ok(PopTimeLayout { strata: out, seed })
}

impl PopTimeLayout {
    /// Long-format table: stratum, kind (boundary/case/base), t, y, cause.
    pub fn to_table(&self) -> Table {
        let mut table = Table::new(
            ["stratum", "kind", "t", "y", "cause"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        for stratum in &self.strata {
            for &(t, y) in &stratum.boundary {
                table.push_row(vec![
                    Value::Text(stratum.label.clone()),
                    Value::Text("boundary".into()),
                    Value::Real(t),
                    Value::Real(y),
                    Value::Int(0),
                ]);
            }
            for p in &stratum.case_points {
                table.push_row(vec![
                    Value::Text(stratum.label.clone()),
                    Value::Text("case".into()),
                    Value::Real(p.t),
                    Value::Real(p.y),
                    Value::Int(p.cause as i64),
                ]);
            }
            for &(t, y) in &stratum.base_points {
                table.push_row(vec![
                    Value::Text(stratum.label.clone()),
                    Value::Text("base".into()),
                    Value::Real(t),
                    Value::Real(y),
                    Value::Int(0),
                ]);
            }
        }
        table
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub width: f64,
    pub height_per_stratum: f64,
    pub margin: f64,
    pub area_color: String,
    pub case_color: String,
    pub base_color: String,
    pub point_radius: f64,
}

impl Default for PlotStyle {
    fn default() -> Self {
        PlotStyle {
            width: 720.0,
            height_per_stratum: 240.0,
            margin: 48.0,
            area_color: "#d4d4d4".into(),
            case_color: "#c14f4f".into(),
            base_color: "#4f79c1".into(),
            point_radius: 2.5,
        }
    }
}

fn fmt(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Deterministic SVG bytes: text assembly only, no hash iteration.
pub fn render_svg(layout: &PopTimeLayout, style: &PlotStyle) -> Vec<u8> {
    let t_max = layout
        .strata
        .iter()
        .flat_map(|s| s.boundary.iter().map(|&(t, _)| t))
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let panel_w = style.width - 2.0 * style.margin;
    let panel_h = style.height_per_stratum - 2.0 * style.margin;
    let total_h = style.height_per_stratum * layout.strata.len() as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">",
        fmt(style.width),
        fmt(total_h),
        fmt(style.width),
        fmt(total_h)
    );
    let _ = writeln!(
        svg,
        "<rect width=\"{}\" height=\"{}\" fill=\"white\"/>",
        fmt(style.width),
        fmt(total_h)
    );

    for (s, stratum) in layout.strata.iter().enumerate() {
        let top = style.height_per_stratum * s as f64 + style.margin;
        let n = (stratum.n_subjects as f64).max(1e-12);
        let x = |t: f64| style.margin + t / t_max * panel_w;
        let y = |count: f64| top + panel_h - count / n * panel_h;

        let _ = writeln!(svg, "<g class=\"stratum\" data-label=\"{}\">", stratum.label);

        // Area: boundary polyline closed along the baseline.
        let mut d = String::new();
        let _ = write!(d, "M{} {}", fmt(x(0.0)), fmt(y(0.0)));
        for &(t, h) in &stratum.boundary {
            let _ = write!(d, " L{} {}", fmt(x(t)), fmt(y(h)));
        }
        // Boundary ends on the baseline; Z walks it back to the origin.
        d.push_str(" Z");
        let _ = writeln!(
            svg,
            "<path class=\"area\" d=\"{d}\" fill=\"{}\" stroke=\"none\"/>",
            style.area_color
        );

        for p in &stratum.base_points {
            let _ = writeln!(
                svg,
                "<circle class=\"base\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"/>",
                fmt(x(p.0)),
                fmt(y(p.1)),
                fmt(style.point_radius),
                style.base_color
            );
        }
        for p in &stratum.case_points {
            let _ = writeln!(
                svg,
                "<circle class=\"case\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\" data-cause=\"{}\"/>",
                fmt(x(p.t)),
                fmt(y(p.y)),
                fmt(style.point_radius),
                style.case_color,
                p.cause
            );
        }

        // Axes with end labels.
        let _ = writeln!(
            svg,
            "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>",
            m = fmt(style.margin),
            b = fmt(top + panel_h),
            r = fmt(style.margin + panel_w)
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>",
            m = fmt(style.margin),
            t = fmt(top),
            b = fmt(top + panel_h)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>",
            fmt(style.margin + panel_w),
            fmt(top + panel_h + 14.0),
            fmt(t_max)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>",
            fmt(style.margin - 4.0),
            fmt(top + 4.0),
            stratum.n_subjects
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>",
            fmt(style.margin),
            fmt(top - 8.0),
            stratum.label
        );
        let _ = writeln!(svg, "</g>");
    }
    let _ = writeln!(svg, "</svg>");
    svg.into_bytes()
}
