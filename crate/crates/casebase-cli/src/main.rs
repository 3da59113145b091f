//! Command-line front end for the case-base workflow: simulate data with
//! known truth, sample person-moments, fit hazard models, turn fits into
//! risk curves, draw population-time plots, and compare nested fits.
//!
//! Every stochastic step takes a seed (defaulted when omitted) and echoes
//! it into a `<output>.meta.json` sidecar along with input fingerprints,
//! so reruns with the same configuration are byte-identical except for the
//! metadata timestamp.

use casebase::design::Profile;
use casebase::glm::HazardModel;
use casebase::risk::IntegrationMethod;
use casebase::table::{Table, Value};
use casebase::{ColumnSchema, CovValue, Error, ErrorClass, PersonMomentTable, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "casebase",
    version,
    about = "Case-base sampling for parametric survival analysis"
)]
struct Cli {
    /// key = value file supplying defaults for long flag names;
    /// explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from a truth description (JSON).
    Simulate(SimulateArgs),
    /// Draw the case and base series from a survival dataset.
    Sample(SampleArgs),
    /// Fit a hazard model to person-moments (samples first if needed).
    Fit(FitArgs),
    /// Survival and cumulative-incidence curves from a fitted model.
    Risk(RiskArgs),
    /// Population-time plot as SVG or a layout table.
    Poptime(PoptimeArgs),
    /// Likelihood ratio test of a nested model against a full one.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// TruthSpec JSON file.
    #[arg(long, value_name = "FILE")]
    truth: PathBuf,
    /// Dataset CSV to write; a resolved `<out>.truth.json` sidecar is
    /// written next to it.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Overrides the seed in the truth file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the cohort size in the truth file.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args, Clone)]
struct SchemaArgs {
    #[arg(long)]
    time_column: Option<String>,
    #[arg(long)]
    event_column: Option<String>,
    #[arg(long)]
    id_column: Option<String>,
    /// Comma-separated covariate names treated as categorical.
    #[arg(long)]
    categorical: Option<String>,
    /// Reference level override, `covariate=level`; repeatable.
    #[arg(long)]
    reference: Vec<String>,
    /// Administrative follow-up limit; defaults to the maximum time.
    #[arg(long)]
    tau: Option<f64>,
    /// Field delimiter of the input file.
    #[arg(long)]
    delimiter: Option<char>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Person-moment CSV to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Base-series size per event.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    schema: SchemaArgs,
}

#[derive(ValueEnum, Clone, Copy, PartialEq)]
enum FamilyArg {
    Binary,
    Multinomial,
    Penalized,
}

#[derive(Args)]
struct FitArgs {
    /// Person-moment table, or a raw dataset (sampled automatically).
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Model JSON (plain families) or path table CSV (penalized).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Term language, e.g. `time=bspline(df=3);terms=trt;interactions=trt:time`.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Base-series ratio when the input needs sampling.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    schema: SchemaArgs,
    /// Elastic-net mixing weight (penalized family).
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n_lambda: Option<usize>,
    #[arg(long)]
    min_ratio: Option<f64>,
    /// Explicit comma-separated decreasing lambda grid.
    #[arg(long)]
    lambdas: Option<String>,
    /// Run cross-validation with this many folds (penalized family);
    /// writes `<out>.cv.csv`.
    #[arg(long)]
    cv_folds: Option<usize>,
    /// Save a loadable model at the CV-min lambda (requires --cv-folds).
    #[arg(long, value_name = "FILE")]
    model_out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, PartialEq)]
enum MethodArg {
    Trapezoid,
    /// Short alias for monte-carlo.
    Mont,
    MonteCarlo,
}

#[derive(Args)]
struct RiskArgs {
    /// Fitted model JSON.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Evaluation grid `start:stop:count` with start 0.
    #[arg(long)]
    grid: Option<String>,
    /// One profile per row; columns name covariates. Omitted: baseline.
    #[arg(long, value_name = "FILE")]
    profiles: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Trapezoid subintervals per grid segment.
    #[arg(long)]
    refinement: Option<usize>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PoptimeArgs {
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// `.svg` renders the plot; `.csv` writes the layout table.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Categorical covariate to facet by.
    #[arg(long)]
    exposure: Option<String>,
    /// Person-moment table whose base series is drawn as points.
    #[arg(long, value_name = "FILE")]
    base: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    schema: SchemaArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, value_name = "FILE")]
    nested: PathBuf,
    #[arg(long, value_name = "FILE")]
    full: PathBuf,
    /// Result JSON; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

/// key = value defaults from --config; lines starting with # are skipped.
struct Defaults(BTreeMap<String, String>);

impl Defaults {
    fn load(path: Option<&Path>) -> Result<Defaults> {
        let mut map = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((k, v)) = line.split_once('=') else {
                    return Err(Error::InvalidArgument(format!(
                        "config line {}: expected key = value",
                        lineno + 1
                    )));
                };
                map.insert(k.trim().replace('-', "_"), v.trim().to_string());
            }
        }
        Ok(Defaults(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::InvalidArgument(format!("config key {key}: cannot parse `{raw}`"))
            }),
        }
    }

    fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        Ok(match flag {
            Some(v) => v,
            None => self.get(key)?.unwrap_or(default),
        })
    }

    fn resolve_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        Ok(match flag {
            Some(v) => Some(v),
            None => self.get(key)?,
        })
    }
}

#[derive(Serialize)]
struct RunMeta {
    command: String,
    version: String,
    seed: Option<u64>,
    /// Input path -> FNV-1a 64 fingerprint of the raw bytes.
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    /// Seconds since the Unix epoch; the only non-reproducible field.
    unix_time: u64,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    details: serde_json::Value,
}

impl RunMeta {
    fn new(command: &str, seed: Option<u64>) -> RunMeta {
        RunMeta {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            unix_time: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            details: serde_json::Value::Null,
        }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        let mut h: u64 = 0xcbf29ce484222325;
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        self.inputs
            .insert(path.display().to_string(), format!("{h:016x}"));
        Ok(())
    }

    fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes `<primary>.meta.json`.
    fn write(&self, primary: &Path) -> Result<()> {
        let path = sibling(primary, ".meta.json");
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidArgument(format!("metadata serialization: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}{suffix}", path.display()))
}

fn schema_from(args: &SchemaArgs, cfg: &Defaults) -> Result<(ColumnSchema, u8, Option<f64>)> {
    let mut schema = ColumnSchema::new(
        &cfg.resolve(args.time_column.clone(), "time_column", "time".into())?,
        &cfg.resolve(args.event_column.clone(), "event_column", "event".into())?,
    );
    if let Some(id) = cfg.resolve_opt(args.id_column.clone(), "id_column")? {
        schema = schema.with_id(&id);
    }
    if let Some(cats) = cfg.resolve_opt(args.categorical.clone(), "categorical")? {
        for name in cats.split(',').filter(|s| !s.trim().is_empty()) {
            schema = schema.categorical(name.trim());
        }
    }
    for pair in &args.reference {
        let Some((cov, level)) = pair.split_once('=') else {
            return Err(Error::InvalidArgument(format!(
                "--reference expects covariate=level, got `{pair}`"
            )));
        };
        schema = schema.reference_level(cov.trim(), level.trim());
    }
    let delimiter = cfg.resolve(args.delimiter, "delimiter", ',')? as u8;
    let tau = cfg.resolve_opt(args.tau, "tau")?;
    Ok((schema, delimiter, tau))
}

fn categorical_list(args: &SchemaArgs, cfg: &Defaults) -> Result<Vec<String>> {
    Ok(cfg
        .resolve_opt(args.categorical.clone(), "categorical")?
        .map(|s| {
            s.split(',')
                .map(|t| t.trim().to_string())
                .filter(|t| !t.is_empty())
                .collect()
        })
        .unwrap_or_default())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::InvalidArgument(format!("grid `{spec}`: expected start:stop:count"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    if count < 2 || !(stop > start) {
        return Err(bad());
    }
    Ok((0..count)
        .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
        .collect())
}

fn profiles_from(path: Option<&Path>) -> Result<Vec<Profile>> {
    let Some(path) = path else {
        return Ok(vec![Profile::default()]);
    };
    let table = Table::read_csv(path)?;
    let mut out = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let mut profile = Profile::default();
        for (name, cell) in table.columns.iter().zip(row) {
            let value = match cell {
                Value::Real(v) => CovValue::Num(*v),
                Value::Int(v) => CovValue::Num(*v as f64),
                Value::Text(s) => CovValue::Cat(s.clone()),
            };
            profile.values.insert(name.clone(), value);
        }
        out.push(profile);
    }
    if out.is_empty() {
        out.push(Profile::default());
    }
    Ok(out)
}

fn run_simulate(args: SimulateArgs, cfg: &Defaults) -> Result<()> {
    let text = std::fs::read_to_string(&args.truth)?;
    let mut spec: casebase::TruthSpec = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("truth file: {e}")))?;
    if let Some(seed) = cfg.resolve_opt(args.seed, "seed")? {
        spec.seed = seed;
    }
    if let Some(n) = cfg.resolve_opt(args.n, "n")? {
        spec.n = n;
    }
    let dataset = casebase::simulate_dataset(&spec)?;

    let mut meta = RunMeta::new("simulate", Some(spec.seed));
    meta.input(&args.truth)?;
    dataset.to_table().write_csv(&args.out)?;
    meta.output(&args.out);

    let truth_out = sibling(&args.out, ".truth.json");
    let resolved = serde_json::to_string_pretty(&spec)
        .map_err(|e| Error::InvalidArgument(format!("truth serialization: {e}")))?;
    std::fs::write(&truth_out, resolved)?;
    meta.output(&truth_out);
    meta.details = serde_json::json!({
        "n_subjects": dataset.n_subjects(),
        "n_events": dataset.n_events(),
        "tau": dataset.tau,
    });
    meta.write(&args.out)
}

fn run_sample(args: SampleArgs, cfg: &Defaults) -> Result<()> {
    let (schema, delimiter, tau) = schema_from(&args.schema, cfg)?;
    let ratio = cfg.resolve(args.ratio, "ratio", 100.0)?;
    let seed = cfg.resolve(args.seed, "seed", 1)?;
    let dataset = casebase::data::load_dataset_with(&args.input, &schema, delimiter, tau)?;
    let moments = casebase::sample_base_series(&dataset, ratio, seed)?;

    let mut meta = RunMeta::new("sample", Some(seed));
    meta.input(&args.input)?;
    moments.to_table().write_csv(&args.out)?;
    meta.output(&args.out);
    meta.details = serde_json::json!({
        "ratio": ratio,
        "base_rows": moments.n_base(),
        "case_rows": moments.n_cases(),
        "total_person_time": moments.meta.total_person_time,
    });
    meta.write(&args.out)
}

/// Person-moments from the input file: used directly when it already has
/// the moment columns, sampled otherwise.
fn load_moments(
    input: &Path,
    schema_args: &SchemaArgs,
    cfg: &Defaults,
    ratio: f64,
    seed: u64,
) -> Result<(PersonMomentTable, bool)> {
    let (schema, delimiter, tau) = schema_from(schema_args, cfg)?;
    let table = Table::read_delimited(input, delimiter)?;
    if PersonMomentTable::table_has_signature(&table) {
        let cats = categorical_list(schema_args, cfg)?;
        Ok((PersonMomentTable::from_table(&table, &cats)?, false))
    } else {
        let dataset = casebase::data::dataset_from_table(&table, &schema, tau)?;
        Ok((casebase::sample_base_series(&dataset, ratio, seed)?, true))
    }
}

fn run_fit(args: FitArgs, cfg: &Defaults) -> Result<()> {
    let ratio = cfg.resolve(args.ratio, "ratio", 100.0)?;
    let seed = cfg.resolve(args.seed, "seed", 1)?;
    let family = match args.family {
        Some(f) => Some(f),
        None => match cfg.0.get("family").map(String::as_str) {
            None => None,
            Some("binary") => Some(FamilyArg::Binary),
            Some("multinomial") => Some(FamilyArg::Multinomial),
            Some("penalized") => Some(FamilyArg::Penalized),
            Some(other) => {
                return Err(Error::InvalidArgument(format!(
                    "config key family: unknown value `{other}`"
                )))
            }
        },
    };
    let model_spec = match cfg.resolve_opt(args.model.clone(), "model")? {
        Some(text) => casebase::ModelSpec::parse(&text)?,
        None => casebase::ModelSpec::default(),
    };

    let (moments, sampled) = load_moments(&args.input, &args.schema, cfg, ratio, seed)?;
    let mut meta = RunMeta::new("fit", Some(seed));
    meta.input(&args.input)?;

    if family == Some(FamilyArg::Penalized) {
        return run_fit_penalized(args, cfg, &moments, model_spec, sampled, meta);
    }

    let model = HazardModel::fit(&moments, &model_spec)?;
    match family {
        Some(FamilyArg::Binary) if model.causes != 1 => {
            return Err(Error::InvalidArgument(format!(
                "family binary requested but the data has {} event types",
                model.causes
            )));
        }
        Some(FamilyArg::Multinomial) if model.causes < 2 => {
            return Err(Error::InvalidArgument(
                "family multinomial requested but the data has one event type".into(),
            ));
        }
        _ => {}
    }
    model.save(&args.out)?;
    meta.output(&args.out);
    meta.details = serde_json::json!({
        "sampled": sampled,
        "causes": model.causes,
        "deviance": model.fit.deviance,
        "aic": model.aic(),
        "converged": model.fit.converged,
        "iterations": model.fit.iterations,
        "n_rows": model.fit.n_rows,
        "columns": model.design.column_names,
    });
    meta.write(&args.out)
}

fn run_fit_penalized(
    args: FitArgs,
    cfg: &Defaults,
    moments: &PersonMomentTable,
    model_spec: casebase::ModelSpec,
    sampled: bool,
    mut meta: RunMeta,
) -> Result<()> {
    let (info, matrix) = casebase::build_design_matrix(moments, &model_spec)?;
    let mut opts = casebase::PenalizedOptions {
        alpha: cfg.resolve(args.alpha, "alpha", 1.0)?,
        penalty_factors: Some(casebase::default_penalty_factors(&info)),
        lambdas: None,
        n_lambda: cfg.resolve(args.n_lambda, "n_lambda", 100)?,
        min_ratio: cfg.resolve(args.min_ratio, "min_ratio", 1e-4)?,
        standardize: true,
    };
    if let Some(list) = cfg.resolve_opt(args.lambdas.clone(), "lambdas")? {
        let grid: std::result::Result<Vec<f64>, _> =
            list.split(',').map(|v| v.trim().parse::<f64>()).collect();
        opts.lambdas = Some(grid.map_err(|_| {
            Error::InvalidArgument(format!("--lambdas: cannot parse `{list}`"))
        })?);
    }

    let folds = cfg.resolve_opt(args.cv_folds, "cv_folds")?;
    let seed = meta.seed.unwrap_or(1);

    let cv = match folds {
        Some(k) => Some(casebase::cv_elastic_net(
            matrix.x.view(),
            &matrix.y,
            matrix.offset.view(),
            &opts,
            k,
            seed,
        )?),
        None => None,
    };
    if let Some(cv) = &cv {
        // Reuse the full-data grid so the path aligns with the CV curve.
        opts.lambdas = Some(cv.lambdas.clone());
    }
    let path = casebase::fit_elastic_net(matrix.x.view(), &matrix.y, matrix.offset.view(), &opts)?;

    let mut columns = vec!["lambda".to_string(), "deviance".to_string()];
    columns.extend(matrix.column_names.iter().cloned());
    let mut path_table = Table::new(columns);
    for (k, &lambda) in path.lambdas.iter().enumerate() {
        let mut row = vec![Value::Real(lambda), Value::Real(path.deviances[k])];
        for j in 0..matrix.x.ncols() {
            row.push(Value::Real(path.coefficients[[k, j]]));
        }
        path_table.push_row(row);
    }
    path_table.write_csv(&args.out)?;
    meta.output(&args.out);

    let mut details = serde_json::json!({
        "sampled": sampled,
        "alpha": path.alpha,
        "n_lambda": path.lambdas.len(),
        "columns": matrix.column_names,
    });
    if let Some(cv) = &cv {
        let mut cv_table = Table::new(
            ["lambda", "mean_deviance", "se_deviance"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        for (k, &lambda) in cv.lambdas.iter().enumerate() {
            cv_table.push_row(vec![
                Value::Real(lambda),
                Value::Real(cv.mean_deviance[k]),
                Value::Real(cv.se_deviance[k]),
            ]);
        }
        let cv_out = sibling(&args.out, ".cv.csv");
        cv_table.write_csv(&cv_out)?;
        meta.output(&cv_out);
        details["lambda_min"] = serde_json::json!(cv.lambda_min);
        details["lambda_one_se"] = serde_json::json!(cv.lambda_one_se);

        if let Some(model_out) = &args.model_out {
            let k_min = cv
                .lambdas
                .iter()
                .position(|&l| l == cv.lambda_min)
                .expect("lambda_min is on the grid");
            let p = matrix.x.ncols();
            let mut coefficients = ndarray::Array2::zeros((1, p));
            coefficients
                .row_mut(0)
                .assign(&path.coefficients.row(k_min));
            let dev = path.deviances[k_min];
            let model = HazardModel {
                causes: 1,
                design: info,
                coefficients,
                // Penalized fits carry no covariance estimate.
                covariance: ndarray::Array2::zeros((p, p)),
                offset_value: matrix.offset[0],
                // Null deviance, AIC and gradient norm are not defined for
                // a penalized fit; stored as 0.
                fit: casebase::glm::FitStats {
                    deviance: dev,
                    null_deviance: 0.0,
                    aic: 0.0,
                    iterations: 0,
                    converged: true,
                    gradient_norm: 0.0,
                    n_rows: matrix.x.nrows(),
                    n_parameters: p,
                    data_fingerprint: casebase::glm::data_fingerprint(
                        &matrix.y,
                        matrix.offset.view(),
                    ),
                },
            };
            model.save(model_out)?;
            meta.output(model_out);
        }
    } else if args.model_out.is_some() {
        return Err(Error::InvalidArgument(
            "--model-out needs --cv-folds to pick a lambda".into(),
        ));
    }

    meta.details = details;
    meta.write(&args.out)
}

fn run_risk(args: RiskArgs, cfg: &Defaults) -> Result<()> {
    let model = HazardModel::load(&args.model)?;
    let grid_spec = cfg
        .resolve_opt(args.grid.clone(), "grid")?
        .ok_or_else(|| Error::InvalidArgument("--grid is required".into()))?;
    let grid = parse_grid(&grid_spec)?;
    let profiles = profiles_from(args.profiles.as_deref())?;
    let method_arg = match args.method {
        Some(m) => m,
        None => match cfg.0.get("method").map(String::as_str) {
            None | Some("trapezoid") => MethodArg::Trapezoid,
            Some("mont") | Some("monte-carlo") => MethodArg::MonteCarlo,
            Some(other) => {
                return Err(Error::InvalidArgument(format!(
                    "config key method: unknown value `{other}`"
                )))
            }
        },
    };
    let seed = cfg.resolve(args.seed, "seed", 1)?;
    let method = match method_arg {
        MethodArg::Trapezoid => IntegrationMethod::Trapezoid {
            refinement: cfg.resolve(args.refinement, "refinement", 100)?,
        },
        MethodArg::Mont | MethodArg::MonteCarlo => IntegrationMethod::MonteCarlo {
            n_samples: cfg.resolve(args.n_samples, "n_samples", 10_000)?,
            seed,
        },
    };

    let curve = casebase::cumulative_incidence(&model, &profiles, &grid, method)?;
    let mut meta = RunMeta::new(
        "risk",
        match method {
            IntegrationMethod::MonteCarlo { .. } => Some(seed),
            _ => None,
        },
    );
    meta.input(&args.model)?;
    if let Some(p) = &args.profiles {
        meta.input(p)?;
    }
    curve.to_table().write_csv(&args.out)?;
    meta.output(&args.out);
    meta.details = serde_json::json!({
        "causes": curve.n_causes(),
        "profiles": curve.n_profiles(),
        "identity_gap": curve.identity_gap(),
    });
    meta.write(&args.out)
}

fn run_poptime(args: PoptimeArgs, cfg: &Defaults) -> Result<()> {
    let (schema, delimiter, tau) = schema_from(&args.schema, cfg)?;
    let dataset = casebase::data::load_dataset_with(&args.input, &schema, delimiter, tau)?;
    let base = match &args.base {
        Some(path) => {
            let table = Table::read_csv(path)?;
            let cats = categorical_list(&args.schema, cfg)?;
            Some(PersonMomentTable::from_table(&table, &cats)?)
        }
        None => None,
    };
    let exposure = cfg.resolve_opt(args.exposure.clone(), "exposure")?;
    let seed = cfg.resolve(args.seed, "seed", 1)?;
    let layout = casebase::poptime_layout(&dataset, exposure.as_deref(), base.as_ref(), seed)?;

    let mut meta = RunMeta::new("poptime", Some(seed));
    meta.input(&args.input)?;
    if let Some(b) = &args.base {
        meta.input(b)?;
    }
    if args.out.extension().and_then(|e| e.to_str()) == Some("svg") {
        let bytes = casebase::render_svg(&layout, &casebase::PlotStyle::default());
        std::fs::write(&args.out, bytes)?;
    } else {
        layout.to_table().write_csv(&args.out)?;
    }
    meta.output(&args.out);
    meta.details = serde_json::json!({
        "strata": layout.strata.iter().map(|s| s.label.clone()).collect::<Vec<_>>(),
    });
    meta.write(&args.out)
}

fn run_compare(args: CompareArgs) -> Result<()> {
    let nested = HazardModel::load(&args.nested)?;
    let full = HazardModel::load(&args.full)?;
    let lrt = HazardModel::lrt(&nested, &full)?;
    let result = serde_json::json!({
        "statistic": lrt.statistic,
        "df": lrt.df,
        "p_value": lrt.p_value,
    });
    let text = serde_json::to_string_pretty(&result)
        .map_err(|e| Error::InvalidArgument(format!("result serialization: {e}")))?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, text)?;
            let mut meta = RunMeta::new("compare", None);
            meta.input(&args.nested)?;
            meta.input(&args.full)?;
            meta.output(path);
            meta.details = result;
            meta.write(path)?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Defaults::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(args) => run_simulate(args, &cfg),
        Command::Sample(args) => run_sample(args, &cfg),
        Command::Fit(args) => run_fit(args, &cfg),
        Command::Risk(args) => run_risk(args, &cfg),
        Command::Poptime(args) => run_poptime(args, &cfg),
        Command::Compare(args) => run_compare(args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            let text = e.to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("bad usage");
            eprintln!("error[usage]: {}", first.trim());
            std::process::exit(2);
        }
    };
    if let Err(err) = run(cli) {
        let (tag, code) = match err.class() {
            ErrorClass::Data => ("data", 3),
            ErrorClass::Numerical => ("numerical", 4),
        };
        eprintln!("error[{tag}]: {}", err.to_string().replace('\n', " "));
        std::process::exit(code);
    }
}
