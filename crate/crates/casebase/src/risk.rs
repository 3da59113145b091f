//! Survival and cumulative-incidence curves from fitted hazard models.
//!
//! S(t) = exp(-integral of the total hazard), CI(t) = 1 - S(t), and for
//! competing risks the cause-specific CI_j(t) = integral of the subdensity
//! f_j(t) = lambda_j(t) S(t). Integration is cumulative trapezoid on a
//! refined grid, or Monte Carlo over uniform time draws.

use crate::design::Profile;
use crate::error::{Error, Result};
use crate::glm::HazardModel;
use crate::rng::{self, stream};
use crate::table::{Table, Value};
use ndarray::{Array2, Array3};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntegrationMethod {
    /// Trapezoid rule with this many subintervals per user grid segment.
    Trapezoid { refinement: usize },
    MonteCarlo { n_samples: usize, seed: u64 },
}

impl Default for IntegrationMethod {
    fn default() -> Self {
        IntegrationMethod::Trapezoid { refinement: 100 }
    }
}

#[derive(Debug, Clone)]
pub struct McMeta {
    pub n_samples: usize,
    pub seed: u64,
    /// (grid point, profile, cause) standard error of each CI value.
    pub standard_errors: Array3<f64>,
    pub survival_standard_errors: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct RiskCurve {
    pub time_grid: Vec<f64>,
    /// (grid point, profile, cause) cumulative incidence.
    pub values: Array3<f64>,
    /// (grid point, profile) overall survival.
    pub survival: Array2<f64>,
    pub method: IntegrationMethod,
    pub mc_meta: Option<McMeta>,
}

/// Survival for one profile, with standard errors under Monte Carlo.
#[derive(Debug, Clone)]
pub struct SurvivalCurve {
    pub time_grid: Vec<f64>,
    pub survival: Vec<f64>,
    pub standard_errors: Option<Vec<f64>>,
}

/// Cause-specific hazards at one time, causes in order 1..=J.
pub fn hazard_at(model: &HazardModel, t: f64, profile: &Profile) -> Result<Vec<f64>> {
    (1..=model.causes)
        .map(|j| model.hazard(t, profile, j))
        .collect()
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid[0] != 0.0 {
        return Err(Error::InvalidArgument(
            "time grid must start at 0".into(),
        ));
    }
    for pair in grid.windows(2) {
        if !(pair[1] > pair[0]) || !pair[1].is_finite() {
            return Err(Error::InvalidArgument(
                "time grid must be strictly increasing and finite".into(),
            ));
        }
    }
    Ok(())
}

fn validate_method(method: &IntegrationMethod) -> Result<()> {
    match *method {
        IntegrationMethod::Trapezoid { refinement } if refinement == 0 => Err(
            Error::InvalidArgument("refinement factor must be at least 1".into()),
        ),
        IntegrationMethod::MonteCarlo { n_samples, .. } if n_samples < 100 => Err(
            Error::InvalidArgument(format!("{n_samples} Monte Carlo samples; need at least 100")),
        ),
        _ => Ok(()),
    }
}

/// Cumulative hazard by trapezoid over the refined grid; each cause then
/// receives its share of the exact survival decrement per step (averaged
/// hazards treated as constant within a step), so the per-cause curves and
/// survival sum to one by telescoping. Returns survival and per-cause CI
/// at the user points.
fn trapezoid_curves(
    model: &HazardModel,
    profile: &Profile,
    grid: &[f64],
    refinement: usize,
) -> Result<(Vec<f64>, Array2<f64>)> {
    let causes = model.causes;
    let mut survival = Vec::with_capacity(grid.len());
    let mut ci = Array2::zeros((grid.len(), causes));

    let mut lam_prev = hazard_at(model, grid[0], profile)?;
    let mut cum_hazard = 0.0f64;
    let mut s_prev = 1.0f64;
    let mut ci_acc = vec![0.0f64; causes];
    survival.push(1.0);

    for (k, seg) in grid.windows(2).enumerate() {
        let h = (seg[1] - seg[0]) / refinement as f64;
        for step in 1..=refinement {
            let t = seg[0] + h * step as f64;
            let lam = hazard_at(model, t, profile)?;
            let mut avg_tot = 0.0;
            for j in 0..causes {
                avg_tot += 0.5 * (lam_prev[j] + lam[j]);
            }
            cum_hazard += h * avg_tot;
            let s = (-cum_hazard).exp();
            if avg_tot > 0.0 {
                let decrement = s_prev - s;
                for j in 0..causes {
                    ci_acc[j] += decrement * 0.5 * (lam_prev[j] + lam[j]) / avg_tot;
                }
            }
            lam_prev = lam;
            s_prev = s;
        }
        survival.push(s_prev);
        for j in 0..causes {
            ci[[k + 1, j]] = ci_acc[j];
        }
    }
    Ok((survival, ci))
}

/// Uniform draws on [0, 1), shared across grid points so the estimated
/// cumulative hazard inherits the true curve's monotonicity.
fn mc_uniforms(n_samples: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream_rng(seed, stream::MONTE_CARLO, 0);
    let mut u: Vec<f64> = (0..n_samples).map(|_| r.gen_range(0.0..1.0)).collect();
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    u
}

fn mean_sd(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Lambda-hat(t) = t * mean of total hazard at t*U, U uniform; S = exp(-).
fn mc_survival_point(
    model: &HazardModel,
    profile: &Profile,
    t: f64,
    u: &[f64],
) -> Result<(f64, f64)> {
    let mut draws = Vec::with_capacity(u.len());
    for &uk in u {
        draws.push(model.total_hazard(t * uk, profile)?);
    }
    let (mean, sd) = mean_sd(&draws);
    let cum = t * mean;
    let se_cum = t * sd / (u.len() as f64).sqrt();
    let s = (-cum).exp();
    Ok((s, s * se_cum))
}

pub fn survival_curve(
    model: &HazardModel,
    profile: &Profile,
    grid: &[f64],
    method: IntegrationMethod,
) -> Result<SurvivalCurve> {
    validate_grid(grid)?;
    validate_method(&method)?;
    match method {
        IntegrationMethod::Trapezoid { refinement } => {
            let (survival, _) = trapezoid_curves(model, profile, grid, refinement)?;
            Ok(SurvivalCurve {
                time_grid: grid.to_vec(),
                survival,
                standard_errors: None,
            })
        }
        IntegrationMethod::MonteCarlo { n_samples, seed } => {
            let u = mc_uniforms(n_samples, seed);
            let mut survival = vec![1.0];
            let mut se = vec![0.0];
            for &t in &grid[1..] {
                let (s, s_se) = mc_survival_point(model, profile, t, &u)?;
                survival.push(s);
                se.push(s_se);
            }
            Ok(SurvivalCurve {
                time_grid: grid.to_vec(),
                survival,
                standard_errors: Some(se),
            })
        }
    }
}

/// Single-event cumulative incidence, CI = 1 - S.
pub fn cif_single(
    model: &HazardModel,
    profiles: &[Profile],
    grid: &[f64],
    method: IntegrationMethod,
) -> Result<RiskCurve> {
    if model.causes != 1 {
        return Err(Error::InvalidArgument(format!(
            "single-event curve for a {}-cause model; use cif_competing",
            model.causes
        )));
    }
    validate_grid(grid)?;
    validate_method(&method)?;
    let m = grid.len();
    let mut values = Array3::zeros((m, profiles.len(), 1));
    let mut survival = Array2::zeros((m, profiles.len()));
    let mut se = Array3::zeros((m, profiles.len(), 1));
    let mut surv_se = Array2::zeros((m, profiles.len()));
    for (p, profile) in profiles.iter().enumerate() {
        let curve = survival_curve(model, profile, grid, method)?;
        for i in 0..m {
            survival[[i, p]] = curve.survival[i];
            values[[i, p, 0]] = 1.0 - curve.survival[i];
            if let Some(errs) = &curve.standard_errors {
                se[[i, p, 0]] = errs[i];
                surv_se[[i, p]] = errs[i];
            }
        }
    }
    let mc_meta = match method {
        IntegrationMethod::MonteCarlo { n_samples, seed } => Some(McMeta {
            n_samples,
            seed,
            standard_errors: se,
            survival_standard_errors: surv_se,
        }),
        _ => None,
    };
    Ok(RiskCurve {
        time_grid: grid.to_vec(),
        values,
        survival,
        method,
        mc_meta,
    })
}

/// Competing-risk curves: overall survival from the summed hazards, then
/// CI_j as the integral of lambda_j * S.
pub fn cif_competing(
    model: &HazardModel,
    profiles: &[Profile],
    grid: &[f64],
    method: IntegrationMethod,
) -> Result<RiskCurve> {
    if model.causes < 2 {
        return Err(Error::InvalidArgument(
            "competing-risk curves need at least two causes".into(),
        ));
    }
    validate_grid(grid)?;
    validate_method(&method)?;
    let m = grid.len();
    let causes = model.causes;
    let mut values = Array3::zeros((m, profiles.len(), causes));
    let mut survival = Array2::zeros((m, profiles.len()));
    let mut mc_se = Array3::zeros((m, profiles.len(), causes));
    let mut surv_se = Array2::zeros((m, profiles.len()));

    for (p, profile) in profiles.iter().enumerate() {
        match method {
            IntegrationMethod::Trapezoid { refinement } => {
                let (s, ci) = trapezoid_curves(model, profile, grid, refinement)?;
                for i in 0..m {
                    survival[[i, p]] = s[i];
                    for j in 0..causes {
                        values[[i, p, j]] = ci[[i, j]];
                    }
                }
            }
            IntegrationMethod::MonteCarlo { n_samples, seed } => {
                let u = mc_uniforms(n_samples, seed);
                survival[[0, p]] = 1.0;
                for (i, &t) in grid.iter().enumerate().skip(1) {
                    let (s, s_se) = mc_survival_point(model, profile, t, &u)?;
                    survival[[i, p]] = s;
                    surv_se[[i, p]] = s_se;
                    // Subdensity draws share the sorted sample: survival at
                    // each node comes from a running trapezoid over the
                    // nodes themselves.
                    let mut cum = 0.0;
                    let mut t_prev = 0.0;
                    let mut tot_prev = model.total_hazard(0.0, profile)?;
                    let mut g = vec![Vec::with_capacity(u.len()); causes];
                    for &uk in &u {
                        let tk = t * uk;
                        let lam = hazard_at(model, tk, profile)?;
                        let tot: f64 = lam.iter().sum();
                        cum += 0.5 * (tk - t_prev) * (tot_prev + tot);
                        let sk = (-cum).exp();
                        for j in 0..causes {
                            g[j].push(lam[j] * sk);
                        }
                        t_prev = tk;
                        tot_prev = tot;
                    }
                    for j in 0..causes {
                        let (mean, sd) = mean_sd(&g[j]);
                        values[[i, p, j]] = t * mean;
                        mc_se[[i, p, j]] = t * sd / (u.len() as f64).sqrt();
                    }
                }
            }
        }
    }

    let mc_meta = match method {
        IntegrationMethod::MonteCarlo { n_samples, seed } => Some(McMeta {
            n_samples,
            seed,
            standard_errors: mc_se,
            survival_standard_errors: surv_se,
        }),
        _ => None,
    };
    Ok(RiskCurve {
        time_grid: grid.to_vec(),
        values,
        survival,
        method,
        mc_meta,
    })
}

/// Single dispatch point for the CLI: one cause gives CI = 1 - S, more
/// give the competing-risk procedure.
pub fn cumulative_incidence(
    model: &HazardModel,
    profiles: &[Profile],
    grid: &[f64],
    method: IntegrationMethod,
) -> Result<RiskCurve> {
    if model.causes == 1 {
        cif_single(model, profiles, grid, method)
    } else {
        cif_competing(model, profiles, grid, method)
    }
}

impl RiskCurve {
    pub fn n_profiles(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn n_causes(&self) -> usize {
        self.values.shape()[2]
    }

    /// Largest deviation from sum of CI plus S equals one. Zero by
    /// construction for single-event curves.
    pub fn identity_gap(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.time_grid.len() {
            for p in 0..self.n_profiles() {
                let total: f64 = (0..self.n_causes()).map(|j| self.values[[i, p, j]]).sum();
                worst = worst.max((total + self.survival[[i, p]] - 1.0).abs());
            }
        }
        worst
    }

    /// Wide table: time, then survival and per-cause CI per profile, with
    /// standard-error columns under Monte Carlo.
    pub fn to_table(&self) -> Table {
        let mut columns = vec!["time".to_string()];
        for p in 0..self.n_profiles() {
            columns.push(format!("p{p}_survival"));
            for j in 1..=self.n_causes() {
                columns.push(format!("p{p}_ci_cause{j}"));
            }
            if self.mc_meta.is_some() {
                for j in 1..=self.n_causes() {
                    columns.push(format!("p{p}_ci_cause{j}_se"));
                }
            }
        }
        let mut table = Table::new(columns);
        for (i, &t) in self.time_grid.iter().enumerate() {
            let mut row = vec![Value::Real(t)];
            for p in 0..self.n_profiles() {
                row.push(Value::Real(self.survival[[i, p]]));
                for j in 0..self.n_causes() {
                    row.push(Value::Real(self.values[[i, p, j]]));
                }
                if let Some(meta) = &self.mc_meta {
                    for j in 0..self.n_causes() {
                        row.push(Value::Real(meta.standard_errors[[i, p, j]]));
                    }
                }
            }
            table.push_row(row);
        }
        table
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::TimeBasis;
    use crate::design::DesignInfo;
    use crate::glm::FitStats;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use ndarray::Array2;

    /// Model with hand-set coefficients; one row per cause.
    fn manual_model(basis: TimeBasis, coef: &[&[f64]]) -> HazardModel {
        let mut column_names = vec!["intercept".to_string()];
        column_names.extend(basis.column_names());
        let design = DesignInfo {
            time_basis: basis,
            mains: vec![],
            interactions: vec![],
            column_names,
        };
        let p = design.n_columns();
        let causes = coef.len();
        let mut coefficients = Array2::zeros((causes, p));
        for (j, row) in coef.iter().enumerate() {
            assert_eq!(row.len(), p);
            for (k, &v) in row.iter().enumerate() {
                coefficients[[j, k]] = v;
            }
        }
        HazardModel {
            causes,
            design,
            coefficients,
            covariance: Array2::eye(causes * p),
            offset_value: 0.0,
            fit: FitStats {
                deviance: 0.0,
                null_deviance: 0.0,
                aic: 0.0,
                iterations: 0,
                converged: true,
                gradient_norm: 0.0,
                n_rows: 0,
                n_parameters: causes * p,
                data_fingerprint: 0,
            },
        }
    }

    fn unit_grid(stop: f64, points: usize) -> Vec<f64> {
        (0..points)
            .map(|i| stop * i as f64 / (points - 1) as f64)
            .collect()
    }

    fn gompertz_survival(a: f64, b: f64, t: f64) -> f64 {
        (-(a.exp() / b) * ((b * t).exp() - 1.0)).exp()
    }

    #[test]
    fn constant_hazard_survival_is_exact() {
        let model = manual_model(TimeBasis::Constant, &[&[0.0]]);
        let curve = survival_curve(
            &model,
            &Profile::default(),
            &unit_grid(1.0, 5),
            IntegrationMethod::Trapezoid { refinement: 1 },
        )
        .unwrap();
        assert_abs_diff_eq!(curve.survival[4], (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn constant_hazard_cif_at_one() {
        let model = manual_model(TimeBasis::Constant, &[&[0.0]]);
        let curve = cif_single(
            &model,
            &[Profile::default()],
            &unit_grid(1.0, 11),
            IntegrationMethod::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(
            curve.values[[10, 0, 0]],
            1.0 - (-1.0f64).exp(),
            epsilon = 1e-12
        );
        assert_eq!(curve.values[[0, 0, 0]], 0.0);
        assert_eq!(curve.survival[[0, 0]], 1.0);
    }

    #[test]
    fn gompertz_matches_analytic_at_refinement_100() {
        let (a, b) = (-1.0, 0.7);
        let model = manual_model(TimeBasis::Linear, &[&[a, b]]);
        let grid = unit_grid(2.0, 9);
        let curve = survival_curve(
            &model,
            &Profile::default(),
            &grid,
            IntegrationMethod::Trapezoid { refinement: 100 },
        )
        .unwrap();
        for (i, &t) in grid.iter().enumerate() {
            assert_abs_diff_eq!(curve.survival[i], gompertz_survival(a, b, t), epsilon = 1e-6);
        }
    }

    #[test]
    fn trapezoid_error_shrinks_at_second_order() {
        let (a, b) = (-1.0, 0.7);
        let model = manual_model(TimeBasis::Linear, &[&[a, b]]);
        let grid = vec![0.0, 2.0];
        let truth = gompertz_survival(a, b, 2.0);
        let mut errs = Vec::new();
        for refinement in [50, 100] {
            let curve = survival_curve(
                &model,
                &Profile::default(),
                &grid,
                IntegrationMethod::Trapezoid { refinement },
            )
            .unwrap();
            errs.push((curve.survival[1] - truth).abs());
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order >= 1.9, "observed order {order:.3}");
    }

    #[test]
    fn weibull_log_hazard_closed_form() {
        let (alpha, beta) = (1.5f64, 10.0f64);
        let theta = [alpha.ln() - alpha * beta.ln(), alpha - 1.0];
        let model = manual_model(TimeBasis::Log { epsilon: 1e-8 }, &[&theta]);
        let h = hazard_at(&model, beta, &Profile::default()).unwrap();
        assert_relative_eq!(h[0], alpha / beta, max_relative = 1e-12);
    }

    #[test]
    fn constant_log_two_hazard() {
        let model = manual_model(TimeBasis::Constant, &[&[2.0f64.ln()]]);
        let h = hazard_at(&model, 3.7, &Profile::default()).unwrap();
        assert_relative_eq!(h[0], 2.0, max_relative = 1e-12);
    }

    #[test]
    fn mc_within_three_se_of_trapezoid() {
        let model = manual_model(TimeBasis::Linear, &[&[-1.0, 0.7]]);
        let grid = unit_grid(2.0, 9);
        let profile = Profile::default();
        let exact = survival_curve(&model, &profile, &grid, IntegrationMethod::default()).unwrap();
        let mc = survival_curve(
            &model,
            &profile,
            &grid,
            IntegrationMethod::MonteCarlo {
                n_samples: 20_000,
                seed: 99,
            },
        )
        .unwrap();
        let se = mc.standard_errors.unwrap();
        for i in 1..grid.len() {
            let gap = (mc.survival[i] - exact.survival[i]).abs();
            assert!(
                gap <= 3.0 * se[i],
                "gap {gap:.3e} exceeds 3 se {:.3e} at t {}",
                se[i],
                grid[i]
            );
        }
    }

    #[test]
    fn mc_se_shrinks_as_root_n() {
        let model = manual_model(TimeBasis::Linear, &[&[-1.0, 0.7]]);
        let grid = vec![0.0, 2.0];
        let mut logs = Vec::new();
        for n_samples in [1000usize, 3162, 10000] {
            let curve = survival_curve(
                &model,
                &Profile::default(),
                &grid,
                IntegrationMethod::MonteCarlo {
                    n_samples,
                    seed: 5,
                },
            )
            .unwrap();
            logs.push(((n_samples as f64).ln(), curve.standard_errors.unwrap()[1].ln()));
        }
        let slope = (logs[2].1 - logs[0].1) / (logs[2].0 - logs[0].0);
        assert!((slope + 0.5).abs() <= 0.05, "slope {slope:.3}");
    }

    #[test]
    fn competing_constant_hazards_match_analytic() {
        let model = manual_model(TimeBasis::Constant, &[&[0.5f64.ln()], &[0.0]]);
        let grid = unit_grid(1.0, 5);
        let curve = cif_competing(
            &model,
            &[Profile::default()],
            &grid,
            IntegrationMethod::Trapezoid { refinement: 100 },
        )
        .unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let truth = (0.5 / 1.5) * (1.0 - (-1.5 * t).exp());
            assert_abs_diff_eq!(curve.values[[i, 0, 0]], truth, epsilon = 1e-6);
        }
        assert!(curve.identity_gap() <= 1e-8);
    }

    #[test]
    fn vanishing_second_cause_recovers_single_event_curve() {
        let single = manual_model(TimeBasis::Constant, &[&[0.5f64.ln()]]);
        let competing = manual_model(
            TimeBasis::Constant,
            &[&[0.5f64.ln()], &[1e-10f64.ln()]],
        );
        let grid = unit_grid(2.0, 9);
        let a = cif_single(
            &single,
            &[Profile::default()],
            &grid,
            IntegrationMethod::default(),
        )
        .unwrap();
        let b = cif_competing(
            &competing,
            &[Profile::default()],
            &grid,
            IntegrationMethod::default(),
        )
        .unwrap();
        for i in 0..grid.len() {
            assert_abs_diff_eq!(a.values[[i, 0, 0]], b.values[[i, 0, 0]], epsilon = 1e-6);
        }
    }

    #[test]
    fn curves_are_monotone_and_in_range() {
        let model = manual_model(TimeBasis::Linear, &[&[-0.5, 0.4], &[-1.0, 0.2]]);
        let grid = unit_grid(3.0, 13);
        let curve = cif_competing(
            &model,
            &[Profile::default()],
            &grid,
            IntegrationMethod::default(),
        )
        .unwrap();
        for i in 0..grid.len() {
            let s = curve.survival[[i, 0]];
            assert!((0.0..=1.0).contains(&s));
            if i > 0 {
                assert!(s <= curve.survival[[i - 1, 0]]);
            }
            for j in 0..2 {
                let v = curve.values[[i, 0, j]];
                assert!((0.0..=1.0).contains(&v));
                if i > 0 {
                    assert!(v >= curve.values[[i - 1, 0, j]]);
                }
            }
        }
    }

    #[test]
    fn competing_mc_tracks_trapezoid() {
        let model = manual_model(TimeBasis::Linear, &[&[-0.5, 0.4], &[-1.0, 0.2]]);
        let grid = unit_grid(2.0, 5);
        let profiles = [Profile::default()];
        let exact =
            cif_competing(&model, &profiles, &grid, IntegrationMethod::default()).unwrap();
        let mc = cif_competing(
            &model,
            &profiles,
            &grid,
            IntegrationMethod::MonteCarlo {
                n_samples: 20_000,
                seed: 31,
            },
        )
        .unwrap();
        let meta = mc.mc_meta.as_ref().unwrap();
        for i in 1..grid.len() {
            for j in 0..2 {
                let gap = (mc.values[[i, 0, j]] - exact.values[[i, 0, j]]).abs();
                let se = meta.standard_errors[[i, 0, j]];
                assert!(gap <= 3.0 * se, "gap {gap:.3e} vs se {se:.3e}");
            }
        }
    }

    #[test]
    fn grid_and_sample_validation() {
        let model = manual_model(TimeBasis::Constant, &[&[0.0]]);
        let profile = Profile::default();
        assert!(survival_curve(&model, &profile, &[0.5, 1.0], IntegrationMethod::default())
            .is_err());
        assert!(survival_curve(&model, &profile, &[0.0, 1.0, 0.5], IntegrationMethod::default())
            .is_err());
        assert!(survival_curve(
            &model,
            &profile,
            &[0.0, 1.0],
            IntegrationMethod::MonteCarlo {
                n_samples: 50,
                seed: 1
            },
        )
        .is_err());
        assert!(cif_competing(&model, &[profile], &[0.0, 1.0], IntegrationMethod::default())
            .is_err());
    }

    #[test]
    fn table_layout_single_profile() {
        let model = manual_model(TimeBasis::Constant, &[&[0.0]]);
        let curve = cif_single(
            &model,
            &[Profile::default()],
            &[0.0, 1.0],
            IntegrationMethod::default(),
        )
        .unwrap();
        let table = curve.to_table();
        assert_eq!(table.columns, ["time", "p0_survival", "p0_ci_cause1"]);
        assert_eq!(table.rows.len(), 2);
    }
}
