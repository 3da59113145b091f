//! Elastic-net penalized logistic regression on person-moment data.
//!
//! Objective: (1/n)(-loglik) + lambda * sum_j w_j (alpha |theta_j| +
//! (1-alpha) theta_j^2 / 2). Per-coefficient factors w_j exempt the
//! intercept and the time columns by default. Solved by cyclic coordinate
//! descent on the IRLS quadratic approximation with warm starts along a
//! decreasing lambda path.

use crate::design::DesignInfo;
use crate::error::{Error, Result};
use crate::glm::{binary_loglik, sigmoid};
use crate::rng::{self, stream};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;

/// Inner stop on max coefficient change; comfortably below the 1e-7
/// interface bound so warm and cold starts agree to 1e-8.
pub const COORDINATE_TOL: f64 = 1e-10;
pub const OUTER_DEVIANCE_TOL: f64 = 1e-10;
pub const MAX_CYCLES: usize = 10_000;
pub const MAX_OUTER: usize = 200;

#[derive(Debug, Clone)]
pub struct PenalizedOptions {
    pub alpha: f64,
    /// One factor per design column; `None` means 1.0 everywhere (callers
    /// with a design should use [`default_penalty_factors`]).
    pub penalty_factors: Option<Vec<f64>>,
    /// Explicit grid; `None` computes a geometric path from lambda_max.
    pub lambdas: Option<Vec<f64>>,
    pub n_lambda: usize,
    pub min_ratio: f64,
    pub standardize: bool,
}

impl Default for PenalizedOptions {
    fn default() -> Self {
        PenalizedOptions {
            alpha: 1.0,
            penalty_factors: None,
            lambdas: None,
            n_lambda: 100,
            min_ratio: 1e-4,
            standardize: true,
        }
    }
}

/// Column means and scales used during fitting; identity entries for
/// unpenalized columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub applied: bool,
}

#[derive(Debug, Clone)]
pub struct PenalizedPath {
    pub alpha: f64,
    pub penalty_factors: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Row per lambda, original covariate scale.
    pub coefficients: Array2<f64>,
    /// Row per lambda on the standardized scale the solver works in.
    pub std_coefficients: Array2<f64>,
    pub deviances: Vec<f64>,
    pub standardization: Standardization,
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    /// Mean per-observation validation deviance across folds.
    pub mean_deviance: Vec<f64>,
    pub se_deviance: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_one_se: f64,
    pub fold_of: Vec<usize>,
}

/// Zero for the intercept and time columns, one elsewhere.
pub fn default_penalty_factors(info: &DesignInfo) -> Vec<f64> {
    let mut w = vec![1.0; info.n_columns()];
    w[0] = 0.0;
    for k in 0..info.time_basis.n_columns() {
        w[1 + k] = 0.0;
    }
    w
}

fn validate_binary(y: &[usize]) -> Result<()> {
    if let Some(&bad) = y.iter().find(|&&v| v > 1) {
        return Err(Error::InvalidArgument(format!(
            "penalized fitting is single-event only; found event code {bad}"
        )));
    }
    if !y.iter().any(|&v| v == 1) {
        return Err(Error::EmptyClass { class: 1 });
    }
    if !y.iter().any(|&v| v == 0) {
        return Err(Error::EmptyClass { class: 0 });
    }
    Ok(())
}

fn standardize_columns(
    x: ArrayView2<f64>,
    w: &[f64],
    apply: bool,
) -> Result<(Array2<f64>, Standardization)> {
    let n = x.nrows();
    let p = x.ncols();
    let mut xs = x.to_owned();
    let mut means = vec![0.0; p];
    let mut sds = vec![1.0; p];
    if apply {
        if w[0] != 0.0 || x.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidArgument(
                "standardization requires an unpenalized all-ones intercept in column 0".into(),
            ));
        }
        for j in 0..p {
            if w[j] <= 0.0 {
                continue;
            }
            let col = x.column(j);
            let m = col.sum() / n as f64;
            let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            let s = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
            means[j] = m;
            sds[j] = s;
            for i in 0..n {
                xs[[i, j]] = (x[[i, j]] - m) / s;
            }
        }
    }
    Ok((
        xs,
        Standardization {
            means,
            sds,
            applied: apply,
        },
    ))
}

fn back_transform(theta_std: ArrayView1<f64>, std: &Standardization) -> Array1<f64> {
    if !std.applied {
        return theta_std.to_owned();
    }
    let mut beta = theta_std.to_owned();
    let mut shift = 0.0;
    for j in 1..beta.len() {
        if std.sds[j] != 1.0 || std.means[j] != 0.0 {
            beta[j] = theta_std[j] / std.sds[j];
            shift += theta_std[j] * std.means[j] / std.sds[j];
        }
    }
    beta[0] -= shift;
    beta
}

/// Probabilities from a fit restricted to the unpenalized columns.
fn null_probabilities(
    xs: ArrayView2<f64>,
    y: &[usize],
    offset: ArrayView1<f64>,
    w: &[f64],
) -> Result<Array1<f64>> {
    let free: Vec<usize> = (0..xs.ncols()).filter(|&j| w[j] <= 0.0).collect();
    let eta = if free.is_empty() {
        offset.to_owned()
    } else {
        let sub = xs.select(ndarray::Axis(1), &free);
        let fit = crate::glm::fit_logistic_offset(sub.view(), y, offset)?;
        let theta = fit.coefficients.row(0).to_owned();
        &sub.dot(&theta) + &offset
    };
    Ok(eta.mapv(sigmoid))
}

fn geometric_grid(lambda_max: f64, n_lambda: usize, min_ratio: f64) -> Vec<f64> {
    let log_max = lambda_max.ln();
    let log_min = (lambda_max * min_ratio).ln();
    (0..n_lambda)
        .map(|k| {
            let f = k as f64 / (n_lambda - 1) as f64;
            (log_max + f * (log_min - log_max)).exp()
        })
        .collect()
}

/// Smallest lambda with all penalized coefficients at zero, then a geometric
/// grid down to `min_ratio` times it.
pub fn lambda_path(
    x: ArrayView2<f64>,
    y: &[usize],
    offset: ArrayView1<f64>,
    alpha: f64,
    w: &[f64],
    n_lambda: usize,
    min_ratio: f64,
    standardize: bool,
) -> Result<Vec<f64>> {
    validate_binary(y)?;
    if alpha <= 0.0 {
        return Err(Error::InvalidArgument(
            "lambda_max is undefined at alpha = 0; supply an explicit lambda grid".into(),
        ));
    }
    if n_lambda < 2 {
        return Err(Error::InvalidArgument("n_lambda must be at least 2".into()));
    }
    if w.iter().all(|&v| v <= 0.0) {
        return Err(Error::InvalidArgument(
            "all penalty factors are zero: nothing to penalize".into(),
        ));
    }
    let (xs, _) = standardize_columns(x, w, standardize)?;
    let probs = null_probabilities(xs.view(), y, offset, w)?;
    let n = xs.nrows() as f64;
    let mut lambda_max = 0.0f64;
    for j in 0..xs.ncols() {
        if w[j] <= 0.0 {
            continue;
        }
        let mut g = 0.0;
        for i in 0..xs.nrows() {
            g += xs[[i, j]] * (y[i] as f64 - probs[i]);
        }
        lambda_max = lambda_max.max(g.abs() / (n * alpha * w[j]));
    }
    if !(lambda_max > 0.0) {
        return Err(Error::InvalidArgument(
            "lambda_max is zero: penalized columns carry no signal at the null fit".into(),
        ));
    }
    Ok(geometric_grid(lambda_max, n_lambda, min_ratio))
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

fn penalty_value(theta: ArrayView1<f64>, alpha: f64, lambda: f64, w: &[f64]) -> f64 {
    let mut p = 0.0;
    for (j, &t) in theta.iter().enumerate() {
        p += w[j] * (alpha * t.abs() + 0.5 * (1.0 - alpha) * t * t);
    }
    lambda * p
}

fn objective(
    xs: ArrayView2<f64>,
    y: &[usize],
    offset: ArrayView1<f64>,
    theta: ArrayView1<f64>,
    alpha: f64,
    lambda: f64,
    w: &[f64],
) -> f64 {
    -binary_loglik(xs, y, offset, theta) / xs.nrows() as f64
        + penalty_value(theta, alpha, lambda, w)
}

/// One penalized fit at fixed lambda, updating `theta` in place
/// (standardized scale). Returns the unpenalized deviance.
fn cd_fit(
    xs: ArrayView2<f64>,
    y: &[usize],
    offset: ArrayView1<f64>,
    alpha: f64,
    lambda: f64,
    w: &[f64],
    theta: &mut Array1<f64>,
) -> Result<f64> {
    let n = xs.nrows();
    let p = xs.ncols();
    let nf = n as f64;
    // Coordinate descent walks columns; xs is row-major, so work from a
    // contiguous copy of each column.
    let cols: Vec<Vec<f64>> = (0..p).map(|j| xs.column(j).to_vec()).collect();
    let mut obj = objective(xs, y, offset, theta.view(), alpha, lambda, w);
    let mut deviance = f64::INFINITY;

    for _ in 0..MAX_OUTER {
        let theta_prev = theta.clone();
        let eta = &xs.dot(theta) + &offset;
        let mut irls_w = Array1::zeros(n);
        let mut resid = Array1::zeros(n);
        for i in 0..n {
            let mu = sigmoid(eta[i]);
            let wi = (mu * (1.0 - mu)).max(1e-9);
            irls_w[i] = wi;
            resid[i] = y[i] as f64 - mu;
        }
        // Working residual of the quadratic problem: z - x theta = (y-mu)/w.
        let mut r: Array1<f64> = &resid / &irls_w;
        let mut d = vec![0.0; p];
        for j in 0..p {
            d[j] = cols[j]
                .iter()
                .zip(irls_w.iter())
                .map(|(&x, &wi)| wi * x * x)
                .sum::<f64>()
                / nf;
        }

        let update = |j: usize, theta: &mut Array1<f64>, r: &mut Array1<f64>| -> f64 {
            if d[j] <= 1e-14 {
                return 0.0;
            }
            let col = &cols[j];
            let mut num = 0.0;
            for ((&wi, &xi), &ri) in irls_w.iter().zip(col.iter()).zip(r.iter()) {
                num += wi * xi * ri;
            }
            num = num / nf + d[j] * theta[j];
            let new = if w[j] > 0.0 {
                soft_threshold(num, alpha * lambda * w[j])
                    / (d[j] + (1.0 - alpha) * lambda * w[j])
            } else {
                num / d[j]
            };
            let delta = new - theta[j];
            if delta != 0.0 {
                for (ri, &xi) in r.iter_mut().zip(col.iter()) {
                    *ri -= delta * xi;
                }
                theta[j] = new;
            }
            delta.abs()
        };

        // Full sweeps decide convergence; between them, iterating only the
        // active coordinates saves most of the work when the solution is
        // sparse. The fixed point is the same either way.
        let mut cycles = 0;
        while cycles < MAX_CYCLES {
            let mut max_change = 0.0f64;
            for j in 0..p {
                max_change = max_change.max(update(j, theta, &mut r));
            }
            cycles += 1;
            if max_change <= COORDINATE_TOL {
                break;
            }
            let active: Vec<usize> = (0..p)
                .filter(|&j| theta[j] != 0.0 || w[j] == 0.0)
                .collect();
            while cycles < MAX_CYCLES {
                let mut change = 0.0f64;
                for &j in &active {
                    change = change.max(update(j, theta, &mut r));
                }
                cycles += 1;
                if change <= COORDINATE_TOL {
                    break;
                }
            }
        }

        // The quadratic solution can overshoot the true objective; halve
        // back toward the previous iterate until it does not increase.
        let mut obj_new = objective(xs, y, offset, theta.view(), alpha, lambda, w);
        let mut halvings = 0;
        while (!obj_new.is_finite() || obj_new > obj + 1e-14) && halvings < 20 {
            for j in 0..p {
                theta[j] = 0.5 * (theta[j] + theta_prev[j]);
            }
            obj_new = objective(xs, y, offset, theta.view(), alpha, lambda, w);
            halvings += 1;
        }
        if !obj_new.is_finite() {
            return Err(Error::Diverged("penalized deviance is not finite".into()));
        }

        let dev_new = -2.0 * binary_loglik(xs, y, offset, theta.view());
        let converged = (deviance - dev_new).abs() <= OUTER_DEVIANCE_TOL * (1.0 + dev_new.abs());
        obj = obj_new;
        deviance = dev_new;
        if converged {
            break;
        }
    }
    if !deviance.is_finite() {
        return Err(Error::Diverged("penalized deviance is not finite".into()));
    }

    // At the boundary (|gradient| equal to the threshold, as at lambda_max)
    // the solver can leave round-off residue on a coefficient whose exact
    // solution is zero. Snap it when the subgradient condition at zero holds.
    let snap = 10.0 * COORDINATE_TOL;
    if (0..p).any(|j| w[j] > 0.0 && theta[j] != 0.0 && theta[j].abs() <= snap) {
        let eta = &xs.dot(theta) + &offset;
        let mut snapped = false;
        for j in 0..p {
            if w[j] <= 0.0 || theta[j] == 0.0 || theta[j].abs() > snap {
                continue;
            }
            let mut g = 0.0;
            for i in 0..n {
                g += cols[j][i] * (sigmoid(eta[i]) - y[i] as f64);
            }
            g /= nf;
            if g.abs() <= alpha * lambda * w[j] * (1.0 + 1e-9) + 1e-15 {
                theta[j] = 0.0;
                snapped = true;
            }
        }
        if snapped {
            deviance = -2.0 * binary_loglik(xs, y, offset, theta.view());
        }
    }
    Ok(deviance)
}

fn resolve_grid(
    x: ArrayView2<f64>,
    y: &[usize],
    offset: ArrayView1<f64>,
    opts: &PenalizedOptions,
    w: &[f64],
) -> Result<Vec<f64>> {
    let grid = match &opts.lambdas {
        Some(g) => {
            if g.is_empty() {
                return Err(Error::InvalidArgument("empty lambda grid".into()));
            }
            for v in g {
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::InvalidArgument(format!("bad lambda {v}")));
                }
            }
            for pair in g.windows(2) {
                if pair[1] >= pair[0] {
                    return Err(Error::InvalidArgument(
                        "lambda grid must be strictly decreasing".into(),
                    ));
                }
            }
            g.clone()
        }
        None => lambda_path(
            x,
            y,
            offset,
            opts.alpha,
            w,
            opts.n_lambda,
            opts.min_ratio,
            opts.standardize,
        )?,
    };
    Ok(grid)
}

fn resolve_factors(p: usize, opts: &PenalizedOptions) -> Result<Vec<f64>> {
    let w = match &opts.penalty_factors {
        Some(w) => {
            if w.len() != p {
                return Err(Error::InvalidArgument(format!(
                    "{} penalty factors for {p} columns",
                    w.len()
                )));
            }
            if w.iter().any(|&v| !v.is_finite() || v < 0.0) {
                return Err(Error::InvalidArgument(
                    "penalty factors must be nonnegative".into(),
                ));
            }
            w.clone()
        }
        None => vec![1.0; p],
    };
    Ok(w)
}

/// Fit the whole path with warm starts.
pub fn fit_elastic_net(
    x: ArrayView2<f64>,
    y: &[usize],
    offset: ArrayView1<f64>,
    opts: &PenalizedOptions,
) -> Result<PenalizedPath> {
    validate_binary(y)?;
    if !(0.0..=1.0).contains(&opts.alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha {} outside [0, 1]",
            opts.alpha
        )));
    }
    let p = x.ncols();
    let w = resolve_factors(p, opts)?;
    let grid = resolve_grid(x, y, offset, opts, &w)?;
    let (xs, std) = standardize_columns(x, &w, opts.standardize)?;

    let mut theta = Array1::zeros(p);
    let mut coefficients = Array2::zeros((grid.len(), p));
    let mut std_coefficients = Array2::zeros((grid.len(), p));
    let mut deviances = Vec::with_capacity(grid.len());
    for (k, &lambda) in grid.iter().enumerate() {
        let dev = cd_fit(xs.view(), y, offset, opts.alpha, lambda, &w, &mut theta)?;
        deviances.push(dev);
        std_coefficients.row_mut(k).assign(&theta);
        coefficients
            .row_mut(k)
            .assign(&back_transform(theta.view(), &std));
    }

    Ok(PenalizedPath {
        alpha: opts.alpha,
        penalty_factors: w,
        lambdas: grid,
        coefficients,
        std_coefficients,
        deviances,
        standardization: std,
    })
}

/// Max KKT residual of the stored solution at path index `k`, on the
/// standardized scale the solver used.
pub fn kkt_max_violation(
    path: &PenalizedPath,
    x: ArrayView2<f64>,
    y: &[usize],
    offset: ArrayView1<f64>,
    k: usize,
) -> f64 {
    let (xs, _) = standardize_columns(x, &path.penalty_factors, path.standardization.applied)
        .expect("standardization succeeded during fitting");
    let theta = path.std_coefficients.row(k);
    let lambda = path.lambdas[k];
    let n = xs.nrows() as f64;
    let eta = &xs.dot(&theta) + &offset;
    let mut worst = 0.0f64;
    for j in 0..xs.ncols() {
        let mut grad = 0.0;
        for i in 0..xs.nrows() {
            grad += xs[[i, j]] * (sigmoid(eta[i]) - y[i] as f64);
        }
        grad /= n;
        let wj = path.penalty_factors[j];
        let viol = if wj > 0.0 {
            if theta[j] == 0.0 {
                (grad.abs() - path.alpha * lambda * wj).max(0.0)
            } else {
                (grad + (1.0 - path.alpha) * lambda * wj * theta[j]
                    + path.alpha * lambda * wj * theta[j].signum())
                .abs()
            }
        } else {
            grad.abs()
        };
        worst = worst.max(viol);
    }
    worst
}

fn thread_count(folds: usize) -> usize {
    let available = std::thread::available_parallelism()
        .map(|v| v.get())
        .unwrap_or(1);
    let configured = std::env::var("CASEBASE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(available);
    configured.min(folds).max(1)
}

/// Seeded, y-stratified fold assignment. The round-robin counter runs on
/// across classes so every fold is hit when `folds <= n`.
fn assign_folds(y: &[usize], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::stream_rng(seed, stream::CV_FOLDS, 0);
    let mut fold_of = vec![0usize; y.len()];
    let mut counter = 0usize;
    for class in [1usize, 0] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for &i in &idx {
            fold_of[i] = counter % folds;
            counter += 1;
        }
    }
    fold_of
}

/// Cross-validated deviance along the lambda grid; the grid itself comes
/// from the full data so every fold shares it.
pub fn cv_elastic_net(
    x: ArrayView2<f64>,
    y: &[usize],
    offset: ArrayView1<f64>,
    opts: &PenalizedOptions,
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    validate_binary(y)?;
    let n = x.nrows();
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!(
            "fold count {folds} outside 2..={n}"
        )));
    }
    let w = resolve_factors(x.ncols(), opts)?;
    let grid = resolve_grid(x, y, offset, opts, &w)?;
    let fold_of = assign_folds(y, folds, seed);

    for k in 0..folds {
        let train_events = y
            .iter()
            .enumerate()
            .filter(|(i, &v)| fold_of[*i] != k && v == 1)
            .count();
        if train_events == 0 {
            return Err(Error::EmptyClass { class: 1 });
        }
    }

    let mut fold_opts = opts.clone();
    fold_opts.lambdas = Some(grid.clone());
    fold_opts.penalty_factors = Some(w);

    // Per fold: mean validation deviance per lambda.
    let mut fold_curves: Vec<Option<Result<Vec<f64>>>> = (0..folds).map(|_| None).collect();
    let n_threads = thread_count(folds);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for t in 0..n_threads {
            let fold_opts = &fold_opts;
            let fold_of = &fold_of;
            let grid = &grid;
            let handle = scope.spawn(move || {
                let mut out = Vec::new();
                for k in (t..folds).step_by(n_threads) {
                    out.push((k, cv_one_fold(x, y, offset, fold_opts, fold_of, k, grid)));
                }
                out
            });
            handles.push(handle);
        }
        for handle in handles {
            for (k, res) in handle.join().expect("fold thread panicked") {
                fold_curves[k] = Some(res);
            }
        }
    });

    let mut per_fold = Vec::with_capacity(folds);
    for curve in fold_curves {
        per_fold.push(curve.expect("all folds computed")?);
    }

    let m = grid.len();
    let mut mean_deviance = vec![0.0; m];
    let mut se_deviance = vec![0.0; m];
    for j in 0..m {
        let vals: Vec<f64> = per_fold.iter().map(|c| c[j]).collect();
        let mean = vals.iter().sum::<f64>() / folds as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (folds as f64 - 1.0);
        mean_deviance[j] = mean;
        se_deviance[j] = (var / folds as f64).sqrt();
    }

    let min_idx = mean_deviance
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let threshold = mean_deviance[min_idx] + se_deviance[min_idx];
    // Largest lambda (earliest index) whose mean is under the one-SE bar.
    let one_se_idx = (0..m)
        .find(|&j| mean_deviance[j] <= threshold)
        .unwrap_or(min_idx);

    Ok(CvResult {
        lambdas: grid.clone(),
        mean_deviance,
        se_deviance,
        lambda_min: grid[min_idx],
        lambda_one_se: grid[one_se_idx],
        fold_of,
    })
}

fn cv_one_fold(
    x: ArrayView2<f64>,
    y: &[usize],
    offset: ArrayView1<f64>,
    opts: &PenalizedOptions,
    fold_of: &[usize],
    k: usize,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let train: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] != k).collect();
    let val: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] == k).collect();
    let xt = x.select(ndarray::Axis(0), &train);
    let yt: Vec<usize> = train.iter().map(|&i| y[i]).collect();
    let ot: Array1<f64> = train.iter().map(|&i| offset[i]).collect();
    let path = fit_elastic_net(xt.view(), &yt, ot.view(), opts)?;

    let mut out = Vec::with_capacity(grid.len());
    for (j, _) in grid.iter().enumerate() {
        let beta = path.coefficients.row(j);
        let mut dev = 0.0;
        for &i in &val {
            let eta: f64 = x.row(i).dot(&beta) + offset[i];
            let yi = y[i] as f64;
            // -2 [y log mu + (1-y) log(1-mu)] in the stable softplus form.
            dev += 2.0 * ((eta.max(0.0) + (-eta.abs()).exp().ln_1p()) - yi * eta);
        }
        out.push(dev / val.len() as f64);
    }
    Ok(out)
}
