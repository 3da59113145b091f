//! Time transforms for the linear predictor: constant, linear, log, and
//! B-spline bases. The model intercept is a separate column, so a basis
//! contributes only its non-constant part; for splines the first basis
//! function is dropped and the remaining columns plus the intercept span the
//! full spline space.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    pub degree: usize,
    pub interior_knots: Vec<f64>,
    pub boundary: (f64, f64),
}

impl BSplineBasis {
    pub fn new(degree: usize, interior_knots: Vec<f64>, boundary: (f64, f64)) -> Result<Self> {
        let (lo, hi) = boundary;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::DegenerateKnots(format!(
                "boundary ({lo}, {hi}) is not an increasing finite pair"
            )));
        }
        if degree == 0 {
            return Err(Error::DegenerateKnots("degree must be at least 1".into()));
        }
        let mut prev = lo;
        for &k in &interior_knots {
            if !k.is_finite() || k <= prev || k >= hi {
                return Err(Error::DegenerateKnots(format!(
                    "interior knot {k} not strictly inside ({lo}, {hi}) in increasing order"
                )));
            }
            prev = k;
        }
        Ok(BSplineBasis {
            degree,
            interior_knots,
            boundary,
        })
    }

    /// Open knot vector: boundaries repeated degree+1 times.
    pub fn knot_vector(&self) -> Vec<f64> {
        let (lo, hi) = self.boundary;
        let mut knots = vec![lo; self.degree + 1];
        knots.extend_from_slice(&self.interior_knots);
        knots.extend(std::iter::repeat(hi).take(self.degree + 1));
        knots
    }

    /// Basis functions before dropping the first one.
    pub fn n_basis(&self) -> usize {
        self.degree + 1 + self.interior_knots.len()
    }

    /// All basis-function values at `x`, evaluation clamped to the boundary
    /// interval. Values sum to one.
    pub fn eval_full(&self, x: f64) -> Vec<f64> {
        let (lo, hi) = self.boundary;
        let x = x.clamp(lo, hi);
        let knots = self.knot_vector();
        let p = self.degree;
        let n = self.n_basis();

        // Knot span: last i with knots[i] <= x, capped so x = hi lands in the
        // final nonempty interval.
        let span = if x >= hi {
            n - 1
        } else {
            knots.partition_point(|&k| k <= x) - 1
        };

        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        let mut vals = vec![0.0; p + 1];
        vals[0] = 1.0;
        for j in 1..=p {
            left[j] = x - knots[span + 1 - j];
            right[j] = knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = vals[r] / (right[r + 1] + left[j - r]);
                vals[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            vals[j] = saved;
        }

        let mut full = vec![0.0; n];
        full[span - p..=span].copy_from_slice(&vals);
        full
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TimeBasis {
    Constant,
    Linear,
    /// log(max(t, epsilon)); the guard keeps early moments finite.
    Log {
        epsilon: f64,
    },
    BSpline(BSplineBasis),
}

impl TimeBasis {
    pub fn n_columns(&self) -> usize {
        match self {
            TimeBasis::Constant => 0,
            TimeBasis::Linear | TimeBasis::Log { .. } => 1,
            TimeBasis::BSpline(b) => b.n_basis() - 1,
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        match self {
            TimeBasis::Constant => vec![],
            TimeBasis::Linear => vec!["time".into()],
            TimeBasis::Log { .. } => vec!["log_time".into()],
            TimeBasis::BSpline(b) => (1..b.n_basis())
                .map(|i| format!("time_bs{i}"))
                .collect(),
        }
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        if !t.is_finite() {
            return Err(Error::NonFiniteTime { value: t });
        }
        Ok(match self {
            TimeBasis::Constant => vec![],
            TimeBasis::Linear => vec![t],
            TimeBasis::Log { epsilon } => vec![t.max(*epsilon).ln()],
            TimeBasis::BSpline(b) => {
                let mut full = b.eval_full(t);
                full.remove(0);
                full
            }
        })
    }
}
