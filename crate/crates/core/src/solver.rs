//! Weighted ridge regression and the closed-form second-moment structure of
//! the binary sampling laws.
//!
//! The ridge objective is the raw finite-sample one,
//! `sum_i pi_i (y_i - b - w^T z_i)^2 + lambda ||w||^2`, with an unpenalized
//! intercept fitted by weighted centering. Callers own any rescaling of
//! `lambda` with `n`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{binomial_probability, check_width, DistributionSpec, WeightSpec};

/// Relative pivot threshold below which the Gram matrix counts as singular.
const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct RidgeProblem {
    design: Array2<f64>,
    responses: Array1<f64>,
    sample_weights: Array1<f64>,
    lambda: f64,
    fit_intercept: bool,
}

impl RidgeProblem {
    pub fn new(
        design: Array2<f64>,
        responses: Array1<f64>,
        sample_weights: Array1<f64>,
        lambda: f64,
        fit_intercept: bool,
    ) -> Result<Self> {
        let n = design.nrows();
        if n == 0 || design.ncols() == 0 {
            return Err(Error::param("ridge problem needs at least one sample and one feature"));
        }
        if responses.len() != n {
            return Err(Error::LengthMismatch {
                what: "responses",
                expected: n,
                actual: responses.len(),
            });
        }
        if sample_weights.len() != n {
            return Err(Error::LengthMismatch {
                what: "sample weights",
                expected: n,
                actual: sample_weights.len(),
            });
        }
        if sample_weights.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::param("sample weights must be positive and finite"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::param(format!("lambda must be >= 0, got {lambda}")));
        }
        if design.iter().chain(responses.iter()).any(|v| !v.is_finite()) {
            return Err(Error::param("design and responses must be finite"));
        }
        Ok(RidgeProblem {
            design,
            responses,
            sample_weights,
            lambda,
            fit_intercept,
        })
    }

    /// Problem with unit sample weights.
    pub fn unweighted(
        design: Array2<f64>,
        responses: Array1<f64>,
        lambda: f64,
        fit_intercept: bool,
    ) -> Result<Self> {
        let n = design.nrows();
        Self::new(design, responses, Array1::ones(n), lambda, fit_intercept)
    }

    pub fn design(&self) -> ArrayView2<'_, f64> {
        self.design.view()
    }

    pub fn responses(&self) -> ArrayView1<'_, f64> {
        self.responses.view()
    }

    pub fn sample_weights(&self) -> ArrayView1<'_, f64> {
        self.sample_weights.view()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn fit_intercept(&self) -> bool {
        self.fit_intercept
    }

    pub fn num_features(&self) -> usize {
        self.design.ncols()
    }

    fn weighted_mean(&self, values: ArrayView1<'_, f64>) -> f64 {
        let total = self.sample_weights.sum();
        self.sample_weights.dot(&values) / total
    }

    /// Surrogate predictions `b + w^T z_i`.
    pub fn predict(&self, solution: &RidgeSolution) -> Array1<f64> {
        self.design.dot(&Array1::from(solution.w.clone())) + solution.intercept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeSolution {
    pub w: Vec<f64>,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RSquared {
    pub value: f64,
    /// Set when the weighted response variance is zero.
    pub degenerate_variance: bool,
}

pub fn solve_weighted_ridge(problem: &RidgeProblem) -> Result<RidgeSolution> {
    let d = problem.num_features();
    let weights = &problem.sample_weights;

    let (centered, y_centered, z_mean, y_mean) = if problem.fit_intercept {
        let total = weights.sum();
        let z_mean = problem.design.t().dot(weights) / total;
        let y_mean = problem.weighted_mean(problem.responses.view());
        let centered = &problem.design - &z_mean.view().insert_axis(Axis(0));
        let y_centered = &problem.responses - y_mean;
        (centered, y_centered, z_mean, y_mean)
    } else {
        (
            problem.design.clone(),
            problem.responses.clone(),
            Array1::zeros(d),
            0.0,
        )
    };

    let weighted = &centered * &weights.view().insert_axis(Axis(1));
    let mut gram = weighted.t().dot(&centered);
    let rhs = weighted.t().dot(&y_centered);
    let scale = gram.diag().iter().fold(0.0f64, |m, &v| m.max(v));
    for i in 0..d {
        gram[[i, i]] += problem.lambda;
    }

    let w = cholesky_solve(gram, rhs, scale.max(problem.lambda)).map_err(|_| {
        Error::SingularSystem(format!(
            "the centered Gram matrix of {} samples in {} features is rank deficient; \
             use lambda > 0 or draw more samples",
            problem.design.nrows(),
            d
        ))
    })?;
    let intercept = if problem.fit_intercept {
        y_mean - w.dot(&z_mean)
    } else {
        0.0
    };
    let mut solution = RidgeSolution {
        w: w.to_vec(),
        intercept,
        r2: 0.0,
    };
    solution.r2 = r_squared(problem, &solution).value;
    Ok(solution)
}

/// Solves `G x = b` for symmetric positive definite `G` in place.
///
/// Fails when a pivot drops below `PIVOT_TOLERANCE * scale`.
fn cholesky_solve(mut g: Array2<f64>, mut b: Array1<f64>, scale: f64) -> Result<Array1<f64>, ()> {
    let n = g.nrows();
    let floor = PIVOT_TOLERANCE * scale;
    if floor.is_nan() || floor <= 0.0 {
        return Err(());
    }
    for j in 0..n {
        let mut pivot = g[[j, j]];
        for k in 0..j {
            pivot -= g[[j, k]] * g[[j, k]];
        }
        if pivot.is_nan() || pivot <= floor {
            return Err(());
        }
        let root = pivot.sqrt();
        g[[j, j]] = root;
        for i in (j + 1)..n {
            let mut v = g[[i, j]];
            for k in 0..j {
                v -= g[[i, k]] * g[[j, k]];
            }
            g[[i, j]] = v / root;
        }
    }
    // forward: L y = b
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= g[[i, k]] * b[k];
        }
        b[i] = v / g[[i, i]];
    }
    // backward: L^T x = y
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in (i + 1)..n {
            v -= g[[k, i]] * b[k];
        }
        b[i] = v / g[[i, i]];
    }
    Ok(b)
}

/// Weighted coefficient of determination around the weighted mean response.
///
/// With zero response variance the value is 1 for a perfect fit and 0
/// otherwise, and `degenerate_variance` is set.
pub fn r_squared(problem: &RidgeProblem, solution: &RidgeSolution) -> RSquared {
    let y = problem.responses.view();
    let pred = problem.predict(solution);
    let y_mean = problem.weighted_mean(y);
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for ((&yi, &pi), &fi) in y.iter().zip(&problem.sample_weights).zip(&pred) {
        ss_res += pi * (yi - fi) * (yi - fi);
        ss_tot += pi * (yi - y_mean) * (yi - y_mean);
    }
    if ss_tot > 0.0 {
        RSquared {
            value: 1.0 - ss_res / ss_tot,
            degenerate_variance: false,
        }
    } else {
        // ss_res can carry rounding noise when the fit is exact
        let scale = problem.sample_weights.sum() * (1.0 + y_mean * y_mean);
        let exact = ss_res <= 1e-24 * scale;
        RSquared {
            value: if exact { 1.0 } else { 0.0 },
            degenerate_variance: true,
        }
    }
}

/// Entries of the limiting second-moment matrix
/// `Sigma = (alpha1 - alpha2) I + alpha2 11^T` of a sampling law with its
/// weighting kernel.
///
/// Supported: uniform binary with the exponential kernel, Binomial with unit
/// weights, Gaussian with unit weights.
pub fn analytic_moments(dist: &DistributionSpec, weighting: &WeightSpec) -> Result<(f64, f64)> {
    dist.validate()?;
    match (*dist, *weighting) {
        (DistributionSpec::UniformBinary { d }, WeightSpec::ExpKernel { sigma }) => {
            check_width(sigma, true)?;
            // (1 + e^{-1/sigma^2})^{d-j} / 2^d for j = 1, 2
            let log_base = (-1.0 / (sigma * sigma)).exp().ln_1p();
            let log_norm = d as f64 * std::f64::consts::LN_2;
            let alpha1 = ((d as f64 - 1.0) * log_base - log_norm).exp();
            let alpha2 = ((d as f64 - 2.0) * log_base - log_norm).exp();
            Ok((alpha1, alpha2))
        }
        (DistributionSpec::UniformBinary { .. }, WeightSpec::Unit) => Ok((0.5, 0.25)),
        (DistributionSpec::Binomial { sigma, .. }, WeightSpec::Unit) => {
            let p = binomial_probability(sigma);
            Ok((p, p * p))
        }
        (DistributionSpec::Gaussian { sigma, .. }, WeightSpec::Unit) => Ok((sigma * sigma, 0.0)),
        (dist, weighting) => Err(Error::UnsupportedCombination(format!(
            "{dist:?} with {weighting:?}"
        ))),
    }
}

/// `(Sigma + lambda I)` and its inverse for `Sigma = (alpha1 - alpha2) I +
/// alpha2 11^T`. The inverse has the same form, `(beta1 - beta2) I + beta2 11^T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub alpha1: f64,
    pub alpha2: f64,
    pub lambda: f64,
    pub d: usize,
    pub beta1: f64,
    pub beta2: f64,
}

impl CovarianceModel {
    pub fn new(alpha1: f64, alpha2: f64, lambda: f64, d: usize) -> Result<Self> {
        let (beta1, beta2) = sherman_morrison_inverse(alpha1, alpha2, lambda, d)?;
        Ok(CovarianceModel {
            alpha1,
            alpha2,
            lambda,
            d,
            beta1,
            beta2,
        })
    }

    pub fn matrix(&self) -> Array2<f64> {
        structured(self.d, self.alpha1 + self.lambda, self.alpha2)
    }

    pub fn inverse(&self) -> Array2<f64> {
        structured(self.d, self.beta1, self.beta2)
    }
}

fn structured(d: usize, diag: f64, off: f64) -> Array2<f64> {
    Array2::from_shape_fn((d, d), |(i, j)| if i == j { diag } else { off })
}

/// Closed-form inverse of `(alpha1 + lambda - alpha2) I + alpha2 11^T`.
///
/// Returns `(beta1, beta2)`: the diagonal and off-diagonal entries of the
/// inverse.
pub fn sherman_morrison_inverse(alpha1: f64, alpha2: f64, lambda: f64, d: usize) -> Result<(f64, f64)> {
    if d == 0 {
        return Err(Error::param("dimension must be at least 1"));
    }
    let a = alpha1 + lambda;
    let gap = a - alpha2;
    let top = a + (d as f64 - 1.0) * alpha2;
    if !(gap > 0.0 && top > 0.0) || !gap.is_finite() || !top.is_finite() {
        return Err(Error::NotPositiveDefinite(format!(
            "alpha1 + lambda - alpha2 = {gap}, alpha1 + lambda + (d-1) alpha2 = {top}"
        )));
    }
    let denom = gap * top;
    let beta1 = (a + (d as f64 - 2.0) * alpha2) / denom;
    let beta2 = -alpha2 / denom;
    Ok((beta1, beta2))
}
