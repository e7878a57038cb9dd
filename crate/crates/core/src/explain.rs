//! Explanation methods.
//!
//! Every method fits a linear surrogate `b + w^T z'` to model outputs on
//! perturbed inputs:
//!
//! | method          | `z'` law                         | weights        | lambda     |
//! |-----------------|----------------------------------|----------------|------------|
//! | LIME            | uniform on `{0,1}^d`             | `exp((k-d)/s^2)` | request  |
//! | GLIME-Binomial  | i.i.d. Bernoulli(`1/(1+e^{-1/s^2})`) | 1          | request    |
//! | GLIME-Gauss etc | continuous, additive per segment | 1              | request    |
//! | KernelSHAP      | coalitions `1 <= k <= d-1`       | Shapley kernel | 0          |
//!
//! LIME and GLIME-Binomial share the same infinite-sample limit; the
//! Binomial law simply absorbs LIME's kernel into the sampling distribution.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_space::{lift_binary, lift_continuous, Reference, Segmentation};
use crate::models::ModelSpec;
use crate::rng;
use crate::sampling::{self, check_width, DistributionSpec, WeightSpec};
use crate::solver::{solve_weighted_ridge, RidgeProblem};

/// Default ridge strength for the ridge-based methods.
pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Largest dimension for exhaustive KernelSHAP enumeration.
pub const MAX_EXACT_SHAP_DIM: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodSpec {
    Lime {
        sigma: f64,
        /// Drop the exponential kernel (every sample weighs 1).
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        unit_weights: bool,
    },
    GlimeBinomial {
        sigma: f64,
    },
    GlimeGauss {
        sigma: f64,
    },
    GlimeLaplace {
        sigma: f64,
    },
    GlimeUniform {
        sigma: f64,
    },
    KernelShap {
        #[serde(default = "default_exact")]
        exact: bool,
    },
    SmoothGrad {
        sigma: f64,
    },
}

fn default_exact() -> bool {
    true
}

impl MethodSpec {
    pub fn lime(sigma: f64) -> Self {
        MethodSpec::Lime {
            sigma,
            unit_weights: false,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Lime {
                unit_weights: false,
                ..
            } => "lime",
            MethodSpec::Lime {
                unit_weights: true, ..
            } => "lime_unweighted",
            MethodSpec::GlimeBinomial { .. } => "glime_binomial",
            MethodSpec::GlimeGauss { .. } => "glime_gauss",
            MethodSpec::GlimeLaplace { .. } => "glime_laplace",
            MethodSpec::GlimeUniform { .. } => "glime_uniform",
            MethodSpec::KernelShap { exact: true } => "kernel_shap",
            MethodSpec::KernelShap { exact: false } => "kernel_shap_sampled",
            MethodSpec::SmoothGrad { .. } => "smooth_grad",
        }
    }

    /// Parses the names produced by [`MethodSpec::name`] with a kernel width.
    pub fn from_name(name: &str, sigma: f64) -> Result<Self> {
        let method = match name {
            "lime" => MethodSpec::lime(sigma),
            "lime_unweighted" => MethodSpec::Lime {
                sigma,
                unit_weights: true,
            },
            "glime_binomial" => MethodSpec::GlimeBinomial { sigma },
            "glime_gauss" => MethodSpec::GlimeGauss { sigma },
            "glime_laplace" => MethodSpec::GlimeLaplace { sigma },
            "glime_uniform" => MethodSpec::GlimeUniform { sigma },
            "kernel_shap" => MethodSpec::KernelShap { exact: true },
            "kernel_shap_sampled" => MethodSpec::KernelShap { exact: false },
            "smooth_grad" => MethodSpec::SmoothGrad { sigma },
            other => return Err(Error::param(format!("unknown method '{other}'"))),
        };
        method.validate()?;
        Ok(method)
    }

    pub fn sigma(&self) -> Option<f64> {
        match *self {
            MethodSpec::Lime { sigma, .. }
            | MethodSpec::GlimeBinomial { sigma }
            | MethodSpec::GlimeGauss { sigma }
            | MethodSpec::GlimeLaplace { sigma }
            | MethodSpec::GlimeUniform { sigma }
            | MethodSpec::SmoothGrad { sigma } => Some(sigma),
            MethodSpec::KernelShap { .. } => None,
        }
    }

    /// Whether perturbations are binary masks (and so need a reference).
    pub fn is_binary(&self) -> bool {
        matches!(
            self,
            MethodSpec::Lime { .. } | MethodSpec::GlimeBinomial { .. } | MethodSpec::KernelShap { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MethodSpec::Lime { sigma, .. } | MethodSpec::GlimeBinomial { sigma } => {
                check_width(sigma, true)
            }
            MethodSpec::GlimeGauss { sigma }
            | MethodSpec::GlimeLaplace { sigma }
            | MethodSpec::GlimeUniform { sigma }
            | MethodSpec::SmoothGrad { sigma } => check_width(sigma, false),
            MethodSpec::KernelShap { .. } => Ok(()),
        }
    }

    /// Sampling law of the GLIME variants over `d` features.
    fn glime_distribution(&self, d: usize) -> Option<DistributionSpec> {
        match *self {
            MethodSpec::GlimeBinomial { sigma } => Some(DistributionSpec::Binomial { d, sigma }),
            MethodSpec::GlimeGauss { sigma } => Some(DistributionSpec::Gaussian { d, sigma }),
            MethodSpec::GlimeLaplace { sigma } => Some(DistributionSpec::Laplace { d, sigma }),
            MethodSpec::GlimeUniform { sigma } => Some(DistributionSpec::UniformBox { d, sigma }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExplainRequest<'a> {
    pub model: &'a ModelSpec,
    pub x: &'a [f64],
    pub segmentation: &'a Segmentation,
    /// Required by the binary methods, ignored by the continuous ones.
    pub reference: Option<&'a Reference>,
    pub method: MethodSpec,
    pub n: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl ExplainRequest<'_> {
    fn validate(&self) -> Result<()> {
        self.method.validate()?;
        if self.n == 0 {
            return Err(Error::param("sample count must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.x.len() != self.segmentation.raw_len() {
            return Err(Error::LengthMismatch {
                what: "input",
                expected: self.segmentation.raw_len(),
                actual: self.x.len(),
            });
        }
        if self.method.is_binary() && self.reference.is_none() {
            return Err(Error::param(format!(
                "{} perturbs with a reference, none given",
                self.method.name()
            )));
        }
        Ok(())
    }

    fn require_reference(&self) -> Result<&Reference> {
        self.reference
            .ok_or_else(|| Error::param("binary perturbations need a reference"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ExplanationRecord", try_from = "ExplanationRecord")]
pub struct Explanation {
    pub w: Vec<f64>,
    pub intercept: f64,
    /// Weighted R^2 of the surrogate on its own samples; absent for
    /// SmoothGrad.
    pub r2: Option<f64>,
    pub method: MethodSpec,
    pub n: usize,
    pub seed: u64,
    pub lambda: f64,
    pub d: usize,
}

/// Flat JSON layout of an [`Explanation`].
#[derive(Serialize, Deserialize)]
struct ExplanationRecord {
    method: String,
    sigma: Option<f64>,
    lambda: f64,
    n: usize,
    seed: u64,
    d: usize,
    w: Vec<f64>,
    intercept: f64,
    r2: Option<f64>,
}

impl From<Explanation> for ExplanationRecord {
    fn from(e: Explanation) -> Self {
        ExplanationRecord {
            method: e.method.name().to_string(),
            sigma: e.method.sigma(),
            lambda: e.lambda,
            n: e.n,
            seed: e.seed,
            d: e.d,
            w: e.w,
            intercept: e.intercept,
            r2: e.r2,
        }
    }
}

impl TryFrom<ExplanationRecord> for Explanation {
    type Error = Error;

    fn try_from(r: ExplanationRecord) -> Result<Self> {
        if r.w.len() != r.d {
            return Err(Error::LengthMismatch {
                what: "attributions",
                expected: r.d,
                actual: r.w.len(),
            });
        }
        Ok(Explanation {
            method: MethodSpec::from_name(&r.method, r.sigma.unwrap_or(1.0))?,
            w: r.w,
            intercept: r.intercept,
            r2: r.r2,
            n: r.n,
            seed: r.seed,
            lambda: r.lambda,
            d: r.d,
        })
    }
}

impl Explanation {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("explanations always serialize")
    }
}

/// Runs whichever method the request names.
pub fn explain(req: &ExplainRequest<'_>) -> Result<Explanation> {
    match req.method {
        MethodSpec::Lime { .. } => explain_lime(req),
        MethodSpec::KernelShap { .. } => explain_kernelshap(req),
        MethodSpec::SmoothGrad { sigma } => {
            req.validate()?;
            if !req.segmentation.is_singleton() {
                return Err(Error::param(
                    "SmoothGrad is defined on raw features only (singleton segmentation)",
                ));
            }
            let w = smoothgrad_estimate(req.model, req.x, sigma, req.n, req.seed)?;
            let fx = evaluate_one(req.model, req.x)?;
            Ok(Explanation {
                d: w.len(),
                w,
                intercept: fx,
                r2: None,
                method: req.method,
                n: req.n,
                seed: req.seed,
                lambda: 0.0,
            })
        }
        _ => explain_glime(req),
    }
}

fn evaluate_one(model: &ModelSpec, x: &[f64]) -> Result<f64> {
    let point = Array2::from_shape_vec((1, x.len()), x.to_vec())
        .map_err(|e| Error::param(e.to_string()))?;
    Ok(model.evaluate(point.view())?[0])
}

fn finish(
    req: &ExplainRequest<'_>,
    problem: &RidgeProblem,
    lambda: f64,
    n: usize,
) -> Result<Explanation> {
    let solution = solve_weighted_ridge(problem)?;
    Ok(Explanation {
        d: solution.w.len(),
        w: solution.w,
        intercept: solution.intercept,
        r2: Some(solution.r2),
        method: req.method,
        n,
        seed: req.seed,
        lambda,
    })
}

/// LIME: uniform masks, exponential-kernel weights, ridge with intercept.
pub fn explain_lime(req: &ExplainRequest<'_>) -> Result<Explanation> {
    let MethodSpec::Lime {
        sigma,
        unit_weights,
    } = req.method
    else {
        return Err(Error::param(format!("{} is not LIME", req.method.name())));
    };
    req.validate()?;
    let reference = req.require_reference()?;
    let d = req.segmentation.num_features();
    let masks = sampling::draw(&DistributionSpec::UniformBinary { d }, req.n, req.seed)?;
    let kernel = if unit_weights {
        WeightSpec::Unit
    } else {
        WeightSpec::ExpKernel { sigma }
    };
    let weights = masks
        .rows()
        .into_iter()
        .map(|row| {
            let k = row.iter().filter(|&&z| z == 1.0).count();
            // exp((k-d)/sigma^2) underflows for large d; the floor keeps the
            // sample in the problem with a negligible weight
            sampling::log_weight_by_count(&kernel, d, k).map(|lw| lw.exp().max(f64::MIN_POSITIVE))
        })
        .collect::<Result<Array1<f64>>>()?;
    let points = lift_binary(req.x, reference, req.segmentation, masks.view())?;
    let responses = req.model.evaluate(points.view())?;
    let problem = RidgeProblem::new(masks, responses, weights, req.lambda, true)?;
    finish(req, &problem, req.lambda, req.n)
}

/// GLIME: samples drawn from the kernel-absorbing law, unit weights.
pub fn explain_glime(req: &ExplainRequest<'_>) -> Result<Explanation> {
    let d = req.segmentation.num_features();
    let Some(dist) = req.method.glime_distribution(d) else {
        return Err(Error::param(format!("{} is not a GLIME variant", req.method.name())));
    };
    req.validate()?;
    let samples = sampling::draw(&dist, req.n, req.seed)?;
    let points = if dist.is_binary() {
        lift_binary(req.x, req.require_reference()?, req.segmentation, samples.view())?
    } else {
        lift_continuous(req.x, req.segmentation, samples.view())?
    };
    let responses = req.model.evaluate(points.view())?;
    let problem = RidgeProblem::unweighted(samples, responses, req.lambda, true)?;
    finish(req, &problem, req.lambda, req.n)
}

/// KernelSHAP: Shapley-kernel weighted least squares with a free intercept
/// and no penalty.
///
/// Exact mode enumerates every coalition with `1 <= k <= d-1`. Without an
/// efficiency constraint this recovers Shapley values exactly for games with
/// at most pairwise interactions; higher-order interactions shift every
/// attribution by a common constant. With `d = 2` the two coalitions cannot
/// identify two weights and an intercept, and the solve reports
/// `SingularSystem`.
pub fn explain_kernelshap(req: &ExplainRequest<'_>) -> Result<Explanation> {
    let MethodSpec::KernelShap { exact } = req.method else {
        return Err(Error::param(format!("{} is not KernelSHAP", req.method.name())));
    };
    req.validate()?;
    let reference = req.require_reference()?;
    let d = req.segmentation.num_features();
    if d < 2 {
        return Err(Error::ShapDegenerate { k: 0, d });
    }
    let masks = if exact {
        if d > MAX_EXACT_SHAP_DIM {
            return Err(Error::DimensionTooLarge {
                d,
                max: MAX_EXACT_SHAP_DIM,
            });
        }
        let full = (1u32 << d) - 1;
        let count = full as usize - 1;
        let mut masks = Array2::zeros((count, d));
        for (mut row, bits) in masks.axis_iter_mut(Axis(0)).zip(1..full) {
            for (j, z) in row.iter_mut().enumerate() {
                *z = f64::from((bits >> j) & 1);
            }
        }
        masks
    } else {
        sample_coalitions(d, req.n, req.seed)
    };
    let weights = masks
        .rows()
        .into_iter()
        .map(|row| {
            let k = row.iter().filter(|&&z| z == 1.0).count();
            sampling::log_weight_by_count(&WeightSpec::ShapKernel, d, k).map(f64::exp)
        })
        .collect::<Result<Array1<f64>>>()?;
    let n = masks.nrows();
    let points = lift_binary(req.x, reference, req.segmentation, masks.view())?;
    let responses = req.model.evaluate(points.view())?;
    let problem = RidgeProblem::new(masks, responses, weights, 0.0, true)?;
    finish(req, &problem, 0.0, n)
}

/// Uniform masks with the empty and full coalitions rejected.
fn sample_coalitions(d: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng::stream(seed);
    let mut masks = Array2::zeros((n, d));
    for mut row in masks.axis_iter_mut(Axis(0)) {
        loop {
            let mut k = 0;
            for z in row.iter_mut() {
                let on = rng.random::<bool>();
                *z = if on { 1.0 } else { 0.0 };
                k += usize::from(on);
            }
            if k != 0 && k != d {
                break;
            }
        }
    }
    masks
}

/// Gaussian-smoothed gradient on raw features,
/// `(1/sigma^2) mean_i z_i (f(x + z_i) - f(x))` with `z_i ~ N(0, sigma^2 I)`.
///
/// Subtracting `f(x)` leaves the expectation unchanged (`E[z] = 0`) and
/// removes the `f(x) / sigma` term from the estimator's spread.
pub fn smoothgrad_estimate(
    model: &ModelSpec,
    x: &[f64],
    sigma: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_width(sigma, false)?;
    let dim = x.len();
    if dim == 0 {
        return Err(Error::param("input is empty"));
    }
    let offsets = sampling::draw(&DistributionSpec::Gaussian { d: dim, sigma }, n, seed)?;
    let center = Array1::from(x.to_vec());
    let points = &offsets + &center.view().insert_axis(Axis(0));
    let values = model.evaluate(points.view())?;
    let fx = evaluate_one(model, x)?;
    let centered = values - fx;
    let scale = 1.0 / (sigma * sigma * n as f64);
    Ok((offsets.t().dot(&centered) * scale).to_vec())
}

fn linear_check(c: &[f64], x: &[f64], seg: &Segmentation) -> Result<()> {
    for (what, len) in [("coefficients", c.len()), ("input", x.len())] {
        if len != seg.raw_len() {
            return Err(Error::LengthMismatch {
                what,
                expected: seg.raw_len(),
                actual: len,
            });
        }
    }
    Ok(())
}

/// Infinite-sample limit of LIME / GLIME-Binomial for `f(z) = c^T z + bias`:
/// `w_j = sum_{i in seg j} c_i (x_i - r_i)`, `b = bias + c^T r`.
///
/// The limit does not depend on `sigma`; it is accepted for symmetry with
/// the sampled estimators and validated.
pub fn infinite_limit_linear_binomial(
    c: &[f64],
    bias: f64,
    x: &[f64],
    reference: &Reference,
    seg: &Segmentation,
    sigma: f64,
) -> Result<(Vec<f64>, f64)> {
    check_width(sigma, true)?;
    linear_check(c, x, seg)?;
    if reference.len() != seg.raw_len() {
        return Err(Error::LengthMismatch {
            what: "reference",
            expected: seg.raw_len(),
            actual: reference.len(),
        });
    }
    let r = reference.values();
    let contrib: Vec<f64> = (0..c.len()).map(|i| c[i] * (x[i] - r[i])).collect();
    let intercept = bias + c.iter().zip(r).map(|(a, b)| a * b).sum::<f64>();
    Ok((seg.segment_sums(&contrib), intercept))
}

/// Least-squares limit of the additive continuous GLIME variants for
/// `f(z) = c^T z + bias`: `w_j = sum_{i in seg j} c_i`, `b = f(x)`.
pub fn infinite_limit_linear_gauss(
    c: &[f64],
    bias: f64,
    x: &[f64],
    seg: &Segmentation,
) -> Result<(Vec<f64>, f64)> {
    linear_check(c, x, seg)?;
    let intercept = bias + c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    Ok((seg.segment_sums(c), intercept))
}
