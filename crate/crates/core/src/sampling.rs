//! Perturbation laws and weighting kernels.
//!
//! Kernel width convention: for a binary mask `z'` with `k` ones out of `d`,
//! the exponential kernel is `exp((k - d) / sigma^2)`. The Binomial law is
//! the kernel-weighted uniform law renormalized, which makes each coordinate
//! an independent Bernoulli with `p = 1 / (1 + exp(-1 / sigma^2))`.
//!
//! All closed forms are evaluated in log space; `exp(-8d)` underflows once
//! `d` approaches 90.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawDistribution")]
pub enum DistributionSpec {
    UniformBinary { d: usize },
    Binomial { d: usize, sigma: f64 },
    Gaussian { d: usize, sigma: f64 },
    /// Laplace with scale `sigma / sqrt(2)`.
    Laplace { d: usize, sigma: f64 },
    /// Uniform on `[-sqrt(3) sigma, sqrt(3) sigma]^d`.
    UniformBox { d: usize, sigma: f64 },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawDistribution {
    UniformBinary { d: usize },
    Binomial { d: usize, sigma: f64 },
    Gaussian { d: usize, sigma: f64 },
    Laplace { d: usize, sigma: f64 },
    UniformBox { d: usize, sigma: f64 },
}

impl TryFrom<RawDistribution> for DistributionSpec {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        let spec = match raw {
            RawDistribution::UniformBinary { d } => DistributionSpec::UniformBinary { d },
            RawDistribution::Binomial { d, sigma } => DistributionSpec::Binomial { d, sigma },
            RawDistribution::Gaussian { d, sigma } => DistributionSpec::Gaussian { d, sigma },
            RawDistribution::Laplace { d, sigma } => DistributionSpec::Laplace { d, sigma },
            RawDistribution::UniformBox { d, sigma } => DistributionSpec::UniformBox { d, sigma },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Kernel widths must be positive; `+inf` is accepted where the limit is
/// well defined (the uniform limit of the binary laws).
pub(crate) fn check_width(sigma: f64, allow_infinite: bool) -> Result<()> {
    let ok = sigma > 0.0 && (sigma.is_finite() || allow_infinite);
    if ok {
        Ok(())
    } else {
        Err(Error::param(format!("kernel width must be positive, got {sigma}")))
    }
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::param("distribution dimension must be at least 1"));
        }
        match *self {
            DistributionSpec::UniformBinary { .. } => Ok(()),
            DistributionSpec::Binomial { sigma, .. } => check_width(sigma, true),
            DistributionSpec::Gaussian { sigma, .. }
            | DistributionSpec::Laplace { sigma, .. }
            | DistributionSpec::UniformBox { sigma, .. } => check_width(sigma, false),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            DistributionSpec::UniformBinary { d }
            | DistributionSpec::Binomial { d, .. }
            | DistributionSpec::Gaussian { d, .. }
            | DistributionSpec::Laplace { d, .. }
            | DistributionSpec::UniformBox { d, .. } => d,
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(
            self,
            DistributionSpec::UniformBinary { .. } | DistributionSpec::Binomial { .. }
        )
    }
}

/// `P(z'_i = 1)` under the Binomial law of width `sigma`.
pub fn binomial_probability(sigma: f64) -> f64 {
    let a = inv_sq(sigma);
    1.0 / (1.0 + (-a).exp())
}

fn inv_sq(sigma: f64) -> f64 {
    1.0 / (sigma * sigma)
}

/// Draws `n` i.i.d. rows of `d` coordinates. Deterministic in `(dist, n, seed)`.
pub fn draw(dist: &DistributionSpec, n: usize, seed: u64) -> Result<Array2<f64>> {
    dist.validate()?;
    if n == 0 {
        return Err(Error::param("sample count must be at least 1"));
    }
    let mut rng = rng::stream(seed);
    let d = dist.dim();
    let mut out = Array2::zeros((n, d));
    match *dist {
        DistributionSpec::UniformBinary { .. } => {
            out.mapv_inplace(|_| if rng.random::<bool>() { 1.0 } else { 0.0 });
        }
        DistributionSpec::Binomial { sigma, .. } => {
            let p = binomial_probability(sigma);
            out.mapv_inplace(|_| if rng.random_bool(p) { 1.0 } else { 0.0 });
        }
        DistributionSpec::Gaussian { sigma, .. } => {
            out.mapv_inplace(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                sigma * g
            });
        }
        DistributionSpec::Laplace { sigma, .. } => {
            let scale = sigma / std::f64::consts::SQRT_2;
            out.mapv_inplace(|_| {
                let e: f64 = Exp1.sample(&mut rng);
                if rng.random::<bool>() {
                    scale * e
                } else {
                    -scale * e
                }
            });
        }
        DistributionSpec::UniformBox { sigma, .. } => {
            let half = 3f64.sqrt() * sigma;
            out.mapv_inplace(|_| rng.random_range(-half..=half));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    ExpKernel { sigma: f64 },
    ShapKernel,
    Unit,
}

fn mask_count(zprime: &[f64]) -> Result<usize> {
    zprime.iter().try_fold(0usize, |k, &z| {
        if z == 1.0 {
            Ok(k + 1)
        } else if z == 0.0 {
            Ok(k)
        } else {
            Err(Error::param(format!("binary mask entry {z} is not 0 or 1")))
        }
    })
}

/// Natural log of the sample weight `pi(z')`.
pub fn log_weight(wspec: &WeightSpec, zprime: &[f64]) -> Result<f64> {
    let d = zprime.len();
    let k = mask_count(zprime)?;
    log_weight_by_count(wspec, d, k)
}

pub(crate) fn log_weight_by_count(wspec: &WeightSpec, d: usize, k: usize) -> Result<f64> {
    match *wspec {
        WeightSpec::Unit => Ok(0.0),
        WeightSpec::ExpKernel { sigma } => {
            check_width(sigma, true)?;
            Ok((k as f64 - d as f64) * inv_sq(sigma))
        }
        WeightSpec::ShapKernel => {
            if k == 0 || k >= d {
                return Err(Error::ShapDegenerate { k, d });
            }
            Ok(((d - 1) as f64).ln() - ln_binomial(d, k) - (k as f64).ln() - ((d - k) as f64).ln())
        }
    }
}

/// The sample weight `pi(z')` of a binary mask.
pub fn weight(wspec: &WeightSpec, zprime: &[f64]) -> Result<f64> {
    log_weight(wspec, zprime).map(f64::exp)
}

/// `ln C(n, k)`, exact summation for the small `n` used here.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (1..=k)
        .map(|i| ((n - k + i) as f64 / i as f64).ln())
        .sum()
}

/// Probability that a Binomial(`sigma`) mask of length `d` has exactly `k`
/// ones.
pub fn binomial_pmf(d: usize, sigma: f64, k: usize) -> Result<f64> {
    check_width(sigma, true)?;
    if k > d {
        return Err(Error::param(format!("count {k} exceeds dimension {d}")));
    }
    let a = inv_sq(sigma);
    // C(d,k) e^{ka} / (1+e^a)^d = C(d,k) e^{-(d-k)a} / (1+e^{-a})^d
    let log_p = ln_binomial(d, k) - (d - k) as f64 * a - d as f64 * (-a).exp().ln_1p();
    Ok(log_p.exp())
}

/// `E[pi(z')]` for the exponential kernel under the uniform binary law:
/// `((1 + exp(-1/sigma^2)) / 2)^d`.
pub fn expected_weight_uniform(d: usize, sigma: f64) -> Result<f64> {
    check_width(sigma, true)?;
    if d == 0 {
        return Err(Error::param("dimension must be at least 1"));
    }
    let a = inv_sq(sigma);
    Ok((d as f64 * ((-a).exp().ln_1p() - std::f64::consts::LN_2)).exp())
}

/// `E[pi(z')^2]` for the exponential kernel under the uniform binary law.
pub fn expected_squared_weight_uniform(d: usize, sigma: f64) -> Result<f64> {
    check_width(sigma, true)?;
    let a = inv_sq(sigma);
    Ok((d as f64 * ((-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_uniform_limit() {
        assert_eq!(binomial_probability(f64::INFINITY), 0.5);
        assert!((binomial_probability(1e6) - 0.5).abs() < 1e-12);
        for k in 0..=6 {
            let p = binomial_pmf(6, f64::INFINITY, k).unwrap();
            let expect = ln_binomial(6, k).exp() / 64.0;
            assert!((p - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn binomial_probability_at_unit_width() {
        // 1/(1+e^-1) to 12 digits
        assert!((binomial_probability(1.0) - 0.731_058_578_630).abs() < 1e-12);
    }

    #[test]
    fn pmf_normalizes() {
        let total: f64 = (0..=30).map(|k| binomial_pmf(30, 0.25, k).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pmf_small_case() {
        // e^2 / (1+e)^2
        let p = binomial_pmf(2, 1.0, 2).unwrap();
        assert!((p - 0.534_446_645_388).abs() < 1e-11, "{p}");
    }

    #[test]
    fn exp_kernel_values() {
        let w = WeightSpec::ExpKernel { sigma: 0.25 };
        assert_eq!(weight(&w, &[1.0; 5]).unwrap(), 1.0);
        let mut z = vec![1.0; 20];
        z[3] = 0.0;
        let v = weight(&w, &z).unwrap();
        assert!((v / (-16f64).exp() - 1.0).abs() < 1e-12);
        assert!((v - 1.1254e-7).abs() < 1e-11);
        let half: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
        let lw = log_weight(&w, &half).unwrap();
        assert!((lw + 8.0 * 20.0).abs() < 1e-12);
    }

    #[test]
    fn shap_kernel_values() {
        let v = weight(&WeightSpec::ShapKernel, &[1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((v - 0.125).abs() < 1e-15);
        assert!(matches!(
            weight(&WeightSpec::ShapKernel, &[0.0; 4]),
            Err(Error::ShapDegenerate { k: 0, d: 4 })
        ));
        assert!(matches!(
            weight(&WeightSpec::ShapKernel, &[1.0; 4]),
            Err(Error::ShapDegenerate { k: 4, d: 4 })
        ));
        assert_eq!(weight(&WeightSpec::Unit, &[0.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn expected_weight_limits() {
        assert!((expected_weight_uniform(7, f64::INFINITY).unwrap() - 1.0).abs() < 1e-15);
        assert!((expected_weight_uniform(1, 1e-3).unwrap() - 0.5).abs() < 1e-15);
        let v = expected_weight_uniform(20, 0.25).unwrap();
        assert!((v - 9.5367e-7).abs() < 1e-10, "{v}");
    }

    #[test]
    fn draws_are_deterministic() {
        for dist in [
            DistributionSpec::UniformBinary { d: 4 },
            DistributionSpec::Binomial { d: 4, sigma: 1.0 },
            DistributionSpec::Gaussian { d: 4, sigma: 1.0 },
            DistributionSpec::Laplace { d: 4, sigma: 1.0 },
            DistributionSpec::UniformBox { d: 4, sigma: 1.0 },
        ] {
            assert_eq!(draw(&dist, 50, 9).unwrap(), draw(&dist, 50, 9).unwrap());
            assert_ne!(draw(&dist, 50, 9).unwrap(), draw(&dist, 50, 10).unwrap());
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(DistributionSpec::Gaussian { d: 3, sigma: 0.0 }.validate().is_err());
        assert!(DistributionSpec::Gaussian { d: 3, sigma: f64::INFINITY }.validate().is_err());
        assert!(DistributionSpec::Binomial { d: 0, sigma: 1.0 }.validate().is_err());
        assert!(draw(&DistributionSpec::UniformBinary { d: 2 }, 0, 0).is_err());
        let err = serde_json::from_str::<DistributionSpec>(r#"{"kind":"laplace","d":2,"sigma":-1}"#);
        assert!(err.is_err());
        let ok: DistributionSpec =
            serde_json::from_str(r#"{"kind":"uniform_box","d":2,"sigma":0.5}"#).unwrap();
        assert_eq!(ok, DistributionSpec::UniformBox { d: 2, sigma: 0.5 });
    }

    #[test]
    fn uniform_box_support() {
        let s = draw(&DistributionSpec::UniformBox { d: 3, sigma: 0.5 }, 2000, 1).unwrap();
        let half = 3f64.sqrt() * 0.5;
        assert!(s.iter().all(|v| v.abs() <= half));
    }
}
