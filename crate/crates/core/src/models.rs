//! Black-box models.
//!
//! The builtin variants have known structure so explanation oracles can be
//! checked against them exactly. `Remote` forwards batches to an HTTP
//! endpoint speaking `{"points": [[...]]}` / `{"values": [...]}`.
//!
//! Outputs are not clamped. The concentration arguments behind the sampling
//! budgets assume `|f| <= 1`; unbounded models still work but converge at
//! rates scaled by their output range.

use std::time::Duration;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Central finite-difference step used for `Mlp` gradients.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// Row-major `out x in` weight matrix.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteSpec {
    pub endpoint: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Declared input dimension; rows are checked against it when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_dim: Option<usize>,
    /// Extra attempts per failed batch. Zero by default: a silently retried
    /// partial batch would bias Monte Carlo estimates.
    #[serde(default)]
    pub retries: u32,
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_batch_size() -> usize {
    256
}

/// A black-box model `f: R^D -> R`.
///
/// Deserializes from JSON with a `"kind"` tag. Quadratic matrices are
/// symmetrized on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawModelSpec")]
pub enum ModelSpec {
    Linear {
        coefficients: Vec<f64>,
        bias: f64,
    },
    /// `f(x) = x^T A x + c^T x + b`
    Quadratic {
        matrix: Vec<Vec<f64>>,
        coefficients: Vec<f64>,
        bias: f64,
    },
    /// Dense network with `tanh` on every hidden layer and a linear scalar
    /// output layer.
    Mlp {
        layers: Vec<DenseLayer>,
        #[serde(default)]
        activation: Activation,
    },
    Remote(RemoteSpec),
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawModelSpec {
    Linear {
        coefficients: Vec<f64>,
        #[serde(default)]
        bias: f64,
    },
    Quadratic {
        matrix: Vec<Vec<f64>>,
        coefficients: Option<Vec<f64>>,
        #[serde(default)]
        bias: f64,
    },
    Mlp {
        layers: Vec<DenseLayer>,
        #[serde(default)]
        activation: Activation,
    },
    Remote(RemoteSpec),
}

impl TryFrom<RawModelSpec> for ModelSpec {
    type Error = Error;

    fn try_from(raw: RawModelSpec) -> Result<Self> {
        match raw {
            RawModelSpec::Linear { coefficients, bias } => ModelSpec::linear(coefficients, bias),
            RawModelSpec::Quadratic {
                matrix,
                coefficients,
                bias,
            } => {
                let c = coefficients.unwrap_or_else(|| vec![0.0; matrix.len()]);
                ModelSpec::quadratic(matrix, c, bias)
            }
            RawModelSpec::Mlp { layers, activation: Activation::Tanh } => ModelSpec::mlp(layers),
            RawModelSpec::Remote(spec) => ModelSpec::remote(spec),
        }
    }
}

fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::param(format!("{what} contains non-finite entries")))
    }
}

impl ModelSpec {
    pub fn linear(coefficients: Vec<f64>, bias: f64) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::param("linear model needs at least one coefficient"));
        }
        check_finite("coefficients", &coefficients)?;
        check_finite("bias", &[bias])?;
        Ok(ModelSpec::Linear { coefficients, bias })
    }

    /// Builds a quadratic model, replacing `matrix` by `(A + A^T) / 2`.
    pub fn quadratic(matrix: Vec<Vec<f64>>, coefficients: Vec<f64>, bias: f64) -> Result<Self> {
        let dim = matrix.len();
        if dim == 0 {
            return Err(Error::param("quadratic model needs a non-empty matrix"));
        }
        for row in &matrix {
            if row.len() != dim {
                return Err(Error::param("quadratic matrix must be square"));
            }
            check_finite("matrix", row)?;
        }
        if coefficients.len() != dim {
            return Err(Error::LengthMismatch {
                what: "quadratic coefficients",
                expected: dim,
                actual: coefficients.len(),
            });
        }
        check_finite("coefficients", &coefficients)?;
        check_finite("bias", &[bias])?;
        let sym = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| 0.5 * (matrix[i][j] + matrix[j][i]))
                    .collect()
            })
            .collect();
        Ok(ModelSpec::Quadratic {
            matrix: sym,
            coefficients,
            bias,
        })
    }

    pub fn mlp(layers: Vec<DenseLayer>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::param("mlp needs at least one layer"));
        };
        let mut width = first.weights.first().map_or(0, Vec::len);
        if width == 0 {
            return Err(Error::param("mlp input layer has no columns"));
        }
        for (idx, layer) in layers.iter().enumerate() {
            if layer.weights.is_empty() || layer.weights.len() != layer.biases.len() {
                return Err(Error::param(format!(
                    "mlp layer {idx}: weight rows and biases differ in length"
                )));
            }
            for row in &layer.weights {
                if row.len() != width {
                    return Err(Error::param(format!(
                        "mlp layer {idx}: expected {width} columns, got {}",
                        row.len()
                    )));
                }
                check_finite("mlp weights", row)?;
            }
            check_finite("mlp biases", &layer.biases)?;
            width = layer.weights.len();
        }
        if width != 1 {
            return Err(Error::param("mlp output layer must have exactly one unit"));
        }
        Ok(ModelSpec::Mlp {
            layers,
            activation: Activation::Tanh,
        })
    }

    pub fn remote(spec: RemoteSpec) -> Result<Self> {
        if spec.batch_size == 0 {
            return Err(Error::param("remote batch_size must be positive"));
        }
        if spec.endpoint.is_empty() {
            return Err(Error::param("remote endpoint is empty"));
        }
        Ok(ModelSpec::Remote(spec))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Declared input dimension `D`, if known.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            ModelSpec::Linear { coefficients, .. } => Some(coefficients.len()),
            ModelSpec::Quadratic { matrix, .. } => Some(matrix.len()),
            ModelSpec::Mlp { layers, .. } => layers[0].weights.first().map(Vec::len),
            ModelSpec::Remote(spec) => spec.input_dim,
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self, ModelSpec::Remote(_))
    }

    /// Applies the model to every row of `points`.
    pub fn evaluate(&self, points: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if let Some(dim) = self.input_dim() {
            if points.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: points.ncols(),
                });
            }
        }
        match self {
            ModelSpec::Remote(spec) => evaluate_remote(spec, points),
            _ => Ok(points.rows().into_iter().map(|row| self.eval_one(row)).collect()),
        }
    }

    /// [`evaluate`](Self::evaluate) on `n_points` rows stored row-major in
    /// `points`.
    pub fn evaluate_flat(&self, points: &[f64], n_points: usize) -> Result<Vec<f64>> {
        if n_points == 0 || !points.len().is_multiple_of(n_points) {
            return Err(Error::param(format!(
                "{} values do not split into {n_points} points",
                points.len()
            )));
        }
        let view = ArrayView2::from_shape((n_points, points.len() / n_points), points)
            .map_err(|e| Error::param(e.to_string()))?;
        Ok(self.evaluate(view)?.to_vec())
    }

    /// Single-point evaluation for builtin models. Panics on `Remote`.
    fn eval_one(&self, x: ArrayView1<'_, f64>) -> f64 {
        match self {
            ModelSpec::Linear { coefficients, bias } => {
                x.iter().zip(coefficients).map(|(a, b)| a * b).sum::<f64>() + bias
            }
            ModelSpec::Quadratic {
                matrix,
                coefficients,
                bias,
            } => {
                let mut acc = *bias;
                for (i, row) in matrix.iter().enumerate() {
                    let ax: f64 = row.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                    acc += x[i] * ax + coefficients[i] * x[i];
                }
                acc
            }
            ModelSpec::Mlp { layers, .. } => {
                let mut act: Vec<f64> = x.to_vec();
                let last = layers.len() - 1;
                for (idx, layer) in layers.iter().enumerate() {
                    act = layer
                        .weights
                        .iter()
                        .zip(&layer.biases)
                        .map(|(row, b)| {
                            let pre = row.iter().zip(&act).map(|(w, a)| w * a).sum::<f64>() + b;
                            if idx == last {
                                pre
                            } else {
                                pre.tanh()
                            }
                        })
                        .collect();
                }
                act[0]
            }
            ModelSpec::Remote(_) => unreachable!("remote models are evaluated in batches"),
        }
    }

    /// Gradient of a builtin model at `point`.
    pub fn gradient(&self, point: &[f64]) -> Result<Vec<f64>> {
        if let Some(dim) = self.input_dim() {
            if point.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: point.len(),
                });
            }
        }
        match self {
            ModelSpec::Linear { coefficients, .. } => Ok(coefficients.clone()),
            ModelSpec::Quadratic {
                matrix,
                coefficients,
                ..
            } => Ok(matrix
                .iter()
                .zip(coefficients)
                .map(|(row, c)| 2.0 * row.iter().zip(point).map(|(a, x)| a * x).sum::<f64>() + c)
                .collect()),
            ModelSpec::Mlp { .. } => {
                let mut probe = Array1::from(point.to_vec());
                let mut grad = Vec::with_capacity(point.len());
                for i in 0..point.len() {
                    probe[i] = point[i] + FD_STEP;
                    let up = self.eval_one(probe.view());
                    probe[i] = point[i] - FD_STEP;
                    let down = self.eval_one(probe.view());
                    probe[i] = point[i];
                    grad.push((up - down) / (2.0 * FD_STEP));
                }
                Ok(grad)
            }
            ModelSpec::Remote(_) => Err(Error::UnsupportedModel("gradient of a remote model")),
        }
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    points: &'a [Vec<f64>],
}

#[derive(Deserialize)]
struct RemoteResponse {
    values: Vec<f64>,
}

fn evaluate_remote(spec: &RemoteSpec, points: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(spec.timeout_ms)))
        .http_status_as_error(true)
        .build()
        .into();
    let rows: Vec<Vec<f64>> = points.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut out = Vec::with_capacity(rows.len());
    for batch in rows.chunks(spec.batch_size) {
        let mut attempt = 0;
        let values = loop {
            match post_batch(&agent, &spec.endpoint, batch) {
                Ok(v) => break v,
                Err(Error::RemoteUnavailable(_)) if attempt < spec.retries => attempt += 1,
                Err(e) => return Err(e),
            }
        };
        out.extend(values);
    }
    Ok(Array1::from(out))
}

fn post_batch(agent: &ureq::Agent, endpoint: &str, batch: &[Vec<f64>]) -> Result<Vec<f64>> {
    let response = agent
        .post(endpoint)
        .send_json(RemoteRequest { points: batch })
        .map_err(|e| Error::RemoteUnavailable(e.to_string()))?;
    let parsed: RemoteResponse = response
        .into_body()
        .read_json()
        .map_err(|e| Error::RemoteUnavailable(format!("unreadable response: {e}")))?;
    if parsed.values.len() != batch.len() {
        return Err(Error::RemoteMalformed {
            expected: batch.len(),
            actual: parsed.values.len(),
        });
    }
    Ok(parsed.values)
}
