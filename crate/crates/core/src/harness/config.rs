use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::MethodSpec;
use crate::feature_space::{grid_segment, mean_reference, Reference, Segmentation, Shape};
use crate::metrics::Norm;
use crate::models::ModelSpec;

/// Either a path to a JSON file or the value inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

impl<T: for<'de> Deserialize<'de> + Clone> Source<T> {
    fn resolve(&self, base: Option<&Path>) -> Result<T> {
        match self {
            Source::Inline(v) => Ok(v.clone()),
            Source::Path(p) => {
                let path = match base {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p.clone(),
                };
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    Error::config(format!("cannot read {}: {e}", path.display()))
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::config(format!("{}: {e}", path.display())))
            }
        }
    }
}

/// A raw input vector with optional image shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputData {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentationParams {
    /// One feature per raw coordinate.
    #[default]
    Singleton,
    Grid {
        rows: usize,
        cols: usize,
    },
    Explicit {
        assignment: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceParams {
    /// `mean`, except zeros under a singleton segmentation, where the
    /// per-segment mean would be the input itself.
    #[default]
    Auto,
    /// Per-segment mean of the input.
    Mean,
    Constant {
        value: f64,
    },
    Values {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::config(format!("unknown format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct OutputParams {
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricParams {
    /// Top-K for stability; `min(20, d)` when absent.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub abs: bool,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_norms")]
    pub norms: Vec<Norm>,
    #[serde(default = "default_m")]
    pub m: usize,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            k: None,
            abs: false,
            epsilons: default_epsilons(),
            norms: default_norms(),
            m: default_m(),
        }
    }
}

fn default_epsilons() -> Vec<f64> {
    vec![0.5]
}

fn default_norms() -> Vec<Norm> {
    vec![Norm::L2]
}

fn default_m() -> usize {
    1000
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_lambdas() -> Vec<f64> {
    vec![crate::explain::DEFAULT_LAMBDA]
}

/// Pseudo-method accepted by fidelity sweeps on linear models: the exact
/// least-squares limit of the additive continuous design.
pub const ORACLE_METHOD: &str = "oracle";

/// A sweep definition as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Source<ModelSpec>,
    pub inputs: Vec<Source<InputData>>,
    #[serde(default)]
    pub segmentation: SegmentationParams,
    #[serde(default)]
    pub reference: ReferenceParams,
    /// Method names, e.g. `lime`, `lime_unweighted`, `glime_binomial`,
    /// `glime_gauss`, `kernel_shap`.
    pub methods: Vec<String>,
    pub sigmas: Vec<f64>,
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// Replicate ids; replicate `r` draws with seed `splitmix64(master_seed ^ r)`.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub metrics: MetricParams,
    #[serde(default)]
    pub output: OutputParams,
}

/// One fully materialized input: raw values, features, reference.
#[derive(Debug, Clone)]
pub struct PreparedInput {
    pub x: Vec<f64>,
    pub segmentation: Segmentation,
    pub reference: Reference,
}

/// A validated config with files loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: ModelSpec,
    pub inputs: Vec<PreparedInput>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = [
            ("inputs", self.inputs.is_empty()),
            ("methods", self.methods.is_empty()),
            ("sigmas", self.sigmas.is_empty()),
            ("sample_sizes", self.sample_sizes.is_empty()),
            ("lambdas", self.lambdas.is_empty()),
            ("seeds", self.seeds.is_empty()),
            ("metrics.epsilons", self.metrics.epsilons.is_empty()),
            ("metrics.norms", self.metrics.norms.is_empty()),
        ];
        if let Some((name, _)) = nonempty.iter().find(|(_, empty)| *empty) {
            return Err(Error::config(format!("{name} must not be empty")));
        }
        let distinct: HashSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::config("seeds must be distinct"));
        }
        if self.sample_sizes.contains(&0) {
            return Err(Error::config("sample sizes must be at least 1"));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::config(format!("sigma must be positive, got {s}")));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(Error::config(format!("lambda must be >= 0, got {l}")));
        }
        if let Some(e) = self.metrics.epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(Error::config(format!("epsilon must be positive, got {e}")));
        }
        if self.metrics.m == 0 {
            return Err(Error::config("metrics.m must be at least 1"));
        }
        for name in &self.methods {
            if name != ORACLE_METHOD {
                MethodSpec::from_name(name, 1.0).map_err(|e| Error::config(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Validates and loads every referenced file. Relative paths resolve
    /// against `base`.
    pub fn prepare(self, base: Option<&Path>) -> Result<Experiment> {
        self.validate()?;
        let model = self.model.resolve(base)?;
        let inputs = self
            .inputs
            .iter()
            .map(|src| {
                let data = src.resolve(base)?;
                prepare_input(&data, &self.segmentation, &self.reference)
                    .map_err(|e| Error::config(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(dim) = model.input_dim() {
            if let Some(bad) = inputs.iter().find(|i| i.x.len() != dim) {
                return Err(Error::config(format!(
                    "model takes {dim} inputs but an input has {}",
                    bad.x.len()
                )));
            }
        }
        Ok(Experiment {
            config: self,
            model,
            inputs,
        })
    }

    pub fn load(path: &Path) -> Result<Experiment> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)?.prepare(path.parent())
    }
}

pub fn prepare_input(
    data: &InputData,
    seg: &SegmentationParams,
    reference: &ReferenceParams,
) -> Result<PreparedInput> {
    let len = data.values.len();
    let shape = match data.shape {
        Some(s) => Shape::Image(s),
        None => Shape::Flat(len),
    };
    if shape.len() != len {
        return Err(Error::param(format!(
            "input shape covers {} values but {len} were given",
            shape.len()
        )));
    }
    let segmentation = match seg {
        SegmentationParams::Singleton => Segmentation::singleton(len)?,
        SegmentationParams::Explicit { assignment } => Segmentation::new(assignment.clone(), shape)?,
        SegmentationParams::Grid { rows, cols } => {
            let Some([h, w, c]) = data.shape else {
                return Err(Error::param("grid segmentation needs an image shape"));
            };
            grid_segment(h, w, c, *rows, *cols)?
        }
    };
    let reference = match reference {
        ReferenceParams::Auto if segmentation.is_singleton() => Reference::constant(len, 0.0)?,
        ReferenceParams::Auto | ReferenceParams::Mean => mean_reference(&data.values, &segmentation)?,
        ReferenceParams::Constant { value } => Reference::constant(len, *value)?,
        ReferenceParams::Values { values } => {
            if values.len() != len {
                return Err(Error::LengthMismatch {
                    what: "reference",
                    expected: len,
                    actual: values.len(),
                });
            }
            Reference::new(values.clone())?
        }
    };
    Ok(PreparedInput {
        x: data.values.clone(),
        segmentation,
        reference,
    })
}
