//! Seeded experiment sweeps producing plot-ready tables.
//!
//! Each sweep expands its config into grid cells, evaluates the cells
//! (optionally in parallel) and emits one row per cell in grid order. A cell
//! that fails keeps its row with the message in the `error` column.

mod config;
mod table;

pub use config::{
    prepare_input, Experiment, ExperimentConfig, InputData, MetricParams, OutputFormat,
    OutputParams, PreparedInput, ReferenceParams, SegmentationParams, Source, ORACLE_METHOD,
};
pub use table::{emit, Cell, Table};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::explain::{explain, infinite_limit_linear_gauss, ExplainRequest, Explanation, MethodSpec};
use crate::metrics::{default_k, local_fidelity_linear, top_k_jaccard, vector_distance};
use crate::models::ModelSpec;
use crate::rng::substream_seed;
use crate::sampling::{self, binomial_probability, expected_weight_uniform, WeightSpec};

/// Mixed into the master seed for the fidelity ball samples, so every
/// method is scored on the same points.
const FIDELITY_SALT: u64 = 0xF1DE_11A7_0000_0000;

/// Execution options shared by the sweeps.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
    /// Overrides the config's master seed.
    pub master_seed: Option<u64>,
}

impl Experiment {
    fn master_seed(&self, opts: &RunOptions) -> u64 {
        opts.master_seed.unwrap_or(self.config.master_seed)
    }

    /// Grid cells of the method axis. Axes a method ignores collapse to a
    /// single `None` entry: sigma for KernelSHAP, lambda for KernelSHAP and
    /// SmoothGrad, the sample size for exact KernelSHAP and the oracle.
    fn method_grid(&self) -> Result<Vec<GridCell>> {
        let c = &self.config;
        let mut grid = Vec::new();
        for name in &c.methods {
            let (uses_sigma, uses_lambda, uses_n) = if name == ORACLE_METHOD {
                (false, false, false)
            } else {
                let m = MethodSpec::from_name(name, 1.0)?;
                let exact_shap = matches!(m, MethodSpec::KernelShap { exact: true });
                let unpenalized = matches!(m, MethodSpec::KernelShap { .. } | MethodSpec::SmoothGrad { .. });
                (m.sigma().is_some(), !unpenalized, !exact_shap)
            };
            let sigmas: Vec<Option<f64>> = axis(uses_sigma, &c.sigmas);
            let lambdas: Vec<Option<f64>> = axis(uses_lambda, &c.lambdas);
            let sizes: Vec<Option<usize>> = axis(uses_n, &c.sample_sizes);
            for &sigma in &sigmas {
                for &lambda in &lambdas {
                    for &n in &sizes {
                        grid.push(GridCell {
                            method: name.clone(),
                            sigma,
                            lambda,
                            n,
                        });
                    }
                }
            }
        }
        Ok(grid)
    }

    fn explain_one(
        &self,
        input: &PreparedInput,
        method: MethodSpec,
        n: usize,
        lambda: f64,
        seed: u64,
    ) -> Result<Explanation> {
        explain(&ExplainRequest {
            model: &self.model,
            x: &input.x,
            segmentation: &input.segmentation,
            reference: Some(&input.reference),
            method,
            n,
            lambda,
            seed,
        })
    }
}

fn axis<T: Copy>(used: bool, values: &[T]) -> Vec<Option<T>> {
    if used {
        values.iter().copied().map(Some).collect()
    } else {
        vec![None]
    }
}

fn run_cells<C: Sync, R: Send>(cells: &[C], jobs: Option<usize>, f: impl Fn(&C) -> R + Sync) -> Vec<R> {
    match jobs {
        Some(1) => cells.iter().map(f).collect(),
        _ => {
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(j) = jobs {
                builder = builder.num_threads(j);
            }
            match builder.build() {
                Ok(pool) => pool.install(|| cells.par_iter().map(&f).collect()),
                Err(_) => cells.iter().map(f).collect(),
            }
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

#[derive(Debug, Clone)]
struct GridCell {
    method: String,
    sigma: Option<f64>,
    lambda: Option<f64>,
    n: Option<usize>,
}

impl GridCell {
    fn explain(&self, exp: &Experiment, input: &PreparedInput, seed: u64) -> Result<Explanation> {
        let method = MethodSpec::from_name(&self.method, self.sigma.unwrap_or(1.0))?;
        exp.explain_one(input, method, self.n.unwrap_or(1), self.lambda.unwrap_or(0.0), seed)
    }

    fn head(&self) -> Vec<Cell> {
        vec![
            Cell::from(self.method.as_str()),
            Cell::from(self.sigma),
            Cell::from(self.lambda),
            self.n.map_or(Cell::Empty, Cell::from),
        ]
    }
}

/// Top-K Jaccard stability across replicate seeds for every
/// `(method, sigma, lambda, n)` cell.
///
/// `mean_jaccard` averages the per-input means; `std` is taken over all
/// pairwise indices pooled across inputs.
pub fn run_stability(exp: &Experiment, opts: &RunOptions) -> Result<Table> {
    let cells = exp.method_grid()?;
    let master = exp.master_seed(opts);
    let results = run_cells(&cells, opts.jobs, |cell| -> Result<(usize, f64, f64)> {
        let mut means = Vec::new();
        let mut pooled = Vec::new();
        let mut k_used = 0;
        for input in &exp.inputs {
            let explanations = exp
                .config
                .seeds
                .iter()
                .map(|&r| cell.explain(exp, input, substream_seed(master, r)))
                .collect::<Result<Vec<_>>>()?;
            let d = input.segmentation.num_features();
            k_used = exp.config.metrics.k.unwrap_or_else(|| default_k(d));
            let report = top_k_jaccard(&explanations, k_used, exp.config.metrics.abs)?;
            means.push(report.mean_jaccard);
            pooled.extend(report.pair_values);
        }
        Ok((k_used, mean(&means), std_dev(&pooled)))
    });

    let mut table = Table::new(&[
        "method", "sigma", "lambda", "n", "k", "mean_jaccard", "std", "n_seeds", "error",
    ]);
    let n_seeds = exp.config.seeds.len();
    for (cell, result) in cells.iter().zip(results) {
        let head = cell.head();
        let tail = match result {
            Ok((k, m, s)) => vec![k.into(), m.into(), s.into(), n_seeds.into(), Cell::Empty],
            Err(e) => vec![Cell::Empty, Cell::Empty, Cell::Empty, n_seeds.into(), e.to_string().into()],
        };
        table.push(head.into_iter().chain(tail).collect());
    }
    Ok(table)
}

/// Distance between LIME and GLIME-Binomial explanations at each sample
/// size, averaged over inputs and replicates.
///
/// The `methods` list of the config is not consulted: the pair is fixed.
/// `mse_trend` reports whether the MSE strictly decreases along the
/// `sample_sizes` grid for the row's `(sigma, lambda)` group.
pub fn run_convergence(exp: &Experiment, opts: &RunOptions) -> Result<Table> {
    let master = exp.master_seed(opts);
    let mut cells = Vec::new();
    for &sigma in &exp.config.sigmas {
        for &lambda in &exp.config.lambdas {
            for &n in &exp.config.sample_sizes {
                cells.push((sigma, lambda, n));
            }
        }
    }
    let results = run_cells(&cells, opts.jobs, |&(sigma, lambda, n)| -> Result<[f64; 4]> {
        let mut acc = [0.0; 4];
        let mut count = 0.0;
        for input in &exp.inputs {
            for &r in &exp.config.seeds {
                let seed = substream_seed(master, r);
                let lime = exp.explain_one(input, MethodSpec::lime(sigma), n, lambda, seed)?;
                let binomial =
                    exp.explain_one(input, MethodSpec::GlimeBinomial { sigma }, n, lambda, seed)?;
                let dist = vector_distance(&lime.w, &binomial.w)?;
                for (a, v) in acc.iter_mut().zip([dist.mse, dist.mae, dist.pearson, dist.spearman]) {
                    *a += v;
                }
                count += 1.0;
            }
        }
        Ok(acc.map(|a| a / count))
    });

    let per_group = exp.config.sample_sizes.len();
    let mut table = Table::new(&[
        "sigma", "lambda", "n", "mse", "mae", "pearson", "spearman", "mse_trend", "error",
    ]);
    for (group_cells, group_results) in cells.chunks(per_group).zip(results.chunks(per_group)) {
        let mses: Vec<Option<f64>> = group_results
            .iter()
            .map(|r| r.as_ref().ok().map(|v| v[0]))
            .collect();
        let decreasing = mses.iter().all(Option::is_some)
            && mses.windows(2).all(|w| w[1].unwrap() < w[0].unwrap());
        let trend = if decreasing { "decreasing" } else { "not_decreasing" };
        for (&(sigma, lambda, n), result) in group_cells.iter().zip(group_results) {
            let mut row = vec![Cell::from(sigma), Cell::from(lambda), Cell::from(n)];
            match result {
                Ok(v) => {
                    row.extend(v.iter().map(|&x| Cell::from(x)));
                    row.push(trend.into());
                    row.push(Cell::Empty);
                }
                Err(e) => {
                    row.extend(std::iter::repeat_n(Cell::Empty, 4));
                    row.push(trend.into());
                    row.push(e.to_string().into());
                }
            }
            table.push(row);
        }
    }
    Ok(table)
}

/// Linear-model oracle of the additive continuous design.
fn oracle_explanation(model: &ModelSpec, input: &PreparedInput) -> Result<(Vec<f64>, f64)> {
    let ModelSpec::Linear { coefficients, bias } = model else {
        return Err(Error::param("the oracle method needs a linear model"));
    };
    infinite_limit_linear_gauss(coefficients, *bias, &input.x, &input.segmentation)
}

/// Local fidelity of each method over the `epsilon x norm` grid.
///
/// Statistics are over every `(input, replicate)` pair. Ball samples depend
/// only on the input, replicate, radius and norm, never on the method.
pub fn run_fidelity(exp: &Experiment, opts: &RunOptions) -> Result<Table> {
    let cells = exp.method_grid()?;
    let master = exp.master_seed(opts);
    let metrics = &exp.config.metrics;
    let mut radii = Vec::new();
    for &epsilon in &metrics.epsilons {
        for &norm in &metrics.norms {
            radii.push((epsilon, norm));
        }
    }
    let results = run_cells(&cells, opts.jobs, |cell| -> Result<Vec<Vec<f64>>> {
        let mut scores = vec![Vec::new(); radii.len()];
        for input in &exp.inputs {
            for &r in &exp.config.seeds {
                let (w, intercept) = if cell.method == ORACLE_METHOD {
                    oracle_explanation(&exp.model, input)?
                } else {
                    let e = cell.explain(exp, input, substream_seed(master, r))?;
                    (e.w, e.intercept)
                };
                for (slot, &(epsilon, norm)) in scores.iter_mut().zip(&radii) {
                    let report = local_fidelity_linear(
                        &exp.model,
                        &input.x,
                        &w,
                        intercept,
                        &input.segmentation,
                        epsilon,
                        norm,
                        metrics.m,
                        substream_seed(master ^ FIDELITY_SALT, r),
                    )?;
                    slot.push(report.fidelity);
                }
            }
        }
        Ok(scores)
    });

    let mut table = Table::new(&[
        "method",
        "sigma",
        "lambda",
        "n",
        "epsilon",
        "norm",
        "fidelity_mean",
        "fidelity_std",
        "count",
        "error",
    ]);
    for (cell, result) in cells.iter().zip(results) {
        for (idx, &(epsilon, norm)) in radii.iter().enumerate() {
            let mut row = cell.head();
            row.extend([
                Cell::from(epsilon),
                Cell::from(norm.name()),
            ]);
            match &result {
                Ok(scores) => {
                    let s = &scores[idx];
                    row.extend([mean(s).into(), std_dev(s).into(), s.len().into(), Cell::Empty]);
                }
                Err(e) => {
                    row.extend([Cell::Empty, Cell::Empty, Cell::Int(0), e.to_string().into()]);
                }
            }
            table.push(row);
        }
    }
    Ok(table)
}

/// Closed-form tables of the binary laws for inspection: per width and
/// count `k`, the Binomial and uniform count pmfs, the exponential kernel
/// weight and its uniform-law expectation.
pub fn distribution_table(d: usize, sigmas: &[f64]) -> Result<Table> {
    if d == 0 || sigmas.is_empty() {
        return Err(Error::config("need d >= 1 and at least one sigma"));
    }
    let mut table = Table::new(&[
        "sigma",
        "d",
        "k",
        "p",
        "binomial_pmf",
        "uniform_pmf",
        "log_weight",
        "weight",
        "expected_weight_uniform",
    ]);
    for &sigma in sigmas {
        let expected = expected_weight_uniform(d, sigma)?;
        let kernel = WeightSpec::ExpKernel { sigma };
        for k in 0..=d {
            let lw = sampling::log_weight_by_count(&kernel, d, k)?;
            table.push(vec![
                sigma.into(),
                d.into(),
                k.into(),
                binomial_probability(sigma).into(),
                sampling::binomial_pmf(d, sigma, k)?.into(),
                (choose(d, k) * 0.5f64.powi(d as i32)).into(),
                lw.into(),
                lw.exp().into(),
                expected.into(),
            ]);
        }
    }
    Ok(table)
}

/// `C(n, k)` by the multiplicative recurrence; exact while it fits 53 bits.
fn choose(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |c, i| c * (n - i) as f64 / (i + 1) as f64)
}

/// The single explanation named by the first entry of each grid axis.
pub fn run_explain(exp: &Experiment, opts: &RunOptions) -> Result<Explanation> {
    let config = &exp.config;
    let name = &config.methods[0];
    let method = MethodSpec::from_name(name, config.sigmas[0])?;
    let seed = substream_seed(exp.master_seed(opts), config.seeds[0]);
    exp.explain_one(&exp.inputs[0], method, config.sample_sizes[0], config.lambdas[0], seed)
}
