//! Stability and local-fidelity measurements.

use std::cmp::Ordering;
use std::collections::HashSet;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::Explanation;
use crate::feature_space::Segmentation;
use crate::models::ModelSpec;
use crate::rng;

/// Default top-K for a `d`-feature explanation.
pub fn default_k(d: usize) -> usize {
    d.min(20)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub k: usize,
    pub mean_jaccard: f64,
    /// Jaccard index of every unordered pair `(i, j)`, `i < j`, in row-major order.
    pub pair_values: Vec<f64>,
    pub n_seeds: usize,
}

impl AsRef<[f64]> for Explanation {
    fn as_ref(&self) -> &[f64] {
        &self.w
    }
}

/// Indices of the `k` largest entries, ties going to the lower index.
pub fn top_k_indices(w: &[f64], k: usize, abs: bool) -> Vec<usize> {
    let key = |i: usize| if abs { w[i].abs() } else { w[i] };
    let mut idx: Vec<usize> = (0..w.len()).collect();
    idx.sort_by(|&a, &b| {
        key(b)
            .partial_cmp(&key(a))
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

pub fn jaccard(a: &HashSet<usize>, b: &HashSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Mean pairwise Jaccard index of the top-`k` feature sets.
///
/// Ranks by raw attribution value unless `abs` is set.
pub fn top_k_jaccard<W: AsRef<[f64]>>(explanations: &[W], k: usize, abs: bool) -> Result<StabilityReport> {
    if explanations.len() < 2 {
        return Err(Error::param("stability needs at least two explanations"));
    }
    let d = explanations[0].as_ref().len();
    for e in explanations {
        if e.as_ref().len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: e.as_ref().len(),
            });
        }
    }
    if k == 0 || k > d {
        return Err(Error::param(format!("top-k must be in 1..={d}, got {k}")));
    }
    let sets: Vec<HashSet<usize>> = explanations
        .iter()
        .map(|e| top_k_indices(e.as_ref(), k, abs).into_iter().collect())
        .collect();
    let mut pair_values = Vec::with_capacity(sets.len() * (sets.len() - 1) / 2);
    for i in 0..sets.len() {
        for j in (i + 1)..sets.len() {
            pair_values.push(jaccard(&sets[i], &sets[j]));
        }
    }
    let mean_jaccard = pair_values.iter().sum::<f64>() / pair_values.len() as f64;
    Ok(StabilityReport {
        k,
        mean_jaccard,
        pair_values,
        n_seeds: explanations.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub fn name(&self) -> &'static str {
        match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
            Norm::Linf => "linf",
        }
    }

    pub fn of(&self, v: impl IntoIterator<Item = f64>) -> f64 {
        let it = v.into_iter();
        match self {
            Norm::L1 => it.map(f64::abs).sum(),
            Norm::L2 => it.map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Linf => it.fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            "linf" => Ok(Norm::Linf),
            other => Err(Error::param(format!("unknown norm '{other}'"))),
        }
    }
}

/// `m` points uniform in the `norm`-ball of radius `epsilon` around `x`.
pub fn sample_ball(x: &[f64], epsilon: f64, norm: Norm, m: usize, seed: u64) -> Result<Array2<f64>> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::param(format!("radius must be >= 0, got {epsilon}")));
    }
    if m == 0 || x.is_empty() {
        return Err(Error::param("need at least one sample of a non-empty input"));
    }
    let dim = x.len();
    let mut rng = rng::stream(seed);
    let mut out = Array2::zeros((m, dim));
    let mut dir = vec![0.0; dim];
    for mut row in out.rows_mut() {
        match norm {
            Norm::Linf => {
                for d in dir.iter_mut() {
                    *d = epsilon * rng.random_range(-1.0..=1.0);
                }
            }
            Norm::L2 => {
                let mut len = 0.0;
                while len == 0.0 {
                    for d in dir.iter_mut() {
                        *d = StandardNormal.sample(&mut rng);
                    }
                    len = Norm::L2.of(dir.iter().copied());
                }
                let u: f64 = rng.random();
                let radius = epsilon * u.powf(1.0 / dim as f64);
                dir.iter_mut().for_each(|d| *d *= radius / len);
            }
            Norm::L1 => {
                // (E_1..E_D) / sum(E_1..E_{D+1}) is uniform on the simplex
                // {y >= 0, sum y <= 1}; random signs fill the ball.
                let mut total: f64 = Exp1.sample(&mut rng);
                for d in dir.iter_mut() {
                    *d = Exp1.sample(&mut rng);
                    total += *d;
                }
                for d in dir.iter_mut() {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    *d = sign * epsilon * *d / total;
                }
            }
        }
        for ((dst, xi), di) in row.iter_mut().zip(x).zip(&dir) {
            *dst = xi + di;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub epsilon: f64,
    pub norm: Norm,
    pub fidelity: f64,
    pub mse: f64,
    pub m: usize,
}

/// `1 / (1 + MSE)` of the surrogate `b + w^T z'` against the model on `m`
/// ball samples, where `z'` is the per-segment mean offset of `z - x`.
///
/// Binary-mask explanations are evaluated on the same offsets, so the
/// number measures how their linear function tracks `f` near `x`.
#[allow(clippy::too_many_arguments)]
pub fn local_fidelity(
    model: &ModelSpec,
    x: &[f64],
    explanation: &Explanation,
    segmentation: &Segmentation,
    epsilon: f64,
    norm: Norm,
    m: usize,
    seed: u64,
) -> Result<FidelityReport> {
    local_fidelity_linear(
        model,
        x,
        &explanation.w,
        explanation.intercept,
        segmentation,
        epsilon,
        norm,
        m,
        seed,
    )
}

/// [`local_fidelity`] for a bare surrogate `(w, intercept)`.
#[allow(clippy::too_many_arguments)]
pub fn local_fidelity_linear(
    model: &ModelSpec,
    x: &[f64],
    w: &[f64],
    intercept: f64,
    segmentation: &Segmentation,
    epsilon: f64,
    norm: Norm,
    m: usize,
    seed: u64,
) -> Result<FidelityReport> {
    if w.len() != segmentation.num_features() {
        return Err(Error::DimensionMismatch {
            expected: segmentation.num_features(),
            actual: w.len(),
        });
    }
    if x.len() != segmentation.raw_len() {
        return Err(Error::LengthMismatch {
            what: "input",
            expected: segmentation.raw_len(),
            actual: x.len(),
        });
    }
    let points = sample_ball(x, epsilon, norm, m, seed)?;
    let values = model.evaluate(points.view())?;
    let mut offset = vec![0.0; x.len()];
    let mut sq = 0.0;
    for (row, fz) in points.rows().into_iter().zip(values.iter()) {
        for ((o, z), xi) in offset.iter_mut().zip(row.iter()).zip(x) {
            *o = z - xi;
        }
        let feat = segmentation.segment_means(&offset);
        let g = intercept + w.iter().zip(&feat).map(|(a, b)| a * b).sum::<f64>();
        sq += (fz - g) * (fz - g);
    }
    let mse = sq / m as f64;
    Ok(FidelityReport {
        epsilon,
        norm,
        fidelity: 1.0 / (1.0 + mse),
        mse,
        m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub mse: f64,
    pub mae: f64,
    pub pearson: f64,
    pub spearman: f64,
    /// Set when either vector is constant; correlations are then reported as 0.
    pub degenerate_variance: bool,
}

pub fn explanation_distance(w1: &Explanation, w2: &Explanation) -> Result<DistanceReport> {
    vector_distance(&w1.w, &w2.w)
}

pub fn vector_distance(a: &[f64], b: &[f64]) -> Result<DistanceReport> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::param("distances need at least two coordinates"));
    }
    let n = a.len() as f64;
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
    let mae = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n;
    let pearson = pearson(a, b);
    let spearman = pearson.and(self::pearson(&average_ranks(a), &average_ranks(b)));
    Ok(DistanceReport {
        mse,
        mae,
        pearson: pearson.unwrap_or(0.0),
        spearman: spearman.unwrap_or(0.0),
        degenerate_variance: pearson.is_none(),
    })
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_sets() {
        let w = vec![vec![0.1, 0.5, 0.3]; 3];
        assert_eq!(top_k_jaccard(&w, 2, false).unwrap().mean_jaccard, 1.0);
    }

    #[test]
    fn half_overlap() {
        // top-3 = {1,2,3} vs {2,3,4}
        let a = vec![0.0, 5.0, 4.0, 3.0, 1.0];
        let b = vec![0.0, 1.0, 4.0, 3.0, 5.0];
        let r = top_k_jaccard(&[a, b], 3, false).unwrap();
        assert_eq!(r.mean_jaccard, 0.5);
        assert_eq!(r.n_seeds, 2);
    }

    #[test]
    fn averaging_over_pairs() {
        let a = vec![3.0, 2.0, 1.0, 0.0];
        let b = vec![3.0, 2.0, 1.0, 0.0];
        let c = vec![3.0, 0.0, 2.0, 0.0];
        let r = top_k_jaccard(&[a, b, c], 2, false).unwrap();
        assert_eq!(r.pair_values, vec![1.0, 1.0 / 3.0, 1.0 / 3.0]);
        let a = vec![4.0, 3.0, 2.0, 1.0, 0.0];
        let b = a.clone();
        let c = vec![4.0, 3.0, 0.0, 2.0, 1.0];
        let r = top_k_jaccard(&[a, b, c], 3, false).unwrap();
        assert_eq!(r.pair_values, vec![1.0, 0.5, 0.5]);
        assert!((r.mean_jaccard - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ties_prefer_lower_index_and_abs_flag() {
        assert_eq!(top_k_indices(&[0.0, 0.0, 0.0], 2, false), vec![0, 1]);
        assert_eq!(top_k_indices(&[1.0, -3.0, 2.0], 1, false), vec![2]);
        assert_eq!(top_k_indices(&[1.0, -3.0, 2.0], 1, true), vec![1]);
    }

    #[test]
    fn jaccard_errors() {
        assert!(top_k_jaccard(&[vec![1.0, 2.0]], 1, false).is_err());
        assert!(matches!(
            top_k_jaccard(&[vec![1.0, 2.0], vec![1.0]], 1, false),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(top_k_jaccard(&[vec![1.0, 2.0], vec![1.0, 2.0]], 3, false).is_err());
    }

    #[test]
    fn zero_radius_ball() {
        let pts = sample_ball(&[1.0, -2.0], 0.0, Norm::L2, 10, 3).unwrap();
        assert!(pts.rows().into_iter().all(|r| r[0] == 1.0 && r[1] == -2.0));
    }

    #[test]
    fn linf_support() {
        let x = [0.5, -0.5];
        let pts = sample_ball(&x, 0.2, Norm::Linf, 5000, 1).unwrap();
        for r in pts.rows() {
            assert!((r[0] - 0.5).abs() <= 0.2 && (r[1] + 0.5).abs() <= 0.2);
        }
    }

    #[test]
    fn l2_radius_law() {
        // E[radius]/eps = E[u^{1/3}] = 3/4 in three dimensions
        let pts = sample_ball(&[0.0; 3], 2.0, Norm::L2, 100_000, 4).unwrap();
        let mean: f64 = pts
            .rows()
            .into_iter()
            .map(|r| Norm::L2.of(r.iter().copied()) / 2.0)
            .sum::<f64>()
            / 100_000.0;
        // sd of u^{1/3} is sqrt(3/5 - 9/16) ~ 0.19; 5 standard errors ~ 0.003
        assert!((mean - 0.75).abs() < 0.003, "{mean}");
    }

    #[test]
    fn distance_examples() {
        let a = [1.0, 2.0, 3.0];
        let same = vector_distance(&a, &a).unwrap();
        assert_eq!((same.mse, same.mae), (0.0, 0.0));
        assert!((same.pearson - 1.0).abs() < 1e-15 && (same.spearman - 1.0).abs() < 1e-15);
        let neg = vector_distance(&a, &[-1.0, -2.0, -3.0]).unwrap();
        assert!((neg.pearson + 1.0).abs() < 1e-15);
        let rev = vector_distance(&a, &[3.0, 2.0, 1.0]).unwrap();
        assert!((rev.spearman + 1.0).abs() < 1e-15);
        assert!((rev.mse - 8.0 / 3.0).abs() < 1e-15);
        let flat = vector_distance(&a, &[1.0, 1.0, 1.0]).unwrap();
        assert!(flat.degenerate_variance);
        assert_eq!((flat.pearson, flat.spearman), (0.0, 0.0));
        assert!(vector_distance(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn tied_ranks() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    proptest! {
        #[test]
        fn ball_support(
            x in prop::collection::vec(-2.0f64..2.0, 1..6),
            eps in 0.01f64..3.0,
            which in 0usize..3,
            seed in any::<u64>(),
        ) {
            let norm = [Norm::L1, Norm::L2, Norm::Linf][which];
            let pts = sample_ball(&x, eps, norm, 200, seed).unwrap();
            for row in pts.rows() {
                let dist = norm.of(row.iter().zip(&x).map(|(z, xi)| z - xi));
                prop_assert!(dist <= eps * (1.0 + 1e-12));
            }
        }

        #[test]
        fn distance_is_symmetric(
            a in prop::collection::vec(-5.0f64..5.0, 2..10),
            shift in prop::collection::vec(-1.0f64..1.0, 10),
        ) {
            let b: Vec<f64> = a.iter().zip(&shift).map(|(x, s)| x * 0.5 + s).collect();
            let ab = vector_distance(&a, &b).unwrap();
            let ba = vector_distance(&b, &a).unwrap();
            prop_assert_eq!(ab.mse, ba.mse);
            prop_assert_eq!(ab.mae, ba.mae);
            prop_assert!((ab.pearson - ba.pearson).abs() < 1e-12);
            prop_assert!((ab.spearman - ba.spearman).abs() < 1e-12);
        }

        #[test]
        fn jaccard_permutation_invariant(
            ws in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 2..6),
            k in 1usize..=6,
            rot in 0usize..6,
        ) {
            let base = top_k_jaccard(&ws, k, false).unwrap().mean_jaccard;
            let mut perm = ws.clone();
            let r = rot % perm.len();
            perm.rotate_left(r);
            perm.reverse();
            let other = top_k_jaccard(&perm, k, false).unwrap().mean_jaccard;
            prop_assert!((base - other).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&base));
        }
    }
}
