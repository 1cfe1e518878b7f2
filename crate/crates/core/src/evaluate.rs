//! Ground-truth distributions and partition/distribution comparison metrics.

use std::collections::{BTreeMap, HashMap};

use pathfinding::matrix::Matrix;
use pathfinding::prelude::kuhn_munkres;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::binning::{level_key, Partition};
use crate::error::{Error, Result};
use crate::linalg::{BandedLu, CsrMatrix};
use crate::network::{LatticeDomain, ReactionNetwork};

/// Stationary law over the domain and its slow marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Probability of every domain state, in node order.
    pub joint: Vec<f64>,
    /// Slow values in increasing order.
    pub levels: Vec<f64>,
    pub marginal: Vec<f64>,
    /// Probability on states touching the domain boundary.
    pub boundary_mass: f64,
}

impl GroundTruth {
    fn from_joint(joint: Vec<f64>, domain: &LatticeDomain, weights: &[f64]) -> Self {
        let mut acc: BTreeMap<i64, f64> = BTreeMap::new();
        let mut boundary_mass = 0.0;
        for (i, p) in joint.iter().enumerate() {
            let x = domain.state(i);
            let s: f64 = x.iter().zip(weights).map(|(a, w)| *a as f64 * w).sum();
            *acc.entry(level_key(s)).or_default() += p;
            if domain.boundary_distance(&x) == 0 {
                boundary_mass += p;
            }
        }
        let (levels, marginal) = acc.into_iter().map(|(k, p)| (k as f64 / 1e6, p)).unzip();
        Self { joint, levels, marginal, boundary_mass }
    }

    /// Marginal keyed by slow level.
    pub fn marginal_by_level(&self) -> Vec<(i64, f64)> {
        self.levels.iter().map(|&s| level_key(s)).zip(self.marginal.iter().copied()).collect()
    }
}

/// Stationary means of CS-I.
pub const CS1_LAMBDA: (f64, f64) = (100.5, 100.0);

fn ln_poisson(n: i64, lambda: f64) -> f64 {
    n as f64 * lambda.ln() - lambda - ln_gamma(n as f64 + 1.0)
}

/// Independent Poisson laws with means `(100.5, 100)` restricted to the
/// domain and renormalized; the marginal sums the joint over level sets.
pub fn ground_truth_cs1(domain: &LatticeDomain) -> GroundTruth {
    let (l1, l2) = CS1_LAMBDA;
    let logs: Vec<f64> = (0..domain.len())
        .map(|i| {
            let x = domain.state(i);
            ln_poisson(x[0], l1) + ln_poisson(x[1], l2)
        })
        .collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut joint: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = joint.iter().sum();
    joint.iter_mut().for_each(|p| *p /= total);
    GroundTruth::from_joint(joint, domain, &[0.5, 0.5])
}

/// `P(S = s)` for CS-I from `x1 + x2 ~ Poisson(λ1 + λ2)`, renormalized over
/// the given levels.
pub fn poisson_convolution_marginal(levels: &[f64]) -> Vec<f64> {
    let lam = CS1_LAMBDA.0 + CS1_LAMBDA.1;
    let logs: Vec<f64> = levels.iter().map(|s| ln_poisson((2.0 * s).round() as i64, lam)).collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// Transposed generator of the chain truncated to the domain; transitions
/// leaving the domain are dropped.
pub fn truncated_generator_transpose(net: &ReactionNetwork, domain: &LatticeDomain) -> Result<CsrMatrix> {
    let mut triplets = Vec::new();
    for i in 0..domain.len() {
        let x = domain.state(i);
        let alpha = net.propensities(&x)?;
        let mut exit = 0.0;
        for (j, &a) in alpha.iter().enumerate() {
            if a <= 0.0 {
                continue;
            }
            let y: Vec<i64> = x.iter().zip(net.stoich(j)).map(|(u, v)| u + v).collect();
            if domain.contains(&y) {
                triplets.push((domain.index_unchecked(&y), i, a));
                exit += a;
            }
        }
        triplets.push((i, i, -exit));
    }
    Ok(CsrMatrix::from_triplets(domain.len(), domain.len(), triplets))
}

fn reach(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen
}

/// Stationary law of the full chain truncated to the domain, by shifted
/// inverse iteration with a banded LU factorisation.
pub fn full_cme_stationary(net: &ReactionNetwork, domain: &LatticeDomain, weights: &[f64]) -> Result<GroundTruth> {
    let n = domain.len();
    let at = truncated_generator_transpose(net, domain)?;
    // at[y][x] > 0 is an edge x → y
    let mut fwd = vec![Vec::new(); n];
    let mut bwd = vec![Vec::new(); n];
    for y in 0..n {
        let (cols, vals) = at.row(y);
        for (&x, &v) in cols.iter().zip(vals) {
            if x as usize != y && v > 0.0 {
                fwd[x as usize].push(y);
                bwd[y].push(x as usize);
            }
        }
    }
    let (f, b) = (reach(&fwd, 0), reach(&bwd, 0));
    let strong = f.iter().zip(&b).filter(|(a, c)| **a && **c).count();
    if strong != n {
        return Err(Error::Disconnected { sizes: vec![strong, n - strong] });
    }
    let max_rate = (0..n).map(|i| -at.get(i, i)).fold(0.0f64, f64::max);
    let delta = 1e-9 * max_rate;
    let lu = BandedLu::factor(&at, -delta)?;
    let mut p = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for _ in 0..200 {
        let mut next = lu.solve(&p);
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        p = next;
        let r = at.matvec(&p);
        residual = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if residual <= 1e-10 * max_rate * p.iter().fold(0.0f64, |a, v| a.max(v.abs())) {
            break;
        }
    }
    if residual > 1e-8 * max_rate {
        return Err(Error::NoConvergence { iters: 200, residual });
    }
    p.iter_mut().for_each(|v| *v = v.max(0.0));
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    Ok(GroundTruth::from_joint(p, domain, weights))
}

/// `J[i][j] = |A_i ∩ B_j| / |A_i ∪ B_j|` for rows from `a`, columns from `b`.
pub fn jaccard_matrix(a: &Partition, b: &Partition, n: usize) -> Vec<Vec<f64>> {
    let la = a.labels(n);
    let lb = b.labels(n);
    let mut inter: HashMap<(usize, usize), usize> = HashMap::new();
    for (x, y) in la.iter().zip(&lb) {
        if let (Some(x), Some(y)) = (x, y) {
            *inter.entry((*x, *y)).or_default() += 1;
        }
    }
    let (ca, cb) = (a.cardinalities(), b.cardinalities());
    let mut j = vec![vec![0.0; b.len()]; a.len()];
    for ((x, y), c) in inter {
        j[x][y] = c as f64 / (ca[x] + cb[y] - c) as f64;
    }
    j
}

/// One-to-one row/column assignment maximizing the summed entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

/// Hungarian assignment on a non-negative rectangular matrix.
pub fn max_matching(j: &[Vec<f64>]) -> Matching {
    let rows = j.len();
    let cols = j.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Matching { pairs: vec![], total: 0.0, unmatched_rows: (0..rows).collect(), unmatched_cols: (0..cols).collect() };
    }
    let scale = 1e12 / (rows.max(cols) as f64);
    let transpose = rows > cols;
    let (r, c) = if transpose { (cols, rows) } else { (rows, cols) };
    let weights = Matrix::from_fn(r, c, |(a, b)| {
        let v = if transpose { j[b][a] } else { j[a][b] };
        (v * scale).round() as i64
    });
    let (_, assign) = kuhn_munkres(&weights);
    let mut pairs: Vec<(usize, usize)> = assign
        .iter()
        .enumerate()
        .map(|(a, &b)| if transpose { (b, a) } else { (a, b) })
        .collect();
    pairs.sort_unstable();
    let total = pairs.iter().map(|&(a, b)| j[a][b]).sum();
    let mut rm = vec![false; rows];
    let mut cm = vec![false; cols];
    for &(a, b) in &pairs {
        rm[a] = true;
        cm[b] = true;
    }
    Matching {
        pairs,
        total,
        unmatched_rows: (0..rows).filter(|&i| !rm[i]).collect(),
        unmatched_cols: (0..cols).filter(|&i| !cm[i]).collect(),
    }
}

/// Pearson correlation of two equally long sequences.
pub fn ordering_correlation(ranks: &[f64], values: &[f64]) -> Result<f64> {
    let n = ranks.len();
    if n < 2 || values.len() != n {
        return Err(Error::Domain("correlation needs at least two matched pairs".into()));
    }
    let mr = ranks.iter().sum::<f64>() / n as f64;
    let mv = values.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (r, v) in ranks.iter().zip(values) {
        sxy += (r - mr) * (v - mv);
        sxx += (r - mr).powi(2);
        syy += (v - mv).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Domain("correlation of a constant sequence".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// `Σ_s |π(s) − P(s)|` over the union of level keys.
pub fn l1_error(pi: &[(i64, f64)], truth: &[(i64, f64)]) -> f64 {
    let mut acc: BTreeMap<i64, f64> = BTreeMap::new();
    for &(k, p) in pi {
        *acc.entry(k).or_default() += p;
    }
    for &(k, p) in truth {
        *acc.entry(k).or_default() -= p;
    }
    acc.values().map(|v| v.abs()).sum()
}

/// Labels every estimated bin with the slow level of its matched true bin;
/// unmatched bins get distinct keys below every true level so their mass
/// counts in full.
pub fn align_to_levels(pi: &[f64], matching: &Matching, true_levels: &[f64]) -> Vec<(i64, f64)> {
    let mut key_of: Vec<Option<i64>> = vec![None; pi.len()];
    for &(t, e) in &matching.pairs {
        key_of[e] = Some(level_key(true_levels[t]));
    }
    let mut spare = i64::MIN;
    key_of
        .into_iter()
        .zip(pi)
        .map(|(k, &p)| {
            let key = k.unwrap_or_else(|| {
                spare += 1;
                spare
            });
            (key, p)
        })
        .collect()
}

/// One pipeline outcome; `lc` is set for CMA runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub system: String,
    pub method: String,
    #[serde(rename = "Lc", skip_serializing_if = "Option::is_none")]
    pub lc: Option<usize>,
    pub error: f64,
    pub theta: Option<f64>,
    pub bin_count: usize,
    pub jaccard_mean: Option<f64>,
    pub abs_order_corr: Option<f64>,
    pub runtime_s: f64,
}

/// Partition quality against the ground-truth level sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionScore {
    pub matching: Matching,
    /// Jaccard index of each matched pair, in `matching.pairs` order.
    pub matched_jaccard: Vec<f64>,
    pub jaccard_mean: f64,
    pub order_corr: f64,
}

pub fn score_partition(truth: &Partition, truth_levels: &[f64], estimate: &Partition, n: usize) -> Result<PartitionScore> {
    let j = jaccard_matrix(truth, estimate, n);
    let matching = max_matching(&j);
    let matched_jaccard: Vec<f64> = matching.pairs.iter().map(|&(a, b)| j[a][b]).collect();
    let jaccard_mean = matched_jaccard.iter().sum::<f64>() / matched_jaccard.len().max(1) as f64;
    let mut by_est: Vec<(usize, usize)> = matching.pairs.iter().map(|&(t, e)| (e, t)).collect();
    by_est.sort_unstable();
    let ranks: Vec<f64> = by_est.iter().map(|p| p.0 as f64).collect();
    let values: Vec<f64> = by_est.iter().map(|p| truth_levels[p.1]).collect();
    let order_corr = ordering_correlation(&ranks, &values)?;
    Ok(PartitionScore { matching, matched_jaccard, jaccard_mean, order_corr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::PartitionSource;

    #[test]
    fn cs1_truth_facts() {
        let dom = LatticeDomain::square(50, 150).unwrap();
        let gt = ground_truth_cs1(&dom);
        assert_eq!(gt.levels.len(), 201);
        let total: f64 = gt.joint.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let mode = gt.marginal.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(gt.levels[mode], 100.0);
        let conv = poisson_convolution_marginal(&gt.levels);
        // the convolution keeps the x1 > 150 tail that the box removes
        let d: f64 = conv.iter().zip(&gt.marginal).map(|(a, b)| (a - b).abs()).sum();
        assert!(d < 1e-5, "{d}");
    }

    #[test]
    fn jaccard_entries() {
        let a = Partition::new(vec![vec![0, 1], vec![2, 3]], PartitionSource::GroundTruth);
        let b = Partition::new(vec![vec![0], vec![1, 2, 3]], PartitionSource::Eigenvector);
        let j = jaccard_matrix(&a, &b, 4);
        assert_eq!(j[0][0], 0.5);
        assert!((j[0][1] - 0.25).abs() < 1e-15);
        assert_eq!(j[1][0], 0.0);
        assert!((j[1][1] - 2.0 / 3.0).abs() < 1e-15);
        let same = jaccard_matrix(&a, &a, 4);
        assert_eq!(same, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn matching_examples() {
        let m = max_matching(&[vec![0.9, 0.8], vec![0.8, 0.1]]);
        assert_eq!(m.pairs, vec![(0, 1), (1, 0)]);
        assert!((m.total - 1.6).abs() < 1e-12);
        let m = max_matching(&[vec![0.1, 0.9, 0.0], vec![0.7, 0.0, 0.2]]);
        assert_eq!(m.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(m.unmatched_cols, vec![2]);
        let m = max_matching(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.3, 0.2]]);
        assert_eq!(m.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(m.unmatched_rows, vec![2]);
    }

    #[test]
    fn correlations() {
        let r: Vec<f64> = (0..10).map(f64::from).collect();
        assert!((ordering_correlation(&r, &r).unwrap() - 1.0).abs() < 1e-15);
        let rev: Vec<f64> = r.iter().rev().copied().collect();
        assert!((ordering_correlation(&r, &rev).unwrap() + 1.0).abs() < 1e-15);
        assert!(ordering_correlation(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn l1_examples() {
        assert_eq!(l1_error(&[(0, 0.5), (1, 0.5)], &[(0, 0.5), (1, 0.5)]), 0.0);
        assert_eq!(l1_error(&[(0, 1.0), (1, 0.0)], &[(0, 0.0), (1, 1.0)]), 2.0);
        assert_eq!(l1_error(&[(5, 1.0)], &[(6, 1.0)]), 2.0);
    }

    #[test]
    fn full_cme_on_small_birth_death() {
        // ∅ → X at rate 2, X → ∅ at rate 1 per molecule: Poisson(2) truncated
        use crate::network::{RateLaw, Reaction, VolumeScaling};
        let net = ReactionNetwork::new(
            vec!["X".into()],
            vec![
                Reaction::new(vec![1], RateLaw::Constant, 2.0).unwrap(),
                Reaction::new(vec![-1], RateLaw::Linear(0), 1.0).unwrap(),
            ],
            1.0,
            VolumeScaling::Stated,
            Some(vec![1.0]),
        )
        .unwrap();
        let dom = LatticeDomain::new(vec![0], vec![30]).unwrap();
        let gt = full_cme_stationary(&net, &dom, &[1.0]).unwrap();
        let z: f64 = (0..=30).map(|n| ln_poisson(n, 2.0).exp()).sum();
        for n in 0..=30 {
            assert!((gt.joint[n as usize] - ln_poisson(n, 2.0).exp() / z).abs() < 1e-13);
        }
    }
}
