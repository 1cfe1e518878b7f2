//! Conditional laws `P(F = f | S = s)` of the fast coordinate.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::binning::Partition;
use crate::error::{Error, Result};
use crate::network::{LatticeDomain, ReactionNetwork};
use crate::simulate::{cssa_run, RngStream, SlowSpec};

/// Bins up to this size are solved densely.
const DENSE_LIMIT: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDistribution {
    /// Slow value, or bin position for partition-based conditionals.
    pub s: f64,
    /// Member states in increasing `x1`.
    pub support: Vec<Vec<i64>>,
    pub probs: Vec<f64>,
}

impl ConditionalDistribution {
    fn normalized(s: f64, mut pairs: Vec<(Vec<i64>, f64)>) -> Result<Self> {
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Numerical(format!("conditional at s = {s} has no mass")));
        }
        let (support, probs) = pairs.into_iter().map(|(x, p)| (x, p / total)).unzip();
        Ok(Self { s, support, probs })
    }

    /// Probability of `x`, zero off the support.
    pub fn prob(&self, x: &[i64]) -> f64 {
        self.support.iter().position(|y| y == x).map_or(0.0, |k| self.probs[k])
    }

    pub fn mean(&self, axis: usize) -> f64 {
        self.support.iter().zip(&self.probs).map(|(x, p)| x[axis] as f64 * p).sum()
    }

    /// CSV `x1,prob`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x1,prob")?;
        for (x, p) in self.support.iter().zip(&self.probs) {
            writeln!(out, "{},{p:e}", x[0])?;
        }
        Ok(())
    }
}

/// Total-variation distance `½ Σ |p − q|` over the union of supports.
pub fn total_variation(a: &ConditionalDistribution, b: &ConditionalDistribution) -> f64 {
    let mut acc: BTreeMap<&[i64], f64> = BTreeMap::new();
    for (x, p) in a.support.iter().zip(&a.probs) {
        *acc.entry(x.as_slice()).or_default() += p;
    }
    for (x, p) in b.support.iter().zip(&b.probs) {
        *acc.entry(x.as_slice()).or_default() -= p;
    }
    0.5 * acc.values().map(|v| v.abs()).sum::<f64>()
}

/// Stationary law of the fast reactions restricted to `states`.
///
/// Fast transitions leaving the set are dropped. Errors when the set splits
/// into pieces the fast reactions cannot connect.
pub fn fast_subsystem_conditional(
    net: &ReactionNetwork,
    s: f64,
    states: &[Vec<i64>],
    fast: &[usize],
) -> Result<ConditionalDistribution> {
    let n = states.len();
    if n == 0 {
        return Err(Error::Domain(format!("empty bin at s = {s}")));
    }
    if n == 1 {
        return ConditionalDistribution::normalized(s, vec![(states[0].clone(), 1.0)]);
    }
    let lookup: BTreeMap<&[i64], usize> = states.iter().enumerate().map(|(i, x)| (x.as_slice(), i)).collect();
    // off-diagonal rates (from, to, rate)
    let mut rates: Vec<(usize, usize, f64)> = Vec::new();
    for (i, x) in states.iter().enumerate() {
        let alpha = net.propensities(x)?;
        for &j in fast {
            if alpha[j] <= 0.0 {
                continue;
            }
            let y: Vec<i64> = x.iter().zip(net.stoich(j)).map(|(a, b)| a + b).collect();
            if let Some(&k) = lookup.get(y.as_slice()) {
                if k != i {
                    rates.push((i, k, alpha[j]));
                }
            }
        }
    }
    let sizes = components(n, &rates);
    if sizes.len() > 1 {
        return Err(Error::Disconnected { sizes });
    }
    let p = if n <= DENSE_LIMIT { dense_null(n, &rates)? } else { power_null(n, &rates) };
    let pairs = states.iter().cloned().zip(p).collect();
    ConditionalDistribution::normalized(s, pairs)
}

fn components(n: usize, rates: &[(usize, usize, f64)]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for &(a, b, _) in rates {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..n {
        *sizes.entry(find(&mut parent, i)).or_default() += 1;
    }
    sizes.into_values().collect()
}

/// Solves `pᵀQ = 0`, `Σp = 1` with the last balance equation replaced by the
/// normalization.
fn dense_null(n: usize, rates: &[(usize, usize, f64)]) -> Result<Vec<f64>> {
    let mut qt = DMatrix::<f64>::zeros(n, n);
    for &(i, k, r) in rates {
        qt[(k, i)] += r;
        qt[(i, i)] -= r;
    }
    // row scaling keeps the equations comparable in size
    for r in 0..n - 1 {
        let m = qt.row(r).amax();
        if m > 0.0 {
            qt.row_mut(r).scale_mut(1.0 / m);
        }
    }
    for c in 0..n {
        qt[(n - 1, c)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;
    let sol = qt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular fast-subsystem generator".into()))?;
    Ok(sol.iter().map(|v| v.max(0.0)).collect())
}

fn power_null(n: usize, rates: &[(usize, usize, f64)]) -> Vec<f64> {
    let mut exit = vec![0.0; n];
    for &(i, _, r) in rates {
        exit[i] += r;
    }
    let h = 1.0 / exit.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut p = vec![1.0 / n as f64; n];
    for _ in 0..1_000_000 {
        let mut next: Vec<f64> = p.iter().zip(&exit).map(|(v, e)| v * (1.0 - h * e)).collect();
        for &(i, k, r) in rates {
            next[k] += p[i] * r * h;
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let diff: f64 = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
        p = next;
        if diff < 1e-15 {
            break;
        }
    }
    p
}

/// States of the level set `w·x = s`; inside `domain` when given, otherwise
/// every non-negative state whose first coordinate is at most `s / w1`.
pub fn level_states(weights: &[f64], s: f64, domain: Option<&LatticeDomain>) -> Vec<Vec<i64>> {
    assert_eq!(weights.len(), 2, "level sets are enumerated for two species");
    let (w1, w2) = (weights[0], weights[1]);
    let (lo, hi) = match domain {
        Some(d) => (d.lo()[0], d.hi()[0]),
        None => (0, (s / w1).floor() as i64),
    };
    let mut out = Vec::new();
    for x1 in lo..=hi {
        let x2 = (s - w1 * x1 as f64) / w2;
        if x2 < -1e-9 || (x2 - x2.round()).abs() > 1e-9 {
            continue;
        }
        let x = vec![x1, x2.round() as i64];
        if domain.is_none_or(|d| d.contains(&x)) {
            out.push(x);
        }
    }
    out
}

fn log_weights_to_dist(s: f64, logs: Vec<(Vec<i64>, f64)>) -> Result<ConditionalDistribution> {
    if logs.is_empty() {
        return Err(Error::Domain(format!("no states with slow value {s}")));
    }
    let m = logs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    ConditionalDistribution::normalized(s, logs.into_iter().map(|(x, l)| (x, (l - m).exp())).collect())
}

fn ln_factorial(n: i64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// CS-I: `∝ (c2/c3)^(2s − x1) / (x1! (2s − x1)!)` on the level set of
/// `(x1 + x2)/2`, using the network's effective coefficients.
pub fn closed_form_cs1(net: &ReactionNetwork, s: f64, domain: Option<&LatticeDomain>) -> Result<ConditionalDistribution> {
    if s < 0.0 {
        return Err(Error::Domain(format!("slow value {s} is negative")));
    }
    let c = net.coefficients();
    let lr = (c[1] / c[2]).ln();
    let states = level_states(&[0.5, 0.5], s, domain);
    let logs = states
        .into_iter()
        .map(|x| {
            let l = -ln_factorial(x[0]) - ln_factorial(x[1]) + x[1] as f64 * lr;
            (x, l)
        })
        .collect();
    log_weights_to_dist(s, logs)
}

/// CS-II: `∝ (c5/c6)^((s − x1)/2) / (x1! ((s − x1)/2)!)` on `x1 + 2 x2 = s`.
pub fn closed_form_cs2(net: &ReactionNetwork, s: f64, domain: Option<&LatticeDomain>) -> Result<ConditionalDistribution> {
    if s < 0.0 {
        return Err(Error::Domain(format!("slow value {s} is negative")));
    }
    let c = net.coefficients();
    let lr = (c[4] / c[5]).ln();
    let states = level_states(&[1.0, 2.0], s, domain);
    let logs = states
        .into_iter()
        .map(|x| {
            let l = -ln_factorial(x[0]) - ln_factorial(x[1]) + x[1] as f64 * lr;
            (x, l)
        })
        .collect();
    log_weights_to_dist(s, logs)
}

/// Time-weighted occupancy of the fast coordinate over a CSSA run held at
/// the slow value `s`, stopped after `lc` attempted slow transitions.
pub fn cssa_conditional(
    net: &ReactionNetwork,
    s: f64,
    lc: usize,
    domain: &LatticeDomain,
    rng: &mut RngStream,
) -> Result<ConditionalDistribution> {
    let w = net
        .slow_weights()
        .ok_or_else(|| Error::Config("CSSA by slow value needs slow weights".into()))?
        .to_vec();
    let states = level_states(&w, s, Some(domain));
    if states.is_empty() {
        return Err(Error::Domain(format!("no domain state has slow value {s}")));
    }
    let x0 = states[states.len() / 2].clone();
    let stats = cssa_run(net, &x0, &SlowSpec::Weights(&w), domain, lc, rng)?;
    let pairs = stats
        .occupancy
        .iter()
        .filter_map(|&(x1, t)| states.iter().find(|x| x[0] == x1).map(|x| (x.clone(), t)))
        .collect();
    ConditionalDistribution::normalized(s, pairs)
}

/// Reaction split induced by a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionClasses {
    pub fast: Vec<usize>,
    pub slow: Vec<usize>,
    /// Share of tested states each reaction moves to another bin.
    pub crossing_share: Vec<f64>,
    /// Reactions whose share falls in `[0.4, 0.6]`.
    pub ambiguous: Vec<usize>,
}

/// A reaction is slow when it moves most covered interior states to a
/// different bin.
pub fn classify_reactions(net: &ReactionNetwork, partition: &Partition, domain: &LatticeDomain) -> ReactionClasses {
    let labels = partition.labels(domain.len());
    let reach: i64 = (0..net.num_reactions())
        .flat_map(|j| net.stoich(j).iter().map(|v| v.abs()))
        .max()
        .unwrap_or(1);
    let interior: Vec<usize> = (0..domain.len())
        .filter(|&i| labels[i].is_some() && domain.boundary_distance(&domain.state(i)) >= reach)
        .collect();
    let mut classes = ReactionClasses { fast: vec![], slow: vec![], crossing_share: vec![], ambiguous: vec![] };
    for j in 0..net.num_reactions() {
        let crossing = interior
            .iter()
            .filter(|&&i| {
                let x = domain.state(i);
                let y: Vec<i64> = x.iter().zip(net.stoich(j)).map(|(a, b)| a + b).collect();
                labels[domain.index_unchecked(&y)] != labels[i]
            })
            .count();
        let share = if interior.is_empty() { 1.0 } else { crossing as f64 / interior.len() as f64 };
        classes.crossing_share.push(share);
        if (0.4..=0.6).contains(&share) {
            classes.ambiguous.push(j);
        }
        if share > 0.5 {
            classes.slow.push(j);
        } else {
            classes.fast.push(j);
        }
    }
    classes
}

/// Fast-subsystem conditional of every bin, in bin order.
pub fn bin_conditionals(
    net: &ReactionNetwork,
    partition: &Partition,
    domain: &LatticeDomain,
    fast: &[usize],
) -> Result<Vec<ConditionalDistribution>> {
    partition
        .bins
        .par_iter()
        .enumerate()
        .map(|(b, bin)| {
            let states: Vec<Vec<i64>> = bin.iter().map(|&i| domain.state(i)).collect();
            fast_subsystem_conditional(net, b as f64, &states, fast)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{builtin_cs1, builtin_cs2, builtin_cs2_with, VolumeScaling};

    #[test]
    fn single_state_bin() {
        let (net, _) = builtin_cs1();
        let c = fast_subsystem_conditional(&net, 0.0, &[vec![0, 0]], &[1, 2]).unwrap();
        assert_eq!(c.probs, vec![1.0]);
    }

    #[test]
    fn cs1_small_level_is_binomial() {
        let (net, _) = builtin_cs1();
        let states = level_states(&[0.5, 0.5], 1.0, None);
        assert_eq!(states, vec![vec![0, 2], vec![1, 1], vec![2, 0]]);
        let c = fast_subsystem_conditional(&net, 1.0, &states, &[1, 2]).unwrap();
        for (p, q) in c.probs.iter().zip([0.25, 0.5, 0.25]) {
            assert!((p - q).abs() < 1e-14);
        }
        let cf = closed_form_cs1(&net, 1.0, None).unwrap();
        assert!(total_variation(&c, &cf) < 1e-14);
        assert_eq!(closed_form_cs1(&net, 0.0, None).unwrap().probs, vec![1.0]);
    }

    #[test]
    fn cs2_level_seven() {
        let (net, _) = builtin_cs2_with(VolumeScaling::Table);
        let cf = closed_form_cs2(&net, 7.0, None).unwrap();
        let x1: Vec<i64> = cf.support.iter().map(|x| x[0]).collect();
        assert_eq!(x1, vec![1, 3, 5, 7]);
        for (p, q) in cf.probs.iter().zip([0.00333, 0.0834, 0.4170, 0.4964]) {
            assert!((p - q).abs() < 1e-4, "{p} vs {q}");
        }
        let ns = fast_subsystem_conditional(&net, 7.0, &cf.support, &[4, 5]).unwrap();
        assert!(total_variation(&ns, &cf) < 1e-10);
        assert!(closed_form_cs2(&net, -1.0, None).is_err());
    }

    #[test]
    fn disconnected_bin_is_reported() {
        let (net, _) = builtin_cs1();
        let err = fast_subsystem_conditional(&net, 0.0, &[vec![0, 2], vec![2, 0]], &[1, 2]).unwrap_err();
        assert!(matches!(err, Error::Disconnected { .. }));
    }

    #[test]
    fn power_iteration_matches_dense() {
        let rates = vec![(0, 1, 2.0), (1, 0, 1.0), (1, 2, 3.0), (2, 1, 0.5)];
        let a = dense_null(3, &rates).unwrap();
        let b = power_null(3, &rates);
        let sa: f64 = a.iter().sum();
        for (x, y) in a.iter().zip(&b) {
            assert!((x / sa - y).abs() < 1e-12);
        }
    }

    #[test]
    fn reaction_classes_from_truth() {
        let (net, dom) = builtin_cs2();
        let (p, _) = Partition::ground_truth(&dom, &[1.0, 2.0]);
        let c = classify_reactions(&net, &p, &dom);
        assert_eq!(c.fast, vec![4, 5]);
        assert_eq!(c.slow, vec![0, 1, 2, 3]);
        let (net, dom) = builtin_cs1();
        let (p, _) = Partition::ground_truth(&dom, &[0.5, 0.5]);
        let c = classify_reactions(&net, &p, &dom);
        assert_eq!(c.fast, vec![1, 2]);
        let singletons = Partition::new((0..dom.len()).map(|i| vec![i]).collect(), p.source);
        assert_eq!(classify_reactions(&net, &singletons, &dom).slow, vec![0, 1, 2, 3]);
    }
}
