//! Birth-death chain over bins: aggregated rates, its stationary law, and
//! the CMA baseline built from CSSA attempt statistics.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::Partition;
use crate::conditional::ConditionalDistribution;
use crate::error::{Error, Result};
use crate::network::{LatticeDomain, ReactionNetwork};
use crate::simulate::{cssa_run_checkpoints, CssaStats, RngStream, SlowSpec};

/// Rates below this are treated as absent when checking adjacency.
const NON_ADJACENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowChain {
    /// Up rate per bin; zero at the last bin.
    pub theta1: Vec<f64>,
    /// Down rate per bin; zero at the first bin.
    pub theta2: Vec<f64>,
    pub pi: Vec<f64>,
}

impl SlowChain {
    pub fn from_rates(theta1: Vec<f64>, theta2: Vec<f64>) -> Result<Self> {
        let pi = stationary_distribution(&theta1, &theta2)?;
        Ok(Self { theta1, theta2, pi })
    }

    /// CSV `s,theta1,theta2,theta1_minus_theta2` with `s` the bin position
    /// or the supplied slow values.
    pub fn write_rates_csv<W: Write>(&self, mut out: W, levels: Option<&[f64]>) -> Result<()> {
        writeln!(out, "s,theta1,theta2,theta1_minus_theta2")?;
        for (b, (a, d)) in self.theta1.iter().zip(&self.theta2).enumerate() {
            let s = levels.map_or(b as f64, |l| l[b]);
            writeln!(out, "{s},{a:e},{d:e},{:e}", a - d)?;
        }
        Ok(())
    }
}

/// CSV `s,pi`.
pub fn write_pi_csv<W: Write>(mut out: W, pi: &[f64], levels: Option<&[f64]>) -> Result<()> {
    writeln!(out, "s,pi")?;
    for (b, p) in pi.iter().enumerate() {
        let s = levels.map_or(b as f64, |l| l[b]);
        writeln!(out, "{s},{p:e}")?;
    }
    Ok(())
}

/// Up and down rates between consecutive bins, averaging propensities over
/// each bin's conditional law.
pub fn aggregate_rates(
    net: &ReactionNetwork,
    partition: &Partition,
    conditionals: &[ConditionalDistribution],
    domain: &LatticeDomain,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = partition.len();
    if conditionals.len() != k {
        return Err(Error::Domain(format!("{} conditionals for {k} bins", conditionals.len())));
    }
    let labels = partition.labels(domain.len());
    let rows: Vec<(f64, f64, Option<(usize, f64)>)> = conditionals
        .par_iter()
        .enumerate()
        .map(|(b, cond)| -> Result<(f64, f64, Option<(usize, f64)>)> {
            let (mut up, mut down) = (0.0, 0.0);
            let mut far: Vec<(usize, f64)> = Vec::new();
            for (x, &p) in cond.support.iter().zip(&cond.probs) {
                if p == 0.0 {
                    continue;
                }
                let alpha = net.propensities(x)?;
                for (j, a) in alpha.iter().enumerate() {
                    if *a == 0.0 {
                        continue;
                    }
                    let y: Vec<i64> = x.iter().zip(net.stoich(j)).map(|(u, v)| u + v).collect();
                    if !domain.contains(&y) {
                        continue;
                    }
                    match labels[domain.index_unchecked(&y)] {
                        Some(t) if t == b + 1 => up += p * a,
                        Some(t) if t + 1 == b => down += p * a,
                        Some(t) if t != b => far.push((t, p * a)),
                        _ => {}
                    }
                }
            }
            far.sort_by_key(|f| f.0);
            let mut worst: Option<(usize, f64)> = None;
            let mut i = 0;
            while i < far.len() {
                let t = far[i].0;
                let mut r = 0.0;
                while i < far.len() && far[i].0 == t {
                    r += far[i].1;
                    i += 1;
                }
                if r > NON_ADJACENT_TOL && worst.is_none_or(|w| r > w.1) {
                    worst = Some((t, r));
                }
            }
            Ok((up, down, worst))
        })
        .collect::<Result<_>>()?;
    let mut theta1 = Vec::with_capacity(k);
    let mut theta2 = Vec::with_capacity(k);
    for (b, (up, down, far)) in rows.into_iter().enumerate() {
        if let Some((to, rate)) = far {
            return Err(Error::NonAdjacent { from: b, to, rate });
        }
        theta1.push(up);
        theta2.push(down);
    }
    if let Some(first) = theta2.first_mut() {
        *first = 0.0;
    }
    if let Some(last) = theta1.last_mut() {
        *last = 0.0;
    }
    Ok((theta1, theta2))
}

/// Stationary law of the birth-death chain with up rates `theta1` and down
/// rates `theta2`, by the detailed-balance product in log space.
pub fn stationary_distribution(theta1: &[f64], theta2: &[f64]) -> Result<Vec<f64>> {
    let k = theta1.len();
    if theta2.len() != k || k == 0 {
        return Err(Error::Domain("rate vectors must be non-empty and of equal length".into()));
    }
    if theta1.iter().chain(theta2).any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain("rates must be finite and non-negative".into()));
    }
    let mut logs = vec![0.0; k];
    for t in 0..k - 1 {
        if logs[t] == f64::NEG_INFINITY || theta1[t] == 0.0 {
            logs[t + 1] = f64::NEG_INFINITY;
            continue;
        }
        if theta2[t + 1] == 0.0 {
            return Err(Error::DecomposedChain { bin: t + 1 });
        }
        logs[t + 1] = logs[t] + theta1[t].ln() - theta2[t + 1].ln();
    }
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut pi: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    Ok(pi)
}

/// Largest relative residual of the stationary balance over interior bins,
/// each scaled by `(Θ1ˢ + Θ2ˢ) π(s)`. Bins with no mass are skipped.
pub fn balance_residual(theta1: &[f64], theta2: &[f64], pi: &[f64]) -> f64 {
    let k = pi.len();
    let mut worst = 0.0f64;
    for s in 1..k.saturating_sub(1) {
        let out = (theta1[s] + theta2[s]) * pi[s];
        if out == 0.0 {
            continue;
        }
        let r = theta1[s - 1] * pi[s - 1] + theta2[s + 1] * pi[s + 1] - out;
        worst = worst.max(r.abs() / out);
    }
    worst
}

/// `‖Qᵀπ‖∞` for the birth-death generator.
pub fn global_balance(theta1: &[f64], theta2: &[f64], pi: &[f64]) -> f64 {
    let k = pi.len();
    (0..k)
        .map(|s| {
            let inflow = if s > 0 { theta1[s - 1] * pi[s - 1] } else { 0.0 }
                + if s + 1 < k { theta2[s + 1] * pi[s + 1] } else { 0.0 };
            (inflow - (theta1[s] + theta2[s]) * pi[s]).abs()
        })
        .fold(0.0, f64::max)
}

/// Stationary density of the Fokker–Planck equation with drift `Θ1 − Θ2`
/// and diffusion `Θ1 + Θ2` per level, by trapezoidal quadrature in level
/// index units.
pub fn fokker_planck_density(theta1: &[f64], theta2: &[f64]) -> Result<Vec<f64>> {
    let k = theta1.len();
    let mut g = Vec::with_capacity(k);
    for s in 0..k {
        let d = theta1[s] + theta2[s];
        if !(d > 0.0) {
            return Err(Error::Numerical(format!("zero diffusion at level {s}")));
        }
        g.push((2.0 * (theta1[s] - theta2[s]) / d, d));
    }
    let mut logs = Vec::with_capacity(k);
    let mut integral = 0.0;
    for s in 0..k {
        if s > 0 {
            integral += 0.5 * (g[s - 1].0 + g[s].0);
        }
        logs.push(integral - g[s].1.ln());
    }
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut pi: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    Ok(pi)
}

/// Per-level CSSA attempt rates `(Θ̂1, Θ̂2)`.
pub fn attempt_rates(stats: &[CssaStats]) -> (Vec<f64>, Vec<f64>) {
    stats
        .iter()
        .map(|s| (s.up_attempts as f64 / s.elapsed, s.down_attempts as f64 / s.elapsed))
        .unzip()
}

/// Gaussian kernel smoothing of a distribution `pi` on the points `levels`,
/// with Silverman's bandwidth `0.9 min(σ, IQR/1.34) n^(-1/5)` from the
/// weighted spread and `n` the number of levels. The result sums to one.
pub fn smooth_kde(levels: &[f64], pi: &[f64]) -> Vec<f64> {
    let n = levels.len();
    let total: f64 = pi.iter().sum();
    if n < 2 || !(total > 0.0) {
        return pi.to_vec();
    }
    let mean: f64 = levels.iter().zip(pi).map(|(s, p)| s * p).sum::<f64>() / total;
    let var: f64 = levels.iter().zip(pi).map(|(s, p)| (s - mean).powi(2) * p).sum::<f64>() / total;
    let quantile = |q: f64| {
        let mut acc = 0.0;
        for (s, p) in levels.iter().zip(pi) {
            acc += p / total;
            if acc >= q {
                return *s;
            }
        }
        levels[n - 1]
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let spread = if iqr > 0.0 { var.sqrt().min(iqr / 1.34) } else { var.sqrt() };
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    if !(h > 0.0) {
        return pi.iter().map(|p| p / total).collect();
    }
    let mut out: Vec<f64> = levels
        .iter()
        .map(|&x| levels.iter().zip(pi).map(|(s, p)| p * (-0.5 * ((x - s) / h).powi(2)).exp()).sum())
        .collect();
    let norm: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= norm);
    out
}

/// CMA result at one `L_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaEstimate {
    pub lc: usize,
    pub levels: Vec<f64>,
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    pub pi: Vec<f64>,
}

/// CMA over the slow levels `levels` (values of `w·x`): one CSSA run per
/// level to the largest `L_c`, with prefix snapshots at each smaller one.
/// Level `t` uses random stream `stream_base + t`.
pub fn cma_baseline(
    net: &ReactionNetwork,
    domain: &LatticeDomain,
    levels: &[f64],
    lcs: &[usize],
    seed: u64,
    stream_base: u64,
) -> Result<Vec<CmaEstimate>> {
    let w = net
        .slow_weights()
        .ok_or_else(|| Error::Config("the CMA baseline needs slow weights".into()))?
        .to_vec();
    let mut sorted = lcs.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let runs: Vec<Vec<CssaStats>> = levels
        .par_iter()
        .enumerate()
        .map(|(t, &s)| {
            let states = crate::conditional::level_states(&w, s, Some(domain));
            let x0 = states
                .get(states.len() / 2)
                .ok_or_else(|| Error::Domain(format!("no domain state has slow value {s}")))?
                .clone();
            let mut rng = RngStream::new(seed, stream_base + t as u64);
            cssa_run_checkpoints(net, &x0, &SlowSpec::Weights(&w), domain, &sorted, &mut rng)
        })
        .collect::<Result<_>>()?;
    sorted
        .iter()
        .enumerate()
        .map(|(c, &lc)| {
            let stats: Vec<CssaStats> = runs.iter().map(|r| r[c].clone()).collect();
            let (theta1, theta2) = attempt_rates(&stats);
            let pi = fokker_planck_density(&theta1, &theta2)?;
            Ok(CmaEstimate { lc, levels: levels.to_vec(), theta1, theta2, pi })
        })
        .collect()
}
