//! From the leading eigenvector to an ordered partition of the lattice.

use serde::{Deserialize, Serialize};

use crate::covariance::LocalCovariance;
use crate::error::{Error, Result};
use crate::network::LatticeDomain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionSource {
    GroundTruth,
    Eigenvector,
    Denoised,
}

/// Ordered, disjoint, non-empty bins of node indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub bins: Vec<Vec<usize>>,
    pub theta: f64,
    pub source: PartitionSource,
}

impl Partition {
    /// Drops empty bins and recomputes the score.
    pub fn new(bins: Vec<Vec<usize>>, source: PartitionSource) -> Self {
        let bins: Vec<Vec<usize>> = bins.into_iter().filter(|b| !b.is_empty()).collect();
        let theta = theta_of(&cardinalities(&bins));
        Self { bins, theta, source }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        cardinalities(&self.bins)
    }

    /// `labels[i]` is the bin of node `i`, or `None` when uncovered.
    pub fn labels(&self, n: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n];
        for (b, bin) in self.bins.iter().enumerate() {
            for &i in bin {
                out[i] = Some(b);
            }
        }
        out
    }

    /// Level sets of `w·x` over the domain, in increasing slow value.
    /// Returns the partition and the slow value of each bin.
    pub fn ground_truth(domain: &LatticeDomain, weights: &[f64]) -> (Self, Vec<f64>) {
        let mut keyed: Vec<(i64, usize)> = (0..domain.len())
            .map(|i| {
                let x = domain.state(i);
                let s: f64 = x.iter().zip(weights).map(|(a, w)| *a as f64 * w).sum();
                (level_key(s), i)
            })
            .collect();
        keyed.sort_unstable();
        let mut bins: Vec<Vec<usize>> = Vec::new();
        let mut values = Vec::new();
        let mut last = None;
        for (key, i) in keyed {
            if last != Some(key) {
                bins.push(Vec::new());
                values.push(key as f64 / LEVEL_SCALE);
                last = Some(key);
            }
            bins.last_mut().expect("pushed").push(i);
        }
        (Self::new(bins, PartitionSource::GroundTruth), values)
    }
}

const LEVEL_SCALE: f64 = 1e6;

/// Integer key identifying a slow level, robust to rounding in `w·x`.
pub fn level_key(s: f64) -> i64 {
    (s * LEVEL_SCALE).round() as i64
}

fn cardinalities(bins: &[Vec<usize>]) -> Vec<usize> {
    bins.iter().map(Vec::len).collect()
}

fn theta_of(cards: &[usize]) -> f64 {
    cards.windows(2).map(|w| (w[0] as f64 - w[1] as f64).powi(2)).sum()
}

/// `Σ (|P_i| − |P_{i+1}|)²` over consecutive bins.
pub fn theta_score(partition: &Partition) -> f64 {
    theta_of(&partition.cardinalities())
}

/// Descending sort order of `phi` (ties by index) and the consecutive gaps.
pub fn sort_and_increments(phi: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let mut sigma: Vec<usize> = (0..phi.len()).collect();
    sigma.sort_by(|&a, &b| phi[b].total_cmp(&phi[a]).then(a.cmp(&b)));
    let inc = sigma.windows(2).map(|w| phi[w[0]] - phi[w[1]]).collect();
    (sigma, inc)
}

/// Bin count from the increments, or `overridden` when given.
///
/// With the increments sorted into `δ̄₁ ≥ δ̄₂ ≥ …`, the count is one more than
/// the position of the largest ratio `δ̄_t / δ̄_{t+1}` for `2 ≤ t ≤ N/2`.
pub fn select_k(increments: &[f64], overridden: Option<usize>) -> usize {
    if let Some(k) = overridden {
        return k;
    }
    let mut sorted: Vec<f64> = increments.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted.first().is_none_or(|&v| v <= 0.0) {
        return 1;
    }
    let n = increments.len() + 1;
    let hi = (n / 2).min(sorted.len().saturating_sub(1));
    let lo = 2.min(hi);
    if hi == 0 {
        return 1 + sorted.iter().filter(|&&v| v > 0.0).count();
    }
    let mut best_t = lo.max(1);
    let mut best = f64::NEG_INFINITY;
    for t in lo.max(1)..=hi {
        let (a, b) = (sorted[t - 1], sorted[t]);
        let ratio = if b > 0.0 {
            a / b
        } else if a > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if ratio > best {
            best = ratio;
            best_t = t;
        }
    }
    best_t + 1
}

/// Splits the sorted order at the `k − 1` largest gaps.
pub fn partition_from_delimiters(sigma: &[usize], increments: &[f64], k: usize) -> Result<Partition> {
    let n = sigma.len();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("bin count {k} outside 1..={n}")));
    }
    let mut positions: Vec<usize> = (0..increments.len()).collect();
    positions.sort_by(|&a, &b| increments[b].total_cmp(&increments[a]).then(a.cmp(&b)));
    let mut cuts: Vec<usize> = positions[..k - 1].iter().map(|p| p + 1).collect();
    cuts.sort_unstable();
    let mut bins = Vec::with_capacity(k);
    let mut start = 0;
    for c in cuts.into_iter().chain(std::iter::once(n)) {
        bins.push(sigma[start..c].to_vec());
        start = c;
    }
    Ok(Partition::new(bins, PartitionSource::Eigenvector))
}

/// Greedy adjacent-bin merging while it lowers the score.
pub fn denoise(partition: &Partition) -> Partition {
    let mut bins = partition.bins.clone();
    let mut cards: Vec<f64> = bins.iter().map(|b| b.len() as f64).collect();
    let sq = |a: f64, b: f64| (a - b).powi(2);
    loop {
        let k = cards.len();
        if k < 2 {
            break;
        }
        let current: f64 = cards.windows(2).map(|w| sq(w[0], w[1])).sum();
        // score change from merging bins i and i+1
        let mut best = (f64::INFINITY, 0usize);
        for i in 0..k - 1 {
            let merged = cards[i] + cards[i + 1];
            let mut delta = -sq(cards[i], cards[i + 1]);
            if i > 0 {
                delta += sq(cards[i - 1], merged) - sq(cards[i - 1], cards[i]);
            }
            if i + 2 < k {
                delta += sq(merged, cards[i + 2]) - sq(cards[i + 1], cards[i + 2]);
            }
            if current + delta < best.0 {
                best = (current + delta, i);
            }
        }
        if best.0 >= current {
            break;
        }
        let i = best.1;
        let tail = bins.remove(i + 1);
        bins[i].extend(tail);
        cards[i] += cards[i + 1];
        cards.remove(i + 1);
    }
    Partition::new(bins, PartitionSource::Denoised)
}

/// Removes bins lying entirely within Chebyshev distance `< width` of the
/// domain boundary.
pub fn truncate_boundary(partition: &Partition, domain: &LatticeDomain, width: usize) -> Result<Partition> {
    let w = width as i64;
    let bins: Vec<Vec<usize>> = partition
        .bins
        .iter()
        .filter(|bin| bin.iter().any(|&i| domain.boundary_distance(&domain.state(i)) >= w))
        .cloned()
        .collect();
    if bins.is_empty() {
        return Err(Error::Domain(format!("boundary band {width} removes every bin")));
    }
    Ok(Partition { theta: theta_of(&cardinalities(&bins)), bins, source: partition.source })
}

/// Default band width: the largest slow-direction diameter `2√λ_min` of the
/// unit covariance ellipses, rounded up.
pub fn default_band(covariances: &[LocalCovariance]) -> usize {
    let m = covariances.iter().map(|c| c.lambda_min().max(0.0).sqrt()).fold(0.0f64, f64::max);
    (2.0 * m).ceil() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_cards(cards: &[usize]) -> Partition {
        let mut next = 0;
        let bins = cards
            .iter()
            .map(|&c| {
                let b: Vec<usize> = (next..next + c).collect();
                next += c;
                b
            })
            .collect();
        Partition::new(bins, PartitionSource::Eigenvector)
    }

    #[test]
    fn increments_of_small_vectors() {
        let (s, d) = sort_and_increments(&[3.0, 1.0, 2.0]);
        assert_eq!(s, vec![0, 2, 1]);
        assert_eq!(d, vec![1.0, 1.0]);
        let (_, d) = sort_and_increments(&[0.5; 4]);
        assert!(d.iter().all(|&v| v == 0.0));
        let (_, d) = sort_and_increments(&[0.1, 0.9, 0.1, 0.9, 0.9]);
        let nz: Vec<(usize, f64)> = d.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        assert_eq!(nz.len(), 1);
        assert_eq!(nz[0].0 + 1, 3);
        assert!((nz[0].1 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn k_selection() {
        let mut d = vec![10.0, 9.0, 8.0];
        d.extend((0..20).map(|i| 0.01 * 0.9f64.powi(i)));
        assert_eq!(select_k(&d, None), 4);
        assert_eq!(select_k(&d, Some(314)), 314);
        assert_eq!(select_k(&[0.0; 9], None), 1);
    }

    #[test]
    fn delimiters() {
        let phi = [0.9, 0.9, 0.1];
        let (s, d) = sort_and_increments(&phi);
        let p = partition_from_delimiters(&s, &d, 2).unwrap();
        assert_eq!(p.bins, vec![vec![0, 1], vec![2]]);
        assert_eq!(partition_from_delimiters(&s, &d, 1).unwrap().bins, vec![vec![0, 1, 2]]);
        assert_eq!(partition_from_delimiters(&s, &d, 3).unwrap().len(), 3);
    }

    #[test]
    fn scores() {
        assert_eq!(from_cards(&[4, 4, 4]).theta, 0.0);
        assert_eq!(from_cards(&[1, 3, 2]).theta, 5.0);
    }

    #[test]
    fn denoising() {
        assert_eq!(denoise(&from_cards(&[5, 5, 5])).cardinalities(), vec![5, 5, 5]);
        let p = from_cards(&[5, 2, 3, 5]);
        assert_eq!(p.theta, 14.0);
        let q = denoise(&p);
        assert_eq!(q.cardinalities(), vec![5, 5, 5]);
        assert_eq!(q.theta, 0.0);
    }

    #[test]
    fn cs2_ground_truth_score() {
        let dom = LatticeDomain::square(1, 110).unwrap();
        let (p, values) = Partition::ground_truth(&dom, &[1.0, 2.0]);
        assert_eq!(p.len(), 328);
        assert_eq!(values[0], 3.0);
        assert_eq!(p.theta, 108.0);
    }

    #[test]
    fn truncation() {
        let dom = LatticeDomain::square(50, 150).unwrap();
        let (p, _) = Partition::ground_truth(&dom, &[0.5, 0.5]);
        assert_eq!(truncate_boundary(&p, &dom, 0).unwrap(), p);
        // levels 50, 50.5, 149.5 and 150 lie entirely on the boundary
        let t = truncate_boundary(&p, &dom, 1).unwrap();
        assert_eq!(t.len(), p.len() - 4);
        assert_eq!(p.bins[0], vec![0]);
        assert!(!t.bins.contains(&vec![0]));
    }
}
