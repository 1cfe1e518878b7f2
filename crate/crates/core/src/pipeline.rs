//! End-to-end pipeline in memory: slow-variable discovery, stationary
//! estimation and scoring against ground truth.

use serde::{Deserialize, Serialize};

use crate::admgraph::{build_graph, laplacian, SparseSimilarity};
use crate::binning::{
    default_band, denoise, partition_from_delimiters, select_k, sort_and_increments, truncate_boundary, Partition,
};
use crate::conditional::{bin_conditionals, classify_reactions, ConditionalDistribution, ReactionClasses};
use crate::covariance::{calibrate_dt, domain_covariances, LocalCovariance};
use crate::error::{Error, Result};
use crate::evaluate::{align_to_levels, full_cme_stationary, ground_truth_cs1, l1_error, score_partition, GroundTruth, PartitionScore};
use crate::network::{LatticeDomain, ReactionNetwork};
use crate::slowchain::{aggregate_rates, SlowChain};
use crate::spectral::{top_eigenpairs, EigenResult, DEFAULT_MAX_ITERS, DEFAULT_TOL};

/// Kernel scale on the calibrated Σ-distance.
pub const DEFAULT_EPS: f64 = 1.0;
/// Ellipse scale on the calibrated Σ-distance.
pub const DEFAULT_RHO: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryParams {
    pub eps: f64,
    pub rho: f64,
    /// `None` calibrates.
    pub dt: Option<f64>,
    /// `None` selects from the increments.
    pub k: Option<usize>,
    /// `None` uses [`default_band`].
    pub band: Option<usize>,
    pub tol: f64,
    pub max_iters: usize,
    /// Number of nontrivial eigenpairs; binning uses the first.
    pub n_eigs: usize,
}

impl Default for DiscoveryParams {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            rho: DEFAULT_RHO,
            dt: None,
            k: None,
            band: None,
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            n_eigs: 1,
        }
    }
}

impl DiscoveryParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.eps) || !positive(self.rho) || !positive(self.tol) {
            return Err(Error::Config("eps, rho and tol must be positive".into()));
        }
        if self.dt.is_some_and(|d| !positive(d)) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if self.k == Some(0) || self.n_eigs == 0 || self.max_iters == 0 {
            return Err(Error::Config("k, n_eigs and max_iters must be at least one".into()));
        }
        Ok(())
    }
}

/// Every intermediate of the discovery half of the pipeline.
#[derive(Debug, Clone)]
pub struct Discovery {
    pub dt: f64,
    pub covariances: Vec<LocalCovariance>,
    pub graph: SparseSimilarity,
    pub eigen: EigenResult,
    pub sigma: Vec<usize>,
    pub increments: Vec<f64>,
    pub k: usize,
    /// Partition straight from the eigenvector delimiters.
    pub raw: Partition,
    pub denoised: Partition,
    pub band: usize,
    /// Denoised and boundary-truncated.
    pub partition: Partition,
}

pub fn covariances(net: &ReactionNetwork, domain: &LatticeDomain, dt: Option<f64>) -> Result<(f64, Vec<LocalCovariance>)> {
    let dt = match dt {
        Some(d) => d,
        None => calibrate_dt(net, domain)?,
    };
    Ok((dt, domain_covariances(net, domain, dt)?))
}

/// Partitions the eigenvector `phi` into bins.
pub fn bin_eigenvector(
    phi: &[f64],
    domain: &LatticeDomain,
    covariances: &[LocalCovariance],
    k: Option<usize>,
    band: Option<usize>,
) -> Result<(Vec<usize>, Vec<f64>, usize, Partition, Partition, usize, Partition)> {
    let (sigma, increments) = sort_and_increments(phi);
    let k = select_k(&increments, k);
    let raw = partition_from_delimiters(&sigma, &increments, k)?;
    let denoised = denoise(&raw);
    let band = band.unwrap_or_else(|| default_band(covariances));
    let partition = truncate_boundary(&denoised, domain, band)?;
    Ok((sigma, increments, k, raw, denoised, band, partition))
}

pub fn discover(net: &ReactionNetwork, domain: &LatticeDomain, params: &DiscoveryParams) -> Result<Discovery> {
    params.validate()?;
    let (dt, covariances) = covariances(net, domain, params.dt)?;
    let graph = build_graph(domain, &covariances, params.rho, params.eps)?;
    let lap = laplacian(&graph)?;
    let eigen = top_eigenpairs(&lap, params.n_eigs, params.tol, params.max_iters)?;
    let (sigma, increments, k, raw, denoised, band, partition) =
        bin_eigenvector(&eigen.vectors[0], domain, &covariances, params.k, params.band)?;
    Ok(Discovery { dt, covariances, graph, eigen, sigma, increments, k, raw, denoised, band, partition })
}

/// The estimation half: reaction split, per-bin conditionals and the chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Estimate {
    pub classes: ReactionClasses,
    pub conditionals: Vec<ConditionalDistribution>,
    pub chain: SlowChain,
}

pub fn estimate(net: &ReactionNetwork, domain: &LatticeDomain, partition: &Partition) -> Result<Estimate> {
    let classes = classify_reactions(net, partition, domain);
    let conditionals = bin_conditionals(net, partition, domain, &classes.fast)?;
    let (theta1, theta2) = aggregate_rates(net, partition, &conditionals, domain)?;
    let chain = SlowChain::from_rates(theta1, theta2)?;
    Ok(Estimate { classes, conditionals, chain })
}

/// Which ground truth applies to a system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TruthKind {
    /// Product-Poisson law of CS-I.
    Poisson,
    /// Stationary solve of the truncated full chain.
    FullCme,
}

pub fn ground_truth(kind: TruthKind, net: &ReactionNetwork, domain: &LatticeDomain) -> Result<GroundTruth> {
    let w = net
        .slow_weights()
        .ok_or_else(|| Error::Config("evaluation needs slow weights".into()))?;
    match kind {
        TruthKind::Poisson => Ok(ground_truth_cs1(domain)),
        TruthKind::FullCme => full_cme_stationary(net, domain, w),
    }
}

/// Partition score and the L¹ error of the chain's `π` against the truth.
#[derive(Debug, Clone)]
pub struct Assessment {
    pub score: PartitionScore,
    pub error: f64,
    pub truth_partition: Partition,
    pub truth_levels: Vec<f64>,
}

pub fn assess(
    net: &ReactionNetwork,
    domain: &LatticeDomain,
    partition: &Partition,
    pi: &[f64],
    truth: &GroundTruth,
) -> Result<Assessment> {
    let w = net
        .slow_weights()
        .ok_or_else(|| Error::Config("evaluation needs slow weights".into()))?;
    let (truth_partition, truth_levels) = Partition::ground_truth(domain, w);
    let score = score_partition(&truth_partition, &truth_levels, partition, domain.len())?;
    let aligned = align_to_levels(pi, &score.matching, &truth_levels);
    let error = l1_error(&aligned, &truth.marginal_by_level());
    Ok(Assessment { score, error, truth_partition, truth_levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_params() {
        let p = DiscoveryParams { eps: 0.0, ..Default::default() };
        assert!(matches!(p.validate(), Err(Error::Config(_))));
        let p = DiscoveryParams { k: Some(0), ..Default::default() };
        assert!(p.validate().is_err());
        assert!(DiscoveryParams::default().validate().is_ok());
    }
}
