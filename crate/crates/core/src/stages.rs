//! Stage runner: each stage reads the previous stages' artifacts from the
//! output directory and writes its own.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::admgraph::{build_graph, degree_histogram, laplacian, SparseSimilarity};
use crate::artifacts::{sha256_hex, Workspace};
use crate::binning::{Partition, PartitionSource};
use crate::conditional::{bin_conditionals, classify_reactions, ConditionalDistribution};
use crate::config::{PipelineConfig, System};
use crate::covariance::LocalCovariance;
use crate::error::{Error, Result};
use crate::evaluate::{jaccard_matrix, l1_error, Report};
use crate::linalg::CsrMatrix;
use crate::network::LatticeDomain;
use crate::pipeline::{assess, bin_eigenvector, covariances, ground_truth};
use crate::simulate::{cle_step, ssa_visit, RngStream, Trajectory};
use crate::slowchain::{aggregate_rates, balance_residual, cma_baseline, global_balance, smooth_kde, write_pi_csv, SlowChain};
use crate::spectral::{combinatorial_spectrum, top_eigenpairs_with, LanczosOptions};

const STREAM_SSA: u64 = 0;
const STREAM_CLE: u64 = 1;
/// CMA level `t` uses stream `STREAM_CMA + t`.
const STREAM_CMA: u64 = 1 << 20;
/// Rows in the emitted trajectories.
const TRAJECTORY_SAMPLES: usize = 5_000;
const HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Simulate,
    Covariance,
    Graph,
    Spectrum,
    Bin,
    Conditional,
    Stationary,
    Cma,
    Evaluate,
    All,
}

impl Stage {
    /// Every concrete stage in execution order.
    pub const PIPELINE: [Stage; 9] = [
        Stage::Simulate,
        Stage::Covariance,
        Stage::Graph,
        Stage::Spectrum,
        Stage::Bin,
        Stage::Conditional,
        Stage::Stationary,
        Stage::Cma,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Covariance => "covariance",
            Stage::Graph => "graph",
            Stage::Spectrum => "spectrum",
            Stage::Bin => "bin",
            Stage::Conditional => "conditional",
            Stage::Stationary => "stationary",
            Stage::Cma => "cma",
            Stage::Evaluate => "evaluate",
            Stage::All => "all",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::PIPELINE
            .into_iter()
            .chain([Stage::All])
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// What a finished stage reports back.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub runtime_s: f64,
    pub summary: String,
}

/// Hash of the settings that influence numeric results; the output
/// directory and worker count are excluded.
pub fn config_hash(cfg: &PipelineConfig) -> String {
    let mut c = cfg.clone();
    c.out_dir = Default::default();
    c.workers = None;
    sha256_hex(c.to_text().as_bytes())
}

/// Runs `stage` (or the whole chain for [`Stage::All`]) with `cfg`.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<Vec<StageOutcome>> {
    cfg.validate()?;
    let system = cfg.load_system()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let stages: Vec<Stage> = if stage == Stage::All { Stage::PIPELINE.to_vec() } else { vec![stage] };
    let mut ws = Workspace::new(&cfg.out_dir, config_hash(cfg));
    let config_text = cfg.to_text();
    pool.install(|| {
        stages
            .into_iter()
            .map(|st| {
                let start = Instant::now();
                let summary = run_one(st, cfg, &system, &mut ws)?;
                let runtime_s = start.elapsed().as_secs_f64();
                ws.finish_stage(st.name(), runtime_s, &config_text)?;
                Ok(StageOutcome { stage: st, runtime_s, summary })
            })
            .collect()
    })
}

fn run_one(stage: Stage, cfg: &PipelineConfig, sys: &System, ws: &mut Workspace) -> Result<String> {
    match stage {
        Stage::Simulate => simulate(cfg, sys, ws),
        Stage::Covariance => covariance(cfg, sys, ws),
        Stage::Graph => graph(cfg, sys, ws),
        Stage::Spectrum => spectrum(cfg, sys, ws),
        Stage::Bin => bin(cfg, sys, ws),
        Stage::Conditional => conditional(sys, ws),
        Stage::Stationary => stationary(sys, ws),
        Stage::Cma => cma(cfg, sys, ws),
        Stage::Evaluate => evaluate(sys, ws),
        Stage::All => unreachable!("expanded by run_stage"),
    }
}

fn state_columns(dim: usize) -> String {
    (1..=dim).map(|i| format!(",x{i}")).collect()
}

fn state_fields(x: &[i64]) -> String {
    x.iter().map(|v| format!(",{v}")).collect()
}

fn simulate(cfg: &PipelineConfig, sys: &System, ws: &mut Workspace) -> Result<String> {
    let net = &sys.network;
    let grid = |k: usize| k as f64 * cfg.t_end / TRAJECTORY_SAMPLES as f64;
    let mut times = Vec::with_capacity(TRAJECTORY_SAMPLES + 1);
    let mut states: Vec<Vec<i64>> = Vec::with_capacity(TRAJECTORY_SAMPLES + 1);
    let mut next = 0;
    let mut rng = RngStream::new(cfg.seed, STREAM_SSA);
    let (last, truncated) = ssa_visit(net, &sys.x0, cfg.t_end, &mut rng, None, |t, hold, x| {
        while next <= TRAJECTORY_SAMPLES && grid(next) < t + hold {
            times.push(grid(next));
            states.push(x.to_vec());
            next += 1;
        }
    })?;
    while next <= TRAJECTORY_SAMPLES {
        times.push(grid(next));
        states.push(last.clone());
        next += 1;
    }
    let ssa = Trajectory { times, states, truncated };
    let mut buf = Vec::new();
    ssa.write_csv(&mut buf, net.slow_weights())?;
    ws.write("trajectory_ssa.csv", &buf)?;

    // the CLE path ends early, flagged as truncated, at the first negative
    // propensity rather than failing the stage
    let mut rng = RngStream::new(cfg.seed, STREAM_CLE);
    let steps = (cfg.t_end / cfg.cle_dt).round() as usize;
    let stride = (steps / TRAJECTORY_SAMPLES).max(1);
    let mut x: Vec<f64> = sys.x0.iter().map(|&v| v as f64).collect();
    let mut cle = Trajectory { times: vec![0.0], states: vec![x.clone()], truncated: false };
    for k in 1..=steps {
        match cle_step(net, &x, cfg.cle_dt, &mut rng) {
            Ok(next) => x = next,
            Err(Error::Domain(_)) => {
                cle.truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
        if k % stride == 0 || k == steps {
            cle.times.push(k as f64 * cfg.cle_dt);
            cle.states.push(x.clone());
        }
    }
    let mut buf = Vec::new();
    cle.write_csv(&mut buf, net.slow_weights())?;
    ws.write("trajectory_cle.csv", &buf)?;
    let note = if cle.truncated { " (CLE stopped at a negative propensity)" } else { "" };
    Ok(format!("{} SSA and {} CLE samples up to t = {}{note}", ssa.len(), cle.len(), cfg.t_end))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CovarianceSummary {
    dt: f64,
    dim: usize,
    states: usize,
    median_lambda_min: f64,
    max_sqrt_lambda_min: f64,
    min_tau: f64,
    max_tau: f64,
}

fn covariance(cfg: &PipelineConfig, sys: &System, ws: &mut Workspace) -> Result<String> {
    let (dt, covs) = covariances(&sys.network, &sys.domain, cfg.dt)?;
    let dim = sys.domain.dim();
    let mut out = String::from("state_index");
    out += &state_columns(dim);
    for r in 1..=dim {
        for c in 1..=dim {
            out += &format!(",sigma_{r}{c}");
        }
    }
    out += ",lambda_max,lambda_min,tau\n";
    for (i, c) in covs.iter().enumerate() {
        out += &format!("{i}{}", state_fields(&sys.domain.state(i)));
        for v in &c.sigma {
            out += &format!(",{v:e}");
        }
        out += &format!(",{:e},{:e},{:e}\n", c.lambda_max(), c.lambda_min(), c.tau);
    }
    ws.write("covariance.csv", out.as_bytes())?;
    let mut lmins: Vec<f64> = covs.iter().map(LocalCovariance::lambda_min).collect();
    lmins.sort_by(f64::total_cmp);
    let taus = covs.iter().map(|c| c.tau);
    let summary = CovarianceSummary {
        dt,
        dim,
        states: covs.len(),
        median_lambda_min: lmins[lmins.len() / 2],
        max_sqrt_lambda_min: lmins.last().map_or(0.0, |v| v.max(0.0).sqrt()),
        min_tau: taus.clone().fold(f64::INFINITY, f64::min),
        max_tau: taus.fold(0.0, f64::max),
    };
    ws.write_json("covariance.json", &summary)?;
    Ok(format!("Δt = {dt:.6e}, median λ_min = {:.4}", summary.median_lambda_min))
}

fn load_covariances(ws: &mut Workspace, domain: &LatticeDomain) -> Result<Vec<LocalCovariance>> {
    let csv = ws.read_csv("covariance.csv", "covariance")?;
    let dim = domain.dim();
    let cols = csv.columns_with_prefix("sigma_");
    if cols.len() != dim * dim || csv.len() != domain.len() {
        return Err(Error::Numerical("covariance.csv does not match the configured system".into()));
    }
    (0..csv.len())
        .map(|r| {
            let sigma = cols.iter().map(|&c| csv.get(r, c)).collect::<Result<Vec<f64>>>()?;
            Ok(LocalCovariance::from_matrix(dim, sigma))
        })
        .collect()
}

const GRAPH_MAGIC: &[u8; 8] = b"SVGRAPH1";

/// Little-endian CSR dump: magic, `n`, `nnz`, `ε`, `ρ`, row pointers,
/// columns, weights, degrees.
pub fn encode_graph(g: &SparseSimilarity) -> Vec<u8> {
    let w = &g.weights;
    let n = w.nrows;
    let nnz = w.nnz();
    let mut out = Vec::with_capacity(40 + 8 * (n + 1) + 12 * nnz + 8 * n);
    out.extend_from_slice(GRAPH_MAGIC);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(nnz as u64).to_le_bytes());
    out.extend_from_slice(&g.eps.to_le_bytes());
    out.extend_from_slice(&g.rho.to_le_bytes());
    for &p in &w.row_ptr {
        out.extend_from_slice(&(p as u64).to_le_bytes());
    }
    for &c in &w.col {
        out.extend_from_slice(&c.to_le_bytes());
    }
    for &v in &w.val {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &d in &g.degrees {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out
}

pub fn decode_graph(bytes: &[u8]) -> Result<SparseSimilarity> {
    let bad = || Error::Numerical("graph.bin is truncated or corrupt".into());
    let mut pos = 0usize;
    let mut take = |len: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + len).ok_or_else(bad)?;
        pos += len;
        Ok(s)
    };
    if take(8)? != GRAPH_MAGIC {
        return Err(bad());
    }
    let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().expect("8 bytes"));
    let f64_at = |s: &[u8]| f64::from_le_bytes(s.try_into().expect("8 bytes"));
    let n = u64_at(take(8)?) as usize;
    let nnz = u64_at(take(8)?) as usize;
    let eps = f64_at(take(8)?);
    let rho = f64_at(take(8)?);
    let row_ptr = take(8 * (n + 1))?.chunks_exact(8).map(|c| u64_at(c) as usize).collect();
    let col = take(4 * nnz)?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let val = take(8 * nnz)?.chunks_exact(8).map(f64_at).collect();
    let degrees = take(8 * n)?.chunks_exact(8).map(f64_at).collect();
    let weights = CsrMatrix { nrows: n, ncols: n, row_ptr, col, val };
    Ok(SparseSimilarity { weights, degrees, eps, rho })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphSummary {
    nodes: usize,
    edges: usize,
    eps: f64,
    rho: f64,
    min_degree: f64,
    max_degree: f64,
}

fn graph(cfg: &PipelineConfig, sys: &System, ws: &mut Workspace) -> Result<String> {
    let covs = load_covariances(ws, &sys.domain)?;
    let g = build_graph(&sys.domain, &covs, cfg.rho, cfg.eps)?;
    ws.write("graph.bin", &encode_graph(&g))?;
    let neighbors: Vec<f64> = (0..g.len()).map(|i| g.weights.row(i).0.len() as f64).collect();
    let mut out = format!("state_index{},degree,neighbors\n", state_columns(sys.domain.dim()));
    for (i, (d, k)) in g.degrees.iter().zip(&neighbors).enumerate() {
        out += &format!("{i}{},{d:e},{k}\n", state_fields(&sys.domain.state(i)));
    }
    ws.write("degrees.csv", out.as_bytes())?;
    let mut out = String::from("kind,lo,count\n");
    for (kind, values) in [("degree", &g.degrees), ("neighbors", &neighbors)] {
        for (lo, c) in degree_histogram(values, HISTOGRAM_BINS) {
            out += &format!("{kind},{lo:e},{c}\n");
        }
    }
    ws.write("degree_histogram.csv", out.as_bytes())?;
    let summary = GraphSummary {
        nodes: g.len(),
        edges: g.edge_count(),
        eps: g.eps,
        rho: g.rho,
        min_degree: g.degrees.iter().copied().fold(f64::INFINITY, f64::min),
        max_degree: g.degrees.iter().copied().fold(0.0, f64::max),
    };
    ws.write_json("graph.json", &summary)?;
    Ok(format!("{} nodes, {} undirected edges", summary.nodes, summary.edges))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EigenSummary {
    values: Vec<f64>,
    residuals: Vec<f64>,
    matvecs: usize,
}

fn spectrum(cfg: &PipelineConfig, sys: &System, ws: &mut Workspace) -> Result<String> {
    let g = decode_graph(&ws.read("graph.bin", "graph")?)?;
    if g.len() != sys.domain.len() {
        return Err(Error::Numerical("graph.bin does not match the configured system".into()));
    }
    let lap = laplacian(&g)?;
    let opts = LanczosOptions { tol: cfg.tol, max_iters: cfg.max_iters, ..Default::default() };
    let eig = top_eigenpairs_with(&lap, cfg.n_eigs, opts)?;
    let mut out = format!("state_index{}", state_columns(sys.domain.dim()));
    for k in 1..=eig.vectors.len() {
        out += &format!(",phi{k}");
    }
    out.push('\n');
    for i in 0..g.len() {
        out += &format!("{i}{}", state_fields(&sys.domain.state(i)));
        for v in &eig.vectors {
            out += &format!(",{:e}", v[i]);
        }
        out.push('\n');
    }
    ws.write("eigenvectors.csv", out.as_bytes())?;
    ws.write_json(
        "eigen.json",
        &EigenSummary { values: eig.values.clone(), residuals: eig.residuals.clone(), matvecs: eig.matvecs },
    )?;
    if cfg.spectrum_k > 0 {
        let k = cfg.spectrum_k.min(g.len());
        let gaps = combinatorial_spectrum(&lap, k, opts)?;
        let mut out = String::from("index,one_minus_lambda\n");
        for (i, v) in gaps.iter().enumerate() {
            out += &format!("{i},{v:e}\n");
        }
        ws.write("spectrum.csv", out.as_bytes())?;
    }
    Ok(format!("λ = {:?} after {} matvecs", eig.values, eig.matvecs))
}

/// Bin-stage numbers kept for later stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningSummary {
    pub k: usize,
    pub band: usize,
    pub bins_raw: usize,
    pub bins_denoised: usize,
    pub bins_final: usize,
    pub theta_raw: f64,
    pub theta_denoised: f64,
    pub theta_final: f64,
}

fn partition_csv(p: &Partition, domain: &LatticeDomain) -> String {
    let mut rows: Vec<(usize, usize)> =
        p.bins.iter().enumerate().flat_map(|(b, bin)| bin.iter().map(move |&i| (i, b))).collect();
    rows.sort_unstable();
    let mut out = format!("state_index{},bin_id\n", state_columns(domain.dim()));
    for (i, b) in rows {
        out += &format!("{i}{},{b}\n", state_fields(&domain.state(i)));
    }
    out
}

fn load_partition(ws: &mut Workspace) -> Result<Partition> {
    let csv = ws.read_csv("partition.csv", "bin")?;
    let (si, bi) = (csv.column("state_index")?, csv.column("bin_id")?);
    let mut bins: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for r in 0..csv.len() {
        bins.entry(csv.get(r, bi)?).or_default().push(csv.get(r, si)?);
    }
    Ok(Partition::new(bins.into_values().collect(), PartitionSource::Denoised))
}

fn bin(cfg: &PipelineConfig, sys: &System, ws: &mut Workspace) -> Result<String> {
    let phi = ws.read_csv("eigenvectors.csv", "spectrum")?.floats("phi1")?;
    let dom = &sys.domain;
    if phi.len() != dom.len() {
        return Err(Error::Numerical("eigenvectors.csv does not match the configured system".into()));
    }
    let covs = if cfg.band.is_none() { load_covariances(ws, dom)? } else { Vec::new() };
    let (sigma, increments, k, raw, denoised, band, fin) = bin_eigenvector(&phi, dom, &covs, cfg.k, cfg.band)?;

    let mut cut = vec![false; increments.len()];
    let mut positions: Vec<usize> = (0..increments.len()).collect();
    positions.sort_by(|&a, &b| increments[b].total_cmp(&increments[a]).then(a.cmp(&b)));
    for &p in &positions[..k - 1] {
        cut[p] = true;
    }
    let mut out = String::from("position,state_index,phi1,increment,delimiter\n");
    for (p, inc) in increments.iter().enumerate() {
        out += &format!("{p},{},{:e},{inc:e},{}\n", sigma[p], phi[sigma[p]], u8::from(cut[p]));
    }
    ws.write("increments.csv", out.as_bytes())?;

    if let Some(w) = sys.network.slow_weights() {
        let mut out = format!("state_index{},slow,phi1\n", state_columns(dom.dim()));
        for (i, p) in phi.iter().enumerate() {
            let x = dom.state(i);
            let s: f64 = x.iter().zip(w).map(|(a, b)| *a as f64 * b).sum();
            out += &format!("{i}{},{s},{p:e}\n", state_fields(&x));
        }
        ws.write("correlation.csv", out.as_bytes())?;
    }

    ws.write("partition_raw.csv", partition_csv(&raw, dom).as_bytes())?;
    ws.write("partition_denoised.csv", partition_csv(&denoised, dom).as_bytes())?;
    ws.write("partition.csv", partition_csv(&fin, dom).as_bytes())?;
    let mut out = String::from("partition,bin,count\n");
    for (name, p) in [("raw", &raw), ("denoised", &denoised), ("final", &fin)] {
        for (b, c) in p.cardinalities().iter().enumerate() {
            out += &format!("{name},{b},{c}\n");
        }
    }
    ws.write("cardinalities.csv", out.as_bytes())?;
    let summary = BinningSummary {
        k,
        band,
        bins_raw: raw.len(),
        bins_denoised: denoised.len(),
        bins_final: fin.len(),
        theta_raw: raw.theta,
        theta_denoised: denoised.theta,
        theta_final: fin.theta,
    };
    ws.write_json("binning.json", &summary)?;
    Ok(format!(
        "k = {k}, Θ {} → {} after denoising, {} bins after truncating a band of {band}",
        raw.theta, denoised.theta, fin.len()
    ))
}

fn conditional(sys: &System, ws: &mut Workspace) -> Result<String> {
    let partition = load_partition(ws)?;
    let classes = classify_reactions(&sys.network, &partition, &sys.domain);
    let conds = bin_conditionals(&sys.network, &partition, &sys.domain, &classes.fast)?;
    ws.write_json("classes.json", &classes)?;
    let mut out = format!("bin_id,state_index{},prob\n", state_columns(sys.domain.dim()));
    for (b, c) in conds.iter().enumerate() {
        for (x, p) in c.support.iter().zip(&c.probs) {
            out += &format!("{b},{}{},{p:e}\n", sys.domain.index(x)?, state_fields(x));
        }
    }
    ws.write("conditionals.csv", out.as_bytes())?;
    let names = |v: &[usize]| v.iter().map(|j| format!("R{}", j + 1)).collect::<Vec<_>>().join(" ");
    Ok(format!("fast {{{}}}, slow {{{}}}", names(&classes.fast), names(&classes.slow)))
}

fn load_conditionals(ws: &mut Workspace, domain: &LatticeDomain, bins: usize) -> Result<Vec<ConditionalDistribution>> {
    let csv = ws.read_csv("conditionals.csv", "conditional")?;
    let (bi, si, pi) = (csv.column("bin_id")?, csv.column("state_index")?, csv.column("prob")?);
    let mut out: Vec<ConditionalDistribution> = (0..bins)
        .map(|b| ConditionalDistribution { s: b as f64, support: Vec::new(), probs: Vec::new() })
        .collect();
    for r in 0..csv.len() {
        let b: usize = csv.get(r, bi)?;
        let cond = out
            .get_mut(b)
            .ok_or_else(|| Error::Numerical(format!("conditionals.csv names bin {b} of {bins}")))?;
        cond.support.push(domain.state(csv.get(r, si)?));
        cond.probs.push(csv.get(r, pi)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChainSummary {
    bins: usize,
    balance_residual: f64,
    global_balance: f64,
}

fn stationary(sys: &System, ws: &mut Workspace) -> Result<String> {
    let partition = load_partition(ws)?;
    let conds = load_conditionals(ws, &sys.domain, partition.len())?;
    let (theta1, theta2) = aggregate_rates(&sys.network, &partition, &conds, &sys.domain)?;
    let chain = SlowChain::from_rates(theta1, theta2)?;
    let mut buf = Vec::new();
    chain.write_rates_csv(&mut buf, None)?;
    ws.write("rates.csv", &buf)?;
    let mut buf = Vec::new();
    write_pi_csv(&mut buf, &chain.pi, None)?;
    ws.write("pi.csv", &buf)?;
    let summary = ChainSummary {
        bins: chain.pi.len(),
        balance_residual: balance_residual(&chain.theta1, &chain.theta2, &chain.pi),
        global_balance: global_balance(&chain.theta1, &chain.theta2, &chain.pi),
    };
    ws.write_json("chain.json", &summary)?;
    Ok(format!("π over {} bins, balance residual {:.1e}", summary.bins, summary.balance_residual))
}

/// Median CMA error per `L_c` over the seeds of one sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaSummary {
    pub lcs: Vec<usize>,
    pub median_error: Vec<f64>,
    pub seeds: Vec<u64>,
    pub levels: usize,
    pub runtime_s: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => values[n / 2],
        _ => 0.5 * (values[n / 2 - 1] + values[n / 2]),
    }
}

fn cma(cfg: &PipelineConfig, sys: &System, ws: &mut Workspace) -> Result<String> {
    let start = Instant::now();
    let truth = ground_truth(sys.truth, &sys.network, &sys.domain)?;
    let reference = truth.marginal_by_level();
    let seeds: Vec<u64> = (0..cfg.cma_seeds as u64).map(|r| cfg.seed + r).collect();
    let mut pi_out = String::from("seed,Lc,s,theta1,theta2,pi,pi_kde\n");
    let mut err_out = String::from("seed,Lc,error\n");
    let mut errors: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &seed in &seeds {
        for est in cma_baseline(&sys.network, &sys.domain, &truth.levels, &cfg.lcs, seed, STREAM_CMA)? {
            let smooth = smooth_kde(&est.levels, &est.pi);
            for (t, &s) in est.levels.iter().enumerate() {
                pi_out += &format!(
                    "{seed},{},{s},{:e},{:e},{:e},{:e}\n",
                    est.lc, est.theta1[t], est.theta2[t], est.pi[t], smooth[t]
                );
            }
            let keyed: Vec<(i64, f64)> =
                reference.iter().map(|&(key, _)| key).zip(est.pi.iter().copied()).collect();
            let e = l1_error(&keyed, &reference);
            err_out += &format!("{seed},{},{e:e}\n", est.lc);
            errors.entry(est.lc).or_default().push(e);
        }
    }
    ws.write("cma_pi.csv", pi_out.as_bytes())?;
    ws.write("cma_errors.csv", err_out.as_bytes())?;
    let (lcs, median_error): (Vec<usize>, Vec<f64>) =
        errors.into_iter().map(|(lc, mut e)| (lc, median(&mut e))).unzip();
    let summary = CmaSummary {
        lcs,
        median_error,
        seeds,
        levels: truth.levels.len(),
        runtime_s: start.elapsed().as_secs_f64(),
    };
    ws.write_json("cma.json", &summary)?;
    let rows: Vec<String> = summary.lcs.iter().zip(&summary.median_error).map(|(l, e)| format!("{l}: {e:.4}")).collect();
    Ok(format!("median L¹ error by L_c {{{}}}", rows.join(", ")))
}

const DISCOVERY_STAGES: [&str; 6] = ["covariance", "graph", "spectrum", "bin", "conditional", "stationary"];

fn evaluate(sys: &System, ws: &mut Workspace) -> Result<String> {
    let partition = load_partition(ws)?;
    let pi = ws.read_csv("pi.csv", "stationary")?.floats("pi")?;
    if pi.len() != partition.len() {
        return Err(Error::Numerical("pi.csv and partition.csv disagree on the bin count".into()));
    }
    let dom = &sys.domain;
    let truth = ground_truth(sys.truth, &sys.network, dom)?;
    let a = assess(&sys.network, dom, &partition, &pi, &truth)?;

    let mut out = String::from("s,prob\n");
    for (s, p) in truth.levels.iter().zip(&truth.marginal) {
        out += &format!("{s},{p:e}\n");
    }
    ws.write("ground_truth.csv", out.as_bytes())?;
    let j = jaccard_matrix(&a.truth_partition, &partition, dom.len());
    let mut out = String::from("true_bin,s,est_bin,jaccard\n");
    for (t, row) in j.iter().enumerate() {
        for (e, &v) in row.iter().enumerate().filter(|(_, v)| **v > 0.0) {
            out += &format!("{t},{},{e},{v:e}\n", a.truth_levels[t]);
        }
    }
    ws.write("jaccard.csv", out.as_bytes())?;
    let mut out = String::from("true_bin,s,est_bin,jaccard\n");
    for (&(t, e), v) in a.score.matching.pairs.iter().zip(&a.score.matched_jaccard) {
        out += &format!("{t},{},{e},{v:e}\n", a.truth_levels[t]);
    }
    ws.write("matching.csv", out.as_bytes())?;

    let manifest = ws.load_manifest()?;
    let runtime_s = DISCOVERY_STAGES
        .iter()
        .filter_map(|s| manifest.stages.get(*s))
        .map(|r| r.runtime_s)
        .sum();
    let mut reports = vec![Report {
        system: sys.name.clone(),
        method: "ADM-CLE".into(),
        lc: None,
        error: a.error,
        theta: Some(partition.theta),
        bin_count: partition.len(),
        jaccard_mean: Some(a.score.jaccard_mean),
        abs_order_corr: Some(a.score.order_corr.abs()),
        runtime_s,
    }];
    if ws.exists("cma.json") {
        let cma: CmaSummary = ws.read_json("cma.json", "cma")?;
        let per_lc = cma.runtime_s / cma.lcs.len().max(1) as f64;
        reports.extend(cma.lcs.iter().zip(&cma.median_error).map(|(&lc, &error)| Report {
            system: sys.name.clone(),
            method: "CMA".into(),
            lc: Some(lc),
            error,
            theta: None,
            bin_count: cma.levels,
            jaccard_mean: None,
            abs_order_corr: None,
            runtime_s: per_lc,
        }));
    }
    ws.write_json("report.json", &reports)?;
    let exact = a.score.matched_jaccard.iter().filter(|&&v| v == 1.0).count();
    Ok(format!(
        "L¹ error {:.6}, {exact}/{} matched bins exact, mean Jaccard {:.4}",
        a.error,
        a.score.matched_jaccard.len(),
        a.score.jaccard_mean
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_graph(n: usize, edges: &[(usize, usize, f64)]) -> SparseSimilarity {
        let t = edges.iter().flat_map(|&(i, j, w)| [(i, j, w), (j, i, w)]).collect();
        let weights = CsrMatrix::from_triplets(n, n, t);
        let degrees = weights.row_sums();
        SparseSimilarity { weights, degrees, eps: 1.0, rho: 2.0 }
    }

    #[test]
    fn stage_names_round_trip() {
        for st in Stage::PIPELINE.into_iter().chain([Stage::All]) {
            assert_eq!(st.name().parse::<Stage>().unwrap(), st);
        }
        assert!(matches!("plot".parse::<Stage>(), Err(Error::Config(_))));
    }

    #[test]
    fn graph_codec_round_trip() {
        let g = small_graph(4, &[(0, 1, 0.5), (1, 2, 1.0), (2, 3, 0.25)]);
        let back = decode_graph(&encode_graph(&g)).unwrap();
        assert_eq!(back.weights, g.weights);
        assert_eq!(back.degrees, g.degrees);
        let bytes = encode_graph(&g);
        assert!(decode_graph(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = PipelineConfig::default();
        let b = PipelineConfig { out_dir: "elsewhere".into(), workers: Some(2), ..a.clone() };
        assert_eq!(config_hash(&a), config_hash(&b));
        let c = PipelineConfig { seed: 2, ..a.clone() };
        assert_ne!(config_hash(&a), config_hash(&c));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0]), 2.5);
    }
}
