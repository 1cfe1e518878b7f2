//! Sparse anisotropic similarity graph.
//!
//! Every lattice point contributes the lattice points inside its covariance
//! ellipse `(y - x)ᵀ Σ⁻¹ (y - x) ≤ ρ²`; the union of these neighborhoods,
//! symmetrised, is the edge set. Weights use the averaged-inverse distance
//! `d² = ½ Δᵀ (Σ_i⁻¹ + Σ_j⁻¹) Δ` and a Gaussian kernel `exp(-d²/ε²)`.

use rayon::prelude::*;

use crate::covariance::{quad_form, LocalCovariance};
use crate::error::{Error, Result};
use crate::linalg::{compensated_sum, connected_components, CsrMatrix};
use crate::network::LatticeDomain;

/// Symmetric weighted graph in CSR layout, both directions stored.
#[derive(Debug, Clone)]
pub struct SparseSimilarity {
    pub weights: CsrMatrix,
    pub degrees: Vec<f64>,
    pub eps: f64,
    pub rho: f64,
}

impl SparseSimilarity {
    pub fn len(&self) -> usize {
        self.weights.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.weights.nnz() / 2
    }

    /// Iterates `(i, j, w)` over undirected edges with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.len()).flat_map(move |i| {
            let (cols, vals) = self.weights.row(i);
            cols.iter()
                .zip(vals)
                .filter(move |(&j, _)| (j as usize) > i)
                .map(move |(&j, &w)| (i, j as usize, w))
        })
    }
}

/// `½ (xi − xj)ᵀ (Σi⁻¹ + Σj⁻¹) (xi − xj)`
pub fn sigma_distance(xi: &[f64], xj: &[f64], inv_i: &[f64], inv_j: &[f64]) -> f64 {
    let delta: Vec<f64> = xi.iter().zip(xj).map(|(a, b)| a - b).collect();
    0.5 * (quad_form(inv_i, &delta) + quad_form(inv_j, &delta))
}

/// Lattice points `y ≠ x` of the domain inside the ellipse of `cov` scaled by `rho`.
pub fn ellipse_neighborhood(domain: &LatticeDomain, x: &[i64], cov: &LocalCovariance, rho: f64) -> Result<Vec<usize>> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("ellipse scale must be positive, got {rho}")));
    }
    let node = domain.index(x)?;
    let out = neighborhood_unchecked(domain, x, cov, rho);
    if out.is_empty() {
        return Err(Error::IsolatedNode { node });
    }
    Ok(out)
}

fn neighborhood_unchecked(domain: &LatticeDomain, x: &[i64], cov: &LocalCovariance, rho: f64) -> Vec<usize> {
    let d = domain.dim();
    let rho2 = rho * rho;
    let inv = &cov.inverse;
    // the ellipse {yᵀ Σ⁺ y ≤ ρ²} lies in |y_k| ≤ ρ √Σ_kk
    let half: Vec<i64> = (0..d)
        .map(|k| (rho * cov.sigma[k * d + k].max(0.0).sqrt() + 1e-9).floor() as i64)
        .collect();
    let lo: Vec<i64> = (0..d).map(|k| (-half[k]).max(domain.lo()[k] - x[k])).collect();
    let hi: Vec<i64> = (0..d).map(|k| half[k].min(domain.hi()[k] - x[k])).collect();
    if lo.iter().zip(&hi).any(|(a, b)| a > b) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut y = vec![0i64; d];
    let mut yf = vec![0.0f64; d];
    // odometer over axes 1.., quadratic solve along axis 0
    let mut rest: Vec<i64> = lo[1..].to_vec();
    loop {
        for k in 1..d {
            y[k] = rest[k - 1];
            yf[k] = y[k] as f64;
        }
        // Q(y0) = A y0² + 2 B y0 + C
        let a = inv[0];
        let b: f64 = (1..d).map(|k| inv[k] * yf[k]).sum();
        let mut c = 0.0;
        for i in 1..d {
            for j in 1..d {
                c += inv[i * d + j] * yf[i] * yf[j];
            }
        }
        let (r0, r1) = if a > 0.0 {
            let disc = b * b - a * (c - rho2);
            if disc < 0.0 {
                (1, 0)
            } else {
                let s = disc.sqrt();
                (((-b - s) / a - 1e-9).ceil() as i64, ((-b + s) / a + 1e-9).floor() as i64)
            }
        } else if c <= rho2 {
            (lo[0], hi[0])
        } else {
            (1, 0)
        };
        for y0 in r0.max(lo[0])..=r1.min(hi[0]) {
            y[0] = y0;
            yf[0] = y0 as f64;
            if y.iter().all(|&v| v == 0) {
                continue;
            }
            if quad_form(inv, &yf) <= rho2 * (1.0 + 1e-12) {
                let target: Vec<i64> = x.iter().zip(&y).map(|(p, q)| p + q).collect();
                out.push(domain.index_unchecked(&target));
            }
        }
        // advance odometer
        let mut k = 0;
        loop {
            if k == rest.len() {
                return out;
            }
            rest[k] += 1;
            if rest[k] <= hi[k + 1] {
                break;
            }
            rest[k] = lo[k + 1];
            k += 1;
        }
    }
}

/// Builds the symmetrised union-of-ellipses graph with Gaussian weights.
pub fn build_graph(domain: &LatticeDomain, covariances: &[LocalCovariance], rho: f64, eps: f64) -> Result<SparseSimilarity> {
    let n = domain.len();
    if covariances.len() != n {
        return Err(Error::Domain(format!("{} covariances for {n} states", covariances.len())));
    }
    if !(rho > 0.0) || !(eps > 0.0) {
        return Err(Error::Domain("ρ and ε must be positive".into()));
    }
    if n > u32::MAX as usize {
        return Err(Error::Domain("domain too large for 32-bit node indices".into()));
    }
    let neighborhoods: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| neighborhood_unchecked(domain, &domain.state(i), &covariances[i], rho))
        .collect();
    let mut pairs: Vec<u64> = neighborhoods
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, nb)| {
            nb.iter().map(move |&j| {
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                ((a as u64) << 32) | b as u64
            })
        })
        .collect();
    drop(neighborhoods);
    pairs.par_sort_unstable();
    pairs.dedup();

    let inv_eps2 = 1.0 / (eps * eps);
    let states: Vec<Vec<f64>> = (0..n).map(|i| domain.state(i).iter().map(|&v| v as f64).collect()).collect();
    let weights: Vec<f64> = pairs
        .par_iter()
        .map(|&p| {
            let (i, j) = ((p >> 32) as usize, (p & 0xffff_ffff) as usize);
            let d2 = sigma_distance(&states[i], &states[j], &covariances[i].inverse, &covariances[j].inverse);
            (-d2 * inv_eps2).exp().max(f64::MIN_POSITIVE)
        })
        .collect();

    let mut counts = vec![0usize; n + 1];
    for &p in &pairs {
        counts[(p >> 32) as usize + 1] += 1;
        counts[(p & 0xffff_ffff) as usize + 1] += 1;
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let row_ptr = counts.clone();
    let mut fill = counts;
    let mut col = vec![0u32; pairs.len() * 2];
    let mut val = vec![0.0f64; pairs.len() * 2];
    for (&p, &w) in pairs.iter().zip(&weights) {
        let (i, j) = ((p >> 32) as usize, (p & 0xffff_ffff) as usize);
        col[fill[i]] = j as u32;
        val[fill[i]] = w;
        fill[i] += 1;
        col[fill[j]] = i as u32;
        val[fill[j]] = w;
        fill[j] += 1;
    }
    // rows are filled in increasing pair order: lower neighbors first, then upper, both ascending
    let weights = CsrMatrix { nrows: n, ncols: n, row_ptr, col, val };
    debug_assert!((0..n).all(|r| weights.row(r).0.windows(2).all(|w| w[0] < w[1])));

    let (_, sizes) = connected_components(&weights);
    if sizes.len() > 1 {
        return Err(Error::Disconnected { sizes });
    }
    let degrees: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|r| compensated_sum(weights.row(r).1.iter().copied()))
        .collect();
    if let Some(node) = degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::IsolatedNode { node });
    }
    Ok(SparseSimilarity { weights, degrees, eps, rho })
}

/// Random-walk normalisation `L = D⁻¹ W` together with its symmetric
/// counterpart `D^{-1/2} W D^{-1/2}`.
#[derive(Debug, Clone)]
pub struct Laplacian {
    pub degrees: Vec<f64>,
    pub random_walk: CsrMatrix,
    pub symmetric: CsrMatrix,
}

impl Laplacian {
    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }
}

pub fn laplacian(graph: &SparseSimilarity) -> Result<Laplacian> {
    if let Some(node) = graph.degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::IsolatedNode { node });
    }
    let w = &graph.weights;
    let d = &graph.degrees;
    let sqrt_d: Vec<f64> = d.iter().map(|v| v.sqrt()).collect();
    let mut rw = w.clone();
    let mut sym = w.clone();
    for r in 0..w.nrows {
        let (a, b) = (w.row_ptr[r], w.row_ptr[r + 1]);
        for k in a..b {
            let c = w.col[k] as usize;
            rw.val[k] = w.val[k] / d[r];
            sym.val[k] = w.val[k] / (sqrt_d[r] * sqrt_d[c]);
        }
    }
    Ok(Laplacian { degrees: d.clone(), random_walk: rw, symmetric: sym })
}

/// Histogram of weighted degrees with `bins` equal-width bins: `(lower edge, count)`.
pub fn degree_histogram(degrees: &[f64], bins: usize) -> Vec<(f64, usize)> {
    let bins = bins.max(1);
    let lo = degrees.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = degrees.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &d in degrees {
        let b = (((d - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts.into_iter().enumerate().map(|(b, c)| (lo + b as f64 * width, c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iso(dim: usize, diag: &[f64]) -> LocalCovariance {
        let mut m = vec![0.0; dim * dim];
        for k in 0..dim {
            m[k * dim + k] = diag[k];
        }
        LocalCovariance::from_matrix(dim, m)
    }

    #[test]
    fn distance_examples() {
        let id = iso(2, &[1.0, 1.0]);
        assert_eq!(sigma_distance(&[1.0, 1.0], &[1.0, 1.0], &id.inverse, &id.inverse), 0.0);
        assert!((sigma_distance(&[0.0, 0.0], &[3.0, 4.0], &id.inverse, &id.inverse) - 25.0).abs() < 1e-12);
        let c = iso(2, &[2.0, 1.0]);
        assert!((sigma_distance(&[0.0, 0.0], &[2.0, 0.0], &c.inverse, &c.inverse) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unit_circle_is_von_neumann() {
        let dom = LatticeDomain::square(0, 20).unwrap();
        let mut nb = ellipse_neighborhood(&dom, &[10, 10], &iso(2, &[1.0, 1.0]), 1.0).unwrap();
        nb.sort();
        let mut want: Vec<usize> = [[9, 10], [11, 10], [10, 9], [10, 11]]
            .iter()
            .map(|x| dom.index(x).unwrap())
            .collect();
        want.sort();
        assert_eq!(nb, want);
    }

    #[test]
    fn elongated_ellipse() {
        let dom = LatticeDomain::square(0, 40).unwrap();
        let nb = ellipse_neighborhood(&dom, &[20, 20], &iso(2, &[100.0, 1.0]), 1.0).unwrap();
        assert_eq!(nb.len(), 22);
        for i in nb {
            let y = dom.state(i);
            let (dx, dy) = (y[0] - 20, y[1] - 20);
            assert!((dy == 0 && (1..=10).contains(&dx.abs())) || (dx == 0 && dy.abs() == 1));
        }
    }

    #[test]
    fn corner_is_clipped() {
        let dom = LatticeDomain::square(0, 40).unwrap();
        let nb = ellipse_neighborhood(&dom, &[0, 0], &iso(2, &[100.0, 4.0]), 1.0).unwrap();
        assert!(nb.iter().all(|&i| i < dom.len()));
        // x²/100 + y²/4 ≤ 1 in the first quadrant: 10 + 9 + 1 points
        assert_eq!(nb.len(), 20);
    }

    #[test]
    fn two_state_graph() {
        let dom = LatticeDomain::new(vec![0, 0], vec![1, 0]).unwrap();
        let c = iso(2, &[4.0, 4.0]);
        // zero-distance pair: put the inverse to zero by hand
        let mut z = c.clone();
        z.inverse = vec![0.0; 4];
        let g = build_graph(&dom, &[z.clone(), z], 1.0, 0.1).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.weights.get(0, 1), 1.0);
        let lap = laplacian(&g).unwrap();
        assert_eq!(lap.random_walk.get(0, 1), 1.0);
        assert_eq!(lap.random_walk.get(1, 0), 1.0);
    }

    #[test]
    fn disconnected_graph_is_reported() {
        let dom = LatticeDomain::new(vec![0, 0], vec![3, 0]).unwrap();
        let c = iso(2, &[1.0, 1.0]);
        // ρ = 1 links only unit steps; nodes 1 and 2 see nobody, so 1–2 is never an edge
        let mut covs = vec![c.clone(); 4];
        let tiny = iso(2, &[0.01, 0.01]);
        covs[1] = tiny.clone();
        covs[2] = tiny;
        match build_graph(&dom, &covs, 1.0, 1.0) {
            Err(Error::Disconnected { sizes }) => assert_eq!(sizes, vec![2, 2]),
            other => panic!("expected disconnection, got {other:?}"),
        }
    }

    #[test]
    fn histogram_counts_everything() {
        let h = degree_histogram(&[1.0, 2.0, 2.5, 4.0], 3);
        assert_eq!(h.iter().map(|b| b.1).sum::<usize>(), 4);
        assert_eq!(h[0].0, 1.0);
    }
}
