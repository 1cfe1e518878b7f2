//! Leading nontrivial eigenpairs of the random-walk Laplacian `L = D⁻¹W`.
//!
//! The solver works on the similar symmetric operator `S = D^{-1/2} W D^{-1/2}`
//! with the trivial eigenvector `D^{1/2}·1` projected out of every iterate,
//! using thick-restart Lanczos with full reorthogonalisation. Eigenvectors
//! are mapped back by `D^{-1/2}`, so they have unit norm in the
//! degree-weighted inner product.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::admgraph::Laplacian;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2, scale};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 100_000;

#[derive(Debug, Clone, Serialize)]
pub struct EigenResult {
    /// Nonincreasing, all below one.
    pub values: Vec<f64>,
    /// `vectors[k]` has length `N` and satisfies `Φᵀ D Φ = 1`.
    pub vectors: Vec<Vec<f64>>,
    /// `‖L Φ − λ Φ‖₂`
    pub residuals: Vec<f64>,
    /// Operator applications used.
    pub matvecs: usize,
}

impl EigenResult {
    /// Diffusion-map coordinates `(Φ1(i), …, Φd(i))` of node `i`.
    pub fn embedding(&self, i: usize) -> Vec<f64> {
        self.vectors.iter().map(|v| v[i]).collect()
    }
}

/// Knobs for [`top_eigenpairs_with`].
#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Krylov basis size before a restart; `None` picks from `d`.
    pub basis: Option<usize>,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iters: DEFAULT_MAX_ITERS, basis: None, seed: 0x5eed }
    }
}

pub fn top_eigenpairs(lap: &Laplacian, d: usize, tol: f64, max_iters: usize) -> Result<EigenResult> {
    top_eigenpairs_with(lap, d, LanczosOptions { tol, max_iters, ..Default::default() })
}

/// `d` largest eigenvalues of `L` below the trivial one, with eigenvectors.
pub fn top_eigenpairs_with(lap: &Laplacian, d: usize, opts: LanczosOptions) -> Result<EigenResult> {
    let n = lap.len();
    if d == 0 {
        return Err(Error::Domain("need at least one eigenpair".into()));
    }
    if d >= n {
        return Err(Error::Domain(format!("asked for {d} nontrivial eigenpairs of a {n}-node graph")));
    }
    let sqrt_d: Vec<f64> = lap.degrees.iter().map(|v| v.sqrt()).collect();
    let total: f64 = lap.degrees.iter().sum();
    let trivial: Vec<f64> = sqrt_d.iter().map(|v| v / total.sqrt()).collect();
    // residual of L is at most max D^{-1/2} times the symmetric residual
    let inv_sqrt_max = sqrt_d.iter().fold(0.0f64, |m, v| m.max(1.0 / v));
    let sym_tol = opts.tol / inv_sqrt_max.max(1.0);

    let dim = n - 1;
    let m = opts.basis.unwrap_or((2 * d + 30).max(60)).min(dim).max(d + 1);
    let keep = (d + (m - d) / 2).min(m - 1).max(d);

    let apply = |x: &[f64], y: &mut [f64]| {
        lap.symmetric.matvec_into(x, y);
        let c = dot(&trivial, y);
        axpy(-c, &trivial, y);
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let start: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    basis.push(orthonormalize(start, &trivial, &[]).ok_or_else(|| Error::Numerical("degenerate start vector".into()))?);

    let mut h = DMatrix::<f64>::zeros(m, m);
    let mut kept = 0usize;
    let mut matvecs = 0usize;
    let mut w = vec![0.0; n];

    loop {
        // extend the basis from `kept` to `m` vectors
        let mut beta = 0.0;
        let mut j = kept;
        while j < m {
            apply(&basis[j], &mut w);
            matvecs += 1;
            let mut coeffs = vec![0.0; j + 1];
            for pass in 0..2 {
                for (i, v) in basis.iter().enumerate().take(j + 1) {
                    let c = dot(v, &w);
                    if pass == 0 || c.abs() > 0.0 {
                        axpy(-c, v, &mut w);
                        coeffs[i] += c;
                    }
                }
                let c = dot(&trivial, &w);
                axpy(-c, &trivial, &mut w);
            }
            for (i, c) in coeffs.iter().enumerate() {
                h[(i, j)] = *c;
                h[(j, i)] = *c;
            }
            beta = norm2(&w);
            let next = if beta > 1e-13 {
                let mut v = w.clone();
                scale(1.0 / beta, &mut v);
                Some(v)
            } else {
                // invariant subspace: continue with a fresh direction
                beta = 0.0;
                let fresh: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
                orthonormalize(fresh, &trivial, &basis)
            };
            match next {
                Some(v) => {
                    if j + 1 < m {
                        h[(j + 1, j)] = beta;
                        h[(j, j + 1)] = beta;
                    }
                    basis.push(v);
                }
                None => {
                    // whole space exhausted; the projection is exact
                    let size = basis.len();
                    let hsub = h.view((0, 0), (size, size)).into_owned();
                    return finish(lap, &basis, &hsub, d, matvecs, opts.tol);
                }
            }
            j += 1;
        }

        let eig = h.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let worst = order[..d]
            .iter()
            .map(|&k| (beta * eig.eigenvectors[(m - 1, k)]).abs())
            .fold(0.0f64, f64::max);
        if worst <= sym_tol * 0.5 || matvecs >= opts.max_iters {
            let ritz = ritz_vectors(&basis[..m], &eig.eigenvectors, &order[..d]);
            let vals: Vec<f64> = order[..d].iter().map(|&k| eig.eigenvalues[k]).collect();
            let result = assemble(lap, ritz, vals, matvecs);
            let max_res = result.residuals.iter().fold(0.0f64, |a, &b| a.max(b));
            if max_res <= opts.tol {
                return Ok(result);
            }
            if matvecs >= opts.max_iters {
                return Err(Error::NoConvergence { iters: matvecs, residual: max_res });
            }
        }

        // thick restart: keep the leading Ritz vectors plus the residual direction
        let chosen = &order[..keep];
        let mut new_basis = ritz_vectors(&basis[..m], &eig.eigenvectors, chosen);
        let residual_dir = basis.pop().expect("basis has m + 1 vectors");
        let mut hn = DMatrix::<f64>::zeros(m, m);
        for (i, &k) in chosen.iter().enumerate() {
            hn[(i, i)] = eig.eigenvalues[k];
        }
        new_basis.push(residual_dir);
        basis = new_basis;
        h = hn;
        kept = keep;
    }
}

fn finish(lap: &Laplacian, basis: &[Vec<f64>], h: &DMatrix<f64>, d: usize, matvecs: usize, tol: f64) -> Result<EigenResult> {
    let size = h.nrows();
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let ritz = ritz_vectors(&basis[..size], &eig.eigenvectors, &order[..d]);
    let vals = order[..d].iter().map(|&k| eig.eigenvalues[k]).collect();
    let result = assemble(lap, ritz, vals, matvecs);
    let max_res = result.residuals.iter().fold(0.0f64, |a, &b| a.max(b));
    if max_res > tol {
        return Err(Error::NoConvergence { iters: matvecs, residual: max_res });
    }
    Ok(result)
}

fn orthonormalize(mut v: Vec<f64>, trivial: &[f64], basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    for _ in 0..2 {
        let c = dot(trivial, &v);
        axpy(-c, trivial, &mut v);
        for b in basis {
            let c = dot(b, &v);
            axpy(-c, b, &mut v);
        }
    }
    let nrm = norm2(&v);
    if nrm < 1e-10 {
        return None;
    }
    scale(1.0 / nrm, &mut v);
    Some(v)
}

fn ritz_vectors(basis: &[Vec<f64>], y: &DMatrix<f64>, cols: &[usize]) -> Vec<Vec<f64>> {
    let n = basis[0].len();
    cols.iter()
        .map(|&k| {
            let mut out = vec![0.0; n];
            for (i, v) in basis.iter().enumerate() {
                let c = y[(i, k)];
                if c != 0.0 {
                    axpy(c, v, &mut out);
                }
            }
            out
        })
        .collect()
}

fn assemble(lap: &Laplacian, ritz: Vec<Vec<f64>>, values: Vec<f64>, matvecs: usize) -> EigenResult {
    let mut vectors = Vec::with_capacity(ritz.len());
    let mut residuals = Vec::with_capacity(ritz.len());
    for y in ritz {
        let nrm = norm2(&y);
        let mut phi: Vec<f64> = y.iter().zip(&lap.degrees).map(|(v, d)| v / nrm / d.sqrt()).collect();
        fix_sign(&mut phi);
        vectors.push(phi);
    }
    let mut values = values;
    for (phi, lam) in vectors.iter().zip(values.iter_mut()) {
        // Rayleigh quotient in the degree inner product
        let lphi = lap.random_walk.matvec(phi);
        let num: f64 = lphi.iter().zip(phi).zip(&lap.degrees).map(|((a, b), d)| a * b * d).sum();
        let den: f64 = phi.iter().zip(&lap.degrees).map(|(a, d)| a * a * d).sum();
        *lam = num / den;
        let r: f64 = lphi.iter().zip(phi).map(|(a, b)| (a - *lam * b).powi(2)).sum::<f64>().sqrt();
        residuals.push(r);
    }
    EigenResult { values, vectors, residuals, matvecs }
}

/// Flips `v` so its largest-magnitude entry (first on ties) is positive.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// The `k` smallest values of `1 − λ_i`, starting with the trivial zero.
pub fn combinatorial_spectrum(lap: &Laplacian, k: usize, opts: LanczosOptions) -> Result<Vec<f64>> {
    let n = lap.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    if k > n {
        return Err(Error::Domain(format!("asked for {k} eigenvalues of a {n}-node graph")));
    }
    let mut out = vec![0.0];
    if k == 1 {
        return Ok(out);
    }
    let d = k - 1;
    let values = if n <= 400 || d + 1 >= n {
        dense_eigenvalues(lap).into_iter().skip(1).take(d).collect::<Vec<_>>()
    } else {
        let basis = opts.basis.unwrap_or((2 * d + 40).min(n - 1));
        top_eigenpairs_with(lap, d, LanczosOptions { basis: Some(basis), ..opts })?.values
    };
    out.extend(values.iter().map(|l| (1.0 - l).clamp(0.0, 2.0)));
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// All eigenvalues of `L`, descending, via a dense symmetric solve.
pub fn dense_eigenvalues(lap: &Laplacian) -> Vec<f64> {
    let n = lap.len();
    let dense = DMatrix::from_fn(n, n, |r, c| lap.symmetric.get(r, c));
    let mut vals: Vec<f64> = dense.symmetric_eigen().eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    vals
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admgraph::laplacian;
    use crate::admgraph::SparseSimilarity;
    use crate::linalg::CsrMatrix;

    pub(crate) fn graph(n: usize, edges: &[(usize, usize, f64)]) -> SparseSimilarity {
        let mut t = Vec::new();
        for &(i, j, w) in edges {
            t.push((i, j, w));
            t.push((j, i, w));
        }
        let weights = CsrMatrix::from_triplets(n, n, t);
        let degrees = weights.row_sums();
        SparseSimilarity { weights, degrees, eps: 1.0, rho: 1.0 }
    }

    #[test]
    fn path_of_three() {
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let lap = laplacian(&g).unwrap();
        let r = top_eigenpairs(&lap, 1, 1e-12, 10_000).unwrap();
        // D⁻¹W = [[0,1,0],[½,0,½],[0,1,0]] has spectrum {1, 0, −1}; the
        // eigenvalue 0 belongs to (1, 0, −1)
        assert!(r.values[0].abs() < 1e-12, "{:?}", r.values);
        let v = &r.vectors[0];
        assert!(v[1].abs() < 1e-12);
        assert!((v[0] + v[2]).abs() < 1e-12);
        assert!(v[0].abs() > 0.1);
        assert!(r.residuals[0] <= 1e-12);
    }

    #[test]
    fn two_clusters_weak_link() {
        let g = graph(4, &[(0, 1, 1.0), (2, 3, 1.0), (1, 2, 1e-6)]);
        let lap = laplacian(&g).unwrap();
        let r = top_eigenpairs(&lap, 1, 1e-10, 10_000).unwrap();
        assert!(r.values[0] >= 1.0 - 1e-5 && r.values[0] < 1.0);
        let v = &r.vectors[0];
        assert!(v[0] * v[2] < 0.0 && v[0] * v[1] > 0.0 && v[2] * v[3] > 0.0);
    }

    #[test]
    fn sign_convention() {
        let mut v = vec![0.1, -0.9, 0.3];
        fix_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
    }
}
