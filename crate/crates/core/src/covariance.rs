//! Local covariance of the Langevin increment, `Σ_ik = Δt Σ_j ν_ji ν_jk α_j(x)`,
//! its eigendecomposition and the anisotropy ratio.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{LatticeDomain, ReactionNetwork};

/// Eigenvalues below this fraction of the largest are treated as zero.
const PINV_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalCovariance {
    dim: usize,
    /// Row-major `ℓ×ℓ`.
    pub sigma: Vec<f64>,
    /// Inverse, or pseudo-inverse when `singular`.
    pub inverse: Vec<f64>,
    /// Descending.
    pub eigvals: Vec<f64>,
    /// Column `k` (stored row-major, `eigvecs[i*ℓ + k]`) belongs to `eigvals[k]`.
    pub eigvecs: Vec<f64>,
    /// Smallest over largest eigenvalue.
    pub tau: f64,
    pub singular: bool,
}

impl LocalCovariance {
    pub fn from_matrix(dim: usize, sigma: Vec<f64>) -> Self {
        assert_eq!(sigma.len(), dim * dim);
        let (eigvals, eigvecs) = eig_sym(dim, &sigma);
        let lmax = eigvals[0];
        let lmin = eigvals[dim - 1];
        let tau = if lmax > 0.0 { (lmin / lmax).max(0.0) } else { 0.0 };
        let cutoff = PINV_RTOL * lmax.max(0.0);
        let singular = lmax <= 0.0 || lmin <= cutoff;
        let mut inverse = vec![0.0; dim * dim];
        for (k, &lam) in eigvals.iter().enumerate() {
            if lam <= cutoff || lam <= 0.0 {
                continue;
            }
            for i in 0..dim {
                for j in 0..dim {
                    inverse[i * dim + j] += eigvecs[i * dim + k] * eigvecs[j * dim + k] / lam;
                }
            }
        }
        Self { dim, sigma, inverse, eigvals, eigvecs, tau, singular }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigvals[0]
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigvals[self.dim - 1]
    }

    /// Eigenvector `k` as an owned vector.
    pub fn eigvec(&self, k: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.eigvecs[i * self.dim + k]).collect()
    }

    /// Same covariance at a different step: `Σ(cΔt) = c Σ(Δt)`.
    pub fn scaled(&self, c: f64) -> Self {
        Self::from_matrix(self.dim, self.sigma.iter().map(|v| v * c).collect())
    }

    /// `yᵀ Σ⁻¹ y`
    pub fn mahalanobis2(&self, y: &[f64]) -> f64 {
        quad_form(&self.inverse, y)
    }
}

#[inline]
pub(crate) fn quad_form(m: &[f64], y: &[f64]) -> f64 {
    let d = y.len();
    let mut acc = 0.0;
    for i in 0..d {
        let mut row = 0.0;
        for j in 0..d {
            row += m[i * d + j] * y[j];
        }
        acc += y[i] * row;
    }
    acc
}

/// Covariance of one Euler–Maruyama Langevin step from `x` of length `dt`.
pub fn local_covariance(net: &ReactionNetwork, x: &[i64], dt: f64) -> Result<LocalCovariance> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("Δt must be positive, got {dt}")));
    }
    let alpha = net.propensities(x)?;
    Ok(LocalCovariance::from_matrix(net.num_species(), covariance_matrix(net, &alpha, dt)))
}

fn covariance_matrix(net: &ReactionNetwork, alpha: &[f64], dt: f64) -> Vec<f64> {
    let l = net.num_species();
    let mut sigma = vec![0.0; l * l];
    for (j, a) in alpha.iter().enumerate() {
        let nu = net.stoich(j);
        for i in 0..l {
            if nu[i] == 0 {
                continue;
            }
            for k in 0..l {
                sigma[i * l + k] += dt * (nu[i] * nu[k]) as f64 * a;
            }
        }
    }
    sigma
}

/// Symmetric eigendecomposition, eigenvalues descending.
///
/// Closed form for `2×2`; `nalgebra` otherwise. Eigenvectors are returned
/// row-major with column `k` belonging to eigenvalue `k`, signs fixed so
/// the largest-magnitude component is positive.
pub fn eig_sym(dim: usize, sigma: &[f64]) -> (Vec<f64>, Vec<f64>) {
    if dim == 1 {
        return (vec![sigma[0]], vec![1.0]);
    }
    if dim == 2 {
        return eig_sym2(sigma[0], 0.5 * (sigma[1] + sigma[2]), sigma[3]);
    }
    let m = DMatrix::from_row_slice(dim, dim, sigma);
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = vec![0.0; dim * dim];
    for (new_k, &k) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(k);
        let sign = sign_of_largest(col.iter().copied());
        for i in 0..dim {
            vecs[i * dim + new_k] = sign * col[i];
        }
    }
    (vals, vecs)
}

fn sign_of_largest<I: Iterator<Item = f64>>(it: I) -> f64 {
    let mut best = 0.0f64;
    for v in it {
        if v.abs() > best.abs() + 1e-15 {
            best = v;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn eig_sym2(a: f64, b: f64, c: f64) -> (Vec<f64>, Vec<f64>) {
    let mean = 0.5 * (a + c);
    let radius = (0.5 * (a - c)).hypot(b);
    let l1 = mean + radius;
    // product form keeps the small eigenvalue accurate when l1 ≫ l2
    let det = a * c - b * b;
    let l2 = if l1.abs() > 0.0 && radius > 0.25 * mean.abs() { det / l1 } else { mean - radius };
    let (mut vx, mut vy) = if b == 0.0 {
        if a >= c {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        }
    } else {
        let p = (l1 - c, b);
        let q = (b, l1 - a);
        if p.0.hypot(p.1) >= q.0.hypot(q.1) {
            p
        } else {
            q
        }
    };
    let n = vx.hypot(vy);
    vx /= n;
    vy /= n;
    if sign_of_largest([vx, vy].into_iter()) < 0.0 {
        vx = -vx;
        vy = -vy;
    }
    let (mut wx, mut wy) = (-vy, vx);
    if sign_of_largest([wx, wy].into_iter()) < 0.0 {
        wx = -wx;
        wy = -wy;
    }
    (vec![l1, l2], vec![vx, wx, vy, wy])
}

/// Covariances at every lattice point, in node-index order.
pub fn domain_covariances(net: &ReactionNetwork, domain: &LatticeDomain, dt: f64) -> Result<Vec<LocalCovariance>> {
    (0..domain.len())
        .into_par_iter()
        .map(|i| local_covariance(net, &domain.state(i), dt))
        .collect()
}

/// Step `Δt` making the median over the domain of `λ_min(Σ(x, Δt))` equal to one.
pub fn calibrate_dt(net: &ReactionNetwork, domain: &LatticeDomain) -> Result<f64> {
    if domain.is_empty() {
        return Err(Error::Calibration("empty domain".into()));
    }
    let mut lmins: Vec<f64> = domain_covariances(net, domain, 1.0)?
        .iter()
        .map(LocalCovariance::lambda_min)
        .collect();
    lmins.sort_by(f64::total_cmp);
    let n = lmins.len();
    let median = if n % 2 == 1 { lmins[n / 2] } else { 0.5 * (lmins[n / 2 - 1] + lmins[n / 2]) };
    if !(median > 0.0) {
        return Err(Error::Calibration("median smallest covariance eigenvalue is zero".into()));
    }
    Ok(1.0 / median)
}

/// Sample covariance of a set of equally long vectors.
pub fn empirical_covariance(samples: &[Vec<f64>]) -> Vec<f64> {
    let n = samples.len();
    let d = samples.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n as f64;
        }
    }
    let mut cov = vec![0.0; d * d];
    for s in samples {
        for i in 0..d {
            for k in 0..d {
                cov[i * d + k] += (s[i] - mean[i]) * (s[k] - mean[k]);
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    cov.iter_mut().for_each(|c| *c /= denom);
    cov
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{builtin_cs1, builtin_cs2, Reaction, RateLaw, VolumeScaling};

    #[test]
    fn cs1_center_covariance() {
        let (net, _) = builtin_cs1();
        let c = local_covariance(&net, &[100, 100], 1.0).unwrap();
        assert_eq!(c.sigma, vec![40100.0, -40000.0, -40000.0, 40100.0]);
        assert!((c.eigvals[0] - 80100.0).abs() < 1e-9);
        assert!((c.eigvals[1] - 100.0).abs() < 1e-9);
        assert!((c.tau - 100.0 / 80100.0).abs() < 1e-15);
        let fast = c.eigvec(0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((fast[0].abs() - h).abs() < 1e-12 && (fast[0] + fast[1]).abs() < 1e-12);
    }

    #[test]
    fn identity_eigen() {
        let c = LocalCovariance::from_matrix(2, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(c.eigvals, vec![1.0, 1.0]);
        assert_eq!(c.tau, 1.0);
        assert!(!c.singular);
    }

    #[test]
    fn zero_rates_are_singular() {
        let r = vec![
            Reaction::new(vec![1, 0], RateLaw::Constant, 0.0).unwrap(),
            Reaction::new(vec![-1, 1], RateLaw::Linear(0), 0.0).unwrap(),
        ];
        let net = ReactionNetwork::new(vec!["A".into(), "B".into()], r, 1.0, VolumeScaling::Stated, None).unwrap();
        let c = local_covariance(&net, &[3, 3], 1.0).unwrap();
        assert!(c.sigma.iter().all(|&v| v == 0.0));
        assert!(c.singular);
        assert!(c.inverse.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inverse_and_reconstruction() {
        let (net, dom) = builtin_cs2();
        for i in (0..dom.len()).step_by(97) {
            let c = local_covariance(&net, &dom.state(i), 0.37).unwrap();
            let norm = c.sigma.iter().map(|v| v * v).sum::<f64>().sqrt();
            // E Λ Eᵀ
            for r in 0..2 {
                for s in 0..2 {
                    let rec: f64 = (0..2).map(|k| c.eigvecs[r * 2 + k] * c.eigvals[k] * c.eigvecs[s * 2 + k]).sum();
                    assert!((rec - c.sigma[r * 2 + s]).abs() <= 1e-10 * norm);
                    let prod: f64 = (0..2).map(|k| c.sigma[r * 2 + k] * c.inverse[k * 2 + s]).sum();
                    let id = if r == s { 1.0 } else { 0.0 };
                    assert!((prod - id).abs() < 1e-9, "Σ Σ⁻¹ at {i}: {prod}");
                }
            }
            let dotp: f64 = (0..2).map(|k| c.eigvecs[k * 2] * c.eigvecs[k * 2 + 1]).sum();
            assert!(dotp.abs() < 1e-12);
        }
    }

    #[test]
    fn cs2_fast_direction() {
        let (net, _) = builtin_cs2();
        let c = local_covariance(&net, &[50, 30], 1.0).unwrap();
        let fast = c.eigvec(0);
        let target = [-2.0 / 5f64.sqrt(), 1.0 / 5f64.sqrt()];
        let cos = (fast[0] * target[0] + fast[1] * target[1]).abs();
        assert!(cos > 0.999, "cos = {cos}");
    }

    #[test]
    fn cs1_slow_direction_everywhere() {
        let (net, dom) = builtin_cs1();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for x in dom.states().filter(|x| dom.boundary_distance(x) > 0) {
            let c = local_covariance(&net, &x, 1.0).unwrap();
            let slow = c.eigvec(1);
            let dev = (slow[0].abs() - h).abs().max((slow[1].abs() - h).abs());
            // R1/R4 tilt the slow axis slightly; bounded by their share of the variance
            assert!(dev < 2e-3, "{x:?}: {dev}");
        }
    }

    #[test]
    fn calibration_is_idempotent_and_linear() {
        let (net, dom) = builtin_cs1();
        let dt = calibrate_dt(&net, &dom).unwrap();
        let mut lmins: Vec<f64> = domain_covariances(&net, &dom, dt).unwrap().iter().map(|c| c.lambda_min()).collect();
        lmins.sort_by(f64::total_cmp);
        assert!((lmins[lmins.len() / 2] - 1.0).abs() < 1e-6);
        let again = calibrate_dt(&net.rescaled(dt), &dom).unwrap();
        assert!((again - 1.0).abs() < 1e-9);
        let four = calibrate_dt(&net.rescaled(4.0 * dt), &dom).unwrap();
        assert!((four - 0.25).abs() < 1e-9);
    }
}
