//! Sparse and banded linear algebra used across the pipeline.
//!
//! Reductions use fixed-size chunks whose partial sums are combined in chunk
//! order, so results do not depend on the rayon worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};

const CHUNK: usize = 4096;

/// Neumaier-compensated sum of an iterator.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let partials: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partials.iter().sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.par_chunks_mut(CHUNK)
        .zip(x.par_chunks(CHUNK))
        .for_each(|(yc, xc)| yc.iter_mut().zip(xc).for_each(|(yi, xi)| *yi += alpha * xi));
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    x.par_chunks_mut(CHUNK).for_each(|c| c.iter_mut().for_each(|v| *v *= alpha));
}

/// Compressed sparse row matrix with `u32` column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<u32>,
    pub val: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from unsorted triplets; duplicate entries are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col = Vec::with_capacity(triplets.len());
        let mut val: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *val.last_mut().expect("non-empty") += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col.push(c as u32);
            val.push(v);
            last = Some((r, c));
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { nrows, ncols, row_ptr, col, val }
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col[a..b], &self.val[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&(c as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`, parallel over rows; each row is summed sequentially.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(r, yr)| {
            let (cols, vals) = self.row(r);
            *yr = cols.iter().zip(vals).map(|(&c, v)| v * x[c as usize]).sum();
        });
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = Aᵀ x`
    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, v) in cols.iter().zip(vals) {
                y[c as usize] += v * x[r];
            }
        }
        y
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows)
            .into_par_iter()
            .map(|r| compensated_sum(self.row(r).1.iter().copied()))
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c as usize] += v;
            }
        }
        out
    }
}

/// Dense band storage for LU factorisation without pivoting.
///
/// Stable for (weakly) column diagonally dominant matrices such as the
/// transposed generator of a continuous-time Markov chain.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    lower: usize,
    upper: usize,
    // row i holds columns i-lower ..= i+upper at offsets 0..=lower+upper
    data: Vec<f64>,
}

impl BandedLu {
    fn width(&self) -> usize {
        self.lower + self.upper + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width() + (j + self.lower - i)]
    }

    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let w = self.width();
        &mut self.data[i * w + (j + self.lower - i)]
    }

    /// Factorises `A + shift·I` given in CSR form.
    pub fn factor(a: &CsrMatrix, shift: f64) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::Numerical("banded LU needs a square matrix".into()));
        }
        let n = a.nrows;
        let (mut lower, mut upper) = (0usize, 0usize);
        for r in 0..n {
            for &c in a.row(r).0 {
                let c = c as usize;
                if c < r {
                    lower = lower.max(r - c);
                } else {
                    upper = upper.max(c - r);
                }
            }
        }
        // fill-in of LU without pivoting stays inside the band
        let mut lu = Self { n, lower, upper, data: vec![0.0; n * (lower + upper + 1)] };
        for r in 0..n {
            let (cols, vals) = a.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                *lu.at_mut(r, c as usize) += v;
            }
            *lu.at_mut(r, r) += shift;
        }
        for k in 0..n {
            let pivot = lu.at(k, k);
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::Numerical(format!("zero pivot at row {k} in banded LU")));
            }
            let row_end = (k + lower).min(n - 1);
            let col_end = (k + upper).min(n - 1);
            for i in k + 1..=row_end {
                let factor = lu.at(i, k) / pivot;
                if factor == 0.0 {
                    continue;
                }
                *lu.at_mut(i, k) = factor;
                for j in k + 1..=col_end {
                    let ukj = lu.at(k, j);
                    *lu.at_mut(i, j) -= factor * ukj;
                }
            }
        }
        Ok(lu)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let start = i.saturating_sub(self.lower);
            let mut s = x[i];
            for j in start..i {
                s -= self.at(i, j) * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let end = (i + self.upper).min(n - 1);
            let mut s = x[i];
            for j in i + 1..=end {
                s -= self.at(i, j) * x[j];
            }
            x[i] = s / self.at(i, i);
        }
        x
    }
}

/// Connected components of an undirected graph given by CSR adjacency.
/// Returns the component label of every node and the component sizes.
pub fn connected_components(adj: &CsrMatrix) -> (Vec<usize>, Vec<usize>) {
    let n = adj.nrows;
    let mut label = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        label[start] = id;
        stack.push(start);
        while let Some(v) = stack.pop() {
            size += 1;
            for &c in adj.row(v).0 {
                let c = c as usize;
                if label[c] == usize::MAX {
                    label[c] = id;
                    stack.push(c);
                }
            }
        }
        sizes.push(size);
    }
    (label, sizes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let vals = [1.0, 1e-17, 1e-17, -1.0];
        assert!((compensated_sum(vals) - 2e-17).abs() < 1e-30);
    }

    #[test]
    fn csr_sums_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (0, 1, 2.0), (1, 0, 4.0)]);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.matvec(&[1.0, 2.0]), vec![6.0, 4.0]);
        assert_eq!(m.transpose_matvec(&[1.0, 2.0]), vec![8.0, 3.0]);
    }

    #[test]
    fn banded_lu_solves_tridiagonal() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -2.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, t);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = a.matvec(&x_true);
        let x = BandedLu::factor(&a, 0.0).unwrap().solve(&b);
        for (p, q) in x.iter().zip(&x_true) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn components_of_two_pieces() {
        let a = CsrMatrix::from_triplets(4, 4, vec![(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)]);
        let (label, sizes) = connected_components(&a);
        assert_eq!(sizes, vec![2, 2]);
        assert_eq!(label[0], label[1]);
        assert_ne!(label[0], label[2]);
    }
}
