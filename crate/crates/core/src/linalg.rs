//! Sparse row operators and banded matrices with a banded Cholesky.

use crate::error::{Error, Result};

/// Row-major sparse matrix; each row holds `(column, value)` sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let rows = rows.into_iter().map(normalize_row).collect();
        Self { ncols, rows }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            ncols: n,
            rows: (0..n).map(|i| vec![(i, 1.0)]).collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Linear combination of rows, `Σ c_j · row(i_j)`.
    pub fn combine(&self, terms: &[(usize, f64)]) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for &(i, c) in terms {
            if c != 0.0 {
                out.extend(self.rows[i].iter().map(|&(j, v)| (j, c * v)));
            }
        }
        normalize_row(out)
    }

    /// `self · rhs`.
    pub fn compose(&self, rhs: &SparseRows) -> SparseRows {
        assert_eq!(self.ncols, rhs.nrows(), "dimension mismatch in compose");
        SparseRows {
            ncols: rhs.ncols,
            rows: self.rows.iter().map(|r| rhs.combine(r)).collect(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }
}

fn normalize_row(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.sort_by_key(|&(j, _)| j);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (j, v) in row {
        match out.last_mut() {
            Some((lj, lv)) if *lj == j => *lv += v,
            _ => out.push((j, v)),
        }
    }
    out.retain(|&(_, v)| v != 0.0);
    out
}

/// Square band matrix with equal lower and upper bandwidth, stored densely
/// within the band (both triangles).
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> Option<usize> {
        let d = j as isize - i as isize;
        if d.unsigned_abs() > self.bw || i >= self.n || j >= self.n {
            None
        } else {
            Some(i * (2 * self.bw + 1) + (d + self.bw as isize) as usize)
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.idx(i, j).map_or(0.0, |p| self.data[p])
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self
            .idx(i, j)
            .unwrap_or_else(|| panic!("({i},{j}) outside band {}", self.bw));
        self.data[p] += v;
    }

    /// `self + c·other`, widening the band when needed.
    pub fn plus_scaled(&self, other: &BandMatrix, c: f64) -> BandMatrix {
        assert_eq!(self.n, other.n);
        let bw = self.bw.max(other.bw);
        let mut out = BandMatrix::zeros(self.n, bw);
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            let hi = (i + bw).min(self.n - 1);
            for j in lo..=hi {
                let v = self.get(i, j) + c * other.get(i, j);
                if v != 0.0 {
                    out.add(i, j, v);
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    pub fn quadratic(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j).abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// `max |a_ij − a_ji| / max |a_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let mut scale = 0.0f64;
        let mut diff = 0.0f64;
        for i in 0..self.n {
            for j in i..(i + self.bw + 1).min(self.n) {
                let (a, b) = (self.get(i, j), self.get(j, i));
                scale = scale.max(a.abs()).max(b.abs());
                diff = diff.max((a - b).abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }

    /// Cholesky factor of the lower triangle. Fails unless positive definite.
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        // l[i][i-j] for j in 0..=bw
        let mut l = vec![0.0; n * (bw + 1)];
        let at = |i: usize, d: usize| i * (bw + 1) + d;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.get(i, j);
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    s -= l[at(i, i - k)] * l[at(j, j - k)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::SingularSolve(format!(
                            "matrix not positive definite at pivot {i} ({s:.3e})"
                        )));
                    }
                    l[at(i, 0)] = s.sqrt();
                } else {
                    l[at(i, i - j)] = s / l[at(j, 0)];
                }
            }
        }
        Ok(BandCholesky { n, bw, l })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        assert_eq!(b.len(), n);
        let at = |i: usize, d: usize| i * (bw + 1) + d;
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = y[i];
            for k in lo..i {
                s -= self.l[at(i, i - k)] * y[k];
            }
            y[i] = s / self.l[at(i, 0)];
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = y[i];
            for k in (i + 1)..=hi {
                s -= self.l[at(k, k - i)] * y[k];
            }
            y[i] = s / self.l[at(i, 0)];
        }
        y
    }
}

/// Accumulates `Σ_p w_p (r_p · x)²` into a band matrix: `Dᵀ diag(w) D`.
pub fn gram_from_rows(rows: &SparseRows, weights: &[f64], n: usize) -> BandMatrix {
    assert_eq!(rows.nrows(), weights.len());
    let bw = (0..rows.nrows())
        .filter_map(|p| {
            let r = rows.row(p);
            Some(r.last()?.0 - r.first()?.0)
        })
        .max()
        .unwrap_or(0);
    let mut m = BandMatrix::zeros(n, bw);
    for p in 0..rows.nrows() {
        let w = weights[p];
        if w == 0.0 {
            continue;
        }
        let r = rows.row(p);
        for &(a, va) in r {
            for &(b, vb) in r {
                m.add(a, b, w * va * vb);
            }
        }
    }
    m
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Dense solve with partial pivoting for the small systems (stencil
/// elimination, lifting polynomials).
pub fn dense_solve(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let rhs = nalgebra::DVector::from_vec(b);
    m.lu()
        .solve(&rhs)
        .map(|x| x.iter().copied().collect())
        .ok_or_else(|| Error::SingularSolve("dense system is singular".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> BandMatrix {
        let mut m = BandMatrix::zeros(n, 1);
        for i in 0..n {
            m.add(i, i, 2.0);
            if i + 1 < n {
                m.add(i, i + 1, -1.0);
                m.add(i + 1, i, -1.0);
            }
        }
        m
    }

    #[test]
    fn cholesky_solves_tridiagonal() {
        let m = tridiag(50);
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = m.matvec(&x);
        let got = m.cholesky().unwrap().solve(&b);
        for (g, w) in got.iter().zip(&x) {
            assert!((g - w).abs() < 1e-11);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = tridiag(10).plus_scaled(&BandMatrix::identity_band(10), -3.0);
        assert!(m.cholesky().is_err());
    }

    #[test]
    fn gram_matches_dense_product() {
        let rows = SparseRows::new(
            4,
            vec![
                vec![(0, 1.0), (1, -1.0)],
                vec![(1, 2.0), (2, 1.0), (3, 0.5)],
                vec![(3, 1.0)],
            ],
        );
        let w = [0.5, 2.0, 1.5];
        let g = gram_from_rows(&rows, &w, 4);
        let x = [0.3, -1.0, 2.0, 0.7];
        let dx = rows.apply(&x);
        let direct: f64 = dx.iter().zip(&w).map(|(d, w)| w * d * d).sum();
        assert!((g.quadratic(&x) - direct).abs() < 1e-14);
        assert_eq!(g.asymmetry(), 0.0);
    }

    #[test]
    fn compose_is_matrix_product() {
        let a = SparseRows::new(3, vec![vec![(0, 1.0), (2, 2.0)], vec![(1, -1.0)]]);
        let b = SparseRows::new(2, vec![vec![(0, 1.0)], vec![(0, 1.0), (1, 1.0)], vec![(1, 3.0)]]);
        let c = a.compose(&b);
        let x = [2.0, -1.0];
        assert_eq!(c.apply(&x), a.apply(&b.apply(&x)));
    }

    impl BandMatrix {
        fn identity_band(n: usize) -> Self {
            let mut m = BandMatrix::zeros(n, 0);
            for i in 0..n {
                m.add(i, i, 1.0);
            }
            m
        }
    }
}
