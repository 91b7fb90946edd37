//! Sparse (CSR) matrices and a banded LU factorization.
//!
//! All system matrices in this crate come from a P1 discretization of the
//! unit square with row-major node numbering, so they are banded with
//! bandwidth `n_side + 1`. A band LU with partial pivoting gives
//! factor-once/solve-thousands behavior at a fraction of the cost of a
//! general sparse or dense factorization at these sizes.

use crate::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Assemble from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut entries: Vec<(usize, f64)> = vec![(0, 0.0); triplets.len()];
        let mut cursor = counts.clone();
        for &(r, c, v) in triplets {
            entries[cursor[r]] = (c, v);
            cursor[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..n_rows {
            let slice = &mut entries[counts[r]..counts[r + 1]];
            slice.sort_unstable_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < slice.len() {
                let c = slice[i].0;
                let mut v = 0.0;
                while i < slice.len() && slice[i].0 == c {
                    v += slice[i].1;
                    i += 1;
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Csr { n_rows, n_cols, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    /// y <- A x (overwrites y)
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for r in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    /// y <- y + s * A x
    pub fn matvec_scaled_add(&self, x: &[f64], s: f64, y: &mut [f64]) {
        for r in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] += s * acc;
        }
    }

    pub fn transpose(&self) -> Csr {
        let triplets: Vec<(usize, usize, f64)> = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        Csr::from_triplets(self.n_cols, self.n_rows, &triplets)
    }

    /// Iterate over stored entries as (row, col, value).
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    /// Weighted sum of matrices with arbitrary (possibly different) patterns.
    pub fn linear_combination(terms: &[(f64, &Csr)]) -> Csr {
        assert!(!terms.is_empty());
        let (n_rows, n_cols) = (terms[0].1.n_rows, terms[0].1.n_cols);
        let mut triplets = Vec::new();
        for &(s, m) in terms {
            assert_eq!(m.n_rows, n_rows);
            assert_eq!(m.n_cols, n_cols);
            triplets.extend(m.iter().map(|(r, c, v)| (r, c, s * v)));
        }
        Csr::from_triplets(n_rows, n_cols, &triplets)
    }

    /// Zero out rows and columns for the given indices and put 1 on their
    /// diagonal. Used for homogeneous Dirichlet elimination.
    pub fn eliminate_symmetric(&self, indices: &[usize]) -> Csr {
        let mut mask = vec![false; self.n_rows.max(self.n_cols)];
        for &i in indices {
            mask[i] = true;
        }
        let mut triplets: Vec<(usize, usize, f64)> = self
            .iter()
            .filter(|&(r, c, _)| !mask[r] && !mask[c])
            .collect();
        for &i in indices {
            triplets.push((i, i, 1.0));
        }
        Csr::from_triplets(self.n_rows, self.n_cols, &triplets)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.iter() {
            d[(r, c)] += v;
        }
        d
    }

    /// Maximum |i - j| over stored entries.
    pub fn bandwidth(&self) -> usize {
        self.iter()
            .map(|(r, c, _)| r.abs_diff(c))
            .max()
            .unwrap_or(0)
    }
}

/// LU factorization of a banded matrix with partial pivoting.
///
/// Band storage follows the LAPACK convention: entry (i, j) lives at
/// working row `kl + ku + i - j` of column j, with `kl` extra rows on top
/// for pivoting fill. Column-major layout, column stride `2*kl + ku + 1`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    /// Factor a sparse matrix, treating it as banded with its actual bandwidth.
    pub fn factor(a: &Csr) -> Result<Self> {
        assert_eq!(a.n_rows, a.n_cols);
        let n = a.n_rows;
        let b = a.bandwidth();
        let (kl, ku) = (b, b);
        let ldab = 2 * kl + ku + 1;
        let kv = kl + ku;
        let mut ab = vec![0.0; ldab * n];
        for (i, j, v) in a.iter() {
            ab[j * ldab + (kv + i - j)] += v;
        }
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // pivot search on the diagonal and km subdiagonals of column j
            let col = j * ldab;
            let mut jp = 0;
            let mut pmax = ab[col + kv].abs();
            for i in 1..=km {
                let v = ab[col + kv + i].abs();
                if v > pmax {
                    pmax = v;
                    jp = i;
                }
            }
            ipiv[j] = j + jp;
            if pmax == 0.0 {
                return Err(Error::Factorization(format!(
                    "zero pivot at column {j} of banded matrix"
                )));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                // swap rows j and j+jp across columns j..=ju
                for k in j..=ju {
                    let base = k * ldab + kv + j - k;
                    ab.swap(base, base + jp);
                }
            }
            if km > 0 {
                let piv = ab[col + kv];
                for i in 1..=km {
                    ab[col + kv + i] /= piv;
                }
                for k in (j + 1)..=ju {
                    let base = k * ldab + kv + j - k;
                    let f = ab[base];
                    if f != 0.0 {
                        for i in 1..=km {
                            ab[base + i] -= ab[col + kv + i] * f;
                        }
                    }
                }
            }
        }
        Ok(BandedLu { n, kl, ku, ldab, ab, ipiv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve A x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        let (n, kl, ku, kv, ldab) = (self.n, self.kl, self.ku, self.kl + self.ku, self.ldab);
        if kl > 0 {
            for j in 0..n - 1 {
                let p = self.ipiv[j];
                if p != j {
                    b.swap(j, p);
                }
                let lm = kl.min(n - 1 - j);
                let bj = b[j];
                if bj != 0.0 {
                    let col = j * ldab;
                    for i in 1..=lm {
                        b[j + i] -= self.ab[col + kv + i] * bj;
                    }
                }
            }
        }
        // back substitution with U (bandwidth kl+ku)
        for j in (0..n).rev() {
            let col = j * ldab;
            b[j] /= self.ab[col + kv];
            let bj = b[j];
            if bj != 0.0 {
                let lm = (kl + ku).min(j);
                for i in 1..=lm {
                    b[j - i] -= self.ab[col + kv - i] * bj;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Cholesky factorization L L^T of a banded symmetric positive definite
/// matrix, kept in lower-band storage.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    kl: usize,
    /// Column-major lower band: entry (i, j) at `j * (kl + 1) + (i - j)`.
    lo: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &Csr) -> Result<Self> {
        assert_eq!(a.n_rows, a.n_cols);
        let n = a.n_rows;
        let kl = a.bandwidth();
        let ld = kl + 1;
        let mut lo = vec![0.0; ld * n];
        for (i, j, v) in a.iter() {
            if i >= j {
                lo[j * ld + (i - j)] += v;
            }
        }
        for j in 0..n {
            let start = j.saturating_sub(kl);
            let mut d = lo[j * ld];
            for k in start..j {
                let ljk = lo[k * ld + (j - k)];
                d -= ljk * ljk;
            }
            if d <= 0.0 {
                return Err(Error::Factorization(format!(
                    "matrix not positive definite at column {j}"
                )));
            }
            let ljj = d.sqrt();
            lo[j * ld] = ljj;
            let last = (j + kl).min(n - 1);
            for i in (j + 1)..=last {
                let mut v = lo[j * ld + (i - j)];
                for k in i.saturating_sub(kl).max(start)..j {
                    v -= lo[k * ld + (i - k)] * lo[k * ld + (j - k)];
                }
                lo[j * ld + (i - j)] = v / ljj;
            }
        }
        Ok(BandedCholesky { n, kl, lo })
    }

    /// y = L x
    pub fn mul_lower(&self, x: &[f64]) -> Vec<f64> {
        let ld = self.kl + 1;
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let xj = x[j];
            if xj != 0.0 {
                let last = (j + self.kl).min(self.n - 1);
                for i in j..=last {
                    y[i] += self.lo[j * ld + (i - j)] * xj;
                }
            }
        }
        y
    }

    /// Solve L y = b in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let ld = self.kl + 1;
        for j in 0..self.n {
            b[j] /= self.lo[j * ld];
            let bj = b[j];
            let last = (j + self.kl).min(self.n - 1);
            for i in (j + 1)..=last {
                b[i] -= self.lo[j * ld + (i - j)] * bj;
            }
        }
    }

    /// Solve L^T x = b in place.
    pub fn solve_lower_transpose_in_place(&self, b: &mut [f64]) {
        let ld = self.kl + 1;
        for j in (0..self.n).rev() {
            let last = (j + self.kl).min(self.n - 1);
            let mut v = b[j];
            for i in (j + 1)..=last {
                v -= self.lo[j * ld + (i - j)] * b[i];
            }
            b[j] = v / self.lo[j * ld];
        }
    }
}
