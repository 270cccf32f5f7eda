//! Binary design storage and the column-access interface the solver runs on.

use ndarray::Array2;

/// An n×p 0/1 matrix stored column-major, 64 rows per word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMatrix {
    nrows: usize,
    ncols: usize,
    words_per_col: usize,
    bits: Vec<u64>,
    col_counts: Vec<u32>,
}

impl BinaryMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        let words_per_col = nrows.div_ceil(64);
        BinaryMatrix {
            nrows,
            ncols,
            words_per_col,
            bits: vec![0; words_per_col * ncols],
            col_counts: vec![0; ncols],
        }
    }

    /// Fills entries column by column, rows in increasing order within a column.
    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(nrows, ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                if f(i, j) {
                    m.set(i, j, true);
                }
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        Self::from_fn(nrows, ncols, |i, j| rows[i][j] != 0)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    fn col_words(&self, j: usize) -> &[u64] {
        &self.bits[j * self.words_per_col..(j + 1) * self.words_per_col]
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        assert!(i < self.nrows && j < self.ncols);
        self.col_words(j)[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        assert!(i < self.nrows && j < self.ncols);
        let word = &mut self.bits[j * self.words_per_col + i / 64];
        let mask = 1u64 << (i % 64);
        let was = *word & mask != 0;
        if value && !was {
            *word |= mask;
            self.col_counts[j] += 1;
        } else if !value && was {
            *word &= !mask;
            self.col_counts[j] -= 1;
        }
    }

    /// Number of ones in column `j`.
    pub fn col_count(&self, j: usize) -> usize {
        self.col_counts[j] as usize
    }

    pub fn total_ones(&self) -> usize {
        self.col_counts.iter().map(|&c| c as usize).sum()
    }

    /// Row indices of the ones in column `j`, increasing.
    pub fn col_ones(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.col_words(j)
            .iter()
            .enumerate()
            .flat_map(|(w, &word)| BitIter { word, base: w * 64 })
    }

    #[inline]
    pub fn col_sum(&self, j: usize, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (w, &word) in self.col_words(j).iter().enumerate() {
            let mut bits = word;
            let base = w * 64;
            while bits != 0 {
                let tz = bits.trailing_zeros() as usize;
                acc += v[base + tz];
                bits &= bits - 1;
            }
        }
        acc
    }

    #[inline]
    fn col_add(&self, j: usize, alpha: f64, v: &mut [f64]) {
        for (w, &word) in self.col_words(j).iter().enumerate() {
            let mut bits = word;
            let base = w * 64;
            while bits != 0 {
                let tz = bits.trailing_zeros() as usize;
                v[base + tz] += alpha;
                bits &= bits - 1;
            }
        }
    }

    /// |{i : a_iu = 1 and a_ik = 1}|.
    pub fn intersection_count(&self, u: usize, k: usize) -> usize {
        self.col_words(u)
            .iter()
            .zip(self.col_words(k))
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// A x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut out = vec![0.0; self.nrows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                self.col_add(j, xj, &mut out);
            }
        }
        out
    }

    /// Aᵀ v.
    pub fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.nrows);
        (0..self.ncols).map(|j| self.col_sum(j, v)).collect()
    }

    /// Rows `start..end` as a new matrix.
    pub fn row_block(&self, start: usize, end: usize) -> BinaryMatrix {
        assert!(start <= end && end <= self.nrows);
        let mut out = BinaryMatrix::zeros(end - start, self.ncols);
        for j in 0..self.ncols {
            for i in self.col_ones(j) {
                if i >= start && i < end {
                    out.set(i - start, j, true);
                }
            }
        }
        out
    }

    pub fn row_is_all_ones(&self, i: usize) -> bool {
        (0..self.ncols).all(|j| self.get(i, j))
    }

    pub fn to_dense(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.nrows, self.ncols), |(i, j)| {
            if self.get(i, j) {
                1.0
            } else {
                0.0
            }
        })
    }
}

struct BitIter {
    word: u64,
    base: usize,
}

impl Iterator for BitIter {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.word == 0 {
            return None;
        }
        let tz = self.word.trailing_zeros() as usize;
        self.word &= self.word - 1;
        Some(self.base + tz)
    }
}

/// Column access for coordinate descent.
///
/// The solver never materializes a Gram matrix; it only needs column norms,
/// products with a residual, and rank-one residual updates. `Residual` lets an
/// implementation keep the residual in whatever form makes those cheap.
pub trait Design {
    type Residual: Clone;

    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn col_norm_sq(&self, j: usize) -> f64;
    /// D x
    fn matvec(&self, x: &[f64]) -> Vec<f64>;
    /// Dᵀ v
    fn tr_matvec(&self, v: &[f64]) -> Vec<f64>;

    /// y − D x
    fn residual(&self, y: &[f64], x: &[f64]) -> Self::Residual;
    /// D_jᵀ r
    fn residual_dot(&self, j: usize, r: &Self::Residual) -> f64;
    /// r ← r − delta · D_j
    fn residual_update(&self, j: usize, delta: f64, r: &mut Self::Residual);
    fn residual_values(&self, r: &Self::Residual) -> Vec<f64>;
    /// Re-synchronize any cached aggregates held in the residual.
    fn residual_refresh(&self, _r: &mut Self::Residual) {}

    fn all_finite(&self) -> bool {
        true
    }

    /// Diagonal of DᵀD.
    fn gram_diag(&self) -> Vec<f64> {
        (0..self.ncols()).map(|j| self.col_norm_sq(j)).collect()
    }
}

impl Design for Array2<f64> {
    type Residual = Vec<f64>;

    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn col_norm_sq(&self, j: usize) -> f64 {
        self.column(j).iter().map(|v| v * v).sum()
    }

    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows()];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (o, a) in out.iter_mut().zip(self.column(j)) {
                    *o += a * xj;
                }
            }
        }
        out
    }

    fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.ncols())
            .map(|j| self.column(j).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn residual(&self, y: &[f64], x: &[f64]) -> Vec<f64> {
        let fitted = Design::matvec(self, x);
        y.iter().zip(fitted).map(|(a, b)| a - b).collect()
    }

    fn residual_dot(&self, j: usize, r: &Vec<f64>) -> f64 {
        self.column(j).iter().zip(r).map(|(a, b)| a * b).sum()
    }

    fn residual_update(&self, j: usize, delta: f64, r: &mut Vec<f64>) {
        for (ri, a) in r.iter_mut().zip(self.column(j)) {
            *ri -= delta * a;
        }
    }

    fn residual_values(&self, r: &Vec<f64>) -> Vec<f64> {
        r.clone()
    }

    fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// The centered, variance-normalized view Ã = (A − qJ)/√(n q (1−q)) of a
/// binary matrix, where n is the number of rows of `a`.
#[derive(Clone, Copy, Debug)]
pub struct NormalizedDesign<'a> {
    a: &'a BinaryMatrix,
    q: f64,
    scale: f64,
}

/// Residual of a [`NormalizedDesign`] fit: the actual vector is `base + shift`.
///
/// Subtracting δ·Ã_j touches only the ones of column j plus the scalar shift,
/// so an update costs O(nnz_j) instead of O(n).
#[derive(Clone, Debug)]
pub struct ShiftedResidual {
    base: Vec<f64>,
    shift: f64,
    sum: f64,
}

impl<'a> NormalizedDesign<'a> {
    pub fn new(a: &'a BinaryMatrix, q: f64) -> Self {
        let n = a.nrows() as f64;
        NormalizedDesign {
            a,
            q,
            scale: (n * q * (1.0 - q)).sqrt(),
        }
    }

    pub fn raw(&self) -> &'a BinaryMatrix {
        self.a
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// √(n q (1−q)).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let a = if self.a.get(i, j) { 1.0 } else { 0.0 };
        (a - self.q) / self.scale
    }

    /// Ãᵀ1.
    pub fn col_sums(&self) -> Vec<f64> {
        let n = self.a.nrows() as f64;
        (0..self.a.ncols())
            .map(|j| (self.a.col_count(j) as f64 - n * self.q) / self.scale)
            .collect()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.a.to_dense().mapv(|v| (v - self.q) / self.scale)
    }
}

impl Design for NormalizedDesign<'_> {
    type Residual = ShiftedResidual;

    fn nrows(&self) -> usize {
        self.a.nrows()
    }

    fn ncols(&self) -> usize {
        self.a.ncols()
    }

    fn col_norm_sq(&self, j: usize) -> f64 {
        let n = self.a.nrows() as f64;
        let ones = self.a.col_count(j) as f64;
        let q = self.q;
        (ones * (1.0 - q) * (1.0 - q) + (n - ones) * q * q) / (self.scale * self.scale)
    }

    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let total: f64 = x.iter().sum();
        let ax = self.a.matvec(x);
        ax.into_iter()
            .map(|v| (v - self.q * total) / self.scale)
            .collect()
    }

    fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        let total: f64 = v.iter().sum();
        (0..self.a.ncols())
            .map(|j| (self.a.col_sum(j, v) - self.q * total) / self.scale)
            .collect()
    }

    fn residual(&self, y: &[f64], x: &[f64]) -> ShiftedResidual {
        let fitted = Design::matvec(self, x);
        let base: Vec<f64> = y.iter().zip(fitted).map(|(a, b)| a - b).collect();
        let sum = base.iter().sum();
        ShiftedResidual {
            base,
            shift: 0.0,
            sum,
        }
    }

    #[inline]
    fn residual_dot(&self, j: usize, r: &ShiftedResidual) -> f64 {
        let ones = self.a.col_count(j) as f64;
        let over_ones = self.a.col_sum(j, &r.base) + ones * r.shift;
        (over_ones - self.q * r.sum) / self.scale
    }

    #[inline]
    fn residual_update(&self, j: usize, delta: f64, r: &mut ShiftedResidual) {
        let step = delta / self.scale;
        self.a.col_add(j, -step, &mut r.base);
        r.shift += step * self.q;
        let n = self.a.nrows() as f64;
        r.sum -= step * (self.a.col_count(j) as f64 - n * self.q);
    }

    fn residual_values(&self, r: &ShiftedResidual) -> Vec<f64> {
        r.base.iter().map(|b| b + r.shift).collect()
    }

    fn residual_refresh(&self, r: &mut ShiftedResidual) {
        for b in r.base.iter_mut() {
            *b += r.shift;
        }
        r.shift = 0.0;
        r.sum = r.base.iter().sum();
    }

    fn all_finite(&self) -> bool {
        self.scale.is_finite() && self.scale > 0.0
    }
}
