//! Compressed-sparse-row matrices.

use rayon::prelude::*;

/// Row count above which products run in parallel.
const PAR_ROWS: usize = 4096;

/// Structural tags carried alongside the values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MatrixTags {
    pub symmetric: bool,
    /// Zero row sums; constants span the nullspace.
    pub laplacian: bool,
    /// Nonpositive off-diagonal entries.
    pub m_matrix: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
    pub tags: MatrixTags,
}

/// Accumulates `(row, col, value)` entries; duplicates are summed.
#[derive(Clone, Debug)]
pub struct TripletBuilder {
    n_rows: usize,
    n_cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl TripletBuilder {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            rows: vec![Vec::new(); n_rows],
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n_rows && j < self.n_cols);
        self.rows[i].push((j, v));
    }

    /// Appends a fully formed row, replacing nothing.
    pub fn add_row(&mut self, i: usize, entries: impl IntoIterator<Item = (usize, f64)>) {
        self.rows[i].extend(entries);
    }

    pub fn build(self) -> CsrMatrix {
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for mut row in self.rows {
            row.sort_unstable_by_key(|&(j, _)| j);
            let mut last = usize::MAX;
            for (j, v) in row {
                if j == last {
                    *values.last_mut().expect("entry present") += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = j;
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
            tags: MatrixTags::default(),
        }
    }
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
            tags: MatrixTags {
                symmetric: true,
                laplacian: false,
                m_matrix: true,
            },
        }
    }

    pub fn with_tags(mut self, tags: MatrixTags) -> Self {
        self.tags = tags;
        self
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| self.row(i).1.iter().sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        let row_dot = |i: usize| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum::<f64>()
        };
        if self.n_rows >= PAR_ROWS {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(i, yi)| *yi = row_dot(i));
        } else {
            y.iter_mut()
                .enumerate()
                .for_each(|(i, yi)| *yi = row_dot(i));
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for k in 0..self.n_cols {
            counts[k + 1] += counts[k];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                col_idx[next[j]] = i;
                values[next[j]] = v;
                next[j] += 1;
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr: counts,
            col_idx,
            values,
            tags: self.tags,
        }
    }

    /// Sparse product `A B` (row-by-row Gustavson with a dense accumulator).
    pub fn matmul(&self, b: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.n_cols, b.n_rows);
        let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..self.n_rows)
            .into_par_iter()
            .map_init(
                || (vec![0.0; b.n_cols], vec![usize::MAX; b.n_cols]),
                |(acc, marker), i| {
                    let mut pattern = Vec::new();
                    let (ac, av) = self.row(i);
                    for (&k, &a) in ac.iter().zip(av) {
                        let (bc, bv) = b.row(k);
                        for (&j, &bkj) in bc.iter().zip(bv) {
                            if marker[j] != i {
                                marker[j] = i;
                                acc[j] = 0.0;
                                pattern.push(j);
                            }
                            acc[j] += a * bkj;
                        }
                    }
                    pattern.sort_unstable();
                    let vals = pattern.iter().map(|&j| acc[j]).collect();
                    (pattern, vals)
                },
            )
            .collect();
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for (c, v) in rows {
            col_idx.extend(c);
            values.extend(v);
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: b.n_cols,
            row_ptr,
            col_idx,
            values,
            tags: MatrixTags::default(),
        }
    }

    /// Dense row-major copy, for tests and small direct solves.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[(i, j)] += v;
            }
        }
        d
    }

    /// Largest `|A_ij − A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst: f64 = 0.0;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - t.get(i, j)).abs());
            }
            let (tc, tv) = t.row(i);
            for (&j, &v) in tc.iter().zip(tv) {
                worst = worst.max((v - self.get(i, j)).abs());
            }
        }
        worst
    }
}

/// Weighted graph Laplacian `Σ_e w_e (δ_i − δ_j)(δ_i − δ_j)ᵀ`.
pub fn graph_laplacian(n: usize, edges: &[(usize, usize)], weights: &[f64]) -> CsrMatrix {
    assert_eq!(edges.len(), weights.len());
    let mut b = TripletBuilder::new(n, n);
    for (&(i, j), &w) in edges.iter().zip(weights) {
        b.add(i, i, w);
        b.add(j, j, w);
        b.add(i, j, -w);
        b.add(j, i, -w);
    }
    b.build().with_tags(MatrixTags {
        symmetric: true,
        laplacian: true,
        m_matrix: weights.iter().all(|&w| w >= 0.0),
    })
}
