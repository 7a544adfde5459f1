//! Compressed sparse column matrices, just enough for the QP.

#[derive(Debug, Clone, PartialEq)]
pub struct Csc {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowidx: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csc {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// rows within each column sorted.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; ncols + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            counts[c + 1] += 1;
        }
        for c in 0..ncols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut rows = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            rows[next[c]] = r;
            vals[next[c]] = v;
            next[c] += 1;
        }
        let mut colptr = Vec::with_capacity(ncols + 1);
        let mut rowidx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        colptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for c in 0..ncols {
            order.clear();
            order.extend(counts[c]..counts[c + 1]);
            order.sort_by_key(|&p| rows[p]);
            for &p in &order {
                if rowidx.len() > colptr[c] && *rowidx.last().unwrap() == rows[p] {
                    *values.last_mut().unwrap() += vals[p];
                } else {
                    rowidx.push(rows[p]);
                    values.push(vals[p]);
                }
            }
            colptr.push(rowidx.len());
        }
        Self { nrows, ncols, colptr, rowidx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.colptr[c]..self.colptr[c + 1]).map(move |p| (self.rowidx[p], self.values[p]))
    }

    /// `y = A x`.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for c in 0..self.ncols {
            let xc = x[c];
            if xc != 0.0 {
                for p in self.colptr[c]..self.colptr[c + 1] {
                    y[self.rowidx[p]] += self.values[p] * xc;
                }
            }
        }
        y
    }

    /// `y = A^T x`.
    pub fn tmul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.ncols)
            .map(|c| (self.colptr[c]..self.colptr[c + 1]).map(|p| self.values[p] * x[self.rowidx[p]]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Csc {
        let t: Vec<(usize, usize, f64)> =
            (0..self.ncols).flat_map(|c| self.col(c).map(move |(r, v)| (c, r, v))).collect();
        Csc::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn to_triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.ncols).flat_map(|c| self.col(c).map(move |(r, v)| (r, c, v))).collect()
    }

    /// `diag(left) A diag(right)`.
    pub fn scale(&mut self, left: &[f64], right: &[f64]) {
        for c in 0..self.ncols {
            for p in self.colptr[c]..self.colptr[c + 1] {
                self.values[p] *= left[self.rowidx[p]] * right[c];
            }
        }
    }

    pub fn col_inf_norms(&self) -> Vec<f64> {
        (0..self.ncols).map(|c| self.col(c).fold(0.0f64, |m, (_, v)| m.max(v.abs()))).collect()
    }

    pub fn row_inf_norms(&self) -> Vec<f64> {
        let mut n = vec![0.0f64; self.nrows];
        for (r, &v) in self.rowidx.iter().zip(&self.values) {
            n[*r] = n[*r].max(v.abs());
        }
        n
    }

    /// Dense copy, row major. For tests and tiny problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for c in 0..self.ncols {
            for (r, v) in self.col(c) {
                d[r][c] += v;
            }
        }
        d
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
