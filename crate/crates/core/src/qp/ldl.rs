//! Sparse LDL^T factorization of quasi-definite matrices, with a fill-reducing
//! AMD ordering. Quasi-definite matrices (positive definite block, negative
//! definite block) factor stably under any symmetric permutation, so no
//! pivoting is needed.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LdlError {
    #[error("ordering failed")]
    Ordering,
    #[error("zero pivot at column {0}")]
    ZeroPivot(usize),
    #[error("entry ({0}, {1}) is below the diagonal")]
    NotUpper(usize, usize),
}

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct Ldl {
    n: usize,
    perm: Vec<usize>,
    // permuted upper triangle, CSC
    ap: Vec<usize>,
    ai: Vec<usize>,
    ax: Vec<f64>,
    // position in ax of each input entry
    entry_pos: Vec<usize>,
    entry_val: Vec<f64>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
}

impl Ldl {
    /// Orders and factors the symmetric matrix given by its upper-triangle
    /// entries `(row, col, value)` with `row <= col`. Every diagonal entry
    /// must be present (duplicates are summed).
    pub fn new(n: usize, upper: &[(usize, usize, f64)]) -> Result<Self, LdlError> {
        for &(r, c, _) in upper {
            if r > c {
                return Err(LdlError::NotUpper(r, c));
            }
        }
        let perm = amd_order(n, upper)?;
        let mut pinv = vec![0usize; n];
        for (k, &p) in perm.iter().enumerate() {
            pinv[p] = k;
        }

        // permuted entries sorted by (col, row)
        let mut keyed: Vec<(usize, usize, usize)> = upper
            .iter()
            .enumerate()
            .map(|(t, &(r, c, _))| {
                let (a, b) = (pinv[r], pinv[c]);
                (a.max(b), a.min(b), t)
            })
            .collect();
        keyed.sort_unstable();
        let mut ap = vec![0usize; n + 1];
        let mut ai = Vec::with_capacity(keyed.len());
        let mut entry_pos = vec![0usize; upper.len()];
        let mut last: Option<(usize, usize)> = None;
        for &(c, r, t) in &keyed {
            if last != Some((c, r)) {
                ai.push(r);
                ap[c + 1] += 1;
                last = Some((c, r));
            }
            entry_pos[t] = ai.len() - 1;
        }
        for c in 0..n {
            ap[c + 1] += ap[c];
        }

        // elimination tree and column counts
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &i0 in &ai[ap[j]..ap[j + 1]] {
                let mut i = i0;
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let mut f = Self {
            n,
            perm,
            ax: vec![0.0; ai.len()],
            ap,
            ai,
            entry_pos,
            entry_val: upper.iter().map(|e| e.2).collect(),
            etree,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
        };
        f.refactor()?;
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.lx.len()
    }

    /// Replaces the value of input entry `t` (as passed to [`Ldl::new`]).
    /// Takes effect at the next [`Ldl::refactor`].
    pub fn set_entry(&mut self, t: usize, value: f64) {
        self.entry_val[t] = value;
    }

    /// Numeric factorization with the current entry values.
    pub fn refactor(&mut self) -> Result<(), LdlError> {
        self.ax.iter_mut().for_each(|v| *v = 0.0);
        for (t, &p) in self.entry_pos.iter().enumerate() {
            self.ax[p] += self.entry_val[t];
        }
        let n = self.n;
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();
        let mut y_vals = vec![0.0; n];
        let mut y_marked = vec![false; n];
        let mut y_idx: Vec<usize> = Vec::with_capacity(n);
        let mut elim: Vec<usize> = Vec::with_capacity(n);
        for k in 0..n {
            y_idx.clear();
            self.d[k] = 0.0;
            for p in self.ap[k]..self.ap[k + 1] {
                let b = self.ai[p];
                if b == k {
                    self.d[k] = self.ax[p];
                    continue;
                }
                y_vals[b] = self.ax[p];
                if !y_marked[b] {
                    y_marked[b] = true;
                    elim.clear();
                    elim.push(b);
                    let mut next = self.etree[b];
                    while next != NONE && next < k {
                        if y_marked[next] {
                            break;
                        }
                        y_marked[next] = true;
                        elim.push(next);
                        next = self.etree[next];
                    }
                    while let Some(e) = elim.pop() {
                        y_idx.push(e);
                    }
                }
            }
            for &c in y_idx.iter().rev() {
                let slot = next_space[c];
                let yc = y_vals[c];
                for j in self.lp[c]..slot {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[slot] = k;
                let l = yc * self.dinv[c];
                self.lx[slot] = l;
                self.d[k] -= yc * l;
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_marked[c] = false;
            }
            if self.d[k] == 0.0 || !self.d[k].is_finite() {
                return Err(LdlError::ZeroPivot(k));
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        Ok(())
    }

    /// Solves `K x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..self.n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for i in 0..self.n {
            x[i] *= self.dinv[i];
        }
        for i in (0..self.n).rev() {
            let mut s = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                s -= self.lx[j] * x[self.li[j]];
            }
            x[i] = s;
        }
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = x[k];
        }
    }

    /// Number of negative pivots (the inertia's negative count).
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&d| d < 0.0).count()
    }
}

fn amd_order(n: usize, upper: &[(usize, usize, f64)]) -> Result<Vec<usize>, LdlError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut pairs: Vec<(usize, usize)> = upper.iter().map(|&(r, c, _)| (c, r)).collect();
    pairs.sort_unstable();
    pairs.dedup();
    let mut ap = vec![0usize; n + 1];
    let mut ai = Vec::with_capacity(pairs.len());
    for &(c, r) in &pairs {
        ap[c + 1] += 1;
        ai.push(r);
    }
    for c in 0..n {
        ap[c + 1] += ap[c];
    }
    let (p, _, _) = amd::order(n, &ap, &ai, &amd::Control::default()).map_err(|_| LdlError::Ordering)?;
    Ok(p)
}
