//! Householder QR with column pivoting on column norms.
//!
//! The factorization is stored LAPACK-style: `R` on and above the diagonal,
//! the Householder vectors (with an implicit leading 1) below it.

/// Column-major dense matrix factorized as `A P = Q R`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
    tau: Vec<f64>,
    perm: Vec<usize>,
}

impl PivotedQr {
    /// Factorizes a column-major `rows x cols` matrix.
    pub fn new(mut a: Vec<f64>, rows: usize, cols: usize) -> Self {
        assert_eq!(a.len(), rows * cols, "matrix storage does not match shape");
        let steps = rows.min(cols);
        let mut perm: Vec<usize> = (0..cols).collect();
        let mut tau = vec![0.0; steps];

        let col_norm2 = |a: &[f64], j: usize, from: usize| -> f64 {
            a[j * rows + from..(j + 1) * rows].iter().map(|v| v * v).sum()
        };
        let mut norms: Vec<f64> = (0..cols).map(|j| col_norm2(&a, j, 0)).collect();
        let mut norms_ref = norms.clone();

        for k in 0..steps {
            // pivot: largest remaining column norm
            let mut best = k;
            for j in k + 1..cols {
                if norms[j] > norms[best] {
                    best = j;
                }
            }
            if best != k {
                for i in 0..rows {
                    a.swap(k * rows + i, best * rows + i);
                }
                perm.swap(k, best);
                norms.swap(k, best);
                norms_ref.swap(k, best);
            }

            // reflector for a[k.., k]
            let col = k * rows;
            let alpha = a[col + k];
            let tail: f64 = a[col + k + 1..col + rows].iter().map(|v| v * v).sum();
            if tail == 0.0 {
                tau[k] = 0.0;
            } else {
                let norm = (alpha * alpha + tail).sqrt();
                let beta = if alpha >= 0.0 { -norm } else { norm };
                tau[k] = (beta - alpha) / beta;
                let scale = 1.0 / (alpha - beta);
                for v in &mut a[col + k + 1..col + rows] {
                    *v *= scale;
                }
                a[col + k] = beta;
            }

            // apply to the trailing columns
            if tau[k] != 0.0 {
                let t = tau[k];
                for j in k + 1..cols {
                    let (left, right) = a.split_at_mut(j * rows);
                    let v = &left[col + k + 1..col + rows];
                    let target = &mut right[..rows];
                    let mut s = target[k];
                    for (vi, ti) in v.iter().zip(&target[k + 1..]) {
                        s += vi * ti;
                    }
                    s *= t;
                    target[k] -= s;
                    for (vi, ti) in v.iter().zip(&mut target[k + 1..]) {
                        *ti -= s * vi;
                    }
                }
            }

            // downdate the partial norms, recomputing on cancellation
            for j in k + 1..cols {
                if norms[j] > 0.0 {
                    let r = a[j * rows + k];
                    norms[j] -= r * r;
                    if norms[j] <= 1e-8 * norms_ref[j] {
                        norms[j] = col_norm2(&a, j, k + 1);
                        norms_ref[j] = norms[j];
                    }
                }
            }
        }

        Self {
            rows,
            cols,
            a,
            tau,
            perm,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `perm[k]` is the original column placed at pivot position `k`.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Diagonal of `R` in pivot order.
    pub fn r_diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|k| self.a[k * self.rows + k])
            .collect()
    }

    /// Numerical rank: pivots whose `|R_kk|` exceeds `rel_tol * |R_00|`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let diag = self.r_diagonal();
        let Some(first) = diag.first() else {
            return 0;
        };
        let cutoff = first.abs() * rel_tol;
        if first.abs() == 0.0 {
            return 0;
        }
        diag.iter().take_while(|d| d.abs() > cutoff).count()
    }

    /// Original column indices that fall beyond the numerical rank.
    pub fn deficient_columns(&self, rel_tol: f64) -> Vec<usize> {
        let rank = self.rank(rel_tol);
        let mut cols: Vec<usize> = self.perm[rank..].to_vec();
        cols.sort_unstable();
        cols
    }

    /// Overwrites `y` with `Q^T y`.
    pub fn apply_qt(&self, y: &mut [f64]) {
        assert_eq!(y.len(), self.rows);
        for (k, &t) in self.tau.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let v = &self.a[k * self.rows + k + 1..(k + 1) * self.rows];
            let mut s = y[k];
            for (vi, yi) in v.iter().zip(&y[k + 1..]) {
                s += vi * yi;
            }
            s *= t;
            y[k] -= s;
            for (vi, yi) in v.iter().zip(&mut y[k + 1..]) {
                *yi -= s * vi;
            }
        }
    }

    /// Solves `R[..rank, ..rank] b = qty[..rank]` and scatters `b` back to the
    /// original column order. Columns beyond the rank get zero.
    pub fn back_substitute(&self, qty: &[f64], rank: usize) -> Vec<f64> {
        let mut b = vec![0.0; rank];
        for k in (0..rank).rev() {
            let mut s = qty[k];
            for j in k + 1..rank {
                s -= self.a[j * self.rows + k] * b[j];
            }
            b[k] = s / self.a[k * self.rows + k];
        }
        let mut out = vec![0.0; self.cols];
        for (k, value) in b.into_iter().enumerate() {
            out[self.perm[k]] = value;
        }
        out
    }

    /// Least-squares solution and residual sum of squares for the full-rank
    /// leading block.
    pub fn solve(&self, y: &[f64], rank: usize) -> (Vec<f64>, f64) {
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        let rss = qty[rank..].iter().map(|v| v * v).sum();
        (self.back_substitute(&qty, rank), rss)
    }

    /// `R P^T` as a row-major `k x cols` matrix (`k = min(rows, cols)`).
    ///
    /// Its Gram matrix equals `A^T A`, so these rows can be stacked with the
    /// factors of other row blocks sharing the same columns.
    pub fn r_unpivoted(&self) -> Vec<Vec<f64>> {
        let k = self.rows.min(self.cols);
        let mut out = vec![vec![0.0; self.cols]; k];
        for (i, row) in out.iter_mut().enumerate() {
            for j in i..self.cols {
                row[self.perm[j]] = self.a[j * self.rows + i];
            }
        }
        out
    }
}
