//! Least squares over row blocks that are factorized once and re-solved many
//! times with different right-hand sides and column placements.
//!
//! Each block is reduced to `R P^T` and `Q^T y`; stacking those reductions
//! gives a small system with the same normal equations as the full stacked
//! design, which is then solved by a pivoted QR.

use super::{qr::PivotedQr, DesignMatrix, GlmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockId(usize);

#[derive(Debug, Clone)]
struct Factor {
    qr: PivotedQr,
    sqrt_w: Vec<f64>,
    r: Vec<Vec<f64>>,
}

/// Right-hand side for one factorized block.
#[derive(Debug, Clone, Copy)]
pub struct BlockRhs<'a> {
    pub block: BlockId,
    /// Global column index for each local column of the block.
    pub columns: &'a [usize],
    pub y: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct BlockedLeastSquares {
    names: Vec<String>,
    factors: Vec<Factor>,
    rank_tolerance: f64,
}

impl BlockedLeastSquares {
    pub fn new(names: Vec<String>) -> Self {
        Self {
            names,
            factors: Vec::new(),
            rank_tolerance: 1e-10,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Factorizes a block design (row weights are honoured).
    pub fn add_block(&mut self, x: &DesignMatrix) -> BlockId {
        let sqrt_w: Vec<f64> = (0..x.rows()).map(|i| x.weight(i).sqrt()).collect();
        let qr = PivotedQr::new(x.scaled_copy(None), x.rows(), x.cols());
        let r = qr.r_unpivoted();
        self.factors.push(Factor { qr, sqrt_w, r });
        BlockId(self.factors.len() - 1)
    }

    /// Solves the stacked problem.
    ///
    /// Global columns that no right-hand side maps to, or that are identically
    /// zero in every block they map from, are left out and returned as `None`.
    /// Any other collinearity is a rank deficiency.
    pub fn solve(&self, rhs: &[BlockRhs<'_>]) -> Result<Vec<Option<f64>>, GlmError> {
        let total = self.names.len();
        let mut referenced = vec![false; total];
        let mut stacked_rows: Vec<Vec<f64>> = Vec::new();
        let mut stacked_y: Vec<f64> = Vec::new();

        for part in rhs {
            let f = &self.factors[part.block.0];
            if part.y.len() != f.qr.rows() || part.columns.len() != f.qr.cols() {
                return Err(GlmError::DimensionMismatch(
                    "block right-hand side does not match its factor".into(),
                ));
            }
            let mut qty: Vec<f64> = part.y.iter().zip(&f.sqrt_w).map(|(v, s)| v * s).collect();
            f.qr.apply_qt(&mut qty);
            for (row, c) in f.r.iter().zip(&qty) {
                let mut global = vec![0.0; total];
                for (local, &g) in part.columns.iter().enumerate() {
                    global[g] += row[local];
                }
                stacked_rows.push(global);
                stacked_y.push(*c);
            }
            for &g in part.columns {
                referenced[g] = true;
            }
        }

        // a referenced column with no nonzero entry carries no information
        let active: Vec<usize> = (0..total)
            .filter(|&g| referenced[g] && stacked_rows.iter().any(|r| r[g] != 0.0))
            .collect();
        if stacked_rows.is_empty() || active.is_empty() {
            return Err(GlmError::EmptyInput);
        }
        let m = stacked_rows.len();
        let p = active.len();
        if m < p {
            return Err(GlmError::RankDeficient {
                columns: active.iter().map(|&g| self.names[g].clone()).collect(),
            });
        }
        let mut data = vec![0.0; m * p];
        for (jj, &g) in active.iter().enumerate() {
            for (i, row) in stacked_rows.iter().enumerate() {
                data[jj * m + i] = row[g];
            }
        }
        let qr = PivotedQr::new(data, m, p);
        let bad = qr.deficient_columns(self.rank_tolerance);
        if !bad.is_empty() {
            return Err(GlmError::RankDeficient {
                columns: bad.iter().map(|&j| self.names[active[j]].clone()).collect(),
            });
        }
        let (coef, _) = qr.solve(&stacked_y, p);
        let mut out = vec![None; total];
        for (jj, &g) in active.iter().enumerate() {
            out[g] = Some(coef[jj]);
        }
        Ok(out)
    }
}
