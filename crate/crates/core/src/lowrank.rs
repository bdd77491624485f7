//! Low-rank `U Vᵀ` blocks and adaptive cross approximation.

use serde::{Deserialize, Serialize};

use crate::dense::{gemv_acc, norm2, DenseMatrix};
use crate::entry::EntryEvaluator;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcaConfig {
    /// Maximum number of rank-one updates.
    pub k_max: usize,
    /// Stop once `|u_m| |v_m| <= rel_tol |u_1| |v_1|`; zero disables this.
    pub rel_tol: f64,
}

impl AcaConfig {
    pub fn fixed_rank(k_max: usize) -> Self {
        Self { k_max, rel_tol: 0.0 }
    }
}

/// A rank-`k` matrix `U Vᵀ` with column-major factors `U: rows × k` and
/// `V: cols × k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RkMatrix {
    rows: usize,
    cols: usize,
    rank: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl RkMatrix {
    pub fn zero(rows: usize, cols: usize) -> Self {
        Self { rows, cols, rank: 0, u: Vec::new(), v: Vec::new() }
    }

    pub fn from_factors(rows: usize, cols: usize, rank: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != rows * rank {
            return Err(Error::DimensionMismatch { expected: rows * rank, actual: u.len() });
        }
        if v.len() != cols * rank {
            return Err(Error::DimensionMismatch { expected: cols * rank, actual: v.len() });
        }
        Ok(Self { rows, cols, rank, u, v })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// Stored values, `k (rows + cols)`.
    pub fn storage(&self) -> usize {
        self.rank * (self.rows + self.cols)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.rows];
        self.matvec_acc(x, &mut y)?;
        Ok(y)
    }

    /// `y += U (Vᵀ x)`.
    pub fn matvec_acc(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, actual: x.len() });
        }
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch { expected: self.rows, actual: y.len() });
        }
        if self.rank == 0 {
            return Ok(());
        }
        let coeffs: Vec<f64> = self
            .v
            .chunks_exact(self.cols)
            .map(|vl| vl.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect();
        gemv_acc(self.rows, &self.u, &coeffs, y);
        Ok(())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows, self.cols, |i, j| {
            (0..self.rank).map(|l| self.u[i + l * self.rows] * self.v[j + l * self.cols]).sum()
        })
    }
}

pub fn rk_matvec(r: &RkMatrix, x: &[f64]) -> Result<Vec<f64>> {
    r.matvec(x)
}

/// Adaptive cross approximation with partial pivoting of `A[rows, cols]`.
///
/// Step `m` takes the residual row at pivot `i_m` (row 0 first, afterwards the
/// unused row maximizing `|u_{m-1}|`), picks the column pivot `j_m` of largest
/// residual magnitude and appends `v_m = r / r[j_m]` and the residual column
/// `u_m`. A row whose residual vanishes is skipped; once every row has been
/// tried the block is reproduced exactly and the iteration ends.
pub fn aca<E: EntryEvaluator + ?Sized>(ev: &E, rows: &[usize], cols: &[usize], cfg: &AcaConfig) -> Result<RkMatrix> {
    aca_with_pivots(ev, rows, cols, cfg).map(|(r, _)| r)
}

/// [`aca`], also returning the `(row, column)` pivot of every rank-one term
/// as positions within `rows` and `cols`.
pub fn aca_with_pivots<E: EntryEvaluator + ?Sized>(
    ev: &E,
    rows: &[usize],
    cols: &[usize],
    cfg: &AcaConfig,
) -> Result<(RkMatrix, Vec<(usize, usize)>)> {
    let (m, n) = (rows.len(), cols.len());
    if m == 0 || n == 0 {
        return Err(Error::InvalidInput("ACA needs a nonempty block".into()));
    }
    if cfg.k_max == 0 {
        return Err(Error::InvalidInput("ACA needs k_max >= 1".into()));
    }
    let k_limit = cfg.k_max.min(m).min(n);
    let mut u: Vec<f64> = Vec::with_capacity(m * k_limit);
    let mut v: Vec<f64> = Vec::with_capacity(n * k_limit);
    let mut rank = 0;
    let mut pivots = Vec::with_capacity(k_limit);
    let mut row_used = vec![false; m];
    let mut col_used = vec![false; n];
    let mut rows_left = m;
    // Largest original entry seen; residuals below ZERO_PIVOT times this are
    // treated as round-off.
    let mut scale = 0.0f64;
    const ZERO_PIVOT: f64 = 64.0 * f64::EPSILON;
    let mut first_norm = 0.0;
    let mut next_row = Some(0);
    let mut row = vec![0.0; n];
    let mut col = vec![0.0; m];

    while rank < k_limit {
        let Some(i) = next_row else { break };
        row_used[i] = true;
        rows_left -= 1;

        for (b, &cj) in cols.iter().enumerate() {
            row[b] = ev.get_matrix_entry(rows[i], cj)?;
        }
        scale = row.iter().fold(scale, |s, x| s.max(x.abs()));
        for l in 0..rank {
            let ul = u[i + l * m];
            if ul != 0.0 {
                for (rb, vb) in row.iter_mut().zip(&v[l * n..(l + 1) * n]) {
                    *rb -= ul * vb;
                }
            }
        }
        let pivot_col = argmax_abs(&row, |b| !col_used[b]);
        let pivot = pivot_col.map_or(0.0, |b| row[b]);
        if pivot_col.is_none() || pivot.abs() <= ZERO_PIVOT * scale {
            // Zero residual row: try the next unused row.
            next_row = row_used.iter().position(|&used| !used);
            continue;
        }
        let j = pivot_col.expect("checked above");
        col_used[j] = true;
        pivots.push((i, j));

        for (a, &ri) in rows.iter().enumerate() {
            col[a] = ev.get_matrix_entry(ri, cols[j])?;
        }
        scale = col.iter().fold(scale, |s, x| s.max(x.abs()));
        for l in 0..rank {
            let vl = v[j + l * n];
            if vl != 0.0 {
                for (ca, ua) in col.iter_mut().zip(&u[l * m..(l + 1) * m]) {
                    *ca -= vl * ua;
                }
            }
        }
        let inv = 1.0 / pivot;
        v.extend(row.iter().map(|x| x * inv));
        u.extend_from_slice(&col);
        rank += 1;

        let update = norm2(&u[(rank - 1) * m..]) * norm2(&v[(rank - 1) * n..]);
        if rank == 1 {
            first_norm = update;
        } else if cfg.rel_tol > 0.0 && update <= cfg.rel_tol * first_norm {
            break;
        }
        if rows_left == 0 {
            break;
        }
        let last = &u[(rank - 1) * m..];
        next_row = argmax_abs(last, |a| !row_used[a]).or_else(|| row_used.iter().position(|&used| !used));
    }

    Ok((RkMatrix::from_factors(m, n, rank, u, v)?, pivots))
}

fn argmax_abs(values: &[f64], allowed: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in values.iter().enumerate() {
        if allowed(i) && best.is_none_or(|(_, b)| x.abs() > b) {
            best = Some((i, x.abs()));
        }
    }
    best.map(|(i, _)| i)
}
