//! Precomputed H-matrices and their matrix-vector product.
//!
//! Blocks are stored in internal (Morton-sorted) index order, so every leaf
//! touches a contiguous slice of the input and output vectors. Dense blocks
//! share one contiguous value array addressed through an offset table; the
//! application ordering is restored only at the boundaries of [`HMatrix::matvec`].

use serde::Serialize;

use crate::blocktree::{BlockStructure, LeafBlock};
use crate::dense::{gemv_acc, DenseMatrix};
use crate::entry::{fill_block, EntryEvaluator};
use crate::lowrank::{aca, AcaConfig, RkMatrix};
use crate::parallel::{distributed_assemble, partition_tasks};
use crate::{Error, Result};

/// Largest matrix [`assemble_dense_oracle`] builds by default.
pub const DENSE_ORACLE_LIMIT: usize = 8192;

#[derive(Debug, Clone)]
pub struct HMatrix {
    n_rows: usize,
    n_cols: usize,
    row_perm: Vec<usize>,
    col_perm: Vec<usize>,
    dense_blocks: Vec<LeafBlock>,
    dense_offsets: Vec<usize>,
    dense_values: Vec<f64>,
    lowrank_blocks: Vec<LeafBlock>,
    lowrank: Vec<RkMatrix>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StorageStats {
    pub dense_blocks: usize,
    pub admissible_blocks: usize,
    pub dense_entries: usize,
    pub lowrank_entries: usize,
    pub total_entries: usize,
    pub full_entries: usize,
    pub compression_ratio: f64,
}

impl StorageStats {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

pub(crate) fn dense_block<E: EntryEvaluator + ?Sized>(
    ev: &E,
    s: &BlockStructure,
    block: &LeafBlock,
    out: &mut Vec<f64>,
) -> Result<()> {
    let rows = &s.rows.perm[block.rows()];
    let cols = &s.cols.perm[block.cols()];
    fill_block(ev, rows, cols, out).map_err(|e| block.wrap_err(e))
}

pub(crate) fn lowrank_block<E: EntryEvaluator + ?Sized>(
    ev: &E,
    s: &BlockStructure,
    block: &LeafBlock,
    cfg: &AcaConfig,
) -> Result<RkMatrix> {
    let rows = &s.rows.perm[block.rows()];
    let cols = &s.cols.perm[block.cols()];
    aca(ev, rows, cols, cfg).map_err(|e| block.wrap_err(e))
}

impl HMatrix {
    /// Assembles every leaf of `structure`, spreading the tasks over
    /// `workers` threads.
    pub fn assemble<E: EntryEvaluator + ?Sized>(
        ev: &E,
        structure: &BlockStructure,
        aca_cfg: &AcaConfig,
        workers: usize,
    ) -> Result<Self> {
        let part = partition_tasks(&structure.tasks, aca_cfg.k_max, workers)?;
        let shards = distributed_assemble(ev, structure, aca_cfg, &part)?;
        Self::merge(structure, shards.into_iter().map(|s| (s.dense_ids, s.adm_ids, s.matrix)))
    }

    /// Assembles the listed tasks (indices into the structure's lists) on the
    /// calling thread, in the given order. Returns the matrix and the time
    /// spent on dense and low-rank blocks.
    pub fn assemble_tasks<E: EntryEvaluator + ?Sized>(
        ev: &E,
        structure: &BlockStructure,
        dense_ids: &[usize],
        adm_ids: &[usize],
        aca_cfg: &AcaConfig,
    ) -> Result<(Self, f64, f64)> {
        let tasks = &structure.tasks;
        let dense_blocks: Vec<LeafBlock> = dense_ids.iter().map(|&t| tasks.dense[t]).collect();
        let lowrank_blocks: Vec<LeafBlock> = adm_ids.iter().map(|&t| tasks.admissible[t]).collect();

        let start = std::time::Instant::now();
        let mut dense_offsets = Vec::with_capacity(dense_blocks.len() + 1);
        dense_offsets.push(0);
        let total: usize = dense_blocks.iter().map(LeafBlock::size).sum();
        let mut dense_values = Vec::with_capacity(total);
        for b in &dense_blocks {
            dense_block(ev, structure, b, &mut dense_values)?;
            dense_offsets.push(dense_values.len());
        }
        let dense_seconds = start.elapsed().as_secs_f64();

        let start = std::time::Instant::now();
        let lowrank = lowrank_blocks
            .iter()
            .map(|b| lowrank_block(ev, structure, b, aca_cfg))
            .collect::<Result<Vec<_>>>()?;
        let aca_seconds = start.elapsed().as_secs_f64();

        let h = Self {
            n_rows: structure.rows.len(),
            n_cols: structure.cols.len(),
            row_perm: structure.rows.perm.clone(),
            col_perm: structure.cols.perm.clone(),
            dense_blocks,
            dense_offsets,
            dense_values,
            lowrank_blocks,
            lowrank,
        };
        Ok((h, dense_seconds, aca_seconds))
    }

    /// Reassembles per-worker pieces into one matrix whose blocks follow the
    /// global task order.
    pub fn merge(
        structure: &BlockStructure,
        parts: impl IntoIterator<Item = (Vec<usize>, Vec<usize>, HMatrix)>,
    ) -> Result<Self> {
        let tasks = &structure.tasks;
        let mut dense: Vec<Option<&[f64]>> = vec![None; tasks.dense.len()];
        let mut lowrank: Vec<Option<RkMatrix>> = vec![None; tasks.admissible.len()];
        let parts: Vec<_> = parts.into_iter().collect();
        for (dense_ids, adm_ids, h) in &parts {
            for (k, &t) in dense_ids.iter().enumerate() {
                dense[t] = Some(h.dense_block_values(k));
            }
            for (k, &t) in adm_ids.iter().enumerate() {
                lowrank[t] = Some(h.lowrank[k].clone());
            }
        }
        let mut dense_offsets = vec![0];
        let mut dense_values = Vec::with_capacity(tasks.dense_entries());
        for (t, values) in dense.into_iter().enumerate() {
            let values = values.ok_or_else(|| Error::InvalidInput(format!("dense task {t} missing")))?;
            dense_values.extend_from_slice(values);
            dense_offsets.push(dense_values.len());
        }
        let lowrank = lowrank
            .into_iter()
            .enumerate()
            .map(|(t, r)| r.ok_or_else(|| Error::InvalidInput(format!("admissible task {t} missing"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n_rows: structure.rows.len(),
            n_cols: structure.cols.len(),
            row_perm: structure.rows.perm.clone(),
            col_perm: structure.cols.perm.clone(),
            dense_blocks: tasks.dense.clone(),
            dense_offsets,
            dense_values,
            lowrank_blocks: tasks.admissible.clone(),
            lowrank,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn dense_blocks(&self) -> &[LeafBlock] {
        &self.dense_blocks
    }

    pub fn lowrank_blocks(&self) -> &[LeafBlock] {
        &self.lowrank_blocks
    }

    pub fn lowrank(&self) -> &[RkMatrix] {
        &self.lowrank
    }

    pub fn dense_offsets(&self) -> &[usize] {
        &self.dense_offsets
    }

    /// Column-major values of dense block `k`.
    pub fn dense_block_values(&self, k: usize) -> &[f64] {
        &self.dense_values[self.dense_offsets[k]..self.dense_offsets[k + 1]]
    }

    pub fn storage(&self) -> StorageStats {
        let dense_entries = self.dense_values.len();
        let lowrank_entries: usize = self.lowrank.iter().map(RkMatrix::storage).sum();
        let full_entries = self.n_rows * self.n_cols;
        let total_entries = dense_entries + lowrank_entries;
        StorageStats {
            dense_blocks: self.dense_blocks.len(),
            admissible_blocks: self.lowrank_blocks.len(),
            dense_entries,
            lowrank_entries,
            total_entries,
            full_entries,
            compression_ratio: total_entries as f64 / full_entries.max(1) as f64,
        }
    }

    /// `y += H x` with `x` and `y` in internal order. Dense blocks first,
    /// then low-rank blocks, each in stored order.
    pub fn matvec_internal_acc(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch { expected: self.n_cols, actual: x.len() });
        }
        if y.len() != self.n_rows {
            return Err(Error::DimensionMismatch { expected: self.n_rows, actual: y.len() });
        }
        for (k, b) in self.dense_blocks.iter().enumerate() {
            gemv_acc(b.n_rows(), self.dense_block_values(k), &x[b.cols()], &mut y[b.rows()]);
        }
        for (b, r) in self.lowrank_blocks.iter().zip(&self.lowrank) {
            r.matvec_acc(&x[b.cols()], &mut y[b.rows()])?;
        }
        Ok(())
    }

    pub fn to_internal(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch { expected: self.n_cols, actual: x.len() });
        }
        Ok(self.col_perm.iter().map(|&i| x[i]).collect())
    }

    pub fn from_internal(&self, y_int: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        for (s, &i) in self.row_perm.iter().enumerate() {
            y[i] = y_int[s];
        }
        y
    }

    /// `H x` in application order.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let x_int = self.to_internal(x)?;
        let mut y_int = vec![0.0; self.n_rows];
        self.matvec_internal_acc(&x_int, &mut y_int)?;
        Ok(self.from_internal(&y_int))
    }

    /// Expands the represented matrix in application order.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (k, b) in self.dense_blocks.iter().enumerate() {
            let values = self.dense_block_values(k);
            for (c, j) in b.cols().enumerate() {
                for (r, i) in b.rows().enumerate() {
                    m.set(self.row_perm[i], self.col_perm[j], values[r + c * b.n_rows()]);
                }
            }
        }
        for (b, rk) in self.lowrank_blocks.iter().zip(&self.lowrank) {
            let d = rk.to_dense();
            for (c, j) in b.cols().enumerate() {
                for (r, i) in b.rows().enumerate() {
                    m.set(self.row_perm[i], self.col_perm[j], d.get(r, c));
                }
            }
        }
        m
    }
}

/// The full matrix of `ev` in application order, up to `limit` rows and
/// columns.
pub fn assemble_dense_oracle<E: EntryEvaluator + ?Sized>(ev: &E, limit: usize) -> Result<DenseMatrix> {
    let (m, n) = (ev.row_count(), ev.col_count());
    if m.max(n) > limit {
        return Err(Error::ResourceExhausted { what: "dense oracle dimension", requested: m.max(n), limit });
    }
    let rows: Vec<usize> = (0..m).collect();
    let cols: Vec<usize> = (0..n).collect();
    crate::entry::evaluate_block(ev, &rows, &cols)
}
