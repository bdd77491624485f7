//! Task-based distribution of H-matrix assembly and matvec over `p` workers.
//!
//! Each of the two task lists is split into `p` sub-lists balanced by stored
//! size. Worker `w` rebuilds the global block structure, checks that it
//! agrees with everyone else's, and assembles only its own tasks into a
//! [`Shard`]. Shards never read each other's storage. A matvec hands every
//! worker a full copy of `x`, lets it compute the partial product over its
//! blocks, and sums the partial results in ascending worker order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;

use serde::Serialize;

use crate::blocktree::{BlockStructure, TaskLists};
use crate::entry::EntryEvaluator;
use crate::hmatrix::HMatrix;
use crate::lowrank::AcaConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerPartition {
    pub workers: usize,
    pub dense_assign: Vec<usize>,
    pub adm_assign: Vec<usize>,
    /// Stored dense entries per worker.
    pub dense_load: Vec<u64>,
    /// A-priori low-rank storage `k_max (|τ| + |σ|)` per worker.
    pub adm_load: Vec<u64>,
}

impl WorkerPartition {
    pub fn dense_tasks(&self, worker: usize) -> Vec<usize> {
        tasks_of(&self.dense_assign, worker)
    }

    pub fn adm_tasks(&self, worker: usize) -> Vec<usize> {
        tasks_of(&self.adm_assign, worker)
    }
}

fn tasks_of(assign: &[usize], worker: usize) -> Vec<usize> {
    assign.iter().enumerate().filter(|(_, &w)| w == worker).map(|(t, _)| t).collect()
}

/// Greedy longest-processing-time assignment: tasks by decreasing cost (ties
/// by index) go to the least-loaded worker (ties by lowest id).
pub fn lpt_assign(costs: &[u64], workers: usize) -> (Vec<usize>, Vec<u64>) {
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by_key(|&t| (Reverse(costs[t]), t));
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = (0..workers).map(|w| Reverse((0, w))).collect();
    let mut assign = vec![0; costs.len()];
    let mut loads = vec![0; workers];
    for t in order {
        let Reverse((load, w)) = heap.pop().expect("at least one worker");
        assign[t] = w;
        loads[w] = load + costs[t];
        heap.push(Reverse((loads[w], w)));
    }
    (assign, loads)
}

/// Balances dense tasks by `|τ||σ|` and admissible tasks by
/// `k_max (|τ| + |σ|)`, each list independently.
pub fn partition_tasks(tl: &TaskLists, k_max: usize, workers: usize) -> Result<WorkerPartition> {
    if workers == 0 {
        return Err(Error::InvalidInput("need at least one worker".into()));
    }
    let dense_costs: Vec<u64> = tl.dense.iter().map(|b| b.size() as u64).collect();
    let adm_costs: Vec<u64> = tl
        .admissible
        .iter()
        .map(|b| (k_max * (b.n_rows() + b.n_cols())) as u64)
        .collect();
    let (dense_assign, dense_load) = lpt_assign(&dense_costs, workers);
    let (adm_assign, adm_load) = lpt_assign(&adm_costs, workers);
    Ok(WorkerPartition { workers, dense_assign, adm_assign, dense_load, adm_load })
}

/// The blocks one worker owns.
#[derive(Debug, Clone)]
pub struct Shard {
    pub worker: usize,
    /// Global dense task indices, ascending, aligned with the shard's dense blocks.
    pub dense_ids: Vec<usize>,
    /// Global admissible task indices, ascending.
    pub adm_ids: Vec<usize>,
    pub matrix: HMatrix,
    /// Fingerprint of the task lists the worker derived on its own.
    pub task_fingerprint: u64,
    pub dense_seconds: f64,
    pub aca_seconds: f64,
    /// Wall time of the whole worker, structure check included.
    pub wall_seconds: f64,
}

fn assemble_worker<E: EntryEvaluator + ?Sized>(
    ev: &E,
    structure: &BlockStructure,
    aca_cfg: &AcaConfig,
    part: &WorkerPartition,
    worker: usize,
) -> Result<Shard> {
    let start = std::time::Instant::now();
    // Every worker derives the global structure itself.
    let local = structure.rebuild_tasks()?;
    let task_fingerprint = local.fingerprint();
    if task_fingerprint != structure.tasks.fingerprint() {
        return Err(Error::InvalidInput("worker derived a different block structure".into()));
    }
    let dense_ids = part.dense_tasks(worker);
    let adm_ids = part.adm_tasks(worker);
    let (matrix, dense_seconds, aca_seconds) = HMatrix::assemble_tasks(ev, structure, &dense_ids, &adm_ids, aca_cfg)?;
    let wall_seconds = start.elapsed().as_secs_f64();
    Ok(Shard { worker, dense_ids, adm_ids, matrix, task_fingerprint, dense_seconds, aca_seconds, wall_seconds })
}

/// Assembles one shard per worker, each on its own thread.
pub fn distributed_assemble<E: EntryEvaluator + ?Sized>(
    ev: &E,
    structure: &BlockStructure,
    aca_cfg: &AcaConfig,
    part: &WorkerPartition,
) -> Result<Vec<Shard>> {
    if part.dense_assign.len() != structure.tasks.dense.len()
        || part.adm_assign.len() != structure.tasks.admissible.len()
    {
        return Err(Error::InvalidInput("partition does not match the task lists".into()));
    }
    let wrap = |worker: usize| move |e: Error| Error::Worker { worker, source: Box::new(e) };
    if part.workers == 1 {
        return Ok(vec![assemble_worker(ev, structure, aca_cfg, part, 0).map_err(wrap(0))?]);
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..part.workers)
            .map(|w| scope.spawn(move || assemble_worker(ev, structure, aca_cfg, part, w).map_err(wrap(w))))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|panic| std::panic::resume_unwind(panic)))
            .collect()
    })
}

/// `y = Σ_w H_w x`, every worker working on its own copy of `x`, partial
/// results summed in ascending worker order.
pub fn distributed_matvec(shards: &[Shard], x: &[f64]) -> Result<Vec<f64>> {
    let first = shards.first().ok_or_else(|| Error::InvalidInput("no shards".into()))?;
    let x_int = first.matrix.to_internal(x)?;
    let n_rows = first.matrix.n_rows();
    let partial = |shard: &Shard| -> Result<Vec<f64>> {
        let replica = x_int.clone();
        let mut y = vec![0.0; n_rows];
        shard.matrix.matvec_internal_acc(&replica, &mut y)?;
        Ok(y)
    };
    let partials: Vec<Vec<f64>> = if shards.len() == 1 {
        vec![partial(first)?]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = shards.iter().map(|s| scope.spawn(move || partial(s))).collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|panic| std::panic::resume_unwind(panic)))
                .collect::<Result<Vec<_>>>()
        })?
    };
    let mut order: Vec<usize> = (0..shards.len()).collect();
    order.sort_by_key(|&k| shards[k].worker);
    let mut y_int = partials[order[0]].clone();
    for &k in &order[1..] {
        for (a, b) in y_int.iter_mut().zip(&partials[k]) {
            *a += b;
        }
    }
    Ok(first.matrix.from_internal(&y_int))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorkerLoad {
    pub worker: usize,
    pub dense_entries: usize,
    pub adm_entries: usize,
    pub dense_seconds: f64,
    pub aca_seconds: f64,
}

/// Per-worker storage and assembly time.
pub fn load_report(shards: &[Shard]) -> Vec<WorkerLoad> {
    let mut loads: Vec<WorkerLoad> = shards
        .iter()
        .map(|s| {
            let st = s.matrix.storage();
            WorkerLoad {
                worker: s.worker,
                dense_entries: st.dense_entries,
                adm_entries: st.lowrank_entries,
                dense_seconds: s.dense_seconds,
                aca_seconds: s.aca_seconds,
            }
        })
        .collect();
    loads.sort_by_key(|l| l.worker);
    loads
}

/// CSV with header `worker_id,kind,entries,seconds`, one dense and one
/// admissible row per worker.
pub fn write_load_csv<W: Write>(loads: &[WorkerLoad], mut out: W) -> std::io::Result<()> {
    writeln!(out, "worker_id,kind,entries,seconds")?;
    for l in loads {
        writeln!(out, "{},dense,{},{:.6}", l.worker, l.dense_entries, l.dense_seconds)?;
        writeln!(out, "{},admissible,{},{:.6}", l.worker, l.adm_entries, l.aca_seconds)?;
    }
    Ok(())
}
