//! End-to-end runs on the cube model problem: discretization and ACA
//! convergence studies and the setup/solve benchmark.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bem::{assemble_rhs, cube_harmonic, worst_case_error, LaplaceSlpEvaluator, QuadratureConfig};
use crate::blocktree::{BlockStructure, BlockTreeConfig};
use crate::geometry::{make_cube_mesh, make_eval_points, SurfaceMesh};
use crate::hmatrix::StorageStats;
use crate::lowrank::AcaConfig;
use crate::parallel::{distributed_assemble, distributed_matvec, load_report, partition_tasks, Shard, WorkerLoad};
use crate::solver::{cg_solve, true_rel_residual, CgConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub geometry: String,
    pub level: u32,
    pub eta: f64,
    pub leaf_size: usize,
    pub k_max: usize,
    pub aca_rel_tol: f64,
    pub cg_tol: f64,
    pub cg_max_iters: Option<usize>,
    pub workers: usize,
    pub quadrature: QuadratureConfig,
    pub grid_n: usize,
    pub seed: u64,
    pub repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: "cube".into(),
            level: 2,
            eta: 1.0,
            leaf_size: 32,
            k_max: 32,
            aca_rel_tol: 0.0,
            cg_tol: 1e-8,
            cg_max_iters: None,
            workers: 1,
            quadrature: QuadratureConfig::default(),
            grid_n: 5,
            seed: 0,
            repeats: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.geometry != "cube" {
            return Err(Error::InvalidInput(format!("unsupported geometry {:?}", self.geometry)));
        }
        if self.workers == 0 || self.repeats == 0 || self.grid_n == 0 || self.k_max == 0 {
            return Err(Error::InvalidInput("workers, repeats, grid_n and k_max must be positive".into()));
        }
        if self.cg_tol.is_nan() || self.cg_tol <= 0.0 {
            return Err(Error::InvalidInput("cg_tol must be positive".into()));
        }
        self.quadrature.validate()
    }

    pub fn block_config(&self) -> BlockTreeConfig {
        BlockTreeConfig { eta: self.eta, leaf_size: self.leaf_size }
    }

    pub fn aca_config(&self) -> AcaConfig {
        AcaConfig { k_max: self.k_max, rel_tol: self.aca_rel_tol }
    }

    pub fn cg_config(&self) -> CgConfig {
        CgConfig { rel_tol: self.cg_tol, max_iters: self.cg_max_iters }
    }

    /// `# key=value` lines, one per field.
    pub fn metadata_header(&self) -> String {
        let value = serde_json::to_value(self).expect("plain struct serializes");
        let mut out = String::new();
        if let serde_json::Value::Object(map) = value {
            for (k, v) in map {
                match v {
                    serde_json::Value::Object(inner) => {
                        for (k2, v2) in inner {
                            writeln!(out, "# {k}.{k2}={v2}").unwrap();
                        }
                    }
                    v => writeln!(out, "# {k}={v}").unwrap(),
                }
            }
        }
        out
    }
}

/// A cube system assembled over `workers` shards.
pub struct CubeProblem {
    pub mesh: SurfaceMesh,
    pub structure: BlockStructure,
    pub shards: Vec<Shard>,
    pub rhs: Vec<f64>,
    /// Wall time of the slowest worker.
    pub setup_seconds: f64,
}

impl CubeProblem {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let mesh = make_cube_mesh(cfg.level)?;
        let ev = LaplaceSlpEvaluator::new(&mesh, cfg.quadrature)?;
        let structure = BlockStructure::for_evaluator(&ev, cfg.block_config())?;
        let part = partition_tasks(&structure.tasks, cfg.k_max, cfg.workers)?;
        let aca = cfg.aca_config();
        let mut shards = Vec::new();
        let mut setup_total = 0.0;
        for _ in 0..cfg.repeats {
            shards = distributed_assemble(&ev, &structure, &aca, &part)?;
            setup_total += shards.iter().map(|s| s.wall_seconds).fold(0.0, f64::max);
        }
        let rhs = assemble_rhs(&mesh, cube_harmonic, cfg.quadrature.sing_order);
        Ok(Self { mesh, structure, shards, rhs, setup_seconds: setup_total / cfg.repeats as f64 })
    }

    pub fn n(&self) -> usize {
        self.mesh.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        distributed_matvec(&self.shards, x)
    }

    pub fn storage(&self) -> StorageStats {
        let mut total = self.shards[0].matrix.storage();
        for s in &self.shards[1..] {
            let st = s.matrix.storage();
            total.dense_blocks += st.dense_blocks;
            total.admissible_blocks += st.admissible_blocks;
            total.dense_entries += st.dense_entries;
            total.lowrank_entries += st.lowrank_entries;
            total.total_entries += st.total_entries;
        }
        total.compression_ratio = total.total_entries as f64 / total.full_entries as f64;
        total
    }

    pub fn loads(&self) -> Vec<WorkerLoad> {
        load_report(&self.shards)
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub n: usize,
    pub alpha: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
    pub final_rel_residual: f64,
    pub true_rel_residual: f64,
    pub cg_seconds_per_iter: f64,
    pub setup_seconds: f64,
    pub error: f64,
    pub storage: StorageStats,
}

/// Assembles, solves and measures the worst-case potential error.
pub fn solve_cube(cfg: &RunConfig) -> Result<SolveOutcome> {
    let problem = CubeProblem::build(cfg)?;
    let cg = cg_solve(|x| problem.matvec(x), &problem.rhs, &cfg.cg_config())?;
    if !cg.converged {
        log::warn!("CG stopped after {} iterations at relative residual {:e}", cg.iters, cg.final_rel_residual);
    }
    let true_res = true_rel_residual(|x| problem.matvec(x), &problem.rhs, &cg.alpha)?;
    let pts = make_eval_points(cfg.grid_n);
    let error = worst_case_error(&problem.mesh, &cg.alpha, &pts, cube_harmonic, &cfg.quadrature)?;
    Ok(SolveOutcome {
        n: problem.n(),
        iters: cg.iters,
        converged: cg.converged,
        final_rel_residual: cg.final_rel_residual,
        true_rel_residual: true_res,
        cg_seconds_per_iter: cg.per_iter_seconds,
        setup_seconds: problem.setup_seconds,
        error,
        storage: problem.storage(),
        alpha: cg.alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRow {
    /// `N` for the discretization study, `k` for the ACA study.
    pub param: usize,
    pub error: f64,
    pub iters: usize,
    pub converged: bool,
    pub storage: StorageStats,
}

/// Outcome of one study row; failures are kept and the study continues.
pub type StudyRow = std::result::Result<ErrorRow, (usize, Error)>;

fn error_row(param: usize, cfg: &RunConfig) -> StudyRow {
    match solve_cube(cfg) {
        Ok(out) => Ok(ErrorRow { param, error: out.error, iters: out.iters, converged: out.converged, storage: out.storage }),
        Err(e) => {
            log::error!("run with parameter {param} failed: {e}");
            Err((param, e))
        }
    }
}

/// ε(h) over the given refinement levels.
pub fn convergence_h(base: &RunConfig, levels: &[u32]) -> Vec<StudyRow> {
    levels
        .iter()
        .map(|&level| {
            let cfg = RunConfig { level, ..base.clone() };
            error_row(6 * 4usize.pow(level), &cfg)
        })
        .collect()
}

/// ε at a fixed level over increasing ACA ranks.
pub fn convergence_aca(base: &RunConfig, ks: &[usize]) -> Vec<StudyRow> {
    ks.iter()
        .map(|&k_max| {
            let cfg = RunConfig { k_max, ..base.clone() };
            error_row(k_max, &cfg)
        })
        .collect()
}

/// Least-squares algebraic rate `r` in `ε ≈ c N^{-r}`.
pub fn fit_rate(points: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(n, e)| *n > 0 && *e > 0.0 && e.is_finite())
        .map(|&(n, e)| ((n as f64).ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub k: usize,
    pub p: usize,
    pub setup_seconds: f64,
    pub cg_seconds_per_iter: f64,
    pub iters: usize,
    /// `‖y_p − y_1‖∞ / ‖y_1‖∞` for a seeded random `x`.
    pub matvec_rel_diff: f64,
    pub storage: StorageStats,
    #[serde(skip)]
    pub loads: Vec<WorkerLoad>,
}

/// Setup and CG timings for each worker count. Every product is compared with
/// the first entry of `p_list`.
pub fn benchmark(base: &RunConfig, p_list: &[usize]) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    let mut reference: Option<Vec<f64>> = None;
    for &p in p_list {
        let cfg = RunConfig { workers: p, ..base.clone() };
        let problem = CubeProblem::build(&cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let x: Vec<f64> = (0..problem.n()).map(|_| rng.random::<f64>() - 0.5).collect();
        let y = problem.matvec(&x)?;
        let matvec_rel_diff = match &reference {
            None => {
                reference = Some(y);
                0.0
            }
            Some(y1) => {
                let scale = y1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let diff = y1.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                if scale > 0.0 { diff / scale } else { diff }
            }
        };
        let start = Instant::now();
        let cg = cg_solve(|v| problem.matvec(v), &problem.rhs, &cfg.cg_config())?;
        let cg_seconds = start.elapsed().as_secs_f64();
        rows.push(BenchRow {
            n: problem.n(),
            k: cfg.k_max,
            p,
            setup_seconds: problem.setup_seconds,
            cg_seconds_per_iter: if cg.iters > 0 { cg_seconds / cg.iters as f64 } else { 0.0 },
            iters: cg.iters,
            matvec_rel_diff,
            storage: problem.storage(),
            loads: problem.loads(),
        });
    }
    Ok(rows)
}
