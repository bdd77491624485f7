//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails. Criteria that cannot be measured on the current host are
//! reported as SKIP together with the reason.

use std::time::Instant;

use hmat_core::bem::{assemble_rhs, cube_harmonic};
use hmat_core::entry::{evaluate_block, InverseDistanceEvaluator};
use hmat_core::geometry::make_cube_mesh;
use hmat_core::hmatrix::assemble_dense_oracle;
use hmat_core::lowrank::{aca, aca_with_pivots};
use hmat_core::parallel::{distributed_assemble, distributed_matvec, partition_tasks, Shard};
use hmat_core::solver::{cg_solve, true_rel_residual};
use hmat_core::studies::{convergence_aca, convergence_h, fit_rate, CubeProblem, RunConfig, StudyRow};
use hmat_core::{
    AcaConfig, BlockStructure, BlockTreeConfig, BoundingBox, CgConfig, ClusterTree, DenseMatrix, EntryEvaluator,
    HMatrix, LaplaceSlpEvaluator, Point3, QuadratureConfig, TaskLists,
};
use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass,
    Fail,
    Skip,
}

type Check = Result<(Outcome, String), String>;
type Criterion = (&'static str, fn() -> Check);

fn verdict(ok: bool, detail: String) -> Check {
    Ok((if ok { Outcome::Pass } else { Outcome::Fail }, detail))
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    d / n
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, scale: [f64; 3]) -> Vec<Point3> {
    (0..n)
        .map(|_| Point3::new(rng.random::<f64>() * scale[0], rng.random::<f64>() * scale[1], rng.random::<f64>() * scale[2]))
        .collect()
}

fn cube_config(level: u32, k_max: usize) -> RunConfig {
    RunConfig { level, k_max, ..RunConfig::default() }
}

fn oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_f: f64 = 0.0;
    let mut worst_mv: f64 = 0.0;
    for level in [2, 3] {
        let mesh = make_cube_mesh(level).map_err(|e| e.to_string())?;
        let ev = LaplaceSlpEvaluator::new(&mesh, QuadratureConfig::default()).map_err(|e| e.to_string())?;
        let s = BlockStructure::for_evaluator(&ev, BlockTreeConfig { eta: 1.0, leaf_size: 32 }).map_err(|e| e.to_string())?;
        let h = HMatrix::assemble(&ev, &s, &AcaConfig::fixed_rank(32), 1).map_err(|e| e.to_string())?;
        let a = assemble_dense_oracle(&ev, 1024).map_err(|e| e.to_string())?;
        let diff = h.to_dense().sub(&a).map_err(|e| e.to_string())?;
        worst_f = worst_f.max(diff.frobenius_norm() / a.frobenius_norm());
        for _ in 0..10 {
            let x = random_vec(&mut rng, mesh.len());
            let hx = h.matvec(&x).map_err(|e| e.to_string())?;
            let ax = a.matvec(&x).map_err(|e| e.to_string())?;
            worst_mv = worst_mv.max(rel_l2(&hx, &ax));
        }
    }
    verdict(
        worst_f <= 1e-6 && worst_mv <= 1e-6,
        format!("max |H-A|_F/|A|_F = {worst_f:.2e}, max matvec rel err = {worst_mv:.2e} (limit 1e-6)"),
    )
}

fn study_points(rows: &[StudyRow]) -> Result<Vec<(usize, f64)>, String> {
    rows.iter()
        .map(|r| match r {
            Ok(r) => Ok((r.param, r.error)),
            Err((p, e)) => Err(format!("run {p} failed: {e}")),
        })
        .collect()
}

fn discretization_convergence() -> Check {
    let rows = convergence_h(&cube_config(2, 64), &[2, 3, 4, 5]);
    let pts = study_points(&rows)?;
    let decreasing = pts.windows(2).all(|w| w[1].1 < w[0].1);
    let rate = fit_rate(&pts).ok_or("rate fit failed")?;
    let errs: Vec<String> = pts.iter().map(|(n, e)| format!("N={n}:{e:.3e}")).collect();
    verdict(
        decreasing && (1.0..=1.6).contains(&rate),
        format!("{} strictly decreasing={decreasing} rate={rate:.3} (window [1.0, 1.6])", errs.join(" ")),
    )
}

fn aca_convergence() -> Check {
    let ks = [4, 8, 16, 32, 64];
    let rows = convergence_aca(&cube_config(4, 64), &ks);
    let pts = study_points(&rows)?;
    // The largest rank defines the stagnation level; an error within half of
    // it counts as being on the plateau.
    let floor = pts.last().unwrap().1;
    let on_plateau = |e: f64| (e - floor).abs() <= 0.5 * floor;
    let monotone = pts.windows(2).all(|w| w[1].1 <= w[0].1 || (on_plateau(w[0].1) && on_plateau(w[1].1)));
    let (e4, e64) = (pts[0].1, floor);
    let ratio = e64 / e4;
    let decay_ok = ratio <= 0.5 || on_plateau(e4);
    let stagnation = (pts[4].1 - pts[3].1).abs() <= 0.5 * pts[4].1;
    let errs: Vec<String> = pts.iter().map(|(k, e)| format!("k={k}:{e:.3e}")).collect();
    verdict(
        monotone && decay_ok && stagnation,
        format!(
            "{} non-increasing up to plateau={monotone} e64/e4={ratio:.3} e4 on plateau={} stagnation={stagnation}",
            errs.join(" "),
            on_plateau(e4)
        ),
    )
}

fn imbalance_ok(loads: &[u64], costs: &[u64]) -> bool {
    let p = loads.len() as f64;
    let mean = loads.iter().sum::<u64>() as f64 / p;
    let max = *loads.iter().max().unwrap_or(&0) as f64;
    let max_task = *costs.iter().max().unwrap_or(&0) as f64;
    max <= mean + max_task
}

fn partitions(tasks: &TaskLists, shards: &[Shard]) -> bool {
    let mut dense: Vec<usize> = shards.iter().flat_map(|s| s.dense_ids.iter().copied()).collect();
    let mut adm: Vec<usize> = shards.iter().flat_map(|s| s.adm_ids.iter().copied()).collect();
    dense.sort_unstable();
    adm.sort_unstable();
    dense.into_iter().eq(0..tasks.dense.len()) && adm.into_iter().eq(0..tasks.admissible.len())
}

fn distributed_semantics() -> Check {
    let mesh = make_cube_mesh(3).map_err(|e| e.to_string())?;
    let ev = LaplaceSlpEvaluator::new(&mesh, QuadratureConfig::default()).map_err(|e| e.to_string())?;
    let s = BlockStructure::for_evaluator(&ev, BlockTreeConfig::default()).map_err(|e| e.to_string())?;
    let aca_cfg = AcaConfig::fixed_rank(32);
    let x = random_vec(&mut ChaCha8Rng::seed_from_u64(4), mesh.len());
    let dense_costs: Vec<u64> = s.tasks.dense.iter().map(|b| b.size() as u64).collect();
    let adm_costs: Vec<u64> = s.tasks.admissible.iter().map(|b| (32 * (b.n_rows() + b.n_cols())) as u64).collect();
    let mut y1: Option<Vec<f64>> = None;
    let (mut worst, mut all_partition, mut all_balanced) = (0.0f64, true, true);
    for p in [1, 2, 4, 8] {
        let part = partition_tasks(&s.tasks, 32, p).map_err(|e| e.to_string())?;
        let shards = distributed_assemble(&ev, &s, &aca_cfg, &part).map_err(|e| e.to_string())?;
        all_partition &= partitions(&s.tasks, &shards);
        all_balanced &= imbalance_ok(&part.dense_load, &dense_costs) && imbalance_ok(&part.adm_load, &adm_costs);
        let y = distributed_matvec(&shards, &x).map_err(|e| e.to_string())?;
        match &y1 {
            None => y1 = Some(y),
            Some(r) => {
                let scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let d = r.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                worst = worst.max(d / scale);
            }
        }
    }
    verdict(
        worst <= 1e-12 && all_partition && all_balanced,
        format!("max |y_p - y_1|_inf/|y_1|_inf = {worst:.2e} (limit 1e-12), exact partition={all_partition}, LPT bound={all_balanced}"),
    )
}

fn setup_speedup() -> Check {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    if cores < 4 {
        return Ok((Outcome::Skip, format!("host exposes {cores} core(s); criterion needs at least 4")));
    }
    let time = |p: usize| -> Result<f64, String> {
        let cfg = RunConfig { workers: p, repeats: 2, ..cube_config(4, 32) };
        Ok(CubeProblem::build(&cfg).map_err(|e| e.to_string())?.setup_seconds)
    };
    let (t1, t4) = (time(1)?, time(4)?);
    let speedup = t1 / t4;
    verdict(speedup >= 2.0, format!("setup p=1 {t1:.2}s, p=4 {t4:.2}s, speed-up {speedup:.2} (limit 2.0, {cores} cores)"))
}

fn solver_contract() -> Check {
    let problem = CubeProblem::build(&cube_config(3, 32)).map_err(|e| e.to_string())?;
    let cfg = CgConfig::default();
    let cg = cg_solve(|x| problem.matvec(x), &problem.rhs, &cfg).map_err(|e| e.to_string())?;
    let true_res = true_rel_residual(|x| problem.matvec(x), &problem.rhs, &cg.alpha).map_err(|e| e.to_string())?;
    let ev = LaplaceSlpEvaluator::new(&problem.mesh, QuadratureConfig::default()).map_err(|e| e.to_string())?;
    let a = assemble_dense_oracle(&ev, 1024).map_err(|e| e.to_string())?;
    let dense = cg_solve(|x| a.matvec(x), &problem.rhs, &cfg).map_err(|e| e.to_string())?;
    let diff = rel_l2(&cg.alpha, &dense.alpha);
    verdict(
        cg.converged && cg.final_rel_residual <= 1e-8 && true_res <= 1e-7 && diff <= 1e-4,
        format!(
            "{} iterations, residual {:.2e} (limit 1e-8), true residual {true_res:.2e} (limit 1e-7), vs dense CG {diff:.2e} (limit 1e-4)",
            cg.iters, cg.final_rel_residual
        ),
    )
}

fn cluster_tree_ok(pts: &[Point3], leaf: usize) -> bool {
    let Ok(t) = ClusterTree::build(pts, leaf) else { return false };
    let n = pts.len();
    let mut seen = vec![false; n];
    for &i in &t.perm {
        seen[i] = true;
    }
    let root = t.root();
    let mut ok = seen.iter().all(|&s| s) && root.lo == 0 && root.hi == n;
    for c in t.clusters() {
        let inside = t.sorted_points[c.range()].iter().all(|&p| c.bbox.contains(p));
        ok &= inside;
        match c.children {
            Some([l, r]) => {
                let (l, r) = (t.get(l), t.get(r));
                ok &= c.len() > leaf && l.lo == c.lo && l.hi == r.lo && r.hi == c.hi;
                ok &= l.len() == c.len().div_ceil(2);
                ok &= c.bbox == l.bbox.union(r.bbox);
            }
            None => {
                ok &= !c.is_empty() && c.len() <= leaf;
                ok &= Some(c.bbox) == BoundingBox::from_points(&t.sorted_points[c.range()]);
            }
        }
    }
    let bound = (n as f64 / leaf as f64).log2().ceil().max(0.0) as usize + 1;
    ok && t.depth() <= bound
}

fn coverage_ok(tl: &TaskLists, m: usize, n: usize) -> bool {
    let mut hit = vec![false; m * n];
    for b in tl.admissible.iter().chain(&tl.dense) {
        for i in b.rows() {
            for j in b.cols() {
                if std::mem::replace(&mut hit[i * n + j], true) {
                    return false;
                }
            }
        }
    }
    hit.into_iter().all(|h| h)
}

struct Outer {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl EntryEvaluator for Outer {
    fn row_count(&self) -> usize {
        self.a.len()
    }
    fn col_count(&self) -> usize {
        self.b.len()
    }
    fn row_point(&self, i: usize) -> Point3 {
        Point3::new(i as f64, 0.0, 0.0)
    }
    fn col_point(&self, j: usize) -> Point3 {
        Point3::new(j as f64, 1.0, 0.0)
    }
    fn get_matrix_entry(&self, i: usize, j: usize) -> hmat_core::Result<f64> {
        Ok(self.a[i] * self.b[j])
    }
}

fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn structural_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut report = Vec::new();
    let mut all = true;
    let mut part = |name: &str, start: Instant, ok: bool| {
        let secs = start.elapsed().as_secs_f64();
        all &= ok && secs < 30.0;
        report.push(format!("{name}={} ({secs:.1}s)", if ok { "ok" } else { "FAILED" }));
    };

    let t = Instant::now();
    let mut ok = true;
    for case in 0..40 {
        let n = 1 + rng.random_range(0..4096usize);
        let leaf = 1 + rng.random_range(0..48usize);
        let scale = if case % 2 == 0 { [1.0, 1.0, 1.0] } else { [10.0, 0.5, 0.01] };
        ok &= cluster_tree_ok(&random_points(&mut rng, n, scale), leaf);
    }
    for level in 0..5 {
        ok &= make_cube_mesh(level).is_ok_and(|m| cluster_tree_ok(&m.centers, 32));
    }
    part("cluster-tree", t, ok);

    let t = Instant::now();
    let mut ok = true;
    for _ in 0..12 {
        let m = 1 + rng.random_range(0..4096usize);
        let n = 1 + rng.random_range(0..4096usize);
        let rows = random_points(&mut rng, m, [1.0, 1.0, 1.0]);
        let cols = random_points(&mut rng, n, [2.0, 1.0, 0.5]);
        let eta = rng.random_range(0.2..2.0);
        let leaf = 4 + rng.random_range(0..40usize);
        ok &= BlockStructure::build(&rows, &cols, BlockTreeConfig { eta, leaf_size: leaf })
            .is_ok_and(|s| coverage_ok(&s.tasks, m, n));
    }
    part("block-coverage", t, ok);

    let t = Instant::now();
    let mut ok = true;
    for _ in 0..50 {
        let m = 2 + rng.random_range(0..40usize);
        let n = 2 + rng.random_range(0..40usize);
        let rows = random_points(&mut rng, m, [1.0, 1.0, 1.0]);
        let cols: Vec<Point3> = random_points(&mut rng, n, [1.0, 1.0, 1.0]).into_iter().map(|p| p + Point3::new(1.5, 0.0, 0.0)).collect();
        let ev = InverseDistanceEvaluator { rows, cols, self_value: 0.0 };
        let (ri, ci): (Vec<usize>, Vec<usize>) = ((0..m).collect(), (0..n).collect());
        let k = 1 + rng.random_range(0..8usize);
        let Ok((r, pivots)) = aca_with_pivots(&ev, &ri, &ci, &AcaConfig::fixed_rank(k)) else { ok = false; continue };
        let (approx, exact) = (r.to_dense(), evaluate_block(&ev, &ri, &ci).unwrap());
        let scale = exact.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for &(pi, pj) in &pivots {
            ok &= (0..n).all(|j| (approx.get(pi, j) - exact.get(pi, j)).abs() <= 1e-10 * scale);
            ok &= (0..m).all(|i| (approx.get(i, pj) - exact.get(i, pj)).abs() <= 1e-10 * scale);
        }
    }
    part("aca-interpolation", t, ok);

    let t = Instant::now();
    let mut ok = true;
    for _ in 0..50 {
        let m = 1 + rng.random_range(0..30usize);
        let n = 1 + rng.random_range(0..30usize);
        let ev = Outer { a: random_vec(&mut rng, m), b: random_vec(&mut rng, n) };
        let (ri, ci): (Vec<usize>, Vec<usize>) = ((0..m).collect(), (0..n).collect());
        let r = aca(&ev, &ri, &ci, &AcaConfig::fixed_rank(1)).unwrap();
        let exact = evaluate_block(&ev, &ri, &ci).unwrap();
        ok &= r.rank() <= 1 && max_abs_diff(&r.to_dense(), &exact) <= 1e-14;
    }
    part("rank-one", t, ok);

    let t = Instant::now();
    let mut ok = true;
    for level in [1, 2] {
        let mesh = make_cube_mesh(level).unwrap();
        let base = QuadratureConfig::default();
        let (c, f) = (LaplaceSlpEvaluator::new(&mesh, base).unwrap(), LaplaceSlpEvaluator::new(&mesh, base.refined(2)).unwrap());
        for i in 0..mesh.len() {
            for j in i..mesh.len() {
                let (a, b) = (c.galerkin_entry(i, j).unwrap(), f.galerkin_entry(i, j).unwrap());
                ok &= (a - b).abs() < 1e-6 * b.abs();
            }
        }
        let rhs_c = assemble_rhs(&mesh, cube_harmonic, base.sing_order);
        let rhs_f = assemble_rhs(&mesh, cube_harmonic, base.sing_order + 2);
        ok &= rhs_c.iter().zip(&rhs_f).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1e-3));
    }
    part("quadrature-self-convergence", t, ok);

    let t = Instant::now();
    let mut ok = true;
    for level in [2, 3] {
        let mesh = make_cube_mesh(level).unwrap();
        let ev = LaplaceSlpEvaluator::new(&mesh, QuadratureConfig::default()).unwrap();
        let a = assemble_dense_oracle(&ev, 384).unwrap();
        let m = DMatrix::from_column_slice(a.rows(), a.cols(), a.as_slice());
        ok &= m == m.transpose() && m.cholesky().is_some();
    }
    part("galerkin-spd", t, ok);

    verdict(all, report.join(" "))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("oracle equivalence", oracle_equivalence),
        ("discretization convergence", discretization_convergence),
        ("ACA convergence", aca_convergence),
        ("distributed semantics", distributed_semantics),
        ("parallel setup speed-up", setup_speedup),
        ("solver contract", solver_contract),
        ("structural invariants", structural_invariants),
    ];
    let mut failed = 0;
    for (id, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (tag, detail) = match check() {
            Ok((Outcome::Pass, d)) => ("PASS", d),
            Ok((Outcome::Skip, d)) => ("SKIP", d),
            Ok((Outcome::Fail, d)) => {
                failed += 1;
                ("FAIL", d)
            }
            Err(e) => {
                failed += 1;
                ("FAIL", format!("error: {e}"))
            }
        };
        println!("[{tag}] criterion {} {name}: {detail} [{:.1}s]", id + 1, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
