//! Unpreconditioned conjugate gradients over an abstract operator.

use std::time::Instant;

use serde::Serialize;

use crate::dense::{dot, norm2};
use crate::{Error, Result};

/// Hard cap on the default iteration budget.
pub const MAX_ITERS_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CgConfig {
    pub rel_tol: f64,
    /// `None` picks `10 √N`, clamped to `[10, MAX_ITERS_CAP]`.
    pub max_iters: Option<usize>,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-8, max_iters: None }
    }
}

impl CgConfig {
    pub fn iteration_budget(&self, n: usize) -> usize {
        self.max_iters
            .unwrap_or_else(|| ((10.0 * (n as f64).sqrt()).ceil() as usize).clamp(10, MAX_ITERS_CAP))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CgStep {
    pub iter: usize,
    pub rel_residual: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct CgResult {
    pub alpha: Vec<f64>,
    pub iters: usize,
    pub final_rel_residual: f64,
    pub converged: bool,
    pub per_iter_seconds: f64,
    pub history: Vec<CgStep>,
}

/// Solves `A α = f` from a zero initial guess. `apply` computes `A x`.
pub fn cg_solve<F>(mut apply: F, f: &[f64], cfg: &CgConfig) -> Result<CgResult>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if cfg.rel_tol.is_nan() || cfg.rel_tol <= 0.0 {
        return Err(Error::InvalidInput(format!("CG tolerance must be positive, got {}", cfg.rel_tol)));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("right-hand side is not finite".into()));
    }
    let n = f.len();
    let f_norm = norm2(f);
    let mut alpha = vec![0.0; n];
    if f_norm == 0.0 {
        return Ok(CgResult {
            alpha,
            iters: 0,
            final_rel_residual: 0.0,
            converged: true,
            per_iter_seconds: 0.0,
            history: Vec::new(),
        });
    }

    let max_iters = cfg.iteration_budget(n);
    let mut r = f.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut rel = rr.sqrt() / f_norm;
    let mut history = Vec::new();
    let start = Instant::now();
    let mut iters = 0;
    while rel > cfg.rel_tol && iters < max_iters {
        let t = Instant::now();
        let ap = apply(&p)?;
        if ap.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: ap.len() });
        }
        let curvature = dot(&p, &ap);
        if curvature.is_nan() || curvature <= 0.0 {
            return Err(Error::Breakdown { iter: iters + 1, curvature });
        }
        let step = rr / curvature;
        for ((a, r), (p, ap)) in alpha.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
            *a += step * p;
            *r -= step * ap;
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for (p, r) in p.iter_mut().zip(&r) {
            *p = r + beta * *p;
        }
        rr = rr_new;
        rel = rr.sqrt() / f_norm;
        iters += 1;
        let step = CgStep { iter: iters, rel_residual: rel, seconds: t.elapsed().as_secs_f64() };
        log::debug!("{},{:e},{:.6}", step.iter, step.rel_residual, step.seconds);
        history.push(step);
    }
    let total = start.elapsed().as_secs_f64();
    Ok(CgResult {
        alpha,
        iters,
        final_rel_residual: rel,
        converged: rel <= cfg.rel_tol,
        per_iter_seconds: if iters > 0 { total / iters as f64 } else { 0.0 },
        history,
    })
}

/// `‖f − A α‖₂ / ‖f‖₂`, with `A α` recomputed.
pub fn true_rel_residual<F>(mut apply: F, f: &[f64], alpha: &[f64]) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let a_alpha = apply(alpha)?;
    let diff: Vec<f64> = f.iter().zip(&a_alpha).map(|(a, b)| a - b).collect();
    let f_norm = norm2(f);
    Ok(if f_norm == 0.0 { norm2(&diff) } else { norm2(&diff) / f_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMatrix;

    fn diag(x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).collect())
    }

    #[test]
    fn identity_one_iteration() {
        let f = vec![1.0, -2.0, 3.5];
        let res = cg_solve(|x: &[f64]| Ok(x.to_vec()), &f, &CgConfig::default()).unwrap();
        assert_eq!(res.iters, 1);
        assert!(res.converged);
        assert_eq!(res.alpha, f);
    }

    #[test]
    fn zero_rhs() {
        let res = cg_solve(|_: &[f64]| panic!("no products needed"), &[0.0; 5], &CgConfig::default()).unwrap();
        assert_eq!(res.iters, 0);
        assert_eq!(res.alpha, vec![0.0; 5]);
        assert!(res.converged);
    }

    #[test]
    fn diagonal_matches_direct() {
        let f = vec![1.0; 10];
        let res = cg_solve(diag, &f, &CgConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.iters <= 10);
        for (i, a) in res.alpha.iter().enumerate() {
            assert!((a - 1.0 / (i + 1) as f64).abs() <= 1e-10);
        }
        let true_res = true_rel_residual(diag, &f, &res.alpha).unwrap();
        assert!(true_res <= 10.0 * 1e-8);
        assert_eq!(res.history.len(), res.iters);
    }

    #[test]
    fn spd_dense_true_residual() {
        let n = 40;
        let a = DenseMatrix::from_fn(n, n, |i, j| 1.0 / (1.0 + (i as f64 - j as f64).abs()) + if i == j { 1.0 } else { 0.0 });
        let f: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let res = cg_solve(|x: &[f64]| a.matvec(x), &f, &CgConfig::default()).unwrap();
        assert!(res.converged);
        assert!(true_rel_residual(|x: &[f64]| a.matvec(x), &f, &res.alpha).unwrap() <= 1e-7);
    }

    #[test]
    fn breakdown_on_indefinite() {
        let err = cg_solve(|x: &[f64]| Ok(x.iter().map(|v| -v).collect()), &[1.0, 1.0], &CgConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Breakdown { iter: 1, .. }));
    }

    #[test]
    fn budget_exhaustion_is_not_an_error() {
        let cfg = CgConfig { rel_tol: 1e-14, max_iters: Some(2) };
        let res = cg_solve(diag, &[1.0; 10], &cfg).unwrap();
        assert_eq!(res.iters, 2);
        assert!(!res.converged);
    }

    #[test]
    fn default_budget() {
        let cfg = CgConfig::default();
        assert_eq!(cfg.iteration_budget(1), 10);
        assert_eq!(cfg.iteration_budget(384), 196);
        assert!(CgConfig { rel_tol: 0.0, max_iters: None }.iteration_budget(1) == 10);
        assert!(cg_solve(diag, &[1.0, 1.0], &CgConfig { rel_tol: 0.0, max_iters: None }).is_err());
    }
}
