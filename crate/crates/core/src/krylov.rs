//! Preconditioned MINRES for symmetric, possibly indefinite systems.
//!
//! Follows the Paige-Saunders recurrences with an SPD preconditioner `P`.
//! The stopping test compares the preconditioned residual norm
//! `||r||_{P^{-1}}` (available for free from the recurrence) against
//! `tol` times its initial value.

use std::time::Instant;

use crate::sparse::{axpy, dot, norm2, LinearOperator};

/// Approximate inverse `z = P^{-1} r` of a symmetric positive definite `P`.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

impl<F: Fn(&[f64], &mut [f64])> Preconditioner for F {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self(r, z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    /// Iteration budget exhausted before reaching the tolerance.
    MaxIterations,
    /// The recurrence hit a zero or negative denominator: an indefinite
    /// preconditioner, a singular operator or non-finite data.
    Breakdown,
}

/// Outcome of one iterative solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final residual in the solver's own norm (preconditioned for MINRES).
    pub residual_norm: f64,
    pub initial_residual_norm: f64,
    /// Euclidean `||b - A x||` recomputed at exit, when available.
    pub true_residual_norm: Option<f64>,
    pub converged: bool,
    pub status: SolveStatus,
    /// Seconds.
    pub wall_time: f64,
    /// Residual norm after each iteration.
    pub history: Vec<f64>,
}

impl SolveReport {
    pub(crate) fn trivial() -> Self {
        Self {
            iterations: 0,
            residual_norm: 0.0,
            initial_residual_norm: 0.0,
            true_residual_norm: Some(0.0),
            converged: true,
            status: SolveStatus::Converged,
            wall_time: 0.0,
            history: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MinresOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Measure the tolerance against `||b||_{P^{-1}}` instead of the initial
    /// residual. Only differs for a nonzero starting guess, and costs one
    /// extra preconditioner application then.
    pub rhs_relative: bool,
}

impl Default for MinresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 500,
            rhs_relative: false,
        }
    }
}

/// Lanczos quantities recorded during a solve.
///
/// With `q_k = r_k / beta_k` and `z_k = P^{-1} q_k` the recurrence reads
/// `A z_k = beta_k q_{k-1} + alpha_k q_k + beta_{k+1} q_{k+1}`.
#[derive(Debug, Clone, Default)]
pub struct LanczosTrace {
    pub alpha: Vec<f64>,
    /// `beta[0]` is the initial preconditioned residual norm.
    pub beta: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
}

/// Solves `A x = b` from `x = 0`.
pub fn minres<A, P>(op: &A, prec: &P, b: &[f64], opts: &MinresOptions) -> (Vec<f64>, SolveReport)
where
    A: LinearOperator + ?Sized,
    P: Preconditioner + ?Sized,
{
    let mut x = vec![0.0; b.len()];
    let report = minres_with(op, prec, b, &mut x, opts, None);
    (x, report)
}

/// Solves `A x = b` starting from the contents of `x`, optionally recording
/// the Lanczos basis.
pub fn minres_with<A, P>(
    op: &A,
    prec: &P,
    b: &[f64],
    x: &mut [f64],
    opts: &MinresOptions,
    mut trace: Option<&mut LanczosTrace>,
) -> SolveReport
where
    A: LinearOperator + ?Sized,
    P: Preconditioner + ?Sized,
{
    let start = Instant::now();
    let n = b.len();
    assert_eq!(op.dim(), n);
    assert_eq!(x.len(), n);

    let mut r1 = vec![0.0; n];
    op.apply(x, &mut r1);
    for (r, bi) in r1.iter_mut().zip(b) {
        *r = bi - *r;
    }
    let mut y = vec![0.0; n];
    prec.apply(&r1, &mut y);
    let rz = dot(&r1, &y);

    let mut report = SolveReport::trivial();
    let finish = |mut report: SolveReport, x: &[f64]| {
        let mut ax = vec![0.0; n];
        op.apply(x, &mut ax);
        let res: f64 = ax.iter().zip(b).map(|(a, bi)| (bi - a) * (bi - a)).sum::<f64>().sqrt();
        report.true_residual_norm = Some(res);
        report.wall_time = start.elapsed().as_secs_f64();
        report
    };

    if !(rz >= 0.0) || !rz.is_finite() {
        report.status = SolveStatus::Breakdown;
        report.converged = false;
        report.residual_norm = f64::NAN;
        return finish(report, x);
    }
    let beta1 = rz.sqrt();
    report.initial_residual_norm = beta1;
    let target = if opts.rhs_relative && x.iter().any(|&v| v != 0.0) {
        let mut pb = vec![0.0; n];
        prec.apply(b, &mut pb);
        opts.tol * dot(b, &pb).max(0.0).sqrt()
    } else {
        opts.tol * beta1
    };
    report.residual_norm = beta1;
    if beta1 == 0.0 || beta1 <= target {
        return finish(report, x);
    }
    if let Some(t) = trace.as_deref_mut() {
        t.beta.push(beta1);
        t.q.push(r1.iter().map(|v| v / beta1).collect());
    }

    let mut r2 = r1.clone();
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];

    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln) = (0.0, 0.0);
    let mut phibar = beta1;
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);

    report.status = SolveStatus::MaxIterations;
    report.converged = false;
    for itn in 1..=opts.max_iter {
        let s = 1.0 / beta;
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = s * yi;
        }
        op.apply(&v, &mut y);
        if itn >= 2 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        prec.apply(&r2, &mut y);
        oldb = beta;
        let rz = dot(&r2, &y);
        if !(rz >= 0.0) || !rz.is_finite() {
            report.status = SolveStatus::Breakdown;
            report.iterations = itn;
            break;
        }
        beta = rz.sqrt();

        if let Some(t) = trace.as_deref_mut() {
            t.alpha.push(alfa);
            t.beta.push(beta);
            t.z.push(v.clone());
            t.q.push(if beta > 0.0 { r2.iter().map(|u| u / beta).collect() } else { vec![0.0; n] });
        }

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta);
        if gamma == 0.0 || !gamma.is_finite() {
            report.status = SolveStatus::Breakdown;
            report.iterations = itn;
            break;
        }
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }

        report.iterations = itn;
        report.history.push(phibar);
        report.residual_norm = phibar;
        if phibar <= target {
            report.status = SolveStatus::Converged;
            report.converged = true;
            break;
        }
        if beta == 0.0 {
            // Invariant Krylov space: x is already the minimiser.
            report.status = SolveStatus::Converged;
            report.converged = phibar <= target;
            break;
        }
    }
    if report.status == SolveStatus::Breakdown {
        report.residual_norm = phibar;
    }
    finish(report, x)
}

/// Euclidean norm of `b - A x`.
pub fn residual_norm<A: LinearOperator + ?Sized>(op: &A, b: &[f64], x: &[f64]) -> f64 {
    let mut ax = vec![0.0; b.len()];
    op.apply(x, &mut ax);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, a)| bi - a).collect();
    norm2(&r)
}
