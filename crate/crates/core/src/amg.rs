//! Classical (Ruge-Stüben) algebraic multigrid.
//!
//! Setup builds, level by level:
//! 1. strength of connection `|a_ij| >= theta * max_{k != i} |a_ik|`,
//! 2. a C/F splitting by the first Ruge-Stüben pass (largest number of
//!    strongly dependent neighbours first),
//! 3. classical interpolation with strong F-F couplings distributed through
//!    common C-neighbours (couplings of the same sign as the diagonal are not
//!    used for distribution; when nothing remains the coupling is lumped
//!    into the diagonal),
//! 4. the Galerkin operator `P^T A P`.
//!
//! One V-cycle uses forward Gauss-Seidel before the coarse correction,
//! backward Gauss-Seidel after it, and an exact dense solve on the coarsest
//! level, so a fixed number of cycles from a zero guess is a symmetric
//! positive definite linear map.

use std::cmp::Reverse;
use std::collections::BTreeSet;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::krylov::{SolveReport, SolveStatus};
use crate::sparse::{norm2, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmgOptions {
    /// Strength-of-connection threshold `theta`.
    pub strength_threshold: f64,
    /// Stop coarsening once a level has at most this many unknowns.
    pub max_coarse: usize,
    pub max_levels: usize,
    /// Gauss-Seidel sweeps before (forward) and after (backward) the coarse
    /// correction.
    pub sweeps: usize,
    /// Largest coarsest level that is factorised densely. Bigger coarsest
    /// levels (only reachable when coarsening stalls) are relaxed instead.
    pub dense_limit: usize,
}

impl Default for AmgOptions {
    fn default() -> Self {
        Self {
            strength_threshold: 0.25,
            max_coarse: 64,
            max_levels: 25,
            sweeps: 1,
            dense_limit: 1500,
        }
    }
}

#[derive(Debug, Clone)]
enum CoarseSolver {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    /// Symmetric Gauss-Seidel sweeps.
    Relax(usize),
}

#[derive(Debug, Clone)]
struct Level {
    a: CsrMatrix,
    inv_diag: Vec<f64>,
    /// Interpolation and restriction to the next level; `None` on the coarsest.
    transfer: Option<(CsrMatrix, CsrMatrix)>,
}

/// Scratch vectors for the transfer between level `l` and `l + 1`.
struct Work {
    res: Vec<f64>,
    xc: Vec<f64>,
    bc: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AmgHierarchy {
    levels: Vec<Level>,
    coarse: CoarseSolver,
    opts: AmgOptions,
}

const C_POINT: u8 = 1;
const F_POINT: u8 = 2;
const UNDECIDED: u8 = 0;

/// Strong couplings of every row (diagonal excluded), values copied from `a`.
pub fn strength_of_connection(a: &CsrMatrix, theta: f64) -> CsrMatrix {
    let n = a.nrows();
    let mut rows = Vec::with_capacity(n);
    let mut vals = Vec::new();
    for i in 0..n {
        let (cols, v) = a.row(i);
        let max_off = cols
            .iter()
            .zip(v)
            .filter(|(&j, _)| j != i)
            .fold(0.0f64, |m, (_, x)| m.max(x.abs()));
        let mut r = Vec::new();
        if max_off > 0.0 {
            for (&j, &x) in cols.iter().zip(v) {
                if j != i && x != 0.0 && x.abs() >= theta * max_off {
                    r.push(j);
                    vals.push(x);
                }
            }
        }
        rows.push(r);
    }
    let mut s = CsrMatrix::from_pattern(n, n, rows);
    s.values_mut().copy_from_slice(&vals);
    s
}

/// First Ruge-Stüben pass. Returns one of `C_POINT`/`F_POINT` per row.
fn rs_splitting(s: &CsrMatrix) -> Vec<u8> {
    let n = s.nrows();
    let t = s.transpose();
    let mut lambda: Vec<usize> = (0..n).map(|i| t.row(i).0.len()).collect();
    let mut state = vec![UNDECIDED; n];
    for i in 0..n {
        let infl = t.row(i).0;
        if lambda[i] == 0 || (lambda[i] == 1 && infl[0] == i) {
            state[i] = F_POINT;
        }
    }
    let mut queue: BTreeSet<(usize, Reverse<usize>)> = (0..n)
        .filter(|&i| state[i] == UNDECIDED)
        .map(|i| (lambda[i], Reverse(i)))
        .collect();

    while let Some((_, Reverse(i))) = queue.pop_last() {
        state[i] = C_POINT;
        for &j in t.row(i).0 {
            if state[j] != UNDECIDED {
                continue;
            }
            queue.remove(&(lambda[j], Reverse(j)));
            state[j] = F_POINT;
            for &k in s.row(j).0 {
                if state[k] == UNDECIDED {
                    queue.remove(&(lambda[k], Reverse(k)));
                    lambda[k] += 1;
                    queue.insert((lambda[k], Reverse(k)));
                }
            }
        }
        for &j in s.row(i).0 {
            if state[j] == UNDECIDED && lambda[j] > 0 {
                queue.remove(&(lambda[j], Reverse(j)));
                lambda[j] -= 1;
                queue.insert((lambda[j], Reverse(j)));
            }
        }
    }
    state
}

fn classical_interpolation(a: &CsrMatrix, s: &CsrMatrix, state: &[u8]) -> CsrMatrix {
    let n = a.nrows();
    let mut coarse_index = vec![usize::MAX; n];
    let mut nc = 0;
    for i in 0..n {
        if state[i] == C_POINT {
            coarse_index[i] = nc;
            nc += 1;
        }
    }
    let mut triplets = Vec::new();
    let mut is_strong_c = vec![false; n];
    let mut extra = vec![0.0; n];
    for i in 0..n {
        if state[i] == C_POINT {
            triplets.push((i, coarse_index[i], 1.0));
            continue;
        }
        let strong = s.row(i).0;
        let ci: Vec<usize> = strong.iter().copied().filter(|&j| state[j] == C_POINT).collect();
        if ci.is_empty() {
            continue;
        }
        for &j in &ci {
            is_strong_c[j] = true;
            extra[j] = 0.0;
        }
        let (cols, vals) = a.row(i);
        let mut denom = 0.0;
        for (&j, &aij) in cols.iter().zip(vals) {
            if j == i {
                denom += aij;
            } else if strong.binary_search(&j).is_err() {
                denom += aij;
            }
        }
        for (&k, &aik) in strong.iter().zip(s.row(i).1) {
            if state[k] != F_POINT {
                continue;
            }
            let akk = a.get(k, k);
            let (kc, kv) = a.row(k);
            let usable = |l: usize, akl: f64| is_strong_c[l] && l != k && akl.signum() != akk.signum() && akl != 0.0;
            let inner: f64 = kc
                .iter()
                .zip(kv)
                .filter(|(&l, &akl)| usable(l, akl))
                .map(|(_, &akl)| akl)
                .sum();
            if inner == 0.0 {
                denom += aik;
            } else {
                for (&l, &akl) in kc.iter().zip(kv) {
                    if usable(l, akl) {
                        extra[l] += aik * akl / inner;
                    }
                }
            }
        }
        for &j in &ci {
            let w = -(a.get(i, j) + extra[j]) / denom;
            triplets.push((i, coarse_index[j], w));
        }
        for &j in &ci {
            is_strong_c[j] = false;
        }
    }
    CsrMatrix::from_triplets(n, nc, &triplets)
}

fn symmetrize(a: &CsrMatrix) -> CsrMatrix {
    CsrMatrix::linear_combination(0.5, a, 0.5, &a.transpose()).expect("square matrix")
}

impl AmgHierarchy {
    pub fn new(a: &CsrMatrix, opts: AmgOptions) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "AMG needs a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.nrows() == 0 {
            return Err(Error::InvalidArgument("AMG needs a non-empty matrix".into()));
        }
        let mut levels = Vec::new();
        let mut current = a.clone();
        loop {
            let n = current.nrows();
            let diag = current.diagonal();
            if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
                return Err(Error::InvalidArgument(format!(
                    "AMG needs a positive diagonal, row {i} has {}",
                    diag[i]
                )));
            }
            if n <= opts.max_coarse || levels.len() + 1 >= opts.max_levels {
                levels.push(Level {
                    a: current,
                    inv_diag: diag.iter().map(|d| 1.0 / d).collect(),
                    transfer: None,
                });
                break;
            }
            let s = strength_of_connection(&current, opts.strength_threshold);
            let state = rs_splitting(&s);
            let nc = state.iter().filter(|&&c| c == C_POINT).count();
            if nc == 0 || nc == n {
                levels.push(Level {
                    a: current,
                    inv_diag: diag.iter().map(|d| 1.0 / d).collect(),
                    transfer: None,
                });
                break;
            }
            let p = classical_interpolation(&current, &s, &state);
            let r = p.transpose();
            let coarse = symmetrize(&r.matmul(&current.matmul(&p)));
            levels.push(Level {
                a: current,
                inv_diag: diag.iter().map(|d| 1.0 / d).collect(),
                transfer: Some((p, r)),
            });
            current = coarse;
        }

        let last = &levels.last().unwrap().a;
        let coarse = if last.nrows() <= opts.dense_limit {
            let dense = last.to_dense();
            match dense.clone().cholesky() {
                Some(c) => CoarseSolver::Cholesky(c),
                None => CoarseSolver::Lu(dense.lu()),
            }
        } else {
            CoarseSolver::Relax(10)
        };
        Ok(Self { levels, coarse, opts })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Unknowns per level, finest first.
    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.a.nrows()).collect()
    }

    /// Stored entries of the operator on every level, finest first.
    pub fn level_nnz(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.a.nnz()).collect()
    }

    pub fn operator_complexity(&self) -> f64 {
        let total: usize = self.levels.iter().map(|l| l.a.nnz()).sum();
        total as f64 / self.levels[0].a.nnz() as f64
    }

    pub fn dim(&self) -> usize {
        self.levels[0].a.nrows()
    }

    pub fn options(&self) -> &AmgOptions {
        &self.opts
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.levels[0].a
    }

    fn workspace(&self) -> Vec<Work> {
        self.levels
            .windows(2)
            .map(|w| Work {
                res: vec![0.0; w[0].a.nrows()],
                xc: vec![0.0; w[1].a.nrows()],
                bc: vec![0.0; w[1].a.nrows()],
            })
            .collect()
    }

    /// Applies `cycles` V-cycles to `A x = b` starting from the given `x`.
    pub fn vcycles(&self, b: &[f64], x: &mut [f64], cycles: usize) {
        let mut ws = self.workspace();
        for _ in 0..cycles {
            self.vcycle(0, b, x, &mut ws);
        }
    }

    /// `x ~ A^{-1} b` from `cycles` V-cycles and a zero initial guess.
    pub fn apply_fixed(&self, b: &[f64], x: &mut [f64], cycles: usize) {
        x.iter_mut().for_each(|v| *v = 0.0);
        self.vcycles(b, x, cycles);
    }

    fn vcycle(&self, l: usize, b: &[f64], x: &mut [f64], ws: &mut [Work]) {
        let level = &self.levels[l];
        let Some((p, r)) = &level.transfer else {
            self.coarse_solve(level, b, x);
            return;
        };
        let (w, rest) = ws.split_first_mut().expect("one workspace per transfer");
        for _ in 0..self.opts.sweeps {
            gs_sweep(&level.a, &level.inv_diag, b, x, false);
        }
        level.a.matvec(x, &mut w.res);
        for (ri, bi) in w.res.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        r.matvec(&w.res, &mut w.bc);
        w.xc.iter_mut().for_each(|v| *v = 0.0);
        self.vcycle(l + 1, &w.bc, &mut w.xc, rest);
        p.gemv(1.0, &w.xc, 1.0, x);
        for _ in 0..self.opts.sweeps {
            gs_sweep(&level.a, &level.inv_diag, b, x, true);
        }
    }

    fn coarse_solve(&self, level: &Level, b: &[f64], x: &mut [f64]) {
        match &self.coarse {
            CoarseSolver::Cholesky(c) => {
                let sol = c.solve(&DVector::from_column_slice(b));
                x.copy_from_slice(sol.as_slice());
            }
            CoarseSolver::Lu(lu) => {
                let sol = lu
                    .solve(&DVector::from_column_slice(b))
                    .unwrap_or_else(|| DVector::zeros(b.len()));
                x.copy_from_slice(sol.as_slice());
            }
            CoarseSolver::Relax(sweeps) => {
                x.iter_mut().for_each(|v| *v = 0.0);
                for _ in 0..*sweeps {
                    sgs_sweep(&level.a, &level.inv_diag, b, x);
                }
            }
        }
    }

    /// Runs V-cycles from `x = 0` until `||b - A x|| <= tol ||b||` or
    /// `max_cycles` cycles have been spent.
    pub fn solve(&self, b: &[f64], tol: f64, max_cycles: usize) -> (Vec<f64>, SolveReport) {
        let mut x = vec![0.0; b.len()];
        let report = self.solve_into(b, &mut x, tol, max_cycles);
        (x, report)
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64], tol: f64, max_cycles: usize) -> SolveReport {
        let start = Instant::now();
        let a = &self.levels[0].a;
        x.iter_mut().for_each(|v| *v = 0.0);
        let bnorm = norm2(b);
        let mut report = SolveReport::trivial();
        report.initial_residual_norm = bnorm;
        if bnorm == 0.0 {
            return report;
        }
        let mut ws = self.workspace();
        let mut res = vec![0.0; b.len()];
        report.status = SolveStatus::MaxIterations;
        report.converged = false;
        for cycle in 1..=max_cycles {
            self.vcycle(0, b, x, &mut ws);
            a.matvec(x, &mut res);
            let rn = res
                .iter()
                .zip(b)
                .map(|(ax, bi)| (bi - ax) * (bi - ax))
                .sum::<f64>()
                .sqrt();
            report.iterations = cycle;
            report.residual_norm = rn;
            report.history.push(rn);
            if !rn.is_finite() {
                report.status = SolveStatus::Breakdown;
                break;
            }
            if rn <= tol * bnorm {
                report.status = SolveStatus::Converged;
                report.converged = true;
                break;
            }
        }
        report.true_residual_norm = Some(report.residual_norm);
        report.wall_time = start.elapsed().as_secs_f64();
        report
    }
}

fn sgs_sweep(a: &CsrMatrix, inv_diag: &[f64], b: &[f64], x: &mut [f64]) {
    gs_sweep(a, inv_diag, b, x, false);
    gs_sweep(a, inv_diag, b, x, true);
}

fn gs_sweep(a: &CsrMatrix, inv_diag: &[f64], b: &[f64], x: &mut [f64], backward: bool) {
    let n = a.nrows();
    let relax = |i: usize, x: &mut [f64]| {
        let acc = b[i] - a.row_dot(i, x);
        x[i] += acc * inv_diag[i];
    };
    if backward {
        for i in (0..n).rev() {
            relax(i, x);
        }
    } else {
        for i in 0..n {
            relax(i, x);
        }
    }
}

/// Dense reference solution, used to validate small hierarchies.
pub fn dense_solve(a: &CsrMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let d: DMatrix<f64> = a.to_dense();
    d.lu().solve(&DVector::from_column_slice(b)).map(|v| v.as_slice().to_vec())
}
