//! Block-diagonal preconditioner for the Cahn-Hilliard saddle-point system
//!
//! ```text
//! A = [ M     tau K         ]      P = [ M  0  ]
//!     [ tau K -(tau/eps) M  ]          [ 0  S~ ]
//! ```
//!
//! with the Schur complement `S = (tau/eps) M + tau^2 K M^{-1} K` replaced by
//! `S~ = L M^{-1} L`, `L = tau K + sqrt(tau/eps) M`. Applying `P^{-1}` needs an
//! approximate solve with `M` for the first block and two solves with `L`
//! around a multiplication by `M` for the second. Every eigenvalue of
//! `S~^{-1} S` lies in `[1/2, 1]` whatever `tau`, `eps` and the mesh are.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;

use crate::amg::{AmgHierarchy, AmgOptions};
use crate::error::{Error, Result};
use crate::krylov::Preconditioner;
use crate::sparse::CsrMatrix;

/// How the inner AMG solves are terminated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerSolve {
    /// V-cycles until the relative residual drops below `tol`.
    Tolerance { tol: f64, max_cycles: usize },
    /// A fixed number of V-cycles. Makes the preconditioner a fixed linear
    /// operator.
    Fixed { cycles: usize },
}

impl Default for InnerSolve {
    fn default() -> Self {
        InnerSolve::Tolerance {
            tol: 1e-4,
            max_cycles: 50,
        }
    }
}

impl InnerSolve {
    pub fn validate(&self) -> std::result::Result<(), String> {
        match *self {
            InnerSolve::Tolerance { tol, max_cycles } => {
                if !(tol > 0.0 && tol < 1.0) {
                    return Err(format!("inner tolerance must lie in (0, 1), got {tol}"));
                }
                if max_cycles == 0 {
                    return Err("inner max_cycles must be positive".into());
                }
            }
            InnerSolve::Fixed { cycles } => {
                if cycles == 0 {
                    return Err("inner cycles must be positive".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct MatchingPreconditioner {
    mass: CsrMatrix,
    amg_mass: AmgHierarchy,
    amg_l: AmgHierarchy,
    tau: f64,
    eps: f64,
    inner: InnerSolve,
    warnings: AtomicUsize,
}

/// `tau K + sqrt(tau/eps) M`.
pub fn shifted_stiffness(mass: &CsrMatrix, stiffness: &CsrMatrix, tau: f64, eps: f64) -> Result<CsrMatrix> {
    CsrMatrix::linear_combination(tau, stiffness, (tau / eps).sqrt(), mass)
}

fn check_inputs(mass: &CsrMatrix, stiffness: &CsrMatrix, tau: f64, eps: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let n = mass.nrows();
    if mass.ncols() != n || stiffness.nrows() != n || stiffness.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "mass is {}x{}, stiffness is {}x{}",
            mass.nrows(),
            mass.ncols(),
            stiffness.nrows(),
            stiffness.ncols()
        )));
    }
    Ok(())
}

impl MatchingPreconditioner {
    pub fn build(
        mass: &CsrMatrix,
        stiffness: &CsrMatrix,
        tau: f64,
        eps: f64,
        amg: AmgOptions,
        inner: InnerSolve,
    ) -> Result<Self> {
        check_inputs(mass, stiffness, tau, eps)?;
        inner.validate().map_err(Error::InvalidArgument)?;
        let l = shifted_stiffness(mass, stiffness, tau, eps)?;
        Ok(Self {
            mass: mass.clone(),
            amg_mass: AmgHierarchy::new(mass, amg)?,
            amg_l: AmgHierarchy::new(&l, amg)?,
            tau,
            eps,
            inner,
            warnings: AtomicUsize::new(0),
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn inner(&self) -> InnerSolve {
        self.inner
    }

    pub fn block_size(&self) -> usize {
        self.mass.nrows()
    }

    pub fn mass_hierarchy(&self) -> &AmgHierarchy {
        &self.amg_mass
    }

    pub fn shifted_hierarchy(&self) -> &AmgHierarchy {
        &self.amg_l
    }

    /// Inner solves that hit their cycle budget since construction (or the
    /// last [`take_warnings`](Self::take_warnings)).
    pub fn warnings(&self) -> usize {
        self.warnings.load(Ordering::Relaxed)
    }

    pub fn take_warnings(&self) -> usize {
        self.warnings.swap(0, Ordering::Relaxed)
    }

    fn inner_solve(&self, h: &AmgHierarchy, b: &[f64], x: &mut [f64]) {
        match self.inner {
            InnerSolve::Fixed { cycles } => h.apply_fixed(b, x, cycles),
            InnerSolve::Tolerance { tol, max_cycles } => {
                let rep = h.solve_into(b, x, tol, max_cycles);
                if !rep.converged {
                    self.warnings.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
    }

    /// `w1 ~ M^{-1} v1` and `w2 ~ L^{-1} M L^{-1} v2`.
    pub fn apply_blocks(&self, v1: &[f64], v2: &[f64], w1: &mut [f64], w2: &mut [f64]) {
        let n = self.block_size();
        assert!(v1.len() == n && v2.len() == n && w1.len() == n && w2.len() == n);
        self.inner_solve(&self.amg_mass, v1, w1);
        let mut t = vec![0.0; n];
        self.inner_solve(&self.amg_l, v2, &mut t);
        let mt = self.mass.mul_vec(&t);
        self.inner_solve(&self.amg_l, &mt, w2);
    }
}

impl Preconditioner for MatchingPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.block_size();
        assert_eq!(r.len(), 2 * n);
        let (r1, r2) = r.split_at(n);
        let (z1, z2) = z.split_at_mut(n);
        self.apply_blocks(r1, r2, z1, z2);
    }
}

/// Generalised eigenvalues of `S x = lambda S~ x`, computed densely with
/// exact inverses, in ascending order.
pub fn schur_eigenvalues(
    mass: &CsrMatrix,
    stiffness: &CsrMatrix,
    tau: f64,
    eps: f64,
    cap: usize,
) -> Result<Vec<f64>> {
    check_inputs(mass, stiffness, tau, eps)?;
    let n = mass.nrows();
    if n > cap {
        return Err(Error::CapExceeded { n, cap });
    }
    let m = mass.to_dense();
    let k = stiffness.to_dense();
    let chol_m = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Solver("mass matrix is not positive definite".into()))?;
    let minv_k = chol_m.solve(&k);
    let mut s: DMatrix<f64> = &m * (tau / eps) + (&k * &minv_k) * (tau * tau);
    let l = &k * tau + &m * (tau / eps).sqrt();
    let mut s_tilde = &l * chol_m.solve(&l);
    s = (&s + s.transpose()) * 0.5;
    s_tilde = (&s_tilde + s_tilde.transpose()) * 0.5;
    let c = s_tilde
        .cholesky()
        .ok_or_else(|| Error::Solver("S~ is not positive definite".into()))?;
    let lower = c.l();
    // C^{-1} S C^{-T}
    let left = lower
        .solve_lower_triangular(&s)
        .ok_or_else(|| Error::Solver("singular Cholesky factor".into()))?;
    let mut sym = lower
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::Solver("singular Cholesky factor".into()))?;
    sym = (&sym + sym.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}

/// Extremal eigenvalues of `S~^{-1} S`, see [`schur_eigenvalues`].
pub fn eigen_bounds_check(
    mass: &CsrMatrix,
    stiffness: &CsrMatrix,
    tau: f64,
    eps: f64,
    cap: usize,
) -> Result<(f64, f64)> {
    let ev = schur_eigenvalues(mass, stiffness, tau, eps, cap)?;
    Ok((ev[0], *ev.last().unwrap()))
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::fem::{assemble_mass, assemble_stiffness};
    use crate::mesh::MeshGrid;
    use crate::sparse::dot;

    fn exact_inner() -> InnerSolve {
        InnerSolve::Tolerance {
            tol: 1e-14,
            max_cycles: 10,
        }
    }

    #[test]
    fn identity_case() {
        let i = CsrMatrix::identity(5);
        let z = CsrMatrix::zeros(5, 5);
        let p = MatchingPreconditioner::build(&i, &z, 1.0, 1.0, AmgOptions::default(), exact_inner()).unwrap();
        let v: Vec<f64> = (0..10).map(|k| k as f64 - 3.0).collect();
        let mut w = vec![0.0; 10];
        p.apply(&v, &mut w);
        for (a, b) in v.iter().zip(&w) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
        let mut w0 = vec![1.0; 10];
        p.apply(&[0.0; 10], &mut w0);
        assert!(w0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn quarter_of_identity() {
        let i = CsrMatrix::identity(4);
        let p = MatchingPreconditioner::build(&i, &i, 1.0, 1.0, AmgOptions::default(), exact_inner()).unwrap();
        let mut v = vec![0.0; 8];
        v[4..].iter_mut().for_each(|x| *x = 4.0);
        let mut w = vec![0.0; 8];
        p.apply(&v, &mut w);
        for &x in &w[4..] {
            assert_relative_eq!(x, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn scalar_eigenvalues() {
        let i = CsrMatrix::identity(3);
        let ev = schur_eigenvalues(&i, &i, 1.0, 1.0, 100).unwrap();
        for e in ev {
            assert_relative_eq!(e, 0.5, epsilon = 1e-14);
        }
        let i2 = CsrMatrix::identity(2);
        let k = CsrMatrix::from_diagonal(&[0.0, 1.0]);
        let ev = schur_eigenvalues(&i2, &k, 1.0, 1.0, 100).unwrap();
        assert_relative_eq!(ev[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(ev[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_stiffness_gives_one() {
        let mesh = MeshGrid::new(2, &[10.0, 2.5], &[6, 4]).unwrap();
        let m = assemble_mass(&mesh);
        let z = CsrMatrix::zeros(m.nrows(), m.nrows());
        let ev = schur_eigenvalues(&m, &z, 1e-2, 1e-3, 1000).unwrap();
        for e in ev {
            assert_relative_eq!(e, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn bounds_on_small_mesh() {
        let mesh = MeshGrid::new(2, &[10.0, 2.5], &[10, 5]).unwrap();
        let m = assemble_mass(&mesh);
        let k = assemble_stiffness(&mesh);
        for (tau, eps) in [(1e-4, 1e-3), (1e-7, 10.0)] {
            let (lo, hi) = eigen_bounds_check(&m, &k, tau, eps, 1000).unwrap();
            assert!(lo >= 0.5 - 1e-10 && hi <= 1.0 + 1e-10, "[{lo}, {hi}]");
        }
    }

    #[test]
    fn cap_and_argument_errors() {
        let i = CsrMatrix::identity(10);
        assert!(matches!(
            eigen_bounds_check(&i, &i, 1.0, 1.0, 5),
            Err(Error::CapExceeded { n: 10, cap: 5 })
        ));
        assert!(MatchingPreconditioner::build(&i, &i, 0.0, 1.0, AmgOptions::default(), exact_inner()).is_err());
        assert!(MatchingPreconditioner::build(&i, &i, 1.0, -1.0, AmgOptions::default(), exact_inner()).is_err());
        let j = CsrMatrix::identity(3);
        assert!(matches!(
            MatchingPreconditioner::build(&i, &j, 1.0, 1.0, AmgOptions::default(), exact_inner()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn fixed_cycles_give_symmetric_linear_operator() {
        let mesh = MeshGrid::new(2, &[10.0, 2.5], &[30, 15]).unwrap();
        let m = assemble_mass(&mesh);
        let k = assemble_stiffness(&mesh);
        let p = MatchingPreconditioner::build(
            &m,
            &k,
            1e-4,
            1e-3,
            AmgOptions::default(),
            InnerSolve::Fixed { cycles: 2 },
        )
        .unwrap();
        let n = 2 * m.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let u = random_vec(n, &mut rng);
            let v = random_vec(n, &mut rng);
            let mut pu = vec![0.0; n];
            let mut pv = vec![0.0; n];
            p.apply(&u, &mut pu);
            p.apply(&v, &mut pv);
            let (a, b) = (dot(&pu, &v), dot(&u, &pv));
            assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()), "{a} vs {b}");
            assert!(dot(&pu, &u) > 0.0);

            let scaled: Vec<f64> = u.iter().map(|x| 3.5 * x).collect();
            let mut ps = vec![0.0; n];
            p.apply(&scaled, &mut ps);
            for (x, y) in ps.iter().zip(&pu) {
                assert!((x - 3.5 * y).abs() <= 1e-12 * x.abs().max(1e-300) + 1e-300);
            }
        }
        assert_eq!(p.warnings(), 0);
    }

    #[test]
    fn budget_exhaustion_is_counted() {
        let mesh = MeshGrid::new(2, &[10.0, 2.5], &[30, 15]).unwrap();
        let m = assemble_mass(&mesh);
        let k = assemble_stiffness(&mesh);
        let p = MatchingPreconditioner::build(
            &m,
            &k,
            1e-4,
            1e-3,
            AmgOptions::default(),
            InnerSolve::Tolerance {
                tol: 1e-15,
                max_cycles: 1,
            },
        )
        .unwrap();
        let n = 2 * m.nrows();
        let v = vec![1.0; n];
        let mut w = vec![0.0; n];
        p.apply(&v, &mut w);
        assert_eq!(p.take_warnings(), 3);
        assert_eq!(p.warnings(), 0);
    }
}
