//! Independent oracles shared by the property and acceptance suites.

#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix3, Matrix4};

use chmorph::fem::FemMatrices;
use chmorph::krylov::{minres, MinresOptions, SolveReport};
use chmorph::mesh::{Face, MeshGrid};
use chmorph::precond::{InnerSolve, MatchingPreconditioner};
use chmorph::sparse::{Block, BlockOperator2x2};
use chmorph::amg::AmgOptions;
use chmorph::PhaseState;

/// Dense P1 matrices built element by element from explicit barycentric
/// formulas: gradients from inverting the vertex matrix, mass from an
/// exact quadratic quadrature rule.
fn dense_oracle(mesh: &MeshGrid) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = mesh.num_nodes();
    let mut m = DMatrix::zeros(n, n);
    let mut k = DMatrix::zeros(n, n);
    for el in mesh.elements() {
        let pts: Vec<[f64; 3]> = el.iter().map(|&v| mesh.node(v)).collect();
        if mesh.dim() == 2 {
            let v = Matrix3::from_fn(|r, c| if c == 0 { 1.0 } else { pts[r][c - 1] });
            let area = v.determinant().abs() / 2.0;
            let inv = v.try_inverse().unwrap();
            // Midpoint rule: exact for quadratics on triangles.
            let mids = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
            for a in 0..3 {
                for b in 0..3 {
                    let ga = [inv[(1, a)], inv[(2, a)]];
                    let gb = [inv[(1, b)], inv[(2, b)]];
                    k[(el[a], el[b])] += area * (ga[0] * gb[0] + ga[1] * gb[1]);
                    let q: f64 = mids.iter().map(|l| l[a] * l[b]).sum();
                    m[(el[a], el[b])] += area * q / 3.0;
                }
            }
        } else {
            let v = Matrix4::from_fn(|r, c| if c == 0 { 1.0 } else { pts[r][c - 1] });
            let vol = v.determinant().abs() / 6.0;
            let inv = v.try_inverse().unwrap();
            let (p, q) = (0.585_410_196_624_968_5, 0.138_196_601_125_010_5);
            let rule: Vec<[f64; 4]> = (0..4)
                .map(|i| {
                    let mut l = [q; 4];
                    l[i] = p;
                    l
                })
                .collect();
            for a in 0..4 {
                for b in 0..4 {
                    let dot: f64 = (1..4).map(|d| inv[(d, a)] * inv[(d, b)]).sum();
                    k[(el[a], el[b])] += vol * dot;
                    let w: f64 = rule.iter().map(|l| l[a] * l[b]).sum();
                    m[(el[a], el[b])] += vol * w / 4.0;
                }
            }
        }
    }
    (m, k)
}

/// Facet mass on the top or bottom boundary from 1D (2D) Gauss rules.
fn dense_boundary_oracle(mesh: &MeshGrid, face: Face) -> DMatrix<f64> {
    let n = mesh.num_nodes();
    let mut out = DMatrix::zeros(n, n);
    for f in mesh.boundary_facets(face) {
        let pts: Vec<[f64; 3]> = f.iter().map(|&v| mesh.node(v)).collect();
        if mesh.dim() == 2 {
            let len = (pts[1][0] - pts[0][0]).hypot(pts[1][1] - pts[0][1]);
            let g = 0.5 / 3f64.sqrt();
            for t in [0.5 - g, 0.5 + g] {
                let phi = [1.0 - t, t];
                for a in 0..2 {
                    for b in 0..2 {
                        out[(f[a], f[b])] += 0.5 * len * phi[a] * phi[b];
                    }
                }
            }
        } else {
            let e1: Vec<f64> = (0..3).map(|d| pts[1][d] - pts[0][d]).collect();
            let e2: Vec<f64> = (0..3).map(|d| pts[2][d] - pts[0][d]).collect();
            let cross = [
                e1[1] * e2[2] - e1[2] * e2[1],
                e1[2] * e2[0] - e1[0] * e2[2],
                e1[0] * e2[1] - e1[1] * e2[0],
            ];
            let area = 0.5 * cross.iter().map(|c| c * c).sum::<f64>().sqrt();
            for l in [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]] {
                for a in 0..3 {
                    for b in 0..3 {
                        out[(f[a], f[b])] += area / 3.0 * l[a] * l[b];
                    }
                }
            }
        }
    }
    out
}

fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

/// Largest assembly error relative to the oracle's largest entry, over
/// mass, stiffness and both boundary masses.
pub fn assembly_error(mesh: &MeshGrid) -> f64 {
    let fem = FemMatrices::assemble(mesh);
    let (m, k) = dense_oracle(mesh);
    let mut worst = max_diff(&fem.mass.to_dense(), &m) / m.abs().max();
    worst = worst.max(max_diff(&fem.stiffness.to_dense(), &k) / k.abs().max());
    for face in [Face::Top, Face::Bottom] {
        let b = dense_boundary_oracle(mesh, face);
        worst = worst.max(max_diff(&fem.boundary(face).to_dense(), &b) / b.abs().max());
    }
    worst
}

/// Preconditioned MINRES on one species' block system with a
/// pseudo-random right-hand side.
pub fn block_solve(mesh: &MeshGrid, tau: f64, eps: f64, seed: u64, tol: f64) -> SolveReport {
    let fem = FemMatrices::assemble(mesh);
    let op = BlockOperator2x2::new_symmetric([
        [Some(Block::new(&fem.mass, 1.0)), Some(Block::new(&fem.stiffness, tau))],
        [Some(Block::new(&fem.stiffness, tau)), Some(Block::new(&fem.mass, -tau / eps))],
    ])
    .unwrap();
    let prec = MatchingPreconditioner::build(
        &fem.mass,
        &fem.stiffness,
        tau,
        eps,
        AmgOptions::default(),
        InnerSolve::Fixed { cycles: 2 },
    )
    .unwrap();
    let mut state = seed;
    let b: Vec<f64> = (0..2 * mesh.num_nodes())
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    let opts = MinresOptions {
        tol,
        max_iter: 400,
        ..Default::default()
    };
    minres(&op, &prec, &b, &opts).1
}

/// True when every residual is at most its predecessor.
pub fn monotone(history: &[f64]) -> bool {
    history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12))
}

/// Bit patterns of every field of a state.
pub fn bits(state: &PhaseState) -> Vec<u64> {
    [&state.phi_p, &state.phi_nfa, &state.mu_p, &state.mu_nfa]
        .into_iter()
        .flat_map(|v| v.iter().map(|x| x.to_bits()))
        .collect()
}

/// Central difference of `f` at `x`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}
