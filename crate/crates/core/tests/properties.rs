mod common;

use proptest::prelude::*;

use chmorph::fem::FemMatrices;
use chmorph::physics::{log_potential, log_potential_derivs, poly_potential, poly_potential_derivs, Potential};
use chmorph::{MeshGrid, ModelParams, Simulation, SolverOptions, Species};
use common::{assembly_error, bits, block_solve, central_difference, monotone};

fn grid() -> impl Strategy<Value = (usize, Vec<f64>, Vec<usize>)> {
    prop_oneof![
        (2usize..=5, 2usize..=5, 0.1f64..10.0, 0.1f64..10.0)
            .prop_map(|(nx, ny, lx, ly)| (2, vec![lx, ly], vec![nx, ny])),
        (2usize..=3, 2usize..=3, 2usize..=3, 0.2f64..3.0)
            .prop_map(|(nx, ny, nz, l)| (3, vec![l, 0.5 * l, 1.5 * l], vec![nx, ny, nz])),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn assembly_matches_dense_oracle((dim, ext, counts) in grid()) {
        let mesh = MeshGrid::new(dim, &ext, &counts).unwrap();
        prop_assert!(assembly_error(&mesh) <= 1e-13);
        let fem = FemMatrices::assemble(&mesh);
        let volume: f64 = ext.iter().product();
        let total: f64 = fem.mass.values().iter().sum();
        prop_assert!((total - volume).abs() <= 1e-13 * volume);
        let k1 = fem.stiffness.mul_vec(&vec![1.0; mesh.num_nodes()]);
        let scale = fem.stiffness.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(k1.iter().all(|v| v.abs() <= 1e-12 * scale));
    }

    #[test]
    fn poly_derivatives_match_finite_differences(p in 0.0f64..1.0, frac in 0.0f64..1.0) {
        let n = frac * (1.0 - p);
        let (dp, dn) = poly_potential_derivs(&[p], &[n]);
        let h = 1e-6;
        let fd_p = central_difference(|x| poly_potential(x, n), p, h);
        let fd_n = central_difference(|x| poly_potential(p, x), n, h);
        prop_assert!((dp[0] - fd_p).abs() <= 1e-6 * (1.0 + fd_p.abs()));
        prop_assert!((dn[0] - fd_n).abs() <= 1e-6 * (1.0 + fd_n.abs()));
    }

    #[test]
    fn log_derivatives_match_finite_differences(
        p in 0.01f64..0.98,
        frac in 0.01f64..0.99,
        chi in 0.0f64..3.0,
        np in 1.0f64..50.0,
    ) {
        let n = frac * (0.99 - p);
        let params = ModelParams { chi_p_nfa: chi, n_p: np, ..ModelParams::default() };
        let d = log_potential_derivs(&[p], &[n], &params);
        prop_assert_eq!(d.clamped, 0);
        let h = 1e-7;
        let f = |a: f64, b: f64| log_potential(a, b, &params);
        let fd_p = central_difference(|x| f(x, n), p, h);
        let fd_n = central_difference(|x| f(p, x), n, h);
        prop_assert!((d.df_dp[0] - fd_p).abs() <= 1e-6 * (1.0 + fd_p.abs()));
        prop_assert!((d.df_dnfa[0] - fd_n).abs() <= 1e-6 * (1.0 + fd_n.abs()));
    }

    #[test]
    fn minres_residuals_never_increase(
        nx in 3usize..=8,
        log_tau in -7.0f64..1.0,
        log_eps in -4.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let (tau, eps) = (10f64.powf(log_tau), 10f64.powf(log_eps));
        let mesh = MeshGrid::new(2, &[10.0, 2.5], &[nx, nx.div_ceil(2).max(2)]).unwrap();
        let report = block_solve(&mesh, tau, eps, seed, 1e-10);
        prop_assert!(report.converged);
        prop_assert!(monotone(&report.history), "{:?}", report.history);
    }
}

fn small_sim(params: ModelParams, solver: SolverOptions) -> Simulation {
    let mesh = MeshGrid::new(2, &[10.0, 2.5], &[24, 12]).unwrap();
    Simulation::new(mesh, params, solver).unwrap()
}

#[test]
fn mass_is_conserved_without_boundary_flux() {
    let params = ModelParams {
        k_evap: 0.0,
        g_p: 0.0,
        g_nfa: 0.0,
        ..ModelParams::default()
    };
    let solver = SolverOptions::default();
    let sim = small_sim(params, solver);
    let mut state = sim.initial_state();
    for _ in 0..100 {
        let (next, _) = sim.step(&state).unwrap();
        for s in Species::BOTH {
            let before = sim.mass_of(&state, s);
            let after = sim.mass_of(&next, s);
            assert!(((after - before) / before).abs() <= 1e-8, "{s:?}: {before} -> {after}");
        }
        state = next;
    }
}

#[test]
fn mass_changes_by_the_boundary_flux() {
    let params = ModelParams {
        k_evap: 0.5,
        g_p: 0.3,
        g_nfa: 0.1,
        h_p: 0.2,
        patterning: true,
        ..ModelParams::default()
    };
    let tau = params.tau;
    let solver = SolverOptions::default();
    let sim = small_sim(params, solver);
    let mut state = sim.initial_state();
    for _ in 0..20 {
        let (next, _) = sim.step(&state).unwrap();
        for s in Species::BOTH {
            let flux: f64 = sim.boundary_load(&state, s).iter().sum();
            let change = sim.mass_of(&next, s) - sim.mass_of(&state, s);
            let mass = sim.mass_of(&state, s);
            assert!((change - tau * flux).abs() <= 1e-8 * mass, "{s:?}: {change} vs {}", tau * flux);
        }
        state = next;
    }
}

#[test]
fn runs_are_deterministic() {
    for potential in [Potential::Polynomial, Potential::Logarithmic] {
        let params = ModelParams { potential, seed: 11, ..ModelParams::default() };
        let serial = small_sim(params.clone(), SolverOptions::default());
        let parallel = small_sim(params, SolverOptions { deterministic: false, ..SolverOptions::default() });
        let (a, ra) = serial.advance(serial.initial_state(), 5).unwrap();
        let (b, _) = serial.advance(serial.initial_state(), 5).unwrap();
        let (c, rc) = parallel.advance(parallel.initial_state(), 5).unwrap();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(bits(&a), bits(&c));
        let its = |r: &[chmorph::StepReport]| r.iter().map(|s| s.worst_iterations()).collect::<Vec<_>>();
        assert_eq!(its(&ra), its(&rc));
    }
}

#[test]
fn swapping_species_swaps_the_solution() {
    for potential in [Potential::Polynomial, Potential::Logarithmic] {
        let params = ModelParams {
            potential,
            g_p: 0.05,
            g_nfa: 0.05,
            ..ModelParams::default()
        };
        let sim = small_sim(params, SolverOptions::default());
        let start = sim.initial_state();
        let (a, _) = sim.advance(start.clone(), 4).unwrap();
        let (b, _) = sim.advance(start.swapped(), 4).unwrap();
        assert_eq!(bits(&a.swapped()), bits(&b), "{potential:?}");
    }
}
