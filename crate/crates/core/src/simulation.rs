//! Semi-implicit time stepping of the two coupled Cahn-Hilliard equations.
//!
//! Per species `i` and step `k -> k+1` the symmetric block system
//!
//! ```text
//! [ M       tau_i K           ] [phi] = [ M phi^k + tau b^k          ]
//! [ tau_i K -(tau_i/eps_i) M  ] [mu ]   [ -(tau_i/eps_i) M f_i(phi^k) ]
//! ```
//!
//! is solved with MINRES and the matching preconditioner, where
//! `tau_i = tau * M_i`, `f_i` is the bulk potential derivative and `b^k`
//! the boundary load: substrate term on the bottom face, evaporation term on
//! the top face. Everything on the right-hand side is evaluated at step `k`,
//! so the two species only couple through old values and can be solved in
//! either order or concurrently.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::amg::AmgOptions;
use crate::error::{Error, Result};
use crate::fem::{assemble_boundary_load, FemMatrices};
use crate::krylov::{minres_with, MinresOptions, SolveReport, SolveStatus};
use crate::mesh::{Face, MeshGrid};
use crate::physics::{evaporation_flux_top, potential_derivs, surface_flux_bottom, ModelParams, Species};
use crate::precond::{InnerSolve, MatchingPreconditioner};
use crate::sparse::{dot, Block, BlockOperator2x2};

/// Starting vector for each MINRES solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialGuess {
    /// Zero vector; tolerances are then relative to the right-hand side.
    #[default]
    Zero,
    /// Previous step's `(phi, mu)`.
    Previous,
    /// Linear extrapolation `2 x^k - x^{k-1}` from the last two steps.
    Extrapolate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerMode {
    #[default]
    Tolerance,
    Fixed,
}

/// Linear-solver settings for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub outer_tol: f64,
    pub max_iter: usize,
    pub inner_mode: InnerMode,
    pub inner_tol: f64,
    pub inner_max_cycles: usize,
    /// V-cycles per inner solve in fixed mode.
    pub inner_cycles: usize,
    pub strength_threshold: f64,
    pub max_coarse: usize,
    pub initial_guess: InitialGuess,
    /// A state with `|phi| > divergence_bound` anywhere counts as diverged.
    pub divergence_bound: f64,
    /// Solve the two species one after the other on the calling thread.
    pub deterministic: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            outer_tol: 1e-7,
            max_iter: 500,
            inner_mode: InnerMode::Tolerance,
            inner_tol: 1e-4,
            inner_max_cycles: 50,
            inner_cycles: 1,
            strength_threshold: 0.25,
            max_coarse: 64,
            initial_guess: InitialGuess::Zero,
            divergence_bound: 10.0,
            deterministic: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.outer_tol > 0.0 && self.outer_tol < 1.0) {
            return Err(("outer_tol", format!("outer_tol must lie in (0, 1), got {}", self.outer_tol)));
        }
        if self.max_iter == 0 {
            return Err(("max_iter", "max_iter must be positive".into()));
        }
        if let Err(msg) = self.inner().validate() {
            let key = match self.inner_mode {
                InnerMode::Tolerance if !(self.inner_tol > 0.0 && self.inner_tol < 1.0) => "inner_tol",
                InnerMode::Tolerance => "inner_max_cycles",
                InnerMode::Fixed => "inner_cycles",
            };
            return Err((key, msg));
        }
        if !(self.strength_threshold > 0.0 && self.strength_threshold < 1.0) {
            return Err((
                "strength_threshold",
                format!("strength_threshold must lie in (0, 1), got {}", self.strength_threshold),
            ));
        }
        if self.max_coarse == 0 {
            return Err(("max_coarse", "max_coarse must be positive".into()));
        }
        if !(self.divergence_bound > 1.0) {
            return Err(("divergence_bound", "divergence_bound must exceed 1".into()));
        }
        Ok(())
    }

    pub fn inner(&self) -> InnerSolve {
        match self.inner_mode {
            InnerMode::Tolerance => InnerSolve::Tolerance {
                tol: self.inner_tol,
                max_cycles: self.inner_max_cycles,
            },
            InnerMode::Fixed => InnerSolve::Fixed {
                cycles: self.inner_cycles,
            },
        }
    }

    pub fn amg(&self) -> AmgOptions {
        AmgOptions {
            strength_threshold: self.strength_threshold,
            max_coarse: self.max_coarse,
            ..AmgOptions::default()
        }
    }

    fn minres(&self) -> MinresOptions {
        MinresOptions {
            tol: self.outer_tol,
            max_iter: self.max_iter,
            rhs_relative: true,
        }
    }
}

/// Nodal coefficient vectors at one time level. The solvent fraction is
/// `1 - phi_p - phi_nfa` and never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub phi_p: Vec<f64>,
    pub phi_nfa: Vec<f64>,
    pub mu_p: Vec<f64>,
    pub mu_nfa: Vec<f64>,
    pub t: f64,
    pub step: usize,
}

impl PhaseState {
    /// Constant fields, zero chemical potentials.
    pub fn uniform(n: usize, phi_p: f64, phi_nfa: f64) -> Self {
        Self {
            phi_p: vec![phi_p; n],
            phi_nfa: vec![phi_nfa; n],
            mu_p: vec![0.0; n],
            mu_nfa: vec![0.0; n],
            t: 0.0,
            step: 0,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.phi_p.len()
    }

    pub fn phi(&self, s: Species) -> &[f64] {
        match s {
            Species::Polymer => &self.phi_p,
            Species::Acceptor => &self.phi_nfa,
        }
    }

    pub fn mu(&self, s: Species) -> &[f64] {
        match s {
            Species::Polymer => &self.mu_p,
            Species::Acceptor => &self.mu_nfa,
        }
    }

    pub fn solvent(&self) -> Vec<f64> {
        self.phi_p
            .iter()
            .zip(&self.phi_nfa)
            .map(|(&p, &n)| 1.0 - (p + n))
            .collect()
    }

    /// `[phi; mu]` of one species.
    pub fn block(&self, s: Species) -> Vec<f64> {
        let mut v = self.phi(s).to_vec();
        v.extend_from_slice(self.mu(s));
        v
    }

    /// The same state with the two species exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            phi_p: self.phi_nfa.clone(),
            phi_nfa: self.phi_p.clone(),
            mu_p: self.mu_nfa.clone(),
            mu_nfa: self.mu_p.clone(),
            t: self.t,
            step: self.step,
        }
    }

    fn is_finite(&self) -> bool {
        [&self.phi_p, &self.phi_nfa, &self.mu_p, &self.mu_nfa]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    fn max_abs_phi(&self) -> f64 {
        self.phi_p
            .iter()
            .chain(&self.phi_nfa)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Mean plus i.i.d. uniform noise in `[-init_ampl, init_ampl]` per node,
/// polymer first, from a ChaCha8 stream seeded with `seed`.
pub fn initialize(mesh: &MeshGrid, params: &ModelParams, seed: u64) -> PhaseState {
    let n = mesh.num_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mean, ampl) = (params.init_mean, params.init_ampl);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n)
            .map(|_| {
                if ampl == 0.0 {
                    mean
                } else {
                    mean + ampl * rng.gen_range(-1.0..=1.0)
                }
            })
            .collect()
    };
    let phi_p = draw(&mut rng);
    let phi_nfa = draw(&mut rng);
    PhaseState {
        phi_p,
        phi_nfa,
        mu_p: vec![0.0; n],
        mu_nfa: vec![0.0; n],
        t: 0.0,
        step: 0,
    }
}

/// Diagnostics of one time step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    /// Indexed like [`Species::BOTH`].
    pub reports: [SolveReport; 2],
    /// Wall time of the whole step, assembly included.
    pub seconds: f64,
    /// Nodes clamped by the logarithmic potential.
    pub clamped: usize,
    /// Inner AMG solves that ran out of cycles.
    pub inner_warnings: usize,
    /// Interior nodes with `phi_p + phi_nfa > 1 + 1e-6` after the step.
    pub sum_violations: usize,
}

impl StepReport {
    pub fn worst_iterations(&self) -> usize {
        self.reports[0].iterations.max(self.reports[1].iterations)
    }

    pub fn solve_seconds(&self) -> f64 {
        self.reports[0].wall_time + self.reports[1].wall_time
    }
}

/// Everything that stays fixed while stepping: mesh, matrices, parameters
/// and the preconditioners.
#[derive(Debug)]
pub struct Simulation {
    mesh: MeshGrid,
    matrices: FemMatrices,
    params: ModelParams,
    solver: SolverOptions,
    preconds: Vec<MatchingPreconditioner>,
    precond_of: [usize; 2],
    x_coords: Vec<f64>,
    interior: Vec<bool>,
}

fn species_index(s: Species) -> usize {
    match s {
        Species::Polymer => 0,
        Species::Acceptor => 1,
    }
}

impl Simulation {
    pub fn new(mesh: MeshGrid, params: ModelParams, solver: SolverOptions) -> Result<Self> {
        params.check()?;
        solver
            .validate()
            .map_err(|(_, msg)| Error::InvalidArgument(msg))?;
        let matrices = FemMatrices::assemble(&mesh);
        let mut preconds: Vec<MatchingPreconditioner> = Vec::new();
        let mut precond_of = [0; 2];
        for s in Species::BOTH {
            let (tau, eps) = (params.scaled_tau(s), params.eps(s));
            let found = preconds.iter().position(|p| p.tau() == tau && p.eps() == eps);
            precond_of[species_index(s)] = match found {
                Some(i) => i,
                None => {
                    preconds.push(MatchingPreconditioner::build(
                        &matrices.mass,
                        &matrices.stiffness,
                        tau,
                        eps,
                        solver.amg(),
                        solver.inner(),
                    )?);
                    preconds.len() - 1
                }
            };
        }
        let x_coords = mesh.nodes().iter().map(|p| p[0]).collect();
        let mut interior = vec![true; mesh.num_nodes()];
        for face in [Face::Top, Face::Bottom] {
            for n in mesh.boundary_nodes(face) {
                interior[n] = false;
            }
        }
        Ok(Self {
            mesh,
            matrices,
            params,
            solver,
            preconds,
            precond_of,
            x_coords,
            interior,
        })
    }

    pub fn mesh(&self) -> &MeshGrid {
        &self.mesh
    }

    pub fn matrices(&self) -> &FemMatrices {
        &self.matrices
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn solver(&self) -> &SolverOptions {
        &self.solver
    }

    pub fn preconditioner(&self, s: Species) -> &MatchingPreconditioner {
        &self.preconds[self.precond_of[species_index(s)]]
    }

    pub fn initial_state(&self) -> PhaseState {
        initialize(&self.mesh, &self.params, self.params.seed)
    }

    /// `1^T M phi` for one species.
    pub fn mass_of(&self, state: &PhaseState, s: Species) -> f64 {
        let mphi = self.matrices.mass.mul_vec(state.phi(s));
        mphi.iter().sum()
    }

    /// Discrete L2 norm `sqrt(v^T M v)`.
    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        dot(v, &self.matrices.mass.mul_vec(v)).max(0.0).sqrt()
    }

    /// The scaled symmetric operator of one species.
    pub fn operator(&self, s: Species) -> BlockOperator2x2<'_> {
        let tau = self.params.scaled_tau(s);
        let eps = self.params.eps(s);
        let m = &self.matrices.mass;
        let k = &self.matrices.stiffness;
        BlockOperator2x2::new_symmetric([
            [Some(Block::new(m, 1.0)), Some(Block::new(k, tau))],
            [Some(Block::new(k, tau)), Some(Block::new(m, -tau / eps))],
        ])
        .expect("mass and stiffness share one pattern size")
    }

    /// Boundary load `b^k` of one species: substrate term on the bottom face
    /// plus evaporation term on the top face, both at step `k`.
    pub fn boundary_load(&self, state: &PhaseState, s: Species) -> Vec<f64> {
        let phi = state.phi(s);
        let x_max = self.mesh.extents()[0];
        let sub = surface_flux_bottom(phi, s, &self.params, &self.x_coords, x_max);
        let mut load = assemble_boundary_load(&self.matrices.boundary_bottom, &sub);
        let evap = evaporation_flux_top(phi, &state.solvent(), &self.params);
        let top = assemble_boundary_load(&self.matrices.boundary_top, &evap);
        for (l, t) in load.iter_mut().zip(top) {
            *l += t;
        }
        load
    }

    /// Right-hand side `[M phi^k + tau b^k; -(tau_i/eps_i) M f_i(phi^k)]`.
    pub fn assemble_step_rhs(&self, state: &PhaseState, s: Species) -> Vec<f64> {
        let (dp, dn, _) = potential_derivs(&self.params, &state.phi_p, &state.phi_nfa);
        let deriv = match s {
            Species::Polymer => dp,
            Species::Acceptor => dn,
        };
        self.rhs_with(state, s, &deriv)
    }

    fn rhs_with(&self, state: &PhaseState, s: Species, deriv: &[f64]) -> Vec<f64> {
        let m = &self.matrices.mass;
        let n = state.num_nodes();
        let tau = self.params.tau;
        let scale = -self.params.scaled_tau(s) / self.params.eps(s);
        let mut rhs = vec![0.0; 2 * n];
        let (top, bottom) = rhs.split_at_mut(n);
        m.matvec(state.phi(s), top);
        for (r, b) in top.iter_mut().zip(self.boundary_load(state, s)) {
            *r += tau * b;
        }
        m.matvec(deriv, bottom);
        bottom.iter_mut().for_each(|v| *v *= scale);
        rhs
    }

    fn solve_species(&self, s: Species, rhs: &[f64], guess: Option<Vec<f64>>) -> (Vec<f64>, SolveReport) {
        let op = self.operator(s);
        let mut x = guess.unwrap_or_else(|| vec![0.0; rhs.len()]);
        let report = minres_with(&op, self.preconditioner(s), rhs, &mut x, &self.solver.minres(), None);
        (x, report)
    }

    /// One step from `state`, with the starting vectors picked by the
    /// configured [`InitialGuess`] (extrapolation falls back to the previous
    /// step here).
    pub fn step(&self, state: &PhaseState) -> Result<(PhaseState, StepReport)> {
        let guess = match self.solver.initial_guess {
            InitialGuess::Zero => None,
            InitialGuess::Previous | InitialGuess::Extrapolate => {
                Some([state.block(Species::Polymer), state.block(Species::Acceptor)])
            }
        };
        self.step_from(state, guess)
    }

    /// One step with explicit MINRES starting vectors, one `[phi; mu]` per
    /// species.
    pub fn step_from(&self, state: &PhaseState, guess: Option<[Vec<f64>; 2]>) -> Result<(PhaseState, StepReport)> {
        let start = Instant::now();
        let next_step = state.step + 1;
        let next_time = next_step as f64 * self.params.tau;
        let diverged = |reason: String| Error::Diverged {
            step: next_step,
            time: next_time,
            reason,
        };

        let (dp, dn, clamped) = potential_derivs(&self.params, &state.phi_p, &state.phi_nfa);
        let rhs_p = self.rhs_with(state, Species::Polymer, &dp);
        let rhs_n = self.rhs_with(state, Species::Acceptor, &dn);
        if !rhs_p.iter().chain(&rhs_n).all(|v| v.is_finite()) {
            return Err(diverged("non-finite right-hand side".into()));
        }
        let [g_p, g_n] = match guess {
            Some([a, b]) => [Some(a), Some(b)],
            None => [None, None],
        };
        let ((x_p, rep_p), (x_n, rep_n)) = if self.solver.deterministic {
            (
                self.solve_species(Species::Polymer, &rhs_p, g_p),
                self.solve_species(Species::Acceptor, &rhs_n, g_n),
            )
        } else {
            rayon::join(
                || self.solve_species(Species::Polymer, &rhs_p, g_p),
                || self.solve_species(Species::Acceptor, &rhs_n, g_n),
            )
        };
        let inner_warnings = self.preconds.iter().map(|p| p.take_warnings()).sum();

        let n = state.num_nodes();
        for (s, x, rep) in [(Species::Polymer, &x_p, &rep_p), (Species::Acceptor, &x_n, &rep_n)] {
            if !x.iter().all(|v| v.is_finite()) {
                return Err(diverged(format!("non-finite {} field", s.name())));
            }
            if !rep.converged {
                let what = match rep.status {
                    SolveStatus::Breakdown => "MINRES breakdown",
                    _ => "MINRES did not converge",
                };
                return Err(Error::Solver(format!(
                    "step {next_step}, species {}: {what} after {} iterations (residual {:e})",
                    s.name(),
                    rep.iterations,
                    rep.residual_norm
                )));
            }
        }
        let (phi_p, mu_p) = x_p.split_at(n);
        let (phi_nfa, mu_nfa) = x_n.split_at(n);
        let next = PhaseState {
            phi_p: phi_p.to_vec(),
            phi_nfa: phi_nfa.to_vec(),
            mu_p: mu_p.to_vec(),
            mu_nfa: mu_nfa.to_vec(),
            t: next_time,
            step: next_step,
        };
        if !next.is_finite() {
            return Err(diverged("non-finite state".into()));
        }
        let peak = next.max_abs_phi();
        if peak > self.solver.divergence_bound {
            return Err(diverged(format!(
                "max |phi| = {peak:e} exceeds {}",
                self.solver.divergence_bound
            )));
        }
        let sum_violations = next
            .phi_p
            .iter()
            .zip(&next.phi_nfa)
            .zip(&self.interior)
            .filter(|((&p, &q), &inside)| inside && p + q > 1.0 + 1e-6)
            .count();
        let report = StepReport {
            step: next_step,
            time: next_time,
            reports: [rep_p, rep_n],
            seconds: start.elapsed().as_secs_f64(),
            clamped,
            inner_warnings,
            sum_violations,
        };
        Ok((next, report))
    }

    /// Advances `steps` steps, honouring the configured initial guess.
    pub fn advance(&self, state: PhaseState, steps: usize) -> Result<(PhaseState, Vec<StepReport>)> {
        let mut reports = Vec::with_capacity(steps);
        let state = self.drive(state, steps, &[], |_, _, _| Ok(()), |r| reports.push(r))?;
        Ok((state, reports))
    }

    /// Like [`Simulation::advance`] but hands each report to `on_step` as
    /// soon as the step finishes, so reports survive a later failure.
    pub fn advance_each<G>(&self, state: PhaseState, steps: usize, on_step: G) -> Result<PhaseState>
    where
        G: FnMut(StepReport),
    {
        self.drive(state, steps, &[], |_, _, _| Ok(()), on_step)
    }

    /// Runs `ceil(final_time / tau)` steps. `on_snapshot(step, t, state)`
    /// fires once for every entry of `snapshot_times`, at the first state
    /// whose time reaches it (within half a step).
    pub fn run<F>(&self, state: PhaseState, snapshot_times: &[f64], on_snapshot: F) -> Result<RunOutcome>
    where
        F: FnMut(usize, f64, &PhaseState) -> Result<()>,
    {
        let steps = num_steps(self.params.final_time, self.params.tau);
        let mut reports = Vec::with_capacity(steps);
        let state = self.drive(state, steps, snapshot_times, on_snapshot, |r| reports.push(r))?;
        Ok(RunOutcome { state, reports })
    }

    /// [`Simulation::run`] that also reports every finished step, so the
    /// caller keeps the statistics of a run that fails part way.
    pub fn run_observed<F, G>(
        &self,
        state: PhaseState,
        snapshot_times: &[f64],
        on_snapshot: F,
        on_step: G,
    ) -> Result<PhaseState>
    where
        F: FnMut(usize, f64, &PhaseState) -> Result<()>,
        G: FnMut(StepReport),
    {
        let steps = num_steps(self.params.final_time, self.params.tau);
        self.drive(state, steps, snapshot_times, on_snapshot, on_step)
    }

    fn drive<F, G>(
        &self,
        mut state: PhaseState,
        steps: usize,
        snapshot_times: &[f64],
        mut on_snapshot: F,
        mut on_step: G,
    ) -> Result<PhaseState>
    where
        F: FnMut(usize, f64, &PhaseState) -> Result<()>,
        G: FnMut(StepReport),
    {
        let mut pending: Vec<f64> = snapshot_times.to_vec();
        pending.sort_by(|a, b| a.total_cmp(b));
        let half = 0.5 * self.params.tau;
        let mut fire = |state: &PhaseState, pending: &mut Vec<f64>| -> Result<()> {
            let due = pending.iter().take_while(|&&t| t <= state.t + half).count();
            if due > 0 {
                pending.drain(..due);
                on_snapshot(state.step, state.t, state)?;
            }
            Ok(())
        };
        fire(&state, &mut pending)?;
        let mut previous: Option<[Vec<f64>; 2]> = None;
        for _ in 0..steps {
            let current = [state.block(Species::Polymer), state.block(Species::Acceptor)];
            let guess = match self.solver.initial_guess {
                InitialGuess::Zero => None,
                InitialGuess::Previous => Some(current.clone()),
                InitialGuess::Extrapolate => Some(match &previous {
                    Some(prev) => {
                        let mut g = current.clone();
                        for (gs, ps) in g.iter_mut().zip(prev) {
                            for (a, b) in gs.iter_mut().zip(ps) {
                                *a = 2.0 * *a - b;
                            }
                        }
                        g
                    }
                    None => current.clone(),
                }),
            };
            let (next, report) = self.step_from(&state, guess)?;
            if self.solver.initial_guess == InitialGuess::Extrapolate {
                previous = Some(current);
            }
            on_step(report);
            state = next;
            fire(&state, &mut pending)?;
        }
        Ok(state)
    }
}

/// `ceil(final_time / tau)`, ignoring rounding noise in the quotient.
pub fn num_steps(final_time: f64, tau: f64) -> usize {
    let q = final_time / tau;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        q.ceil() as usize
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: PhaseState,
    pub reports: Vec<StepReport>,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} abscissae, {} ordinates", x.len(), y.len())));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if !(sxx > 1e-24) {
        return Err(Error::InvalidArgument("log-log fit needs at least two distinct abscissae".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone)]
pub struct EocResult {
    pub taus: Vec<f64>,
    pub errors_p: Vec<f64>,
    pub errors_nfa: Vec<f64>,
    pub order_p: f64,
    pub order_nfa: f64,
}

fn is_multiple(a: f64, b: f64) -> bool {
    let q = a / b;
    q >= 1.0 - 1e-9 && (q - q.round()).abs() <= 1e-9 * q.round()
}

/// Experimental order of convergence in time: every run starts from the same
/// initial state and stops at `final_time`; errors are discrete L2 distances
/// to the `tau_ref` run.
pub fn eoc_study(
    mesh: &MeshGrid,
    params: &ModelParams,
    solver: &SolverOptions,
    tau_list: &[f64],
    tau_ref: f64,
    final_time: f64,
) -> Result<EocResult> {
    if tau_list.len() < 2 {
        return Err(Error::InvalidArgument("EOC study needs at least two time steps".into()));
    }
    let mut distinct = tau_list.to_vec();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::InvalidArgument("EOC study needs two distinct time steps".into()));
    }
    for &tau in tau_list {
        if !(tau > tau_ref) || !is_multiple(tau, tau_ref) {
            return Err(Error::InvalidArgument(format!(
                "time step {tau} is not a larger integer multiple of the reference {tau_ref}"
            )));
        }
        if !is_multiple(final_time, tau) {
            return Err(Error::InvalidArgument(format!(
                "final time {final_time} is not a multiple of time step {tau}"
            )));
        }
    }

    let run_to_end = |tau: f64| -> Result<(Simulation, PhaseState)> {
        let p = ModelParams {
            tau,
            final_time,
            ..params.clone()
        };
        let sim = Simulation::new(mesh.clone(), p, solver.clone())?;
        let init = sim.initial_state();
        let (end, _) = sim.advance(init, num_steps(final_time, tau))?;
        Ok((sim, end))
    };
    let (reference_sim, reference) = run_to_end(tau_ref)?;
    let mut errors_p = Vec::new();
    let mut errors_nfa = Vec::new();
    for &tau in tau_list {
        let (_, end) = run_to_end(tau)?;
        for (s, out) in [(Species::Polymer, &mut errors_p), (Species::Acceptor, &mut errors_nfa)] {
            let diff: Vec<f64> = end.phi(s).iter().zip(reference.phi(s)).map(|(a, b)| a - b).collect();
            out.push(reference_sim.l2_norm(&diff));
        }
    }
    Ok(EocResult {
        taus: tau_list.to_vec(),
        order_p: loglog_slope(tau_list, &errors_p)?,
        order_nfa: loglog_slope(tau_list, &errors_nfa)?,
        errors_p,
        errors_nfa,
    })
}
