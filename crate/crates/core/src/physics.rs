//! Bulk free energy, substrate interaction and evaporation flux.
//!
//! The solvent fraction is never stored: it is `phi_s = 1 - phi_p - phi_nfa`
//! everywhere, and every derivative below is taken with `phi_s` eliminated,
//! so `d phi_s / d phi_p = d phi_s / d phi_nfa = -1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this value the logarithmic potential clamps its arguments.
pub const LOG_CLAMP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    /// Donor polymer.
    Polymer,
    /// Non-fullerene acceptor.
    Acceptor,
}

impl Species {
    pub const BOTH: [Species; 2] = [Species::Polymer, Species::Acceptor];

    pub fn name(self) -> &'static str {
        match self {
            Species::Polymer => "p",
            Species::Acceptor => "nfa",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Potential {
    /// `3.5 phi_p^2 phi_nfa^2 + 0.1 phi_s^2`
    Polynomial,
    /// Flory-Huggins mixing energy.
    Logarithmic,
    /// No bulk potential; the scheme becomes linear.
    Off,
}

/// Physical and numerical model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub eps_p: f64,
    pub eps_nfa: f64,
    pub mob_p: f64,
    pub mob_nfa: f64,
    /// Time step.
    pub tau: f64,
    pub chi_p_nfa: f64,
    pub chi_p_s: f64,
    pub chi_nfa_s: f64,
    #[serde(rename = "N_p")]
    pub n_p: f64,
    #[serde(rename = "N_nfa")]
    pub n_nfa: f64,
    #[serde(rename = "N_s")]
    pub n_s: f64,
    /// Evaporation rate at the top surface.
    pub k_evap: f64,
    pub g_p: f64,
    pub g_nfa: f64,
    pub h_p: f64,
    pub h_nfa: f64,
    /// Alternating substrate preference on the bottom surface.
    pub patterning: bool,
    pub potential: Potential,
    pub final_time: f64,
    pub seed: u64,
    pub init_mean: f64,
    pub init_ampl: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            eps_p: 1e-3,
            eps_nfa: 1e-3,
            mob_p: 1.0,
            mob_nfa: 1.0,
            tau: 1e-4,
            chi_p_nfa: 1.0,
            chi_p_s: 0.3,
            chi_nfa_s: 0.3,
            n_p: 20.0,
            n_nfa: 20.0,
            n_s: 1.0,
            k_evap: 5e-3,
            g_p: 0.01,
            g_nfa: 0.01,
            h_p: 0.0,
            h_nfa: 0.0,
            patterning: false,
            potential: Potential::Polynomial,
            final_time: 2e-3,
            seed: 0,
            init_mean: 0.35,
            init_ampl: 0.01,
        }
    }
}

impl ModelParams {
    /// Checks every constraint; the error names the offending key.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        let positive = [
            ("eps_p", self.eps_p),
            ("eps_nfa", self.eps_nfa),
            ("mob_p", self.mob_p),
            ("mob_nfa", self.mob_nfa),
            ("tau", self.tau),
            ("N_p", self.n_p),
            ("N_nfa", self.n_nfa),
            ("N_s", self.n_s),
            ("final_time", self.final_time),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err((key, format!("{key} must be positive and finite, got {v}")));
            }
        }
        let finite = [
            ("chi_p_nfa", self.chi_p_nfa),
            ("chi_p_s", self.chi_p_s),
            ("chi_nfa_s", self.chi_nfa_s),
            ("g_p", self.g_p),
            ("g_nfa", self.g_nfa),
            ("h_p", self.h_p),
            ("h_nfa", self.h_nfa),
        ];
        for (key, v) in finite {
            if !v.is_finite() {
                return Err((key, format!("{key} must be finite")));
            }
        }
        if !(self.k_evap >= 0.0 && self.k_evap.is_finite()) {
            return Err(("k_evap", format!("k_evap must be non-negative, got {}", self.k_evap)));
        }
        if !(self.init_ampl >= 0.0) {
            return Err(("init_ampl", "init_ampl must be non-negative".into()));
        }
        if !(self.init_mean - self.init_ampl > 0.0 && self.init_mean + self.init_ampl < 1.0) {
            return Err((
                "init_mean",
                format!(
                    "initial range {} +/- {} must lie inside (0, 1)",
                    self.init_mean, self.init_ampl
                ),
            ));
        }
        Ok(())
    }

    pub fn check(&self) -> Result<()> {
        self.validate().map_err(|(_, msg)| Error::InvalidArgument(msg))
    }

    pub fn eps(&self, s: Species) -> f64 {
        match s {
            Species::Polymer => self.eps_p,
            Species::Acceptor => self.eps_nfa,
        }
    }

    pub fn mobility(&self, s: Species) -> f64 {
        match s {
            Species::Polymer => self.mob_p,
            Species::Acceptor => self.mob_nfa,
        }
    }

    pub fn surface_g(&self, s: Species) -> f64 {
        match s {
            Species::Polymer => self.g_p,
            Species::Acceptor => self.g_nfa,
        }
    }

    pub fn surface_h(&self, s: Species) -> f64 {
        match s {
            Species::Polymer => self.h_p,
            Species::Acceptor => self.h_nfa,
        }
    }

    /// Effective time step of a species' symmetric block system, `tau * M_i`.
    pub fn scaled_tau(&self, s: Species) -> f64 {
        self.tau * self.mobility(s)
    }
}

/// Polynomial bulk energy density.
pub fn poly_potential(phi_p: f64, phi_nfa: f64) -> f64 {
    let phi_s = 1.0 - (phi_p + phi_nfa);
    3.5 * phi_p * phi_p * phi_nfa * phi_nfa + 0.1 * phi_s * phi_s
}

/// Nodewise partial derivatives of [`poly_potential`].
pub fn poly_potential_derivs(phi_p: &[f64], phi_nfa: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(phi_p.len(), phi_nfa.len());
    phi_p
        .iter()
        .zip(phi_nfa)
        .map(|(&p, &n)| {
            let s = 1.0 - (p + n);
            (7.0 * p * (n * n) - 0.2 * s, 7.0 * n * (p * p) - 0.2 * s)
        })
        .unzip()
}

fn xlogx_over(phi: f64, n: f64) -> f64 {
    phi * phi.ln() / n
}

/// Flory-Huggins bulk energy density (no clamping; expects interior points).
pub fn log_potential(phi_p: f64, phi_nfa: f64, params: &ModelParams) -> f64 {
    let phi_s = 1.0 - (phi_p + phi_nfa);
    xlogx_over(phi_p, params.n_p)
        + xlogx_over(phi_nfa, params.n_nfa)
        + xlogx_over(phi_s, params.n_s)
        + params.chi_p_nfa * phi_p * phi_nfa
        + params.chi_p_s * phi_p * phi_s
        + params.chi_nfa_s * phi_nfa * phi_s
}

/// Result of [`log_potential_derivs`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogDerivs {
    pub df_dp: Vec<f64>,
    pub df_dnfa: Vec<f64>,
    /// Number of nodes where at least one fraction was clamped to [`LOG_CLAMP`].
    pub clamped: usize,
}

/// Nodewise partial derivatives of [`log_potential`]. Fractions below
/// [`LOG_CLAMP`] are raised to it inside the logarithms and the linear
/// terms alike.
pub fn log_potential_derivs(phi_p: &[f64], phi_nfa: &[f64], params: &ModelParams) -> LogDerivs {
    assert_eq!(phi_p.len(), phi_nfa.len());
    let mut clamped = 0;
    let mut df_dp = Vec::with_capacity(phi_p.len());
    let mut df_dnfa = Vec::with_capacity(phi_p.len());
    for (&p0, &n0) in phi_p.iter().zip(phi_nfa) {
        let s0 = 1.0 - (p0 + n0);
        let (p, n, s) = (p0.max(LOG_CLAMP), n0.max(LOG_CLAMP), s0.max(LOG_CLAMP));
        if p != p0 || n != n0 || s != s0 || p0.is_nan() || n0.is_nan() {
            clamped += 1;
        }
        let ls = (s.ln() + 1.0) / params.n_s;
        df_dp.push(
            (p.ln() + 1.0) / params.n_p - ls + params.chi_p_nfa * n + params.chi_p_s * (s - p)
                - params.chi_nfa_s * n,
        );
        df_dnfa.push(
            (n.ln() + 1.0) / params.n_nfa - ls + params.chi_p_nfa * p + params.chi_nfa_s * (s - n)
                - params.chi_p_s * p,
        );
    }
    LogDerivs {
        df_dp,
        df_dnfa,
        clamped,
    }
}

/// Potential derivatives for the configured potential, plus the clamp count.
pub fn potential_derivs(params: &ModelParams, phi_p: &[f64], phi_nfa: &[f64]) -> (Vec<f64>, Vec<f64>, usize) {
    match params.potential {
        Potential::Polynomial => {
            let (a, b) = poly_potential_derivs(phi_p, phi_nfa);
            (a, b, 0)
        }
        Potential::Logarithmic => {
            let d = log_potential_derivs(phi_p, phi_nfa, params);
            (d.df_dp, d.df_dnfa, d.clamped)
        }
        Potential::Off => (vec![0.0; phi_p.len()], vec![0.0; phi_p.len()], 0),
    }
}

/// Substrate preference `p_species(x)` on the bottom surface.
///
/// With patterning the polymer prefers the closed sixths `[0, 1/6]`,
/// `[1/3, 1/2]` and `[2/3, 5/6]` of `[0, x_max]` and the acceptor the rest;
/// shared endpoints go to the polymer. Without patterning both are 1.
pub fn substrate_pattern(x: f64, species: Species, x_max: f64, patterning: bool) -> f64 {
    if !patterning {
        return 1.0;
    }
    let polymer_bands = [(0.0, 1.0 / 6.0), (1.0 / 3.0, 0.5), (2.0 / 3.0, 5.0 / 6.0)];
    // Grid coordinates carry rounding, so endpoints get a little slack.
    let slack = 1e-12 * x_max;
    let in_polymer = polymer_bands
        .iter()
        .any(|&(a, b)| x >= a * x_max - slack && x <= b * x_max + slack);
    match (species, in_polymer) {
        (Species::Polymer, true) | (Species::Acceptor, false) => 1.0,
        _ => 0.0,
    }
}

/// Substrate flux `d f_s / d phi = p(x) (g + 2 h phi)` at every node.
pub fn surface_flux_bottom(
    phi: &[f64],
    species: Species,
    params: &ModelParams,
    x: &[f64],
    x_max: f64,
) -> Vec<f64> {
    assert_eq!(phi.len(), x.len());
    let g = params.surface_g(species);
    let h = params.surface_h(species);
    phi.iter()
        .zip(x)
        .map(|(&v, &xi)| substrate_pattern(xi, species, x_max, params.patterning) * (g + 2.0 * h * v))
        .collect()
}

/// Evaporation flux `-k phi phi_s` at every node.
pub fn evaporation_flux_top(phi: &[f64], phi_s: &[f64], params: &ModelParams) -> Vec<f64> {
    assert_eq!(phi.len(), phi_s.len());
    phi.iter().zip(phi_s).map(|(&a, &s)| -params.k_evap * a * s).collect()
}
