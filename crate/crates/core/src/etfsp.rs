//! Exit-tracking finite state projection.
//!
//! On a truncation `𝒮_r` with interior `𝒟_r` and boundary `ℬ_r` the scheme
//! integrates the augmented row system
//!
//! ```text
//! ν̇ = ν Q_DD,        ν(0) = γ restricted to 𝒟_r
//! Ṁ = ν Q_DB,        M(0) = 0      (cumulative exit mass per boundary state)
//! Ṅ = ν,             N(0) = 0      (cumulative occupation per interior state)
//! ```
//!
//! The exit density is reported in product form `μ(t, x) = Σ_y ν(t, y) q(y, x)`,
//! while masses and the error bound come from `M` and `N` at the final time,
//! so they do not depend on the output grid. Initial mass already outside
//! the domain is an atom at `t = 0`, kept apart from the densities.

use std::sync::Arc;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::DomainPredicate;
use crate::error::{Error, Result};
use crate::model::{Generator, InitialDistribution, State};
use crate::solver::{integrate_linear_with, validate_grid, IntegrationSpec, SolverStats};
use crate::sparse::CsrMatrix;
use crate::truncation::{assemble_operators, build_truncation, SparseOperators, Truncation, TruncationSpec};

#[derive(Debug, Clone)]
pub struct EtfspSolution {
    /// Output times, all `≤ t_final`.
    pub grid: Vec<f64>,
    pub t_final: f64,
    /// `nu[k][i]`: occupation density at `grid[k]` for interior state `i`.
    pub nu: Vec<Vec<f64>>,
    /// `mu[k][b]`: exit density at `grid[k]` through boundary state `b`.
    pub mu: Vec<Vec<f64>>,
    /// `exit_mass[k][b]`: `∫₀^{grid[k]} μ(s, b) ds`.
    pub exit_mass: Vec<Vec<f64>>,
    /// `∫₀^{t_final} μ(s, b) ds` per boundary state.
    pub mu_cum: Vec<f64>,
    /// `∫₀^{t_final} ν(s, i) ds` per interior state.
    pub nu_cum: Vec<f64>,
    /// Initial mass on each boundary state.
    pub atom: Vec<f64>,
    pub epsilon: f64,
    /// `(γ(𝒟 ∖ 𝒟_r), γ(𝒟ᶜ ∖ 𝒮_r))`.
    pub initial_lost: (f64, f64),
    pub truncation: Arc<Truncation>,
    pub operators: Arc<SparseOperators>,
    pub atol: f64,
    pub rtol: f64,
    pub stats: SolverStats,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    /// `Σ_x μ(t_k, x)` on the grid, without the atom.
    pub mu_t: Vec<f64>,
    /// Point mass of the exit time at `t = 0`.
    pub atom_mass: f64,
    /// Exit mass per boundary state, without the atom.
    pub mu_s: Vec<f64>,
    /// Occupation mass per interior state.
    pub nu_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDensity {
    pub density: Vec<f64>,
    /// `μ_S(target)` including any atom on the target.
    pub target_mass: f64,
    /// Initial mass on the target (an atom at `t = 0`, not part of `density`).
    pub target_atom: f64,
    pub tv_error_bound: f64,
}

/// Absolute slack used by the internal consistency checks.
pub(crate) fn check_tol(atol: f64, rtol: f64, v: f64) -> f64 {
    10.0 * (atol + rtol * v.abs())
}

/// Keeps the grid times `≤ t_final` and appends `t_final` for the solver.
pub(crate) fn plan_grid(grid: &[f64], t_final: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::InvalidArgument(format!("final time must be finite and non-negative, got {t_final}")));
    }
    validate_grid(grid)?;
    let user: Vec<f64> = grid.iter().copied().filter(|&t| t <= t_final).collect();
    let mut internal = user.clone();
    if internal.last() != Some(&t_final) {
        internal.push(t_final);
    }
    Ok((user, internal))
}

/// Builds the augmented operator `[[Q_DD, Q_DB, I], [0, 0, 0], [0, 0, 0]]`.
fn augmented_operator(ops: &SparseOperators) -> CsrMatrix {
    let n = ops.q_dd.nrows();
    let nb = ops.q_db.ncols();
    let dim = 2 * n + nb;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(dim);
    for i in 0..n {
        let (c, v) = ops.q_dd.row(i);
        let (cb, vb) = ops.q_db.row(i);
        let mut row = Vec::with_capacity(c.len() + cb.len() + 1);
        row.extend(c.iter().copied().zip(v.iter().copied()));
        row.extend(cb.iter().map(|&j| j + n).zip(vb.iter().copied()));
        row.push((n + nb + i, 1.0));
        rows.push(row);
    }
    rows.resize(dim, Vec::new());
    CsrMatrix::from_rows(dim, rows)
}

/// Runs the scheme on a prebuilt truncation up to `t_final`, reporting on
/// the grid points of `spec.grid` that do not exceed `t_final`.
pub fn etfsp_solve<G: Generator + ?Sized>(
    model: &G,
    truncation: Arc<Truncation>,
    gamma: &InitialDistribution,
    t_final: f64,
    spec: &IntegrationSpec,
) -> Result<EtfspSolution> {
    let (grid, internal) = plan_grid(&spec.grid, t_final)?;
    for (x, _) in gamma.support() {
        model.check_state(x)?;
    }
    let ops = Arc::new(assemble_operators(model, &truncation)?);
    let n = truncation.interior_len();
    let nb = truncation.boundary_len();

    let mut warnings = Vec::new();
    let initial_lost = truncation.initial_mass_outside(gamma);
    if initial_lost.0 > 0.0 {
        warnings.push(format!(
            "initial mass {:.3e} lies in the domain but outside the truncation and is counted in the error bound",
            initial_lost.0
        ));
    }
    if initial_lost.1 > 0.0 {
        warnings.push(format!(
            "initial mass {:.3e} lies outside both the domain and the truncation and is counted in the error bound",
            initial_lost.1
        ));
    }
    for w in &warnings {
        warn!("{w}");
    }

    let mut y0 = vec![0.0; 2 * n + nb];
    let mut atom = vec![0.0; nb];
    for (x, m) in gamma.support() {
        if let Some(k) = truncation.interior_position(x) {
            y0[k] = *m;
        } else if let Some(b) = truncation.boundary_position(x) {
            atom[b] = *m;
        }
    }

    let a = augmented_operator(&ops);
    let solver_spec = IntegrationSpec {
        grid: internal,
        ..spec.clone()
    };
    let mut nu = Vec::with_capacity(grid.len());
    let mut mu = Vec::with_capacity(grid.len());
    let mut exit_mass = Vec::with_capacity(grid.len());
    let mut mu_cum = Vec::new();
    let mut nu_cum = Vec::new();
    let n_user = grid.len();
    let stats = integrate_linear_with(&a, &y0, &solver_spec, |k, _, y| {
        let (v, rest) = y.split_at(n);
        let (m, occ) = rest.split_at(nb);
        if k < n_user {
            nu.push(v.to_vec());
            mu.push(ops.q_db.vec_mul(v));
            exit_mass.push(m.to_vec());
        }
        if k + 1 == solver_spec.grid.len() {
            mu_cum = m.to_vec();
            nu_cum = occ.to_vec();
        }
        Ok(())
    })?;

    let mut sol = EtfspSolution {
        grid,
        t_final,
        nu,
        mu,
        exit_mass,
        mu_cum,
        nu_cum,
        atom,
        epsilon: 0.0,
        initial_lost,
        truncation,
        operators: ops,
        atol: spec.atol,
        rtol: spec.rtol,
        stats,
        warnings,
    };
    sol.epsilon = sol.error_bound();
    let tol = check_tol(sol.atol, sol.rtol, 1.0);
    if !(-tol..=1.0 + tol).contains(&sol.epsilon) {
        return Err(Error::Consistency(format!("error bound {} outside [0, 1]", sol.epsilon)));
    }
    sol.check_leak_monotone()?;
    Ok(sol)
}

/// Builds the truncation for `r` and solves.
pub fn etfsp_solve_family<G: Generator + ?Sized>(
    model: &G,
    domain: &DomainPredicate,
    family: &TruncationSpec,
    r: u32,
    gamma: &InitialDistribution,
    t_final: f64,
    spec: &IntegrationSpec,
) -> Result<EtfspSolution> {
    let truncation = build_truncation(model, domain, family, r, Some(gamma))?;
    etfsp_solve(model, Arc::new(truncation), gamma, t_final, spec)
}

impl EtfspSolution {
    /// `1 − (γ(𝒟ᶜ ∩ 𝒮_r) + Σ_x M(t_f, x))`. Kept unclipped so the mass
    /// identity holds exactly; it may be negative by round-off.
    pub fn error_bound(&self) -> f64 {
        1.0 - (self.atom.iter().sum::<f64>() + self.mu_cum.iter().sum::<f64>())
    }

    pub fn atom_mass(&self) -> f64 {
        self.atom.iter().sum()
    }

    /// Lower bound on `P(τ ≤ grid[k])`.
    pub fn exit_cdf(&self) -> Vec<f64> {
        let a = self.atom_mass();
        self.exit_mass.iter().map(|m| a + m.iter().sum::<f64>()).collect()
    }

    /// `Σ_x ν(t_k, x)`: probability of being inside `𝒟_r` without having exited.
    pub fn occupied_mass(&self) -> Vec<f64> {
        self.nu.iter().map(|v| v.iter().sum()).collect()
    }

    /// `1 − (Σ ν + Σ M + atom)` on the grid: mass that has left `𝒮_r`
    /// through the far side (plus initial mass never seen).
    pub fn leak_trace(&self) -> Vec<f64> {
        let a = self.atom_mass();
        self.nu
            .iter()
            .zip(&self.exit_mass)
            .map(|(v, m)| 1.0 - (v.iter().sum::<f64>() + m.iter().sum::<f64>() + a))
            .collect()
    }

    fn check_leak_monotone(&self) -> Result<()> {
        let trace = self.leak_trace();
        let tol = check_tol(self.atol, self.rtol, 1.0);
        for (k, &l) in trace.iter().enumerate() {
            if l < -tol {
                return Err(Error::Consistency(format!("negative leak {l:e} at t = {}", self.grid[k])));
            }
            if k > 0 && l < trace[k - 1] - tol {
                return Err(Error::Monotonicity(format!(
                    "leak decreased from {:e} to {l:e} at t = {}",
                    trace[k - 1],
                    self.grid[k]
                )));
            }
        }
        Ok(())
    }

    /// `bound − Σ_x N(t_f, x)` when an upper bound on `E[τ]` is supplied.
    pub fn occupation_error_bound(&self, mean_exit_upper: Option<f64>) -> Result<Option<f64>> {
        let Some(bound) = mean_exit_upper else {
            return Ok(None);
        };
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::InvalidArgument(format!("mean exit time bound must be positive, got {bound}")));
        }
        let occ: f64 = self.nu_cum.iter().sum();
        let eps = bound - occ;
        let tol = check_tol(self.atol, self.rtol, occ);
        if eps < -tol {
            return Err(Error::InvalidArgument(format!(
                "supplied mean exit time bound {bound} is below the computed lower bound {occ}"
            )));
        }
        Ok(Some(eps.max(0.0)))
    }

    pub fn marginals(&self) -> Marginals {
        Marginals {
            mu_t: self.mu.iter().map(|m| m.iter().sum()).collect(),
            atom_mass: self.atom_mass(),
            mu_s: self.mu_cum.clone(),
            nu_s: self.nu_cum.clone(),
        }
    }

    /// Exit-time density conditioned on leaving through `targets`, with the
    /// total-variation bound `ε/(μ_S(target) + ε)`. Targets outside the
    /// truncation contribute nothing; targets inside the domain are rejected.
    pub fn conditional_exit_density(&self, targets: &[State]) -> Result<ConditionalDensity> {
        if targets.is_empty() {
            return Err(Error::InvalidArgument("conditioning target is empty".into()));
        }
        let mut idx = Vec::new();
        for x in targets {
            if self.truncation.domain().contains(x) {
                return Err(Error::InvalidArgument(format!("target state {x} lies inside the domain")));
            }
            if let Some(b) = self.truncation.boundary_position(x) {
                idx.push(b);
            }
        }
        idx.sort_unstable();
        idx.dedup();
        let target_atom: f64 = idx.iter().map(|&b| self.atom[b]).sum();
        let target_mass = target_atom + idx.iter().map(|&b| self.mu_cum[b]).sum::<f64>();
        let eps = self.epsilon.max(0.0);
        let denom = target_mass + eps;
        if denom <= 0.0 {
            return Err(Error::InvalidArgument(
                "target has zero exit mass and the error bound is zero; the conditional is undefined".into(),
            ));
        }
        Ok(ConditionalDensity {
            density: self
                .mu
                .iter()
                .map(|m| idx.iter().map(|&b| m[b]).sum::<f64>() / denom)
                .collect(),
            target_mass,
            target_atom,
            tv_error_bound: eps / denom,
        })
    }

    /// Boundary states selected by a predicate (e.g. one fixation class).
    pub fn boundary_where(&self, mut pred: impl FnMut(&State) -> bool) -> Vec<State> {
        self.truncation.boundary_states().filter(|x| pred(x)).cloned().collect()
    }

    /// `μ_S` summed over boundary states satisfying `pred`, atom included.
    pub fn exit_mass_where(&self, mut pred: impl FnMut(&State) -> bool) -> f64 {
        self.truncation
            .boundary_states()
            .enumerate()
            .filter(|(_, x)| pred(x))
            .map(|(b, _)| self.atom[b] + self.mu_cum[b])
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub r: u32,
    pub t_final: f64,
    pub states: usize,
    pub interior: usize,
    pub boundary: usize,
    pub epsilon: f64,
    pub atom_mass: f64,
    pub exit_mass: f64,
    pub occupation_total: f64,
    pub accepted_steps: usize,
}

impl SweepRow {
    pub fn from_solution(r: u32, sol: &EtfspSolution) -> Self {
        SweepRow {
            r,
            t_final: sol.t_final,
            states: sol.truncation.len(),
            interior: sol.truncation.interior_len(),
            boundary: sol.truncation.boundary_len(),
            epsilon: sol.epsilon,
            atom_mass: sol.atom_mass(),
            exit_mass: sol.mu_cum.iter().sum(),
            occupation_total: sol.nu_cum.iter().sum(),
            accepted_steps: sol.stats.accepted,
        }
    }
}

/// Solves for every `(r, t_f)` pair in parallel and checks that the error
/// bound does not increase and the densities do not decrease along the
/// schedule.
pub fn sweep<G: Generator + ?Sized>(
    model: &G,
    domain: &DomainPredicate,
    family: &TruncationSpec,
    schedule: &[(u32, f64)],
    gamma: &InitialDistribution,
    spec: &IntegrationSpec,
) -> Result<Vec<EtfspSolution>> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("sweep schedule is empty".into()));
    }
    for w in schedule.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::InvalidArgument("truncation parameters must be strictly increasing".into()));
        }
        if w[1].1 < w[0].1 {
            return Err(Error::InvalidArgument("final times must be non-decreasing".into()));
        }
    }
    let sols = schedule
        .par_iter()
        .map(|&(r, tf)| etfsp_solve_family(model, domain, family, r, gamma, tf, spec))
        .collect::<Result<Vec<_>>>()?;
    check_sweep_monotone(&sols)?;
    Ok(sols)
}

/// Checks the ordering a nested sequence of truncations must satisfy.
pub fn check_sweep_monotone(sols: &[EtfspSolution]) -> Result<()> {
    for w in sols.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (ra, rb) = (a.truncation.r(), b.truncation.r());
        if b.epsilon > a.epsilon + check_tol(a.atol, a.rtol, 1.0) {
            return Err(Error::Monotonicity(format!(
                "error bound rose from {:e} (r = {ra}) to {:e} (r = {rb})",
                a.epsilon, b.epsilon
            )));
        }
        if !a.truncation.is_nested_in(&b.truncation) {
            return Err(Error::Monotonicity(format!("truncation r = {ra} is not contained in r = {rb}")));
        }
        for (ka, t) in a.grid.iter().enumerate() {
            let Some(kb) = b.grid.iter().position(|s| s == t) else {
                continue;
            };
            for (i, x) in a.truncation.interior_states().enumerate() {
                let Some(j) = b.truncation.interior_position(x) else {
                    continue;
                };
                let (va, vb) = (a.nu[ka][i], b.nu[kb][j]);
                if va > vb + check_tol(a.atol, a.rtol, vb) {
                    return Err(Error::Monotonicity(format!(
                        "occupation density at {x}, t = {t} fell from {va:e} (r = {ra}) to {vb:e} (r = {rb})"
                    )));
                }
            }
            // The exit density is the occupation density times entry rates, so
            // its tolerance is the state tolerance pushed through the same map.
            let w: Vec<f64> = a.nu[ka].iter().map(|&v| check_tol(a.atol, a.rtol, v)).collect();
            let mu_tol = a.operators.q_db.vec_mul(&w);
            for (i, x) in a.truncation.boundary_states().enumerate() {
                let Some(j) = b.truncation.boundary_position(x) else {
                    continue;
                };
                let (va, vb) = (a.mu[ka][i], b.mu[kb][j]);
                if va > vb + check_tol(a.atol, a.rtol, vb).max(mu_tol[i]) {
                    return Err(Error::Monotonicity(format!(
                        "exit density at {x}, t = {t} fell from {va:e} (r = {ra}) to {vb:e} (r = {rb})"
                    )));
                }
            }
        }
    }
    Ok(())
}
