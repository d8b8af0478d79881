//! Countable-state chains on `ℕ^d` defined by reaction channels.
//!
//! The rate matrix is never materialized: [`Generator::rate_row`] produces
//! one row `q(x, ·)` at a time. Only truncations (see [`crate::truncation`])
//! turn rows into sparse matrices.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::DomainPredicate;
use crate::error::{Error, Result};
use crate::truncation::Truncation;

/// Tolerance on `Σγ = 1` for initial distributions.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A point of `ℕ^d`: one non-negative count per species.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State(Vec<u32>);

impl State {
    pub fn new(coords: impl Into<Vec<u32>>) -> Self {
        State(coords.into())
    }

    pub fn coords(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `self + delta`, or `None` if any coordinate would become negative.
    pub fn shifted(&self, delta: &[i64]) -> Option<State> {
        debug_assert_eq!(delta.len(), self.0.len());
        let mut out = Vec::with_capacity(self.0.len());
        for (&c, &d) in self.0.iter().zip(delta) {
            let v = c as i64 + d;
            if v < 0 || v > u32::MAX as i64 {
                return None;
            }
            out.push(v as u32);
        }
        Some(State(out))
    }
}

impl From<Vec<u32>> for State {
    fn from(v: Vec<u32>) -> Self {
        State(v)
    }
}

impl<const N: usize> From<[u32; N]> for State {
    fn from(v: [u32; N]) -> Self {
        State(v.to_vec())
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// `coeff · Π x_s^p` with plain (not falling-factorial) powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<(usize, u32)>,
}

impl Monomial {
    fn eval(&self, x: &[u32]) -> f64 {
        self.powers
            .iter()
            .fold(self.coeff, |acc, &(s, p)| acc * (x[s] as f64).powi(p as i32))
    }
}

/// Rate closure over state coordinates.
pub type RateFn = dyn Fn(&[u32]) -> f64 + Send + Sync;

/// User-supplied rate function. Must return a finite, non-negative value.
#[derive(Clone)]
pub struct CustomRate(pub Arc<RateFn>);

impl fmt::Debug for CustomRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomRate(..)")
    }
}

#[derive(Debug, Clone)]
pub enum Propensity {
    /// `rate · Π_s x_s (x_s − 1) ⋯ (x_s − n_s + 1)` over the reactant multiset.
    MassAction { rate: f64, reactants: Vec<(usize, u32)> },
    /// Sum of power-law monomials, e.g. `c x₁ x₂ / K²`.
    Polynomial(Vec<Monomial>),
    Custom(CustomRate),
}

impl Propensity {
    pub fn eval(&self, x: &[u32]) -> f64 {
        match self {
            Propensity::MassAction { rate, reactants } => {
                let mut a = *rate;
                for &(s, n) in reactants {
                    let c = x[s];
                    if c < n {
                        return 0.0;
                    }
                    for j in 0..n {
                        a *= (c - j) as f64;
                    }
                }
                a
            }
            Propensity::Polynomial(terms) => terms.iter().map(|m| m.eval(x)).sum(),
            Propensity::Custom(f) => (f.0)(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReactionChannel {
    pub name: String,
    /// Net change in each species count per firing.
    pub change: Vec<i64>,
    pub propensity: Propensity,
}

impl ReactionChannel {
    pub fn mass_action(
        name: impl Into<String>,
        change: Vec<i64>,
        rate: f64,
        reactants: Vec<(usize, u32)>,
    ) -> Self {
        ReactionChannel {
            name: name.into(),
            change,
            propensity: Propensity::MassAction { rate, reactants },
        }
    }

    pub fn polynomial(name: impl Into<String>, change: Vec<i64>, terms: Vec<Monomial>) -> Self {
        ReactionChannel {
            name: name.into(),
            change,
            propensity: Propensity::Polynomial(terms),
        }
    }

    pub fn custom(
        name: impl Into<String>,
        change: Vec<i64>,
        rate: impl Fn(&[u32]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ReactionChannel {
            name: name.into(),
            change,
            propensity: Propensity::Custom(CustomRate(Arc::new(rate))),
        }
    }

    // A channel must be unable to fire whenever firing would drive a count
    // negative. Mass-action and polynomial kinetics can be checked statically.
    fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(format!("channel '{}': {msg}", self.name)));
        if self.change.len() != dim {
            return bad(format!("change vector has length {}, expected {dim}", self.change.len()));
        }
        if self.change.iter().all(|&c| c == 0) {
            return bad("change vector is zero".into());
        }
        match &self.propensity {
            Propensity::MassAction { rate, reactants } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return bad(format!("rate constant must be positive, got {rate}"));
                }
                if reactants.iter().any(|&(s, _)| s >= dim) {
                    return bad("reactant species index out of range".into());
                }
                for (s, &c) in self.change.iter().enumerate() {
                    if c < 0 {
                        let n: u32 = reactants.iter().filter(|r| r.0 == s).map(|r| r.1).sum();
                        if (n as i64) < -c {
                            return bad(format!(
                                "consumes {} of species {s} but only {n} appear as reactants",
                                -c
                            ));
                        }
                    }
                }
            }
            Propensity::Polynomial(terms) => {
                if terms.is_empty() {
                    return bad("polynomial propensity has no terms".into());
                }
                for m in terms {
                    if !(m.coeff.is_finite() && m.coeff > 0.0) {
                        return bad(format!("monomial coefficient must be positive, got {}", m.coeff));
                    }
                    if m.powers.iter().any(|&(s, _)| s >= dim) {
                        return bad("monomial species index out of range".into());
                    }
                }
                for (s, &c) in self.change.iter().enumerate() {
                    if c < 0 {
                        if c < -1 {
                            return bad(format!("polynomial channel may remove at most one of species {s}"));
                        }
                        let covered = terms
                            .iter()
                            .all(|m| m.powers.iter().any(|&(t, p)| t == s && p > 0));
                        if !covered {
                            return bad(format!("some term does not vanish when species {s} is absent"));
                        }
                    }
                }
            }
            Propensity::Custom(_) => {}
        }
        Ok(())
    }
}

/// Channels grouped by identical change vectors, so a row has no duplicate
/// targets.
#[derive(Debug, Clone)]
pub struct Jump {
    pub change: Vec<i64>,
    pub channels: Vec<usize>,
}

/// One row of the rate matrix: off-diagonal entries with positive rate, in
/// the model's fixed jump order, plus the diagonal `q(x,x) = −Σ rates`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub diagonal: f64,
    pub transitions: Vec<(State, f64)>,
}

impl RateRow {
    pub fn exit_rate(&self) -> f64 {
        -self.diagonal
    }
}

/// Row-wise access to a stable, conservative rate matrix on a subset of `ℕ^d`.
pub trait Generator: Sync {
    fn dimension(&self) -> usize;

    /// Row `q(x, ·)`. Callers guarantee `x.dim() == self.dimension()`.
    fn rate_row(&self, x: &State) -> RateRow;

    fn check_state(&self, x: &State) -> Result<()> {
        if x.dim() != self.dimension() {
            return Err(Error::DimensionMismatch {
                state: x.clone(),
                expected: self.dimension(),
                got: x.dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ChainModel {
    species: Vec<String>,
    channels: Vec<ReactionChannel>,
    jumps: Vec<Jump>,
}

impl ChainModel {
    pub fn new(species: Vec<String>, channels: Vec<ReactionChannel>) -> Result<Self> {
        if species.is_empty() {
            return Err(Error::InvalidModel("model needs at least one species".into()));
        }
        for (i, s) in species.iter().enumerate() {
            if s.is_empty() || species[..i].contains(s) {
                return Err(Error::InvalidModel(format!("species name '{s}' is empty or repeated")));
            }
        }
        let dim = species.len();
        let mut jumps: Vec<Jump> = Vec::new();
        for (ci, ch) in channels.iter().enumerate() {
            ch.validate(dim)?;
            match jumps.iter_mut().find(|j| j.change == ch.change) {
                Some(j) => j.channels.push(ci),
                None => jumps.push(Jump {
                    change: ch.change.clone(),
                    channels: vec![ci],
                }),
            }
        }
        Ok(ChainModel {
            species,
            channels,
            jumps,
        })
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    pub fn channels(&self) -> &[ReactionChannel] {
        &self.channels
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// Writes the total rate of every jump (in [`Self::jumps`] order) at `x`.
    /// Jumps that would leave `ℕ^d` get rate 0.
    pub fn jump_rates(&self, x: &[u32], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.jumps.len());
        for (slot, jump) in out.iter_mut().zip(&self.jumps) {
            let feasible = x.iter().zip(&jump.change).all(|(&c, &d)| c as i64 + d >= 0);
            *slot = if feasible {
                jump.channels
                    .iter()
                    .map(|&ci| self.channels[ci].propensity.eval(x))
                    .sum()
            } else {
                0.0
            };
        }
    }

    /// Human-readable label such as `m=3,p=100`.
    pub fn label(&self, x: &State) -> String {
        self.species
            .iter()
            .zip(x.coords())
            .map(|(s, c)| format!("{s}={c}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl Generator for ChainModel {
    fn dimension(&self) -> usize {
        self.species.len()
    }

    fn rate_row(&self, x: &State) -> RateRow {
        debug_assert_eq!(x.dim(), self.dimension());
        let mut transitions = Vec::with_capacity(self.jumps.len());
        let mut total = 0.0;
        for jump in &self.jumps {
            let Some(y) = x.shifted(&jump.change) else {
                continue;
            };
            let rate: f64 = jump
                .channels
                .iter()
                .map(|&ci| self.channels[ci].propensity.eval(x.coords()))
                .sum();
            debug_assert!(rate.is_finite() && rate >= 0.0, "bad rate {rate} at {x}");
            if rate > 0.0 {
                total += rate;
                transitions.push((y, rate));
            }
        }
        RateRow {
            diagonal: -total,
            transitions,
        }
    }
}

/// The chain with every state outside `domain` made absorbing (`q̂`).
///
/// Applying the finite state projection to this generator yields the
/// occupation density on the truncated domain and the cumulative exit mass
/// on the boundary.
pub struct Absorbed<'a, G: ?Sized> {
    inner: &'a G,
    domain: &'a DomainPredicate,
}

impl<'a, G: Generator + ?Sized> Absorbed<'a, G> {
    pub fn new(inner: &'a G, domain: &'a DomainPredicate) -> Self {
        Absorbed { inner, domain }
    }
}

impl<G: Generator + ?Sized> Generator for Absorbed<'_, G> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn rate_row(&self, x: &State) -> RateRow {
        if self.domain.contains(x) {
            self.inner.rate_row(x)
        } else {
            RateRow {
                diagonal: 0.0,
                transitions: Vec::new(),
            }
        }
    }
}

/// A finitely supported probability distribution on states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDistribution {
    support: Vec<(State, f64)>,
}

impl InitialDistribution {
    /// Merges repeated states. Rejects negative or non-finite masses and
    /// totals differing from 1 by more than [`MASS_TOLERANCE`].
    pub fn new(entries: impl IntoIterator<Item = (State, f64)>) -> Result<Self> {
        let mut merged: BTreeMap<State, f64> = BTreeMap::new();
        let mut dim = None;
        for (x, m) in entries {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidInitial(format!("mass {m} at {x} is not a probability")));
            }
            match dim {
                None => dim = Some(x.dim()),
                Some(d) if d != x.dim() => {
                    return Err(Error::InvalidInitial("states of differing dimension".into()))
                }
                _ => {}
            }
            *merged.entry(x).or_insert(0.0) += m;
        }
        let total: f64 = merged.values().sum();
        if merged.is_empty() || (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidInitial(format!("masses sum to {total}, expected 1")));
        }
        Ok(InitialDistribution {
            support: merged.into_iter().filter(|(_, m)| *m > 0.0).collect(),
        })
    }

    pub fn dirac(x: impl Into<State>) -> Self {
        InitialDistribution {
            support: vec![(x.into(), 1.0)],
        }
    }

    /// Support in lexicographic state order.
    pub fn support(&self) -> &[(State, f64)] {
        &self.support
    }

    pub fn mass(&self, x: &State) -> f64 {
        self.support
            .binary_search_by(|(s, _)| s.cmp(x))
            .map(|i| self.support[i].1)
            .unwrap_or(0.0)
    }

    pub fn mass_where(&self, mut pred: impl FnMut(&State) -> bool) -> f64 {
        self.support.iter().filter(|(x, _)| pred(x)).map(|(_, m)| m).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialDiagnostic {
    pub total_mass: f64,
    /// `Σ_x γ(x)|q(x,x)|`; finite because the support is finite.
    pub diagonal_integral: f64,
    /// `γ(𝒮 ∖ 𝒮_r)` when a truncation was supplied.
    pub mass_outside_truncation: Option<f64>,
}

pub fn validate_initial<G: Generator + ?Sized>(
    model: &G,
    gamma: &InitialDistribution,
    truncation: Option<&Truncation>,
) -> Result<InitialDiagnostic> {
    let mut total = 0.0;
    let mut integral = 0.0;
    for (x, m) in gamma.support() {
        model.check_state(x)?;
        total += m;
        integral += m * model.rate_row(x).exit_rate();
    }
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::InvalidInitial(format!("masses sum to {total}, expected 1")));
    }
    let outside = truncation.map(|t| gamma.mass_where(|x| !t.contains(x)));
    Ok(InitialDiagnostic {
        total_mass: total,
        diagonal_integral: integral,
        mass_outside_truncation: outside,
    })
}
