//! Finite truncations `𝒮_r` and the sparse operators both schemes integrate.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::domain::DomainPredicate;
use crate::error::{Error, Result};
use crate::model::{Generator, InitialDistribution, State};
use crate::sparse::CsrMatrix;

/// How `𝒮_r` grows with `r`. Every family is nested: `𝒮_r ⊆ 𝒮_{r+1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum TruncationFamily {
    /// `x_i < r` for each listed coordinate.
    Rectangle { axes: Vec<usize> },
    /// `Σ_{i ∈ axes} x_i ≤ r`.
    Simplex { axes: Vec<usize> },
    /// States reachable from the initial support in at most `r` transitions,
    /// never expanding out of states outside the domain.
    Reachable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationSpec {
    #[serde(flatten)]
    pub family: TruncationFamily,
    /// Optional per-coordinate caps `x_i ≤ caps[i]`, applied on top of the family.
    #[serde(default)]
    pub caps: Vec<Option<u32>>,
}

impl TruncationSpec {
    pub fn rectangle(axes: Vec<usize>, caps: Vec<Option<u32>>) -> Self {
        TruncationSpec {
            family: TruncationFamily::Rectangle { axes },
            caps,
        }
    }

    pub fn simplex(axes: Vec<usize>) -> Self {
        TruncationSpec {
            family: TruncationFamily::Simplex { axes },
            caps: Vec::new(),
        }
    }

    pub fn reachable() -> Self {
        TruncationSpec {
            family: TruncationFamily::Reachable,
            caps: Vec::new(),
        }
    }

    fn cap(&self, i: usize) -> Option<u32> {
        self.caps.get(i).copied().flatten()
    }

    fn within_caps(&self, x: &State) -> bool {
        x.coords()
            .iter()
            .enumerate()
            .all(|(i, &c)| self.cap(i).is_none_or(|cap| c <= cap))
    }
}

/// Position of a truncation state within the domain split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// Index into `𝒟_r`.
    Interior(usize),
    /// Index into `ℬ_r = 𝒮_r ∩ 𝒟ᶜ`.
    Boundary(usize),
}

#[derive(Debug, Clone)]
pub struct Truncation {
    states: Vec<State>,
    index: HashMap<State, usize>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    slots: Vec<Slot>,
    domain: DomainPredicate,
    spec: TruncationSpec,
    r: u32,
}

impl Truncation {
    /// Wraps an explicit state list; states are sorted lexicographically.
    pub fn from_states(
        mut states: Vec<State>,
        domain: DomainPredicate,
        spec: TruncationSpec,
        r: u32,
    ) -> Result<Self> {
        states.sort();
        states.dedup();
        Self::from_ordered(states, domain, spec, r)
    }

    fn from_ordered(states: Vec<State>, domain: DomainPredicate, spec: TruncationSpec, r: u32) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyTruncation);
        }
        let dim = states[0].dim();
        if states.iter().any(|s| s.dim() != dim) {
            return Err(Error::InvalidTruncation("states of differing dimension".into()));
        }
        let mut index = HashMap::with_capacity(states.len());
        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        let mut slots = Vec::with_capacity(states.len());
        for (i, s) in states.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::InvalidTruncation(format!("duplicate state {s}")));
            }
            if domain.contains(s) {
                slots.push(Slot::Interior(interior.len()));
                interior.push(i);
            } else {
                slots.push(Slot::Boundary(boundary.len()));
                boundary.push(i);
            }
        }
        Ok(Truncation {
            states,
            index,
            interior,
            boundary,
            slots,
            domain,
            spec,
            r,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn spec(&self) -> &TruncationSpec {
        &self.spec
    }

    pub fn domain(&self) -> &DomainPredicate {
        &self.domain
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn index_of(&self, x: &State) -> Option<usize> {
        self.index.get(x).copied()
    }

    pub fn contains(&self, x: &State) -> bool {
        self.index.contains_key(x)
    }

    pub fn slot(&self, x: &State) -> Option<Slot> {
        self.index_of(x).map(|i| self.slots[i])
    }

    pub fn interior_len(&self) -> usize {
        self.interior.len()
    }

    pub fn boundary_len(&self) -> usize {
        self.boundary.len()
    }

    /// `𝒟_r` in truncation order.
    pub fn interior_states(&self) -> impl ExactSizeIterator<Item = &State> + '_ {
        self.interior.iter().map(move |&i| &self.states[i])
    }

    /// `ℬ_r` in truncation order.
    pub fn boundary_states(&self) -> impl ExactSizeIterator<Item = &State> + '_ {
        self.boundary.iter().map(move |&i| &self.states[i])
    }

    pub fn interior_state(&self, k: usize) -> &State {
        &self.states[self.interior[k]]
    }

    pub fn boundary_state(&self, k: usize) -> &State {
        &self.states[self.boundary[k]]
    }

    pub fn interior_position(&self, x: &State) -> Option<usize> {
        match self.slot(x)? {
            Slot::Interior(k) => Some(k),
            Slot::Boundary(_) => None,
        }
    }

    pub fn boundary_position(&self, x: &State) -> Option<usize> {
        match self.slot(x)? {
            Slot::Boundary(k) => Some(k),
            Slot::Interior(_) => None,
        }
    }

    /// True when every state of `self` also lies in `other`.
    pub fn is_nested_in(&self, other: &Truncation) -> bool {
        self.states.iter().all(|s| other.contains(s))
    }

    /// `(γ(𝒟 ∖ 𝒟_r), γ(𝒟ᶜ ∖ 𝒮_r))`: initial mass the truncation cannot see.
    pub fn initial_mass_outside(&self, gamma: &InitialDistribution) -> (f64, f64) {
        let mut interior = 0.0;
        let mut boundary = 0.0;
        for (x, m) in gamma.support() {
            if !self.contains(x) {
                if self.domain.contains(x) {
                    interior += m;
                } else {
                    boundary += m;
                }
            }
        }
        (interior, boundary)
    }
}

/// Builds `𝒮_r` for a family. `initial` is required for [`TruncationFamily::Reachable`].
pub fn build_truncation<G: Generator + ?Sized>(
    model: &G,
    domain: &DomainPredicate,
    spec: &TruncationSpec,
    r: u32,
    initial: Option<&InitialDistribution>,
) -> Result<Truncation> {
    let dim = model.dimension();
    if spec.caps.len() > dim {
        return Err(Error::InvalidTruncation(format!("{} caps for dimension {dim}", spec.caps.len())));
    }
    match &spec.family {
        TruncationFamily::Rectangle { axes } | TruncationFamily::Simplex { axes } => {
            if let Some(&a) = axes.iter().find(|&&a| a >= dim) {
                return Err(Error::InvalidTruncation(format!("axis {a} out of range for dimension {dim}")));
            }
            let simplex = matches!(spec.family, TruncationFamily::Simplex { .. });
            let mut upper = Vec::with_capacity(dim);
            for i in 0..dim {
                let family_bound = if axes.contains(&i) {
                    if simplex {
                        Some(r as i64)
                    } else {
                        Some(r as i64 - 1)
                    }
                } else {
                    None
                };
                let bound = match (family_bound, spec.cap(i)) {
                    (Some(a), Some(c)) => a.min(c as i64),
                    (Some(a), None) => a,
                    (None, Some(c)) => c as i64,
                    (None, None) => {
                        return Err(Error::InvalidTruncation(format!(
                            "coordinate {i} is unbounded: add it to the family axes or give it a cap"
                        )))
                    }
                };
                if bound < 0 {
                    return Err(Error::EmptyTruncation);
                }
                upper.push(bound as u32);
            }
            let axes_mask: Vec<bool> = (0..dim).map(|i| axes.contains(&i)).collect();
            let mut states = Vec::new();
            let mut x = vec![0u32; dim];
            enumerate_box(&upper, &axes_mask, simplex, r as u64, 0, 0, &mut x, &mut states);
            Truncation::from_ordered(states, domain.clone(), spec.clone(), r)
        }
        TruncationFamily::Reachable => {
            let gamma = initial.ok_or_else(|| {
                Error::InvalidArgument("reachable truncations need an initial distribution".into())
            })?;
            let mut seen: HashSet<State> = HashSet::new();
            let mut order = Vec::new();
            let mut layer: BTreeSet<State> = BTreeSet::new();
            for (x, _) in gamma.support() {
                model.check_state(x)?;
                if spec.within_caps(x) {
                    layer.insert(x.clone());
                }
            }
            for depth in 0..=r {
                let current: Vec<State> = layer.into_iter().filter(|s| seen.insert(s.clone())).collect();
                order.extend(current.iter().cloned());
                if depth == r {
                    break;
                }
                layer = BTreeSet::new();
                for x in current.iter().filter(|x| domain.contains(x)) {
                    for (y, _) in model.rate_row(x).transitions {
                        if !seen.contains(&y) && spec.within_caps(&y) {
                            layer.insert(y);
                        }
                    }
                }
                if layer.is_empty() {
                    break;
                }
            }
            Truncation::from_ordered(order, domain.clone(), spec.clone(), r)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn enumerate_box(
    upper: &[u32],
    axes: &[bool],
    simplex: bool,
    budget: u64,
    used: u64,
    i: usize,
    x: &mut Vec<u32>,
    out: &mut Vec<State>,
) {
    if i == upper.len() {
        out.push(State::new(x.clone()));
        return;
    }
    let mut hi = upper[i] as u64;
    if simplex && axes[i] {
        hi = hi.min(budget - used);
    }
    for v in 0..=hi {
        x[i] = v as u32;
        let used = if simplex && axes[i] { used + v } else { used };
        enumerate_box(upper, axes, simplex, budget, used, i + 1, x, out);
    }
    x[i] = 0;
}

/// Generator blocks on a truncation, all in the row-source/column-target
/// convention `A[y][x] = q(y, x)`.
#[derive(Debug, Clone)]
pub struct SparseOperators {
    /// `q(y, x)` for `y, x ∈ 𝒟_r`, with the full diagonal `q(y, y)`.
    pub q_dd: CsrMatrix,
    /// `q(y, x)` for `y ∈ 𝒟_r`, `x ∈ ℬ_r`.
    pub q_db: CsrMatrix,
    /// Per interior state, the total rate into states outside `𝒮_r`.
    pub leak: Vec<f64>,
}

pub fn assemble_operators<G: Generator + ?Sized>(model: &G, truncation: &Truncation) -> Result<SparseOperators> {
    if truncation.is_empty() {
        return Err(Error::EmptyTruncation);
    }
    let n_int = truncation.interior_len();
    let mut dd_rows = Vec::with_capacity(n_int);
    let mut db_rows = Vec::with_capacity(n_int);
    let mut leak = Vec::with_capacity(n_int);
    for (k, y) in truncation.interior_states().enumerate() {
        model.check_state(y)?;
        let row = model.rate_row(y);
        let mut dd = vec![(k, row.diagonal)];
        let mut db = Vec::new();
        let mut out = 0.0;
        for (x, rate) in row.transitions {
            match truncation.slot(&x) {
                Some(Slot::Interior(j)) => dd.push((j, rate)),
                Some(Slot::Boundary(b)) => db.push((b, rate)),
                None => out += rate,
            }
        }
        dd_rows.push(dd);
        db_rows.push(db);
        leak.push(out);
    }
    Ok(SparseOperators {
        q_dd: CsrMatrix::from_rows(n_int, dd_rows),
        q_db: CsrMatrix::from_rows(truncation.boundary_len(), db_rows),
        leak,
    })
}

/// `Q_{𝒮_r}`: the generator restricted to all of `𝒮_r`, as used by FSP.
pub fn assemble_state_generator<G: Generator + ?Sized>(model: &G, truncation: &Truncation) -> Result<CsrMatrix> {
    if truncation.is_empty() {
        return Err(Error::EmptyTruncation);
    }
    let mut rows = Vec::with_capacity(truncation.len());
    for (i, y) in truncation.states().iter().enumerate() {
        model.check_state(y)?;
        let row = model.rate_row(y);
        let mut entries = vec![(i, row.diagonal)];
        entries.extend(
            row.transitions
                .into_iter()
                .filter_map(|(x, rate)| truncation.index_of(&x).map(|j| (j, rate))),
        );
        rows.push(entries);
    }
    Ok(CsrMatrix::from_rows(truncation.len(), rows))
}
