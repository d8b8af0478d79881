//! Finite state projection with exit tracking for continuous-time Markov
//! chains on subsets of the integer lattice.
//!
//! A chain lives on a domain `D`; on leaving `D` it is stopped. The crate
//! computes, on a finite truncation `S_r`, the transient law restricted to
//! the interior, the time and place of exit, and a certified bound on how
//! much probability the truncation has lost.

pub mod domain;
pub mod error;
pub mod etfsp;
pub mod fsp;
pub mod model;
pub mod reference;
pub mod solver;
pub mod sparse;
pub mod ssa;
pub mod truncation;

pub use domain::{Cmp, DomainPredicate, LinearConstraint};
pub use error::{Error, Result};
pub use etfsp::{
    check_sweep_monotone, etfsp_solve, etfsp_solve_family, sweep, ConditionalDensity, EtfspSolution, Marginals,
    SweepRow,
};
pub use fsp::{fsp_error_trace, fsp_solve, FspSolution};
pub use model::{
    validate_initial, Absorbed, ChainModel, CustomRate, Generator, InitialDiagnostic,
    InitialDistribution, Jump, Monomial, Propensity, RateRow, ReactionChannel, State,
};
pub use reference::{
    build_gene_model, build_lv_model, lv_deterministic_trajectory, lv_fixation_targets, GeneExpressionParams,
    LotkaVolterraParams, LvFixation, ReferenceModel,
};
pub use solver::{
    integrate_linear, integrate_linear_with, spectral_bound, uniform_grid, IntegrationSpec, Method, SolverStats, Trajectory,
};
pub use sparse::CsrMatrix;
pub use ssa::{
    dkw_half_width, ks_critical, ks_distance, monte_carlo_exit, simulate_exit, wilson_interval, CensorReason, ExitSample,
    ExitSampleSet, SimulationCaps,
};
pub use truncation::{
    assemble_operators, assemble_state_generator, build_truncation, Slot, SparseOperators,
    Truncation, TruncationFamily, TruncationSpec,
};
