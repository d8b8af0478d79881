//! Gillespie simulation of exit times, used as an independent statistical
//! check on the deterministic schemes.
//!
//! Sample `i` of a run with seed `s` draws from `ChaCha8Rng` seeded with `s`
//! on stream `i`, so an ensemble is reproducible regardless of how it is
//! scheduled across threads.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::domain::DomainPredicate;
use crate::error::{Error, Result};
use crate::model::{ChainModel, Generator, InitialDistribution, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensorReason {
    /// Still inside the domain at the time cap (including absorbing states).
    TimeCap,
    /// Too many jumps; stands in for explosion.
    JumpCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitSample {
    /// Exit time, or the time at which the path was censored.
    pub exit_time: f64,
    /// First state outside the domain; the last state visited when censored.
    pub state: State,
    pub jumps: u64,
    pub censored: Option<CensorReason>,
}

impl ExitSample {
    pub fn exited(&self) -> bool {
        self.censored.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationCaps {
    pub time_cap: f64,
    pub jump_cap: u64,
}

impl SimulationCaps {
    pub fn validate(&self) -> Result<()> {
        // Negated form also rejects NaN.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        let bad_time = !(self.time_cap > 0.0);
        if bad_time || self.jump_cap == 0 {
            return Err(Error::InvalidArgument(format!(
                "simulation caps must be positive (time_cap = {}, jump_cap = {})",
                self.time_cap, self.jump_cap
            )));
        }
        Ok(())
    }
}

fn sample_initial<R: Rng>(gamma: &InitialDistribution, rng: &mut R) -> State {
    let support = gamma.support();
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (x, m) in support {
        acc += m;
        if u < acc {
            return x.clone();
        }
    }
    // Round-off: the masses sum to slightly below one.
    support.iter().rev().find(|e| e.1 > 0.0).unwrap_or(&support[0]).0.clone()
}

fn run_path<R: Rng>(
    model: &ChainModel,
    domain: &DomainPredicate,
    gamma: &InitialDistribution,
    caps: SimulationCaps,
    rng: &mut R,
) -> ExitSample {
    let mut x = sample_initial(gamma, rng).coords().to_vec();
    let jumps = model.jumps();
    let mut rates = vec![0.0; jumps.len()];
    let mut t = 0.0;
    let mut n = 0u64;
    let censor = |x: &[u32], t: f64, n: u64, why: CensorReason| ExitSample {
        exit_time: t,
        state: State::new(x.to_vec()),
        jumps: n,
        censored: Some(why),
    };
    loop {
        if !domain.holds(&x) {
            return ExitSample {
                exit_time: t,
                state: State::new(x),
                jumps: n,
                censored: None,
            };
        }
        if n >= caps.jump_cap {
            return censor(&x, t, n, CensorReason::JumpCap);
        }
        model.jump_rates(&x, &mut rates);
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            return censor(&x, caps.time_cap, n, CensorReason::TimeCap);
        }
        let hold: f64 = rng.sample::<f64, _>(Exp1) / total;
        if t + hold > caps.time_cap {
            return censor(&x, caps.time_cap, n, CensorReason::TimeCap);
        }
        t += hold;
        // Inverse CDF over the jump row in the model's fixed order.
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (j, &r) in rates.iter().enumerate() {
            if r > 0.0 {
                acc += r;
                pick = Some(j);
                if u < acc {
                    break;
                }
            }
        }
        let change = &jumps[pick.expect("positive total rate")].change;
        for (c, &d) in x.iter_mut().zip(change) {
            *c = (*c as i64 + d) as u32;
        }
        n += 1;
    }
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn check_inputs(model: &ChainModel, gamma: &InitialDistribution, caps: &SimulationCaps) -> Result<()> {
    caps.validate()?;
    for (x, _) in gamma.support() {
        model.check_state(x)?;
    }
    Ok(())
}

/// One exit sample (stream 0 of `seed`).
pub fn simulate_exit(
    model: &ChainModel,
    domain: &DomainPredicate,
    gamma: &InitialDistribution,
    seed: u64,
    caps: SimulationCaps,
) -> Result<ExitSample> {
    check_inputs(model, gamma, &caps)?;
    Ok(run_path(model, domain, gamma, caps, &mut sample_rng(seed, 0)))
}

/// `n` independent samples, computed in parallel and ordered by index.
pub fn monte_carlo_exit(
    model: &ChainModel,
    domain: &DomainPredicate,
    gamma: &InitialDistribution,
    n: usize,
    seed: u64,
    caps: SimulationCaps,
) -> Result<ExitSampleSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("number of samples must be at least 1".into()));
    }
    check_inputs(model, gamma, &caps)?;
    let samples = (0..n as u64)
        .into_par_iter()
        .map(|i| run_path(model, domain, gamma, caps, &mut sample_rng(seed, i)))
        .collect();
    Ok(ExitSampleSet { samples, seed, caps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitSampleSet {
    pub samples: Vec<ExitSample>,
    pub seed: u64,
    pub caps: SimulationCaps,
}

impl ExitSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn censored(&self) -> usize {
        self.samples.iter().filter(|s| !s.exited()).count()
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored() as f64 / self.len() as f64
    }

    /// Sorted exit times of the uncensored samples.
    pub fn exit_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.samples.iter().filter(|s| s.exited()).map(|s| s.exit_time).collect();
        t.sort_by(f64::total_cmp);
        t
    }

    /// Empirical `P(τ ≤ t)` at each grid time; censored paths count as not
    /// yet exited.
    pub fn ecdf(&self, grid: &[f64]) -> Vec<f64> {
        let times = self.exit_times();
        let n = self.len() as f64;
        grid.iter()
            .map(|&t| times.partition_point(|&s| s <= t) as f64 / n)
            .collect()
    }

    /// Dvoretzky–Kiefer–Wolfowitz half-width at level `alpha`.
    pub fn dkw_half_width(&self, alpha: f64) -> f64 {
        dkw_half_width(self.len(), alpha)
    }

    /// Number of exits through each state.
    pub fn exit_counts(&self) -> BTreeMap<State, usize> {
        let mut m = BTreeMap::new();
        for s in self.samples.iter().filter(|s| s.exited()) {
            *m.entry(s.state.clone()).or_insert(0) += 1;
        }
        m
    }

    pub fn count_where(&self, mut pred: impl FnMut(&ExitSample) -> bool) -> usize {
        self.samples.iter().filter(|s| pred(s)).count()
    }

    /// Largest gap between the empirical CDF of the uncensored exit times
    /// and `cdf`, over all `n` samples.
    pub fn ks_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        ks_distance(&self.exit_times(), self.len(), cdf)
    }
}

pub fn dkw_half_width(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Wilson score interval for `k` successes in `n` trials at level `1 − alpha`.
pub fn wilson_interval(k: usize, n: usize, alpha: f64) -> (f64, f64) {
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Kolmogorov–Smirnov distance for sorted `times` out of `n` draws; the
/// `n − times.len()` missing draws are taken to lie beyond every time.
pub fn ks_distance(times: &[f64], n: usize, cdf: impl Fn(f64) -> f64) -> f64 {
    let n = n as f64;
    let mut d: f64 = 0.0;
    for (i, &t) in times.iter().enumerate() {
        let f = cdf(t);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Asymptotic one-sample KS critical value `sqrt(ln(2/α)/2) / sqrt(n)`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / 2.0).sqrt() / (n as f64).sqrt()
}
