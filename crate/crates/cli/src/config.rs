//! Run configuration, read from TOML. Unknown keys are rejected everywhere.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use exitfsp::{
    build_gene_model, build_lv_model, ChainModel, DomainPredicate, GeneExpressionParams, InitialDistribution,
    IntegrationSpec, LotkaVolterraParams, Method, ReactionChannel, SimulationCaps, State, TruncationFamily,
    TruncationSpec,
};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    #[serde(default)]
    pub times: TimesConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<PhaseConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    GeneExpression(GeneExpressionParams),
    LotkaVolterra(LvConfig),
    Custom(CustomModel),
}

/// Either `b` or `delta_lambda` (which sets `b₁ = 1 + Δλ + d₁`, `b₂ = 1 + d₂`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LvConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<[f64; 2]>,
    #[serde(default = "default_lv_d")]
    pub d: [f64; 2],
    #[serde(default = "default_lv_c")]
    pub c: [[f64; 2]; 2],
    #[serde(default = "default_lv_k")]
    pub k: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_lambda: Option<f64>,
}

fn default_lv_d() -> [f64; 2] {
    LotkaVolterraParams::default().d
}

fn default_lv_c() -> [[f64; 2]; 2] {
    LotkaVolterraParams::default().c
}

fn default_lv_k() -> f64 {
    LotkaVolterraParams::default().k
}

impl LvConfig {
    pub fn params(&self) -> Result<LotkaVolterraParams, CliError> {
        let mut p = match (self.b, self.delta_lambda) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("model: give either 'b' or 'delta_lambda', not both".into()))
            }
            (Some(b), None) => LotkaVolterraParams {
                b,
                d: self.d,
                ..Default::default()
            },
            (None, Some(dl)) => LotkaVolterraParams::with_growth_difference(self.d, dl),
            (None, None) => LotkaVolterraParams {
                d: self.d,
                ..Default::default()
            },
        };
        p.c = self.c;
        p.k = self.k;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomModel {
    pub species: Vec<String>,
    pub channels: Vec<ChannelConfig>,
}

/// A mass-action channel; `change` and `reactants` are keyed by species name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub name: String,
    pub change: BTreeMap<String, i64>,
    pub rate: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub reactants: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub expr: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Rectangle,
    Simplex,
    Reachable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<String>>,
    /// Extra upper bounds `x ≤ cap` by species name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub caps: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Shorthand for a point mass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<InitialEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialEntry {
    pub state: Vec<u32>,
    pub mass: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimesConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    /// One final time per entry of the truncation schedule (sweeps only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final_schedule: Option<Vec<f64>>,
    /// Uniform output grid on `[0, t_final]`; defaults to 101 points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    /// Explicit output times, instead of `grid_points`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_atol")]
    pub atol: f64,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub method: Method,
}

fn default_atol() -> f64 {
    exitfsp::solver::DEFAULT_ATOL
}

fn default_rtol() -> f64 {
    exitfsp::solver::DEFAULT_RTOL
}

fn default_max_steps() -> usize {
    exitfsp::solver::DEFAULT_MAX_STEPS
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            atol: default_atol(),
            rtol: default_rtol(),
            max_steps: default_max_steps(),
            method: Method::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    pub time_cap: f64,
    #[serde(default = "default_jump_cap")]
    pub jump_cap: u64,
    /// Points of the empirical CDF written by `simulate`.
    #[serde(default = "default_ecdf_points")]
    pub ecdf_points: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_jump_cap() -> u64 {
    100_000_000
}

fn default_ecdf_points() -> usize {
    201
}

fn default_alpha() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    /// Conditional exit-time densities to write, each over the boundary
    /// states matching a predicate.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditional: Vec<ConditionalConfig>,
    /// Upper bound on the mean exit time, enabling the occupation error bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_exit_upper: Option<f64>,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            conditional: Vec::new(),
            mean_exit_upper: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionalConfig {
    pub name: String,
    pub select: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub x0: Vec<[f64; 2]>,
    pub t_final: f64,
    pub dt: f64,
}

/// Everything a solver needs, resolved from the configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: ChainModel,
    pub domain: DomainPredicate,
    pub family: TruncationSpec,
    pub gamma: InitialDistribution,
    pub lv: Option<LotkaVolterraParams>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let (model, builtin_domain, builtin_family, builtin_gamma, lv) = match &self.model {
            ModelConfig::GeneExpression(p) => {
                let r = build_gene_model(p)?;
                (r.model, Some(r.domain), Some(r.truncation), Some(State::from([0, 0])), None)
            }
            ModelConfig::LotkaVolterra(c) => {
                let p = c.params()?;
                let r = build_lv_model(&p)?;
                (r.model, Some(r.domain), Some(r.truncation), Some(State::from([10, 10])), Some(p))
            }
            ModelConfig::Custom(c) => (custom_model(c)?, None, None, None, None),
        };
        let species = model.species().to_vec();
        let index = |name: &str, what: &str| {
            model
                .species_index(name)
                .ok_or_else(|| CliError::Config(format!("{what}: unknown species '{name}'")))
        };

        let domain = match (&self.domain, builtin_domain) {
            (Some(d), _) => DomainPredicate::parse(&d.expr, &species)?,
            (None, Some(d)) => d,
            (None, None) => return Err(CliError::Config("domain: 'expr' is required for custom models".into())),
        };

        let tc = self.truncation.clone().unwrap_or(TruncationConfig {
            family: None,
            axes: None,
            caps: BTreeMap::new(),
            r: None,
            schedule: None,
        });
        let mut family = match (tc.family, builtin_family) {
            (Some(f), _) => {
                let axes = tc
                    .axes
                    .iter()
                    .flatten()
                    .map(|a| index(a, "truncation.axes"))
                    .collect::<Result<Vec<_>, _>>()?;
                match f {
                    FamilyName::Rectangle => TruncationSpec::rectangle(axes, Vec::new()),
                    FamilyName::Simplex => TruncationSpec::simplex(axes),
                    FamilyName::Reachable => TruncationSpec::reachable(),
                }
            }
            (None, Some(b)) => {
                if tc.axes.is_some() {
                    return Err(CliError::Config("truncation: 'axes' needs 'family'".into()));
                }
                b
            }
            (None, None) => return Err(CliError::Config("truncation: 'family' is required for custom models".into())),
        };
        if matches!(family.family, TruncationFamily::Rectangle { .. } | TruncationFamily::Simplex { .. })
            && tc.family.is_some()
            && tc.axes.as_ref().is_none_or(|a| a.is_empty())
        {
            return Err(CliError::Config("truncation: 'axes' is required for this family".into()));
        }
        family.caps.resize(species.len(), None);
        for (name, &cap) in &tc.caps {
            let i = index(name, "truncation.caps")?;
            family.caps[i] = Some(family.caps[i].map_or(cap, |c| c.min(cap)));
        }

        let gamma = match &self.initial {
            Some(InitialConfig {
                state: Some(s),
                support: None,
            }) => InitialDistribution::dirac(State::new(s.clone())),
            Some(InitialConfig {
                state: None,
                support: Some(entries),
            }) => InitialDistribution::new(entries.iter().map(|e| (State::new(e.state.clone()), e.mass)))?,
            Some(_) => return Err(CliError::Config("initial: give exactly one of 'state' or 'support'".into())),
            None => match builtin_gamma {
                Some(s) => InitialDistribution::dirac(s),
                None => return Err(CliError::Config("initial: required for custom models".into())),
            },
        };
        for (x, _) in gamma.support() {
            if x.dim() != species.len() {
                return Err(CliError::Config(format!(
                    "initial: state {x} has {} coordinates, the model has {} species",
                    x.dim(),
                    species.len()
                )));
            }
        }
        Ok(Resolved {
            model,
            domain,
            family,
            gamma,
            lv,
        })
    }

    pub fn t_final(&self) -> Result<f64, CliError> {
        self.times
            .t_final
            .ok_or_else(|| CliError::Config("times: 't_final' is required".into()))
    }

    pub fn r(&self) -> Result<u32, CliError> {
        self.truncation
            .as_ref()
            .and_then(|t| t.r)
            .ok_or_else(|| CliError::Config("truncation: 'r' is required".into()))
    }

    /// Output grid for a run ending at `t_final`.
    pub fn grid(&self, t_final: f64) -> Result<Vec<f64>, CliError> {
        match (&self.times.grid, self.times.grid_points) {
            (Some(_), Some(_)) => Err(CliError::Config("times: give either 'grid' or 'grid_points', not both".into())),
            (Some(g), None) => Ok(g.clone()),
            (None, n) => Ok(exitfsp::uniform_grid(t_final, n.unwrap_or(101))),
        }
    }

    pub fn integration(&self, grid: Vec<f64>) -> IntegrationSpec {
        IntegrationSpec {
            atol: self.solver.atol,
            rtol: self.solver.rtol,
            grid,
            max_steps: self.solver.max_steps,
            method: self.solver.method,
        }
    }

    pub fn oracle(&self) -> Result<&OracleConfig, CliError> {
        let o = self
            .oracle
            .as_ref()
            .ok_or_else(|| CliError::Config("oracle: section is required".into()))?;
        if o.samples == 0 {
            return Err(CliError::Config("oracle: 'samples' must be at least 1".into()));
        }
        if !(o.alpha > 0.0 && o.alpha < 1.0) {
            return Err(CliError::Config("oracle: 'alpha' must lie in (0, 1)".into()));
        }
        Ok(o)
    }

    pub fn caps(&self) -> Result<SimulationCaps, CliError> {
        let o = self.oracle()?;
        let caps = SimulationCaps {
            time_cap: o.time_cap,
            jump_cap: o.jump_cap,
        };
        caps.validate()?;
        Ok(caps)
    }
}

fn custom_model(c: &CustomModel) -> Result<ChainModel, CliError> {
    let idx = |name: &String, ch: &str| {
        c.species
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| CliError::Config(format!("model.channels '{ch}': unknown species '{name}'")))
    };
    let mut channels = Vec::with_capacity(c.channels.len());
    for ch in &c.channels {
        let mut change = vec![0i64; c.species.len()];
        for (s, &d) in &ch.change {
            change[idx(s, &ch.name)?] = d;
        }
        let reactants = ch
            .reactants
            .iter()
            .map(|(s, &n)| Ok((idx(s, &ch.name)?, n)))
            .collect::<Result<Vec<_>, CliError>>()?;
        channels.push(ReactionChannel::mass_action(ch.name.clone(), change, ch.rate, reactants));
    }
    Ok(ChainModel::new(c.species.clone(), channels)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn growth_difference_and_explicit_births_conflict() {
        let text = "[model]\nkind = \"lotka_volterra\"\nb = [2.0, 5.0]\ndelta_lambda = 0.1\n";
        let err = RunConfig::from_toml(text).unwrap().resolve().unwrap_err();
        assert!(err.to_string().contains("delta_lambda"));
        let text = "[model]\nkind = \"lotka_volterra\"\nd = [1.0, 10.0]\ndelta_lambda = 0.5\n";
        let res = RunConfig::from_toml(text).unwrap().resolve().unwrap();
        assert_eq!(res.lv.unwrap().b, [2.5, 11.0]);
    }

    #[test]
    fn caps_merge_with_builtin_family() {
        let text = "[model]\nkind = \"gene_expression\"\n[truncation]\nr = 4\ncaps = { p = 20 }\n";
        let res = RunConfig::from_toml(text).unwrap().resolve().unwrap();
        assert_eq!(res.family.caps, vec![None, Some(20)]);
        let text = "[model]\nkind = \"gene_expression\"\n[truncation]\ncaps = { z = 1 }\n";
        assert!(RunConfig::from_toml(text).unwrap().resolve().is_err());
    }

    #[test]
    fn custom_models_need_domain_family_and_initial() {
        let base = "[model]\nkind = \"custom\"\nspecies = [\"n\"]\n[[model.channels]]\nname = \"b\"\nchange = { n = 1 }\nrate = 1.0\n";
        let err = RunConfig::from_toml(base).unwrap().resolve().unwrap_err();
        assert!(err.to_string().contains("domain"));
        let full = format!(
            "{base}[domain]\nexpr = \"n < 3\"\n[truncation]\nfamily = \"reachable\"\n[initial]\nsupport = [{{ state = [0], mass = 0.5 }}, {{ state = [1], mass = 0.5 }}]\n"
        );
        let res = RunConfig::from_toml(&full).unwrap().resolve().unwrap();
        assert_eq!(res.gamma.support().len(), 2);
        let both = format!("{full}state = [0]\n");
        assert!(RunConfig::from_toml(&both).unwrap().resolve().is_err());
    }

    #[test]
    fn grid_options_are_exclusive() {
        let text = "[model]\nkind = \"gene_expression\"\n[times]\nt_final = 1.0\ngrid = [0.0, 1.0]\ngrid_points = 3\n";
        assert!(RunConfig::from_toml(text).unwrap().grid(1.0).is_err());
        let text = "[model]\nkind = \"gene_expression\"\n[times]\nt_final = 2.0\ngrid_points = 3\n";
        assert_eq!(RunConfig::from_toml(text).unwrap().grid(2.0).unwrap(), vec![0.0, 1.0, 2.0]);
    }
}
