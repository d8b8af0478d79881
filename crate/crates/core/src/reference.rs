//! The two worked examples: a gene-expression model with a protein
//! threshold, and competitive Lotka–Volterra dynamics with fixation.

use serde::{Deserialize, Serialize};

use crate::domain::{Cmp, DomainPredicate, LinearConstraint};
use crate::error::{Error, Result};
use crate::etfsp::EtfspSolution;
use crate::model::{ChainModel, Monomial, ReactionChannel, State};
use crate::truncation::TruncationSpec;

/// A model together with its domain and the truncation family used for it.
#[derive(Debug, Clone)]
pub struct ReferenceModel {
    pub model: ChainModel,
    pub domain: DomainPredicate,
    pub truncation: TruncationSpec,
}

/// mRNA `m` and protein `p`: `∅ → m` at `k1`, `m → ∅` at `k2·m`,
/// `m → m + p` at `k3·m`, `p → ∅` at `k4·p`. The chain is stopped once
/// `p` reaches `p_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneExpressionParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub p_c: u32,
}

impl Default for GeneExpressionParams {
    fn default() -> Self {
        GeneExpressionParams {
            k1: 5.0,
            k2: 1.0,
            k3: 10.0,
            k4: 0.1,
            p_c: 100,
        }
    }
}

impl GeneExpressionParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("k1", self.k1), ("k2", self.k2), ("k3", self.k3), ("k4", self.k4)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidModel(format!("{name} must be positive, got {v}")));
            }
        }
        if self.p_c == 0 {
            return Err(Error::InvalidModel("p_c must be positive".into()));
        }
        Ok(())
    }
}

/// Species `m`, `p`; domain `p < p_c`; truncation `{m < r, p ≤ p_c}`.
pub fn build_gene_model(params: &GeneExpressionParams) -> Result<ReferenceModel> {
    params.validate()?;
    let model = ChainModel::new(
        vec!["m".into(), "p".into()],
        vec![
            ReactionChannel::mass_action("transcription", vec![1, 0], params.k1, vec![]),
            ReactionChannel::mass_action("mrna_decay", vec![-1, 0], params.k2, vec![(0, 1)]),
            ReactionChannel::mass_action("translation", vec![0, 1], params.k3, vec![(0, 1)]),
            ReactionChannel::mass_action("protein_decay", vec![0, -1], params.k4, vec![(1, 1)]),
        ],
    )?;
    Ok(ReferenceModel {
        model,
        domain: DomainPredicate::coordinate(2, 1, Cmp::Lt, params.p_c as i64),
        truncation: TruncationSpec::rectangle(vec![0], vec![None, Some(params.p_c)]),
    })
}

/// Two competing species with birth `b_i x_i / K`, death `d_i x_i / K` and
/// competition `c_ij x_i x_j / K²` (plain products, as in the deterministic
/// limit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LotkaVolterraParams {
    pub b: [f64; 2],
    pub d: [f64; 2],
    pub c: [[f64; 2]; 2],
    pub k: f64,
}

impl Default for LotkaVolterraParams {
    fn default() -> Self {
        LotkaVolterraParams {
            b: [2.0, 5.0],
            d: [1.0, 4.0],
            c: [[1.0; 2]; 2],
            k: 30.0,
        }
    }
}

impl LotkaVolterraParams {
    /// Birth rates set from a growth difference: `b₁ = 1 + Δλ + d₁`, `b₂ = 1 + d₂`.
    pub fn with_growth_difference(d: [f64; 2], delta_lambda: f64) -> Self {
        LotkaVolterraParams {
            b: [1.0 + delta_lambda + d[0], 1.0 + d[1]],
            d,
            ..Default::default()
        }
    }

    /// `Δλ = (b₁ − d₁) − (b₂ − d₂)`.
    pub fn growth_difference(&self) -> f64 {
        (self.b[0] - self.d[0]) - (self.b[1] - self.d[1])
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.b.iter().chain(&self.d).chain(self.c.iter().flatten()).chain([&self.k]);
        if let Some(v) = all.into_iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidModel(format!("Lotka-Volterra parameters must be positive, got {v}")));
        }
        Ok(())
    }

    /// Right-hand side of the deterministic equations.
    pub fn drift(&self, x: [f64; 2]) -> [f64; 2] {
        let k = self.k;
        let mut out = [0.0; 2];
        for i in 0..2 {
            let grow = (self.b[i] - self.d[i]) * x[i] / k;
            let compete = (self.c[i][0] * x[0] + self.c[i][1] * x[1]) * x[i] / (k * k);
            out[i] = grow - compete;
        }
        out
    }
}

/// Species `x1`, `x2`; domain `x1 > 0 && x2 > 0`; truncation `x1 + x2 ≤ r`.
pub fn build_lv_model(params: &LotkaVolterraParams) -> Result<ReferenceModel> {
    params.validate()?;
    let k = params.k;
    let k2 = k * k;
    let mut channels = Vec::with_capacity(6);
    for i in 0..2 {
        let j = 1 - i;
        let mut up = vec![0; 2];
        up[i] = 1;
        let down: Vec<i64> = up.iter().map(|v| -v).collect();
        let n = i + 1;
        channels.push(ReactionChannel::polynomial(
            format!("birth{n}"),
            up,
            vec![Monomial {
                coeff: params.b[i] / k,
                powers: vec![(i, 1)],
            }],
        ));
        channels.push(ReactionChannel::polynomial(
            format!("death{n}"),
            down.clone(),
            vec![Monomial {
                coeff: params.d[i] / k,
                powers: vec![(i, 1)],
            }],
        ));
        channels.push(ReactionChannel::polynomial(
            format!("competition{n}"),
            down,
            vec![
                Monomial {
                    coeff: params.c[i][i] / k2,
                    powers: vec![(i, 2)],
                },
                Monomial {
                    coeff: params.c[i][j] / k2,
                    powers: vec![(i, 1), (j, 1)],
                },
            ],
        ));
    }
    let model = ChainModel::new(vec!["x1".into(), "x2".into()], channels)?;
    let domain = DomainPredicate::And(vec![
        DomainPredicate::Linear(LinearConstraint::new(vec![1, 0], Cmp::Gt, 0)),
        DomainPredicate::Linear(LinearConstraint::new(vec![0, 1], Cmp::Gt, 0)),
    ]);
    Ok(ReferenceModel {
        model,
        domain,
        truncation: TruncationSpec::simplex(vec![0, 1]),
    })
}

/// Fixed-step RK4 for the deterministic equations, clamping at zero.
/// Returns `(t, x)` pairs including both end points.
pub fn lv_deterministic_trajectory(
    params: &LotkaVolterraParams,
    x0: [f64; 2],
    t_final: f64,
    dt: f64,
) -> Result<Vec<(f64, [f64; 2])>> {
    params.validate()?;
    if x0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("initial point must be non-negative, got {x0:?}")));
    }
    if !(dt.is_finite() && dt > 0.0) || !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and t_final >= 0 (dt = {dt}, t_final = {t_final})")));
    }
    let steps = (t_final / dt).ceil() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut x = x0;
    out.push((0.0, x));
    let axpy = |x: [f64; 2], h: f64, k: [f64; 2]| [x[0] + h * k[0], x[1] + h * k[1]];
    for s in 0..steps {
        let t = s as f64 * dt;
        let h = dt.min(t_final - t);
        let k1 = params.drift(x);
        let k2 = params.drift(axpy(x, h / 2.0, k1));
        let k3 = params.drift(axpy(x, h / 2.0, k2));
        let k4 = params.drift(axpy(x, h, k3));
        for i in 0..2 {
            x[i] = (x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).max(0.0);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t + h });
        }
        out.push((if s + 1 == steps { t_final } else { t + h }, x));
    }
    Ok(out)
}

/// Exit mass split by how the domain was left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LvFixation {
    /// Through `{(x1, 0): x1 > 0}`: species 2 extinct.
    pub species1: f64,
    /// Through `{(0, x2): x2 > 0}`: species 1 extinct.
    pub species2: f64,
    /// Through `(0, 0)`.
    pub extinction: f64,
    pub epsilon: f64,
}

impl LvFixation {
    pub fn from_solution(sol: &EtfspSolution) -> Self {
        let c = |x: &State| (x.coords()[0], x.coords()[1]);
        LvFixation {
            species1: sol.exit_mass_where(|x| matches!(c(x), (a, 0) if a > 0)),
            species2: sol.exit_mass_where(|x| matches!(c(x), (0, b) if b > 0)),
            extinction: sol.exit_mass_where(|x| c(x) == (0, 0)),
            epsilon: sol.epsilon,
        }
    }

    pub fn total(&self) -> f64 {
        self.species1 + self.species2 + self.extinction + self.epsilon
    }
}

/// Boundary classes of the Lotka–Volterra domain, for conditioning.
pub fn lv_fixation_targets(sol: &EtfspSolution) -> [Vec<State>; 2] {
    [
        sol.boundary_where(|x| x.coords()[1] == 0 && x.coords()[0] > 0),
        sol.boundary_where(|x| x.coords()[0] == 0 && x.coords()[1] > 0),
    ]
}
