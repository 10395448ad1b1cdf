//! Coefficients and costs as weighted sums of named atoms.
//!
//! Each coefficient is evaluated coordinatewise: coordinate `k` of the output
//! reads coordinate `k` of its own state and control, coordinate `k mod n0` of
//! the delayed leader state and coordinate `k mod n1` of vector-valued measure
//! features. Noise is diagonal, so `d0 = p0 = n0` and `d1 = p1 = n1`.

use serde::{Deserialize, Serialize};

use super::features::{FeatureNeeds, Features};
use crate::error::{validation, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Atom {
    One,
    State,
    Control,
    /// Leader state at `t - δ` (followers only).
    Delayed,
    Mean,
    RootSecondMoment,
    /// `∫ tanh(y) z(dy)`.
    TanhKernel,
    SinKernel,
    AtanKernel,
    SinState,
    TanhState,
    SinDelayed,
    TanhMean,
    TanhMeanMinusState,
}

impl Atom {
    fn needs(self) -> FeatureNeeds {
        let mut n = FeatureNeeds::default();
        match self {
            Atom::Mean | Atom::TanhMean | Atom::TanhMeanMinusState => n.mean = true,
            Atom::RootSecondMoment => n.second_moment = true,
            Atom::TanhKernel => n.tanh = true,
            Atom::SinKernel => n.sin = true,
            Atom::AtanKernel => n.atan = true,
            _ => {}
        }
        n
    }

    fn uses_delayed(self) -> bool {
        matches!(self, Atom::Delayed | Atom::SinDelayed)
    }

    pub(crate) fn reads_measure(self) -> bool {
        self.needs().any()
    }

    /// Measure dependence is a linear functional `∫ψ dz`.
    fn linear_in_measure(self) -> bool {
        matches!(self, Atom::Mean | Atom::TanhKernel | Atom::SinKernel | Atom::AtanKernel) || !self.reads_measure()
    }

    fn linear_quadratic(self) -> bool {
        matches!(self, Atom::One | Atom::State | Atom::Control | Atom::Delayed | Atom::Mean)
    }

    /// Width of the argument the atom reads, for the cyclic-replication factor.
    fn input_width(self, own: usize, n0: usize, n1: usize) -> Option<usize> {
        match self {
            Atom::One => None,
            Atom::State | Atom::Control | Atom::SinState | Atom::TanhState => Some(own),
            Atom::Delayed | Atom::SinDelayed => Some(n0),
            Atom::RootSecondMoment => Some(1),
            _ => Some(n1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub weight: f64,
    pub atom: Atom,
}

impl Term {
    pub fn new(weight: f64, atom: Atom) -> Self {
        Self { weight, atom }
    }
}

/// Arguments for evaluating any term list at one time.
#[derive(Debug, Clone, Copy)]
pub struct Args<'a> {
    pub x: &'a [f64],
    pub v: &'a [f64],
    /// Leader state at `t - δ`; empty for the leader itself.
    pub delayed: &'a [f64],
    pub feats: &'a Features,
    pub delta: f64,
    pub t: f64,
}

pub(crate) fn atom_value(atom: Atom, a: &Args<'_>, k: usize) -> f64 {
    let n1 = a.feats.dim();
    let m = || a.feats.mean[k % n1];
    match atom {
        Atom::One => 1.0,
        Atom::State => a.x[k],
        Atom::Control => a.v[k % a.v.len()],
        Atom::Delayed => a.delayed[k % a.delayed.len()],
        Atom::Mean => m(),
        Atom::RootSecondMoment => a.feats.root_second_moment(),
        Atom::TanhKernel => a.feats.tanh[k % n1],
        Atom::SinKernel => a.feats.sin[k % n1],
        Atom::AtanKernel => a.feats.atan[k % n1],
        Atom::SinState => a.x[k].sin(),
        Atom::TanhState => a.x[k].tanh(),
        Atom::SinDelayed => a.delayed[k % a.delayed.len()].sin(),
        Atom::TanhMean => m().tanh(),
        Atom::TanhMeanMinusState => (m() - a.x[k]).tanh(),
    }
}

/// Evaluates `Σ w·atom` in coordinate `k`.
pub(crate) fn eval_terms(terms: &[Term], a: &Args<'_>, k: usize) -> f64 {
    terms.iter().map(|t| t.weight * atom_value(t.atom, a, k)).sum()
}

pub(crate) fn needs_of(terms: &[Term]) -> FeatureNeeds {
    terms.iter().fold(FeatureNeeds::default(), |n, t| n.union(t.atom.needs()))
}

/// A sufficient Lipschitz constant for `x ↦ (Σ w·atom_k(x))_k` with respect to
/// `|Δx| + W₂(z, z') + |Δv| + |Δx₀(t-δ)|`. Every atom is 1-Lipschitz in its
/// arguments; reading an input of width `m` into `n_out > m` coordinates costs
/// a factor `sqrt(ceil(n_out / m))`.
pub fn lipschitz_bound(terms: &[Term], n_out: usize, n0: usize, n1: usize) -> f64 {
    terms
        .iter()
        .map(|t| {
            let rep = match t.atom.input_width(n_out, n0, n1) {
                None => 0.0,
                Some(m) => (n_out.div_ceil(m) as f64).sqrt(),
            };
            t.weight.abs() * rep
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    LinearQuadratic,
    LinearInMeasure,
    SmoothNonlinear,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerCoefficients {
    #[serde(default)]
    pub drift: Vec<Term>,
    #[serde(default)]
    pub diffusion: Vec<Term>,
}

/// The four coefficient maps of the game with their declared Lipschitz constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSet {
    pub family: Family,
    pub lipschitz: f64,
    #[serde(default)]
    pub leader: PlayerCoefficients,
    #[serde(default)]
    pub follower: PlayerCoefficients,
}

/// Selects one of the four coefficient maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientRole {
    LeaderDrift,
    LeaderDiffusion,
    FollowerDrift,
    FollowerDiffusion,
}

impl CoefficientRole {
    pub const ALL: [CoefficientRole; 4] = [
        CoefficientRole::LeaderDrift,
        CoefficientRole::LeaderDiffusion,
        CoefficientRole::FollowerDrift,
        CoefficientRole::FollowerDiffusion,
    ];

    pub fn is_leader(self) -> bool {
        matches!(self, CoefficientRole::LeaderDrift | CoefficientRole::LeaderDiffusion)
    }
}

impl CoefficientSet {
    pub fn terms(&self, role: CoefficientRole) -> &[Term] {
        match role {
            CoefficientRole::LeaderDrift => &self.leader.drift,
            CoefficientRole::LeaderDiffusion => &self.leader.diffusion,
            CoefficientRole::FollowerDrift => &self.follower.drift,
            CoefficientRole::FollowerDiffusion => &self.follower.diffusion,
        }
    }

    pub fn needs(&self) -> FeatureNeeds {
        CoefficientRole::ALL
            .iter()
            .fold(FeatureNeeds::default(), |n, r| n.union(needs_of(self.terms(*r))))
    }

    /// True when some coefficient reads the measure argument.
    pub fn reads_measure(&self) -> bool {
        self.needs().any()
    }

    /// True when the follower coefficients read the delayed leader state.
    pub fn reads_delayed(&self) -> bool {
        self.follower.drift.iter().chain(&self.follower.diffusion).any(|t| t.atom.uses_delayed())
    }

    /// Largest analytic Lipschitz bound over the four maps.
    pub fn lipschitz_bound(&self, n0: usize, n1: usize) -> f64 {
        CoefficientRole::ALL
            .iter()
            .map(|r| lipschitz_bound(self.terms(*r), if r.is_leader() { n0 } else { n1 }, n0, n1))
            .fold(0.0, f64::max)
    }

    /// Every violated rule, as human-readable messages.
    pub fn violations(&self, n0: usize, n1: usize) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.lipschitz.is_finite() && self.lipschitz > 0.0) {
            out.push(format!("coefficients.lipschitz must be positive, got {}", self.lipschitz));
        }
        for role in CoefficientRole::ALL {
            let name = format!("{role:?}");
            for t in self.terms(role) {
                if !t.weight.is_finite() {
                    out.push(format!("{name}: weight {} is not finite", t.weight));
                }
                if role.is_leader() && t.atom.uses_delayed() {
                    out.push(format!("{name}: atom {:?} is only defined for followers", t.atom));
                }
                let ok = match self.family {
                    Family::LinearQuadratic => t.atom.linear_quadratic(),
                    Family::LinearInMeasure => t.atom.linear_in_measure(),
                    Family::SmoothNonlinear => true,
                };
                if !ok {
                    out.push(format!("{name}: atom {:?} is not allowed in family {:?}", t.atom, self.family));
                }
            }
        }
        let bound = self.lipschitz_bound(n0, n1);
        if self.lipschitz.is_finite() && bound > self.lipschitz * (1.0 + 1e-12) {
            out.push(format!(
                "coefficients.lipschitz = {} is below the analytic bound {bound}",
                self.lipschitz
            ));
        }
        out
    }

    pub fn validate(&self, n0: usize, n1: usize) -> Result<()> {
        match self.violations(n0, n1).into_iter().next() {
            Some(v) => Err(validation(v)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostAtom {
    One,
    StateSq,
    ControlSq,
    DelayedSq,
    StateMinusMeanSq,
    StateMinusDelayedSq,
    /// `∫|y|² z(dy)`.
    SecondMoment,
    MeanSq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostTerm {
    pub weight: f64,
    pub atom: CostAtom,
}

impl CostTerm {
    pub fn new(weight: f64, atom: CostAtom) -> Self {
        Self { weight, atom }
    }
}

/// Running costs `f₀, f₁` and terminal costs `h₀, h₁`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSet {
    #[serde(default)]
    pub leader_running: Vec<CostTerm>,
    #[serde(default)]
    pub leader_terminal: Vec<CostTerm>,
    #[serde(default)]
    pub follower_running: Vec<CostTerm>,
    #[serde(default)]
    pub follower_terminal: Vec<CostTerm>,
}

fn cost_atom_value(atom: CostAtom, a: &Args<'_>) -> f64 {
    let n1 = a.feats.dim();
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    match atom {
        CostAtom::One => 1.0,
        CostAtom::StateSq => sq(a.x),
        CostAtom::ControlSq => sq(a.v),
        CostAtom::DelayedSq => sq(a.delayed),
        CostAtom::StateMinusMeanSq => a
            .x
            .iter()
            .enumerate()
            .map(|(k, x)| (x - a.feats.mean[k % n1]).powi(2))
            .sum(),
        CostAtom::StateMinusDelayedSq => a
            .x
            .iter()
            .enumerate()
            .map(|(k, x)| (x - a.delayed[k % a.delayed.len()]).powi(2))
            .sum(),
        CostAtom::SecondMoment => a.feats.second_moment,
        CostAtom::MeanSq => sq(&a.feats.mean),
    }
}

pub(crate) fn eval_cost(terms: &[CostTerm], a: &Args<'_>) -> f64 {
    terms.iter().map(|t| t.weight * cost_atom_value(t.atom, a)).sum()
}

impl CostSet {
    pub fn needs(&self) -> FeatureNeeds {
        let mut n = FeatureNeeds::default();
        for t in self
            .leader_running
            .iter()
            .chain(&self.leader_terminal)
            .chain(&self.follower_running)
            .chain(&self.follower_terminal)
        {
            match t.atom {
                CostAtom::StateMinusMeanSq | CostAtom::MeanSq => n.mean = true,
                CostAtom::SecondMoment => n.second_moment = true,
                _ => {}
            }
        }
        n
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let groups: [(&str, &Vec<CostTerm>, bool, bool); 4] = [
            ("leader_running", &self.leader_running, true, false),
            ("leader_terminal", &self.leader_terminal, false, false),
            ("follower_running", &self.follower_running, true, true),
            ("follower_terminal", &self.follower_terminal, false, true),
        ];
        for (name, terms, running, follower) in groups {
            for t in terms {
                if !t.weight.is_finite() {
                    out.push(format!("costs.{name}: weight {} is not finite", t.weight));
                }
                if !running && t.atom == CostAtom::ControlSq {
                    out.push(format!("costs.{name}: terminal costs cannot depend on the control"));
                }
                if !follower && matches!(t.atom, CostAtom::DelayedSq | CostAtom::StateMinusDelayedSq) {
                    out.push(format!("costs.{name}: atom {:?} is only defined for followers", t.atom));
                }
            }
        }
        out
    }
}
