use rand::Rng;
use serde::{Deserialize, Serialize};

use super::coefficients::Args;
use super::features::{FeatureNeeds, Features};
use crate::error::{parameter, validation, Result};
use crate::seed::rng_from;

/// Building blocks of prescribed feedback controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyAtom {
    One,
    State,
    Mean,
    /// Leader state at `t - δ` (followers only).
    Delayed,
    /// The follower's own delay `δ`.
    Delay,
    Time,
    TanhState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyTerm {
    pub weight: f64,
    pub atom: PolicyAtom,
}

impl PolicyTerm {
    pub fn new(weight: f64, atom: PolicyAtom) -> Self {
        Self { weight, atom }
    }
}

fn policy_atom(atom: PolicyAtom, a: &Args<'_>, k: usize) -> f64 {
    match atom {
        PolicyAtom::One => 1.0,
        PolicyAtom::State => a.x[k],
        PolicyAtom::Mean => a.feats.mean[k % a.feats.dim()],
        PolicyAtom::Delayed => a.delayed[k % a.delayed.len()],
        PolicyAtom::Delay => a.delta,
        PolicyAtom::Time => a.t,
        PolicyAtom::TanhState => a.x[k].tanh(),
    }
}

/// Writes the control `v_k = Σ w·atom_k` for every coordinate of `out`.
/// The `v` field of `a` is ignored.
pub(crate) fn eval_policy(terms: &[PolicyTerm], a: &Args<'_>, out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        *o = terms.iter().map(|t| t.weight * policy_atom(t.atom, a, k)).sum();
    }
}

/// Prescribed leader and follower feedback policies.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySet {
    #[serde(default)]
    pub leader: Vec<PolicyTerm>,
    #[serde(default)]
    pub follower: Vec<PolicyTerm>,
    /// Declared Hölder constant of the follower policy in `δ`.
    #[serde(default)]
    pub holder_l: f64,
}

impl PolicySet {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn needs(&self) -> FeatureNeeds {
        let mean = self
            .leader
            .iter()
            .chain(&self.follower)
            .any(|t| t.atom == PolicyAtom::Mean);
        FeatureNeeds {
            mean,
            ..Default::default()
        }
    }

    pub fn reads_delayed(&self) -> bool {
        self.follower.iter().any(|t| t.atom == PolicyAtom::Delayed)
    }

    pub fn reads_delay(&self) -> bool {
        self.follower.iter().any(|t| t.atom == PolicyAtom::Delay)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for t in &self.leader {
            if matches!(t.atom, PolicyAtom::Delayed | PolicyAtom::Delay) {
                out.push(format!("policies.leader: atom {:?} is only defined for followers", t.atom));
            }
        }
        for t in self.leader.iter().chain(&self.follower) {
            if !t.weight.is_finite() {
                out.push(format!("policies: weight {} is not finite", t.weight));
            }
        }
        if !(self.holder_l.is_finite() && self.holder_l >= 0.0) {
            out.push(format!("policies.holder_l must be nonnegative, got {}", self.holder_l));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some(v) => Err(validation(v)),
            None => Ok(()),
        }
    }

    /// Largest observed `|v(δ) - v(γ)| / |δ - γ|^exponent` over random
    /// arguments and delay pairs in `[a, b]`.
    pub fn probe_follower_holder(
        &self,
        n0: usize,
        n1: usize,
        support: (f64, f64),
        exponent: f64,
        trials: usize,
        seed: u64,
    ) -> Result<f64> {
        if !(exponent > 0.0 && exponent <= 1.0) {
            return Err(parameter(format!("Hölder exponent must lie in (0, 1], got {exponent}")));
        }
        let (a, b) = support;
        if b <= a {
            return Ok(0.0);
        }
        let mut rng = rng_from(seed);
        let mut worst = 0.0f64;
        let mut v1 = vec![0.0; n1];
        let mut v2 = vec![0.0; n1];
        for _ in 0..trials {
            let x: Vec<f64> = (0..n1).map(|_| rng.random_range(-3.0..3.0)).collect();
            let d: Vec<f64> = (0..n0).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut f = Features::zeros(n1);
            f.mean.iter_mut().for_each(|m| *m = rng.random_range(-3.0..3.0));
            let (s, g) = (rng.random_range(a..=b), rng.random_range(a..=b));
            if s == g {
                continue;
            }
            let t = rng.random_range(0.0..1.0);
            let mk = |delta| Args { x: &x, v: &[], delayed: &d, feats: &f, delta, t };
            eval_policy(&self.follower, &mk(s), &mut v1);
            eval_policy(&self.follower, &mk(g), &mut v2);
            let dv = v1.iter().zip(&v2).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(dv / (s - g).abs().powf(exponent));
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation() {
        let mut f = Features::zeros(1);
        f.mean[0] = 0.5;
        let a = Args { x: &[2.0], v: &[], delayed: &[4.0], feats: &f, delta: 0.25, t: 0.5 };
        let p = [
            PolicyTerm::new(-1.0, PolicyAtom::State),
            PolicyTerm::new(2.0, PolicyAtom::Mean),
            PolicyTerm::new(0.5, PolicyAtom::Delayed),
            PolicyTerm::new(4.0, PolicyAtom::Delay),
            PolicyTerm::new(1.0, PolicyAtom::Time),
        ];
        let mut out = [0.0];
        eval_policy(&p, &a, &mut out);
        assert_eq!(out[0], -2.0 + 1.0 + 2.0 + 1.0 + 0.5);
    }

    #[test]
    fn holder_probe() {
        let p = PolicySet {
            follower: vec![PolicyTerm::new(3.0, PolicyAtom::Delay), PolicyTerm::new(1.0, PolicyAtom::State)],
            holder_l: 3.0,
            ..Default::default()
        };
        let lip = p.probe_follower_holder(1, 1, (0.0, 1.0), 1.0, 500, 1).unwrap();
        assert!((lip - 3.0).abs() < 1e-9);
        let holder = p.probe_follower_holder(1, 1, (0.0, 1.0), 2.0 / 3.0, 500, 1).unwrap();
        assert!(holder <= 3.0 + 1e-12);
        assert_eq!(PolicySet::zero().probe_follower_holder(1, 1, (0.0, 1.0), 1.0, 50, 1).unwrap(), 0.0);
        let bad = PolicySet { leader: vec![PolicyTerm::new(1.0, PolicyAtom::Delay)], ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
