//! Particle solver for the limiting system.
//!
//! For one realisation of the leader's randomness the conditional law flow
//! `z(t)` is found by Picard iteration: simulate the leader and, for every
//! delay atom, `K` follower particles against the current flow, then replace
//! the flow by the mixture of the per-atom empirical laws. The flow is a
//! functional of the leader path, so conditioning on the leader filtration is
//! realised simply by holding that path fixed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    DelayLaw, Engine, FeatureNeeds, Features, FollowerDraw, LeaderDraw, ModelSpec, PolicySet, SeedRecord, TimeGrid,
};
use crate::error::{parameter, validation, Result};
use crate::measures::{rate_f_real, w2_exact_1d, w2_exact_lp, DiscreteMeasure};
use crate::seed::Stream;
use crate::stats::{loglog, Ols};

/// Conditional law flow on the nonnegative part of the grid.
///
/// `z(t_k)` is the mixture over delay atoms of the uniform empirical laws of
/// `K` particles. `features[k]` is the measure argument the dynamics read at
/// step `k`; with damping it is a convex combination over iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalLawFlow {
    pub grid: TimeGrid,
    pub n1: usize,
    pub particles: usize,
    /// Snapped delay atoms, strictly increasing.
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
    /// Leader randomness the flow is conditioned on.
    pub seeds: SeedRecord,
    pub features: Vec<Features>,
    /// Leader path of the last iteration, on the full grid.
    pub leader_path: Vec<f64>,
    /// `clouds[a]` holds `(pos_steps + 1) × K × n1` values, step-major.
    clouds: Vec<Vec<f64>>,
}

impl ConditionalLawFlow {
    pub fn steps(&self) -> usize {
        self.grid.pos_steps()
    }

    /// Particle states of atom `atom` at step `k`, `K × n1` values.
    pub fn cloud(&self, atom: usize, k: usize) -> &[f64] {
        let w = self.particles * self.n1;
        &self.clouds[atom][k * w..(k + 1) * w]
    }

    pub fn atom_law(&self, atom: usize, k: usize) -> Result<DiscreteMeasure> {
        DiscreteMeasure::uniform(self.n1, self.cloud(atom, k).to_vec())
    }

    /// `z(t_k)` as one discrete measure with `atoms × K` support points.
    pub fn law_at(&self, k: usize) -> Result<DiscreteMeasure> {
        let mut points = Vec::with_capacity(self.atoms.len() * self.particles * self.n1);
        let mut weights = Vec::with_capacity(self.atoms.len() * self.particles);
        for (a, p) in self.weights.iter().enumerate() {
            points.extend_from_slice(self.cloud(a, k));
            weights.extend(std::iter::repeat_n(p / self.particles as f64, self.particles));
        }
        DiscreteMeasure::new(self.n1, points, weights)
    }

    /// `∫|y|² z(t_k, dy)` computed atom by atom.
    pub fn second_moment(&self, k: usize) -> f64 {
        let sm = FeatureNeeds { second_moment: true, ..Default::default() };
        self.weights
            .iter()
            .enumerate()
            .map(|(a, p)| p * Features::of_cloud(self.cloud(a, k), self.n1, sm).second_moment)
            .sum()
    }
}

/// Picard diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub iterations: usize,
    /// `sup_t W₂(z^{(m+1)}(t), z^{(m)}(t))` per iteration over the time subgrid.
    pub discrepancies: Vec<f64>,
    pub converged: bool,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Particles per delay atom.
    pub particles: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Weight of the new iterate; `1` is plain Picard.
    pub damping: f64,
    /// Number of subgrid times on which the discrepancy is measured.
    pub subgrid: usize,
    /// Support cap for the multi-dimensional discrepancy.
    pub max_support: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            particles: 1024,
            tol: 1e-3,
            max_iter: 25,
            damping: 1.0,
            subgrid: 16,
            max_support: 512,
        }
    }
}

impl SolverOptions {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.particles < 100 {
            v.push(format!("particles K = {} must be at least 100", self.particles));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            v.push(format!("tolerance {} must be finite and nonnegative", self.tol));
        }
        if self.max_iter == 0 {
            v.push("max_iter must be positive".into());
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            v.push(format!("damping {} must lie in (0, 1]", self.damping));
        }
        if self.subgrid == 0 || self.max_support < 2 {
            v.push("subgrid and max_support must be positive".into());
        }
        v
    }
}

/// Level-`n` uniform partition of the delay law's support.
pub fn partition_delay_law(law: &DelayLaw, n: usize) -> Result<Vec<(f64, f64)>> {
    law.partition(n)
}

/// Partition level balancing discretisation and sampling error:
/// `ceil(f(N-1)^{-2q/(3q-4)})` clamped to `[1, 10⁴]`.
pub fn balanced_partition_level(n1: usize, q: f64, n: usize) -> Result<usize> {
    if !(q > 4.0) {
        return Err(parameter(format!("the balanced partition level needs q > 4, got {q}")));
    }
    if n < 2 {
        return Err(parameter(format!("N must be at least 2, got {n}")));
    }
    if n < 3 {
        rate_f_real(n1, 2.0)?;
        return Ok(1);
    }
    let f = rate_f_real(n1, (n - 1) as f64)?;
    let level = f.powf(-2.0 * q / (3.0 * q - 4.0)).ceil();
    Ok(level.clamp(1.0, 1e4) as usize)
}

/// Snaps the atoms to the grid, merges atoms that land on the same grid
/// point and renormalises the weights.
fn snapped_partition(grid: &TimeGrid, partition: &[(f64, f64)]) -> Result<(Vec<f64>, Vec<f64>)> {
    if partition.is_empty() {
        return Err(validation("delay partition is empty"));
    }
    if partition.iter().any(|(a, w)| !a.is_finite() || *a < 0.0 || !w.is_finite() || *w < 0.0) {
        return Err(validation("delay partition has a negative or non-finite entry"));
    }
    let total: f64 = partition.iter().map(|p| p.1).sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(validation(format!("delay partition weights sum to {total}, not 1")));
    }
    let mut merged: Vec<(usize, f64)> = Vec::new();
    for &(a, w) in partition {
        if w == 0.0 {
            continue;
        }
        let s = grid.delay_steps(a);
        if s > grid.neg_steps() {
            return Err(validation(format!("delay atom {a} exceeds the maximal delay b")));
        }
        match merged.iter_mut().find(|m| m.0 == s) {
            Some(m) => m.1 += w,
            None => merged.push((s, w)),
        }
    }
    merged.sort_by_key(|m| m.0);
    let atoms = merged.iter().map(|m| m.0 as f64 * grid.step()).collect();
    let weights = merged.iter().map(|m| m.1 / total).collect();
    Ok((atoms, weights))
}

fn transpose_into(cloud: &mut [f64], paths: &[Vec<f64>], steps: usize, n1: usize) {
    let k = paths.len();
    for (p, path) in paths.iter().enumerate() {
        for s in 0..=steps {
            let dst = (s * k + p) * n1;
            cloud[dst..dst + n1].copy_from_slice(&path[s * n1..(s + 1) * n1]);
        }
    }
}

fn mixture_features(clouds: &[Vec<f64>], weights: &[f64], k: usize, n1: usize, steps: usize, needs: FeatureNeeds) -> Vec<Features> {
    let w = k * n1;
    (0..=steps)
        .map(|s| {
            let parts: Vec<Features> = clouds
                .iter()
                .map(|c| Features::of_cloud(&c[s * w..(s + 1) * w], n1, needs))
                .collect();
            let pairs: Vec<(f64, &Features)> = weights.iter().copied().zip(&parts).collect();
            Features::combine(&pairs)
        })
        .collect()
}

struct Discrepancy<'a> {
    n1: usize,
    k: usize,
    weights: &'a [f64],
    subgrid: Vec<usize>,
    max_support: usize,
    seeds: SeedRecord,
}

impl Discrepancy<'_> {
    fn measure(&self, clouds: &[Vec<f64>], s: usize, keep: Option<&[usize]>) -> Result<DiscreteMeasure> {
        let w = self.k * self.n1;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut push = |a: usize, p: usize| {
            points.extend_from_slice(&clouds[a][s * w + p * self.n1..s * w + (p + 1) * self.n1]);
            weights.push(self.weights[a] / self.k as f64);
        };
        match keep {
            None => (0..clouds.len()).for_each(|a| (0..self.k).for_each(|p| push(a, p))),
            Some(idx) => idx.iter().for_each(|&i| push(i / self.k, i % self.k)),
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|x| *x /= total);
        DiscreteMeasure::new(self.n1, points, weights)
    }

    /// `sup_{t in subgrid} W₂(new(t), old(t))`. Particles correspond across
    /// iterations, so in several dimensions the same subsample of particle
    /// indices is used on both sides.
    fn sup_w2(&self, new: &[Vec<f64>], old: &[Vec<f64>]) -> Result<f64> {
        let total = new.len() * self.k;
        let mut worst = 0.0f64;
        for &s in &self.subgrid {
            let d = if self.n1 == 1 {
                w2_exact_1d(&self.measure(new, s, None)?, &self.measure(old, s, None)?)?
            } else {
                let keep = if total <= self.max_support {
                    None
                } else {
                    let mut rng = self.seeds.key(Stream::Subsample, s as u64).rng();
                    let mut idx = rand::seq::index::sample(&mut rng, total, self.max_support).into_vec();
                    idx.sort_unstable();
                    Some(idx)
                };
                w2_exact_lp(&self.measure(new, s, keep.as_deref())?, &self.measure(old, s, keep.as_deref())?)?.0
            };
            worst = worst.max(d);
        }
        Ok(worst)
    }
}

/// Solves the fixed point for the leader randomness drawn from `seeds`.
pub fn solve_conditional_law(
    model: &ModelSpec,
    policies: &PolicySet,
    partition: &[(f64, f64)],
    seeds: SeedRecord,
    opts: &SolverOptions,
) -> Result<(ConditionalLawFlow, FixedPointReport)> {
    let grid = model.grid()?;
    let leader = LeaderDraw::sample(model, &grid, seeds);
    solve_conditional_law_with(model, policies, partition, &leader, seeds, opts)
}

/// Same as [`solve_conditional_law`] with an explicit leader draw.
pub fn solve_conditional_law_with(
    model: &ModelSpec,
    policies: &PolicySet,
    partition: &[(f64, f64)],
    leader: &LeaderDraw,
    seeds: SeedRecord,
    opts: &SolverOptions,
) -> Result<(ConditionalLawFlow, FixedPointReport)> {
    model.validate()?;
    policies.validate()?;
    if let Some(v) = opts.violations().into_iter().next() {
        return Err(validation(v));
    }
    let engine = Engine::new(model)?;
    let grid = engine.grid;
    let (atoms, weights) = snapped_partition(&grid, partition)?;
    let (n1, k, steps) = (model.n1, opts.particles, grid.pos_steps());
    let needs = model.all_needs(policies);
    let draws: Vec<Vec<FollowerDraw>> = atoms
        .iter()
        .enumerate()
        .map(|(a, &delta)| {
            (0..k as u64)
                .map(|p| FollowerDraw::particle(model, &grid, seeds, a as u64, delta, p))
                .collect()
        })
        .collect();
    let width = (steps + 1) * k * n1;

    // z⁽⁰⁾ freezes the initial particle cloud at every time.
    let mut clouds: Vec<Vec<f64>> = draws
        .iter()
        .map(|ds| {
            let init: Vec<f64> = ds.iter().flat_map(|d| d.initial.iter().copied()).collect();
            init.repeat(steps + 1)
        })
        .collect();
    let mut features = mixture_features(&clouds, &weights, k, n1, steps, needs);

    let disc = Discrepancy {
        n1,
        k,
        weights: &weights,
        subgrid: grid.subgrid(opts.subgrid),
        max_support: opts.max_support,
        seeds,
    };
    let z_free = !model.dynamic_needs(policies).any();
    let mut discrepancies = Vec::new();
    let mut converged = false;
    let mut leader_path = Vec::new();
    for _ in 0..opts.max_iter {
        let (x0, _) = engine.run_leader(&policies.leader, leader, &features, None)?;
        let fresh: Vec<Vec<f64>> = draws
            .iter()
            .map(|ds| {
                let paths = ds
                    .par_iter()
                    .map(|d| engine.run_follower(&policies.follower, d, &x0, &features, None).map(|r| r.0))
                    .collect::<Result<Vec<_>>>()?;
                let mut cloud = vec![0.0; width];
                transpose_into(&mut cloud, &paths, steps, n1);
                Ok(cloud)
            })
            .collect::<Result<_>>()?;
        leader_path = x0;
        let new_features = mixture_features(&fresh, &weights, k, n1, steps, needs);
        if z_free {
            // Nothing reads z, so the second iterate would repeat the first.
            discrepancies.push(0.0);
            features = new_features;
            clouds = fresh;
            converged = true;
            break;
        }
        let d = disc.sup_w2(&fresh, &clouds)?;
        discrepancies.push(d);
        if opts.damping == 1.0 {
            features = new_features;
        } else {
            for (f, n) in features.iter_mut().zip(&new_features) {
                f.scale(1.0 - opts.damping);
                f.axpy(opts.damping, n);
            }
        }
        clouds = fresh;
        if d <= opts.tol {
            converged = true;
            break;
        }
    }
    let report = FixedPointReport {
        iterations: discrepancies.len(),
        discrepancies,
        converged,
        tolerance: opts.tol,
    };
    let flow = ConditionalLawFlow {
        grid,
        n1,
        particles: k,
        atoms,
        weights,
        seeds,
        features,
        leader_path,
        clouds,
    };
    Ok((flow, report))
}

/// Limit trajectories `(x₀, x₁^{i,δ_i})` driven by given draws.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitPair {
    pub leader_path: Vec<f64>,
    pub leader_controls: Vec<f64>,
    pub follower_paths: Vec<Vec<f64>>,
    pub follower_controls: Vec<Vec<f64>>,
    pub delays: Vec<f64>,
    pub delay_steps: Vec<usize>,
}

/// Simulates the limit leader and followers against `flow`, using the same
/// leader draw and follower draws as the N-player run seeded by `seeds`.
pub fn simulate_limit_pair(
    model: &ModelSpec,
    policies: &PolicySet,
    flow: &ConditionalLawFlow,
    seeds: SeedRecord,
    leader: &LeaderDraw,
    followers: &[FollowerDraw],
) -> Result<LimitPair> {
    if seeds != flow.seeds {
        return Err(validation(format!(
            "flow was solved under seeds {:?} but the pair is driven by {:?}",
            flow.seeds, seeds
        )));
    }
    let engine = Engine::new(model)?;
    if engine.grid != flow.grid || model.n1 != flow.n1 {
        return Err(validation("flow was solved on a different model"));
    }
    let (leader_path, leader_controls) = engine.run_leader(&policies.leader, leader, &flow.features, None)?;
    let runs = followers
        .par_iter()
        .map(|d| engine.run_follower(&policies.follower, d, &leader_path, &flow.features, None))
        .collect::<Result<Vec<_>>>()?;
    let (follower_paths, follower_controls) = runs.into_iter().unzip();
    Ok(LimitPair {
        leader_path,
        leader_controls,
        follower_paths,
        follower_controls,
        delays: followers.iter().map(|f| f.delay).collect(),
        delay_steps: followers.iter().map(|f| f.delay_steps).collect(),
    })
}

/// Limit costs `(J⁰, [J^{i,δ_i}])` with the measure argument read from the flow.
pub fn evaluate_costs_limit(pair: &LimitPair, flow: &ConditionalLawFlow, model: &ModelSpec) -> Result<(f64, Vec<f64>)> {
    let engine = Engine::new(model)?;
    let feats = |k: usize| flow.features[k].clone();
    let j0 = engine.leader_cost(&pair.leader_path, &pair.leader_controls, &feats);
    let ji = pair
        .follower_paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            engine.follower_cost(
                p,
                &pair.follower_controls[i],
                &pair.leader_path,
                pair.delay_steps[i],
                pair.delays[i],
                &feats,
            )
        })
        .collect();
    Ok((j0, ji))
}

/// Fit of `sup_s E|x₁^δ(s) − x₁^γ(s)|² ≈ C |δ − γ|^slope`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    /// `|δ_j − δ_0|` after snapping.
    pub spacings: Vec<f64>,
    pub gaps: Vec<f64>,
    /// `None` when the gaps vanish and no exponent can be fitted.
    pub slope: Option<f64>,
    pub stderr: Option<f64>,
    pub constant: Option<f64>,
    /// Set when the paths do not depend on the delay.
    pub flagged: bool,
}

impl HolderReport {
    pub fn predict(&self, spacing: f64) -> Option<f64> {
        Some(self.constant? * spacing.powf(self.slope?))
    }
}

/// Estimates the Hölder exponent in the delay of the limit follower. The
/// first entry of `deltas` is the reference delay; every follower path uses
/// the same noise for every delay.
pub fn holder_exponent_estimate(
    model: &ModelSpec,
    policies: &PolicySet,
    flow: &ConditionalLawFlow,
    deltas: &[f64],
    reps: usize,
) -> Result<HolderReport> {
    if deltas.len() < 4 {
        return Err(parameter(format!("need at least 4 delays, got {}", deltas.len())));
    }
    if reps < 100 {
        return Err(parameter(format!("need at least 100 replications, got {reps}")));
    }
    let engine = Engine::new(model)?;
    let grid = engine.grid;
    let steps: Vec<usize> = deltas.iter().map(|d| grid.delay_steps(*d)).collect();
    if let Some(d) = deltas.iter().zip(&steps).find(|(d, s)| **s > grid.neg_steps() || !d.is_finite() || **d < 0.0) {
        return Err(validation(format!("delay {} is outside [0, b]", d.0)));
    }
    for (i, s) in steps.iter().enumerate().skip(1) {
        if *s == steps[0] || steps[1..i].contains(s) {
            return Err(parameter("delays must be distinct after snapping to the grid"));
        }
    }
    let (n1, nt) = (model.n1, grid.pos_steps());
    let leader = LeaderDraw::sample(model, &grid, flow.seeds);
    let (x0, _) = engine.run_leader(&policies.leader, &leader, &flow.features, None)?;
    let law = DelayLaw::Degenerate { value: deltas[0] };
    let sq_gaps = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let base = FollowerDraw::player(model, &grid, &law, flow.seeds, r);
            let paths = steps
                .iter()
                .map(|&s| {
                    let d = FollowerDraw { delay: s as f64 * grid.step(), delay_steps: s, ..base.clone() };
                    engine.run_follower(&policies.follower, &d, &x0, &flow.features, None).map(|p| p.0)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(paths[1..]
                .iter()
                .map(|p| {
                    (0..=nt)
                        .map(|k| crate::measures::sq_dist(&p[k * n1..(k + 1) * n1], &paths[0][k * n1..(k + 1) * n1]))
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let gaps: Vec<f64> = (0..steps.len() - 1)
        .map(|j| {
            (0..=nt)
                .map(|k| sq_gaps.iter().map(|r| r[j][k]).sum::<f64>() / reps as f64)
                .fold(0.0, f64::max)
        })
        .collect();
    let spacings: Vec<f64> = steps[1..]
        .iter()
        .map(|s| (*s as f64 - steps[0] as f64).abs() * grid.step())
        .collect();
    let scale = gaps.iter().fold(0.0f64, |m, g| m.max(*g));
    if !(scale > 1e-24) || gaps.iter().any(|g| !(*g > 0.0)) {
        return Ok(HolderReport { spacings, gaps, slope: None, stderr: None, constant: None, flagged: true });
    }
    let Ols { slope, intercept, stderr, .. } = loglog(&spacings, &gaps)?;
    Ok(HolderReport {
        spacings,
        gaps,
        slope: Some(slope),
        stderr: Some(stderr),
        constant: Some(intercept.exp()),
        flagged: false,
    })
}
