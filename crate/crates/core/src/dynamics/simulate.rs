use rand::Rng;
use rand_distr::StandardNormal;

use super::coefficients::{eval_cost, eval_terms, Args, CostTerm, Term};
use super::delay::DelayLaw;
use super::features::{FeatureNeeds, FeatureSums, Features};
use super::grid::TimeGrid;
use super::model::ModelSpec;
use super::policy::{eval_policy, PolicySet, PolicyTerm};
use crate::error::{dimension, validation, Error, Result};
use crate::seed::{Stream, StreamKey};

/// Master seed and replication index shared by every stream of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedRecord {
    pub master: u64,
    pub replication: u64,
}

impl SeedRecord {
    pub fn new(master: u64, replication: u64) -> Self {
        Self { master, replication }
    }

    pub fn key(&self, stream: Stream, index: u64) -> StreamKey {
        StreamKey::new(self.master, self.replication, stream, index)
    }
}

fn normals<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// The leader's randomness: initial path on `[-b, 0]` and Brownian increments
/// (standard normals, one per step and coordinate) on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderDraw {
    pub initial: Vec<f64>,
    pub noise: Vec<f64>,
}

impl LeaderDraw {
    pub fn sample(model: &ModelSpec, grid: &TimeGrid, seeds: SeedRecord) -> Self {
        let initial = model
            .leader_initial
            .sample(grid, &mut seeds.key(Stream::LeaderInitial, 0).rng());
        let noise = normals(&mut seeds.key(Stream::LeaderNoise, 0).rng(), grid.pos_steps() * model.n0);
        Self { initial, noise }
    }
}

/// One follower's randomness, delay included.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerDraw {
    pub id: u64,
    pub delay: f64,
    pub delay_steps: usize,
    pub initial: Vec<f64>,
    pub noise: Vec<f64>,
}

impl FollowerDraw {
    /// Player `id` of an N-player run; its delay is drawn from `law`.
    pub fn player(model: &ModelSpec, grid: &TimeGrid, law: &DelayLaw, seeds: SeedRecord, id: u64) -> Self {
        let delay = law.sample(&mut seeds.key(Stream::Delay, id).rng());
        let initial = model
            .follower_initial
            .sample(&mut seeds.key(Stream::FollowerInitial, id).rng());
        let noise = normals(&mut seeds.key(Stream::FollowerNoise, id).rng(), grid.pos_steps() * model.n1);
        Self {
            id,
            delay: grid.snap(delay),
            delay_steps: grid.delay_steps(delay),
            initial,
            noise,
        }
    }

    /// Particle `id` of delay atom `atom` in a conditional-law solve.
    pub fn particle(model: &ModelSpec, grid: &TimeGrid, seeds: SeedRecord, atom: u64, delay: f64, id: u64) -> Self {
        let initial = model
            .follower_initial
            .sample(&mut seeds.key(Stream::ParticleInitial, id).with_sub(atom).rng());
        let noise = normals(
            &mut seeds.key(Stream::ParticleNoise, id).with_sub(atom).rng(),
            grid.pos_steps() * model.n1,
        );
        Self {
            id,
            delay: grid.snap(delay),
            delay_steps: grid.delay_steps(delay),
            initial,
            noise,
        }
    }
}

/// Draws players `ids` of one replication.
pub fn sample_followers(
    model: &ModelSpec,
    grid: &TimeGrid,
    law: &DelayLaw,
    seeds: SeedRecord,
    ids: &[u64],
) -> Vec<FollowerDraw> {
    ids.iter()
        .map(|&id| FollowerDraw::player(model, grid, law, seeds, id))
        .collect()
}

/// Draws `n` delays for players `0..n` of one replication (unsnapped).
pub fn sample_delays(law: &DelayLaw, n: usize, seeds: SeedRecord) -> Vec<f64> {
    (0..n as u64)
        .map(|id| law.sample(&mut seeds.key(Stream::Delay, id).rng()))
        .collect()
}

/// How controls are produced during a simulation.
#[derive(Debug, Clone, Copy)]
pub enum ControlMode<'a> {
    /// Evaluate the policies on the current state and measure.
    Feedback,
    /// Replay recorded controls: leader `pos_steps × n0`, follower `i` `pos_steps × n1`.
    Prescribed {
        leader: &'a [f64],
        followers: &'a [Vec<f64>],
    },
}

/// Leader and follower paths of one N-player run on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle {
    pub grid: TimeGrid,
    pub n0: usize,
    pub n1: usize,
    /// `(total_steps + 1) × n0`, starting at `-b`.
    pub leader_path: Vec<f64>,
    /// Per follower, `(pos_steps + 1) × n1`, starting at 0.
    pub follower_paths: Vec<Vec<f64>>,
    pub delays: Vec<f64>,
    pub delay_steps: Vec<usize>,
    pub follower_ids: Vec<u64>,
    pub seeds: SeedRecord,
    /// `pos_steps × n0`.
    pub leader_controls: Vec<f64>,
    /// Per follower, `pos_steps × n1`.
    pub follower_controls: Vec<Vec<f64>>,
}

impl TrajectoryBundle {
    pub fn n_followers(&self) -> usize {
        self.follower_paths.len()
    }

    /// Leader state at global grid index `j`.
    pub fn leader_at(&self, j: usize) -> &[f64] {
        &self.leader_path[j * self.n0..(j + 1) * self.n0]
    }

    /// Follower `i` at step `k`.
    pub fn follower_at(&self, i: usize, k: usize) -> &[f64] {
        &self.follower_paths[i][k * self.n1..(k + 1) * self.n1]
    }

    /// All follower states at step `k`, row-major.
    pub fn cloud_at(&self, k: usize) -> Vec<f64> {
        (0..self.n_followers())
            .flat_map(|i| self.follower_at(i, k).iter().copied())
            .collect()
    }
}

pub(crate) struct Engine<'a> {
    pub model: &'a ModelSpec,
    pub grid: TimeGrid,
    h: f64,
    sqrt_h: f64,
}

fn check_finite(x: &[f64], step: usize, grid: &TimeGrid, what: impl FnOnce() -> String) -> Result<()> {
    if x.iter().all(|v| v.is_finite() && v.abs() < 1e150) {
        Ok(())
    } else {
        Err(Error::SimulationDiverged {
            step,
            time: grid.pos_time(step),
            what: what(),
        })
    }
}

impl<'a> Engine<'a> {
    pub fn new(model: &'a ModelSpec) -> Result<Self> {
        let grid = model.grid()?;
        Ok(Self {
            model,
            grid,
            h: grid.step(),
            sqrt_h: grid.step().sqrt(),
        })
    }

    fn advance(&self, drift: &[Term], diff: &[Term], a: &Args<'_>, noise: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = a.x[k] + eval_terms(drift, a, k) * self.h + eval_terms(diff, a, k) * self.sqrt_h * noise[k];
        }
    }

    pub fn leader_step(&self, x0: &[f64], v0: &[f64], feats: &Features, k: usize, noise: &[f64], out: &mut [f64]) {
        let a = Args { x: x0, v: v0, delayed: &[], feats, delta: 0.0, t: self.grid.pos_time(k) };
        let c = &self.model.coefficients.leader;
        self.advance(&c.drift, &c.diffusion, &a, noise, out);
    }

    #[allow(clippy::too_many_arguments)]
    pub fn follower_step(
        &self,
        x: &[f64],
        v: &[f64],
        delayed: &[f64],
        feats: &Features,
        delta: f64,
        k: usize,
        noise: &[f64],
        out: &mut [f64],
    ) {
        let a = Args { x, v, delayed, feats, delta, t: self.grid.pos_time(k) };
        let c = &self.model.coefficients.follower;
        self.advance(&c.drift, &c.diffusion, &a, noise, out);
    }

    pub fn leader_control(&self, policy: &[PolicyTerm], x0: &[f64], feats: &Features, k: usize, out: &mut [f64]) {
        let a = Args { x: x0, v: &[], delayed: &[], feats, delta: 0.0, t: self.grid.pos_time(k) };
        eval_policy(policy, &a, out);
    }

    #[allow(clippy::too_many_arguments)]
    pub fn follower_control(
        &self,
        policy: &[PolicyTerm],
        x: &[f64],
        delayed: &[f64],
        feats: &Features,
        delta: f64,
        k: usize,
        out: &mut [f64],
    ) {
        let a = Args { x, v: &[], delayed, feats, delta, t: self.grid.pos_time(k) };
        eval_policy(policy, &a, out);
    }

    fn leader_start(&self, draw: &LeaderDraw) -> Result<Vec<f64>> {
        let n0 = self.model.n0;
        let nb = self.grid.neg_steps();
        if draw.initial.len() != (nb + 1) * n0 || draw.noise.len() != self.grid.pos_steps() * n0 {
            return Err(dimension("leader draw does not match the grid"));
        }
        let mut path = vec![0.0; (self.grid.total_steps() + 1) * n0];
        path[..(nb + 1) * n0].copy_from_slice(&draw.initial);
        Ok(path)
    }

    /// Leader path and controls when the measure argument is given per step.
    pub fn run_leader(
        &self,
        policy: &[PolicyTerm],
        draw: &LeaderDraw,
        feats: &[Features],
        prescribed: Option<&[f64]>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let n0 = self.model.n0;
        let nb = self.grid.neg_steps();
        let nt = self.grid.pos_steps();
        let mut path = self.leader_start(draw)?;
        let mut controls = vec![0.0; nt * n0];
        let mut next = vec![0.0; n0];
        for k in 0..nt {
            let x0 = &path[(nb + k) * n0..(nb + k + 1) * n0];
            let v0 = &mut controls[k * n0..(k + 1) * n0];
            match prescribed {
                Some(p) => v0.copy_from_slice(&p[k * n0..(k + 1) * n0]),
                None => self.leader_control(policy, x0, &feats[k], k, v0),
            }
            self.leader_step(x0, v0, &feats[k], k, &draw.noise[k * n0..(k + 1) * n0], &mut next);
            check_finite(&next, k + 1, &self.grid, || "leader state".to_string())?;
            path[(nb + k + 1) * n0..(nb + k + 2) * n0].copy_from_slice(&next);
        }
        Ok((path, controls))
    }

    /// Follower path and controls given the leader path and the measure
    /// argument per step.
    pub fn run_follower(
        &self,
        policy: &[PolicyTerm],
        draw: &FollowerDraw,
        leader_path: &[f64],
        feats: &[Features],
        prescribed: Option<&[f64]>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let (n0, n1) = (self.model.n0, self.model.n1);
        let nb = self.grid.neg_steps();
        let nt = self.grid.pos_steps();
        let m = draw.delay_steps;
        if m > nb {
            return Err(validation(format!("delay {} exceeds the maximal delay b", draw.delay)));
        }
        let mut path = vec![0.0; (nt + 1) * n1];
        path[..n1].copy_from_slice(&draw.initial);
        let mut controls = vec![0.0; nt * n1];
        let mut next = vec![0.0; n1];
        for k in 0..nt {
            let x = &path[k * n1..(k + 1) * n1];
            let d = &leader_path[(nb + k - m) * n0..(nb + k - m + 1) * n0];
            let v = &mut controls[k * n1..(k + 1) * n1];
            match prescribed {
                Some(p) => v.copy_from_slice(&p[k * n1..(k + 1) * n1]),
                None => self.follower_control(policy, x, d, &feats[k], draw.delay, k, v),
            }
            self.follower_step(x, v, d, &feats[k], draw.delay, k, &draw.noise[k * n1..(k + 1) * n1], &mut next);
            check_finite(&next, k + 1, &self.grid, || format!("follower {} state", draw.id))?;
            path[(k + 1) * n1..(k + 2) * n1].copy_from_slice(&next);
        }
        Ok((path, controls))
    }

    /// The interacting N-player system.
    pub fn run_nplayer(
        &self,
        policies: &PolicySet,
        leader: &LeaderDraw,
        followers: &[FollowerDraw],
        seeds: SeedRecord,
        mode: ControlMode<'_>,
        deviation: Option<(usize, &[PolicyTerm])>,
    ) -> Result<TrajectoryBundle> {
        let n = followers.len();
        if n < 2 {
            return Err(validation(format!("the N-player system needs N >= 2 followers, got {n}")));
        }
        let (n0, n1) = (self.model.n0, self.model.n1);
        let nb = self.grid.neg_steps();
        let nt = self.grid.pos_steps();
        if let Some(f) = followers.iter().find(|f| f.delay_steps > nb) {
            return Err(validation(format!("delay {} exceeds the maximal delay b", f.delay)));
        }
        if let ControlMode::Prescribed { leader: l, followers: fs } = mode {
            if l.len() != nt * n0 || fs.len() != n || fs.iter().any(|c| c.len() != nt * n1) {
                return Err(dimension("prescribed controls do not match the grid"));
            }
        }
        let needs = self.model.dynamic_needs(policies).union(match deviation {
            Some(_) => FeatureNeeds { mean: true, ..Default::default() },
            None => FeatureNeeds::default(),
        });
        let mut leader_path = self.leader_start(leader)?;
        let mut paths: Vec<Vec<f64>> = followers
            .iter()
            .map(|f| {
                let mut p = vec![0.0; (nt + 1) * n1];
                p[..n1].copy_from_slice(&f.initial);
                p
            })
            .collect();
        let mut leader_controls = vec![0.0; nt * n0];
        let mut follower_controls = vec![vec![0.0; nt * n1]; n];
        let mut states: Vec<f64> = followers.iter().flat_map(|f| f.initial.iter().copied()).collect();
        let mut next0 = vec![0.0; n0];
        let mut next = vec![0.0; n * n1];
        let zero = Features::zeros(n1);
        for k in 0..nt {
            let sums = needs.any().then(|| FeatureSums::new(&states, n1, needs));
            let full = sums.as_ref().map_or_else(|| zero.clone(), |s| s.average());
            let x0 = &leader_path[(nb + k) * n0..(nb + k + 1) * n0];
            let v0 = &mut leader_controls[k * n0..(k + 1) * n0];
            match mode {
                ControlMode::Prescribed { leader: l, .. } => v0.copy_from_slice(&l[k * n0..(k + 1) * n0]),
                ControlMode::Feedback => self.leader_control(&policies.leader, x0, &full, k, v0),
            }
            self.leader_step(x0, v0, &full, k, &leader.noise[k * n0..(k + 1) * n0], &mut next0);
            for (i, f) in followers.iter().enumerate() {
                let x = &states[i * n1..(i + 1) * n1];
                let loo = sums.as_ref().map_or_else(|| zero.clone(), |s| s.average_without(x));
                let j = nb + k - f.delay_steps;
                let d = &leader_path[j * n0..(j + 1) * n0];
                let v = &mut follower_controls[i][k * n1..(k + 1) * n1];
                match mode {
                    ControlMode::Prescribed { followers: fs, .. } => {
                        v.copy_from_slice(&fs[i][k * n1..(k + 1) * n1])
                    }
                    ControlMode::Feedback => {
                        let policy = match deviation {
                            Some((who, p)) if who == i => p,
                            _ => &policies.follower[..],
                        };
                        self.follower_control(policy, x, d, &loo, f.delay, k, v)
                    }
                }
                self.follower_step(
                    x,
                    v,
                    d,
                    &loo,
                    f.delay,
                    k,
                    &f.noise[k * n1..(k + 1) * n1],
                    &mut next[i * n1..(i + 1) * n1],
                );
                check_finite(&next[i * n1..(i + 1) * n1], k + 1, &self.grid, || {
                    format!("follower {} state", f.id)
                })?;
            }
            check_finite(&next0, k + 1, &self.grid, || "leader state".to_string())?;
            leader_path[(nb + k + 1) * n0..(nb + k + 2) * n0].copy_from_slice(&next0);
            states.copy_from_slice(&next);
            for (i, p) in paths.iter_mut().enumerate() {
                p[(k + 1) * n1..(k + 2) * n1].copy_from_slice(&states[i * n1..(i + 1) * n1]);
            }
        }
        Ok(TrajectoryBundle {
            grid: self.grid,
            n0,
            n1,
            leader_path,
            follower_paths: paths,
            delays: followers.iter().map(|f| f.delay).collect(),
            delay_steps: followers.iter().map(|f| f.delay_steps).collect(),
            follower_ids: followers.iter().map(|f| f.id).collect(),
            seeds,
            leader_controls,
            follower_controls,
        })
    }

    /// Rectangle-rule leader cost along a path with per-step features.
    pub fn leader_cost(&self, path: &[f64], controls: &[f64], feats: &dyn Fn(usize) -> Features) -> f64 {
        let n0 = self.model.n0;
        let nb = self.grid.neg_steps();
        let nt = self.grid.pos_steps();
        let c = &self.model.costs;
        let mut acc = Vec::with_capacity(nt + 1);
        let at = |k: usize| &path[(nb + k) * n0..(nb + k + 1) * n0];
        for k in 0..nt {
            acc.push(self.cost_at(&c.leader_running, at(k), &controls[k * n0..(k + 1) * n0], &[], &feats(k), 0.0, k) * self.h);
        }
        acc.push(self.cost_at(&c.leader_terminal, at(nt), &[], &[], &feats(nt), 0.0, nt));
        acc.iter().sum()
    }

    /// Rectangle-rule follower cost.
    #[allow(clippy::too_many_arguments)]
    pub fn follower_cost(
        &self,
        path: &[f64],
        controls: &[f64],
        leader_path: &[f64],
        delay_steps: usize,
        delta: f64,
        feats: &dyn Fn(usize) -> Features,
    ) -> f64 {
        let (n0, n1) = (self.model.n0, self.model.n1);
        let nb = self.grid.neg_steps();
        let nt = self.grid.pos_steps();
        let c = &self.model.costs;
        let d = |k: usize| &leader_path[(nb + k - delay_steps) * n0..(nb + k - delay_steps + 1) * n0];
        let mut acc = Vec::with_capacity(nt + 1);
        for k in 0..nt {
            let x = &path[k * n1..(k + 1) * n1];
            acc.push(self.cost_at(&c.follower_running, x, &controls[k * n1..(k + 1) * n1], d(k), &feats(k), delta, k) * self.h);
        }
        acc.push(self.cost_at(&c.follower_terminal, &path[nt * n1..], &[], d(nt), &feats(nt), delta, nt));
        acc.iter().sum()
    }

    #[allow(clippy::too_many_arguments)]
    fn cost_at(&self, terms: &[CostTerm], x: &[f64], v: &[f64], delayed: &[f64], feats: &Features, delta: f64, k: usize) -> f64 {
        if terms.is_empty() {
            return 0.0;
        }
        let a = Args { x, v, delayed, feats, delta, t: self.grid.pos_time(k) };
        eval_cost(terms, &a)
    }
}

/// Simulates the N-player system under feedback policies with players
/// `0..n`, drawing every random input from `seeds`.
pub fn simulate_nplayer(
    model: &ModelSpec,
    policies: &PolicySet,
    n: usize,
    delay_law: &DelayLaw,
    seeds: SeedRecord,
) -> Result<TrajectoryBundle> {
    model.validate()?;
    policies.validate()?;
    delay_law.validate()?;
    let engine = Engine::new(model)?;
    let ids: Vec<u64> = (0..n as u64).collect();
    let leader = LeaderDraw::sample(model, &engine.grid, seeds);
    let followers = sample_followers(model, &engine.grid, delay_law, seeds, &ids);
    engine.run_nplayer(policies, &leader, &followers, seeds, ControlMode::Feedback, None)
}

/// Lower-level entry point with explicit draws, control mode and an optional
/// single-follower policy deviation.
pub fn simulate_nplayer_with(
    model: &ModelSpec,
    policies: &PolicySet,
    leader: &LeaderDraw,
    followers: &[FollowerDraw],
    seeds: SeedRecord,
    mode: ControlMode<'_>,
    deviation: Option<(usize, &[PolicyTerm])>,
) -> Result<TrajectoryBundle> {
    Engine::new(model)?.run_nplayer(policies, leader, followers, seeds, mode, deviation)
}

/// `(J^{0,N}, [J^{i,δ_i,N}])` on one bundle: rectangle rule for the running
/// cost plus the terminal cost, with the full empirical measure for the leader
/// and leave-one-out measures for the followers.
pub fn evaluate_costs_nplayer(bundle: &TrajectoryBundle, model: &ModelSpec) -> Result<(f64, Vec<f64>)> {
    let engine = Engine::new(model)?;
    if engine.grid != bundle.grid || bundle.n0 != model.n0 || bundle.n1 != model.n1 {
        return Err(dimension("bundle was simulated on a different model"));
    }
    let needs = model.costs.needs();
    let n1 = model.n1;
    let nt = engine.grid.pos_steps();
    let sums: Vec<Option<FeatureSums>> = (0..=nt)
        .map(|k| needs.any().then(|| FeatureSums::new(&bundle.cloud_at(k), n1, needs)))
        .collect();
    let zero = Features::zeros(n1);
    let full = |k: usize| sums[k].as_ref().map_or_else(|| zero.clone(), |s| s.average());
    let j0 = engine.leader_cost(&bundle.leader_path, &bundle.leader_controls, &full);
    let ji = (0..bundle.n_followers())
        .map(|i| {
            let loo = |k: usize| {
                sums[k]
                    .as_ref()
                    .map_or_else(|| zero.clone(), |s| s.average_without(bundle.follower_at(i, k)))
            };
            engine.follower_cost(
                &bundle.follower_paths[i],
                &bundle.follower_controls[i],
                &bundle.leader_path,
                bundle.delay_steps[i],
                bundle.delays[i],
                &loo,
            )
        })
        .collect();
    Ok((j0, ji))
}
