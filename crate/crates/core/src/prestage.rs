//! Pre-stage disclosure: the admissible set at `(h, s)` is drawn
//! independently from `B_{h,s}` and revealed only when the learner arrives.
//!
//! The learner keeps the doubling-epoch transition model of [`crate::mvp`]
//! and, per `(h, s)`, a doubling-epoch multiset of observed action sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ContextDistribution, Dims, MdpModel, PROB_TOL};
use crate::mvp::{doubling_cap, optimistic_q, EpochStats, MvpConfig};
use crate::planner::{clamp_regret, expectation};

/// A nonempty set of action indices, kept sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionSet(Vec<usize>);

impl ActionSet {
    pub fn new(mut actions: Vec<usize>, num_actions: usize) -> Result<Self> {
        actions.sort_unstable();
        actions.dedup();
        if actions.is_empty() {
            return Err(Error::Parameter("action set is empty".into()));
        }
        if let Some(&a) = actions.last().filter(|&&a| a >= num_actions) {
            return Err(Error::Parameter(format!("action {a} out of range (A = {num_actions})")));
        }
        Ok(Self(actions))
    }

    pub fn from_mask(mask: &[bool]) -> Result<Self> {
        let actions = mask.iter().enumerate().filter_map(|(a, &ok)| ok.then_some(a)).collect();
        Self::new(actions, mask.len())
    }

    pub fn full(num_actions: usize) -> Self {
        Self((0..num_actions).collect())
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, a: usize) -> bool {
        self.0.binary_search(&a).is_ok()
    }

    pub fn to_mask(&self, num_actions: usize) -> Vec<bool> {
        let mut m = vec![false; num_actions];
        for &a in &self.0 {
            m[a] = true;
        }
        m
    }

    /// Highest value among members, lowest index on ties.
    pub fn argmax(&self, values: &[f64]) -> usize {
        let mut best = self.0[0];
        for &a in &self.0[1..] {
            if values[a] > values[best] {
                best = a;
            }
        }
        best
    }

    pub fn max_of(&self, values: &[f64]) -> f64 {
        values[self.argmax(values)]
    }
}

/// `B_{h,s}` for every `(h, s)`: finite weighted lists of action sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SetDistributions {
    dims: Dims,
    per_hs: Vec<Vec<(ActionSet, f64)>>,
}

impl SetDistributions {
    pub fn new(dims: Dims, per_hs: Vec<Vec<(ActionSet, f64)>>) -> Result<Self> {
        if per_hs.len() != dims.num_hs() {
            return Err(Error::Shape(format!(
                "{} set distributions, expected {}",
                per_hs.len(),
                dims.num_hs()
            )));
        }
        for (i, support) in per_hs.iter().enumerate() {
            let (h, s) = (i / dims.states, i % dims.states);
            if support.is_empty() {
                return Err(Error::Parameter(format!(
                    "set distribution at (h={}, s={s}) has empty support",
                    h + 1
                )));
            }
            if support.iter().any(|(_, w)| !(*w >= 0.0)) {
                return Err(Error::Parameter(format!("negative set weight at (h={}, s={s})", h + 1)));
            }
            let total: f64 = support.iter().map(|(_, w)| w).sum();
            if (total - 1.0).abs() > PROB_TOL {
                return Err(Error::Parameter(format!(
                    "set weights at (h={}, s={s}) sum to {total}",
                    h + 1
                )));
            }
            if support
                .iter()
                .any(|(set, _)| set.actions().iter().any(|&a| a >= dims.actions))
            {
                return Err(Error::Parameter(format!(
                    "set at (h={}, s={s}) names an action outside 0..{}",
                    h + 1,
                    dims.actions
                )));
            }
        }
        Ok(Self { dims, per_hs })
    }

    /// The full action set with probability one everywhere.
    pub fn full(dims: Dims) -> Self {
        Self {
            dims,
            per_hs: vec![vec![(ActionSet::full(dims.actions), 1.0)]; dims.num_hs()],
        }
    }

    /// Per-`(h, s)` marginal law of the admissible set under `dist`.
    pub fn from_contexts(dist: &ContextDistribution) -> Result<Self> {
        let dims = dist.dims();
        let mut per_hs = Vec::with_capacity(dims.num_hs());
        for h in 0..dims.horizon {
            for s in 0..dims.states {
                let mut support: Vec<(ActionSet, f64)> = Vec::new();
                for (w, ctx) in dist.support() {
                    let set = ActionSet::from_mask(ctx.mask(h, s))?;
                    match support.iter_mut().find(|(x, _)| *x == set) {
                        Some(entry) => entry.1 += w,
                        None => support.push((set, w)),
                    }
                }
                per_hs.push(support);
            }
        }
        Self::new(dims, per_hs)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn support(&self, h: usize, s: usize) -> &[(ActionSet, f64)] {
        &self.per_hs[self.dims.hs(h, s)]
    }

    /// Inverse-CDF draw with a uniform `u` in `[0, 1)`.
    pub fn sample(&self, h: usize, s: usize, u: f64) -> &ActionSet {
        let support = self.support(h, s);
        let mut acc = 0.0;
        for (set, w) in support {
            acc += w;
            if u < acc {
                return set;
            }
        }
        &support.iter().rev().find(|(_, w)| *w > 0.0).unwrap_or(&support[0]).0
    }
}

/// Lifetime state-visit counts and the doubling multisets of observed sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSetStats {
    dims: Dims,
    cap: u64,
    n_state: Vec<u64>,
    committed: Vec<Vec<ActionSet>>,
    pending: Vec<Vec<ActionSet>>,
    snapshots: Vec<u32>,
}

impl ActionSetStats {
    pub fn new(dims: Dims, episodes: u64) -> Self {
        Self {
            dims,
            cap: doubling_cap(episodes),
            n_state: vec![0; dims.num_hs()],
            committed: vec![Vec::new(); dims.num_hs()],
            pending: vec![Vec::new(); dims.num_hs()],
            snapshots: vec![0; dims.num_hs()],
        }
    }

    /// Adds the observed set; returns true when the pending batch was
    /// promoted to the committed multiset.
    pub fn record_state_visit(&mut self, h: usize, s: usize, observed: &ActionSet) -> bool {
        let i = self.dims.hs(h, s);
        self.pending[i].push(observed.clone());
        self.n_state[i] += 1;
        let n = self.n_state[i];
        if n.is_power_of_two() && n <= self.cap {
            self.committed[i] = std::mem::take(&mut self.pending[i]);
            self.snapshots[i] += 1;
            true
        } else {
            false
        }
    }

    pub fn committed(&self, h: usize, s: usize) -> &[ActionSet] {
        &self.committed[self.dims.hs(h, s)]
    }

    pub fn n_state(&self, h: usize, s: usize) -> u64 {
        self.n_state[self.dims.hs(h, s)]
    }

    pub fn snapshots(&self, h: usize, s: usize) -> u32 {
        self.snapshots[self.dims.hs(h, s)]
    }

    pub fn max_snapshot_count(&self) -> u32 {
        self.snapshots.iter().copied().max().unwrap_or(0)
    }
}

/// Population variance `(1/j) sum (x_i - mean)^2`; zero for fewer than two
/// values.
pub fn population_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Optimistic tables for pre-stage planning.
#[derive(Debug, Clone, PartialEq)]
pub struct PrestagePlan {
    dims: Dims,
    /// Unmasked, `H * S * A`.
    pub q: Vec<f64>,
    /// `(H + 1) * S`.
    pub v: Vec<f64>,
    pub bonus: Vec<f64>,
    /// Set bonus per `(h, s)`.
    pub set_bonus: Vec<f64>,
}

impl PrestagePlan {
    pub fn q_row(&self, h: usize, s: usize) -> &[f64] {
        let off = self.dims.hsa(h, s, 0);
        &self.q[off..off + self.dims.actions]
    }

    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.dims.states + s]
    }
}

pub fn prestage_plan(
    model: &MdpModel,
    stats: &EpochStats,
    aset: &ActionSetStats,
    cfg: &MvpConfig,
) -> Result<PrestagePlan> {
    let dims = model.dims();
    if stats.dims() != dims || aset.dims != dims || cfg.dims != dims {
        return Err(Error::Shape("learner statistics, config and model disagree".into()));
    }
    let (n_s, n_a, n_h) = (dims.states, dims.actions, dims.horizon);
    let horizon = n_h as f64;
    let mut q = vec![0.0; dims.num_hsa()];
    let mut bonus = vec![0.0; dims.num_hsa()];
    let mut set_bonus = vec![0.0; dims.num_hs()];
    let mut v = vec![0.0; (n_h + 1) * n_s];
    let mut maxima = Vec::new();
    for h in (0..n_h).rev() {
        let (cur, next) = v.split_at_mut((h + 1) * n_s);
        let v_next = &next[..n_s];
        for s in 0..n_s {
            for a in 0..n_a {
                let (qv, b) = optimistic_q(model, stats, cfg, h, s, a, v_next);
                q[dims.hsa(h, s, a)] = qv;
                bonus[dims.hsa(h, s, a)] = b;
            }
            let row = &q[dims.hsa(h, s, 0)..dims.hsa(h, s, 0) + n_a];
            let sets = aset.committed(h, s);
            maxima.clear();
            maxima.extend(sets.iter().map(|set| set.max_of(row)));
            let n = sets.len() as u64;
            let b = cfg.bonus(population_variance(&maxima), n);
            set_bonus[dims.hs(h, s)] = b;
            cur[h * n_s + s] = if sets.is_empty() {
                horizon
            } else {
                let mean = maxima.iter().sum::<f64>() / n as f64;
                (mean + b).min(horizon)
            };
        }
    }
    Ok(PrestagePlan {
        dims,
        q,
        v,
        bonus,
        set_bonus,
    })
}

/// Greedy action among the set revealed at `(h, s)`.
pub fn prestage_act(plan: &PrestagePlan, h: usize, s: usize, observed: &[usize]) -> Result<usize> {
    let row = plan.q_row(h, s);
    let mut best: Option<usize> = None;
    for &a in observed {
        if best.is_none_or(|b| row[a] > row[b] || (row[a] == row[b] && a < b)) {
            best = Some(a);
        }
    }
    best.ok_or(Error::EmptyAdmissible { h, s })
}

/// Benchmark values when sets are disclosed only on arrival.
#[derive(Debug, Clone, PartialEq)]
pub struct PrestageBenchmark {
    dims: Dims,
    /// `(H + 1) * S`.
    pub v: Vec<f64>,
    /// Unmasked, `H * S * A`.
    pub q: Vec<f64>,
}

impl PrestageBenchmark {
    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.dims.states + s]
    }

    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[self.dims.hsa(h, s, a)]
    }

    pub fn initial_value(&self, mu: &[f64]) -> f64 {
        expectation(mu, &self.v[..self.dims.states])
    }
}

fn check_sets(model: &MdpModel, sets: &SetDistributions) -> Result<Dims> {
    let dims = model.dims();
    if sets.dims != dims {
        return Err(Error::Shape("set distributions and model disagree".into()));
    }
    Ok(dims)
}

pub fn prestage_benchmark(model: &MdpModel, sets: &SetDistributions) -> Result<PrestageBenchmark> {
    let dims = check_sets(model, sets)?;
    let (n_s, n_a, n_h) = (dims.states, dims.actions, dims.horizon);
    let mut v = vec![0.0; (n_h + 1) * n_s];
    let mut q = vec![0.0; dims.num_hsa()];
    for h in (0..n_h).rev() {
        let (cur, next) = v.split_at_mut((h + 1) * n_s);
        let v_next = &next[..n_s];
        for s in 0..n_s {
            let off = dims.hsa(h, s, 0);
            for a in 0..n_a {
                q[off + a] = model.reward(h, s, a) + expectation(model.transition(h, s, a), v_next);
            }
            let row = &q[off..off + n_a];
            cur[h * n_s + s] = sets.support(h, s).iter().map(|(set, w)| w * set.max_of(row)).sum();
        }
    }
    Ok(PrestageBenchmark { dims, v, q })
}

/// A pre-stage policy maps `(h, s, revealed set)` to an action in the set.
pub trait PrestagePolicy {
    fn choose(&self, h: usize, s: usize, set: &ActionSet) -> usize;
}

impl PrestagePolicy for PrestagePlan {
    fn choose(&self, h: usize, s: usize, set: &ActionSet) -> usize {
        set.argmax(self.q_row(h, s))
    }
}

impl<F: Fn(usize, usize, &ActionSet) -> usize> PrestagePolicy for F {
    fn choose(&self, h: usize, s: usize, set: &ActionSet) -> usize {
        self(h, s, set)
    }
}

/// Exact `V^pi` table (`(H + 1) * S`) of a pre-stage policy.
pub fn prestage_policy_value<P: PrestagePolicy + ?Sized>(
    model: &MdpModel,
    sets: &SetDistributions,
    policy: &P,
) -> Result<Vec<f64>> {
    let dims = check_sets(model, sets)?;
    let (n_s, n_h) = (dims.states, dims.horizon);
    let mut v = vec![0.0; (n_h + 1) * n_s];
    for h in (0..n_h).rev() {
        let (cur, next) = v.split_at_mut((h + 1) * n_s);
        let v_next = &next[..n_s];
        for s in 0..n_s {
            let mut total = 0.0;
            for (set, w) in sets.support(h, s) {
                let a = policy.choose(h, s, set);
                if !set.contains(a) {
                    return Err(Error::Inadmissible { h, s, a });
                }
                total += w * (model.reward(h, s, a) + expectation(model.transition(h, s, a), v_next));
            }
            cur[h * n_s + s] = total;
        }
    }
    Ok(v)
}

/// Benchmark value minus policy value, both averaged over `mu`.
pub fn prestage_regret<P: PrestagePolicy + ?Sized>(
    model: &MdpModel,
    sets: &SetDistributions,
    bench: &PrestageBenchmark,
    mu: &[f64],
    policy: &P,
) -> Result<f64> {
    let v = prestage_policy_value(model, sets, policy)?;
    let got = expectation(mu, &v[..model.dims().states]);
    Ok(clamp_regret(bench.initial_value(mu) - got))
}

#[derive(Debug, Clone)]
pub struct PrestageLearner {
    pub stats: EpochStats,
    pub sets: ActionSetStats,
    pub cfg: MvpConfig,
}

impl PrestageLearner {
    pub fn new(cfg: MvpConfig) -> Self {
        Self {
            stats: EpochStats::new(cfg.dims, cfg.episodes),
            sets: ActionSetStats::new(cfg.dims, cfg.episodes),
            cfg,
        }
    }

    pub fn plan(&self, model: &MdpModel) -> Result<PrestagePlan> {
        prestage_plan(model, &self.stats, &self.sets, &self.cfg)
    }

    pub fn observe(&mut self, h: usize, s: usize, set: &ActionSet, a: usize, next: usize) {
        self.stats.record_transition(h, s, a, next);
        self.sets.record_state_visit(h, s, set);
    }
}
