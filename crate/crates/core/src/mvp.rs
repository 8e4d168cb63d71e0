//! Contextual MVP: optimistic value iteration under the episode's action
//! mask, with a monotone Bernstein-style bonus and a doubling-epoch model.
//!
//! Each episode the learner replans from scratch over every `(h, s, a)`:
//!
//! ```text
//! b  = c1 * sqrt(V(P^, V_{h+1}) ln(1/d') / max(N, 1)) + c2 * H ln(1/d') / max(N, 1)
//! Q  = min(r + <P^, V_{h+1}> + b, H)
//! V  = max over the episode's admissible actions of Q
//! ```
//!
//! `P^` and `N` belong to the last completed epoch of the triple: the model
//! for `(h, s, a)` is rebuilt only when its lifetime count reaches a power of
//! two no larger than `2^floor(log2 K)`.

use crate::error::{Error, Result};
use crate::model::{masked_argmax, ActionContext, DeterministicPolicy, Dims, MdpModel};
use crate::planner::{expectation, variance};

pub const C1: f64 = 460.0 / 9.0;
pub const C2: f64 = 544.0 / 9.0;

/// Largest power of two not above `episodes` (and at least 1).
pub fn doubling_cap(episodes: u64) -> u64 {
    if episodes <= 1 {
        1
    } else {
        1u64 << (63 - episodes.leading_zeros())
    }
}

/// `floor(log2 K) + 1`, the number of epochs any triple can go through.
pub fn max_refreshes(episodes: u64) -> u32 {
    doubling_cap(episodes).trailing_zeros() + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct MvpConfig {
    pub c1: f64,
    pub c2: f64,
    pub delta_prime: f64,
    /// Stored separately so tiny confidence levels keep full precision.
    log_inv_delta_prime: f64,
    /// Multiplies the whole bonus. 1 reproduces the algorithm exactly.
    pub bonus_scale: f64,
    pub dims: Dims,
    pub episodes: u64,
}

impl MvpConfig {
    pub fn new(dims: Dims, episodes: u64, delta_prime: f64) -> Result<Self> {
        if !(delta_prime > 0.0 && delta_prime < 1.0) {
            return Err(Error::Parameter(format!("delta' = {delta_prime} outside (0, 1)")));
        }
        Self::from_log(dims, episodes, delta_prime, -delta_prime.ln())
    }

    fn from_log(dims: Dims, episodes: u64, delta_prime: f64, log_inv: f64) -> Result<Self> {
        if episodes == 0 {
            return Err(Error::Parameter("episode budget K must be at least 1".into()));
        }
        Ok(Self {
            c1: C1,
            c2: C2,
            delta_prime,
            log_inv_delta_prime: log_inv,
            bonus_scale: 1.0,
            dims,
            episodes,
        })
    }

    /// `d' = d / (200 S A H^2 K^2 L)` for adversarially chosen contexts.
    pub fn adversarial(dims: Dims, episodes: u64, delta: f64, num_contexts: usize) -> Result<Self> {
        check_delta(delta)?;
        let (s, a, h, k) = sizes(dims, episodes);
        let log_denom = 200f64.ln() + s.ln() + a.ln() + 2.0 * h.ln() + 2.0 * k.ln() + (num_contexts.max(1) as f64).ln();
        Self::from_log(dims, episodes, (delta.ln() - log_denom).exp(), log_denom - delta.ln())
    }

    /// `d' = d / (200 S A H^3 K^3)` for i.i.d. contexts.
    pub fn stochastic(dims: Dims, episodes: u64, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        let (s, a, h, k) = sizes(dims, episodes);
        let log_denom = 200f64.ln() + s.ln() + a.ln() + 3.0 * h.ln() + 3.0 * k.ln();
        Self::from_log(dims, episodes, (delta.ln() - log_denom).exp(), log_denom - delta.ln())
    }

    /// `d' = d / (200 S A H^2 K^2)`, the pre-stage initialisation.
    pub fn prestage(dims: Dims, episodes: u64, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        let (s, a, h, k) = sizes(dims, episodes);
        let log_denom = 200f64.ln() + s.ln() + a.ln() + 2.0 * h.ln() + 2.0 * k.ln();
        Self::from_log(dims, episodes, (delta.ln() - log_denom).exp(), log_denom - delta.ln())
    }

    pub fn with_bonus_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::Parameter(format!("bonus scale {scale} must be finite and >= 0")));
        }
        self.bonus_scale = scale;
        Ok(self)
    }

    pub fn log_inv_delta_prime(&self) -> f64 {
        self.log_inv_delta_prime
    }

    /// Bonus for a triple with `n` epoch samples and empirical next-value
    /// variance `var`.
    #[inline]
    pub fn bonus(&self, var: f64, n: u64) -> f64 {
        let n = n.max(1) as f64;
        let l = self.log_inv_delta_prime;
        let h = self.dims.horizon as f64;
        self.bonus_scale * (self.c1 * (var * l / n).sqrt() + self.c2 * h * l / n)
    }

    /// Episode count the regret analysis asks for,
    /// `40000 S A H log L log^5(S A H / d)`; runs below it are still valid.
    pub fn analysis_threshold(dims: Dims, num_contexts: usize, delta: f64) -> f64 {
        let (s, a, h, _) = sizes(dims, 1);
        40000.0 * s * a * h * (num_contexts.max(1) as f64).ln() * (s * a * h / delta).ln().powi(5)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("delta = {delta} outside (0, 1)")))
    }
}

fn sizes(dims: Dims, episodes: u64) -> (f64, f64, f64, f64) {
    (
        dims.states as f64,
        dims.actions as f64,
        dims.horizon as f64,
        episodes.max(1) as f64,
    )
}

/// Visit counts and the doubling-epoch empirical model.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    dims: Dims,
    cap: u64,
    n_all: Vec<u64>,
    /// Per-epoch next-state counts, `H * S * A * S`.
    n_transition: Vec<u64>,
    /// Sample count of the last completed epoch.
    n_epoch: Vec<u64>,
    /// Empirical kernel of the last completed epoch; meaningful only where
    /// `n_epoch > 0`.
    p_hat: Vec<f64>,
    refreshes: Vec<u32>,
}

impl EpochStats {
    pub fn new(dims: Dims, episodes: u64) -> Self {
        let n = dims.num_hsa();
        Self {
            dims,
            cap: doubling_cap(episodes),
            n_all: vec![0; n],
            n_transition: vec![0; n * dims.states],
            n_epoch: vec![0; n],
            p_hat: vec![0.0; n * dims.states],
            refreshes: vec![0; n],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Records one transition; returns true when it closed an epoch.
    pub fn record_transition(&mut self, h: usize, s: usize, a: usize, next: usize) -> bool {
        let i = self.dims.hsa(h, s, a);
        let row = i * self.dims.states;
        self.n_all[i] += 1;
        self.n_transition[row + next] += 1;
        let n = self.n_all[i];
        if !(n.is_power_of_two() && n <= self.cap) {
            return false;
        }
        let counts = &mut self.n_transition[row..row + self.dims.states];
        let total: u64 = counts.iter().sum();
        let p_hat = &mut self.p_hat[row..row + self.dims.states];
        for (p, c) in p_hat.iter_mut().zip(counts.iter_mut()) {
            *p = *c as f64 / total as f64;
            *c = 0;
        }
        self.n_epoch[i] = total;
        self.refreshes[i] += 1;
        true
    }

    pub fn n_all(&self, h: usize, s: usize, a: usize) -> u64 {
        self.n_all[self.dims.hsa(h, s, a)]
    }

    pub fn n_epoch(&self, h: usize, s: usize, a: usize) -> u64 {
        self.n_epoch[self.dims.hsa(h, s, a)]
    }

    /// `None` until the triple completes its first epoch.
    pub fn p_hat(&self, h: usize, s: usize, a: usize) -> Option<&[f64]> {
        let i = self.dims.hsa(h, s, a);
        (self.n_epoch[i] > 0).then(|| &self.p_hat[i * self.dims.states..(i + 1) * self.dims.states])
    }

    pub fn refreshes(&self, h: usize, s: usize, a: usize) -> u32 {
        self.refreshes[self.dims.hsa(h, s, a)]
    }

    pub fn max_refresh_count(&self) -> u32 {
        self.refreshes.iter().copied().max().unwrap_or(0)
    }
}

/// Optimistic tables for one episode. Q and the bonus cover every action;
/// V and the policy respect the episode's mask.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticPlan {
    dims: Dims,
    pub q: Vec<f64>,
    /// `(H + 1) * S`.
    pub v: Vec<f64>,
    pub bonus: Vec<f64>,
    pub policy: DeterministicPolicy,
}

impl OptimisticPlan {
    pub fn q_row(&self, h: usize, s: usize) -> &[f64] {
        let off = self.dims.hsa(h, s, 0);
        &self.q[off..off + self.dims.actions]
    }

    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.dims.states + s]
    }

    /// `E_{s ~ mu}[V_1(s)]`.
    pub fn initial_value(&self, mu: &[f64]) -> f64 {
        expectation(mu, &self.v[..self.dims.states])
    }

    pub fn max_bonus(&self) -> f64 {
        self.bonus.iter().copied().fold(0.0, f64::max)
    }
}

/// One Bellman backup of the optimistic Q for a triple; untouched triples
/// sit at the initial value `H`.
#[inline]
pub(crate) fn optimistic_q(
    model: &MdpModel,
    stats: &EpochStats,
    cfg: &MvpConfig,
    h: usize,
    s: usize,
    a: usize,
    v_next: &[f64],
) -> (f64, f64) {
    let horizon = cfg.dims.horizon as f64;
    let i = stats.dims.hsa(h, s, a);
    let n = stats.n_epoch[i];
    if n == 0 {
        return (horizon, cfg.bonus(0.0, 0));
    }
    let row = &stats.p_hat[i * stats.dims.states..(i + 1) * stats.dims.states];
    let b = cfg.bonus(variance(row, v_next), n);
    let q = (model.reward(h, s, a) + expectation(row, v_next) + b).min(horizon);
    (q, b)
}

pub fn plan(model: &MdpModel, stats: &EpochStats, cfg: &MvpConfig, ctx: &ActionContext) -> Result<OptimisticPlan> {
    let dims = model.dims();
    if stats.dims != dims || ctx.dims() != dims || cfg.dims != dims {
        return Err(Error::Shape(
            "learner statistics, config, context and model disagree".into(),
        ));
    }
    let (n_s, n_a, n_h) = (dims.states, dims.actions, dims.horizon);
    let mut q = vec![0.0; dims.num_hsa()];
    let mut bonus = vec![0.0; dims.num_hsa()];
    let mut v = vec![0.0; (n_h + 1) * n_s];
    let mut policy = vec![0; n_h * n_s];
    for h in (0..n_h).rev() {
        let (cur, next) = v.split_at_mut((h + 1) * n_s);
        let v_next = &next[..n_s];
        for s in 0..n_s {
            for a in 0..n_a {
                let (qv, b) = optimistic_q(model, stats, cfg, h, s, a, v_next);
                q[dims.hsa(h, s, a)] = qv;
                bonus[dims.hsa(h, s, a)] = b;
            }
            let off = dims.hsa(h, s, 0);
            let best = masked_argmax(&q[off..off + n_a], ctx.mask(h, s)).ok_or(Error::EmptyAdmissible { h, s })?;
            policy[h * n_s + s] = best;
            cur[h * n_s + s] = q[off + best];
        }
    }
    Ok(OptimisticPlan {
        dims,
        q,
        v,
        bonus,
        policy: DeterministicPolicy::new(n_s, n_h, policy)?,
    })
}

/// Greedy action at `(h, s)` restricted to `mask`.
pub fn act(plan: &OptimisticPlan, h: usize, s: usize, mask: &[bool]) -> Result<usize> {
    masked_argmax(plan.q_row(h, s), mask).ok_or(Error::EmptyAdmissible { h, s })
}

/// Frozen learner state: maps any context to the policy the learner would
/// have committed to for it.
#[derive(Debug, Clone, PartialEq)]
pub struct MvpStrategy {
    stats: EpochStats,
    cfg: MvpConfig,
}

impl MvpStrategy {
    pub fn policy_for(&self, model: &MdpModel, ctx: &ActionContext) -> Result<DeterministicPolicy> {
        Ok(plan(model, &self.stats, &self.cfg, ctx)?.policy)
    }

    pub fn stats(&self) -> &EpochStats {
        &self.stats
    }
}

pub fn snapshot_strategy(stats: &EpochStats, cfg: &MvpConfig) -> MvpStrategy {
    MvpStrategy {
        stats: stats.clone(),
        cfg: cfg.clone(),
    }
}

/// The monotone bonus function behind the analysis:
/// `f(p, v, n, i) = <p, v> + max(20/3 sqrt(V(p, v) i / n), 400/9 i / n)`.
pub fn monotone_bonus(p: &[f64], v: &[f64], n: f64, iota: f64) -> f64 {
    const C1_BAR: f64 = 20.0 / 3.0;
    const C2_BAR: f64 = 400.0 / 9.0;
    expectation(p, v) + (C1_BAR * (variance(p, v) * iota / n).sqrt()).max(C2_BAR * iota / n)
}

/// The learner as a whole: statistics plus configuration.
#[derive(Debug, Clone)]
pub struct MvpLearner {
    pub stats: EpochStats,
    pub cfg: MvpConfig,
}

impl MvpLearner {
    pub fn new(cfg: MvpConfig) -> Self {
        Self {
            stats: EpochStats::new(cfg.dims, cfg.episodes),
            cfg,
        }
    }

    pub fn plan(&self, model: &MdpModel, ctx: &ActionContext) -> Result<OptimisticPlan> {
        plan(model, &self.stats, &self.cfg, ctx)
    }

    pub fn snapshot(&self) -> MvpStrategy {
        snapshot_strategy(&self.stats, &self.cfg)
    }
}
