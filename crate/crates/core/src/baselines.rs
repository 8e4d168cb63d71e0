//! Comparison learners: mask-oblivious UCBVI with a Bernstein bonus, its
//! sleeping-action reading (S-UCBVI), and a uniform-random admissible policy.
//!
//! Both UCB variants plan over every action and never look at the context;
//! the mask only enters when the greedy action is executed.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{masked_argmax, ActionContext, DeterministicPolicy, Dims, MdpModel};
use crate::planner::{expectation, variance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineVariant {
    UcbviBernstein,
    SUcbvi,
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub variant: BaselineVariant,
    pub confidence: f64,
    pub bonus_scale: f64,
    pub dims: Dims,
    pub episodes: u64,
}

impl BaselineConfig {
    pub fn new(variant: BaselineVariant, dims: Dims, episodes: u64, confidence: f64) -> Result<Self> {
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(Error::Parameter(format!("confidence {confidence} outside (0, 1)")));
        }
        Ok(Self {
            variant,
            confidence,
            bonus_scale: 1.0,
            dims,
            episodes: episodes.max(1),
        })
    }

    pub fn with_bonus_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::Parameter(format!("bonus scale {scale} must be finite and >= 0")));
        }
        self.bonus_scale = scale;
        Ok(self)
    }

    /// `ln(S A H K / confidence)`.
    pub fn log_term(&self) -> f64 {
        let d = self.dims;
        ((d.states * d.actions * d.horizon) as f64 * self.episodes as f64 / self.confidence).ln()
    }
}

/// Cumulative counts, refreshed every step (no epochs).
#[derive(Debug, Clone, PartialEq)]
pub struct UcbviStats {
    dims: Dims,
    n: Vec<u64>,
    counts: Vec<u64>,
}

impl UcbviStats {
    pub fn new(dims: Dims) -> Self {
        Self {
            dims,
            n: vec![0; dims.num_hsa()],
            counts: vec![0; dims.num_hsa() * dims.states],
        }
    }

    pub fn record(&mut self, h: usize, s: usize, a: usize, next: usize) {
        let i = self.dims.hsa(h, s, a);
        self.n[i] += 1;
        self.counts[i * self.dims.states + next] += 1;
    }

    pub fn n(&self, h: usize, s: usize, a: usize) -> u64 {
        self.n[self.dims.hsa(h, s, a)]
    }
}

/// Unmasked optimistic Q table, `H * S * A`.
pub fn ucbvi_plan(model: &MdpModel, stats: &UcbviStats, cfg: &BaselineConfig) -> Result<Vec<f64>> {
    let dims = model.dims();
    if stats.dims != dims || cfg.dims != dims {
        return Err(Error::Shape("baseline statistics, config and model disagree".into()));
    }
    let (n_s, n_a, n_h) = (dims.states, dims.actions, dims.horizon);
    let horizon = n_h as f64;
    let l = cfg.log_term();
    let mut q = vec![0.0; dims.num_hsa()];
    let mut v_next = vec![0.0; n_s];
    let mut v_cur = vec![0.0; n_s];
    let mut p_hat = vec![0.0; n_s];
    for h in (0..n_h).rev() {
        for s in 0..n_s {
            let mut best = f64::NEG_INFINITY;
            for a in 0..n_a {
                let i = dims.hsa(h, s, a);
                let n = stats.n[i];
                let qv = if n == 0 {
                    horizon
                } else {
                    let nf = n as f64;
                    for (p, &c) in p_hat.iter_mut().zip(&stats.counts[i * n_s..(i + 1) * n_s]) {
                        *p = c as f64 / nf;
                    }
                    let b = cfg.bonus_scale * ((variance(&p_hat, &v_next) * l / nf).sqrt() + horizon * l / nf);
                    (model.reward(h, s, a) + expectation(&p_hat, &v_next) + b).min(horizon)
                };
                q[i] = qv;
                best = best.max(qv);
            }
            v_cur[s] = best;
        }
        std::mem::swap(&mut v_cur, &mut v_next);
    }
    Ok(q)
}

/// Greedy policy of an unmasked Q table, executed under `ctx`'s mask.
pub fn masked_greedy(q: &[f64], ctx: &ActionContext) -> Result<DeterministicPolicy> {
    let dims = ctx.dims();
    let mut actions = Vec::with_capacity(dims.num_hs());
    for h in 0..dims.horizon {
        for s in 0..dims.states {
            let off = dims.hsa(h, s, 0);
            let a =
                masked_argmax(&q[off..off + dims.actions], ctx.mask(h, s)).ok_or(Error::EmptyAdmissible { h, s })?;
            actions.push(a);
        }
    }
    DeterministicPolicy::new(dims.states, dims.horizon, actions)
}

/// Uniform over the admissible set at each `(h, s)`. Every layer is visited
/// once per episode, so drawing the whole table up front yields the same
/// trajectory law as drawing on arrival.
pub fn uniform_random_policy<R: Rng + ?Sized>(ctx: &ActionContext, rng: &mut R) -> Result<DeterministicPolicy> {
    let dims = ctx.dims();
    let mut actions = Vec::with_capacity(dims.num_hs());
    for h in 0..dims.horizon {
        for s in 0..dims.states {
            let allowed = ctx.admissible_actions(h, s);
            if allowed.is_empty() {
                return Err(Error::EmptyAdmissible { h, s });
            }
            actions.push(allowed[rng.random_range(0..allowed.len())]);
        }
    }
    DeterministicPolicy::new(dims.states, dims.horizon, actions)
}
