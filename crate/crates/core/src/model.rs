//! Finite-horizon tabular MDPs with per-episode action-set contexts.
//!
//! All tables are flattened row-major. Layers are 0-based internally
//! (`0..horizon`); external formats label layers from 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for every probability-vector check.
pub const PROB_TOL: f64 = 1e-9;

/// Sizes shared by a model and everything defined over it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
}

impl Dims {
    pub fn new(states: usize, actions: usize, horizon: usize) -> Self {
        Self {
            states,
            actions,
            horizon,
        }
    }

    #[inline]
    pub fn hs(&self, h: usize, s: usize) -> usize {
        h * self.states + s
    }

    #[inline]
    pub fn hsa(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.states + s) * self.actions + a
    }

    /// Offset of the next-state row for `(h, s, a)`.
    #[inline]
    pub fn row(&self, h: usize, s: usize, a: usize) -> usize {
        self.hsa(h, s, a) * self.states
    }

    pub fn num_hs(&self) -> usize {
        self.horizon * self.states
    }

    pub fn num_hsa(&self) -> usize {
        self.horizon * self.states * self.actions
    }

    /// Iterates `(h, s, a)` in storage order.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let (s_n, a_n) = (self.states, self.actions);
        (0..self.horizon).flat_map(move |h| (0..s_n).flat_map(move |s| (0..a_n).map(move |a| (h, s, a))))
    }
}

/// Transition kernel and known rewards, shared by every context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpModel {
    dims: Dims,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
}

impl MdpModel {
    /// Checks table shapes only; use [`validate_model`] for the probability
    /// and reward invariants.
    pub fn new(dims: Dims, transitions: Vec<f64>, rewards: Vec<f64>) -> Result<Self> {
        if dims.states == 0 || dims.actions == 0 || dims.horizon == 0 {
            return Err(Error::Shape(format!(
                "S, A, H must be positive (got S={}, A={}, H={})",
                dims.states, dims.actions, dims.horizon
            )));
        }
        let want_p = dims.num_hsa() * dims.states;
        if transitions.len() != want_p {
            return Err(Error::Shape(format!(
                "transition table has {} entries, expected {want_p}",
                transitions.len()
            )));
        }
        if rewards.len() != dims.num_hsa() {
            return Err(Error::Shape(format!(
                "reward table has {} entries, expected {}",
                rewards.len(),
                dims.num_hsa()
            )));
        }
        Ok(Self {
            dims,
            transitions,
            rewards,
        })
    }

    /// Builds a model whose kernel and rewards are the same at every layer.
    /// `transitions` is indexed `[(s * A + a) * S + s']`, `rewards` `[s * A + a]`.
    pub fn homogeneous(dims: Dims, transitions: &[f64], rewards: &[f64]) -> Result<Self> {
        let layer_p = dims.states * dims.actions * dims.states;
        let layer_r = dims.states * dims.actions;
        if transitions.len() != layer_p || rewards.len() != layer_r {
            return Err(Error::Shape(format!(
                "homogeneous layer tables must have {layer_p} transition and {layer_r} reward entries"
            )));
        }
        let p = transitions.repeat(dims.horizon);
        let r = rewards.repeat(dims.horizon);
        Self::new(dims, p, r)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Next-state distribution `P_h(. | s, a)`.
    #[inline]
    pub fn transition(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let off = self.dims.row(h, s, a);
        &self.transitions[off..off + self.dims.states]
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rewards[self.dims.hsa(h, s, a)]
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }
}

/// Per-episode side information: initial distribution and admissible sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionContext {
    id: String,
    dims: Dims,
    initial_dist: Vec<f64>,
    /// One flag per `(h, s, a)`.
    admissible: Vec<bool>,
}

impl ActionContext {
    pub fn new(id: impl Into<String>, dims: Dims, initial_dist: Vec<f64>, admissible: Vec<bool>) -> Result<Self> {
        if initial_dist.len() != dims.states {
            return Err(Error::Shape(format!(
                "initial distribution has {} entries, expected {}",
                initial_dist.len(),
                dims.states
            )));
        }
        if admissible.len() != dims.num_hsa() {
            return Err(Error::Shape(format!(
                "admissible mask has {} entries, expected {}",
                admissible.len(),
                dims.num_hsa()
            )));
        }
        Ok(Self {
            id: id.into(),
            dims,
            initial_dist,
            admissible,
        })
    }

    /// Every action admissible everywhere.
    pub fn unmasked(id: impl Into<String>, dims: Dims, initial_dist: Vec<f64>) -> Result<Self> {
        Self::new(id, dims, initial_dist, vec![true; dims.num_hsa()])
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// Flat `H * S * A` admissibility table.
    pub fn mask_table(&self) -> &[bool] {
        &self.admissible
    }

    /// Admissibility flags for the actions at `(h, s)`.
    #[inline]
    pub fn mask(&self, h: usize, s: usize) -> &[bool] {
        let off = self.dims.hsa(h, s, 0);
        &self.admissible[off..off + self.dims.actions]
    }

    #[inline]
    pub fn is_admissible(&self, h: usize, s: usize, a: usize) -> bool {
        self.admissible[self.dims.hsa(h, s, a)]
    }

    pub fn admissible_actions(&self, h: usize, s: usize) -> Vec<usize> {
        self.mask(h, s)
            .iter()
            .enumerate()
            .filter_map(|(a, &ok)| ok.then_some(a))
            .collect()
    }

    /// True when the two contexts mask identically at every `(h, s, a)`.
    pub fn same_masks(&self, other: &ActionContext) -> bool {
        self.dims == other.dims && self.admissible == other.admissible
    }
}

/// Finite-support distribution over contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextDistribution {
    contexts: Vec<ActionContext>,
    weights: Vec<f64>,
}

impl ContextDistribution {
    pub fn new(contexts: Vec<ActionContext>, weights: Vec<f64>) -> Result<Self> {
        if contexts.is_empty() {
            return Err(Error::Shape("context distribution has no contexts".into()));
        }
        if contexts.len() != weights.len() {
            return Err(Error::Shape(format!(
                "{} contexts but {} weights",
                contexts.len(),
                weights.len()
            )));
        }
        let dims = contexts[0].dims;
        if contexts.iter().any(|c| c.dims != dims) {
            return Err(Error::Shape("contexts disagree on S, A, H".into()));
        }
        Ok(Self { contexts, weights })
    }

    pub fn point_mass(ctx: ActionContext) -> Self {
        Self {
            contexts: vec![ctx],
            weights: vec![1.0],
        }
    }

    pub fn contexts(&self) -> &[ActionContext] {
        &self.contexts
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn dims(&self) -> Dims {
        self.contexts[0].dims
    }

    /// `(weight, context)` pairs with positive weight.
    pub fn support(&self) -> impl Iterator<Item = (f64, &ActionContext)> {
        self.weights
            .iter()
            .copied()
            .zip(&self.contexts)
            .filter(|(w, _)| *w > 0.0)
    }

    /// Initial-state law of the mixture `sum_i w_i mu(M_i)`.
    pub fn mixed_initial_dist(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.dims().states];
        for (w, ctx) in self.support() {
            for (m, p) in mu.iter_mut().zip(ctx.initial_dist()) {
                *m += w * p;
            }
        }
        mu
    }
}

/// One action per `(h, s)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    states: usize,
    horizon: usize,
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(states: usize, horizon: usize, actions: Vec<usize>) -> Result<Self> {
        if actions.len() != states * horizon {
            return Err(Error::Shape(format!(
                "policy has {} entries, expected {}",
                actions.len(),
                states * horizon
            )));
        }
        Ok(Self {
            states,
            horizon,
            actions,
        })
    }

    /// Plays `action` everywhere.
    pub fn constant(states: usize, horizon: usize, action: usize) -> Self {
        Self {
            states,
            horizon,
            actions: vec![action; states * horizon],
        }
    }

    #[inline]
    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h * self.states + s]
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }
}

/// A violated model or context invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Defect {
    /// Row `(h, s, a)` sums to `sum`; `defect = |1 - sum|`.
    RowSum {
        h: usize,
        s: usize,
        a: usize,
        sum: f64,
        defect: f64,
    },
    NegativeProbability {
        h: usize,
        s: usize,
        a: usize,
        next: usize,
        value: f64,
    },
    RewardOutOfRange {
        h: usize,
        s: usize,
        a: usize,
        value: f64,
    },
    InitialDistSum {
        context: String,
        sum: f64,
        defect: f64,
    },
    NegativeInitial {
        context: String,
        state: usize,
        value: f64,
    },
    EmptyAdmissibleSet {
        context: String,
        h: usize,
        s: usize,
    },
    WeightSum {
        sum: f64,
        defect: f64,
    },
    NegativeWeight {
        index: usize,
        value: f64,
    },
    DimensionMismatch {
        what: String,
    },
}

impl std::fmt::Display for Defect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // layers are printed 1-based, matching the instance file format
        match self {
            Defect::RowSum { h, s, a, sum, defect } => write!(
                f,
                "transition row (h={}, s={s}, a={a}) sums to {sum} (defect {defect:.3e})",
                h + 1
            ),
            Defect::NegativeProbability { h, s, a, next, value } => write!(
                f,
                "negative transition probability {value} at (h={}, s={s}, a={a}, s'={next})",
                h + 1
            ),
            Defect::RewardOutOfRange { h, s, a, value } => {
                write!(f, "reward {value} at (h={}, s={s}, a={a}) outside [0, 1]", h + 1)
            }
            Defect::InitialDistSum { context, sum, defect } => write!(
                f,
                "context {context}: initial distribution sums to {sum} (defect {defect:.3e})"
            ),
            Defect::NegativeInitial { context, state, value } => write!(
                f,
                "context {context}: negative initial probability {value} at s={state}"
            ),
            Defect::EmptyAdmissibleSet { context, h, s } => {
                write!(f, "context {context}: empty admissible set at (h={}, s={s})", h + 1)
            }
            Defect::WeightSum { sum, defect } => {
                write!(f, "context weights sum to {sum} (defect {defect:.3e})")
            }
            Defect::NegativeWeight { index, value } => {
                write!(f, "context weight {index} is negative ({value})")
            }
            Defect::DimensionMismatch { what } => write!(f, "dimension mismatch: {what}"),
        }
    }
}

/// Outcome of a validation pass. Empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub defects: Vec<Defect>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.defects.is_empty()
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.defects.extend(other.defects);
    }
}

pub fn validate_model(model: &MdpModel) -> ValidationReport {
    let dims = model.dims();
    let mut defects = Vec::new();
    for (h, s, a) in dims.triples() {
        let row = model.transition(h, s, a);
        for (next, &p) in row.iter().enumerate() {
            if p < 0.0 || p.is_nan() {
                defects.push(Defect::NegativeProbability {
                    h,
                    s,
                    a,
                    next,
                    value: p,
                });
            }
        }
        let sum: f64 = row.iter().sum();
        let defect = (1.0 - sum).abs();
        if !(defect <= PROB_TOL) {
            defects.push(Defect::RowSum { h, s, a, sum, defect });
        }
        let r = model.reward(h, s, a);
        if !(0.0..=1.0).contains(&r) {
            defects.push(Defect::RewardOutOfRange { h, s, a, value: r });
        }
    }
    ValidationReport { defects }
}

pub fn validate_context(model: &MdpModel, ctx: &ActionContext) -> ValidationReport {
    let dims = model.dims();
    let mut defects = Vec::new();
    if ctx.dims() != dims {
        defects.push(Defect::DimensionMismatch {
            what: format!("context {} shape differs from the model", ctx.id()),
        });
        return ValidationReport { defects };
    }
    for (state, &p) in ctx.initial_dist().iter().enumerate() {
        if p < 0.0 || p.is_nan() {
            defects.push(Defect::NegativeInitial {
                context: ctx.id().to_string(),
                state,
                value: p,
            });
        }
    }
    let sum: f64 = ctx.initial_dist().iter().sum();
    let defect = (1.0 - sum).abs();
    if !(defect <= PROB_TOL) {
        defects.push(Defect::InitialDistSum {
            context: ctx.id().to_string(),
            sum,
            defect,
        });
    }
    for h in 0..dims.horizon {
        for s in 0..dims.states {
            if !ctx.mask(h, s).iter().any(|&ok| ok) {
                defects.push(Defect::EmptyAdmissibleSet {
                    context: ctx.id().to_string(),
                    h,
                    s,
                });
            }
        }
    }
    ValidationReport { defects }
}

/// Validates the model, every context, and the mixing weights.
pub fn validate_distribution(model: &MdpModel, dist: &ContextDistribution) -> ValidationReport {
    let mut report = validate_model(model);
    for ctx in dist.contexts() {
        report.merge(validate_context(model, ctx));
    }
    for (index, &w) in dist.weights().iter().enumerate() {
        if w < 0.0 || w.is_nan() {
            report.defects.push(Defect::NegativeWeight { index, value: w });
        }
    }
    let sum: f64 = dist.weights().iter().sum();
    let defect = (1.0 - sum).abs();
    if !(defect <= PROB_TOL) {
        report.defects.push(Defect::WeightSum { sum, defect });
    }
    report
}

pub fn policy_is_admissible(policy: &DeterministicPolicy, ctx: &ActionContext) -> Result<bool> {
    let dims = ctx.dims();
    if policy.states() != dims.states || policy.horizon() != dims.horizon {
        return Err(Error::Shape(format!(
            "policy is {}x{} (H x S), context is {}x{}",
            policy.horizon(),
            policy.states(),
            dims.horizon,
            dims.states
        )));
    }
    Ok((0..dims.horizon).all(|h| {
        (0..dims.states).all(|s| {
            let a = policy.action(h, s);
            a < dims.actions && ctx.is_admissible(h, s, a)
        })
    }))
}

/// Masked argmax over `values`, ties broken toward the lowest index.
/// Returns `None` when no action is admissible.
#[inline]
pub fn masked_argmax(values: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (a, (&v, &ok)) in values.iter().zip(mask).enumerate() {
        if !ok {
            continue;
        }
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((a, v)),
        }
    }
    best.map(|(a, _)| a)
}
