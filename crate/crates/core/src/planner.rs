//! Exact dynamic programming over a known model: optimal values, policy
//! evaluation, per-episode regret, suboptimality gaps and variance summaries.
//!
//! Everything here is the ground truth the learners are scored against.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{
    masked_argmax, policy_is_admissible, ActionContext, ContextDistribution, DeterministicPolicy, Dims, MdpModel,
};

/// Gaps at or below this magnitude are snapped to exactly zero.
pub const GAP_TOL: f64 = 1e-12;

/// `<p, x>`.
#[inline]
pub fn expectation(p: &[f64], x: &[f64]) -> f64 {
    p.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// `V(P, X) = <P, X^2> - <P, X>^2`, clamped at zero against rounding.
#[inline]
pub fn variance(p: &[f64], x: &[f64]) -> f64 {
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (pi, xi) in p.iter().zip(x) {
        m1 += pi * xi;
        m2 += pi * xi * xi;
    }
    (m2 - m1 * m1).max(0.0)
}

/// Value and action-value tables for one context.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    dims: Dims,
    /// `(H + 1) * S`; the last layer is identically zero.
    v: Vec<f64>,
    /// `None` on inadmissible entries.
    q: Vec<Option<f64>>,
    initial_value: f64,
}

impl ValueTables {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// `V_h(s)` for `h` in `0..=H`.
    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.dims.states + s]
    }

    pub fn v_layer(&self, h: usize) -> &[f64] {
        let n = self.dims.states;
        &self.v[h * n..(h + 1) * n]
    }

    pub fn q(&self, h: usize, s: usize, a: usize) -> Option<f64> {
        self.q[self.dims.hsa(h, s, a)]
    }

    /// `E_{s ~ mu}[V_1(s)]`.
    pub fn initial_value(&self) -> f64 {
        self.initial_value
    }
}

/// Optimal tables plus the greedy (lowest-index tie-break) policy.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution {
    pub values: ValueTables,
    pub policy: DeterministicPolicy,
}

fn check_shapes(model: &MdpModel, ctx: &ActionContext) -> Result<Dims> {
    let dims = model.dims();
    if ctx.dims() != dims {
        return Err(Error::Shape(format!(
            "context {} is {:?}, model is {:?}",
            ctx.id(),
            ctx.dims(),
            dims
        )));
    }
    Ok(dims)
}

pub fn optimal_values(model: &MdpModel, ctx: &ActionContext) -> Result<OptimalSolution> {
    let dims = check_shapes(model, ctx)?;
    let (n_s, n_a, n_h) = (dims.states, dims.actions, dims.horizon);
    let mut v = vec![0.0; (n_h + 1) * n_s];
    let mut q = vec![None; dims.num_hsa()];
    let mut policy = vec![0usize; n_h * n_s];
    let mut row_q = vec![0.0; n_a];
    for h in (0..n_h).rev() {
        let (cur, next) = v.split_at_mut((h + 1) * n_s);
        let next = &next[..n_s];
        for s in 0..n_s {
            let mask = ctx.mask(h, s);
            for a in 0..n_a {
                if mask[a] {
                    let val = model.reward(h, s, a) + expectation(model.transition(h, s, a), next);
                    row_q[a] = val;
                    q[dims.hsa(h, s, a)] = Some(val);
                }
            }
            let best = masked_argmax(&row_q, mask).ok_or(Error::EmptyAdmissible { h, s })?;
            policy[h * n_s + s] = best;
            cur[h * n_s + s] = row_q[best];
        }
    }
    let initial_value = expectation(ctx.initial_dist(), &v[..n_s]);
    Ok(OptimalSolution {
        values: ValueTables {
            dims,
            v,
            q,
            initial_value,
        },
        policy: DeterministicPolicy::new(n_s, n_h, policy)?,
    })
}

/// Exact evaluation of a deterministic admissible policy.
pub fn policy_value(model: &MdpModel, ctx: &ActionContext, policy: &DeterministicPolicy) -> Result<ValueTables> {
    let dims = check_shapes(model, ctx)?;
    ensure_admissible(policy, ctx)?;
    let (n_s, n_a, n_h) = (dims.states, dims.actions, dims.horizon);
    let mut v = vec![0.0; (n_h + 1) * n_s];
    let mut q = vec![None; dims.num_hsa()];
    for h in (0..n_h).rev() {
        let (cur, next) = v.split_at_mut((h + 1) * n_s);
        let next = &next[..n_s];
        for s in 0..n_s {
            for a in 0..n_a {
                if ctx.is_admissible(h, s, a) {
                    let val = model.reward(h, s, a) + expectation(model.transition(h, s, a), next);
                    q[dims.hsa(h, s, a)] = Some(val);
                }
            }
            cur[h * n_s + s] = q[dims.hsa(h, s, policy.action(h, s))].unwrap_or_default();
        }
    }
    let initial_value = expectation(ctx.initial_dist(), &v[..n_s]);
    Ok(ValueTables {
        dims,
        v,
        q,
        initial_value,
    })
}

/// `E_{s ~ mu}[V_1^pi(s)]` without materialising the Q table.
pub fn policy_initial_value(model: &MdpModel, ctx: &ActionContext, policy: &DeterministicPolicy) -> Result<f64> {
    let dims = check_shapes(model, ctx)?;
    ensure_admissible(policy, ctx)?;
    let n_s = dims.states;
    let mut next = vec![0.0; n_s];
    let mut cur = vec![0.0; n_s];
    for h in (0..dims.horizon).rev() {
        for (s, c) in cur.iter_mut().enumerate() {
            let a = policy.action(h, s);
            *c = model.reward(h, s, a) + expectation(model.transition(h, s, a), &next);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(expectation(ctx.initial_dist(), &next))
}

fn ensure_admissible(policy: &DeterministicPolicy, ctx: &ActionContext) -> Result<()> {
    if policy_is_admissible(policy, ctx)? {
        return Ok(());
    }
    let dims = ctx.dims();
    for h in 0..dims.horizon {
        for s in 0..dims.states {
            let a = policy.action(h, s);
            if a >= dims.actions || !ctx.is_admissible(h, s, a) {
                return Err(Error::Inadmissible { h, s, a });
            }
        }
    }
    unreachable!("policy_is_admissible and the scan disagree")
}

/// Clamps regret values that are negative only through rounding.
#[inline]
pub fn clamp_regret(raw: f64) -> f64 {
    debug_assert!(raw >= -1e-9, "regret {raw} is materially negative");
    if (-1e-12..0.0).contains(&raw) {
        0.0
    } else {
        raw
    }
}

/// `V*(M) - V^pi(M)` under the context's initial distribution.
pub fn episode_regret(model: &MdpModel, ctx: &ActionContext, executed: &DeterministicPolicy) -> Result<f64> {
    let best = optimal_values(model, ctx)?.values.initial_value();
    let got = policy_initial_value(model, ctx, executed)?;
    Ok(clamp_regret(best - got))
}

/// Suboptimality gap of one action under one context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gap {
    Finite(f64),
    /// The action is not admissible.
    Infinite,
}

impl Gap {
    pub fn finite(self) -> Option<f64> {
        match self {
            Gap::Finite(g) => Some(g),
            Gap::Infinite => None,
        }
    }

    pub fn is_positive_finite(self) -> bool {
        matches!(self, Gap::Finite(g) if g > 0.0)
    }
}

impl fmt::Display for Gap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gap::Finite(g) => write!(f, "{g}"),
            Gap::Infinite => f.write_str("inf"),
        }
    }
}

/// Per-`(h, s, a)` gaps `V*_h(s) - Q*_h(s, a)` for one context.
#[derive(Debug, Clone, PartialEq)]
pub struct GapTable {
    dims: Dims,
    gaps: Vec<Gap>,
}

impl GapTable {
    pub fn get(&self, h: usize, s: usize, a: usize) -> Gap {
        self.gaps[self.dims.hsa(h, s, a)]
    }

    pub fn as_slice(&self) -> &[Gap] {
        &self.gaps
    }
}

pub fn gaps(model: &MdpModel, ctx: &ActionContext) -> Result<GapTable> {
    let sol = optimal_values(model, ctx)?;
    let dims = model.dims();
    let gaps = dims
        .triples()
        .map(|(h, s, a)| match sol.values.q(h, s, a) {
            Some(q) => {
                let g = sol.values.v(h, s) - q;
                Gap::Finite(if g <= GAP_TOL { 0.0 } else { g })
            }
            None => Gap::Infinite,
        })
        .collect();
    Ok(GapTable { dims, gaps })
}

/// Trimmed gap of a finite weighted multiset of gap values.
///
/// Only positive finite atoms with positive weight enter the conditional
/// law. Returns the largest atom `v` whose conditional mass strictly below
/// `v` is at most `p`, or `None` when the conditional support is empty.
pub fn trimmed_gap_of_atoms(atoms: &[(Gap, f64)], p: f64) -> Option<f64> {
    let mut support: Vec<(f64, f64)> = atoms
        .iter()
        .filter_map(|&(g, w)| match g {
            Gap::Finite(x) if x > 0.0 && w > 0.0 => Some((x, w)),
            _ => None,
        })
        .collect();
    if support.is_empty() {
        return None;
    }
    support.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = support.iter().map(|(_, w)| w).sum();
    let mut below = 0.0;
    let mut best = support[0].0;
    let mut i = 0;
    while i < support.len() {
        let value = support[i].0;
        if below / total > p + GAP_TOL {
            break;
        }
        best = value;
        // merge equal atoms before moving the threshold past them
        while i < support.len() && support[i].0 == value {
            below += support[i].1;
            i += 1;
        }
    }
    Some(best)
}

/// Gap analytics across a context distribution at one trimming level.
#[derive(Debug, Clone, PartialEq)]
pub struct GapTables {
    pub p: f64,
    pub dims: Dims,
    /// One table per context, in distribution order.
    pub per_context: Vec<GapTable>,
    /// `None` outside `Z_pos`.
    pub trimmed_gap: Vec<Option<f64>>,
    pub z_pos: Vec<(usize, usize, usize)>,
    pub z_trim: Vec<(usize, usize, usize)>,
    /// `None` when `Z_pos` is empty.
    pub global_trimmed_gap: Option<f64>,
}

impl GapTables {
    pub fn trimmed(&self, h: usize, s: usize, a: usize) -> Option<f64> {
        self.trimmed_gap[self.dims.hsa(h, s, a)]
    }
}

/// Precomputed per-context gaps and variance summary for repeated queries
/// over trimming levels.
#[derive(Debug, Clone)]
pub struct GapAnalysis {
    dims: Dims,
    weights: Vec<f64>,
    per_context: Vec<GapTable>,
    variance: VarianceSummary,
}

impl GapAnalysis {
    pub fn new(model: &MdpModel, dist: &ContextDistribution) -> Result<Self> {
        let per_context = dist
            .contexts()
            .iter()
            .map(|ctx| gaps(model, ctx))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dims: model.dims(),
            weights: dist.weights().to_vec(),
            per_context,
            variance: variance_summary(model, dist)?,
        })
    }

    pub fn variance(&self) -> &VarianceSummary {
        &self.variance
    }

    pub fn per_context(&self) -> &[GapTable] {
        &self.per_context
    }

    pub fn trimmed(&self, p: f64) -> Result<GapTables> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!("trimming level p={p} outside [0, 1)")));
        }
        let dims = self.dims;
        let mut trimmed_gap = vec![None; dims.num_hsa()];
        let mut z_pos = Vec::new();
        let mut z_trim = Vec::new();
        let mut atoms = Vec::with_capacity(self.per_context.len());
        for (h, s, a) in dims.triples() {
            atoms.clear();
            atoms.extend(
                self.per_context
                    .iter()
                    .zip(&self.weights)
                    .map(|(t, &w)| (t.get(h, s, a), w)),
            );
            let Some(thr) = trimmed_gap_of_atoms(&atoms, p) else {
                continue;
            };
            trimmed_gap[dims.hsa(h, s, a)] = Some(thr);
            z_pos.push((h, s, a));
            let trims = atoms
                .iter()
                .any(|&(g, w)| w > 0.0 && matches!(g, Gap::Finite(x) if x < thr));
            if trims {
                z_trim.push((h, s, a));
            }
        }
        let global_trimmed_gap = z_pos
            .iter()
            .filter_map(|&(h, s, a)| trimmed_gap[dims.hsa(h, s, a)])
            .reduce(f64::min);
        Ok(GapTables {
            p,
            dims,
            per_context: self.per_context.clone(),
            trimmed_gap,
            z_pos,
            z_trim,
            global_trimmed_gap,
        })
    }

    /// Unit-constant value of the gap-dependent regret bound. Shape only:
    /// the hidden constants are unknown, so absolute comparisons with
    /// measured regret are meaningless.
    pub fn bound(&self, episodes: u64, p: f64) -> Result<GapBound> {
        let tables = self.trimmed(p)?;
        let Some(delta_min) = tables.global_trimmed_gap.filter(|&d| d > 0.0) else {
            return Err(Error::DegenerateBound(format!(
                "global trimmed gap is zero at p={p} (no positive finite gaps)"
            )));
        };
        let Dims {
            states,
            actions,
            horizon,
        } = self.dims;
        let (sn, an, hn, kn) = (states as f64, actions as f64, horizon as f64, episodes as f64);
        let scale = (hn * hn).min(self.variance.var_max_c);
        let inverse_gap_sum: f64 = tables
            .z_pos
            .iter()
            .map(|&(h, s, a)| scale / tables.trimmed(h, s, a).expect("z_pos entry"))
            .sum();
        let trim_term = tables.z_trim.len() as f64 * scale / delta_min;
        let tail_term = p * sn * an * hn * kn * delta_min;
        let constant_term = sn * sn * an * hn.powi(4);
        let log_factor = (kn.ln()).max(1.0);
        let total = (inverse_gap_sum + trim_term + tail_term + constant_term) * log_factor;
        Ok(GapBound {
            p,
            episodes,
            delta_min,
            z_pos: tables.z_pos.len(),
            z_trim: tables.z_trim.len(),
            var_scale: scale,
            inverse_gap_sum,
            trim_term,
            tail_term,
            constant_term,
            log_factor,
            total,
        })
    }

    /// Evaluates the bound over `grid`; returns every point and the index of
    /// the minimiser among non-degenerate points (first one on ties).
    pub fn sweep(&self, episodes: u64, grid: &[f64]) -> (Vec<Result<GapBound>>, Option<usize>) {
        let points: Vec<_> = grid.iter().map(|&p| self.bound(episodes, p)).collect();
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in points.iter().enumerate() {
            if let Ok(b) = r {
                if best.is_none_or(|(_, v)| b.total < v) {
                    best = Some((i, b.total));
                }
            }
        }
        (points, best.map(|(i, _)| i))
    }
}

pub fn trimmed_gaps(model: &MdpModel, dist: &ContextDistribution, p: f64) -> Result<GapTables> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter(format!("trimming level p={p} outside [0, 1)")));
    }
    GapAnalysis::new(model, dist)?.trimmed(p)
}

/// Terms of the gap-dependent bound at one `(K, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapBound {
    pub p: f64,
    pub episodes: u64,
    pub delta_min: f64,
    pub z_pos: usize,
    pub z_trim: usize,
    /// `min(H^2, Var_max^c)`.
    pub var_scale: f64,
    pub inverse_gap_sum: f64,
    pub trim_term: f64,
    pub tail_term: f64,
    pub constant_term: f64,
    /// `max(ln K, 1)`.
    pub log_factor: f64,
    pub total: f64,
}

pub fn gap_bound_evaluator(model: &MdpModel, dist: &ContextDistribution, episodes: u64, p: f64) -> Result<GapBound> {
    GapAnalysis::new(model, dist)?.bound(episodes, p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceSummary {
    dims: Dims,
    /// `Var*_{h,s,a}` per context, each `H * S * A` long.
    pub var_star: Vec<Vec<f64>>,
    pub var_max_c: f64,
}

impl VarianceSummary {
    pub fn var_star(&self, context: usize, h: usize, s: usize, a: usize) -> f64 {
        self.var_star[context][self.dims.hsa(h, s, a)]
    }
}

/// One-step variances of the optimal value and the largest expected
/// cumulative variance any admissible policy can collect.
pub fn variance_summary(model: &MdpModel, dist: &ContextDistribution) -> Result<VarianceSummary> {
    let dims = model.dims();
    let (n_s, n_a, n_h) = (dims.states, dims.actions, dims.horizon);
    let mut var_star = Vec::with_capacity(dist.len());
    let mut var_max_c: f64 = 0.0;
    for (i, ctx) in dist.contexts().iter().enumerate() {
        let sol = optimal_values(model, ctx)?;
        let table: Vec<f64> = dims
            .triples()
            .map(|(h, s, a)| variance(model.transition(h, s, a), sol.values.v_layer(h + 1)))
            .collect();
        if dist.weights()[i] > 0.0 {
            let mut w_next = vec![0.0; n_s];
            let mut w_cur = vec![0.0; n_s];
            for h in (0..n_h).rev() {
                for s in 0..n_s {
                    let best = (0..n_a)
                        .filter(|&a| ctx.is_admissible(h, s, a))
                        .map(|a| table[dims.hsa(h, s, a)] + expectation(model.transition(h, s, a), &w_next))
                        .fold(f64::NEG_INFINITY, f64::max);
                    w_cur[s] = best;
                    var_max_c = var_max_c.max(best);
                }
                std::mem::swap(&mut w_cur, &mut w_next);
            }
        }
        var_star.push(table);
    }
    Ok(VarianceSummary {
        dims,
        var_star,
        var_max_c,
    })
}
