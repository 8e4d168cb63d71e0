//! Independent oracles for the integration tests. Nothing here calls the
//! planner: values come from forward propagation of state occupancies and
//! exhaustive enumeration of deterministic policies.

#![allow(dead_code)]

use maskrl::{ActionContext, MdpModel};

/// Forward-propagated value of the policy `choice(h, s)` started from the
/// distribution `start` at layer `h0`, with `first` overriding the action
/// at `(h0, s)` for every `s` when given.
pub fn forward_value(
    model: &MdpModel,
    start: &[f64],
    h0: usize,
    first: Option<usize>,
    choice: &dyn Fn(usize, usize) -> usize,
    step_reward: &dyn Fn(usize, usize, usize) -> f64,
) -> f64 {
    let dims = model.dims();
    let mut d = start.to_vec();
    let mut total = 0.0;
    for h in h0..dims.horizon {
        let mut next = vec![0.0; dims.states];
        for s in 0..dims.states {
            if d[s] == 0.0 {
                continue;
            }
            let a = match first {
                Some(a) if h == h0 => a,
                _ => choice(h, s),
            };
            total += d[s] * step_reward(h, s, a);
            for (n, p) in next.iter_mut().zip(model.transition(h, s, a)) {
                *n += d[s] * p;
            }
        }
        d = next;
    }
    total
}

/// `(h, s)` pairs reachable from `start_states` at layer `h0` under some
/// admissible action sequence, excluding layer `h0` itself.
fn reachable_after(model: &MdpModel, ctx: &ActionContext, h0: usize, start_states: &[usize]) -> Vec<(usize, usize)> {
    let dims = model.dims();
    let mut frontier: Vec<bool> = (0..dims.states).map(|s| start_states.contains(&s)).collect();
    let mut out = Vec::new();
    for h in h0..dims.horizon.saturating_sub(1) {
        let mut next = vec![false; dims.states];
        for s in (0..dims.states).filter(|&s| frontier[s]) {
            for a in ctx.admissible_actions(h, s) {
                for (n, &p) in model.transition(h, s, a).iter().enumerate() {
                    if p > 0.0 {
                        next[n] = true;
                    }
                }
            }
        }
        for s in (0..dims.states).filter(|&s| next[s]) {
            out.push((h + 1, s));
        }
        frontier = next;
    }
    out
}

/// Calls `visit` with every admissible assignment of actions to `slots`.
fn for_each_assignment(
    ctx: &ActionContext,
    slots: &[(usize, usize)],
    visit: &mut dyn FnMut(&dyn Fn(usize, usize) -> usize),
) {
    let choices: Vec<Vec<usize>> = slots.iter().map(|&(h, s)| ctx.admissible_actions(h, s)).collect();
    let mut idx = vec![0usize; slots.len()];
    loop {
        let table: std::collections::HashMap<(usize, usize), usize> = slots
            .iter()
            .zip(&idx)
            .zip(&choices)
            .map(|((&k, &i), c)| (k, c[i]))
            .collect();
        let pick =
            move |h: usize, s: usize| -> usize { *table.get(&(h, s)).unwrap_or(&ctx.admissible_actions(h, s)[0]) };
        visit(&pick);
        let mut j = 0;
        loop {
            if j == idx.len() {
                return;
            }
            idx[j] += 1;
            if idx[j] < choices[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Best value over all admissible deterministic policies, started from
/// `mu` at layer 0.
pub fn brute_optimal_value(model: &MdpModel, ctx: &ActionContext) -> f64 {
    let dims = model.dims();
    let starts: Vec<usize> = (0..dims.states).filter(|&s| ctx.initial_dist()[s] > 0.0).collect();
    let mut slots: Vec<(usize, usize)> = starts.iter().map(|&s| (0, s)).collect();
    slots.extend(reachable_after(model, ctx, 0, &starts));
    let mut best = f64::NEG_INFINITY;
    let reward = |h: usize, s: usize, a: usize| model.reward(h, s, a);
    for_each_assignment(ctx, &slots, &mut |pi| {
        best = best.max(forward_value(model, ctx.initial_dist(), 0, None, pi, &reward));
    });
    best
}

/// Brute-force `Q*_h(s, a)`: best continuation after playing `a` at `(h, s)`.
pub fn brute_q(model: &MdpModel, ctx: &ActionContext, h: usize, s: usize, a: usize) -> f64 {
    let dims = model.dims();
    let mut start = vec![0.0; dims.states];
    start[s] = 1.0;
    let next_states: Vec<usize> = (0..dims.states)
        .filter(|&n| model.transition(h, s, a)[n] > 0.0)
        .collect();
    let mut slots: Vec<(usize, usize)> = if h + 1 < dims.horizon {
        next_states.iter().map(|&n| (h + 1, n)).collect()
    } else {
        Vec::new()
    };
    if h + 1 < dims.horizon {
        slots.extend(reachable_after(model, ctx, h + 1, &next_states));
    }
    let mut best = f64::NEG_INFINITY;
    let reward = |h: usize, s: usize, a: usize| model.reward(h, s, a);
    for_each_assignment(ctx, &slots, &mut |pi| {
        best = best.max(forward_value(model, &start, h, Some(a), pi, &reward));
    });
    best
}

/// Brute-force `V*_h(s)`.
pub fn brute_v(model: &MdpModel, ctx: &ActionContext, h: usize, s: usize) -> f64 {
    if h >= model.dims().horizon {
        return 0.0;
    }
    ctx.admissible_actions(h, s)
        .into_iter()
        .map(|a| brute_q(model, ctx, h, s, a))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Brute-force largest expected cumulative one-step variance of `V*` over
/// every context, start `(h, s)` and admissible policy.
pub fn brute_var_max(model: &MdpModel, contexts: &[&ActionContext]) -> f64 {
    let dims = model.dims();
    let mut best: f64 = 0.0;
    for ctx in contexts {
        // V*_{h}(s) for h in 0..=H by enumeration
        let vstar: Vec<Vec<f64>> = (0..=dims.horizon)
            .map(|h| (0..dims.states).map(|s| brute_v(model, ctx, h, s)).collect())
            .collect();
        let var = |h: usize, s: usize, a: usize| -> f64 {
            let p = model.transition(h, s, a);
            let v = &vstar[h + 1];
            let m1: f64 = p.iter().zip(v).map(|(a, b)| a * b).sum();
            let m2: f64 = p.iter().zip(v).map(|(a, b)| a * b * b).sum();
            (m2 - m1 * m1).max(0.0)
        };
        for h in 0..dims.horizon {
            for s in 0..dims.states {
                let mut start = vec![0.0; dims.states];
                start[s] = 1.0;
                let mut slots = vec![(h, s)];
                slots.extend(reachable_after(model, ctx, h, &[s]));
                for_each_assignment(ctx, &slots, &mut |pi| {
                    best = best.max(forward_value(model, &start, h, None, pi, &var));
                });
            }
        }
    }
    best
}

/// Value of a fixed deterministic policy by forward propagation from `mu`.
pub fn forward_policy_value(model: &MdpModel, ctx: &ActionContext, pi: &maskrl::DeterministicPolicy) -> f64 {
    let reward = |h: usize, s: usize, a: usize| model.reward(h, s, a);
    forward_value(model, ctx.initial_dist(), 0, None, &|h, s| pi.action(h, s), &reward)
}

/// Spearman rank correlation (average ranks on ties); `None` when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        None
    } else {
        Some(cov / (vx * vy).sqrt())
    }
}

/// Dense-grid evaluation of `sup{x : Pr[gap < x | 0 < gap < inf] <= p}` for
/// atoms given as integer multiples of the grid step. Returns the grid index.
pub fn grid_trimmed_gap(atoms: &[(u32, f64)], p: f64, grid_max: u32) -> Option<u32> {
    let support: Vec<(u32, f64)> = atoms.iter().copied().filter(|&(v, w)| v > 0 && w > 0.0).collect();
    if support.is_empty() {
        return None;
    }
    let total: f64 = support.iter().map(|(_, w)| w).sum();
    let mut best = None;
    for x in 0..=grid_max {
        let below: f64 = support.iter().filter(|&&(v, _)| v < x).map(|(_, w)| w).sum();
        if below / total <= p + 1e-12 {
            best = Some(x);
        }
    }
    best
}
