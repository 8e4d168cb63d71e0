//! Built-in instances: the ten-state benchmark with a `rho`-parameterised
//! chain, and seeded random instances for property tests.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::model::{ActionContext, ContextDistribution, Dims, MdpModel};

pub const BENCH_STATES: usize = 10;
pub const BENCH_ACTIONS: usize = 5;
pub const BENCH_HORIZON: usize = 10;
pub const BENCH_EPISODES: u64 = 20000;
/// Absorbing dead state; every unlisted `(s, a)` moves here.
pub const SINK: usize = 9;
/// Start state of both contexts.
pub const START: usize = 1;

/// `(s, a, [(s', p)])` rows of the benchmark kernel.
fn bench_rows(rho: f64) -> Vec<(usize, usize, Vec<(usize, f64)>)> {
    let split = |to| vec![(to, rho), (SINK, 1.0 - rho)];
    vec![
        (0, 0, vec![(1, 1.0)]),
        (0, 1, vec![(5, 1.0)]),
        (1, 2, vec![(2, 1.0)]),
        (2, 4, split(3)),
        (3, 4, split(4)),
        (4, 4, split(4)),
        (5, 3, vec![(6, 1.0)]),
        (6, 4, split(7)),
        (7, 4, split(8)),
        (8, 4, split(8)),
    ]
}

const BENCH_REWARDS: [(usize, usize); 6] = [(2, 4), (4, 4), (5, 4), (6, 4), (7, 4), (8, 4)];

/// Per-state admissible lists of the two contexts.
fn bench_masks(context: usize) -> [&'static [usize]; BENCH_STATES] {
    const REST: &[usize] = &[4];
    match context {
        0 => [&[0, 1, 2], &[2], REST, REST, REST, &[4], REST, REST, REST, REST],
        _ => [&[0, 1, 3], &[4], REST, REST, REST, &[3], REST, REST, REST, REST],
    }
}

/// The ten-state, five-action, horizon-ten benchmark with contexts
/// `M1`, `M2` drawn with probability one half each. The kernel, rewards and
/// masks are identical at every layer.
pub fn appendix_e_instance(rho: f64) -> Result<(MdpModel, ContextDistribution)> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Parameter(format!("rho = {rho} outside (0, 1)")));
    }
    let dims = Dims::new(BENCH_STATES, BENCH_ACTIONS, BENCH_HORIZON);
    let (n_s, n_a) = (BENCH_STATES, BENCH_ACTIONS);
    let mut p = vec![0.0; n_s * n_a * n_s];
    for s in 0..n_s {
        for a in 0..n_a {
            p[(s * n_a + a) * n_s + SINK] = 1.0;
        }
    }
    for (s, a, row) in bench_rows(rho) {
        let off = (s * n_a + a) * n_s;
        p[off..off + n_s].fill(0.0);
        for (to, prob) in row {
            p[off + to] += prob;
        }
    }
    let mut r = vec![0.0; n_s * n_a];
    for (s, a) in BENCH_REWARDS {
        r[s * n_a + a] = 1.0;
    }
    let model = MdpModel::homogeneous(dims, &p, &r)?;

    let mut mu = vec![0.0; n_s];
    mu[START] = 1.0;
    let contexts = (0..2)
        .map(|c| {
            let lists = bench_masks(c);
            let mut layer = vec![false; n_s * n_a];
            for (s, list) in lists.iter().enumerate() {
                for &a in *list {
                    layer[s * n_a + a] = true;
                }
            }
            ActionContext::new(format!("M{}", c + 1), dims, mu.clone(), layer.repeat(BENCH_HORIZON))
        })
        .collect::<Result<Vec<_>>>()?;
    let dist = ContextDistribution::new(contexts, vec![0.5, 0.5])?;
    Ok((model, dist))
}

/// Flat Dirichlet(1, ..., 1) draw.
fn dirichlet_flat<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = x.iter().sum();
    if total > 0.0 {
        x.iter_mut().for_each(|v| *v /= total);
    } else {
        x.iter_mut().for_each(|v| *v = 1.0 / n as f64);
    }
    x
}

/// Random instance: Dirichlet(1) transition rows, initial distributions and
/// context weights; uniform rewards; each action admissible independently
/// with probability `sparsity`, redrawn until the set is nonempty.
pub fn random_instance<R: Rng + ?Sized>(
    dims: Dims,
    num_contexts: usize,
    sparsity: f64,
    rng: &mut R,
) -> Result<(MdpModel, ContextDistribution)> {
    if dims.states == 0 || dims.actions == 0 || dims.horizon == 0 || num_contexts == 0 {
        return Err(Error::Parameter("random instance sizes must be positive".into()));
    }
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::Parameter(format!("sparsity {sparsity} outside (0, 1]")));
    }
    let mut p = Vec::with_capacity(dims.num_hsa() * dims.states);
    for _ in 0..dims.num_hsa() {
        p.extend(dirichlet_flat(dims.states, rng));
    }
    let r: Vec<f64> = (0..dims.num_hsa()).map(|_| rng.random::<f64>()).collect();
    let model = MdpModel::new(dims, p, r)?;
    let mut contexts = Vec::with_capacity(num_contexts);
    for c in 0..num_contexts {
        let mu = dirichlet_flat(dims.states, rng);
        let mut mask = Vec::with_capacity(dims.num_hsa());
        for _ in 0..dims.num_hs() {
            let row = loop {
                let row: Vec<bool> = (0..dims.actions)
                    .map(|_| sparsity >= 1.0 || rng.random::<f64>() < sparsity)
                    .collect();
                if row.iter().any(|&x| x) {
                    break row;
                }
            };
            mask.extend(row);
        }
        contexts.push(ActionContext::new(format!("C{}", c + 1), dims, mu, mask)?);
    }
    let weights = dirichlet_flat(num_contexts, rng);
    Ok((model, ContextDistribution::new(contexts, weights)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_distribution;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bench_is_valid_across_rho() {
        for rho in [0.2, 0.5, 0.8] {
            let (m, d) = appendix_e_instance(rho).unwrap();
            let report = validate_distribution(&m, &d);
            assert!(report.is_valid(), "{:?}", report.defects);
        }
        assert!(appendix_e_instance(0.0).is_err());
        assert!(appendix_e_instance(1.0).is_err());
    }

    #[test]
    fn sink_absorbs_with_zero_reward() {
        let (m, _) = appendix_e_instance(0.5).unwrap();
        for h in 0..BENCH_HORIZON {
            for a in 0..BENCH_ACTIONS {
                assert_eq!(m.transition(h, SINK, a)[SINK], 1.0);
                assert_eq!(m.reward(h, SINK, a), 0.0);
            }
        }
    }

    #[test]
    fn listed_rows_and_rewards() {
        let (m, _) = appendix_e_instance(0.2).unwrap();
        assert_eq!(m.transition(3, 2, 4)[3], 0.2);
        assert_eq!(m.transition(3, 2, 4)[SINK], 0.8);
        assert_eq!(m.transition(0, 4, 4)[4], 0.2);
        assert_eq!(m.transition(0, 5, 3)[6], 1.0);
        // unlisted action at a listed state falls to the sink
        assert_eq!(m.transition(0, 2, 0)[SINK], 1.0);
        assert_eq!(m.reward(0, 5, 4), 1.0);
        assert_eq!(m.reward(0, 3, 4), 0.0);
        let total: f64 = m.rewards().iter().sum();
        assert_eq!(total, 6.0 * BENCH_HORIZON as f64);
    }

    #[test]
    fn contexts_differ_only_at_s0_s1_s5() {
        let (_, d) = appendix_e_instance(0.5).unwrap();
        let (m1, m2) = (&d.contexts()[0], &d.contexts()[1]);
        for h in 0..BENCH_HORIZON {
            for s in 0..BENCH_STATES {
                let same = m1.mask(h, s) == m2.mask(h, s);
                assert_eq!(same, ![0, 1, 5].contains(&s), "h={h} s={s}");
            }
        }
        assert_eq!(m1.admissible_actions(0, 1), vec![2]);
        assert_eq!(m2.admissible_actions(0, 1), vec![4]);
    }

    #[test]
    fn bench_is_pure_in_rho() {
        assert_eq!(appendix_e_instance(0.37).unwrap(), appendix_e_instance(0.37).unwrap());
    }

    #[test]
    fn random_instances_reproduce_and_validate() {
        let dims = Dims::new(3, 2, 3);
        let a = random_instance(dims, 2, 0.5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = random_instance(dims, 2, 0.5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        let (_, full) = random_instance(dims, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        for ctx in full.contexts() {
            assert!((0..3).all(|h| (0..3).all(|s| ctx.mask(h, s).iter().all(|&x| x))));
        }
    }
}
