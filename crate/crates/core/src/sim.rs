//! Episode engine and regret accounting.
//!
//! Regret is never estimated from sampled returns: each episode's learner
//! commits to a policy, and its regret is the exact value difference against
//! the oracle for that episode's context. Seeds run independently (in
//! parallel when enabled) and are reduced in seed order.

use rand::Rng;

use crate::baselines::{masked_greedy, ucbvi_plan, uniform_random_policy, BaselineConfig, BaselineVariant, UcbviStats};
use crate::error::{Error, Result};
use crate::model::{validate_distribution, ActionContext, ContextDistribution, DeterministicPolicy, MdpModel};
use crate::mvp::{max_refreshes, MvpConfig, MvpLearner, MvpStrategy};
use crate::par::{self, ExecMode};
use crate::planner::{clamp_regret, optimal_values, policy_initial_value};
use crate::prestage::{prestage_benchmark, prestage_regret, PrestageLearner, SetDistributions};
use crate::rng::{sample_index, stream, Purpose, StreamRng};

/// How episode contexts are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleMode {
    /// Independent draws from the distribution's weights.
    Iid,
    /// A fixed sequence of context indices, at least `K` long.
    Adversarial(Vec<usize>),
    /// Cycles through the listed context indices.
    RoundRobin(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextSchedule {
    pub dist: ContextDistribution,
    pub mode: ScheduleMode,
}

impl ContextSchedule {
    pub fn iid(dist: ContextDistribution) -> Self {
        Self {
            dist,
            mode: ScheduleMode::Iid,
        }
    }

    pub fn adversarial(dist: ContextDistribution, sequence: Vec<usize>) -> Self {
        Self {
            dist,
            mode: ScheduleMode::Adversarial(sequence),
        }
    }

    pub fn round_robin(dist: ContextDistribution, order: Vec<usize>) -> Self {
        Self {
            dist,
            mode: ScheduleMode::RoundRobin(order),
        }
    }

    pub fn contexts(&self) -> &[ActionContext] {
        self.dist.contexts()
    }

    pub fn validate(&self, model: &MdpModel, episodes: u64) -> Result<()> {
        let report = validate_distribution(model, &self.dist);
        if !report.is_valid() {
            return Err(Error::Validation(report));
        }
        let n = self.dist.len();
        let check = |seq: &[usize]| -> Result<()> {
            match seq.iter().find(|&&i| i >= n) {
                Some(i) => Err(Error::Parameter(format!(
                    "schedule names context index {i}, only {n} contexts exist"
                ))),
                None => Ok(()),
            }
        };
        match &self.mode {
            ScheduleMode::Iid => Ok(()),
            ScheduleMode::Adversarial(seq) => {
                if (seq.len() as u64) < episodes {
                    return Err(Error::Parameter(format!(
                        "adversarial sequence has {} entries, K = {episodes}",
                        seq.len()
                    )));
                }
                check(seq)
            }
            ScheduleMode::RoundRobin(order) => {
                if order.is_empty() {
                    return Err(Error::Parameter("round-robin order is empty".into()));
                }
                check(order)
            }
        }
    }

    /// Context index for episode `k` (0-based).
    pub fn pick(&self, k: usize, rng: &mut StreamRng) -> usize {
        match &self.mode {
            ScheduleMode::Iid => sample_index(self.dist.weights(), rng.random::<f64>()),
            ScheduleMode::Adversarial(seq) => seq[k],
            ScheduleMode::RoundRobin(order) => order[k % order.len()],
        }
    }

    /// Default `delta'` family for this schedule.
    pub fn is_stochastic(&self) -> bool {
        matches!(self.mode, ScheduleMode::Iid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LearnerKind {
    Mvp,
    PrestageMvp,
    Ucbvi,
    SUcbvi,
    Random,
    /// Plays the exact optimal policy of every context.
    Oracle,
}

impl LearnerKind {
    pub fn label(self) -> &'static str {
        match self {
            LearnerKind::Mvp => "mvp",
            LearnerKind::PrestageMvp => "prestage_mvp",
            LearnerKind::Ucbvi => "ucbvi",
            LearnerKind::SUcbvi => "s_ucbvi",
            LearnerKind::Random => "random",
            LearnerKind::Oracle => "oracle",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "mvp" => LearnerKind::Mvp,
            "prestage_mvp" | "prestage" => LearnerKind::PrestageMvp,
            "ucbvi" => LearnerKind::Ucbvi,
            "s_ucbvi" | "s-ucbvi" => LearnerKind::SUcbvi,
            "random" => LearnerKind::Random,
            "oracle" => LearnerKind::Oracle,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    /// Overall confidence level.
    pub delta: f64,
    /// Overrides the schedule default when set.
    pub delta_prime: Option<f64>,
    pub bonus_scale: f64,
}

impl LearnerConfig {
    pub fn new(kind: LearnerKind) -> Self {
        Self {
            kind,
            delta: 0.1,
            delta_prime: None,
            bonus_scale: 1.0,
        }
    }

    /// MVP-family configuration for this schedule (schedule default unless
    /// overridden).
    pub fn mvp_config(&self, schedule: &ContextSchedule, episodes: u64) -> Result<MvpConfig> {
        let dims = schedule.dist.dims();
        let cfg = match (self.delta_prime, self.kind) {
            (Some(dp), _) => MvpConfig::new(dims, episodes, dp)?,
            (None, LearnerKind::PrestageMvp) => MvpConfig::prestage(dims, episodes, self.delta)?,
            (None, _) if schedule.is_stochastic() => MvpConfig::stochastic(dims, episodes, self.delta)?,
            (None, _) => MvpConfig::adversarial(dims, episodes, self.delta, schedule.dist.len())?,
        };
        cfg.with_bonus_scale(self.bonus_scale)
    }
}

/// One step of a rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub h: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub ret: f64,
}

/// Rolls out a committed deterministic policy for `H` steps.
///
/// Panics if the policy plays an inadmissible action: every learner is
/// required to respect the mask.
pub fn run_episode(
    model: &MdpModel,
    ctx: &ActionContext,
    policy: &DeterministicPolicy,
    rng: &mut StreamRng,
) -> Trajectory {
    let dims = model.dims();
    let mut s = sample_index(ctx.initial_dist(), rng.random::<f64>());
    let mut steps = Vec::with_capacity(dims.horizon);
    let mut ret = 0.0;
    for h in 0..dims.horizon {
        let a = policy.action(h, s);
        assert!(
            ctx.is_admissible(h, s, a),
            "inadmissible action {a} at (h={h}, s={s}) under context {}",
            ctx.id()
        );
        let reward = model.reward(h, s, a);
        let next = sample_index(model.transition(h, s, a), rng.random::<f64>());
        steps.push(Step {
            h,
            state: s,
            action: a,
            reward,
            next,
        });
        ret += reward;
        s = next;
    }
    Trajectory { steps, ret }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// 1-based.
    pub episode: u64,
    pub context_id: String,
    pub inst_regret: f64,
    pub cum_regret: f64,
    pub ret: f64,
    /// Benchmark value of the episode's context.
    pub optimal_value: f64,
    /// Learner's own planned initial value, when it has one.
    pub plan_value: Option<f64>,
    pub max_bonus: Option<f64>,
    pub refresh_events: u32,
}

/// Averaged strategy suboptimality after `episode` episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacPoint {
    pub episode: u64,
    pub suboptimality: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub seed: u64,
    pub learner: LearnerKind,
    pub rows: Vec<TraceRow>,
    /// Largest per-triple epoch-refresh count (MVP family), else 0.
    pub max_refreshes: u32,
    /// Largest per-state set-snapshot count (pre-stage only), else 0.
    pub max_snapshots: u32,
    pub pac: Vec<PacPoint>,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cum_regret)
    }
}

/// Anything that maps a context to a deterministic policy.
pub trait Strategy {
    fn policy_for(&self, model: &MdpModel, ctx: &ActionContext) -> Result<DeterministicPolicy>;
}

impl Strategy for MvpStrategy {
    fn policy_for(&self, model: &MdpModel, ctx: &ActionContext) -> Result<DeterministicPolicy> {
        MvpStrategy::policy_for(self, model, ctx)
    }
}

/// Plays each context's optimal policy.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleStrategy;

impl Strategy for OracleStrategy {
    fn policy_for(&self, model: &MdpModel, ctx: &ActionContext) -> Result<DeterministicPolicy> {
        Ok(optimal_values(model, ctx)?.policy)
    }
}

/// `E_{M ~ D}[V*(M) - V^{Pi(M)}(M)]`, exact over the finite support.
pub fn strategy_suboptimality<S: Strategy + ?Sized>(
    strategy: &S,
    model: &MdpModel,
    dist: &ContextDistribution,
) -> Result<f64> {
    let mut total = 0.0;
    for (w, ctx) in dist.support() {
        let best = optimal_values(model, ctx)?.values.initial_value();
        let pi = strategy.policy_for(model, ctx)?;
        total += w * clamp_regret(best - policy_initial_value(model, ctx, &pi)?);
    }
    Ok(total)
}

/// Average suboptimality of a list of strategy snapshots.
pub fn pac_evaluate<S: Strategy>(snapshots: &[S], model: &MdpModel, dist: &ContextDistribution) -> Result<f64> {
    if snapshots.is_empty() {
        return Err(Error::Parameter("no snapshots to evaluate".into()));
    }
    let mut total = 0.0;
    for s in snapshots {
        total += strategy_suboptimality(s, model, dist)?;
    }
    Ok(total / snapshots.len() as f64)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub exec: ExecMode,
    /// Snapshot the MVP strategy every this many episodes and report the
    /// running average of snapshot suboptimality.
    pub pac_every: Option<u64>,
    /// Per-`(h, s)` set laws for the pre-stage learner; defaults to the
    /// marginals of the context distribution.
    pub set_distributions: Option<SetDistributions>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub episode: u64,
    pub mean_cum_regret: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Per-episode mean cumulative regret with a normal 95% interval
/// `mean +- 1.96 sd / sqrt(n)` (sample standard deviation; zero width for a
/// single seed).
pub fn aggregate(cum: &[Vec<f64>]) -> Vec<AggregateRow> {
    let Some(len) = cum.iter().map(Vec::len).min() else {
        return Vec::new();
    };
    let n = cum.len() as f64;
    (0..len)
        .map(|k| {
            let mean = cum.iter().map(|c| c[k]).sum::<f64>() / n;
            let sd = if cum.len() > 1 {
                (cum.iter().map(|c| (c[k] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let half = 1.96 * sd / n.sqrt();
            AggregateRow {
                episode: k as u64 + 1,
                mean_cum_regret: mean,
                ci_low: mean - half,
                ci_high: mean + half,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub traces: Vec<RegretTrace>,
    pub aggregate: Vec<AggregateRow>,
}

pub fn aggregate_traces(traces: &[RegretTrace]) -> Vec<AggregateRow> {
    let cum: Vec<Vec<f64>> = traces
        .iter()
        .map(|t| t.rows.iter().map(|r| r.cum_regret).collect())
        .collect();
    aggregate(&cum)
}

pub fn run_experiment(
    model: &MdpModel,
    schedule: &ContextSchedule,
    learner: &LearnerConfig,
    episodes: u64,
    seeds: &[u64],
    opts: &RunOptions,
) -> Result<Experiment> {
    if episodes == 0 {
        return Err(Error::Parameter("K must be at least 1".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Parameter("no seeds given".into()));
    }
    schedule.validate(model, episodes)?;
    let traces = par::map(seeds, opts.exec, |&seed| {
        run_seed(model, schedule, learner, episodes, seed, opts)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate_traces(&traces);
    Ok(Experiment { traces, aggregate })
}

enum Agent {
    Mvp(MvpLearner),
    Ucb(BaselineConfig, UcbviStats),
    Random(StreamRng),
    Oracle(Vec<DeterministicPolicy>),
}

/// One seed of a run. `validate` is the caller's job.
pub fn run_seed(
    model: &MdpModel,
    schedule: &ContextSchedule,
    learner: &LearnerConfig,
    episodes: u64,
    seed: u64,
    opts: &RunOptions,
) -> Result<RegretTrace> {
    if learner.kind == LearnerKind::PrestageMvp {
        return run_prestage_seed(model, schedule, learner, episodes, seed, opts);
    }
    let dims = model.dims();
    let contexts = schedule.contexts();
    let optimal: Vec<_> = contexts
        .iter()
        .map(|c| optimal_values(model, c))
        .collect::<Result<_>>()?;
    let mut agent = match learner.kind {
        LearnerKind::Mvp => Agent::Mvp(MvpLearner::new(learner.mvp_config(schedule, episodes)?)),
        LearnerKind::Ucbvi | LearnerKind::SUcbvi => {
            let variant = if learner.kind == LearnerKind::Ucbvi {
                BaselineVariant::UcbviBernstein
            } else {
                BaselineVariant::SUcbvi
            };
            let confidence = learner.delta_prime.unwrap_or(learner.delta);
            let cfg =
                BaselineConfig::new(variant, dims, episodes, confidence)?.with_bonus_scale(learner.bonus_scale)?;
            Agent::Ucb(cfg, UcbviStats::new(dims))
        }
        LearnerKind::Random => Agent::Random(stream(seed, Purpose::Learner)),
        LearnerKind::Oracle => Agent::Oracle(optimal.iter().map(|o| o.policy.clone()).collect()),
        LearnerKind::PrestageMvp => unreachable!(),
    };

    let mut ctx_rng = stream(seed, Purpose::Context);
    let mut env_rng = stream(seed, Purpose::Environment);
    let mut rows = Vec::with_capacity(episodes as usize);
    let mut pac = Vec::new();
    let mut pac_sum = 0.0;
    let mut pac_n = 0u64;
    let mut cum = 0.0;
    for k in 0..episodes as usize {
        if let (Some(every), Agent::Mvp(m)) = (opts.pac_every, &agent) {
            // snapshot taken on the statistics accumulated before episode k+1
            if every > 0 && (k as u64).is_multiple_of(every) && k > 0 {
                pac_sum += strategy_suboptimality(&m.snapshot(), model, &schedule.dist)?;
                pac_n += 1;
                pac.push(PacPoint {
                    episode: k as u64,
                    suboptimality: pac_sum / pac_n as f64,
                });
            }
        }
        let ci = schedule.pick(k, &mut ctx_rng);
        let ctx = &contexts[ci];
        let (policy, plan_value, max_bonus) = match &mut agent {
            Agent::Mvp(m) => {
                let plan = m.plan(model, ctx)?;
                let pv = plan.initial_value(ctx.initial_dist());
                let mb = plan.max_bonus();
                (plan.policy, Some(pv), Some(mb))
            }
            Agent::Ucb(cfg, stats) => {
                let q = ucbvi_plan(model, stats, cfg)?;
                (masked_greedy(&q, ctx)?, None, None)
            }
            Agent::Random(rng) => (uniform_random_policy(ctx, rng)?, None, None),
            Agent::Oracle(pols) => (pols[ci].clone(), None, None),
        };
        let traj = run_episode(model, ctx, &policy, &mut env_rng);
        let mut refresh_events = 0;
        for st in &traj.steps {
            match &mut agent {
                Agent::Mvp(m) => refresh_events += m.stats.record_transition(st.h, st.state, st.action, st.next) as u32,
                Agent::Ucb(_, stats) => stats.record(st.h, st.state, st.action, st.next),
                Agent::Random(_) | Agent::Oracle(_) => {}
            }
        }
        let best = optimal[ci].values.initial_value();
        let inst = clamp_regret(best - policy_initial_value(model, ctx, &policy)?);
        cum += inst;
        rows.push(TraceRow {
            episode: k as u64 + 1,
            context_id: ctx.id().to_string(),
            inst_regret: inst,
            cum_regret: cum,
            ret: traj.ret,
            optimal_value: best,
            plan_value,
            max_bonus,
            refresh_events,
        });
    }
    if let (Some(every), Agent::Mvp(m)) = (opts.pac_every, &agent) {
        if every > 0 && episodes.is_multiple_of(every) {
            pac_sum += strategy_suboptimality(&m.snapshot(), model, &schedule.dist)?;
            pac_n += 1;
            pac.push(PacPoint {
                episode: episodes,
                suboptimality: pac_sum / pac_n as f64,
            });
        }
    }
    let max_refreshes = match &agent {
        Agent::Mvp(m) => m.stats.max_refresh_count(),
        _ => 0,
    };
    Ok(RegretTrace {
        seed,
        learner: learner.kind,
        rows,
        max_refreshes,
        max_snapshots: 0,
        pac,
    })
}

fn run_prestage_seed(
    model: &MdpModel,
    schedule: &ContextSchedule,
    learner: &LearnerConfig,
    episodes: u64,
    seed: u64,
    opts: &RunOptions,
) -> Result<RegretTrace> {
    let dims = model.dims();
    let sets = match &opts.set_distributions {
        Some(s) => s.clone(),
        None => SetDistributions::from_contexts(&schedule.dist)?,
    };
    let bench = prestage_benchmark(model, &sets)?;
    let mu = schedule.dist.mixed_initial_dist();
    let best = bench.initial_value(&mu);
    let mut agent = PrestageLearner::new(learner.mvp_config(schedule, episodes)?);
    let mut env_rng = stream(seed, Purpose::Environment);
    let mut set_rng = stream(seed, Purpose::ActionSets);
    let mut rows = Vec::with_capacity(episodes as usize);
    let mut cum = 0.0;
    for k in 0..episodes {
        let plan = agent.plan(model)?;
        let plan_value = crate::planner::expectation(&mu, &plan.v[..dims.states]);
        let max_bonus = plan.bonus.iter().chain(&plan.set_bonus).copied().fold(0.0, f64::max);
        let mut s = sample_index(&mu, env_rng.random::<f64>());
        let mut ret = 0.0;
        let mut refresh_events = 0;
        for h in 0..dims.horizon {
            let set = sets.sample(h, s, set_rng.random::<f64>()).clone();
            let a = set.argmax(plan.q_row(h, s));
            assert!(set.contains(a), "pre-stage learner left the revealed set");
            let reward = model.reward(h, s, a);
            let next = sample_index(model.transition(h, s, a), env_rng.random::<f64>());
            refresh_events += agent.stats.record_transition(h, s, a, next) as u32;
            agent.sets.record_state_visit(h, s, &set);
            ret += reward;
            s = next;
        }
        let inst = prestage_regret(model, &sets, &bench, &mu, &plan)?;
        cum += inst;
        rows.push(TraceRow {
            episode: k + 1,
            context_id: "prestage".into(),
            inst_regret: inst,
            cum_regret: cum,
            ret,
            optimal_value: best,
            plan_value: Some(plan_value),
            max_bonus: Some(max_bonus),
            refresh_events,
        });
    }
    Ok(RegretTrace {
        seed,
        learner: learner.kind,
        rows,
        max_refreshes: agent.stats.max_refresh_count(),
        max_snapshots: agent.sets.max_snapshot_count(),
        pac: Vec::new(),
    })
}

/// Upper bound on per-triple refreshes for a run of `episodes`.
pub fn refresh_bound(episodes: u64) -> u32 {
    max_refreshes(episodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dims;

    fn bandit() -> (MdpModel, ContextDistribution) {
        let dims = Dims::new(1, 2, 1);
        let model = MdpModel::new(dims, vec![1.0, 1.0], vec![1.0, 0.0]).unwrap();
        let ctx = ActionContext::unmasked("b", dims, vec![1.0]).unwrap();
        (model, ContextDistribution::point_mass(ctx))
    }

    #[test]
    fn oracle_has_zero_regret() {
        let (model, dist) = bandit();
        let exp = run_experiment(
            &model,
            &ContextSchedule::iid(dist),
            &LearnerConfig::new(LearnerKind::Oracle),
            50,
            &[1, 2],
            &RunOptions::default(),
        )
        .unwrap();
        assert!(exp.traces.iter().all(|t| t.final_regret() == 0.0));
    }

    #[test]
    fn single_episode_single_row() {
        let (model, dist) = bandit();
        let exp = run_experiment(
            &model,
            &ContextSchedule::iid(dist),
            &LearnerConfig::new(LearnerKind::Mvp),
            1,
            &[0],
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(exp.traces[0].rows.len(), 1);
        assert_eq!(exp.aggregate.len(), 1);
    }

    #[test]
    fn short_adversarial_sequence_is_rejected() {
        let (model, dist) = bandit();
        let sched = ContextSchedule::adversarial(dist, vec![0; 3]);
        assert!(sched.validate(&model, 4).is_err());
        assert!(sched.validate(&model, 3).is_ok());
    }

    #[test]
    fn aggregate_interval() {
        let rows = aggregate(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(rows[0].mean_cum_regret, 2.0);
        let half = 1.96 * 2f64.sqrt() / 2f64.sqrt();
        assert!((rows[1].ci_high - (3.0 + half)).abs() < 1e-12);
        let one = aggregate(&[vec![5.0]]);
        assert_eq!((one[0].ci_low, one[0].ci_high), (5.0, 5.0));
    }

    #[test]
    fn learner_names_round_trip() {
        for k in [
            LearnerKind::Mvp,
            LearnerKind::PrestageMvp,
            LearnerKind::Ucbvi,
            LearnerKind::SUcbvi,
            LearnerKind::Random,
            LearnerKind::Oracle,
        ] {
            assert_eq!(LearnerKind::parse(k.label()), Some(k));
        }
        assert_eq!(LearnerKind::parse("nope"), None);
    }
}
