//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero when any criterion fails.

mod common;

use std::time::Instant;

use common::{brute_optimal_value, grid_trimmed_gap, spearman};
use maskrl::instances::{appendix_e_instance, random_instance, BENCH_EPISODES, BENCH_HORIZON};
use maskrl::mvp::monotone_bonus;
use maskrl::planner::{expectation, optimal_values, trimmed_gap_of_atoms, variance, Gap};
use maskrl::prestage::{prestage_benchmark, prestage_policy_value, ActionSet, SetDistributions};
use maskrl::report::{write_aggregate_csv, write_diagnostics_csv, write_trace_csv};
use maskrl::rng::{stream, Purpose};
use maskrl::sim::{
    refresh_bound, run_experiment, ContextSchedule, Experiment, LearnerConfig, LearnerKind, RegretTrace, RunOptions,
};
use maskrl::Dims;
use rand::Rng;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const RHOS: [f64; 3] = [0.2, 0.5, 0.8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn run(kind: LearnerKind, rho: f64, episodes: u64, opts: &RunOptions) -> Experiment {
    let (model, dist) = appendix_e_instance(rho).unwrap();
    run_experiment(
        &model,
        &ContextSchedule::iid(dist),
        &LearnerConfig::new(kind),
        episodes,
        &SEEDS,
        opts,
    )
    .unwrap()
}

/// Every run made by the gate, kept for the run-wide criteria.
struct Runs {
    comparison: Vec<(f64, [Experiment; 3])>,
    optimism: Experiment,
    extra: Vec<(u64, Experiment)>,
}

impl Runs {
    fn collect() -> Self {
        let opts = RunOptions::default();
        let comparison = std::thread::scope(|scope| {
            let handles: Vec<_> = RHOS
                .iter()
                .map(|&rho| {
                    let opts = &opts;
                    scope.spawn(move || {
                        let k = BENCH_EPISODES;
                        (
                            rho,
                            [
                                run(LearnerKind::Mvp, rho, k, opts),
                                run(LearnerKind::SUcbvi, rho, k, opts),
                                run(LearnerKind::Ucbvi, rho, k, opts),
                            ],
                        )
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let optimism = run(LearnerKind::Mvp, 0.5, 5000, &opts);
        let extra = [LearnerKind::PrestageMvp, LearnerKind::Random, LearnerKind::Oracle]
            .into_iter()
            .map(|kind| (5000, run(kind, 0.5, 5000, &opts)))
            .collect();
        Self {
            comparison,
            optimism,
            extra,
        }
    }

    fn all(&self) -> impl Iterator<Item = (u64, &RegretTrace)> {
        self.comparison
            .iter()
            .flat_map(|(_, e)| e.iter())
            .map(|e| (BENCH_EPISODES, e))
            .chain(std::iter::once((5000, &self.optimism)))
            .chain(self.extra.iter().map(|(k, e)| (*k, e)))
            .flat_map(|(k, e)| e.traces.iter().map(move |t| (k, t)))
    }
}

fn final_mean(e: &Experiment) -> f64 {
    e.aggregate.last().unwrap().mean_cum_regret
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = stream(2024, Purpose::Instance);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    while count < 500 {
        let dims = Dims::new(
            rng.random_range(1..=3),
            rng.random_range(1..=2),
            rng.random_range(1..=3),
        );
        let (model, dist) = random_instance(dims, 1, 0.6, &mut rng).unwrap();
        let ctx = &dist.contexts()[0];
        let got = optimal_values(&model, ctx).unwrap().values.initial_value();
        worst = worst.max((got - brute_optimal_value(&model, ctx)).abs());
        count += 1;
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-10 && secs < 10.0,
        format!("{count} instances, max |error| {worst:.1e}, {secs:.2} s"),
    )
}

fn criterion_2(runs: &Runs, secs: f64) -> Outcome {
    let mut ok = secs < 300.0;
    let mut parts = Vec::new();
    for (rho, [mvp, sucb, ucb]) in &runs.comparison {
        let (m, s, u) = (final_mean(mvp), final_mean(sucb), final_mean(ucb));
        let panel = m < s && s < u && m <= 0.8 * s;
        ok &= panel;
        parts.push(format!("rho={rho}: mvp {m:.2} s-ucbvi {s:.2} ucbvi {u:.2}"));
    }
    outcome(ok, format!("{}; runs took {secs:.1} s", parts.join("; ")))
}

fn criterion_3(runs: &Runs) -> Outcome {
    let (_, exps) = runs.comparison.iter().find(|(rho, _)| *rho == 0.5).unwrap();
    let agg = &exps[0].aggregate;
    let k = BENCH_EPISODES as usize;
    let full = agg[k - 1].mean_cum_regret / k as f64;
    let quarter = agg[k / 4 - 1].mean_cum_regret / (k / 4) as f64;
    let pass = full <= 0.6 * quarter;
    let note = if quarter == 0.0 {
        " (vacuous: regret is identically zero)"
    } else {
        ""
    };
    outcome(pass, format!("R(K)/K = {full:.3e}, R(K/4)/(K/4) = {quarter:.3e}{note}"))
}

fn criterion_4(runs: &Runs) -> Outcome {
    let rows: Vec<_> = runs.optimism.traces.iter().flat_map(|t| &t.rows).collect();
    let hits = rows
        .iter()
        .filter(|r| r.plan_value.unwrap() >= r.optimal_value - 1e-9)
        .count();
    let frac = hits as f64 / rows.len() as f64;
    outcome(
        frac >= 0.99,
        format!("optimistic in {hits}/{} episodes ({frac:.4})", rows.len()),
    )
}

fn criterion_5(runs: &Runs) -> Outcome {
    let mut worst = 0;
    let mut violations = 0;
    let mut n = 0;
    for (k, t) in runs.all() {
        n += 1;
        worst = worst.max(t.max_refreshes);
        if t.max_refreshes > refresh_bound(k) || t.max_snapshots > refresh_bound(k) {
            violations += 1;
        }
    }
    outcome(
        violations == 0,
        format!(
            "{n} runs, largest refresh count {worst}, bound {} at K={BENCH_EPISODES}",
            refresh_bound(BENCH_EPISODES)
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = stream(6, Purpose::Learner);
    let (mut mono_fail, mut lower_fail, mut signed_fail) = (0, 0, 0);
    for _ in 0..10_000 {
        let s = rng.random_range(1..=6);
        let mut p: Vec<f64> = (0..s).map(|_| -rng.random::<f64>().ln()).collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        // the unit cube, where the monotonicity argument holds
        let v: Vec<f64> = (0..s).map(|_| rng.random::<f64>()).collect();
        let v2: Vec<f64> = v.iter().map(|&x| rng.random_range(x..=1.0)).collect();
        let n = 10f64.powf(rng.random_range(-1.0..4.0));
        let iota = 10f64.powf(rng.random_range(-3.0..2.0));
        if monotone_bonus(&p, &v, n, iota) > monotone_bonus(&p, &v2, n, iota) + 1e-12 {
            mono_fail += 1;
        }
        // the full sup-norm ball, where it can fail near the regime switch
        let w: Vec<f64> = (0..s).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let w2: Vec<f64> = w.iter().map(|&x| rng.random_range(x..=1.0)).collect();
        if monotone_bonus(&p, &w, n, iota) > monotone_bonus(&p, &w2, n, iota) + 1e-12 {
            signed_fail += 1;
        }
        let floor = expectation(&p, &w) + 2.0 * (variance(&p, &w) * iota / n).sqrt() + 14.0 * iota / (3.0 * n);
        if monotone_bonus(&p, &w, n, iota) < floor - 1e-12 {
            lower_fail += 1;
        }
    }
    outcome(
        mono_fail == 0 && lower_fail == 0,
        format!(
            "10000 samples, monotonicity violations {mono_fail} on [0,1]^S \
             ({signed_fail} on [-1,1]^S, informational), lower-bound violations {lower_fail}"
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = stream(7, Purpose::Instance);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let mut atoms = Vec::new();
        let mut grid = Vec::new();
        for _ in 0..n {
            let w = rng.random_range(1..=10) as f64;
            match rng.random_range(0..6) {
                0 => atoms.push((Gap::Infinite, w)),
                1 => {
                    atoms.push((Gap::Finite(0.0), w));
                    grid.push((0u32, w));
                }
                _ => {
                    let k = rng.random_range(1..=10_000u32);
                    atoms.push((Gap::Finite(k as f64 * 1e-4), w));
                    grid.push((k, w));
                }
            }
        }
        let p = rng.random::<f64>() * 0.99;
        let got = trimmed_gap_of_atoms(&atoms, p);
        let want = grid_trimmed_gap(&grid, p, 10_000).map(|k| k as f64 * 1e-4);
        if got != want {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("200 multisets, {mismatches} mismatches against a 1e-4 grid"),
    )
}

fn criterion_8(runs: &Runs) -> Outcome {
    let h = BENCH_HORIZON as f64;
    let mut n = 0;
    let mut bad = 0;
    for (k, t) in runs.all() {
        n += 1;
        if t.final_regret() > k as f64 * h || t.rows.iter().any(|r| r.cum_regret > r.episode as f64 * h) {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{n} runs over 6 learners, {bad} above K*H"))
}

fn criterion_9() -> Outcome {
    let mut rng = stream(9, Purpose::Instance);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let dims = Dims::new(
            rng.random_range(1..=3),
            rng.random_range(1..=3),
            rng.random_range(1..=3),
        );
        let (model, _) = random_instance(dims, 1, 1.0, &mut rng).unwrap();
        let mut per = Vec::new();
        for _ in 0..dims.num_hs() {
            let mut entry = Vec::new();
            for _ in 0..rng.random_range(1..=3) {
                let mask: Vec<bool> = loop {
                    let m: Vec<bool> = (0..dims.actions).map(|_| rng.random_bool(0.6)).collect();
                    if m.iter().any(|&x| x) {
                        break m;
                    }
                };
                entry.push((ActionSet::from_mask(&mask).unwrap(), rng.random_range(1..=5) as f64));
            }
            let total: f64 = entry.iter().map(|(_, w)| w).sum();
            entry.iter_mut().for_each(|(_, w)| *w /= total);
            per.push(entry);
        }
        let sets = SetDistributions::new(dims, per).unwrap();
        let bench = prestage_benchmark(&model, &sets).unwrap();
        for _ in 0..100 {
            let salt: u64 = rng.random();
            let policy = move |h: usize, s: usize, set: &ActionSet| {
                let acts = set.actions();
                let key = acts
                    .iter()
                    .fold(salt ^ ((h as u64) << 48) ^ ((s as u64) << 32), |x, &a| {
                        x.rotate_left(7) ^ a as u64
                    });
                acts[(key.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 40) as usize % acts.len()]
            };
            let v = prestage_policy_value(&model, &sets, &policy).unwrap();
            for h in 0..dims.horizon {
                for s in 0..dims.states {
                    worst = worst.max(v[h * dims.states + s] - bench.v(h, s));
                }
            }
        }
    }
    outcome(
        worst <= 1e-12,
        format!("100 instances x 100 policies, max V^pi - V* = {worst:.1e}"),
    )
}

fn criterion_10() -> Outcome {
    let (model, dist) = appendix_e_instance(0.5).unwrap();
    let k = BENCH_EPISODES;
    let opts = RunOptions {
        pac_every: Some(k / 10),
        ..RunOptions::default()
    };
    let exp = run_experiment(
        &model,
        &ContextSchedule::iid(dist),
        &LearnerConfig::new(LearnerKind::Mvp),
        k,
        &SEEDS,
        &opts,
    )
    .unwrap();
    let points = exp.traces[0].pac.len();
    let mean: Vec<f64> = (0..points)
        .map(|i| exp.traces.iter().map(|t| t.pac[i].suboptimality).sum::<f64>() / SEEDS.len() as f64)
        .collect();
    let index: Vec<f64> = (0..points).map(|i| i as f64).collect();
    let rho = spearman(&index, &mean);
    let (first, last) = (mean[0], mean[points - 1]);
    let pass = points == 10 && rho.is_some_and(|r| r < 0.0) && last < first / 3.0;
    let rho_txt = rho.map_or("undefined (constant series)".to_string(), |r| format!("{r:.3}"));
    outcome(
        pass,
        format!("{points} snapshots, spearman {rho_txt}, first {first:.3e}, final {last:.3e}"),
    )
}

fn artifacts(exp: &Experiment) -> Vec<u8> {
    let mut buf = Vec::new();
    for t in &exp.traces {
        write_trace_csv(&mut buf, t, Some("0")).unwrap();
        write_diagnostics_csv(&mut buf, t, Some("0")).unwrap();
    }
    write_aggregate_csv(&mut buf, &exp.aggregate, Some("0")).unwrap();
    buf
}

fn criterion_11() -> Outcome {
    let mut rng = stream(11, Purpose::Instance);
    let (model, dist) = random_instance(Dims::new(4, 3, 5), 3, 0.6, &mut rng).unwrap();
    let sched = ContextSchedule::iid(dist);
    let mut identical = true;
    for kind in [
        LearnerKind::Mvp,
        LearnerKind::PrestageMvp,
        LearnerKind::Ucbvi,
        LearnerKind::Random,
    ] {
        let learner = LearnerConfig::new(kind);
        let a = run_experiment(&model, &sched, &learner, 1000, &SEEDS, &RunOptions::default()).unwrap();
        let b = run_experiment(&model, &sched, &learner, 1000, &SEEDS, &RunOptions::default()).unwrap();
        identical &= artifacts(&a) == artifacts(&b);
    }
    outcome(
        identical,
        "4 learners x 5 seeds, trace/diagnostic/aggregate CSV bytes compared",
    )
}

fn main() {
    // `cargo test` passes filter flags through; this target runs everything.
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "oracle correctness", criterion_1()));
    let t0 = Instant::now();
    let runs = Runs::collect();
    let secs = t0.elapsed().as_secs_f64();
    results.push((2, "learner ordering", criterion_2(&runs, secs)));
    results.push((3, "sublinearity", criterion_3(&runs)));
    results.push((4, "optimism frequency", criterion_4(&runs)));
    results.push((5, "doubling schedule", criterion_5(&runs)));
    results.push((6, "bonus-function properties", criterion_6()));
    results.push((7, "trimmed-gap oracle", criterion_7()));
    results.push((8, "regret ceiling", criterion_8(&runs)));
    results.push((9, "pre-stage dominance", criterion_9()));
    results.push((10, "PAC trend", criterion_10()));
    results.push((11, "determinism", criterion_11()));

    let mut failed = 0;
    for (n, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {tag} {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
