use maskrl::instance_file::{export_instance, load_instance, Instance, InstanceFile};
use maskrl::instances::{appendix_e_instance, random_instance, SINK};
use maskrl::model::{validate_model, Defect};
use maskrl::prestage::SetDistributions;
use maskrl::report::{aggregate_from_files, read_aggregate_csv, read_trace_csv, write_aggregate_csv, write_trace_csv};
use maskrl::rng::{stream, Purpose};
use maskrl::sim::{run_experiment, ContextSchedule, LearnerConfig, LearnerKind, RunOptions};
use maskrl::{Dims, MdpModel};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn instance_files_round_trip(
        seed in 0u64..10_000,
        s in 1usize..5,
        a in 1usize..4,
        h in 1usize..4,
        l in 1usize..4,
        with_sets in any::<bool>(),
    ) {
        let mut rng = stream(seed, Purpose::Instance);
        let (model, dist) = random_instance(Dims::new(s, a, h), l, 0.6, &mut rng).unwrap();
        let set_distributions = with_sets.then(|| SetDistributions::from_contexts(&dist).unwrap());
        let inst = Instance { model, dist, set_distributions };
        let text = export_instance(&inst, None).unwrap();
        let back = InstanceFile::parse(&text).unwrap().build().unwrap();
        prop_assert_eq!(&back, &inst);
        // exporting twice gives the same bytes
        prop_assert_eq!(export_instance(&back, None).unwrap(), text);
    }
}

#[test]
fn bench_round_trips_through_disk_with_sink() {
    let (model, dist) = appendix_e_instance(0.8).unwrap();
    let inst = Instance {
        model,
        dist,
        set_distributions: None,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.toml");
    std::fs::write(&path, export_instance(&inst, Some(SINK)).unwrap()).unwrap();
    assert_eq!(load_instance(&path).unwrap(), inst);
}

#[derive(Debug, Clone)]
enum Perturb {
    Shift(f64),
    Negate,
    Reward(f64),
}

fn perturb() -> impl Strategy<Value = Perturb> {
    prop_oneof![
        prop::sample::select(vec![1e-13, 1e-11, -1e-11, 5e-10, 2e-9, 1e-6, 0.1, -0.05]).prop_map(Perturb::Shift),
        Just(Perturb::Negate),
        prop::sample::select(vec![-0.5, 0.0, 0.5, 1.0, 1.0 + 1e-9, 2.0]).prop_map(Perturb::Reward),
    ]
}

proptest! {
    #[test]
    fn validation_flags_exactly_the_injected_defect(seed in 0u64..10_000, idx in 0usize..1000, p in perturb()) {
        let dims = Dims::new(3, 2, 2);
        let mut rng = stream(seed, Purpose::Instance);
        let (model, _) = random_instance(dims, 1, 1.0, &mut rng).unwrap();
        let mut t = model.transitions().to_vec();
        let mut r = model.rewards().to_vec();
        let row = idx % dims.num_hsa();
        let col = idx % dims.states;
        let expect_valid = match p {
            Perturb::Shift(d) => {
                t[row * dims.states + col] += d;
                let sum: f64 = t[row * dims.states..(row + 1) * dims.states].iter().sum();
                (sum - 1.0).abs() <= 1e-9 && t[row * dims.states + col] >= 0.0
            }
            Perturb::Negate => {
                t[row * dims.states + col] = -t[row * dims.states + col];
                false
            }
            Perturb::Reward(v) => {
                r[row] = v;
                (0.0..=1.0).contains(&v)
            }
        };
        let broken = MdpModel::new(dims, t, r).unwrap();
        let report = validate_model(&broken);
        prop_assert_eq!(report.is_valid(), expect_valid, "{:?}", report.defects);
        for d in &report.defects {
            let hit = match *d {
                Defect::RowSum { h, s, a, .. } | Defect::NegativeProbability { h, s, a, .. } | Defect::RewardOutOfRange { h, s, a, .. } => dims.hsa(h, s, a),
                _ => usize::MAX,
            };
            prop_assert_eq!(hit, row);
        }
    }
}

#[test]
fn trace_and_aggregate_csv_round_trip() {
    let (model, dist) = appendix_e_instance(0.5).unwrap();
    let mut rng = stream(2, Purpose::Instance);
    let (rm, rd) = random_instance(Dims::new(3, 2, 3), 2, 0.7, &mut rng).unwrap();
    for (model, dist) in [(model, dist), (rm, rd)] {
        let exp = run_experiment(
            &model,
            &ContextSchedule::iid(dist),
            &LearnerConfig::new(LearnerKind::Random),
            150,
            &[4, 5, 6],
            &RunOptions::default(),
        )
        .unwrap();
        let mut files = Vec::new();
        for t in &exp.traces {
            let mut buf = Vec::new();
            write_trace_csv(&mut buf, t, Some("deadbeef")).unwrap();
            assert!(buf.starts_with(b"# metadata-sha256: deadbeef\n"));
            let back = read_trace_csv(buf.as_slice()).unwrap();
            assert_eq!(back.seed, t.seed);
            for (x, y) in back.rows.iter().zip(&t.rows) {
                assert_eq!(
                    (x.episode, &x.context_id, x.inst_regret, x.cum_regret, x.ret),
                    (y.episode, &y.context_id, y.inst_regret, y.cum_regret, y.ret)
                );
            }
            files.push(back);
        }
        assert_eq!(aggregate_from_files(&files), exp.aggregate);
        let mut buf = Vec::new();
        write_aggregate_csv(&mut buf, &exp.aggregate, None).unwrap();
        assert_eq!(read_aggregate_csv(buf.as_slice()).unwrap(), exp.aggregate);
    }
}
