use duopoly::agents::{build_agent, Agent, AgentConfigs, Algorithm, FixedAction, Transition};
use duopoly::env::{Action, EnvState};
use duopoly::experiment::{
    run_batch, run_batch_with, run_single, simulate, stream_rng, ExperimentConfig, Retention,
    Stream,
};
use duopoly::market::{MarketModel, MarketVariant};
use duopoly::metrics::{classify, window_metrics, Label, WINDOW};
use duopoly::report::{self, read_trace, write_trace, Heatmap, Metadata, Scale, Summary};

fn standard_config(steps: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(MarketModel::standard(), Algorithm::Tql);
    c.steps = Some(steps);
    c
}

fn fixed(a0: usize, a1: usize) -> [Box<dyn Agent>; 2] {
    [
        Box::new(FixedAction::new(Action::Index(a0))),
        Box::new(FixedAction::new(Action::Index(a1))),
    ]
}

#[test]
fn emitted_trace_reclassifies_bit_exactly() {
    let mut config = standard_config(30_000);
    config.seeds = vec![11, 12];
    let dir = tempfile::tempdir().unwrap();
    for r in run_batch(&config, 2).unwrap() {
        let path = dir.path().join(format!("{}.csv", r.seed));
        let trace = r.trace.as_ref().unwrap();
        write_trace(&path, &trace.records, &Metadata::new(&r.config_hash)).unwrap();
        let (meta, back) = read_trace(&path).unwrap();
        assert_eq!(meta.unwrap().config_hash, r.config_hash);
        assert_eq!(&back, &trace.records);
        let m = window_metrics(&back, &r.equilibrium).unwrap();
        assert_eq!(Some(m.classification), r.classification);
        assert_eq!(Some(m.agents), r.agents);
        let prices: Vec<[f64; 2]> = back.iter().map(|s| s.prices).collect();
        assert_eq!(
            Some(classify(&prices, &r.equilibrium).unwrap()),
            r.classification
        );
    }
}

#[test]
fn report_directory_reproduces_stored_classifications() {
    let mut config = standard_config(20_000);
    config.seeds = vec![0, 1, 2];
    let results = run_batch(&config, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = report::write_batch(dir.path(), &config, &results).unwrap();
    let again = report::reanalyze(dir.path()).unwrap();
    assert!(again.all_match());
    assert_eq!(again.runs.len(), 3);
    assert_eq!(again.summary.counts, summary.counts);
    assert_eq!(again.summary.rpdi, summary.rpdi);
    assert_eq!(
        Summary::read(&dir.path().join(report::SUMMARY_FILE)).unwrap(),
        summary
    );
    let linear = Heatmap::read_values(&dir.path().join(report::HEATMAP_LINEAR_FILE)).unwrap();
    let mass: f64 = linear.iter().flatten().sum();
    assert!((mass - 1.0).abs() < 1e-9);
}

#[test]
fn tampered_trace_is_detected() {
    let mut config = standard_config(12_000);
    config.seeds = vec![4];
    let results = run_batch(&config, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    report::write_batch(dir.path(), &config, &results).unwrap();
    let path = report::trace_path(dir.path(), 4);
    let (meta, mut records) = read_trace(&path).unwrap();
    for r in records.iter_mut().rev().take(WINDOW) {
        r.prices = [0.5, 0.5];
    }
    write_trace(&path, &records, &meta.unwrap()).unwrap();
    let again = report::reanalyze(dir.path()).unwrap();
    assert!(!again.all_match());
}

#[test]
fn stub_summaries_count_outcomes() {
    let config = standard_config(WINDOW as u64);
    let nash = |_: u64| Ok(fixed(0, 0));
    let monopoly = |_: u64| Ok(fixed(7, 7));
    let all_nash = run_batch_with(&config_with_seeds(&config, 3), 2, &nash).unwrap();
    let s = Summary::from_results(&all_nash).unwrap();
    assert_eq!(s.percentages[&Label::Competition], 100.0);
    assert_eq!(s.rpdi.pooled.unwrap().mean, 0.0);

    let all_mono = run_batch_with(&config_with_seeds(&config, 3), 2, &monopoly).unwrap();
    let s = Summary::from_results(&all_mono).unwrap();
    assert_eq!(s.percentages[&Label::Collusion], 100.0);
    assert_eq!(s.rpdi.pooled.unwrap().mean, 1.0);
    assert_eq!(s.delta.pooled.unwrap().mean, 1.0);

    let mixed = |seed: u64| Ok(if seed == 0 { fixed(0, 0) } else { fixed(7, 7) });
    let both = run_batch_with(&config_with_seeds(&config, 2), 2, &mixed).unwrap();
    let s = Summary::from_results(&both).unwrap();
    assert_eq!(s.percentages[&Label::Competition], 50.0);
    assert_eq!(s.percentages[&Label::Collusion], 50.0);
    assert_eq!(s.percentages[&Label::Dispersion], 0.0);
}

fn config_with_seeds(c: &ExperimentConfig, n: u64) -> ExperimentConfig {
    let mut c = c.clone();
    c.seeds = (0..n).collect();
    c
}

#[test]
fn pooled_heatmap_from_stub_runs() {
    let config = config_with_seeds(&standard_config(WINDOW as u64), 2);
    let mixed = |seed: u64| Ok(if seed == 0 { fixed(0, 0) } else { fixed(7, 7) });
    let results = run_batch_with(&config, 2, &mixed).unwrap();
    let h = report::batch_heatmap(&config, &results).unwrap();
    let r = h.ratios();
    assert_eq!(r[0], 0.5);
    assert_eq!(r[7 * 15 + 7], 0.5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.csv");
    h.write(&path, Scale::Log, &Metadata::new(config.hash()))
        .unwrap();
    let v = Heatmap::read_values(&path).unwrap();
    assert!((v[0][0] - (0.5f64 + 1e-6).log10()).abs() < 1e-15);
    assert_eq!(v[3][3], -6.0);
}

#[test]
fn runs_repeat_and_ignore_parallelism() {
    let mut config = ExperimentConfig::new(MarketModel::logit(), Algorithm::Tql);
    config.steps = Some(15_000);
    config.seeds = (0..8).collect();
    let one = run_batch(&config, 1).unwrap();
    let eight = run_batch(&config, 8).unwrap();
    let mut shuffled = config.clone();
    shuffled.seeds.reverse();
    let reversed = run_batch(&shuffled, 3).unwrap();
    for (i, r) in one.iter().enumerate() {
        assert_eq!(r.trace_digest, eight[i].trace_digest);
        assert_eq!(r.trace_digest, reversed[7 - i].trace_digest);
        assert_eq!(
            r.trace_digest,
            run_single(&config, r.seed).unwrap().trace_digest
        );
    }
    let distinct: std::collections::HashSet<_> = one.iter().map(|r| &r.trace_digest).collect();
    assert_eq!(distinct.len(), 8);
}

#[test]
fn self_play_agents_share_no_state() {
    let config = standard_config(20_000);
    let space = config.environment().unwrap().space().clone();
    for alg in [Algorithm::Tql, Algorithm::Dqn] {
        let mut c = config.clone();
        c.algorithm = alg;
        let mut agents: [Box<dyn Agent>; 2] = [Stream::Agent0Init, Stream::Agent1Init]
            .map(|s| build_agent(alg, &c.agents, &space, 20_000, &mut stream_rng(9, s)).unwrap());
        let before = [
            agents[0].checkpoint().digest(),
            agents[1].checkpoint().digest(),
        ];
        if alg == Algorithm::Dqn {
            assert_ne!(before[0], before[1], "network initializations alias");
        }
        let state = EnvState {
            prev_prices: [0.0, 0.0],
        };
        let tr = Transition {
            t: 0,
            state,
            action: Action::Index(3),
            price: space.price_grid().unwrap()[3],
            reward: 1.0,
            next_state: state,
        };
        agents[0]
            .observe(&tr, &mut stream_rng(9, Stream::Agent0))
            .unwrap();
        if alg == Algorithm::Tql {
            assert_ne!(agents[0].checkpoint().digest(), before[0]);
        }
        assert_eq!(agents[1].checkpoint().digest(), before[1]);
    }

    let mut env = config.environment().unwrap();
    let space = env.space().clone();
    let mut agents: [Box<dyn Agent>; 2] = [Stream::Agent0Init, Stream::Agent1Init].map(|s| {
        build_agent(
            Algorithm::Tql,
            &AgentConfigs::default(),
            &space,
            20_000,
            &mut stream_rng(3, s),
        )
        .unwrap()
    });
    let (trace, failure) = simulate(&mut env, &mut agents, 3, 20_000, Retention::Full);
    assert!(failure.is_none());
    assert_eq!(trace.records.len(), 20_000);
    assert_ne!(
        agents[0].checkpoint().digest(),
        agents[1].checkpoint().digest()
    );
}

#[test]
fn config_files_round_trip_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    let mut c = ExperimentConfig::new(MarketVariant::Edgeworth.default_model(), Algorithm::Ppoc);
    c.set("ppo.gamma=0.9").unwrap();
    c.set("seeds=[4,5]").unwrap();
    c.save(&path).unwrap();
    let back = ExperimentConfig::load(&path).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.hash(), c.hash());
    assert_eq!(back.agents.ppo.gamma, 0.9);
    assert!(c.clone().set("ppo.nonexistent=1").is_err());
}
