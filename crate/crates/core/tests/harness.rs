use bandit_lab::harness::config::{default_config, default_instance_config, ExperimentConfig};
use bandit_lab::harness::emit::write_csv;
use bandit_lab::harness::{emit_json, estimate_bayesian_regret, load_json, PolicyEntry};
use bandit_lab::policy::PolicySpec;
use proptest::prelude::*;

fn small_config(seed: u64, replicates: usize, horizon: usize) -> ExperimentConfig {
    let mut config = default_config();
    config.seed = seed;
    config.replicates = replicates;
    config.instance.horizon = horizon;
    config.policies = vec![
        PolicyEntry::new(PolicySpec::BatchBayesGreedy { batch_size: Some(5) }),
        PolicyEntry::new(PolicySpec::FreqWithBayesPrediction { batch_size: Some(3) }),
        PolicyEntry::new(PolicySpec::Linucb { l: None, s: None }),
        PolicyEntry::new(PolicySpec::Random),
    ];
    config
}

fn csv_bytes(config: &ExperimentConfig) -> Vec<u8> {
    let result = estimate_bayesian_regret(config).unwrap();
    let mut buf = Vec::new();
    write_csv(result.all_traces(), &mut buf).unwrap();
    buf
}

#[test]
fn runs_are_deterministic() {
    let mut config = small_config(99, 4, 60);
    config.outputs.diversity = true;
    config.outputs.estimate_gap = true;
    let a = estimate_bayesian_regret(&config).unwrap();
    let b = estimate_bayesian_regret(&config).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.traces, b.traces);
    assert_eq!(csv_bytes(&config), csv_bytes(&config));
}

#[test]
fn doubling_replicates_keeps_the_prefix() {
    let config = small_config(3, 3, 40);
    let mut doubled = config.clone();
    doubled.replicates = 6;
    let a = estimate_bayesian_regret(&config).unwrap();
    let b = estimate_bayesian_regret(&doubled).unwrap();
    for (pa, pb) in a.traces.iter().zip(&b.traces) {
        assert_eq!(pa[..], pb[..3]);
    }
}

#[test]
fn identical_entries_give_identical_curves() {
    let mut config = small_config(17, 5, 80);
    let mut twin = PolicyEntry::new(PolicySpec::BatchBayesGreedy { batch_size: Some(5) });
    twin.label = Some("twin".into());
    config.policies.push(twin);
    let result = estimate_bayesian_regret(&config).unwrap();
    let first = &result.report.policies[0];
    let last = result.report.policies.last().unwrap();
    assert_eq!(last.label, "twin");
    assert_eq!(first.mean_cum_regret, last.mean_cum_regret);
    assert_eq!(first.stderr_cum_regret, last.stderr_cum_regret);
}

#[test]
fn environment_is_shared_across_policies() {
    let result = estimate_bayesian_regret(&small_config(23, 5, 50)).unwrap();
    for m in 0..5 {
        let digests: Vec<u64> = result.traces.iter().map(|p| p[m].env_digest).collect();
        assert!(digests.windows(2).all(|w| w[0] == w[1]));
        let gaps: Vec<&Vec<f64>> = result.traces.iter().map(|p| &p[m].gaps).collect();
        assert!(gaps.windows(2).all(|w| w[0] == w[1]));
    }
}

#[test]
fn traces_are_well_formed() {
    let config = small_config(5, 3, 70);
    let result = estimate_bayesian_regret(&config).unwrap();
    for trace in result.all_traces() {
        assert_eq!(trace.horizon(), 70);
        let mut sum = 0.0;
        for (r, c) in trace.inst_regret.iter().zip(&trace.cum_regret) {
            assert!(*r >= -1e-9);
            sum += r;
            assert!((sum - c).abs() <= 1e-9);
        }
        assert!(trace.cum_regret.windows(2).all(|w| w[1] >= w[0]));
    }
    for p in &result.report.policies {
        assert_eq!(p.mean_cum_regret.len(), 70);
        assert!(p.stderr_cum_regret.iter().all(|s| *s >= 0.0));
    }
    let fp = result.report.policy("freq-with-bayes-prediction").unwrap();
    assert_eq!(fp.mean_cum_pred_regret.as_ref().unwrap().len(), 70);
    assert!(result.report.policy("random").unwrap().mean_cum_pred_regret.is_none());

    let csv = String::from_utf8(csv_bytes(&config)).unwrap();
    assert_eq!(csv.lines().count(), 1 + 70 * 3 * 4);
}

#[test]
fn json_report_round_trips_through_a_file() {
    let mut config = small_config(8, 2, 30);
    config.outputs.diversity = true;
    let result = estimate_bayesian_regret(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    emit_json(&result.report, &path).unwrap();
    assert_eq!(load_json(&path).unwrap(), result.report);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn json_round_trip(seed in any::<u64>(), replicates in 1usize..4, horizon in 3usize..25, y in 1usize..6) {
        let mut config = small_config(seed, replicates, horizon);
        config.policies[0] = PolicyEntry::new(PolicySpec::BatchFreqGreedy { batch_size: Some(y) });
        config.outputs.gammas = vec![0.0, 0.03, 1.0];
        let report = estimate_bayesian_regret(&config).unwrap().report;
        let text = serde_json::to_string(&report).unwrap();
        let back: bandit_lab::harness::RegretReport = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, report);
    }
}

#[test]
fn config_errors_are_reported() {
    let mut config = small_config(1, 2, 10);
    config.replicates = 0;
    assert!(estimate_bayesian_regret(&config).unwrap_err().is_config_error());

    let mut config = small_config(1, 2, 10);
    config.policies[0] = PolicyEntry::new(PolicySpec::BatchBayesGreedy { batch_size: Some(0) });
    assert!(estimate_bayesian_regret(&config).unwrap_err().is_config_error());

    let mut config = small_config(1, 2, 10);
    config.policies = vec![PolicyEntry::new(PolicySpec::Linucb { l: Some(0.5), s: None })];
    assert!(estimate_bayesian_regret(&config).unwrap_err().is_config_error());

    let text = toml::to_string(&small_config(1, 2, 10))
        .unwrap()
        .replace("linucb", "thompson");
    assert!(ExperimentConfig::from_toml_str(&text).unwrap_err().is_config_error());
}

#[test]
fn means_file_resolves_next_to_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("means.txt"), "# unavailable 0.25\n1 0\n0 1\n-0.6 0.8\n").unwrap();
    let mut config = small_config(2, 2, 20);
    config.instance = default_instance_config();
    config.instance.k = 3;
    config.instance.horizon = 20;
    config.instance.contexts.kind = bandit_lab::model::MeanKind::FromFile;
    config.instance.contexts.path = Some("means.txt".into());
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, toml::to_string(&config).unwrap()).unwrap();
    let loaded = ExperimentConfig::load(&path).unwrap();
    let inst = loaded.build_instance().unwrap();
    assert_eq!(inst.k, 3);
    assert_eq!(inst.mean_dist.availability(), &[0.75; 3]);
    estimate_bayesian_regret(&loaded).unwrap();
}

#[test]
fn bayes_greedy_no_worse_than_freq_greedy() {
    // default instance, automatic batch size, 200 replicates
    let mut config = default_config();
    config.policies = vec![
        PolicyEntry::new(PolicySpec::BatchBayesGreedy { batch_size: None }),
        PolicyEntry::new(PolicySpec::BatchFreqGreedy { batch_size: None }),
    ];
    let report = estimate_bayesian_regret(&config).unwrap().report;
    let (bbg, bfg) = (&report.policies[0], &report.policies[1]);
    assert!(
        bbg.final_regret() <= bfg.final_regret() + 2.0 * bfg.final_stderr(),
        "BBG {} vs BFG {} +- {}",
        bbg.final_regret(),
        bfg.final_regret(),
        bfg.final_stderr()
    );
}
