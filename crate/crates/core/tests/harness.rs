use shiftvit_core::harness::{
    self, prove, replay, Counterexample, Property, ProveConfig, ReplayFile, Report, SuiteConfig, SuiteName,
};
use shiftvit_core::pipeline::{ModelConfig, Switch, Switches};
use shiftvit_core::Error;

fn small_run(suites: Vec<SuiteName>, disable: Vec<Switch>) -> Report {
    let cfg = SuiteConfig::new(ModelConfig::rank1_default(), 20, 5).with_suites(suites).with_disabled(disable);
    harness::run(&cfg).unwrap()
}

#[test]
fn reports_are_byte_identical() {
    let a = small_run(Vec::new(), Vec::new());
    let b = small_run(Vec::new(), Vec::new());
    assert_eq!(a.to_json(), b.to_json());
    assert!(a.passed);
    let names: Vec<SuiteName> = a.suites.iter().map(|r| r.suite).collect();
    for s in SuiteName::ALL.into_iter().filter(|&s| s != SuiteName::Metrics) {
        assert!(names.contains(&s), "{s} missing");
    }
    assert!(a.metrics.iter().any(|m| m.suite == SuiteName::Metrics));
}

#[test]
fn report_json_round_trips() {
    let r = small_run(vec![SuiteName::Apmerge, SuiteName::Ablation], vec![Switch::AWsa]);
    let back: Report = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.to_json(), r.to_json());
}

#[test]
fn every_counterexample_replays_exactly() {
    let r = small_run(vec![SuiteName::Apmerge, SuiteName::Rpe, SuiteName::Ablation], Vec::new());
    assert!(r.passed);
    assert!(r.counterexamples.len() >= 6);
    for cx in &r.counterexamples {
        let json = serde_json::to_string(cx).unwrap();
        let parsed: Counterexample = serde_json::from_str(&json).unwrap();
        let o = replay(&parsed).unwrap();
        assert_eq!(o.divergence.to_bits(), cx.divergence.to_bits(), "{:?}", cx.property);
        assert!(o.still_fails());
    }
}

#[test]
fn broken_configuration_fails_and_replays() {
    let r = small_run(vec![SuiteName::End2end], vec![Switch::APmerge]);
    assert!(!r.passed);
    let inv = r.result(Property::End2endInvariance).unwrap();
    assert!(inv.failures > 0);
    let cx = r.counterexamples.iter().find(|c| c.property == Property::End2endInvariance).unwrap();
    assert!(!cx.model.as_ref().unwrap().switches.a_pmerge);
    let o = replay(cx).unwrap();
    assert!((o.divergence - cx.divergence).abs() <= 1e-12);
    assert!(o.still_fails());

    // restoring the switch makes the same trial pass
    let mut fixed = cx.clone();
    fixed.model.as_mut().unwrap().switches = Switches::all_on();
    let o = replay(&fixed).unwrap();
    assert!(!o.still_fails());
}

#[test]
fn tampered_counterexample_is_rejected() {
    let r = small_run(vec![SuiteName::Apmerge], Vec::new());
    let mut cx = r.counterexamples[0].clone();
    assert!(cx.sizes.is_some());
    let mut data = cx.input.data().to_vec();
    data[0] += 1.0;
    cx.input = shiftvit_core::GridSignal::new(cx.input.shape().to_vec(), cx.input.channels(), data).unwrap();
    assert!(matches!(replay(&cx), Err(Error::Trace(_))));
    cx.shifts.clear();
    assert!(replay(&cx).is_err());
}

#[test]
fn replay_file_accepts_reports_and_counterexamples() {
    let r = small_run(vec![SuiteName::Rpe], Vec::new());
    let file: ReplayFile = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(file.counterexamples().len(), r.counterexamples.len());
    let single = serde_json::to_string(&r.counterexamples[0]).unwrap();
    let file: ReplayFile = serde_json::from_str(&single).unwrap();
    assert_eq!(file.counterexamples().len(), 1);
    assert!(serde_json::from_str::<ReplayFile>("{\"suite\":\"rpe\"}").is_err());
}

#[test]
fn prove_small_sizes() {
    for (suite, n, l) in [
        (SuiteName::Lemma1, 8, 2),
        (SuiteName::Claim1, 8, 2),
        (SuiteName::Claim2, 8, 4),
        (SuiteName::Claim3, 8, 2),
        (SuiteName::Apmerge, 8, 2),
        (SuiteName::Rpe, 6, 1),
    ] {
        let cfg = ProveConfig { inputs: 10, ..ProveConfig::new(suite, n, l) };
        let r = prove(&cfg).unwrap();
        assert!(r.passed, "{suite}");
        let first = &r.suites[0];
        let per_input = match suite {
            SuiteName::Lemma1 => l,
            SuiteName::Claim3 => 1,
            _ => n,
        };
        assert_eq!(first.trials, 10 * per_input, "{suite}");
    }
}

#[test]
fn prove_rank2() {
    for suite in [SuiteName::Lemma1, SuiteName::Claim1, SuiteName::Claim2, SuiteName::Apmerge, SuiteName::Rpe] {
        let cfg = ProveConfig { rank: 2, inputs: 3, ..ProveConfig::new(suite, 4, 2) };
        assert!(prove(&cfg).unwrap().passed, "{suite}");
    }
}

#[test]
fn rank2_suites_pass() {
    let cfg = SuiteConfig::new(ModelConfig::rank2_default(), 10, 1).with_suites(vec![
        SuiteName::Lemma1,
        SuiteName::Claim1,
        SuiteName::Claim2,
        SuiteName::Claim3,
        SuiteName::Apmerge,
        SuiteName::Rpe,
    ]);
    let r = harness::run(&cfg).unwrap();
    assert!(r.passed);
}

#[test]
fn model_config_files_load() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    assert_eq!(harness::load_model_config(root.join("rank1.json")).unwrap(), ModelConfig::rank1_default());
    assert_eq!(harness::load_model_config(root.join("rank2.json")).unwrap(), ModelConfig::rank2_default());
    assert!(matches!(harness::load_model_config(root.join("missing.json")), Err(Error::Config(_))));
}
