//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are always printed; exits non-zero on any FAIL.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use shiftvit_core::harness::{self, Property, Report, SuiteConfig, SuiteName, SuiteResult};
use shiftvit_core::metrics::MetricKind;
use shiftvit_core::pipeline::{ModelConfig, StageConfig, Switch};

const SEED: u64 = 2024;

struct Outcome {
    ok: bool,
    detail: String,
}

fn check(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

fn run(model: ModelConfig, trials: usize, suite: SuiteName) -> Report {
    let cfg = SuiteConfig::new(model, trials, SEED).with_suites(vec![suite]);
    harness::run(&cfg).expect("suite runs")
}

fn result(report: &Report, property: Property) -> &SuiteResult {
    report.result(property).expect("property present")
}

fn describe(r: &SuiteResult) -> String {
    format!(
        "trials={} passes={} failures={} ties={} max_divergence={:e}",
        r.trials, r.passes, r.failures, r.tie_count, r.max_divergence
    )
}

/// 64 samples, patch 4, one stage with window 4 over the 16-token grid.
fn sixty_four() -> ModelConfig {
    ModelConfig {
        input_shape: vec![64],
        stages: vec![StageConfig { window: 4, merge: 2, attn_dim: 8, out_dim: 16 }],
        ..ModelConfig::rank1_default()
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    o.detail = format!("{} time={took:.2?}", o.detail);
    if let Some(limit) = limit {
        if took > limit {
            o.ok = false;
            o.detail = format!("{} exceeds {limit:?}", o.detail);
        }
    }
    o
}

fn lemma1() -> Outcome {
    // 13 (N, L) pairs, 100 inputs each, every offset m
    let report = run(ModelConfig::rank1_default(), 1300, SuiteName::Lemma1);
    let r = result(&report, Property::Lemma1);
    check(r.passed && r.failures == 0 && r.max_divergence == 0.0 && r.trials >= 1300, describe(r))
}

fn claim1() -> Outcome {
    let report = run(sixty_four(), 1000, SuiteName::Claim1);
    let r = result(&report, Property::TokenEquivariance);
    let ok = r.trials == 1000 && r.failures == 0 && r.passes + r.tie_count == 1000 && r.max_divergence == 0.0;
    check(ok, describe(r))
}

fn claim2() -> Outcome {
    let report = run(sixty_four(), 1000, SuiteName::Claim2);
    let r = result(&report, Property::WindowEquivariance);
    let ok = r.trials == 1000 && r.failures == 0 && r.max_divergence <= 1e-12;
    check(ok, format!("grid=16 window=4 {}", describe(r)))
}

fn claim3() -> Outcome {
    let report = run(ModelConfig::rank1_default(), 500, SuiteName::Claim3);
    let r = result(&report, Property::MergeConvEquivalence);
    check(r.trials == 500 && r.failures == 0 && r.max_divergence <= 1e-12, describe(r))
}

fn end2end(report: &Report) -> (Outcome, Outcome) {
    let inv = result(report, Property::End2endInvariance);
    let metric = |kind: MetricKind| {
        report
            .metrics
            .iter()
            .find(|m| m.suite == SuiteName::End2end && m.report.metric == kind)
            .map(|m| &m.report)
            .expect("end2end metric")
    };
    let (c_cons, mascc) = (metric(MetricKind::CCons), metric(MetricKind::Mascc));
    let equi = result(report, Property::End2endEquivariance);
    let invariance = check(
        inv.trials >= 1000
            && inv.failures == 0
            && inv.tie_count == 0
            && inv.max_divergence <= 1e-9
            && c_cons.aggregate == 1.0,
        format!("seeds=5 c_cons={} {}", c_cons.aggregate, describe(inv)),
    );
    let every_position = mascc.trials.iter().all(|t| t.agreement == 1.0);
    let equivariance = check(
        equi.trials >= 500
            && equi.failures == 0
            && equi.tie_count == 0
            && equi.max_divergence <= 1e-9
            && mascc.aggregate == 1.0
            && every_position,
        format!("mascc={} {}", mascc.aggregate, describe(equi)),
    );
    (invariance, equivariance)
}

fn ablation() -> Outcome {
    let report = run(ModelConfig::rank1_default(), 1000, SuiteName::Ablation);
    let mut ok = true;
    let mut parts = Vec::new();
    for sw in Switch::ALL {
        let r = report.suites.iter().find(|r| r.ablated == Some(sw)).expect("every switch ablated");
        let found = report
            .counterexamples
            .iter()
            .any(|c| c.property == Property::AblationBreaks && c.model.as_ref().is_some_and(|m| !m.switches.get(sw)));
        ok &= r.passed && r.trials <= 1000 && found;
        parts.push(format!("{sw}: breaks={}/{} max={:.3e}", r.passes, r.trials, r.max_divergence));
    }
    check(ok, parts.join(", "))
}

fn rpe() -> Outcome {
    let report = run(ModelConfig::rank1_default(), 500, SuiteName::Rpe);
    let adaptive = result(&report, Property::AdaptiveRpeCommutes);
    let original = result(&report, Property::OriginalRpeBreaks);
    let ok = adaptive.trials == 500
        && adaptive.failures == 0
        && adaptive.max_divergence <= 1e-12
        && original.trials <= 100
        && original.passed;
    check(
        ok,
        format!(
            "grids={{4,8}} adaptive: {} | original: breaks={}/{}",
            describe(adaptive),
            original.passes,
            original.trials
        ),
    )
}

fn standard_shift() -> Outcome {
    let report = run(ModelConfig::rank1_default(), 500, SuiteName::Metrics);
    let s = report
        .metrics
        .iter()
        .find(|m| m.report.metric == MetricKind::SConsZeropad)
        .map(|m| &m.report)
        .expect("s_cons_zeropad");
    let nonzero: Vec<_> = s.trials.iter().filter(|t| t.shifts[0] != t.shifts[1]).collect();
    let nonzero_mean = nonzero.iter().map(|t| t.agreement).sum::<f64>() / nonzero.len() as f64;
    check(
        nonzero_mean < 1.0,
        format!("s_cons_zeropad={} over nonzero shift pairs={nonzero_mean} (structured inputs)", s.aggregate),
    )
}

fn rank2() -> Outcome {
    let report = run(ModelConfig::rank2_default(), 100, SuiteName::End2end);
    let inv = result(&report, Property::End2endInvariance);
    let equi = result(&report, Property::End2endEquivariance);
    check(
        inv.failures == 0 && equi.failures == 0 && inv.tie_count == 0 && equi.tie_count == 0,
        format!("48x48 invariance: {} | equivariance: {}", describe(inv), describe(equi)),
    )
}

fn main() -> ExitCode {
    let mut all = true;
    let mut line = |n: &str, name: &str, o: Outcome| {
        all &= o.ok;
        println!("{} criterion {n} {name}: {}", if o.ok { "PASS" } else { "FAIL" }, o.detail);
    };
    line("1", "lemma1", timed(Some(Duration::from_secs(1)), lemma1));
    line("2", "claim1", timed(None, claim1));
    line("3", "claim2", timed(None, claim2));
    line("4", "claim3", timed(None, claim3));
    let start = Instant::now();
    let report = run(ModelConfig::rank1_default(), 1000, SuiteName::End2end);
    let took = start.elapsed();
    let (mut inv, equi) = end2end(&report);
    inv.detail = format!("{} suite_time={took:.2?}", inv.detail);
    if took > Duration::from_secs(30) {
        inv.ok = false;
    }
    line("5", "end2end_invariance", inv);
    line("6", "end2end_equivariance", equi);
    line("7", "ablation", timed(None, ablation));
    line("8", "adaptive_rpe", timed(None, rpe));
    line("9", "standard_shift_gap", timed(None, standard_shift));
    line("extra", "rank2_end2end", timed(None, rank2));
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
