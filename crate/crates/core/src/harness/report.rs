use serde::{Deserialize, Serialize};

use super::suites::{Outcome, Property, Sizes};
use super::{Invocation, SuiteName};
use crate::metrics::ConsistencyReport;
use crate::numerics::{GridSignal, OffsetVector};
use crate::pipeline::{ModelConfig, Switch};
use crate::trace::SelectionEntry;

/// Tally of one property. For checks, a pass is a tie-free trial within
/// tolerance and a failure one beyond it. For searches, a pass is a tie-free
/// trial that exhibits the expected break and a failure one that does not;
/// the search succeeds when at least one break is found. Tied trials count
/// only towards `tie_count`, and `max_divergence` covers tie-free trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub suite: SuiteName,
    pub name: Property,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablated: Option<Switch>,
    pub search: bool,
    pub trials: usize,
    pub passes: usize,
    pub failures: usize,
    pub max_divergence: f64,
    pub tie_count: usize,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub suite: SuiteName,
    /// Which model the metric was measured on.
    pub model: String,
    pub report: ConsistencyReport,
}

/// A trial whose divergence exceeded the tolerance, with everything needed to
/// recompute it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counterexample {
    pub suite: SuiteName,
    pub property: Property,
    pub seed: u64,
    pub trial: u64,
    /// Operator sizes of a primitive property.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Sizes>,
    /// Model of an end-to-end property.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    pub input: GridSignal,
    pub shifts: Vec<OffsetVector>,
    /// Adaptive selections made while evaluating the trial.
    pub offsets: Vec<SelectionEntry>,
    pub divergence: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: Invocation,
    pub suites: Vec<SuiteResult>,
    pub metrics: Vec<MetricEntry>,
    pub counterexamples: Vec<Counterexample>,
    pub passed: bool,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields serialize")
    }

    pub fn result(&self, name: Property) -> Option<&SuiteResult> {
        self.suites.iter().find(|r| r.name == name)
    }

    pub fn metric(&self, suite: SuiteName, model: &str) -> Option<&ConsistencyReport> {
        self.metrics.iter().find(|m| m.suite == suite && m.model == model).map(|m| &m.report)
    }
}

#[derive(Default)]
pub(crate) struct ReportBuilder {
    suites: Vec<SuiteResult>,
    metrics: Vec<MetricEntry>,
    counterexamples: Vec<Counterexample>,
}

impl ReportBuilder {
    /// Adds the tally of `outcomes`, in trial order, keeping the first
    /// counterexample.
    pub fn property(&mut self, suite: SuiteName, property: Property, ablated: Option<Switch>, outcomes: Vec<Outcome>) {
        let tolerance = property.tolerance();
        let search = property.is_search();
        let mut result = SuiteResult {
            suite,
            name: property,
            ablated,
            search,
            trials: outcomes.len(),
            passes: 0,
            failures: 0,
            max_divergence: 0.0,
            tie_count: 0,
            tolerance,
            passed: false,
        };
        let mut first: Option<Outcome> = None;
        for o in outcomes {
            if o.tied {
                result.tie_count += 1;
                continue;
            }
            result.max_divergence = result.max_divergence.max(o.divergence);
            let exceeds = o.divergence > tolerance;
            if exceeds == search {
                result.passes += 1;
            } else {
                result.failures += 1;
            }
            if exceeds && first.is_none() {
                first = Some(o);
            }
        }
        result.passed = if search { result.passes > 0 } else { result.failures == 0 };
        if let Some(o) = first {
            self.counterexamples.push(o.into_counterexample(suite, property));
        }
        self.suites.push(result);
    }

    pub fn metric(&mut self, suite: SuiteName, model: impl Into<String>, report: ConsistencyReport) {
        self.metrics.push(MetricEntry { suite, model: model.into(), report });
    }

    pub fn finish(self, config: Invocation) -> Report {
        let passed = self.suites.iter().all(|r| r.passed);
        Report { config, suites: self.suites, metrics: self.metrics, counterexamples: self.counterexamples, passed }
    }
}
