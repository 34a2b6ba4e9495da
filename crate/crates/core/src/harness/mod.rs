//! Property and metric suites over configured models, with JSON reports and
//! replayable counterexamples.
//!
//! `run` draws random trials from the model configuration; `prove` runs the
//! primitive properties exhaustively over every offset at a small size.
//! Every trial is regenerated from `(seed, property, trial)` alone, so reports
//! are byte-identical across runs and thread counts.

mod replay;
mod report;
mod suites;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{ModelConfig, Switch};

pub use replay::{replay, replay_file, ReplayFile, ReplayOutcome};
pub use report::{Counterexample, MetricEntry, Report, SuiteResult};
pub use suites::{Property, Sizes};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteName {
    Lemma1,
    Claim1,
    Claim2,
    Claim3,
    Apmerge,
    Rpe,
    End2end,
    Metrics,
    Ablation,
}

impl SuiteName {
    pub const ALL: [SuiteName; 9] = [
        SuiteName::Lemma1,
        SuiteName::Claim1,
        SuiteName::Claim2,
        SuiteName::Claim3,
        SuiteName::Apmerge,
        SuiteName::Rpe,
        SuiteName::End2end,
        SuiteName::Metrics,
        SuiteName::Ablation,
    ];

    /// Suites that `prove` can run exhaustively.
    pub const PROVABLE: [SuiteName; 6] = [
        SuiteName::Lemma1,
        SuiteName::Claim1,
        SuiteName::Claim2,
        SuiteName::Claim3,
        SuiteName::Apmerge,
        SuiteName::Rpe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SuiteName::Lemma1 => "lemma1",
            SuiteName::Claim1 => "claim1",
            SuiteName::Claim2 => "claim2",
            SuiteName::Claim3 => "claim3",
            SuiteName::Apmerge => "apmerge",
            SuiteName::Rpe => "rpe",
            SuiteName::End2end => "end2end",
            SuiteName::Metrics => "metrics",
            SuiteName::Ablation => "ablation",
        }
    }
}

impl fmt::Display for SuiteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SuiteName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SuiteName::ALL.into_iter().find(|n| n.name() == s).ok_or_else(|| Error::Config(format!("unknown suite `{s}`")))
    }
}

/// Settings of one `run`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_path: Option<String>,
    pub model: ModelConfig,
    pub trials: usize,
    /// Seed of inputs, shifts and per-trial weights. Model weights use the
    /// model config seed.
    pub seed: u64,
    /// Empty means every suite.
    pub suites: Vec<SuiteName>,
    /// Switches turned off for end2end and metrics, and the switches ablated
    /// one at a time by the ablation suite (all four when empty).
    pub disable: Vec<Switch>,
}

impl SuiteConfig {
    pub fn new(model: ModelConfig, trials: usize, seed: u64) -> Self {
        Self { config_path: None, model, trials, seed, suites: Vec::new(), disable: Vec::new() }
    }

    pub fn with_suites(mut self, suites: Vec<SuiteName>) -> Self {
        self.suites = suites;
        self
    }

    pub fn with_disabled(mut self, disable: Vec<Switch>) -> Self {
        self.disable = disable;
        self
    }

    pub fn selected(&self) -> Vec<SuiteName> {
        if self.suites.is_empty() {
            return SuiteName::ALL.to_vec();
        }
        let mut s = self.suites.clone();
        s.sort();
        s.dedup();
        s
    }

    /// Model config with the disabled switches applied.
    pub fn configured_model(&self) -> ModelConfig {
        let mut m = self.model.clone();
        for &sw in &self.disable {
            m.switches.set(sw, false);
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        self.model.validate()
    }
}

/// Settings of one `prove`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProveConfig {
    pub suite: SuiteName,
    /// Axis length of the signal or token grid.
    pub n: usize,
    /// Patch, window or merge factor.
    pub l: usize,
    pub rank: usize,
    /// Random inputs, each checked at every offset.
    pub inputs: usize,
    pub seed: u64,
    pub channels: usize,
    pub dim: usize,
}

impl ProveConfig {
    pub fn new(suite: SuiteName, n: usize, l: usize) -> Self {
        Self { suite, n, l, rank: 1, inputs: 100, seed: 0, channels: 2, dim: 4 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !SuiteName::PROVABLE.contains(&self.suite) {
            return bad(format!("suite `{}` cannot be proved exhaustively", self.suite));
        }
        if !(1..=2).contains(&self.rank) {
            return bad(format!("rank must be 1 or 2, got {}", self.rank));
        }
        if self.n == 0 || self.l == 0 || self.inputs == 0 || self.channels == 0 || self.dim == 0 {
            return bad("sizes and input count must be positive".into());
        }
        if self.suite != SuiteName::Rpe && !self.n.is_multiple_of(self.l) {
            return bad(format!("n = {} is not divisible by l = {}", self.n, self.l));
        }
        Ok(())
    }
}

/// Echo of the invocation that produced a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Invocation {
    Run(SuiteConfig),
    Prove(ProveConfig),
}

/// Reads and validates a model config file.
pub fn load_model_config(path: impl AsRef<Path>) -> Result<ModelConfig> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg: ModelConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("invalid model config {}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the selected suites.
pub fn run(cfg: &SuiteConfig) -> Result<Report> {
    cfg.validate()?;
    let mut builder = report::ReportBuilder::default();
    for suite in cfg.selected() {
        suites::run_suite(suite, cfg, &mut builder)?;
    }
    Ok(builder.finish(Invocation::Run(cfg.clone())))
}

/// Runs one primitive suite at every offset of a small size.
pub fn prove(cfg: &ProveConfig) -> Result<Report> {
    cfg.validate()?;
    let mut builder = report::ReportBuilder::default();
    suites::prove_suite(cfg, &mut builder)?;
    Ok(builder.finish(Invocation::Prove(cfg.clone())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in SuiteName::ALL {
            assert_eq!(s.name().parse::<SuiteName>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!("claim4".parse::<SuiteName>().is_err());
    }

    #[test]
    fn config_checks() {
        let cfg = SuiteConfig::new(ModelConfig::rank1_default(), 0, 0);
        assert!(matches!(run(&cfg), Err(Error::Config(_))));
        let p = ProveConfig::new(SuiteName::Lemma1, 6, 4);
        assert!(matches!(prove(&p), Err(Error::Config(_))));
        let p = ProveConfig::new(SuiteName::End2end, 8, 2);
        assert!(matches!(prove(&p), Err(Error::Config(_))));
        let cfg = SuiteConfig::new(ModelConfig::rank1_default(), 1, 0).with_suites(vec![
            SuiteName::Rpe,
            SuiteName::Lemma1,
            SuiteName::Rpe,
        ]);
        assert_eq!(cfg.selected(), vec![SuiteName::Lemma1, SuiteName::Rpe]);
        let cfg = cfg.with_disabled(vec![Switch::APmerge]);
        assert!(!cfg.configured_model().switches.a_pmerge);
    }
}
