use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::{Counterexample, Report};
use super::suites::{eval_model, eval_primitive, Property};
use crate::error::{Error, Result};
use crate::pipeline::Model;

/// A whole report or a single counterexample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReplayFile {
    Report(Box<Report>),
    Counterexample(Box<Counterexample>),
}

impl ReplayFile {
    pub fn counterexamples(&self) -> &[Counterexample] {
        match self {
            ReplayFile::Report(r) => &r.counterexamples,
            ReplayFile::Counterexample(c) => std::slice::from_ref(c.as_ref()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub property: Property,
    pub recorded: f64,
    pub divergence: f64,
    pub tolerance: f64,
}

impl ReplayOutcome {
    /// The divergence is still beyond tolerance.
    pub fn still_fails(&self) -> bool {
        self.divergence > self.tolerance
    }
}

/// Recomputes the divergence of `cx`. Model properties use the stored model,
/// input and shifts directly; primitive properties regenerate their weights
/// from the seed and trial and check the stored input against them.
pub fn replay(cx: &Counterexample) -> Result<ReplayOutcome> {
    let divergence = if cx.property.uses_model() {
        let cfg =
            cx.model.clone().ok_or_else(|| Error::Trace(format!("{:?} counterexample has no model", cx.property)))?;
        let model = Model::new(cfg)?;
        eval_model(cx.property, &model, &cx.input, &cx.shifts)?.0
    } else {
        let sizes =
            cx.sizes.as_ref().ok_or_else(|| Error::Trace(format!("{:?} counterexample has no sizes", cx.property)))?;
        let [shift] = cx.shifts.as_slice() else {
            return Err(Error::Trace(format!("expected one shift, got {}", cx.shifts.len())));
        };
        let outcome = eval_primitive(cx.property, cx.seed, cx.trial, sizes, shift)?;
        if outcome.input != cx.input {
            return Err(Error::Trace("stored input does not match the regenerated trial".into()));
        }
        outcome.divergence
    };
    Ok(ReplayOutcome { property: cx.property, recorded: cx.divergence, divergence, tolerance: cx.tolerance })
}

pub fn replay_file(path: impl AsRef<Path>) -> Result<Vec<ReplayOutcome>> {
    let text = std::fs::read_to_string(path)?;
    let file: ReplayFile = serde_json::from_str(&text)?;
    file.counterexamples().iter().map(replay).collect()
}
