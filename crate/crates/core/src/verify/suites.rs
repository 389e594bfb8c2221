//! Suite trait and registry: each verification suite sits behind a common
//! interface and is selected by name from the CLI.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One named assertion inside a suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    /// Worst margin observed; positive margins are failures.
    pub worst_margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckResult {
    /// A check that passes iff the worst margin stays non-positive.
    pub fn from_margin(name: &str, cases: usize, worst_margin: f64) -> Self {
        CheckResult {
            name: name.to_string(),
            passed: worst_margin <= 0.0,
            cases,
            worst_margin,
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: String) -> Self {
        self.detail = Some(detail);
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
    /// Replay data for the first failing check, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<serde_json::Value>,
}

impl SuiteReport {
    pub fn new(suite: &str, seed: u64) -> Self {
        SuiteReport {
            suite: suite.to_string(),
            seed,
            passed: true,
            checks: Vec::new(),
            first_failure: None,
        }
    }

    pub fn push(&mut self, check: CheckResult) {
        if !check.passed {
            self.passed = false;
            if self.first_failure.is_none() {
                self.first_failure = serde_json::to_value(&check).ok();
            }
        }
        self.checks.push(check);
    }
}

/// A self-contained verification suite; trains its own tiny fixtures where
/// needed.
pub trait Suite {
    fn name(&self) -> &'static str;
    fn run(&self, seed: u64) -> Result<SuiteReport>;
}

/// All registered suites, in CLI listing order.
pub fn registry() -> Vec<Box<dyn Suite>> {
    vec![
        Box::new(gradcheck::GradCheckSuite),
        Box::new(lipschitz::LipschitzSuite),
        Box::new(ot_suite::OtSuite),
        Box::new(theorem1::Theorem1Suite),
        Box::new(oracle_suite::OracleSuite),
    ]
}

pub fn suite_names() -> Vec<&'static str> {
    registry().iter().map(|s| s.name()).collect()
}

/// Looks a suite up by name and runs it.
pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    for suite in registry() {
        if suite.name() == name {
            return suite.run(seed);
        }
    }
    Err(Error::usage(format!(
        "unknown suite '{name}'; available: {}",
        suite_names().join(", ")
    )))
}

pub mod fixtures;
mod gradcheck;
mod lipschitz;
mod oracle_suite;
mod ot_suite;
mod theorem1;
