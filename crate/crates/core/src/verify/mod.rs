//! Verification machinery: independent oracles plus the named suites the
//! `verify` command runs.

pub mod oracles;
mod suites;

pub use suites::{registry, run_suite, suite_names, CheckResult, Suite, SuiteReport};
pub use suites::fixtures;
