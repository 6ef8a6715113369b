use std::fmt;

use serde::Serialize;

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub status: Status,
    /// Largest deviation observed (absolute or relative, per the check).
    pub max_deviation: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl CheckResult {
    pub fn measured(name: impl Into<String>, deviation: f64, tolerance: f64) -> Self {
        let status = if deviation <= tolerance { Status::Pass } else { Status::Fail };
        Self { name: name.into(), status, max_deviation: deviation, tolerance, detail: String::new() }
    }

    pub fn skipped(name: impl Into<String>, why: impl Into<String>) -> Self {
        Self { name: name.into(), status: Status::Skipped, max_deviation: 0.0, tolerance: 0.0, detail: why.into() }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// Collected results of a verification suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn new(suite: impl Into<String>, checks: Vec<CheckResult>) -> Self {
        let passed = checks.iter().all(|c| c.status != Status::Fail);
        Self { suite: suite.into(), passed, checks }
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}: {}", self.suite, if self.passed { "PASS" } else { "FAIL" })?;
        for c in &self.checks {
            let tag = match c.status {
                Status::Pass => "ok",
                Status::Fail => "FAIL",
                Status::Skipped => "skip",
            };
            write!(f, "  [{tag}] {} dev={:.3e} tol={:.0e}", c.name, c.max_deviation, c.tolerance)?;
            if !c.detail.is_empty() {
                write!(f, " ({})", c.detail)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
