use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

/// What a failed check means for the construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Failure rejects the construction.
    Necessary,
    /// Applicability of a sufficient condition; never fatal.
    Sufficient,
    /// Direct numerical verification of a consistency property.
    Verification,
    /// Informational sanity check; reported, never fatal.
    Sanity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub kind: CheckKind,
    pub status: CheckStatus,
    /// Worst observed defect, when the check is numerical.
    #[serde(with = "crate::serde_float::option")]
    pub residual: Option<f64>,
    #[serde(with = "crate::serde_float::option")]
    pub tolerance: Option<f64>,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "snake_case")]
pub enum Verdict {
    Constructible,
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub checks: Vec<Check>,
    pub verdict: Option<Verdict>,
}

impl DiagnosticsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    /// Records a numerical check that passes when `residual <= tolerance`.
    pub fn measure(
        &mut self,
        name: &str,
        kind: CheckKind,
        residual: f64,
        tolerance: f64,
        statement: impl Into<String>,
    ) -> bool {
        let ok = residual <= tolerance;
        self.push(Check {
            name: name.to_string(),
            kind,
            status: if ok {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            residual: Some(residual),
            tolerance: Some(tolerance),
            statement: statement.into(),
        });
        ok
    }

    pub fn record(
        &mut self,
        name: &str,
        kind: CheckKind,
        status: CheckStatus,
        statement: impl Into<String>,
    ) {
        self.push(Check {
            name: name.to_string(),
            kind,
            status,
            residual: None,
            tolerance: None,
            statement: statement.into(),
        });
    }

    pub fn extend(&mut self, other: DiagnosticsReport) {
        self.checks.extend(other.checks);
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    /// No necessary or verification check failed.
    pub fn all_pass(&self) -> bool {
        self.failed()
            .all(|c| matches!(c.kind, CheckKind::Sanity | CheckKind::Sufficient))
    }

    pub fn first_failed_necessary(&self) -> Option<&Check> {
        self.failed().find(|c| c.kind == CheckKind::Necessary)
    }

    /// Sets the verdict from the necessary checks recorded so far.
    pub fn conclude(&mut self) {
        self.verdict = Some(match self.first_failed_necessary() {
            Some(c) => Verdict::Rejected(format!("{}: {}", c.name, c.statement)),
            None => Verdict::Constructible,
        });
    }

    pub fn reject(&mut self, reason: impl Into<String>) {
        self.verdict = Some(Verdict::Rejected(reason.into()));
    }

    pub fn rejection_reason(&self) -> Option<&str> {
        match &self.verdict {
            Some(Verdict::Rejected(r)) => Some(r),
            _ => None,
        }
    }
}
