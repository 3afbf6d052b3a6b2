use std::path::Path;

use serde::{Deserialize, Serialize};

use wigner_core::oracle::SweepSettings;

use crate::checks::{all_checks, Check};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::write_json;

pub const REPORT_FILE: &str = "verify_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<String>,
    pub checks: Vec<Check>,
}

pub fn sweep_settings(cfg: &ExperimentConfig) -> SweepSettings {
    SweepSettings {
        hbars: cfg.oracle.hbars.clone(),
        tests: cfg.oracle.tests,
        half_width: cfg.oracle.half_width,
        nodes: cfg.oracle.nodes,
        seed: cfg.seed,
        ..SweepSettings::default()
    }
}

/// Runs every check (a check that errors counts as failed), writes the report
/// and fails with the first failing check's name.
pub fn run(
    cfg: &ExperimentConfig,
    out: &Path,
    log: &mut dyn FnMut(&Check),
) -> Result<VerifyReport, CliError> {
    let sweep = sweep_settings(cfg);
    let mut checks = Vec::new();
    for (name, check) in all_checks() {
        let c = check(&sweep).unwrap_or_else(|e| Check {
            name: name.into(),
            passed: false,
            value: f64::NAN,
            limit: String::new(),
            detail: format!("error: {e}"),
        });
        log(&c);
        checks.push(c);
    }
    let first_failure = checks.iter().find(|c| !c.passed).map(|c| c.name.clone());
    let report = VerifyReport {
        passed: first_failure.is_none(),
        first_failure,
        checks,
    };
    write_json(&out.join(REPORT_FILE), &report)?;
    match &report.first_failure {
        Some(name) => Err(CliError::Verification(name.clone())),
        None => Ok(report),
    }
}

pub fn format_check(c: &Check) -> String {
    let mark = if c.passed { "PASS" } else { "FAIL" };
    let mut line = format!("{mark} {:<32} {:>12.4e} {}", c.name, c.value, c.limit);
    if !c.detail.is_empty() {
        line.push_str("  (");
        line.push_str(&c.detail);
        line.push(')');
    }
    line
}
