//! Structured run reports: one check per verified property, a stages blob
//! with per-command diagnostics, and a determinism hash over everything
//! except timings.

use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// One verified property; failures carry the offending numeric witness.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub witness: f64,
    pub bound: f64,
    pub detail: String,
}

impl Check {
    /// Passes iff `witness ≤ bound`.
    pub fn le(name: impl Into<String>, witness: f64, bound: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass: witness <= bound,
            witness,
            bound,
            detail: detail.into(),
        }
    }

    pub fn flag(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            witness: if pass { 0.0 } else { 1.0 },
            bound: 0.0,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub config: RunConfig,
    pub checks: Vec<Check>,
    pub stages: serde_json::Value,
    pub pass: bool,
    pub determinism_hash: String,
    /// Wall-clock timings; excluded from the determinism hash.
    pub timings_ms: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct HashedPart<'a> {
    command: &'a str,
    config: &'a RunConfig,
    checks: &'a [Check],
    stages: &'a serde_json::Value,
    pass: bool,
}

impl Report {
    pub fn new(
        command: &str,
        config: RunConfig,
        checks: Vec<Check>,
        stages: serde_json::Value,
        timings_ms: BTreeMap<String, f64>,
    ) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        let hashed = HashedPart {
            command,
            config: &config,
            checks: &checks,
            stages: &stages,
            pass,
        };
        let canonical = serde_json::to_string(&hashed).expect("report serialization");
        let digest = Sha256::digest(canonical.as_bytes());
        Report {
            command: command.to_string(),
            config,
            checks,
            stages,
            pass,
            determinism_hash: format!("{digest:x}"),
            timings_ms,
        }
    }

    pub fn write(&self, out_dir: Option<&std::path::Path>) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        match out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(format!("report_{}.json", self.command));
                std::fs::write(&path, text)?;
                eprintln!("report written to {}", path.display());
            }
            None => println!("{text}"),
        }
        Ok(())
    }

    pub fn print_summary(&self) {
        for check in &self.checks {
            eprintln!(
                "[{}] {} (witness {:.3e}, bound {:.3e}) {}",
                if check.pass { "PASS" } else { "FAIL" },
                check.name,
                check.witness,
                check.bound,
                check.detail
            );
        }
        eprintln!(
            "{}: {} ({} checks, hash {})",
            self.command,
            if self.pass { "PASS" } else { "FAIL" },
            self.checks.len(),
            &self.determinism_hash[..16]
        );
    }
}
