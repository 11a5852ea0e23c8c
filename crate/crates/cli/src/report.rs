use std::io::Write;
use std::path::Path;

use dirac_bvp::io::SCHEMA_VERSION;
use dirac_bvp::verify::Check;
use serde_json::{json, Value};

/// Output of one command: the checked inequalities plus free-form results.
pub struct Report {
    pub command: &'static str,
    pub checks: Vec<Check>,
    pub result: Value,
}

impl Report {
    pub fn new(command: &'static str) -> Self {
        Report {
            command,
            checks: Vec::new(),
            result: Value::Null,
        }
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "passed": self.passed(),
            "checks": self.checks,
            "result": self.result,
        })
    }
}

/// Writes pretty JSON to `path`, or to stdout when no path is given.
pub fn emit(value: &Value, path: Option<&Path>) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes())?;
            lock.flush()
        }
    }
}
