//! report.json and summary text.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub status: &'static str,
    pub mode: &'static str,
    pub version: &'static str,
    /// SHA-256 of the resolved config text.
    pub config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub results: Value,
}

impl Report {
    pub fn ok(mode: &'static str, resolved_config: &str, results: Value) -> Self {
        Self {
            status: "ok",
            mode,
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: sha256_hex(resolved_config.as_bytes()),
            error: None,
            results,
        }
    }

    pub fn failed(mode: &'static str, resolved_config: &str, error: String) -> Self {
        Self {
            status: "error",
            error: Some(error),
            results: Value::Null,
            ..Self::ok(mode, resolved_config, Value::Null)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Header lines for every CSV: tool version, mode and the resolved config.
pub fn csv_header(mode: &str, resolved_config: &str) -> Vec<String> {
    let mut h = vec![format!("nvmag {} {mode}", env!("CARGO_PKG_VERSION"))];
    h.extend(resolved_config.lines().filter(|l| !l.is_empty()).map(str::to_string));
    h
}

/// `name = value unit` summary line with 4 significant digits.
pub fn line(name: &str, value: f64, unit: &str) -> String {
    if unit.is_empty() {
        format!("{name:<28} {value:.4e}\n")
    } else {
        format!("{name:<28} {value:.4e} {unit}\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn failed_report_has_no_results() {
        let r = Report::failed("optimize", "", "boom".into());
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["status"], "error");
        assert!(v.get("results").is_none());
    }
}
