use serde::{Deserialize, Serialize};
use std::path::Path;

use super::AdvantageSummary;
use crate::error::{Error, Result};

/// Empirical trainability thresholds for the advantage distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Upper bound on `|μ| / σ`.
    pub max_center_ratio: f64,
    /// Entropy must exceed this (nats).
    pub min_entropy: f64,
    /// KL against the matched normal must stay below this (nats).
    pub max_kl: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            max_center_ratio: 0.5,
            min_entropy: 2.55,
            max_kl: 0.16,
        }
    }
}

impl Thresholds {
    /// `default`, or a path to a TOML file overriding any subset of fields.
    pub fn resolve(spec: &str) -> Result<Self> {
        if spec == "default" {
            return Ok(Self::default());
        }
        let path = Path::new(spec);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::InvalidArgument(format!("thresholds: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Trainable,
    Marginal,
    NotTrainable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdCheck {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub rule: &'static str,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainabilityVerdict {
    pub verdict: Verdict,
    pub reasons: Vec<ThresholdCheck>,
}

/// All checks pass → `Trainable`; exactly one fails → `Marginal`; otherwise `NotTrainable`.
pub fn verdict(s: &AdvantageSummary, t: &Thresholds) -> TrainabilityVerdict {
    let center = if s.sd > 0.0 {
        s.mu.abs() / s.sd
    } else {
        f64::INFINITY
    };
    let reasons = vec![
        ThresholdCheck {
            name: "center_ratio",
            value: center,
            threshold: t.max_center_ratio,
            rule: "|mu|/sd <= threshold",
            passed: center <= t.max_center_ratio,
        },
        ThresholdCheck {
            name: "entropy_nats",
            value: s.entropy_nats,
            threshold: t.min_entropy,
            rule: "entropy > threshold",
            passed: s.entropy_nats > t.min_entropy,
        },
        ThresholdCheck {
            name: "kl_vs_matched_normal",
            value: s.kl_vs_matched_normal,
            threshold: t.max_kl,
            rule: "kl < threshold",
            passed: s.kl_vs_matched_normal < t.max_kl,
        },
    ];
    let failed = reasons.iter().filter(|c| !c.passed).count();
    let verdict = match failed {
        0 => Verdict::Trainable,
        1 => Verdict::Marginal,
        _ => Verdict::NotTrainable,
    };
    TrainabilityVerdict { verdict, reasons }
}
