//! Line-delimited JSON rollout logs.
//!
//! Each non-empty line is one record, either `{"advantage": x}` (optionally with `trace_id`) or
//! `{"trace_id": id, "t": step, "reward": r, "value": v}`. In a step trace the record at the
//! final `t` may omit `reward`: it then carries the bootstrap value `V(s_T)`. Without such a
//! record the terminal value is taken as 0.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use super::{gae, GaeParams, TrajectoryTrace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    #[default]
    Step,
    Token,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutData {
    /// Precomputed advantages, in file order.
    pub advantages: Vec<f64>,
    /// `(trace_id, trace)` in order of first appearance.
    pub traces: Vec<(String, TrajectoryTrace<f64>)>,
}

impl RolloutData {
    /// Advantage samples: the precomputed ones, or GAE over every trace.
    pub fn samples(&self, p: GaeParams<f64>) -> Vec<f64> {
        if !self.advantages.is_empty() {
            return self.advantages.clone();
        }
        self.traces.iter().flat_map(|(_, t)| gae(t, p)).collect()
    }
}

#[derive(Deserialize)]
struct Record {
    #[serde(default)]
    trace_id: Option<serde_json::Value>,
    #[serde(default)]
    t: Option<usize>,
    #[serde(default)]
    reward: Option<f64>,
    #[serde(default)]
    value: Option<f64>,
    #[serde(default)]
    advantage: Option<f64>,
}

struct Step {
    t: usize,
    reward: Option<f64>,
    value: f64,
    line: usize,
}

pub fn parse_rollouts(reader: impl BufRead) -> Result<RolloutData> {
    let mut data = RolloutData::default();
    let mut order: Vec<String> = Vec::new();
    let mut steps: HashMap<String, Vec<Step>> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<rollouts>", e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::InvalidArgument(format!("rollout line {line_no}: {msg}"));
        let rec: Record = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if let Some(a) = rec.advantage {
            if !a.is_finite() {
                return Err(bad("non-finite advantage".into()));
            }
            data.advantages.push(a);
            continue;
        }
        let id = match rec.trace_id {
            Some(serde_json::Value::String(s)) => s,
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => return Err(bad("record needs `advantage` or `trace_id`".into())),
        };
        let t = rec.t.ok_or_else(|| bad("missing `t`".into()))?;
        let value = rec.value.ok_or_else(|| bad("missing `value`".into()))?;
        if !steps.contains_key(&id) {
            order.push(id.clone());
        }
        steps.entry(id).or_default().push(Step {
            t,
            reward: rec.reward,
            value,
            line: line_no,
        });
    }
    if !data.advantages.is_empty() && !order.is_empty() {
        return Err(Error::InvalidArgument(
            "rollout log mixes precomputed advantages with reward/value traces".into(),
        ));
    }
    for id in order {
        let mut s = steps.remove(&id).expect("recorded id");
        s.sort_by_key(|st| st.t);
        for (expected, st) in s.iter().enumerate() {
            if st.t != expected {
                return Err(Error::InvalidArgument(format!(
                    "trace `{id}`: expected step {expected}, found t = {} (line {})",
                    st.t, st.line
                )));
            }
        }
        let terminal = match s.last() {
            Some(last) if last.reward.is_none() => Some(s.pop().unwrap().value),
            _ => None,
        };
        let mut rewards = Vec::with_capacity(s.len());
        let mut values = Vec::with_capacity(s.len() + 1);
        for st in &s {
            let r = st.reward.ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "trace `{id}`: step {} has no reward (line {})",
                    st.t, st.line
                ))
            })?;
            rewards.push(r);
            values.push(st.value);
        }
        values.push(terminal.unwrap_or(0.0));
        data.traces
            .push((id, TrajectoryTrace::new(rewards, values)?));
    }
    Ok(data)
}

pub fn read_rollouts(path: &Path) -> Result<RolloutData> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_rollouts(std::io::BufReader::new(file))
}
