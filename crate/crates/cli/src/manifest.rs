//! Run manifests: one command, its inputs, and an optional layer × rank sweep.
//!
//! ```toml
//! command = "restore"
//! output_dir = "runs/restore"
//! seed = 7
//!
//! [inputs]
//! mode = "values"
//! donor = "base.safetensors"
//! host = "sft.safetensors"
//!
//! [sweep]
//! layers = ["first:5", "first:10"]
//! ranks = ["top:64", "top:256"]
//! ```
//!
//! Relative paths resolve against the manifest's directory. A sweep expands to the full grid
//! in list order, each point writing to `output_dir/layers-<l>__ranks-<r>`. Every grid point
//! is validated before anything is written.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use spectrakit::{Error, Result};

use crate::commands::Job;
use crate::report::{create_dir, slug, write_json};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub output_dir: PathBuf,
    /// Feeds every seeded computation of the run (the Silverman bootstrap).
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub inputs: toml::Table,
    #[serde(default)]
    pub sweep: Sweep,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default)]
    pub layers: Vec<String>,
    #[serde(default)]
    pub ranks: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    /// Sub-directory of `output_dir`; empty without a sweep.
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranks: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExpandedRun {
    pub output_dir: PathBuf,
    pub command: String,
    pub seed: Option<u64>,
    pub points: Vec<(GridPoint, Job)>,
}

const PATH_KEYS: &[&str] = &["a", "b", "donor", "host", "input", "ref", "current"];

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(format!("manifest: {}", msg.into()))
}

pub fn load(path: &Path) -> Result<ExpandedRun> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: RunManifest = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    expand(m, base)
}

fn resolve(base: &Path, p: &str) -> String {
    let path = Path::new(p);
    if path.is_absolute() {
        p.to_string()
    } else {
        base.join(path).to_string_lossy().into_owned()
    }
}

fn looks_like_path(s: &str) -> bool {
    s.contains('/') || s.contains('\\') || s.ends_with(".toml")
}

/// Rank axis for commands that take a single `rank`: `top:K` or a bare `K`.
fn single_rank(s: &str) -> Result<i64> {
    let k = s.strip_prefix("top:").unwrap_or(s);
    k.parse::<i64>().ok().filter(|&k| k >= 1).ok_or_else(|| {
        bad(format!(
            "rank sweep entry `{s}` must be `top:K` or `K` here"
        ))
    })
}

pub fn expand(m: RunManifest, base: &Path) -> Result<ExpandedRun> {
    let cmd = m.command.as_str();
    if !["svd-diff", "angles", "restore", "adv-stats", "penalty"].contains(&cmd) {
        return Err(bad(format!("unknown command `{cmd}`")));
    }
    if m.output_dir.as_os_str().is_empty() {
        return Err(bad("empty output_dir"));
    }
    let mut inputs = m.inputs.clone();
    if inputs.contains_key("out") {
        return Err(bad("`out` is set by output_dir, not [inputs]"));
    }
    for key in PATH_KEYS {
        if let Some(v) = inputs.get_mut(*key) {
            let s = v
                .as_str()
                .ok_or_else(|| bad(format!("`{key}` must be a string")))?;
            *v = toml::Value::String(resolve(base, s));
        }
    }
    for key in ["profile", "thresholds"] {
        if let Some(toml::Value::String(s)) = inputs.get_mut(key) {
            if looks_like_path(s) {
                *s = resolve(base, s);
            }
        }
    }
    if let Some(seed) = m.seed {
        if cmd == "adv-stats" {
            match inputs.get("seed") {
                Some(v) if v.as_integer() != Some(seed as i64) => {
                    return Err(bad("inputs.seed disagrees with the manifest seed"));
                }
                _ => {
                    inputs.insert("seed".into(), toml::Value::Integer(seed as i64));
                }
            }
        }
    }
    let output_dir = if m.output_dir.is_absolute() {
        m.output_dir.clone()
    } else {
        base.join(&m.output_dir)
    };

    let sweep = &m.sweep;
    if !sweep.layers.is_empty() && cmd == "adv-stats" {
        return Err(bad("adv-stats has no layer axis to sweep"));
    }
    if !sweep.ranks.is_empty() && matches!(cmd, "adv-stats" | "svd-diff") {
        return Err(bad(format!("{cmd} has no rank axis to sweep")));
    }
    let layer_axis: Vec<Option<&String>> = if sweep.layers.is_empty() {
        vec![None]
    } else {
        sweep.layers.iter().map(Some).collect()
    };
    let rank_axis: Vec<Option<&String>> = if sweep.ranks.is_empty() {
        vec![None]
    } else {
        sweep.ranks.iter().map(Some).collect()
    };

    let mut points = Vec::new();
    let mut names = BTreeSet::new();
    for l in &layer_axis {
        for r in &rank_axis {
            let mut table = inputs.clone();
            let mut parts = Vec::new();
            if let Some(l) = l {
                table.insert("layers".into(), toml::Value::String((*l).clone()));
                parts.push(format!("layers-{}", slug(l)));
            }
            if let Some(r) = r {
                if cmd == "restore" {
                    table.insert("ranks".into(), toml::Value::String((*r).clone()));
                } else {
                    table.insert("rank".into(), toml::Value::Integer(single_rank(r)?));
                }
                parts.push(format!("ranks-{}", slug(r)));
            }
            let name = parts.join("__");
            if !names.insert(name.clone()) {
                return Err(bad(format!("sweep produces duplicate grid point `{name}`")));
            }
            let out = if name.is_empty() {
                output_dir.clone()
            } else {
                output_dir.join(&name)
            };
            table.insert(
                "out".into(),
                toml::Value::String(out.to_string_lossy().into_owned()),
            );
            let job = job_from_table(cmd, table)?;
            points.push((
                GridPoint {
                    name,
                    layers: l.cloned(),
                    ranks: r.cloned(),
                },
                job,
            ));
        }
    }
    Ok(ExpandedRun {
        output_dir,
        command: m.command,
        seed: m.seed,
        points,
    })
}

fn job_from_table(cmd: &str, table: toml::Table) -> Result<Job> {
    let v = toml::Value::Table(table);
    let e = |err: toml::de::Error| bad(format!("[inputs]: {err}"));
    Ok(match cmd {
        "svd-diff" => Job::SvdDiff(v.try_into().map_err(e)?),
        "angles" => Job::Angles(v.try_into().map_err(e)?),
        "restore" => Job::Restore(v.try_into().map_err(e)?),
        "adv-stats" => Job::AdvStats(v.try_into().map_err(e)?),
        "penalty" => Job::Penalty(v.try_into().map_err(e)?),
        _ => unreachable!("command checked above"),
    })
}

#[derive(Serialize)]
struct RunIndex<'a> {
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    grid: Vec<&'a GridPoint>,
}

/// Validates every grid point, then executes them in grid order.
pub fn run(path: &Path) -> Result<()> {
    let run = load(path)?;
    let mut prepared = Vec::with_capacity(run.points.len());
    for (point, job) in &run.points {
        let p = job.clone().prepare().map_err(|e| {
            if point.name.is_empty() {
                e
            } else {
                annotate(e, &point.name)
            }
        })?;
        prepared.push(p);
    }
    create_dir(&run.output_dir)?;
    if run.points.len() > 1 || !run.points[0].0.name.is_empty() {
        let index = RunIndex {
            command: &run.command,
            seed: run.seed,
            grid: run.points.iter().map(|(g, _)| g).collect(),
        };
        write_json(
            &run.output_dir.join("run.json"),
            "run",
            false,
            &serde_json::json!({ "manifest": path.file_name().map(|f| f.to_string_lossy()) }),
            &index,
        )?;
    }
    for p in prepared {
        p.execute()?;
    }
    Ok(())
}

/// Prefixes validation messages with the failing grid point, keeping the error class.
fn annotate(e: Error, point: &str) -> Error {
    match e {
        Error::InvalidArgument(msg) => Error::InvalidArgument(format!("grid point {point}: {msg}")),
        other => other,
    }
}
