//! Subcommands. Each splits into `prepare` (opens inputs and validates, writes nothing) and
//! `execute` (computes and writes reports).

mod adv_stats;
mod angles;
mod pair;
mod penalty;
mod restore;
mod svd_diff;

use std::collections::BTreeMap;
use std::path::Path;

use spectrakit::Result;

use crate::args::{AdvStatsArgs, AnglesArgs, PenaltyArgs, RestoreArgs, SvdDiffArgs};
use crate::report::{create_dir, slug, Table};

pub use restore::CHECKPOINT_FILE;

#[derive(Debug, Clone)]
pub enum Job {
    SvdDiff(SvdDiffArgs),
    Angles(AnglesArgs),
    Restore(RestoreArgs),
    AdvStats(AdvStatsArgs),
    Penalty(PenaltyArgs),
}

pub enum Prepared {
    SvdDiff(svd_diff::Prepared),
    Angles(angles::Prepared),
    Restore(restore::Prepared),
    AdvStats(adv_stats::Prepared),
    Penalty(penalty::Prepared),
}

impl Job {
    pub fn prepare(self) -> Result<Prepared> {
        Ok(match self {
            Job::SvdDiff(a) => Prepared::SvdDiff(svd_diff::prepare(a)?),
            Job::Angles(a) => Prepared::Angles(angles::prepare(a)?),
            Job::Restore(a) => Prepared::Restore(restore::prepare(a)?),
            Job::AdvStats(a) => Prepared::AdvStats(adv_stats::prepare(a)?),
            Job::Penalty(a) => Prepared::Penalty(penalty::prepare(a)?),
        })
    }
}

impl Prepared {
    pub fn execute(self) -> Result<()> {
        match self {
            Prepared::SvdDiff(p) => svd_diff::execute(p),
            Prepared::Angles(p) => angles::execute(p),
            Prepared::Restore(p) => restore::execute(p),
            Prepared::AdvStats(p) => adv_stats::execute(p),
            Prepared::Penalty(p) => penalty::execute(p),
        }
    }
}

/// One wide CSV per kind: a row per singular index, a column per layer.
fn write_series(dir: &Path, prefix: &str, series: &[(&pair::PairTarget, Vec<f64>)]) -> Result<()> {
    create_dir(dir)?;
    let mut by_kind: BTreeMap<String, Vec<(usize, &Vec<f64>)>> = BTreeMap::new();
    for (t, v) in series {
        by_kind
            .entry(t.key.kind.to_string())
            .or_default()
            .push((t.key.layer, v));
    }
    for (kind, cols) in by_kind {
        let mut header = vec!["index".to_string()];
        header.extend(cols.iter().map(|(l, _)| format!("layer{l}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut t = Table::create(&dir.join(format!("{prefix}_{}.csv", slug(&kind))), &header)?;
        let len = cols.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
        for i in 0..len {
            let mut row = vec![i.to_string()];
            row.extend(
                cols.iter()
                    .map(|(_, v)| v.get(i).map(|&x| crate::report::num(x)).unwrap_or_default()),
            );
            t.row(row)?;
        }
        t.finish()?;
    }
    Ok(())
}
