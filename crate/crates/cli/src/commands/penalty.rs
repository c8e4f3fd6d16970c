use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

use spectrakit::penalty::{fit_reference, penalty_value};
use spectrakit::{Error, Result};

use super::pair::{pair_plan, require_path, PairPlan, PairTarget};
use crate::args::PenaltyArgs;
use crate::report::{create_dir, num, write_json, Table};

pub struct Prepared {
    args: PenaltyArgs,
    plan: PairPlan,
}

#[derive(Serialize)]
struct Row {
    tensor: String,
    layer: usize,
    kind: String,
    rows: usize,
    cols: usize,
    rank: usize,
    penalty: f64,
    /// Penalty divided by `‖W_current‖_F²`.
    relative_penalty: f64,
    boundary_gap: f64,
    degenerate: bool,
}

#[derive(Serialize, Default)]
struct Aggregate {
    matrices: usize,
    total: f64,
    mean: f64,
    max: f64,
    degenerate: usize,
}

impl Aggregate {
    fn add(&mut self, r: &Row) {
        self.matrices += 1;
        self.total += r.penalty;
        self.max = self.max.max(r.penalty);
        self.degenerate += r.degenerate as usize;
        self.mean = self.total / self.matrices as f64;
    }
}

#[derive(Serialize)]
struct Summary {
    matrices: Vec<Row>,
    per_kind: BTreeMap<String, Aggregate>,
    overall: Aggregate,
}

pub fn prepare(args: PenaltyArgs) -> Result<Prepared> {
    require_path(&args.reference, "ref")?;
    require_path(&args.current, "current")?;
    require_path(&args.out, "out")?;
    if args.rank == 0 {
        return Err(Error::InvalidArgument("--rank must be at least 1".into()));
    }
    let plan = pair_plan(
        &args.reference,
        &args.current,
        &args.profile,
        &args.layers,
        args.kinds.as_deref(),
    )?;
    Ok(Prepared { args, plan })
}

fn one(plan: &PairPlan, t: &PairTarget, rank: usize) -> Result<Row> {
    let w_ref = plan.a.load_matrix::<f64>(&t.name_a)?;
    let w = plan.b.load_matrix::<f64>(&t.name_b)?;
    let r = rank.min(t.shape.0.min(t.shape.1));
    let p = fit_reference(&w_ref, r)?;
    let value = penalty_value(&w, &p)?;
    let norm2 = w.norm_squared();
    Ok(Row {
        tensor: t.name_a.clone(),
        layer: t.key.layer,
        kind: t.key.kind.to_string(),
        rows: t.shape.0,
        cols: t.shape.1,
        rank: r,
        penalty: value,
        relative_penalty: if norm2 > 0.0 { value / norm2 } else { 0.0 },
        boundary_gap: p.boundary_gap,
        degenerate: p.degenerate(),
    })
}

pub fn execute(p: Prepared) -> Result<()> {
    let rank = p.args.rank;
    let rows: Vec<Row> = p
        .plan
        .targets
        .par_iter()
        .map(|t| one(&p.plan, t, rank))
        .collect::<Result<_>>()?;
    let out = &p.args.out;
    create_dir(out)?;
    let mut table = Table::create(
        &out.join("penalty.csv"),
        &[
            "tensor",
            "layer",
            "kind",
            "rows",
            "cols",
            "rank",
            "penalty",
            "relative_penalty",
            "boundary_gap",
            "degenerate",
        ],
    )?;
    let mut per_kind: BTreeMap<String, Aggregate> = BTreeMap::new();
    let mut overall = Aggregate::default();
    for r in &rows {
        table.row([
            r.tensor.clone(),
            r.layer.to_string(),
            r.kind.clone(),
            r.rows.to_string(),
            r.cols.to_string(),
            r.rank.to_string(),
            num(r.penalty),
            num(r.relative_penalty),
            num(r.boundary_gap),
            r.degenerate.to_string(),
        ])?;
        per_kind.entry(r.kind.clone()).or_default().add(r);
        overall.add(r);
    }
    table.finish()?;
    let summary = Summary {
        matrices: rows,
        per_kind,
        overall,
    };
    write_json(
        &out.join("penalty.json"),
        "penalty",
        p.args.stamp,
        &p.args,
        &summary,
    )
}
