use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

use spectrakit::spectral::delta_sigma;
use spectrakit::{DeltaSpectrum, Result};

use super::pair::{pair_plan, PairPlan, PairTarget};
use crate::args::SvdDiffArgs;
use crate::report::{create_dir, num, write_json, Table};

pub struct Prepared {
    args: SvdDiffArgs,
    plan: PairPlan,
}

#[derive(Serialize)]
struct MatrixSummary {
    tensor: String,
    layer: usize,
    kind: String,
    rows: usize,
    cols: usize,
    max_abs_delta: f64,
    mean_delta: f64,
    relative_drift: f64,
}

#[derive(Serialize, Default)]
struct Aggregate {
    matrices: usize,
    max_abs_delta: f64,
    max_relative_drift: f64,
}

impl Aggregate {
    fn add(&mut self, m: &MatrixSummary) {
        self.matrices += 1;
        self.max_abs_delta = self.max_abs_delta.max(m.max_abs_delta);
        self.max_relative_drift = self.max_relative_drift.max(m.relative_drift);
    }
}

#[derive(Serialize)]
struct Summary {
    matrices: Vec<MatrixSummary>,
    per_kind: BTreeMap<String, Aggregate>,
    overall: Aggregate,
}

pub fn prepare(args: SvdDiffArgs) -> Result<Prepared> {
    super::pair::require_path(&args.out, "out")?;
    let plan = pair_plan(
        &args.a,
        &args.b,
        &args.profile,
        &args.layers,
        args.kinds.as_deref(),
    )?;
    Ok(Prepared { args, plan })
}

fn one(plan: &PairPlan, t: &PairTarget) -> Result<DeltaSpectrum> {
    let a = plan.a.load_matrix::<f64>(&t.name_a)?;
    let b = plan.b.load_matrix::<f64>(&t.name_b)?;
    delta_sigma(&a, &b)
}

pub fn execute(p: Prepared) -> Result<()> {
    let spectra: Vec<DeltaSpectrum> = p
        .plan
        .targets
        .par_iter()
        .map(|t| one(&p.plan, t))
        .collect::<Result<_>>()?;
    let out = &p.args.out;
    create_dir(out)?;

    let mut table = Table::create(
        &out.join("delta_sigma.csv"),
        &[
            "tensor", "layer", "kind", "index", "sigma_a", "sigma_b", "delta",
        ],
    )?;
    let mut summary = Summary {
        matrices: Vec::new(),
        per_kind: BTreeMap::new(),
        overall: Aggregate::default(),
    };
    for (t, d) in p.plan.targets.iter().zip(&spectra) {
        for i in 0..d.delta.len() {
            table.row([
                t.name_a.clone(),
                t.key.layer.to_string(),
                t.key.kind.to_string(),
                i.to_string(),
                num(d.sigma_a[i]),
                num(d.sigma_b[i]),
                num(d.delta[i]),
            ])?;
        }
        let m = MatrixSummary {
            tensor: t.name_a.clone(),
            layer: t.key.layer,
            kind: t.key.kind.to_string(),
            rows: t.shape.0,
            cols: t.shape.1,
            max_abs_delta: d.max_abs,
            mean_delta: d.mean,
            relative_drift: d.relative_drift,
        };
        summary.per_kind.entry(m.kind.clone()).or_default().add(&m);
        summary.overall.add(&m);
        summary.matrices.push(m);
    }
    table.finish()?;

    if p.args.emit_plot_data {
        let series: Vec<(&PairTarget, Vec<f64>)> = p
            .plan
            .targets
            .iter()
            .zip(&spectra)
            .map(|(t, d)| (t, d.delta.clone()))
            .collect();
        super::write_series(&out.join("plot"), "delta_sigma", &series)?;
    }
    write_json(
        &out.join("svd_diff.json"),
        "svd-diff",
        p.args.stamp,
        &p.args,
        &summary,
    )
}
