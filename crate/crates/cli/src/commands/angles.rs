use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

use spectrakit::spectral::{singular_subspace_angles, svd, Side};
use spectrakit::{AngleSpectrum, Error, Result};

use super::pair::{pair_plan, PairPlan, PairTarget};
use crate::args::AnglesArgs;
use crate::report::{create_dir, num, slug, write_json, Table};

const SIDES: [Side; 2] = [Side::Left, Side::Right];

pub struct Prepared {
    args: AnglesArgs,
    plan: PairPlan,
}

#[derive(Serialize)]
struct SideSummary {
    rank: usize,
    min_deg: f64,
    max_deg: f64,
    mean_deg: f64,
    file: String,
}

#[derive(Serialize)]
struct MatrixSummary {
    tensor: String,
    layer: usize,
    kind: String,
    rows: usize,
    cols: usize,
    left: SideSummary,
    right: SideSummary,
}

#[derive(Serialize, Default)]
struct Aggregate {
    matrices: usize,
    min_deg: Option<f64>,
    max_deg: f64,
}

impl Aggregate {
    fn add(&mut self, s: &SideSummary) {
        self.min_deg = Some(self.min_deg.map_or(s.min_deg, |m| m.min(s.min_deg)));
        self.max_deg = self.max_deg.max(s.max_deg);
    }
}

#[derive(Serialize)]
struct Summary {
    matrices: Vec<MatrixSummary>,
    /// Keyed by `kind.side`.
    per_kind: BTreeMap<String, Aggregate>,
}

pub fn prepare(args: AnglesArgs) -> Result<Prepared> {
    super::pair::require_path(&args.out, "out")?;
    if args.rank == Some(0) {
        return Err(Error::InvalidArgument("--rank must be at least 1".into()));
    }
    let plan = pair_plan(
        &args.a,
        &args.b,
        &args.profile,
        &args.layers,
        args.kinds.as_deref(),
    )?;
    Ok(Prepared { args, plan })
}

fn one(plan: &PairPlan, t: &PairTarget, rank: Option<usize>) -> Result<[AngleSpectrum; 2]> {
    let a = plan.a.load_matrix::<f64>(&t.name_a)?;
    let b = plan.b.load_matrix::<f64>(&t.name_b)?;
    let (ta, tb) = rayon::join(|| svd(&a), || svd(&b));
    let (ta, tb) = (ta?, tb?);
    Ok([
        singular_subspace_angles(&ta, &tb, Side::Left, rank)?,
        singular_subspace_angles(&ta, &tb, Side::Right, rank)?,
    ])
}

fn side_summary(s: &AngleSpectrum, file: String) -> SideSummary {
    let deg = s.degrees();
    let mean = if deg.is_empty() {
        0.0
    } else {
        deg.iter().sum::<f64>() / deg.len() as f64
    };
    SideSummary {
        rank: s.rank,
        min_deg: s.min_angle().to_degrees(),
        max_deg: s.max_angle().to_degrees(),
        mean_deg: mean,
        file,
    }
}

pub fn execute(p: Prepared) -> Result<()> {
    let rank = p.args.rank;
    let spectra: Vec<[AngleSpectrum; 2]> = p
        .plan
        .targets
        .par_iter()
        .map(|t| one(&p.plan, t, rank))
        .collect::<Result<_>>()?;
    let out = &p.args.out;
    let dir = out.join("angles");
    create_dir(&dir)?;

    let mut summary = Summary {
        matrices: Vec::new(),
        per_kind: BTreeMap::new(),
    };
    for (t, pair) in p.plan.targets.iter().zip(&spectra) {
        let mut sides = Vec::with_capacity(2);
        for (side, s) in SIDES.iter().zip(pair) {
            let file = format!(
                "layer{}.{}.{}.csv",
                t.key.layer,
                slug(&t.key.kind.to_string()),
                side.as_str()
            );
            let mut table = Table::create(
                &dir.join(&file),
                &["index", "angle_deg", "angle_rad", "cosine"],
            )?;
            let deg = s.degrees();
            for i in 0..s.angles.len() {
                table.row([
                    i.to_string(),
                    num(deg[i]),
                    num(s.angles[i]),
                    num(s.cosines[i]),
                ])?;
            }
            table.finish()?;
            let ss = side_summary(s, format!("angles/{file}"));
            let agg = summary
                .per_kind
                .entry(format!("{}.{}", t.key.kind, side.as_str()))
                .or_default();
            agg.matrices += 1;
            agg.add(&ss);
            sides.push(ss);
        }
        let right = sides.pop().expect("two sides");
        let left = sides.pop().expect("two sides");
        summary.matrices.push(MatrixSummary {
            tensor: t.name_a.clone(),
            layer: t.key.layer,
            kind: t.key.kind.to_string(),
            rows: t.shape.0,
            cols: t.shape.1,
            left,
            right,
        });
    }

    if p.args.emit_plot_data {
        for (i, side) in SIDES.iter().enumerate() {
            let series: Vec<(&PairTarget, Vec<f64>)> = p
                .plan
                .targets
                .iter()
                .zip(&spectra)
                .map(|(t, pair)| (t, pair[i].degrees()))
                .collect();
            super::write_series(
                &out.join("plot"),
                &format!("angles_{}", side.as_str()),
                &series,
            )?;
        }
    }
    write_json(
        &out.join("angles.json"),
        "angles",
        p.args.stamp,
        &p.args,
        &summary,
    )
}
