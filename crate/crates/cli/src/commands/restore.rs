use spectrakit::surgery::{
    plan_targets, run_surgery, Alignment, LayerSelection, RankSelection, SelectionSpec, SpliceMode,
    SurgeryPlan,
};
use spectrakit::tensor_store::{Checkpoint, MatrixKind, NamingProfile, WriteOptions};
use spectrakit::{Error, Result};

use super::pair::{parse_kinds, require_path};
use crate::args::RestoreArgs;
use crate::report::{create_dir, num, write_json, Table};

pub const CHECKPOINT_FILE: &str = "model.safetensors";

pub struct Prepared {
    args: RestoreArgs,
    plan: SurgeryPlan,
}

pub fn prepare(args: RestoreArgs) -> Result<Prepared> {
    require_path(&args.donor, "donor")?;
    require_path(&args.host, "host")?;
    require_path(&args.out, "out")?;
    if args.mode.is_empty() {
        return Err(Error::InvalidArgument(
            "missing --mode (values|vectors)".into(),
        ));
    }
    let mode: SpliceMode = args.mode.parse()?;
    let align: Alignment = args.align.parse()?;
    if align == Alignment::Procrustes && mode != SpliceMode::Vectors {
        return Err(Error::InvalidArgument(
            "--align procrustes only applies to --mode vectors".into(),
        ));
    }
    let layers: LayerSelection = args.layers.parse()?;
    let ranks: RankSelection = args.ranks.parse()?;
    let kinds = parse_kinds(args.kinds.as_deref())?.unwrap_or_else(MatrixKind::default_selection);
    let plan = SurgeryPlan {
        mode,
        donor: Checkpoint::open(&args.donor)?,
        host: Checkpoint::open(&args.host)?,
        selection: SelectionSpec {
            layers,
            ranks,
            kinds,
        },
        profile: NamingProfile::resolve(&args.profile)?,
        align,
        write: WriteOptions {
            force_f32: args.force_f32,
        },
    };
    if plan_targets(&plan)?.is_empty() {
        return Err(Error::InvalidArgument(
            "selection matches no host matrices".into(),
        ));
    }
    let target = args.out.join(CHECKPOINT_FILE);
    for src in [&args.donor, &args.host] {
        if same_file(src, &target) {
            return Err(Error::InvalidArgument(format!(
                "output would overwrite input {}",
                src.display()
            )));
        }
    }
    Ok(Prepared { args, plan })
}

fn same_file(a: &std::path::Path, b: &std::path::Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

pub fn execute(p: Prepared) -> Result<()> {
    let out = &p.args.out;
    create_dir(out)?;
    let mut report = run_surgery(&p.plan, &out.join(CHECKPOINT_FILE))?;
    report.write.path = CHECKPOINT_FILE.into();

    let mut table = Table::create(
        &out.join("restore.csv"),
        &[
            "tensor",
            "layer",
            "kind",
            "mode",
            "rank_start",
            "rank_end",
            "thin_rank",
            "fro_vs_host",
            "fro_vs_donor",
            "max_entry_change",
            "degenerate_boundary",
            "max_rounding_error",
        ],
    )?;
    for m in &report.matrices {
        table.row([
            m.tensor.clone(),
            m.key.layer.to_string(),
            m.key.kind.to_string(),
            m.mode.to_string(),
            m.rank_start.to_string(),
            m.rank_end.to_string(),
            m.thin_rank.to_string(),
            num(m.fro_vs_host),
            num(m.fro_vs_donor),
            num(m.max_entry_change),
            m.degenerate_boundary.to_string(),
            num(m.max_rounding_error),
        ])?;
    }
    table.finish()?;
    write_json(
        &out.join("restore_report.json"),
        "restore",
        p.args.stamp,
        &p.args,
        &report,
    )
}
