//! Singular value / singular vector splicing between two checkpoints.
//!
//! A splice pairs the singular directions of the host and the donor by rank index after
//! canonical sorting, i.e. `U_host·Σ_donor·V_hostᵀ` for a value restoration and
//! `U_donor·Σ_host·V_donorᵀ` for a vector restoration (restricted to the selected ranks).

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::{procrustes, svd, SvdTriple};
use crate::tensor_store::{
    resolve_keys, write_checkpoint_with, Checkpoint, MatrixKey, MatrixKind, NamingProfile,
    WriteOptions, WriteReport,
};
use crate::tolerances::DEGENERATE_GAP_REL;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum LayerSelection {
    All,
    First(usize),
    Last(usize),
    List(Vec<usize>),
}

impl LayerSelection {
    pub fn contains(&self, layer: usize, layer_count: usize) -> bool {
        match self {
            LayerSelection::All => true,
            LayerSelection::First(k) => layer < *k,
            LayerSelection::Last(k) => layer + k >= layer_count,
            LayerSelection::List(ls) => ls.contains(&layer),
        }
    }
}

impl fmt::Display for LayerSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSelection::All => f.write_str("all"),
            LayerSelection::First(k) => write!(f, "first:{k}"),
            LayerSelection::Last(k) => write!(f, "last:{k}"),
            LayerSelection::List(ls) => {
                let items: Vec<String> = ls.iter().map(|l| l.to_string()).collect();
                write!(f, "list:{}", items.join(","))
            }
        }
    }
}

impl FromStr for LayerSelection {
    type Err = Error;

    /// `all`, `first:K`, `last:K`, or `list:I,J,...`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad layer selection `{s}`"));
        if s == "all" {
            return Ok(LayerSelection::All);
        }
        let (head, arg) = s.split_once(':').ok_or_else(bad)?;
        match head {
            "first" => Ok(LayerSelection::First(arg.parse().map_err(|_| bad())?)),
            "last" => Ok(LayerSelection::Last(arg.parse().map_err(|_| bad())?)),
            "list" => {
                let mut ls = arg
                    .split(',')
                    .map(|x| x.trim().parse().map_err(|_| bad()))
                    .collect::<Result<Vec<usize>>>()?;
                ls.sort_unstable();
                ls.dedup();
                Ok(LayerSelection::List(ls))
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RankSelection {
    All,
    Top(usize),
    Bottom(usize),
    /// Half-open `[a, b)`.
    Range(usize, usize),
}

impl RankSelection {
    /// Rank indices for a matrix of thin rank `r`, clamped to `[0, r)`.
    pub fn resolve(&self, r: usize) -> Range<usize> {
        match *self {
            RankSelection::All => 0..r,
            RankSelection::Top(k) => 0..k.min(r),
            RankSelection::Bottom(k) => r.saturating_sub(k)..r,
            RankSelection::Range(a, b) => a.min(r)..b.min(r),
        }
    }
}

impl fmt::Display for RankSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankSelection::All => f.write_str("all"),
            RankSelection::Top(k) => write!(f, "top:{k}"),
            RankSelection::Bottom(k) => write!(f, "bottom:{k}"),
            RankSelection::Range(a, b) => write!(f, "range:{a}..{b}"),
        }
    }
}

impl FromStr for RankSelection {
    type Err = Error;

    /// `all`, `top:K`, `bottom:K`, or `range:A..B`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad rank selection `{s}`"));
        if s == "all" {
            return Ok(RankSelection::All);
        }
        let (head, arg) = s.split_once(':').ok_or_else(bad)?;
        match head {
            "top" => Ok(RankSelection::Top(arg.parse().map_err(|_| bad())?)),
            "bottom" => Ok(RankSelection::Bottom(arg.parse().map_err(|_| bad())?)),
            "range" => {
                let (a, b) = arg.split_once("..").ok_or_else(bad)?;
                let a: usize = a.parse().map_err(|_| bad())?;
                let b: usize = b.parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                Ok(RankSelection::Range(a, b))
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SelectionSpec {
    pub layers: LayerSelection,
    pub ranks: RankSelection,
    pub kinds: Vec<MatrixKind>,
}

impl Default for SelectionSpec {
    fn default() -> Self {
        Self {
            layers: LayerSelection::All,
            ranks: RankSelection::All,
            kinds: MatrixKind::default_selection(),
        }
    }
}

impl SelectionSpec {
    pub fn selects(&self, key: &MatrixKey, layer_count: usize) -> bool {
        self.kinds.contains(&key.kind) && self.layers.contains(key.layer, layer_count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpliceMode {
    Values,
    Vectors,
}

impl FromStr for SpliceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "values" => Ok(SpliceMode::Values),
            "vectors" => Ok(SpliceMode::Vectors),
            _ => Err(Error::InvalidArgument(format!("unknown splice mode `{s}`"))),
        }
    }
}

impl fmt::Display for SpliceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpliceMode::Values => "values",
            SpliceMode::Vectors => "vectors",
        })
    }
}

/// Optional re-pairing of donor directions before a vector splice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    #[default]
    None,
    /// Rotate the donor's selected columns within their own span to best match the host's
    /// (orthogonal Procrustes, separately for `U` and `V`). Spans are unchanged.
    Procrustes,
}

impl FromStr for Alignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Alignment::None),
            "procrustes" => Ok(Alignment::Procrustes),
            _ => Err(Error::InvalidArgument(format!("unknown alignment `{s}`"))),
        }
    }
}

/// Splices ranks `ranks` of `donor` into `host`.
///
/// `Values`: `U_h·Σ'·V_hᵀ` where `σ'_i` comes from the donor for `i ∈ ranks`.
/// `Vectors`: `U'·Σ_h·V'ᵀ` where columns `i ∈ ranks` of `U'`, `V'` come from the donor.
/// Mixed column sets are used as-is. Empty `ranks` returns `host_w` untouched.
pub fn mixed_matrix<T: Scalar>(
    host_w: &DMatrix<T>,
    host: &SvdTriple<T>,
    donor: &SvdTriple<T>,
    mode: SpliceMode,
    ranks: &[usize],
) -> Result<DMatrix<T>> {
    mixed_matrix_aligned(host_w, host, donor, mode, ranks, Alignment::None)
}

pub fn mixed_matrix_aligned<T: Scalar>(
    host_w: &DMatrix<T>,
    host: &SvdTriple<T>,
    donor: &SvdTriple<T>,
    mode: SpliceMode,
    ranks: &[usize],
    align: Alignment,
) -> Result<DMatrix<T>> {
    let host_shape = [host.rows(), host.cols()];
    let donor_shape = [donor.rows(), donor.cols()];
    if host_shape != donor_shape || host_w.shape() != (host.rows(), host.cols()) {
        return Err(Error::ShapeMismatch {
            what: "splice operands".into(),
            expected: host_shape.to_vec(),
            found: donor_shape.to_vec(),
        });
    }
    let r = host.rank();
    if let Some(&bad) = ranks.iter().find(|&&i| i >= r) {
        return Err(Error::RankOutOfRange {
            index: bad,
            rank: r,
        });
    }
    if ranks.is_empty() {
        return Ok(host_w.clone());
    }
    let mixed = match mode {
        SpliceMode::Values => {
            let mut t = host.clone();
            for &i in ranks {
                t.sigma[i] = donor.sigma[i];
            }
            t
        }
        SpliceMode::Vectors => {
            let (du, dv) = match align {
                Alignment::None => (donor.u.clone(), donor.v.clone()),
                Alignment::Procrustes => aligned_donor_block(host, donor, ranks)?,
            };
            let mut t = host.clone();
            for &i in ranks {
                t.u.set_column(i, &du.column(i));
                t.v.set_column(i, &dv.column(i));
            }
            t
        }
    };
    Ok(mixed.to_matrix())
}

fn aligned_donor_block<T: Scalar>(
    host: &SvdTriple<T>,
    donor: &SvdTriple<T>,
    ranks: &[usize],
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let pick = |m: &DMatrix<T>| DMatrix::from_fn(m.nrows(), ranks.len(), |i, j| m[(i, ranks[j])]);
    let mut du = donor.u.clone();
    let mut dv = donor.v.clone();
    for (dst, d, h) in [(&mut du, &donor.u, &host.u), (&mut dv, &donor.v, &host.v)] {
        let db = pick(d);
        let rot = procrustes(&db, &pick(h))?;
        let aligned = db * rot;
        for (j, &i) in ranks.iter().enumerate() {
            dst.set_column(i, &aligned.column(j));
        }
    }
    Ok((du, dv))
}

/// True when a selected block boundary of `t` sits on a near-degenerate gap.
pub fn degenerate_boundary<T: Scalar>(t: &SvdTriple<T>, ranks: &Range<usize>) -> bool {
    let top = t.sigma.get(0).copied().unwrap_or_else(T::zero);
    let tol = top * T::lit(DEGENERATE_GAP_REL);
    [ranks.start, ranks.end]
        .iter()
        .filter_map(|&k| t.boundary_gap(k))
        .any(|gap| gap < tol)
}

#[derive(Debug, Clone)]
pub struct SurgeryPlan {
    pub mode: SpliceMode,
    pub donor: Checkpoint,
    pub host: Checkpoint,
    pub selection: SelectionSpec,
    pub profile: NamingProfile,
    pub align: Alignment,
    pub write: WriteOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixRecord {
    pub key: MatrixKey,
    pub tensor: String,
    pub mode: SpliceMode,
    pub rank_start: usize,
    pub rank_end: usize,
    pub thin_rank: usize,
    pub fro_vs_host: f64,
    pub fro_vs_donor: f64,
    pub max_entry_change: f64,
    /// Boundary gap below `1e-6·σ_1`: the spliced block is ill-defined.
    pub degenerate_boundary: bool,
    pub max_rounding_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanEcho {
    pub mode: SpliceMode,
    pub donor: String,
    pub host: String,
    pub profile: String,
    pub layers: String,
    pub ranks: String,
    pub kinds: Vec<String>,
    pub align: Alignment,
    pub force_f32: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurgeryReport {
    pub toolkit_version: String,
    pub plan: PlanEcho,
    pub matrices: Vec<MatrixRecord>,
    /// Tensors written unchanged.
    pub copied: Vec<String>,
    pub write: WriteReport,
}

struct Target {
    key: MatrixKey,
    host_name: String,
    donor_name: String,
}

/// Matrices a plan would edit, as `(key, host tensor name)`, without touching payloads.
pub fn plan_targets(plan: &SurgeryPlan) -> Result<Vec<(MatrixKey, String)>> {
    Ok(resolve_targets(plan)?
        .into_iter()
        .map(|t| (t.key, t.host_name))
        .collect())
}

fn resolve_targets(plan: &SurgeryPlan) -> Result<Vec<Target>> {
    let host_keys = resolve_keys(&plan.host, &plan.profile)?;
    let donor_keys = resolve_keys(&plan.donor, &plan.profile)?;
    let layer_count = host_keys.layer_count();
    let mut targets = Vec::new();
    for (key, host_name) in &host_keys.matched {
        if !plan.selection.selects(key, layer_count) {
            continue;
        }
        let donor_name = donor_keys.name_of(key).ok_or_else(|| {
            Error::InvalidArgument(format!("donor checkpoint has no tensor for {key}"))
        })?;
        let hs = &plan.host.info(host_name)?.shape;
        let ds = &plan.donor.info(donor_name)?.shape;
        if hs != ds {
            return Err(Error::ShapeMismatch {
                what: format!("{key} between host and donor"),
                expected: hs.clone(),
                found: ds.clone(),
            });
        }
        targets.push(Target {
            key: key.clone(),
            host_name: host_name.clone(),
            donor_name: donor_name.to_string(),
        });
    }
    Ok(targets)
}

fn splice_one(plan: &SurgeryPlan, t: &Target) -> Result<(DMatrix<f64>, MatrixRecord)> {
    let host_w = plan.host.load_matrix::<f64>(&t.host_name)?;
    let donor_w = plan.donor.load_matrix::<f64>(&t.donor_name)?;
    let r = host_w.nrows().min(host_w.ncols());
    let range = plan.selection.ranks.resolve(r);
    let ranks: Vec<usize> = range.clone().collect();
    let (out, degenerate) = if ranks.is_empty() {
        (host_w.clone(), false)
    } else {
        let (ht, dt) = rayon::join(|| svd(&host_w), || svd(&donor_w));
        let (ht, dt) = (ht?, dt?);
        let out = mixed_matrix_aligned(&host_w, &ht, &dt, plan.mode, &ranks, plan.align)?;
        (out, degenerate_boundary(&ht, &range))
    };
    let diff_host = &out - &host_w;
    let record = MatrixRecord {
        key: t.key.clone(),
        tensor: t.host_name.clone(),
        mode: plan.mode,
        rank_start: range.start,
        rank_end: range.end,
        thin_rank: r,
        fro_vs_host: diff_host.norm(),
        fro_vs_donor: (&out - &donor_w).norm(),
        max_entry_change: diff_host.amax(),
        degenerate_boundary: degenerate,
        max_rounding_error: 0.0,
    };
    Ok((out, record))
}

/// Applies `plan` and writes the edited checkpoint to `out`.
///
/// Every selected matrix is replaced by its splice; all other tensors are copied byte-exact.
/// Matrices are processed in parallel batches but written in payload order, so the output is
/// byte-deterministic for a fixed plan.
pub fn run_surgery(plan: &SurgeryPlan, out: &Path) -> Result<SurgeryReport> {
    let targets = resolve_targets(plan)?;
    let by_name: BTreeMap<&str, &Target> =
        targets.iter().map(|t| (t.host_name.as_str(), t)).collect();
    let mut order: Vec<&Target> = targets.iter().collect();
    order.sort_by_key(|t| plan.host.index()[&t.host_name].data_offsets.0);
    let edited: Vec<String> = order.iter().map(|t| t.host_name.clone()).collect();

    let batch = rayon::current_num_threads().max(1);
    let mut pending = order.iter().copied().peekable();
    let mut ready: BTreeMap<String, (DMatrix<f64>, MatrixRecord)> = BTreeMap::new();
    let mut records = Vec::with_capacity(targets.len());

    let write = write_checkpoint_with(&plan.host, &edited, out, plan.write, |name| {
        if !ready.contains_key(name) {
            let chunk: Vec<&Target> = pending.by_ref().take(batch).collect();
            let done: Vec<Result<(DMatrix<f64>, MatrixRecord)>> =
                chunk.par_iter().map(|t| splice_one(plan, t)).collect();
            for (t, res) in chunk.iter().zip(done) {
                ready.insert(t.host_name.clone(), res?);
            }
        }
        let (m, rec) = ready
            .remove(name)
            .ok_or_else(|| Error::UnknownTensor(name.to_string()))?;
        debug_assert!(by_name.contains_key(name));
        records.push(rec);
        Ok(m)
    })?;

    let rounding: BTreeMap<&str, f64> = write
        .edited
        .iter()
        .map(|e| (e.name.as_str(), e.max_rounding_error))
        .collect();
    for rec in &mut records {
        rec.max_rounding_error = rounding.get(rec.tensor.as_str()).copied().unwrap_or(0.0);
    }
    records.sort_by(|a, b| a.key.cmp(&b.key));
    let copied = plan
        .host
        .index()
        .keys()
        .filter(|n| !by_name.contains_key(n.as_str()))
        .cloned()
        .collect();
    Ok(SurgeryReport {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        plan: PlanEcho {
            mode: plan.mode,
            donor: plan.donor.path().display().to_string(),
            host: plan.host.path().display().to_string(),
            profile: plan.profile.name().to_string(),
            layers: plan.selection.layers.to_string(),
            ranks: plan.selection.ranks.to_string(),
            kinds: plan.selection.kinds.iter().map(|k| k.to_string()).collect(),
            align: plan.align,
            force_f32: plan.write.force_f32,
        },
        matrices: records,
        copied,
        write,
    })
}
