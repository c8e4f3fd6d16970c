//! Matrix pairing across two checkpoints under one profile.

use std::collections::BTreeSet;
use std::path::Path;

use spectrakit::surgery::LayerSelection;
use spectrakit::tensor_store::{resolve_keys, Checkpoint, MatrixKey, MatrixKind, NamingProfile};
use spectrakit::{Error, Result};

pub struct PairTarget {
    pub key: MatrixKey,
    pub name_a: String,
    pub name_b: String,
    pub shape: (usize, usize),
}

pub struct PairPlan {
    pub a: Checkpoint,
    pub b: Checkpoint,
    pub targets: Vec<PairTarget>,
}

pub fn parse_kinds(kinds: Option<&str>) -> Result<Option<Vec<MatrixKind>>> {
    let Some(list) = kinds else { return Ok(None) };
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let k: MatrixKind = part.parse()?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("empty --kinds list".into()));
    }
    Ok(Some(out))
}

pub fn require_path(p: &Path, flag: &str) -> Result<()> {
    if p.as_os_str().is_empty() {
        return Err(Error::InvalidArgument(format!("missing --{flag}")));
    }
    Ok(())
}

/// Opens both checkpoints and pairs every selected matrix, checking shapes.
pub fn pair_plan(
    a: &Path,
    b: &Path,
    profile: &str,
    layers: &str,
    kinds: Option<&str>,
) -> Result<PairPlan> {
    require_path(a, "a")?;
    require_path(b, "b")?;
    let profile = NamingProfile::resolve(profile)?;
    let layers: LayerSelection = layers.parse()?;
    let kinds = parse_kinds(kinds)?;
    let ca = Checkpoint::open(a)?;
    let cb = Checkpoint::open(b)?;
    let ka = resolve_keys(&ca, &profile)?;
    let kb = resolve_keys(&cb, &profile)?;
    let layer_count = ka.layer_count();
    let mut targets = Vec::new();
    let mut missing = BTreeSet::new();
    for (key, name_a) in &ka.matched {
        if !layers.contains(key.layer, layer_count) {
            continue;
        }
        if let Some(ks) = &kinds {
            if !ks.contains(&key.kind) {
                continue;
            }
        }
        let Some(name_b) = kb.name_of(key) else {
            missing.insert(key.to_string());
            continue;
        };
        let sa = &ca.info(name_a)?.shape;
        let sb = &cb.info(name_b)?.shape;
        if sa != sb {
            return Err(Error::ShapeMismatch {
                what: key.to_string(),
                expected: sa.clone(),
                found: sb.clone(),
            });
        }
        targets.push(PairTarget {
            key: key.clone(),
            name_a: name_a.clone(),
            name_b: name_b.to_string(),
            shape: (sa[0], sa[1]),
        });
    }
    if let Some(first) = missing.iter().next() {
        return Err(Error::InvalidArgument(format!(
            "{} selected matrices missing from {} (first: {first})",
            missing.len(),
            b.display()
        )));
    }
    if targets.is_empty() {
        return Err(Error::InvalidArgument(
            "selection matches no matrices in the first checkpoint".into(),
        ));
    }
    Ok(PairPlan {
        a: ca,
        b: cb,
        targets,
    })
}
