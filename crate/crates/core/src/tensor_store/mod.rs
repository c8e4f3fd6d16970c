//! Reading and writing single-file safetensors checkpoints.
//!
//! Layout: an 8-byte little-endian header length `N`, then `N` bytes of JSON mapping tensor
//! names to `{dtype, shape, data_offsets}` (plus an optional `__metadata__` string map), then the
//! raw little-endian, row-major payload. Offsets are relative to the start of the payload.

mod dtype;
mod profile;

pub use dtype::{bf16_to_f64, f16_to_f64, f64_to_bf16, f64_to_f16, Dtype};
pub use profile::{
    resolve_keys, resolve_names, KeyResolution, MatrixKey, MatrixKind, NamingProfile, PatternSpec,
    ProfileConfig, UnmatchedReason, UnmatchedTensor,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const METADATA_KEY: &str = "__metadata__";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    /// `[begin, end)` byte range within the payload.
    pub data_offsets: (usize, usize),
}

impl TensorInfo {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn byte_len(&self) -> usize {
        self.data_offsets.1 - self.data_offsets.0
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }
}

/// An opened checkpoint. Only the header is held in memory; payloads are read on demand, so
/// a `Checkpoint` can be shared across threads for concurrent loads.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    path: PathBuf,
    payload_start: u64,
    index: BTreeMap<String, TensorInfo>,
    metadata: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct RawEntry {
    dtype: String,
    shape: Vec<usize>,
    data_offsets: (usize, usize),
}

impl Checkpoint {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
        let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        if file_len < 8 {
            return Err(Error::MalformedHeader(format!(
                "file is {file_len} bytes, shorter than the 8-byte length prefix"
            )));
        }
        let mut len_buf = [0u8; 8];
        file.read_exact(&mut len_buf)
            .map_err(|e| Error::io(path, e))?;
        let header_len = u64::from_le_bytes(len_buf);
        if header_len > file_len - 8 {
            return Err(Error::MalformedHeader(format!(
                "header length {header_len} exceeds remaining file size {}",
                file_len - 8
            )));
        }
        let mut header = vec![0u8; header_len as usize];
        file.read_exact(&mut header)
            .map_err(|e| Error::io(path, e))?;
        let payload_start = 8 + header_len;
        let payload_len = file_len - payload_start;
        let (index, metadata) = parse_header(&header, payload_len)?;
        Ok(Self {
            path: path.to_path_buf(),
            payload_start,
            index,
            metadata,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn index(&self) -> &BTreeMap<String, TensorInfo> {
        &self.index
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn tensor_count(&self) -> usize {
        self.index.len()
    }

    /// Sum of all tensor byte lengths.
    pub fn payload_size(&self) -> u64 {
        self.index.values().map(|t| t.byte_len() as u64).sum()
    }

    pub fn info(&self, name: &str) -> Result<&TensorInfo> {
        self.index
            .get(name)
            .ok_or_else(|| Error::UnknownTensor(name.to_string()))
    }

    /// Raw stored bytes of one tensor.
    pub fn read_bytes(&self, name: &str) -> Result<Vec<u8>> {
        let info = self.info(name)?;
        let mut file = File::open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        file.seek(SeekFrom::Start(
            self.payload_start + info.data_offsets.0 as u64,
        ))
        .map_err(|e| Error::io(&self.path, e))?;
        let mut buf = vec![0u8; info.byte_len()];
        file.read_exact(&mut buf)
            .map_err(|e| Error::io(&self.path, e))?;
        Ok(buf)
    }

    /// Loads a 2-D tensor, decoded and up-cast to `T` (row-major order preserved).
    pub fn load_matrix<T: Scalar>(&self, name: &str) -> Result<DMatrix<T>> {
        let info = self.info(name)?;
        if !info.is_matrix() {
            return Err(Error::NotMatrix {
                name: name.to_string(),
                shape: info.shape.clone(),
            });
        }
        let values = info.dtype.decode(&self.read_bytes(name)?);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name.to_string()));
        }
        let (rows, cols) = (info.shape[0], info.shape[1]);
        Ok(DMatrix::from_row_iterator(
            rows,
            cols,
            values.into_iter().map(T::lit),
        ))
    }
}

/// Opens a checkpoint and parses its index without touching tensor payloads.
pub fn open_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::open(path)
}

type ParsedHeader = (BTreeMap<String, TensorInfo>, BTreeMap<String, String>);

fn parse_header(header: &[u8], payload_len: u64) -> Result<ParsedHeader> {
    let raw: BTreeMap<String, serde_json::Value> =
        serde_json::from_slice(header).map_err(|e| Error::HeaderParse(e.to_string()))?;
    let mut index = BTreeMap::new();
    let mut metadata = BTreeMap::new();
    for (name, value) in raw {
        if name == METADATA_KEY {
            metadata = serde_json::from_value(value)
                .map_err(|e| Error::HeaderParse(format!("{METADATA_KEY}: {e}")))?;
            continue;
        }
        let entry: RawEntry = serde_json::from_value(value)
            .map_err(|e| Error::HeaderParse(format!("`{name}`: {e}")))?;
        let dtype: Dtype = entry.dtype.parse().map_err(|d| Error::UnsupportedDtype {
            name: name.clone(),
            dtype: d,
        })?;
        let (begin, end) = entry.data_offsets;
        if begin > end || end as u64 > payload_len {
            return Err(Error::InvalidRange {
                name,
                reason: format!(
                    "byte range [{begin}, {end}) outside payload of {payload_len} bytes"
                ),
            });
        }
        let numel = entry
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d));
        if numel.and_then(|n| n.checked_mul(dtype.size())) != Some(end - begin) {
            return Err(Error::InvalidRange {
                name,
                reason: format!(
                    "byte range length {} does not match shape {:?} of {dtype}",
                    end - begin,
                    entry.shape
                ),
            });
        }
        index.insert(
            name,
            TensorInfo {
                dtype,
                shape: entry.shape,
                data_offsets: (begin, end),
            },
        );
    }
    let mut ranges: Vec<(&String, (usize, usize))> =
        index.iter().map(|(n, t)| (n, t.data_offsets)).collect();
    ranges.sort_by_key(|(_, r)| *r);
    for pair in ranges.windows(2) {
        let (a, ra) = pair[0];
        let (b, rb) = pair[1];
        if rb.0 < ra.1 {
            return Err(Error::InvalidRange {
                name: b.clone(),
                reason: format!("byte range overlaps tensor `{a}`"),
            });
        }
    }
    Ok((index, metadata))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WriteOptions {
    /// Store edited tensors as F32 instead of their original dtype.
    pub force_f32: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EditRecord {
    pub name: String,
    pub dtype: Dtype,
    /// Largest `|stored − requested|` after rounding to `dtype`.
    pub max_rounding_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WriteReport {
    pub path: PathBuf,
    pub tensors: usize,
    pub copied: usize,
    pub edited: Vec<EditRecord>,
}

/// Writes `base` to `out`, replacing the tensors named in `edits`.
///
/// All edits are validated before the output is created.
pub fn write_checkpoint(
    base: &Checkpoint,
    edits: &BTreeMap<String, DMatrix<f64>>,
    out: &Path,
    opts: WriteOptions,
) -> Result<WriteReport> {
    for (name, m) in edits {
        let info = base.info(name)?;
        let found = vec![m.nrows(), m.ncols()];
        if info.shape != found {
            return Err(Error::ShapeMismatch {
                what: format!("edit of `{name}`"),
                expected: info.shape.clone(),
                found,
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name.clone()));
        }
    }
    let edited: Vec<String> = edits.keys().cloned().collect();
    write_checkpoint_with(base, &edited, out, opts, |name| {
        Ok(edits.get(name).expect("validated edit").clone())
    })
}

/// Streaming variant of [`write_checkpoint`]: `produce` is called once per edited tensor, in
/// payload order, so callers never need to hold all edits in memory at once.
///
/// The file is assembled under a temporary name and renamed into place on success.
pub fn write_checkpoint_with<F>(
    base: &Checkpoint,
    edited: &[String],
    out: &Path,
    opts: WriteOptions,
    mut produce: F,
) -> Result<WriteReport>
where
    F: FnMut(&str) -> Result<DMatrix<f64>>,
{
    let mut layout = plan_layout(base, edited, opts)?;
    let header = encode_header(&layout, base.metadata())?;

    let tmp = temp_path(out);
    let result = (|| -> Result<WriteReport> {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(&tmp, e);
        w.write_all(&(header.len() as u64).to_le_bytes())
            .map_err(io)?;
        w.write_all(&header).map_err(io)?;

        let mut report = WriteReport {
            path: out.to_path_buf(),
            tensors: layout.len(),
            ..Default::default()
        };
        layout.sort_by_key(|t| t.info.data_offsets.0);
        let mut buf = Vec::new();
        for slot in &layout {
            buf.clear();
            if slot.edited {
                let m = produce(&slot.name)?;
                let expected = &base.info(&slot.name)?.shape;
                if expected != &[m.nrows(), m.ncols()] {
                    return Err(Error::ShapeMismatch {
                        what: format!("edit of `{}`", slot.name),
                        expected: expected.clone(),
                        found: vec![m.nrows(), m.ncols()],
                    });
                }
                let row_major: Vec<f64> = m.transpose().iter().copied().collect();
                if row_major.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(slot.name.clone()));
                }
                let dtype = slot.info.dtype;
                let max_rounding_error = row_major
                    .iter()
                    .map(|&v| (dtype.quantize(v) - v).abs())
                    .fold(0.0, f64::max);
                dtype.encode_into(&row_major, &mut buf);
                report.edited.push(EditRecord {
                    name: slot.name.clone(),
                    dtype,
                    max_rounding_error,
                });
            } else {
                buf = base.read_bytes(&slot.name)?;
                report.copied += 1;
            }
            debug_assert_eq!(buf.len(), slot.info.byte_len());
            w.write_all(&buf).map_err(io)?;
        }
        w.flush().map_err(io)?;
        report.edited.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(report)
    })();
    match result {
        Ok(report) => {
            std::fs::rename(&tmp, out).map_err(|e| Error::io(out, e))?;
            Ok(report)
        }
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}

struct Slot {
    name: String,
    info: TensorInfo,
    edited: bool,
}

/// Output layout keeps the base payload order. Offsets are unchanged unless `force_f32`
/// widens an edited tensor.
fn plan_layout(base: &Checkpoint, edited: &[String], opts: WriteOptions) -> Result<Vec<Slot>> {
    for name in edited {
        let info = base.info(name)?;
        if !info.is_matrix() {
            return Err(Error::NotMatrix {
                name: name.clone(),
                shape: info.shape.clone(),
            });
        }
    }
    let mut slots: Vec<Slot> = base
        .index()
        .iter()
        .map(|(name, info)| {
            let is_edit = edited.iter().any(|e| e == name);
            let mut info = info.clone();
            if is_edit && opts.force_f32 {
                info.dtype = Dtype::F32;
            }
            Slot {
                name: name.clone(),
                info,
                edited: is_edit,
            }
        })
        .collect();
    slots.sort_by_key(|s| base.index()[&s.name].data_offsets.0);
    let mut offset = 0;
    for s in &mut slots {
        let len = s.info.numel() * s.info.dtype.size();
        s.info.data_offsets = (offset, offset + len);
        offset += len;
    }
    Ok(slots)
}

fn encode_header(slots: &[Slot], metadata: &BTreeMap<String, String>) -> Result<Vec<u8>> {
    #[derive(Serialize)]
    struct Entry<'a> {
        dtype: &'a str,
        shape: &'a [usize],
        data_offsets: [usize; 2],
    }
    let mut map: BTreeMap<&str, serde_json::Value> = BTreeMap::new();
    if !metadata.is_empty() {
        map.insert(
            METADATA_KEY,
            serde_json::to_value(metadata).expect("string map serializes"),
        );
    }
    for s in slots {
        let entry = Entry {
            dtype: s.info.dtype.name(),
            shape: &s.info.shape,
            data_offsets: [s.info.data_offsets.0, s.info.data_offsets.1],
        };
        map.insert(
            &s.name,
            serde_json::to_value(entry).expect("entry serializes"),
        );
    }
    let mut bytes = serde_json::to_vec(&map).map_err(|e| Error::HeaderParse(e.to_string()))?;
    while bytes.len() % 8 != 0 {
        bytes.push(b' ');
    }
    Ok(bytes)
}

fn temp_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".partial");
    out.with_file_name(name)
}

/// Builds a checkpoint file from in-memory tensors; mainly for fixtures and tools.
///
/// Tensors are laid out in name order. Matrices are given in row-major order via `shape`.
pub fn build_checkpoint(
    out: &Path,
    tensors: &[(&str, Dtype, Vec<usize>, Vec<f64>)],
    metadata: &BTreeMap<String, String>,
) -> Result<()> {
    let mut sorted: Vec<_> = tensors.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    let mut payload = Vec::new();
    let mut slots = Vec::new();
    for (name, dtype, shape, values) in sorted {
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(Error::ShapeMismatch {
                what: format!("values of `{name}`"),
                expected: shape.clone(),
                found: vec![values.len()],
            });
        }
        let begin = payload.len();
        dtype.encode_into(values, &mut payload);
        slots.push(Slot {
            name: name.to_string(),
            info: TensorInfo {
                dtype: *dtype,
                shape: shape.clone(),
                data_offsets: (begin, payload.len()),
            },
            edited: false,
        });
    }
    let header = encode_header(&slots, metadata)?;
    let mut bytes = Vec::with_capacity(8 + header.len() + payload.len());
    bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header);
    bytes.extend_from_slice(&payload);
    std::fs::write(out, bytes).map_err(|e| Error::io(out, e))
}
