//! Hidden-state tensor files.
//!
//! Layout (little-endian): 4-byte magic `CSHS`, u16 version, u8 layer tag,
//! u8 token tag, u32 rows, u32 columns, then rows*columns f32 values in
//! row-major order. A sidecar `<file>.ids.json` holds the item ids in row
//! order as a JSON array of strings.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: [u8; 4] = *b"CSHS";
pub const TENSOR_VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerTag {
    First,
    Middle,
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenTag {
    PreAnswer,
    LastAnswer,
}

impl LayerTag {
    pub const ALL: [LayerTag; 3] = [LayerTag::First, LayerTag::Middle, LayerTag::Last];

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(usize::from(c)).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            LayerTag::First => "first",
            LayerTag::Middle => "middle",
            LayerTag::Last => "last",
        }
    }
}

impl TokenTag {
    pub const ALL: [TokenTag; 2] = [TokenTag::PreAnswer, TokenTag::LastAnswer];

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(usize::from(c)).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            TokenTag::PreAnswer => "pre_answer",
            TokenTag::LastAnswer => "last_answer",
        }
    }
}

/// One (layer, token) grid position.
pub type Cell = (LayerTag, TokenTag);

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStateMatrix {
    pub item_ids: Vec<String>,
    pub features: Array2<f64>,
    pub layer: LayerTag,
    pub token: TokenTag,
    /// Hash of the file contents, or of the values for in-memory matrices.
    pub source: String,
}

impl fmt::Display for HiddenStateMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (n, d) = self.features.dim();
        write!(f, "{}/{} ({n}x{d})", self.layer.label(), self.token.label())
    }
}

impl HiddenStateMatrix {
    pub fn new(item_ids: Vec<String>, features: Array2<f64>, layer: LayerTag, token: TokenTag) -> Result<Self> {
        if features.nrows() != item_ids.len() {
            return Err(Error::Invalid(format!(
                "{} rows but {} item ids",
                features.nrows(),
                item_ids.len()
            )));
        }
        if features.ncols() == 0 {
            return Err(Error::Invalid("hidden-state matrix has no columns".into()));
        }
        if let Some(((r, c), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite feature at row {r}, column {c}")));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = item_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::Invalid(format!("duplicate item id {dup}")));
        }
        let mut h = Sha256::new();
        for v in features.iter() {
            h.update((*v as f32).to_le_bytes());
        }
        let source = hex::encode(&h.finalize()[..8]);
        Ok(HiddenStateMatrix { item_ids, features, layer, token, source })
    }

    pub fn cell(&self) -> Cell {
        (self.layer, self.token)
    }
}

fn ids_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids.json");
    PathBuf::from(s)
}

pub fn write_matrix(path: &Path, m: &HiddenStateMatrix) -> Result<()> {
    let (n, d) = m.features.dim();
    let mut buf = Vec::with_capacity(HEADER_LEN + n * d * 4);
    buf.extend_from_slice(&TENSOR_MAGIC);
    buf.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    buf.push(m.layer.code());
    buf.push(m.token.code());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    for v in m.features.iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, &buf).map_err(|e| Error::io(path, e))?;
    let ids = ids_path(path);
    fs::write(&ids, serde_json::to_vec(&m.item_ids)?).map_err(|e| Error::io(&ids, e))
}

pub fn read_matrix(path: &Path) -> Result<HiddenStateMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Invalid(format!("{}: {msg}", path.display()));
    if bytes.len() < HEADER_LEN || bytes[..4] != TENSOR_MAGIC {
        return Err(bad("not a hidden-state tensor file".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != TENSOR_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let layer = LayerTag::from_code(bytes[6]).ok_or_else(|| bad(format!("unknown layer tag {}", bytes[6])))?;
    let token = TokenTag::from_code(bytes[7]).ok_or_else(|| bad(format!("unknown token tag {}", bytes[7])))?;
    let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let d = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != n * d * 4 {
        return Err(bad(format!("expected {} data bytes for {n}x{d}, found {}", n * d * 4, body.len())));
    }
    let values: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    let features = Array2::from_shape_vec((n, d), values).map_err(|e| bad(e.to_string()))?;
    let ids = ids_path(path);
    let text = fs::read_to_string(&ids).map_err(|e| Error::io(&ids, e))?;
    let item_ids: Vec<String> = serde_json::from_str(&text).map_err(|e| bad(format!("bad id sidecar: {e}")))?;
    let mut m = HiddenStateMatrix::new(item_ids, features, layer, token).map_err(|e| bad(e.to_string()))?;
    m.source = hex::encode(&Sha256::digest(&bytes)[..8]);
    Ok(m)
}

/// Hidden states for one split, keyed by grid cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HiddenStateBundle {
    cells: BTreeMap<Cell, HiddenStateMatrix>,
}

impl HiddenStateBundle {
    pub fn from_matrices(matrices: Vec<HiddenStateMatrix>) -> Result<Self> {
        let mut cells = BTreeMap::new();
        for m in matrices {
            let cell = m.cell();
            if cells.insert(cell, m).is_some() {
                return Err(Error::Invalid(format!(
                    "cell {}/{} appears twice in bundle",
                    cell.0.label(),
                    cell.1.label()
                )));
            }
        }
        Ok(HiddenStateBundle { cells })
    }

    /// Every `*.hs` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "hs"))
            .collect();
        paths.sort();
        Self::from_matrices(paths.iter().map(|p| read_matrix(p)).collect::<Result<_>>()?)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for ((layer, token), m) in &self.cells {
            write_matrix(&dir.join(format!("{}-{}.hs", layer.label(), token.label())), m)?;
        }
        Ok(())
    }

    pub fn get(&self, cell: Cell) -> Option<&HiddenStateMatrix> {
        self.cells.get(&cell)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells.keys().copied()
    }
}
