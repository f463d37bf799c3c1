//! Matrix Market files and JSON system manifests.
//!
//! A manifest names one Matrix Market file per block, relative to the
//! manifest's directory:
//!
//! ```json
//! { "type": "dae",
//!   "dims": { "n_v": 30, "n_p": 6, "m": 2, "p": 2 },
//!   "matrices": { "E11": "E11.mtx", "A11": "A11.mtx", "N": ["N1.mtx"] },
//!   "v0": null }
//! ```
//!
//! ODE manifests use `E, A, H, N, B, C` with dims `n, m, p`; reduced models
//! are ODE manifests that additionally carry `CH, CN, D, V, W`. Absent
//! optional blocks are zero (an absent `E` is the identity).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::sparse::CooMatrix;
use crate::system_model::{DaeBlocks, QbDaeSystem, QbOdeSystem, ReducedQbSystem};
use crate::tensor_kron::HessianTensor;
use crate::{Error, Result};

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a real Matrix Market file (`coordinate` or `array`, `general` or
/// `symmetric`).
pub fn read_matrix_market(path: &Path) -> Result<CooMatrix> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_matrix_market(&text).map_err(|msg| parse_err(path, msg))
}

fn parse_matrix_market(text: &str) -> std::result::Result<CooMatrix, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    let fields: Vec<String> = header.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(format!("malformed Matrix Market header: {header:?}"));
    }
    let coordinate = match fields[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(format!("unsupported format {other:?}")),
    };
    match fields[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(format!("unsupported field {other:?} (only real matrices)")),
    }
    let symmetric = match fields[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(format!("unsupported symmetry {other:?}")),
    };
    let mut body = lines
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('%'));
    let size: Vec<usize> = body
        .next()
        .ok_or("missing size line")?
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| format!("bad size line: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let num = |t: &str| t.parse::<f64>().map_err(|e| format!("bad value {t:?}: {e}"));
    if coordinate {
        let [rows, cols, nnz] = size[..] else {
            return Err("coordinate size line must have three entries".into());
        };
        let mut trip = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
        for k in 0..nnz {
            let line = body.next().ok_or_else(|| format!("expected {nnz} entries, found {k}"))?;
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(format!("entry {}: expected `row col value`", k + 1));
            }
            let i: usize = t[0].parse().map_err(|e| format!("entry {}: {e}", k + 1))?;
            let j: usize = t[1].parse().map_err(|e| format!("entry {}: {e}", k + 1))?;
            if i == 0 || j == 0 {
                return Err(format!(
                    "entry {}: 0-based index detected (Matrix Market indices start at 1)",
                    k + 1
                ));
            }
            if i > rows || j > cols {
                return Err(format!("entry {}: ({i}, {j}) outside {rows}x{cols}", k + 1));
            }
            let v = num(t[2])?;
            trip.push((i - 1, j - 1, v));
            if symmetric && i != j {
                trip.push((j - 1, i - 1, v));
            }
        }
        if body.next().is_some() {
            return Err(format!("more than the declared {nnz} entries"));
        }
        CooMatrix::from_triplets(rows, cols, trip).map_err(|e| e.to_string())
    } else {
        let [rows, cols] = size[..] else {
            return Err("array size line must have two entries".into());
        };
        let vals: Vec<f64> = body.map(num).collect::<std::result::Result<_, _>>()?;
        let mut m = DMatrix::zeros(rows, cols);
        if symmetric {
            if rows != cols || vals.len() != rows * (rows + 1) / 2 {
                return Err("symmetric array needs the lower triangle of a square matrix".into());
            }
            let mut it = vals.into_iter();
            for j in 0..cols {
                for i in j..rows {
                    let v = it.next().expect("length checked");
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
        } else {
            if vals.len() != rows * cols {
                return Err(format!("expected {} values, found {}", rows * cols, vals.len()));
            }
            m = DMatrix::from_column_slice(rows, cols, &vals);
        }
        Ok(CooMatrix::from_dense(&m))
    }
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory followed by a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(contents).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

/// Dense matrix in `array real general` format.
pub fn write_dense(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut s = String::from("%%MatrixMarket matrix array real general\n");
    s.push_str(&format!("{} {}\n", m.nrows(), m.ncols()));
    for v in m.iter() {
        s.push_str(&format!("{v:e}\n"));
    }
    write_atomic(path, s.as_bytes())
}

/// Sparse matrix in `coordinate real general` format.
pub fn write_sparse(path: &Path, m: &CooMatrix) -> Result<()> {
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    s.push_str(&format!("{} {} {}\n", m.nrows(), m.ncols(), m.nnz()));
    for &(i, j, v) in m.entries() {
        s.push_str(&format!("{} {} {v:e}\n", i + 1, j + 1));
    }
    write_atomic(path, s.as_bytes())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixRef {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    #[serde(rename = "type")]
    kind: String,
    dims: BTreeMap<String, usize>,
    matrices: BTreeMap<String, MatrixRef>,
    #[serde(default)]
    v0: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    homogenized_inputs: Option<usize>,
}

/// A system read from a manifest.
#[derive(Debug, Clone)]
pub enum LoadedSystem {
    Ode(QbOdeSystem),
    Dae(QbDaeSystem),
    /// A reduced model; `base_inputs` is set when its inputs are the
    /// homogenized `[u; u ⊗ u; u̇]` channels of `base_inputs` original inputs.
    Reduced {
        system: ReducedQbSystem,
        base_inputs: Option<usize>,
    },
}

struct Loader<'a> {
    dir: PathBuf,
    manifest: &'a Manifest,
    path: &'a Path,
}

impl Loader<'_> {
    fn dim(&self, name: &str) -> Result<usize> {
        self.manifest
            .dims
            .get(name)
            .copied()
            .ok_or_else(|| parse_err(self.path, format!("dims.{name} missing")))
    }

    fn file(&self, key: &str) -> Result<Option<PathBuf>> {
        match self.manifest.matrices.get(key) {
            None => Ok(None),
            Some(MatrixRef::One(f)) => Ok(Some(self.dir.join(f))),
            Some(MatrixRef::Many(_)) => Err(parse_err(self.path, format!("{key} must be a single file"))),
        }
    }

    fn files(&self, key: &str) -> Result<Vec<PathBuf>> {
        match self.manifest.matrices.get(key) {
            None => Ok(Vec::new()),
            Some(MatrixRef::Many(fs)) => Ok(fs.iter().map(|f| self.dir.join(f)).collect()),
            Some(MatrixRef::One(_)) => Err(parse_err(self.path, format!("{key} must be a list of files"))),
        }
    }

    fn read_shaped(&self, key: &str, file: &Path, rows: (usize, &str), cols: (usize, &str)) -> Result<CooMatrix> {
        let m = read_matrix_market(file)?;
        if m.nrows() != rows.0 {
            return Err(parse_err(
                file,
                format!("{key}: expected {} rows ({} = {}), file has {}", rows.0, rows.1, rows.0, m.nrows()),
            ));
        }
        if m.ncols() != cols.0 {
            return Err(parse_err(
                file,
                format!("{key}: expected {} columns ({} = {}), file has {}", cols.0, cols.1, cols.0, m.ncols()),
            ));
        }
        Ok(m)
    }

    fn required(&self, key: &str, rows: (usize, &str), cols: (usize, &str)) -> Result<DMatrix<f64>> {
        let f = self
            .file(key)?
            .ok_or_else(|| parse_err(self.path, format!("matrix {key} missing")))?;
        Ok(self.read_shaped(key, &f, rows, cols)?.to_dense())
    }

    fn optional(&self, key: &str, rows: (usize, &str), cols: (usize, &str)) -> Result<Option<DMatrix<f64>>> {
        match self.file(key)? {
            None => Ok(None),
            Some(f) => Ok(Some(self.read_shaped(key, &f, rows, cols)?.to_dense())),
        }
    }

    fn list(&self, key: &str, rows: (usize, &str), cols: (usize, &str)) -> Result<Vec<DMatrix<f64>>> {
        self.files(key)?
            .iter()
            .map(|f| Ok(self.read_shaped(key, f, rows, cols)?.to_dense()))
            .collect()
    }

    fn hessian(&self, n: (usize, &str)) -> Result<Option<HessianTensor>> {
        match self.file("H")? {
            None => Ok(None),
            Some(f) => {
                let sq = n.0 * n.0;
                let m = self.read_shaped("H", &f, n, (sq, &format!("{}^2", n.1)))?;
                Ok(Some(HessianTensor::from_mode1(m)?.symmetrize()))
            }
        }
    }
}

/// Loads an ODE, descriptor or reduced system from a manifest.
pub fn load_system(manifest_path: &Path) -> Result<LoadedSystem> {
    let text = fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| parse_err(manifest_path, format!("invalid manifest: {e}")))?;
    let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let ld = Loader {
        dir,
        manifest: &manifest,
        path: manifest_path,
    };
    match manifest.kind.as_str() {
        "ode" => {
            let n = (ld.dim("n")?, "n");
            let m = (ld.dim("m")?, "m");
            let p = (ld.dim("p")?, "p");
            let e = ld.optional("E", n, n)?;
            let a = ld.required("A", n, n)?;
            let nlist = ld.list("N", n, n)?;
            let b = ld.required("B", n, m)?;
            let c = ld.required("C", p, n)?;
            let reduced = ld.manifest.matrices.contains_key("V");
            if reduced {
                let nf = (ld.dim("n_full")?, "n_full");
                let sq = (n.0 * n.0, "n^2");
                let h = ld.optional("H", n, sq)?.unwrap_or_else(|| DMatrix::zeros(n.0, sq.0));
                let system = ReducedQbSystem {
                    e: e.unwrap_or_else(|| DMatrix::identity(n.0, n.0)),
                    a,
                    h,
                    n: nlist,
                    b,
                    c,
                    ch: ld.optional("CHhat", p, sq)?.unwrap_or_else(|| DMatrix::zeros(p.0, sq.0)),
                    cn: ld.list("CNhat", p, n)?,
                    d: ld.optional("Dhat", p, m)?.unwrap_or_else(|| DMatrix::zeros(p.0, m.0)),
                    v: ld.required("V", nf, n)?,
                    w: ld.required("W", nf, n)?,
                };
                system.check()?;
                Ok(LoadedSystem::Reduced {
                    system,
                    base_inputs: manifest.homogenized_inputs,
                })
            } else {
                let h = ld.hessian(n)?.unwrap_or_else(|| HessianTensor::zeros(n.0));
                Ok(LoadedSystem::Ode(QbOdeSystem::new(e, a, h, nlist, b, c)?))
            }
        }
        "dae" => {
            let nv = (ld.dim("n_v")?, "n_v");
            let np = (ld.dim("n_p")?, "n_p");
            let m = (ld.dim("m")?, "m");
            let p = (ld.dim("p")?, "p");
            let v0 = match &manifest.v0 {
                None => None,
                Some(f) => {
                    let f = ld.dir.join(f);
                    let v = ld.read_shaped("v0", &f, nv, (1, "1"))?.to_dense();
                    Some(DVector::from_column_slice(v.as_slice()))
                }
            };
            let blocks = DaeBlocks {
                e11: ld.required("E11", nv, nv)?,
                a11: ld.required("A11", nv, nv)?,
                a12: ld.required("A12", nv, np)?,
                a21: ld.required("A21", np, nv)?,
                h: ld.hessian(nv)?,
                n: ld.list("N", nv, nv)?,
                b1: ld.required("B1", nv, m)?,
                b2: ld.optional("B2", np, m)?,
                c1: ld.required("C1", p, nv)?,
                c2: ld.optional("C2", p, np)?,
                d: ld.optional("D", p, m)?,
                v0,
            };
            Ok(LoadedSystem::Dae(QbDaeSystem::new(blocks)?))
        }
        other => Err(parse_err(manifest_path, format!("unknown system type {other:?}"))),
    }
}

struct Writer {
    dir: PathBuf,
    matrices: BTreeMap<String, MatrixRef>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            matrices: BTreeMap::new(),
        })
    }

    fn dense(&mut self, key: &str, m: &DMatrix<f64>) -> Result<()> {
        let f = format!("{key}.mtx");
        write_dense(&self.dir.join(&f), m)?;
        self.matrices.insert(key.into(), MatrixRef::One(f));
        Ok(())
    }

    fn sparse(&mut self, key: &str, m: &CooMatrix) -> Result<()> {
        let f = format!("{key}.mtx");
        write_sparse(&self.dir.join(&f), m)?;
        self.matrices.insert(key.into(), MatrixRef::One(f));
        Ok(())
    }

    fn list(&mut self, key: &str, ms: &[DMatrix<f64>]) -> Result<()> {
        if ms.is_empty() {
            return Ok(());
        }
        let mut names = Vec::with_capacity(ms.len());
        for (k, m) in ms.iter().enumerate() {
            let f = format!("{key}{}.mtx", k + 1);
            write_dense(&self.dir.join(&f), m)?;
            names.push(f);
        }
        self.matrices.insert(key.into(), MatrixRef::Many(names));
        Ok(())
    }

    fn finish(self, kind: &str, dims: BTreeMap<String, usize>, v0: Option<String>, homogenized_inputs: Option<usize>) -> Result<PathBuf> {
        let manifest = Manifest {
            kind: kind.into(),
            dims,
            matrices: self.matrices,
            v0,
            homogenized_inputs,
        };
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

fn is_identity(m: &DMatrix<f64>) -> bool {
    m.is_square() && *m == DMatrix::identity(m.nrows(), m.ncols())
}

fn is_zero(m: &DMatrix<f64>) -> bool {
    m.iter().all(|&x| x == 0.0)
}

/// Writes an ODE system into `dir`; returns the manifest path.
pub fn save_ode(sys: &QbOdeSystem, dir: &Path) -> Result<PathBuf> {
    let mut w = Writer::new(dir)?;
    if !is_identity(&sys.e) {
        w.dense("E", &sys.e)?;
    }
    w.dense("A", &sys.a)?;
    if !sys.h.is_zero() {
        w.sparse("H", sys.h.mode1())?;
    }
    w.list("N", &sys.n)?;
    w.dense("B", &sys.b)?;
    w.dense("C", &sys.c)?;
    let dims = BTreeMap::from([
        ("n".into(), sys.order()),
        ("m".into(), sys.inputs()),
        ("p".into(), sys.outputs()),
    ]);
    w.finish("ode", dims, None, None)
}

/// Writes a descriptor system into `dir`; returns the manifest path.
pub fn save_dae(sys: &QbDaeSystem, dir: &Path) -> Result<PathBuf> {
    let mut w = Writer::new(dir)?;
    w.dense("E11", &sys.e11)?;
    w.dense("A11", &sys.a11)?;
    w.dense("A12", &sys.a12)?;
    w.dense("A21", &sys.a21)?;
    if !sys.h.is_zero() {
        w.sparse("H", sys.h.mode1())?;
    }
    w.list("N", &sys.n)?;
    w.dense("B1", &sys.b1)?;
    if !is_zero(&sys.b2) {
        w.dense("B2", &sys.b2)?;
    }
    w.dense("C1", &sys.c1)?;
    if !is_zero(&sys.c2) {
        w.dense("C2", &sys.c2)?;
    }
    if !is_zero(&sys.d) {
        w.dense("D", &sys.d)?;
    }
    let v0 = if sys.v0.iter().any(|&x| x != 0.0) {
        let f = "v0.mtx".to_string();
        write_dense(&dir.join(&f), &DMatrix::from_column_slice(sys.nv(), 1, sys.v0.as_slice()))?;
        Some(f)
    } else {
        None
    };
    let dims = BTreeMap::from([
        ("n_v".into(), sys.nv()),
        ("n_p".into(), sys.np()),
        ("m".into(), sys.inputs()),
        ("p".into(), sys.outputs()),
    ]);
    w.finish("dae", dims, v0, None)
}

/// Writes a reduced model (with its bases and output corrections) into
/// `dir`; returns the manifest path.
pub fn save_reduced(sys: &ReducedQbSystem, base_inputs: Option<usize>, dir: &Path) -> Result<PathBuf> {
    sys.check()?;
    let mut w = Writer::new(dir)?;
    w.dense("E", &sys.e)?;
    w.dense("A", &sys.a)?;
    w.dense("H", &sys.h)?;
    w.list("N", &sys.n)?;
    w.dense("B", &sys.b)?;
    w.dense("C", &sys.c)?;
    w.dense("CHhat", &sys.ch)?;
    w.list("CNhat", &sys.cn)?;
    w.dense("Dhat", &sys.d)?;
    w.dense("V", &sys.v)?;
    w.dense("W", &sys.w)?;
    let dims = BTreeMap::from([
        ("n".into(), sys.order()),
        ("n_full".into(), sys.v.nrows()),
        ("m".into(), sys.inputs()),
        ("p".into(), sys.outputs()),
    ]);
    w.finish("ode", dims, None, base_inputs)
}
