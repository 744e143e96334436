//! On-disk dataset format.
//!
//! A dataset is a JSON manifest plus one plain-text matrix file per view per
//! instance. Matrix files hold one row per line, whitespace-separated, each
//! value printed with 17 significant digits so that a save/load round trip is
//! exact. Paths in the manifest are relative to the manifest's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use scpgcn_core::graph::{NetworkInstance, SYMMETRY_TOL};
use scpgcn_core::Matrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },
    #[error("{}, line {line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("instance `{id}` ({}): {message}", file.display())]
    Instance { id: String, file: PathBuf, message: String },
    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub structural_path: String,
    pub functional_path: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
    pub n: usize,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| DataError::Manifest { path: path.to_path_buf(), message: e.to_string() })?;
        let mut seen = BTreeSet::new();
        for r in &manifest.records {
            if !seen.insert(r.id.as_str()) {
                return Err(DataError::DuplicateId(r.id.clone()));
            }
        }
        Ok(manifest)
    }
}

/// Formats a matrix as text: one row per line, `{:.16e}` per entry.
pub fn format_matrix(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.rows() * m.cols() * 25);
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            write!(out, "{v:.16e}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    out
}

/// Parses a whitespace-delimited matrix. Blank lines are skipped; every row
/// must have the same length.
pub fn parse_matrix(text: &str, path: &Path) -> Result<Matrix, DataError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|e| DataError::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("`{tok}`: {e}"),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(DataError::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("{} values, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Matrix::from_vec(rows.len(), cols, rows.concat()).map_err(|e| DataError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

pub fn read_matrix(path: &Path) -> Result<Matrix, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_matrix(&text, path)
}

pub fn write_matrix(m: &Matrix, path: &Path) -> Result<(), DataError> {
    fs::write(path, format_matrix(m)).map_err(io_err(path))
}

/// Replaces a matrix by `(A + Aᵀ)/2`. Asymmetry above the tolerance is
/// still repaired, but with a warning, so no such repair goes unreported.
fn symmetrize(m: Matrix, id: &str, path: &Path) -> Matrix {
    let asym = m.max_asymmetry().expect("shape checked before symmetrizing");
    if asym == 0.0 {
        return m;
    }
    if asym > SYMMETRY_TOL {
        log::warn!(
            "instance `{id}` ({}): asymmetry {asym:e} exceeds {SYMMETRY_TOL:e}; using (A + A^T)/2",
            path.display()
        );
    }
    m.symmetrized().expect("square matrices symmetrize")
}

/// Loads and validates every instance named by the manifest.
pub fn load_dataset(manifest_path: &Path) -> Result<Vec<NetworkInstance>, DataError> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::with_capacity(manifest.records.len());
    for r in &manifest.records {
        let load = |rel: &str| -> Result<(PathBuf, Matrix), DataError> {
            let path = base.join(rel);
            let m = read_matrix(&path).map_err(|e| DataError::Instance {
                id: r.id.clone(),
                file: path.clone(),
                message: e.to_string(),
            })?;
            if m.shape() != (manifest.n, manifest.n) {
                return Err(DataError::Instance {
                    id: r.id.clone(),
                    file: path,
                    message: format!("matrix is {}x{}, manifest declares n = {}", m.rows(), m.cols(), manifest.n),
                });
            }
            let m = symmetrize(m, &r.id, &path);
            Ok((path, m))
        };
        let (s_path, structural) = load(&r.structural_path)?;
        let (f_path, functional) = load(&r.functional_path)?;
        if r.label > 1 {
            return Err(DataError::Manifest {
                path: manifest_path.to_path_buf(),
                message: format!("instance `{}`: label {} is not 0 or 1", r.id, r.label),
            });
        }
        // Shape and symmetry are settled above, so what remains is the
        // functional range or the structural sign/diagonal.
        let instance = NetworkInstance::new(r.id.clone(), structural, functional, r.label).map_err(|e| {
            let file = match &e {
                scpgcn_core::Error::OutOfRange { .. } => f_path.clone(),
                _ => s_path.clone(),
            };
            DataError::Instance { id: r.id.clone(), file, message: e.to_string() }
        })?;
        out.push(instance);
    }
    Ok(out)
}

fn file_stem_for(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Writes `<id>_structural.txt`, `<id>_functional.txt` per instance and a
/// manifest, returning the manifest path.
pub fn save_dataset(
    instances: &[NetworkInstance],
    dir: &Path,
    metadata: BTreeMap<String, String>,
) -> Result<PathBuf, DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let n = instances.first().map_or(0, NetworkInstance::node_count);
    let mut records = Vec::with_capacity(instances.len());
    let mut seen = BTreeSet::new();
    let mut stems = BTreeSet::new();
    for x in instances {
        if !seen.insert(x.id()) {
            return Err(DataError::DuplicateId(x.id().to_string()));
        }
        if x.node_count() != n {
            return Err(DataError::Instance {
                id: x.id().to_string(),
                file: dir.to_path_buf(),
                message: format!("{} nodes, expected {n}", x.node_count()),
            });
        }
        let stem = file_stem_for(x.id());
        if !stems.insert(stem.clone()) {
            return Err(DataError::Instance {
                id: x.id().to_string(),
                file: dir.to_path_buf(),
                message: format!("file name `{stem}` collides with another instance"),
            });
        }
        let structural_path = format!("{stem}_structural.txt");
        let functional_path = format!("{stem}_functional.txt");
        write_matrix(x.structural(), &dir.join(&structural_path))?;
        write_matrix(x.functional(), &dir.join(&functional_path))?;
        records.push(ManifestRecord { id: x.id().to_string(), structural_path, functional_path, label: x.label() });
    }
    let manifest = DatasetManifest { records, n, metadata };
    let path = dir.join(MANIFEST_FILE);
    write_json(&manifest, &path)?;
    Ok(path)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), DataError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| DataError::Manifest { path: path.to_path_buf(), message: e.to_string() })?;
    text.push('\n');
    write_text(&text, path)
}

pub fn write_text(text: &str, path: &Path) -> Result<(), DataError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| DataError::Manifest { path: path.to_path_buf(), message: e.to_string() })
}
