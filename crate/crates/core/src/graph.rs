//! Paired-network data model and the two graph operators: the normalized
//! Laplacian (spectral clustering) and the renormalized propagation matrix
//! (graph convolutions).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Absolute symmetry tolerance for adjacency matrices.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Which of a subject's two networks a matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewKind {
    Structural,
    Functional,
}

impl core::fmt::Display for ViewKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            ViewKind::Structural => "structural",
            ViewKind::Functional => "functional",
        })
    }
}

impl core::str::FromStr for ViewKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "structural" | "dti" => Ok(ViewKind::Structural),
            "functional" | "fmri" => Ok(ViewKind::Functional),
            other => Err(Error::invalid(format!("unknown view `{other}`"))),
        }
    }
}

/// One subject: a structural and a functional network over the same `n`
/// regions, plus a binary label (0 = control, 1 = patient).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    id: String,
    structural: Matrix,
    functional: Matrix,
    label: u8,
}

impl NetworkInstance {
    /// Validates every invariant; nothing is repaired here.
    pub fn new(id: impl Into<String>, structural: Matrix, functional: Matrix, label: u8) -> Result<Self> {
        let id = id.into();
        if label > 1 {
            return Err(Error::invalid(format!("{id}: label {label} is not 0 or 1")));
        }
        if !structural.is_square() || !functional.is_square() {
            return Err(Error::dim(format!("{id}: adjacency matrices must be square")));
        }
        if structural.rows() != functional.rows() {
            return Err(Error::dim(format!(
                "{id}: structural is {n}x{n} but functional is {m}x{m}",
                n = structural.rows(),
                m = functional.rows()
            )));
        }
        for (name, m) in [("structural", &structural), ("functional", &functional)] {
            m.check_finite(name)?;
            let asym = m.max_asymmetry()?;
            if asym > SYMMETRY_TOL {
                return Err(Error::NotSymmetric(asym));
            }
        }
        check_non_negative(&structural)?;
        let n = structural.rows();
        for i in 0..n {
            if structural[(i, i)] != 0.0 {
                return Err(Error::invalid(format!(
                    "{id}: structural diagonal entry {i} is {} (must be 0)",
                    structural[(i, i)]
                )));
            }
            for j in 0..n {
                let v = functional[(i, j)];
                if !(-1.0..=1.0).contains(&v) {
                    return Err(Error::OutOfRange { row: i, col: j, value: v });
                }
            }
        }
        Ok(NetworkInstance { id, structural, functional, label })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn structural(&self) -> &Matrix {
        &self.structural
    }

    pub fn functional(&self) -> &Matrix {
        &self.functional
    }

    pub fn view(&self, kind: ViewKind) -> &Matrix {
        match kind {
            ViewKind::Structural => &self.structural,
            ViewKind::Functional => &self.functional,
        }
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    pub fn node_count(&self) -> usize {
        self.structural.rows()
    }
}

pub fn labels(instances: &[NetworkInstance]) -> Vec<u8> {
    instances.iter().map(NetworkInstance::label).collect()
}

/// `D̂^(−1/2) (A + I) D̂^(−1/2)`, the operator applied at every GCN layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationMatrix(Matrix);

impl PropagationMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.rows()
    }

    /// Wraps an arbitrary square matrix, e.g. the identity in tests.
    pub fn from_matrix_unchecked(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dim("propagation matrix must be square"));
        }
        Ok(PropagationMatrix(m))
    }
}

fn check_adjacency(a: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::dim(format!("adjacency must be square, got {:?}", a.shape())));
    }
    a.check_finite("adjacency")?;
    let asym = a.max_asymmetry()?;
    if asym > SYMMETRY_TOL * a.max_abs().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    check_non_negative(a)
}

fn check_non_negative(a: &Matrix) -> Result<()> {
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            if a[(i, j)] < 0.0 {
                return Err(Error::NegativeWeight { row: i, col: j, value: a[(i, j)] });
            }
        }
    }
    Ok(())
}

/// `d_i^(−1/2)` with the convention `0` for isolated nodes.
pub fn inverse_sqrt_degrees(a: &Matrix) -> Vec<f64> {
    (0..a.rows())
        .map(|i| {
            let d: f64 = a.row(i).iter().sum();
            if d > 0.0 {
                1.0 / libm::sqrt(d)
            } else {
                0.0
            }
        })
        .collect()
}

/// `L = I − D^(−1/2) A D^(−1/2)`. Isolated nodes get an identity row.
pub fn normalized_laplacian(a: &Matrix) -> Result<Matrix> {
    check_adjacency(a)?;
    let n = a.rows();
    let s = inverse_sqrt_degrees(a);
    Ok(Matrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - s[i] * a[(i, j)] * s[j]
    }))
}

pub fn renormalized_propagation(a: &Matrix) -> Result<PropagationMatrix> {
    check_adjacency(a)?;
    let n = a.rows();
    let d: Vec<f64> = (0..n).map(|i| 1.0 + a.row(i).iter().sum::<f64>()).collect();
    // One rounding in the square root instead of two reciprocal roots.
    let p = Matrix::from_fn(n, n, |i, j| {
        let hat = a[(i, j)] + if i == j { 1.0 } else { 0.0 };
        if hat == 0.0 {
            0.0
        } else {
            hat / libm::sqrt(d[i] * d[j])
        }
    });
    Ok(PropagationMatrix(p))
}

/// Prepares a view for use as graph structure. Functional (signed
/// correlation) matrices become `|A|` with a zeroed diagonal; structural
/// matrices pass through.
pub fn as_structure(view: &Matrix, kind: ViewKind) -> Matrix {
    match kind {
        ViewKind::Structural => view.clone(),
        ViewKind::Functional => {
            let n = view.rows();
            Matrix::from_fn(n, view.cols(), |i, j| if i == j { 0.0 } else { view[(i, j)].abs() })
        }
    }
}

/// Divides by the largest entry so weights lie in `[0, 1]`. A global factor
/// keeps the matrix symmetric; the zero matrix is returned unchanged.
pub fn scale_to_unit_max(a: &Matrix) -> Matrix {
    let m = a.max_abs();
    if m > 0.0 {
        a.scale(1.0 / m)
    } else {
        a.clone()
    }
}
