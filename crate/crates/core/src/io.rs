//! JSON formats for systems and perturbations.
//!
//! ```json
//! {"dimension": 2,
//!  "norm": "op2",
//!  "atoms": [{"tau": 0.5, "matrix": [[0.3, 0.0], [0.0, 0.2]]}],
//!  "density": {"breakpoints": [-1.0, -0.4, 0.0],
//!              "pieces": [[[0.1, 0.0], [0.0, 0.1]], [[0.0, 0.0], [0.0, 0.0]]]}}
//! ```
//!
//! `norm`, `atoms` and `density` are optional. Perturbations are tagged by
//! `kind`: `piecewise_linear` with `knots`, or `binning` with `bins`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, MatrixNorm};
use crate::measure::{Atom, Density, MatrixNbv};
use crate::perturbation::{Bin, Binning, Perturbation, PiecewiseLinear};

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    norm: Option<MatrixNorm>,
    #[serde(default)]
    atoms: Vec<AtomFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    density: Option<DensityFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomFile {
    tau: f64,
    matrix: Rows,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityFile {
    breakpoints: Vec<f64>,
    pieces: Vec<Rows>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PerturbationFile {
    PiecewiseLinear { knots: Vec<(f64, f64)> },
    Binning { bins: Vec<BinFile> },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BinFile {
    from: (f64, f64),
    to: f64,
}

fn matrix_from_rows(rows: &Rows, dim: usize, path: &str) -> Result<Mat> {
    if rows.len() != dim {
        return Err(Error::InvalidSystem(format!(
            "{path}: expected {dim} rows, got {}",
            rows.len()
        )));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(Error::InvalidSystem(format!(
                "{path}[{i}]: expected {dim} entries, got {}",
                r.len()
            )));
        }
    }
    Ok(Mat::from_fn(dim, dim, |i, j| rows[i][j]))
}

fn rows_of(m: &Mat) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Parses a system file. Syntax errors carry line and column; invariant
/// violations name the offending field.
pub fn parse_system(text: &str) -> Result<MatrixNbv> {
    let file: SystemFile =
        serde_json::from_str(text).map_err(|e| Error::InvalidSystem(e.to_string()))?;
    let d = file.dimension;
    if d == 0 {
        return Err(Error::InvalidSystem("dimension: must be positive".into()));
    }
    let atoms = file
        .atoms
        .iter()
        .enumerate()
        .map(|(k, a)| Ok(Atom::new(a.tau, matrix_from_rows(&a.matrix, d, &format!("atoms[{k}].matrix"))?)))
        .collect::<Result<Vec<_>>>()?;
    let density = match &file.density {
        None => Density::none(),
        Some(df) => {
            let pieces = df
                .pieces
                .iter()
                .enumerate()
                .map(|(j, p)| matrix_from_rows(p, d, &format!("density.pieces[{j}]")))
                .collect::<Result<Vec<_>>>()?;
            Density::new(df.breakpoints.clone(), pieces)?
        }
    };
    MatrixNbv::new(d, atoms, density, file.norm.unwrap_or_default())
}

pub fn system_to_json(m: &MatrixNbv) -> String {
    let file = SystemFile {
        dimension: m.dim(),
        norm: Some(m.norm()),
        atoms: m
            .atoms()
            .iter()
            .map(|a| AtomFile { tau: a.tau, matrix: rows_of(&a.matrix) })
            .collect(),
        density: m.has_density().then(|| DensityFile {
            breakpoints: m.density().breakpoints().to_vec(),
            pieces: m.density().pieces().iter().map(rows_of).collect(),
        }),
    };
    serde_json::to_string_pretty(&file).expect("plain data serializes")
}

pub fn parse_perturbation(text: &str) -> Result<Perturbation> {
    let file: PerturbationFile =
        serde_json::from_str(text).map_err(|e| Error::InvalidPerturbation(e.to_string()))?;
    match file {
        PerturbationFile::PiecewiseLinear { knots } => {
            Ok(Perturbation::PiecewiseLinear(PiecewiseLinear::new(knots)?))
        }
        PerturbationFile::Binning { bins } => Ok(Perturbation::Binning(Binning::new(
            bins.into_iter().map(|b| Bin { from: b.from, to: b.to }).collect(),
        )?)),
    }
}

pub fn perturbation_to_json(p: &Perturbation) -> String {
    let file = match p {
        Perturbation::PiecewiseLinear(pl) => {
            PerturbationFile::PiecewiseLinear { knots: pl.knots().to_vec() }
        }
        Perturbation::Binning(b) => PerturbationFile::Binning {
            bins: b.bins().into_iter().map(|c| BinFile { from: c.from, to: c.to }).collect(),
        },
    };
    serde_json::to_string(&file).expect("plain data serializes")
}
