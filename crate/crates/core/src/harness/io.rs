//! JSON file formats for states.
//!
//! Complex numbers are `[re, im]` pairs, matrices are row-major arrays of
//! rows, and every state carries its layout inline:
//!
//! ```json
//! {"kind": "pure", "layout": {"labels": ["A", "B"], "dims": [2, 2]},
//!  "amplitudes": [[0.7071067811865476, 0.0], [0.0, 0.0], [0.0, 0.0], [0.7071067811865476, 0.0]]}
//! ```
//!
//! Density matrices use `"kind": "density"` and a `"matrix"` field instead.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::states::{validate_density, DensityMatrix, StateVector};
use crate::tensor_core::SubsystemLayout;
use crate::{CMatrix, CVector, Complex64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateFile {
    Pure {
        layout: SubsystemLayout,
        amplitudes: Vec<Complex64>,
    },
    Density {
        layout: SubsystemLayout,
        matrix: Vec<Vec<Complex64>>,
    },
}

impl From<StateVector> for StateFile {
    fn from(s: StateVector) -> Self {
        StateFile::Pure { layout: s.layout().clone(), amplitudes: s.amps().iter().copied().collect() }
    }
}

impl From<DensityMatrix> for StateFile {
    fn from(rho: DensityMatrix) -> Self {
        let m = rho.mat();
        let matrix = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        StateFile::Density { layout: rho.layout().clone(), matrix }
    }
}

impl TryFrom<StateFile> for StateVector {
    type Error = Error;

    fn try_from(f: StateFile) -> Result<Self> {
        match f {
            StateFile::Pure { layout, amplitudes } => StateVector::new(layout, CVector::from_vec(amplitudes)),
            StateFile::Density { .. } => Err(Error::WrongShape("expected a pure state".into())),
        }
    }
}

impl TryFrom<StateFile> for DensityMatrix {
    type Error = Error;

    fn try_from(f: StateFile) -> Result<Self> {
        match f {
            StateFile::Pure { .. } => Ok(StateVector::try_from(f)?.to_density()),
            StateFile::Density { layout, matrix } => {
                let n = matrix.len();
                if matrix.iter().any(|row| row.len() != n) {
                    return Err(Error::WrongShape("matrix rows have unequal length".into()));
                }
                let flat: Vec<Complex64> = matrix.into_iter().flatten().collect();
                validate_density(CMatrix::from_row_slice(n, n, &flat), layout)
            }
        }
    }
}

/// A state read from disk, kept in whichever form the file used.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedState {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl LoadedState {
    pub fn layout(&self) -> &SubsystemLayout {
        match self {
            LoadedState::Pure(s) => s.layout(),
            LoadedState::Mixed(r) => r.layout(),
        }
    }

    pub fn to_density(&self) -> DensityMatrix {
        match self {
            LoadedState::Pure(s) => s.to_density(),
            LoadedState::Mixed(r) => r.clone(),
        }
    }
}

/// Failure to obtain a state from text or disk.
#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed state file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid state: {0}")]
    Invalid(#[from] Error),
}

pub fn parse_state(text: &str) -> std::result::Result<LoadedState, LoadError> {
    let file: StateFile = serde_json::from_str(text)?;
    Ok(match file {
        StateFile::Pure { .. } => LoadedState::Pure(StateVector::try_from(file)?),
        StateFile::Density { .. } => LoadedState::Mixed(DensityMatrix::try_from(file)?),
    })
}

pub fn load_state(path: &Path) -> std::result::Result<LoadedState, LoadError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| LoadError::Io { path: path.display().to_string(), source })?;
    parse_state(&text)
}
