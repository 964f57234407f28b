//! Entropies and entanglement measures, all in bits (ebits).

mod eof;

pub use eof::{
    binary_entropy, concurrence, eof_two_qubit, eof_variational, eof_variational_from, EofMethod, EofResult, SearchMethod,
    OptConfig,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::states::{DensityMatrix, PureEnsemble, StateVector, SPECTRAL_FLOOR};
use crate::tensor_core::Bipartition;

/// An entropy or entanglement value in bits.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntropyValue(f64);

impl EntropyValue {
    pub const ZERO: EntropyValue = EntropyValue(0.0);

    pub fn bits(self) -> f64 {
        self.0
    }
}

impl std::fmt::Display for EntropyValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `-Σ λ log₂ λ` over a normalized spectrum; entries at or below the
/// spectral floor contribute nothing.
pub fn spectrum_entropy(spectrum: &[f64]) -> f64 {
    spectrum
        .iter()
        .filter(|&&l| l > SPECTRAL_FLOOR)
        .map(|&l| -l * l.log2())
        .sum::<f64>()
        .max(0.0)
}

pub fn von_neumann_entropy(rho: &DensityMatrix) -> EntropyValue {
    let cap = (rho.layout().total_dim() as f64).log2();
    EntropyValue(spectrum_entropy(&rho.eigenvalues()).min(cap))
}

/// Entanglement entropy computed separately from the left and right
/// marginals of a pure state.
pub fn pure_entanglement_sides(psi: &StateVector, cut: &Bipartition) -> Result<(EntropyValue, EntropyValue)> {
    let m = psi.cut_matrix(cut)?;
    let left = linalg::hermitian_eigenvalues(&(&m * m.adjoint()));
    let right = linalg::hermitian_eigenvalues(&(m.adjoint() * &m));
    Ok((EntropyValue(spectrum_entropy(&left)), EntropyValue(spectrum_entropy(&right))))
}

/// Entanglement of a pure state across `cut`: the entropy of either marginal.
pub fn pure_entanglement(psi: &StateVector, cut: &Bipartition) -> Result<EntropyValue> {
    let (left, right) = pure_entanglement_sides(psi, cut)?;
    debug_assert!(
        (left.0 - right.0).abs() <= 1e-9,
        "marginal entropies disagree: {} vs {}",
        left.0,
        right.0
    );
    Ok(left)
}

/// `Σ pᵢ E(ψᵢ)` across `cut`.
pub fn ensemble_avg_entanglement(ens: &PureEnsemble, cut: &Bipartition) -> Result<EntropyValue> {
    cut.check(ens.layout()).map_err(|_| Error::LayoutMismatch)?;
    let mut total = 0.0;
    for (p, psi) in ens.members() {
        total += p * pure_entanglement(psi, cut)?.0;
    }
    Ok(EntropyValue(total))
}

/// Entropies and margins of `|S(AB) − S(C)| ≤ S(ABC) ≤ S(AB) + S(C)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub s_ab: f64,
    pub s_c: f64,
    pub s_abc: f64,
    /// `S(ABC) − |S(AB) − S(C)|`.
    pub lower_margin: f64,
    /// `S(AB) + S(C) − S(ABC)`.
    pub upper_margin: f64,
}

impl InequalityReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.lower_margin >= -tol && self.upper_margin >= -tol
    }
}

/// Araki–Lieb and subadditivity for the split of `rho_full` into `part_ab`
/// and `part_c`.
pub fn check_entropy_inequality<S: AsRef<str>>(
    rho_full: &DensityMatrix,
    part_ab: &[S],
    part_c: &[S],
) -> Result<InequalityReport> {
    let layout = rho_full.layout();
    let cut = Bipartition::new(layout, part_ab)?;
    let c = layout
        .canonical_order(part_c)
        .map_err(|e| Error::InvalidBipartition(e.to_string()))?;
    if c != cut.right() {
        return Err(Error::InvalidBipartition("parts must be disjoint and cover the register".into()));
    }
    let s_ab = von_neumann_entropy(&rho_full.partial_trace(cut.left())?).0;
    let s_c = von_neumann_entropy(&rho_full.partial_trace(cut.right())?).0;
    let s_abc = von_neumann_entropy(rho_full).0;
    Ok(InequalityReport {
        s_ab,
        s_c,
        s_abc,
        lower_margin: s_abc - (s_ab - s_c).abs(),
        upper_margin: s_ab + s_c - s_abc,
    })
}
