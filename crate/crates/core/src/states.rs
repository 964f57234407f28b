//! Pure and mixed states on labeled registers, Schmidt decomposition and
//! canonical purification.

use nalgebra::SVD;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::io::StateFile;
use crate::linalg;
use crate::tensor_core::{self, Bipartition, SubsystemLayout};
use crate::{CMatrix, CVector, Complex64};

/// Tolerance on norms, traces, Hermiticity and eigenvalue positivity.
pub const STATE_TOL: f64 = 1e-10;
/// Schmidt coefficients and eigenvalues below this are treated as zero.
pub const SPECTRAL_FLOOR: f64 = 1e-12;

/// Normalized amplitude vector on a register.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "StateFile", try_from = "StateFile")]
pub struct StateVector {
    layout: SubsystemLayout,
    amps: CVector,
}

impl StateVector {
    pub fn new(layout: SubsystemLayout, amps: CVector) -> Result<Self> {
        if amps.len() != layout.total_dim() {
            return Err(Error::DimensionMismatch { expected: layout.total_dim(), found: amps.len() });
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { layout, amps })
    }

    /// Rescales `amps` to unit norm.
    pub fn normalized(layout: SubsystemLayout, amps: CVector) -> Result<Self> {
        let norm = amps.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::NotNormalized(norm));
        }
        Self::new(layout, amps.unscale(norm))
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(layout: SubsystemLayout, index: usize) -> Result<Self> {
        let n = layout.total_dim();
        if index >= n {
            return Err(Error::DimensionMismatch { expected: n, found: index });
        }
        let mut amps = CVector::zeros(n);
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Self { layout, amps })
    }

    /// `|0…0⟩`.
    pub fn zero(layout: SubsystemLayout) -> Self {
        Self::basis(layout, 0).expect("index 0 always exists")
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn amps(&self) -> &CVector {
        &self.amps
    }

    pub fn into_amps(self) -> CVector {
        self.amps
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.dotc(&other.amps)
    }

    /// Re-indexes to a new subsystem order.
    pub fn permute<S: AsRef<str>>(&self, new_order: &[S]) -> Result<StateVector> {
        let (amps, layout) = tensor_core::permute_vector(&self.amps, &self.layout, new_order)?;
        Ok(Self { layout, amps })
    }

    /// `self ⊗ other` on the concatenated layout.
    pub fn kron(&self, other: &StateVector) -> Result<StateVector> {
        let labels = self.layout.labels().iter().chain(other.layout.labels()).cloned();
        let dims = self.layout.dims().iter().chain(other.layout.dims()).copied().collect();
        let layout = SubsystemLayout::new(labels, dims)?;
        let amps = self.amps.kronecker(&other.amps);
        Ok(Self { layout, amps })
    }

    pub fn to_density(&self) -> DensityMatrix {
        pure_to_density(self)
    }

    /// Amplitudes reshaped into a `dim(left) × dim(right)` matrix.
    pub fn cut_matrix(&self, cut: &Bipartition) -> Result<CMatrix> {
        let (dl, dr) = cut.dims(&self.layout)?;
        let permuted = self.permute(&cut.order())?;
        Ok(CMatrix::from_fn(dl, dr, |i, j| permuted.amps[i * dr + j]))
    }

    pub(crate) fn from_parts_unchecked(layout: SubsystemLayout, amps: CVector) -> Self {
        Self { layout, amps }
    }
}

/// Hermitian, positive semidefinite, unit-trace matrix on a register.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "StateFile", try_from = "StateFile")]
pub struct DensityMatrix {
    layout: SubsystemLayout,
    mat: CMatrix,
}

impl DensityMatrix {
    /// Validates `mat`; see [`validate_density`].
    pub fn new(mat: CMatrix, layout: SubsystemLayout) -> Result<Self> {
        validate_density(mat, layout)
    }

    pub fn maximally_mixed(layout: SubsystemLayout) -> Self {
        let n = layout.total_dim();
        let mat = CMatrix::identity(n, n) * Complex64::new(1.0 / n as f64, 0.0);
        Self { layout, mat }
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(&self.mat)
    }

    /// Number of eigenvalues above [`SPECTRAL_FLOOR`].
    pub fn rank(&self) -> usize {
        self.eigenvalues().iter().filter(|&&l| l > SPECTRAL_FLOOR).count()
    }

    /// Marginal on `keep`, ordered as in this layout.
    pub fn partial_trace<S: AsRef<str>>(&self, keep: &[S]) -> Result<DensityMatrix> {
        let (mat, layout) = tensor_core::partial_trace(&self.mat, &self.layout, keep)?;
        Ok(Self { layout, mat: linalg::hermitian_part(&mat) })
    }

    pub fn permute<S: AsRef<str>>(&self, new_order: &[S]) -> Result<DensityMatrix> {
        let (mat, layout) = tensor_core::permute_matrix(&self.mat, &self.layout, new_order)?;
        Ok(Self { layout, mat })
    }

    /// `self ⊗ other` on the concatenated layout.
    pub fn kron(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        let labels = self.layout.labels().iter().chain(other.layout.labels()).cloned();
        let dims = self.layout.dims().iter().chain(other.layout.dims()).copied().collect();
        let layout = SubsystemLayout::new(labels, dims)?;
        Ok(Self { layout, mat: tensor_core::kron(&self.mat, &other.mat) })
    }

    /// Convex combination `Σ wᵢ ρᵢ` of states on one layout.
    pub fn mixture(terms: &[(f64, DensityMatrix)]) -> Result<DensityMatrix> {
        let (_, first) = terms.first().ok_or_else(|| Error::BadProbabilities("empty mixture".into()))?;
        check_probabilities(terms.iter().map(|(p, _)| *p))?;
        let mut mat = CMatrix::zeros(first.mat.nrows(), first.mat.ncols());
        for (p, rho) in terms {
            if rho.layout != first.layout {
                return Err(Error::LayoutMismatch);
            }
            mat += &rho.mat * Complex64::new(*p, 0.0);
        }
        Ok(Self { layout: first.layout.clone(), mat })
    }

    pub(crate) fn from_parts_unchecked(layout: SubsystemLayout, mat: CMatrix) -> Self {
        Self { layout, mat: linalg::hermitian_part(&mat) }
    }
}

/// `|ψ⟩⟨ψ|`.
pub fn pure_to_density(psi: &StateVector) -> DensityMatrix {
    let mat = &psi.amps * psi.amps.adjoint();
    DensityMatrix { layout: psi.layout.clone(), mat }
}

/// Accepts `mat` as a density matrix if it is Hermitian, has unit trace and
/// no eigenvalue below `-1e-10`. The accepted matrix is symmetrized; small
/// negative eigenvalues are clipped to zero and the trace renormalized.
pub fn validate_density(mat: CMatrix, layout: SubsystemLayout) -> Result<DensityMatrix> {
    let n = layout.total_dim();
    if mat.nrows() != n || mat.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: mat.nrows() });
    }
    if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NotHermitian(f64::NAN));
    }
    let dev = linalg::hermitian_deviation(&mat);
    if dev > STATE_TOL {
        return Err(Error::NotHermitian(dev));
    }
    let mat = linalg::hermitian_part(&mat);
    let tr = mat.trace().re;
    if (tr - 1.0).abs() > STATE_TOL {
        return Err(Error::BadTrace(tr));
    }
    let (values, vectors) = linalg::hermitian_eigen(&mat);
    let min = values.last().copied().unwrap_or(0.0);
    if min < -STATE_TOL {
        return Err(Error::NotPositive(min));
    }
    if min >= 0.0 {
        return Ok(DensityMatrix { layout, mat });
    }
    let clipped: Vec<f64> = values.iter().map(|&l| l.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let diag = CVector::from_iterator(n, clipped.iter().map(|&l| Complex64::new(l / total, 0.0)));
    let mat = &vectors * CMatrix::from_diagonal(&diag) * vectors.adjoint();
    Ok(DensityMatrix { layout, mat: linalg::hermitian_part(&mat) })
}

/// Schmidt coefficients and bases of a pure state across a cut.
#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtForm {
    pub cut: Bipartition,
    /// Descending, all above [`SPECTRAL_FLOOR`].
    pub coeffs: Vec<f64>,
    /// Orthonormal vectors on the left side of the cut.
    pub left_basis: Vec<CVector>,
    /// Orthonormal vectors on the right side of the cut.
    pub right_basis: Vec<CVector>,
}

impl SchmidtForm {
    pub fn rank(&self) -> usize {
        self.coeffs.len()
    }

    /// `Σ λᵢ |uᵢ⟩|vᵢ⟩`, with amplitudes in the cut's subsystem order.
    pub fn reconstruct(&self) -> CVector {
        let dl = self.left_basis.first().map_or(1, |v| v.len());
        let dr = self.right_basis.first().map_or(1, |v| v.len());
        let mut out = CVector::zeros(dl * dr);
        for ((c, u), v) in self.coeffs.iter().zip(&self.left_basis).zip(&self.right_basis) {
            out += u.kronecker(v) * Complex64::new(*c, 0.0);
        }
        out
    }

    /// Reconstruction mapped back into `layout`'s subsystem order.
    pub fn to_state(&self, layout: &SubsystemLayout) -> Result<StateVector> {
        let order = self.cut.order();
        let cut_layout = layout.select(&order)?;
        let (amps, out_layout) = tensor_core::permute_vector(&self.reconstruct(), &cut_layout, layout.labels())?;
        StateVector::normalized(out_layout, amps)
    }
}

/// Schmidt decomposition via SVD of the cut-reshaped amplitude matrix.
pub fn schmidt_decompose(psi: &StateVector, cut: &Bipartition) -> Result<SchmidtForm> {
    let m = psi.cut_matrix(cut)?;
    let svd = SVD::new(m, true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > SPECTRAL_FLOOR)
        .collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    Ok(SchmidtForm {
        cut: cut.clone(),
        coeffs: order.iter().map(|&k| svd.singular_values[k]).collect(),
        left_basis: order.iter().map(|&k| u.column(k).into_owned()).collect(),
        right_basis: order.iter().map(|&k| v_t.row(k).transpose()).collect(),
    })
}

/// Canonical purification `Σ √λⱼ |eⱼ⟩|j⟩` with an ancilla of dimension
/// equal to the rank of `rho`, appended as the last subsystem.
pub fn purify(rho: &DensityMatrix) -> Result<StateVector> {
    let (values, vectors) = linalg::hermitian_eigen(&rho.mat);
    let rank = values.iter().filter(|&&l| l > SPECTRAL_FLOOR).count().max(1);
    let label = rho.layout.fresh_label("anc");
    let layout = rho.layout.extend(label, rank)?;
    let n = rho.layout.total_dim();
    let mut amps = CVector::zeros(n * rank);
    for j in 0..rank {
        let w = values[j].max(0.0).sqrt();
        for s in 0..n {
            amps[s * rank + j] = vectors[(s, j)] * w;
        }
    }
    StateVector::normalized(layout, amps)
}

/// Finite ensemble `{pᵢ, |ψᵢ⟩}` of pure states on one layout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PureEnsemble {
    members: Vec<(f64, StateVector)>,
}

impl PureEnsemble {
    pub fn new(members: Vec<(f64, StateVector)>) -> Result<Self> {
        let (_, first) = members.first().ok_or_else(|| Error::BadProbabilities("empty ensemble".into()))?;
        if members.iter().any(|(_, s)| s.layout != first.layout) {
            return Err(Error::LayoutMismatch);
        }
        check_probabilities(members.iter().map(|(p, _)| *p))?;
        Ok(Self { members })
    }

    pub fn members(&self) -> &[(f64, StateVector)] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.members[0].1.layout
    }

    /// `Σ pᵢ |ψᵢ⟩⟨ψᵢ|`.
    pub fn to_density(&self) -> DensityMatrix {
        let n = self.layout().total_dim();
        let mut mat = CMatrix::zeros(n, n);
        for (p, s) in &self.members {
            mat += &s.amps * s.amps.adjoint() * Complex64::new(*p, 0.0);
        }
        DensityMatrix::from_parts_unchecked(self.layout().clone(), mat)
    }

    /// Applies `f` to every member, keeping the probabilities.
    pub fn map_members(&self, mut f: impl FnMut(&StateVector) -> Result<StateVector>) -> Result<PureEnsemble> {
        let members = self
            .members
            .iter()
            .map(|(p, s)| Ok((*p, f(s)?)))
            .collect::<Result<Vec<_>>>()?;
        PureEnsemble::new(members)
    }
}

fn check_probabilities(ps: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    for p in ps {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::BadProbabilities(format!("probability {p} is not positive")));
        }
        total += p;
    }
    if (total - 1.0).abs() > STATE_TOL {
        return Err(Error::BadProbabilities(format!("probabilities sum to {total}")));
    }
    Ok(())
}
