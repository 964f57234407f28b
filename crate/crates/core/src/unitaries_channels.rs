//! Dynamics: Haar-random and named unitaries, mixtures of local product
//! unitaries, and noisy channels given by Kraus operators with their
//! Stinespring dilation.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::states::{DensityMatrix, StateVector, STATE_TOL};
use crate::tensor_core::{embed_operator, SubsystemLayout};
use crate::{CMatrix, CVector, Complex64};

/// Haar-distributed `dim × dim` unitary: QR of a complex Gaussian matrix,
/// with the phases of `R`'s diagonal moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    assert!(dim >= 1, "unitary dimension must be positive");
    let z = CMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        col *= phase;
    }
    q
}

/// `exp(-i·angle·G)` for Hermitian `G`.
pub fn unitary_from_generator(generator: &CMatrix, angle: f64) -> CMatrix {
    linalg::hermitian_function(generator, |x| Complex64::from_polar(1.0, -angle * x))
}

/// Standard single- and two-qubit gates, big-endian.
pub mod gates {
    use crate::{CMatrix, Complex64};

    fn real(n: usize, entries: &[f64]) -> CMatrix {
        CMatrix::from_row_slice(n, n, &entries.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>())
    }

    pub fn identity(dim: usize) -> CMatrix {
        CMatrix::identity(dim, dim)
    }

    pub fn hadamard() -> CMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        real(2, &[h, h, h, -h])
    }

    pub fn pauli_x() -> CMatrix {
        real(2, &[0.0, 1.0, 1.0, 0.0])
    }

    pub fn pauli_y() -> CMatrix {
        let i = Complex64::new(0.0, 1.0);
        CMatrix::from_row_slice(2, 2, &[Complex64::new(0.0, 0.0), -i, i, Complex64::new(0.0, 0.0)])
    }

    pub fn pauli_z() -> CMatrix {
        real(2, &[1.0, 0.0, 0.0, -1.0])
    }

    /// Controlled NOT with the first qubit as control.
    pub fn cnot() -> CMatrix {
        real(
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                0.0, 0.0, 1.0, 0.0,
            ],
        )
    }
}

/// A unitary acting on the listed subsystems, in the order given.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryOp {
    mat: CMatrix,
    targets: Vec<String>,
}

impl UnitaryOp {
    pub fn new<S: Into<String>>(mat: CMatrix, targets: impl IntoIterator<Item = S>) -> Result<Self> {
        let targets: Vec<String> = targets.into_iter().map(Into::into).collect();
        if targets.is_empty() {
            return Err(Error::InvalidLayout("unitary has no targets".into()));
        }
        for (i, t) in targets.iter().enumerate() {
            if targets[..i].contains(t) {
                return Err(Error::DuplicateLabel(t.clone()));
            }
        }
        if mat.nrows() != mat.ncols() {
            return Err(Error::WrongShape(format!("{}×{} unitary", mat.nrows(), mat.ncols())));
        }
        let dev = linalg::unitarity_deviation(&mat);
        if !(dev <= STATE_TOL) {
            return Err(Error::NotUnitary(dev));
        }
        Ok(Self { mat, targets })
    }

    pub fn identity<S: AsRef<str>>(targets: &[S], layout: &SubsystemLayout) -> Result<Self> {
        let d = layout.dim_of_all(targets)?;
        Self::new(CMatrix::identity(d, d), targets.iter().map(|t| t.as_ref().to_string()))
    }

    /// Haar-random unitary on `targets`.
    pub fn haar<S: AsRef<str>, R: Rng + ?Sized>(targets: &[S], layout: &SubsystemLayout, rng: &mut R) -> Result<Self> {
        let d = layout.dim_of_all(targets)?;
        Self::new(haar_unitary(d, rng), targets.iter().map(|t| t.as_ref().to_string()))
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    /// Full-register matrix of this operator.
    pub fn embed(&self, layout: &SubsystemLayout) -> Result<CMatrix> {
        embed_operator(&self.mat, &self.targets, layout)
    }

    /// `other · self`: apply `self` first, then `other`. Both must act on the
    /// same targets in the same order.
    pub fn then(&self, other: &UnitaryOp) -> Result<UnitaryOp> {
        if self.targets != other.targets {
            return Err(Error::InvalidLayout("composed unitaries act on different targets".into()));
        }
        Ok(Self { mat: &other.mat * &self.mat, targets: self.targets.clone() })
    }
}

/// States that unitaries can act on.
pub trait ApplyUnitary: Sized {
    fn apply_unitary(&self, u: &UnitaryOp) -> Result<Self>;
}

impl ApplyUnitary for StateVector {
    fn apply_unitary(&self, u: &UnitaryOp) -> Result<Self> {
        let full = u.embed(self.layout())?;
        let amps: CVector = full * self.amps();
        Ok(StateVector::from_parts_unchecked(self.layout().clone(), amps))
    }
}

impl ApplyUnitary for DensityMatrix {
    fn apply_unitary(&self, u: &UnitaryOp) -> Result<Self> {
        let full = u.embed(self.layout())?;
        let mat = &full * self.mat() * full.adjoint();
        Ok(DensityMatrix::from_parts_unchecked(self.layout().clone(), mat))
    }
}

/// One term `q · (U_alice ⊗ U_bob)` of a mixture of local unitaries.
#[derive(Debug, Clone, PartialEq)]
pub struct LoccTerm {
    pub prob: f64,
    pub alice: UnitaryOp,
    pub bob: UnitaryOp,
}

/// Classically correlated local unitaries `Σ qᵢ Uᵢ ⊗ Vᵢ`, applied as the
/// averaged map `ρ ↦ Σ qᵢ (Uᵢ⊗Vᵢ) ρ (Uᵢ⊗Vᵢ)†`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoccMixture {
    terms: Vec<LoccTerm>,
}

impl LoccMixture {
    pub fn new(terms: Vec<LoccTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::BadProbabilities("empty mixture".into()));
        }
        let mut total = 0.0;
        for t in &terms {
            if !(t.prob > 0.0 && t.prob.is_finite()) {
                return Err(Error::BadProbabilities(format!("probability {} is not positive", t.prob)));
            }
            if let Some(l) = t.alice.targets().iter().find(|l| t.bob.targets().contains(l)) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
            total += t.prob;
        }
        if (total - 1.0).abs() > STATE_TOL {
            return Err(Error::BadProbabilities(format!("probabilities sum to {total}")));
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[LoccTerm] {
        &self.terms
    }
}

/// `Σ qᵢ (Uᵢ⊗Vᵢ) ρ (Uᵢ⊗Vᵢ)†`.
pub fn apply_locc_mixture(rho: &DensityMatrix, mix: &LoccMixture) -> Result<DensityMatrix> {
    let n = rho.layout().total_dim();
    let mut mat = CMatrix::zeros(n, n);
    for t in mix.terms() {
        let out = rho.apply_unitary(&t.alice)?.apply_unitary(&t.bob)?;
        mat += out.mat() * Complex64::new(t.prob, 0.0);
    }
    Ok(DensityMatrix::from_parts_unchecked(rho.layout().clone(), mat))
}

/// Trace-preserving completely positive map on one subsystem, `ρ ↦ Σ KρK†`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumChannel {
    kraus: Vec<CMatrix>,
}

impl QuantumChannel {
    pub fn new(kraus: Vec<CMatrix>) -> Result<Self> {
        let first = kraus.first().ok_or_else(|| Error::WrongShape("no Kraus operators".into()))?;
        let d = first.nrows();
        if kraus.iter().any(|k| k.nrows() != d || k.ncols() != d) {
            return Err(Error::WrongShape("Kraus operators must be square and of equal size".into()));
        }
        let sum = kraus.iter().fold(CMatrix::zeros(d, d), |acc, k| acc + k.adjoint() * k);
        let dev = linalg::max_abs(&(sum - CMatrix::identity(d, d)));
        if !(dev <= STATE_TOL) {
            return Err(Error::NotTracePreserving(dev));
        }
        Ok(Self { kraus })
    }

    pub fn identity(dim: usize) -> Self {
        Self { kraus: vec![CMatrix::identity(dim, dim)] }
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    /// Dimension of the system the channel acts on.
    pub fn dim(&self) -> usize {
        self.kraus[0].nrows()
    }

    /// Environment dimension of the Stinespring dilation (the Kraus count).
    pub fn env_dim(&self) -> usize {
        self.kraus.len()
    }

    /// The channel acting on a bare matrix of the channel's dimension.
    pub fn apply_to_matrix(&self, m: &CMatrix) -> CMatrix {
        self.kraus.iter().fold(CMatrix::zeros(m.nrows(), m.ncols()), |acc, k| acc + k * m * k.adjoint())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    /// `ρ ↦ (1-p)ρ + p·I/2`.
    Depolarizing,
    /// Decay `|1⟩ → |0⟩` with probability `γ`.
    AmplitudeDamping,
    /// Loss of coherence with probability `λ`, populations untouched.
    PhaseDamping,
    Identity,
}

/// Standard qubit noise with parameter in `[0, 1]`.
pub fn named_channel(kind: ChannelKind, param: f64) -> Result<QuantumChannel> {
    if !(0.0..=1.0).contains(&param) {
        return Err(Error::BadParam(format!("channel parameter {param} outside [0, 1]")));
    }
    let c = |x: f64| Complex64::new(x, 0.0);
    let m = |e: [f64; 4]| CMatrix::from_row_slice(2, 2, &e.map(c));
    let kraus = match kind {
        ChannelKind::Identity => vec![gates::identity(2)],
        ChannelKind::Depolarizing => {
            let w = (param / 4.0).sqrt();
            vec![
                gates::identity(2) * c((1.0 - 0.75 * param).sqrt()),
                gates::pauli_x() * c(w),
                gates::pauli_y() * c(w),
                gates::pauli_z() * c(w),
            ]
        }
        ChannelKind::AmplitudeDamping => vec![
            m([1.0, 0.0, 0.0, (1.0 - param).sqrt()]),
            m([0.0, param.sqrt(), 0.0, 0.0]),
        ],
        ChannelKind::PhaseDamping => vec![
            m([1.0, 0.0, 0.0, (1.0 - param).sqrt()]),
            m([0.0, 0.0, 0.0, param.sqrt()]),
        ],
    };
    QuantumChannel::new(kraus)
}

/// Random channel from a Haar-random isometry into system ⊗ environment:
/// `Kᵢ[s, s'] = V[s·env_dim + i, s']`.
pub fn random_channel<R: Rng + ?Sized>(dim: usize, env_dim: usize, rng: &mut R) -> QuantumChannel {
    assert!(dim >= 1 && env_dim >= 1, "channel dimensions must be positive");
    let u = haar_unitary(dim * env_dim, rng);
    let kraus = (0..env_dim)
        .map(|i| CMatrix::from_fn(dim, dim, |s, t| u[(s * env_dim + i, t)]))
        .collect();
    QuantumChannel { kraus }
}

/// Applies `ch` to subsystem `target`.
pub fn apply_channel(rho: &DensityMatrix, ch: &QuantumChannel, target: &str) -> Result<DensityMatrix> {
    let d = rho.layout().dim_of(target)?;
    if d != ch.dim() {
        return Err(Error::DimensionMismatch { expected: d, found: ch.dim() });
    }
    let n = rho.layout().total_dim();
    let mut mat = CMatrix::zeros(n, n);
    for k in ch.kraus() {
        let e = embed_operator(k, &[target], rho.layout())?;
        mat += &e * rho.mat() * e.adjoint();
    }
    Ok(DensityMatrix::from_parts_unchecked(rho.layout().clone(), mat))
}

/// Isometry `V = Σ Kᵢ ⊗ |i_E⟩` from the system into system ⊗ environment,
/// with the system as the more significant factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Stinespring {
    pub isometry: CMatrix,
    pub sys_dim: usize,
    pub env_dim: usize,
}

impl Stinespring {
    /// A unitary `U` on system ⊗ environment with `U(|s⟩⊗|0_E⟩) = V|s⟩`.
    /// The remaining columns are an arbitrary orthonormal completion.
    pub fn unitary_completion(&self) -> CMatrix {
        let (d, k) = (self.sys_dim, self.env_dim);
        let n = d * k;
        let mut basis: Vec<CVector> = (0..d).map(|s| self.isometry.column(s).into_owned()).collect();
        for e in 0..n {
            if basis.len() == n {
                break;
            }
            let mut v = CVector::zeros(n);
            v[e] = Complex64::new(1.0, 0.0);
            for b in &basis {
                let overlap = b.dotc(&v);
                v -= b * overlap;
            }
            let norm = v.norm();
            if norm > 1e-6 {
                basis.push(v.unscale(norm));
            }
        }
        let mut u = CMatrix::zeros(n, n);
        let mut extra = basis[d..].iter();
        for col in 0..n {
            let v = if col % k == 0 { &basis[col / k] } else { extra.next().expect("completion size") };
            u.set_column(col, v);
        }
        u
    }
}

pub fn stinespring_dilate(ch: &QuantumChannel) -> Stinespring {
    let (d, k) = (ch.dim(), ch.env_dim());
    let isometry = CMatrix::from_fn(d * k, d, |row, s| ch.kraus()[row % k][(row / k, s)]);
    Stinespring { isometry, sys_dim: d, env_dim: k }
}

/// The channel realized as environment coupling: append `|0_E⟩`, apply the
/// completed Stinespring unitary on `target ⊗ E`, trace out `E`.
pub fn apply_channel_via_dilation(rho: &DensityMatrix, ch: &QuantumChannel, target: &str) -> Result<DensityMatrix> {
    let d = rho.layout().dim_of(target)?;
    if d != ch.dim() {
        return Err(Error::DimensionMismatch { expected: d, found: ch.dim() });
    }
    let dil = stinespring_dilate(ch);
    let env = rho.layout().fresh_label("E_env");
    let layout = rho.layout().extend(env.clone(), dil.env_dim)?;
    let mut env0 = CMatrix::zeros(dil.env_dim, dil.env_dim);
    env0[(0, 0)] = Complex64::new(1.0, 0.0);
    let joint = DensityMatrix::from_parts_unchecked(layout, rho.mat().kronecker(&env0));
    let u = UnitaryOp::new(dil.unitary_completion(), [target.to_string(), env])?;
    let evolved = joint.apply_unitary(&u)?;
    evolved.partial_trace(rho.layout().labels())
}

/// Parsed channel description: `kind:param` (`depolarizing:0.3`,
/// `amplitude_damping:0.2`, `phase_damping:0.5`, `identity`) or
/// `random:env_dim=k[:seed=s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ChannelSpec {
    Named { kind: ChannelKind, param: f64 },
    Random { env_dim: usize, seed: Option<u64> },
}

impl ChannelSpec {
    /// Builds the qubit channel. Random channels without a fixed seed draw
    /// from `fallback_seed`.
    pub fn build(&self, fallback_seed: u64) -> Result<QuantumChannel> {
        match *self {
            ChannelSpec::Named { kind, param } => named_channel(kind, param),
            ChannelSpec::Random { env_dim, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(fallback_seed));
                Ok(random_channel(2, env_dim, &mut rng))
            }
        }
    }
}

impl FromStr for ChannelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let head = parts.next().unwrap_or_default();
        let bad = |msg: String| Error::BadParam(format!("channel `{s}`: {msg}"));
        if head == "random" {
            let mut env_dim = None;
            let mut seed = None;
            for p in parts {
                match p.split_once('=') {
                    Some(("env_dim", v)) => env_dim = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                    Some(("seed", v)) => seed = Some(v.parse::<u64>().map_err(|e| bad(e.to_string()))?),
                    _ => return Err(bad(format!("unexpected field `{p}`"))),
                }
            }
            let env_dim = env_dim.ok_or_else(|| bad("missing env_dim".into()))?;
            if env_dim == 0 {
                return Err(bad("env_dim must be positive".into()));
            }
            return Ok(ChannelSpec::Random { env_dim, seed });
        }
        let kind = match head {
            "depolarizing" => ChannelKind::Depolarizing,
            "amplitude_damping" => ChannelKind::AmplitudeDamping,
            "phase_damping" => ChannelKind::PhaseDamping,
            "identity" => ChannelKind::Identity,
            other => return Err(bad(format!("unknown kind `{other}`"))),
        };
        let param = match (parts.next(), kind) {
            (Some(v), _) => v.parse::<f64>().map_err(|e| bad(e.to_string()))?,
            (None, ChannelKind::Identity) => 0.0,
            (None, _) => return Err(bad("missing parameter".into())),
        };
        if parts.next().is_some() {
            return Err(bad("too many fields".into()));
        }
        if !(0.0..=1.0).contains(&param) {
            return Err(bad(format!("parameter {param} outside [0, 1]")));
        }
        Ok(ChannelSpec::Named { kind, param })
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelSpec::Named { kind: ChannelKind::Identity, .. } => write!(f, "identity"),
            ChannelSpec::Named { kind, param } => {
                let name = match kind {
                    ChannelKind::Depolarizing => "depolarizing",
                    ChannelKind::AmplitudeDamping => "amplitude_damping",
                    ChannelKind::PhaseDamping => "phase_damping",
                    ChannelKind::Identity => unreachable!(),
                };
                write!(f, "{name}:{param}")
            }
            ChannelSpec::Random { env_dim, seed: None } => write!(f, "random:env_dim={env_dim}"),
            ChannelSpec::Random { env_dim, seed: Some(s) } => write!(f, "random:env_dim={env_dim}:seed={s}"),
        }
    }
}

impl From<ChannelSpec> for String {
    fn from(c: ChannelSpec) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for ChannelSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}
