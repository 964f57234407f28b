//! Entanglement of formation: the least average pure-state entanglement over
//! all pure-state decompositions of a mixed state.
//!
//! Two backends. For two qubits the concurrence gives the exact value. In
//! general the minimum is searched numerically: every decomposition of `ρ`
//! into `m` (unnormalized) vectors is `vᵢ = Σⱼ Uᵢⱼ √λⱼ |eⱼ⟩` for an `m × m`
//! unitary `U` acting on the eigen-decomposition, so the search walks over
//! unitaries, or equivalently over `m × r` isometries for a rank-`r` state.
//! Two local searches are available from several random starting points:
//! Riemannian conjugate gradient on the isometries (the default), and a
//! derivative-free coordinate descent over two-member Givens rotations.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use nalgebra::{Matrix2, Matrix4};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::seeding::derive_seed;
use crate::states::{DensityMatrix, PureEnsemble, StateVector, SPECTRAL_FLOOR};
use crate::tensor_core::{permute_vector, Bipartition};
use crate::unitaries_channels::haar_unitary;
use crate::{CMatrix, CVector, Complex64};

use super::{pure_entanglement, EntropyValue};

/// Settings of the variational search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptConfig {
    /// Decomposition size; `None` means `rank²`. Never below the rank.
    pub max_ensemble: Option<usize>,
    /// Independent random starting points.
    pub restarts: usize,
    /// A restart stops once an iteration improves the objective by less.
    pub tol: f64,
    /// Iteration cap per restart (line searches, or sweeps for Givens).
    pub max_iters: usize,
    pub seed: u64,
    pub method: SearchMethod,
}

/// Local search used by the variational bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    /// Polak–Ribière conjugate gradient with Armijo backtracking.
    #[default]
    ConjugateGradient,
    /// Pattern search over Givens rotations of member pairs.
    Givens,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            max_ensemble: None,
            restarts: 20,
            tol: 1e-6,
            max_iters: 5000,
            seed: 0,
            method: SearchMethod::ConjugateGradient,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::BadParam("restarts must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::BadParam("tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::BadParam("max_iters must be at least 1".into()));
        }
        if self.max_ensemble == Some(0) {
            return Err(Error::BadParam("max_ensemble must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EofMethod {
    ClosedForm,
    Variational,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EofResult {
    /// Entanglement of formation in ebits; for the variational method an
    /// upper bound.
    pub value: f64,
    pub method: EofMethod,
    pub converged: bool,
    pub restarts_used: usize,
    /// The decomposition achieving `value`, when the method produces one.
    pub decomposition: Option<PureEnsemble>,
}

impl EofResult {
    pub fn entropy(&self) -> EntropyValue {
        EntropyValue(self.value)
    }
}

/// `h(x) = -x log₂ x - (1-x) log₂(1-x)`.
pub fn binary_entropy(x: f64) -> f64 {
    let term = |p: f64| if p > SPECTRAL_FLOOR { -p * p.log2() } else { 0.0 };
    term(x) + term(1.0 - x)
}

/// Two-qubit concurrence `max(0, λ₁ − λ₂ − λ₃ − λ₄)`, with `λᵢ` the
/// decreasing square roots of the eigenvalues of `ρ (σ_y⊗σ_y) ρ* (σ_y⊗σ_y)`.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    let layout = rho.layout();
    if layout.dims() != [2, 2] {
        return Err(Error::WrongShape(format!(
            "closed-form entanglement of formation needs two qubits, got dims {:?}",
            layout.dims()
        )));
    }
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    #[rustfmt::skip]
    let yy = CMatrix::from_row_slice(4, 4, &[
        zero, zero, zero, -one,
        zero, zero, one, zero,
        zero, one, zero, zero,
        -one, zero, zero, zero,
    ]);
    // λᵢ are the singular values of √ρ·(σ_y⊗σ_y)·√ρ*, whose Gram matrix is
    // √ρ ρ̃ √ρ; taking them directly avoids square roots of rounding noise.
    let sqrt_rho = linalg::hermitian_function(rho.mat(), |x| Complex64::new(x.max(0.0).sqrt(), 0.0));
    let x = &sqrt_rho * &yy * sqrt_rho.conjugate();
    let mut lambdas: Vec<f64> = x.singular_values().iter().copied().collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).clamp(0.0, 1.0))
}

/// Exact entanglement of formation of a two-qubit state.
pub fn eof_two_qubit(rho: &DensityMatrix) -> Result<EofResult> {
    let c = concurrence(rho)?;
    let value = binary_entropy(0.5 * (1.0 + (1.0 - c * c).max(0.0).sqrt()));
    Ok(EofResult { value, method: EofMethod::ClosedForm, converged: true, restarts_used: 0, decomposition: None })
}

/// Variational upper bound on the entanglement of formation across `cut`.
pub fn eof_variational(rho: &DensityMatrix, cut: &Bipartition, cfg: &OptConfig) -> Result<EofResult> {
    run(rho, cut, cfg, None)
}

/// As [`eof_variational`], with `start` (a decomposition of `rho`) as an
/// additional starting point, so the result never exceeds its average.
pub fn eof_variational_from(
    rho: &DensityMatrix,
    cut: &Bipartition,
    cfg: &OptConfig,
    start: &PureEnsemble,
) -> Result<EofResult> {
    if start.layout() != rho.layout() {
        return Err(Error::LayoutMismatch);
    }
    let dev = linalg::max_abs(&(start.to_density().mat() - rho.mat()));
    if dev > 1e-9 {
        return Err(Error::BadParam(format!("start ensemble does not realize the state (deviation {dev:e})")));
    }
    run(rho, cut, cfg, Some(start))
}

fn run(rho: &DensityMatrix, cut: &Bipartition, cfg: &OptConfig, start: Option<&PureEnsemble>) -> Result<EofResult> {
    cfg.validate()?;
    let layout = rho.layout();
    let (dl, dr) = cut.dims(layout)?;
    let order = cut.order();
    let cut_layout = layout.select(&order)?;

    let (values, vectors) = linalg::hermitian_eigen(rho.mat());
    let rank = values.iter().filter(|&&l| l > SPECTRAL_FLOOR).count();
    if rank <= 1 {
        let psi = StateVector::normalized(layout.clone(), vectors.column(0).into_owned())?;
        let value = pure_entanglement(&psi, cut)?.bits();
        return Ok(EofResult {
            value,
            method: EofMethod::Variational,
            converged: true,
            restarts_used: 0,
            decomposition: Some(PureEnsemble::new(vec![(1.0, psi)])?),
        });
    }

    let to_cut_order = |v: CVector| -> Result<CVector> { Ok(permute_vector(&v, layout, &order)?.0) };
    // columns √λⱼ |eⱼ⟩ in cut order
    let mut weighted = CMatrix::zeros(dl * dr, rank);
    for j in 0..rank {
        weighted.set_column(j, &to_cut_order(vectors.column(j) * Complex64::new(values[j].sqrt(), 0.0))?);
    }
    let members = cfg.max_ensemble.unwrap_or(rank * rank).max(rank);
    let kernel = CutKernel::new(dl, dr);

    let mut starts: Vec<CMatrix> = Vec::new();
    if let Some(ens) = start {
        // sᵢ = Σⱼ Vᵢⱼ √λⱼ |eⱼ⟩, so Vᵢⱼ = ⟨eⱼ|sᵢ⟩ / √λⱼ
        let m = members.max(ens.len());
        let mut v = CMatrix::zeros(m, rank);
        for (i, (p, s)) in ens.members().iter().enumerate() {
            let s = to_cut_order(s.amps() * Complex64::new(p.sqrt(), 0.0))?;
            for j in 0..rank {
                v[(i, j)] = weighted.column(j).dotc(&s) / Complex64::new(values[j], 0.0);
            }
        }
        starts.push(v);
    }
    let seeded = starts.len();

    let outcomes: Vec<Restart> = (0..cfg.restarts + seeded)
        .into_par_iter()
        .map(|idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, idx as u64));
            let v = if idx < seeded {
                starts[idx].clone()
            } else {
                haar_unitary(members, &mut rng).columns(0, rank).into_owned()
            };
            match cfg.method {
                SearchMethod::ConjugateGradient => Gradient::new(&kernel, &weighted).minimize(v, cfg),
                SearchMethod::Givens => Search::new(&kernel, member_vectors(&weighted, &v)).minimize(cfg, &mut rng),
            }
        })
        .collect();

    let best = outcomes
        .into_iter()
        .reduce(|a, b| if b.value < a.value { b } else { a })
        .expect("at least one restart");

    let kept: Vec<(f64, CVector)> = best
        .vecs
        .into_iter()
        .filter_map(|v| {
            let p: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            (p > 1e-14).then(|| (p, CVector::from_vec(v)))
        })
        .collect();
    let total: f64 = kept.iter().map(|(p, _)| p).sum();
    let decomposition = kept
        .into_iter()
        .map(|(p, v)| {
            let (amps, back) = permute_vector(&v, &cut_layout, layout.labels())?;
            Ok((p / total, StateVector::normalized(back, amps)?))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EofResult {
        value: best.value,
        method: EofMethod::Variational,
        converged: best.converged,
        restarts_used: cfg.restarts + seeded,
        decomposition: Some(PureEnsemble::new(decomposition)?),
    })
}

/// Columns of `W Vᵀ`: the member vectors `Σⱼ Vᵢⱼ wⱼ`.
fn member_vectors(weighted: &CMatrix, v: &CMatrix) -> Vec<Vec<Complex64>> {
    let x = weighted * v.transpose();
    x.column_iter().map(|c| c.iter().copied().collect()).collect()
}

/// Evaluates `p · S(Tr_R |v⟩⟨v| / p)` for unnormalized vectors reshaped as
/// `dl × dr`, using the smaller marginal.
struct CutKernel {
    dl: usize,
    dr: usize,
}

impl CutKernel {
    fn new(dl: usize, dr: usize) -> Self {
        Self { dl, dr }
    }

    fn term(&self, v: &[Complex64]) -> f64 {
        let p: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if p <= 1e-300 {
            return 0.0;
        }
        let (dl, dr) = (self.dl, self.dr);
        let small = dl.min(dr);
        // reduced[a][b] on the smaller side
        let entry = |a: usize, b: usize| -> Complex64 {
            if dl <= dr {
                (0..dr).map(|j| v[a * dr + j] * v[b * dr + j].conj()).sum()
            } else {
                (0..dl).map(|i| v[i * dr + a] * v[i * dr + b].conj()).sum()
            }
        };
        let mut spectrum = [0.0f64; 4];
        let dynamic;
        let eig: &[f64] = match small {
            1 => return 0.0,
            2 => {
                let a = entry(0, 0).re;
                let d = entry(1, 1).re;
                let b = entry(0, 1);
                let mean = 0.5 * (a + d);
                let half_gap = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
                spectrum[0] = mean + half_gap;
                spectrum[1] = mean - half_gap;
                &spectrum[..2]
            }
            4 => {
                let m = Matrix4::from_fn(|a, b| if a <= b { entry(a, b) } else { entry(b, a).conj() });
                let e = m.symmetric_eigenvalues();
                spectrum.copy_from_slice(e.as_slice());
                &spectrum[..]
            }
            _ => {
                let m = CMatrix::from_fn(small, small, |a, b| if a <= b { entry(a, b) } else { entry(b, a).conj() });
                dynamic = m.symmetric_eigenvalues();
                dynamic.as_slice()
            }
        };
        eig.iter()
            .filter(|&&mu| mu / p > SPECTRAL_FLOOR)
            .map(|&mu| -mu * (mu / p).log2())
            .sum::<f64>()
            .max(0.0)
    }

    /// The term together with its gradient `g` with respect to `v̄`, so that
    /// a perturbation changes the term by `2 Re⟨dv, g⟩`.
    fn term_grad(&self, v: &[Complex64], g: &mut [Complex64]) -> f64 {
        g.fill(Complex64::new(0.0, 0.0));
        let (dl, dr) = (self.dl, self.dr);
        let p: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let small = dl.min(dr);
        if p <= 1e-300 || small == 1 {
            return 0.0;
        }
        let left = dl <= dr;
        let big = dl.max(dr);
        // `at(s, b)`: entry of the reshaped vector, `s` on the smaller side
        let index = |s: usize, b: usize| if left { s * dr + b } else { b * dr + s };
        let entry = |a: usize, c: usize| -> Complex64 { (0..big).map(|b| v[index(a, b)] * v[index(c, b)].conj()).sum() };
        let mut value = 0.0;
        let mut log_of = |mu: f64| {
            let x = mu / p;
            if x > SPECTRAL_FLOOR {
                value -= mu * x.log2();
            }
            x.max(SPECTRAL_FLOOR).log2()
        };
        // log₂(R/p) with R the reduced matrix (conjugated when the right side
        // is smaller, which leaves the formula below unchanged)
        let log_reduced: CMatrix = match small {
            2 => {
                let e = Matrix2::from_fn(|a, c| if a <= c { entry(a, c) } else { entry(c, a).conj() }).symmetric_eigen();
                let d = Matrix2::from_diagonal(&e.eigenvalues.map(|mu| Complex64::new(log_of(mu), 0.0)));
                let l = e.eigenvectors * d * e.eigenvectors.adjoint();
                CMatrix::from_column_slice(2, 2, l.as_slice())
            }
            4 => {
                let e = Matrix4::from_fn(|a, c| if a <= c { entry(a, c) } else { entry(c, a).conj() }).symmetric_eigen();
                let d = Matrix4::from_diagonal(&e.eigenvalues.map(|mu| Complex64::new(log_of(mu), 0.0)));
                let l = e.eigenvectors * d * e.eigenvectors.adjoint();
                CMatrix::from_column_slice(4, 4, l.as_slice())
            }
            _ => {
                let r = CMatrix::from_fn(small, small, |a, c| if a <= c { entry(a, c) } else { entry(c, a).conj() });
                let e = r.symmetric_eigen();
                let d = CMatrix::from_diagonal(&e.eigenvalues.map(|mu| Complex64::new(log_of(mu), 0.0)));
                &e.eigenvectors * d * e.eigenvectors.adjoint()
            }
        };
        for s in 0..small {
            for b in 0..big {
                g[index(s, b)] = -(0..small).map(|t| log_reduced[(s, t)] * v[index(t, b)]).sum::<Complex64>();
            }
        }
        value.max(0.0)
    }
}

/// Real part of the Frobenius inner product.
fn re_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Projection onto the tangent space of the isometries at `v`.
fn project(v: &CMatrix, x: &CMatrix) -> CMatrix {
    let a = v.adjoint() * x;
    let sym = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
    x - v * sym
}

/// QR retraction with the phases of `R`'s diagonal moved into `Q`.
fn retract(y: CMatrix) -> CMatrix {
    let qr = y.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            col *= d / d.norm();
        }
    }
    q
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const STALL_LIMIT: usize = 3;
/// Iterations in a row below `tol` that end a search regardless of the gradient.
const LONG_STALL: usize = 25;
/// Largest Frobenius step along a search direction.
const MAX_MOVE: f64 = 1.0;
/// Restart threshold on the overlap of successive gradients.
const POWELL: f64 = 0.2;

/// Conjugate-gradient search over `m × r` isometries.
struct Gradient<'a> {
    kernel: &'a CutKernel,
    weighted: &'a CMatrix,
}

impl<'a> Gradient<'a> {
    fn new(kernel: &'a CutKernel, weighted: &'a CMatrix) -> Self {
        Self { kernel, weighted }
    }

    fn value(&self, v: &CMatrix) -> f64 {
        let x = self.weighted * v.transpose();
        x.column_iter().map(|c| self.kernel.term(c.as_slice())).sum()
    }

    /// Objective and Euclidean gradient with respect to `V̄`.
    fn value_grad(&self, v: &CMatrix) -> (f64, CMatrix) {
        let x = self.weighted * v.transpose();
        let mut gamma = CMatrix::zeros(x.nrows(), x.ncols());
        let mut value = 0.0;
        for (c, mut gc) in x.column_iter().zip(gamma.column_iter_mut()) {
            value += self.kernel.term_grad(c.as_slice(), gc.as_mut_slice());
        }
        (value, gamma.transpose() * self.weighted.conjugate())
    }

    fn minimize(&self, mut v: CMatrix, cfg: &OptConfig) -> Restart {
        let (mut f, z) = self.value_grad(&v);
        let mut g = project(&v, &z);
        let mut gg = re_inner(&g, &g);
        let mut d = -&g;
        let mut step = 1.0f64;
        let mut stalls = 0;
        let mut converged = gg == 0.0;
        for _ in 0..cfg.max_iters {
            if converged {
                break;
            }
            let mut slope = 2.0 * re_inner(&g, &d);
            if slope >= 0.0 {
                d = -&g;
                slope = -2.0 * gg;
            }
            let cap = MAX_MOVE / d.norm().max(1e-300);
            let mut t = (2.0 * step).min(cap);
            let mut accepted = None;
            let mut backtracked = false;
            for _ in 0..MAX_BACKTRACKS {
                let trial = retract(&v + &d * Complex64::new(t, 0.0));
                let ft = self.value(&trial);
                if ft <= f + ARMIJO * t * slope {
                    accepted = Some((trial, ft));
                    break;
                }
                t *= 0.5;
                backtracked = true;
            }
            let Some((mut next, mut f_next)) = accepted else {
                // no descent left at working precision
                converged = true;
                break;
            };
            while !backtracked && 2.0 * t <= cap {
                let trial = retract(&v + &d * Complex64::new(2.0 * t, 0.0));
                let ft = self.value(&trial);
                if ft >= f_next {
                    break;
                }
                t *= 2.0;
                next = trial;
                f_next = ft;
            }
            step = t;
            let (f_new, z) = self.value_grad(&next);
            debug_assert!((f_new - f_next).abs() < 1e-9);
            let g_new = project(&next, &z);
            let gg_new = re_inner(&g_new, &g_new);
            let g_moved = project(&next, &g);
            let beta = if re_inner(&g_new, &g_moved).abs() >= POWELL * gg_new {
                0.0
            } else {
                (re_inner(&g_new, &(&g_new - g_moved)) / gg).max(0.0)
            };
            d = -&g_new + project(&next, &d) * Complex64::new(beta, 0.0);
            stalls = if f - f_new < cfg.tol { stalls + 1 } else { 0 };
            converged = (stalls >= STALL_LIMIT && gg_new <= cfg.tol) || stalls >= LONG_STALL || gg_new == 0.0;
            v = next;
            f = f_new;
            g = g_new;
            gg = gg_new;
        }
        let x = self.weighted * v.transpose();
        let vecs: Vec<Vec<Complex64>> = x.column_iter().map(|c| c.iter().copied().collect()).collect();
        let value = vecs.iter().map(|c| self.kernel.term(c)).sum();
        Restart { value, converged, vecs }
    }
}

struct Restart {
    value: f64,
    converged: bool,
    vecs: Vec<Vec<Complex64>>,
}

const MIN_STEP: f64 = 1e-4;
const MAX_PAIR_EVALS: usize = 400;

struct Search<'a> {
    kernel: &'a CutKernel,
    vecs: Vec<Vec<Complex64>>,
    terms: Vec<f64>,
    scratch: (Vec<Complex64>, Vec<Complex64>),
}

impl<'a> Search<'a> {
    fn new(kernel: &'a CutKernel, vecs: Vec<Vec<Complex64>>) -> Self {
        let terms = vecs.iter().map(|v| kernel.term(v)).collect();
        let n = vecs[0].len();
        let zero = Complex64::new(0.0, 0.0);
        Self { kernel, vecs, terms, scratch: (vec![zero; n], vec![zero; n]) }
    }

    fn minimize(mut self, cfg: &OptConfig, rng: &mut ChaCha8Rng) -> Restart {
        let m = self.vecs.len();
        let mut pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |k| (i, k))).collect();
        let mut converged = pairs.is_empty();
        for _ in 0..cfg.max_iters {
            if converged {
                break;
            }
            pairs.shuffle(rng);
            let gain: f64 = pairs.iter().map(|&(i, k)| self.optimize_pair(i, k)).sum();
            converged = gain < cfg.tol;
        }
        let value = self.vecs.iter().map(|v| self.kernel.term(v)).sum();
        Restart { value, converged, vecs: self.vecs }
    }

    /// Objective of members `i, k` after the rotation
    /// `[[c, s·e^{iφ}], [−s·e^{−iφ}, c]]`, written into the scratch buffers.
    fn rotated(&mut self, i: usize, k: usize, theta: f64, phi: f64) -> f64 {
        let (c, s) = (theta.cos(), theta.sin());
        let w = Complex64::from_polar(s, phi);
        let (a, b) = &mut self.scratch;
        for ((x, y), (vi, vk)) in a.iter_mut().zip(b.iter_mut()).zip(self.vecs[i].iter().zip(&self.vecs[k])) {
            *x = vi * c + vk * w;
            *y = vk * c - vi * w.conj();
        }
        self.kernel.term(a) + self.kernel.term(b)
    }

    /// Pattern search over the rotation angles of one pair; returns the
    /// objective decrease achieved.
    fn optimize_pair(&mut self, i: usize, k: usize) -> f64 {
        let base = self.terms[i] + self.terms[k];
        if base <= 0.0 {
            return 0.0;
        }
        let (mut theta, mut phi, mut best) = (0.0f64, 0.0f64, base);
        let mut step = FRAC_PI_4;
        let mut evals = 0;
        while step > MIN_STEP && evals < MAX_PAIR_EVALS {
            let moves = if theta == 0.0 {
                [(step, 0.0), (-step, 0.0), (step, FRAC_PI_2), (step, -FRAC_PI_2)]
            } else {
                [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)]
            };
            let mut moved = false;
            for (dt, dp) in moves {
                evals += 1;
                let value = self.rotated(i, k, theta + dt, phi + dp);
                if value < best - 1e-15 {
                    best = value;
                    theta += dt;
                    phi += dp;
                    moved = true;
                    break;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        if best < base {
            self.rotated(i, k, theta, phi);
            let (a, b) = &self.scratch;
            self.vecs[i].copy_from_slice(a);
            self.vecs[k].copy_from_slice(b);
            self.terms[i] = self.kernel.term(&self.vecs[i]);
            self.terms[k] = self.kernel.term(&self.vecs[k]);
            base - (self.terms[i] + self.terms[k])
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_core::SubsystemLayout;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn two_qubits() -> SubsystemLayout {
        SubsystemLayout::qubits(&["A", "B"]).unwrap()
    }

    fn bell_projector() -> DensityMatrix {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::new(two_qubits(), CVector::from_vec(vec![c(r), c(0.0), c(0.0), c(r)]))
            .unwrap()
            .to_density()
    }

    fn werner(p: f64) -> DensityMatrix {
        let mixed = DensityMatrix::maximally_mixed(two_qubits());
        DensityMatrix::mixture(&[(p, bell_projector()), (1.0 - p, mixed)]).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        assert!((eof_two_qubit(&bell_projector()).unwrap().value - 1.0).abs() < 1e-12);
        assert!(eof_two_qubit(&DensityMatrix::maximally_mixed(two_qubits())).unwrap().value.abs() < 1e-12);
        // h((1 + √(1 − 0.85²)) / 2), concurrence 0.85
        assert!((eof_two_qubit(&werner(0.9)).unwrap().value - 0.789_354_960_988_784_6).abs() < 1e-9);
    }

    #[test]
    fn closed_form_rejects_other_shapes() {
        let rho = DensityMatrix::maximally_mixed(SubsystemLayout::qubits(&["A", "B", "C"]).unwrap());
        assert!(matches!(eof_two_qubit(&rho), Err(Error::WrongShape(_))));
    }

    #[test]
    fn variational_pure_and_separable() {
        let cut = Bipartition::new(&two_qubits(), &["A"]).unwrap();
        let cfg = OptConfig::default();
        let r = eof_variational(&bell_projector(), &cut, &cfg).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6);
        assert!(r.converged);

        let z0 = StateVector::basis(two_qubits(), 0).unwrap().to_density();
        let z3 = StateVector::basis(two_qubits(), 3).unwrap().to_density();
        let classical = DensityMatrix::mixture(&[(0.5, z0), (0.5, z3)]).unwrap();
        let r = eof_variational(&classical, &cut, &cfg).unwrap();
        assert!(r.value < 1e-6, "{}", r.value);
    }

    #[test]
    fn variational_matches_closed_form_on_werner() {
        let cut = Bipartition::new(&two_qubits(), &["A"]).unwrap();
        let rho = werner(0.9);
        let r = eof_variational(&rho, &cut, &OptConfig::default()).unwrap();
        let exact = eof_two_qubit(&rho).unwrap().value;
        assert!((r.value - exact).abs() < 1e-3, "{} vs {exact}", r.value);
        assert!(r.value >= exact - 1e-9);
        let ens = r.decomposition.unwrap();
        assert!(linalg::max_abs(&(ens.to_density().mat() - rho.mat())) < 1e-9);
        let avg = super::super::ensemble_avg_entanglement(&ens, &cut).unwrap().bits();
        assert!((avg - r.value).abs() < 1e-9);
    }

    #[test]
    fn givens_search_matches_closed_form() {
        let cut = Bipartition::new(&two_qubits(), &["A"]).unwrap();
        let rho = werner(0.8);
        let cfg = OptConfig { restarts: 4, method: SearchMethod::Givens, ..OptConfig::default() };
        let r = eof_variational(&rho, &cut, &cfg).unwrap();
        let exact = eof_two_qubit(&rho).unwrap().value;
        assert!((r.value - exact).abs() < 1e-3, "{} vs {exact}", r.value);
    }

    #[test]
    fn term_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (dl, dr) in [(2, 2), (2, 8), (4, 4), (8, 2)] {
            let kernel = CutKernel::new(dl, dr);
            let n = dl * dr;
            let u = haar_unitary(n, &mut rng);
            let v: Vec<Complex64> = u.column(0).iter().map(|z| z * 0.7).collect();
            let mut g = vec![Complex64::new(0.0, 0.0); n];
            let value = kernel.term_grad(&v, &mut g);
            assert!((value - kernel.term(&v)).abs() < 1e-12);
            let h = 1e-6;
            for k in 0..n {
                for dir in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
                    let mut plus = v.clone();
                    let mut minus = v.clone();
                    plus[k] += dir * h;
                    minus[k] -= dir * h;
                    let numeric = (kernel.term(&plus) - kernel.term(&minus)) / (2.0 * h);
                    let analytic = 2.0 * (dir.conj() * g[k]).re;
                    assert!((numeric - analytic).abs() < 1e-6, "{dl}x{dr} [{k}] {numeric} vs {analytic}");
                }
            }
        }
    }

    #[test]
    fn seeded_search_never_exceeds_start() {
        let cut = Bipartition::new(&two_qubits(), &["A"]).unwrap();
        let z0 = StateVector::basis(two_qubits(), 0).unwrap();
        let z3 = StateVector::basis(two_qubits(), 3).unwrap();
        let start = PureEnsemble::new(vec![(0.5, z0), (0.5, z3)]).unwrap();
        let cfg = OptConfig { restarts: 1, max_iters: 1, ..OptConfig::default() };
        let r = eof_variational_from(&start.to_density(), &cut, &cfg, &start).unwrap();
        assert!(r.value <= 1e-12);
        assert_eq!(r.restarts_used, 2);
        let other = PureEnsemble::new(vec![(1.0, StateVector::basis(two_qubits(), 1).unwrap())]).unwrap();
        assert!(eof_variational_from(&start.to_density(), &cut, &cfg, &other).is_err());
    }

    #[test]
    fn config_validation() {
        let cut = Bipartition::new(&two_qubits(), &["A"]).unwrap();
        let bad = OptConfig { restarts: 0, ..OptConfig::default() };
        assert!(matches!(eof_variational(&werner(0.5), &cut, &bad), Err(Error::BadParam(_))));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cut = Bipartition::new(&two_qubits(), &["A"]).unwrap();
        let cfg = OptConfig { restarts: 4, seed: 99, ..OptConfig::default() };
        let a = eof_variational(&werner(0.7), &cut, &cfg).unwrap();
        let b = eof_variational(&werner(0.7), &cut, &cfg).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }
}
