//! The four-step transmission protocol.
//!
//! Alice starts with the whole register `ABCD`; Bob holds nothing.
//!
//! 1. Alice prepares the register with a unitary.
//! 2. She sends `D` to Bob (ideally, or through a channel).
//! 3. Both act locally: Alice on `ABC`, Bob on `D`, possibly as a classically
//!    correlated mixture of product unitaries.
//! 4. She sends `C` (ideally, or through a channel).
//!
//! Every run records the entanglement `E₁…E₄` between the parties after each
//! step, across `ABC|D` for steps 2 and 3 and `AB|CD` for step 4, together
//! with named margins. A margin is nonnegative exactly when the bound it
//! encodes holds.

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::entanglement::{
    eof_two_qubit, eof_variational_from, ensemble_avg_entanglement, pure_entanglement, pure_entanglement_sides,
    EofResult, OptConfig,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::seeding::derive_seed;
use crate::states::{DensityMatrix, PureEnsemble, StateVector, SPECTRAL_FLOOR};
use crate::tensor_core::{embed_operator, Bipartition, SubsystemLayout};
use crate::unitaries_channels::{
    apply_channel, apply_locc_mixture, gates, haar_unitary, unitary_from_generator, ApplyUnitary, LoccMixture, QuantumChannel,
    UnitaryOp,
};
use crate::{CMatrix, Complex64};

const ALICE_LOCAL: [&str; 3] = ["A", "B", "C"];
const BOB_LOCAL: [&str; 1] = ["D"];
/// Tolerance for recognising a state as a product with a two-qubit factor.
const FACTOR_TOL: f64 = 1e-10;
/// Members lighter than this are dropped when propagating ensembles.
const MIN_WEIGHT: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Pure state, ideal transmission.
    Theorem1,
    /// Mixed state given as an ensemble, ideal transmission.
    Theorem2,
    /// Noisy transmission.
    Theorem3,
    /// Noisy transmission with a mixture of local unitaries at step 3.
    Theorem4,
}

/// How an `E` value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EMethod {
    /// Nothing has been sent yet, so nothing is shared.
    Unshared,
    PureMarginal,
    EnsembleAvg,
    EofVariational,
    EofTwoQubit,
}

/// Full state after a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSnapshot {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u8,
    pub action: String,
    pub state: StateSnapshot,
    /// `None` before anything is shared.
    pub cut: Option<Bipartition>,
    pub e: f64,
    pub method: EMethod,
    /// Set for variational values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

/// Whether a margin is certified exactly or carries variational slack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginKind {
    Exact,
    Variational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub name: String,
    pub value: f64,
    pub kind: MarginKind,
}

impl Margin {
    fn exact(name: &str, value: f64) -> Self {
        Self { name: name.into(), value, kind: MarginKind::Exact }
    }

    fn variational(name: &str, value: f64) -> Self {
        Self { name: name.into(), value, kind: MarginKind::Variational }
    }

    /// `value ≥ −tol` for exact margins, `value ≥ −eps_var` otherwise.
    pub fn satisfied(&self, tol: f64, eps_var: f64) -> bool {
        let slack = match self.kind {
            MarginKind::Exact => tol,
            MarginKind::Variational => eps_var,
        };
        self.value >= -slack
    }
}

/// Two-qubit evaluation of the entanglement across a cut for states of the
/// form `ρ_xy ⊗ ρ_rest` with `x` and `y` on opposite sides. When the rest
/// sits on one side the value is exact; when the rest is another straddling
/// qubit pair the sum of both closed forms is an upper bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReduction {
    pub step: u8,
    pub pairs: Vec<(String, String)>,
    pub value: f64,
    pub exact: bool,
    pub method: EMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTrace {
    pub regime: Regime,
    pub steps: Vec<StepRecord>,
    pub margins: Vec<Margin>,
    #[serde(default)]
    pub reductions: Vec<PairReduction>,
}

impl ProtocolTrace {
    /// `[E₁, E₂, E₃, E₄]`.
    pub fn e(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.steps[i].e)
    }

    pub fn margin(&self, name: &str) -> Option<f64> {
        self.margins.iter().find(|m| m.name == name).map(|m| m.value)
    }

    pub fn min_margin(&self) -> f64 {
        self.margins.iter().map(|m| m.value).fold(f64::INFINITY, f64::min)
    }

    pub fn violations(&self, tol: f64, eps_var: f64) -> impl Iterator<Item = &Margin> {
        self.margins.iter().filter(move |m| !m.satisfied(tol, eps_var))
    }

    pub fn holds(&self, tol: f64, eps_var: f64) -> bool {
        self.violations(tol, eps_var).next().is_none()
    }
}

/// Ensemble evolved member by member through an ideal run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleTrace {
    /// The ensemble after each of the four steps.
    pub ensembles: Vec<PureEnsemble>,
    /// `[E₁, E₂, E₃, E₄]` of each member.
    pub member_e: Vec<[f64; 4]>,
    /// `Σ pᵢ E₂ᵢ`.
    pub avg2: f64,
    /// `Σ pᵢ E₄ᵢ`.
    pub avg4: f64,
}

fn first_cut() -> Bipartition {
    Bipartition::new(&SubsystemLayout::abcd(), &ALICE_LOCAL).expect("valid cut")
}

fn second_cut() -> Bipartition {
    Bipartition::new(&SubsystemLayout::abcd(), &["A", "B"]).expect("valid cut")
}

fn check_targets(op: &UnitaryOp, allowed: &[&str], who: &str) -> Result<()> {
    match op.targets().iter().find(|t| !allowed.contains(&t.as_str())) {
        Some(t) => Err(Error::BadParam(format!("{who} operation acts on {t}, outside {}", allowed.concat()))),
        None => Ok(()),
    }
}

fn check_register(layout: &SubsystemLayout) -> Result<()> {
    if *layout != SubsystemLayout::abcd() {
        return Err(Error::LayoutMismatch);
    }
    Ok(())
}

fn unshared(action: &str, state: StateSnapshot) -> StepRecord {
    StepRecord { step: 1, action: action.into(), state, cut: None, e: 0.0, method: EMethod::Unshared, converged: None }
}

fn record(step: u8, action: &str, state: StateSnapshot, cut: &Bipartition, e: f64, method: EMethod) -> StepRecord {
    StepRecord { step, action: action.into(), state, cut: Some(cut.clone()), e, method, converged: None }
}

/// Theorem-1 run from `|0000⟩`.
///
/// Margins: `first_transmission` `1 − (E₂ − E₁)`, `local_invariance`
/// `−|E₃ − E₂|`, `second_transmission` `E₃ + 1 − E₄`, `total` `2 − E₄`,
/// `entropy_gap` `S(ρ_C) − (E₄ − E₃)` and `bob_side`, the largest
/// disagreement between the two marginal entropies at any step, negated.
pub fn run_pure_protocol(u_prep: &UnitaryOp, u_abc: &UnitaryOp, u_d: &UnitaryOp) -> Result<ProtocolTrace> {
    check_targets(u_abc, &ALICE_LOCAL, "Alice's")?;
    check_targets(u_d, &BOB_LOCAL, "Bob's")?;
    let layout = SubsystemLayout::abcd();
    let psi1 = StateVector::zero(layout.clone()).apply_unitary(u_prep)?;
    let psi3 = psi1.apply_unitary(u_abc)?.apply_unitary(u_d)?;
    let (first, second) = (first_cut(), second_cut());

    let (e2, e2_bob) = pure_entanglement_sides(&psi1, &first)?;
    let (e3, e3_bob) = pure_entanglement_sides(&psi3, &first)?;
    let (e4, e4_bob) = pure_entanglement_sides(&psi3, &second)?;
    let (e2, e3, e4) = (e2.bits(), e3.bits(), e4.bits());
    let s_c = pure_entanglement(&psi3, &Bipartition::new(&layout, &["C"])?)?.bits();
    let bob_gap = [(e2, e2_bob), (e3, e3_bob), (e4, e4_bob)]
        .iter()
        .map(|(a, b)| (a - b.bits()).abs())
        .fold(0.0, f64::max);

    let pure = |s: &StateVector| StateSnapshot::Pure(s.clone());
    let steps = vec![
        unshared("prepare", pure(&psi1)),
        record(2, "send D", pure(&psi1), &first, e2, EMethod::PureMarginal),
        record(3, "local unitaries", pure(&psi3), &first, e3, EMethod::PureMarginal),
        record(4, "send C", pure(&psi3), &second, e4, EMethod::PureMarginal),
    ];
    let margins = vec![
        Margin::exact("first_transmission", 1.0 - e2),
        Margin::exact("local_invariance", -(e3 - e2).abs()),
        Margin::exact("second_transmission", e3 + 1.0 - e4),
        Margin::exact("total", 2.0 - e4),
        Margin::exact("entropy_gap", s_c - (e4 - e3)),
        Margin::exact("bob_side", -bob_gap),
    ];
    Ok(ProtocolTrace { regime: Regime::Theorem1, steps, margins, reductions: Vec::new() })
}

/// Theorem-2 run: each member of `ens0` goes through the ideal protocol.
///
/// The trace's `E₂` and `E₄` are variational bounds seeded with the evolved
/// ensemble, so they never exceed the averages `A₂`, `A₄`; `E₃` is the average
/// of the step-2 decomposition carried through the local unitaries.
/// Margins: `first_transmission` `1 − A₂`, `member_transmission`
/// `minᵢ (E₂ᵢ + 1 − E₄ᵢ)`, `average_transmission` `A₂ + 1 − A₄`,
/// `local_invariance` over members, `below_average` `A₄ − E₄` and the
/// variational `variational_transmission` `A₂ + 1 − E₄`.
pub fn run_mixed_protocol(
    ens0: &PureEnsemble,
    u_prep: &UnitaryOp,
    u_abc: &UnitaryOp,
    u_d: &UnitaryOp,
    opt: &OptConfig,
) -> Result<(ProtocolTrace, EnsembleTrace)> {
    check_register(ens0.layout())?;
    check_targets(u_abc, &ALICE_LOCAL, "Alice's")?;
    check_targets(u_d, &BOB_LOCAL, "Bob's")?;
    let (first, second) = (first_cut(), second_cut());
    let local = |s: &StateVector| s.apply_unitary(u_abc)?.apply_unitary(u_d);

    let ens1 = ens0.map_members(|s| s.apply_unitary(u_prep))?;
    let ens3 = ens1.map_members(local)?;
    let mut member_e = Vec::with_capacity(ens1.len());
    for ((_, s1), (_, s3)) in ens1.members().iter().zip(ens3.members()) {
        member_e.push([
            0.0,
            pure_entanglement(s1, &first)?.bits(),
            pure_entanglement(s3, &first)?.bits(),
            pure_entanglement(s3, &second)?.bits(),
        ]);
    }
    let weighted = |k: usize| ens1.members().iter().zip(&member_e).map(|((p, _), e)| p * e[k]).sum::<f64>();
    let (avg2, avg4) = (weighted(1), weighted(3));

    let rho1 = ens1.to_density();
    let rho3 = ens3.to_density();
    let var2 = eof_variational_from(&rho1, &first, &step_opt(opt, 2), &ens1)?;
    let carried = decomposition(&var2)?.map_members(local)?;
    let e3 = ensemble_avg_entanglement(&carried, &first)?.bits();
    let var4 = eof_variational_from(&rho3, &second, &step_opt(opt, 4), &ens3)?;

    let mixed = |r: &DensityMatrix| StateSnapshot::Mixed(r.clone());
    let steps = vec![
        unshared("prepare", mixed(&rho1)),
        variational_record(2, "send D", mixed(&rho1), &first, &var2),
        record(3, "local unitaries", mixed(&rho3), &first, e3, EMethod::EnsembleAvg),
        variational_record(4, "send C", mixed(&rho3), &second, &var4),
    ];
    let member_gap = member_e.iter().map(|e| e[1] + 1.0 - e[3]).fold(f64::INFINITY, f64::min);
    let member_drift = member_e.iter().map(|e| (e[2] - e[1]).abs()).fold(0.0, f64::max);
    let margins = vec![
        Margin::exact("first_transmission", 1.0 - avg2),
        Margin::exact("member_transmission", member_gap),
        Margin::exact("average_transmission", avg2 + 1.0 - avg4),
        Margin::exact("local_invariance", -member_drift),
        Margin::exact("below_average", avg4 - var4.value),
        Margin::variational("variational_transmission", avg2 + 1.0 - var4.value),
    ];
    let trace = ProtocolTrace { regime: Regime::Theorem2, steps, margins, reductions: Vec::new() };
    let ensembles = vec![ens1.clone(), ens1, ens3.clone(), ens3];
    Ok((trace, EnsembleTrace { ensembles, member_e, avg2, avg4 }))
}

/// Theorem-3 run: `D` and `C` travel through `ch_d` and `ch_c`.
///
/// `E₂` and `E₄` are variational; `E₃` is the step-2 decomposition carried
/// through the local unitaries. The step-4 search is seeded with that
/// decomposition pushed through `ch_c`'s Kraus operators.
///
/// Margins: `first_transmission` `1 − E₂`, `local_monotone` `E₂ − E₃`,
/// `channel_monotone_D`/`_C` (two-qubit closed forms of every pair containing
/// the channel's qubit, before minus after), the variational
/// `transmission` `E₂ + 1 − E₄`, and, where pair reductions exist,
/// `pair_transmission` and cross-checks against the variational values.
pub fn run_noisy_protocol(
    rho0: &DensityMatrix,
    u_prep: &UnitaryOp,
    u_abc: &UnitaryOp,
    u_d: &UnitaryOp,
    ch_d: &QuantumChannel,
    ch_c: &QuantumChannel,
    opt: &OptConfig,
) -> Result<ProtocolTrace> {
    check_targets(u_abc, &ALICE_LOCAL, "Alice's")?;
    check_targets(u_d, &BOB_LOCAL, "Bob's")?;
    run_channel_protocol(Regime::Theorem3, rho0, u_prep, Local::Product(u_abc, u_d), ch_d, ch_c, opt)
}

/// Theorem-4 run: as [`run_noisy_protocol`] with step 3 replaced by the
/// averaged mixture of local unitaries.
pub fn run_locc_protocol(
    rho0: &DensityMatrix,
    u_prep: &UnitaryOp,
    mix: &LoccMixture,
    ch_d: &QuantumChannel,
    ch_c: &QuantumChannel,
    opt: &OptConfig,
) -> Result<ProtocolTrace> {
    for t in mix.terms() {
        check_targets(&t.alice, &ALICE_LOCAL, "Alice's")?;
        check_targets(&t.bob, &BOB_LOCAL, "Bob's")?;
    }
    run_channel_protocol(Regime::Theorem4, rho0, u_prep, Local::Mixture(mix), ch_d, ch_c, opt)
}

enum Local<'a> {
    Product(&'a UnitaryOp, &'a UnitaryOp),
    Mixture(&'a LoccMixture),
}

impl Local<'_> {
    fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        match self {
            Local::Product(a, b) => rho.apply_unitary(a)?.apply_unitary(b),
            Local::Mixture(mix) => apply_locc_mixture(rho, mix),
        }
    }

    /// A decomposition of the output, given one of the input.
    fn carry(&self, ens: &PureEnsemble) -> Result<PureEnsemble> {
        match self {
            Local::Product(a, b) => ens.map_members(|s| s.apply_unitary(a)?.apply_unitary(b)),
            Local::Mixture(mix) => {
                let mut members = Vec::with_capacity(ens.len() * mix.terms().len());
                for t in mix.terms() {
                    for (p, s) in ens.members() {
                        members.push((t.prob * p, s.apply_unitary(&t.alice)?.apply_unitary(&t.bob)?));
                    }
                }
                PureEnsemble::new(members)
            }
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Local::Product(..) => "local unitaries",
            Local::Mixture(_) => "local unitary mixture",
        }
    }
}

fn run_channel_protocol(
    regime: Regime,
    rho0: &DensityMatrix,
    u_prep: &UnitaryOp,
    local: Local<'_>,
    ch_d: &QuantumChannel,
    ch_c: &QuantumChannel,
    opt: &OptConfig,
) -> Result<ProtocolTrace> {
    check_register(rho0.layout())?;
    let (first, second) = (first_cut(), second_cut());
    let rho1 = rho0.apply_unitary(u_prep)?;
    let rho2 = apply_channel(&rho1, ch_d, "D")?;
    let rho3 = local.apply(&rho2)?;
    let rho4 = apply_channel(&rho3, ch_c, "C")?;

    let seed2 = through_channel(&spectral_ensemble(&rho1)?, ch_d, "D")?;
    let var2 = eof_variational_from(&rho2, &first, &step_opt(opt, 2), &seed2)?;
    let carried = local.carry(&decomposition(&var2)?)?;
    let e3 = ensemble_avg_entanglement(&carried, &first)?.bits();
    let seed4 = through_channel(&carried, ch_c, "C")?;
    let var4 = eof_variational_from(&rho4, &second, &step_opt(opt, 4), &seed4)?;
    let (e2, e4) = (var2.value, var4.value);

    let mixed = |r: &DensityMatrix| StateSnapshot::Mixed(r.clone());
    let steps = vec![
        unshared("prepare", mixed(&rho1)),
        variational_record(2, "send D through channel", mixed(&rho2), &first, &var2),
        record(3, local.label(), mixed(&rho3), &first, e3, EMethod::EnsembleAvg),
        variational_record(4, "send C through channel", mixed(&rho4), &second, &var4),
    ];
    let mut margins = vec![
        Margin::exact("first_transmission", 1.0 - e2),
        Margin::exact("local_monotone", e2 - e3),
        Margin::exact("channel_monotone_D", channel_monotonicity(&rho1, &rho2, "D")?),
        Margin::exact("channel_monotone_C", channel_monotonicity(&rho3, &rho4, "C")?),
        Margin::variational("transmission", e2 + 1.0 - e4),
    ];

    let red2 = pair_reduction(&rho2, &first, 2)?;
    let red4 = pair_reduction(&rho4, &second, 4)?;
    for (red, e, lower, agree) in [(&red2, e2, "pair_lower_2", "pair_agree_2"), (&red4, e4, "pair_lower_4", "pair_agree_4")]
    {
        if let Some(r) = red {
            if r.exact {
                margins.push(Margin::exact(lower, e - r.value));
                margins.push(Margin::variational(agree, -(e - r.value).abs()));
            } else {
                margins.push(Margin::variational(agree, r.value - e));
            }
        }
    }
    if let (Some(r2), Some(r4)) = (&red2, &red4) {
        if r2.exact {
            margins.push(Margin::exact("pair_transmission", r2.value + 1.0 - r4.value));
        }
    }
    let reductions = red2.into_iter().chain(red4).collect();
    Ok(ProtocolTrace { regime, steps, margins, reductions })
}

fn step_opt(opt: &OptConfig, step: u64) -> OptConfig {
    OptConfig { seed: derive_seed(opt.seed, step), ..opt.clone() }
}

fn decomposition(r: &EofResult) -> Result<PureEnsemble> {
    r.decomposition.clone().ok_or_else(|| Error::BadParam("variational result without decomposition".into()))
}

fn variational_record(step: u8, action: &str, state: StateSnapshot, cut: &Bipartition, r: &EofResult) -> StepRecord {
    StepRecord {
        step,
        action: action.into(),
        state,
        cut: Some(cut.clone()),
        e: r.value,
        method: EMethod::EofVariational,
        converged: Some(r.converged),
    }
}

/// Eigen-decomposition of `rho` as an ensemble.
fn spectral_ensemble(rho: &DensityMatrix) -> Result<PureEnsemble> {
    let (values, vectors) = linalg::hermitian_eigen(rho.mat());
    let kept: Vec<usize> = (0..values.len()).filter(|&j| values[j] > SPECTRAL_FLOOR).collect();
    let total: f64 = kept.iter().map(|&j| values[j]).sum();
    let members = kept
        .into_iter()
        .map(|j| Ok((values[j] / total, StateVector::normalized(rho.layout().clone(), vectors.column(j).into_owned())?)))
        .collect::<Result<Vec<_>>>()?;
    PureEnsemble::new(members)
}

/// `{pᵢ, ψᵢ}` ↦ `{pᵢ ‖Kψᵢ‖², Kψᵢ/‖Kψᵢ‖}` over the Kraus operators of `ch`
/// on `target`, a decomposition of the channel output.
fn through_channel(ens: &PureEnsemble, ch: &QuantumChannel, target: &str) -> Result<PureEnsemble> {
    let layout = ens.layout();
    let kraus = ch
        .kraus()
        .iter()
        .map(|k| embed_operator(k, &[target], layout))
        .collect::<Result<Vec<_>>>()?;
    let mut members = Vec::new();
    for (p, s) in ens.members() {
        for k in &kraus {
            let v = k * s.amps();
            let w = p * v.norm_squared();
            if w > MIN_WEIGHT {
                members.push((w, v));
            }
        }
    }
    let total: f64 = members.iter().map(|(w, _)| w).sum();
    let members = members
        .into_iter()
        .map(|(w, v)| Ok((w / total, StateVector::normalized(layout.clone(), v)?)))
        .collect::<Result<Vec<_>>>()?;
    PureEnsemble::new(members)
}

fn closed_form(rho: &DensityMatrix, pair: [&str; 2]) -> Result<f64> {
    Ok(eof_two_qubit(&rho.partial_trace(&pair)?)?.value)
}

/// Smallest decrease of the two-qubit closed form over the pairs that
/// contain `target` when a channel on `target` takes `before` to `after`.
fn channel_monotonicity(before: &DensityMatrix, after: &DensityMatrix, target: &str) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for other in before.layout().labels().iter().filter(|l| *l != target) {
        let pair = [other.as_str(), target];
        worst = worst.min(closed_form(before, pair)? - closed_form(after, pair)?);
    }
    Ok(worst)
}

/// Looks for `ρ = ρ_xy ⊗ ρ_rest` with qubits `x` left and `y` right of the
/// cut; an exact reduction is preferred over a bounding one.
pub fn pair_reduction(rho: &DensityMatrix, cut: &Bipartition, step: u8) -> Result<Option<PairReduction>> {
    let layout = rho.layout();
    let qubit = |l: &String| layout.dim_of(l).map(|d| d == 2);
    let mut bound: Option<PairReduction> = None;
    for x in cut.left() {
        for y in cut.right() {
            if !qubit(x)? || !qubit(y)? {
                continue;
            }
            let rest = layout.complement(&[x, y]);
            let rho_xy = rho.partial_trace(&[x, y])?;
            if rest.is_empty() {
                let value = eof_two_qubit(&rho_xy)?.value;
                return Ok(Some(PairReduction::exact(step, x, y, value)));
            }
            let rho_rest = rho.partial_trace(&rest)?;
            let product = rho_xy.kron(&rho_rest)?.permute(layout.labels())?;
            if linalg::max_abs(&(product.mat() - rho.mat())) > FACTOR_TOL {
                continue;
            }
            let value = eof_two_qubit(&rho_xy)?.value;
            let one_sided = rest.iter().all(|l| cut.left().contains(l)) || rest.iter().all(|l| cut.right().contains(l));
            if one_sided {
                return Ok(Some(PairReduction::exact(step, x, y, value)));
            }
            if bound.is_none() && rest.len() == 2 && rest.iter().all(|l| qubit(l).unwrap_or(false)) {
                let (x2, y2) = if cut.left().contains(&rest[0]) { (&rest[0], &rest[1]) } else { (&rest[1], &rest[0]) };
                bound = Some(PairReduction {
                    step,
                    pairs: vec![(x.clone(), y.clone()), (x2.clone(), y2.clone())],
                    value: value + eof_two_qubit(&rho_rest)?.value,
                    exact: false,
                    method: EMethod::EofTwoQubit,
                });
            }
        }
    }
    Ok(bound)
}

impl PairReduction {
    fn exact(step: u8, x: &str, y: &str, value: f64) -> Self {
        Self { step, pairs: vec![(x.into(), y.into())], value, exact: true, method: EMethod::EofTwoQubit }
    }
}

/// `H_A`, `CNOT_{A→D}`, `H_B`, `CNOT_{B→C}` on `|0000⟩`, giving
/// `|Φ⁺⟩_AD ⊗ |Φ⁺⟩_BC`.
pub fn bell_pairs_preparation() -> UnitaryOp {
    let layout = SubsystemLayout::abcd();
    let embed = |op: CMatrix, targets: &[&str]| embed_operator(&op, targets, &layout).expect("gate fits register");
    let mat = embed(gates::cnot(), &["B", "C"])
        * embed(gates::hadamard(), &["B"])
        * embed(gates::cnot(), &["A", "D"])
        * embed(gates::hadamard(), &["A"]);
    UnitaryOp::new(mat, layout.labels().to_vec()).expect("product of gates is unitary")
}

/// Runs the ideal protocol on the two-Bell-pair preparation with identity
/// local operations, where `E₂ = 1` and `E₄ = 2`. Returns the trace and the
/// prepared state.
pub fn equality_witness() -> Result<(ProtocolTrace, StateVector)> {
    let layout = SubsystemLayout::abcd();
    let prep = bell_pairs_preparation();
    let trace = run_pure_protocol(
        &prep,
        &UnitaryOp::identity(&ALICE_LOCAL, &layout)?,
        &UnitaryOp::identity(&BOB_LOCAL, &layout)?,
    )?;
    let psi = StateVector::zero(layout).apply_unitary(&prep)?;
    Ok((trace, psi))
}

/// The witness preparation followed by `exp(−i·angle·G)` for a random
/// Hermitian `G` on the whole register.
pub fn perturbed_witness_preparation(angle: f64, seed: u64) -> Result<UnitaryOp> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = SubsystemLayout::abcd().total_dim();
    let g = haar_unitary(n, &mut rng);
    let generator = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
    let kick = UnitaryOp::new(unitary_from_generator(&generator, angle), SubsystemLayout::abcd().labels().to_vec())?;
    bell_pairs_preparation().then(&kick)
}
