//! Bob's collective unitaries on particle 3 and an auxiliary qubit `b`.
//!
//! Each plan acts on the support levels of particle 3 that the collapsed
//! state occupies, ordered ascending and paired with the qubit:
//! `|l₀,0⟩, |l₀,1⟩, |l₁,0⟩, |l₁,1⟩, ...`. Aux result `0` flags success.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::SchmidtVector;
use crate::error::{Error, Result};
use crate::measurement::{particle3_shape, Outcome};
use crate::qutrit::QutritState;
use crate::tensor::{Operator, RegisterShape, StateVector, EXACT_TOL};

/// Which of the two printed matrices serves a pair of outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Unprimed,
    Primed,
}

impl Branch {
    fn as_str(self) -> &'static str {
        match self {
            Branch::Unprimed => "unprimed",
            Branch::Primed => "primed",
        }
    }
}

/// Matrix selection for outcomes 1–2 (`low`, from `√2·a0` vs `a1`) and
/// 3–4 (`high`, from `√2·a1` vs `a2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Regime {
    pub low: Branch,
    pub high: Branch,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime { low: Branch::Unprimed, high: Branch::Unprimed },
        Regime { low: Branch::Primed, high: Branch::Unprimed },
        Regime { low: Branch::Unprimed, high: Branch::Primed },
        Regime { low: Branch::Primed, high: Branch::Primed },
    ];

    /// Branch that applies to outcome `j`; outcomes 5–12 have a single form.
    pub fn branch_for(&self, j: Outcome) -> Branch {
        match j.index() {
            1 | 2 => self.low,
            3 | 4 => self.high,
            _ => Branch::Unprimed,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.low.as_str(), self.high.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |p: &str| match p {
            "unprimed" => Ok(Branch::Unprimed),
            "primed" => Ok(Branch::Primed),
            _ => Err(Error::Validation(format!("unknown regime branch '{p}'"))),
        };
        let (low, high) = s.split_once('/').ok_or_else(|| Error::Validation(format!("malformed regime '{s}'")))?;
        Ok(Regime { low: parse(low)?, high: parse(high)? })
    }
}

/// Equality at the boundary selects the unprimed matrix.
pub fn classify_regime(a: &SchmidtVector) -> Regime {
    let pick = |small: f64, large: f64| {
        if SQRT_2 * small <= large {
            Branch::Unprimed
        } else {
            Branch::Primed
        }
    };
    Regime { low: pick(a.a0(), a.a1()), high: pick(a.a1(), a.a2()) }
}

/// Whether to use the correction matrices with the misprints fixed, or
/// exactly as printed. As printed, the primed outcome-4 matrix has an all-zero
/// fourth row, the unprimed outcome-4 matrix is not unitary, and the outcome-6
/// matrix flips the sign of `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatrixSource {
    #[default]
    Repaired,
    AsPrinted,
}

/// `√(1 − c²)`, clamped at zero.
fn comp(c: f64) -> f64 {
    (1.0 - c * c).max(0.0).sqrt()
}

fn label(j: Outcome, branch: Branch) -> String {
    match branch {
        Branch::Unprimed => format!("U3b({j})"),
        Branch::Primed => format!("U'3b({j})"),
    }
}

/// Coefficients that divide in the selected matrix; any zero makes it undefined.
fn divisors(j: Outcome, branch: Branch, a: &SchmidtVector) -> [f64; 2] {
    let [a0, a1, a2, a3] = a.coeffs();
    match (j.index(), branch) {
        (1 | 2, Branch::Unprimed) => [a1, a2],
        (1 | 2, Branch::Primed) => [a0, a2],
        (3 | 4, Branch::Unprimed) => [a2, a3],
        (3 | 4, Branch::Primed) => [a1, a3],
        (5 | 6, _) => [a2, a3],
        _ => [a3, a1],
    }
}

/// The 6×6 correction for outcome `j ∈ 1..=8`, or `None` when one of its
/// divisors vanishes.
pub fn correction_unitary(
    j: Outcome,
    a: &SchmidtVector,
    regime: Regime,
    source: MatrixSource,
) -> Result<Option<Operator>> {
    if !j.is_correctable() {
        return Err(Error::Contract(format!("outcome {j} has no qutrit correction")));
    }
    let branch = regime.branch_for(j);
    if divisors(j, branch, a).contains(&0.0) {
        return Ok(None);
    }
    let [a0, a1, a2, a3] = a.coeffs();
    let printed = source == MatrixSource::AsPrinted;
    let rows: [[f64; 6]; 6] = match (j.index(), branch) {
        (1, Branch::Unprimed) => {
            let (c, d) = (SQRT_2 * a0 / a1, SQRT_2 * a0 / a2);
            let (sc, sd) = (comp(c), comp(d));
            [
                [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, c, sc, 0.0, 0.0],
                [0.0, 0.0, -sc, c, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, d, sd],
                [0.0, 0.0, 0.0, 0.0, -sd, d],
            ]
        }
        (1, Branch::Primed) => {
            let (c, d) = (a1 / (SQRT_2 * a0), a1 / a2);
            let (sc, sd) = (comp(c), comp(d));
            [
                [c, sc, 0.0, 0.0, 0.0, 0.0],
                [-sc, c, 0.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, d, sd],
                [0.0, 0.0, 0.0, 0.0, -sd, d],
            ]
        }
        (2, Branch::Unprimed) => {
            let (c, d) = (SQRT_2 * a0 / a1, SQRT_2 * a0 / a2);
            let (sc, sd) = (comp(c), comp(d));
            [
                [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, -c, sc, 0.0, 0.0],
                [0.0, 0.0, -sc, -c, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, -d, sd],
                [0.0, 0.0, 0.0, 0.0, -sd, -d],
            ]
        }
        (2, Branch::Primed) => {
            let (c, d) = (a1 / (SQRT_2 * a0), a1 / a2);
            let (sc, sd) = (comp(c), comp(d));
            [
                [c, sc, 0.0, 0.0, 0.0, 0.0],
                [-sc, c, 0.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, -1.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, -d, sd],
                [0.0, 0.0, 0.0, 0.0, -sd, -d],
            ]
        }
        (3, Branch::Unprimed) => {
            let (c, d) = (2.0 * a1 / (SQRT_2 * a2), 2.0 * a1 / (SQRT_2 * a3));
            let (sc, sd) = (comp(c), comp(d));
            [
                [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, c, sc, 0.0, 0.0],
                [0.0, 0.0, -sc, c, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, d, sd],
                [0.0, 0.0, 0.0, 0.0, -sd, d],
            ]
        }
        (3, Branch::Primed) => {
            let (c, d) = (a2 / (SQRT_2 * a1), a2 / a3);
            let (sc, sd) = (comp(c), comp(d));
            [
                [c, sc, 0.0, 0.0, 0.0, 0.0],
                [-sc, c, 0.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, d, sd],
                [0.0, 0.0, 0.0, 0.0, -sd, d],
            ]
        }
        (4, Branch::Unprimed) => {
            let (c, d) = (2.0 * a1 / (SQRT_2 * a2), 2.0 * a1 / (SQRT_2 * a3));
            let (sc, sd) = (comp(c), comp(d));
            // printed with +c, +d on the diagonal of the second rows, which is not unitary
            let flip = if printed { -1.0 } else { 1.0 };
            [
                [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, -c, sc, 0.0, 0.0],
                [0.0, 0.0, -sc, -c * flip, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, -d, sd],
                [0.0, 0.0, 0.0, 0.0, -sd, -d * flip],
            ]
        }
        (4, Branch::Primed) => {
            let (c, d) = (a2 / (SQRT_2 * a1), a2 / a3);
            let (sc, sd) = (comp(c), comp(d));
            // printed with an all-zero fourth row
            let row4 = if printed { 0.0 } else { 1.0 };
            [
                [c, sc, 0.0, 0.0, 0.0, 0.0],
                [-sc, c, 0.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, -1.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, row4, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, -d, sd],
                [0.0, 0.0, 0.0, 0.0, -sd, -d],
            ]
        }
        (5, _) => {
            let (c, d) = (a0 / (SQRT_2 * a2), a0 / a3);
            let (sc, sd) = (comp(c), comp(d));
            [
                [0.0, 0.0, c, sc, 0.0, 0.0],
                [0.0, 0.0, -sc, c, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, d, sd],
                [0.0, 0.0, 0.0, 0.0, -sd, d],
                [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            ]
        }
        (6, _) => {
            let (c, d) = (a0 / (SQRT_2 * a2), a0 / a3);
            let (sc, sd) = (comp(c), comp(d));
            // printed as +1, which leaves -γ on level 3
            let row5 = if printed { 1.0 } else { -1.0 };
            [
                [0.0, 0.0, c, sc, 0.0, 0.0],
                [0.0, 0.0, -sc, c, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, -d, sd],
                [0.0, 0.0, 0.0, 0.0, -sd, -d],
                [row5, 0.0, 0.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            ]
        }
        (7, _) => {
            let (c, d) = (a0 / (SQRT_2 * a3), a0 / a1);
            let (sc, sd) = (comp(c), comp(d));
            [
                [0.0, 0.0, 0.0, 0.0, c, sc],
                [0.0, 0.0, 0.0, 0.0, -sc, c],
                [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, d, sd, 0.0, 0.0],
                [0.0, 0.0, -sd, d, 0.0, 0.0],
            ]
        }
        (8, _) => {
            let (c, d) = (a0 / (SQRT_2 * a3), a0 / a1);
            let (sc, sd) = (comp(c), comp(d));
            [
                [0.0, 0.0, 0.0, 0.0, c, sc],
                [0.0, 0.0, 0.0, 0.0, -sc, c],
                [-1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, -d, sd, 0.0, 0.0],
                [0.0, 0.0, -sd, -d, 0.0, 0.0],
            ]
        }
        _ => unreachable!("outcome checked above"),
    };
    Ok(Some(Operator::from_real_rows(&rows, label(j, branch))?))
}

/// The unprimed outcome-1 matrix in the `√2·a0/a1` form used when it is
/// first introduced; [`correction_unitary`] builds the table form `2a0/(√2·a1)`.
pub fn u3b_1_introductory_form(a: &SchmidtVector) -> Option<Operator> {
    let [a0, a1, a2, _] = a.coeffs();
    if a1 == 0.0 || a2 == 0.0 {
        return None;
    }
    let c = SQRT_2 * a0 / a1;
    let d = SQRT_2 * a0 / a2;
    let sc = (1.0 - 2.0 * a0 * a0 / (a1 * a1)).max(0.0).sqrt();
    let sd = (1.0 - 2.0 * a0 * a0 / (a2 * a2)).max(0.0).sqrt();
    let rows = [
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, c, sc, 0.0, 0.0],
        [0.0, 0.0, -sc, c, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, d, sd],
        [0.0, 0.0, 0.0, 0.0, -sd, d],
    ];
    Operator::from_real_rows(&rows, "U3b(1)").ok()
}

/// Everything Bob needs for one outcome.
#[derive(Debug, Clone)]
pub struct CorrectionPlan {
    outcome: Outcome,
    branch: Branch,
    support: Vec<usize>,
    /// `None` when the channel makes success impossible for this outcome.
    unitary: Option<Operator>,
    /// `relabel[i]` is the qutrit level that `support[i]` carries.
    relabel: Vec<usize>,
    success_amplitude: f64,
}

impl CorrectionPlan {
    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn unitary(&self) -> Option<&Operator> {
        self.unitary.as_ref()
    }

    pub fn is_deterministic_failure(&self) -> bool {
        self.unitary.is_none()
    }

    /// Pairs `(particle-3 level, qutrit level)`.
    pub fn relabel(&self) -> Vec<(usize, usize)> {
        self.support.iter().copied().zip(self.relabel.iter().copied()).collect()
    }

    /// Coefficient multiplying the target state on the `|0⟩_b` branch.
    pub fn success_amplitude(&self) -> f64 {
        self.success_amplitude
    }

    /// `psi` written on the support levels of particle 3.
    pub fn embed_target(&self, psi: &QutritState) -> StateVector {
        let src = psi.amps();
        let mut amps = vec![Complex64::new(0.0, 0.0); 4];
        for (&level, &q) in self.support.iter().zip(&self.relabel) {
            amps[level] = src[q];
        }
        StateVector::new(particle3_shape(), amps).expect("four amplitudes")
    }

    fn check_support(&self, state: &StateVector) -> Result<()> {
        if state.shape() != &particle3_shape() {
            return Err(Error::Dimension(format!("expected a particle-3 state, got shape {:?}", state.shape().dims())));
        }
        for (level, z) in state.amps().iter().enumerate() {
            if !self.support.contains(&level) && z.norm() > EXACT_TOL {
                return Err(Error::Contract(format!(
                    "amplitude {z} on level {level} outside support {:?}",
                    self.support
                )));
            }
        }
        Ok(())
    }
}

struct PlanShape {
    support: &'static [usize],
    relabel: &'static [usize],
}

fn qutrit_plan_shape(j: Outcome) -> PlanShape {
    match j.index() {
        1 | 2 => PlanShape { support: &[0, 1, 2], relabel: &[0, 1, 2] },
        3 | 4 => PlanShape { support: &[1, 2, 3], relabel: &[0, 1, 2] },
        5 | 6 => PlanShape { support: &[0, 2, 3], relabel: &[0, 1, 2] },
        _ => PlanShape { support: &[0, 1, 3], relabel: &[0, 1, 2] },
    }
}

pub fn correction_plan(j: Outcome, a: &SchmidtVector, regime: Regime) -> Result<CorrectionPlan> {
    correction_plan_from(j, a, regime, MatrixSource::Repaired)
}

pub fn correction_plan_from(
    j: Outcome,
    a: &SchmidtVector,
    regime: Regime,
    source: MatrixSource,
) -> Result<CorrectionPlan> {
    let unitary = correction_unitary(j, a, regime, source)?;
    let branch = regime.branch_for(j);
    let [a0, a1, a2, _] = a.coeffs();
    let success_amplitude = match (j.index(), branch) {
        (1 | 2, Branch::Unprimed) => SQRT_2 * a0,
        (1 | 2, Branch::Primed) => a1,
        (3 | 4, Branch::Unprimed) => SQRT_2 * a1,
        (3 | 4, Branch::Primed) => a2,
        _ => a0,
    };
    if unitary.is_none() && success_amplitude != 0.0 {
        return Err(Error::Contract(format!(
            "outcome {j}: vanishing divisor with success amplitude {success_amplitude}"
        )));
    }
    let shape = qutrit_plan_shape(j);
    Ok(CorrectionPlan {
        outcome: j,
        branch,
        support: shape.support.to_vec(),
        unitary,
        relabel: shape.relabel.to_vec(),
        success_amplitude,
    })
}

/// Correction for outcomes 9–12 when the input has `α = 0`.
///
/// The collapsed state is `(β κ_β |l_β⟩ − γ κ_γ |l_γ⟩)/√2`; each level is
/// rotated with the aux qubit so its amplitude drops to the smaller of the
/// two Schmidt coefficients, the surplus going to `|1⟩_b`.
pub fn qubit_plan(j: Outcome, a: &SchmidtVector) -> Result<CorrectionPlan> {
    // (β level, β coefficient index, γ level, γ coefficient index); γ carries a minus sign
    let (beta_level, gamma_level) = match j.index() {
        9 => (1, 2),
        10 => (2, 3),
        11 => (3, 0),
        12 => (0, 1),
        _ => return Err(Error::Contract(format!("outcome {j} is not a two-level outcome"))),
    };
    let kb = a.get(beta_level);
    let kg = a.get(gamma_level);
    let m = kb.min(kg);
    let mut terms = [(beta_level, kb, 1usize), (gamma_level, -kg, 2usize)];
    terms.sort_by_key(|t| t.0);
    let support = terms.iter().map(|t| t.0).collect();
    let relabel = terms.iter().map(|t| t.2).collect();
    let unitary = if m == 0.0 {
        None
    } else {
        let mut rows = [[0.0; 4]; 4];
        for (i, &(_, kappa, _)) in terms.iter().enumerate() {
            let c = m / kappa;
            let s = comp(c);
            rows[2 * i][2 * i] = c;
            rows[2 * i][2 * i + 1] = s;
            rows[2 * i + 1][2 * i] = -s;
            rows[2 * i + 1][2 * i + 1] = c;
        }
        Some(Operator::from_real_rows(&rows, format!("U2b({j})"))?)
    };
    Ok(CorrectionPlan { outcome: j, branch: Branch::Unprimed, support, unitary, relabel, success_amplitude: m })
}

/// Joint state of the support levels of particle 3 and the aux qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedState {
    joint: StateVector,
    support: Vec<usize>,
}

impl CorrectedState {
    /// Shape `[support size, 2]`.
    pub fn joint(&self) -> &StateVector {
        &self.joint
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Unnormalized particle-3 component conditioned on aux result `aux`.
    pub fn branch(&self, aux: usize) -> StateVector {
        let mut amps = vec![Complex64::new(0.0, 0.0); 4];
        for (i, &level) in self.support.iter().enumerate() {
            amps[level] = self.joint.amps()[2 * i + aux];
        }
        StateVector::new(particle3_shape(), amps).expect("four amplitudes")
    }

    /// Weight of the `|0⟩_b` branch.
    pub fn success_probability(&self) -> f64 {
        self.branch(0).norm_sqr()
    }
}

/// Embeds the normalized collapsed state with `|0⟩_b` and applies the plan's unitary.
pub fn apply_correction(collapsed3: &StateVector, plan: &CorrectionPlan) -> Result<CorrectedState> {
    let unitary = plan
        .unitary
        .as_ref()
        .ok_or_else(|| Error::Contract(format!("outcome {} has no correction unitary", plan.outcome)))?;
    let normalized = collapsed3.normalized()?;
    plan.check_support(&normalized)?;
    let mut v = vec![Complex64::new(0.0, 0.0); 2 * plan.support.len()];
    for (i, &level) in plan.support.iter().enumerate() {
        v[2 * i] = normalized.amps()[level];
    }
    let out = unitary.apply(&v)?;
    let shape = RegisterShape::new(vec![plan.support.len(), 2])?;
    let joint = StateVector::new(shape, out)?.normalized()?;
    Ok(CorrectedState { joint, support: plan.support.clone() })
}

/// Result of the von Neumann measurement on the aux qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxMeasurement {
    pub aux: u8,
    /// Normalized particle-3 state conditioned on `aux`.
    pub state: StateVector,
}

impl AuxMeasurement {
    pub fn success(&self) -> bool {
        self.aux == 0
    }
}

pub fn measure_aux<R: Rng + ?Sized>(corrected: &CorrectedState, rng: &mut R) -> Result<AuxMeasurement> {
    let p0 = corrected.success_probability().clamp(0.0, 1.0);
    let aux = if rng.random::<f64>() < p0 { 0 } else { 1 };
    let state = corrected.branch(aux).normalized()?;
    Ok(AuxMeasurement { aux: aux as u8, state })
}

/// Relabels the support levels onto qutrit levels and fixes the global phase.
pub fn canonicalize(final3: &StateVector, plan: &CorrectionPlan) -> Result<QutritState> {
    plan.check_support(final3)?;
    let mut amps = [Complex64::new(0.0, 0.0); 3];
    for (&level, &q) in plan.support.iter().zip(&plan.relabel) {
        amps[q] = final3.amps()[level];
    }
    let n = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(Error::Contract("cannot canonicalize the zero vector".into()));
    }
    let amps = amps.map(|z| z / n);
    Ok(QutritState::new(amps[0], amps[1], amps[2])?.with_fixed_phase())
}
