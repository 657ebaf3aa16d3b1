//! Seeded end-to-end sampling of the protocol.
//!
//! Trial `k` of a run with seed `s` draws from ChaCha8 seeded with `s` on
//! stream `k`, so results do not depend on how trials are split across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{decompose_total, qubit_mode_total, AnalyticReport};
use crate::channel::SchmidtVector;
use crate::correction::{
    apply_correction, canonicalize, classify_regime, correction_plan, measure_aux, qubit_plan, CorrectedState,
    CorrectionPlan, Regime,
};
use crate::error::{Error, Result};
use crate::measurement::{build_projector_tree, total_state, Outcome, TreeEvaluation};
use crate::qutrit::QutritState;

/// Random source for trial `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Teleport a qutrit; outcomes 9–12 fail.
    #[default]
    Qutrit,
    /// Teleport `β|1⟩ + γ|2⟩`; outcomes 9–12 get two-level corrections.
    Qubit,
}

/// Record of one run of the protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTrace {
    pub seed: u64,
    pub stream: u64,
    pub outcome: Outcome,
    pub regime_used: Regime,
    /// Name of the correction matrix Bob applied, if any.
    pub correction: Option<String>,
    pub aux_result: Option<u8>,
    pub success: bool,
    pub fidelity_on_success: Option<f64>,
    pub final_state: Option<QutritState>,
}

struct OutcomeBranch {
    plan: CorrectionPlan,
    corrected: Option<CorrectedState>,
}

/// Protocol state that does not depend on the random draws: the tree
/// weights for `|ψ⟩|Φ⟩`, and Bob's corrected state for every reachable outcome.
pub struct Protocol {
    psi: QutritState,
    mode: Mode,
    regime: Regime,
    evaluation: TreeEvaluation,
    branches: Vec<Option<OutcomeBranch>>,
    analytic: AnalyticReport,
    analytic_success: f64,
}

impl Protocol {
    pub fn new(psi: &QutritState, a: &SchmidtVector, mode: Mode) -> Result<Self> {
        if mode == Mode::Qubit && psi.alpha().norm() != 0.0 {
            return Err(Error::Validation("qubit mode needs α = 0".into()));
        }
        let regime = classify_regime(a);
        let total = total_state(psi, a)?;
        let evaluation = build_projector_tree().evaluate(&total)?;
        let mut branches = Vec::with_capacity(Outcome::COUNT);
        for j in Outcome::all() {
            let plan = if j.is_correctable() {
                Some(correction_plan(j, a, regime)?)
            } else if mode == Mode::Qubit {
                Some(qubit_plan(j, a)?)
            } else {
                None
            };
            let branch = match plan {
                Some(plan) => {
                    let corrected = match (evaluation.residual(j), plan.unitary()) {
                        (Some(residual), Some(_)) => Some(apply_correction(residual, &plan)?),
                        _ => None,
                    };
                    Some(OutcomeBranch { plan, corrected })
                }
                None => None,
            };
            branches.push(branch);
        }
        let analytic = decompose_total(psi, a);
        let analytic_success = match mode {
            Mode::Qutrit => analytic.p_total,
            Mode::Qubit => qubit_mode_total([psi.beta(), psi.gamma()], a)?,
        };
        Ok(Self { psi: *psi, mode, regime, evaluation, branches, analytic, analytic_success })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn analytic(&self) -> &AnalyticReport {
        &self.analytic
    }

    /// Closed-form success probability for this protocol's mode.
    pub fn analytic_success(&self) -> f64 {
        self.analytic_success
    }

    /// Measure, correct, measure the aux qubit, canonicalize.
    pub fn run_trial<R: Rng + ?Sized>(&self, rng: &mut R, seed: u64, stream: u64) -> Result<ProtocolTrace> {
        let (outcome, _) = self.evaluation.sample(rng)?;
        let mut trace = ProtocolTrace {
            seed,
            stream,
            outcome,
            regime_used: self.regime,
            correction: None,
            aux_result: None,
            success: false,
            fidelity_on_success: None,
            final_state: None,
        };
        let Some(branch) = &self.branches[outcome.index() - 1] else {
            return Ok(trace);
        };
        trace.correction = branch.plan.unitary().map(|u| u.label().to_string());
        let Some(corrected) = &branch.corrected else {
            return Ok(trace);
        };
        let measured = measure_aux(corrected, rng)?;
        trace.aux_result = Some(measured.aux);
        if measured.success() {
            let recovered = canonicalize(&measured.state, &branch.plan)?;
            trace.success = true;
            trace.fidelity_on_success = Some(recovered.fidelity(&self.psi));
            trace.final_state = Some(recovered);
        }
        Ok(trace)
    }

    /// Trial `stream` of a run seeded with `seed`.
    pub fn trace(&self, seed: u64, stream: u64) -> Result<ProtocolTrace> {
        self.run_trial(&mut stream_rng(seed, stream), seed, stream)
    }

    pub fn run(&self, trials: u64, seed: u64, execution: Execution) -> Result<EmpiricalReport> {
        if trials == 0 {
            return Err(Error::Validation("at least one trial is required".into()));
        }
        let summarize = |k: u64| self.trace(seed, k).map(|t| TrialSummary::from(&t));
        let summaries: Vec<TrialSummary> = match execution {
            Execution::Serial => (0..trials).map(summarize).collect::<Result<_>>()?,
            Execution::Parallel => (0..trials).into_par_iter().map(summarize).collect::<Result<_>>()?,
            Execution::Workers(w) => {
                let w = w.max(1) as u64;
                let chunk = trials.div_ceil(w);
                let parts: Vec<Result<Vec<TrialSummary>>> = std::thread::scope(|scope| {
                    let handles: Vec<_> = (0..w)
                        .map(|i| {
                            let range = (i * chunk).min(trials)..((i + 1) * chunk).min(trials);
                            scope.spawn(move || range.map(summarize).collect::<Result<Vec<_>>>())
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
                });
                let mut all = Vec::with_capacity(trials as usize);
                for part in parts {
                    all.extend(part?);
                }
                all
            }
        };
        Ok(self.aggregate(&summaries))
    }

    fn aggregate(&self, summaries: &[TrialSummary]) -> EmpiricalReport {
        let trials = summaries.len() as u64;
        let mut outcome_counts = [0u64; 12];
        let mut success_count = 0u64;
        let mut fidelity_sum = 0.0;
        let mut min_fidelity: Option<f64> = None;
        for s in summaries {
            outcome_counts[s.outcome.index() - 1] += 1;
            if let Some(f) = s.fidelity {
                success_count += 1;
                fidelity_sum += f;
                min_fidelity = Some(min_fidelity.map_or(f, |m| m.min(f)));
            }
        }
        let n = trials as f64;
        let z_scores = ZScores {
            success: z_score(success_count, n, self.analytic_success),
            outcomes: std::array::from_fn(|i| z_score(outcome_counts[i], n, self.analytic.p_outcome[i])),
        };
        EmpiricalReport {
            trials,
            mode: self.mode,
            outcome_counts,
            success_count,
            mean_fidelity_on_success: (success_count > 0).then(|| fidelity_sum / success_count as f64),
            min_fidelity_on_success: min_fidelity,
            z_scores,
        }
    }
}

/// How trials are distributed; all choices give identical reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Serial,
    /// Rayon's global pool.
    Parallel,
    /// Contiguous blocks of trials on this many scoped threads.
    Workers(usize),
}

struct TrialSummary {
    outcome: Outcome,
    fidelity: Option<f64>,
}

impl From<&ProtocolTrace> for TrialSummary {
    fn from(t: &ProtocolTrace) -> Self {
        Self { outcome: t.outcome, fidelity: if t.success { t.fidelity_on_success } else { None } }
    }
}

/// Standardized deviation of an observed frequency from `p` under a binomial
/// model. `None` when `p` is 0 or 1 and the observation disagrees.
fn z_score(count: u64, n: f64, p: f64) -> Option<f64> {
    let observed = count as f64 / n;
    let sigma = (p * (1.0 - p) / n).sqrt();
    if sigma > 0.0 {
        Some((observed - p) / sigma)
    } else if (observed - p).abs() < 1e-15 {
        Some(0.0)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScores {
    pub success: Option<f64>,
    pub outcomes: [Option<f64>; 12],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalReport {
    pub trials: u64,
    pub mode: Mode,
    pub outcome_counts: [u64; 12],
    pub success_count: u64,
    pub mean_fidelity_on_success: Option<f64>,
    pub min_fidelity_on_success: Option<f64>,
    pub z_scores: ZScores,
}

impl EmpiricalReport {
    pub fn success_rate(&self) -> f64 {
        self.success_count as f64 / self.trials as f64
    }
}

/// A single seeded run of the qutrit protocol (stream 0).
pub fn run_once(psi: &QutritState, a: &SchmidtVector, seed: u64) -> Result<ProtocolTrace> {
    Protocol::new(psi, a, Mode::Qutrit)?.trace(seed, 0)
}

pub fn run_many(psi: &QutritState, a: &SchmidtVector, trials: u64, seed: u64) -> Result<EmpiricalReport> {
    Protocol::new(psi, a, Mode::Qutrit)?.run(trials, seed, Execution::Parallel)
}

/// Monte-Carlo of the qubit reduction, `α = 0` with outcomes 9–12 corrected.
pub fn run_many_qubit(
    beta_gamma: [num_complex::Complex64; 2],
    a: &SchmidtVector,
    trials: u64,
    seed: u64,
) -> Result<EmpiricalReport> {
    let psi = QutritState::new(0.0.into(), beta_gamma[0], beta_gamma[1])?;
    Protocol::new(&psi, a, Mode::Qubit)?.run(trials, seed, Execution::Parallel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(c: [f64; 4]) -> SchmidtVector {
        SchmidtVector::new(c).unwrap()
    }

    #[test]
    fn streams_differ_and_repeat() {
        let x: u64 = stream_rng(7, 0).random();
        let y: u64 = stream_rng(7, 1).random();
        let z: u64 = stream_rng(7, 0).random();
        assert_ne!(x, y);
        assert_eq!(x, z);
    }

    #[test]
    fn alpha_only_runs_succeed_with_unit_fidelity() {
        let psi = QutritState::from_real(1.0, 0.0, 0.0).unwrap();
        let p = Protocol::new(&psi, &SchmidtVector::uniform(), Mode::Qutrit).unwrap();
        for k in 0..200 {
            let t = p.trace(3, k).unwrap();
            assert!(t.outcome.is_correctable());
            if t.success {
                assert!((t.fidelity_on_success.unwrap() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rank_two_channel_never_succeeds() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut rng = stream_rng(1, 0);
        let psi = QutritState::random(&mut rng);
        let r = run_many(&psi, &sv([0.0, 0.0, h, h]), 2000, 9).unwrap();
        assert_eq!(r.success_count, 0);
        assert_eq!(r.mean_fidelity_on_success, None);
        assert_eq!(r.z_scores.success, Some(0.0));
    }

    #[test]
    fn trace_invariants() {
        let mut rng = stream_rng(2, 0);
        for _ in 0..10 {
            let psi = QutritState::random(&mut rng);
            let a = SchmidtVector::random(&mut rng);
            let p = Protocol::new(&psi, &a, Mode::Qutrit).unwrap();
            for k in 0..100 {
                let t = p.trace(5, k).unwrap();
                if !t.outcome.is_correctable() {
                    assert_eq!(t.aux_result, None);
                    assert!(!t.success);
                }
                if t.success {
                    assert!(t.fidelity_on_success.unwrap() >= 1.0 - 1e-9);
                    assert_eq!(t.aux_result, Some(0));
                }
            }
        }
    }

    #[test]
    fn fixed_seed_reproduces_trace() {
        let psi = QutritState::from_real(0.6, 0.0, 0.8).unwrap();
        let a = sv([0.1, 0.2, 0.4, 0.79f64.sqrt()]);
        assert_eq!(run_once(&psi, &a, 42).unwrap(), run_once(&psi, &a, 42).unwrap());
    }

    #[test]
    fn execution_strategies_agree() {
        let psi = QutritState::from_real(0.6, 0.0, 0.8).unwrap();
        let a = SchmidtVector::uniform();
        let p = Protocol::new(&psi, &a, Mode::Qutrit).unwrap();
        let serial = p.run(5000, 11, Execution::Serial).unwrap();
        assert_eq!(serial, p.run(5000, 11, Execution::Parallel).unwrap());
        for w in [1, 3, 8] {
            assert_eq!(serial, p.run(5000, 11, Execution::Workers(w)).unwrap());
        }
        assert_eq!(serial.outcome_counts.iter().sum::<u64>(), 5000);
        assert!(p.run(0, 1, Execution::Serial).is_err());
    }

    #[test]
    fn qubit_mode_requires_zero_alpha() {
        let psi = QutritState::from_real(0.6, 0.0, 0.8).unwrap();
        assert!(Protocol::new(&psi, &SchmidtVector::uniform(), Mode::Qubit).is_err());
    }

    #[test]
    fn single_ket_qubit_succeeds_in_failure_outcomes() {
        let one = num_complex::Complex64::new(1.0, 0.0);
        let zero = num_complex::Complex64::new(0.0, 0.0);
        let r = run_many_qubit([one, zero], &SchmidtVector::uniform(), 4000, 3).unwrap();
        assert_eq!(r.success_count, r.trials);
    }
}
