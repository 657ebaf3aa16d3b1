//! Self-checks run by `qtele verify`, grouped into named suites.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::analytics::{closed_form_total, conditional_success, decompose_total, qubit_mode_total, total_success};
use crate::channel::{build_u1, build_u2, direct_channel, prepare_channel, SchmidtVector};
use crate::correction::{
    apply_correction, classify_regime, correction_plan_from, correction_unitary, Branch, MatrixSource, Regime,
};
use crate::error::{Error, Result};
use crate::measurement::{
    build_basis, build_projector_tree, collapsed_state, outcome_probabilities, total_state, Outcome,
};
use crate::montecarlo::{stream_rng, Execution, Mode, Protocol};
use crate::qutrit::QutritState;
use crate::tensor::{check_unitary, Operator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Basis,
    Unitarity,
    Channel,
    Probability,
    Correction,
    Totals,
    MonteCarlo,
    Qubit,
    Determinism,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Basis,
        Suite::Unitarity,
        Suite::Channel,
        Suite::Probability,
        Suite::Correction,
        Suite::Totals,
        Suite::MonteCarlo,
        Suite::Qubit,
        Suite::Determinism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Basis => "basis",
            Suite::Unitarity => "unitarity",
            Suite::Channel => "channel",
            Suite::Probability => "probability",
            Suite::Correction => "correction",
            Suite::Totals => "totals",
            Suite::MonteCarlo => "montecarlo",
            Suite::Qubit => "qubit",
            Suite::Determinism => "determinism",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            let names: Vec<_> = Suite::ALL.iter().map(|x| x.name()).collect();
            Error::Validation(format!("unknown suite '{s}', expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub source: MatrixSource,
    pub seed: u64,
    /// Trials per channel in the Monte-Carlo suite.
    pub trials: u64,
    /// Trials per channel in the qubit suite.
    pub qubit_trials: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { source: MatrixSource::Repaired, seed: 20240601, trials: 100_000, qubit_trials: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub durations: Vec<(Suite, Duration)>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

struct Recorder<'a> {
    suite: Suite,
    out: &'a mut Vec<Check>,
}

impl Recorder<'_> {
    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.out.push(Check { suite: self.suite, name: name.into(), passed, detail: detail.into() });
    }

    /// Records `worst ≤ tol`.
    fn within(&mut self, name: impl Into<String>, worst: f64, tol: f64) {
        self.check(name, worst <= tol, format!("max deviation {worst:.3e} (tol {tol:.0e})"));
    }

    fn result<T>(&mut self, name: &str, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.check(name, false, e.to_string());
                None
            }
        }
    }
}

pub fn run_suites(suites: &[Suite], opts: &VerifyOptions) -> VerifyReport {
    let mut report = VerifyReport::default();
    for &suite in suites {
        let start = Instant::now();
        let mut rec = Recorder { suite, out: &mut report.checks };
        match suite {
            Suite::Basis => basis(&mut rec),
            Suite::Unitarity => unitarity(&mut rec, opts),
            Suite::Channel => channel(&mut rec, opts),
            Suite::Probability => probability(&mut rec, opts),
            Suite::Correction => correction(&mut rec, opts),
            Suite::Totals => totals(&mut rec, opts),
            Suite::MonteCarlo => montecarlo(&mut rec, opts),
            Suite::Qubit => qubit(&mut rec, opts),
            Suite::Determinism => determinism(&mut rec, opts),
        }
        report.durations.push((suite, start.elapsed()));
    }
    report
}

/// Random channel whose regime is `regime`, by rejection.
pub fn random_channel_in<R: Rng + ?Sized>(regime: Regime, rng: &mut R) -> SchmidtVector {
    loop {
        let a = SchmidtVector::random(rng);
        if classify_regime(&a) == regime {
            return a;
        }
    }
}

/// Channels with known totals: (coefficients, `P_total`).
pub fn reference_channels() -> [(SchmidtVector, f64); 4] {
    let sv = |c| SchmidtVector::new(c).expect("reference channel");
    [
        (sv([0.1, 0.2, 0.4, 0.79f64.sqrt()]), 0.06),
        (sv([0.2, 0.25, 0.4, 0.7375f64.sqrt()]), 0.13375),
        (sv([0.1, 0.3, 0.35, 0.7775f64.sqrt()]), 0.08125),
        (SchmidtVector::uniform(), 0.5),
    ]
}

fn identity_deviation(op: &Operator) -> f64 {
    op.max_abs_diff(&Operator::identity(op.dim())).unwrap_or(f64::INFINITY)
}

fn basis(rec: &mut Recorder) {
    let basis = build_basis();
    rec.within("Gram matrix is the identity", identity_deviation(&basis.gram()), 1e-12);
    rec.within("rank-one projectors resolve the identity", identity_deviation(&basis.resolution()), 1e-12);
    let tree = build_projector_tree();
    let mut worst: f64 = 0.0;
    for branch in tree.branches() {
        for (proj, j) in branch.leaf_projectors().into_iter().zip(branch.outcomes()) {
            let expected = Operator::outer(basis.state(j), "P");
            worst = worst.max(proj.operator().max_abs_diff(&expected).unwrap_or(f64::INFINITY));
        }
    }
    rec.within("projector-tree leaves equal the basis projectors", worst, 1e-12);
}

fn unitarity(rec: &mut Recorder, opts: &VerifyOptions) {
    let mut rng = stream_rng(opts.seed, 1);
    let mut worst_u1: f64 = 0.0;
    for _ in 0..100 {
        worst_u1 = worst_u1.max(check_unitary(&build_u1(&SchmidtVector::random(&mut rng)), 0.0).max_deviation);
    }
    rec.within("U1 over 100 channels", worst_u1, 1e-12);
    rec.within("U2", check_unitary(&build_u2(), 0.0).max_deviation, 1e-12);

    // worst deviation per matrix label, each over 100 channels in its regime
    let mut worst: Vec<(String, f64, (usize, usize))> = Vec::new();
    for regime in Regime::ALL {
        for _ in 0..100 {
            let a = random_channel_in(regime, &mut rng);
            for j in Outcome::all().filter(|j| j.is_correctable()) {
                if regime != Regime::ALL[0] && regime.branch_for(j) == Branch::Unprimed {
                    continue;
                }
                let u = match correction_unitary(j, &a, regime, opts.source) {
                    Ok(Some(u)) => u,
                    Ok(None) => continue,
                    Err(e) => {
                        rec.check(format!("correction matrix for outcome {j}"), false, e.to_string());
                        continue;
                    }
                };
                let r = check_unitary(&u, 1e-12);
                match worst.iter_mut().find(|w| w.0 == u.label()) {
                    Some(w) if w.1 < r.max_deviation => {
                        w.1 = r.max_deviation;
                        w.2 = r.worst_entry;
                    }
                    Some(_) => {}
                    None => worst.push((u.label().to_string(), r.max_deviation, r.worst_entry)),
                }
            }
        }
    }
    rec.check("twelve correction matrices present", worst.len() == 12, format!("{} matrices", worst.len()));
    for (label, dev, (r, c)) in worst {
        rec.check(
            format!("{label} over 100 channels"),
            dev <= 1e-12,
            format!("max deviation {dev:.3e} at ({r}, {c}) (tol 1e-12)"),
        );
    }

    let uniform = SchmidtVector::uniform();
    let regime = classify_regime(&uniform);
    let j4 = Outcome::new(4).expect("in range");
    if let Some(Some(printed)) =
        rec.result("printed U'3b(4)", correction_unitary(j4, &uniform, regime, MatrixSource::AsPrinted))
    {
        let r = check_unitary(&printed, 1e-12);
        rec.check(
            "printed U'3b(4) detected as non-unitary",
            !r.is_unitary,
            format!("deviation {:.3e} at {:?}", r.max_deviation, r.worst_entry),
        );
    }
}

fn channel(rec: &mut Recorder, opts: &VerifyOptions) {
    let mut rng = stream_rng(opts.seed, 2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let a = SchmidtVector::random(&mut rng);
        let Some(built) = rec.result("channel circuit", prepare_channel(&a)) else {
            return;
        };
        worst = worst.max(built.max_abs_diff(&direct_channel(&a)).unwrap_or(f64::INFINITY));
    }
    rec.within("U2(U1⊗I)|00⟩ = Σ aᵢ|ii⟩ over 200 channels", worst, 1e-12);
}

fn probability(rec: &mut Recorder, opts: &VerifyOptions) {
    let mut rng = stream_rng(opts.seed, 3);
    let basis = build_basis();
    let tree = build_projector_tree();
    let (mut worst, mut worst_sum, mut worst_tree): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..500 {
        let psi = QutritState::random(&mut rng);
        let a = SchmidtVector::random(&mut rng);
        let Some(total) = rec.result("total state", total_state(&psi, &a)) else {
            return;
        };
        let Some(eval) = rec.result("projector tree", tree.evaluate(&total)) else {
            return;
        };
        let dist = outcome_probabilities(&psi, &a);
        for j in Outcome::all() {
            // Σₗ |(⟨φⱼ| ⊗ ⟨l|)|Ψ⟩|²
            let phi = basis.state(j).amps();
            let brute: f64 = (0..4)
                .map(|l| {
                    phi.iter()
                        .enumerate()
                        .map(|(i, c)| c.conj() * total.amps()[i * 4 + l])
                        .sum::<Complex64>()
                        .norm_sqr()
                })
                .sum();
            worst = worst.max((dist.get(j) - brute).abs());
            worst_tree = worst_tree.max((eval.path_probability(j) - brute).abs());
        }
        worst_sum = worst_sum.max((dist.sum() - 1.0).abs());
    }
    rec.within("closed-form outcome probabilities match |⟨φⱼ|Ψ⟩|² over 500 inputs", worst, 1e-12);
    rec.within("projector-tree path probabilities match |⟨φⱼ|Ψ⟩|²", worst_tree, 1e-12);
    rec.within("outcome probabilities sum to 1", worst_sum, 1e-10);
}

fn correction(rec: &mut Recorder, opts: &VerifyOptions) {
    let mut rng = stream_rng(opts.seed, 4);
    let (mut worst_amp, mut worst_weight): (f64, f64) = (0.0, 0.0);
    for regime in Regime::ALL {
        for _ in 0..50 {
            let a = random_channel_in(regime, &mut rng);
            let psi = QutritState::random(&mut rng);
            for j in Outcome::all().filter(|j| j.is_correctable()) {
                let collapsed = collapsed_state(j, &psi, &a);
                let n = collapsed.norm();
                if n == 0.0 {
                    continue;
                }
                let Some(plan) = rec.result("correction plan", correction_plan_from(j, &a, regime, opts.source)) else {
                    return;
                };
                let Some(corrected) = rec.result("apply correction", apply_correction(&collapsed, &plan)) else {
                    return;
                };
                let success = corrected.branch(0);
                let expected = plan.embed_target(&psi).scaled((plan.success_amplitude() / (2.0 * n)).into());
                worst_amp = worst_amp.max(success.max_abs_diff(&expected).unwrap_or(f64::INFINITY));
                worst_weight = worst_weight.max((success.norm_sqr() - conditional_success(j, &psi, &a, regime)).abs());
            }
        }
    }
    rec.within("success branch equals the scaled target for outcomes 1–8 over 200 inputs", worst_amp, 1e-10);
    rec.within("success weight equals the conditional success probability", worst_weight, 1e-10);
}

fn totals(rec: &mut Recorder, opts: &VerifyOptions) {
    let mut rng = stream_rng(opts.seed, 5);
    let (mut worst_formula, mut worst_state): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let a = SchmidtVector::random(&mut rng);
        let (p, regime) = total_success(&a);
        let reference = decompose_total(&QutritState::random(&mut rng), &a).p_total;
        worst_formula = worst_formula.max((reference - closed_form_total(&a, regime)).abs()).max((p - reference).abs());
        for _ in 0..5 {
            let other = decompose_total(&QutritState::random(&mut rng), &a).p_total;
            worst_state = worst_state.max((other - reference).abs());
        }
    }
    rec.within("P_total matches the regime's closed form over 200 channels", worst_formula, 1e-12);
    rec.within("P_total is independent of the input state", worst_state, 1e-10);

    // on the low edge compare regimes differing in `low`, on the high edge in `high`
    let mut worst_edge: f64 = 0.0;
    for i in 0..200 {
        let a = boundary_channel(i, &mut rng);
        for other in [Branch::Unprimed, Branch::Primed] {
            let (x, y) = if i.is_multiple_of(2) {
                (Regime { low: Branch::Unprimed, high: other }, Regime { low: Branch::Primed, high: other })
            } else {
                (Regime { low: other, high: Branch::Unprimed }, Regime { low: other, high: Branch::Primed })
            };
            worst_edge = worst_edge.max((closed_form_total(&a, x) - closed_form_total(&a, y)).abs());
        }
    }
    rec.within("P_total is continuous across regime boundaries", worst_edge, 1e-12);

    for (a, expected) in reference_channels() {
        let (p, regime) = total_success(&a);
        rec.check(
            format!("P_total({a}) = {expected}"),
            (p - expected).abs() <= 1e-12,
            format!("got {p} in regime {regime}"),
        );
    }
}

/// A channel on the low edge `a1 = √2·a0` (even `i`) or the high edge
/// `a2 = √2·a1` (odd `i`).
pub fn boundary_channel<R: Rng + ?Sized>(i: usize, rng: &mut R) -> SchmidtVector {
    loop {
        let mut c = [0.0; 4];
        if i.is_multiple_of(2) {
            c[0] = rng.random_range(0.01..0.4);
            c[1] = std::f64::consts::SQRT_2 * c[0];
            c[2] = rng.random_range(c[1]..1.0);
        } else {
            c[0] = rng.random_range(0.0..0.3);
            c[1] = rng.random_range(c[0]..0.4);
            c[2] = std::f64::consts::SQRT_2 * c[1];
        }
        let rest = 1.0 - c[0] * c[0] - c[1] * c[1] - c[2] * c[2];
        if rest <= 0.0 {
            continue;
        }
        c[3] = rest.sqrt();
        if let Ok(a) = SchmidtVector::new(c) {
            return a;
        }
    }
}

fn binomial_band(count: u64, n: u64, p: f64) -> (bool, String) {
    let observed = count as f64 / n as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    let ok = (observed - p).abs() <= 4.0 * sigma + 1e-15;
    (ok, format!("observed {observed:.5}, expected {p:.5}, 4σ = {:.5}", 4.0 * sigma))
}

fn montecarlo(rec: &mut Recorder, opts: &VerifyOptions) {
    let mut rng = stream_rng(opts.seed, 6);
    for (a, p) in reference_channels() {
        let psi = QutritState::random(&mut rng);
        let Some(protocol) = rec.result("protocol", Protocol::new(&psi, &a, Mode::Qutrit)) else {
            return;
        };
        let Some(r) = rec.result("monte carlo run", protocol.run(opts.trials, opts.seed, Execution::Parallel)) else {
            return;
        };
        let (ok, detail) = binomial_band(r.success_count, r.trials, p);
        rec.check(format!("success rate for {a} within 4σ of {p}"), ok, detail);
        let min = r.min_fidelity_on_success.unwrap_or(1.0);
        rec.check(format!("fidelity on success for {a}"), min >= 1.0 - 1e-9, format!("minimum {min}"));
    }
    let psi = QutritState::from_real(1.0, 0.0, 0.0).expect("basis state");
    if let Ok(p) = Protocol::new(&psi, &SchmidtVector::uniform(), Mode::Qutrit) {
        if let Some(r) = rec.result("monte carlo run", p.run(opts.trials, opts.seed, Execution::Parallel)) {
            let bad: Vec<_> =
                (0..8).filter(|&i| !binomial_band(r.outcome_counts[i], r.trials, 0.125).0).map(|i| i + 1).collect();
            rec.check("outcome counts for α-only input within 4σ of 1/8", bad.is_empty(), format!("outside: {bad:?}"));
        }
    }
}

fn qubit(rec: &mut Recorder, opts: &VerifyOptions) {
    let mut rng = stream_rng(opts.seed, 7);
    let (mut dominated, mut outside) = (Vec::new(), Vec::new());
    for i in 0..50 {
        let a = SchmidtVector::random(&mut rng);
        let psi = QutritState::random_qubit(&mut rng);
        let Some(total) = rec.result("qubit total", qubit_mode_total([psi.beta(), psi.gamma()], &a)) else {
            return;
        };
        if total < total_success(&a).0 - 1e-12 {
            dominated.push(i);
        }
        let Some(p) = rec.result("qubit protocol", Protocol::new(&psi, &a, Mode::Qubit)) else {
            return;
        };
        let Some(r) = rec.result("qubit run", p.run(opts.qubit_trials, opts.seed + i, Execution::Parallel)) else {
            return;
        };
        if !binomial_band(r.success_count, r.trials, total).0 || r.min_fidelity_on_success.unwrap_or(1.0) < 1.0 - 1e-9 {
            outside.push(i);
        }
    }
    rec.check(
        "qubit-mode total ≥ qutrit total over 50 channels",
        dominated.is_empty(),
        format!("failing: {dominated:?}"),
    );
    rec.check(
        "qubit-mode Monte-Carlo within 4σ with unit fidelity",
        outside.is_empty(),
        format!("failing: {outside:?}"),
    );
}

fn determinism(rec: &mut Recorder, opts: &VerifyOptions) {
    let mut rng = stream_rng(opts.seed, 8);
    let psi = QutritState::random(&mut rng);
    let a = SchmidtVector::random(&mut rng);
    let Some(p) = rec.result("protocol", Protocol::new(&psi, &a, Mode::Qutrit)) else {
        return;
    };
    let n = 20_000;
    let runs: Vec<_> =
        [Execution::Serial, Execution::Parallel, Execution::Workers(3), Execution::Workers(8), Execution::Serial]
            .into_iter()
            .filter_map(|e| rec.result("run", p.run(n, opts.seed, e)))
            .collect();
    let identical = runs.len() == 5 && runs.windows(2).all(|w| w[0] == w[1]);
    rec.check(
        "serial, parallel and split runs give identical reports",
        identical,
        format!("{} runs compared", runs.len()),
    );
    let traces_equal = p.trace(opts.seed, 123).ok() == p.trace(opts.seed, 123).ok();
    rec.check("a seeded trace repeats exactly", traces_equal, "trial 123");
}
