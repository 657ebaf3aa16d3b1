//! Closed-form success probabilities.

use serde::{Deserialize, Serialize};

use crate::channel::SchmidtVector;
use crate::correction::{classify_regime, Branch, Regime};
use crate::error::{Error, Result};
use crate::measurement::{outcome_probabilities, Outcome};
use crate::qutrit::QutritState;

/// Probability that Bob's aux qubit reads `|0⟩` given Alice's outcome `j`.
/// Outcomes 9–12 are failures in qutrit mode and return zero, as does any
/// outcome whose probability vanishes.
pub fn conditional_success(j: Outcome, psi: &QutritState, a: &SchmidtVector, regime: Regime) -> f64 {
    let [x, y, z] = psi.populations();
    let [a0, a1, a2, a3] = a.coeffs().map(|v| v * v);
    let (numerator, denominator) = match (j.index(), regime.branch_for(j)) {
        (1 | 2, Branch::Unprimed) => (2.0 * a0, 2.0 * x * a0 + y * a1 + z * a2),
        (1 | 2, Branch::Primed) => (a1, 2.0 * x * a0 + y * a1 + z * a2),
        (3 | 4, Branch::Unprimed) => (2.0 * a1, 2.0 * x * a1 + y * a2 + z * a3),
        (3 | 4, Branch::Primed) => (a2, 2.0 * x * a1 + y * a2 + z * a3),
        (5 | 6, _) => (a0, 2.0 * x * a2 + y * a3 + z * a0),
        (7 | 8, _) => (a0, 2.0 * x * a3 + y * a0 + z * a1),
        _ => return 0.0,
    };
    if denominator > 0.0 {
        numerator / denominator
    } else {
        0.0
    }
}

/// Total success probability for the regime of `a`.
pub fn total_success(a: &SchmidtVector) -> (f64, Regime) {
    let regime = classify_regime(a);
    (closed_form_total(a, regime), regime)
}

/// Total success probability of the given regime's formula, evaluated at `a`
/// whether or not `a` lies in that regime.
pub fn closed_form_total(a: &SchmidtVector, regime: Regime) -> f64 {
    let [a0, a1, a2, _] = a.coeffs().map(|v| v * v);
    match (regime.low, regime.high) {
        (Branch::Unprimed, Branch::Unprimed) => 2.0 * a0 + a1,
        (Branch::Primed, Branch::Unprimed) => a0 + 1.5 * a1,
        (Branch::Unprimed, Branch::Primed) => 2.0 * a0 + a2 / 2.0,
        (Branch::Primed, Branch::Primed) => a0 + a1 / 2.0 + a2 / 2.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticReport {
    pub p_outcome: [f64; 12],
    pub p_success_given_outcome: [f64; 8],
    pub p_total: f64,
    pub regime: Regime,
    pub per_outcome_contribution: [f64; 8],
}

pub fn decompose_total(psi: &QutritState, a: &SchmidtVector) -> AnalyticReport {
    let regime = classify_regime(a);
    let dist = outcome_probabilities(psi, a);
    let mut p_success_given_outcome = [0.0; 8];
    let mut per_outcome_contribution = [0.0; 8];
    for j in Outcome::all().filter(|j| j.is_correctable()) {
        let i = j.index() - 1;
        p_success_given_outcome[i] = conditional_success(j, psi, a, regime);
        per_outcome_contribution[i] = dist.p[i] * p_success_given_outcome[i];
    }
    AnalyticReport {
        p_outcome: dist.p,
        p_success_given_outcome,
        p_total: per_outcome_contribution.iter().sum(),
        regime,
        per_outcome_contribution,
    }
}

/// Success probability of a two-level outcome (9–12) with `α = 0`, when the
/// larger coefficient is rotated down to the smaller one.
pub fn qubit_conditional_success(j: Outcome, psi: &QutritState, a: &SchmidtVector) -> f64 {
    let (kb, kg) = match j.index() {
        9 => (a.a1(), a.a2()),
        10 => (a.a2(), a.a3()),
        11 => (a.a3(), a.a0()),
        12 => (a.a0(), a.a1()),
        _ => return 0.0,
    };
    let [_, y, z] = psi.populations();
    let denominator = y * kb * kb + z * kg * kg;
    let m = kb.min(kg);
    if denominator > 0.0 {
        m * m / denominator
    } else {
        0.0
    }
}

/// Total success probability for the qubit `β|1⟩ + γ|2⟩` when outcomes 9–12
/// are corrected as well.
pub fn qubit_mode_total(beta_gamma: [num_complex::Complex64; 2], a: &SchmidtVector) -> Result<f64> {
    let psi = QutritState::new(0.0.into(), beta_gamma[0], beta_gamma[1])
        .map_err(|_| Error::Validation("qubit amplitudes must satisfy |β|²+|γ|² = 1".into()))?;
    let report = decompose_total(&psi, a);
    let extra: f64 = (9..=12)
        .map(|j| {
            let j = Outcome::new(j).expect("in range");
            report.p_outcome[j.index() - 1] * qubit_conditional_success(j, &psi, a)
        })
        .sum();
    Ok(report.p_total + extra)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub schmidt: SchmidtVector,
    pub regime: Regime,
    pub p_total: f64,
}

/// Channels whose squared coefficients lie on the grid `nᵢ/K`, `Σnᵢ = K`,
/// keeping the ordered ones. Rows are sorted by coefficients.
pub fn sweep(resolution: usize) -> Result<Vec<SweepRow>> {
    if resolution < 2 {
        return Err(Error::Validation(format!("sweep resolution must be at least 2, got {resolution}")));
    }
    let k = resolution;
    let mut rows = Vec::new();
    for n0 in 0..=k {
        for n1 in n0..=k - n0 {
            for n2 in n1..=k - n0 - n1 {
                let n3 = k - n0 - n1 - n2;
                if n3 < n2 {
                    continue;
                }
                let coeffs = [n0, n1, n2, n3].map(|n| (n as f64 / k as f64).sqrt());
                let schmidt = SchmidtVector::new(coeffs)?;
                let (p_total, regime) = total_success(&schmidt);
                rows.push(SweepRow { schmidt, regime, p_total });
            }
        }
    }
    rows.sort_by(|x, y| {
        x.schmidt
            .coeffs()
            .iter()
            .zip(y.schmidt.coeffs().iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn o(j: usize) -> Outcome {
        Outcome::new(j).unwrap()
    }

    fn sv(c: [f64; 4]) -> SchmidtVector {
        SchmidtVector::new(c).unwrap()
    }

    #[test]
    fn conditional_examples() {
        let alpha = QutritState::from_real(1.0, 0.0, 0.0).unwrap();
        let a = sv([0.1, 0.2, 0.4, 0.79f64.sqrt()]);
        let unprimed = Regime { low: Branch::Unprimed, high: Branch::Unprimed };
        assert!((conditional_success(o(1), &alpha, &a, unprimed) - 1.0).abs() < 1e-15);
        let u = SchmidtVector::uniform();
        assert!((conditional_success(o(5), &alpha, &u, classify_regime(&u)) - 0.5).abs() < 1e-15);
        assert_eq!(conditional_success(o(10), &alpha, &u, classify_regime(&u)), 0.0);
    }

    #[test]
    fn total_examples() {
        let (p, r) = total_success(&sv([0.1, 0.2, 0.4, 0.79f64.sqrt()]));
        assert!((p - 0.06).abs() < 1e-12);
        assert_eq!(r, Regime { low: Branch::Unprimed, high: Branch::Unprimed });
        assert!((total_success(&SchmidtVector::uniform()).0 - 0.5).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(total_success(&sv([0.0, 0.0, h, h])).0, 0.0);
        assert!((total_success(&sv([0.2, 0.25, 0.4, 0.7375f64.sqrt()])).0 - 0.13375).abs() < 1e-12);
        assert!((total_success(&sv([0.1, 0.3, 0.35, 0.7775f64.sqrt()])).0 - 0.08125).abs() < 1e-12);
    }

    #[test]
    fn decomposition_contributions() {
        let a = sv([0.1, 0.2, 0.4, 0.79f64.sqrt()]);
        let psi = QutritState::from_real(0.6, 0.0, 0.8).unwrap();
        let r = decompose_total(&psi, &a);
        let (a0, a1) = (0.01, 0.04);
        let expected = [a0 / 2.0, a0 / 2.0, a1 / 2.0, a1 / 2.0, a0 / 4.0, a0 / 4.0, a0 / 4.0, a0 / 4.0];
        for (got, e) in r.per_outcome_contribution.iter().zip(expected) {
            assert!((got - e).abs() < 1e-15);
        }
        assert!((r.p_total - 0.06).abs() < 1e-12);

        let no_alpha = QutritState::from_real(0.0, 0.6, 0.8).unwrap();
        let r = decompose_total(&no_alpha, &a);
        assert!((r.p_outcome[..8].iter().sum::<f64>() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn random_reports_match_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let a = SchmidtVector::random(&mut rng);
            let psi = QutritState::random(&mut rng);
            let other = QutritState::random(&mut rng);
            let r = decompose_total(&psi, &a);
            let (closed, regime) = total_success(&a);
            assert_eq!(r.regime, regime);
            assert!((r.p_total - closed).abs() < 1e-12);
            assert!((r.p_total - decompose_total(&other, &a).p_total).abs() < 1e-10);
            assert!((0.0..=1.0).contains(&r.p_total));
        }
    }

    #[test]
    fn closed_forms_agree_at_boundaries() {
        use rand::Rng;
        use std::f64::consts::SQRT_2;
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut checked = 0usize;
        while checked < 200 {
            let low_edge = checked.is_multiple_of(2);
            let (a0, a1, a2) = if low_edge {
                let a0: f64 = rng.random_range(0.0..0.3);
                let a1 = SQRT_2 * a0;
                (a0, a1, rng.random_range(a1..0.6))
            } else {
                let a1: f64 = rng.random_range(0.0..0.35);
                let a0 = rng.random_range(0.0..=a1);
                (a0, a1, SQRT_2 * a1)
            };
            let rest = 1.0 - a0 * a0 - a1 * a1 - a2 * a2;
            if rest < a2 * a2 {
                continue;
            }
            let a = sv([a0, a1, a2, rest.sqrt()]);
            for fixed in [Branch::Unprimed, Branch::Primed] {
                let (x, y) = if low_edge {
                    (Regime { low: Branch::Unprimed, high: fixed }, Regime { low: Branch::Primed, high: fixed })
                } else {
                    (Regime { low: fixed, high: Branch::Unprimed }, Regime { low: fixed, high: Branch::Primed })
                };
                assert!((closed_form_total(&a, x) - closed_form_total(&a, y)).abs() < 1e-12);
            }
            checked += 1;
        }
    }

    #[test]
    fn qubit_mode_examples() {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let u = SchmidtVector::uniform();
        let q = qubit_mode_total([one, zero], &u).unwrap();
        assert!(q > 0.5);
        assert!((q - 1.0).abs() < 1e-12);
        let a = sv([0.0, 0.0, 0.0, 1.0]);
        assert_eq!(qubit_mode_total([one, zero], &a).unwrap(), 0.0);
        assert!(qubit_mode_total([one, one], &u).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let a = SchmidtVector::random(&mut rng);
            let psi = QutritState::random_qubit(&mut rng);
            let q = qubit_mode_total([psi.beta(), psi.gamma()], &a).unwrap();
            assert!(q >= total_success(&a).0 - 1e-12);
            assert!(q <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn sweep_rows() {
        assert!(sweep(1).is_err());
        let rows = sweep(4).unwrap();
        assert!(rows.iter().any(|r| r.schmidt == SchmidtVector::uniform() && (r.p_total - 0.5).abs() < 1e-12));
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.p_total)));
        for w in rows.windows(2) {
            assert!(w[0].schmidt.coeffs() < w[1].schmidt.coeffs());
        }
        for r in &rows {
            assert_eq!(classify_regime(&r.schmidt), r.regime);
        }
        assert_eq!(rows.len(), 5);
    }
}
