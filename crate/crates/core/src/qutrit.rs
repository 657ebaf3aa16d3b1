use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{RegisterShape, StateVector, EXACT_TOL};

/// Amplitudes `(α, β, γ)` of the qutrit `α|0⟩ + β|1⟩ + γ|2⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QutritState {
    amps: [Complex64; 3],
}

impl QutritState {
    /// Accepts amplitudes whose norm is within `1e-12` of one.
    pub fn new(alpha: Complex64, beta: Complex64, gamma: Complex64) -> Result<Self> {
        let amps = [alpha, beta, gamma];
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Validation("non-finite qutrit amplitude".into()));
        }
        let norm = norm_sqr(&amps).sqrt();
        if (norm - 1.0).abs() > EXACT_TOL {
            return Err(Error::Validation(format!("qutrit state has norm {norm}, expected 1")));
        }
        Ok(Self { amps })
    }

    pub fn from_real(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        Self::new(alpha.into(), beta.into(), gamma.into())
    }

    /// Rescales amplitudes whose squared norm is within `tol` of one.
    /// The flag reports whether rescaling took place.
    pub fn renormalized(amps: [Complex64; 3], tol: f64) -> Result<(Self, bool)> {
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Validation("non-finite qutrit amplitude".into()));
        }
        let n2 = norm_sqr(&amps);
        if (n2 - 1.0).abs() > tol {
            return Err(Error::Validation(format!("state is not normalized: |α|²+|β|²+|γ|² = {n2}")));
        }
        if (n2.sqrt() - 1.0).abs() <= EXACT_TOL {
            return Ok((Self { amps }, false));
        }
        let n = n2.sqrt();
        Ok((Self { amps: amps.map(|z| z / n) }, true))
    }

    /// Haar-random qutrit from normalized complex Gaussians.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let amps: [Complex64; 3] =
                std::array::from_fn(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
            let n = norm_sqr(&amps).sqrt();
            if n > 1e-6 {
                return Self { amps: amps.map(|z| z / n) };
            }
        }
    }

    /// Random qubit `β|1⟩ + γ|2⟩` embedded with `α = 0`.
    pub fn random_qubit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let bg: [Complex64; 2] =
                std::array::from_fn(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
            let n = (bg[0].norm_sqr() + bg[1].norm_sqr()).sqrt();
            if n > 1e-6 {
                return Self { amps: [Complex64::new(0.0, 0.0), bg[0] / n, bg[1] / n] };
            }
        }
    }

    pub fn alpha(&self) -> Complex64 {
        self.amps[0]
    }

    pub fn beta(&self) -> Complex64 {
        self.amps[1]
    }

    pub fn gamma(&self) -> Complex64 {
        self.amps[2]
    }

    pub fn amps(&self) -> [Complex64; 3] {
        self.amps
    }

    /// `|α|², |β|², |γ|²`.
    pub fn populations(&self) -> [f64; 3] {
        self.amps.map(|z| z.norm_sqr())
    }

    pub fn to_state_vector(&self) -> StateVector {
        StateVector::new(RegisterShape::new(vec![3]).expect("valid"), self.amps.to_vec()).expect("three amplitudes")
    }

    pub fn with_fixed_phase(&self) -> Self {
        let fixed = self.to_state_vector().with_fixed_phase(EXACT_TOL);
        let a = fixed.amps();
        Self { amps: [a[0], a[1], a[2]] }
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &QutritState) -> f64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum::<Complex64>().norm_sqr().clamp(0.0, 1.0)
    }
}

fn norm_sqr(amps: &[Complex64]) -> f64 {
    amps.iter().map(|z| z.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn validates_normalization() {
        assert!(QutritState::from_real(1.0, 0.0, 0.0).is_ok());
        assert!(matches!(QutritState::from_real(1.0, 0.1, 0.0), Err(Error::Validation(_))));
    }

    #[test]
    fn renormalizes_within_tolerance() {
        let amps = [Complex64::new(1.0 + 1e-10, 0.0), 0.0.into(), 0.0.into()];
        let (s, changed) = QutritState::renormalized(amps, 1e-9).unwrap();
        assert!(changed);
        assert!((s.alpha().re - 1.0).abs() < 1e-15);
        let far = [Complex64::new(1.0 + 1e-6, 0.0), 0.0.into(), 0.0.into()];
        assert!(QutritState::renormalized(far, 1e-9).is_err());
    }

    #[test]
    fn random_states_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let s = QutritState::random(&mut rng);
            assert!((s.populations().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let q = QutritState::random_qubit(&mut rng);
            assert_eq!(q.alpha(), Complex64::new(0.0, 0.0));
            assert!((q.fidelity(&q) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_fixing_keeps_fidelity() {
        let s =
            QutritState::new(Complex64::new(0.0, 0.6), Complex64::new(0.0, 0.0), Complex64::new(-0.8, 0.0)).unwrap();
        let f = s.with_fixed_phase();
        assert!(f.alpha().im.abs() < 1e-15 && f.alpha().re > 0.0);
        assert!((s.fidelity(&f) - 1.0).abs() < 1e-15);
    }
}
