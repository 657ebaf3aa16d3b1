//! The shared two-ququart channel `Σ aᵢ|ii⟩` and the circuit that prepares it
//! from `|00⟩`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{apply_to_subsystems, make_basis_state, Operator, RegisterShape, StateVector, EXACT_TOL};

/// Schmidt coefficients `0 ≤ a0 ≤ a1 ≤ a2 ≤ a3` with `Σ aᵢ² = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct SchmidtVector([f64; 4]);

impl SchmidtVector {
    pub fn new(coeffs: [f64; 4]) -> Result<Self> {
        Self::check_shape(&coeffs)?;
        let n2: f64 = coeffs.iter().map(|a| a * a).sum();
        if (n2 - 1.0).abs() > EXACT_TOL {
            return Err(Error::Validation(format!("Schmidt coefficients are not normalized: Σaᵢ² = {n2}")));
        }
        Ok(Self(coeffs))
    }

    /// Rescales coefficients whose squared norm is within `tol` of one.
    /// The flag reports whether rescaling took place.
    pub fn renormalized(coeffs: [f64; 4], tol: f64) -> Result<(Self, bool)> {
        Self::check_shape(&coeffs)?;
        let n2: f64 = coeffs.iter().map(|a| a * a).sum();
        if (n2 - 1.0).abs() > tol {
            return Err(Error::Validation(format!("Schmidt coefficients are not normalized: Σaᵢ² = {n2}")));
        }
        if (n2 - 1.0).abs() <= EXACT_TOL {
            return Ok((Self(coeffs), false));
        }
        let n = n2.sqrt();
        Ok((Self(coeffs.map(|a| a / n)), true))
    }

    fn check_shape(coeffs: &[f64; 4]) -> Result<()> {
        if coeffs.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Validation(format!("Schmidt coefficients must be finite and non-negative: {coeffs:?}")));
        }
        if coeffs.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Validation(format!("ordering violated: expected a0 ≤ a1 ≤ a2 ≤ a3, got {coeffs:?}")));
        }
        Ok(())
    }

    /// Four uniform draws, normalized in squares and sorted ascending.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let mut x: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>());
            let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n < 1e-6 {
                continue;
            }
            x.iter_mut().for_each(|v| *v /= n);
            x.sort_by(f64::total_cmp);
            if let Ok(s) = Self::new(x) {
                return s;
            }
        }
    }

    pub fn uniform() -> Self {
        Self([0.5; 4])
    }

    pub fn coeffs(&self) -> [f64; 4] {
        self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn a0(&self) -> f64 {
        self.0[0]
    }

    pub fn a1(&self) -> f64 {
        self.0[1]
    }

    pub fn a2(&self) -> f64 {
        self.0[2]
    }

    pub fn a3(&self) -> f64 {
        self.0[3]
    }
}

impl TryFrom<[f64; 4]> for SchmidtVector {
    type Error = Error;

    fn try_from(value: [f64; 4]) -> Result<Self> {
        Self::new(value)
    }
}

impl From<SchmidtVector> for [f64; 4] {
    fn from(value: SchmidtVector) -> Self {
        value.0
    }
}

impl fmt::Display for SchmidtVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a0, a1, a2, a3] = self.0;
        write!(f, "({a0}, {a1}, {a2}, {a3})")
    }
}

/// Single-ququart rotation taking `|0⟩` to `Σ aᵢ|i⟩`.
pub fn build_u1(a: &SchmidtVector) -> Operator {
    let [a0, a1, a2, a3] = a.coeffs();
    Operator::from_real_rows(&[[a0, a1, a2, a3], [a1, -a0, -a3, a2], [a2, a3, -a0, -a1], [a3, -a2, a1, -a0]], "U1")
        .expect("4x4")
}

/// Cyclic shift `|0⟩⟨1| + |1⟩⟨2| + |2⟩⟨3| + |3⟩⟨0|`.
pub fn shift_v() -> Operator {
    permutation(&[(0, 1), (1, 2), (2, 3), (3, 0)], "V")
}

/// Partial shift `|0⟩⟨1| + |1⟩⟨2| + |2⟩⟨0| + |3⟩⟨3|`.
pub fn shift_w() -> Operator {
    permutation(&[(0, 1), (1, 2), (2, 0), (3, 3)], "W")
}

/// Sum of `|row⟩⟨col|` terms.
fn permutation(terms: &[(usize, usize)], label: &str) -> Operator {
    let mut m = [[0.0; 4]; 4];
    for &(r, c) in terms {
        m[r][c] = 1.0;
    }
    Operator::from_real_rows(&m, label).expect("4x4")
}

/// Controlled shift on particles 2⊗3:
/// `|0⟩⟨0|⊗I + |1⟩⟨1|⊗V† + |2⟩⟨2|⊗W + |3⟩⟨3|⊗V`.
pub fn build_u2() -> Operator {
    let v = shift_v();
    let blocks = [Operator::identity(4), v.adjoint(), shift_w(), v];
    Operator::from_fn(16, "U2", |r, c| if r / 4 == c / 4 { blocks[r / 4].get(r % 4, c % 4) } else { 0.0.into() })
}

pub fn channel_shape() -> RegisterShape {
    RegisterShape::new(vec![4, 4]).expect("valid")
}

/// `Σ aᵢ|ii⟩` written down directly.
pub fn direct_channel(a: &SchmidtVector) -> StateVector {
    let mut amps = vec![0.0; 16];
    for i in 0..4 {
        amps[i * 4 + i] = a.get(i);
    }
    StateVector::from_real(channel_shape(), &amps).expect("16 amplitudes")
}

/// Runs `U2 (U1 ⊗ I) |00⟩` and checks the result against [`direct_channel`].
pub fn prepare_channel(a: &SchmidtVector) -> Result<StateVector> {
    let start = make_basis_state(&channel_shape(), &[0, 0])?;
    let after_u1 = apply_to_subsystems(&start, &build_u1(a), &[0])?;
    let phi = apply_to_subsystems(&after_u1, &build_u2(), &[0, 1])?;
    let dev = phi.max_abs_diff(&direct_channel(a))?;
    if dev > EXACT_TOL {
        return Err(Error::Contract(format!("prepared channel deviates from Σaᵢ|ii⟩ by {dev:e}")));
    }
    Ok(phi)
}
