//! Dense complex linear algebra over registers of mixed-dimension subsystems.
//!
//! Amplitudes are stored row-major with the leftmost subsystem most
//! significant, so the ket `|033⟩` over dims `[3, 4, 4]` sits at index
//! `0*16 + 3*4 + 3`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when a value is flagged as normalized, unitary or idempotent.
pub const EXACT_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Ordered subsystem dimensions of a register.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegisterShape {
    dims: Vec<usize>,
}

impl RegisterShape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err(Error::Dimension("register needs at least one subsystem".into()));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::Dimension(format!("subsystem dimension {d} is below 2")));
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Product of all subsystem dimensions.
    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    /// Row-major stride of each subsystem.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.dims[k + 1];
        }
        strides
    }

    pub fn encode(&self, levels: &[usize]) -> Result<usize> {
        if levels.len() != self.dims.len() {
            return Err(Error::Dimension(format!("expected {} levels, got {}", self.dims.len(), levels.len())));
        }
        let mut index = 0;
        for (k, (&level, &dim)) in levels.iter().zip(&self.dims).enumerate() {
            if level >= dim {
                return Err(Error::Dimension(format!(
                    "level {level} out of range for subsystem {k} of dimension {dim}"
                )));
            }
            index = index * dim + level;
        }
        Ok(index)
    }

    pub fn decode(&self, index: usize) -> Result<Vec<usize>> {
        if index >= self.total() {
            return Err(Error::Dimension(format!("index {index} out of range for total dimension {}", self.total())));
        }
        let mut levels = vec![0; self.dims.len()];
        let mut rest = index;
        for k in (0..self.dims.len()).rev() {
            levels[k] = rest % self.dims[k];
            rest /= self.dims[k];
        }
        Ok(levels)
    }

    pub fn concat(&self, other: &RegisterShape) -> RegisterShape {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        RegisterShape { dims }
    }
}

/// Pure state over a register.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    shape: RegisterShape,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn new(shape: RegisterShape, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != shape.total() {
            return Err(Error::Dimension(format!(
                "{} amplitudes for a register of total dimension {}",
                amps.len(),
                shape.total()
            )));
        }
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Contract("non-finite amplitude".into()));
        }
        Ok(Self { shape, amps })
    }

    pub fn from_real(shape: RegisterShape, amps: &[f64]) -> Result<Self> {
        Self::new(shape, amps.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn zeros(shape: RegisterShape) -> Self {
        let amps = vec![ZERO; shape.total()];
        Self { shape, amps }
    }

    pub fn shape(&self) -> &RegisterShape {
        &self.shape
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amp(&self, levels: &[usize]) -> Result<Complex64> {
        Ok(self.amps[self.shape.encode(levels)?])
    }

    pub fn into_amps(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= EXACT_TOL
    }

    /// Unit-norm copy; a zero vector cannot be normalized.
    pub fn normalized(&self) -> Result<StateVector> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::Contract("cannot normalize the zero vector".into()));
        }
        Ok(self.scaled(Complex64::new(1.0 / n, 0.0)))
    }

    pub fn scaled(&self, factor: Complex64) -> StateVector {
        StateVector { shape: self.shape.clone(), amps: self.amps.iter().map(|z| z * factor).collect() }
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "inner product of shapes {:?} and {:?}",
                self.shape.dims(),
                other.shape.dims()
            )));
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// Global phase chosen so the first amplitude with modulus above `tol`
    /// is real and non-negative.
    pub fn with_fixed_phase(&self, tol: f64) -> StateVector {
        match self.amps.iter().find(|z| z.norm() > tol) {
            Some(z) => self.scaled(z.conj() / z.norm()),
            None => self.clone(),
        }
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &StateVector) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::Dimension("comparing states of different shapes".into()));
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    /// Contracts `bra` against the leading subsystems of `self`:
    /// returns `⟨bra| ⊗ I` applied to `self`, a state over the trailing subsystems.
    pub fn contract_leading(&self, bra: &StateVector) -> Result<StateVector> {
        let lead = bra.shape.dims();
        let dims = self.shape.dims();
        if lead.len() >= dims.len() || dims[..lead.len()] != *lead {
            return Err(Error::Dimension(format!(
                "cannot contract {:?} against leading subsystems of {:?}",
                lead, dims
            )));
        }
        let rest = RegisterShape::new(dims[lead.len()..].to_vec())?;
        let width = rest.total();
        let mut amps = vec![ZERO; width];
        for (i, b) in bra.amps.iter().enumerate() {
            let b = b.conj();
            if b == ZERO {
                continue;
            }
            for (r, out) in amps.iter_mut().enumerate() {
                *out += b * self.amps[i * width + r];
            }
        }
        Ok(StateVector { shape: rest, amps })
    }
}

/// Basis state with amplitude one at the encoded `levels`.
pub fn make_basis_state(shape: &RegisterShape, levels: &[usize]) -> Result<StateVector> {
    let index = shape.encode(levels)?;
    let mut state = StateVector::zeros(shape.clone());
    state.amps[index] = ONE;
    Ok(state)
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &StateVector, b: &StateVector) -> StateVector {
    let amps = a.amps.iter().flat_map(|x| b.amps.iter().map(move |y| x * y)).collect();
    StateVector { shape: a.shape.concat(&b.shape), amps }
}

/// Square dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    dim: usize,
    entries: Vec<Complex64>,
    label: String,
}

impl Operator {
    pub fn new(dim: usize, entries: Vec<Complex64>, label: impl Into<String>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "{} entries do not form a square matrix of dimension {dim}",
                entries.len()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Contract("non-finite operator entry".into()));
        }
        Ok(Self { dim, entries, label: label.into() })
    }

    pub fn from_real(dim: usize, entries: &[f64], label: impl Into<String>) -> Result<Self> {
        Self::new(dim, entries.iter().map(|&x| Complex64::new(x, 0.0)).collect(), label)
    }

    /// Real matrix given as a slice of rows.
    pub fn from_real_rows<const N: usize>(rows: &[[f64; N]; N], label: impl Into<String>) -> Result<Self> {
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_real(N, &flat, label)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, format!("I{dim}"), |r, c| if r == c { ONE } else { ZERO })
    }

    pub fn from_fn(dim: usize, label: impl Into<String>, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let entries = (0..dim * dim).map(|i| f(i / dim, i % dim)).collect();
        Self { dim, entries, label: label.into() }
    }

    /// `|ket⟩⟨ket|`.
    pub fn outer(ket: &StateVector, label: impl Into<String>) -> Self {
        let a = ket.amps();
        Self::from_fn(a.len(), label, |r, c| a[r] * a[c].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn adjoint(&self) -> Operator {
        Self::from_fn(self.dim, format!("{}†", self.label), |r, c| self.get(c, r).conj())
    }

    pub fn matmul(&self, rhs: &Operator) -> Result<Operator> {
        if self.dim != rhs.dim {
            return Err(Error::Dimension(format!("product of {0}x{0} and {1}x{1} matrices", self.dim, rhs.dim)));
        }
        let n = self.dim;
        let mut entries = vec![ZERO; n * n];
        for r in 0..n {
            for k in 0..n {
                let x = self.entries[r * n + k];
                if x == ZERO {
                    continue;
                }
                for c in 0..n {
                    entries[r * n + c] += x * rhs.entries[k * n + c];
                }
            }
        }
        Ok(Operator { dim: n, entries, label: format!("{}·{}", self.label, rhs.label) })
    }

    pub fn add(&self, rhs: &Operator) -> Result<Operator> {
        self.zip_with(rhs, "+", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Operator) -> Result<Operator> {
        self.zip_with(rhs, "-", |a, b| a - b)
    }

    fn zip_with(&self, rhs: &Operator, op: &str, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Operator> {
        if self.dim != rhs.dim {
            return Err(Error::Dimension("operators of different dimension".into()));
        }
        Ok(Operator {
            dim: self.dim,
            entries: self.entries.iter().zip(&rhs.entries).map(|(&a, &b)| f(a, b)).collect(),
            label: format!("{}{op}{}", self.label, rhs.label),
        })
    }

    pub fn kron(&self, rhs: &Operator) -> Operator {
        let (m, n) = (self.dim, rhs.dim);
        Self::from_fn(m * n, format!("{}⊗{}", self.label, rhs.label), |r, c| {
            self.get(r / n, c / n) * rhs.get(r % n, c % n)
        })
    }

    /// Matrix-vector product on a raw amplitude slice.
    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.dim {
            return Err(Error::Dimension(format!(
                "{}x{} operator applied to a vector of length {}",
                self.dim,
                self.dim,
                v.len()
            )));
        }
        Ok(self.entries.chunks_exact(self.dim).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect())
    }

    pub fn max_abs_diff(&self, other: &Operator) -> Result<f64> {
        if self.dim != other.dim {
            return Err(Error::Dimension("operators of different dimension".into()));
        }
        Ok(self.entries.iter().zip(&other.entries).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()).is_ok_and(|d| d <= tol)
    }
}

/// Applies `op` to the subsystems listed in `targets` (distinct, ascending),
/// identity elsewhere.
pub fn apply_to_subsystems(state: &StateVector, op: &Operator, targets: &[usize]) -> Result<StateVector> {
    let dims = state.shape.dims();
    if targets.is_empty() || targets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Dimension(format!("targets {targets:?} must be non-empty, distinct and ascending")));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= dims.len()) {
        return Err(Error::Dimension(format!("target subsystem {t} outside a register of {} subsystems", dims.len())));
    }
    let target_dim: usize = targets.iter().map(|&t| dims[t]).product();
    if target_dim != op.dim {
        return Err(Error::Dimension(format!(
            "operator '{}' has dimension {} but targets {targets:?} span {target_dim}",
            op.label, op.dim
        )));
    }
    let strides = state.shape.strides();
    let rest: Vec<usize> = (0..dims.len()).filter(|k| !targets.contains(k)).collect();
    let target_offsets = digit_offsets(targets, dims, &strides);
    let rest_offsets = digit_offsets(&rest, dims, &strides);

    let mut out = vec![ZERO; state.amps.len()];
    let mut gathered = vec![ZERO; target_dim];
    for &base in &rest_offsets {
        for (g, &off) in gathered.iter_mut().zip(&target_offsets) {
            *g = state.amps[base + off];
        }
        for (t, &off) in target_offsets.iter().enumerate() {
            let row = &op.entries[t * target_dim..(t + 1) * target_dim];
            out[base + off] = row.iter().zip(&gathered).map(|(a, b)| a * b).sum();
        }
    }
    Ok(StateVector { shape: state.shape.clone(), amps: out })
}

/// Flat offsets of every joint level assignment of `subsystems`, enumerated
/// row-major over those subsystems.
fn digit_offsets(subsystems: &[usize], dims: &[usize], strides: &[usize]) -> Vec<usize> {
    let mut offsets = vec![0usize];
    for &k in subsystems {
        offsets = offsets.iter().flat_map(|&o| (0..dims[k]).map(move |l| o + l * strides[k])).collect();
    }
    offsets
}

/// Hermitian idempotent operator, checked once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector(Operator);

impl Projector {
    pub fn new(op: Operator) -> Result<Self> {
        if !op.is_hermitian(EXACT_TOL) {
            return Err(Error::Contract(format!("projector '{}' is not Hermitian", op.label)));
        }
        let dev = op.matmul(&op)?.max_abs_diff(&op)?;
        if dev > EXACT_TOL {
            return Err(Error::Contract(format!("projector '{}' is not idempotent (|P²-P| = {dev:e})", op.label)));
        }
        Ok(Self(op))
    }

    /// Rank-one projector onto a unit vector.
    pub fn onto(ket: &StateVector, label: impl Into<String>) -> Result<Self> {
        Self::new(Operator::outer(ket, label))
    }

    pub fn operator(&self) -> &Operator {
        &self.0
    }

    pub fn label(&self) -> &str {
        self.0.label()
    }

    /// `I - P`.
    pub fn complement(&self, label: impl Into<String>) -> Projector {
        let op = Operator::identity(self.0.dim).sub(&self.0).expect("same dimension");
        Projector(op.with_label(label))
    }
}

/// Returns `P|state⟩` together with `⟨state|P|state⟩`, clamped to `[0, 1]`.
pub fn project(state: &StateVector, projector: &Projector, targets: &[usize]) -> Result<(StateVector, f64)> {
    let projected = apply_to_subsystems(state, projector.operator(), targets)?;
    let p = state.inner(&projected)?.re;
    if !(-EXACT_TOL..=1.0 + EXACT_TOL).contains(&p) {
        return Err(Error::Contract(format!("projection probability {p} outside [0, 1]")));
    }
    Ok((projected, p.clamp(0.0, 1.0)))
}

/// `|⟨a|b⟩|²` for normalized states of equal shape.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr().clamp(0.0, 1.0))
}

/// Outcome of a unitarity check.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitarityReport {
    pub is_unitary: bool,
    /// `‖U†U − I‖_max`.
    pub max_deviation: f64,
    /// Row and column of the worst entry of `U†U − I`.
    pub worst_entry: (usize, usize),
}

pub fn check_unitary(op: &Operator, tol: f64) -> UnitarityReport {
    let gram = op.adjoint().matmul(op).expect("same dimension");
    let n = op.dim;
    let mut worst = (0, 0);
    let mut max_deviation = 0.0;
    for r in 0..n {
        for c in 0..n {
            let target = if r == c { ONE } else { ZERO };
            let d = (gram.get(r, c) - target).norm();
            if d > max_deviation {
                max_deviation = d;
                worst = (r, c);
            }
        }
    }
    UnitarityReport { is_unitary: max_deviation <= tol, max_deviation, worst_entry: worst }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn shape(d: &[usize]) -> RegisterShape {
        RegisterShape::new(d.to_vec()).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn basis_state_encoding() {
        let s = make_basis_state(&shape(&[3, 4]), &[0, 0]).unwrap();
        assert_eq!(s.amps()[0], ONE);
        assert!(s.is_normalized());
        let s = make_basis_state(&shape(&[3, 4]), &[2, 3]).unwrap();
        assert_eq!(s.amps()[11], ONE);
        assert_eq!(s.amps().iter().filter(|z| **z != ZERO).count(), 1);
        assert!(matches!(make_basis_state(&shape(&[4]), &[4]), Err(Error::Dimension(_))));
    }

    #[test]
    fn rejects_degenerate_dimensions() {
        assert!(RegisterShape::new(vec![3, 1]).is_err());
        assert!(RegisterShape::new(Vec::new()).is_err());
    }

    #[test]
    fn tensor_of_basis_states() {
        let a = make_basis_state(&shape(&[3]), &[0]).unwrap();
        let b = make_basis_state(&shape(&[4]), &[0]).unwrap();
        let ab = tensor(&a, &b);
        assert_eq!(ab.shape().dims(), &[3, 4]);
        assert_eq!(ab, make_basis_state(&shape(&[3, 4]), &[0, 0]).unwrap());
    }

    #[test]
    fn identity_leaves_state_unchanged() {
        let s = StateVector::new(shape(&[2, 3]), (0..6).map(|i| c(i as f64, -1.0)).collect()).unwrap();
        for t in [vec![0], vec![1], vec![0, 1]] {
            let dim = t.iter().map(|&k| s.shape().dims()[k]).product();
            let out = apply_to_subsystems(&s, &Operator::identity(dim), &t).unwrap();
            assert_eq!(out, s);
        }
    }

    #[test]
    fn apply_rejects_mismatched_targets() {
        let s = StateVector::zeros(shape(&[3, 4]));
        let op = Operator::identity(3);
        assert!(matches!(apply_to_subsystems(&s, &op, &[1]), Err(Error::Dimension(_))));
        assert!(apply_to_subsystems(&s, &Operator::identity(12), &[1, 0]).is_err());
        assert!(apply_to_subsystems(&s, &op, &[2]).is_err());
    }

    #[test]
    fn apply_on_middle_subsystem_matches_kron() {
        // X on the qubit in the middle of [3, 2, 2] equals I3 ⊗ X ⊗ I2 on the whole register.
        let x = Operator::from_real(2, &[0.0, 1.0, 1.0, 0.0], "X").unwrap();
        let full = Operator::identity(3).kron(&x).kron(&Operator::identity(2));
        let s = StateVector::new(shape(&[3, 2, 2]), (0..12).map(|i| c(i as f64, 0.5 * i as f64)).collect()).unwrap();
        let via_targets = apply_to_subsystems(&s, &x, &[1]).unwrap();
        let via_full = full.apply(s.amps()).unwrap();
        assert_eq!(via_targets.amps(), via_full.as_slice());
    }

    #[test]
    fn project_half() {
        let s = StateVector::from_real(shape(&[2]), &[FRAC_1_SQRT_2, FRAC_1_SQRT_2]).unwrap();
        let p0 = Projector::onto(&make_basis_state(&shape(&[2]), &[0]).unwrap(), "|0⟩⟨0|").unwrap();
        let (out, p) = project(&s, &p0, &[0]).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!((out.amps()[0].re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(out.amps()[1], ZERO);
    }

    #[test]
    fn non_idempotent_projector_is_rejected() {
        let op = Operator::from_real(2, &[1.0, 0.0, 0.0, 0.5], "bad").unwrap();
        assert!(matches!(Projector::new(op), Err(Error::Contract(_))));
        let op = Operator::from_real(2, &[0.0, 1.0, 0.0, 0.0], "nilpotent").unwrap();
        assert!(matches!(Projector::new(op), Err(Error::Contract(_))));
    }

    #[test]
    fn fidelity_examples() {
        let sh = shape(&[2]);
        let zero = make_basis_state(&sh, &[0]).unwrap();
        let one = make_basis_state(&sh, &[1]).unwrap();
        let plus = StateVector::from_real(sh.clone(), &[FRAC_1_SQRT_2, FRAC_1_SQRT_2]).unwrap();
        assert_eq!(fidelity(&plus, &plus).unwrap(), 1.0);
        assert_eq!(fidelity(&zero, &one).unwrap(), 0.0);
        assert!((fidelity(&zero, &plus).unwrap() - 0.5).abs() < 1e-15);
        let other = make_basis_state(&shape(&[3]), &[0]).unwrap();
        assert!(matches!(fidelity(&zero, &other), Err(Error::Dimension(_))));
    }

    #[test]
    fn unitarity_report_locates_worst_entry() {
        let id = check_unitary(&Operator::identity(4), EXACT_TOL);
        assert!(id.is_unitary);
        assert_eq!(id.max_deviation, 0.0);

        let mut rows = [[0.0; 3]; 3];
        rows[0][0] = 1.0;
        rows[1][1] = 1.0;
        let singular = Operator::from_real_rows(&rows, "singular").unwrap();
        let rep = check_unitary(&singular, EXACT_TOL);
        assert!(!rep.is_unitary);
        assert_eq!(rep.worst_entry, (2, 2));
        assert_eq!(rep.max_deviation, 1.0);
    }

    #[test]
    fn contract_leading_picks_out_trailing_factor() {
        let a = StateVector::from_real(shape(&[2]), &[0.6, 0.8]).unwrap();
        let b = StateVector::new(shape(&[3]), vec![c(0.0, 1.0), c(1.0, 0.0), c(2.0, -1.0)]).unwrap();
        let ab = tensor(&a, &b);
        let back = ab.contract_leading(&a).unwrap();
        assert!(back.max_abs_diff(&b).unwrap() < 1e-15);
    }

    fn arb_state(dims: Vec<usize>) -> impl Strategy<Value = StateVector> {
        let total: usize = dims.iter().product();
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), total).prop_filter_map("nonzero", move |v| {
            let s = StateVector::new(
                RegisterShape::new(dims.clone()).unwrap(),
                v.into_iter().map(|(r, i)| c(r, i)).collect(),
            )
            .unwrap();
            s.normalized().ok()
        })
    }

    fn arb_unitary(dim: usize) -> impl Strategy<Value = Operator> {
        // Gram-Schmidt on a random complex matrix.
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim * dim).prop_filter_map("full rank", move |v| {
            let mut cols: Vec<Vec<Complex64>> =
                (0..dim).map(|j| (0..dim).map(|i| c(v[i * dim + j].0, v[i * dim + j].1)).collect()).collect();
            for j in 0..dim {
                for k in 0..j {
                    let proj: Complex64 = cols[k].iter().zip(&cols[j]).map(|(a, b)| a.conj() * b).sum();
                    let ck = cols[k].clone();
                    for (x, y) in cols[j].iter_mut().zip(&ck) {
                        *x -= proj * y;
                    }
                }
                let n: f64 = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if n < 1e-3 {
                    return None;
                }
                cols[j].iter_mut().for_each(|z| *z /= n);
            }
            Some(Operator::from_fn(dim, "U", |r, cc| cols[cc][r]))
        })
    }

    proptest! {
        #[test]
        fn unitary_preserves_norm(s in arb_state(vec![3, 4, 2]), u in arb_unitary(4)) {
            let out = apply_to_subsystems(&s, &u, &[1]).unwrap();
            prop_assert!((out.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn projection_commutes_with_tensor(a in arb_state(vec![3]), b in arb_state(vec![4]), k in 0usize..3) {
            let p = Projector::onto(&make_basis_state(&RegisterShape::new(vec![3]).unwrap(), &[k]).unwrap(), "P").unwrap();
            let (pa, prob_a) = project(&a, &p, &[0]).unwrap();
            let (pab, prob_ab) = project(&tensor(&a, &b), &p, &[0]).unwrap();
            prop_assert!(tensor(&pa, &b).max_abs_diff(&pab).unwrap() < 1e-12);
            prop_assert!((prob_a - prob_ab).abs() < 1e-12);
        }

        #[test]
        fn complementary_projectors_sum_to_one(s in arb_state(vec![3, 4]), v in arb_state(vec![3, 4])) {
            let p = Projector::onto(&v, "P").unwrap();
            let q = p.complement("I-P");
            let (_, pp) = project(&s, &p, &[0, 1]).unwrap();
            let (_, pq) = project(&s, &q, &[0, 1]).unwrap();
            prop_assert!((pp + pq - 1.0).abs() < 1e-12);
        }

        #[test]
        fn encode_decode_round_trip(dims in prop::collection::vec(2usize..5, 1..5), seed in any::<u64>()) {
            let sh = RegisterShape::new(dims.clone()).unwrap();
            let index = (seed as usize) % sh.total();
            let levels = sh.decode(index).unwrap();
            prop_assert_eq!(sh.encode(&levels).unwrap(), index);
        }

        #[test]
        fn tensor_norm_is_multiplicative(a in arb_state(vec![3]), b in arb_state(vec![4, 4])) {
            let ab = tensor(&a.scaled(c(2.0, 0.0)), &b);
            prop_assert!((ab.norm() - 2.0).abs() < 1e-12);
        }
    }
}
