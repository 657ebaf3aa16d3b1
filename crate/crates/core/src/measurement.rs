//! Alice's twelve-state joint measurement on particles 1 (qutrit) and 2 (ququart),
//! realized as a three-stage projector tree.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{prepare_channel, SchmidtVector};
use crate::error::{Error, Result};
use crate::qutrit::QutritState;
use crate::tensor::{project, tensor, Operator, Projector, RegisterShape, StateVector, EXACT_TOL};

/// Index `j ∈ 1..=12` of Alice's measurement result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Outcome(u8);

impl Outcome {
    pub const COUNT: usize = 12;

    pub fn new(j: usize) -> Result<Self> {
        if (1..=Self::COUNT).contains(&j) {
            Ok(Self(j as u8))
        } else {
            Err(Error::Dimension(format!("outcome index {j} outside 1..=12")))
        }
    }

    pub fn all() -> impl Iterator<Item = Outcome> {
        (1..=Self::COUNT as u8).map(Outcome)
    }

    /// One-based index.
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Outcomes 1..=8 leave particle 3 in a form Bob can correct for a qutrit.
    pub fn is_correctable(self) -> bool {
        self.0 <= 8
    }
}

impl TryFrom<u8> for Outcome {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Self::new(value as usize)
    }
}

impl From<Outcome> for u8 {
    fn from(value: Outcome) -> Self {
        value.0
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn alice_shape() -> RegisterShape {
    RegisterShape::new(vec![3, 4]).expect("valid")
}

pub fn total_shape() -> RegisterShape {
    RegisterShape::new(vec![3, 4, 4]).expect("valid")
}

pub fn particle3_shape() -> RegisterShape {
    RegisterShape::new(vec![4]).expect("valid")
}

const H: f64 = FRAC_1_SQRT_2;

/// Terms `((particle 1, particle 2), coefficient)` of each basis state.
/// The printed `(1/√3)√(3/2)` and `(1/√3)(√3/2)` are stored as `1/√2` and `1/2`.
const BASIS_TERMS: [&[((usize, usize), f64)]; 12] = [
    &[((0, 0), H), ((1, 1), 0.5), ((2, 2), 0.5)],
    &[((0, 0), H), ((1, 1), -0.5), ((2, 2), -0.5)],
    &[((0, 1), H), ((1, 2), 0.5), ((2, 3), 0.5)],
    &[((0, 1), H), ((1, 2), -0.5), ((2, 3), -0.5)],
    &[((0, 2), H), ((1, 3), 0.5), ((2, 0), 0.5)],
    &[((0, 2), H), ((1, 3), -0.5), ((2, 0), -0.5)],
    &[((0, 3), H), ((1, 0), 0.5), ((2, 1), 0.5)],
    &[((0, 3), H), ((1, 0), -0.5), ((2, 1), -0.5)],
    &[((1, 1), H), ((2, 2), -H)],
    &[((1, 2), H), ((2, 3), -H)],
    &[((1, 3), H), ((2, 0), -H)],
    &[((1, 0), H), ((2, 1), -H)],
];

/// The twelve orthonormal states of particles 1⊗2.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBasis {
    states: Vec<StateVector>,
}

impl MeasurementBasis {
    pub fn state(&self, j: Outcome) -> &StateVector {
        &self.states[j.index() - 1]
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    /// Gram matrix `⟨φᵢ|φⱼ⟩`.
    pub fn gram(&self) -> Operator {
        Operator::from_fn(12, "Gram", |r, c| self.states[r].inner(&self.states[c]).expect("same shape"))
    }

    /// `Σⱼ |φⱼ⟩⟨φⱼ|`.
    pub fn resolution(&self) -> Operator {
        self.states
            .iter()
            .map(|s| Operator::outer(s, "P"))
            .reduce(|acc, p| acc.add(&p).expect("same dimension"))
            .expect("twelve states")
            .with_label("Σ|φ⟩⟨φ|")
    }
}

pub fn build_basis() -> MeasurementBasis {
    let shape = alice_shape();
    let states = BASIS_TERMS
        .iter()
        .map(|terms| {
            let mut amps = vec![0.0; 12];
            for &((p1, p2), c) in terms.iter() {
                amps[shape.encode(&[p1, p2]).expect("in range")] = c;
            }
            StateVector::from_real(shape.clone(), &amps).expect("12 amplitudes")
        })
        .collect();
    MeasurementBasis { states }
}

/// Kets spanning each stage-one subspace, in the order the subspace projector lists them.
const SUBSPACE_KETS: [[(usize, usize); 3]; 4] =
    [[(0, 0), (1, 1), (2, 2)], [(0, 1), (1, 2), (2, 3)], [(0, 2), (1, 3), (2, 0)], [(0, 3), (1, 0), (2, 1)]];

/// One stage-one subspace and its refinements.
#[derive(Debug, Clone)]
pub struct ProjectorBranch {
    /// Stage one: projector onto the three-dimensional subspace.
    pub subspace: Projector,
    /// Stage two: rank-one projector onto the difference ket of the last two subspace kets.
    pub difference: Projector,
    /// Stage two: the rest of the subspace.
    pub complement: Projector,
    /// Stage three: the `+` and `−` rank-one discriminators inside `complement`.
    pub plus: Projector,
    pub minus: Projector,
    kets: [StateVector; 3],
    outcomes: [Outcome; 3],
}

impl ProjectorBranch {
    /// Leaf outcomes in `(plus, minus, difference)` order.
    pub fn outcomes(&self) -> [Outcome; 3] {
        self.outcomes
    }

    /// Leaf kets in `(plus, minus, difference)` order.
    pub fn leaf_kets(&self) -> &[StateVector; 3] {
        &self.kets
    }

    pub fn leaf_projectors(&self) -> [&Projector; 3] {
        [&self.plus, &self.minus, &self.difference]
    }
}

#[derive(Debug, Clone)]
pub struct ProjectorTree {
    branches: Vec<ProjectorBranch>,
}

impl ProjectorTree {
    pub fn branches(&self) -> &[ProjectorBranch] {
        &self.branches
    }

    /// Runs every projection of the tree on a state of particles 1⊗2⊗3.
    pub fn evaluate(&self, total: &StateVector) -> Result<TreeEvaluation> {
        if total.shape() != &total_shape() {
            return Err(Error::Dimension(format!(
                "measurement expects a [3, 4, 4] register, got {:?}",
                total.shape().dims()
            )));
        }
        let ab = [0, 1];
        let mut branches = Vec::with_capacity(4);
        for b in &self.branches {
            let (in_subspace, w_subspace) = project(total, &b.subspace, &ab)?;
            let (in_difference, w_difference) = project(&in_subspace, &b.difference, &ab)?;
            let (in_complement, w_complement) = project(&in_subspace, &b.complement, &ab)?;
            let (in_plus, w_plus) = project(&in_complement, &b.plus, &ab)?;
            let (in_minus, w_minus) = project(&in_complement, &b.minus, &ab)?;
            let leaves = [(in_plus, w_plus), (in_minus, w_minus), (in_difference, w_difference)];
            let mut residuals = Vec::with_capacity(3);
            for ((state, w), ket) in leaves.iter().zip(&b.kets) {
                residuals.push(if *w > 0.0 { Some(state.contract_leading(ket)?.normalized()?) } else { None });
            }
            branches.push(BranchWeights {
                subspace: w_subspace,
                difference: w_difference,
                complement: w_complement,
                plus: w_plus,
                minus: w_minus,
                outcomes: b.outcomes,
                residuals,
            });
        }
        Ok(TreeEvaluation { branches })
    }
}

/// Unnormalized weights `‖P Ψ‖²` of each tree node for one input state,
/// plus the normalized particle-3 residual at every reachable leaf.
#[derive(Debug, Clone)]
pub struct TreeEvaluation {
    branches: Vec<BranchWeights>,
}

#[derive(Debug, Clone)]
struct BranchWeights {
    subspace: f64,
    difference: f64,
    complement: f64,
    plus: f64,
    minus: f64,
    outcomes: [Outcome; 3],
    residuals: Vec<Option<StateVector>>,
}

impl TreeEvaluation {
    /// Probability of reaching each leaf, indexed by outcome.
    pub fn leaf_weights(&self) -> [f64; 12] {
        let mut w = [0.0; 12];
        for b in &self.branches {
            let [p, m, d] = b.outcomes;
            w[p.index() - 1] = b.plus;
            w[m.index() - 1] = b.minus;
            w[d.index() - 1] = b.difference;
        }
        w
    }

    /// Product of the conditional probabilities along the path to `j`.
    pub fn path_probability(&self, j: Outcome) -> f64 {
        for b in &self.branches {
            let [p, m, d] = b.outcomes;
            let stage1 = b.subspace;
            let cond = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
            if j == d {
                return stage1 * cond(b.difference, b.subspace);
            }
            if j == p || j == m {
                let leaf = if j == p { b.plus } else { b.minus };
                return stage1 * cond(b.complement, b.subspace) * cond(leaf, b.complement);
            }
        }
        unreachable!("every outcome is a leaf")
    }

    pub fn residual(&self, j: Outcome) -> Option<&StateVector> {
        self.branches.iter().find_map(|b| b.outcomes.iter().position(|&o| o == j).and_then(|i| b.residuals[i].as_ref()))
    }

    /// Walks the tree: subspace, then difference-vs-rest, then `+`/`−`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Outcome, &StateVector)> {
        let stage1: Vec<f64> = self.branches.iter().map(|b| b.subspace).collect();
        let b = &self.branches[pick(&stage1, rng)?];
        let [p, m, d] = b.outcomes;
        let (j, slot) = if pick(&[b.difference, b.complement], rng)? == 0 {
            (d, 2)
        } else if pick(&[b.plus, b.minus], rng)? == 0 {
            (p, 0)
        } else {
            (m, 1)
        };
        let residual = b.residuals[slot]
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("sampled zero-probability outcome {j}")))?;
        Ok((j, residual))
    }
}

/// Draws an index with probability proportional to `weights`; zero-weight
/// entries are never returned.
fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Contract("all branches have zero probability".into()));
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(last)
}

pub fn build_projector_tree() -> ProjectorTree {
    let shape = alice_shape();
    let ket = |(p1, p2): (usize, usize)| crate::tensor::make_basis_state(&shape, &[p1, p2]).expect("in range");
    let combo = |terms: &[(StateVector, f64)]| {
        let mut amps = vec![Complex64::new(0.0, 0.0); 12];
        for (k, c) in terms {
            for (a, b) in amps.iter_mut().zip(k.amps()) {
                *a += b * c;
            }
        }
        StateVector::new(shape.clone(), amps).expect("12 amplitudes")
    };
    let branches = SUBSPACE_KETS
        .iter()
        .enumerate()
        .map(|(k, kets)| {
            let [k0, k1, k2] = kets.map(ket);
            let n = k + 1;
            let subspace = [&k0, &k1, &k2]
                .iter()
                .map(|s| Operator::outer(s, ""))
                .reduce(|a, b| a.add(&b).expect("same dimension"))
                .expect("three kets")
                .with_label(format!("M{n}"));
            let subspace = Projector::new(subspace).expect("M is a projector");
            let diff = combo(&[(k1.clone(), H), (k2.clone(), -H)]);
            let plus = combo(&[(k0.clone(), H), (k1.clone(), 0.5), (k2.clone(), 0.5)]);
            let minus = combo(&[(k0, H), (k1, -0.5), (k2, -0.5)]);
            let difference = Projector::onto(&diff, format!("Q1[M{n}]")).expect("rank one");
            let complement = Projector::new(
                subspace.operator().sub(difference.operator()).expect("same dimension").with_label(format!("Q2[M{n}]")),
            )
            .expect("difference ket lies inside M");
            ProjectorBranch {
                subspace,
                difference,
                complement,
                plus: Projector::onto(&plus, format!("R1[M{n}]")).expect("rank one"),
                minus: Projector::onto(&minus, format!("R2[M{n}]")).expect("rank one"),
                kets: [plus, minus, diff],
                outcomes: [Outcome((2 * k + 1) as u8), Outcome((2 * k + 2) as u8), Outcome((9 + k) as u8)],
            }
        })
        .collect();
    ProjectorTree { branches }
}

/// Probabilities `P₁..P₁₂` of Alice's result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub p: [f64; 12],
}

impl OutcomeDistribution {
    pub fn get(&self, j: Outcome) -> f64 {
        self.p[j.index() - 1]
    }

    pub fn sum(&self) -> f64 {
        self.p.iter().sum()
    }
}

pub fn outcome_probabilities(psi: &QutritState, a: &SchmidtVector) -> OutcomeDistribution {
    let [x, y, z] = psi.populations();
    let [a0, a1, a2, a3] = a.coeffs().map(|v| v * v);
    let p12 = 0.5 * (x * a0 + y * a1 / 2.0 + z * a2 / 2.0);
    let p34 = 0.5 * (x * a1 + y * a2 / 2.0 + z * a3 / 2.0);
    let p56 = 0.5 * (x * a2 + y * a3 / 2.0 + z * a0 / 2.0);
    let p78 = 0.5 * (x * a3 + y * a0 / 2.0 + z * a1 / 2.0);
    OutcomeDistribution {
        p: [
            p12,
            p12,
            p34,
            p34,
            p56,
            p56,
            p78,
            p78,
            0.5 * (y * a1 + z * a2),
            0.5 * (y * a2 + z * a3),
            0.5 * (y * a3 + z * a0),
            0.5 * (y * a0 + z * a1),
        ],
    }
}

/// Which amplitude of `(α, β, γ)` a collapsed-state term carries.
#[derive(Clone, Copy)]
enum Slot {
    Alpha,
    Beta,
    Gamma,
}

/// Terms `(particle-3 level, coefficient, amplitude, Schmidt index)` of each
/// unnormalized collapsed state `⟨φⱼ|Ψ⟩`.
const COLLAPSED_TERMS: [&[(usize, f64, Slot, usize)]; 12] = {
    use Slot::*;
    [
        &[(0, H, Alpha, 0), (1, 0.5, Beta, 1), (2, 0.5, Gamma, 2)],
        &[(0, H, Alpha, 0), (1, -0.5, Beta, 1), (2, -0.5, Gamma, 2)],
        &[(1, H, Alpha, 1), (2, 0.5, Beta, 2), (3, 0.5, Gamma, 3)],
        &[(1, H, Alpha, 1), (2, -0.5, Beta, 2), (3, -0.5, Gamma, 3)],
        &[(2, H, Alpha, 2), (3, 0.5, Beta, 3), (0, 0.5, Gamma, 0)],
        &[(2, H, Alpha, 2), (3, -0.5, Beta, 3), (0, -0.5, Gamma, 0)],
        &[(3, H, Alpha, 3), (0, 0.5, Beta, 0), (1, 0.5, Gamma, 1)],
        &[(3, H, Alpha, 3), (0, -0.5, Beta, 0), (1, -0.5, Gamma, 1)],
        &[(1, H, Beta, 1), (2, -H, Gamma, 2)],
        &[(2, H, Beta, 2), (3, -H, Gamma, 3)],
        &[(3, H, Beta, 3), (0, -H, Gamma, 0)],
        &[(0, H, Beta, 0), (1, -H, Gamma, 1)],
    ]
};

/// Unnormalized state of particle 3 after Alice obtains `j`.
pub fn collapsed_state(j: Outcome, psi: &QutritState, a: &SchmidtVector) -> StateVector {
    let mut amps = vec![Complex64::new(0.0, 0.0); 4];
    for &(level, c, slot, i) in COLLAPSED_TERMS[j.index() - 1] {
        let amp = match slot {
            Slot::Alpha => psi.alpha(),
            Slot::Beta => psi.beta(),
            Slot::Gamma => psi.gamma(),
        };
        amps[level] += amp * c * a.get(i);
    }
    StateVector::new(particle3_shape(), amps).expect("four amplitudes")
}

/// `|ψ⟩₁ ⊗ |Φ⟩₂₃` with the channel produced by the preparation circuit.
pub fn total_state(psi: &QutritState, a: &SchmidtVector) -> Result<StateVector> {
    Ok(tensor(&psi.to_state_vector(), &prepare_channel(a)?))
}

/// Samples Alice's measurement on a normalized `[3, 4, 4]` state, returning
/// the outcome and the normalized residual state of particle 3.
pub fn sample_outcome<R: Rng + ?Sized>(
    total: &StateVector,
    tree: &ProjectorTree,
    rng: &mut R,
) -> Result<(Outcome, StateVector)> {
    if (total.norm() - 1.0).abs() > EXACT_TOL {
        return Err(Error::Contract("measurement needs a normalized state".into()));
    }
    let eval = tree.evaluate(total)?;
    let (j, residual) = eval.sample(rng)?;
    Ok((j, residual.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{apply_to_subsystems, make_basis_state};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn o(j: usize) -> Outcome {
        Outcome::new(j).unwrap()
    }

    fn example() -> SchmidtVector {
        SchmidtVector::new([0.1, 0.2, 0.4, 0.79f64.sqrt()]).unwrap()
    }

    #[test]
    fn outcome_range() {
        assert!(Outcome::new(0).is_err());
        assert!(Outcome::new(13).is_err());
        assert_eq!(Outcome::all().count(), 12);
        assert!(o(8).is_correctable() && !o(9).is_correctable());
    }

    #[test]
    fn basis_orthonormal_and_complete() {
        let basis = build_basis();
        let s = |j| basis.state(o(j));
        assert!(s(1).inner(s(2)).unwrap().norm() < 1e-15);
        assert!((s(9).norm() - 1.0).abs() < 1e-15);
        let gram = basis.gram();
        assert!(gram.max_abs_diff(&Operator::identity(12)).unwrap() <= 1e-12);
        assert!(basis.resolution().max_abs_diff(&Operator::identity(12)).unwrap() <= 1e-12);
    }

    #[test]
    fn stage_one_projector_terms() {
        let tree = build_projector_tree();
        let m1 = &tree.branches()[0].subspace;
        let sh = alice_shape();
        let k00 = make_basis_state(&sh, &[0, 0]).unwrap();
        let k01 = make_basis_state(&sh, &[0, 1]).unwrap();
        assert_eq!(apply_to_subsystems(&k00, m1.operator(), &[0, 1]).unwrap(), k00);
        assert_eq!(apply_to_subsystems(&k01, m1.operator(), &[0, 1]).unwrap().norm(), 0.0);

        let basis = build_basis();
        let phi9 = basis.state(o(9));
        let q1 = &tree.branches()[0].difference;
        let out = apply_to_subsystems(phi9, q1.operator(), &[0, 1]).unwrap();
        assert!(out.max_abs_diff(phi9).unwrap() < 1e-15);
    }

    #[test]
    fn leaves_are_basis_projectors() {
        let tree = build_projector_tree();
        let basis = build_basis();
        let mut seen = Vec::new();
        for b in tree.branches() {
            for (leaf, j) in b.leaf_projectors().iter().zip(b.outcomes()) {
                let expected = Operator::outer(basis.state(j), "");
                assert!(leaf.operator().max_abs_diff(&expected).unwrap() <= 1e-12, "leaf {j}");
                seen.push(j.index());
            }
            // each stage resolves its parent
            let q_sum = b.difference.operator().add(b.complement.operator()).unwrap();
            assert!(q_sum.max_abs_diff(b.subspace.operator()).unwrap() <= 1e-12);
            let r_sum = b.plus.operator().add(b.minus.operator()).unwrap();
            assert!(r_sum.max_abs_diff(b.complement.operator()).unwrap() <= 1e-12);
        }
        seen.sort();
        assert_eq!(seen, (1..=12).collect::<Vec<_>>());
        assert_eq!(tree.branches()[0].outcomes(), [o(1), o(2), o(9)]);

        let m_sum =
            tree.branches().iter().map(|b| b.subspace.operator().clone()).reduce(|a, b| a.add(&b).unwrap()).unwrap();
        assert!(m_sum.max_abs_diff(&Operator::identity(12)).unwrap() <= 1e-12);
    }

    #[test]
    fn probability_examples() {
        let p = outcome_probabilities(&QutritState::from_real(1.0, 0.0, 0.0).unwrap(), &SchmidtVector::uniform());
        for j in 0..8 {
            assert!((p.p[j] - 0.125).abs() < 1e-15);
        }
        assert!(p.p[8..].iter().all(|&x| x == 0.0));

        let p = outcome_probabilities(&QutritState::from_real(0.0, 1.0, 0.0).unwrap(), &example());
        assert!((p.get(o(9)) - 0.02).abs() < 1e-15);
        assert!((p.get(o(12)) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn collapsed_state_examples() {
        let psi =
            QutritState::new(Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.48), Complex64::new(0.64, 0.0)).unwrap();
        let a = example();
        let phi1 = collapsed_state(o(1), &psi, &a);
        let s3 = 3f64.sqrt();
        let expected = [
            psi.alpha() * (1.5f64).sqrt() * 0.1 / s3,
            psi.beta() * (s3 / 2.0) * 0.2 / s3,
            psi.gamma() * (s3 / 2.0) * 0.4 / s3,
        ];
        for (l, e) in expected.iter().enumerate() {
            assert!((phi1.amps()[l] - e).norm() < 1e-15);
        }
        assert_eq!(phi1.amps()[3].norm(), 0.0);

        let alpha_only = QutritState::from_real(1.0, 0.0, 0.0).unwrap();
        assert_eq!(collapsed_state(o(9), &alpha_only, &a).norm(), 0.0);
    }

    #[test]
    fn collapsed_norms_match_probabilities_and_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let basis = build_basis();
        for _ in 0..50 {
            let psi = QutritState::random(&mut rng);
            let a = SchmidtVector::random(&mut rng);
            let total = total_state(&psi, &a).unwrap();
            let dist = outcome_probabilities(&psi, &a);
            assert!((dist.sum() - 1.0).abs() < 1e-12);
            for j in Outcome::all() {
                let lit = collapsed_state(j, &psi, &a);
                let brute = total.contract_leading(basis.state(j)).unwrap();
                assert!(lit.max_abs_diff(&brute).unwrap() < 1e-12);
                assert!((lit.norm_sqr() - dist.get(j)).abs() < 1e-12);
            }
            let tail: f64 = (9..=12).map(|j| dist.get(o(j))).sum();
            let [_, y, z] = psi.populations();
            assert!((tail - (y + z) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tree_path_probabilities_match_rank_one_measurement() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let tree = build_projector_tree();
        let basis = build_basis();
        for _ in 0..20 {
            let psi = QutritState::random(&mut rng);
            let a = SchmidtVector::random(&mut rng);
            let total = total_state(&psi, &a).unwrap();
            let eval = tree.evaluate(&total).unwrap();
            let leaf = eval.leaf_weights();
            for j in Outcome::all() {
                let direct: f64 =
                    (0..4).map(|l| total.contract_leading(basis.state(j)).unwrap().amps()[l].norm_sqr()).sum();
                assert!((eval.path_probability(j) - direct).abs() < 1e-12);
                assert!((leaf[j.index() - 1] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn alpha_only_never_reaches_failure_outcomes() {
        let tree = build_projector_tree();
        let psi = QutritState::from_real(1.0, 0.0, 0.0).unwrap();
        let total = total_state(&psi, &SchmidtVector::uniform()).unwrap();
        let eval = tree.evaluate(&total).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 12];
        let n = 100_000;
        for _ in 0..n {
            let (j, _) = eval.sample(&mut rng).unwrap();
            counts[j.index() - 1] += 1;
        }
        assert!(counts[8..].iter().all(|&c| c == 0));
        let p = 0.125;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        for c in &counts[..8] {
            assert!((*c as f64 / n as f64 - p).abs() <= 4.0 * sigma);
        }
    }

    #[test]
    fn sampled_residual_matches_collapsed_state() {
        let tree = build_projector_tree();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let psi = QutritState::random(&mut rng);
            let a = SchmidtVector::random(&mut rng);
            let total = total_state(&psi, &a).unwrap();
            let (j, residual) = sample_outcome(&total, &tree, &mut rng).unwrap();
            let expected = collapsed_state(j, &psi, &a).normalized().unwrap();
            let d = residual.with_fixed_phase(1e-12).max_abs_diff(&expected.with_fixed_phase(1e-12)).unwrap();
            assert!(d < 1e-10, "outcome {j}: {d}");
        }
    }

    #[test]
    fn sample_rejects_wrong_register() {
        let tree = build_projector_tree();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = make_basis_state(&RegisterShape::new(vec![3, 4]).unwrap(), &[0, 0]).unwrap();
        assert!(sample_outcome(&s, &tree, &mut rng).is_err());
    }
}
