//! Probabilistic teleportation of a qutrit through a non-maximally entangled
//! two-ququart channel `Σ aᵢ|ii⟩`.
//!
//! The crate builds the channel from its preparation circuit, runs Alice's
//! twelve-outcome measurement as a three-stage projector tree, applies Bob's
//! ancilla-assisted correction and reports analytic and sampled success rates.

pub use num_complex;

pub mod analytics;
pub mod channel;
pub mod correction;
pub mod error;
pub mod measurement;
pub mod montecarlo;
pub mod qutrit;
pub mod report;
pub mod tensor;
pub mod verify;

pub use analytics::{closed_form_total, decompose_total, sweep, total_success, AnalyticReport, SweepRow};
pub use channel::{prepare_channel, SchmidtVector};
pub use correction::{classify_regime, correction_plan, correction_unitary, Branch, MatrixSource, Regime};
pub use error::{Error, Result};
pub use measurement::{build_basis, build_projector_tree, outcome_probabilities, Outcome};
pub use montecarlo::{run_many, run_many_qubit, run_once, EmpiricalReport, Mode, Protocol, ProtocolTrace};
pub use qutrit::QutritState;
pub use report::{Format, RunReport, SweepReport};
pub use tensor::{Operator, Projector, RegisterShape, StateVector};
pub use verify::{run_suites, Suite, VerifyOptions, VerifyReport};
