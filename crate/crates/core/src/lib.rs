//! Recovery of readable math equations from compiled images of a small
//! 32-bit float ISA: parameter analysis, symbolic execution, simplification,
//! and scoring against generated ground truth.

pub mod bench;
pub mod eqc;
pub mod expr;
pub mod genet;
pub mod isa;
pub mod matching;
pub mod params;
pub mod recover;
pub mod simp;
pub mod svc;
pub mod symx;

/// Bindings evaluated with machine semantics.
pub type Env32 = expr::EvalEnv<f32>;
/// Bindings evaluated at reference precision.
pub type Env64 = expr::EvalEnv<f64>;
