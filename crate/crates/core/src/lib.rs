//! Learning uncertain POMDP parameters from expert demonstrations.
//!
//! The core types are generic over the scalar type ([`Scalar`], `f32` or
//! `f64`); the `*F64`/`*F32` aliases below fix the precision. Parametric
//! templates, the estimators and the experiment harness work in `f64`.

// NaN-aware guards such as `!(norm > 0)` are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod harness;
pub mod likelihood;
pub mod model;
pub mod planning;
pub mod pomdp;
pub mod random;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use pomdp::{
    action_values, belief_update, generate_demo, greedy_action, simulate, softmax, softmax_policy,
    ActionValues, AlphaVector, Belief, BeliefAgent, DecisionRule, DemoTrace, Labels, Policy,
    PolicyConfig, Pomdp, Simulation, Step, ValueFunction,
};
pub use model::{tiger_template, validate_template, ParamExpr, ParametricTemplate, Prior, TIGER_TRUE_THETA};
pub use scalar::Scalar;
pub use solver::{point_backup, solve, solve_detailed, Solution, SolverConfig};

pub type PomdpF64 = Pomdp<f64>;
pub type PomdpF32 = Pomdp<f32>;
pub type BeliefF64 = Belief<f64>;
pub type BeliefF32 = Belief<f32>;
pub type ValueFunctionF64 = ValueFunction<f64>;
pub type ValueFunctionF32 = ValueFunction<f32>;
