//! Parametric POMDP families, their priors, and the Tiger template.

pub mod expr;
pub mod prior;
pub mod template;
pub mod tiger;

pub use expr::ParamExpr;
pub use prior::Prior;
pub use template::{validate_template, ParamRole, ParamSpec, ParamVector, ParametricTemplate, RowRef, TiedRow};
pub use tiger::{tiger_template, TIGER_TRUE_THETA};
