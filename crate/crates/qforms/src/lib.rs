//! Exact arithmetic for classically integral quadratic forms.

pub mod arith;
pub mod deltamethod;
pub mod descent;
pub mod error;
pub mod expsums;
pub mod form;
pub mod lattice;
pub mod localsolve;
pub mod matrix;
pub mod represent;
pub mod singular;
pub mod zeros;

pub use error::{Budget, QfError, Result};
pub use form::{FormClass, QuadraticForm};
