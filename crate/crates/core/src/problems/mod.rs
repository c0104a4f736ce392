//! Built-in test problems.

pub mod catalog;
pub mod projection;
pub mod reference;

pub use catalog::{build, example_objective, recourse, Instance, INSTANCE_NAMES, MU};
pub use projection::{project_parabola, Variant};
pub use reference::reference_solution;
