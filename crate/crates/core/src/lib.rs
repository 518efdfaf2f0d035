//! Geometric optics of reflection in the space of oriented lines.
//!
//! Oriented lines of R³ are identified with points `(xi, eta)` of the tangent
//! bundle of the 2-sphere. Wavefronts and mirrors become line congruences and
//! reflection becomes an algebraic map between them. The [`euclid`] module is
//! an independent ray tracer used to cross-check every result.

pub mod error;
pub mod euclid;
pub mod reflection;
pub mod closed_forms;
pub mod congruence;
pub mod twistor;

pub use error::{Result, TwistorError};
pub use twistor::{EuclidPoint, MobiusRotation, OrientedLine, Translation};
