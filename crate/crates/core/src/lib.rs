//! Noise-aware optimal control of a single spin.
//!
//! Rotations are unit quaternions, fields and controls are pure quaternions.
//! The crate covers the kinematics of a driven rotating triad, the exact
//! all-orders resummation of the Magnus series for su(2), stationary colored
//! noise (1/f in particular), closed-form and Monte Carlo fidelities, and a
//! direct-transcription optimizer for the noise action under an energy budget.

pub mod evolution;
pub mod fidelity;
pub mod grid;
pub mod magnus;
pub mod noise;
pub mod optimizer;
pub mod quat;
pub mod registry;

pub use grid::{EpsilonStrength, PurePath, TimeGrid};
pub use quat::{PureQuat, Quat, UnitQuat};
