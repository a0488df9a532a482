//! Slip-avoidance control by online trajectory adaptation.
//!
//! The crate implements two receding-horizon slip controllers for a
//! manipulator carrying a grasped object along a fixed straight path:
//!
//! * **RSC** (reactive slip control): a binary slip detector gates a
//!   velocity-shrinking term in the tracking objective, so the commanded
//!   speed drops after slip is observed.
//! * **PSC** (proactive slip control): an action-conditioned slip
//!   predictor becomes a nonlinear constraint of the tracking problem, so
//!   the trajectory bends away from slip before it happens.
//!
//! Both controllers optimize the weights of a Gaussian radial-basis
//! velocity parameterization with an augmented-Lagrangian solver using
//! numerical derivatives. The real robot is replaced by a stick-slip
//! rotational simulator ([`sim`]) that also synthesizes 48-channel tactile
//! shear data used to train the classifiers ([`models`]).
//!
//! See the `slipctl` binary for dataset generation, training, closed-loop
//! runs, and the basis-count sweep.

pub mod basis;
pub mod consts;
pub mod control;
pub mod dataset;
pub mod error;
pub mod filter;
pub mod metrics;
pub mod models;
pub mod opt;
pub mod seeding;
pub mod sim;
pub mod sweep;
pub mod trial;

pub use error::{Error, Result};
