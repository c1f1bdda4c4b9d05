//! Event-driven simulation and verification laboratory for multiclass
//! interacting particle systems on rings and segments.
//!
//! The crate has three layers:
//!
//! * combinatorial state — {0,1} words, ordered stacks of words, and
//!   multiclass words on a [`lattice::Topology`], with the collapse and
//!   truncation maps between them;
//! * measure construction — discrete-time single-server queues in tandem
//!   ([`queue`]), whose departure classes yield the multiclass invariant
//!   measures, and the dual-point / multi-line machinery ([`dual`]) that
//!   explains why those measures are invariant;
//! * dynamics and verification — event-driven trajectories for the particle
//!   and stick processes ([`dynamics`]), exact small-instance stationary
//!   solves ([`ctmc`]), and statistical test harnesses ([`verify`]).

pub mod ctmc;
pub mod dual;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod lattice;
pub mod queue;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use lattice::{
    r_inverse, r_map, truncate, Configuration, Density, MulticlassConfig, OrderedStack, Topology,
};
pub use queue::{
    construct_measure, departures, geometric_stationary, m_map, queue_lengths, t_map, tandem,
    Boundary, GeometricLaw,
};
