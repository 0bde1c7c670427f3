//! Conditional black-box optimization under surrogate distribution shift.
//!
//! A proposal engine emits batches of designs for a fixed context. Each
//! design is scored by a surrogate plus a weighted source critic, designs are
//! grouped into equivalence classes, and two certainty parameters are
//! re-estimated every step: `lambda` (critic weight, updated by projected dual
//! ascent) and `mu` (proposer confidence, regressed from class occupancies).

pub mod certainty;
pub mod critic;
pub mod equivalence;
pub mod error;
pub mod http;
pub mod memory;
pub mod numerics;
pub mod optimizer;
pub mod proposal;
pub mod space;
pub mod tasks;
pub mod verify;

pub use error::{LeonError, Result};
pub use memory::{Hyperparams, MemoryEntry, StepTrace, TrajectoryMemory};
pub use space::{Context, Design, DesignSpace, Dim, DimKind, Value};
