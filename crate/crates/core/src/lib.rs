//! Long-document question answering by active foraging.
//!
//! An agent explores a raw text document through line-anchored tools
//! ([`document`]), commits distilled, provenance-anchored facts into an
//! epistemic state ([`epistemic`]), asks a constrained diagnosis call what is
//! still missing ([`diagnosis`]) and finally answers from the epistemic state
//! alone ([`controller`]). The acting policy ([`policy`]) and every model call
//! go through the chat gateway ([`gateway`]); [`harness`] runs benchmarks,
//! computes cost metrics and hosts the single-pass baseline.

pub mod controller;
pub mod diagnosis;
pub mod document;
pub mod epistemic;
pub mod gateway;
pub mod harness;
pub mod policy;

pub use controller::{run_episode, EpisodeConfig, EpisodeResult, Instance, Mode, Termination};
pub use document::{Anchor, DocumentEnv, DocumentId};
pub use epistemic::{EpistemicState, EpistemicUnit, GroundingMode};
