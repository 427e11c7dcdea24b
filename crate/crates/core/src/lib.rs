//! Compositional finite abstractions for symbolic controller synthesis.
//!
//! Small continuous modules are abstracted into finite predicate modules,
//! composed in series and parallel (with blocking inputs propagated
//! upstream), and used to synthesize safety and reachability controllers.

pub mod abstractor;
pub mod expr;
pub mod grid;
pub mod module;
pub mod par;
pub mod pipeline;
pub mod predicate;
pub mod refinement;
pub mod synthesis;
