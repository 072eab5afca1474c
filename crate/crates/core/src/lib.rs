//! Abstract machines for a small higher-order language, from a
//! substitution-based reducer down to a finite abstract machine whose
//! reachable states form a control-flow analysis.
//!
//! The pipeline, module by module:
//!
//! - [`syntax`]: labeled terms and their reader.
//! - [`concrete`]: the reference reducer, the CEK machine and the
//!   time-stamped CESK* machine with store-allocated continuations.
//! - [`abstract_machine`]: the finite abstract counterpart, its precision
//!   policies and the abstraction map.
//! - [`gc`]: live locations and collection for both store kinds.
//! - [`engine`]: reachable-state graphs, flow facts, the soundness harness
//!   and graph export.

pub mod abstract_machine;
pub mod concrete;
pub mod corpus;
pub mod domain;
pub mod engine;
pub mod gc;
pub mod syntax;
