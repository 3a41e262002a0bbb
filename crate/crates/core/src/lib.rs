//! Memory access protocol inference and data-race analysis for a core GPU
//! kernel calculus.
//!
//! Kernels are typed against memory access protocols (MAPs), executed under
//! a lockstep semantics, and checked for data races both by enumeration and
//! through SMT-LIB2 queries. On typable kernels the access set of an execution
//! coincides with the access set of the inferred protocol, so protocol-level
//! race alarms are true alarms.

pub mod ast;
pub mod frontend;
pub mod semantics;
pub mod typing;
pub mod protocol_sem;
pub mod racecheck;
pub mod generator;
pub mod smt;
