//! Core library of the forge verification framework.
//!
//! The crate turns a C program's build information into SV-COMP style
//! verification tasks and processes the verdicts that come back:
//!
//! - [`buildbase`] ingests build commands and extracts the callgraph.
//! - [`pfg`] decomposes the program into fragments and composes targets.
//! - [`emg`] parses, executes and translates environment models.
//! - [`weave`] applies aspect advice and merges sources into one file.
//! - [`taskgen`] resolves requirement bases and verifier profiles and emits tasks.
//! - [`sched`] runs tasks under resource limits with priorities and speculation.
//! - [`miniver`] is the bundled bounded reachability checker.
//! - [`results`] handles witnesses, coverage, statistics and expert marks.
//! - [`job`] wires all of the above into one verification job.

pub mod buildbase;
pub mod clex;
pub mod cscan;
pub mod emg;
pub mod job;
pub mod miniver;
pub mod pfg;
pub mod results;
pub mod sched;
pub mod srcmap;
pub mod taskgen;
pub mod weave;
