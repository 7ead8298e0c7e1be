//! Automated software improvement over a unified patch representation.
//!
//! A target program is modelled as a set of XML source trees plus an optional
//! parameter space. Candidate improvements are *patches*: ordered sequences of
//! small edits (statement deletion/replacement/insertion, constant rewrites,
//! parameter assignments). Patches are evaluated by actually building and
//! running the variant program, and searched over with a first-improvement
//! local search. On top of that sit patch minimization, patch combination and
//! a k-fold training/validation/test campaign protocol.
//!
//! The crate ships two binaries: `magpie`, the command-line front end, and
//! `magpie-toy`, a tiny deterministic interpreter used by the bundled
//! fixtures so that the whole pipeline can be exercised hermetically.

pub mod cache;
pub mod edit;
pub mod error;
pub mod evaluator;
pub mod exec;
pub mod fitness;
pub mod fixtures;
pub mod model;
pub mod params;
pub mod protocol;
pub mod scenario;
pub mod search;
pub mod space;
pub mod xml;

pub use error::{MagpieError, Result};
