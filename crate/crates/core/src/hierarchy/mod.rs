//! Conformance hierarchies of laws.
//!
//! A subordinate law can only act on events its superior delegates to it,
//! and every operation it mandates must pass each superior's constraints.
//! Both properties hold by construction of [`resolve`].

mod manifest;
mod resolve;
mod tree;

pub use manifest::{load_sources, write_ensemble, Manifest, ManifestEntry, ManifestError};
pub use resolve::{resolve, EngineDiagnostic, FilteredOp, Resolution};
pub use tree::{build_ensemble, delegated_kinds, HashChain, LawNode, LawTree};
