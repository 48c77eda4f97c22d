//! Stable matching instances, their rotation posets, and exact counting of
//! stable matchings through downsets of the rotation poset.
//!
//! The pipeline: an [`instance::PreferenceProfile`] is solved by deferred
//! acceptance ([`matching`]), its rotations are discovered by elimination
//! ([`rotation`]), the lattice of stable matchings and the rotation poset are
//! built from them ([`poset`]), and downsets are counted by pivot recursion
//! ([`counting`]). [`verify`] bundles the cross-checks used by the CLI.

pub mod bitset;
pub mod cli;
pub mod counting;
pub mod instance;
pub mod matching;
pub mod poset;
pub mod rotation;
pub mod verify;
