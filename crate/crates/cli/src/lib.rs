//! Pieces of the `sharedwalk` command that tests drive directly.

pub mod serve;
