//! Ranking morpheme sequences as names for new concepts.
//!
//! The crate is organized bottom-up: a time-indexed [`lexicon`], an
//! [`embeddings`] provider with a neighbor index, [`candidates`] generation
//! under a semantic gate, per-candidate [`features`], the five ranking
//! families in [`models`], the [`training`] loop and [`eval`] metrics.
//! [`verify`] holds brute-force oracle checks over randomized fixtures.

pub mod candidates;
pub mod embeddings;
pub mod features;
pub mod lexicon;
pub mod models;
pub mod parallel;
pub mod rng;
pub mod eval;
pub mod training;
pub mod synth;
pub mod verify;
