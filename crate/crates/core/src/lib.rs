//! Word-level influence scores for the group distribution of text-to-image outputs.
//!
//! A prompt is split into words; subsets of words are replaced by a
//! [`transmute::Transmuter`], the resulting prompts are pushed through a
//! [`sampler::GroupSampler`] (generator composed with a group classifier),
//! and the empirical group frequencies are combined into r-level influence
//! scores by [`influence`]. [`bound`] evaluates the concentration bound of the
//! estimator and [`shapley`] provides a permutation-enumeration oracle.
//!
//! The crate is `no_std` and only needs `alloc`. IO, remote backends and the
//! command line live in the `wordsway` crate.
#![no_std]

extern crate alloc;

pub mod bound;
pub mod error;
pub mod exact;
pub mod ids;
pub mod influence;
pub mod prompt;
pub mod sampler;
pub mod shapley;
pub mod subsets;
pub mod transmute;

pub use error::{Error, Result};
pub use influence::{
    influence, influence_all, score_table, Contribution, DistributionTable, EmpiricalDistribution,
    InfluenceScore, SamplingPlan,
};
pub use prompt::{normalize_and_tokenize, GroupSpace, Prompt, SampleRecord, SubsetMask, WordSet};
pub use sampler::{draw_samples, GroupDraw, GroupSampler, SimulatedWorld, Variant};
pub use transmute::{
    sample_variant, CandidateSelection, StubTransmuter, TransmutationCandidate, Transmuter,
    TransmuterConfig,
};
