//! Streaming filters that strip irrelevant and duplicate images from
//! social-media image streams, plus the evaluation harness used to tune and
//! measure them.

pub mod classify;
pub mod dedup;
pub mod harness;
pub mod imagecore;
pub mod metrics;
pub mod phash;
pub mod pipeline;
pub mod record;
pub mod sampling;
