//! Online gradient boosting for streaming regression.
//!
//! Boosters turn an online learner for *linear* losses over a base class
//! `F` into an online learner for smooth convex losses that competes with
//! the convex hull ([`boosting::ChBooster`]) or the span
//! ([`boosting::SpanBooster`]) of `F`. Base learners live in [`learners`],
//! loss families and their regularity constants in [`losses`], and the
//! batch analogue in [`batch`]. [`bench`] holds stream I/O, synthetic
//! generators, offline comparators and regret accounting.

// `!(x > 0.0)` is how parameter checks reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod bench;
pub mod boosting;
pub mod error;
pub mod learners;
pub mod losses;
pub mod primitives;
pub mod rng;

pub use error::{Error, Result};
pub use losses::{BallParams, LossFamily, LossInstance};
pub use primitives::{clip_unit_interval, dot, project, Example, Feature, FeatureId, Prediction};
