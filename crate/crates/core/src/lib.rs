//! Race photo analysis engine.
//!
//! Photos flow through [`pipeline`] (cars, numbers, manufacturers,
//! orientation, team embeddings, wheel measurements) with every model call
//! behind [`inference`]. Results persist through [`store`], events are run by
//! [`batch`], and [`eval`] holds the offline metrics. [`synth`] generates
//! seeded synthetic events with exact ground truth.

pub mod anchors;
pub mod batch;
pub mod config;
pub mod eval;
pub mod inference;
pub mod measure;
pub mod model;
pub mod number;
pub mod pipeline;
pub mod store;
pub mod synth;
pub mod team;
