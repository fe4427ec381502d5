//! Tracklet-conditioned object detection and tracking.
//!
//! The engine scores frame-`t` candidate boxes against the tracklets built
//! over frames `0..t`, runs NMS on the conditioned scores, and associates
//! the survivors to tracklets with a maximum-weight bipartite matching.
//! A sequential detect-then-track baseline with optional box propagation
//! and box rescoring is provided alongside it, together with a seeded
//! synthetic scene generator and the detection, tracking, and stability
//! metrics used to compare the two.

pub mod ablation;
pub mod association;
pub mod commands;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod scoring;
pub mod simulator;
pub mod tracklets;

pub use error::{Error, Result};
pub use geometry::BBox;
pub use scoring::{ClassDistribution, Embedding, FusionParams};
