//! Clustering and tracking for event-camera streams.
//!
//! The pipeline is: background-activity filtering ([`noise`]), packetizing
//! into normalized 4D features ([`event`]), hybrid mean-shift clustering
//! ([`meanshift`]), and Kalman tracking of cluster centroids ([`tracker`]).
//! [`metrics`] scores clusterings and tracks against ground truth, [`io`]
//! reads and writes the text formats and synthesizes scenes, and [`bench`]
//! accounts operations against a frame-based baseline.

pub mod bench;
pub mod error;
pub mod event;
pub mod io;
pub mod meanshift;
pub mod metrics;
pub mod noise;
pub mod pipeline;
pub mod tracker;

pub use error::{Error, Result};
pub use event::{DecayParams, Event, FeatureVector, Packet, Polarity, SensorGeometry};
pub use meanshift::{ClusterLabeling, MeanShiftParams};
pub use noise::FilterParams;
pub use tracker::{Track, TrackStatus, TrackerParams};
