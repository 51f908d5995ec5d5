//! Video object detection post-processing.
//!
//! Turns per-frame detector output into stable, class-corrected object tracks
//! while the detector alternates between full- and low-resolution inference.
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, which is what the file formats, evaluation
//! and synthetic generator use.
//!
//! ```
//! use vodtrack::{BBox, Detection, FramePacket, RescoreConfig, Resolution, Tracker, TrackerConfig};
//!
//! let res = Resolution::new(320, 320);
//! let mut tracker = Tracker::new(TrackerConfig::default(), RescoreConfig::default()).unwrap();
//! let mut confirmed = Vec::new();
//! for t in 0..3u64 {
//!     let x = 10.0 + 2.0 * t as f64;
//!     let det = Detection::new(BBox::new(x, 20.0, x + 40.0, 80.0).unwrap(), 1, 0.9);
//!     let frame = FramePacket {
//!         frame_index: t,
//!         inference_resolution: res,
//!         native_resolution: res,
//!         detections: vec![det],
//!     };
//!     confirmed = tracker.step(&frame).unwrap();
//! }
//! assert_eq!(confirmed.len(), 1);
//! assert_eq!(confirmed[0].class_id, 1);
//! ```

// negated comparisons reject NaN alongside out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assignment;
pub mod config;
pub mod association;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod geometry;
pub mod io;
pub mod kalman;
pub mod linattn;
pub mod model;
pub mod pipeline;
pub mod rescore;
pub mod scalar;
pub mod schedule;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

pub type BBox = geometry::BBox<f64>;
pub type Detection = model::Detection<f64>;
pub type Track = model::Track<f64>;
pub type TrackOutput = model::TrackOutput<f64>;
pub type FramePacket = model::FramePacket<f64>;
pub type TrackerConfig = model::TrackerConfig<f64>;
pub type RescoreConfig = model::RescoreConfig<f64>;
pub type KalmanState = kalman::KalmanState<f64>;
pub type KalmanParams = kalman::KalmanParams<f64>;
pub type ResolutionSchedule = schedule::ResolutionSchedule<f64>;
pub type TrackerState = pipeline::TrackerState<f64>;
pub type Tracker = pipeline::Tracker<f64>;
pub type CostMatrix = association::CostMatrix<f64>;

pub type BBoxF32 = geometry::BBox<f32>;
pub type DetectionF32 = model::Detection<f32>;
pub type TrackerStateF32 = pipeline::TrackerState<f32>;
pub type TrackerF32 = pipeline::Tracker<f32>;

pub use geometry::{iou, rescale_bbox, Resolution};
pub use model::TrackStatus;
