//! Shared domain types: detections, tracks, frame packets and configuration.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geometry::{rescale_bbox, BBox, Resolution};
use crate::kalman::KalmanState;
use crate::scalar::Real;

/// One detector output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection<T> {
    pub bbox: BBox<T>,
    pub class_id: u32,
    pub conf: T,
}

impl<T: Real> Detection<T> {
    pub fn new(bbox: BBox<T>, class_id: u32, conf: T) -> Self {
        Self {
            bbox,
            class_id,
            conf,
        }
    }

    /// Builds a detection with its confidence clamped into `[0, 1 - epsilon]`.
    pub fn ingest(bbox: BBox<T>, class_id: u32, conf: T, epsilon: T) -> Self {
        Self::new(bbox, class_id, clamp_conf(conf, epsilon))
    }
}

/// Clamps a confidence into `[0, 1 - epsilon]`. NaN maps to 0.
pub fn clamp_conf<T: Real>(conf: T, epsilon: T) -> T {
    if conf.is_nan() {
        return T::zero();
    }
    conf.max(T::zero()).min(T::one() - epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Removed,
}

/// A tracked object.
#[derive(Debug, Clone, PartialEq)]
pub struct Track<T> {
    pub track_id: u64,
    pub kf_state: KalmanState<T>,
    pub class_id: u32,
    /// Mean of the most recent matched confidences.
    pub conf: T,
    /// Aggregated class confidence, capped at `1 - epsilon`.
    pub conf_agg: T,
    pub recent_confs: VecDeque<T>,
    pub hit_streak: u32,
    pub frames_since_update: u32,
    pub status: TrackStatus,
}

impl<T: Real> Track<T> {
    /// Current Kalman box in corner form.
    pub fn bbox(&self) -> BBox<T> {
        self.kf_state.bbox()
    }

    pub fn is_active(&self) -> bool {
        self.status != TrackStatus::Removed
    }
}

/// Every detection of one frame, tagged with the resolution it was inferred at.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePacket<T> {
    pub frame_index: u64,
    pub inference_resolution: Resolution,
    pub native_resolution: Resolution,
    pub detections: Vec<Detection<T>>,
}

impl<T: Real> FramePacket<T> {
    /// Rescales all detections from inference to native coordinates.
    pub fn to_native(&self) -> Result<Self> {
        let detections = self
            .detections
            .iter()
            .map(|d| {
                Ok(Detection {
                    bbox: rescale_bbox(&d.bbox, self.inference_resolution, self.native_resolution)?,
                    ..*d
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            frame_index: self.frame_index,
            inference_resolution: self.inference_resolution,
            native_resolution: self.native_resolution,
            detections,
        })
    }
}

/// Association thresholds and track lifecycle limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig<T> {
    pub high_threshold: T,
    pub low_threshold: T,
    pub tau_iou: T,
    /// Consecutive matches needed to confirm a track.
    pub tau_init: u32,
    /// Consecutive misses after which a track is removed.
    pub tau_dead: u32,
    /// Also emit Confirmed tracks that were only coasted this frame.
    pub emit_coasted: bool,
}

impl<T: Real> TrackerConfig<T> {
    pub fn with_thresholds(high: f64, low: f64) -> Self {
        Self {
            high_threshold: T::lit(high),
            low_threshold: T::lit(low),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.low_threshold < self.high_threshold) {
            return Err(Error::Config(format!(
                "low_threshold ({}) must be below high_threshold ({})",
                self.low_threshold, self.high_threshold
            )));
        }
        if !(self.tau_iou > T::zero() && self.tau_iou < T::one()) {
            return Err(Error::Config(format!("tau_iou must lie in (0, 1), got {}", self.tau_iou)));
        }
        if self.tau_init < 1 || self.tau_dead < 1 {
            return Err(Error::Config("tau_init and tau_dead must be >= 1".into()));
        }
        Ok(())
    }
}

impl<T: Real> Default for TrackerConfig<T> {
    fn default() -> Self {
        Self {
            high_threshold: T::lit(0.45),
            low_threshold: T::lit(0.30),
            tau_iou: T::lit(0.3),
            tau_init: 2,
            tau_dead: 5,
            emit_coasted: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescoreConfig<T> {
    pub epsilon: T,
    pub history_len: usize,
    /// When false tracks take class and confidence from their latest match.
    pub enabled: bool,
}

impl<T: Real> RescoreConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > T::zero() && self.epsilon < T::one()) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if self.history_len == 0 {
            return Err(Error::Config("history_len must be >= 1".into()));
        }
        Ok(())
    }

    pub fn conf_cap(&self) -> T {
        T::one() - self.epsilon
    }
}

impl<T: Real> Default for RescoreConfig<T> {
    fn default() -> Self {
        Self {
            epsilon: T::lit(1e-4),
            history_len: 3,
            enabled: true,
        }
    }
}

/// What the tracker reports for a Confirmed track on a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOutput<T> {
    pub track_id: u64,
    pub bbox: BBox<T>,
    pub class_id: u32,
    pub conf: T,
    pub coasted: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ingestion_clamps_confidence() {
        let b = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(Detection::ingest(b, 0, 1.0, 1e-4).conf, 1.0 - 1e-4);
        assert_eq!(Detection::ingest(b, 0, -0.2, 1e-4).conf, 0.0);
        assert_eq!(Detection::ingest(b, 0, f64::NAN, 1e-4).conf, 0.0);
        assert_eq!(Detection::ingest(b, 0, 0.5, 1e-4).conf, 0.5);
    }

    #[test]
    fn tracker_config_validation() {
        assert!(TrackerConfig::<f64>::default().validate().is_ok());
        assert!(TrackerConfig::<f64>::with_thresholds(0.3, 0.3).validate().is_err());
        let mut c = TrackerConfig::<f64> {
            tau_iou: 1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.tau_iou = 0.3;
        c.tau_init = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rescore_config_validation() {
        assert!(RescoreConfig::<f64>::default().validate().is_ok());
        let bad = RescoreConfig::<f64> {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn packet_to_native_rescales() {
        let p = FramePacket {
            frame_index: 1,
            inference_resolution: Resolution::new(192, 192),
            native_resolution: Resolution::new(320, 320),
            detections: vec![Detection::new(BBox::new(0.0, 0.0, 96.0, 96.0).unwrap(), 2, 0.5)],
        };
        let n = p.to_native().unwrap();
        assert_eq!(n.detections[0].bbox.to_array(), [0.0, 0.0, 160.0, 160.0]);
        assert_eq!(n.detections[0].class_id, 2);
    }
}
