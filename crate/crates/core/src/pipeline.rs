//! Per-frame tracking: confidence split, two association passes, track
//! lifecycle and rescoring.
//!
//! Every frame starts by advancing all tracks with the Kalman prediction, so
//! IoU is computed against motion-compensated boxes. Unmatched tracks keep
//! that prediction as their coasted state.

use std::collections::VecDeque;

use crate::association::{iou_matrix_boxes, match_iou};
use crate::error::{Error, Result};
use crate::kalman::{KalmanFilter, KalmanParams};
use crate::model::{
    Detection, FramePacket, RescoreConfig, Track, TrackOutput, TrackStatus, TrackerConfig,
};
use crate::rescore::apply_match;
use crate::scalar::Real;

/// Per-sequence tracker state.
#[derive(Debug, Clone)]
pub struct TrackerState<T> {
    pub active_tracks: Vec<Track<T>>,
    pub next_track_id: u64,
    /// Index of the last processed frame, `None` before the first one.
    pub frame_index: Option<u64>,
    pub kalman: KalmanFilter<T>,
    pub stats: TrackerStats,
}

/// Lifetime counters, reported by the CLI.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrackerStats {
    pub frames: u64,
    pub created: u64,
    pub confirmed: u64,
    pub removed: u64,
}

impl<T: Real> Default for TrackerState<T> {
    fn default() -> Self {
        Self::new(KalmanParams::default())
    }
}

impl<T: Real> TrackerState<T> {
    pub fn new(params: KalmanParams<T>) -> Self {
        Self {
            active_tracks: Vec::new(),
            next_track_id: 1,
            frame_index: None,
            kalman: KalmanFilter::new(params),
            stats: TrackerStats::default(),
        }
    }

    /// Processes one frame whose detections are already in native
    /// coordinates and returns the outputs of Confirmed tracks.
    pub fn step(
        &mut self,
        frame: &FramePacket<T>,
        tcfg: &TrackerConfig<T>,
        rcfg: &RescoreConfig<T>,
    ) -> Result<Vec<TrackOutput<T>>> {
        if let Some(last) = self.frame_index {
            if frame.frame_index != last + 1 {
                return Err(Error::FrameOutOfOrder {
                    expected: last + 1,
                    got: frame.frame_index,
                });
            }
        }
        self.frame_index = Some(frame.frame_index);
        self.stats.frames += 1;

        for t in &mut self.active_tracks {
            t.kf_state = self.kalman.predict(&t.kf_state);
        }

        let (high, rem): (Vec<&Detection<T>>, Vec<&Detection<T>>) = frame
            .detections
            .iter()
            .filter(|d| d.conf >= tcfg.low_threshold)
            .partition(|d| d.conf >= tcfg.high_threshold);

        let n_tracks = self.active_tracks.len();
        let mut matched = vec![false; n_tracks];

        // First pass: confident detections against every track.
        let all: Vec<usize> = (0..n_tracks).collect();
        let unmatched_high = self.associate(&high, &all, &mut matched, tcfg, rcfg)?;

        // Second pass: remaining detections against tracks left over.
        let leftover: Vec<usize> = (0..n_tracks).filter(|&j| !matched[j]).collect();
        self.associate(&rem, &leftover, &mut matched, tcfg, rcfg)?;

        for (j, t) in self.active_tracks.iter_mut().enumerate() {
            if matched[j] {
                continue;
            }
            t.frames_since_update += 1;
            t.hit_streak = 0;
            if t.status == TrackStatus::Tentative || t.frames_since_update >= tcfg.tau_dead {
                t.status = TrackStatus::Removed;
            }
        }

        for i in unmatched_high {
            self.spawn(high[i], tcfg, rcfg)?;
        }

        let before = self.active_tracks.len();
        self.active_tracks.retain(Track::is_active);
        self.stats.removed += (before - self.active_tracks.len()) as u64;

        Ok(self
            .active_tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Confirmed)
            .filter(|t| t.frames_since_update == 0 || tcfg.emit_coasted)
            .map(|t| TrackOutput {
                track_id: t.track_id,
                bbox: t.bbox(),
                class_id: t.class_id,
                conf: t.conf,
                coasted: t.frames_since_update > 0,
            })
            .collect())
    }

    /// Matches `dets` against the tracks listed in `candidates`, applies the
    /// Kalman and rescore updates, and returns unmatched detection indices.
    fn associate(
        &mut self,
        dets: &[&Detection<T>],
        candidates: &[usize],
        matched: &mut [bool],
        tcfg: &TrackerConfig<T>,
        rcfg: &RescoreConfig<T>,
    ) -> Result<Vec<usize>> {
        let det_boxes: Vec<_> = dets.iter().map(|d| d.bbox).collect();
        let trk_boxes: Vec<_> = candidates.iter().map(|&j| self.active_tracks[j].bbox()).collect();
        let result = match_iou(&iou_matrix_boxes(&det_boxes, &trk_boxes), tcfg.tau_iou);
        for &(i, k) in &result.matches {
            let j = candidates[k];
            matched[j] = true;
            let det = dets[i];
            let track = &mut self.active_tracks[j];
            track.kf_state = self.kalman.update(&track.kf_state, &det.bbox)?;
            apply_match(track, det, rcfg)?;
            track.frames_since_update = 0;
            track.hit_streak += 1;
            if track.status == TrackStatus::Tentative && track.hit_streak >= tcfg.tau_init {
                track.status = TrackStatus::Confirmed;
                self.stats.confirmed += 1;
            }
        }
        Ok(result.unmatched_detections)
    }

    fn spawn(
        &mut self,
        det: &Detection<T>,
        tcfg: &TrackerConfig<T>,
        rcfg: &RescoreConfig<T>,
    ) -> Result<()> {
        // zero-height boxes cannot seed a filter
        let Ok(kf_state) = self.kalman.init(&det.bbox) else {
            return Ok(());
        };
        let conf = det.conf.min(rcfg.conf_cap());
        let status = if tcfg.tau_init <= 1 {
            self.stats.confirmed += 1;
            TrackStatus::Confirmed
        } else {
            TrackStatus::Tentative
        };
        self.active_tracks.push(Track {
            track_id: self.next_track_id,
            kf_state,
            class_id: det.class_id,
            conf,
            conf_agg: conf,
            recent_confs: VecDeque::from(vec![conf]),
            hit_streak: 1,
            frames_since_update: 0,
            status,
        });
        self.next_track_id += 1;
        self.stats.created += 1;
        Ok(())
    }
}

/// Convenience wrapper owning the configuration alongside the state.
#[derive(Debug, Clone)]
pub struct Tracker<T> {
    pub state: TrackerState<T>,
    pub tracker_config: TrackerConfig<T>,
    pub rescore_config: RescoreConfig<T>,
}

impl<T: Real> Tracker<T> {
    pub fn new(tracker_config: TrackerConfig<T>, rescore_config: RescoreConfig<T>) -> Result<Self> {
        tracker_config.validate()?;
        rescore_config.validate()?;
        Ok(Self {
            state: TrackerState::default(),
            tracker_config,
            rescore_config,
        })
    }

    pub fn with_kalman(mut self, params: KalmanParams<T>) -> Result<Self> {
        params.validate()?;
        self.state = TrackerState::new(params);
        Ok(self)
    }

    pub fn step(&mut self, frame: &FramePacket<T>) -> Result<Vec<TrackOutput<T>>> {
        self.state.step(frame, &self.tracker_config, &self.rescore_config)
    }
}
