//! Frame-by-frame versus tracked comparisons across resolution schedules.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluation::{EvalSequence, GroundTruthFrame, MatchedCorpus, MetricsReport};
use crate::model::{Detection, FramePacket, TrackOutput};
use crate::pipeline::{Tracker, TrackerStats};
use crate::schedule::{is_full_res, mean_mac, ResolutionSchedule};
use crate::synth::SynthSequence;

pub const DEFAULT_GRID_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdMode {
    F1Max,
    Fixed(f64),
}

impl FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "f1max" {
            return Ok(Self::F1Max);
        }
        let bad = || Error::Config(format!("threshold must be f1max or fixed:<value>, got {s:?}"));
        let v: f64 = s.strip_prefix("fixed:").ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if !(0.0..=1.0).contains(&v) {
            return Err(bad());
        }
        Ok(Self::Fixed(v))
    }
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::F1Max => f.write_str("f1max"),
            Self::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

impl ThresholdMode {
    pub fn resolve(self, corpus: &MatchedCorpus, epsilon: f64) -> Result<f64> {
        match self {
            Self::Fixed(v) => Ok(v),
            Self::F1Max => Ok(corpus.f1_max_threshold(DEFAULT_GRID_STEP, epsilon)?.0),
        }
    }
}

/// Detections of one sequence inferred at both resolutions for every frame,
/// in inference coordinates, plus its ground truth.
#[derive(Debug, Clone)]
pub struct SequenceStreams {
    pub id: String,
    pub full: Vec<FramePacket<f64>>,
    pub low: Vec<FramePacket<f64>>,
    pub ground_truth: Vec<GroundTruthFrame>,
}

impl SequenceStreams {
    pub fn from_synth(s: &SynthSequence) -> Self {
        let e = &s.emulator;
        let frames = s.ground_truth.iter().map(|g| g.frame_index);
        Self {
            id: s.id.clone(),
            full: frames.clone().map(|t| e.detect(t, e.native_resolution())).collect(),
            low: frames.map(|t| e.detect(t, e.low_resolution())).collect(),
            ground_truth: s.ground_truth.clone(),
        }
    }

    /// The stream a detector following `p` would produce, in native
    /// coordinates.
    pub fn scheduled(&self, p: u32) -> Result<Vec<FramePacket<f64>>> {
        if self.full.len() != self.low.len() {
            return Err(Error::Validation(format!(
                "sequence {:?}: {} full-resolution frames but {} low-resolution frames",
                self.id,
                self.full.len(),
                self.low.len()
            )));
        }
        self.full
            .iter()
            .zip(&self.low)
            .map(|(f, l)| {
                if f.frame_index != l.frame_index {
                    return Err(Error::Validation(format!(
                        "sequence {:?}: frame {} has no low-resolution counterpart",
                        self.id, f.frame_index
                    )));
                }
                if is_full_res(f.frame_index, p) { f } else { l }.to_native()
            })
            .collect()
    }
}

pub fn streams_from_synth(seqs: &[SynthSequence]) -> Vec<SequenceStreams> {
    seqs.iter().map(SequenceStreams::from_synth).collect()
}

/// Checks that every frame was inferred at the resolution the schedule
/// prescribes, naming the first frame that was not.
pub fn validate_schedule(
    sequence_id: &str,
    stream: &[FramePacket<f64>],
    schedule: &ResolutionSchedule<f64>,
) -> Result<()> {
    for p in stream {
        let want = schedule.resolution_at(p.frame_index);
        if p.inference_resolution != want {
            return Err(Error::Validation(format!(
                "sequence {sequence_id:?}: frame {} was inferred at {} but the schedule (P={}) expects {}",
                p.frame_index, p.inference_resolution, schedule.p, want
            )));
        }
    }
    Ok(())
}

/// Outputs per frame index of one tracker run.
#[derive(Debug, Clone, Default)]
pub struct TrackRun {
    pub outputs: BTreeMap<u64, Vec<TrackOutput<f64>>>,
    pub stats: TrackerStats,
}

/// Runs a fresh tracker over a native-coordinate stream.
pub fn run_tracker(stream: &[FramePacket<f64>], cfg: &RunConfig) -> Result<TrackRun> {
    let mut tracker = Tracker::new(cfg.tracker, cfg.rescore)?.with_kalman(cfg.kalman)?;
    let mut outputs = BTreeMap::new();
    for p in stream {
        outputs.insert(p.frame_index, tracker.step(p)?);
    }
    Ok(TrackRun {
        outputs,
        stats: tracker.state.stats,
    })
}

pub fn detection_sequence(id: &str, stream: &[FramePacket<f64>], gt: &[GroundTruthFrame]) -> EvalSequence {
    let mut s = EvalSequence::new(id).with_ground_truth(gt);
    for p in stream {
        s.predictions.insert(p.frame_index, p.detections.clone());
    }
    s
}

pub fn track_sequence(id: &str, run: &TrackRun, gt: &[GroundTruthFrame]) -> EvalSequence {
    let mut s = EvalSequence::new(id).with_ground_truth(gt);
    for (&t, outs) in &run.outputs {
        s.predictions.insert(
            t,
            outs.iter().map(|o| Detection::new(o.bbox, o.class_id, o.conf)).collect(),
        );
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub p: u32,
    pub mean_mac: f64,
    pub reduction: f64,
    /// Thresholded detections of every frame.
    pub baseline: MetricsReport,
    /// Confirmed track outputs, unthresholded.
    pub tracked: MetricsReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub baseline_threshold: f64,
    pub rows: Vec<SweepRow>,
}

/// Evaluates both methods for every `p`. The baseline threshold comes from
/// `mode` on the full-resolution stream and is then held fixed.
pub fn sweep(streams: &[SequenceStreams], ps: &[u32], cfg: &RunConfig, mode: ThresholdMode) -> Result<SweepResult> {
    let full: Vec<EvalSequence> = streams
        .iter()
        .map(|s| Ok(detection_sequence(&s.id, &s.scheduled(0)?, &s.ground_truth)))
        .collect::<Result<_>>()?;
    let baseline_threshold = mode.resolve(&MatchedCorpus::build(&full)?, cfg.rescore.epsilon)?;

    let mut rows = Vec::with_capacity(ps.len());
    for &p in ps {
        let mut raw = Vec::with_capacity(streams.len());
        let mut tracked = Vec::with_capacity(streams.len());
        for s in streams {
            let stream = s.scheduled(p)?;
            let run = run_tracker(&stream, cfg)?;
            raw.push(detection_sequence(&s.id, &stream, &s.ground_truth));
            tracked.push(track_sequence(&s.id, &run, &s.ground_truth));
        }
        let mac = mean_mac(&cfg.schedule.with_p(p))?;
        rows.push(SweepRow {
            p,
            mean_mac: mac.mean_mac,
            reduction: mac.reduction,
            baseline: MatchedCorpus::build(&raw)?.report_at(baseline_threshold),
            tracked: MatchedCorpus::build(&tracked)?.report_at(0.0),
        });
    }
    Ok(SweepResult { baseline_threshold, rows })
}

/// Grid search over (high, low) association thresholds maximizing mean F1 of
/// the tracked outputs on the full-resolution stream.
pub fn tune_thresholds(streams: &[SequenceStreams], cfg: &RunConfig, grid: &[f64]) -> Result<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    let full: Vec<Vec<FramePacket<f64>>> = streams.iter().map(|s| s.scheduled(0)).collect::<Result<_>>()?;
    for &high in grid {
        for &low in grid.iter().filter(|&&l| l < high) {
            let mut c = *cfg;
            c.tracker.high_threshold = high;
            c.tracker.low_threshold = low;
            let seqs = streams
                .iter()
                .zip(&full)
                .map(|(s, stream)| Ok(track_sequence(&s.id, &run_tracker(stream, &c)?, &s.ground_truth)))
                .collect::<Result<Vec<_>>>()?;
            let f1 = MatchedCorpus::build(&seqs)?.report_at(0.0).mean_f1;
            if best.is_none_or(|b| f1 > b.2) {
                best = Some((high, low, f1));
            }
        }
    }
    best.ok_or_else(|| Error::Config("threshold grid needs two distinct values".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Resolution;
    use crate::synth::{generate, ProfilePreset, SynthScenario};

    fn streams(profile: ProfilePreset) -> Vec<SequenceStreams> {
        let sc = SynthScenario {
            n_sequences: 2,
            frame_count: 40,
            degradation: profile.profile(),
            ..Default::default()
        };
        streams_from_synth(&generate(&sc).unwrap())
    }

    #[test]
    fn threshold_mode_parsing() {
        assert_eq!("f1max".parse::<ThresholdMode>().unwrap(), ThresholdMode::F1Max);
        assert_eq!("fixed:0.25".parse::<ThresholdMode>().unwrap(), ThresholdMode::Fixed(0.25));
        assert!("fixed:2".parse::<ThresholdMode>().is_err());
        assert!("max".parse::<ThresholdMode>().is_err());
    }

    #[test]
    fn scheduled_stream_follows_pattern() {
        let s = &streams(ProfilePreset::CnnLike)[0];
        let stream = s.scheduled(2).unwrap();
        let sched = RunConfig::default().schedule.with_p(2);
        validate_schedule(&s.id, &stream, &sched).unwrap();
        assert_eq!(stream[3].inference_resolution, Resolution::new(320, 320));
        assert_eq!(stream[4].inference_resolution, Resolution::new(192, 192));
        let err = validate_schedule(&s.id, &stream, &sched.with_p(0)).unwrap_err();
        assert!(err.to_string().contains("frame 1 "), "{err}");
    }

    #[test]
    fn noiseless_tracks_cover_ground_truth() {
        let ss = streams(ProfilePreset::Noiseless);
        let r = sweep(&ss, &[0], &RunConfig::default(), ThresholdMode::Fixed(0.0)).unwrap();
        let row = &r.rows[0];
        assert_eq!(row.baseline.map, 1.0);
        assert_eq!(row.tracked.mean_precision, 1.0);
        assert!(row.tracked.mean_recall > 0.95);
    }

    #[test]
    fn p0_baseline_matches_direct_evaluation() {
        let ss = streams(ProfilePreset::CnnLike);
        let cfg = RunConfig::default();
        let r = sweep(&ss, &[0], &cfg, ThresholdMode::F1Max).unwrap();
        let seqs: Vec<_> = ss
            .iter()
            .map(|s| detection_sequence(&s.id, &s.scheduled(0).unwrap(), &s.ground_truth))
            .collect();
        let (thr, direct) = crate::evaluation::f1_max_threshold(&seqs, DEFAULT_GRID_STEP, 1e-4).unwrap();
        assert_eq!(r.baseline_threshold, thr);
        assert_eq!(r.rows[0].baseline, direct);
    }

    #[test]
    fn mac_column() {
        let ss = streams(ProfilePreset::Noiseless);
        let r = sweep(&ss, &[0, 5], &RunConfig::default(), ThresholdMode::Fixed(0.3)).unwrap();
        assert_eq!(r.rows[0].reduction, 0.0);
        assert!((r.rows[1].reduction - 0.533).abs() < 0.005);
    }

    #[test]
    fn tuning_returns_ordered_pair() {
        let ss = streams(ProfilePreset::CnnLike);
        let (h, l, f1) = tune_thresholds(&ss, &RunConfig::default(), &[0.2, 0.4, 0.6]).unwrap();
        assert!(l < h);
        assert!(f1 > 0.0);
    }
}
