//! TOML run configuration and synthetic scenario files.
//!
//! A run file names a detector preset and may override any field of it:
//!
//! ```toml
//! preset = "yolox"
//!
//! [tracker]
//! emit_coasted = true
//!
//! [schedule]
//! p = 3
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Resolution;
use crate::kalman::KalmanParams;
use crate::model::{RescoreConfig, TrackerConfig};
use crate::schedule::ResolutionSchedule;
use crate::synth::{Degradation, MotionSpec, ProfilePreset, SynthScenario};

pub const FULL_RES: Resolution = Resolution::new(320, 320);
pub const LOW_RES: Resolution = Resolution::new(192, 192);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorPreset {
    NanoDet,
    Yolox,
    EffVit,
}

impl DetectorPreset {
    pub const ALL: [DetectorPreset; 3] = [Self::NanoDet, Self::Yolox, Self::EffVit];

    pub fn name(self) -> &'static str {
        match self {
            Self::NanoDet => "nanodet",
            Self::Yolox => "yolox",
            Self::EffVit => "effvit",
        }
    }

    /// (high, low) association thresholds.
    pub fn thresholds(self) -> (f64, f64) {
        match self {
            Self::NanoDet => (0.45, 0.30),
            Self::Yolox => (0.40, 0.15),
            Self::EffVit => (0.55, 0.10),
        }
    }

    /// Full- and low-resolution inference cost in MMAC.
    pub fn macs(self) -> (f64, f64) {
        match self {
            Self::NanoDet => (463.0, 167.0),
            Self::Yolox => (316.0, 114.0),
            Self::EffVit => (281.0, 101.0),
        }
    }

    pub fn default_p(self) -> u32 {
        match self {
            Self::NanoDet => 5,
            Self::Yolox | Self::EffVit => 1,
        }
    }

    pub fn tracker_config(self) -> TrackerConfig<f64> {
        let (high, low) = self.thresholds();
        TrackerConfig::with_thresholds(high, low)
    }

    pub fn schedule(self) -> ResolutionSchedule<f64> {
        let (mac_full, mac_low) = self.macs();
        ResolutionSchedule {
            p: self.default_p(),
            full_res: FULL_RES,
            low_res: LOW_RES,
            mac_full,
            mac_low,
        }
    }
}

impl fmt::Display for DetectorPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset {s:?}; expected nanodet, yolox or effvit")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub preset: DetectorPreset,
    pub tracker: TrackerConfig<f64>,
    pub rescore: RescoreConfig<f64>,
    pub schedule: ResolutionSchedule<f64>,
    pub kalman: KalmanParams<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_preset(DetectorPreset::NanoDet)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    preset: Option<DetectorPreset>,
    #[serde(default)]
    tracker: TrackerPatch,
    #[serde(default)]
    rescore: RescorePatch,
    #[serde(default)]
    schedule: SchedulePatch,
    #[serde(default)]
    kalman: KalmanPatch,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackerPatch {
    high_threshold: Option<f64>,
    low_threshold: Option<f64>,
    tau_iou: Option<f64>,
    tau_init: Option<u32>,
    tau_dead: Option<u32>,
    emit_coasted: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RescorePatch {
    epsilon: Option<f64>,
    history_len: Option<usize>,
    enabled: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchedulePatch {
    p: Option<u32>,
    full_res: Option<Resolution>,
    low_res: Option<Resolution>,
    mac_full: Option<f64>,
    mac_low: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct KalmanPatch {
    position_noise_scale: Option<f64>,
    velocity_noise_scale: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl RunConfig {
    pub fn from_preset(preset: DetectorPreset) -> Self {
        Self {
            preset,
            tracker: preset.tracker_config(),
            rescore: RescoreConfig::default(),
            schedule: preset.schedule(),
            kalman: KalmanParams::default(),
        }
    }

    /// Parses a run file. `fallback` is the preset used when the file does
    /// not name one.
    pub fn from_toml_str(s: &str, fallback: DetectorPreset) -> Result<Self> {
        let file: RunFile = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        let mut c = Self::from_preset(file.preset.unwrap_or(fallback));
        let t = file.tracker;
        set(&mut c.tracker.high_threshold, t.high_threshold);
        set(&mut c.tracker.low_threshold, t.low_threshold);
        set(&mut c.tracker.tau_iou, t.tau_iou);
        set(&mut c.tracker.tau_init, t.tau_init);
        set(&mut c.tracker.tau_dead, t.tau_dead);
        set(&mut c.tracker.emit_coasted, t.emit_coasted);
        let r = file.rescore;
        set(&mut c.rescore.epsilon, r.epsilon);
        set(&mut c.rescore.history_len, r.history_len);
        set(&mut c.rescore.enabled, r.enabled);
        let s = file.schedule;
        set(&mut c.schedule.p, s.p);
        set(&mut c.schedule.full_res, s.full_res);
        set(&mut c.schedule.low_res, s.low_res);
        set(&mut c.schedule.mac_full, s.mac_full);
        set(&mut c.schedule.mac_low, s.mac_low);
        let k = file.kalman;
        set(&mut c.kalman.position_noise_scale, k.position_noise_scale);
        set(&mut c.kalman.velocity_noise_scale, k.velocity_noise_scale);
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path, fallback: DetectorPreset) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, fallback)
    }

    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        self.rescore.validate()?;
        self.schedule.validate()?;
        self.kalman.validate()
    }

    pub fn with_p(mut self, p: u32) -> Self {
        self.schedule.p = p;
        self
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    seed: Option<u64>,
    n_sequences: Option<usize>,
    n_objects: Option<usize>,
    n_classes: Option<u32>,
    frame_count: Option<u64>,
    native_resolution: Option<Resolution>,
    low_resolution: Option<Resolution>,
    profile: Option<ProfilePreset>,
    class_flip_prob: Option<f64>,
    motion: Option<MotionSpec>,
    #[serde(default)]
    full: DegradationPatch,
    #[serde(default)]
    low: DegradationPatch,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DegradationPatch {
    drop_prob: Option<f64>,
    class_flip_prob: Option<f64>,
    conf_mean: Option<f64>,
    conf_noise_std: Option<f64>,
    bbox_jitter_std: Option<f64>,
    false_positives_per_frame: Option<f64>,
    fp_conf_mean: Option<f64>,
    fp_conf_std: Option<f64>,
}

impl DegradationPatch {
    fn apply(self, d: &mut Degradation) {
        set(&mut d.drop_prob, self.drop_prob);
        set(&mut d.class_flip_prob, self.class_flip_prob);
        set(&mut d.conf_mean, self.conf_mean);
        set(&mut d.conf_noise_std, self.conf_noise_std);
        set(&mut d.bbox_jitter_std, self.bbox_jitter_std);
        set(&mut d.false_positives_per_frame, self.false_positives_per_frame);
        set(&mut d.fp_conf_mean, self.fp_conf_mean);
        set(&mut d.fp_conf_std, self.fp_conf_std);
    }
}

/// Parses a scenario file. Degradation starts from `profile` (default
/// `cnn-like`); a top-level `class_flip_prob` sets both resolutions, and the
/// `[full]` / `[low]` tables override single fields.
pub fn scenario_from_toml_str(s: &str) -> Result<SynthScenario> {
    let f: ScenarioFile = toml::from_str(s).map_err(|e| Error::Scenario(e.to_string()))?;
    let mut sc = SynthScenario::default();
    set(&mut sc.seed, f.seed);
    set(&mut sc.n_sequences, f.n_sequences);
    set(&mut sc.n_objects, f.n_objects);
    set(&mut sc.n_classes, f.n_classes);
    set(&mut sc.frame_count, f.frame_count);
    set(&mut sc.native_resolution, f.native_resolution);
    set(&mut sc.low_resolution, f.low_resolution);
    set(&mut sc.motion, f.motion);
    sc.degradation = f.profile.unwrap_or(ProfilePreset::CnnLike).profile();
    if let Some(p) = f.class_flip_prob {
        sc.degradation = sc.degradation.with_class_flips(p);
    }
    f.full.apply(&mut sc.degradation.full);
    f.low.apply(&mut sc.degradation.low);
    sc.validate()?;
    Ok(sc)
}

pub fn load_scenario(path: &Path) -> Result<SynthScenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    scenario_from_toml_str(&text)
}
