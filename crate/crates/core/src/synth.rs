//! Seeded synthetic sequences and a parametric detector emulator.
//!
//! Objects move with constant velocity, occasionally turning, and bounce off
//! the frame border. The emulator degrades ground truth per inference
//! resolution: missed objects, class flips, confidence noise, box jitter and
//! clutter false positives. Parameters are interpolated on pixel area between
//! the full- and low-resolution settings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{GroundTruthFrame, GroundTruthObject};
use crate::geometry::{rescale_bbox, BBox, Resolution};
use crate::model::{Detection, FramePacket};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Degradation {
    pub drop_prob: f64,
    pub class_flip_prob: f64,
    pub conf_mean: f64,
    pub conf_noise_std: f64,
    /// Per-coordinate jitter in inference-resolution pixels.
    pub bbox_jitter_std: f64,
    pub false_positives_per_frame: f64,
    pub fp_conf_mean: f64,
    pub fp_conf_std: f64,
}

impl Degradation {
    pub const NOISELESS: Self = Self {
        drop_prob: 0.0,
        class_flip_prob: 0.0,
        conf_mean: 0.9,
        conf_noise_std: 0.0,
        bbox_jitter_std: 0.0,
        false_positives_per_frame: 0.0,
        fp_conf_mean: 0.0,
        fp_conf_std: 0.0,
    };

    fn lerp(&self, other: &Self, t: f64) -> Self {
        let l = |a: f64, b: f64| a + (b - a) * t;
        Self {
            drop_prob: l(self.drop_prob, other.drop_prob),
            class_flip_prob: l(self.class_flip_prob, other.class_flip_prob),
            conf_mean: l(self.conf_mean, other.conf_mean),
            conf_noise_std: l(self.conf_noise_std, other.conf_noise_std),
            bbox_jitter_std: l(self.bbox_jitter_std, other.bbox_jitter_std),
            false_positives_per_frame: l(self.false_positives_per_frame, other.false_positives_per_frame),
            fp_conf_mean: l(self.fp_conf_mean, other.fp_conf_mean),
            fp_conf_std: l(self.fp_conf_std, other.fp_conf_std),
        }
    }

    fn validate(&self, label: &str) -> Result<()> {
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(prob(self.drop_prob) && prob(self.class_flip_prob) && prob(self.conf_mean) && prob(self.fp_conf_mean)) {
            return Err(Error::Scenario(format!("{label}: probabilities and confidence means must lie in [0, 1]")));
        }
        if !(nonneg(self.conf_noise_std)
            && nonneg(self.bbox_jitter_std)
            && nonneg(self.false_positives_per_frame)
            && nonneg(self.fp_conf_std))
        {
            return Err(Error::Scenario(format!("{label}: noise levels and rates must be non-negative")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationProfile {
    pub full: Degradation,
    pub low: Degradation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfilePreset {
    /// Low resolution mainly costs recall: more misses, lower confidence.
    CnnLike,
    /// Low resolution mainly costs precision: recall holds, clutter grows.
    VitLike,
    Noiseless,
}

impl ProfilePreset {
    pub fn profile(self) -> DegradationProfile {
        match self {
            ProfilePreset::CnnLike => DegradationProfile {
                full: Degradation {
                    drop_prob: 0.05,
                    class_flip_prob: 0.0,
                    conf_mean: 0.75,
                    conf_noise_std: 0.1,
                    bbox_jitter_std: 1.0,
                    false_positives_per_frame: 0.3,
                    fp_conf_mean: 0.3,
                    fp_conf_std: 0.12,
                },
                low: Degradation {
                    drop_prob: 0.30,
                    class_flip_prob: 0.0,
                    conf_mean: 0.5,
                    conf_noise_std: 0.1,
                    bbox_jitter_std: 1.5,
                    false_positives_per_frame: 0.3,
                    fp_conf_mean: 0.3,
                    fp_conf_std: 0.12,
                },
            },
            ProfilePreset::VitLike => DegradationProfile {
                full: Degradation {
                    drop_prob: 0.05,
                    class_flip_prob: 0.0,
                    conf_mean: 0.75,
                    conf_noise_std: 0.1,
                    bbox_jitter_std: 1.0,
                    false_positives_per_frame: 0.3,
                    fp_conf_mean: 0.3,
                    fp_conf_std: 0.12,
                },
                low: Degradation {
                    drop_prob: 0.08,
                    class_flip_prob: 0.0,
                    conf_mean: 0.68,
                    conf_noise_std: 0.12,
                    bbox_jitter_std: 1.5,
                    false_positives_per_frame: 1.2,
                    fp_conf_mean: 0.45,
                    fp_conf_std: 0.12,
                },
            },
            ProfilePreset::Noiseless => DegradationProfile {
                full: Degradation::NOISELESS,
                low: Degradation::NOISELESS,
            },
        }
    }
}

impl DegradationProfile {
    pub fn with_class_flips(mut self, p: f64) -> Self {
        self.full.class_flip_prob = p;
        self.low.class_flip_prob = p;
        self
    }

    /// Degradation at `res`: the full setting at or above `full_res`, the low
    /// setting at or below `low_res`, linear in pixel area in between.
    pub fn at(&self, res: Resolution, full_res: Resolution, low_res: Resolution) -> Degradation {
        let (fa, la, a) = (full_res.area() as f64, low_res.area() as f64, res.area() as f64);
        if a >= fa || fa <= la {
            return self.full;
        }
        let t = ((fa - a) / (fa - la)).clamp(0.0, 1.0);
        self.full.lerp(&self.low, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionSpec {
    /// Speed range in native pixels per frame.
    pub min_speed: f64,
    pub max_speed: f64,
    /// Per-frame probability of a direction change.
    pub turn_prob: f64,
    /// Largest direction change in radians.
    pub max_turn: f64,
    /// Box side range in native pixels.
    pub min_size: f64,
    pub max_size: f64,
}

impl Default for MotionSpec {
    fn default() -> Self {
        Self {
            min_speed: 0.5,
            max_speed: 3.0,
            turn_prob: 0.05,
            max_turn: 0.6,
            min_size: 40.0,
            max_size: 110.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScenario {
    pub seed: u64,
    pub n_sequences: usize,
    pub n_objects: usize,
    pub n_classes: u32,
    pub frame_count: u64,
    pub native_resolution: Resolution,
    pub low_resolution: Resolution,
    pub motion: MotionSpec,
    pub degradation: DegradationProfile,
}

impl Default for SynthScenario {
    fn default() -> Self {
        Self {
            seed: 0,
            n_sequences: 1,
            n_objects: 4,
            n_classes: 5,
            frame_count: 120,
            native_resolution: Resolution::new(320, 320),
            low_resolution: Resolution::new(192, 192),
            motion: MotionSpec::default(),
            degradation: ProfilePreset::CnnLike.profile(),
        }
    }
}

impl SynthScenario {
    pub fn validate(&self) -> Result<()> {
        if self.n_objects == 0 {
            return Err(Error::Scenario("n_objects must be positive".into()));
        }
        if self.frame_count == 0 {
            return Err(Error::Scenario("frame_count must be positive".into()));
        }
        if self.n_sequences == 0 {
            return Err(Error::Scenario("n_sequences must be positive".into()));
        }
        if self.n_classes == 0 {
            return Err(Error::Scenario("n_classes must be positive".into()));
        }
        if self.native_resolution.is_zero() || self.low_resolution.is_zero() {
            return Err(Error::Scenario("resolutions must be positive".into()));
        }
        let m = &self.motion;
        let side = f64::from(self.native_resolution.width.min(self.native_resolution.height));
        if !(m.min_size > 0.0 && m.min_size <= m.max_size && m.max_size < side) {
            return Err(Error::Scenario(format!(
                "box sizes must satisfy 0 < min_size <= max_size < {side}"
            )));
        }
        if !(m.min_speed >= 0.0 && m.min_speed <= m.max_speed && (0.0..=1.0).contains(&m.turn_prob)) {
            return Err(Error::Scenario("invalid motion speeds or turn probability".into()));
        }
        let d = &self.degradation;
        d.full.validate("full")?;
        d.low.validate("low")?;
        if d.low.drop_prob < d.full.drop_prob || d.low.class_flip_prob < d.full.class_flip_prob {
            return Err(Error::Scenario(
                "lower resolution must not have smaller drop or flip probabilities".into(),
            ));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_u64, |acc, &p| mix(acc ^ mix(p)))
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// One generated sequence: ground truth plus its detector emulator.
#[derive(Debug, Clone)]
pub struct SynthSequence {
    pub id: String,
    pub ground_truth: Vec<GroundTruthFrame>,
    pub emulator: DetectorEmulator,
}

#[derive(Debug, Clone)]
pub struct DetectorEmulator {
    stream: u64,
    n_classes: u32,
    native: Resolution,
    low: Resolution,
    size_range: (f64, f64),
    degradation: DegradationProfile,
    ground_truth: Vec<GroundTruthFrame>,
}

/// Counters describing what the emulator did to the true objects of a frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EmissionStats {
    pub objects: usize,
    pub dropped: usize,
    pub flipped: usize,
    pub false_positives: usize,
}

impl DetectorEmulator {
    /// Detections for `frame` inferred at `res`, in `res` coordinates.
    pub fn detect(&self, frame: u64, res: Resolution) -> FramePacket<f64> {
        self.detect_with_stats(frame, res).0
    }

    pub fn detect_with_stats(&self, frame: u64, res: Resolution) -> (FramePacket<f64>, EmissionStats) {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(&[
            self.stream,
            u64::from(res.width),
            u64::from(res.height),
            frame,
        ]));
        let deg = self.degradation.at(res, self.native, self.low);
        let (rw, rh) = (f64::from(res.width), f64::from(res.height));
        let mut stats = EmissionStats::default();
        let mut detections = Vec::new();

        let objects = self
            .ground_truth
            .get(frame as usize)
            .map(|f| f.objects.as_slice())
            .unwrap_or(&[]);
        for obj in objects {
            stats.objects += 1;
            // fixed draw order keeps streams aligned across parameter changes
            let u_drop: f64 = rng.random();
            let u_flip: f64 = rng.random();
            let other: u32 = rng.random_range(0..self.n_classes.max(2) - 1);
            let conf_noise = normal(&mut rng);
            let jitter = [normal(&mut rng), normal(&mut rng), normal(&mut rng), normal(&mut rng)];
            if u_drop < deg.drop_prob {
                stats.dropped += 1;
                continue;
            }
            let mut class_id = obj.class_id;
            if u_flip < deg.class_flip_prob && self.n_classes > 1 {
                class_id = if other >= obj.class_id { other + 1 } else { other };
                stats.flipped += 1;
            }
            let conf = (deg.conf_mean + deg.conf_noise_std * conf_noise).clamp(0.01, 0.99);
            let scaled = rescale_bbox(&obj.bbox, self.native, res).expect("positive resolutions");
            let bbox = if deg.bbox_jitter_std > 0.0 {
                let c = scaled.to_array();
                let j = |k: usize, hi: f64| (c[k] + deg.bbox_jitter_std * jitter[k]).clamp(0.0, hi);
                let (x1, x2) = (j(0, rw), j(2, rw));
                let (y1, y2) = (j(1, rh), j(3, rh));
                BBox::new(x1.min(x2), y1.min(y2), x1.max(x2), y1.max(y2)).expect("finite jittered box")
            } else {
                scaled
            };
            detections.push(Detection::new(bbox, class_id, conf));
        }

        let rate = deg.false_positives_per_frame;
        let extra = if rng.random::<f64>() < rate.fract() { 1 } else { 0 };
        let n_fp = rate.trunc() as usize + extra;
        let scale = rw / f64::from(self.native.width);
        for _ in 0..n_fp {
            let (lo, hi) = self.size_range;
            let w = rng.random_range(lo..=hi) * scale;
            let h = rng.random_range(lo..=hi) * scale;
            let x = rng.random_range(0.0..=(rw - w).max(0.0));
            let y = rng.random_range(0.0..=(rh - h).max(0.0));
            let class_id = rng.random_range(0..self.n_classes);
            let conf = (deg.fp_conf_mean + deg.fp_conf_std * normal(&mut rng)).clamp(0.01, 0.99);
            detections.push(Detection::new(
                BBox::new(x, y, x + w, y + h).expect("finite clutter box"),
                class_id,
                conf,
            ));
            stats.false_positives += 1;
        }

        let packet = FramePacket {
            frame_index: frame,
            inference_resolution: res,
            native_resolution: self.native,
            detections,
        };
        (packet, stats)
    }

    pub fn native_resolution(&self) -> Resolution {
        self.native
    }

    pub fn low_resolution(&self) -> Resolution {
        self.low
    }
}

#[derive(Debug, Clone, Copy)]
struct MovingObject {
    class_id: u32,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    vx: f64,
    vy: f64,
}

fn simulate(sc: &SynthScenario, seq: usize) -> Vec<GroundTruthFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(&[sc.seed, seq as u64, 0x6774]));
    let (fw, fh) = (
        f64::from(sc.native_resolution.width),
        f64::from(sc.native_resolution.height),
    );
    let m = &sc.motion;
    let mut objects: Vec<MovingObject> = (0..sc.n_objects)
        .map(|_| {
            let w = rng.random_range(m.min_size..=m.max_size);
            let h = rng.random_range(m.min_size..=m.max_size);
            let speed = rng.random_range(m.min_speed..=m.max_speed);
            let dir = rng.random_range(0.0..std::f64::consts::TAU);
            MovingObject {
                class_id: rng.random_range(0..sc.n_classes),
                x: rng.random_range(0.0..=fw - w),
                y: rng.random_range(0.0..=fh - h),
                w,
                h,
                vx: speed * dir.cos(),
                vy: speed * dir.sin(),
            }
        })
        .collect();

    let mut frames = Vec::with_capacity(sc.frame_count as usize);
    for t in 0..sc.frame_count {
        if t > 0 {
            for o in &mut objects {
                let u: f64 = rng.random();
                let turn = rng.random_range(-m.max_turn..=m.max_turn);
                if u < m.turn_prob {
                    let (s, c) = turn.sin_cos();
                    (o.vx, o.vy) = (o.vx * c - o.vy * s, o.vx * s + o.vy * c);
                }
                o.x += o.vx;
                o.y += o.vy;
                if o.x < 0.0 || o.x + o.w > fw {
                    o.vx = -o.vx;
                    o.x = o.x.clamp(0.0, fw - o.w);
                }
                if o.y < 0.0 || o.y + o.h > fh {
                    o.vy = -o.vy;
                    o.y = o.y.clamp(0.0, fh - o.h);
                }
            }
        }
        frames.push(GroundTruthFrame {
            frame_index: t,
            objects: objects
                .iter()
                .map(|o| GroundTruthObject {
                    bbox: BBox::new(o.x, o.y, o.x + o.w, o.y + o.h).expect("finite object box"),
                    class_id: o.class_id,
                })
                .collect(),
        });
    }
    frames
}

/// Generates ground truth and a detector emulator for every sequence.
pub fn generate(sc: &SynthScenario) -> Result<Vec<SynthSequence>> {
    sc.validate()?;
    Ok((0..sc.n_sequences)
        .map(|seq| {
            let ground_truth = simulate(sc, seq);
            SynthSequence {
                id: format!("synth-{:03}", seq),
                emulator: DetectorEmulator {
                    stream: stream_seed(&[sc.seed, seq as u64, 0x6465]),
                    n_classes: sc.n_classes,
                    native: sc.native_resolution,
                    low: sc.low_resolution,
                    size_range: (sc.motion.min_size, sc.motion.max_size),
                    degradation: sc.degradation,
                    ground_truth: ground_truth.clone(),
                },
                ground_truth,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::iou;

    fn noiseless() -> SynthScenario {
        SynthScenario {
            degradation: ProfilePreset::Noiseless.profile(),
            frame_count: 30,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_detections_equal_ground_truth() {
        let sc = noiseless();
        let seqs = generate(&sc).unwrap();
        let s = &seqs[0];
        for res in [sc.native_resolution, sc.low_resolution] {
            for gt in &s.ground_truth {
                let p = s.emulator.detect(gt.frame_index, res).to_native().unwrap();
                assert_eq!(p.detections.len(), gt.objects.len());
                for (d, o) in p.detections.iter().zip(&gt.objects) {
                    assert_eq!(d.class_id, o.class_id);
                    for (a, b) in d.bbox.to_array().iter().zip(o.bbox.to_array()) {
                        assert!((a - b).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_empty_scenarios() {
        let sc = SynthScenario {
            n_objects: 0,
            ..Default::default()
        };
        assert!(matches!(generate(&sc), Err(Error::Scenario(_))));
        let sc = SynthScenario {
            frame_count: 0,
            ..Default::default()
        };
        assert!(generate(&sc).is_err());
    }

    #[test]
    fn rejects_non_monotone_degradation() {
        let mut sc = SynthScenario::default();
        sc.degradation.low.drop_prob = 0.0;
        assert!(sc.validate().is_err());
    }

    #[test]
    fn reproducible() {
        let sc = SynthScenario::default();
        let a = generate(&sc).unwrap();
        let b = generate(&sc).unwrap();
        assert_eq!(a[0].ground_truth, b[0].ground_truth);
        for t in 0..sc.frame_count {
            assert_eq!(
                a[0].emulator.detect(t, sc.low_resolution),
                b[0].emulator.detect(t, sc.low_resolution)
            );
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate(&SynthScenario::default()).unwrap();
        let b = generate(&SynthScenario {
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        assert_ne!(a[0].ground_truth, b[0].ground_truth);
    }

    #[test]
    fn boxes_stay_in_frame() {
        let sc = SynthScenario {
            frame_count: 500,
            motion: MotionSpec {
                min_speed: 5.0,
                max_speed: 9.0,
                ..Default::default()
            },
            ..Default::default()
        };
        for gt in &generate(&sc).unwrap()[0].ground_truth {
            for o in &gt.objects {
                assert!(o.bbox.x1() >= 0.0 && o.bbox.y1() >= 0.0);
                assert!(o.bbox.x2() <= 320.0 && o.bbox.y2() <= 320.0);
            }
        }
    }

    #[test]
    fn empirical_drop_rate() {
        let mut sc = SynthScenario {
            frame_count: 1000,
            ..Default::default()
        };
        sc.degradation.low.drop_prob = 0.3;
        let s = &generate(&sc).unwrap()[0];
        let (mut dropped, mut total) = (0, 0);
        for t in 0..sc.frame_count {
            let (_, st) = s.emulator.detect_with_stats(t, sc.low_resolution);
            dropped += st.dropped;
            total += st.objects;
        }
        let rate = dropped as f64 / total as f64;
        assert!((rate - 0.30).abs() <= 0.02, "{rate}");
    }

    #[test]
    fn empirical_flip_rate() {
        let sc = SynthScenario {
            frame_count: 1000,
            degradation: ProfilePreset::Noiseless.profile().with_class_flips(0.15),
            ..Default::default()
        };
        let s = &generate(&sc).unwrap()[0];
        let (mut flipped, mut wrong, mut total) = (0, 0, 0);
        for gt in &s.ground_truth {
            let (p, st) = s.emulator.detect_with_stats(gt.frame_index, sc.native_resolution);
            flipped += st.flipped;
            total += p.detections.len();
            for (d, o) in p.detections.iter().zip(&gt.objects) {
                assert!(iou(&d.bbox, &o.bbox) > 0.99);
                wrong += usize::from(d.class_id != o.class_id);
            }
        }
        assert_eq!(flipped, wrong);
        let rate = flipped as f64 / total as f64;
        assert!((rate - 0.15).abs() <= 0.02, "{rate}");
    }

    #[test]
    fn degradation_monotone_in_resolution() {
        let p = ProfilePreset::CnnLike.profile();
        let full = Resolution::new(320, 320);
        let low = Resolution::new(192, 192);
        let mut prev = p.at(full, full, low);
        for side in (160..=320).rev().step_by(8) {
            let d = p.at(Resolution::new(side, side), full, low);
            assert!(d.drop_prob >= prev.drop_prob);
            assert!(d.class_flip_prob >= prev.class_flip_prob);
            prev = d;
        }
        assert_eq!(p.at(low, full, low), p.low);
    }
}
