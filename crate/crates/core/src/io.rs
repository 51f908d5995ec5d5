//! Newline-delimited JSON records for detections, tracks and ground truth.
//!
//! Detection boxes are stored in the coordinates of the resolution the
//! detector ran at; [`DetectionRecord::to_packet`] clamps confidences, and
//! [`FramePacket::to_native`] maps boxes to native coordinates.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{GroundTruthFrame, GroundTruthObject};
use crate::geometry::{BBox, Resolution};
use crate::model::{Detection, FramePacket, TrackOutput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionEntry {
    pub bbox: [f64; 4],
    pub class: u32,
    pub conf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub sequence_id: String,
    pub frame: u64,
    pub inference_resolution: Resolution,
    pub native_resolution: Resolution,
    pub detections: Vec<DetectionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackEntry {
    pub id: u64,
    pub bbox: [f64; 4],
    pub class: u32,
    pub conf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRecord {
    pub sequence_id: String,
    pub frame: u64,
    pub tracks: Vec<TrackEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectEntry {
    pub bbox: [f64; 4],
    pub class: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthRecord {
    pub sequence_id: String,
    pub frame: u64,
    pub objects: Vec<ObjectEntry>,
}

/// Records sharing a frame counter, so loaders can check ordering uniformly.
pub trait FrameRecord {
    fn sequence_id(&self) -> &str;
    fn frame(&self) -> u64;
}

macro_rules! frame_record {
    ($($t:ty),*) => {$(
        impl FrameRecord for $t {
            fn sequence_id(&self) -> &str {
                &self.sequence_id
            }
            fn frame(&self) -> u64 {
                self.frame
            }
        }
    )*};
}
frame_record!(DetectionRecord, TrackRecord, GroundTruthRecord);

/// Records of one sequence, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence<R> {
    pub id: String,
    pub records: Vec<R>,
}

fn parse_box(b: [f64; 4], line: usize) -> Result<BBox<f64>> {
    BBox::from_array(b).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })
}

impl DetectionRecord {
    /// Frame packet in inference coordinates, confidences clamped to
    /// `[0, 1 - epsilon]`. `line` is only used in diagnostics.
    pub fn to_packet(&self, epsilon: f64, line: usize) -> Result<FramePacket<f64>> {
        if self.inference_resolution.is_zero() || self.native_resolution.is_zero() {
            return Err(Error::Parse {
                line,
                message: "resolutions must be positive".into(),
            });
        }
        let detections = self
            .detections
            .iter()
            .map(|d| {
                if !(0.0..=1.0).contains(&d.conf) {
                    return Err(Error::Parse {
                        line,
                        message: format!("confidence {} outside [0, 1]", d.conf),
                    });
                }
                Ok(Detection::ingest(parse_box(d.bbox, line)?, d.class, d.conf, epsilon))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FramePacket {
            frame_index: self.frame,
            inference_resolution: self.inference_resolution,
            native_resolution: self.native_resolution,
            detections,
        })
    }

    pub fn from_packet(sequence_id: &str, p: &FramePacket<f64>) -> Self {
        Self {
            sequence_id: sequence_id.to_owned(),
            frame: p.frame_index,
            inference_resolution: p.inference_resolution,
            native_resolution: p.native_resolution,
            detections: p
                .detections
                .iter()
                .map(|d| DetectionEntry {
                    bbox: d.bbox.to_array(),
                    class: d.class_id,
                    conf: d.conf,
                })
                .collect(),
        }
    }
}

impl TrackRecord {
    pub fn from_outputs(sequence_id: &str, frame: u64, outputs: &[TrackOutput<f64>]) -> Self {
        Self {
            sequence_id: sequence_id.to_owned(),
            frame,
            tracks: outputs
                .iter()
                .map(|o| TrackEntry {
                    id: o.track_id,
                    bbox: o.bbox.to_array(),
                    class: o.class_id,
                    conf: o.conf,
                })
                .collect(),
        }
    }

    pub fn detections(&self, line: usize) -> Result<Vec<Detection<f64>>> {
        self.tracks
            .iter()
            .map(|t| Ok(Detection::new(parse_box(t.bbox, line)?, t.class, t.conf)))
            .collect()
    }
}

impl GroundTruthRecord {
    pub fn from_frame(sequence_id: &str, f: &GroundTruthFrame) -> Self {
        Self {
            sequence_id: sequence_id.to_owned(),
            frame: f.frame_index,
            objects: f
                .objects
                .iter()
                .map(|o| ObjectEntry {
                    bbox: o.bbox.to_array(),
                    class: o.class_id,
                })
                .collect(),
        }
    }

    pub fn to_frame(&self, line: usize) -> Result<GroundTruthFrame> {
        Ok(GroundTruthFrame {
            frame_index: self.frame,
            objects: self
                .objects
                .iter()
                .map(|o| {
                    Ok(GroundTruthObject {
                        bbox: parse_box(o.bbox, line)?,
                        class_id: o.class,
                    })
                })
                .collect::<Result<_>>()?,
        })
    }
}

/// Parses one record per non-blank line, returning each with its 1-based
/// line number.
pub fn read_records<R: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<(usize, R)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

/// Groups records by sequence in order of first appearance and checks that
/// frames increase strictly within each sequence.
pub fn group_sequences<R: FrameRecord>(records: Vec<(usize, R)>) -> Result<Vec<Sequence<(usize, R)>>> {
    let mut seqs: Vec<Sequence<(usize, R)>> = Vec::new();
    for (line, rec) in records {
        let pos = match seqs.iter().position(|s| s.id == rec.sequence_id()) {
            Some(p) => p,
            None => {
                seqs.push(Sequence {
                    id: rec.sequence_id().to_owned(),
                    records: Vec::new(),
                });
                seqs.len() - 1
            }
        };
        let s = &mut seqs[pos];
        if let Some((_, last)) = s.records.last() {
            if rec.frame() <= last.frame() {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "sequence {:?}: frame {} does not follow frame {}",
                        s.id,
                        rec.frame(),
                        last.frame()
                    ),
                });
            }
        }
        s.records.push((line, rec));
    }
    Ok(seqs)
}

pub fn read_grouped<R: DeserializeOwned + FrameRecord>(reader: impl BufRead) -> Result<Vec<Sequence<(usize, R)>>> {
    group_sequences(read_records(reader)?)
}

pub fn write_record<R: Serialize>(mut w: impl Write, rec: &R) -> Result<()> {
    let line = serde_json::to_string(rec).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w, "{line}")?;
    Ok(())
}

pub fn write_records<'a, R: Serialize + 'a>(mut w: impl Write, recs: impl IntoIterator<Item = &'a R>) -> Result<()> {
    for r in recs {
        write_record(&mut w, r)?;
    }
    w.flush()?;
    Ok(())
}
