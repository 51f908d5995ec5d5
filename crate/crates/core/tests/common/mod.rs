#![allow(dead_code)]

use std::collections::VecDeque;

use vodtrack::kalman::KalmanFilter;
use vodtrack::{BBox, Detection, Track, TrackStatus};

pub fn bbox(c: [f64; 4]) -> BBox {
    BBox::from_array(c).unwrap()
}

pub fn track(class_id: u32, conf_agg: f64, history: &[f64]) -> Track {
    Track {
        track_id: 1,
        kf_state: KalmanFilter::default().init(&bbox([0.0, 0.0, 10.0, 10.0])).unwrap(),
        class_id,
        conf: history.iter().sum::<f64>() / history.len().max(1) as f64,
        conf_agg,
        recent_confs: history.iter().copied().collect::<VecDeque<_>>(),
        hit_streak: 1,
        frames_since_update: 0,
        status: TrackStatus::Confirmed,
    }
}

pub fn det(class_id: u32, conf: f64) -> Detection {
    Detection::new(bbox([0.0, 0.0, 10.0, 10.0]), class_id, conf)
}
