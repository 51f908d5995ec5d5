//! Class and confidence rescoring for a track matched with a new detection.
//!
//! Agreeing detections accumulate confidence as a probabilistic union,
//! `1 - (1 - agg) * (1 - c)`. A disagreeing detection shrinks the aggregate
//! to the normalized margin `1 - (1 - agg) / (1 - c)`, and the track switches
//! to the detection's class once the aggregate falls below the detection's
//! confidence.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::{Detection, RescoreConfig, Track};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescoreDecision<T> {
    pub new_class: u32,
    pub new_conf: T,
    pub new_conf_agg: T,
    pub class_switched: bool,
}

/// Class decision and aggregate update, before the confidence-history mean.
fn aggregate<T: Real>(class_id: u32, conf_agg: T, det: &Detection<T>, cap: T) -> (u32, T, bool) {
    let c = det.conf;
    let (class, agg, switched) = if det.class_id == class_id {
        // a + (1 - a) c: same value as 1 - (1 - a)(1 - c), never rounds below a
        (class_id, conf_agg + (T::one() - conf_agg) * c, false)
    } else if conf_agg < c {
        (det.class_id, c, true)
    } else {
        // a - c (1 - a) / (1 - c): same value as 1 - (1 - a) / (1 - c), never rounds above a
        let reduced = (conf_agg - c * (T::one() - conf_agg) / (T::one() - c)).max(T::zero());
        if reduced < c {
            (det.class_id, c, true)
        } else {
            (class_id, reduced, false)
        }
    };
    (class, agg.min(cap), switched)
}

fn mean<T: Real>(xs: &VecDeque<T>) -> T {
    let sum = xs.iter().fold(T::zero(), |a, &b| a + b);
    sum / T::lit(xs.len() as f64)
}

/// Confidence history after matching `det`: reset on a class switch,
/// otherwise the newest `history_len` matched confidences.
fn next_history<T: Real>(
    history: &VecDeque<T>,
    det_conf: T,
    switched: bool,
    history_len: usize,
) -> VecDeque<T> {
    let mut h = if switched {
        VecDeque::with_capacity(history_len)
    } else {
        history.clone()
    };
    h.push_back(det_conf);
    while h.len() > history_len.max(1) {
        h.pop_front();
    }
    h
}

/// Computes the rescored `(class, conf, conf_agg)` of `track` after matching `det`.
pub fn rescore_update<T: Real>(
    track: &Track<T>,
    det: &Detection<T>,
    cfg: &RescoreConfig<T>,
) -> Result<RescoreDecision<T>> {
    Ok(rescore_with_history(track, det, cfg)?.0)
}

fn rescore_with_history<T: Real>(
    track: &Track<T>,
    det: &Detection<T>,
    cfg: &RescoreConfig<T>,
) -> Result<(RescoreDecision<T>, VecDeque<T>)> {
    if !(det.conf < T::one()) || det.conf < T::zero() {
        return Err(Error::ConfidenceOutOfRange(det.conf.to_f64_lossy()));
    }
    let (new_class, new_conf_agg, class_switched) =
        aggregate(track.class_id, track.conf_agg, det, cfg.conf_cap());
    let history = next_history(&track.recent_confs, det.conf, class_switched, cfg.history_len);
    let decision = RescoreDecision {
        new_class,
        new_conf: mean(&history),
        new_conf_agg,
        class_switched,
    };
    Ok((decision, history))
}

/// Applies a match to the track's class state. With rescoring disabled the
/// track simply adopts the detection's class and confidence.
pub fn apply_match<T: Real>(
    track: &mut Track<T>,
    det: &Detection<T>,
    cfg: &RescoreConfig<T>,
) -> Result<RescoreDecision<T>> {
    if !cfg.enabled {
        let switched = det.class_id != track.class_id;
        track.class_id = det.class_id;
        track.conf = det.conf;
        track.conf_agg = det.conf.min(cfg.conf_cap());
        track.recent_confs.clear();
        track.recent_confs.push_back(det.conf);
        return Ok(RescoreDecision {
            new_class: track.class_id,
            new_conf: track.conf,
            new_conf_agg: track.conf_agg,
            class_switched: switched,
        });
    }
    let (d, history) = rescore_with_history(track, det, cfg)?;
    track.class_id = d.new_class;
    track.conf = d.new_conf;
    track.conf_agg = d.new_conf_agg;
    track.recent_confs = history;
    Ok(d)
}
