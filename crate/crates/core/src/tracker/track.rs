use std::time::Instant;

use super::{decode_box, TrackerModel, SEARCH_SIZE, TEMPLATE_SIZE};
use crate::bbox::BBox;
use crate::data::Sequence;
use crate::error::{Error, Result};
use crate::imaging::{crop, image_to_tensor, window_origin};

/// Predicted boxes and per-frame wall-clock latency of one tracking run.
#[derive(Clone, Debug)]
pub struct TrackResult {
    pub boxes: Vec<BBox>,
    /// Seconds spent on each frame; frame 0 is template extraction.
    pub frame_seconds: Vec<f64>,
}

impl TrackResult {
    pub fn total_seconds(&self) -> f64 {
        self.frame_seconds.iter().sum()
    }
}

/// One-pass tracking: the template is cut once from frame 1 at its ground
/// truth, and every later frame is searched in a window centered on the
/// previous prediction. With `use_enhancer` each frame first goes through the
/// oracle enhancer of the sequence's darkening model.
pub fn track_sequence(model: &TrackerModel, seq: &Sequence, use_enhancer: bool) -> Result<TrackResult> {
    if seq.len() < 2 {
        return Err(Error::Sequence {
            name: seq.name.clone(),
            msg: format!("need at least 2 frames to track, got {}", seq.len()),
        });
    }
    if seq.boxes.len() != seq.len() {
        return Err(Error::Sequence {
            name: seq.name.clone(),
            msg: "ground truth does not cover every frame".into(),
        });
    }
    let enhancer = match (use_enhancer, seq.dark_model) {
        (false, _) => None,
        (true, Some(m)) => Some(m),
        (true, None) => {
            return Err(Error::Sequence {
                name: seq.name.clone(),
                msg: "enhancer requested but the sequence carries no darkening model".into(),
            })
        }
    };
    let (fw, fh) = (seq.width() as f64, seq.height() as f64);
    let load = |i: usize| {
        let t = image_to_tensor(&seq.frames[i]);
        match &enhancer {
            Some(m) => m.enhance(&t),
            None => t,
        }
    };

    let start = Instant::now();
    let first = seq.boxes[0];
    let template = crop(&load(0), window_origin(first.cx, first.cy, TEMPLATE_SIZE), TEMPLATE_SIZE);
    let zf = model.template_features(&template)?;
    let mut frame_seconds = vec![start.elapsed().as_secs_f64()];
    let mut boxes = vec![first];

    for i in 1..seq.len() {
        let start = Instant::now();
        let prev = boxes[i - 1];
        let origin = window_origin(prev.cx, prev.cy, SEARCH_SIZE);
        let search = crop(&load(i), origin, SEARCH_SIZE);
        let (cls, reg) = model.search(&zf, &search)?;
        let local = decode_box(&reg, &cls)?;
        let global = local.translate(origin.0 as f64, origin.1 as f64).clamp_to(fw, fh);
        boxes.push(global);
        frame_seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(TrackResult { boxes, frame_seconds })
}
