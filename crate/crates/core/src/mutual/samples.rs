//! Training pairs cut from sequences: a template around the target in one
//! frame and a jittered search window in a nearby later frame.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::data::Sequence;
use crate::error::{Error, Result};
use crate::imaging::{crop, image_to_tensor, window_origin};
use crate::rng::{stream_rng, Domain};
use crate::tensor::Tensor;
use crate::tracker::{SEARCH_SIZE, TEMPLATE_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSpec {
    /// Largest offset, in pixels per axis, of the search-window center from the target center.
    pub search_jitter: f64,
    /// Largest frame distance between template and search frame.
    pub max_frame_gap: usize,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            search_jitter: 12.0,
            max_frame_gap: 8,
        }
    }
}

impl SampleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.search_jitter >= 0.0 && self.search_jitter <= 16.0) {
            return Err(Error::config(
                "train.sampling.search_jitter",
                format!("must be in [0, 16], got {}", self.search_jitter),
            ));
        }
        if self.max_frame_gap == 0 {
            return Err(Error::config("train.sampling.max_frame_gap", "must be >= 1"));
        }
        Ok(())
    }
}

/// Where one training pair comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleRef {
    pub sequence: usize,
    pub template_frame: usize,
    pub search_frame: usize,
    pub jitter: (f64, f64),
}

/// One materialized training pair. The enhanced crops equal the dark ones
/// for sequences without a darkening model.
#[derive(Clone, Debug)]
pub struct TrainingSample {
    pub template_dark: Tensor,
    pub search_dark: Tensor,
    pub template_enhanced: Tensor,
    pub search_enhanced: Tensor,
    /// Ground truth in search-window pixels.
    pub gt: BBox,
}

/// The `count` sample locations of one epoch, drawn from the stream `(seed, epoch)`.
pub fn epoch_plan(seqs: &[Sequence], seed: u64, epoch: usize, count: usize, spec: &SampleSpec) -> Result<Vec<SampleRef>> {
    if seqs.is_empty() {
        return Err(Error::config("data", "no training sequences"));
    }
    if let Some(s) = seqs.iter().find(|s| s.len() < 2) {
        return Err(Error::Sequence {
            name: s.name.clone(),
            msg: "training needs at least 2 frames".into(),
        });
    }
    let mut rng = stream_rng(seed, Domain::Sampling, epoch as u64);
    Ok((0..count)
        .map(|_| {
            let sequence = rng.random_range(0..seqs.len());
            let n = seqs[sequence].len();
            let template_frame = rng.random_range(0..n - 1);
            let gap = rng.random_range(1..=spec.max_frame_gap.min(n - 1 - template_frame));
            let j = spec.search_jitter;
            let jitter = if j > 0.0 {
                (rng.random_range(-j..=j), rng.random_range(-j..=j))
            } else {
                (0.0, 0.0)
            };
            SampleRef {
                sequence,
                template_frame,
                search_frame: template_frame + gap,
                jitter,
            }
        })
        .collect())
}

/// Cuts the crops of `r`. Frames are enhanced before cropping, as in tracking.
pub fn materialize(seqs: &[Sequence], r: &SampleRef) -> TrainingSample {
    let seq = &seqs[r.sequence];
    let frame = |i: usize| image_to_tensor(&seq.frames[i]);
    let (tf, sf) = (frame(r.template_frame), frame(r.search_frame));
    let tb = seq.boxes[r.template_frame];
    let sb = seq.boxes[r.search_frame];
    let t_origin = window_origin(tb.cx, tb.cy, TEMPLATE_SIZE);
    let s_origin = window_origin(sb.cx + r.jitter.0, sb.cy + r.jitter.1, SEARCH_SIZE);
    let cut = |t: &Tensor, s: &Tensor| (crop(t, t_origin, TEMPLATE_SIZE), crop(s, s_origin, SEARCH_SIZE));
    let (template_dark, search_dark) = cut(&tf, &sf);
    let (template_enhanced, search_enhanced) = match &seq.dark_model {
        Some(m) => cut(&m.enhance(&tf), &m.enhance(&sf)),
        None => (template_dark.clone(), search_dark.clone()),
    };
    TrainingSample {
        template_dark,
        search_dark,
        template_enhanced,
        search_enhanced,
        gt: sb.translate(-s_origin.0 as f64, -s_origin.1 as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, DarkModel, GenConfig};

    fn data() -> Vec<Sequence> {
        let cfg = GenConfig {
            num_sequences: 3,
            frames_per_sequence: 6,
            ..GenConfig::default()
        };
        generate(&cfg).unwrap().iter().map(|s| s.darkened(&DarkModel::default())).collect()
    }

    #[test]
    fn plans_are_seeded_and_in_range() {
        let seqs = data();
        let spec = SampleSpec::default();
        let a = epoch_plan(&seqs, 7, 0, 50, &spec).unwrap();
        assert_eq!(a, epoch_plan(&seqs, 7, 0, 50, &spec).unwrap());
        assert_ne!(a, epoch_plan(&seqs, 7, 1, 50, &spec).unwrap());
        for r in &a {
            assert!(r.search_frame > r.template_frame && r.search_frame < 6);
            assert!(r.search_frame - r.template_frame <= spec.max_frame_gap);
            assert!(r.jitter.0.abs() <= 12.0 && r.jitter.1.abs() <= 12.0);
        }
    }

    #[test]
    fn ground_truth_lands_inside_the_search_window() {
        let seqs = data();
        for r in epoch_plan(&seqs, 1, 0, 40, &SampleSpec::default()).unwrap() {
            let s = materialize(&seqs, &r);
            assert_eq!(s.template_dark.shape(), [3, TEMPLATE_SIZE, TEMPLATE_SIZE]);
            assert_eq!(s.search_enhanced.shape(), [3, SEARCH_SIZE, SEARCH_SIZE]);
            let c = SEARCH_SIZE as f64 / 2.0;
            assert!((s.gt.cx - c).abs() <= 12.5 && (s.gt.cy - c).abs() <= 12.5);
            let dark: f64 = s.search_dark.mean();
            let bright: f64 = s.search_enhanced.mean();
            assert!(bright > dark);
        }
    }

    #[test]
    fn bad_spec_names_the_field() {
        let spec = SampleSpec {
            max_frame_gap: 0,
            ..SampleSpec::default()
        };
        assert!(spec.validate().unwrap_err().to_string().contains("max_frame_gap"));
    }
}
