//! Tracking sequences: synthetic generation, darkening, and the on-disk layout.

mod dark;
pub mod io;
mod synth;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use image::RgbImage;
use serde::{Deserialize, Serialize};

pub use dark::DarkModel;
pub use synth::{generate, GenConfig};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::imaging;

/// Challenge attributes a sequence may carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Attribute {
    FastMotion,
    IlluminationVariation,
    LowResolution,
    Occlusion,
    ViewpointChange,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::FastMotion,
        Attribute::IlluminationVariation,
        Attribute::LowResolution,
        Attribute::Occlusion,
        Attribute::ViewpointChange,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::FastMotion => "fast-motion",
            Attribute::IlluminationVariation => "illumination-variation",
            Attribute::LowResolution => "low-resolution",
            Attribute::Occlusion => "occlusion",
            Attribute::ViewpointChange => "viewpoint-change",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| {
                Error::config(
                    "attributes",
                    format!(
                        "unknown attribute `{s}` (expected one of {})",
                        Attribute::ALL.map(Attribute::name).join(", ")
                    ),
                )
            })
    }
}

/// Ordered frames with one ground-truth box each.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<RgbImage>,
    pub boxes: Vec<BBox>,
    pub attributes: BTreeSet<Attribute>,
    pub seed: u64,
    /// Degradation applied to the frames, `None` for daytime renditions.
    pub dark_model: Option<DarkModel>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> u32 {
        self.frames.first().map_or(0, |f| f.width())
    }

    pub fn height(&self) -> u32 {
        self.frames.first().map_or(0, |f| f.height())
    }

    pub fn is_dark(&self) -> bool {
        self.dark_model.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Error::Sequence {
            name: self.name.clone(),
            msg,
        };
        if self.frames.len() != self.boxes.len() {
            return Err(err(format!(
                "{} frames but {} ground-truth boxes",
                self.frames.len(),
                self.boxes.len()
            )));
        }
        if self.frames.is_empty() {
            return Err(err("no frames".into()));
        }
        if self.attributes.is_empty() {
            return Err(err("empty attribute set".into()));
        }
        let (w, h) = (self.width(), self.height());
        if let Some(i) = self.frames.iter().position(|f| f.dimensions() != (w, h)) {
            return Err(err(format!("frame {} has a different size", i + 1)));
        }
        let (wf, hf) = (w as f64, h as f64);
        for (i, b) in self.boxes.iter().enumerate() {
            let inside = b.left() >= -1e-9 && b.top() >= -1e-9 && b.right() <= wf + 1e-9 && b.bottom() <= hf + 1e-9;
            if !b.is_valid() || !inside {
                return Err(err(format!("box {} {:?} is invalid or outside the image", i + 1, b.to_xywh())));
            }
        }
        Ok(())
    }

    /// Nighttime rendition: every frame passed through `model`, noise stream
    /// keyed by frame index.
    pub fn darkened(&self, model: &DarkModel) -> Sequence {
        let frames = self
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| imaging::tensor_to_image(&model.darken(&imaging::image_to_tensor(f), i as u64)))
            .collect();
        Sequence {
            name: self.name.clone(),
            frames,
            boxes: self.boxes.clone(),
            attributes: self.attributes.clone(),
            seed: self.seed,
            dark_model: Some(*model),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attribute_names_round_trip() {
        for a in Attribute::ALL {
            assert_eq!(a.name().parse::<Attribute>().unwrap(), a);
        }
        let err = "night-vision".parse::<Attribute>().unwrap_err();
        assert!(err.to_string().contains("night-vision"));
    }
}
