//! Sequence directories in the OTB/UAV style:
//!
//! ```text
//! seq_0000/
//!   0001.png 0002.png ...
//!   groundtruth.txt   one "x,y,w,h" line per frame, top-left convention
//!   attributes.txt    one attribute name per line
//!   meta.json         seed and darkening parameters
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Attribute, DarkModel, Sequence};
use crate::bbox::BBox;
use crate::error::{Error, Result};

pub const GROUNDTRUTH_FILE: &str = "groundtruth.txt";
pub const ATTRIBUTES_FILE: &str = "attributes.txt";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    name: String,
    seed: u64,
    frames: usize,
    width: u32,
    height: u32,
    dark_model: Option<DarkModel>,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// One `x,y,w,h` line per box.
pub fn format_boxes(boxes: &[BBox]) -> String {
    boxes
        .iter()
        .map(|b| {
            let [x, y, w, h] = b.to_xywh();
            format!("{x},{y},{w},{h}\n")
        })
        .collect()
}

/// Parses `x,y,w,h` lines; commas, tabs or spaces may separate fields.
pub fn parse_boxes(text: &str, source: &str) -> Result<Vec<BBox>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let fields: Vec<f64> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Sequence {
                    name: source.to_string(),
                    msg: format!("line {}: {e}", i + 1),
                })?;
            match fields[..] {
                [x, y, w, h] if w > 0.0 && h > 0.0 => Ok(BBox::from_xywh(x, y, w, h)),
                _ => Err(Error::Sequence {
                    name: source.to_string(),
                    msg: format!("line {}: expected positive-size x,y,w,h, got `{line}`", i + 1),
                }),
            }
        })
        .collect()
}

pub fn write_boxes(path: &Path, boxes: &[BBox]) -> Result<()> {
    write(path, format_boxes(boxes))
}

pub fn read_boxes(path: &Path) -> Result<Vec<BBox>> {
    parse_boxes(&read_to_string(path)?, &path.display().to_string())
}

pub fn write_sequence(dir: &Path, seq: &Sequence) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, frame) in seq.frames.iter().enumerate() {
        let path = dir.join(format!("{:04}.png", i + 1));
        frame.save(&path).map_err(|e| Error::Image {
            path: path.clone(),
            msg: e.to_string(),
        })?;
    }
    write_boxes(&dir.join(GROUNDTRUTH_FILE), &seq.boxes)?;
    let attrs: String = seq.attributes.iter().map(|a| format!("{a}\n")).collect();
    write(&dir.join(ATTRIBUTES_FILE), attrs)?;
    let meta = Meta {
        name: seq.name.clone(),
        seed: seq.seed,
        frames: seq.len(),
        width: seq.width(),
        height: seq.height(),
        dark_model: seq.dark_model,
    };
    write(&dir.join(META_FILE), serde_json::to_string_pretty(&meta)? + "\n")
}

/// Reads a sequence directory. `meta.json` is optional so that external
/// benchmarks with only frames, ground truth and attributes can be ingested.
pub fn read_sequence(dir: &Path) -> Result<Sequence> {
    let dir_name = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
    let mut frame_paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    frame_paths.sort();
    let frames = frame_paths
        .iter()
        .map(|p| {
            image::open(p).map(|img| img.to_rgb8()).map_err(|e| Error::Image {
                path: p.clone(),
                msg: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let boxes = read_boxes(&dir.join(GROUNDTRUTH_FILE))?;
    let attributes = read_to_string(&dir.join(ATTRIBUTES_FILE))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::parse)
        .collect::<Result<BTreeSet<Attribute>>>()?;
    let meta_path = dir.join(META_FILE);
    let meta: Option<Meta> = if meta_path.exists() {
        Some(serde_json::from_str(&read_to_string(&meta_path)?)?)
    } else {
        None
    };
    let seq = Sequence {
        name: meta.as_ref().map_or(dir_name, |m| m.name.clone()),
        frames,
        boxes,
        attributes,
        seed: meta.as_ref().map_or(0, |m| m.seed),
        dark_model: meta.and_then(|m| m.dark_model),
    };
    seq.validate()?;
    Ok(seq)
}

/// Writes each sequence to `root/<name>`.
pub fn write_dataset(root: &Path, seqs: &[Sequence]) -> Result<()> {
    seqs.iter().try_for_each(|s| write_sequence(&root.join(&s.name), s))
}

/// Reads every sequence directory under `root`, in name order.
pub fn read_dataset(root: &Path) -> Result<Vec<Sequence>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(GROUNDTRUTH_FILE).exists())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Sequence {
            name: root.display().to_string(),
            msg: "no sequence directories found".into(),
        });
    }
    dirs.iter().map(|d| read_sequence(d)).collect()
}
