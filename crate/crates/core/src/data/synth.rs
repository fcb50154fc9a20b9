//! Procedural daytime sequences: a textured target patch moving over a
//! cluttered textured background, with per-attribute motion and appearance.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Attribute, Sequence};
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::imaging::tensor_to_image;
use crate::rng::{stream_rng, Domain};
use crate::tensor::Tensor;

/// Smallest frame side; the tracker's search window is 64 px.
pub const MIN_IMAGE_SIZE: usize = 64;

const FAST_SPEED: (f64, f64) = (9.0, 11.0);
const SLOW_SPEED_CAP: f64 = 3.0;
const MAX_TARGET_SIDE: f64 = 30.0;
const MIN_TARGET_SIDE: f64 = 6.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub num_sequences: usize,
    pub frames_per_sequence: usize,
    pub image_size: usize,
    /// Attributes to draw from; sequence `i` always carries `attribute_mix[i % len]`.
    pub attribute_mix: Vec<Attribute>,
    pub seed: u64,
    /// Prefix of generated sequence names.
    pub name_prefix: String,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            num_sequences: 60,
            frames_per_sequence: 40,
            image_size: 128,
            attribute_mix: Attribute::ALL.to_vec(),
            seed: 0,
            name_prefix: "seq".into(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_sequences == 0 {
            return Err(Error::config("num_sequences", "must be at least 1"));
        }
        if self.frames_per_sequence < 2 {
            return Err(Error::config(
                "frames_per_sequence",
                format!("must be at least 2, got {}", self.frames_per_sequence),
            ));
        }
        if self.image_size < MIN_IMAGE_SIZE {
            return Err(Error::config(
                "image_size",
                format!("must be at least {MIN_IMAGE_SIZE}, got {}", self.image_size),
            ));
        }
        if self.attribute_mix.is_empty() {
            return Err(Error::config("attribute_mix", "must name at least one attribute"));
        }
        Ok(())
    }
}

/// Generates daytime sequences; sequence `i` depends only on `(seed, i)`.
pub fn generate(config: &GenConfig) -> Result<Vec<Sequence>> {
    config.validate()?;
    Ok((0..config.num_sequences)
        .into_par_iter()
        .map(|i| generate_one(config, i))
        .collect())
}

/// Blocky random color pattern sampled in unit coordinates.
struct Texture {
    blocks: usize,
    colors: Vec<[f64; 3]>,
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng, blocks: usize, lo: f64, hi: f64) -> Self {
        let colors = (0..blocks * blocks)
            .map(|_| [rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi)])
            .collect();
        Self { blocks, colors }
    }

    fn sample(&self, u: f64, v: f64) -> [f64; 3] {
        let bx = ((u * self.blocks as f64) as usize).min(self.blocks - 1);
        let by = ((v * self.blocks as f64) as usize).min(self.blocks - 1);
        self.colors[by * self.blocks + bx]
    }
}

struct Canvas {
    size: usize,
    data: Vec<f64>,
}

impl Canvas {
    /// Paints `texture` over every pixel whose center lies inside `b`.
    fn paint(&mut self, b: &BBox, texture: &Texture) {
        let s = self.size;
        let x0 = b.left().floor().max(0.0) as usize;
        let y0 = b.top().floor().max(0.0) as usize;
        let x1 = (b.right().ceil() as usize).min(s);
        let y1 = (b.bottom().ceil() as usize).min(s);
        for y in y0..y1 {
            let py = y as f64 + 0.5;
            if py < b.top() || py >= b.bottom() {
                continue;
            }
            for x in x0..x1 {
                let px = x as f64 + 0.5;
                if px < b.left() || px >= b.right() {
                    continue;
                }
                let rgb = texture.sample((px - b.left()) / b.w, (py - b.top()) / b.h);
                for (c, v) in rgb.iter().enumerate() {
                    self.data[(c * s + y) * s + x] = *v;
                }
            }
        }
    }
}

fn background(rng: &mut ChaCha8Rng, size: usize) -> Vec<f64> {
    let mut data = vec![0.0; 3 * size * size];
    for c in 0..3 {
        let base = rng.random_range(0.3..0.6);
        let waves: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.02..0.12) * TAU,
                    rng.random_range(0.0..TAU),
                    rng.random_range(0.0..TAU),
                    rng.random_range(0.05..0.15),
                )
            })
            .collect();
        for y in 0..size {
            for x in 0..size {
                let v: f64 = waves
                    .iter()
                    .map(|&(f, dir, phase, amp)| amp * (f * (x as f64 * dir.cos() + y as f64 * dir.sin()) + phase).sin())
                    .sum();
                data[(c * size + y) * size + x] = (base + v).clamp(0.05, 0.95);
            }
        }
    }
    let mut canvas = Canvas { size, data };
    for _ in 0..6 {
        let w = rng.random_range(6.0..20.0);
        let h = rng.random_range(6.0..20.0);
        let b = BBox::new(rng.random_range(0.0..size as f64), rng.random_range(0.0..size as f64), w, h);
        let tex = Texture::random(rng, 2, 0.15, 0.85);
        canvas.paint(&b, &tex);
    }
    canvas.data
}

/// Moves `pos` by `vel`, reflecting off the walls of `[lo, hi]`.
fn bounce(pos: &mut f64, vel: &mut f64, lo: f64, hi: f64) {
    *pos += *vel;
    if *pos < lo {
        *pos = (2.0 * lo - *pos).min(hi);
        *vel = -*vel;
    } else if *pos > hi {
        *pos = (2.0 * hi - *pos).max(lo);
        *vel = -*vel;
    }
}

fn pick_attributes(rng: &mut ChaCha8Rng, config: &GenConfig, index: usize) -> BTreeSet<Attribute> {
    let mix = &config.attribute_mix;
    let mut set = BTreeSet::from([mix[index % mix.len()]]);
    if mix.len() > 1 && rng.random_bool(0.3) {
        set.insert(mix[rng.random_range(0..mix.len())]);
    }
    set
}

fn generate_one(config: &GenConfig, index: usize) -> Sequence {
    let mut rng = stream_rng(config.seed, Domain::Sequence, index as u64);
    let attributes = pick_attributes(&mut rng, config, index);
    let has = |a: Attribute| attributes.contains(&a);
    let size = config.image_size;
    let sf = size as f64;
    let n = config.frames_per_sequence;
    let jitter = Normal::new(0.0, 0.4).expect("valid sigma");

    let bg = background(&mut rng, size);
    let target_tex = Texture::random(&mut rng, 4, 0.25, 1.0);
    let (base_w, base_h) = if has(Attribute::LowResolution) {
        (rng.random_range(7.0..10.0), rng.random_range(7.0..10.0))
    } else {
        (rng.random_range(14.0..22.0), rng.random_range(14.0..22.0))
    };
    let aspect_drift = rng.random_range(-0.4..0.4);
    let scale_phase = rng.random_range(0.0..TAU);

    let mut pos = (rng.random_range(0.3 * sf..0.7 * sf), rng.random_range(0.3 * sf..0.7 * sf));
    let heading = rng.random_range(0.0..TAU);
    let speed = if has(Attribute::FastMotion) {
        rng.random_range(FAST_SPEED.0..FAST_SPEED.1)
    } else {
        rng.random_range(0.5..SLOW_SPEED_CAP)
    };
    let mut vel = (speed * heading.cos(), speed * heading.sin());

    let distractors: Vec<(Texture, BBox, (f64, f64))> = (0..2)
        .map(|_| {
            let tex = Texture::random(&mut rng, 3, 0.2, 0.9);
            let b = BBox::new(
                rng.random_range(0.0..sf),
                rng.random_range(0.0..sf),
                rng.random_range(10.0..18.0),
                rng.random_range(10.0..18.0),
            );
            let v = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            (tex, b, v)
        })
        .collect();
    let mut distractors = distractors;

    let occluder_tex = Texture::random(&mut rng, 2, 0.3, 0.5);
    let occlusion_mid = rng.random_range(n as f64 / 3.0..2.0 * n as f64 / 3.0);
    let occluder_speed = rng.random_range(2.0..4.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };

    let mut frames = Vec::with_capacity(n);
    let mut boxes = Vec::with_capacity(n);
    for t in 0..n {
        let phase = t as f64 / (n - 1).max(1) as f64;
        let (mut w, mut h) = (base_w, base_h);
        if has(Attribute::ViewpointChange) {
            let s = 1.0 + 0.3 * (TAU * phase + scale_phase).sin();
            let a = (aspect_drift * phase * 2.0).exp();
            w *= s * a.sqrt();
            h *= s / a.sqrt();
        }
        w = w.clamp(MIN_TARGET_SIDE, MAX_TARGET_SIDE);
        h = h.clamp(MIN_TARGET_SIDE, MAX_TARGET_SIDE);
        pos.0 = pos.0.clamp(w / 2.0, sf - w / 2.0);
        pos.1 = pos.1.clamp(h / 2.0, sf - h / 2.0);
        let target = BBox::new(pos.0, pos.1, w, h);

        let mut canvas = Canvas {
            size,
            data: bg.clone(),
        };
        for (tex, b, _) in &distractors {
            canvas.paint(b, tex);
        }
        canvas.paint(&target, &target_tex);
        if has(Attribute::Occlusion) {
            let occ = BBox::new(pos.0 + (t as f64 - occlusion_mid) * occluder_speed, pos.1, w * 1.3, h * 1.3);
            canvas.paint(&occ, &occluder_tex);
        }
        if has(Attribute::IlluminationVariation) {
            let k = 1.0 - 0.6 * (0.5 - 0.5 * (TAU * phase).cos());
            canvas.data.iter_mut().for_each(|v| *v *= k);
        }
        let frame = Tensor::new(&[3, size, size], canvas.data).expect("frame shape");
        frames.push(tensor_to_image(&frame));
        boxes.push(target);

        if has(Attribute::FastMotion) {
            let turn: f64 = jitter.sample(&mut rng) * 0.5;
            let (c, s) = (turn.cos(), turn.sin());
            vel = (vel.0 * c - vel.1 * s, vel.0 * s + vel.1 * c);
        } else {
            vel.0 += jitter.sample(&mut rng);
            vel.1 += jitter.sample(&mut rng);
            let sp = vel.0.hypot(vel.1);
            if sp > SLOW_SPEED_CAP {
                vel = (vel.0 * SLOW_SPEED_CAP / sp, vel.1 * SLOW_SPEED_CAP / sp);
            }
        }
        bounce(&mut pos.0, &mut vel.0, w / 2.0, sf - w / 2.0);
        bounce(&mut pos.1, &mut vel.1, h / 2.0, sf - h / 2.0);
        for (_, b, v) in distractors.iter_mut() {
            bounce(&mut b.cx, &mut v.0, 0.0, sf);
            bounce(&mut b.cy, &mut v.1, 0.0, sf);
        }
    }

    Sequence {
        name: format!("{}_{index:04}", config.name_prefix),
        frames,
        boxes,
        attributes,
        seed: config.seed,
        dark_model: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> GenConfig {
        GenConfig {
            num_sequences: 6,
            frames_per_sequence: 20,
            image_size: 96,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small(5)).unwrap();
        let b = generate(&small(5)).unwrap();
        let c = generate(&small(6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].frames, c[0].frames);
    }

    #[test]
    fn boxes_stay_inside_and_sequences_validate() {
        for seed in 0..4 {
            for seq in generate(&small(seed)).unwrap() {
                seq.validate().unwrap();
                assert_eq!(seq.len(), 20);
            }
        }
    }

    #[test]
    fn fast_motion_moves_at_least_eight_pixels_mostly() {
        let cfg = GenConfig {
            num_sequences: 8,
            frames_per_sequence: 40,
            attribute_mix: vec![Attribute::FastMotion],
            seed: 11,
            ..Default::default()
        };
        for seq in generate(&cfg).unwrap() {
            let moves = seq
                .boxes
                .windows(2)
                .filter(|w| (w[1].cx - w[0].cx).hypot(w[1].cy - w[0].cy) >= 8.0)
                .count();
            assert!(moves * 2 >= seq.len() - 1, "{}: {moves} of {}", seq.name, seq.len() - 1);
        }
    }

    #[test]
    fn attribute_mix_is_respected() {
        let cfg = GenConfig {
            attribute_mix: vec![Attribute::Occlusion, Attribute::LowResolution],
            ..small(2)
        };
        for (i, seq) in generate(&cfg).unwrap().iter().enumerate() {
            assert!(seq.attributes.contains(&cfg.attribute_mix[i % 2]));
            assert!(seq.attributes.iter().all(|a| cfg.attribute_mix.contains(a)));
        }
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let err = generate(&GenConfig {
            frames_per_sequence: 1,
            ..small(0)
        })
        .unwrap_err();
        assert!(err.to_string().contains("frames_per_sequence"));
        let err = generate(&GenConfig {
            image_size: 32,
            ..small(0)
        })
        .unwrap_err();
        assert!(err.to_string().contains("image_size"));
    }
}
