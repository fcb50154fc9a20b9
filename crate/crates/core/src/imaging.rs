//! Conversions between 8-bit frames and `[3, H, W]` tensors, and window crops.

use image::{Rgb, RgbImage};

use crate::tensor::Tensor;

pub fn image_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * w * h];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(c * h + y as usize) * w + x as usize] = px[c] as f64 / 255.0;
        }
    }
    Tensor::new(&[3, h, w], data).expect("image tensor shape")
}

/// Quantizes a `[3, H, W]` tensor in `[0, 1]` to 8 bits.
pub fn tensor_to_image(t: &Tensor) -> RgbImage {
    let (h, w) = (t.shape()[1], t.shape()[2]);
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgb([
            q(t.data()[y * w + x]),
            q(t.data()[(h + y) * w + x]),
            q(t.data()[(2 * h + y) * w + x]),
        ])
    })
}

/// Integer top-left corner of a `size x size` window centered on `(cx, cy)`.
pub fn window_origin(cx: f64, cy: f64, size: usize) -> (i64, i64) {
    let half = size as f64 / 2.0;
    ((cx - half).round() as i64, (cy - half).round() as i64)
}

/// Crops a `size x size` window with top-left `origin` from a `[3, H, W]`
/// frame. Pixels outside the frame take the frame's per-channel mean.
pub fn crop(frame: &Tensor, origin: (i64, i64), size: usize) -> Tensor {
    let (h, w) = (frame.shape()[1], frame.shape()[2]);
    let fd = frame.data();
    let mut out = vec![0.0; 3 * size * size];
    for c in 0..3 {
        let plane = &fd[c * h * w..(c + 1) * h * w];
        let fill = plane.iter().sum::<f64>() / plane.len() as f64;
        for y in 0..size {
            let sy = origin.1 + y as i64;
            for x in 0..size {
                let sx = origin.0 + x as i64;
                out[(c * size + y) * size + x] = if (0..h as i64).contains(&sy) && (0..w as i64).contains(&sx) {
                    plane[sy as usize * w + sx as usize]
                } else {
                    fill
                };
            }
        }
    }
    Tensor::new(&[3, size, size], out).expect("crop shape")
}
