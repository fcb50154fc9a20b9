use serde::{Deserialize, Serialize};

/// Axis-aligned box in pixel coordinates, stored by center and size.
///
/// The pixel `(i, j)` covers `[j, j + 1) x [i, i + 1)`, so a box with top-left
/// `(x, y)` and size `(w, h)` has center `(x + w / 2, y + h / 2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    /// From the top-left `x,y,w,h` convention used by ground-truth files.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new(x + w / 2.0, y + h / 2.0, w, h)
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.left(), self.top(), self.w, self.h]
    }

    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn right(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.cx.is_finite() && self.cy.is_finite()
    }

    /// Intersects the box with `[0, width] x [0, height]`.
    ///
    /// A box falling entirely outside keeps a minimal 1 px extent on the
    /// nearest border so that it stays valid.
    pub fn clamp_to(&self, width: f64, height: f64) -> Self {
        fn span(lo: f64, hi: f64, limit: f64) -> (f64, f64) {
            let lo = lo.clamp(0.0, limit);
            let hi = hi.clamp(0.0, limit);
            if hi - lo >= 1.0 {
                (lo, hi)
            } else if lo >= limit - 1.0 {
                (limit - 1.0, limit)
            } else {
                (lo, lo + 1.0)
            }
        }
        let (l, r) = span(self.left(), self.right(), width);
        let (t, b) = span(self.top(), self.bottom(), height);
        Self::new((l + r) / 2.0, (t + b) / 2.0, r - l, b - t)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.cx + dx, self.cy + dy, self.w, self.h)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.cx * k, self.cy * k, self.w * k, self.h * k)
    }
}
