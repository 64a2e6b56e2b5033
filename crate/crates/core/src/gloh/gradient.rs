use std::f64::consts::TAU;

use crate::imageio::GrayImage;
use crate::scalar::Real;

/// Per-pixel gradient magnitude and orientation of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField<T> {
    pub(crate) height: usize,
    pub(crate) width: usize,
    pub(crate) magnitude: Vec<T>,
    pub(crate) orientation: Vec<T>,
}

impl<T: Real> GradientField<T> {
    /// Builds a field directly from magnitude/orientation planes.
    ///
    /// Magnitudes must be nonnegative and orientations lie in `[0, 2π)`.
    pub fn from_parts(
        height: usize,
        width: usize,
        magnitude: Vec<T>,
        orientation: Vec<T>,
    ) -> Option<Self> {
        let n = height * width;
        let tau = T::lit(TAU);
        let ok = height > 0
            && width > 0
            && magnitude.len() == n
            && orientation.len() == n
            && magnitude.iter().all(|&m| m >= T::zero())
            && orientation.iter().all(|&o| o >= T::zero() && o < tau);
        ok.then_some(Self {
            height,
            width,
            magnitude,
            orientation,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn magnitude(&self) -> &[T] {
        &self.magnitude
    }

    pub fn orientation(&self) -> &[T] {
        &self.orientation
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> (T, T) {
        let i = row * self.width + col;
        (self.magnitude[i], self.orientation[i])
    }
}

/// Maps an angle in `(-π, π]` into `[0, 2π)`.
pub(crate) fn wrap_angle<T: Real>(a: T) -> T {
    let tau = T::lit(TAU);
    let mut a = if a < T::zero() { a + tau } else { a };
    // a tiny negative angle rounds up to exactly 2π
    if a >= tau {
        a = T::zero();
    }
    a
}

/// Central differences in the interior, one-sided differences on the border.
pub fn compute_gradients<T: Real>(img: &GrayImage) -> GradientField<T> {
    let (h, w) = (img.height(), img.width());
    let px = |r: usize, c: usize| T::lit(f64::from(img.get(r, c)));
    let half = T::lit(0.5);
    let mut magnitude = Vec::with_capacity(h * w);
    let mut orientation = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let gx = if w == 1 {
                T::zero()
            } else if c == 0 {
                px(r, 1) - px(r, 0)
            } else if c == w - 1 {
                px(r, w - 1) - px(r, w - 2)
            } else {
                (px(r, c + 1) - px(r, c - 1)) * half
            };
            let gy = if h == 1 {
                T::zero()
            } else if r == 0 {
                px(1, c) - px(0, c)
            } else if r == h - 1 {
                px(h - 1, c) - px(h - 2, c)
            } else {
                (px(r + 1, c) - px(r - 1, c)) * half
            };
            magnitude.push((gx * gx + gy * gy).sqrt());
            orientation.push(wrap_angle(gy.atan2(gx)));
        }
    }
    GradientField {
        height: h,
        width: w,
        magnitude,
        orientation,
    }
}
