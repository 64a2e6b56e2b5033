use std::f64::consts::TAU;

use super::gradient::{wrap_angle, GradientField};
use super::{GlohError, GlohParams};
use crate::scalar::Real;

/// Spatial-bin lookup for every pixel of a patch, shared by all patches.
///
/// Bin 0 is the central disc, bins `1..=n_sectors` the inner ring and
/// `n_sectors+1..=2*n_sectors` the outer ring. Pixels beyond the outer
/// radius map to `None`.
#[derive(Debug, Clone)]
pub struct PatchLayout {
    patch_size: usize,
    n_orient: usize,
    spatial: Vec<Option<usize>>,
}

impl PatchLayout {
    pub fn new(params: &GlohParams) -> Self {
        let p = params.patch_size;
        let center = (p as f64 - 1.0) / 2.0;
        let sector_width = TAU / params.n_sectors as f64;
        let [r0, r1, r2] = params.radii;
        let mut spatial = Vec::with_capacity(p * p);
        for r in 0..p {
            for c in 0..p {
                let dr = r as f64 - center;
                let dc = c as f64 - center;
                let rho = (dr * dr + dc * dc).sqrt();
                let bin = if rho <= r0 {
                    Some(0)
                } else if rho <= r2 {
                    // image rows grow downwards, so flip dr for a counterclockwise angle
                    let phi = wrap_angle((-dr).atan2(dc));
                    let sector = ((phi / sector_width) as usize).min(params.n_sectors - 1);
                    let ring = if rho <= r1 { 0 } else { 1 };
                    Some(1 + ring * params.n_sectors + sector)
                } else {
                    None
                };
                spatial.push(bin);
            }
        }
        Self {
            patch_size: p,
            n_orient: params.n_orient,
            spatial,
        }
    }

    pub fn spatial_bin(&self, row: usize, col: usize) -> Option<usize> {
        self.spatial[row * self.patch_size + col]
    }

    /// Accumulates the raw (unnormalized) histogram of one patch into `out`.
    pub(crate) fn accumulate<T: Real>(
        &self,
        grad: &GradientField<T>,
        origin: (usize, usize),
        out: &mut [T],
    ) {
        let p = self.patch_size;
        let bin_scale = T::from_usize_lossy(self.n_orient) / T::lit(TAU);
        let last = self.n_orient - 1;
        for r in 0..p {
            let row = origin.0 + r;
            let base = row * grad.width + origin.1;
            for c in 0..p {
                let Some(sbin) = self.spatial[r * p + c] else {
                    continue;
                };
                let m = grad.magnitude[base + c];
                if m == T::zero() {
                    continue;
                }
                let o = grad.orientation[base + c];
                let obin = (o * bin_scale).to_usize().unwrap_or(0).min(last);
                out[sbin * self.n_orient + obin] += m;
            }
        }
    }
}

/// L2 normalization with optional clipping and re-normalization.
///
/// An all-zero input stays all-zero.
pub fn normalize_descriptor<T: Real>(
    mut hist: Vec<T>,
    clip_threshold: Option<T>,
) -> Result<Vec<T>, GlohError> {
    if let Some(i) = hist.iter().position(|&v| v < T::zero() || v.is_nan()) {
        return Err(GlohError::NegativeEntry(i));
    }
    normalize_in_place(&mut hist, clip_threshold);
    Ok(hist)
}

pub(crate) fn normalize_in_place<T: Real>(hist: &mut [T], clip_threshold: Option<T>) {
    let l2 = |h: &[T]| h.iter().map(|&v| v * v).sum::<T>().sqrt();
    let norm = l2(hist);
    if norm == T::zero() {
        return;
    }
    hist.iter_mut().for_each(|v| *v /= norm);
    if let Some(clip) = clip_threshold {
        hist.iter_mut().for_each(|v| *v = v.min(clip));
        let norm = l2(hist);
        hist.iter_mut().for_each(|v| *v /= norm);
    }
}

/// Normalized log-polar histogram of the patch whose top-left corner is `origin`.
pub fn patch_descriptor<T: Real>(
    grad: &GradientField<T>,
    origin: (usize, usize),
    params: &GlohParams,
) -> Result<Vec<T>, GlohError> {
    params.validate()?;
    let p = params.patch_size;
    if origin.0 + p > grad.height || origin.1 + p > grad.width {
        return Err(GlohError::PatchOutOfBounds {
            row: origin.0,
            col: origin.1,
            height: grad.height,
            width: grad.width,
        });
    }
    let layout = PatchLayout::new(params);
    let mut hist = vec![T::zero(); params.per_patch_dim()];
    layout.accumulate(grad, origin, &mut hist);
    normalize_in_place(&mut hist, params.clip_threshold.map(T::lit));
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field(h: usize, w: usize, mag: Vec<f64>, ori: Vec<f64>) -> GradientField<f64> {
        GradientField::from_parts(h, w, mag, ori).unwrap()
    }

    #[test]
    fn layout_bin_counts() {
        let layout = PatchLayout::new(&GlohParams::default());
        let mut counts = [0usize; 17];
        let mut dropped = 0;
        for r in 0..10 {
            for c in 0..10 {
                match layout.spatial_bin(r, c) {
                    Some(b) => counts[b] += 1,
                    None => dropped += 1,
                }
            }
        }
        // half-integer offsets from (4.5, 4.5): the disc holds the 12 pixels with rho <= 2
        assert_eq!(counts[0], 12);
        assert!(counts.iter().all(|&n| n > 0), "{counts:?}");
        assert_eq!(counts.iter().sum::<usize>() + dropped, 100);
        // 4 corners of each quadrant fall outside radius 5
        assert!(dropped > 0);
    }

    #[test]
    fn sector_orientation_is_counterclockwise() {
        let layout = PatchLayout::new(&GlohParams::default());
        // right of center, slightly above: first inner/outer sector
        assert_eq!(layout.spatial_bin(4, 7), Some(1));
        // directly above-left quadrant pixel: angle in (π/2, π)
        let b = layout.spatial_bin(2, 3).unwrap();
        assert!((1..=8).contains(&b));
        assert!(b == 3 || b == 4, "{b}");
    }

    #[test]
    fn zero_field_gives_zero_vector() {
        let g = field(10, 10, vec![0.0; 100], vec![0.0; 100]);
        let d = patch_descriptor(&g, (0, 0), &GlohParams::default()).unwrap();
        assert_eq!(d.len(), 136);
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_center_pixel_is_one_hot() {
        let mut mag = vec![0.0; 100];
        let ori = vec![0.1; 100];
        mag[4 * 10 + 4] = 1.0;
        let g = field(10, 10, mag, ori);
        let d = patch_descriptor(&g, (0, 0), &GlohParams::default()).unwrap();
        assert_eq!(d[0], 1.0);
        assert_eq!(d.iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn out_of_bounds_patch() {
        let g = field(10, 12, vec![0.0; 120], vec![0.0; 120]);
        assert!(patch_descriptor(&g, (0, 2), &GlohParams::default()).is_ok());
        assert!(matches!(
            patch_descriptor(&g, (1, 0), &GlohParams::default()),
            Err(GlohError::PatchOutOfBounds { .. })
        ));
    }

    #[test]
    fn orientation_rotation_permutes_bins() {
        let params = GlohParams {
            clip_threshold: None,
            ..GlohParams::default()
        };
        let step = TAU / 8.0;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let mag: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..3.0)).collect();
            // keep orientations away from bin edges so the shift is exact
            let ori: Vec<f64> = (0..100)
                .map(|_| (rng.random_range(0..8) as f64 + rng.random_range(0.05..0.95)) * step)
                .collect();
            let rotated: Vec<f64> = ori.iter().map(|o| (o + step).rem_euclid(TAU)).collect();
            let a = patch_descriptor(&field(10, 10, mag.clone(), ori), (0, 0), &params).unwrap();
            let b = patch_descriptor(&field(10, 10, mag, rotated), (0, 0), &params).unwrap();
            for s in 0..17 {
                for o in 0..8 {
                    let lhs = a[s * 8 + o];
                    let rhs = b[s * 8 + (o + 1) % 8];
                    assert!((lhs - rhs).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn normalize_examples() {
        let mut v = vec![0.0f64; 136];
        v[0] = 3.0;
        v[1] = 4.0;
        let n = normalize_descriptor(v, None).unwrap();
        assert!((n[0] - 0.6).abs() < 1e-15 && (n[1] - 0.8).abs() < 1e-15);

        let z = normalize_descriptor(vec![0.0f64; 136], Some(0.2)).unwrap();
        assert!(z.iter().all(|&x| x == 0.0));

        let mut e = vec![0.0; 136];
        e[0] = 1.0;
        let n = normalize_descriptor(e, Some(0.2)).unwrap();
        assert_eq!(n[0], 1.0);
        assert!(n[1..].iter().all(|&x| x == 0.0));

        assert!(matches!(
            normalize_descriptor(vec![1.0, -0.5], None),
            Err(GlohError::NegativeEntry(1))
        ));
    }

    #[test]
    fn clipping_caps_dominant_bin() {
        let n = normalize_descriptor(vec![10.0, 1.0, 1.0, 1.0], Some(0.2)).unwrap();
        let norm: f64 = n.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        // after clipping, the dominant bin no longer dwarfs the others
        assert!(n[0] / n[1] < 10.0);
    }
}
