use crate::scalar::Real;

/// Scalar soft-thresholding, the proximal map of `tau * |x|`.
#[inline]
pub fn soft_threshold<T: Real>(x: T, tau: T) -> T {
    let mag = x.abs() - tau;
    if mag > T::zero() {
        mag.copysign(x)
    } else {
        T::zero()
    }
}

/// Proximal map of `tau * ||row||_2`: shrinks the whole row towards zero.
pub fn group_soft_threshold<T: Real>(row: &[T], tau: T) -> Vec<T> {
    let mut out = row.to_vec();
    group_soft_threshold_in_place(&mut out, tau);
    out
}

pub(crate) fn group_soft_threshold_in_place<T: Real>(row: &mut [T], tau: T) {
    if tau == T::zero() {
        return;
    }
    let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
    if norm <= tau {
        row.iter_mut().for_each(|v| *v = T::zero());
    } else {
        let scale = T::one() - tau / norm;
        row.iter_mut().for_each(|v| *v *= scale);
    }
}
